//! Analytic ground truth for the synthetic bimodal task: the exact
//! conditional density, its highest-density sets, and reference checks for
//! the score/density relationships.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::{CandidateGrid, PredictionSet};
use crate::datagen::{mu, COMPONENT_SIGMA};
use crate::error::{invalid, Error, Result};

/// Integration range for the task density.
pub const Y_LO: f64 = -2.0;
pub const Y_HI: f64 = 2.0;
pub const INTEGRATION_POINTS: usize = 4096;
pub const MASS_TOL: f64 = 1e-10;
pub const MAX_BISECTIONS: usize = 200;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    INV_SQRT_2PI * (-0.5 * z * z).exp() / sigma
}

/// `p(y | x) = ½ N(y; −μ(x), σ²) + ½ N(y; μ(x), σ²)`.
pub fn true_density(x: f64, y: f64) -> f64 {
    let m = mu(x);
    0.5 * (normal_pdf(y, m, COMPONENT_SIGMA) + normal_pdf(y, -m, COMPONENT_SIGMA))
}

/// Trapezoid rule with `points` nodes.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, points: usize) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let n = points.max(2) - 1;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

fn bisect_root<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64) -> f64 {
    let ga = g(a) > 0.0;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if (g(m) > 0.0) == ga {
            a = m;
        } else {
            b = m;
        }
        if b - a <= f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Local maxima of `density` on the scan grid, refined by golden-section
/// search within the neighbouring cells.
fn refined_modes<F: Fn(f64) -> f64>(density: &F, nodes: &[f64]) -> Vec<f64> {
    let vals: Vec<f64> = nodes.iter().map(|&y| density(y)).collect();
    let mut modes = Vec::new();
    for i in 1..nodes.len() - 1 {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] && vals[i] > 0.0 {
            let (mut a, mut b) = (nodes[i - 1], nodes[i + 1]);
            const R: f64 = 0.618_033_988_749_894_9;
            for _ in 0..80 {
                let c = b - R * (b - a);
                let d = a + R * (b - a);
                if density(c) >= density(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            modes.push(0.5 * (a + b));
        }
    }
    modes
}

/// Uniform scan grid plus refined local maxima, with the density at each
/// node.
fn scan_nodes<F: Fn(f64) -> f64>(density: &F, lo: f64, hi: f64, scan_points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = scan_points.max(3) - 1;
    let h = (hi - lo) / n as f64;
    let mut nodes: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * h }).collect();
    let modes = refined_modes(density, &nodes);
    nodes.extend(modes);
    nodes.sort_by(f64::total_cmp);
    let vals = nodes.iter().map(|&y| density(y)).collect();
    (nodes, vals)
}

/// Intervals of `{ y ∈ [lo, hi] : density(y) > t }`. The scan uses a uniform
/// grid plus the refined local maxima so narrow peaks are not skipped;
/// endpoints are refined by bisection where the sign of `density − t` flips.
pub fn superlevel_intervals<F: Fn(f64) -> f64>(density: F, t: f64, lo: f64, hi: f64, scan_points: usize) -> Vec<(f64, f64)> {
    let (nodes, vals) = scan_nodes(&density, lo, hi, scan_points);
    superlevel_on_nodes(&density, t, &nodes, &vals)
}

fn superlevel_on_nodes<F: Fn(f64) -> f64>(density: &F, t: f64, nodes: &[f64], vals: &[f64]) -> Vec<(f64, f64)> {
    let g = |y: f64| density(y) - t;
    let mut out = Vec::new();
    let mut start = if vals[0] - t > 0.0 { Some(nodes[0]) } else { None };
    let mut prev_in = start.is_some();
    for i in 1..nodes.len() {
        let inside = vals[i] - t > 0.0;
        if inside != prev_in {
            let root = bisect_root(g, nodes[i - 1], nodes[i]);
            if inside {
                start = Some(root);
            } else if let Some(s) = start.take() {
                out.push((s, root));
            }
        }
        prev_in = inside;
    }
    if let Some(s) = start {
        out.push((s, nodes[nodes.len() - 1]));
    }
    out
}

/// Mass of `density` over the union of `intervals`.
pub fn interval_mass<F: Fn(f64) -> f64>(density: F, intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|&(a, b)| trapezoid(&density, a, b, INTEGRATION_POINTS)).sum()
}

/// Highest-density region of the task density at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSet {
    pub x: f64,
    pub alpha: f64,
    /// Density level `t` with `C* = { y : p(y|x) ≥ t }`.
    pub threshold: f64,
    pub intervals: Vec<(f64, f64)>,
    pub mass: f64,
}

impl OptimalSet {
    /// Total Lebesgue length.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// Grid points with `p(y|x) ≥ t`.
    pub fn to_prediction_set(&self, grid: CandidateGrid) -> PredictionSet {
        PredictionSet { grid, mask: grid.values().iter().map(|&y| true_density(self.x, y) >= self.threshold).collect() }
    }

    /// Size in the same count·Δ measure as conformal sets.
    pub fn grid_size(&self, grid: CandidateGrid) -> f64 {
        self.to_prediction_set(grid).size()
    }
}

/// Smallest set with conditional mass `1 − α`, by bisection on the density
/// level.
pub fn optimal_set(x: f64, alpha: f64) -> Result<OptimalSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let density = |y: f64| true_density(x, y);
    let target = 1.0 - alpha;
    let (nodes, vals) = scan_nodes(&density, Y_LO, Y_HI, INTEGRATION_POINTS);
    let peak = vals.iter().copied().fold(0.0, f64::max).max(density(mu(x)));
    let (mut lo, mut hi) = (0.0, peak);
    for _ in 0..MAX_BISECTIONS {
        let t = 0.5 * (lo + hi);
        let intervals = superlevel_on_nodes(&density, t, &nodes, &vals);
        let mass = interval_mass(density, &intervals);
        if (mass - target).abs() <= MASS_TOL {
            return Ok(OptimalSet { x, alpha, threshold: t, intervals, mass });
        }
        if mass > target {
            lo = t;
        } else {
            hi = t;
        }
    }
    Err(Error::Numeric(format!("density-level bisection did not converge at x={x}, alpha={alpha}")))
}

/// `Φ`-based mass of the task density on `intervals`; an independent check
/// of the numeric integrator.
pub fn closed_form_mass(x: f64, intervals: &[(f64, f64)]) -> f64 {
    let m = mu(x);
    let pos = Normal::new(m, COMPONENT_SIGMA).expect("valid normal");
    let neg = Normal::new(-m, COMPONENT_SIGMA).expect("valid normal");
    intervals
        .iter()
        .map(|&(a, b)| 0.5 * (pos.cdf(b) - pos.cdf(a) + neg.cdf(b) - neg.cdf(a)))
        .sum()
}

/// Whether ordering the grid by `|y − center|` agrees with ordering it by
/// `−density(y)` for every pair of points. Differences within `tol`
/// (relative to the largest value) count as ties and never disagree.
pub fn check_s1_equivalence<F: Fn(f64) -> f64>(density: F, center: f64, grid: &CandidateGrid, tol: f64) -> bool {
    let ys = grid.values();
    let dist: Vec<f64> = ys.iter().map(|y| (y - center).abs()).collect();
    let dens: Vec<f64> = ys.iter().map(|&y| density(y)).collect();
    let dscale = dist.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let pscale = dens.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let sign = |v: f64, scale: f64| if v.abs() <= tol * scale { 0 } else if v > 0.0 { 1 } else { -1 };
    for i in 0..ys.len() {
        for j in (i + 1)..ys.len() {
            let by_dist = sign(dist[i] - dist[j], dscale);
            let by_dens = sign(dens[j] - dens[i], pscale);
            if by_dist * by_dens < 0 {
                return false;
            }
        }
    }
    true
}

/// Superlevel mass `∫_{p(y′) > p(y)} p(y′) dy′` for `N(μ, σ²)`, integrated
/// numerically over `μ ± 12σ`.
pub fn gaussian_hdr_mass(mu: f64, sigma: f64, y: f64) -> f64 {
    let density = |v: f64| normal_pdf(v, mu, sigma);
    let t = density(y);
    let intervals = superlevel_intervals(density, t, mu - 12.0 * sigma, mu + 12.0 * sigma, INTEGRATION_POINTS);
    interval_mass(density, &intervals)
}

/// `|2Φ(|y − μ|/σ) − 1 − hdr_mass(y)|`.
pub fn check_s2_gaussian_form(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma {sigma} must be positive")));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let closed = 2.0 * std_normal.cdf((y - mu).abs() / sigma) - 1.0;
    Ok((closed - gaussian_hdr_mass(mu, sigma, y)).abs())
}

/// `k / (2 M d_k)` where `d_k` is the distance from `y` to its k-th nearest
/// sample; `+∞` when `d_k = 0`.
pub fn brute_force_knn_density(samples: &[f64], y: f64, k: usize) -> Result<f64> {
    if k == 0 || k > samples.len() {
        return Err(invalid(format!("k={k} must lie in 1..={}", samples.len())));
    }
    let mut d: Vec<f64> = samples.iter().map(|s| (y - s).abs()).collect();
    d.sort_by(f64::total_cmp);
    let dk = d[k - 1];
    if dk == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(k as f64 / (2.0 * samples.len() as f64 * dk))
}

/// Average `C*` length over the given inputs.
pub fn average_optimal_length(xs: &[f64], alpha: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(invalid("no inputs"));
    }
    let mut total = 0.0;
    for &x in xs {
        total += optimal_set(x, alpha)?.length();
    }
    Ok(total / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_at_zero() {
        assert!((true_density(0.0, 0.0) - 7.978845608).abs() < 1e-8);
        for x in [-7.3, -1.0, 2.2, 9.9] {
            for y in [-1.1, -0.3, 0.0, 0.42] {
                assert_eq!(true_density(x, y), true_density(x, -y));
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for i in 0..41 {
            let x = -10.0 + 0.5 * i as f64;
            let m = trapezoid(|y| true_density(x, y), Y_LO, Y_HI, 20_001);
            assert!((m - 1.0).abs() < 1e-6, "x={x} mass={m}");
        }
    }

    #[test]
    fn trapezoid_exact_on_linear() {
        assert!((trapezoid(|y| 3.0 * y + 1.0, 0.0, 2.0, 5) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn separated_modes_length() {
        // μ(10) ≈ 0.995 is far from zero in units of σ
        let c = optimal_set(10.0, 0.1).unwrap();
        assert_eq!(c.intervals.len(), 2);
        assert!((c.length() - 0.32897).abs() < 1e-3, "{}", c.length());
        assert!((c.mass - 0.9).abs() < 1e-4);
        assert!((closed_form_mass(10.0, &c.intervals) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn coincident_modes_length() {
        let c = optimal_set(0.0, 0.1).unwrap();
        assert_eq!(c.intervals.len(), 1);
        assert!((c.length() - 0.16449).abs() < 1e-4, "{}", c.length());
    }

    #[test]
    fn nearly_all_miscoverage_is_nearly_empty() {
        let c = optimal_set(3.0, 1.0 - 1e-6).unwrap();
        assert!(c.length() < 1e-3);
        assert!(optimal_set(3.0, 1.0).is_err());
        assert!(optimal_set(3.0, 0.0).is_err());
    }

    #[test]
    fn s1_gaussian_and_mixture() {
        let g = CandidateGrid::standard();
        assert!(check_s1_equivalence(|y| normal_pdf(y, 0.2, 0.3), 0.2, &g, 1e-12));
        assert!(!check_s1_equivalence(|y| true_density(10.0, y), 0.0, &g, 1e-12));
        assert!(check_s1_equivalence(|_| 1.0, 0.0, &g, 1e-12));
    }

    #[test]
    fn s2_residuals() {
        assert!(check_s2_gaussian_form(0.3, 0.1, 0.3).unwrap() < 1e-9);
        assert!(check_s2_gaussian_form(0.0, 1.0, 1.6449).unwrap() < 1e-4);
        let far = gaussian_hdr_mass(0.0, 1.0, 30.0);
        assert!((far - 1.0).abs() < 1e-9);
        assert!(check_s2_gaussian_form(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn knn_density_cases() {
        let grid: Vec<f64> = (0..1001).map(|i| i as f64 / 1000.0).collect();
        let d = brute_force_knn_density(&grid, 0.5, 31).unwrap();
        assert!((d - 1.0).abs() < 0.05, "{d}");
        let far = brute_force_knn_density(&[0.0, 0.1, 0.2], 1e6, 3).unwrap();
        assert!(far < 1e-5);
        assert_eq!(brute_force_knn_density(&[0.4, 0.4, 1.0], 0.4, 2).unwrap(), f64::INFINITY);
        assert!(brute_force_knn_density(&[0.4], 0.4, 2).is_err());
    }
}
