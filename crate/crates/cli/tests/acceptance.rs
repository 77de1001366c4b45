//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use aqcp::conformal::*;
use aqcp::datagen::{draw_y, mu, COMPONENT_SIGMA};
use aqcp::oracle::{check_s1_equivalence, check_s2_gaussian_form, closed_form_mass, normal_pdf, optimal_set, true_density};
use aqcp::pqc::*;
use aqcp::qsim::*;
use aqcp_harness::commands::{efficiency_rows, load_dataset, run_cells, train_model, CellResult, Shots};
use aqcp_harness::config::{ExperimentConfig, NoisePreset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const ALPHA: f64 = 0.1;
const GAMMA: f64 = 0.03;
const BOUND_9900: f64 = 0.0031313;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
}

/// Standard error of a mean from 20 contiguous batch means.
fn batch_std_err(v: &[f64]) -> f64 {
    let size = v.len() / 20;
    let batches: Vec<f64> = v.chunks_exact(size).map(mean).collect();
    std_err(&batches)
}

/// Model for the experiment criteria: the 100-epoch recipe at lr 0.01.
fn trained_model() -> PqcModel {
    let cfg = ExperimentConfig { epochs: 100, optimizer: Optimizer::Adam, ..Default::default() };
    let split = load_dataset(&cfg).unwrap();
    let (model, report) = train_model(&cfg, &split).unwrap();
    println!(
        "model: Q=5 L=5, Adam lr 0.01, 100 epochs, risk {:.4} -> {:.4}",
        report.initial_risk,
        report.loss_history.last().unwrap()
    );
    model
}

fn drift_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig { seed, noise: NoisePreset::PinnedDrift, gammas: vec![0.0, GAMMA], ..Default::default() }
}

/// Ten pinned-drift runs, N = 9900, γ ∈ {0, 0.03}, all four scores.
fn drift_runs(model: &PqcModel) -> Vec<Vec<CellResult>> {
    (0..10)
        .map(|seed| {
            let cfg = drift_config(seed);
            let split = load_dataset(&cfg).unwrap();
            let schedule = cfg.schedule().unwrap();
            let inputs: Vec<(f64, f64)> = split.calibration.iter().chain(&split.test).copied().collect();
            let shots = Shots::prepare(&cfg, model, &schedule, &inputs, cfg.n_cal, cfg.shots).unwrap();
            run_cells(&cfg, &split, &shots, false).unwrap()
        })
        .collect()
}

fn criterion_1(model: &PqcModel, drift: &[Vec<CellResult>]) -> Verdict {
    let bound = coverage_bound(ALPHA, GAMMA, 9900).unwrap();
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for c in drift.iter().flatten().filter(|c| c.gamma == GAMMA) {
        assert_eq!(c.run.records.len(), 9900);
        worst = worst.max((c.run.average_error() - ALPHA).abs());
        runs += 1;
    }
    let start = Instant::now();
    let cfg = ExperimentConfig { gammas: vec![GAMMA], ..drift_config(0) };
    let split = load_dataset(&cfg).unwrap();
    let schedule = cfg.schedule().unwrap();
    let inputs: Vec<(f64, f64)> = split.calibration.iter().chain(&split.test).copied().collect();
    let shots = Shots::prepare(&cfg, model, &schedule, &inputs, cfg.n_cal, cfg.shots).unwrap();
    let full = run_cells(&cfg, &split, &shots, true).unwrap();
    let elapsed = start.elapsed();
    for c in &full {
        worst = worst.max((c.run.average_error() - ALPHA).abs());
        runs += 1;
    }
    let mut adversarial = AqcpState::new(ALPHA, GAMMA, &[0.0; 100]).unwrap();
    run_on_scores(&mut adversarial, &(0..9900).map(|i| 1.0 + i as f64).collect::<Vec<_>>()).unwrap();
    let adv = (adversarial.average_error() - ALPHA).abs();
    let pass = (bound - BOUND_9900).abs() < 1e-7 && worst <= bound && adv <= bound && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "bound {bound:.7}; worst |avg err - 0.1| {worst:.5} over {runs} harness runs; adversarial stream {adv:.5}; full-set run {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(model: &PqcModel) -> Verdict {
    let start = Instant::now();
    let trials = 200;
    let mut per_score: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for trial in 0..trials {
        let cfg = ExperimentConfig {
            seed: 10_000 + trial,
            n_test: 500,
            gammas: vec![0.0],
            gate_noise: aqcp::qsim::ParamFn::constant(0.01),
            readout_flip: aqcp::qsim::ParamFn::constant(0.01),
            ..Default::default()
        };
        let split = load_dataset(&cfg).unwrap();
        let schedule = cfg.schedule().unwrap();
        assert!(schedule.is_stationary());
        let inputs: Vec<(f64, f64)> = split.calibration.iter().chain(&split.test).copied().collect();
        let shots = Shots::prepare(&cfg, model, &schedule, &inputs, cfg.n_cal, cfg.shots).unwrap();
        for (k, c) in run_cells(&cfg, &split, &shots, false).unwrap().iter().enumerate() {
            let q = conformal_quantile(&c.run.calibration_scores, ALPHA).unwrap();
            let hits = c.run.records.iter().filter(|r| r.score <= q).count();
            per_score[k].push(hits as f64 / c.run.records.len() as f64);
        }
    }
    let elapsed = start.elapsed();
    let (lo, hi) = (0.9, 0.9 + 1.0 / 101.0);
    let mut pass = elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for (k, covs) in per_score.iter().enumerate() {
        let (m, se) = (mean(covs), std_err(covs));
        pass &= m >= lo - 3.0 * se && m <= hi + 3.0 * se;
        parts.push(format!("{} {m:.4}±{se:.4}", ScoreKind::ALL[k]));
    }
    verdict(pass, format!("{trials}x500, target [{lo}, {hi:.4}] ± 3SE: {}; {:.0}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn random_gate(rng: &mut ChaCha8Rng, n: usize) -> Gate {
    let angle = rng.random_range(-10.0..10.0);
    let q = rng.random_range(0..n);
    let other = (q + rng.random_range(1..n)) % n;
    match rng.random_range(0..5) {
        0 => Gate::Rx { qubit: q, angle },
        1 => Gate::Ry { qubit: q, angle },
        2 => Gate::Rz { qubit: q, angle },
        3 => Gate::Cz { a: q, b: other },
        _ => Gate::Cx { control: q, target: other },
    }
}

fn criterion_3() -> Verdict {
    let families = [ChannelFamily::Depolarising, ChannelFamily::PhaseFlip, ChannelFamily::AmplitudeDamping];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut unitary, mut channel, mut trace) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let mut rho = DensityMatrix::zero(3).unwrap();
        for _ in 0..200 {
            if rng.random_bool(0.6) {
                let g = random_gate(&mut rng, 3);
                unitary = unitary.max(unitarity_defect(&g.unitary()));
                rho = rho.apply_unitary(&g).unwrap();
            } else {
                let ch = make_channel(families[rng.random_range(0..3)], rng.random_range(0.0..=1.0)).unwrap();
                channel = channel.max(ch.completeness_defect());
                rho = rho.apply_channel(&ch, rng.random_range(0..3)).unwrap();
            }
            trace = trace.max((rho.trace().re - 1.0).abs());
        }
    }
    verdict(
        unitary <= 1e-12 && channel <= 1e-12 && trace <= 1e-9,
        format!("1000 circuits x 200 ops: unitarity {unitary:.1e}, completeness {channel:.1e}, trace drift {trace:.1e}"),
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300)
}

fn criterion_4() -> Verdict {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probs = |c: &AnsatzConfig, a: &[f64]| {
        StateVector::zero(c.num_qubits).unwrap().run(&c.circuit_from_angles(a).unwrap().gates).unwrap().probabilities()
    };
    let mut shift_worst: f64 = 0.0;
    for _ in 0..100 {
        let config = AnsatzConfig {
            num_qubits: rng.random_range(1..=3),
            num_layers: rng.random_range(1..=2),
            entangler: [Entangler::Linear, Entangler::Circular, Entangler::Full][rng.random_range(0..3)],
        };
        let angles: Vec<f64> = (0..config.num_params()).map(|_| rng.random_range(-3.2..3.2)).collect();
        let jac = parameter_shift_jacobian(config.num_qubits, &config.circuit_from_angles(&angles).unwrap()).unwrap();
        let (mut shift, mut fd) = (Vec::new(), Vec::new());
        for j in 0..angles.len() {
            let (mut up, mut down) = (angles.clone(), angles.clone());
            up[j] += H;
            down[j] -= H;
            let (pu, pd) = (probs(&config, &up), probs(&config, &down));
            for b in 0..pu.len() {
                shift.push(jac[j][b]);
                fd.push((pu[b] - pd[b]) / (2.0 * H));
            }
        }
        shift_worst = shift_worst.max(rel_err(&shift, &fd));
    }
    let mut backprop_worst: f64 = 0.0;
    for _ in 0..100 {
        let sizes = [1, rng.random_range(1..=10), rng.random_range(1..=10), rng.random_range(1..=18)];
        let enc = AngleEncoder::init(&sizes, &mut rng).unwrap();
        let x = rng.random_range(-10.0..10.0);
        let w: Vec<f64> = (0..sizes[3]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |e: &AngleEncoder| e.forward(x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let analytic = enc.backward(&enc.forward_cached(x), &w).params();
        let base = enc.params();
        let numeric: Vec<f64> = (0..base.len())
            .map(|i| {
                let mut e = enc.clone();
                let mut p = base.clone();
                p[i] += H;
                e.set_params(&p);
                let up = objective(&e);
                p[i] -= 2.0 * H;
                e.set_params(&p);
                (up - objective(&e)) / (2.0 * H)
            })
            .collect();
        backprop_worst = backprop_worst.max(rel_err(&analytic, &numeric));
    }
    verdict(
        shift_worst <= 1e-6 && backprop_worst <= 1e-6,
        format!("parameter shift vs FD {shift_worst:.1e}, encoder backprop vs FD {backprop_worst:.1e} (100 instances each)"),
    )
}

fn criterion_5() -> Verdict {
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.95);
    let expected = 4.0 * COMPONENT_SIGMA * z;
    let mut worst_len: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut separated = 0;
    for i in 0..41 {
        let x = -10.0 + 0.5 * i as f64;
        let c = optimal_set(x, ALPHA).unwrap();
        worst_mass = worst_mass.max((c.mass - 0.9).abs());
        worst_closed = worst_closed.max((closed_form_mass(x, &c.intervals) - 0.9).abs());
        if mu(x).abs() >= 0.3 {
            separated += 1;
            worst_len = worst_len.max((c.length() - expected).abs());
        }
    }
    verdict(
        (expected - 0.32897).abs() < 1e-5 && worst_len <= 1e-3 && worst_mass <= 1e-4 && worst_closed <= 1e-4,
        format!(
            "4σz = {expected:.5}; worst length error {worst_len:.1e} over {separated} separated x; mass error {worst_mass:.1e} (numeric), {worst_closed:.1e} (Φ) over 41 x"
        ),
    )
}

fn criterion_6(model: &PqcModel) -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let split = load_dataset(&cfg).unwrap();
    let rows = efficiency_rows(&cfg, model, &split).unwrap();
    let elapsed = start.elapsed();
    let bound = coverage_bound(ALPHA, cfg.efficiency_gamma, cfg.efficiency_n_test).unwrap();
    let mut monotone = true;
    let mut worst_rise = f64::NEG_INFINITY;
    for kind in [ScoreKind::Hdr, ScoreKind::Kde] {
        let series: Vec<_> = rows.iter().filter(|r| r.score == kind).collect();
        for pair in series.windows(2) {
            let tol = 3.0 * (batch_std_err(&pair[0].set_sizes).powi(2) + batch_std_err(&pair[1].set_sizes).powi(2)).sqrt();
            let rise = pair[1].avg_set_size - pair[0].avg_set_size;
            worst_rise = worst_rise.max(rise - tol);
            monotone &= rise <= tol;
        }
    }
    let at = |k: ScoreKind| rows.iter().find(|r| r.shots == 1000 && r.score == k).unwrap().avg_set_size;
    let ratio = at(ScoreKind::Euc) / at(ScoreKind::Hdr);
    let worst_cov = rows.iter().map(|r| (r.avg_coverage - 0.9).abs()).fold(0.0, f64::max);
    let sizes = |k: ScoreKind| {
        rows.iter().filter(|r| r.score == k).map(|r| format!("{:.2}", r.avg_set_size)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        monotone && ratio >= 1.3 && worst_cov <= bound && elapsed < Duration::from_secs(1800),
        format!(
            "(a) HDR [{}] KDE [{}], worst rise beyond tolerance {worst_rise:.3}; (b) Euc/HDR at M=1000 {ratio:.2}; (c) worst |cov - 0.9| {worst_cov:.4} <= {bound:.4}; oracle {:.3}; {:.0}s",
            sizes(ScoreKind::Hdr),
            sizes(ScoreKind::Kde),
            rows[0].oracle_avg_set_size,
            elapsed.as_secs_f64()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_7(drift: &[Vec<CellResult>]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in ScoreKind::ALL {
        let rms = |g: f64| {
            median(
                drift
                    .iter()
                    .flatten()
                    .filter(|c| c.kind == kind && c.gamma == g)
                    .map(|c| c.summary.rms_ma_deviation.unwrap())
                    .collect(),
            )
        };
        let (fixed, adaptive) = (rms(0.0), rms(GAMMA));
        pass &= adaptive < fixed;
        parts.push(format!("{kind} {fixed:.4} -> {adaptive:.4}"));
    }
    verdict(pass, format!("median RMS over 10 seeds, gamma 0 -> 0.03: {}", parts.join(", ")))
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: f64 = rng.random_range(-10.0..10.0);
        let y = draw_y(x, &mut rng);
        worst = worst.max(check_s2_gaussian_form(mu(x), COMPONENT_SIGMA, y).unwrap());
    }
    let grid = CandidateGrid::standard();
    let gaussian = check_s1_equivalence(|y| normal_pdf(y, 0.2, 0.3), 0.2, &grid, 1e-12);
    let mixture = check_s1_equivalence(|y| true_density(2.0, y), 0.0, &grid, 1e-12);
    verdict(
        worst <= 1e-4 && gaussian && !mixture,
        format!("S2 worst residual {worst:.1e} over 50 draws; S1 Gaussian {gaussian}, separated mixture {mixture}"),
    )
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = CandidateGrid::standard();
    let map = GridMap::standard(5);
    let mut exact = true;
    let mut zero_full = true;
    let mut cases = 0;
    for _ in 0..25 {
        let n = rng.random_range(5..200);
        let cal: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..3.0)).collect();
        let values: Vec<f64> = (0..rng.random_range(1..60)).map(|_| rng.random_range(-1.5..1.5)).collect();
        let shots = ShotMultiset::from_values(0.0, &values, &map);
        let alpha = rng.random_range(0.01..0.6);
        for kind in ScoreKind::ALL {
            let spec = ScoreSpec::new(kind);
            let tb = TieBreak::new(rng.random(), spec.tiebreak_sigma);
            let (lambda, set) = weighted_prediction_set(&cal, &WeightVector::uniform(n), 0.0, &shots, &spec, alpha, grid, &tb).unwrap();
            let split = conformal_quantile(&cal, alpha).unwrap();
            exact &= lambda.to_bits() == split.to_bits()
                && set == generate_prediction_set(0.0, split, &shots, &spec, grid, &tb).unwrap();
            let zero = WeightVector::new(vec![0.0; n]).unwrap();
            let (_, set) = weighted_prediction_set(&cal, &zero, 0.0, &shots, &spec, alpha, grid, &tb).unwrap();
            zero_full &= set == PredictionSet::full(grid);
            cases += 1;
        }
    }
    verdict(exact && zero_full, format!("{cases} cases: equal weights reproduce split thresholds and sets {exact}; zero weights give full grid {zero_full}"))
}

fn run(name: &str, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    eprintln!("  {name} done in {:.1}s", start.elapsed().as_secs_f64());
    v
}

fn main() {
    let start = Instant::now();
    let model = trained_model();
    let drift = catch_unwind(AssertUnwindSafe(|| drift_runs(&model))).ok();
    let titles = [
        "deterministic AQCP bound",
        "exchangeable coverage",
        "CPTP and unitarity",
        "gradients",
        "oracle length and mass",
        "efficiency shape",
        "drift stabilisation",
        "score/density checks",
        "weighted CP reductions",
    ];
    let missing = || verdict(false, "drift runs failed".into());
    let verdicts = [
        run(titles[0], || drift.as_ref().map_or_else(missing, |d| criterion_1(&model, d))),
        run(titles[1], || criterion_2(&model)),
        run(titles[2], criterion_3),
        run(titles[3], criterion_4),
        run(titles[4], criterion_5),
        run(titles[5], || criterion_6(&model)),
        run(titles[6], || drift.as_ref().map_or_else(missing, |d| criterion_7(d))),
        run(titles[7], criterion_8),
        run(titles[8], criterion_9),
    ];
    println!();
    for (i, (v, title)) in verdicts.iter().zip(titles).enumerate() {
        println!("criterion {} {} {title}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("\nacceptance: {} of 9 passed in {:.0}s", 9 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
