//! Time-dependent noise: maps a shot timestamp to channel strengths.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::channel::ChannelFamily;
use crate::error::{invalid, Error, Result};

/// Parameter as a function of time (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamFn {
    Constant { p: f64 },
    /// Linear ramp from `p0` at t=0 to `p1` at `t_end`, flat afterwards.
    LinearDrift { p0: f64, p1: f64, t_end: f64 },
    /// `p_mean + p_amp · sin(2πt / period)`.
    Sinusoid { p_mean: f64, p_amp: f64, period: f64 },
    /// `p_burst` on every window `[τ, τ + burst_width)`, `p_base` elsewhere.
    Burst { p_base: f64, p_burst: f64, burst_times: Vec<f64>, burst_width: f64 },
    /// Pointwise sum of the terms.
    Sum { terms: Vec<ParamFn> },
}

impl ParamFn {
    pub fn constant(p: f64) -> Self {
        ParamFn::Constant { p }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            ParamFn::Constant { p } => *p,
            ParamFn::LinearDrift { p0, p1, t_end } => {
                let frac = if *t_end <= 0.0 { 1.0 } else { (t / t_end).clamp(0.0, 1.0) };
                p0 + (p1 - p0) * frac
            }
            ParamFn::Sinusoid { p_mean, p_amp, period } => {
                p_mean + p_amp * (std::f64::consts::TAU * t / period).sin()
            }
            ParamFn::Burst { p_base, p_burst, burst_times, burst_width } => {
                if burst_times.iter().any(|&tau| t >= tau && t < tau + burst_width) {
                    *p_burst
                } else {
                    *p_base
                }
            }
            ParamFn::Sum { terms } => terms.iter().map(|f| f.at(t)).sum(),
        }
    }

    /// Range of values the function can emit.
    pub fn range(&self) -> (f64, f64) {
        match self {
            ParamFn::Constant { p } => (*p, *p),
            ParamFn::LinearDrift { p0, p1, .. } => (p0.min(*p1), p0.max(*p1)),
            ParamFn::Sinusoid { p_mean, p_amp, .. } => (p_mean - p_amp.abs(), p_mean + p_amp.abs()),
            ParamFn::Burst { p_base, p_burst, .. } => (p_base.min(*p_burst), p_base.max(*p_burst)),
            ParamFn::Sum { terms } => terms.iter().map(ParamFn::range).fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1)),
        }
    }

    /// Every emitted value must lie in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range();
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > 1.0 {
            return Err(invalid(format!("{self} can emit values outside [0, 1]")));
        }
        match self {
            ParamFn::Sinusoid { period, .. } if !(*period > 0.0) => {
                Err(invalid("sinusoid period must be positive"))
            }
            ParamFn::Burst { burst_width, burst_times, .. }
                if !(*burst_width >= 0.0) || burst_times.iter().any(|t| !t.is_finite()) =>
            {
                Err(invalid("burst width must be non-negative and burst times finite"))
            }
            ParamFn::LinearDrift { t_end, .. } if !t_end.is_finite() => Err(invalid("t_end must be finite")),
            ParamFn::Sum { terms } => {
                if terms.is_empty() {
                    return Err(invalid("sum needs at least one term"));
                }
                terms.iter().try_for_each(ParamFn::validate)
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ParamFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamFn::Constant { p } => write!(f, "constant({p})"),
            ParamFn::LinearDrift { p0, p1, t_end } => write!(f, "linear_drift({p0},{p1},{t_end})"),
            ParamFn::Sinusoid { p_mean, p_amp, period } => write!(f, "sinusoid({p_mean},{p_amp},{period})"),
            ParamFn::Burst { p_base, p_burst, burst_times, burst_width } => {
                let times: Vec<String> = burst_times.iter().map(|t| t.to_string()).collect();
                write!(f, "burst({p_base},{p_burst},[{}],{burst_width})", times.join(";"))
            }
            ParamFn::Sum { terms } => {
                let parts: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                write!(f, "sum({})", parts.join("+"))
            }
        }
    }
}

impl FromStr for ParamFn {
    type Err = Error;

    /// Parses the `Display` form, e.g. `burst(0.01,0.3,[100;250],5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| invalid(format!("expected name(args) in '{s}'")))?;
        if !s.ends_with(')') {
            return Err(invalid(format!("missing ')' in '{s}'")));
        }
        let name = s[..open].trim();
        let body = &s[open + 1..s.len() - 1];
        if name == "sum" {
            let terms = split_top_level(body, '+').into_iter().map(str::parse).collect::<Result<Vec<ParamFn>>>()?;
            let f = ParamFn::Sum { terms };
            f.validate()?;
            return Ok(f);
        }
        let mut times = Vec::new();
        let mut scalars = Vec::new();
        let mut rest = body;
        if let (Some(l), Some(r)) = (body.find('['), body.find(']')) {
            for t in body[l + 1..r].split(';').filter(|t| !t.trim().is_empty()) {
                times.push(parse_num(t)?);
            }
            scalars.extend(body[..l].split(',').filter(|v| !v.trim().is_empty()).map(parse_num));
            rest = &body[r + 1..];
        }
        scalars.extend(rest.split(',').filter(|v| !v.trim().is_empty()).map(parse_num));
        let v: Vec<f64> = scalars.into_iter().collect::<Result<_>>()?;
        let want = |n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(invalid(format!("{name} takes {n} numeric arguments, got {}", v.len())))
            }
        };
        let f = match name {
            "constant" => {
                want(1)?;
                ParamFn::Constant { p: v[0] }
            }
            "linear_drift" => {
                want(3)?;
                ParamFn::LinearDrift { p0: v[0], p1: v[1], t_end: v[2] }
            }
            "sinusoid" => {
                want(3)?;
                ParamFn::Sinusoid { p_mean: v[0], p_amp: v[1], period: v[2] }
            }
            "burst" => {
                want(3)?;
                ParamFn::Burst { p_base: v[0], p_burst: v[1], burst_times: times, burst_width: v[2] }
            }
            other => return Err(invalid(format!("unknown schedule function '{other}'"))),
        };
        f.validate()?;
        Ok(f)
    }
}

/// Splits on `sep` outside parentheses and brackets.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| invalid(format!("not a number: '{}'", s.trim())))
}

/// Channel strengths in force at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub gate: f64,
    pub readout_flip: f64,
}

/// Source of non-stationarity: gate-noise and readout-noise strengths as
/// functions of the shot timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub family: ChannelFamily,
    pub gate_noise: ParamFn,
    pub applies_after_each_gate: bool,
    pub readout_flip: ParamFn,
    /// When positive, timestamps are floored to multiples of this many
    /// seconds before evaluation.
    #[serde(default)]
    pub time_resolution: f64,
}

impl NoiseSchedule {
    pub fn new(family: ChannelFamily, gate_noise: ParamFn, readout_flip: ParamFn) -> Result<Self> {
        let s = Self { family, gate_noise, applies_after_each_gate: true, readout_flip, time_resolution: 0.0 };
        s.validate()?;
        Ok(s)
    }

    /// No gate noise and perfect readout.
    pub fn noiseless() -> Self {
        Self {
            family: ChannelFamily::Depolarising,
            gate_noise: ParamFn::constant(0.0),
            applies_after_each_gate: true,
            readout_flip: ParamFn::constant(0.0),
            time_resolution: 0.0,
        }
    }

    pub fn with_time_resolution(mut self, seconds: f64) -> Self {
        self.time_resolution = seconds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gate_noise.validate()?;
        self.readout_flip.validate()?;
        if !(self.time_resolution >= 0.0) || !self.time_resolution.is_finite() {
            return Err(invalid("time resolution must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn params_at(&self, t: f64) -> NoiseParams {
        let t = if self.time_resolution > 0.0 {
            (t / self.time_resolution).floor() * self.time_resolution
        } else {
            t
        };
        let gate = if self.applies_after_each_gate { self.gate_noise.at(t) } else { 0.0 };
        NoiseParams { gate, readout_flip: self.readout_flip.at(t) }
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.gate_noise, ParamFn::Constant { .. }) && matches!(self.readout_flip, ParamFn::Constant { .. })
    }
}

impl fmt::Display for NoiseSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.gate_noise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn burst_window_lookup() {
        let f = ParamFn::Burst { p_base: 0.01, p_burst: 0.4, burst_times: vec![10.0, 50.0], burst_width: 2.0 };
        assert_eq!(f.at(9.999), 0.01);
        assert_eq!(f.at(10.0), 0.4);
        assert_eq!(f.at(11.5), 0.4);
        assert_eq!(f.at(12.0), 0.01);
        assert_eq!(f.at(51.0), 0.4);
    }

    #[test]
    fn linear_drift_clamps_after_end() {
        let f = ParamFn::LinearDrift { p0: 0.01, p1: 0.15, t_end: 100.0 };
        assert!((f.at(50.0) - 0.08).abs() < 1e-15);
        assert_eq!(f.at(1e6), 0.15);
        assert_eq!(f.at(-5.0), 0.01);
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "constant(0.02)",
            "linear_drift(0.01,0.15,9900)",
            "sinusoid(0.05,0.02,60)",
            "burst(0.01,0.3,[100;250.5],5)",
            "sum(linear_drift(0.01,0.15,9900)+burst(0,0.1,[3000;7000],300))",
        ] {
            let f: ParamFn = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("constant(1.5)".parse::<ParamFn>().is_err());
        assert!("sinusoid(0.05,0.1,60)".parse::<ParamFn>().is_err());
        assert!("wobble(0.1)".parse::<ParamFn>().is_err());
        assert!("sum(constant(0.6)+constant(0.6))".parse::<ParamFn>().is_err());
        let f: ParamFn = "sum(linear_drift(0.0,0.1,10)+burst(0,0.2,[4],1))".parse().unwrap();
        assert!((f.at(4.5) - 0.245).abs() < 1e-15);
    }

    #[test]
    fn resolution_floors_time() {
        let s = NoiseSchedule::new(
            ChannelFamily::Depolarising,
            ParamFn::LinearDrift { p0: 0.0, p1: 1.0, t_end: 10.0 },
            ParamFn::constant(0.0),
        )
        .unwrap()
        .with_time_resolution(1.0);
        assert_eq!(s.params_at(3.7).gate, 0.3);
    }

    fn any_valid_fn() -> impl Strategy<Value = ParamFn> {
        prop_oneof![
            (0.0..=1.0f64).prop_map(ParamFn::constant),
            (0.0..=1.0f64, 0.0..=1.0f64, 1.0..1e4f64).prop_map(|(p0, p1, t_end)| ParamFn::LinearDrift { p0, p1, t_end }),
            (0.0..=1.0f64, 0.0..=1.0f64, 0.1..1e3f64).prop_map(|(m, a, period)| {
                let amp = a * m.min(1.0 - m);
                ParamFn::Sinusoid { p_mean: m, p_amp: amp, period }
            }),
            (0.0..=1.0f64, 0.0..=1.0f64, proptest::collection::vec(0.0..1e3f64, 0..4), 0.0..20.0f64)
                .prop_map(|(b, p, times, w)| ParamFn::Burst { p_base: b, p_burst: p, burst_times: times, burst_width: w }),
        ]
    }

    proptest! {
        #[test]
        fn valid_schedules_emit_probabilities(f in any_valid_fn(), t in -1e4..1e5f64) {
            prop_assert!(f.validate().is_ok());
            let v = f.at(t);
            prop_assert!((0.0..=1.0).contains(&v), "{} at {} gave {}", f, t, v);
        }
    }
}
