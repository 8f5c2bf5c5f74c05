//! Synthetic drive cycles with power from the vehicle model.
//!
//! A cycle is a list of phases played back to back and repeated until the
//! requested duration is filled. Speed changes follow a smoothstep
//! `v0 + (v1 - v0) (3u² - 2u³)`, so speed and acceleration are continuous
//! across phase boundaries; a ramp's `rate_mps2` is its peak |dv/dt|.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, DriveLog};
use crate::dynamics::{battery_power, FixedParams, PhysParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    /// Speed up to `to_mps`, given either a peak rate or a duration.
    Accelerate {
        to_mps: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate_mps2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_s: Option<f64>,
    },
    Cruise {
        duration_s: f64,
    },
    /// Slow down to `to_mps`; the rate may be given with either sign.
    Brake {
        to_mps: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate_mps2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_s: Option<f64>,
    },
    /// Standstill; only valid at zero speed.
    Idle {
        duration_s: f64,
    },
}

fn default_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSpec {
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    pub phases: Vec<Phase>,
    /// Noise standard deviation as a fraction of the noise-free power range.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CycleSpec {
    /// Fifteen minutes at 1 Hz of mixed urban and highway driving with moderate
    /// ramps (peak rates 0.5 to 0.9 m/s^2).
    fn default() -> Self {
        use Phase::*;
        let acc = |to, rate| Accelerate {
            to_mps: to,
            rate_mps2: Some(rate),
            duration_s: None,
        };
        let brk = |to, rate| Brake {
            to_mps: to,
            rate_mps2: Some(rate),
            duration_s: None,
        };
        let cruise = |d| Cruise { duration_s: d };
        let idle = |d| Idle { duration_s: d };
        Self {
            duration_s: 900.0,
            sample_rate_hz: 1.0,
            phases: vec![
                idle(20.0),
                acc(14.0, 0.8),
                cruise(60.0),
                acc(22.0, 0.6),
                cruise(80.0),
                brk(12.0, 0.6),
                cruise(50.0),
                brk(0.0, 0.8),
                idle(25.0),
                acc(25.0, 0.8),
                cruise(120.0),
                acc(30.0, 0.5),
                cruise(90.0),
                brk(18.0, 0.6),
                cruise(60.0),
                brk(0.0, 0.9),
                idle(20.0),
                acc(12.0, 0.9),
                cruise(40.0),
                brk(0.0, 0.8),
                idle(77.0),
            ],
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// One phase resolved to absolute speeds and a duration.
#[derive(Debug, Clone, Copy)]
struct Segment {
    duration: f64,
    v0: f64,
    v1: f64,
}

impl Segment {
    fn eval(&self, tau: f64) -> (f64, f64) {
        if self.v0 == self.v1 {
            return (self.v0, 0.0);
        }
        let u = (tau / self.duration).clamp(0.0, 1.0);
        let dv = self.v1 - self.v0;
        let v = self.v0 + dv * u * u * (3.0 - 2.0 * u);
        let a = dv * 6.0 * u * (1.0 - u) / self.duration;
        (v.max(0.0), a)
    }
}

fn invalid(msg: impl Into<String>) -> DataError {
    DataError::InvalidCycle(msg.into())
}

fn ramp_duration(dv: f64, rate: Option<f64>, duration: Option<f64>) -> Result<f64, DataError> {
    match (rate, duration) {
        (Some(r), None) if r.abs() > 0.0 && r.is_finite() => Ok(1.5 * dv.abs() / r.abs()),
        (None, Some(d)) if d > 0.0 && d.is_finite() => Ok(d),
        (Some(_), Some(_)) => Err(invalid("give either rate_mps2 or duration_s, not both")),
        _ => Err(invalid("ramp needs a positive rate_mps2 or duration_s")),
    }
}

impl CycleSpec {
    fn segments(&self, fixed: &FixedParams) -> Result<Vec<Segment>, DataError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration must be positive"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(invalid("sample rate must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if self.phases.is_empty() {
            return Err(invalid("no phases"));
        }
        let mut v = 0.0;
        let mut out = Vec::with_capacity(self.phases.len());
        let (mut idle, mut moves, mut regen_brake) = (false, false, false);
        for (i, phase) in self.phases.iter().enumerate() {
            let seg = match *phase {
                Phase::Accelerate {
                    to_mps,
                    rate_mps2,
                    duration_s,
                } => {
                    if !(to_mps > v) {
                        return Err(invalid(format!(
                            "phase {i}: accelerate target {to_mps} not above current speed {v}"
                        )));
                    }
                    moves = true;
                    Segment {
                        duration: ramp_duration(to_mps - v, rate_mps2, duration_s)?,
                        v0: v,
                        v1: to_mps,
                    }
                }
                Phase::Brake {
                    to_mps,
                    rate_mps2,
                    duration_s,
                } => {
                    if !(to_mps >= 0.0 && to_mps < v) {
                        return Err(invalid(format!(
                            "phase {i}: brake target {to_mps} must be in [0, {v})"
                        )));
                    }
                    let duration = ramp_duration(to_mps - v, rate_mps2, duration_s)?;
                    if 1.5 * (v - to_mps) / duration > -fixed.beta {
                        regen_brake = true;
                    }
                    Segment {
                        duration,
                        v0: v,
                        v1: to_mps,
                    }
                }
                Phase::Cruise { duration_s } | Phase::Idle { duration_s } => {
                    if !(duration_s > 0.0 && duration_s.is_finite()) {
                        return Err(invalid(format!("phase {i}: duration must be positive")));
                    }
                    if matches!(phase, Phase::Idle { .. }) {
                        if v != 0.0 {
                            return Err(invalid(format!("phase {i}: idle at nonzero speed {v}")));
                        }
                        idle = true;
                    }
                    Segment {
                        duration: duration_s,
                        v0: v,
                        v1: v,
                    }
                }
            };
            v = seg.v1;
            out.push(seg);
        }
        if !idle {
            return Err(invalid("cycle needs at least one idle phase"));
        }
        if moves && !regen_brake {
            return Err(invalid(
                "a moving cycle needs a brake phase decelerating past the regeneration threshold",
            ));
        }
        let period: f64 = out.iter().map(|s| s.duration).sum();
        if period < self.duration_s && v != 0.0 {
            return Err(invalid("phases repeat but do not end at standstill"));
        }
        Ok(out)
    }

    /// Number of samples generated.
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz + 1e-9).floor() as usize
    }
}

/// Speed and acceleration at time `t` of a periodic segment list.
fn profile_at(segments: &[Segment], period: f64, t: f64) -> (f64, f64) {
    let mut tau = t % period;
    for s in segments {
        if tau < s.duration {
            return s.eval(tau);
        }
        tau -= s.duration;
    }
    segments.last().unwrap().eval(segments.last().unwrap().duration)
}

/// Generates a log whose power follows the vehicle model at `phys`, with
/// Gaussian noise of `noise_sigma * (max P - min P)`. Acceleration is the
/// analytic derivative of the speed profile.
pub fn synth_cycle(
    spec: &CycleSpec,
    fixed: &FixedParams,
    phys: &PhysParams,
) -> Result<DriveLog, DataError> {
    fixed
        .validate()
        .map_err(|e| invalid(format!("fixed parameters: {e}")))?;
    phys.validate()
        .map_err(|e| invalid(format!("physical parameters: {e}")))?;
    let segments = spec.segments(fixed)?;
    let period: f64 = segments.iter().map(|s| s.duration).sum();
    let n = spec.samples();
    if n < 1 {
        return Err(invalid("duration shorter than one sample"));
    }
    let mut log = DriveLog::default();
    let mut dvdt = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.sample_rate_hz;
        let (v, a) = profile_at(&segments, period, t);
        log.t.push(t);
        log.v.push(v);
        dvdt.push(a);
        power.push(battery_power(v, a, fixed, phys).map_err(|e| invalid(e.to_string()))?);
    }
    if spec.noise_sigma > 0.0 {
        let (lo, hi) = power
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let sd = spec.noise_sigma * (hi - lo);
        if sd > 0.0 {
            let noise = Normal::new(0.0, sd).map_err(|e| invalid(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            power.iter_mut().for_each(|p| *p += noise.sample(&mut rng));
        }
    }
    log.dvdt = Some(dvdt);
    log.power = Some(power);
    Ok(log)
}
