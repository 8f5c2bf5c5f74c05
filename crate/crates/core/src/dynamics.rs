//! Longitudinal force balance and the battery-power model.
//!
//! Battery power at speed `v` and acceleration `a`:
//!
//! ```text
//! P = (1/eta) * (0.5 rho A C_d v^3 + C_rr m g v + m v a (1 - mu [a < beta])) + P_aux
//! ```
//!
//! The regeneration indicator is read from the measured acceleration only,
//! so the expression stays differentiable in the physical parameters. All
//! functions are generic over [`Real`] and run on plain `f64` or tape vars.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Real};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;
/// Air density used for both presets, kg/m³.
pub const AIR_DENSITY: f64 = 1.17;
/// Deceleration below which regenerative braking engages, m/s².
pub const REGEN_THRESHOLD: f64 = -0.045;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid fixed parameter: {0}")]
    InvalidFixed(&'static str),
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unknown vehicle preset {0:?}")]
    UnknownPreset(String),
    #[error("no idle segment (|v| < {v_eps} m/s and |dv/dt| < {a_eps} m/s²) in log")]
    NoIdleSegment { v_eps: f64, a_eps: f64 },
    #[error("log carries no {0}")]
    MissingSeries(&'static str),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Constants of the vehicle and environment that are not learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    /// Air density, kg/m³.
    pub rho: f64,
    /// Frontal area, m².
    pub area: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
    /// Road incline, rad.
    pub theta: f64,
    /// Auxiliary (idle) power draw, W.
    pub p_aux: f64,
    /// Regeneration deceleration threshold, m/s² (negative).
    pub beta: f64,
}

impl FixedParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.rho > 0.0) {
            return Err(DynamicsError::InvalidFixed("rho must be positive"));
        }
        if !(self.area > 0.0) {
            return Err(DynamicsError::InvalidFixed("area must be positive"));
        }
        if !(self.g > 0.0) {
            return Err(DynamicsError::InvalidFixed("g must be positive"));
        }
        if self.theta != 0.0 {
            return Err(DynamicsError::InvalidFixed("only flat roads (theta = 0) are supported"));
        }
        if !(self.beta < 0.0) {
            return Err(DynamicsError::InvalidFixed("beta must be negative"));
        }
        if !self.p_aux.is_finite() {
            return Err(DynamicsError::InvalidFixed("p_aux must be finite"));
        }
        Ok(())
    }

    /// Whether regeneration is active at acceleration `dvdt`.
    pub fn regen_active(&self, dvdt: f64) -> bool {
        dvdt < self.beta
    }
}

/// The learnable physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysParams<T = f64> {
    /// Motor efficiency.
    pub eta: T,
    /// Regenerative-braking efficiency.
    pub mu: T,
    /// Vehicle mass, kg.
    pub mass: T,
    /// Rolling-resistance coefficient.
    pub c_rr: T,
    /// Aerodynamic drag coefficient.
    pub c_d: T,
}

/// Names in the canonical order used by [`PhysParams::to_array`].
pub const PARAM_NAMES: [&str; 5] = ["eta", "mu", "mass", "c_rr", "c_d"];

/// Closed bounds enforced after every optimizer step. Open lower bounds of
/// zero are represented by a small positive floor.
pub const PARAM_BOUNDS: [(f64, f64); 5] = [
    (1e-3, 1.0),
    (0.0, 1.0),
    (500.0, 5000.0),
    (1e-6, 0.1),
    (1e-6, 1.0),
];

impl<T: Copy> PhysParams<T> {
    pub fn to_array(&self) -> [T; 5] {
        [self.eta, self.mu, self.mass, self.c_rr, self.c_d]
    }

    pub fn from_array(a: [T; 5]) -> Self {
        Self {
            eta: a[0],
            mu: a[1],
            mass: a[2],
            c_rr: a[3],
            c_d: a[4],
        }
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> PhysParams<U> {
        PhysParams::from_array(self.to_array().map(f))
    }
}

impl PhysParams<f64> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for ((name, (lo, hi)), value) in PARAM_NAMES.iter().zip(PARAM_BOUNDS).zip(self.to_array()) {
            if !(lo..=hi).contains(&value) {
                return Err(DynamicsError::OutOfBounds {
                    name,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Projects every parameter onto its bounds.
    pub fn clamped(&self) -> Self {
        let mut a = self.to_array();
        for (x, (lo, hi)) in a.iter_mut().zip(PARAM_BOUNDS) {
            *x = x.clamp(lo, hi);
        }
        Self::from_array(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehiclePreset {
    pub name: String,
    pub fixed: FixedParams,
    pub initial: PhysParams,
}

impl VehiclePreset {
    /// Tesla Model 3 Long Range.
    pub fn model3lr() -> Self {
        Self {
            name: "model3lr".into(),
            fixed: FixedParams {
                rho: AIR_DENSITY,
                area: 2.22,
                g: GRAVITY,
                theta: 0.0,
                p_aux: 1100.0,
                beta: REGEN_THRESHOLD,
            },
            initial: PhysParams {
                eta: 0.7,
                mu: 0.5,
                mass: 1823.0,
                c_rr: 0.0096,
                c_d: 0.23,
            },
        }
    }

    /// Tesla Model S.
    pub fn model_s() -> Self {
        Self {
            name: "modelS".into(),
            fixed: FixedParams {
                rho: AIR_DENSITY,
                area: 2.40,
                g: GRAVITY,
                theta: 0.0,
                p_aux: 390.0,
                beta: REGEN_THRESHOLD,
            },
            initial: PhysParams {
                eta: 0.7,
                mu: 0.5,
                mass: 2250.0,
                c_rr: 0.0096,
                c_d: 0.23,
            },
        }
    }

    pub fn by_name(name: &str) -> Result<Self, DynamicsError> {
        match name {
            "model3lr" => Ok(Self::model3lr()),
            "modelS" => Ok(Self::model_s()),
            other => Err(DynamicsError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.fixed.validate()?;
        self.initial.validate()
    }
}

/// Resistive and inertial forces, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forces<T> {
    pub drag: T,
    pub rolling: T,
    pub gravity: T,
    pub inertia: T,
}

impl<T: Real> Forces<T> {
    pub fn total(&self) -> T {
        self.drag + self.rolling + self.gravity + self.inertia
    }
}

pub fn force_components<T: Real>(
    v: f64,
    dvdt: f64,
    fixed: &FixedParams,
    phys: &PhysParams<T>,
) -> Forces<T> {
    Forces {
        drag: phys.c_d * (0.5 * fixed.rho * fixed.area * v * v),
        rolling: phys.c_rr * phys.mass * (fixed.g * fixed.theta.cos()),
        gravity: phys.mass * (fixed.g * fixed.theta.sin()),
        inertia: phys.mass * dvdt,
    }
}

/// Battery power in W.
pub fn battery_power<T: Real>(
    v: f64,
    dvdt: f64,
    fixed: &FixedParams,
    phys: &PhysParams<T>,
) -> Result<T, DynamicsError> {
    let drag = phys.c_d * (0.5 * fixed.rho * fixed.area * v.powi(3));
    let rolling = phys.c_rr * phys.mass * (fixed.g * fixed.theta.cos() * v);
    let kinetic = phys.mass * (v * dvdt);
    let inertial = if fixed.regen_active(dvdt) {
        kinetic - phys.mu * kinetic
    } else {
        kinetic
    };
    let gravity = phys.mass * (fixed.g * fixed.theta.sin() * v);
    let traction = drag + rolling + gravity + inertial;
    Ok(traction.checked_div(phys.eta)? + fixed.p_aux)
}

/// Power recovered through regenerative braking, W (zero when inactive).
pub fn regen_power<T: Real>(v: f64, dvdt: f64, fixed: &FixedParams, phys: &PhysParams<T>) -> T {
    let zero = phys.mu * 0.0;
    if fixed.regen_active(dvdt) {
        -(phys.mu * phys.mass * (v * dvdt))
    } else {
        zero
    }
}

/// Electrical power from measured current and voltage, W.
pub fn ground_truth_power(current: f64, voltage: f64) -> f64 {
    current * voltage
}

/// Mean power over idle samples.
pub fn estimate_aux_power(
    v: &[f64],
    dvdt: &[f64],
    power: &[f64],
    v_eps: f64,
    a_eps: f64,
) -> Result<f64, DynamicsError> {
    let (sum, n) = v
        .iter()
        .zip(dvdt)
        .zip(power)
        .filter(|((v, a), _)| v.abs() < v_eps && a.abs() < a_eps)
        .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
    if n == 0 {
        return Err(DynamicsError::NoIdleSegment { v_eps, a_eps });
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Tape};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn m3() -> VehiclePreset {
        VehiclePreset::model3lr()
    }

    #[test]
    fn presets_match_published_initial_values() {
        let p = m3();
        assert_eq!(p.initial.to_array(), [0.7, 0.5, 1823.0, 0.0096, 0.23]);
        assert_eq!(p.fixed.area, 2.22);
        let s = VehiclePreset::model_s();
        assert_eq!(s.initial.to_array(), [0.7, 0.5, 2250.0, 0.0096, 0.23]);
        assert_eq!((s.fixed.area, s.fixed.p_aux), (2.40, 390.0));
        assert!(VehiclePreset::by_name("roadster").is_err());
        p.validate().unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn forces_at_rest() {
        let p = m3();
        let f = force_components(0.0, 0.0, &p.fixed, &p.initial);
        assert_eq!(f.drag, 0.0);
        assert_eq!(f.inertia, 0.0);
        assert_eq!(f.gravity, 0.0);
        assert!((f.rolling - 0.0096 * 1823.0 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn drag_at_thirty() {
        let p = m3();
        let f = force_components(30.0, 0.0, &p.fixed, &p.initial);
        // 0.5 * 1.17 * 2.22 * 0.23 * 900
        assert!((f.drag - 268.8309).abs() < 1e-3);
    }

    #[test]
    fn idle_power_is_aux() {
        let p = m3();
        assert_eq!(battery_power(0.0, 0.0, &p.fixed, &p.initial).unwrap(), 1100.0);
    }

    #[test]
    fn cruise_power_hand_evaluation() {
        let p = m3();
        let drag: f64 = 0.5 * 1.17 * 2.22 * 0.23 * 27000.0;
        let rolling: f64 = 0.0096 * 1823.0 * 9.81 * 30.0;
        assert!((drag - 8064.927).abs() < 1e-2);
        assert!((rolling - 5150.4854).abs() < 1e-3);
        let expected = (drag + rolling) / 0.7 + 1100.0;
        let got = battery_power(30.0, 0.0, &p.fixed, &p.initial).unwrap();
        assert!((got - expected).abs() < 1e-9);
        assert!((got - 19_979.0).abs() / 19_979.0 < 1e-3);
    }

    #[test]
    fn regen_power_hand_evaluation() {
        let p = m3();
        let got = battery_power(20.0, -1.0, &p.fixed, &p.initial).unwrap();
        let drag: f64 = 0.5 * 1.17 * 2.22 * 0.23 * 8000.0;
        let rolling: f64 = 0.0096 * 1823.0 * 9.81 * 20.0;
        let inertia = 1823.0 * 20.0 * -1.0 * 0.5;
        let expected = (drag + rolling + inertia) / 0.7 + 1100.0;
        assert!((got - expected).abs() < 1e-9);
        assert!((got + 16_624.0).abs() / 16_624.0 < 1e-3);

        let recovered: f64 = 0.5 * 1823.0 * 20.0 * 1.0;
        assert_eq!(recovered, 18_230.0);
        assert_eq!(regen_power(20.0, -1.0, &p.fixed, &p.initial), recovered);
        assert_eq!(regen_power(20.0, 0.0, &p.fixed, &p.initial), 0.0);
        let no_regen = PhysParams { mu: 0.0, ..p.initial };
        assert_eq!(regen_power(20.0, -3.0, &p.fixed, &no_regen), 0.0);
    }

    #[test]
    fn ohms_law() {
        assert_eq!(ground_truth_power(10.0, 400.0), 4000.0);
        assert_eq!(ground_truth_power(0.0, 381.0), 0.0);
        assert_eq!(ground_truth_power(-20.0, 395.0), -7900.0);
    }

    #[test]
    fn aux_estimation() {
        let n = 1000;
        let v = vec![0.0; n];
        let a = vec![0.0; n];
        let flat = vec![1100.0; n];
        assert_eq!(estimate_aux_power(&v, &a, &flat, 0.1, 0.01).unwrap(), 1100.0);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 10.0).unwrap();
        let noisy: Vec<f64> = (0..n).map(|_| 1100.0 + noise.sample(&mut rng)).collect();
        let est = estimate_aux_power(&v, &a, &noisy, 0.1, 0.01).unwrap();
        // standard error 10/sqrt(1000) ~ 0.32 W
        assert!((est - 1100.0).abs() < 2.0, "{est}");

        let moving = vec![5.0; n];
        assert!(matches!(
            estimate_aux_power(&moving, &a, &flat, 0.1, 0.01),
            Err(DynamicsError::NoIdleSegment { .. })
        ));
    }

    #[test]
    fn discontinuity_at_threshold() {
        let p = m3();
        let beta = p.fixed.beta;
        let at = battery_power(15.0, beta, &p.fixed, &p.initial).unwrap();
        let right = battery_power(15.0, beta + 1e-12, &p.fixed, &p.initial).unwrap();
        let left = battery_power(15.0, beta - 1e-12, &p.fixed, &p.initial).unwrap();
        // at the threshold itself regen is off
        assert!((at - right).abs() < 1e-6);
        let jump = p.initial.mu * p.initial.mass * 15.0 * beta.abs() / p.initial.eta;
        assert!((left - at - jump).abs() < 1e-6, "{} vs {}", left - at, jump);
    }

    #[test]
    fn power_gradient_check_at_initial_values() {
        let p = m3();
        let at = p.initial.to_array();
        for (v, a) in [(30.0, 0.0), (20.0, -1.0), (12.0, 1.3)] {
            let err = check_gradient(
                |_, x| {
                    let phys = PhysParams::from_array([x[0], x[1], x[2], x[3], x[4]]);
                    battery_power(v, a, &p.fixed, &phys).map_err(|e| match e {
                        DynamicsError::Autodiff(e) => e,
                        other => panic!("{other}"),
                    })
                },
                &at,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "v={v} a={a}: {err}");
        }
    }

    #[test]
    fn validation_and_clamping() {
        let bad = PhysParams { eta: 1.2, ..m3().initial };
        assert!(bad.validate().is_err());
        assert_eq!(bad.clamped().eta, 1.0);
        let mut fixed = m3().fixed;
        fixed.beta = 0.1;
        assert!(fixed.validate().is_err());
    }

    proptest! {
        #[test]
        fn force_balance(v in 0.1f64..45.0, dvdt in -0.045f64..3.0) {
            let p = m3();
            let power = battery_power(v, dvdt, &p.fixed, &p.initial).unwrap();
            let motor_force = p.initial.eta * (power - p.fixed.p_aux) / v;
            let total = force_components(v, dvdt, &p.fixed, &p.initial).total();
            prop_assert!((motor_force - total).abs() <= 1e-9 * total.abs().max(1.0));
        }

        #[test]
        fn cruise_power_increases_with_speed(v in 0.0f64..50.0, dv in 0.01f64..5.0) {
            let p = m3();
            let lo = battery_power(v, 0.0, &p.fixed, &p.initial).unwrap();
            let hi = battery_power(v + dv, 0.0, &p.fixed, &p.initial).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn tape_and_plain_agree(
            v in 0.0f64..45.0,
            dvdt in -3.0f64..3.0,
            eta in 0.5f64..1.0,
            mu in 0.0f64..1.0,
            mass in 1000.0f64..3000.0,
        ) {
            let p = m3();
            let phys = PhysParams { eta, mu, mass, ..p.initial };
            let plain = battery_power(v, dvdt, &p.fixed, &phys).unwrap();
            let tape = Tape::new();
            let vars = phys.map(|x| tape.lift(x));
            let on_tape = battery_power(v, dvdt, &p.fixed, &vars).unwrap().value();
            prop_assert!((plain - on_tape).abs() <= 1e-12 * plain.abs().max(1.0));
        }
    }
}
