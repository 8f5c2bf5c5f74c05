//! Cumulative energy from power: an RK4 quadrature oracle and the
//! Runge-Kutta network.
//!
//! Because `dE/dt = P(t)` does not depend on `E`, a classical RK4 step
//! reduces to Simpson's rule:
//!
//! ```text
//! E[n+1] = E[n] + dt/6 * (P(t) + 4 P(t + dt/2) + P(t + dt))
//! ```
//!
//! The network replaces each stage value with a small subnetwork:
//!
//! ```text
//! k1 = N1(P(t))
//! k2 = N2(P(t + dt/2), E + dt/2 k1)
//! k3 = N3(P(t + dt/2), E + dt/2 k2)
//! k4 = N4(P(t + dt),   E + dt k3)
//! E_next = E + dt/6 (k1 + 2 k2 + 2 k3 + k4)
//! ```
//!
//! Internally power is divided by `p_scale`, time by `t_total`, and energy
//! by `p_scale * t_total`, so normalized energy is the integral of
//! normalized power over normalized time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::validation_window;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{self, Activation, Network, ParamGroup};
use crate::report::{LossParts, LossReport, Split};

const STEP_TOL: f64 = 1e-6;

/// Power samples with linear interpolation between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    t: Vec<f64>,
    p: Vec<f64>,
}

impl PowerTrace {
    pub fn new(t: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if t.len() != p.len() {
            return Err(Error::Config(format!(
                "power trace has {} times and {} values",
                t.len(),
                p.len()
            )));
        }
        if t.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::Config("power trace contains non-finite values".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("power trace times must be strictly increasing".into()));
        }
        Ok(Self { t, p })
    }

    /// Samples `f` at `t0, t0 + dt, ...` for `n` points.
    pub fn sample<F: Fn(f64) -> f64>(f: F, t0: f64, dt: f64, n: usize) -> Result<Self> {
        let t: Vec<f64> = (0..n).map(|i| t0 + i as f64 * dt).collect();
        let p = t.iter().map(|&t| f(t)).collect();
        Self::new(t, p)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn start(&self) -> f64 {
        self.t.first().copied().unwrap_or(0.0)
    }

    pub fn end(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// Mean spacing when every spacing agrees with it to a relative 1e-6.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let mean = (self.end() - self.start()) / (self.len() - 1) as f64;
        self.t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - mean).abs() <= STEP_TOL * mean)
            .then_some(mean)
    }

    /// Linearly interpolated power at `t`.
    pub fn at(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.start(), self.end());
        let slack = STEP_TOL * (hi - lo).abs().max(1.0);
        if self.is_empty() || !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        let j = self.t.partition_point(|&x| x <= t);
        if j == 0 {
            return Ok(self.p[0]);
        }
        if j == self.len() {
            return Ok(self.p[self.len() - 1]);
        }
        let (t0, t1) = (self.t[j - 1], self.t[j]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.p[j - 1] + w * (self.p[j] - self.p[j - 1]))
    }

    /// Number of whole steps of size `dt` that fit in the trace.
    pub fn steps(&self, dt: f64) -> usize {
        if self.len() < 2 {
            return 0;
        }
        ((self.end() - self.start()) / dt + STEP_TOL).floor() as usize
    }

    /// `(P(t), P(t + dt/2), P(t + dt))` for step `n`.
    pub fn stage_powers(&self, n: usize, dt: f64) -> Result<[f64; 3]> {
        let t = self.start() + n as f64 * dt;
        Ok([self.at(t)?, self.at(t + 0.5 * dt)?, self.at(t + dt)?])
    }
}

/// Cumulative energy on a fixed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    pub dt: f64,
}

impl EnergySeries {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn terminal(&self) -> f64 {
        *self.e.last().expect("energy series holds at least E0")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,e_j")?;
        for (t, e) in self.t.iter().zip(&self.e) {
            writeln!(w, "{t},{e}")?;
        }
        Ok(())
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("time step must be positive, got {dt}")))
    }
}

/// RK4 quadrature of a power function over `[t0, t0 + steps * dt]`.
pub fn rk4_integrate_fn<F: Fn(f64) -> f64>(
    power: F,
    t0: f64,
    dt: f64,
    steps: usize,
    e0: f64,
) -> Result<EnergySeries> {
    check_dt(dt)?;
    let mut t = Vec::with_capacity(steps + 1);
    let mut e = Vec::with_capacity(steps + 1);
    t.push(t0);
    e.push(e0);
    let mut acc = e0;
    for n in 0..steps {
        let tn = t0 + n as f64 * dt;
        acc += dt / 6.0 * (power(tn) + 4.0 * power(tn + 0.5 * dt) + power(tn + dt));
        t.push(t0 + (n + 1) as f64 * dt);
        e.push(acc);
    }
    Ok(EnergySeries { t, e, dt })
}

/// RK4 quadrature of a sampled trace, midpoints by linear interpolation.
pub fn rk4_integrate(trace: &PowerTrace, dt: f64, e0: f64) -> Result<EnergySeries> {
    check_dt(dt)?;
    let steps = trace.steps(dt);
    let mut t = Vec::with_capacity(steps + 1);
    let mut e = Vec::with_capacity(steps + 1);
    t.push(trace.start());
    e.push(e0);
    let mut acc = e0;
    for n in 0..steps {
        let [p0, pm, p1] = trace.stage_powers(n, dt)?;
        acc += dt / 6.0 * (p0 + 4.0 * pm + p1);
        t.push(trace.start() + (n + 1) as f64 * dt);
        e.push(acc);
    }
    Ok(EnergySeries { t, e, dt })
}

/// [`rk4_integrate`] over independent traces.
pub fn rk4_integrate_many(
    traces: &[PowerTrace],
    dt: f64,
    e0: f64,
    exec: Execution,
) -> Vec<Result<EnergySeries>> {
    exec.map(traces, |tr| rk4_integrate(tr, dt, e0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyScales {
    pub p_scale: f64,
    pub t_total: f64,
}

impl EnergyScales {
    /// Largest absolute power and duration of `trace`.
    pub fn fit(trace: &PowerTrace) -> Result<Self> {
        let p_scale = trace.values().iter().fold(0.0f64, |m, p| m.max(p.abs()));
        let t_total = trace.end() - trace.start();
        if !(p_scale > 0.0) {
            return Err(Error::Data(crate::data::DataError::ZeroPowerRange));
        }
        if !(t_total > 0.0) {
            return Err(Error::Config("power trace spans no time".into()));
        }
        Ok(Self { p_scale, t_total })
    }

    pub fn e_scale(&self) -> f64 {
        self.p_scale * self.t_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RknnConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Hidden widths of each stage network.
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub val_fraction: f64,
    /// Step in seconds; the trace's own spacing when absent.
    pub dt: Option<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RknnConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            lr: 1e-2,
            hidden: vec![32, 32, 32],
            seed: 0,
            val_fraction: 0.2,
            dt: None,
            execution: Execution::default(),
        }
    }
}

impl RknnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("rknn: {m}")));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr >= 0.0) {
            return bad("lr must be >= 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        if let Some(dt) = self.dt {
            check_dt(dt)?;
        }
        Ok(())
    }

    fn stage_sizes(&self, arity: usize) -> Vec<usize> {
        let mut s = vec![arity];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    /// Parameter count of the four stage networks together.
    pub fn rknn_params(&self) -> usize {
        nn::param_count(&self.stage_sizes(1)) + 3 * nn::param_count(&self.stage_sizes(2))
    }

    /// Width of the baseline network (4 inputs, as many hidden layers as
    /// the stage networks) whose parameter count is closest to the RKNN's.
    pub fn baseline_width(&self) -> usize {
        let target = self.rknn_params() as i64;
        let depth = self.hidden.len();
        (1..=4096)
            .min_by_key(|&w| {
                let mut sizes = vec![4];
                sizes.extend(std::iter::repeat_n(w, depth));
                sizes.push(1);
                (nn::param_count(&sizes) as i64 - target).abs()
            })
            .unwrap()
    }

    pub fn baseline_sizes(&self) -> Vec<usize> {
        let mut s = vec![4];
        s.extend(std::iter::repeat_n(self.baseline_width(), self.hidden.len()));
        s.push(1);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RknnModel {
    /// Stage networks `N1..N4`; `N1` takes power only, the others take
    /// `(power, energy)`.
    pub stages: [Network; 4],
    pub dt: f64,
    pub scales: EnergyScales,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RknnSidecar {
    dt: f64,
    scales: EnergyScales,
}

impl RknnModel {
    pub fn new(config: &RknnConfig, dt: f64, scales: EnergyScales) -> Result<Self> {
        check_dt(dt)?;
        let net = |arity, k: u64| Network::new(&config.stage_sizes(arity), Activation::Tanh, config.seed.wrapping_mul(4).wrapping_add(k));
        Ok(Self {
            stages: [net(1, 0)?, net(2, 1)?, net(2, 2)?, net(2, 3)?],
            dt,
            scales,
        })
    }

    pub fn from_stages(stages: [Network; 4], dt: f64, scales: EnergyScales) -> Result<Self> {
        check_dt(dt)?;
        let arity: Vec<usize> = stages.iter().map(|n| n.input_width()).collect();
        if arity != [1, 2, 2, 2] || stages.iter().any(|n| n.output_width() != 1) {
            return Err(Error::Config(format!("stage networks have input widths {arity:?}, need [1, 2, 2, 2] and one output")));
        }
        Ok(Self { stages, dt, scales })
    }

    pub fn num_params(&self) -> usize {
        self.stages.iter().map(Network::num_params).sum()
    }

    fn dt_norm(&self) -> f64 {
        self.dt / self.scales.t_total
    }

    /// Stage values and next energy in normalized units.
    pub fn step_normalized(&self, p: [f64; 3], e: f64) -> Result<([f64; 4], f64)> {
        let h = self.dt_norm();
        let k1 = self.stages[0].forward(&[p[0]])?[0];
        let k2 = self.stages[1].forward(&[p[1], e + 0.5 * h * k1])?[0];
        let k3 = self.stages[2].forward(&[p[1], e + 0.5 * h * k2])?[0];
        let k4 = self.stages[3].forward(&[p[2], e + h * k3])?[0];
        Ok(([k1, k2, k3, k4], e + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
    }

    pub fn save(&self, model_path: &Path, sidecar_path: &Path) -> Result<()> {
        let nets: Vec<&Network> = self.stages.iter().collect();
        nn::io::write_networks(BufWriter::new(File::create(model_path)?), &nets)?;
        let mut f = BufWriter::new(File::create(sidecar_path)?);
        serde_json::to_writer_pretty(
            &mut f,
            &RknnSidecar {
                dt: self.dt,
                scales: self.scales,
            },
        )?;
        f.flush()?;
        Ok(())
    }

    pub fn load(model_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let nets = nn::io::read_networks(BufReader::new(File::open(model_path)?))?;
        let n = nets.len();
        let stages: [Network; 4] = nets
            .try_into()
            .map_err(|_| Error::Config(format!("expected 4 networks, found {n}")))?;
        let side: RknnSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path)?))?;
        Self::from_stages(stages, side.dt, side.scales)
    }
}

/// One network step from energy `e` (J) at time `t` (s), powers drawn from
/// `sampler` (W).
pub fn rknn_step<F>(model: &RknnModel, sampler: F, t: f64, e: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let s = model.scales;
    let p = [
        sampler(t)? / s.p_scale,
        sampler(t + 0.5 * model.dt)? / s.p_scale,
        sampler(t + model.dt)? / s.p_scale,
    ];
    let (_, next) = model.step_normalized(p, e / s.e_scale())?;
    Ok(next * s.e_scale())
}

/// Iterates [`rknn_step`] over the trace from `e0`.
pub fn predict_energy(model: &RknnModel, trace: &PowerTrace, e0: f64) -> Result<EnergySeries> {
    if trace.len() < 2 {
        return Ok(EnergySeries {
            t: vec![trace.start()],
            e: vec![e0],
            dt: model.dt,
        });
    }
    match trace.uniform_dt() {
        Some(dt) if (dt - model.dt).abs() <= STEP_TOL * model.dt => {}
        got => {
            return Err(Error::StepMismatch {
                expected: model.dt,
                got: got.unwrap_or((trace.end() - trace.start()) / (trace.len() - 1) as f64),
            })
        }
    }
    let s = model.scales;
    let steps = trace.steps(model.dt);
    let mut t = vec![trace.start()];
    let mut e = vec![e0];
    let mut acc = e0 / s.e_scale();
    for n in 0..steps {
        let p = trace.stage_powers(n, model.dt)?.map(|p| p / s.p_scale);
        acc = model.step_normalized(p, acc)?.1;
        t.push(trace.start() + (n + 1) as f64 * model.dt);
        e.push(acc * s.e_scale());
    }
    Ok(EnergySeries { t, e, dt: model.dt })
}

/// Teacher-forced one-step samples in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSamples {
    /// `P(t), P(t + dt/2), P(t + dt)` per step.
    pub powers: Vec<[f64; 3]>,
    /// Oracle energy at the start of each step.
    pub e: Vec<f64>,
    /// Oracle energy at the end of each step.
    pub target: Vec<f64>,
}

impl StepSamples {
    pub fn from_trace(trace: &PowerTrace, dt: f64, scales: &EnergyScales) -> Result<Self> {
        let oracle = rk4_integrate(trace, dt, 0.0)?;
        let steps = oracle.len() - 1;
        let mut powers = Vec::with_capacity(steps);
        for n in 0..steps {
            powers.push(trace.stage_powers(n, dt)?.map(|p| p / scales.p_scale));
        }
        let e: Vec<f64> = oracle.e.iter().map(|e| e / scales.e_scale()).collect();
        Ok(Self {
            powers,
            target: e[1..].to_vec(),
            e: e[..steps].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    fn select(&self, mask: &[bool], keep: bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| mask[i] == keep).collect();
        Self {
            powers: idx.iter().map(|&i| self.powers[i]).collect(),
            e: idx.iter().map(|&i| self.e[i]).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Contiguous validation window of steps placed by `seed`; returns
    /// (train, val).
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let mask = validation_window(self.len(), val_fraction, seed)?;
        Ok((self.select(&mask, true), self.select(&mask, false)))
    }
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len() as f64
}

/// Batched forward pass of all four stages, kept for backprop.
struct RknnForward {
    fwd: Vec<nn::dense::BatchForward>,
    k: [Vec<f64>; 4],
    pred: Vec<f64>,
}

fn rknn_forward(model: &RknnModel, batch: &StepSamples, exec: Execution) -> Result<RknnForward> {
    let n = batch.len();
    let h = model.dt_norm();
    let mut fwd = Vec::with_capacity(4);
    let x1 = Array2::from_shape_fn((n, 1), |(i, _)| batch.powers[i][0]);
    fwd.push(model.stages[0].forward_batch(x1.view(), exec)?);
    let k1 = fwd[0].output_column();
    let stage_input = |p: usize, prev: &[f64], c: f64| {
        Array2::from_shape_fn((n, 2), |(i, j)| {
            if j == 0 {
                batch.powers[i][p]
            } else {
                batch.e[i] + c * h * prev[i]
            }
        })
    };
    let x2 = stage_input(1, &k1, 0.5);
    fwd.push(model.stages[1].forward_batch(x2.view(), exec)?);
    let k2 = fwd[1].output_column();
    let x3 = stage_input(1, &k2, 0.5);
    fwd.push(model.stages[2].forward_batch(x3.view(), exec)?);
    let k3 = fwd[2].output_column();
    let x4 = stage_input(2, &k3, 1.0);
    fwd.push(model.stages[3].forward_batch(x4.view(), exec)?);
    let k4 = fwd[3].output_column();
    let pred = (0..n)
        .map(|i| batch.e[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    Ok(RknnForward {
        fwd,
        k: [k1, k2, k3, k4],
        pred,
    })
}

/// Mean squared one-step error and, per stage, the parameter gradient.
pub fn rknn_loss_and_grad(
    model: &RknnModel,
    batch: &StepSamples,
    exec: Execution,
) -> Result<(f64, [Vec<f64>; 4])> {
    let n = batch.len();
    let h = model.dt_norm();
    let f = rknn_forward(model, batch, exec)?;
    let loss = mse(&f.pred, &batch.target);
    let g: Vec<f64> = (0..n)
        .map(|i| 2.0 * (f.pred[i] - batch.target[i]) / n as f64)
        .collect();
    let col = |v: Vec<f64>| Array2::from_shape_vec((n, 1), v).unwrap();
    let back = |s: usize, d: Vec<f64>| model.stages[s].backward_batch(&f.fwd[s], col(d).view(), exec);

    let (g4, dx4) = back(3, g.iter().map(|g| g * h / 6.0).collect());
    let d_e4 = dx4.index_axis(Axis(1), 1).to_owned();
    let (g3, dx3) = back(2, (0..n).map(|i| g[i] * h / 3.0 + d_e4[i] * h).collect());
    let d_e3 = dx3.index_axis(Axis(1), 1).to_owned();
    let (g2, dx2) = back(1, (0..n).map(|i| g[i] * h / 3.0 + d_e3[i] * 0.5 * h).collect());
    let d_e2 = dx2.index_axis(Axis(1), 1).to_owned();
    let (g1, _) = back(0, (0..n).map(|i| g[i] * h / 6.0 + d_e2[i] * 0.5 * h).collect());
    let _ = &f.k;
    Ok((loss, [g1, g2, g3, g4]))
}

pub fn rknn_loss(model: &RknnModel, batch: &StepSamples, exec: Execution) -> Result<f64> {
    Ok(mse(&rknn_forward(model, batch, exec)?.pred, &batch.target))
}

fn nonfinite(epoch: usize, group: &str) -> Error {
    Error::NonFinite {
        epoch,
        component: "data",
        group: group.to_string(),
    }
}

struct Prepared {
    dt: f64,
    scales: EnergyScales,
    train: StepSamples,
    val: StepSamples,
}

fn prepare_steps(trace: &PowerTrace, config: &RknnConfig) -> Result<Prepared> {
    config.validate()?;
    let dt = match config.dt {
        Some(dt) => dt,
        None => trace
            .uniform_dt()
            .ok_or_else(|| Error::Config("trace is not uniformly sampled; set rknn.dt".into()))?,
    };
    let steps = trace.steps(dt);
    if steps < 2 {
        return Err(Error::Data(crate::data::DataError::TooShort { got: steps, need: 2 }));
    }
    let scales = EnergyScales::fit(trace)?;
    let samples = StepSamples::from_trace(trace, dt, &scales)?;
    let (train, val) = samples.split(config.val_fraction, config.seed)?;
    Ok(Prepared {
        dt,
        scales,
        train,
        val,
    })
}

/// Trains the four stage networks jointly on oracle one-step targets
/// (full batch, Adam). Losses are recorded every epoch before the update.
pub fn train_rknn(trace: &PowerTrace, config: &RknnConfig) -> Result<(RknnModel, LossReport)> {
    let prep = prepare_steps(trace, config)?;
    let mut model = RknnModel::new(config, prep.dt, prep.scales)?;
    let mut groups: Vec<ParamGroup> = (0..4)
        .map(|s| ParamGroup::new(format!("n{}", s + 1), model.stages[s].num_params(), config.lr))
        .collect();
    let mut report = LossReport::default();
    for epoch in 1..=config.epochs {
        let (loss, grads) = rknn_loss_and_grad(&model, &prep.train, config.execution)?;
        let val = rknn_loss(&model, &prep.val, config.execution)?;
        if !loss.is_finite() {
            return Err(nonfinite(epoch, "n1..n4"));
        }
        if let Some(s) = grads.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(nonfinite(epoch, &format!("n{}", s + 1)));
        }
        report.push(epoch, Split::Train, LossParts::new(loss, 0.0));
        report.push(epoch, Split::Val, LossParts::new(val, 0.0));
        for (s, g) in grads.iter().enumerate() {
            groups[s].step(model.stages[s].params_mut(), g);
        }
    }
    Ok((model, report))
}

/// Baseline inputs `(P(t), P(t+dt/2), P(t+dt), E(t))`.
fn baseline_inputs(batch: &StepSamples) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), 4), |(i, j)| {
        if j < 3 {
            batch.powers[i][j]
        } else {
            batch.e[i]
        }
    })
}

/// A single network mapping `(P(t), P(t+dt/2), P(t+dt), E(t))` to
/// `E(t+dt)`, sized to match the RKNN's parameter count and trained with
/// the same data, loss, optimizer and epochs.
pub fn train_baseline_dnn(trace: &PowerTrace, config: &RknnConfig) -> Result<(Network, LossReport)> {
    let prep = prepare_steps(trace, config)?;
    let mut net = Network::new(&config.baseline_sizes(), Activation::Tanh, config.seed)?;
    let mut group = ParamGroup::new("dnn", net.num_params(), config.lr);
    let x_train = baseline_inputs(&prep.train);
    let x_val = baseline_inputs(&prep.val);
    let n = prep.train.len();
    let mut report = LossReport::default();
    let exec = config.execution;
    for epoch in 1..=config.epochs {
        let fwd = net.forward_batch(x_train.view(), exec)?;
        let pred = fwd.output_column();
        let loss = mse(&pred, &prep.train.target);
        let val = mse(&net.predict_batch(x_val.view(), exec)?.column(0).to_vec(), &prep.val.target);
        if !loss.is_finite() {
            return Err(nonfinite(epoch, "dnn"));
        }
        let d = Array2::from_shape_fn((n, 1), |(i, _)| 2.0 * (pred[i] - prep.train.target[i]) / n as f64);
        let (g, _) = net.backward_batch(&fwd, d.view(), exec);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(nonfinite(epoch, "dnn"));
        }
        report.push(epoch, Split::Train, LossParts::new(loss, 0.0));
        report.push(epoch, Split::Val, LossParts::new(val, 0.0));
        group.step(net.params_mut(), &g);
    }
    Ok((net, report))
}
