//! Physics-informed power network.
//!
//! A dense tanh network maps `(v_norm, t_norm)` to normalized battery power.
//! The five physical parameters are trained jointly with the weights. The
//! loss has two parts:
//!
//! ```text
//! data    = mean_i (P_data_i - P_pred_i)^2
//! physics = lambda * mean_j (P_pred_j - P_model(v_j, a_j; phys) / P_scale)^2
//! total   = data + physics
//! ```
//!
//! Reported losses evaluate both parts on the same rows. The training
//! objective may evaluate the physics part on extra collocation rows
//! (see [`Collocation`]); those rows need speed and acceleration only.
//!
//! Training splits the gradient at the network output: the loss, the
//! physics model and the parameter leaves live on an [`autodiff::Tape`],
//! whose adjoints for the network outputs seed the batched backward pass.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, Var};
use crate::data::{NormalizedDataset, Scales, SplitDataset};
use crate::dynamics::{battery_power, FixedParams, PhysParams, VehiclePreset, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{self, clip_global_norm, Activation, Network, ParamGroup};
use crate::report::{LossParts, LossReport, Split};

/// Rows on which the physics term of the training objective is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collocation {
    /// Training rows only.
    Train,
    /// Training rows plus the validation inputs (no validation targets).
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr_net: f64,
    /// Per-layer rates overriding `lr_net`, one per weight layer.
    pub lr_layers: Option<Vec<f64>>,
    /// Rate for the physical parameters, each optimized as a multiple of
    /// its initial value.
    pub lr_phys: f64,
    /// Epochs during which the physical parameters stay at their initial
    /// values while the network fits.
    pub phys_warmup_epochs: usize,
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
    pub clip_norm: f64,
    pub val_fraction: f64,
    pub collocation: Collocation,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PinnConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            epochs: 10_000,
            lr_net: 1e-3,
            lr_layers: None,
            lr_phys: 1e-2,
            phys_warmup_epochs: 5000,
            layer_sizes: vec![2, 128, 128, 128, 128, 1],
            seed: 0,
            clip_norm: 10.0,
            val_fraction: 0.2,
            collocation: Collocation::All,
            execution: Execution::default(),
        }
    }
}

impl PinnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pinn: {m}")));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr_net >= 0.0 && self.lr_phys >= 0.0) {
            return bad("learning rates must be >= 0");
        }
        if let Some(l) = &self.lr_layers {
            if l.len() + 1 != self.layer_sizes.len() || l.iter().any(|r| !(*r >= 0.0)) {
                return bad("lr_layers needs one non-negative rate per weight layer");
            }
        }
        if self.layer_sizes.first() != Some(&2) || self.layer_sizes.last() != Some(&1) {
            return bad("layer sizes must start at 2 inputs and end at 1 output");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub net: Network,
    pub phys: PhysParams,
    /// Starting point of the physical parameters; also the unit of their
    /// optimization scale.
    pub initial: PhysParams,
    pub fixed: FixedParams,
    pub scales: Scales,
}

/// Physical parameters plus the values they started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PinnSidecar {
    phys: PhysParams,
    initial: PhysParams,
    fixed: FixedParams,
    scales: Scales,
}

impl PinnModel {
    pub fn new(preset: &VehiclePreset, scales: Scales, layer_sizes: &[usize], seed: u64) -> Result<Self> {
        preset.validate()?;
        Ok(Self {
            net: Network::new(layer_sizes, Activation::Tanh, seed)?,
            phys: preset.initial,
            initial: preset.initial,
            fixed: preset.fixed,
            scales,
        })
    }

    /// Writes the network file and its JSON sidecar.
    pub fn save(&self, model_path: &Path, sidecar_path: &Path) -> Result<()> {
        nn::io::write_networks(BufWriter::new(File::create(model_path)?), &[&self.net])?;
        let side = PinnSidecar {
            phys: self.phys,
            initial: self.initial,
            fixed: self.fixed,
            scales: self.scales,
        };
        let mut f = BufWriter::new(File::create(sidecar_path)?);
        serde_json::to_writer_pretty(&mut f, &side)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(model_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let mut nets = nn::io::read_networks(BufReader::new(File::open(model_path)?))?;
        if nets.len() != 1 {
            return Err(Error::Config(format!("expected 1 network, found {}", nets.len())));
        }
        let side: PinnSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path)?))?;
        Ok(Self {
            net: nets.pop().unwrap(),
            phys: side.phys,
            initial: side.initial,
            fixed: side.fixed,
            scales: side.scales,
        })
    }

    /// Normalized predictions for a batch of `(v_norm, t_norm)` rows.
    pub fn predict_normalized(&self, inputs: &[[f64; 2]], exec: Execution) -> Result<Vec<f64>> {
        let x = inputs_matrix(inputs);
        Ok(self.net.forward_batch(x.view(), exec)?.output_column())
    }

    /// Predicted battery power (W) over a speed/time series.
    pub fn predict_series(&self, v: &[f64], t: &[f64], exec: Execution) -> Result<Vec<f64>> {
        let inputs: Vec<[f64; 2]> = v
            .iter()
            .zip(t)
            .map(|(&v, &t)| [self.scales.norm_v(v), self.scales.norm_t(t)])
            .collect();
        Ok(self
            .predict_normalized(&inputs, exec)?
            .into_iter()
            .map(|p| self.scales.denorm_p(p))
            .collect())
    }
}

fn inputs_matrix(inputs: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((inputs.len(), 2), |(i, j)| inputs[i][j])
}

/// Predicted battery power at speed `v` (m/s) and time `t` (s), in W.
///
/// Inputs far outside the training ranges extrapolate.
pub fn predict_power(model: &PinnModel, v: f64, t: f64) -> Result<f64> {
    let y = model
        .net
        .forward(&[model.scales.norm_v(v), model.scales.norm_t(t)])?;
    Ok(model.scales.denorm_p(y[0]))
}

/// `pred_i - P_model(v_i, a_i; phys) / P_scale` for given normalized
/// predictions.
pub fn residuals_for(
    pred: &[f64],
    batch: &NormalizedDataset,
    phys: &PhysParams,
    fixed: &FixedParams,
) -> Result<Vec<f64>> {
    (0..batch.len())
        .map(|i| {
            let p = battery_power(batch.speed(i), batch.dvdt[i], fixed, phys)?;
            Ok(pred[i] - batch.scales.norm_p(p))
        })
        .collect()
}

/// Physics residuals of the model's own predictions on `batch`.
pub fn physics_residual(batch: &NormalizedDataset, model: &PinnModel) -> Result<Vec<f64>> {
    let pred = model.predict_normalized(&batch.inputs, Execution::Sequential)?;
    residuals_for(&pred, batch, &model.phys, &model.fixed)
}

/// Loss parts from normalized predictions.
pub fn loss_from_predictions(
    pred: &[f64],
    batch: &NormalizedDataset,
    phys: &PhysParams,
    fixed: &FixedParams,
    lambda: f64,
) -> Result<LossParts> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    let data = pred
        .iter()
        .zip(&batch.targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / n as f64;
    let res = residuals_for(pred, batch, phys, fixed)?;
    let physics = lambda * res.iter().map(|r| r * r).sum::<f64>() / n as f64;
    Ok(LossParts::new(data, physics))
}

pub fn pinn_loss(batch: &NormalizedDataset, model: &PinnModel, lambda: f64) -> Result<LossParts> {
    let pred = model.predict_normalized(&batch.inputs, Execution::Sequential)?;
    loss_from_predictions(&pred, batch, &model.phys, &model.fixed, lambda)
}

/// The whole loss recorded on a tape, network included. Scales with the
/// network size; meant for gradient checks on small models.
pub fn pinn_loss_tape<'t>(
    tape: &'t Tape,
    net: &Network,
    net_params: &[Var<'t>],
    phys: &PhysParams<Var<'t>>,
    fixed: &FixedParams,
    batch: &NormalizedDataset,
    lambda: f64,
) -> Result<Var<'t>> {
    let n = batch.len() as f64;
    let mut data = tape.lift(0.0);
    let mut physics = tape.lift(0.0);
    for i in 0..batch.len() {
        let x = batch.inputs[i].map(|u| tape.lift(u));
        let y = net.forward_tape(net_params, &x)?[0];
        let d = y - batch.targets[i];
        data = data + d * d;
        let p = battery_power(batch.speed(i), batch.dvdt[i], fixed, phys)?;
        let r = y - p * (1.0 / batch.scales.p_scale);
        physics = physics + r * r;
    }
    Ok(data * (1.0 / n) + physics * (lambda / n))
}

/// One evaluation of the training objective and its gradient.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub objective: f64,
    pub train: LossParts,
    pub val: Option<LossParts>,
    pub net_grad: Vec<f64>,
    /// Gradient with respect to the raw physical parameters, canonical order.
    pub phys_grad: [f64; 5],
}

/// Evaluates the objective at the model's current state.
///
/// Rows are `train` followed by `val`. Validation rows enter the objective
/// only through the physics term and only when `collocation` is `All`.
pub fn objective(
    model: &PinnModel,
    train: &NormalizedDataset,
    val: Option<&NormalizedDataset>,
    lambda: f64,
    collocation: Collocation,
    exec: Execution,
) -> Result<ObjectiveEval> {
    let n_tr = train.len();
    if n_tr == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    let n_val = val.map_or(0, |v| v.len());
    let mut inputs = train.inputs.clone();
    if let Some(v) = val {
        inputs.extend_from_slice(&v.inputs);
    }
    let x = inputs_matrix(&inputs);
    let fwd = model.net.forward_batch(x.view(), exec)?;
    let pred = fwd.output_column();

    let n_coll = match collocation {
        Collocation::Train => n_tr,
        Collocation::All => n_tr + n_val,
    };
    let tape = Tape::with_capacity(32 * (n_tr + n_val));
    let phys_vars: PhysParams<Var<'_>> = model.phys.map(|p| tape.lift(p));
    let y: Vec<Var<'_>> = pred.iter().map(|&p| tape.lift(p)).collect();
    let inv_p = 1.0 / train.scales.p_scale;
    let row = |i: usize| -> (&NormalizedDataset, usize) {
        if i < n_tr {
            (train, i)
        } else {
            (val.unwrap(), i - n_tr)
        }
    };
    let mut sq_res = Vec::with_capacity(n_tr + n_val);
    for (i, &yi) in y.iter().enumerate() {
        let (ds, j) = row(i);
        let p = battery_power(ds.speed(j), ds.dvdt[j], &model.fixed, &phys_vars)?;
        let r = yi - p * inv_p;
        sq_res.push(r * r);
    }
    let mut data_sum = tape.lift(0.0);
    for (i, &yi) in y.iter().take(n_tr).enumerate() {
        let d = yi - train.targets[i];
        data_sum = data_sum + d * d;
    }
    let phys_sum = sq_res[..n_coll]
        .iter()
        .copied()
        .reduce(|a, b| a + b)
        .expect("non-empty");
    let obj = data_sum * (1.0 / n_tr as f64) + phys_sum * (lambda / n_coll as f64);
    let grads = tape.backward(obj).map_err(|e| match e {
        autodiff::AutodiffError::Overflow { .. } => Error::NonFinite {
            epoch: 0,
            component: "objective",
            group: "physics".into(),
        },
        other => other.into(),
    })?;

    let d_out = Array2::from_shape_fn((n_tr + n_val, 1), |(i, _)| grads.wrt(y[i]));
    let (net_grad, _) = model.net.backward_batch(&fwd, d_out.view(), exec);
    let phys_grad = phys_vars.to_array().map(|v| grads.wrt(v));

    let sq: Vec<f64> = sq_res.iter().map(|v| v.value()).collect();
    let parts = |range: std::ops::Range<usize>, ds: &NormalizedDataset| {
        let n = range.len() as f64;
        let data = range
            .clone()
            .map(|i| (pred[i] - ds.targets[i - range.start]).powi(2))
            .sum::<f64>()
            / n;
        let physics = lambda * range.map(|i| sq[i]).sum::<f64>() / n;
        LossParts::new(data, physics)
    };
    Ok(ObjectiveEval {
        objective: obj.value(),
        train: parts(0..n_tr, train),
        val: val.filter(|v| !v.is_empty()).map(|v| parts(n_tr..n_tr + n_val, v)),
        net_grad,
        phys_grad,
    })
}

fn check_finite(epoch: usize, eval: &ObjectiveEval) -> Result<()> {
    let component = if !eval.train.data.is_finite() {
        Some("data")
    } else if !eval.train.physics.is_finite() || !eval.objective.is_finite() {
        Some("physics")
    } else {
        None
    };
    let group = if eval.net_grad.iter().any(|g| !g.is_finite()) {
        Some("net")
    } else if eval.phys_grad.iter().any(|g| !g.is_finite()) {
        Some("phys")
    } else {
        None
    };
    match (component, group) {
        (None, None) => Ok(()),
        (c, g) => Err(Error::NonFinite {
            epoch,
            component: c.unwrap_or("gradient"),
            group: g.unwrap_or("net+phys").to_string(),
        }),
    }
}

/// Full-batch Adam training with two parameter groups (`net`, `phys`).
///
/// Physical parameters start from `preset.initial`, are optimized as
/// multiples of those values, and are projected onto their bounds after
/// every step. Both splits are recorded every epoch, evaluated before that
/// epoch's update.
pub fn train_pinn(
    data: &SplitDataset,
    config: &PinnConfig,
    preset: &VehiclePreset,
) -> Result<(PinnModel, LossReport)> {
    train_pinn_with(data, config, preset, |_, _, _| {})
}

/// [`train_pinn`] with a callback receiving `(epoch, train, val)` losses.
pub fn train_pinn_with<F>(
    data: &SplitDataset,
    config: &PinnConfig,
    preset: &VehiclePreset,
    mut on_epoch: F,
) -> Result<(PinnModel, LossReport)>
where
    F: FnMut(usize, &LossParts, Option<&LossParts>),
{
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut model = PinnModel::new(preset, data.scales, &config.layer_sizes, config.seed)?;
    let mut report = LossReport::default();
    let layers = config.layer_sizes.len() - 1;
    let mut net_groups: Vec<(std::ops::Range<usize>, ParamGroup)> = (0..layers)
        .map(|k| {
            let lr = config.lr_layers.as_ref().map_or(config.lr_net, |l| l[k]);
            let r = model.net.layer_range(k);
            let n = r.len();
            (r, ParamGroup::new(format!("net.{k}"), n, lr))
        })
        .collect();
    let mut phys_group = ParamGroup::new("phys", 5, config.lr_phys);
    let unit = model.initial.to_array();
    let mut scaled = [1.0f64; 5];
    let val = (!data.val.is_empty()).then_some(&data.val);

    for epoch in 1..=config.epochs {
        let mut eval = objective(&model, &data.train, val, config.lambda, config.collocation, config.execution)
            .map_err(|e| match e {
                Error::NonFinite { component, group, .. } => Error::NonFinite {
                    epoch,
                    component,
                    group,
                },
                other => other,
            })?;
        check_finite(epoch, &eval)?;
        report.push(epoch, Split::Train, eval.train);
        if let Some(v) = eval.val {
            report.push(epoch, Split::Val, v);
        }
        on_epoch(epoch, &eval.train, eval.val.as_ref());

        let mut scaled_grad: Vec<f64> = eval.phys_grad.iter().zip(unit).map(|(g, u)| g * u).collect();
        clip_global_norm(&mut [&mut eval.net_grad, &mut scaled_grad], config.clip_norm);
        for (r, group) in net_groups.iter_mut() {
            group.step(&mut model.net.params_mut()[r.clone()], &eval.net_grad[r.clone()]);
        }
        if epoch <= config.phys_warmup_epochs {
            continue;
        }
        phys_group.step(&mut scaled, &scaled_grad);

        let raw: [f64; 5] = std::array::from_fn(|k| scaled[k] * unit[k]);
        model.phys = PhysParams::from_array(raw).clamped();
        let projected = model.phys.to_array();
        for k in 0..5 {
            scaled[k] = projected[k] / unit[k];
        }
    }
    Ok((model, report))
}

/// One row of the parameter comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub reference: f64,
    pub predicted: f64,
    pub abs_error: f64,
    /// Fraction, not percent.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    pub rows: Vec<ParamRow>,
}

impl ParamTable {
    pub fn compare(predicted: &PhysParams, reference: &PhysParams) -> Self {
        let rows = PARAM_NAMES
            .iter()
            .zip(predicted.to_array())
            .zip(reference.to_array())
            .map(|((name, p), r)| ParamRow {
                name: name.to_string(),
                reference: r,
                predicted: p,
                abs_error: (p - r).abs(),
                rel_error: (p - r).abs() / r.abs(),
            })
            .collect();
        Self { rows }
    }

    pub fn get(&self, name: &str) -> Option<&ParamRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "parameter,reference,predicted,abs_error,rel_error_pct")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.name,
                r.reference,
                r.predicted,
                r.abs_error,
                100.0 * r.rel_error
            )?;
        }
        Ok(())
    }
}

/// Current physical parameters and their comparison against `reference`
/// (the initial guess, or a known truth).
pub fn extract_params(model: &PinnModel, reference: &PhysParams) -> (PhysParams, ParamTable) {
    (model.phys, ParamTable::compare(&model.phys, reference))
}

/// Normalized predictions as an `n x 1` view-friendly matrix, for callers
/// that want to stay in ndarray.
pub fn predict_matrix(model: &PinnModel, x: ArrayView2<'_, f64>, exec: Execution) -> Result<Array2<f64>> {
    Ok(model.net.predict_batch(x, exec)?)
}
