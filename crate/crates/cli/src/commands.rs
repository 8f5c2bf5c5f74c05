use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evpinn::data::{self, prepare, synth_cycle, validation_window, DriveLog};
use evpinn::dynamics::{PhysParams, VehiclePreset};
use evpinn::pinn::{extract_params, train_pinn_with, PinnModel};
use evpinn::report::MILESTONES;
use evpinn::rknn::{predict_energy, rk4_integrate, train_rknn, EnergySeries, PowerTrace, RknnModel};
use evpinn::Execution;
use serde::Serialize;

use crate::config::{DataSpec, LoadedConfig};
use crate::CliError;

pub const SYNTH_FILE: &str = "synthetic.csv";
pub const CONFIG_COPY: &str = "config.json";
pub const PINN_MODEL: &str = "pinn.model";
pub const PINN_SIDECAR: &str = "pinn.json";
pub const RKNN_MODEL: &str = "rknn.model";
pub const RKNN_SIDECAR: &str = "rknn.json";
pub const PINN_LOSS: &str = "pinn_loss.csv";
pub const RKNN_LOSS: &str = "rknn_loss.csv";
pub const PARAMS: &str = "params.csv";
pub const POWER_PRED: &str = "power_pred.csv";
pub const ENERGY_PRED: &str = "energy_pred.csv";
pub const METRICS: &str = "metrics.json";

/// Normalized inputs this far outside the training ranges are rejected.
const SCALE_SLACK: f64 = 0.25;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn prepare_out(out: &Path, loaded: &LoadedConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let copy = out.join(CONFIG_COPY);
    fs::write(&copy, &loaded.text).map_err(|e| CliError::io(&copy, e))
}

/// The configured log with acceleration filled in, plus the generating
/// parameters when synthetic.
fn load_data(loaded: &LoadedConfig, preset: &VehiclePreset) -> Result<(DriveLog, Option<PhysParams>), CliError> {
    match &loaded.config.data {
        DataSpec::Path(p) => {
            let path = loaded.resolve_path(p);
            Ok((read_log(&path, loaded.config.accel_window)?, None))
        }
        DataSpec::Synthetic(s) => {
            let log = synth_cycle(&s.cycle, &preset.fixed, &s.truth).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((log, Some(s.truth)))
        }
    }
}

fn read_log(path: &Path, window: usize) -> Result<DriveLog, CliError> {
    if !path.is_file() {
        return Err(CliError::DataNotFound(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut log = data::load_log(file).map_err(|e| CliError::Run(e.into()))?;
    log.ensure_accel(window).map_err(|e| CliError::Run(e.into()))?;
    Ok(log)
}

pub fn synth(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let preset = loaded.config.vehicle.resolve()?;
    let DataSpec::Synthetic(spec) = &loaded.config.data else {
        return Err(CliError::Config("synth needs a synthetic data section".into()));
    };
    prepare_out(out, loaded)?;
    let log = synth_cycle(&spec.cycle, &preset.fixed, &spec.truth).map_err(|e| CliError::Config(e.to_string()))?;
    let path = out.join(SYNTH_FILE);
    let mut w = create(&path)?;
    data::save_log(&mut w, &log).map_err(|e| CliError::Run(e.into()))?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let p = log.power.as_deref().unwrap_or_default();
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    println!(
        "{}: {} samples, {:.1} s, P in [{:.1}, {:.1}] W",
        path.display(),
        log.len(),
        log.t.last().copied().unwrap_or(0.0) - log.t.first().copied().unwrap_or(0.0),
        lo,
        hi
    );
    Ok(())
}

pub fn train(loaded: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let preset = cfg.vehicle.resolve()?;
    let (log, truth) = load_data(loaded, &preset)?;
    prepare_out(out, loaded)?;
    let split = prepare(&log, cfg.pinn.val_fraction, cfg.pinn.seed).map_err(|e| CliError::Run(e.into()))?;

    let (pinn, report) = train_pinn_with(&split, &cfg.pinn, &preset, |epoch, train, val| {
        if MILESTONES.contains(&epoch) || epoch == cfg.pinn.epochs {
            eprintln!(
                "pinn epoch {epoch}: train {:.7} val {:.7}",
                train.total,
                val.map_or(f64::NAN, |v| v.total)
            );
        }
    })?;
    pinn.save(&out.join(PINN_MODEL), &out.join(PINN_SIDECAR))?;
    let path = out.join(PINN_LOSS);
    let mut w = create(&path)?;
    report.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;

    // against the generating parameters when known, else the initial guess
    let reference = truth.unwrap_or(preset.initial);
    let (_, table) = extract_params(&pinn, &reference);
    let path = out.join(PARAMS);
    let mut w = create(&path)?;
    table.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;

    let predicted = pinn.predict_series(&log.v, &log.t, cfg.pinn.execution)?;
    let trace = PowerTrace::new(log.t.clone(), predicted)?;
    let (rknn, rreport) = train_rknn(&trace, &cfg.rknn)?;
    eprintln!(
        "rknn final: train {:.3e} val {:.3e}",
        rreport.last(evpinn::report::Split::Train).map_or(f64::NAN, |r| r.loss.total),
        rreport.last(evpinn::report::Split::Val).map_or(f64::NAN, |r| r.loss.total)
    );
    rknn.save(&out.join(RKNN_MODEL), &out.join(RKNN_SIDECAR))?;
    let path = out.join(RKNN_LOSS);
    let mut w = create(&path)?;
    rreport.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
    for row in &table.rows {
        println!("{}\t{:.6}\t(reference {:.6})", row.name, row.predicted, row.reference);
    }
    Ok(())
}

fn load_models(dir: &Path) -> Result<(PinnModel, RknnModel), CliError> {
    for f in [PINN_MODEL, PINN_SIDECAR, RKNN_MODEL, RKNN_SIDECAR] {
        if !dir.join(f).is_file() {
            return Err(CliError::Run(evpinn::Error::Config(format!(
                "model file {} not found; run `train` first",
                dir.join(f).display()
            ))));
        }
    }
    Ok((
        PinnModel::load(&dir.join(PINN_MODEL), &dir.join(PINN_SIDECAR))?,
        RknnModel::load(&dir.join(RKNN_MODEL), &dir.join(RKNN_SIDECAR))?,
    ))
}

fn check_scales(model: &PinnModel, log: &DriveLog) -> Result<(), CliError> {
    let s = &model.scales;
    let outside = |u: f64| !(-SCALE_SLACK..=1.0 + SCALE_SLACK).contains(&u);
    if log.t.iter().any(|&t| outside(s.norm_t(t))) || log.v.iter().any(|&v| outside(s.norm_v(v))) {
        return Err(CliError::Run(evpinn::Error::Config(format!(
            "scale mismatch: log spans t in [{:.1}, {:.1}] s, v up to {:.1} m/s; model trained on t in [{:.1}, {:.1}] s, v in [{:.1}, {:.1}] m/s",
            log.t.first().copied().unwrap_or(0.0),
            log.t.last().copied().unwrap_or(0.0),
            log.v.iter().copied().fold(0.0, f64::max),
            s.t_min,
            s.t_max,
            s.v_min,
            s.v_max
        ))));
    }
    Ok(())
}

/// The log to evaluate: `--log` when given, otherwise the configured data.
/// The flag marks whether it is the training log (so the validation window
/// applies).
fn eval_log(loaded: &LoadedConfig, preset: &VehiclePreset, log_flag: Option<&Path>) -> Result<(DriveLog, bool), CliError> {
    match log_flag {
        Some(p) => Ok((read_log(p, loaded.config.accel_window)?, false)),
        None => Ok((load_data(loaded, preset)?.0, true)),
    }
}

#[derive(Debug, Serialize)]
pub struct WindowMetrics {
    pub start_s: f64,
    pub end_s: f64,
    pub power_mse_normalized: f64,
    pub energy_true_j: f64,
    pub energy_pred_j: f64,
    pub energy_terminal_rel_error: f64,
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub samples: usize,
    pub power_mse_normalized: f64,
    pub energy_true_j: f64,
    pub energy_pred_j: f64,
    pub energy_terminal_rel_error: f64,
    /// The held-out window of the training split, when evaluating the
    /// training log.
    pub validation: Option<WindowMetrics>,
}

fn energies(rknn: &RknnModel, t: &[f64], p_true: &[f64], p_pred: &[f64]) -> Result<(EnergySeries, EnergySeries), CliError> {
    let truth = rk4_integrate(&PowerTrace::new(t.to_vec(), p_true.to_vec())?, rknn.dt, 0.0)?;
    let pred = predict_energy(rknn, &PowerTrace::new(t.to_vec(), p_pred.to_vec())?, 0.0)?;
    Ok((truth, pred))
}

fn rel(pred: f64, truth: f64) -> f64 {
    (pred - truth).abs() / truth.abs()
}

pub fn eval(loaded: &LoadedConfig, out: &Path, models: &Path, log_flag: Option<&Path>) -> Result<(), CliError> {
    let preset = loaded.config.vehicle.resolve()?;
    let (pinn, rknn) = load_models(models)?;
    let (log, is_training_log) = eval_log(loaded, &preset, log_flag)?;
    let p_true = log
        .power
        .clone()
        .ok_or_else(|| CliError::Run(evpinn::Error::Config("cannot evaluate without P".into())))?;
    check_scales(&pinn, &log)?;
    prepare_out(out, loaded)?;
    let exec = Execution::default();
    let p_pred = pinn.predict_series(&log.v, &log.t, exec)?;

    let path = out.join(POWER_PRED);
    let mut w = create(&path)?;
    let write_power = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t_s,p_true_w,p_pred_w")?;
        for i in 0..log.len() {
            writeln!(w, "{},{},{}", log.t[i], p_true[i], p_pred[i])?;
        }
        w.flush()
    };
    write_power(&mut w).map_err(|e| CliError::io(&path, e))?;

    let (e_true, e_pred) = energies(&rknn, &log.t, &p_true, &p_pred)?;
    let path = out.join(ENERGY_PRED);
    let mut w = create(&path)?;
    let write_energy = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t_s,e_rk4_true_j,e_pred_j")?;
        for i in 0..e_true.len() {
            writeln!(w, "{},{},{}", e_true.t[i], e_true.e[i], e_pred.e[i])?;
        }
        w.flush()
    };
    write_energy(&mut w).map_err(|e| CliError::io(&path, e))?;

    let mse = |range: std::ops::Range<usize>| {
        let n = range.len() as f64;
        range
            .map(|i| ((p_pred[i] - p_true[i]) / pinn.scales.p_scale).powi(2))
            .sum::<f64>()
            / n
    };
    let validation = if is_training_log {
        let mask = validation_window(log.len(), loaded.config.pinn.val_fraction, loaded.config.pinn.seed)
            .map_err(|e| CliError::Run(e.into()))?;
        let start = mask.iter().position(|&m| !m).unwrap_or(0);
        let end = start + mask.iter().filter(|&&m| !m).count();
        let (t, pt, pp) = (&log.t[start..end], &p_true[start..end], &p_pred[start..end]);
        let (wt, wp) = energies(&rknn, t, pt, pp)?;
        Some(WindowMetrics {
            start_s: log.t[start],
            end_s: log.t[end - 1],
            power_mse_normalized: mse(start..end),
            energy_true_j: wt.terminal(),
            energy_pred_j: wp.terminal(),
            energy_terminal_rel_error: rel(wp.terminal(), wt.terminal()),
        })
    } else {
        None
    };
    let metrics = Metrics {
        samples: log.len(),
        power_mse_normalized: mse(0..log.len()),
        energy_true_j: e_true.terminal(),
        energy_pred_j: e_pred.terminal(),
        energy_terminal_rel_error: rel(e_pred.terminal(), e_true.terminal()),
        validation,
    };
    let path = out.join(METRICS);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &metrics).map_err(|e| CliError::Run(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
    println!("{}", serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Run(e.into()))?);
    Ok(())
}

pub fn predict(loaded: &LoadedConfig, out: &Path, models: &Path, log_flag: Option<&Path>) -> Result<(), CliError> {
    let preset = loaded.config.vehicle.resolve()?;
    let (pinn, rknn) = load_models(models)?;
    let (log, _) = eval_log(loaded, &preset, log_flag)?;
    check_scales(&pinn, &log)?;
    prepare_out(out, loaded)?;
    let p_pred = pinn.predict_series(&log.v, &log.t, Execution::default())?;
    let e_pred = predict_energy(&rknn, &PowerTrace::new(log.t.clone(), p_pred.clone())?, 0.0)?;

    let path = out.join(POWER_PRED);
    let mut w = create(&path)?;
    let write_power = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "t_s,p_pred_w")?;
        for (t, p) in log.t.iter().zip(&p_pred) {
            writeln!(w, "{t},{p}")?;
        }
        w.flush()
    };
    write_power(&mut w).map_err(|e| CliError::io(&path, e))?;
    let path = out.join(ENERGY_PRED);
    let mut w = create(&path)?;
    e_pred.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
    println!("{}: terminal energy {:.1} J over {} samples", path.display(), e_pred.terminal(), log.len());
    Ok(())
}

pub fn models_dir(flag: Option<&Path>, out: &Path) -> PathBuf {
    flag.map_or_else(|| out.to_path_buf(), Path::to_path_buf)
}
