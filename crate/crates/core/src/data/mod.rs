//! Drive logs: ingestion, acceleration estimates, normalization, and
//! train/validation windows.

mod csv;
pub mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{load_log, save_log};
pub use synth::{synth_cycle, CycleSpec, Phase};

/// Default moving-average window for speed smoothing, samples.
pub const DEFAULT_SMOOTH_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("voltage_v and current_a must appear together")]
    UnpairedElectrical,
    #[error("non-increasing time at row {row} (line {line})")]
    NonIncreasingTime { row: usize, line: usize },
    #[error("negative speed at row {row}")]
    NegativeSpeed { row: usize },
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("log too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("smoothing window must be odd and >= 1, got {0}")]
    BadWindow(usize),
    #[error("no ground-truth power in log")]
    NoPower,
    #[error("no acceleration series in log")]
    NoAccel,
    #[error("degenerate log: power range is zero on the training rows")]
    ZeroPowerRange,
    #[error("training mask selects no rows")]
    EmptyTraining,
    #[error("validation fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("invalid cycle spec: {0}")]
    InvalidCycle(String),
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Time-indexed telemetry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveLog {
    /// Seconds, strictly increasing.
    pub t: Vec<f64>,
    /// Speed, m/s.
    pub v: Vec<f64>,
    pub voltage: Option<Vec<f64>>,
    pub current: Option<Vec<f64>>,
    /// Battery power, W.
    pub power: Option<Vec<f64>>,
    /// Acceleration, m/s².
    pub dvdt: Option<Vec<f64>>,
}

impl DriveLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.t.len();
        let optional = [&self.voltage, &self.current, &self.power, &self.dvdt];
        if self.v.len() != n || optional.iter().any(|s| s.as_ref().is_some_and(|s| s.len() != n)) {
            return Err(DataError::LengthMismatch);
        }
        if self.voltage.is_some() != self.current.is_some() {
            return Err(DataError::UnpairedElectrical);
        }
        for i in 1..n {
            if !(self.t[i] > self.t[i - 1]) {
                return Err(DataError::NonIncreasingTime {
                    row: i + 1,
                    line: i + 2,
                });
            }
        }
        if let Some(row) = self.v.iter().position(|&v| !(v >= 0.0)) {
            return Err(DataError::NegativeSpeed { row: row + 1 });
        }
        Ok(())
    }

    pub fn power(&self) -> Result<&[f64], DataError> {
        self.power.as_deref().ok_or(DataError::NoPower)
    }

    pub fn dvdt(&self) -> Result<&[f64], DataError> {
        self.dvdt.as_deref().ok_or(DataError::NoAccel)
    }

    /// Fills `dvdt` from the speed series when absent.
    pub fn ensure_accel(&mut self, window: usize) -> Result<(), DataError> {
        if self.dvdt.is_none() {
            self.dvdt = Some(estimate_accel(&self.t, &self.v, window)?);
        }
        Ok(())
    }

    /// Rows `range` as a new log.
    pub fn slice(&self, range: std::ops::Range<usize>) -> DriveLog {
        let cut = |s: &Option<Vec<f64>>| s.as_ref().map(|s| s[range.clone()].to_vec());
        DriveLog {
            t: self.t[range.clone()].to_vec(),
            v: self.v[range.clone()].to_vec(),
            voltage: cut(&self.voltage),
            current: cut(&self.current),
            power: cut(&self.power),
            dvdt: cut(&self.dvdt),
        }
    }
}

/// Moving-average smoothing followed by central differences.
///
/// The smoothing window shrinks symmetrically near the ends. Endpoints use
/// one-sided differences.
pub fn estimate_accel(t: &[f64], v: &[f64], window: usize) -> Result<Vec<f64>, DataError> {
    let n = t.len();
    if v.len() != n {
        return Err(DataError::LengthMismatch);
    }
    if n < 3 {
        return Err(DataError::TooShort { got: n, need: 3 });
    }
    if window == 0 || window % 2 == 0 {
        return Err(DataError::BadWindow(window));
    }
    let half = window / 2;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let s = &v[i - h..=i + h];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let mut a = Vec::with_capacity(n);
    a.push((smooth[1] - smooth[0]) / (t[1] - t[0]));
    for i in 1..n - 1 {
        a.push((smooth[i + 1] - smooth[i - 1]) / (t[i + 1] - t[i - 1]));
    }
    a.push((smooth[n - 1] - smooth[n - 2]) / (t[n - 1] - t[n - 2]));
    Ok(a)
}

/// Min-max scales for inputs and the symmetric power scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scales {
    pub t_min: f64,
    pub t_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub p_scale: f64,
}

fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.0
    }
}

fn from_unit(u: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + u * (hi - lo)
    } else {
        lo
    }
}

impl Scales {
    pub fn norm_t(&self, t: f64) -> f64 {
        unit(t, self.t_min, self.t_max)
    }

    pub fn norm_v(&self, v: f64) -> f64 {
        unit(v, self.v_min, self.v_max)
    }

    pub fn denorm_t(&self, u: f64) -> f64 {
        from_unit(u, self.t_min, self.t_max)
    }

    pub fn denorm_v(&self, u: f64) -> f64 {
        from_unit(u, self.v_min, self.v_max)
    }

    pub fn norm_p(&self, p: f64) -> f64 {
        p / self.p_scale
    }

    pub fn denorm_p(&self, u: f64) -> f64 {
        u * self.p_scale
    }
}

/// Network-ready samples: `(v_norm, t_norm)` inputs, normalized power
/// targets, and raw acceleration for the physics term.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    pub inputs: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
    pub dvdt: Vec<f64>,
    pub scales: Scales,
}

impl NormalizedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Speed in m/s for sample `i`.
    pub fn speed(&self, i: usize) -> f64 {
        self.scales.denorm_v(self.inputs[i][0])
    }

    pub fn select(&self, mask: &[bool], keep: bool) -> NormalizedDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| mask[i] == keep).collect();
        NormalizedDataset {
            inputs: idx.iter().map(|&i| self.inputs[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            dvdt: idx.iter().map(|&i| self.dvdt[i]).collect(),
            scales: self.scales,
        }
    }

    pub fn concat(&self, other: &NormalizedDataset) -> NormalizedDataset {
        let mut out = self.clone();
        out.inputs.extend_from_slice(&other.inputs);
        out.targets.extend_from_slice(&other.targets);
        out.dvdt.extend_from_slice(&other.dvdt);
        out
    }
}

/// Scales are fitted on rows where `training_mask` is true and applied to
/// every row.
pub fn normalize(log: &DriveLog, training_mask: &[bool]) -> Result<NormalizedDataset, DataError> {
    let power = log.power()?;
    let dvdt = log.dvdt()?;
    if training_mask.len() != log.len() {
        return Err(DataError::LengthMismatch);
    }
    let train: Vec<usize> = (0..log.len()).filter(|&i| training_mask[i]).collect();
    if train.is_empty() {
        return Err(DataError::EmptyTraining);
    }
    let fold = |s: &[f64], f: fn(f64, f64) -> f64, init: f64| train.iter().map(|&i| s[i]).fold(init, f);
    let scales = Scales {
        t_min: fold(&log.t, f64::min, f64::INFINITY),
        t_max: fold(&log.t, f64::max, f64::NEG_INFINITY),
        v_min: fold(&log.v, f64::min, f64::INFINITY),
        v_max: fold(&log.v, f64::max, f64::NEG_INFINITY),
        p_scale: train.iter().map(|&i| power[i].abs()).fold(0.0, f64::max),
    };
    if !(scales.p_scale > 0.0) {
        return Err(DataError::ZeroPowerRange);
    }
    Ok(NormalizedDataset {
        inputs: log
            .v
            .iter()
            .zip(&log.t)
            .map(|(&v, &t)| [scales.norm_v(v), scales.norm_t(t)])
            .collect(),
        targets: power.iter().map(|&p| scales.norm_p(p)).collect(),
        dvdt: dvdt.to_vec(),
        scales,
    })
}

/// One contiguous validation window covering `round(n * fraction)` rows,
/// placed by `seed`. Returns the training mask (true = training).
pub fn validation_window(n: usize, val_fraction: f64, seed: u64) -> Result<Vec<bool>, DataError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DataError::BadFraction(val_fraction));
    }
    if n < 2 {
        return Err(DataError::TooShort { got: n, need: 2 });
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..=n - n_val);
    Ok((0..n).map(|i| !(start..start + n_val).contains(&i)).collect())
}

/// Splits a dataset into (train, validation) with [`validation_window`].
pub fn split(
    dataset: &NormalizedDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(NormalizedDataset, NormalizedDataset), DataError> {
    let mask = validation_window(dataset.len(), val_fraction, seed)?;
    Ok((dataset.select(&mask, true), dataset.select(&mask, false)))
}

/// Train and validation sets sharing scales fitted on the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: NormalizedDataset,
    pub val: NormalizedDataset,
    pub scales: Scales,
    pub train_mask: Vec<bool>,
}

/// Window, normalize on the training rows, and partition.
pub fn prepare(log: &DriveLog, val_fraction: f64, seed: u64) -> Result<SplitDataset, DataError> {
    let mask = validation_window(log.len(), val_fraction, seed)?;
    let all = normalize(log, &mask)?;
    Ok(SplitDataset {
        train: all.select(&mask, true),
        val: all.select(&mask, false),
        scales: all.scales,
        train_mask: mask,
    })
}
