//! Run configuration file.

use std::path::{Path, PathBuf};

use evpinn::data::CycleSpec;
use evpinn::dynamics::{PhysParams, VehiclePreset};
use evpinn::pinn::PinnConfig;
use evpinn::rknn::RknnConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VehicleSpec {
    /// `"model3lr"` or `"modelS"`.
    Preset(String),
    Inline(VehiclePreset),
}

impl Default for VehicleSpec {
    fn default() -> Self {
        VehicleSpec::Preset("model3lr".into())
    }
}

impl VehicleSpec {
    pub fn resolve(&self) -> Result<VehiclePreset, CliError> {
        let preset = match self {
            VehicleSpec::Preset(name) => VehiclePreset::by_name(name).map_err(|e| CliError::Config(e.to_string()))?,
            VehicleSpec::Inline(p) => p.clone(),
        };
        preset.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(preset)
    }
}

fn default_truth() -> PhysParams {
    PhysParams {
        eta: 0.72,
        mu: 0.65,
        mass: 1900.0,
        c_rr: 0.010,
        c_d: 0.24,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default)]
    pub cycle: CycleSpec,
    /// Generating parameters.
    #[serde(default = "default_truth")]
    pub truth: PhysParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// CSV log with `t_s,v_mps` and `voltage_v,current_a` or `p_w`.
    Path(PathBuf),
    Synthetic(SyntheticData),
}

fn default_window() -> usize {
    evpinn::data::DEFAULT_SMOOTH_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub vehicle: VehicleSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub pinn: PinnConfig,
    #[serde(default)]
    pub rknn: RknnConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Speed smoothing window for logs without an acceleration column.
    #[serde(default = "default_window")]
    pub accel_window: usize,
}

/// A parsed config and the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.pinn.validate().map_err(|e| CliError::Config(e.to_string()))?;
        config.rknn.validate().map_err(|e| CliError::Config(e.to_string()))?;
        config.vehicle.resolve()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            text,
            base_dir,
        })
    }

    /// Relative data paths resolve against the config file's directory.
    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        match (flag, &self.config.output_dir) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve_path(p)),
            (None, None) => Err(CliError::Config("no output directory: pass --out or set output_dir".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"data": {"synthetic": {}}}"#).unwrap();
        assert_eq!(c.vehicle, VehicleSpec::Preset("model3lr".into()));
        assert_eq!(c.pinn, PinnConfig::default());
        assert_eq!(c.accel_window, 5);
        match c.data {
            DataSpec::Synthetic(s) => {
                assert_eq!(s.cycle, CycleSpec::default());
                assert_eq!(s.truth, default_truth());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"data": {"synthetic": {}}, "extra": 1}"#,
            r#"{"data": {"synthetic": {"noise": 0.1}}}"#,
            r#"{"data": {"synthetic": {}}, "pinn": {"lamda": 0.1}}"#,
            r#"{"data": {"synthetic": {}}, "rknn": {"learning_rate": 0.1}}"#,
            r#"{"data": {"file": "x.csv"}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn vehicle_forms() {
        let c: RunConfig = serde_json::from_str(r#"{"vehicle": "modelS", "data": {"path": "a.csv"}}"#).unwrap();
        assert_eq!(c.vehicle.resolve().unwrap().initial.mass, 2250.0);
        let inline = serde_json::to_value(VehiclePreset::model3lr()).unwrap();
        let text = serde_json::json!({"vehicle": inline, "data": {"path": "a.csv"}}).to_string();
        let c: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c.vehicle.resolve().unwrap(), VehiclePreset::model3lr());
        let c: RunConfig = serde_json::from_str(r#"{"vehicle": "roadster", "data": {"path": "a.csv"}}"#).unwrap();
        assert!(c.vehicle.resolve().is_err());
    }
}
