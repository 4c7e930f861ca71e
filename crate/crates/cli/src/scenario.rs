//! Scenario files: TOML documents that pick parameters, grids and outputs
//! for one subcommand. Every table rejects unknown keys.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use qreset::params::ParamsConfig;
use qreset::{DriveConfig, Frequency, Preset, SystemParams};

use crate::CliError;

pub const ENV_PREFIX: &str = "QRESET_";
pub const ENV_PARAM_PREFIX: &str = "QRESET_PARAM_";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: Option<String>,
    /// Subcommand the file is written for; checked when present.
    pub target: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    /// Overrides of [`ParamsConfig`] keys.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub landscape: Option<LandscapeCfg>,
    pub dynamics: Option<DynamicsCfg>,
    pub calibrate: Option<CalibrateCfg>,
    pub readout: Option<ReadoutCfg>,
    pub limits: Option<LimitsCfg>,
    pub lab: Option<LabCfg>,
}

/// Either `{ start, stop, n }` or an explicit list.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Range { start: f64, stop: f64, n: usize },
    List(Vec<f64>),
}

impl Axis {
    pub fn values(&self, what: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Axis::Range { start, stop, n } => {
                if *n == 0 {
                    return Err(CliError::config(format!("grid `{what}` is empty")));
                }
                qreset::trajectory::linspace(*start, *stop, *n)
            }
            Axis::List(v) => v.clone(),
        };
        if v.is_empty() {
            return Err(CliError::config(format!("grid `{what}` is empty")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::config(format!("grid `{what}` has non-finite values")));
        }
        Ok(v)
    }
}

/// A preset name ("A", "B", "C") or explicit rates in MHz.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DriveSpec {
    Preset(String),
    Custom(CustomDrive),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDrive {
    pub name: String,
    pub omega_ef_mhz: f64,
    pub g_tilde_mhz: f64,
    #[serde(default)]
    pub delta_f0g1_mhz: f64,
    #[serde(default)]
    pub delta_ef_mhz: f64,
}

impl DriveSpec {
    pub fn resolve(&self) -> Result<(String, DriveConfig), CliError> {
        match self {
            DriveSpec::Preset(s) => Preset::parse(s)
                .map(|p| (p.name().to_string(), p.drives()))
                .ok_or_else(|| CliError::config(format!("unknown drive configuration `{s}` (expected A, B or C)"))),
            DriveSpec::Custom(c) => {
                if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                    return Err(CliError::config(format!("drive name `{}` must be alphanumeric", c.name)));
                }
                let d = DriveConfig {
                    delta_f0g1: Frequency::from_mhz(c.delta_f0g1_mhz),
                    delta_ef: Frequency::from_mhz(c.delta_ef_mhz),
                    ..DriveConfig::from_mhz(c.omega_ef_mhz, c.g_tilde_mhz)
                };
                d.validate().map_err(|e| CliError::config(e.to_string()))?;
                Ok((c.name.clone(), d))
            }
        }
    }
}

pub fn resolve_drives(specs: &[DriveSpec]) -> Result<Vec<(String, DriveConfig)>, CliError> {
    if specs.is_empty() {
        return Err(CliError::config("no drive configurations given"));
    }
    specs.iter().map(DriveSpec::resolve).collect()
}

fn all_presets() -> Vec<DriveSpec> {
    Preset::ALL.iter().map(|p| DriveSpec::Preset(p.name().into())).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeCfg {
    pub g_tilde_mhz: Axis,
    pub omega_ef_mhz: Axis,
    /// Defaults to the resonator linewidth in `params`.
    pub kappa_mhz: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Effective,
    Lindblad,
    #[default]
    Both,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsCfg {
    pub configs: Vec<DriveSpec>,
    pub model: ModelChoice,
    /// Initial transmon level, "e" or "f".
    pub initial: String,
    pub t_stop_ns: f64,
    pub n_points: usize,
    pub n_fock: usize,
    pub tol: f64,
    /// Master-equation horizon for the saturation value.
    pub saturation_horizon_us: f64,
    /// Times at which the summary reports P_exc.
    pub report_times_ns: Vec<f64>,
    /// Level for the settling time in the summary.
    pub settle_level: f64,
}

impl Default for DynamicsCfg {
    fn default() -> Self {
        DynamicsCfg {
            configs: all_presets(),
            model: ModelChoice::Both,
            initial: "e".into(),
            t_stop_ns: 1000.0,
            n_points: 201,
            n_fock: 3,
            tol: 1e-8,
            saturation_horizon_us: 2.0,
            report_times_ns: vec![280.0],
            settle_level: 0.01,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthCfg {
    pub stark_f0g1: Option<f64>,
    pub stark_ef: Option<f64>,
    pub slope_f0g1: Option<f64>,
    pub slope_ef: Option<f64>,
    pub eps_pi: Option<f64>,
    pub decoherence: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanCfg {
    pub amplitudes_f0g1: Option<Vec<f64>>,
    pub amplitudes_ef: Option<Vec<f64>>,
    pub step1_offsets_mhz: Option<Axis>,
    pub step2_times_us: Option<Axis>,
    pub step3_offsets_mhz: Option<Axis>,
    pub step4_times_us: Option<Axis>,
    pub shots: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateCfg {
    /// Ideal lab (no decoherence, no pulse errors) and exact populations.
    pub noiseless: bool,
    /// Analyse recorded data (step1.csv … step4.csv) instead of simulating.
    pub data_dir: Option<PathBuf>,
    /// Drive configuration to synthesise from the result.
    pub target: DriveSpec,
    /// Fit a constant term in the Stark models; on by default when noiseless.
    pub stark_offset: Option<bool>,
    pub truth: TruthCfg,
    pub plan: PlanCfg,
}

impl Default for CalibrateCfg {
    fn default() -> Self {
        CalibrateCfg {
            noiseless: false,
            data_dir: None,
            target: DriveSpec::Preset("A".into()),
            stark_offset: None,
            truth: TruthCfg::default(),
            plan: PlanCfg::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutCfg {
    pub reference_shots: usize,
    pub test_shots: usize,
    /// Points per axis of the (P_g, P_e) simplex grid.
    pub grid_n: usize,
    /// Independent test-shot draws averaged per grid point.
    pub repeats: usize,
    pub means: Option<[[f64; 2]; 3]>,
    pub sigma: Option<f64>,
    /// transition[m][s]: probability of landing in cluster m when prepared in s.
    pub transition: Option<[[f64; 3]; 3]>,
    pub herald_samples: usize,
    pub herald_p_tail: f64,
}

impl Default for ReadoutCfg {
    fn default() -> Self {
        ReadoutCfg {
            reference_shots: 40_000,
            test_shots: 40_000,
            grid_n: 5,
            repeats: 1,
            means: None,
            sigma: None,
            transition: None,
            herald_samples: 40_000,
            herald_p_tail: 1e-5,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsCfg {
    pub configs: Vec<DriveSpec>,
    /// Reset-resonator temperature for the resonator-limited estimate.
    pub t_rr_mk: f64,
    pub t_max_ms: f64,
    pub tol: f64,
}

impl Default for LimitsCfg {
    fn default() -> Self {
        LimitsCfg {
            configs: all_presets(),
            t_rr_mk: 50.0,
            t_max_ms: 1.0,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabCfg {
    pub calibration: bool,
    pub shots: bool,
    pub herald: bool,
    pub reference_shots: usize,
    pub herald_samples: usize,
    pub truth: TruthCfg,
    pub plan: PlanCfg,
}

impl Default for LabCfg {
    fn default() -> Self {
        LabCfg {
            calibration: true,
            shots: true,
            herald: true,
            reference_shots: 40_000,
            herald_samples: 40_000,
            truth: TruthCfg::default(),
            plan: PlanCfg::default(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid scenario: {e}")))
    }

    /// System parameters: defaults, then the `[params]` table, then
    /// `QRESET_PARAM_<KEY>` environment variables.
    pub fn system_params(&self, env: &[(String, String)]) -> Result<SystemParams, CliError> {
        let mut cfg = ParamsConfig::default();
        for (k, v) in &self.params {
            cfg.set(k, *v).map_err(|e| CliError::config(e.to_string()))?;
        }
        for (k, v) in env {
            if let Some(key) = k.strip_prefix(ENV_PARAM_PREFIX) {
                let key = key.to_ascii_lowercase();
                let val: f64 = v
                    .parse()
                    .map_err(|_| CliError::config(format!("{k}: `{v}` is not a number")))?;
                cfg.set(&key, val).map_err(|e| CliError::config(format!("{k}: {e}")))?;
            }
        }
        cfg.to_params().map_err(|e| CliError::config(e.to_string()))
    }
}

pub fn apply_truth(t: &mut qreset::lab::LabTruth, c: &TruthCfg) {
    if let Some(v) = c.stark_f0g1 {
        t.stark_f0g1 = v;
    }
    if let Some(v) = c.stark_ef {
        t.stark_ef = v;
    }
    if let Some(v) = c.slope_f0g1 {
        t.slope_f0g1 = v;
    }
    if let Some(v) = c.slope_ef {
        t.slope_ef = v;
    }
    if let Some(v) = c.eps_pi {
        t.eps_pi = v;
    }
    if let Some(v) = c.decoherence {
        t.decoherence = v;
    }
}

pub fn apply_plan(p: &mut qreset::lab::CalibrationPlan, c: &PlanCfg) -> Result<(), CliError> {
    if let Some(v) = &c.amplitudes_f0g1 {
        p.amplitudes_f0g1 = v.clone();
    }
    if let Some(v) = &c.amplitudes_ef {
        p.amplitudes_ef = v.clone();
    }
    if let Some(a) = &c.step1_offsets_mhz {
        p.step1_offsets_mhz = a.values("step1_offsets_mhz")?;
    }
    if let Some(a) = &c.step2_times_us {
        p.step2_times_us = a.values("step2_times_us")?;
    }
    if let Some(a) = &c.step3_offsets_mhz {
        p.step3_offsets_mhz = a.values("step3_offsets_mhz")?;
    }
    if let Some(a) = &c.step4_times_us {
        p.step4_times_us = a.values("step4_times_us")?;
    }
    if let Some(s) = c.shots {
        p.shots = s;
    }
    p.validate().map_err(|e| CliError::config(e.to_string()))
}
