use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel_model::SystemConfig;
use crate::error::{Error, Result};
use crate::pipeline::{Phase2Design, ReferenceCsi};
use crate::training_design::{Case2Mode, RankCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "overhead_vs_N", alias = "overhead_vs_n")]
    OverheadVsN,
    #[serde(rename = "overhead_vs_K", alias = "overhead_vs_k")]
    OverheadVsK,
    #[serde(rename = "mse_design_phase1")]
    MseDesignPhase1,
    #[serde(rename = "mse_design_phase2")]
    MseDesignPhase2,
    #[serde(rename = "mse_vs_allocation")]
    MseVsAllocation,
    #[serde(rename = "mse_single_user")]
    MseSingleUser,
    #[serde(rename = "mse_multi_user")]
    MseMultiUser,
}

impl ExperimentKind {
    pub fn is_overhead(self) -> bool {
        matches!(self, Self::OverheadVsN | Self::OverheadVsK)
    }
}

/// Parameter varied across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    N,
    K,
    M1,
    M2,
    TxPowerDbm,
    NoisePowerDbm,
    /// Normalized noise power, overriding the dBm values.
    Sigma2,
    I1,
    I2,
    I3,
    TotalPilots,
    ElementsPerSubsurface,
}

impl SweepParameter {
    fn is_integer(self) -> bool {
        !matches!(self, Self::TxPowerDbm | Self::NoisePowerDbm | Self::Sigma2)
    }
}

fn default_trials() -> usize {
    1000
}

/// A flat JSON experiment description. System parameters sit at the top level
/// next to the experiment fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub sweep_parameter: Option<SweepParameter>,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(default)]
    pub i1: Option<usize>,
    #[serde(default)]
    pub i2: Option<usize>,
    #[serde(default)]
    pub i3: Option<usize>,
    /// Single-user training budget shared by Phases I-II (and by the
    /// decoupled single-user stages in the comparison experiments).
    #[serde(default)]
    pub total_pilots: Option<usize>,
    #[serde(default)]
    pub phase2_design: Phase2Design,
    #[serde(default)]
    pub case2_mode: Case2Mode,
    #[serde(default)]
    pub phase2_case: Option<RankCase>,
    #[serde(default)]
    pub reference_csi: ReferenceCsi,
    #[serde(default)]
    pub sigma2_override: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind, system: SystemConfig) -> Self {
        Self {
            experiment,
            sweep_parameter: None,
            sweep_values: Vec::new(),
            trials: default_trials(),
            system,
            i1: None,
            i2: None,
            i3: None,
            total_pilots: None,
            phase2_design: Phase2Design::Optimal,
            case2_mode: Case2Mode::Random,
            phase2_case: None,
            reference_csi: ReferenceCsi::Estimated,
            sigma2_override: None,
            output: None,
        }
    }

    pub fn with_sweep(mut self, parameter: SweepParameter, values: &[f64]) -> Self {
        self.sweep_parameter = Some(parameter);
        self.sweep_values = values.to_vec();
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Sweep values, or a single point at 0 when nothing is swept.
    pub fn points(&self) -> Vec<f64> {
        if self.sweep_parameter.is_none() {
            vec![0.0]
        } else {
            self.sweep_values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(p) = self.sweep_parameter {
            if self.sweep_values.is_empty() {
                return bad("sweep_values must not be empty when sweep_parameter is set".into());
            }
            for v in &self.sweep_values {
                if !v.is_finite() || (p.is_integer() && (v.fract() != 0.0 || *v < 0.0)) {
                    return bad(format!("sweep value {v} is not valid for {p:?}"));
                }
            }
        }
        if let Some(s) = self.sigma2_override {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("sigma2_override must be finite and non-negative".into());
            }
        }
        if self.experiment == ExperimentKind::MseVsAllocation && self.total_pilots.is_none() {
            return bad("mse_vs_allocation needs total_pilots".into());
        }
        for v in self.points() {
            self.point(v)?.system.validate()?;
        }
        Ok(())
    }

    /// Resolved parameters at one sweep value.
    pub fn point(&self, value: f64) -> Result<SweepPoint> {
        let mut p = SweepPoint {
            value,
            system: self.system.clone(),
            sigma2: self.sigma2_override,
            i1: self.i1,
            i2: self.i2,
            i3: self.i3,
            total_pilots: self.total_pilots,
        };
        let int = value as usize;
        match self.sweep_parameter {
            None => {}
            Some(SweepParameter::N) => p.system.n = int,
            Some(SweepParameter::K) => p.system.k = int,
            Some(SweepParameter::M1) => p.system.m1 = int,
            Some(SweepParameter::M2) => p.system.m2 = int,
            Some(SweepParameter::TxPowerDbm) => p.system.tx_power_dbm = value,
            Some(SweepParameter::NoisePowerDbm) => p.system.noise_power_dbm = value,
            Some(SweepParameter::Sigma2) => p.sigma2 = Some(value),
            Some(SweepParameter::I1) => p.i1 = Some(int),
            Some(SweepParameter::I2) => p.i2 = Some(int),
            Some(SweepParameter::I3) => p.i3 = Some(int),
            Some(SweepParameter::TotalPilots) => p.total_pilots = Some(int),
            Some(SweepParameter::ElementsPerSubsurface) => p.system.elements_per_subsurface = int,
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub system: SystemConfig,
    pub sigma2: Option<f64>,
    pub i1: Option<usize>,
    pub i2: Option<usize>,
    pub i3: Option<usize>,
    pub total_pilots: Option<usize>,
}

impl SweepPoint {
    pub fn sigma2(&self) -> f64 {
        self.sigma2.unwrap_or_else(|| self.system.sigma2())
    }
}
