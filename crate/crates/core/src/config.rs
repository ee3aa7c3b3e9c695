//! Run configuration for batch experiments, read from TOML.
//!
//! Every section has defaults, so an empty file is a valid configuration.
//! Unknown keys are rejected, and `validate` checks everything before any
//! computation starts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::ImperfectionSpec;
use crate::mmi::{FpvDelta, MmiGeometry, MmiModel};
use crate::mzi::MziConfig;
use crate::optimizer::{FpvDistribution, McTarget, OptimizeConfig};
use crate::pcm::PhaseShifter;
use crate::pnn::{DatasetSpec, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mmi: MmiSection,
    pub mzi: MziSection,
    pub pcm: PcmSection,
    pub optimize: OptimizeSection,
    pub montecarlo: MonteCarloSection,
    pub pnn: PnnSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmiSection {
    pub geometry: MmiGeometry,
    pub model: MmiModel,
    pub fpv_range_nm: f64,
    pub fpv_grid: usize,
}

impl Default for MmiSection {
    fn default() -> Self {
        Self { geometry: MmiGeometry::NOMINAL, model: MmiModel::default(), fpv_range_nm: 5.0, fpv_grid: 11 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MziSection {
    pub device: MziConfig,
    pub transmission_points: usize,
}

impl Default for MziSection {
    fn default() -> Self {
        Self { device: MziConfig::default(), transmission_points: 101 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcmSection {
    pub shifter: PhaseShifter,
    pub wavelength_um: f64,
    pub phase_points: usize,
    pub sweep_pcm_thickness_um: Vec<f64>,
    pub sweep_width_um: Vec<f64>,
}

impl Default for PcmSection {
    fn default() -> Self {
        Self {
            shifter: PhaseShifter::default(),
            wavelength_um: 1.55,
            phase_points: 101,
            sweep_pcm_thickness_um: vec![0.03, 0.05, 0.07, 0.09],
            sweep_width_um: vec![0.45, 0.5, 0.55],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub start: MmiGeometry,
    pub search: OptimizeConfig,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self { start: MmiGeometry::NOMINAL, search: OptimizeConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub distribution: FpvDistribution,
    pub samples: usize,
    pub target: McTarget,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { distribution: FpvDistribution::default(), samples: 500, target: McTarget::Mzi }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PnnSection {
    pub sizes: Vec<usize>,
    /// Preset names (`ideal`, `pcm`, `conventional`) or keys of `custom_profiles`.
    pub profiles: Vec<String>,
    pub custom_profiles: BTreeMap<String, ImperfectionSpec>,
    pub trials: usize,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

impl Default for PnnSection {
    fn default() -> Self {
        Self {
            sizes: vec![8, 16, 32, 64],
            profiles: vec!["ideal".into(), "pcm".into(), "conventional".into()],
            custom_profiles: BTreeMap::new(),
            trials: 10,
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PnnSection {
    pub fn profile(&self, name: &str) -> Result<ImperfectionSpec> {
        match self.custom_profiles.get(name) {
            Some(spec) => Ok(*spec),
            None => ImperfectionSpec::preset(name),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.profiles.is_empty() || self.trials == 0 {
            return Err(Error::Config("pnn sizes, profiles and trials must be non-empty".into()));
        }
        for name in &self.profiles {
            self.profile(name)?.validate()?;
        }
        for spec in self.custom_profiles.values() {
            spec.validate()?;
        }
        for &n in &self.sizes {
            self.dataset.with_dimension(n).validate()?;
        }
        self.train.validate()
    }
}

fn config_err(section: &str, e: Error) -> Error {
    Error::Config(format!("[{section}] {e}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mmi = || -> Result<()> {
            self.mmi.geometry.validate()?;
            self.mmi.model.validate()?;
            FpvDelta::new(self.mmi.fpv_range_nm, self.mmi.fpv_range_nm)?;
            if self.mmi.fpv_range_nm < 0.0 || self.mmi.fpv_grid == 0 {
                return Err(Error::InvalidInput("FPV range must be ≥ 0 and the grid non-empty".into()));
            }
            Ok(())
        };
        mmi().map_err(|e| config_err("mmi", e))?;
        let mzi = || -> Result<()> {
            self.mzi.device.validate()?;
            if self.mzi.transmission_points < 2 {
                return Err(Error::InvalidInput("at least two transmission points are required".into()));
            }
            Ok(())
        };
        mzi().map_err(|e| config_err("mzi", e))?;
        let pcm = || -> Result<()> {
            self.pcm.shifter.geometry.validate()?;
            let lists = [&self.pcm.sweep_pcm_thickness_um, &self.pcm.sweep_width_um];
            if lists.iter().any(|l| l.is_empty() || l.iter().any(|v| !(*v > 0.0 && v.is_finite()))) {
                return Err(Error::InvalidInput("sweep values must be positive and non-empty".into()));
            }
            if !(self.pcm.wavelength_um > 0.0) || self.pcm.phase_points < 2 {
                return Err(Error::InvalidInput("wavelength must be positive and phase_points ≥ 2".into()));
            }
            Ok(())
        };
        pcm().map_err(|e| config_err("pcm", e))?;
        let optimize = || -> Result<()> {
            self.optimize.start.validate()?;
            self.optimize.search.validate()
        };
        optimize().map_err(|e| config_err("optimize", e))?;
        let mc = || -> Result<()> {
            self.montecarlo.distribution.validate()?;
            if self.montecarlo.samples == 0 {
                return Err(Error::InvalidInput("at least one sample is required".into()));
            }
            Ok(())
        };
        mc().map_err(|e| config_err("montecarlo", e))?;
        self.pnn.validate().map_err(|e| config_err("pnn", e))
    }
}
