use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::construction::{RefineOptions, RefineRule};
use crate::dimension::WeightVector;
use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::sequences::SequenceSpec;
use crate::systems::{System, SystemConfig};

pub const CAP_ENV: &str = "LIMDIM_CAP";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    General,
    Real,
    DoublyExponential,
    Rynne,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    #[serde(with = "exact::rational_vec")]
    pub taus: Vec<Rational>,
    /// Defaults to the system's Ahlfors exponents, or 1 without a system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counting {
    #[default]
    Enumerate,
    SelfSimilar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    pub axis: usize,
    pub window: usize,
    pub samples: usize,
    pub seed: u64,
    pub strict_containment: bool,
    pub rule: RefineRule,
    pub counting: Counting,
    /// Hölder exponent; defaults to the finite-depth formula minus `holder_margin`.
    pub holder_s: Option<f64>,
    pub holder_margin: f64,
    pub holder_depths: Option<Vec<usize>>,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            axis: 1,
            window: 3,
            samples: 1000,
            seed: 0,
            strict_containment: false,
            rule: RefineRule::Cover,
            counting: Counting::Enumerate,
            holder_s: None,
            holder_margin: 0.05,
            holder_depths: None,
        }
    }
}

impl EstimatorOptions {
    pub fn refine(&self) -> RefineOptions {
        RefineOptions {
            rule: self.rule,
            strict_containment: self.strict_containment,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub layers: Option<PathBuf>,
}

/// One JSON document driving every subcommand; each uses the fragments it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub sequence: Option<SequenceSpec>,
    #[serde(default)]
    pub weights: Option<Weights>,
    /// Construction depth; defaults to the sequence depth.
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    /// Fixed `alpha` for `dim`; otherwise taken from the sequence.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Growth exponent for the doubly exponential mode; otherwise taken from the sequence.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub output: Outputs,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Applies `LIMDIM_CAP` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(CAP_ENV) {
            let cap: u64 = v
                .trim()
                .parse()
                .map_err(|_| Error::validation(format!("{CAP_ENV} must be a positive integer, got {v:?}")))?;
            if cap == 0 {
                return Err(Error::validation(format!("{CAP_ENV} must be positive")));
            }
            if let Some(s) = self.system.as_mut() {
                s.cap = cap;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.system {
            System::new(s.clone())?;
        }
        if let Some(q) = &self.sequence {
            q.validate()?;
        }
        if let Some(w) = &self.weights {
            if w.taus.is_empty() {
                return Err(Error::validation("weights.taus is empty"));
            }
            if let Some(s) = &self.system {
                if w.taus.len() != s.n {
                    return Err(Error::validation(format!(
                        "{} exponents given for a system with n = {}",
                        w.taus.len(),
                        s.n
                    )));
                }
            }
        }
        if self.depth == Some(0) {
            return Err(Error::validation("depth must be positive"));
        }
        if self.estimator.axis == 0 {
            return Err(Error::validation("estimator.axis is 1-based"));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<System> {
        let cfg = self
            .system
            .clone()
            .ok_or_else(|| Error::validation("config has no system"))?;
        System::new(cfg)
    }

    pub fn sequence(&self) -> Result<&SequenceSpec> {
        self.sequence
            .as_ref()
            .ok_or_else(|| Error::validation("config has no sequence"))
    }

    pub fn taus(&self) -> Result<&[Rational]> {
        self.weights
            .as_ref()
            .map(|w| w.taus.as_slice())
            .ok_or_else(|| Error::validation("config has no weights"))
    }

    pub fn taus_f64(&self) -> Result<Vec<f64>> {
        Ok(self.taus()?.iter().map(exact::to_f64).collect())
    }

    pub fn weight_vector(&self) -> Result<WeightVector> {
        let taus = self.taus_f64()?;
        let deltas = match (self.weights.as_ref().and_then(|w| w.deltas.clone()), &self.system) {
            (Some(d), _) => d,
            (None, Some(_)) => self.system()?.deltas(),
            (None, None) => vec![1.0; taus.len()],
        };
        WeightVector::new(taus, deltas)
    }

    pub fn depth(&self) -> Result<usize> {
        Ok(self.depth.unwrap_or(self.sequence()?.depth()))
    }
}
