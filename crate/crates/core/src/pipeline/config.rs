use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::automata::{template, Dfa};
use crate::error::{Error, Result};
use crate::geometry::{HyperRect, RegionOfInterest};
use crate::imdp::ViOptions;
use crate::refine::RefinementConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecConfig {
    Template {
        template: String,
        labels: BTreeMap<String, String>,
    },
    File {
        dfa: PathBuf,
    },
}

impl SpecConfig {
    pub fn reach_avoid(obstacle: &str, goal: &str) -> Self {
        SpecConfig::Template {
            template: "reach_avoid".into(),
            labels: BTreeMap::from([("O".into(), obstacle.into()), ("D".into(), goal.into())]),
        }
    }

    pub fn automaton(&self) -> Result<Dfa> {
        match self {
            SpecConfig::Template { template: name, labels } => template(name, labels),
            SpecConfig::File { dfa } => Dfa::load(dfa),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Trials per start cell; 0 disables validation.
    pub trials: usize,
    /// Number of start cells, sampled without replacement.
    pub regions: usize,
    /// Runs undecided after this many steps count as failures for the
    /// upper-bound check.
    pub horizon: usize,
    /// Longer horizon used for the lower-bound check.
    pub long_horizon: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            trials: 0,
            regions: 20,
            horizon: 200,
            long_horizon: 1000,
        }
    }
}

/// Everything a pipeline run needs, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Network file; relative paths resolve against the config file.
    pub network: PathBuf,
    pub domain: DomainConfig,
    pub covariance: Vec<Vec<f64>>,
    pub grid: Vec<usize>,
    #[serde(default)]
    pub regions: Vec<RegionOfInterest>,
    pub spec: SpecConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Tighter upper bounds for targets overlapping the post image.
    #[serde(default)]
    pub exact_upper: bool,
    #[serde(default)]
    pub validation: ValidationConfig,
}

fn default_tolerance() -> f64 {
    ViOptions::default().tolerance
}

fn default_max_sweeps() -> usize {
    ViOptions::default().max_sweeps
}

fn default_threshold() -> f64 {
    0.95
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "pipeline config".into(),
            message: e.to_string(),
        })
    }

    /// Reads a config and resolves relative file paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.network.is_relative() {
            config.network = base.join(&config.network);
        }
        if let SpecConfig::File { dfa } = &mut config.spec {
            if dfa.is_relative() {
                *dfa = base.join(&*dfa);
            }
        }
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn dim(&self) -> usize {
        self.domain.lo.len()
    }

    pub fn domain_rect(&self) -> Result<HyperRect> {
        HyperRect::new(self.domain.lo.clone(), self.domain.hi.clone())
    }

    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.covariance.len();
        if self.covariance.iter().any(|r| r.len() != n) {
            return Err(Error::Config("covariance must be square".into()));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.covariance[i][j]))
    }

    pub fn vi_options(&self) -> ViOptions {
        ViOptions {
            tolerance: self.tolerance,
            max_sweeps: self.max_sweeps,
        }
    }

    /// Dimension consistency between domain, covariance, grid and regions.
    pub fn validate(&self, network_dim: usize) -> Result<()> {
        let n = self.dim();
        let check = |what: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} has dimension {len}, domain has {n}")))
            }
        };
        check("domain upper corner", self.domain.hi.len())?;
        check("network", network_dim)?;
        check("covariance", self.covariance.len())?;
        check("grid", self.grid.len())?;
        for r in &self.regions {
            check(&format!("region '{}'", r.label), r.lo.len())?;
            check(&format!("region '{}'", r.label), r.hi.len())?;
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        self.refinement.validate()
    }
}
