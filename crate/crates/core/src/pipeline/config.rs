use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LagConfig;
use crate::hilp::HilpConfig;
use crate::impute::ImputeOptions;
use crate::ingest::parse_utc;
use crate::models::{ModelKind, TrainConfig};
use crate::rebalance::RebalanceConfig;

/// Raw input files, relative to the directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub outages: PathBuf,
    pub weather: PathBuf,
    pub census: PathBuf,
    pub infrastructure: PathBuf,
    pub storms: PathBuf,
}

/// Hour grid of the panel; when absent it spans the outage data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelRange {
    pub start: Option<String>,
    /// Exclusive.
    pub end: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub lag: LagConfig,
    pub graph_radius_miles: f64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            lag: LagConfig::default(),
            graph_radius_miles: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub kinds: Vec<ModelKind>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kinds: ModelKind::ALL.to_vec(),
            train: TrainConfig::default(),
        }
    }
}

/// The test event kept out of training: one county over `[start, end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub event_id: String,
    pub county_id: String,
    pub start: String,
    /// Inclusive last hour.
    pub end: String,
}

impl Holdout {
    pub fn window(&self) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
        let parse = |s: &str| parse_utc(s).ok_or_else(|| Error::Config(format!("holdout: bad timestamp {s:?}")));
        let (a, b) = (parse(&self.start)?, parse(&self.end)?);
        if b < a {
            return Err(Error::Config("holdout: end before start".into()));
        }
        Ok((a, b))
    }
}

/// Everything the pipeline stages need. `seed` is mandatory and drives every
/// stochastic stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_offset")]
    pub utc_offset_hours: i32,
    pub inputs: InputPaths,
    #[serde(default)]
    pub panel: PanelRange,
    #[serde(default)]
    pub impute: ImputeOptions,
    #[serde(default)]
    pub hilp: HilpConfig,
    #[serde(default)]
    pub features: FeatureSettings,
    #[serde(default)]
    pub rebalance: RebalanceConfig,
    #[serde(default)]
    pub models: ModelSettings,
    pub holdout: Holdout,
}

fn default_offset() -> i32 {
    -5
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Push the global seed into every stochastic block and the shared UTC
    /// offset into the HILP block, then validate.
    pub fn resolved(mut self) -> Result<Self> {
        self.rebalance.seed = self.seed;
        self.models.train.forest.seed = self.seed;
        self.models.train.adaboost.seed = self.seed;
        self.models.train.lstm.seed = self.seed;
        self.hilp.utc_offset_hours = self.utc_offset_hours;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.impute.k == 0 {
            return Err(Error::Config("impute.k must be positive".into()));
        }
        if !(self.hilp.alpha > 0.0 && self.hilp.alpha <= 1.0) {
            return Err(Error::Config("hilp.alpha must lie in (0, 1]".into()));
        }
        if self.features.lag.n == 0 {
            return Err(Error::Config("features.lag.n must be positive".into()));
        }
        if !(self.features.graph_radius_miles >= 0.0) {
            return Err(Error::Config("features.graph_radius_miles must be >= 0".into()));
        }
        if self.models.kinds.is_empty() {
            return Err(Error::Config("models.kinds is empty".into()));
        }
        self.rebalance.validate()?;
        self.models.train.validate()?;
        self.holdout.window()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        super::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
