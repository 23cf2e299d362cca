//! Stage orchestration around plain on-disk artifacts.
//!
//! Every stage reads the artifacts of earlier stages, writes its own under
//! `<out>/<stage>/`, and records a manifest in `<out>/manifests/` holding
//! the config hash, the seed and SHA-256 digests of everything it read and
//! wrote. A stage refuses to run when an artifact it needs is missing
//! ("run X first") or no longer matches the digest its producer recorded.
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | ingest | raw CSV inputs | `panel.csv`, `statics.csv`, `storms.csv` |
//! | impute | ingest | `panel.csv` (gaps filled, flagged) |
//! | hilp | impute, ingest | `extreme_set.csv`, `summary.json` |
//! | features | impute, hilp | `train.csv`, `event.csv` (+ manifests), `graph_nodes.csv`, `graph_edges.csv` |
//! | rebalance | features | `train.csv` (+ manifest) |
//! | train | rebalance | `model_<kind>.json` |
//! | evaluate | train, features | `report_<kind>.json` |
//! | report | evaluate, train | `series_<kind>.csv/.json`, `importance_forest.csv/.json`, `summary.json` |

pub mod config;
mod stages;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use config::{FeatureSettings, Holdout, InputPaths, ModelSettings, PanelRange, PipelineConfig};
pub use synth::{outage_response, synthesize, SynthOptions};

pub const MANIFEST_FORMAT: &str = "hilp-manifest/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Impute,
    Hilp,
    Features,
    Rebalance,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Impute,
        Stage::Hilp,
        Stage::Features,
        Stage::Rebalance,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Impute => "impute",
            Stage::Hilp => "hilp",
            Stage::Features => "features",
            Stage::Rebalance => "rebalance",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Bumped whenever a stage's output format or semantics change.
    pub fn version(self) -> u32 {
        1
    }

    pub fn manifest_path(self) -> String {
        format!("manifests/{}.json", self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory (or to the config directory for raw
    /// inputs).
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub format: String,
    pub stage: Stage,
    pub stage_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Small human-readable facts about the run (row counts, thresholds).
    pub summary: BTreeMap<String, String>,
}

impl StageManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// A resolved config bound to its input and output directories.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub config: PipelineConfig,
    /// Raw input paths are relative to this directory.
    pub config_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Workspace {
    pub fn new(config: PipelineConfig, config_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(Workspace {
            config: config.resolved()?,
            config_dir: config_dir.into(),
            out_dir: out_dir.into(),
        })
    }

    /// Load a config file; outputs default to its directory.
    pub fn open(config_path: impl AsRef<Path>, out_dir: Option<PathBuf>) -> Result<Self> {
        let config_path = config_path.as_ref();
        let config = PipelineConfig::load(config_path)?;
        let dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = out_dir.unwrap_or_else(|| dir.clone());
        Workspace::new(config, dir, out)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    pub fn manifest(&self, stage: Stage) -> Result<StageManifest> {
        let path = self.path(&stage.manifest_path());
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: stage.name().into(),
                path,
            });
        }
        StageManifest::load(path)
    }
}

/// Bookkeeping for one stage execution.
pub(crate) struct StageRun<'a> {
    ws: &'a Workspace,
    stage: Stage,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
    summary: BTreeMap<String, String>,
    upstream: BTreeMap<Stage, StageManifest>,
}

impl<'a> StageRun<'a> {
    pub(crate) fn new(ws: &'a Workspace, stage: Stage) -> Self {
        StageRun {
            ws,
            stage,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: BTreeMap::new(),
            upstream: BTreeMap::new(),
        }
    }

    pub(crate) fn config(&self) -> &'a PipelineConfig {
        &self.ws.config
    }

    /// Path of an artifact written by `producer`, verified against the
    /// digest `producer` recorded.
    pub(crate) fn artifact(&mut self, producer: Stage, rel: &str) -> Result<PathBuf> {
        if !self.upstream.contains_key(&producer) {
            let m = self.ws.manifest(producer)?;
            self.upstream.insert(producer, m);
        }
        let manifest = &self.upstream[&producer];
        let path = self.ws.path(rel);
        let missing = || Error::MissingArtifact {
            stage: producer.name().into(),
            path: path.clone(),
        };
        let recorded = manifest.outputs.iter().find(|f| f.path == rel).ok_or_else(missing)?;
        if !path.exists() {
            return Err(missing());
        }
        let digest = hash_file(&path)?;
        if digest != recorded.sha256 {
            return Err(Error::Tampered {
                stage: producer.name().into(),
                path,
            });
        }
        self.inputs.push(FileDigest {
            path: rel.to_string(),
            sha256: digest,
        });
        Ok(path)
    }

    /// A raw input named in the config, relative to the config directory.
    pub(crate) fn raw_input(&mut self, rel: &Path) -> Result<PathBuf> {
        let path = self.ws.config_dir.join(rel);
        let digest = hash_file(&path)?;
        self.inputs.push(FileDigest {
            path: rel.to_string_lossy().into_owned(),
            sha256: digest,
        });
        Ok(path)
    }

    /// Reserve an output path under the output directory.
    pub(crate) fn output(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.ws.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.outputs.push(rel.to_string());
        Ok(path)
    }

    pub(crate) fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.insert(key.to_string(), value.to_string());
    }

    pub(crate) fn finish(self) -> Result<StageManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|rel| {
                Ok(FileDigest {
                    path: rel.clone(),
                    sha256: hash_file(self.ws.path(rel))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = StageManifest {
            format: MANIFEST_FORMAT.into(),
            stage: self.stage,
            stage_version: self.stage.version(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.ws.config.hash(),
            seed: self.ws.config.seed,
            inputs: self.inputs,
            outputs,
            summary: self.summary,
        };
        let rel = self.stage.manifest_path();
        let path = self.ws.path(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn run_stage(ws: &Workspace, stage: Stage) -> Result<StageManifest> {
    let run = StageRun::new(ws, stage);
    match stage {
        Stage::Ingest => stages::ingest(run),
        Stage::Impute => stages::impute(run),
        Stage::Hilp => stages::hilp(run),
        Stage::Features => stages::features(run),
        Stage::Rebalance => stages::rebalance(run),
        Stage::Train => stages::train(run),
        Stage::Evaluate => stages::evaluate(run),
        Stage::Report => stages::report(run),
    }
}

/// Run every stage in order.
pub fn run_all(ws: &Workspace) -> Result<Vec<StageManifest>> {
    Stage::ALL.into_iter().map(|s| run_stage(ws, s)).collect()
}
