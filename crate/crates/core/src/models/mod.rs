//! From-scratch regressors: random forest, AdaBoost.R2 and a single-layer
//! LSTM, plus a versioned JSON container for trained models.

pub mod adaboost;
pub mod forest;
pub mod lstm;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use adaboost::{predict_adaboost, train_adaboost, BoostConfig, BoostLoss, BoostModel};
pub use forest::{forest_importance, predict_forest, train_forest, ForestConfig, ForestModel};
pub use lstm::{predict_lstm, train_lstm, train_lstm_matrix, Activation, LstmConfig, LstmModel, LstmNet};
pub use tree::{Node, RegressionTree, TreeParams};

pub const MODEL_FORMAT: &str = "hilp-model/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Adaboost,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Adaboost, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Adaboost => "adaboost",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" | "rf" => Ok(ModelKind::Forest),
            "adaboost" => Ok(ModelKind::Adaboost),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Hyperparameters for every model kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub forest: ForestConfig,
    pub adaboost: BoostConfig,
    pub lstm: LstmConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.forest.n_estimators == 0 || self.adaboost.n_estimators == 0 {
            return bad("estimator counts must be positive");
        }
        if self.forest.min_samples_leaf == 0 || self.adaboost.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if self.adaboost.learning_rate.is_nan() || self.adaboost.learning_rate <= 0.0 {
            return bad("adaboost learning_rate must be > 0");
        }
        if self.lstm.learning_rate.is_nan() || self.lstm.learning_rate <= 0.0 {
            return bad("lstm learning_rate must be > 0");
        }
        if self.lstm.hidden == 0 || self.lstm.batch_size == 0 {
            return bad("lstm hidden and batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Forest(ForestModel),
    Adaboost(BoostModel),
    Lstm(LstmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Adaboost(_) => ModelKind::Adaboost,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// Predictions in original units for rows of a feature matrix.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Forest(m) => m.predict(rows),
            TrainedModel::Adaboost(m) => m.predict(rows),
            TrainedModel::Lstm(m) => m.predict_rows(rows),
        }
    }

    pub fn importance(&self) -> Option<Vec<(String, f64)>> {
        match self {
            TrainedModel::Forest(m) => Some(m.importance()),
            _ => None,
        }
    }
}

pub fn train_model(kind: ModelKind, m: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    Ok(match kind {
        ModelKind::Forest => TrainedModel::Forest(train_forest(m, &cfg.forest)?),
        ModelKind::Adaboost => TrainedModel::Adaboost(train_adaboost(m, &cfg.adaboost)?),
        ModelKind::Lstm => TrainedModel::Lstm(train_lstm_matrix(m, &cfg.lstm)?),
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: TrainedModel,
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        model: model.clone(),
    };
    let json = serde_json::to_vec(&file)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::ModelFormat(format!(
            "{}: expected format {MODEL_FORMAT}, found {}",
            path.display(),
            file.format
        )));
    }
    Ok(file.model)
}

pub(crate) fn check_training(m: &FeatureMatrix) -> Result<()> {
    if m.len() < 2 || m.n_features() == 0 {
        return Err(Error::EmptyMatrix(format!(
            "training needs at least 2 rows and 1 feature, got {} x {}",
            m.len(),
            m.n_features()
        )));
    }
    Ok(())
}

pub(crate) fn check_width(rows: &[Vec<f64>], width: usize) -> Result<()> {
    match rows.iter().find(|r| r.len() != width) {
        Some(r) => Err(Error::DimensionMismatch {
            expected: width,
            got: r.len(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::features::{FeatureLayout, FeatureMatrix, LagConfig};

    pub fn matrix(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> FeatureMatrix {
        let d = rows[0].len();
        let mut m = FeatureMatrix::empty(FeatureLayout::new(LagConfig::default()).unwrap());
        m.columns = (0..d).map(|j| format!("x{j}")).collect();
        for (r, t) in rows.into_iter().zip(targets) {
            m.push(None, r, t);
        }
        m
    }

    pub fn r2(y: &[f64], p: &[f64]) -> f64 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }
}
