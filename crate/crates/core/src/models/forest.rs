//! Bootstrap-aggregated regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::check_training;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fit each tree on a bootstrap resample; otherwise on every row.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 100,
            max_depth: None,
            min_samples_leaf: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// Tree `i` drew its bootstrap from stream `i` of this seed.
    pub seed: u64,
    pub feature_names: Vec<String>,
}

/// Per-tree generator: stream `tree` of a ChaCha8 keyed by `seed`.
pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn train_forest(m: &FeatureMatrix, cfg: &ForestConfig) -> Result<ForestModel> {
    check_training(m)?;
    if cfg.n_estimators == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let n = m.len();
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
    };
    let trees = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|t| {
            let sample: Vec<usize> = if cfg.bootstrap {
                let mut rng = tree_rng(cfg.seed, t);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(&m.rows, &m.targets, &sample, &params)
        })
        .collect();
    Ok(ForestModel {
        trees,
        seed: cfg.seed,
        feature_names: m.columns.clone(),
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        super::check_width(rows, self.n_features())?;
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Impurity-based importance: each tree's squared-error reductions per
    /// feature, normalized within the tree, averaged over trees, then
    /// normalized to sum to 1. All zeros if no tree ever split.
    pub fn importance(&self) -> Vec<(String, f64)> {
        let d = self.n_features();
        let mut acc = vec![0.0; d];
        for t in &self.trees {
            let total: f64 = t.impurity_decrease.iter().sum();
            if total > 0.0 {
                for (a, v) in acc.iter_mut().zip(&t.impurity_decrease) {
                    *a += v / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        }
        self.feature_names.iter().cloned().zip(acc).collect()
    }
}

pub fn predict_forest(model: &ForestModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(rows)
}

pub fn forest_importance(model: &ForestModel) -> Vec<(String, f64)> {
    model.importance()
}
