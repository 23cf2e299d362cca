//! AdaBoost.R2 (Drucker 1997) with shallow regression trees.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::{check_training, check_width};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostLoss {
    #[default]
    Linear,
    Square,
    Exponential,
}

impl BoostLoss {
    /// Loss of a residual already divided by the largest residual.
    fn apply(self, e: f64) -> f64 {
        match self {
            BoostLoss::Linear => e,
            BoostLoss::Square => e * e,
            BoostLoss::Exponential => 1.0 - (-e).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub loss: BoostLoss,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_estimators: 120,
            learning_rate: 0.001,
            max_depth: 3,
            min_samples_leaf: 1,
            loss: BoostLoss::Linear,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub learners: Vec<RegressionTree>,
    /// Combination weight `lr · ln(1/β_m)` of each learner (always > 0).
    pub weights: Vec<f64>,
    pub loss: BoostLoss,
    pub feature_names: Vec<String>,
    /// Set when boosting stopped on a learner with average loss ≥ 0.5.
    pub warning: Option<String>,
}

pub fn train_adaboost(m: &FeatureMatrix, cfg: &BoostConfig) -> Result<BoostModel> {
    check_training(m)?;
    if cfg.n_estimators == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("adaboost needs estimators > 0 and learning_rate > 0".into()));
    }
    let n = m.len();
    let params = TreeParams {
        max_depth: Some(cfg.max_depth),
        min_samples_leaf: cfg.min_samples_leaf,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![1.0 / n as f64; n];
    let mut learners = Vec::new();
    let mut weights = Vec::new();
    let mut warning = None;

    for it in 0..cfg.n_estimators {
        let dist = WeightedIndex::new(&w).expect("sample weights stay positive and finite");
        let sample: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let tree = RegressionTree::fit(&m.rows, &m.targets, &sample, &params);

        let err: Vec<f64> = m
            .rows
            .iter()
            .zip(&m.targets)
            .map(|(r, y)| (tree.predict_row(r) - y).abs())
            .collect();
        let max_err = err.iter().cloned().fold(0.0, f64::max);
        let loss: Vec<f64> = err
            .iter()
            .map(|&e| cfg.loss.apply(if max_err > 0.0 { e / max_err } else { e }))
            .collect();
        let avg: f64 = w.iter().zip(&loss).map(|(wi, li)| wi * li).sum();

        if avg <= 0.0 {
            // perfect fit: keep it with unit weight and stop
            learners.push(tree);
            weights.push(1.0);
            break;
        }
        if avg >= 0.5 {
            if learners.is_empty() {
                learners.push(tree);
                weights.push(1.0);
                warning = Some(format!("first learner average loss {avg:.4} >= 0.5; kept as the only learner"));
            }
            break;
        }
        let beta = avg / (1.0 - avg);
        learners.push(tree);
        weights.push(cfg.learning_rate * (1.0 / beta).ln());

        if it + 1 < cfg.n_estimators {
            for (wi, li) in w.iter_mut().zip(&loss) {
                *wi *= beta.powf((1.0 - li) * cfg.learning_rate);
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                break;
            }
            w.iter_mut().for_each(|wi| *wi /= total);
        }
    }

    Ok(BoostModel {
        learners,
        weights,
        loss: cfg.loss,
        feature_names: m.columns.clone(),
        warning,
    })
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty ensemble")]
}

impl BoostModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let preds: Vec<f64> = self.learners.iter().map(|t| t.predict_row(row)).collect();
        weighted_median(&preds, &self.weights)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_width(rows, self.n_features())?;
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }
}

pub fn predict_adaboost(model: &BoostModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(rows)
}
