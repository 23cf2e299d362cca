//! Error metrics, per-event reports and plot-ready exports.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::format_utc;
use crate::models::{ModelKind, TrainedModel};

pub const REPORT_FORMAT: &str = "hilp-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub pct: f64,
    /// Pairs skipped because the actual value was zero.
    pub excluded: usize,
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    Ok(())
}

/// Mean absolute percentage error over pairs with a non-zero actual.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<Mape> {
    check_lengths(actual, predicted)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (&a, &p) in actual.iter().zip(predicted) {
        if a != 0.0 {
            sum += ((a - p) / a).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(Mape {
        pct: 100.0 * sum / n as f64,
        excluded: actual.len() - n,
    })
}

/// Coefficient of determination in percent; negative when worse than the
/// mean.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(Error::R2Undefined(format!("need at least 2 points, got {}", actual.len())));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::R2Undefined("actual values are constant".into()));
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok(100.0 * (1.0 - ss_res / ss_tot))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourPoint {
    pub timestamp: DateTime<Utc>,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub event_id: String,
    pub model: ModelKind,
    pub series: Vec<HourPoint>,
    /// `None` when every actual is zero.
    pub mape_pct: Option<f64>,
    /// `None` when the actuals are constant or there are fewer than 2.
    pub r2_pct: Option<f64>,
    pub excluded_hours: usize,
}

impl EvalReport {
    pub fn from_series(event_id: &str, model: ModelKind, series: Vec<HourPoint>) -> Result<Self> {
        let mut report = EvalReport {
            format: REPORT_FORMAT.to_string(),
            event_id: event_id.to_string(),
            model,
            series,
            mape_pct: None,
            r2_pct: None,
            excluded_hours: 0,
        };
        let (m, r) = report.recompute()?;
        report.mape_pct = m.map(|m| m.pct);
        report.excluded_hours = m.map_or(report.series.len(), |m| m.excluded);
        report.r2_pct = r;
        Ok(report)
    }

    pub fn actual(&self) -> Vec<f64> {
        self.series.iter().map(|p| p.actual).collect()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.series.iter().map(|p| p.predicted).collect()
    }

    /// Metrics recomputed from the stored series.
    pub fn recompute(&self) -> Result<(Option<Mape>, Option<f64>)> {
        let (a, p) = (self.actual(), self.predicted());
        let m = match mape(&a, &p) {
            Ok(m) => Some(m),
            Err(Error::MapeUndefined) => None,
            Err(e) => return Err(e),
        };
        let r = match r2(&a, &p) {
            Ok(r) => Some(r),
            Err(Error::R2Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok((m, r))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let report: EvalReport = serde_json::from_slice(&bytes)?;
        if report.format != REPORT_FORMAT {
            return Err(Error::ModelFormat(format!(
                "{}: expected format {REPORT_FORMAT}, found {}",
                path.display(),
                report.format
            )));
        }
        Ok(report)
    }
}

/// Predict every row of an event window and score the predictions against
/// the stored targets.
pub fn evaluate_event(model: &TrainedModel, rows: &FeatureMatrix, event_id: &str) -> Result<EvalReport> {
    let predicted = model.predict(&rows.rows)?;
    let series = rows
        .keys
        .iter()
        .zip(rows.targets.iter().zip(predicted))
        .map(|(k, (&actual, predicted))| {
            let key = k
                .as_ref()
                .ok_or_else(|| Error::EmptyMatrix("event rows must carry county/timestamp keys".into()))?;
            Ok(HourPoint {
                timestamp: key.timestamp,
                actual,
                predicted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_series(event_id, model.kind(), series)
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Serialize)]
struct SeriesSidecar<'a> {
    format: &'static str,
    event_id: &'a str,
    model: ModelKind,
    rows: usize,
    mape_pct: Option<f64>,
    r2_pct: Option<f64>,
    excluded_hours: usize,
}

/// `timestamp_utc,actual,predicted` per hour plus a `.json` metrics sidecar.
/// Returns the sidecar path.
pub fn emit_series_plot(report: &EvalReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    writeln!(buf, "timestamp_utc,actual,predicted").expect("vec write");
    for p in &report.series {
        writeln!(buf, "{},{},{}", format_utc(p.timestamp), p.actual, p.predicted).expect("vec write");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    let meta = SeriesSidecar {
        format: REPORT_FORMAT,
        event_id: &report.event_id,
        model: report.model,
        rows: report.series.len(),
        mape_pct: report.mape_pct,
        r2_pct: report.r2_pct,
        excluded_hours: report.excluded_hours,
    };
    std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))?;
    Ok(side)
}

#[derive(Serialize)]
struct ImportanceSidecar {
    format: &'static str,
    features: usize,
    total: f64,
}

/// `feature,importance` sorted by importance descending (name breaks ties)
/// plus a `.json` sidecar. Returns the sidecar path.
pub fn emit_importance_plot(importance: &[(String, f64)], path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let mut sorted = importance.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut buf = Vec::new();
    writeln!(buf, "feature,importance").expect("vec write");
    for (name, v) in &sorted {
        writeln!(buf, "{name},{v}").expect("vec write");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    let meta = ImportanceSidecar {
        format: "hilp-importance/1",
        features: sorted.len(),
        total: sorted.iter().map(|x| x.1).sum(),
    };
    std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))?;
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureLayout, LagConfig, RowKey};
    use crate::models::forest::ForestModel;
    use crate::models::tree::{Node, RegressionTree};
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap(), Mape { pct: 10.0, excluded: 0 });
        assert_eq!(mape(&[3.0, 7.0], &[3.0, 7.0]).unwrap().pct, 0.0);
        assert_eq!(mape(&[0.0, 100.0], &[5.0, 100.0]).unwrap(), Mape { pct: 0.0, excluded: 1 });
        assert!(matches!(mape(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::MapeUndefined)));
        assert!(matches!(mape(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 5.0, 9.0], &[1.0, 5.0, 9.0]).unwrap(), 100.0);
        assert_eq!(r2(&[1.0, 5.0, 9.0], &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(r2(&[0.0, 10.0], &[10.0, 0.0]).unwrap(), -300.0);
        assert!(matches!(r2(&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]), Err(Error::R2Undefined(_))));
        assert!(matches!(r2(&[4.0], &[4.0]), Err(Error::R2Undefined(_))));
    }

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 6, 6, 0, 0, 0).unwrap()
    }

    fn report(n: usize) -> EvalReport {
        let series = (0..n)
            .map(|h| HourPoint {
                timestamp: t0() + Duration::hours(h as i64),
                actual: (h * 37 % 11) as f64 * 10.0,
                predicted: (h * 37 % 11) as f64 * 9.0 + 3.0,
            })
            .collect();
        EvalReport::from_series("wayne-flood", ModelKind::Forest, series).unwrap()
    }

    #[test]
    fn report_round_trip_recomputes() {
        let r = report(48);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        r.save(&path).unwrap();
        let back = EvalReport::load(&path).unwrap();
        assert_eq!(back, r);
        let (m, r2v) = back.recompute().unwrap();
        assert_eq!(m.map(|m| m.pct), back.mape_pct);
        assert_eq!(r2v, back.r2_pct);
        assert_eq!(m.unwrap().excluded, back.excluded_hours);
    }

    #[test]
    fn series_plot_rows_and_sidecar() {
        let r = report(48);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let side = emit_series_plot(&r, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 49);
        assert_eq!(text.lines().next().unwrap(), "timestamp_utc,actual,predicted");
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(side).unwrap()).unwrap();
        assert_eq!(meta["mape_pct"].as_f64(), r.mape_pct);
        assert_eq!(meta["r2_pct"].as_f64(), r.r2_pct);
        assert_eq!(meta["rows"], 48);
    }

    #[test]
    fn importance_plot_sorted() {
        let imp: Vec<(String, f64)> = (0..15).map(|i| (format!("f{i}"), ((i * 7) % 15) as f64 / 105.0)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("importance.csv");
        emit_importance_plot(&imp, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let vals: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(vals.len(), 15);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn unwritable_path_errors() {
        let r = report(3);
        assert!(matches!(emit_series_plot(&r, "/nonexistent-dir/x.csv"), Err(Error::Io { .. })));
    }

    fn event_rows(targets: &[f64]) -> FeatureMatrix {
        let mut m = FeatureMatrix::empty(FeatureLayout::new(LagConfig::default()).unwrap());
        m.columns = vec!["x".into()];
        for (h, &t) in targets.iter().enumerate() {
            let key = RowKey {
                county_id: "26163".into(),
                timestamp: t0() + Duration::hours(h as i64),
            };
            m.push(Some(key), vec![h as f64], t);
        }
        m
    }

    /// One tree whose leaves reproduce the targets exactly.
    fn lookup_forest(targets: &[f64]) -> TrainedModel {
        let mut nodes = Vec::new();
        // chain of splits: x <= h + 0.5 → leaf h, else continue
        for (h, &t) in targets.iter().enumerate() {
            if h + 1 == targets.len() {
                nodes.push(Node::Leaf { value: t });
            } else {
                let i = nodes.len();
                nodes.push(Node::Split { feature: 0, threshold: h as f64 + 0.5, left: i + 1, right: i + 2 });
                nodes.push(Node::Leaf { value: t });
            }
        }
        let tree = RegressionTree { nodes, n_features: 1, impurity_decrease: vec![0.0] };
        TrainedModel::Forest(ForestModel { trees: vec![tree], seed: 0, feature_names: vec!["x".into()] })
    }

    #[test]
    fn oracle_model_scores_perfectly() {
        let targets = [120.0, 400.0, 950.0, 0.0, 30.0, 610.0];
        let r = evaluate_event(&lookup_forest(&targets), &event_rows(&targets), "e").unwrap();
        assert_eq!(r.mape_pct, Some(0.0));
        assert_eq!(r.r2_pct, Some(100.0));
        assert_eq!(r.excluded_hours, 1);
        assert_eq!(r.series.len(), 6);
    }

    #[test]
    fn mean_model_scores_zero_r2() {
        let targets = [10.0, 20.0, 30.0, 40.0];
        let mean = lookup_forest(&[25.0; 4]);
        let r = evaluate_event(&mean, &event_rows(&targets), "e").unwrap();
        assert!(r.r2_pct.unwrap().abs() < 1e-12);
    }

    fn oracle_mape(a: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for i in 0..a.len() {
            if a[i] != 0.0 {
                s += (a[i] - p[i]).abs() / a[i].abs();
                n += 1.0;
            }
        }
        100.0 * s / n
    }

    proptest! {
        #[test]
        fn mape_scale_invariant(pairs in prop::collection::vec((1.0f64..1e4, 0.0f64..1e4), 1..50), k in 0.01f64..100.0) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = mape(&a, &p).unwrap().pct;
            let ka: Vec<f64> = a.iter().map(|v| v * k).collect();
            let kp: Vec<f64> = p.iter().map(|v| v * k).collect();
            prop_assert!((mape(&ka, &kp).unwrap().pct - base).abs() <= 1e-9 * base.max(1.0));
            prop_assert!((base - oracle_mape(&a, &p)).abs() <= 1e-9 * base.max(1.0));
        }

        #[test]
        fn r2_affine_invariant(pairs in prop::collection::vec((0.0f64..1e3, 0.0f64..1e3), 3..50), scale in 0.1f64..10.0, shift in -1e3f64..1e3) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(a.iter().any(|&v| (v - a[0]).abs() > 1e-3));
            let base = r2(&a, &p).unwrap();
            let ta: Vec<f64> = a.iter().map(|v| v * scale + shift).collect();
            let tp: Vec<f64> = p.iter().map(|v| v * scale + shift).collect();
            let moved = r2(&ta, &tp).unwrap();
            prop_assert!((moved - base).abs() <= 1e-6 * base.abs().max(1.0), "{base} vs {moved}");
        }
    }
}
