//! Model inputs: lagged outage and weather windows, county statics, and a
//! month-of-year indicator, one row per extreme-event (county, hour).
//!
//! Column order for lag depth `n`:
//!
//! 1. `y_lag_1 … y_lag_n` — outages at t−1 … t−n
//! 2. `<field>_lag_k` for k = 0 … n (k = 1 … n without current weather),
//!    the 8 weather fields per lag
//! 3. the 10 county statics ([`CountyStatic::FEATURE_NAMES`])
//! 4. `month_1 … month_12`
//!
//! A row never reads a panel value later than its own hour.

mod graph;
mod scaler;

pub use graph::{build_graph, haversine_miles, write_graph_csv, SpatioTemporalGraph};
pub use scaler::{ColumnRange, MinMaxScaler};

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilp::ExtremeEventSet;
use crate::ingest::{format_utc, parse_utc, CountyStatic, PanelDataset, N_WEATHER, WEATHER_FIELDS};

pub const N_STATIC: usize = 10;
pub const N_MONTHS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LagConfig {
    /// Lag depth in hours.
    pub n: usize,
    pub include_current_weather: bool,
}

impl Default for LagConfig {
    fn default() -> Self {
        LagConfig {
            n: 24,
            include_current_weather: true,
        }
    }
}

/// Column positions for a given lag configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub lag: LagConfig,
}

impl FeatureLayout {
    pub fn new(lag: LagConfig) -> Result<Self> {
        if lag.n == 0 {
            return Err(Error::Config("lag depth must be at least 1".into()));
        }
        Ok(FeatureLayout { lag })
    }

    fn first_weather_lag(&self) -> usize {
        if self.lag.include_current_weather {
            0
        } else {
            1
        }
    }

    pub fn weather_lags(&self) -> usize {
        self.lag.n + 1 - self.first_weather_lag()
    }

    pub fn outage_lag_col(&self, k: usize) -> usize {
        debug_assert!((1..=self.lag.n).contains(&k));
        k - 1
    }

    pub fn weather_col(&self, k: usize, field: usize) -> usize {
        debug_assert!(k >= self.first_weather_lag() && k <= self.lag.n);
        self.lag.n + (k - self.first_weather_lag()) * N_WEATHER + field
    }

    pub fn static_offset(&self) -> usize {
        self.lag.n + self.weather_lags() * N_WEATHER
    }

    pub fn month_offset(&self) -> usize {
        self.static_offset() + N_STATIC
    }

    pub fn n_columns(&self) -> usize {
        self.month_offset() + N_MONTHS
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.lag.n).map(|k| format!("y_lag_{k}")).collect();
        for k in self.first_weather_lag()..=self.lag.n {
            names.extend(WEATHER_FIELDS.iter().map(|f| format!("{f}_lag_{k}")));
        }
        names.extend(CountyStatic::FEATURE_NAMES.iter().map(|s| s.to_string()));
        names.extend((1..=N_MONTHS).map(|m| format!("month_{m}")));
        names
    }

    /// Width of one recurrent-model time step.
    pub fn step_width(&self) -> usize {
        1 + N_WEATHER + N_STATIC + N_MONTHS
    }

    /// Reshape a (scaled) feature row into `n` time steps, oldest first.
    ///
    /// Step for lag k carries `y(t−k)`, the weather one hour later
    /// (`t−k+1`, so the last step sees the current hour) when current weather
    /// is included and `t−k` otherwise, then the statics and month columns.
    pub fn to_sequence(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let n = self.lag.n;
        let shift = usize::from(self.lag.include_current_weather);
        let tail = &row[self.static_offset()..];
        (1..=n)
            .rev()
            .map(|k| {
                let mut step = Vec::with_capacity(self.step_width());
                step.push(row[self.outage_lag_col(k)]);
                let wk = k - shift;
                step.extend_from_slice(&row[self.weather_col(wk, 0)..self.weather_col(wk, 0) + N_WEATHER]);
                step.extend_from_slice(tail);
                step
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub county_id: String,
    pub timestamp: DateTime<Utc>,
}

/// Rows of model inputs with their targets. `keys[i]` is `None` for
/// synthetic rows produced by rebalancing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub layout: FeatureLayout,
    pub columns: Vec<String>,
    pub keys: Vec<Option<RowKey>>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Candidate rows skipped for lack of a complete lag history.
    pub dropped: usize,
}

impl FeatureMatrix {
    pub fn empty(layout: FeatureLayout) -> Self {
        FeatureMatrix {
            layout,
            columns: layout.column_names(),
            keys: Vec::new(),
            rows: Vec::new(),
            targets: Vec::new(),
            dropped: 0,
        }
    }

    /// Unkeyed rows with generic column names `x0, x1, …`, for callers that
    /// have plain tabular data rather than a panel.
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch(rows.len(), targets.len()));
        }
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let mut m = FeatureMatrix::empty(FeatureLayout::new(LagConfig::default())?);
        m.columns = (0..d).map(|j| format!("x{j}")).collect();
        m.keys = vec![None; rows.len()];
        m.rows = rows;
        m.targets = targets;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn push(&mut self, key: Option<RowKey>, row: Vec<f64>, target: f64) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.keys.push(key);
        self.rows.push(row);
        self.targets.push(target);
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            layout: self.layout,
            columns: self.columns.clone(),
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            dropped: 0,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// The feature row for `(county, hour)`, or `None` when the lag window runs
/// off the panel start or touches a missing value.
pub fn feature_row(
    panel: &PanelDataset,
    layout: &FeatureLayout,
    county: usize,
    hour: usize,
    utc_offset_hours: i32,
) -> Option<Vec<f64>> {
    let n = layout.lag.n;
    if hour < n {
        return None;
    }
    let mut row = Vec::with_capacity(layout.n_columns());
    for k in 1..=n {
        row.push(f64::from(panel.outage(county, hour - k).value()?));
    }
    for k in layout.first_weather_lag()..=n {
        row.extend(panel.weather_values(county, hour - k)?);
    }
    row.extend(panel.county_static(county).feature_vector());
    let month = panel.month(hour, utc_offset_hours) as usize;
    row.extend((1..=N_MONTHS).map(|m| if m == month { 1.0 } else { 0.0 }));
    Some(row)
}

/// Rows for the given cells, in order. Cells whose history or target is
/// incomplete are dropped and counted.
pub fn build_feature_rows(
    panel: &PanelDataset,
    cells: impl IntoIterator<Item = (usize, usize)>,
    lag: LagConfig,
    utc_offset_hours: i32,
) -> Result<FeatureMatrix> {
    let layout = FeatureLayout::new(lag)?;
    let mut m = FeatureMatrix::empty(layout);
    for (c, h) in cells {
        let target = panel.outage(c, h).value();
        match (feature_row(panel, &layout, c, h, utc_offset_hours), target) {
            (Some(row), Some(y)) => m.push(
                Some(RowKey {
                    county_id: panel.counties()[c].clone(),
                    timestamp: panel.timestamp(h),
                }),
                row,
                f64::from(y),
            ),
            _ => m.dropped += 1,
        }
    }
    Ok(m)
}

/// One row per extreme-event cell with full history, ordered by
/// (county, hour). Cells listed in `exclude` are left out entirely.
pub fn build_feature_matrix(
    panel: &PanelDataset,
    extreme_set: &ExtremeEventSet,
    lag: LagConfig,
    utc_offset_hours: i32,
    exclude: &BTreeSet<(usize, usize)>,
) -> Result<FeatureMatrix> {
    let cells = extreme_set.union.iter().copied().filter(|cell| !exclude.contains(cell));
    let m = build_feature_rows(panel, cells, lag, utc_offset_hours)?;
    if m.is_empty() {
        return Err(Error::EmptyMatrix(format!(
            "no extreme-event hour has {} hours of complete history ({} dropped)",
            lag.n, m.dropped
        )));
    }
    Ok(m)
}

/// Sidecar describing a feature CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub format: String,
    pub layout: FeatureLayout,
    pub utc_offset_hours: i32,
    pub columns: Vec<String>,
    pub rows: usize,
    pub dropped: usize,
    /// Ranges of the feature columns over this matrix.
    pub scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
}

pub const FEATURE_FORMAT: &str = "hilp-features/1";

/// Write `<stem>.csv` (`county_id,timestamp_utc,<columns…>,target`) and
/// `<stem>.manifest.json`. Synthetic rows have empty key cells.
pub fn write_feature_matrix(
    csv_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
    m: &FeatureMatrix,
    utc_offset_hours: i32,
) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["county_id".to_string(), "timestamp_utc".to_string()];
    header.extend(m.columns.iter().cloned());
    header.push("target".into());
    w.write_record(&header)?;
    for ((key, row), y) in m.keys.iter().zip(&m.rows).zip(&m.targets) {
        let mut rec = match key {
            Some(k) => vec![k.county_id.clone(), format_utc(k.timestamp)],
            None => vec![String::new(), String::new()],
        };
        rec.extend(row.iter().map(f64::to_string));
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let (scaler, target_scaler) = if m.is_empty() {
        (MinMaxScaler::new(), MinMaxScaler::new())
    } else {
        (
            MinMaxScaler::fitted(m.rows.iter().map(Vec::as_slice))?,
            MinMaxScaler::fitted(m.targets.iter().map(std::slice::from_ref))?,
        )
    };
    let manifest = FeatureManifest {
        format: FEATURE_FORMAT.into(),
        layout: m.layout,
        utc_offset_hours,
        columns: m.columns.clone(),
        rows: m.len(),
        dropped: m.dropped,
        scaler,
        target_scaler,
    };
    let manifest_path = manifest_path.as_ref();
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
}

pub fn read_feature_manifest(path: impl AsRef<Path>) -> Result<FeatureManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: FeatureManifest = serde_json::from_str(&text)?;
    if manifest.format != FEATURE_FORMAT {
        return Err(Error::ModelFormat(manifest.format));
    }
    Ok(manifest)
}

pub fn read_feature_matrix(csv_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let manifest = read_feature_manifest(manifest_path)?;
    let csv_path = csv_path.as_ref();
    let label = csv_path.display().to_string();
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let width = manifest.columns.len();
    if header.len() != width + 3 || header[2..2 + width] != manifest.columns[..] {
        return Err(Error::Header {
            file: label,
            expected: manifest.columns.join(","),
            found: header.join(","),
        });
    }
    let mut m = FeatureMatrix::empty(manifest.layout);
    m.columns = manifest.columns.clone();
    m.dropped = manifest.dropped;
    for rec in rdr.records() {
        let rec = rec?;
        let row_no = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str, msg: &str| Error::Parse {
            file: label.clone(),
            row: row_no,
            field: field.to_string(),
            message: msg.to_string(),
        };
        let key = match (&rec[0], &rec[1]) {
            ("", "") => None,
            (c, t) => Some(RowKey {
                county_id: c.to_string(),
                timestamp: parse_utc(t).ok_or_else(|| bad("timestamp_utc", "malformed timestamp"))?,
            }),
        };
        let mut values = Vec::with_capacity(width + 1);
        for (i, s) in rec.iter().enumerate().skip(2) {
            values.push(s.parse::<f64>().map_err(|_| bad(&header[i], "not a number"))?);
        }
        let target = values.pop().expect("width + 1 values");
        m.push(key, values, target);
    }
    Ok(m)
}
