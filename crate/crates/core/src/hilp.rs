//! HILP seed identification and seasonal weather-analog expansion.
//!
//! A seed is a (county, hour) covered by a reported storm whose outage count
//! reaches the α-quantile of all storm-hour outages. Each seed is expanded
//! with the `K` hours of the same county, within ±`season_window` calendar
//! months, whose standardized weather vector is closest to the seed's.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_utc, parse_utc, PanelDataset, StormEvent, N_WEATHER, WEATHER_FIELDS};

/// How the per-hour weather vector compared between seed and candidate is
/// formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherAggregation {
    /// The hour's own observation.
    #[default]
    Hourly,
    /// Mean over the local calendar day containing the hour.
    Daily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HilpConfig {
    pub alpha: f64,
    pub analogs_per_seed: usize,
    /// Months on either side of the seed month that count as "in season".
    pub season_window: u32,
    pub utc_offset_hours: i32,
    pub aggregation: WeatherAggregation,
}

impl Default for HilpConfig {
    fn default() -> Self {
        HilpConfig {
            alpha: 0.7,
            analogs_per_seed: 10,
            season_window: 1,
            utc_offset_hours: -5,
            aggregation: WeatherAggregation::Hourly,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilpSeed {
    pub county_id: String,
    pub t_ex: DateTime<Utc>,
    pub y_value: u32,
    /// Panel indices of the seed cell.
    pub county: usize,
    pub hour: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mu: [f64; N_WEATHER],
    pub sigma: [f64; N_WEATHER],
}

impl StandardizationParams {
    pub fn standardize(&self, x: &[f64; N_WEATHER]) -> [f64; N_WEATHER] {
        let mut z = [0.0; N_WEATHER];
        for j in 0..N_WEATHER {
            z[j] = (x[j] - self.mu[j]) / self.sigma[j];
        }
        z
    }
}

/// Seeds, their analogs, and the deduplicated union used for training.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeEventSet {
    pub seeds: Vec<HilpSeed>,
    /// `analogs[i]` are the `(county, hour)` analogs of `seeds[i]`, best first.
    pub analogs: Vec<Vec<(usize, usize)>>,
    pub union: BTreeSet<(usize, usize)>,
}

impl ExtremeEventSet {
    fn from_parts(seeds: Vec<HilpSeed>, analogs: Vec<Vec<(usize, usize)>>) -> Self {
        let union = seeds
            .iter()
            .map(|s| (s.county, s.hour))
            .chain(analogs.iter().flatten().copied())
            .collect();
        ExtremeEventSet { seeds, analogs, union }
    }

    pub fn contains(&self, county: usize, hour: usize) -> bool {
        self.union.contains(&(county, hour))
    }

    pub fn len(&self) -> usize {
        self.union.len()
    }

    pub fn is_empty(&self) -> bool {
        self.union.is_empty()
    }
}

/// 1 when a storm in `county_id` covers `t`; intervals are closed.
pub fn weather_indicator(storms: &[StormEvent], county_id: &str, t: DateTime<Utc>) -> u8 {
    storms
        .iter()
        .any(|s| s.county_id == county_id && s.start <= t && t <= s.end) as u8
}

/// Per-cell storm coverage, county-major like the panel.
pub fn storm_mask(panel: &PanelDataset, storms: &[StormEvent]) -> Vec<bool> {
    let n_h = panel.n_hours();
    let mut mask = vec![false; panel.n_counties() * n_h];
    for s in storms {
        let Some(c) = panel.county_index(&s.county_id) else { continue };
        let from = hours_ceil(s.start - panel.start()).max(0);
        let to = (s.end - panel.start()).num_hours().min(n_h as i64 - 1);
        for h in from..=to {
            mask[c * n_h + h as usize] = true;
        }
    }
    mask
}

fn hours_ceil(d: Duration) -> i64 {
    let s = d.num_seconds();
    s.div_euclid(3600) + (s.rem_euclid(3600) > 0) as i64
}

/// Nearest-rank α-quantile: the ⌈αN⌉-th smallest value (the minimum when
/// α = 0). The result is always one of the inputs.
pub fn nearest_rank_quantile(values: &[u32], alpha: f64) -> Option<u32> {
    if values.is_empty() || !(0.0..=1.0).contains(&alpha) {
        return None;
    }
    let n = values.len();
    // guard against α·N landing a hair above an integer
    let rank = ((alpha * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    let (_, v, _) = sorted.select_nth_unstable(rank - 1);
    Some(*v)
}

fn storm_outages(panel: &PanelDataset, mask: &[bool]) -> Vec<u32> {
    let n_h = panel.n_hours();
    (0..panel.n_counties())
        .flat_map(|c| (0..n_h).map(move |h| (c, h)))
        .filter(|&(c, h)| mask[c * n_h + h])
        .filter_map(|(c, h)| panel.outage(c, h).value())
        .collect()
}

/// α-quantile of outage counts over storm-covered hours.
pub fn outage_quantile(panel: &PanelDataset, storms: &[StormEvent], alpha: f64) -> Result<u32> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let values = storm_outages(panel, &storm_mask(panel, storms));
    nearest_rank_quantile(&values, alpha).ok_or(Error::NoStormHours)
}

/// Every storm-covered hour whose outage count is at least the α-quantile,
/// ordered by (county, hour).
pub fn identify_seeds(panel: &PanelDataset, storms: &[StormEvent], alpha: f64) -> Result<Vec<HilpSeed>> {
    let q = outage_quantile(panel, storms, alpha)?;
    let mask = storm_mask(panel, storms);
    let n_h = panel.n_hours();
    let mut seeds = Vec::new();
    for c in 0..panel.n_counties() {
        for h in 0..n_h {
            if !mask[c * n_h + h] {
                continue;
            }
            if let Some(y) = panel.outage(c, h).value() {
                if y >= q {
                    seeds.push(HilpSeed {
                        county_id: panel.counties()[c].clone(),
                        t_ex: panel.timestamp(h),
                        y_value: y,
                        county: c,
                        hour: h,
                    });
                }
            }
        }
    }
    Ok(seeds)
}

fn in_season(month: u32, seed_month: u32, window: u32) -> bool {
    let d = (month as i32 - seed_month as i32).rem_euclid(12) as u32;
    d.min(12 - d) <= window
}

/// Hours of `county` whose local month is within `window` months of the
/// seed hour's month (wrapping December ↔ January), excluding the seed hour.
pub fn seasonal_candidates(
    panel: &PanelDataset,
    county: usize,
    hour_ex: usize,
    window: u32,
    utc_offset_hours: i32,
) -> Vec<(usize, usize)> {
    let months: Vec<u32> = (0..panel.n_hours()).map(|h| panel.month(h, utc_offset_hours)).collect();
    candidates_with(&months, county, hour_ex, window)
}

fn candidates_with(months: &[u32], county: usize, hour_ex: usize, window: u32) -> Vec<(usize, usize)> {
    let m = months[hour_ex];
    (0..months.len())
        .filter(|&h| h != hour_ex && in_season(months[h], m, window))
        .map(|h| (county, h))
        .collect()
}

fn complete_vectors(panel: &PanelDataset) -> Result<Vec<[f64; N_WEATHER]>> {
    let mut out = Vec::with_capacity(panel.cell_count());
    for c in 0..panel.n_counties() {
        for h in 0..panel.n_hours() {
            out.push(panel.weather_values(c, h).ok_or_else(|| {
                Error::IncompletePanel(format!(
                    "missing weather at county {} {}; run impute first",
                    panel.counties()[c],
                    format_utc(panel.timestamp(h))
                ))
            })?);
        }
    }
    Ok(out)
}

/// Weather vectors per cell (county-major) under the chosen aggregation.
pub fn weather_vectors(
    panel: &PanelDataset,
    aggregation: WeatherAggregation,
    utc_offset_hours: i32,
) -> Result<Vec<[f64; N_WEATHER]>> {
    let hourly = complete_vectors(panel)?;
    if aggregation == WeatherAggregation::Hourly {
        return Ok(hourly);
    }
    let n_h = panel.n_hours();
    let day = |h: usize| {
        let local = panel.timestamp(h) + Duration::hours(utc_offset_hours as i64);
        local.timestamp().div_euclid(86_400)
    };
    let days: Vec<i64> = (0..n_h).map(day).collect();
    let mut out = hourly.clone();
    for c in 0..panel.n_counties() {
        let mut lo = 0;
        while lo < n_h {
            let mut hi = lo;
            while hi < n_h && days[hi] == days[lo] {
                hi += 1;
            }
            let mut mean = [0.0; N_WEATHER];
            for h in lo..hi {
                for j in 0..N_WEATHER {
                    mean[j] += hourly[c * n_h + h][j];
                }
            }
            for m in mean.iter_mut() {
                *m /= (hi - lo) as f64;
            }
            for h in lo..hi {
                out[c * n_h + h] = mean;
            }
            lo = hi;
        }
    }
    Ok(out)
}

/// Mean and population standard deviation of each weather feature over
/// every panel cell. The panel must be complete.
pub fn fit_standardization(panel: &PanelDataset) -> Result<StandardizationParams> {
    fit_standardization_on(&complete_vectors(panel)?)
}

pub fn fit_standardization_on(vectors: &[[f64; N_WEATHER]]) -> Result<StandardizationParams> {
    if vectors.is_empty() {
        return Err(Error::IncompletePanel("no weather vectors".into()));
    }
    let n = vectors.len() as f64;
    let mut mu = [0.0; N_WEATHER];
    for v in vectors {
        for j in 0..N_WEATHER {
            mu[j] += v[j];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut sigma = [0.0; N_WEATHER];
    for v in vectors {
        for j in 0..N_WEATHER {
            sigma[j] += (v[j] - mu[j]).powi(2);
        }
    }
    for j in 0..N_WEATHER {
        sigma[j] = (sigma[j] / n).sqrt();
        if sigma[j] <= 1e-12 * mu[j].abs().max(1.0) {
            return Err(Error::ZeroVariance(WEATHER_FIELDS[j].to_string()));
        }
    }
    Ok(StandardizationParams { mu, sigma })
}

/// Euclidean distance between two weather vectors after standardization.
pub fn weather_distance(x1: &[f64; N_WEATHER], x2: &[f64; N_WEATHER], params: &StandardizationParams) -> f64 {
    let (a, b) = (params.standardize(x1), params.standardize(x2));
    a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// The `k` seasonal candidates closest in standardized weather to the seed,
/// nearest first; equal distances go to the earlier hour.
pub fn select_analogs(
    panel: &PanelDataset,
    seed: &HilpSeed,
    k: usize,
    params: &StandardizationParams,
    cfg: &HilpConfig,
) -> Result<Vec<(usize, usize)>> {
    let vectors = weather_vectors(panel, cfg.aggregation, cfg.utc_offset_hours)?;
    let months: Vec<u32> = (0..panel.n_hours()).map(|h| panel.month(h, cfg.utc_offset_hours)).collect();
    Ok(rank_analogs(&vectors, panel.n_hours(), &months, seed, k, params, cfg.season_window))
}

fn rank_analogs(
    vectors: &[[f64; N_WEATHER]],
    n_h: usize,
    months: &[u32],
    seed: &HilpSeed,
    k: usize,
    params: &StandardizationParams,
    window: u32,
) -> Vec<(usize, usize)> {
    if k == 0 {
        return Vec::new();
    }
    let x_seed = &vectors[seed.county * n_h + seed.hour];
    let mut scored: Vec<(f64, usize)> = candidates_with(months, seed.county, seed.hour, window)
        .into_iter()
        .map(|(c, h)| (weather_distance(x_seed, &vectors[c * n_h + h], params), h))
        .collect();
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_by(by_rank);
    scored.into_iter().map(|(_, h)| (seed.county, h)).collect()
}

/// Seeds plus their analogs. Standardization is fitted on the (aggregated)
/// weather of the whole panel.
pub fn build_extreme_set(panel: &PanelDataset, storms: &[StormEvent], cfg: &HilpConfig) -> Result<ExtremeEventSet> {
    let seeds = identify_seeds(panel, storms, cfg.alpha)?;
    if cfg.analogs_per_seed == 0 {
        let n = seeds.len();
        return Ok(ExtremeEventSet::from_parts(seeds, vec![Vec::new(); n]));
    }
    let vectors = weather_vectors(panel, cfg.aggregation, cfg.utc_offset_hours)?;
    let params = fit_standardization_on(&vectors)?;
    let months: Vec<u32> = (0..panel.n_hours()).map(|h| panel.month(h, cfg.utc_offset_hours)).collect();
    let analogs = seeds
        .par_iter()
        .map(|s| rank_analogs(&vectors, panel.n_hours(), &months, s, cfg.analogs_per_seed, &params, cfg.season_window))
        .collect();
    Ok(ExtremeEventSet::from_parts(seeds, analogs))
}

/// One row per seed and one per (seed, analog) pair:
/// `county_id,timestamp,origin,seed_ref` with `origin` ∈ {seed, analog} and
/// `seed_ref` = `<county_id>@<seed timestamp>`.
pub fn write_extreme_set_csv(path: impl AsRef<Path>, set: &ExtremeEventSet, panel: &PanelDataset) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    writeln!(buf, "county_id,timestamp,origin,seed_ref").expect("vec write");
    for (seed, analogs) in set.seeds.iter().zip(&set.analogs) {
        let seed_ref = format!("{}@{}", seed.county_id, format_utc(seed.t_ex));
        writeln!(buf, "{},{},seed,{seed_ref}", seed.county_id, format_utc(seed.t_ex)).expect("vec write");
        for &(c, h) in analogs {
            writeln!(buf, "{},{},analog,{seed_ref}", panel.counties()[c], format_utc(panel.timestamp(h)))
                .expect("vec write");
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_extreme_set_csv(path: impl AsRef<Path>, panel: &PanelDataset) -> Result<ExtremeEventSet> {
    let path = path.as_ref();
    let label = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path)?;
    let bad = |row: u64, field: &str, msg: String| Error::Parse {
        file: label.clone(),
        row,
        field: field.into(),
        message: msg,
    };
    let mut seeds: Vec<HilpSeed> = Vec::new();
    let mut analogs: Vec<Vec<(usize, usize)>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        let c = panel
            .county_index(get(0))
            .ok_or_else(|| bad(row, "county_id", format!("unknown county `{}`", get(0))))?;
        let t = parse_utc(get(1)).ok_or_else(|| bad(row, "timestamp", format!("malformed `{}`", get(1))))?;
        let h = panel.hour_of(t).ok_or_else(|| bad(row, "timestamp", "outside panel".into()))?;
        match get(2) {
            "seed" => {
                let y_value = panel
                    .outage(c, h)
                    .value()
                    .ok_or_else(|| bad(row, "timestamp", "seed hour has no outage value".into()))?;
                seeds.push(HilpSeed {
                    county_id: panel.counties()[c].clone(),
                    t_ex: t,
                    y_value,
                    county: c,
                    hour: h,
                });
                analogs.push(Vec::new());
            }
            "analog" => analogs
                .last_mut()
                .ok_or_else(|| bad(row, "origin", "analog before any seed".into()))?
                .push((c, h)),
            other => return Err(bad(row, "origin", format!("unknown origin `{other}`"))),
        }
    }
    Ok(ExtremeEventSet::from_parts(seeds, analogs))
}
