//! Spatial k-nearest-county imputation of missing panel cells.
//!
//! A missing value at (county, hour) is replaced by the mean of the same
//! field at the same hour over whichever of the `k` geographically nearest
//! counties have it. When none of them do, a fallback chain guarantees a
//! value:
//!
//! 1. mean over every other county with a value at that hour,
//! 2. linear interpolation in time between the county's nearest earlier
//!    and later values,
//! 3. the county's own mean for the field,
//! 4. the field's mean over the whole panel.
//!
//! Only cells present in the input feed the averages, so the result does not
//! depend on the order cells are visited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CountyStatic, Obs, PanelDataset, N_WEATHER, WEATHER_FIELDS};

/// Per-county neighbours sorted by coordinate distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborTable {
    counties: Vec<String>,
    /// `neighbors[i]` lists `(county index, distance)`, nearest first.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborTable {
    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn neighbors(&self, county: usize) -> &[(usize, f64)] {
        &self.neighbors[county]
    }

    /// Neighbours of `county_id` as `(id, distance)` pairs.
    pub fn neighbors_of(&self, county_id: &str) -> Option<Vec<(&str, f64)>> {
        let i = self.counties.iter().position(|c| c == county_id)?;
        Some(self.neighbors[i].iter().map(|&(j, d)| (self.counties[j].as_str(), d)).collect())
    }
}

/// Euclidean distance on raw (latitude, longitude) degrees, ties broken by
/// county id.
pub fn nearest_counties(statics: &[CountyStatic]) -> Result<NeighborTable> {
    if statics.len() < 2 {
        return Err(Error::TooFewCounties {
            needed: 2,
            got: statics.len(),
        });
    }
    let mut order: Vec<&CountyStatic> = statics.iter().collect();
    order.sort_by(|a, b| a.county_id.cmp(&b.county_id));

    let neighbors = order
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut list: Vec<(usize, f64)> = order
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, b)| {
                    let dx = a.latitude - b.latitude;
                    let dy = a.longitude - b.longitude;
                    (j, (dx * dx + dy * dy).sqrt())
                })
                .collect();
            // index order equals id order, so (distance, index) breaks ties by id
            list.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            list
        })
        .collect();

    Ok(NeighborTable {
        counties: order.iter().map(|s| s.county_id.clone()).collect(),
        neighbors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeOptions {
    pub k: usize,
    /// Also fill missing outage counts. Off by default so targets stay observed.
    pub impute_targets: bool,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            k: 5,
            impute_targets: false,
        }
    }
}

/// Fill missing weather cells (and optionally outage cells), returning a new
/// panel in which filled cells are marked [`Obs::Imputed`].
pub fn impute_missing(panel: &PanelDataset, table: &NeighborTable, opts: ImputeOptions) -> Result<PanelDataset> {
    if opts.k == 0 {
        return Err(Error::Config("imputation k must be positive".into()));
    }
    if table.counties() != panel.counties() {
        return Err(Error::Config("neighbour table was built over different counties".into()));
    }
    let n_c = panel.n_counties();
    let n_h = panel.n_hours();
    let mut out = panel.clone();

    for f in 0..N_WEATHER {
        let grid: Vec<Option<f64>> = (0..n_c)
            .flat_map(|c| (0..n_h).map(move |h| (c, h)))
            .map(|(c, h)| panel.weather(c, h)[f].value())
            .collect();
        let filled = fill_field(&grid, n_c, n_h, table, opts.k, WEATHER_FIELDS[f])?;
        for (c, h, v) in filled {
            out.set_weather(c, h, f, Obs::Imputed(v));
        }
    }

    if opts.impute_targets {
        let grid: Vec<Option<f64>> = (0..n_c)
            .flat_map(|c| (0..n_h).map(move |h| (c, h)))
            .map(|(c, h)| panel.outage(c, h).value().map(f64::from))
            .collect();
        let filled = fill_field(&grid, n_c, n_h, table, opts.k, "customers_out")?;
        for (c, h, v) in filled {
            out.set_outage(c, h, Obs::Imputed(v.round().max(0.0) as u32));
        }
    }
    Ok(out)
}

/// Values for every `None` cell of a county-major grid.
fn fill_field(
    grid: &[Option<f64>],
    n_c: usize,
    n_h: usize,
    table: &NeighborTable,
    k: usize,
    name: &str,
) -> Result<Vec<(usize, usize, f64)>> {
    let at = |c: usize, h: usize| grid[c * n_h + h];
    if grid.iter().all(Option::is_some) {
        return Ok(Vec::new());
    }

    let county_means: Vec<Option<f64>> = (0..n_c).map(|c| mean((0..n_h).filter_map(|h| at(c, h)))).collect();
    let global_mean = mean(grid.iter().flatten().copied());

    let mut filled = Vec::new();
    for c in 0..n_c {
        let neighbors = table.neighbors(c);
        // nearest observed hour at or before / after each hour
        let mut prev = vec![None; n_h];
        let mut last = None;
        for h in 0..n_h {
            if at(c, h).is_some() {
                last = Some(h);
            }
            prev[h] = last;
        }
        let mut next = vec![None; n_h];
        let mut upcoming = None;
        for h in (0..n_h).rev() {
            if at(c, h).is_some() {
                upcoming = Some(h);
            }
            next[h] = upcoming;
        }

        for h in 0..n_h {
            if at(c, h).is_some() {
                continue;
            }
            let v = mean(neighbors.iter().take(k).filter_map(|&(j, _)| at(j, h)))
                .or_else(|| mean(neighbors.iter().filter_map(|&(j, _)| at(j, h))))
                .or_else(|| match (prev[h], next[h]) {
                    (Some(a), Some(b)) => {
                        let (va, vb) = (at(c, a).unwrap(), at(c, b).unwrap());
                        Some(va + (vb - va) * (h - a) as f64 / (b - a) as f64)
                    }
                    _ => None,
                })
                .or(county_means[c])
                .or(global_mean)
                .ok_or_else(|| Error::NoObservations(name.to_string()))?;
            filled.push((c, h, v));
        }
    }
    Ok(filled)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
