//! Input records, CSV parsing, and the aligned county × hour panel.
//!
//! Five CSV inputs are understood (UTF-8, comma separated, ISO-8601 UTC
//! timestamps):
//!
//! | file           | columns |
//! |----------------|---------|
//! | outages        | `county_id,timestamp_utc,customers_out` |
//! | weather        | `county_id,timestamp_utc,temp_f,precip_in,wind_kmh,gust_kmh,swr_wm2,rh_pct,cloud_pct,pressure_hpa` |
//! | census         | `county_id,lat,lon,income_usd,unemployment_pct,built_pre1960,built_1960_1999,built_2000_plus` |
//! | infrastructure | `county_id,poles,towers,substations,transformers,lines` |
//! | storms         | `county_id,start_utc,end_utc,event_type` |
//!
//! An empty weather cell means "missing".

mod csv_io;
mod panel;

pub use csv_io::{
    format_utc, parse_census_csv, parse_infrastructure_csv, parse_outage_csv, parse_storm_events_csv,
    parse_utc, parse_weather_csv, read_panel_csv, read_statics_csv, write_census_csv,
    write_infrastructure_csv, write_outage_csv, write_panel_csv, write_statics_csv,
    write_storm_events_csv, write_weather_csv,
};
pub use panel::{build_panel, resample_outages_hourly, HourlyOutages, PanelDataset};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_WEATHER: usize = 8;

/// Weather feature names, in panel order.
pub const WEATHER_FIELDS: [&str; N_WEATHER] = [
    "temp_f",
    "precip_in",
    "wind_kmh",
    "gust_kmh",
    "swr_wm2",
    "rh_pct",
    "cloud_pct",
    "pressure_hpa",
];

pub const INFRA_CATEGORIES: [&str; 5] = ["poles", "towers", "substations", "transformers", "lines"];

pub const BUILDING_AGE_BUCKETS: [&str; 3] = ["built_pre1960", "built_1960_1999", "built_2000_plus"];

/// A panel cell: observed, filled in by imputation, or absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Obs<T> {
    Present(T),
    Imputed(T),
    Missing,
}

impl<T: Copy> Obs<T> {
    /// The value regardless of provenance.
    pub fn value(&self) -> Option<T> {
        match *self {
            Obs::Present(v) | Obs::Imputed(v) => Some(v),
            Obs::Missing => None,
        }
    }

    /// Only originally observed values.
    pub fn observed(&self) -> Option<T> {
        match *self {
            Obs::Present(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Obs::Missing)
    }

    pub fn is_imputed(&self) -> bool {
        matches!(self, Obs::Imputed(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub county_id: String,
    pub timestamp: DateTime<Utc>,
    pub customers_out: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub county_id: String,
    pub timestamp: DateTime<Utc>,
    /// Indexed like [`WEATHER_FIELDS`].
    pub values: [Option<f64>; N_WEATHER],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusRecord {
    pub county_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub avg_household_income: f64,
    pub unemployment_rate: f64,
    pub building_age_distribution: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfraRecord {
    pub county_id: String,
    pub counts: [u64; 5],
}

/// Socio-economic and infrastructure description of one county.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountyStatic {
    pub county_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub avg_household_income: f64,
    pub unemployment_rate: f64,
    pub building_age_distribution: [f64; 3],
    pub infra_counts: [u64; 5],
    /// Share of the state-wide total per infrastructure category.
    pub infra_shares: [f64; 5],
}

impl CountyStatic {
    pub const FEATURE_NAMES: [&'static str; 10] = [
        "income_usd",
        "unemployment_pct",
        "built_pre1960",
        "built_1960_1999",
        "built_2000_plus",
        "share_poles",
        "share_towers",
        "share_substations",
        "share_transformers",
        "share_lines",
    ];

    /// Socio-economic fields followed by infrastructure shares.
    pub fn feature_vector(&self) -> [f64; 10] {
        let b = &self.building_age_distribution;
        let s = &self.infra_shares;
        [
            self.avg_household_income,
            self.unemployment_rate,
            b[0],
            b[1],
            b[2],
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StormEvent {
    pub county_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub event_type: String,
}

/// Column-wise normalization: each county's count divided by the state
/// total of that category.
pub fn normalize_infrastructure(counts: &[[u64; 5]]) -> Result<Vec<[f64; 5]>> {
    let mut totals = [0u64; 5];
    for row in counts {
        for (t, c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    if let Some(k) = totals.iter().position(|&t| t == 0) {
        return Err(Error::ZeroColumn(INFRA_CATEGORIES[k].to_string()));
    }
    Ok(counts
        .iter()
        .map(|row| {
            let mut shares = [0.0; 5];
            for k in 0..5 {
                shares[k] = row[k] as f64 / totals[k] as f64;
            }
            shares
        })
        .collect())
}

/// Join census and infrastructure rows into per-county statics, sorted by
/// county id. Both inputs must cover the same set of counties.
pub fn assemble_statics(census: &[CensusRecord], infra: &[InfraRecord]) -> Result<Vec<CountyStatic>> {
    let mut census: Vec<&CensusRecord> = census.iter().collect();
    census.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    let mut infra: Vec<&InfraRecord> = infra.iter().collect();
    infra.sort_by(|a, b| a.county_id.cmp(&b.county_id));

    let census_ids: Vec<&str> = census.iter().map(|c| c.county_id.as_str()).collect();
    let infra_ids: Vec<&str> = infra.iter().map(|c| c.county_id.as_str()).collect();
    if census_ids != infra_ids {
        let mut odd: Vec<String> = census_ids
            .iter()
            .filter(|id| !infra_ids.contains(id))
            .chain(infra_ids.iter().filter(|id| !census_ids.contains(id)))
            .map(|s| s.to_string())
            .collect();
        odd.sort();
        odd.dedup();
        return Err(Error::UnknownCounties(odd));
    }

    let counts: Vec<[u64; 5]> = infra.iter().map(|r| r.counts).collect();
    let shares = normalize_infrastructure(&counts)?;
    Ok(census
        .iter()
        .zip(infra)
        .zip(shares)
        .map(|((c, i), s)| CountyStatic {
            county_id: c.county_id.clone(),
            latitude: c.latitude,
            longitude: c.longitude,
            avg_household_income: c.avg_household_income,
            unemployment_rate: c.unemployment_rate,
            building_age_distribution: c.building_age_distribution,
            infra_counts: i.counts,
            infra_shares: s,
        })
        .collect())
}
