use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Timelike, Utc};

use super::{
    CensusRecord, CountyStatic, InfraRecord, Obs, OutageRecord, PanelDataset, StormEvent, WeatherRecord,
    INFRA_CATEGORIES, N_WEATHER, WEATHER_FIELDS,
};
use crate::error::{Error, Result};

const OUTAGE_HEADER: &[&str] = &["county_id", "timestamp_utc", "customers_out"];
const CENSUS_HEADER: &[&str] = &[
    "county_id",
    "lat",
    "lon",
    "income_usd",
    "unemployment_pct",
    "built_pre1960",
    "built_1960_1999",
    "built_2000_plus",
];
const INFRA_HEADER: &[&str] = &["county_id", "poles", "towers", "substations", "transformers", "lines"];
const STORM_HEADER: &[&str] = &["county_id", "start_utc", "end_utc", "event_type"];

fn weather_header() -> Vec<&'static str> {
    let mut h = vec!["county_id", "timestamp_utc"];
    h.extend(WEATHER_FIELDS);
    h
}

fn panel_header() -> Vec<&'static str> {
    let mut h = vec!["county_id", "timestamp_utc", "customers_out"];
    h.extend(WEATHER_FIELDS);
    h.push("imputed");
    h
}

fn statics_header() -> Vec<String> {
    let mut h: Vec<String> = CENSUS_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend(INFRA_CATEGORIES.iter().map(|s| s.to_string()));
    h.extend(INFRA_CATEGORIES.iter().map(|s| format!("share_{s}")));
    h
}

pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim()).ok().map(|d| d.with_timezone(&Utc))
}

pub fn format_utc(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

struct Table {
    label: String,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(rdr: R, label: &str, expected: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rdr);
        let found: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if found != expected {
            return Err(Error::Header {
                file: label.to_string(),
                expected: expected.join(","),
                found: found.join(","),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            label: label.to_string(),
            rows,
        })
    }

    fn open(path: &Path, expected: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Table::read(file, &path.display().to_string(), expected)
    }

    fn err(&self, row: u64, field: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.label.clone(),
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn text<'a>(&self, rec: &'a csv::StringRecord, row: u64, i: usize, name: &str) -> Result<&'a str> {
        rec.get(i).map(str::trim).ok_or_else(|| self.err(row, name, "missing column"))
    }

    fn county(&self, rec: &csv::StringRecord, row: u64) -> Result<String> {
        let id = self.text(rec, row, 0, "county_id")?;
        if id.is_empty() {
            return Err(self.err(row, "county_id", "empty county id"));
        }
        Ok(id.to_string())
    }

    fn num<T: FromStr>(&self, rec: &csv::StringRecord, row: u64, i: usize, name: &str) -> Result<T> {
        let s = self.text(rec, row, i, name)?;
        s.parse().map_err(|_| self.err(row, name, format!("cannot parse `{s}`")))
    }

    fn finite(&self, rec: &csv::StringRecord, row: u64, i: usize, name: &str) -> Result<f64> {
        let v: f64 = self.num(rec, row, i, name)?;
        if !v.is_finite() {
            return Err(self.err(row, name, "non-finite value"));
        }
        Ok(v)
    }

    fn opt_finite(&self, rec: &csv::StringRecord, row: u64, i: usize, name: &str) -> Result<Option<f64>> {
        if self.text(rec, row, i, name)?.is_empty() {
            return Ok(None);
        }
        self.finite(rec, row, i, name).map(Some)
    }

    fn time(&self, rec: &csv::StringRecord, row: u64, i: usize, name: &str) -> Result<DateTime<Utc>> {
        let s = self.text(rec, row, i, name)?;
        parse_utc(s).ok_or_else(|| self.err(row, name, format!("malformed timestamp `{s}`")))
    }
}

/// Parse and validate an outage file; records come back sorted by
/// (county, timestamp).
pub fn parse_outage_csv(path: impl AsRef<Path>) -> Result<Vec<OutageRecord>> {
    outages_from(Table::open(path.as_ref(), OUTAGE_HEADER)?)
}

fn outages_from(table: Table) -> Result<Vec<OutageRecord>> {
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let county_id = table.county(rec, row)?;
        let timestamp = table.time(rec, row, 1, "timestamp_utc")?;
        if timestamp.minute() % 15 != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
            return Err(table.err(row, "timestamp_utc", "not on a 15-minute boundary"));
        }
        let raw: i64 = table.num(rec, row, 2, "customers_out")?;
        if raw < 0 {
            return Err(table.err(row, "customers_out", format!("negative count {raw}")));
        }
        let customers_out = u32::try_from(raw).map_err(|_| table.err(row, "customers_out", "count too large"))?;
        out.push((
            row,
            OutageRecord {
                county_id,
                timestamp,
                customers_out,
            },
        ));
    }
    out.sort_by(|(ra, a), (rb, b)| (&a.county_id, a.timestamp, ra).cmp(&(&b.county_id, b.timestamp, rb)));
    for w in out.windows(2) {
        if w[0].1.county_id == w[1].1.county_id && w[0].1.timestamp == w[1].1.timestamp {
            let row = w[0].0.max(w[1].0);
            return Err(table.err(row, "timestamp_utc", "duplicate (county, timestamp)"));
        }
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

pub fn parse_weather_csv(path: impl AsRef<Path>) -> Result<Vec<WeatherRecord>> {
    weather_from(Table::open(path.as_ref(), &weather_header())?)
}

fn weather_from(table: Table) -> Result<Vec<WeatherRecord>> {
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let county_id = table.county(rec, row)?;
        let timestamp = table.time(rec, row, 1, "timestamp_utc")?;
        if timestamp.minute() != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
            return Err(table.err(row, "timestamp_utc", "not on an hour boundary"));
        }
        let mut values = [None; N_WEATHER];
        for (f, name) in WEATHER_FIELDS.iter().enumerate() {
            values[f] = table.opt_finite(rec, row, f + 2, name)?;
        }
        if let Some(p) = values[1] {
            if p < 0.0 {
                return Err(table.err(row, "precip_in", "negative precipitation"));
            }
        }
        for f in [5, 6] {
            if let Some(v) = values[f] {
                if !(0.0..=100.0).contains(&v) {
                    return Err(table.err(row, WEATHER_FIELDS[f], "percentage outside [0, 100]"));
                }
            }
        }
        out.push((
            row,
            WeatherRecord {
                county_id,
                timestamp,
                values,
            },
        ));
    }
    out.sort_by(|(ra, a), (rb, b)| (&a.county_id, a.timestamp, ra).cmp(&(&b.county_id, b.timestamp, rb)));
    for w in out.windows(2) {
        if w[0].1.county_id == w[1].1.county_id && w[0].1.timestamp == w[1].1.timestamp {
            let row = w[0].0.max(w[1].0);
            return Err(table.err(row, "timestamp_utc", "duplicate (county, timestamp)"));
        }
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

fn reject_duplicate_ids(table: &Table, ids: impl Iterator<Item = (u64, String)>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (row, id) in ids {
        if !seen.insert(id) {
            return Err(table.err(row, "county_id", "duplicate county"));
        }
    }
    Ok(())
}

pub fn parse_census_csv(path: impl AsRef<Path>) -> Result<Vec<CensusRecord>> {
    census_from(Table::open(path.as_ref(), CENSUS_HEADER)?)
}

fn census_from(table: Table) -> Result<Vec<CensusRecord>> {
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let mut dist = [0.0; 3];
        for (k, d) in dist.iter_mut().enumerate() {
            *d = table.finite(rec, row, 5 + k, CENSUS_HEADER[5 + k])?;
            if *d < 0.0 {
                return Err(table.err(row, CENSUS_HEADER[5 + k], "negative fraction"));
            }
        }
        out.push(CensusRecord {
            county_id: table.county(rec, row)?,
            latitude: table.finite(rec, row, 1, "lat")?,
            longitude: table.finite(rec, row, 2, "lon")?,
            avg_household_income: table.finite(rec, row, 3, "income_usd")?,
            unemployment_rate: table.finite(rec, row, 4, "unemployment_pct")?,
            building_age_distribution: dist,
        });
    }
    reject_duplicate_ids(&table, table.rows.iter().map(|r| r.0).zip(out.iter().map(|c| c.county_id.clone())))?;
    out.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    Ok(out)
}

pub fn parse_infrastructure_csv(path: impl AsRef<Path>) -> Result<Vec<InfraRecord>> {
    infra_from(Table::open(path.as_ref(), INFRA_HEADER)?)
}

fn infra_from(table: Table) -> Result<Vec<InfraRecord>> {
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let mut counts = [0u64; 5];
        for (k, c) in counts.iter_mut().enumerate() {
            let raw: i64 = table.num(rec, row, k + 1, INFRA_CATEGORIES[k])?;
            *c = u64::try_from(raw).map_err(|_| table.err(row, INFRA_CATEGORIES[k], "negative count"))?;
        }
        out.push(InfraRecord {
            county_id: table.county(rec, row)?,
            counts,
        });
    }
    reject_duplicate_ids(&table, table.rows.iter().map(|r| r.0).zip(out.iter().map(|c| c.county_id.clone())))?;
    out.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    Ok(out)
}

pub fn parse_storm_events_csv(path: impl AsRef<Path>) -> Result<Vec<StormEvent>> {
    storms_from(Table::open(path.as_ref(), STORM_HEADER)?)
}

fn storms_from(table: Table) -> Result<Vec<StormEvent>> {
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let start = table.time(rec, row, 1, "start_utc")?;
        let end = table.time(rec, row, 2, "end_utc")?;
        if end < start {
            return Err(table.err(row, "end_utc", "storm ends before it starts"));
        }
        out.push(StormEvent {
            county_id: table.county(rec, row)?,
            start,
            end,
            event_type: table.text(rec, row, 3, "event_type")?.to_string(),
        });
    }
    out.sort_by(|a, b| (&a.county_id, a.start, a.end).cmp(&(&b.county_id, b.start, b.end)));
    Ok(out)
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_outage_csv(path: impl AsRef<Path>, records: &[OutageRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(OUTAGE_HEADER)?;
    for r in records {
        w.write_record([r.county_id.clone(), format_utc(r.timestamp), r.customers_out.to_string()])?;
    }
    finish(w, path)
}

pub fn write_weather_csv(path: impl AsRef<Path>, records: &[WeatherRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(weather_header())?;
    for r in records {
        let mut row = vec![r.county_id.clone(), format_utc(r.timestamp)];
        row.extend(r.values.iter().map(|v| fmt_opt(*v)));
        w.write_record(row)?;
    }
    finish(w, path)
}

pub fn write_census_csv(path: impl AsRef<Path>, records: &[CensusRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(CENSUS_HEADER)?;
    for r in records {
        let b = r.building_age_distribution;
        w.write_record([
            r.county_id.clone(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.avg_household_income.to_string(),
            r.unemployment_rate.to_string(),
            b[0].to_string(),
            b[1].to_string(),
            b[2].to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_infrastructure_csv(path: impl AsRef<Path>, records: &[InfraRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(INFRA_HEADER)?;
    for r in records {
        let mut row = vec![r.county_id.clone()];
        row.extend(r.counts.iter().map(|c| c.to_string()));
        w.write_record(row)?;
    }
    finish(w, path)
}

pub fn write_storm_events_csv(path: impl AsRef<Path>, storms: &[StormEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(STORM_HEADER)?;
    for s in storms {
        w.write_record([s.county_id.clone(), format_utc(s.start), format_utc(s.end), s.event_type.clone()])?;
    }
    finish(w, path)
}

pub fn write_statics_csv(path: impl AsRef<Path>, statics: &[CountyStatic]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(statics_header())?;
    for s in statics {
        let mut row = vec![
            s.county_id.clone(),
            s.latitude.to_string(),
            s.longitude.to_string(),
            s.avg_household_income.to_string(),
            s.unemployment_rate.to_string(),
        ];
        row.extend(s.building_age_distribution.iter().map(f64::to_string));
        row.extend(s.infra_counts.iter().map(u64::to_string));
        row.extend(s.infra_shares.iter().map(f64::to_string));
        w.write_record(row)?;
    }
    finish(w, path)
}

pub fn read_statics_csv(path: impl AsRef<Path>) -> Result<Vec<CountyStatic>> {
    let header = statics_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let table = Table::open(path.as_ref(), &header)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let mut dist = [0.0; 3];
        let mut counts = [0u64; 5];
        let mut shares = [0.0; 5];
        for k in 0..3 {
            dist[k] = table.finite(rec, row, 5 + k, header[5 + k])?;
        }
        for k in 0..5 {
            counts[k] = table.num(rec, row, 8 + k, header[8 + k])?;
            shares[k] = table.finite(rec, row, 13 + k, header[13 + k])?;
        }
        out.push(CountyStatic {
            county_id: table.county(rec, row)?,
            latitude: table.finite(rec, row, 1, "lat")?,
            longitude: table.finite(rec, row, 2, "lon")?,
            avg_household_income: table.finite(rec, row, 3, "income_usd")?,
            unemployment_rate: table.finite(rec, row, 4, "unemployment_pct")?,
            building_age_distribution: dist,
            infra_counts: counts,
            infra_shares: shares,
        });
    }
    out.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    Ok(out)
}

/// Panel layout: one row per (county, hour), county-major. The `imputed`
/// column is a 9-character mask over `customers_out` and the 8 weather
/// fields, `i` for an imputed cell and `-` otherwise.
pub fn write_panel_csv(path: impl AsRef<Path>, panel: &PanelDataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(panel_header())?;
    for (c, county) in panel.counties().iter().enumerate() {
        for h in 0..panel.n_hours() {
            let y = panel.outage(c, h);
            let cells = panel.weather(c, h);
            let mut row = Vec::with_capacity(12);
            row.push(county.clone());
            row.push(format_utc(panel.timestamp(h)));
            row.push(y.value().map(|v| v.to_string()).unwrap_or_default());
            row.extend(cells.iter().map(|o| fmt_opt(o.value())));
            let mask: String = std::iter::once(y.is_imputed())
                .chain(cells.iter().map(Obs::is_imputed))
                .map(|i| if i { 'i' } else { '-' })
                .collect();
            row.push(mask);
            w.write_record(row)?;
        }
    }
    finish(w, path)
}

type PanelRow = (DateTime<Utc>, Obs<u32>, [Obs<f64>; N_WEATHER]);

pub fn read_panel_csv(panel_path: impl AsRef<Path>, statics_path: impl AsRef<Path>) -> Result<PanelDataset> {
    let statics = read_statics_csv(statics_path)?;
    let header = panel_header();
    let table = Table::open(panel_path.as_ref(), &header)?;

    let mut by_county: BTreeMap<String, Vec<(u64, PanelRow)>> = BTreeMap::new();
    for (row, rec) in &table.rows {
        let row = *row;
        let county = table.county(rec, row)?;
        let t = table.time(rec, row, 1, "timestamp_utc")?;
        let mask = table.text(rec, row, 11, "imputed")?;
        if mask.len() != N_WEATHER + 1 || !mask.chars().all(|ch| ch == 'i' || ch == '-') {
            return Err(table.err(row, "imputed", format!("bad mask `{mask}`")));
        }
        let flags: Vec<bool> = mask.chars().map(|ch| ch == 'i').collect();
        let wrap = |v: Option<f64>, imputed: bool, name: &str| -> Result<Obs<f64>> {
            match (v, imputed) {
                (Some(v), false) => Ok(Obs::Present(v)),
                (Some(v), true) => Ok(Obs::Imputed(v)),
                (None, false) => Ok(Obs::Missing),
                (None, true) => Err(table.err(row, name, "imputed flag on empty cell")),
            }
        };
        let y = match table.text(rec, row, 2, "customers_out")? {
            "" if flags[0] => return Err(table.err(row, "customers_out", "imputed flag on empty cell")),
            "" => Obs::Missing,
            _ => {
                let v: u32 = table.num(rec, row, 2, "customers_out")?;
                if flags[0] {
                    Obs::Imputed(v)
                } else {
                    Obs::Present(v)
                }
            }
        };
        let mut weather = [Obs::Missing; N_WEATHER];
        for f in 0..N_WEATHER {
            weather[f] = wrap(table.opt_finite(rec, row, 3 + f, WEATHER_FIELDS[f])?, flags[f + 1], WEATHER_FIELDS[f])?;
        }
        by_county.entry(county).or_default().push((row, (t, y, weather)));
    }

    let known: BTreeSet<&str> = statics.iter().map(|s| s.county_id.as_str()).collect();
    let unknown: Vec<String> = by_county.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCounties(unknown));
    }
    let first = by_county
        .values()
        .next()
        .ok_or_else(|| Error::IncompletePanel("panel file has no rows".into()))?;
    let start = first.iter().map(|(_, r)| r.0).min().expect("non-empty");
    let n_hours = first.len();

    let mut outages = Vec::with_capacity(statics.len() * n_hours);
    let mut weather = Vec::with_capacity(statics.len() * n_hours);
    for s in &statics {
        let rows = by_county
            .get(&s.county_id)
            .ok_or_else(|| Error::IncompletePanel(format!("no rows for county {}", s.county_id)))?;
        if rows.len() != n_hours {
            return Err(Error::IncompletePanel(format!(
                "county {} has {} rows, expected {n_hours}",
                s.county_id,
                rows.len()
            )));
        }
        let mut rows: Vec<&(u64, PanelRow)> = rows.iter().collect();
        rows.sort_by_key(|(_, r)| r.0);
        for (h, (line, (t, y, w))) in rows.into_iter().enumerate() {
            if *t != start + chrono::Duration::hours(h as i64) {
                return Err(table.err(*line, "timestamp_utc", "hour axis is not contiguous"));
            }
            outages.push(*y);
            weather.push(*w);
        }
    }
    PanelDataset::from_cells(statics, start, n_hours, outages, weather)
}
