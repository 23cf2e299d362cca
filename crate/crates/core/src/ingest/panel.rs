use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Duration, FixedOffset, Timelike, Utc};

use super::{CountyStatic, Obs, OutageRecord, WeatherRecord, N_WEATHER};
use crate::error::{Error, Result};

/// Hourly outage maxima: county id → hour start → customers out.
/// Hours without any quarter-hour reading are absent.
pub type HourlyOutages = BTreeMap<String, BTreeMap<DateTime<Utc>, u32>>;

/// Collapse quarter-hour readings to hourly values, keeping the worst
/// (largest) reading inside each hour.
pub fn resample_outages_hourly(records: &[OutageRecord]) -> HourlyOutages {
    let mut out: HourlyOutages = BTreeMap::new();
    for r in records {
        let hour = floor_hour(r.timestamp);
        let slot = out.entry(r.county_id.clone()).or_default().entry(hour).or_insert(0);
        *slot = (*slot).max(r.customers_out);
    }
    out
}

pub(crate) fn floor_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    t.with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
        .expect("zeroing minutes is always valid")
}

/// Rectangular county × hour grid of outages and weather.
///
/// Cells are stored county-major. Counties are sorted by id and the hour
/// axis starts at `start` with a fixed one-hour step, so every
/// (county, hour) pair exists.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    counties: Vec<String>,
    start: DateTime<Utc>,
    n_hours: usize,
    outages: Vec<Obs<u32>>,
    weather: Vec<[Obs<f64>; N_WEATHER]>,
    statics: Vec<CountyStatic>,
}

impl PanelDataset {
    /// Assemble a panel from pre-laid-out cells (county-major).
    pub fn from_cells(
        statics: Vec<CountyStatic>,
        start: DateTime<Utc>,
        n_hours: usize,
        outages: Vec<Obs<u32>>,
        weather: Vec<[Obs<f64>; N_WEATHER]>,
    ) -> Result<Self> {
        let n_cells = statics.len() * n_hours;
        if outages.len() != n_cells || weather.len() != n_cells {
            return Err(Error::IncompletePanel(format!(
                "expected {n_cells} cells, got {} outage and {} weather",
                outages.len(),
                weather.len()
            )));
        }
        if floor_hour(start) != start {
            return Err(Error::IncompletePanel(format!("start {start} is not on an hour boundary")));
        }
        let counties: Vec<String> = statics.iter().map(|s| s.county_id.clone()).collect();
        if counties.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::IncompletePanel("counties must be unique and sorted".into()));
        }
        Ok(PanelDataset {
            counties,
            start,
            n_hours,
            outages,
            weather,
            statics,
        })
    }

    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn n_counties(&self) -> usize {
        self.counties.len()
    }

    pub fn n_hours(&self) -> usize {
        self.n_hours
    }

    pub fn cell_count(&self) -> usize {
        self.outages.len()
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// One past the last hour.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.n_hours)
    }

    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + Duration::hours(hour as i64)
    }

    pub fn hour_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let delta = t - self.start;
        if delta < Duration::zero() || delta.num_seconds() % 3600 != 0 {
            return None;
        }
        let h = delta.num_hours() as usize;
        (h < self.n_hours).then_some(h)
    }

    /// Calendar month (1–12) of `hour` at a fixed UTC offset.
    pub fn month(&self, hour: usize, utc_offset_hours: i32) -> u32 {
        local_month(self.timestamp(hour), utc_offset_hours)
    }

    pub fn county_index(&self, county_id: &str) -> Option<usize> {
        self.counties.binary_search_by(|c| c.as_str().cmp(county_id)).ok()
    }

    pub fn statics(&self) -> &[CountyStatic] {
        &self.statics
    }

    pub fn county_static(&self, county: usize) -> &CountyStatic {
        &self.statics[county]
    }

    fn idx(&self, county: usize, hour: usize) -> usize {
        debug_assert!(county < self.counties.len() && hour < self.n_hours);
        county * self.n_hours + hour
    }

    pub fn outage(&self, county: usize, hour: usize) -> Obs<u32> {
        self.outages[self.idx(county, hour)]
    }

    pub fn set_outage(&mut self, county: usize, hour: usize, v: Obs<u32>) {
        let i = self.idx(county, hour);
        self.outages[i] = v;
    }

    pub fn weather(&self, county: usize, hour: usize) -> &[Obs<f64>; N_WEATHER] {
        &self.weather[self.idx(county, hour)]
    }

    pub fn set_weather(&mut self, county: usize, hour: usize, field: usize, v: Obs<f64>) {
        let i = self.idx(county, hour);
        self.weather[i][field] = v;
    }

    /// The weather vector with every field filled, or `None` if any is missing.
    pub fn weather_values(&self, county: usize, hour: usize) -> Option<[f64; N_WEATHER]> {
        let cell = self.weather(county, hour);
        let mut out = [0.0; N_WEATHER];
        for (o, c) in out.iter_mut().zip(cell) {
            *o = c.value()?;
        }
        Some(out)
    }

    pub fn missing_weather_count(&self) -> usize {
        self.weather.iter().flatten().filter(|o| o.is_missing()).count()
    }

    pub fn missing_outage_count(&self) -> usize {
        self.outages.iter().filter(|o| o.is_missing()).count()
    }
}

pub(crate) fn local_month(t: DateTime<Utc>, utc_offset_hours: i32) -> u32 {
    let offset = FixedOffset::east_opt(utc_offset_hours * 3600).expect("offset within ±24h");
    t.with_timezone(&offset).month()
}

/// Align hourly outages and weather onto a `[start, end)` hour grid.
///
/// Every county in `statics` gets a row; county ids seen in the dynamic
/// data but absent from `statics` are rejected. Data outside the range is
/// ignored.
pub fn build_panel(
    outages: &HourlyOutages,
    weather: &[WeatherRecord],
    statics: &[CountyStatic],
    start: DateTime<Utc>,
    end: DateTime<Utc>,
) -> Result<PanelDataset> {
    if floor_hour(start) != start || floor_hour(end) != end || end <= start {
        return Err(Error::Config(format!("bad panel range [{start}, {end})")));
    }
    let mut statics = statics.to_vec();
    statics.sort_by(|a, b| a.county_id.cmp(&b.county_id));
    let known: BTreeSet<&str> = statics.iter().map(|s| s.county_id.as_str()).collect();
    let unknown: BTreeSet<String> = outages
        .keys()
        .map(String::as_str)
        .chain(weather.iter().map(|w| w.county_id.as_str()))
        .filter(|id| !known.contains(id))
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCounties(unknown.into_iter().collect()));
    }

    let n_hours = (end - start).num_hours() as usize;
    let n = statics.len() * n_hours;
    let mut panel = PanelDataset::from_cells(
        statics,
        start,
        n_hours,
        vec![Obs::Missing; n],
        vec![[Obs::Missing; N_WEATHER]; n],
    )?;

    for (county_id, series) in outages {
        let c = panel.county_index(county_id).expect("checked above");
        for (&t, &v) in series.range(start..end) {
            let h = panel.hour_of(t).expect("hour-aligned and in range");
            panel.set_outage(c, h, Obs::Present(v));
        }
    }
    for w in weather {
        let c = panel.county_index(&w.county_id).expect("checked above");
        let Some(h) = panel.hour_of(w.timestamp) else { continue };
        for (f, v) in w.values.iter().enumerate() {
            if let Some(v) = v {
                panel.set_weather(c, h, f, Obs::Present(*v));
            }
        }
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(d: u32, h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 6, d, h, m, 0).unwrap()
    }

    fn stat(id: &str) -> CountyStatic {
        CountyStatic {
            county_id: id.into(),
            latitude: 42.0,
            longitude: -83.0,
            avg_household_income: 50_000.0,
            unemployment_rate: 5.0,
            building_age_distribution: [0.3, 0.4, 0.3],
            infra_counts: [1; 5],
            infra_shares: [0.5; 5],
        }
    }

    fn rec(c: &str, t: DateTime<Utc>, v: u32) -> OutageRecord {
        OutageRecord {
            county_id: c.into(),
            timestamp: t,
            customers_out: v,
        }
    }

    #[test]
    fn hourly_max_of_quarters() {
        let recs = vec![
            rec("A", ts(6, 14, 0), 100),
            rec("A", ts(6, 14, 15), 250),
            rec("A", ts(6, 14, 30), 180),
            rec("A", ts(6, 14, 45), 90),
            rec("A", ts(6, 15, 30), 7),
        ];
        let hourly = resample_outages_hourly(&recs);
        let a = &hourly["A"];
        assert_eq!(a[&ts(6, 14, 0)], 250);
        assert_eq!(a[&ts(6, 15, 0)], 7);
        assert!(!a.contains_key(&ts(6, 16, 0)));
    }

    #[test]
    fn resample_idempotent_on_hourly_maxima() {
        let recs: Vec<_> = (0..10).map(|h| rec("A", ts(6, h, 0), h * 3 + 1)).collect();
        let once = resample_outages_hourly(&recs);
        let again: Vec<_> = once["A"].iter().map(|(&t, &v)| rec("A", t, v)).collect();
        assert_eq!(resample_outages_hourly(&again), once);
    }

    fn complete_weather(ids: &[&str], hours: u32) -> Vec<WeatherRecord> {
        let mut out = vec![];
        for id in ids {
            for h in 0..hours {
                out.push(WeatherRecord {
                    county_id: id.to_string(),
                    timestamp: ts(1, 0, 0) + Duration::hours(h as i64),
                    values: [Some(1.0); N_WEATHER],
                });
            }
        }
        out
    }

    #[test]
    fn complete_two_county_panel() {
        let weather = complete_weather(&["A", "B"], 48);
        let mut outages = HourlyOutages::new();
        for id in ["A", "B"] {
            let s = outages.entry(id.to_string()).or_default();
            for h in 0..48 {
                s.insert(ts(1, 0, 0) + Duration::hours(h), 3);
            }
        }
        let p = build_panel(&outages, &weather, &[stat("B"), stat("A")], ts(1, 0, 0), ts(3, 0, 0)).unwrap();
        assert_eq!(p.cell_count(), 96);
        assert_eq!(p.counties(), ["A", "B"]);
        assert_eq!(p.missing_weather_count(), 0);
        assert_eq!(p.missing_outage_count(), 0);
    }

    #[test]
    fn single_weather_gap() {
        let mut weather = complete_weather(&["A", "B"], 48);
        let gap = weather
            .iter_mut()
            .find(|w| w.county_id == "B" && w.timestamp == ts(1, 10, 0))
            .unwrap();
        gap.values[0] = None;
        let p = build_panel(&HourlyOutages::new(), &weather, &[stat("A"), stat("B")], ts(1, 0, 0), ts(3, 0, 0))
            .unwrap();
        assert_eq!(p.missing_weather_count(), 1);
        assert!(p.weather(1, 10)[0].is_missing());
    }

    #[test]
    fn unknown_county_rejected() {
        let mut outages = HourlyOutages::new();
        outages.entry("99999".into()).or_default().insert(ts(1, 0, 0), 5);
        match build_panel(&outages, &[], &[stat("A")], ts(1, 0, 0), ts(2, 0, 0)) {
            Err(Error::UnknownCounties(ids)) => assert_eq!(ids, vec!["99999"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn month_uses_offset() {
        let p = PanelDataset::from_cells(
            vec![stat("A")],
            Utc.with_ymd_and_hms(2020, 7, 1, 2, 0, 0).unwrap(),
            1,
            vec![Obs::Missing],
            vec![[Obs::Missing; N_WEATHER]],
        )
        .unwrap();
        assert_eq!(p.month(0, 0), 7);
        assert_eq!(p.month(0, -5), 6);
    }
}
