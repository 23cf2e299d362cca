//! Reproducible toy inputs with injected storms and a known outage process.
//!
//! Outages follow [`outage_response`]: half of the previous hour's outages
//! persist, and new ones come from the previous hour's precipitation and
//! gusts above 40 km/h, scaled by the county's pole exposure. One 48-hour
//! storm in the first county, starting on the day boundary nearest 80% of
//! the horizon, is written into the config as the held-out event.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Holdout, InputPaths, PanelRange, PipelineConfig};
use crate::error::{Error, Result};
use crate::ingest::{
    format_utc, write_census_csv, write_infrastructure_csv, write_outage_csv, write_storm_events_csv,
    write_weather_csv, CensusRecord, InfraRecord, OutageRecord, StormEvent, WeatherRecord, N_WEATHER,
};

const EVENT_HOURS: usize = 48;
/// No regional storm comes within this many hours of the held-out event.
const EVENT_GUARD: usize = 72;
const STORM_TYPES: [&str; 3] = ["Thunderstorm Wind", "Heavy Rain", "High Wind"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub counties: usize,
    pub hours: usize,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            counties: 5,
            hours: 2000,
            seed: 7,
            start: Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// New outage level given last hour's level and weather.
pub fn outage_response(prev: f64, exposure: f64, precip_prev: f64, gust_prev: f64, noise: f64) -> f64 {
    let gust_excess = (gust_prev - 40.0).max(0.0);
    (0.5 * prev + exposure * (150.0 * precip_prev + 0.08 * gust_excess * gust_excess) + noise).round()
}

struct County {
    id: String,
    census: CensusRecord,
    infra: InfraRecord,
    exposure: f64,
}

fn make_counties(n: usize, rng: &mut ChaCha8Rng) -> Vec<County> {
    let mut out: Vec<County> = (0..n)
        .map(|i| {
            let id = format!("26{:03}", 2 * i + 1);
            let mut ages = [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)];
            let total: f64 = ages.iter().sum();
            ages.iter_mut().for_each(|a| *a /= total);
            let census = CensusRecord {
                county_id: id.clone(),
                latitude: rng.random_range(42.0..45.5),
                longitude: rng.random_range(-86.5..-83.0),
                avg_household_income: rng.random_range(40_000.0..90_000.0f64).round(),
                unemployment_rate: rng.random_range(3.0..10.0),
                building_age_distribution: ages,
            };
            let infra = InfraRecord {
                county_id: id.clone(),
                counts: [
                    rng.random_range(5_000..40_000),
                    rng.random_range(50..500),
                    rng.random_range(10..80),
                    rng.random_range(2_000..20_000),
                    rng.random_range(100..1_000),
                ],
            };
            County {
                id,
                census,
                infra,
                exposure: 0.0,
            }
        })
        .collect();
    let mean_poles = out.iter().map(|c| c.infra.counts[0] as f64).sum::<f64>() / n as f64;
    for c in &mut out {
        c.exposure = c.infra.counts[0] as f64 / mean_poles;
    }
    out
}

/// Per county, per hour storm strength in [0, 1] (zero outside storms).
fn schedule_storms(
    counties: &[County],
    hours: usize,
    event: (usize, usize),
    start: DateTime<Utc>,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<StormEvent>) {
    let mut strength = vec![vec![0.0; hours]; counties.len()];
    let mut events = Vec::new();
    let mut paint = |c: usize, from: usize, len: usize, s: f64, kind: &str, strength: &mut Vec<Vec<f64>>| {
        for k in 0..len {
            // bell-shaped over the storm, never quite zero inside it
            let shape = 0.3 + 0.7 * (PI * (k as f64 + 0.5) / len as f64).sin();
            strength[c][from + k] = strength[c][from + k].max(s * shape);
        }
        events.push(StormEvent {
            county_id: counties[c].id.clone(),
            start: start + Duration::hours(from as i64),
            end: start + Duration::hours((from + len - 1) as i64),
            event_type: kind.to_string(),
        });
    };

    let (ev0, ev1) = event;
    let guard = (ev0.saturating_sub(EVENT_GUARD), ev1 + EVENT_GUARD);
    let mut t = rng.random_range(24..96);
    while t < hours {
        let len = rng.random_range(6..=30).min(hours - t);
        let kind = STORM_TYPES[rng.random_range(0..STORM_TYPES.len())];
        let hits: Vec<(usize, f64)> = (0..counties.len())
            .filter_map(|c| rng.random_bool(0.7).then(|| (c, rng.random_range(0.5..1.0))))
            .collect();
        if t + len <= guard.0 || t > guard.1 {
            for (c, s) in hits {
                paint(c, t, len, s, kind, &mut strength);
            }
        }
        t += len + rng.random_range(60..=240);
    }
    paint(0, ev0, ev1 - ev0 + 1, 1.0, "Thunderstorm Wind", &mut strength);
    for c in 1..counties.len() {
        if rng.random_bool(0.7) {
            let s = rng.random_range(0.5..1.0);
            paint(c, ev0, ev1 - ev0 + 1, s, "Thunderstorm Wind", &mut strength);
        }
    }
    (strength, events)
}

fn weather_at(t: DateTime<Utc>, s: f64, rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> [f64; N_WEATHER] {
    let local = t + Duration::hours(-5);
    let hour = f64::from(local.hour());
    let doy = f64::from(local.ordinal());
    let temp = 55.0 + 20.0 * (2.0 * PI * (doy - 110.0) / 365.0).sin() + 8.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin()
        - 5.0 * s
        + 2.0 * normal.sample(rng);
    let precip = if s > 0.0 {
        s * rng.random_range(0.1..0.6)
    } else if rng.random_bool(0.03) {
        rng.random_range(0.0..0.05)
    } else {
        0.0
    };
    let wind = 10.0 + 5.0 * rng.random::<f64>() + 40.0 * s;
    let gust = 1.4 * wind + 5.0 * rng.random::<f64>() + 30.0 * s;
    let cloud = (30.0 + 60.0 * s + rng.random_range(-20.0..20.0)).clamp(0.0, 100.0);
    let swr = (800.0 * (PI * (hour - 6.0) / 12.0).sin()).max(0.0) * (1.0 - 0.7 * cloud / 100.0);
    let rh = (60.0 + 25.0 * s + 8.0 * normal.sample(rng)).clamp(0.0, 100.0);
    let pressure = 1013.0 - 20.0 * s + 3.0 * normal.sample(rng);
    let r = |v: f64, d: i32| {
        let p = 10f64.powi(d);
        (v * p).round() / p
    };
    [r(temp, 1), r(precip, 3), r(wind, 1), r(gust, 1), r(swr, 0), r(rh, 0), r(cloud, 0), r(pressure, 1)]
}

/// Write `inputs/*.csv` and `config.toml` under `out_dir`; returns the
/// config path.
pub fn synthesize(out_dir: impl AsRef<Path>, opts: &SynthOptions) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    if opts.counties < 2 {
        return Err(Error::Config("synth needs at least 2 counties".into()));
    }
    let min_hours = 2 * (EVENT_HOURS + EVENT_GUARD) + 24 * 10;
    if opts.hours < min_hours {
        return Err(Error::Config(format!("synth needs at least {min_hours} hours")));
    }
    if opts.start.minute() != 0 || opts.start.second() != 0 || opts.start.nanosecond() != 0 {
        return Err(Error::Config("synth start must be on an hour boundary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let counties = make_counties(opts.counties, &mut rng);
    let ev0 = (opts.hours * 4 / 5) / 24 * 24;
    let ev1 = ev0 + EVENT_HOURS - 1;
    let (strength, storms) = schedule_storms(&counties, opts.hours, (ev0, ev1), opts.start, &mut rng);

    let mut outages = Vec::new();
    let mut weather = Vec::new();
    for (c, county) in counties.iter().enumerate() {
        let mut prev_y = 0.0;
        let mut prev_w: Option<[f64; N_WEATHER]> = None;
        for h in 0..opts.hours {
            let t = opts.start + Duration::hours(h as i64);
            let w = weather_at(t, strength[c][h], &mut rng, &normal);
            let (precip, gust) = prev_w.map_or((0.0, 0.0), |p| (p[1], p[3]));
            let y = outage_response(prev_y, county.exposure, precip, gust, rng.random_range(0.0..4.0));

            let mut values = [None; N_WEATHER];
            for (slot, v) in values.iter_mut().zip(w) {
                if !rng.random_bool(0.01) {
                    *slot = Some(v);
                }
            }
            weather.push(WeatherRecord {
                county_id: county.id.clone(),
                timestamp: t,
                values,
            });

            let hour_missing = rng.random_bool(0.003);
            let peak = rng.random_range(0..4);
            for q in 0..4 {
                let v = if q == peak { y } else { (y * rng.random_range(0.6..1.0)).floor() };
                let dropped = q != peak && rng.random_bool(0.01);
                if !hour_missing && !dropped {
                    outages.push(OutageRecord {
                        county_id: county.id.clone(),
                        timestamp: t + Duration::minutes(15 * q as i64),
                        customers_out: v as u32,
                    });
                }
            }
            prev_y = y;
            prev_w = Some(w);
        }
    }

    let inputs = InputPaths {
        outages: "inputs/outages.csv".into(),
        weather: "inputs/weather.csv".into(),
        census: "inputs/census.csv".into(),
        infrastructure: "inputs/infrastructure.csv".into(),
        storms: "inputs/storms.csv".into(),
    };
    let census: Vec<CensusRecord> = counties.iter().map(|c| c.census.clone()).collect();
    let infra: Vec<InfraRecord> = counties.iter().map(|c| c.infra.clone()).collect();
    write_outage_csv(out_dir.join(&inputs.outages), &outages)?;
    write_weather_csv(out_dir.join(&inputs.weather), &weather)?;
    write_census_csv(out_dir.join(&inputs.census), &census)?;
    write_infrastructure_csv(out_dir.join(&inputs.infrastructure), &infra)?;
    write_storm_events_csv(out_dir.join(&inputs.storms), &storms)?;

    let at = |h: usize| format_utc(opts.start + Duration::hours(h as i64));
    let cfg = PipelineConfig {
        seed: opts.seed,
        utc_offset_hours: -5,
        inputs,
        panel: PanelRange {
            start: Some(at(0)),
            end: Some(at(opts.hours)),
        },
        impute: Default::default(),
        hilp: Default::default(),
        features: Default::default(),
        rebalance: Default::default(),
        models: Default::default(),
        holdout: Holdout {
            event_id: "synth-storm".into(),
            county_id: counties[0].id.clone(),
            start: at(ev0),
            end: at(ev1),
        },
    };
    let path = out_dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_outage_csv;

    #[test]
    fn response_by_hand() {
        assert_eq!(outage_response(100.0, 1.0, 0.0, 0.0, 0.0), 50.0);
        // 0.5·10 + 2·(150·0.2 + 0.08·10²) + 1 = 5 + 76 + 1
        assert_eq!(outage_response(10.0, 2.0, 0.2, 50.0, 1.0), 82.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let opts = SynthOptions {
            counties: 3,
            hours: 600,
            ..Default::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        synthesize(a.path(), &opts).unwrap();
        synthesize(b.path(), &opts).unwrap();
        for f in ["config.toml", "inputs/outages.csv", "inputs/weather.csv", "inputs/storms.csv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn config_parses_and_event_is_a_storm() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            counties: 3,
            hours: 600,
            ..Default::default()
        };
        let path = synthesize(dir.path(), &opts).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap().resolved().unwrap();
        let (a, b) = cfg.holdout.window().unwrap();
        assert_eq!((b - a).num_hours() as usize, EVENT_HOURS - 1);
        let storms = crate::ingest::parse_storm_events_csv(dir.path().join("inputs/storms.csv")).unwrap();
        assert!(storms.iter().any(|s| s.county_id == cfg.holdout.county_id && s.start == a && s.end == b));
        assert!(!parse_outage_csv(dir.path().join("inputs/outages.csv")).unwrap().is_empty());
    }

    #[test]
    fn rejects_tiny_requests() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions { counties: 1, ..Default::default() };
        assert!(synthesize(dir.path(), &opts).is_err());
        let opts = SynthOptions { hours: 50, ..Default::default() };
        assert!(synthesize(dir.path(), &opts).is_err());
    }
}
