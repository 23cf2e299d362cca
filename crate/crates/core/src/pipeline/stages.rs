use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use super::{Stage, StageManifest, StageRun};
use crate::error::{Error, Result};
use crate::eval::{emit_importance_plot, emit_series_plot, evaluate_event, EvalReport};
use crate::features::{
    build_feature_matrix, build_feature_rows, build_graph, read_feature_matrix, FeatureMatrix, write_feature_matrix, write_graph_csv,
};
use crate::hilp::{build_extreme_set, outage_quantile, read_extreme_set_csv, write_extreme_set_csv};
use crate::impute::{impute_missing, nearest_counties};
use crate::ingest::{
    assemble_statics, build_panel, parse_census_csv, parse_infrastructure_csv, parse_outage_csv,
    parse_storm_events_csv, parse_utc, parse_weather_csv, read_panel_csv, resample_outages_hourly, write_panel_csv,
    write_statics_csv, write_storm_events_csv, PanelDataset,
};
use crate::models::{load_model, save_model, train_model, ModelKind};
use crate::rebalance::rebalance_matrix;

const INGEST_PANEL: &str = "ingest/panel.csv";
const INGEST_STATICS: &str = "ingest/statics.csv";
const INGEST_STORMS: &str = "ingest/storms.csv";
const IMPUTED_PANEL: &str = "impute/panel.csv";
const EXTREME_SET: &str = "hilp/extreme_set.csv";
const TRAIN_CSV: &str = "features/train.csv";
const TRAIN_MANIFEST: &str = "features/train.manifest.json";
const EVENT_CSV: &str = "features/event.csv";
const EVENT_MANIFEST: &str = "features/event.manifest.json";
const BALANCED_CSV: &str = "rebalance/train.csv";
const BALANCED_MANIFEST: &str = "rebalance/train.manifest.json";

fn model_path(kind: ModelKind) -> String {
    format!("train/model_{kind}.json")
}

fn report_path(kind: ModelKind) -> String {
    format!("evaluate/report_{kind}.json")
}

fn parse_bound(s: &Option<String>, what: &str) -> Result<Option<DateTime<Utc>>> {
    s.as_deref()
        .map(|v| parse_utc(v).ok_or_else(|| Error::Config(format!("panel.{what}: bad timestamp {v:?}"))))
        .transpose()
}

pub(crate) fn ingest(mut run: StageRun) -> Result<StageManifest> {
    let cfg = run.config();
    let outages = parse_outage_csv(run.raw_input(&cfg.inputs.outages)?)?;
    let weather = parse_weather_csv(run.raw_input(&cfg.inputs.weather)?)?;
    let census = parse_census_csv(run.raw_input(&cfg.inputs.census)?)?;
    let infra = parse_infrastructure_csv(run.raw_input(&cfg.inputs.infrastructure)?)?;
    let storms = parse_storm_events_csv(run.raw_input(&cfg.inputs.storms)?)?;

    let hourly = resample_outages_hourly(&outages);
    let statics = assemble_statics(&census, &infra)?;
    let known: BTreeSet<&str> = statics.iter().map(|s| s.county_id.as_str()).collect();
    let unknown: BTreeSet<String> = storms
        .iter()
        .filter(|s| !known.contains(s.county_id.as_str()))
        .map(|s| s.county_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCounties(unknown.into_iter().collect()));
    }

    let first = hourly.values().filter_map(|s| s.keys().next()).min().copied();
    let last = hourly.values().filter_map(|s| s.keys().next_back()).max().copied();
    let start = match parse_bound(&cfg.panel.start, "start")? {
        Some(t) => t,
        None => first.ok_or_else(|| Error::Config("no outage records and no panel.start".into()))?,
    };
    let end = match parse_bound(&cfg.panel.end, "end")? {
        Some(t) => t,
        None => last.ok_or_else(|| Error::Config("no outage records and no panel.end".into()))? + Duration::hours(1),
    };
    let panel = build_panel(&hourly, &weather, &statics, start, end)?;

    write_panel_csv(run.output(INGEST_PANEL)?, &panel)?;
    write_statics_csv(run.output(INGEST_STATICS)?, panel.statics())?;
    write_storm_events_csv(run.output(INGEST_STORMS)?, &storms)?;
    run.note("counties", panel.n_counties());
    run.note("hours", panel.n_hours());
    run.note("missing_weather_values", panel.missing_weather_count());
    run.note("missing_outage_hours", panel.missing_outage_count());
    run.finish()
}

pub(crate) fn impute(mut run: StageRun) -> Result<StageManifest> {
    let opts = run.config().impute;
    let panel = read_panel_csv(run.artifact(Stage::Ingest, INGEST_PANEL)?, run.artifact(Stage::Ingest, INGEST_STATICS)?)?;
    let table = nearest_counties(panel.statics())?;
    let filled = impute_missing(&panel, &table, opts)?;
    write_panel_csv(run.output(IMPUTED_PANEL)?, &filled)?;
    run.note("filled_weather_values", panel.missing_weather_count() - filled.missing_weather_count());
    run.note("filled_outage_hours", panel.missing_outage_count() - filled.missing_outage_count());
    run.note("k", opts.k);
    run.finish()
}

fn imputed_panel(run: &mut StageRun) -> Result<PanelDataset> {
    let statics = run.artifact(Stage::Ingest, INGEST_STATICS)?;
    read_panel_csv(run.artifact(Stage::Impute, IMPUTED_PANEL)?, statics)
}

pub(crate) fn hilp(mut run: StageRun) -> Result<StageManifest> {
    let cfg = run.config().hilp.clone();
    let panel = imputed_panel(&mut run)?;
    let storms = parse_storm_events_csv(run.artifact(Stage::Ingest, INGEST_STORMS)?)?;
    let q = outage_quantile(&panel, &storms, cfg.alpha)?;
    let set = build_extreme_set(&panel, &storms, &cfg)?;
    write_extreme_set_csv(run.output(EXTREME_SET)?, &set, &panel)?;
    run.note("quantile", q);
    run.note("seeds", set.seeds.len());
    run.note("extreme_cells", set.len());
    run.finish()
}

/// Held-out county and hours: the event window `h0..=h1`, and the last hour
/// whose lag window still reaches into it.
fn holdout_cells(panel: &PanelDataset, run: &StageRun) -> Result<(usize, usize, usize, usize)> {
    let cfg = run.config();
    let (start, end) = cfg.holdout.window()?;
    let c = panel
        .county_index(&cfg.holdout.county_id)
        .ok_or_else(|| Error::UnknownCounties(vec![cfg.holdout.county_id.clone()]))?;
    let outside = || Error::Config(format!("holdout window [{start}, {end}] lies outside the panel"));
    let h0 = panel.hour_of(start).ok_or_else(outside)?;
    let h1 = panel.hour_of(end).ok_or_else(outside)?;
    let guard_end = (h1 + cfg.features.lag.n).min(panel.n_hours() - 1);
    Ok((c, h0, h1, guard_end))
}

pub(crate) fn features(mut run: StageRun) -> Result<StageManifest> {
    let cfg = run.config();
    let (lag, offset) = (cfg.features.lag, cfg.utc_offset_hours);
    let panel = imputed_panel(&mut run)?;
    let set = read_extreme_set_csv(run.artifact(Stage::Hilp, EXTREME_SET)?, &panel)?;

    let (c, h0, h1, guard_end) = holdout_cells(&panel, &run)?;
    // every county is left out over the event, so no training row shares a
    // timestamp with it
    let exclude: BTreeSet<(usize, usize)> =
        (0..panel.n_counties()).flat_map(|cc| (h0..=guard_end).map(move |h| (cc, h))).collect();
    let train = build_feature_matrix(&panel, &set, lag, offset, &exclude)?;
    let event = build_feature_rows(&panel, (h0..=h1).map(|h| (c, h)), lag, offset)?;
    if event.is_empty() {
        return Err(Error::EmptyMatrix(format!(
            "held-out event {} has no hour with {} hours of complete history",
            cfg.holdout.event_id, lag.n
        )));
    }
    write_feature_matrix(run.output(TRAIN_CSV)?, run.output(TRAIN_MANIFEST)?, &train, offset)?;
    write_feature_matrix(run.output(EVENT_CSV)?, run.output(EVENT_MANIFEST)?, &event, offset)?;

    let graph = build_graph(&panel, cfg.features.graph_radius_miles)?;
    write_graph_csv(
        run.output("features/graph_nodes.csv")?,
        run.output("features/graph_edges.csv")?,
        &graph,
        &panel,
    )?;
    run.note("train_rows", train.len());
    run.note("train_dropped", train.dropped);
    run.note("event_rows", event.len());
    run.note("excluded_cells", exclude.len());
    run.note("spatial_pairs", graph.spatial_pairs.len());
    run.finish()
}

pub(crate) fn rebalance(mut run: StageRun) -> Result<StageManifest> {
    let cfg = run.config().rebalance.clone();
    let offset = run.config().utc_offset_hours;
    let train = read_feature_matrix(run.artifact(Stage::Features, TRAIN_CSV)?, run.artifact(Stage::Features, TRAIN_MANIFEST)?)?;
    let out = rebalance_matrix(&train, &cfg)?;
    write_feature_matrix(run.output(BALANCED_CSV)?, run.output(BALANCED_MANIFEST)?, &out, offset)?;
    let frac = |m: &FeatureMatrix| m.targets.iter().filter(|&&t| t >= cfg.tau).count() as f64 / m.len() as f64;
    run.note("rows_before", train.len());
    run.note("rows_after", out.len());
    run.note("high_fraction_before", format!("{:.4}", frac(&train)));
    run.note("high_fraction_after", format!("{:.4}", frac(&out)));
    run.finish()
}

pub(crate) fn train(mut run: StageRun) -> Result<StageManifest> {
    let settings = run.config().models.clone();
    let m = read_feature_matrix(
        run.artifact(Stage::Rebalance, BALANCED_CSV)?,
        run.artifact(Stage::Rebalance, BALANCED_MANIFEST)?,
    )?;
    for &kind in &settings.kinds {
        let model = train_model(kind, &m, &settings.train)?;
        save_model(run.output(&model_path(kind))?, &model)?;
        if let crate::models::TrainedModel::Lstm(l) = &model {
            if let Some(last) = l.loss_curve.last() {
                run.note("lstm_final_loss", format!("{last:.6e}"));
            }
        }
    }
    run.note("rows", m.len());
    run.note("features", m.n_features());
    run.finish()
}

pub(crate) fn evaluate(mut run: StageRun) -> Result<StageManifest> {
    let cfg = run.config();
    let models = cfg
        .models
        .kinds
        .iter()
        .map(|&kind| Ok((kind, run.artifact(Stage::Train, &model_path(kind))?)))
        .collect::<Result<Vec<_>>>()?;
    let event = read_feature_matrix(run.artifact(Stage::Features, EVENT_CSV)?, run.artifact(Stage::Features, EVENT_MANIFEST)?)?;
    for (kind, path) in models {
        let model = load_model(path)?;
        let report = evaluate_event(&model, &event, &cfg.holdout.event_id)?;
        report.save(run.output(&report_path(kind))?)?;
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.3}"));
        run.note(&format!("{kind}_mape_pct"), fmt(report.mape_pct));
        run.note(&format!("{kind}_r2_pct"), fmt(report.r2_pct));
    }
    run.note("event_rows", event.len());
    run.finish()
}

#[derive(Serialize)]
struct SummaryRow {
    model: ModelKind,
    rows: usize,
    mape_pct: Option<f64>,
    r2_pct: Option<f64>,
    excluded_hours: usize,
}

pub(crate) fn report(mut run: StageRun) -> Result<StageManifest> {
    let kinds = run.config().models.kinds.clone();
    let mut rows = Vec::new();
    for &kind in &kinds {
        let report = EvalReport::load(run.artifact(Stage::Evaluate, &report_path(kind))?)?;
        let csv = run.output(&format!("report/series_{kind}.csv"))?;
        run.output(&format!("report/series_{kind}.json"))?;
        emit_series_plot(&report, csv)?;
        rows.push(SummaryRow {
            model: kind,
            rows: report.series.len(),
            mape_pct: report.mape_pct,
            r2_pct: report.r2_pct,
            excluded_hours: report.excluded_hours,
        });
        let model = load_model(run.artifact(Stage::Train, &model_path(kind))?)?;
        if let Some(imp) = model.importance() {
            let csv = run.output(&format!("report/importance_{kind}.csv"))?;
            run.output(&format!("report/importance_{kind}.json"))?;
            emit_importance_plot(&imp, csv)?;
        }
    }
    let mut summary = BTreeMap::new();
    summary.insert("event_id", serde_json::Value::from(run.config().holdout.event_id.clone()));
    summary.insert("models", serde_json::to_value(&rows)?);
    let path = run.output("report/summary.json")?;
    std::fs::write(&path, serde_json::to_vec_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    run.note("models", rows.len());
    run.finish()
}
