use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::MinMaxScaler;
use crate::ingest::{format_utc, CountyStatic, PanelDataset};

const EARTH_RADIUS_MILES: f64 = 3958.8;

/// Great-circle distance in miles between two (lat, lon) points in degrees.
pub fn haversine_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * a.sqrt().asin()
}

/// County × hour graph. Node `county * n_hours + hour` carries the
/// min-max-scaled weather and static features of that cell.
///
/// Spatial edges join distinct counties within the radius at the same hour
/// (stored once per county pair, valid at every hour); temporal edges link
/// consecutive hours of one county.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatioTemporalGraph {
    pub counties: Vec<String>,
    pub n_hours: usize,
    pub node_features: Vec<Vec<f64>>,
    /// Unordered county pairs `(a, b)` with `a < b`.
    pub spatial_pairs: Vec<(usize, usize)>,
}

impl SpatioTemporalGraph {
    pub fn node_id(&self, county: usize, hour: usize) -> usize {
        county * self.n_hours + hour
    }

    pub fn n_nodes(&self) -> usize {
        self.counties.len() * self.n_hours
    }

    /// Undirected spatial edges as node-id pairs.
    pub fn spatial_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_hours).flat_map(move |h| {
            self.spatial_pairs
                .iter()
                .map(move |&(a, b)| (self.node_id(a, h), self.node_id(b, h)))
        })
    }

    /// Directed temporal edges `(c, t_i) → (c, t_{i+1})`.
    pub fn temporal_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.counties.len()).flat_map(move |c| {
            (1..self.n_hours).map(move |h| (self.node_id(c, h - 1), self.node_id(c, h)))
        })
    }
}

fn node_vector(panel: &PanelDataset, c: usize, h: usize) -> Result<Vec<f64>> {
    let w = panel.weather_values(c, h).ok_or_else(|| {
        Error::IncompletePanel(format!(
            "missing weather at county {} {}; run impute first",
            panel.counties()[c],
            format_utc(panel.timestamp(h))
        ))
    })?;
    let mut v = w.to_vec();
    v.extend(panel.county_static(c).feature_vector());
    Ok(v)
}

pub fn build_graph(panel: &PanelDataset, radius_miles: f64) -> Result<SpatioTemporalGraph> {
    let statics: &[CountyStatic] = panel.statics();
    let n_c = statics.len();
    let mut spatial_pairs = Vec::new();
    for a in 0..n_c {
        for b in a + 1..n_c {
            let (sa, sb) = (&statics[a], &statics[b]);
            if haversine_miles(sa.latitude, sa.longitude, sb.latitude, sb.longitude) <= radius_miles {
                spatial_pairs.push((a, b));
            }
        }
    }

    let mut raw = Vec::with_capacity(panel.cell_count());
    for c in 0..n_c {
        for h in 0..panel.n_hours() {
            raw.push(node_vector(panel, c, h)?);
        }
    }
    let scaler = MinMaxScaler::fitted(raw.iter().map(Vec::as_slice))?;
    let node_features = scaler.transform_rows(&raw)?;

    Ok(SpatioTemporalGraph {
        counties: panel.counties().to_vec(),
        n_hours: panel.n_hours(),
        node_features,
        spatial_pairs,
    })
}

/// `nodes.csv` (`node_id,county_id,hour,features…`) and `edges.csv`
/// (`src,dst,kind`) with kind ∈ {spatial, temporal}.
pub fn write_graph_csv(
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
    graph: &SpatioTemporalGraph,
    panel: &PanelDataset,
) -> Result<()> {
    let nodes_path = nodes_path.as_ref();
    let mut buf = Vec::new();
    let width = graph.node_features.first().map_or(0, Vec::len);
    write!(buf, "node_id,county_id,timestamp_utc").expect("vec write");
    for j in 0..width {
        write!(buf, ",f{j}").expect("vec write");
    }
    writeln!(buf).expect("vec write");
    for (c, county) in graph.counties.iter().enumerate() {
        for h in 0..graph.n_hours {
            let id = graph.node_id(c, h);
            write!(buf, "{id},{county},{}", format_utc(panel.timestamp(h))).expect("vec write");
            for v in &graph.node_features[id] {
                write!(buf, ",{v}").expect("vec write");
            }
            writeln!(buf).expect("vec write");
        }
    }
    std::fs::write(nodes_path, buf).map_err(|e| Error::io(nodes_path, e))?;

    let edges_path = edges_path.as_ref();
    let mut buf = Vec::new();
    writeln!(buf, "src,dst,kind").expect("vec write");
    for (a, b) in graph.spatial_edges() {
        writeln!(buf, "{a},{b},spatial").expect("vec write");
    }
    for (a, b) in graph.temporal_edges() {
        writeln!(buf, "{a},{b},temporal").expect("vec write");
    }
    std::fs::write(edges_path, buf).map_err(|e| Error::io(edges_path, e))
}
