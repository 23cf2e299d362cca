//! Single-layer LSTM regressor trained with BPTT and Adam.
//!
//! Gate pre-activations are stacked in blocks of `H` rows in the order
//! input, forget, candidate, output. The final hidden state feeds a linear
//! head producing one scaled target.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::check_training;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureMatrix, MinMaxScaler};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Sigmoid gates with tanh candidate and cell output.
    #[default]
    Standard,
    /// Sigmoid everywhere.
    AllSigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden: 128,
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 32,
            seed: 0,
            activation: Activation::Standard,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    fn squash(self, x: f64) -> f64 {
        match self {
            Activation::Standard => x.tanh(),
            Activation::AllSigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the output value.
    fn squash_grad(self, y: f64) -> f64 {
        match self {
            Activation::Standard => 1.0 - y * y,
            Activation::AllSigmoid => y * (1.0 - y),
        }
    }
}

/// Trainable parameters; also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `[4H, D]`
    pub w_x: Array2<f64>,
    /// `[4H, H]`
    pub w_h: Array2<f64>,
    /// `[4H]`
    pub b: Array1<f64>,
    /// `[H]`
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl LstmParams {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Array2::zeros((4 * hidden, input_dim)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
            w_out: Array1::zeros(hidden),
            b_out: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.b.len() + self.w_out.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_x.as_slice_mut().expect("standard layout"),
            self.w_h.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b_out),
        ]
    }

    fn slices(&self) -> [&[f64]; 5] {
        [
            self.w_x.as_slice().expect("standard layout"),
            self.w_h.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b_out),
        ]
    }

    /// All parameters in the order `w_x, w_h, b, w_out, b_out`.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub input_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub params: LstmParams,
}

/// A mini-batch stacked by time step: row `t * B + r` holds step `t` of
/// sequence `r`.
pub struct Batch {
    x: Array2<f64>,
    steps: usize,
    size: usize,
}

impl Batch {
    pub fn from_sequences(seqs: &[&[Vec<f64>]]) -> Result<Self> {
        let b = seqs.len();
        let t = seqs.first().map_or(0, |s| s.len());
        let d = seqs.first().and_then(|s| s.first()).map_or(0, Vec::len);
        let mut x = Array2::zeros((t * b, d));
        for (r, seq) in seqs.iter().enumerate() {
            if seq.len() != t {
                return Err(Error::DimensionMismatch { expected: t, got: seq.len() });
            }
            for (k, step) in seq.iter().enumerate() {
                if step.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: step.len() });
                }
                x.row_mut(k * b + r).assign(&ArrayView1::from(step.as_slice()));
            }
        }
        Ok(Batch { x, steps: t, size: b })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Forward-pass record, stacked by time like [`Batch`].
struct Trace {
    /// `[(T+1)·B, H]`; block 0 is the zero state.
    h: Array2<f64>,
    /// `[(T+1)·B, H]`
    c: Array2<f64>,
    /// Activated gates `[T·B, 4H]`.
    gates: Array2<f64>,
    /// Squashed cell state `[T·B, H]`.
    tc: Array2<f64>,
}

impl LstmNet {
    /// Uniform `±1/√H` weights, zero biases except forget-gate bias 1.
    pub fn init(input_dim: usize, hidden: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let r = 1.0 / (hidden as f64).sqrt();
        let u = Uniform::new_inclusive(-r, r).expect("finite bounds");
        let mut p = LstmParams::zeros(input_dim, hidden);
        p.w_x.iter_mut().for_each(|v| *v = u.sample(rng));
        p.w_h.iter_mut().for_each(|v| *v = u.sample(rng));
        p.w_out.iter_mut().for_each(|v| *v = u.sample(rng));
        p.b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmNet {
            input_dim,
            hidden,
            activation,
            params: p,
        }
    }

    fn run(&self, batch: &Batch) -> (Array1<f64>, Trace) {
        let (b, h, t) = (batch.size, self.hidden, batch.steps);
        let p = &self.params;
        // input projections for every step in one product
        let mut gates = Array2::zeros((t * b, 4 * h));
        general_mat_mul(1.0, &batch.x, &p.w_x.t(), 0.0, &mut gates);
        gates += &p.b;
        let mut hs = Array2::zeros(((t + 1) * b, h));
        let mut cs = Array2::zeros(((t + 1) * b, h));
        let mut tc = Array2::zeros((t * b, h));
        let act = self.activation;

        for k in 0..t {
            let mut z = gates.slice_mut(s![k * b..(k + 1) * b, ..]);
            general_mat_mul(1.0, &hs.slice(s![k * b..(k + 1) * b, ..]), &p.w_h.t(), 1.0, &mut z);
            let z = z.into_slice().expect("contiguous rows");
            let (c_done, mut c_next) = cs.view_mut().split_at(Axis(0), (k + 1) * b);
            let c_prev = c_done.slice(s![k * b.., ..]);
            let c_prev = c_prev.as_slice().expect("contiguous rows");
            let c_next = c_next.slice_mut(s![..b, ..]).into_slice().expect("contiguous rows");
            let mut h_next = hs.slice_mut(s![(k + 1) * b..(k + 2) * b, ..]);
            let h_next = h_next.as_slice_mut().expect("contiguous rows");
            let mut tck = tc.slice_mut(s![k * b..(k + 1) * b, ..]);
            let tck = tck.as_slice_mut().expect("contiguous rows");
            for r in 0..b {
                let zr = &mut z[r * 4 * h..(r + 1) * 4 * h];
                let (zi, rest) = zr.split_at_mut(h);
                let (zf, rest) = rest.split_at_mut(h);
                let (zg, zo) = rest.split_at_mut(h);
                let o = r * h;
                for j in 0..h {
                    let i = sigmoid(zi[j]);
                    let f = sigmoid(zf[j]);
                    let g = act.squash(zg[j]);
                    let og = sigmoid(zo[j]);
                    let cv = f * c_prev[o + j] + i * g;
                    let th = act.squash(cv);
                    zi[j] = i;
                    zf[j] = f;
                    zg[j] = g;
                    zo[j] = og;
                    c_next[o + j] = cv;
                    tck[o + j] = th;
                    h_next[o + j] = og * th;
                }
            }
        }
        let y = hs.slice(s![t * b.., ..]).dot(&p.w_out) + p.b_out;
        (
            y,
            Trace {
                h: hs,
                c: cs,
                gates,
                tc,
            },
        )
    }

    pub fn forward(&self, batch: &Batch) -> Array1<f64> {
        self.run(batch).0
    }

    /// Mean-squared error over the batch and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch, targets: &[f64]) -> (f64, LstmParams) {
        let (b, h, t) = (batch.size, self.hidden, batch.steps);
        let p = &self.params;
        let act = self.activation;
        let (y, tr) = self.run(batch);
        let resid: Array1<f64> = &y - &ArrayView1::from(targets);
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / b as f64;
        let dy = resid.mapv(|r| 2.0 * r / b as f64);

        let mut g = LstmParams::zeros(self.input_dim, h);
        g.w_out = tr.h.slice(s![t * b.., ..]).t().dot(&dy);
        g.b_out = dy.sum();

        let mut dh = Array2::from_shape_fn((b, h), |(r, j)| dy[r] * p.w_out[j]);
        let mut dc = Array2::<f64>::zeros((b, h));
        let mut dz_all = Array2::<f64>::zeros((t * b, 4 * h));
        for k in (0..t).rev() {
            let gates = tr.gates.slice(s![k * b..(k + 1) * b, ..]);
            let gates = gates.as_slice().expect("contiguous rows");
            let tck = tr.tc.slice(s![k * b..(k + 1) * b, ..]);
            let tck = tck.as_slice().expect("contiguous rows");
            let c_prev = tr.c.slice(s![k * b..(k + 1) * b, ..]);
            let c_prev = c_prev.as_slice().expect("contiguous rows");
            let mut dz = dz_all.slice_mut(s![k * b..(k + 1) * b, ..]);
            {
                let dzs = dz.as_slice_mut().expect("contiguous rows");
                let dhs = dh.as_slice().expect("standard layout");
                let dcs = dc.as_slice_mut().expect("standard layout");
                for r in 0..b {
                    let gr = &gates[r * 4 * h..(r + 1) * 4 * h];
                    let dr = &mut dzs[r * 4 * h..(r + 1) * 4 * h];
                    let o = r * h;
                    for j in 0..h {
                        let (i, f, cand, og) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                        let th = tck[o + j];
                        let dhv = dhs[o + j];
                        let dcv = dcs[o + j] + dhv * og * act.squash_grad(th);
                        dr[j] = dcv * cand * i * (1.0 - i);
                        dr[h + j] = dcv * c_prev[o + j] * f * (1.0 - f);
                        dr[2 * h + j] = dcv * i * act.squash_grad(cand);
                        dr[3 * h + j] = dhv * th * og * (1.0 - og);
                        dcs[o + j] = dcv * f;
                    }
                }
            }
            if k > 0 {
                general_mat_mul(1.0, &dz, &p.w_h, 0.0, &mut dh);
            }
        }
        // weight gradients for all steps in single products
        general_mat_mul(1.0, &dz_all.t(), &batch.x, 0.0, &mut g.w_x);
        general_mat_mul(1.0, &dz_all.t(), &tr.h.slice(s![..t * b, ..]), 0.0, &mut g.w_h);
        g.b = dz_all.sum_axis(Axis(0));
        (loss, g)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

/// Adam state over a flat view of the parameters.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut LstmParams, grad: &LstmParams) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut at = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grad.slices()) {
            for (k, (pv, gv)) in p.iter_mut().zip(g).enumerate() {
                let (m, v) = (&mut self.m[at + k], &mut self.v[at + k]);
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gv;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gv * gv;
                *pv -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
            at += g.len();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub net: LstmNet,
    pub config: LstmConfig,
    pub seq_len: usize,
    /// Mean training loss (scaled units) per epoch.
    pub loss_curve: Vec<f64>,
    /// Fitted on feature-matrix rows when trained through
    /// [`train_lstm_matrix`]; unfitted otherwise.
    pub feature_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
    pub layout: Option<FeatureLayout>,
}

fn check_sequences(seqs: &[Vec<Vec<f64>>]) -> Result<(usize, usize)> {
    let t = seqs.first().map_or(0, Vec::len);
    let d = seqs.first().and_then(|s| s.first()).map_or(0, Vec::len);
    if t == 0 || d == 0 {
        return Err(Error::EmptyMatrix("lstm needs non-empty sequences".into()));
    }
    for s in seqs {
        if s.len() != t {
            return Err(Error::DimensionMismatch { expected: t, got: s.len() });
        }
        if let Some(x) = s.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    Ok((t, d))
}

/// Train on already-scaled sequences and targets.
pub fn train_lstm(seqs: &[Vec<Vec<f64>>], targets: &[f64], cfg: &LstmConfig) -> Result<LstmModel> {
    if seqs.len() != targets.len() {
        return Err(Error::LengthMismatch(seqs.len(), targets.len()));
    }
    let (t, d) = check_sequences(seqs)?;
    if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("lstm needs hidden > 0, batch_size > 0, learning_rate > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = LstmNet::init(d, cfg.hidden, cfg.activation, &mut rng);
    let mut adam = Adam::new(net.n_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&[Vec<f64>]> = chunk.iter().map(|&i| seqs[i].as_slice()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let batch = Batch::from_sequences(&refs)?;
            let (loss, grad) = net.loss_and_grad(&batch, &ys);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut net.params, &grad);
        }
        if !net.params.all_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        curve.push(total / seqs.len() as f64);
    }

    Ok(LstmModel {
        net,
        config: cfg.clone(),
        seq_len: t,
        loss_curve: curve,
        feature_scaler: MinMaxScaler::new(),
        target_scaler: MinMaxScaler::new(),
        layout: None,
    })
}

/// Fit feature and target scalers on the matrix, reshape each scaled row
/// into its lag sequence, and train.
pub fn train_lstm_matrix(m: &FeatureMatrix, cfg: &LstmConfig) -> Result<LstmModel> {
    check_training(m)?;
    let feature_scaler = MinMaxScaler::fitted(m.rows.iter().map(Vec::as_slice))?;
    let target_scaler = MinMaxScaler::fitted(m.targets.iter().map(std::slice::from_ref))?;
    let seqs = to_sequences(&m.layout, &feature_scaler, &m.rows)?;
    let ys: Vec<f64> = m
        .targets
        .iter()
        .map(|&y| target_scaler.transform(&[y]).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let mut model = train_lstm(&seqs, &ys, cfg)?;
    model.feature_scaler = feature_scaler;
    model.target_scaler = target_scaler;
    model.layout = Some(m.layout);
    Ok(model)
}

fn to_sequences(layout: &FeatureLayout, scaler: &MinMaxScaler, rows: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
    rows.iter()
        .map(|r| {
            if r.len() != layout.n_columns() {
                return Err(Error::DimensionMismatch {
                    expected: layout.n_columns(),
                    got: r.len(),
                });
            }
            Ok(layout.to_sequence(&scaler.transform(r)?))
        })
        .collect()
}

const PREDICT_CHUNK: usize = 256;

impl LstmModel {
    /// Raw network outputs in scaled target units.
    pub fn predict_scaled(&self, seqs: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let (t, d) = check_sequences(seqs)?;
        if t != self.seq_len {
            return Err(Error::DimensionMismatch { expected: self.seq_len, got: t });
        }
        if d != self.net.input_dim {
            return Err(Error::DimensionMismatch { expected: self.net.input_dim, got: d });
        }
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(PREDICT_CHUNK) {
            let refs: Vec<&[Vec<f64>]> = chunk.iter().map(Vec::as_slice).collect();
            out.extend(self.net.forward(&Batch::from_sequences(&refs)?));
        }
        Ok(out)
    }

    /// Map scaled outputs back to customers, clamping negatives to 0.
    pub fn unscale_outputs(&self, scaled: &[f64]) -> Result<Vec<f64>> {
        let r = self.target_scaler.ranges()?[0];
        Ok(scaled.iter().map(|&s| r.unscale(s).max(0.0)).collect())
    }

    /// Predictions for feature-matrix rows in original units.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let layout = self.layout.as_ref().ok_or(Error::ScalerNotFitted)?;
        let seqs = to_sequences(layout, &self.feature_scaler, rows)?;
        predict_lstm(self, &seqs)
    }
}

/// Forward pass on scaled sequences, then inverse target scaling.
pub fn predict_lstm(model: &LstmModel, seqs: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let scaled = model.predict_scaled(seqs)?;
    model.unscale_outputs(&scaled)
}
