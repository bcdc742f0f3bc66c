//! Single-layer LSTM next-slot forecaster trained with BPTT and Adam.
//!
//! Gate order everywhere is forget, input, candidate, output. Each gate's
//! weight matrix has shape `units x (units + input_dim)` and multiplies the
//! concatenation `[h_prev, x_t]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::traffic::{make_windows, WindowSet};
use crate::{Error, Result};

pub const FORGET: usize = 0;
pub const INPUT: usize = 1;
pub const CANDIDATE: usize = 2;
pub const OUTPUT: usize = 3;
const GATE_NAMES: [&str; 4] = ["forget", "input", "candidate", "output"];

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean absolute error, the training loss.
    #[default]
    Mae,
    /// Mean squared error. Smooth, so it is what gradient checks use.
    Mse,
}

impl Loss {
    fn name(self) -> &'static str {
        match self {
            Loss::Mae => "mae",
            Loss::Mse => "mse",
        }
    }

    fn value_and_slope(self, y: f64, target: f64) -> (f64, f64) {
        let e = y - target;
        match self {
            Loss::Mae => (
                e.abs(),
                if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                },
            ),
            Loss::Mse => (e * e, 2.0 * e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub units: usize,
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            units: 10,
            window: 8,
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 32,
            loss: Loss::Mae,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::config("lstm.units", "must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::config("lstm.window", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lstm.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("lstm.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// All trainable parameters in one flat vector.
///
/// Layout: the four gate matrices (row-major), the four gate biases, the
/// dense output weights and finally the dense bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    units: usize,
    input_dim: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn param_count(units: usize, input_dim: usize) -> usize {
        4 * units * (units + input_dim) + 4 * units + units + 1
    }

    pub fn zeros(units: usize, input_dim: usize) -> Self {
        LstmParams {
            units,
            input_dim,
            data: vec![0.0; Self::param_count(units, input_dim)],
        }
    }

    /// Glorot-uniform weights, zero biases except a forget bias of one.
    pub fn glorot<R: Rng>(units: usize, input_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(units, input_dim);
        let cols = units + input_dim;
        let gate_limit = (6.0 / (cols + units) as f64).sqrt();
        for v in &mut p.data[..4 * units * cols] {
            *v = rng.random_range(-gate_limit..gate_limit);
        }
        p.gate_bias_mut(FORGET).fill(1.0);
        let dense_limit = (6.0 / (units + 1) as f64).sqrt();
        let off = p.dense_offset();
        for v in &mut p.data[off..off + units] {
            *v = rng.random_range(-dense_limit..dense_limit);
        }
        p
    }

    pub fn from_flat(units: usize, input_dim: usize, data: Vec<f64>) -> Result<Self> {
        if units == 0 || input_dim == 0 {
            return Err(Error::Size("units and input_dim must be >= 1".into()));
        }
        let want = Self::param_count(units, input_dim);
        if data.len() != want {
            return Err(Error::Size(format!(
                "expected {want} parameters, got {}",
                data.len()
            )));
        }
        Ok(LstmParams {
            units,
            input_dim,
            data,
        })
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn cols(&self) -> usize {
        self.units + self.input_dim
    }

    fn weight_offset(&self, gate: usize) -> usize {
        gate * self.units * self.cols()
    }

    fn bias_offset(&self, gate: usize) -> usize {
        4 * self.units * self.cols() + gate * self.units
    }

    fn dense_offset(&self) -> usize {
        4 * self.units * self.cols() + 4 * self.units
    }

    pub fn gate_weights(&self, gate: usize) -> &[f64] {
        let o = self.weight_offset(gate);
        &self.data[o..o + self.units * self.cols()]
    }

    pub fn gate_weights_mut(&mut self, gate: usize) -> &mut [f64] {
        let o = self.weight_offset(gate);
        let n = self.units * self.cols();
        &mut self.data[o..o + n]
    }

    pub fn gate_bias(&self, gate: usize) -> &[f64] {
        let o = self.bias_offset(gate);
        &self.data[o..o + self.units]
    }

    pub fn gate_bias_mut(&mut self, gate: usize) -> &mut [f64] {
        let o = self.bias_offset(gate);
        let n = self.units;
        &mut self.data[o..o + n]
    }

    pub fn dense_weights(&self) -> &[f64] {
        let o = self.dense_offset();
        &self.data[o..o + self.units]
    }

    pub fn dense_weights_mut(&mut self) -> &mut [f64] {
        let o = self.dense_offset();
        let n = self.units;
        &mut self.data[o..o + n]
    }

    pub fn dense_bias(&self) -> f64 {
        *self.data.last().unwrap()
    }

    pub fn set_dense_bias(&mut self, b: f64) {
        *self.data.last_mut().unwrap() = b;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one time step, kept for backpropagation.
struct Step {
    z: Vec<f64>,
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<Step> {
    let u = p.units;
    let cols = p.cols();
    if x.len() != p.input_dim || h_prev.len() != u || c_prev.len() != u {
        return Err(Error::Size(format!(
            "cell expects input {} and state {u}, got {}, {} and {}",
            p.input_dim,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut z = Vec::with_capacity(cols);
    z.extend_from_slice(h_prev);
    z.extend_from_slice(x);
    let mut gates: [Vec<f64>; 4] = Default::default();
    for (g, out) in gates.iter_mut().enumerate() {
        let w = p.gate_weights(g);
        let b = p.gate_bias(g);
        *out = (0..u)
            .map(|r| {
                let s = b[r]
                    + w[r * cols..(r + 1) * cols]
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                if !s.is_finite() {
                    return Err(Error::Numeric {
                        gate: GATE_NAMES[g],
                    });
                }
                Ok(if g == CANDIDATE { s.tanh() } else { sigmoid(s) })
            })
            .collect::<Result<_>>()?;
    }
    let mut c = vec![0.0; u];
    let mut tanh_c = vec![0.0; u];
    let mut h = vec![0.0; u];
    for r in 0..u {
        c[r] = gates[FORGET][r] * c_prev[r] + gates[INPUT][r] * gates[CANDIDATE][r];
        if !c[r].is_finite() {
            return Err(Error::Numeric { gate: "cell state" });
        }
        tanh_c[r] = c[r].tanh();
        h[r] = gates[OUTPUT][r] * tanh_c[r];
    }
    Ok(Step {
        z,
        gates,
        c_prev: c_prev.to_vec(),
        c,
        tanh_c,
        h,
    })
}

/// One LSTM cell update, returning `(h_t, c_t)`.
///
/// ```
/// use vhetnet::estimators::lstm::{lstm_cell_forward, LstmParams};
/// let p = LstmParams::zeros(3, 1);
/// let (h, c) = lstm_cell_forward(&p, &[0.7], &[0.0; 3], &[0.0; 3]).unwrap();
/// assert_eq!(h, vec![0.0; 3]);
/// assert_eq!(c, vec![0.0; 3]);
/// ```
pub fn lstm_cell_forward(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = step(p, x, h_prev, c_prev)?;
    Ok((s.h, s.c))
}

/// Unrolls the cell over `inputs` (`input_dim` values per step) and applies
/// the dense head. The output is not clipped.
fn forward(p: &LstmParams, inputs: &[f64]) -> Result<(f64, Vec<Step>)> {
    let d = p.input_dim;
    let mut h = vec![0.0; p.units];
    let mut c = vec![0.0; p.units];
    let mut steps = Vec::with_capacity(inputs.len() / d);
    for x in inputs.chunks(d) {
        let s = step(p, x, &h, &c)?;
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        steps.push(s);
    }
    let y = p.dense_bias()
        + p.dense_weights()
            .iter()
            .zip(&h)
            .map(|(w, h)| w * h)
            .sum::<f64>();
    Ok((y, steps))
}

/// Accumulates `dL/dparams` into `grad` given `dL/dy` for one sequence.
fn backward(p: &LstmParams, steps: &[Step], dy: f64, grad: &mut [f64]) {
    let u = p.units;
    let cols = p.cols();
    let dense = p.dense_offset();
    let Some(last) = steps.last() else {
        grad[dense + u] += dy;
        return;
    };
    for r in 0..u {
        grad[dense + r] += dy * last.h[r];
    }
    grad[dense + u] += dy;

    let mut dh: Vec<f64> = p.dense_weights().iter().map(|w| w * dy).collect();
    let mut dc = vec![0.0; u];
    let mut da: [Vec<f64>; 4] = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
    for st in steps.iter().rev() {
        let [f, i, g, o] = &st.gates;
        for r in 0..u {
            let d_o = dh[r] * st.tanh_c[r];
            let dcr = dc[r] + dh[r] * o[r] * (1.0 - st.tanh_c[r] * st.tanh_c[r]);
            da[FORGET][r] = dcr * st.c_prev[r] * f[r] * (1.0 - f[r]);
            da[INPUT][r] = dcr * g[r] * i[r] * (1.0 - i[r]);
            da[CANDIDATE][r] = dcr * i[r] * (1.0 - g[r] * g[r]);
            da[OUTPUT][r] = d_o * o[r] * (1.0 - o[r]);
            dc[r] = dcr * f[r];
        }
        let mut dz = vec![0.0; cols];
        for (gate, dag) in da.iter().enumerate() {
            let w_off = p.weight_offset(gate);
            let b_off = p.bias_offset(gate);
            let w = p.gate_weights(gate);
            for r in 0..u {
                let a = dag[r];
                if a == 0.0 {
                    continue;
                }
                grad[b_off + r] += a;
                let row = r * cols;
                for k in 0..cols {
                    grad[w_off + row + k] += a * st.z[k];
                    dz[k] += w[row + k] * a;
                }
            }
        }
        dh.copy_from_slice(&dz[..u]);
    }
}

/// Mean loss over `(inputs, targets)` and its gradient in the flat
/// parameter layout.
pub fn loss_and_gradient(
    p: &LstmParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    loss: Loss,
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Size(
            "inputs and targets must be non-empty and equal in length".into(),
        ));
    }
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; p.data.len()];
    let mut total = 0.0;
    for (x, &t) in inputs.iter().zip(targets) {
        let (y, steps) = forward(p, x)?;
        let (l, slope) = loss.value_and_slope(y, t);
        total += l;
        backward(p, &steps, slope / n, &mut grad);
    }
    Ok((total / n, grad))
}

/// Mean loss without gradients.
pub fn dataset_loss(
    p: &LstmParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    loss: Loss,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, &t) in inputs.iter().zip(targets) {
        total += loss.value_and_slope(forward(p, x)?.0, t).0;
    }
    Ok(total / inputs.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct LstmFit {
    pub params: LstmParams,
    /// Training-set loss before any update.
    pub initial_loss: f64,
    /// Training-set loss after each epoch.
    pub loss_history: Vec<f64>,
}

/// Trains on windows already scaled to `[0, 1]`.
///
/// Mini-batches are reshuffled every epoch from a generator seeded with
/// `cfg.seed`, so the result is deterministic.
pub fn lstm_train(train: &WindowSet, cfg: &LstmConfig) -> Result<LstmFit> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Size("training set is empty".into()));
    }
    if train.window != cfg.window || train.inputs.iter().any(|x| x.len() != cfg.window) {
        return Err(Error::Size(format!(
            "training windows have length {}, config expects {}",
            train.window, cfg.window
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = LstmParams::glorot(cfg.units, 1, &mut rng);
    let diverged = |epoch: usize, history: &[f64]| Error::Divergence {
        epoch,
        last_epoch: history.len().checked_sub(1),
        last_finite: history.last().copied(),
    };
    let initial_loss = dataset_loss(&params, &train.inputs, &train.targets, cfg.loss)?;

    let n_params = params.data.len();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut t = 0i32;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_x = Vec::with_capacity(cfg.batch_size);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(train.inputs[i].clone());
                batch_y.push(train.targets[i]);
            }
            let (_, grad) = loss_and_gradient(&params, &batch_x, &batch_y, cfg.loss)
                .map_err(|_| diverged(epoch, &history))?;
            t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            for k in 0..n_params {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * grad[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                params.data[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        let l = dataset_loss(&params, &train.inputs, &train.targets, cfg.loss)
            .map_err(|_| diverged(epoch, &history))?;
        if !l.is_finite() {
            return Err(diverged(epoch, &history));
        }
        history.push(l);
    }
    Ok(LstmFit {
        params,
        initial_loss,
        loss_history: history,
    })
}

/// Forecasts the next scaled value from a scaled window, clipped to `[0, 1]`.
pub fn lstm_predict_next(p: &LstmParams, window: &[f64], expected_window: usize) -> Result<f64> {
    if window.len() != expected_window * p.input_dim {
        return Err(Error::Size(format!(
            "window has length {}, model expects {expected_window}",
            window.len()
        )));
    }
    Ok(forward(p, window)?.0.clamp(0.0, 1.0))
}

/// Min-max scaling of one cell's series into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(series: &[f64]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Size("cannot fit a scaler to an empty series".into()));
        }
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(MinMaxScaler { min, max })
    }

    /// A constant series maps to 0.5.
    pub fn transform(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.max > self.min {
            self.min + y * (self.max - self.min)
        } else {
            self.min
        }
    }
}

/// A trained forecaster with the per-cell scalers it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: LstmParams,
    pub scalers: BTreeMap<u32, MinMaxScaler>,
}

impl LstmModel {
    /// Trains one model on the windows of every `(cell_id, history)` pair.
    ///
    /// When more than `max_windows` windows exist, a seeded uniform subset is
    /// used.
    pub fn fit(
        histories: &[(u32, &[f64])],
        cfg: &LstmConfig,
        max_windows: usize,
    ) -> Result<(LstmModel, LstmFit)> {
        cfg.validate()?;
        let mut scalers = BTreeMap::new();
        let mut all = WindowSet {
            window: cfg.window,
            ..Default::default()
        };
        for &(id, series) in histories {
            let sc = MinMaxScaler::fit(series)?;
            let scaled: Vec<f64> = series.iter().map(|&x| sc.transform(x)).collect();
            all.extend(make_windows(&scaled, cfg.window, id)?);
            scalers.insert(id, sc);
        }
        if all.len() > max_windows {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            let mut idx = index::sample(&mut rng, all.len(), max_windows).into_vec();
            idx.sort_unstable();
            all = all.select(&idx);
        }
        let fit = lstm_train(&all, cfg)?;
        Ok((
            LstmModel {
                config: cfg.clone(),
                params: fit.params.clone(),
                scalers,
            },
            fit,
        ))
    }

    /// Forecasts the next raw value for `cell` from its last raw values.
    pub fn predict_cell(&self, cell: u32, raw_window: &[f64]) -> Result<f64> {
        let sc = self.scalers.get(&cell).ok_or(Error::NotFound(cell))?;
        let scaled: Vec<f64> = raw_window.iter().map(|&x| sc.transform(x)).collect();
        Ok(sc.inverse(lstm_predict_next(
            &self.params,
            &scaled,
            self.config.window,
        )?))
    }

    /// Text serialisation. Floats use Rust's shortest round-trip formatting,
    /// so `from_text(to_text())` is bit-exact.
    ///
    /// ```text
    /// vhetnet-lstm 1
    /// units <u> input_dim <d> window <w> learning_rate <r> epochs <e> batch_size <b> loss <mae|mse> seed <s>
    /// <section> <count>
    /// <values...>
    /// ...
    /// scalers <count>
    /// <cell_id> <min> <max>
    /// ```
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let p = &self.params;
        let mut out = String::from("vhetnet-lstm 1\n");
        let _ = writeln!(
            out,
            "units {} input_dim {} window {} learning_rate {} epochs {} batch_size {} loss {} seed {}",
            p.units,
            p.input_dim,
            c.window,
            c.learning_rate,
            c.epochs,
            c.batch_size,
            c.loss.name(),
            c.seed
        );
        let mut section = |name: &str, values: &[f64]| {
            let _ = writeln!(out, "{name} {}", values.len());
            let line: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        };
        for (g, name) in ["w_f", "w_i", "w_c", "w_o"].iter().enumerate() {
            section(name, p.gate_weights(g));
        }
        for (g, name) in ["b_f", "b_i", "b_c", "b_o"].iter().enumerate() {
            section(name, p.gate_bias(g));
        }
        section("dense_w", p.dense_weights());
        section("dense_b", &[p.dense_bias()]);
        let _ = writeln!(out, "scalers {}", self.scalers.len());
        for (id, sc) in &self.scalers {
            let _ = writeln!(out, "{id} {} {}", sc.min, sc.max);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse {
            path: "<lstm model>".into(),
            line: 0,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        if lines.next() != Some("vhetnet-lstm 1") {
            return Err(bad("missing `vhetnet-lstm 1` header"));
        }
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing config line"))?
            .split(' ')
            .collect();
        let field = |key: &str| -> Result<&str> {
            header
                .chunks(2)
                .find(|kv| kv[0] == key)
                .and_then(|kv| kv.get(1).copied())
                .ok_or_else(|| bad(&format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|_| bad(key)) };
        let units = num("units")?;
        let input_dim = num("input_dim")?;
        let config = LstmConfig {
            units,
            window: num("window")?,
            learning_rate: field("learning_rate")?
                .parse()
                .map_err(|_| bad("learning_rate"))?,
            epochs: num("epochs")?,
            batch_size: num("batch_size")?,
            loss: match field("loss")? {
                "mae" => Loss::Mae,
                "mse" => Loss::Mse,
                _ => return Err(bad("unknown loss")),
            },
            seed: field("seed")?.parse().map_err(|_| bad("seed"))?,
        };
        let mut data = Vec::with_capacity(LstmParams::param_count(units, input_dim));
        for name in [
            "w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o", "dense_w", "dense_b",
        ] {
            let head = lines
                .next()
                .ok_or_else(|| bad(&format!("missing section {name}")))?;
            let count: usize = head
                .strip_prefix(name)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(&format!("bad section header for {name}")))?;
            let values = lines.next().unwrap_or("");
            let before = data.len();
            for tok in values.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| bad(&format!("bad value in {name}")))?,
                );
            }
            if data.len() - before != count {
                return Err(bad(&format!("section {name} has the wrong length")));
            }
        }
        let params = LstmParams::from_flat(units, input_dim, data)?;
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("scalers "))
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| bad("missing scalers section"))?;
        let mut scalers = BTreeMap::new();
        for _ in 0..n {
            let parts: Vec<&str> = lines
                .next()
                .ok_or_else(|| bad("missing scaler"))?
                .split(' ')
                .collect();
            if parts.len() != 3 {
                return Err(bad("scaler lines need three fields"));
            }
            let id: u32 = parts[0].parse().map_err(|_| bad("scaler cell id"))?;
            let min: f64 = parts[1].parse().map_err(|_| bad("scaler min"))?;
            let max: f64 = parts[2].parse().map_err(|_| bad("scaler max"))?;
            scalers.insert(id, MinMaxScaler { min, max });
        }
        Ok(LstmModel {
            config,
            params,
            scalers,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_text(&text)
    }
}

/// Largest relative error between analytic and central-difference gradients
/// for one random draw. Used by the gradient-check tests.
pub fn gradient_check(
    p: &LstmParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    step: f64,
) -> Result<f64> {
    let (_, analytic) = loss_and_gradient(p, inputs, targets, Loss::Mse)?;
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for k in 0..p.data.len() {
        let orig = probe.data[k];
        probe.data[k] = orig + step;
        let up = dataset_loss(&probe, inputs, targets, Loss::Mse)?;
        probe.data[k] = orig - step;
        let down = dataset_loss(&probe, inputs, targets, Loss::Mse)?;
        probe.data[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[k].abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((analytic[k] - numeric).abs() / scale.max(1e-6));
        }
    }
    Ok(worst)
}
