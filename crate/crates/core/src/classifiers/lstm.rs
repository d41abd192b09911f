//! Single-layer LSTM over raw amplitude windows with a softmax readout on
//! the final hidden state, trained by backpropagation through time.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_classes, softmax_in_place};
use crate::error::{Error, Result};
use crate::num::Real;

/// Samples per gradient chunk. Fixed so the reduction order (and therefore
/// every bit of the result) does not depend on the thread count.
const CHUNK: usize = 16;

pub const MAGIC: &[u8; 8] = b"WSNLSTM\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Classical momentum; 0 is plain SGD.
    pub momentum: f64,
    pub epochs: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub forget_bias: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden: 200,
            batch_size: 200,
            learning_rate: 1e-4,
            momentum: 0.0,
            epochs: 10,
            clip_norm: 5.0,
            forget_bias: 1.0,
            seed: 0,
        }
    }
}

impl LstmConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.clip_norm > 0.0
            && self.learning_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid LSTM configuration {self:?}")))
        }
    }
}

/// Gate rows are stacked input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LstmModel<T> {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Window length the model was trained on.
    pub steps: usize,
    /// `[4H, input + H]`, columns are `[x_t, h_{t-1}]`.
    pub w: Array2<T>,
    pub b: Array1<T>,
    /// `[classes, H]`
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(m: &LstmModel<T>) -> Self {
        Gradients {
            w: Array2::zeros(m.w.dim()),
            b: Array1::zeros(m.b.dim()),
            w_out: Array2::zeros(m.w_out.dim()),
            b_out: Array1::zeros(m.b_out.dim()),
        }
    }

    fn add(&mut self, o: &Self) {
        self.w += &o.w;
        self.b += &o.b;
        self.w_out += &o.w_out;
        self.b_out += &o.b_out;
    }

    fn scale(&mut self, k: T) {
        self.w *= k;
        self.b *= k;
        self.w_out *= k;
        self.b_out *= k;
    }

    pub fn norm(&self) -> T {
        let sq = |a: &[T]| a.iter().map(|&v| v * v).sum::<T>();
        (sq(self.w.as_slice().expect("standard layout"))
            + sq(self.b.as_slice().expect("standard layout"))
            + sq(self.w_out.as_slice().expect("standard layout"))
            + sq(self.b_out.as_slice().expect("standard layout")))
        .sqrt()
    }

    pub fn flat(&self) -> Vec<T> {
        self.w.iter().chain(self.b.iter()).chain(self.w_out.iter()).chain(self.b_out.iter()).copied().collect()
    }
}

struct Cache<T> {
    /// per step `[B, input + H]`
    z: Vec<Array2<T>>,
    /// per step activated gates `[B, 4H]`
    gates: Vec<Array2<T>>,
    /// per step cell state, index 0 is the zero initial state
    cells: Vec<Array2<T>>,
    h_last: Array2<T>,
    probs: Array2<T>,
}

/// `ln(p)` with exact zeros floored; NaN passes through.
fn floored_ln<T: Real>(p: T) -> T {
    if p == T::zero() {
        T::min_positive_value().ln()
    } else {
        p.ln()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> LstmModel<T> {
    /// Uniform `+-1/sqrt(hidden)` weights, zero biases except the forget gate.
    pub fn init(input: usize, hidden: usize, classes: usize, steps: usize, forget_bias: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 1.0 / (hidden as f64).sqrt();
        let mut draw = |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| T::lit(rng.random_range(-r..r)));
        let w = draw((4 * hidden, input + hidden));
        let w_out = draw((classes, hidden));
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(T::lit(forget_bias));
        LstmModel {
            input,
            hidden,
            classes,
            steps,
            w,
            b,
            w_out,
            b_out: Array1::zeros(classes),
        }
    }

    fn forward(&self, x: &Array3<T>, idx: &[usize]) -> Cache<T> {
        let (bsz, h, inp) = (idx.len(), self.hidden, self.input);
        let steps = x.dim().1;
        let wt = self.w.t();
        let mut cache = Cache {
            z: Vec::with_capacity(steps),
            gates: Vec::with_capacity(steps),
            cells: vec![Array2::zeros((bsz, h))],
            h_last: Array2::zeros((bsz, h)),
            probs: Array2::zeros((bsz, self.classes)),
        };
        let mut h_prev = Array2::<T>::zeros((bsz, h));
        for t in 0..steps {
            let mut z = Array2::zeros((bsz, inp + h));
            for (r, &i) in idx.iter().enumerate() {
                z.slice_mut(s![r, ..inp]).assign(&x.slice(s![i, t, ..]));
            }
            z.slice_mut(s![.., inp..]).assign(&h_prev);
            let mut a = z.dot(&wt);
            a += &self.b;
            a.slice_mut(s![.., ..3 * h]).mapv_inplace(sigmoid);
            a.slice_mut(s![.., 3 * h..]).mapv_inplace(T::tanh);
            let c_prev = cache.cells.last().expect("initial cell");
            let mut c = Array2::zeros((bsz, h));
            Zip::from(&mut c)
                .and(c_prev)
                .and(a.slice(s![.., ..h]))
                .and(a.slice(s![.., h..2 * h]))
                .and(a.slice(s![.., 3 * h..]))
                .for_each(|c, &cp, &i, &f, &g| *c = f * cp + i * g);
            Zip::from(&mut h_prev)
                .and(&c)
                .and(a.slice(s![.., 2 * h..3 * h]))
                .for_each(|hv, &cv, &o| *hv = o * cv.tanh());
            cache.z.push(z);
            cache.gates.push(a);
            cache.cells.push(c);
        }
        let mut logits = h_prev.dot(&self.w_out.t());
        logits += &self.b_out;
        for mut row in logits.outer_iter_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        cache.probs = logits;
        cache.h_last = h_prev;
        cache
    }

    /// Summed (not averaged) cross-entropy and its gradient over `idx`.
    fn chunk_gradient(&self, x: &Array3<T>, labels: &[usize], idx: &[usize]) -> (T, Gradients<T>) {
        let cache = self.forward(x, idx);
        let (h, inp) = (self.hidden, self.input);
        let mut loss = T::zero();
        let mut dlogits = cache.probs.clone();
        for (r, &i) in idx.iter().enumerate() {
            loss -= floored_ln(cache.probs[[r, labels[i]]]);
            dlogits[[r, labels[i]]] -= T::one();
        }
        let mut g = Gradients::zeros_like(self);
        g.w_out = dlogits.t().dot(&cache.h_last);
        g.b_out = dlogits.sum_axis(Axis(0));
        let mut dh = dlogits.dot(&self.w_out);
        let mut dc = Array2::<T>::zeros(dh.dim());
        let mut da = Array2::<T>::zeros((idx.len(), 4 * h));
        for t in (0..cache.z.len()).rev() {
            let a = &cache.gates[t];
            let c = &cache.cells[t + 1];
            let c_prev = &cache.cells[t];
            for r in 0..idx.len() {
                for j in 0..h {
                    let (i, f, o, gg) = (a[[r, j]], a[[r, h + j]], a[[r, 2 * h + j]], a[[r, 3 * h + j]]);
                    let tc = c[[r, j]].tanh();
                    let dhv = dh[[r, j]];
                    let dcv = dc[[r, j]] + dhv * o * (T::one() - tc * tc);
                    da[[r, j]] = dcv * gg * i * (T::one() - i);
                    da[[r, h + j]] = dcv * c_prev[[r, j]] * f * (T::one() - f);
                    da[[r, 2 * h + j]] = dhv * tc * o * (T::one() - o);
                    da[[r, 3 * h + j]] = dcv * i * (T::one() - gg * gg);
                    dc[[r, j]] = dcv * f;
                }
            }
            g.w += &da.t().dot(&cache.z[t]);
            g.b += &da.sum_axis(Axis(0));
            let dz = da.dot(&self.w);
            dh.assign(&dz.slice(s![.., inp..]));
        }
        (loss, g)
    }

    /// Mean cross-entropy and gradient over `idx`, computed chunk-parallel
    /// with a fixed reduction order.
    pub fn loss_and_gradient(&self, x: &Array3<T>, labels: &[usize], idx: &[usize]) -> (T, Gradients<T>) {
        let parts: Vec<(T, Gradients<T>)> = idx.par_chunks(CHUNK).map(|c| self.chunk_gradient(x, labels, c)).collect();
        let mut total = Gradients::zeros_like(self);
        let mut loss = T::zero();
        for (l, g) in &parts {
            loss += *l;
            total.add(g);
        }
        let n = T::from_usize_lossy(idx.len());
        total.scale(T::one() / n);
        (loss / n, total)
    }

    /// Mean cross-entropy over all windows.
    pub fn mean_loss(&self, x: &Array3<T>, labels: &[usize]) -> T {
        let idx: Vec<usize> = (0..x.dim().0).collect();
        let losses: Vec<T> = idx
            .par_chunks(CHUNK)
            .map(|c| {
                let cache = self.forward(x, c);
                c.iter()
                    .enumerate()
                    .map(|(r, &i)| -floored_ln(cache.probs[[r, labels[i]]]))
                    .sum::<T>()
            })
            .collect();
        losses.into_iter().sum::<T>() / T::from_usize_lossy(idx.len())
    }

    /// Class probabilities for one `[steps, input]` window.
    pub fn predict_proba(&self, window: ArrayView2<T>) -> Result<Vec<T>> {
        if window.dim() != (self.steps, self.input) {
            return Err(Error::ShapeMismatch {
                expected: format!("[{}, {}]", self.steps, self.input),
                got: format!("[{}, {}]", window.nrows(), window.ncols()),
            });
        }
        let x = window.to_owned().insert_axis(Axis(0));
        Ok(self.forward(&x, &[0]).probs.row(0).to_vec())
    }

    pub fn predict(&self, window: ArrayView2<T>) -> Result<(usize, Vec<T>)> {
        let p = self.predict_proba(window)?;
        Ok((argmax(&p), p))
    }

    fn params_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Flat view of every parameter, in serialization order.
    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len() + self.w_out.len() + self.b_out.len()
    }

    pub fn param(&self, k: usize) -> T {
        self.w.iter().chain(self.b.iter()).chain(self.w_out.iter()).chain(self.b_out.iter()).nth(k).copied().expect("index in range")
    }

    pub fn set_param(&mut self, mut k: usize, v: T) {
        for t in self.params_mut() {
            if k < t.len() {
                t[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn tensors(&self) -> [(&'static str, Vec<usize>, &[T]); 4] {
        [
            ("w", self.w.shape().to_vec(), self.w.as_slice().expect("standard layout")),
            ("b", self.b.shape().to_vec(), self.b.as_slice().expect("standard layout")),
            ("w_out", self.w_out.shape().to_vec(), self.w_out.as_slice().expect("standard layout")),
            ("b_out", self.b_out.shape().to_vec(), self.b_out.as_slice().expect("standard layout")),
        ]
    }

    /// Binary model file: magic, u32 header length, JSON header, then the
    /// tensors as little-endian floats. `extra` is stored verbatim in the header.
    pub fn to_bytes(&self, extra: serde_json::Value) -> Vec<u8> {
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape, data) in self.tensors() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape,
                offset: blob.len(),
            });
            data.iter().for_each(|v| v.write_le(&mut blob));
        }
        let header = Header {
            version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            input: self.input,
            hidden: self.hidden,
            classes: self.classes,
            steps: self.steps,
            tensors,
            extra,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        let bad = |m: &str| Error::ModelFormat(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing LSTM magic"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {}", header.version)));
        }
        if header.dtype != T::DTYPE {
            return Err(bad(&format!("file holds {}, expected {}", header.dtype, T::DTYPE)));
        }
        let blob = &bytes[12 + len..];
        let mut model = LstmModel::<T>::init(header.input, header.hidden, header.classes, header.steps, 0.0, 0);
        let expected: Vec<(&str, Vec<usize>)> = model.tensors().iter().map(|(n, s, _)| (*n, s.clone())).collect();
        if header.tensors.len() != expected.len() {
            return Err(bad("wrong tensor count"));
        }
        for ((entry, (name, shape)), dst) in header.tensors.iter().zip(expected).zip(model.params_mut()) {
            if entry.name != name || entry.shape != shape {
                return Err(bad(&format!("tensor {} has unexpected name or shape", entry.name)));
            }
            let end = entry.offset + dst.len() * T::BYTES;
            let src = blob.get(entry.offset..end).ok_or_else(|| bad("truncated tensor data"))?;
            for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(T::BYTES)) {
                *d = T::read_le(chunk);
            }
        }
        Ok((model, header.extra))
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    input: usize,
    hidden: usize,
    classes: usize,
    steps: usize,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    /// Mean minibatch loss per epoch (each batch's loss before its update).
    pub epoch_losses: Vec<T>,
}

/// Trains on `windows[n, t, :]` with seeded shuffling, clipped minibatch
/// SGD, and optional momentum.
pub fn lstm_fit<T: Real>(windows: &Array3<T>, labels: &[usize], n_classes: usize, cfg: &LstmConfig) -> Result<(LstmModel<T>, TrainReport<T>)> {
    cfg.validate()?;
    let (n, steps, input) = windows.dim();
    if n != labels.len() {
        return Err(Error::DimensionMismatch(format!("{n} windows, {} labels", labels.len())));
    }
    if steps == 0 || input == 0 {
        return Err(Error::EmptyInput("windows have no steps or features"));
    }
    check_classes(labels, n_classes)?;
    lstm_train(LstmModel::init(input, cfg.hidden, n_classes, steps, cfg.forget_bias, cfg.seed), windows, labels, cfg)
}

/// Continues training `model` (shapes must match the windows and labels).
pub fn lstm_train<T: Real>(mut model: LstmModel<T>, windows: &Array3<T>, labels: &[usize], cfg: &LstmConfig) -> Result<(LstmModel<T>, TrainReport<T>)> {
    cfg.validate()?;
    let (n, steps, input) = windows.dim();
    if (steps, input) != (model.steps, model.input) || n != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} labels for windows [{}, {}]", n, model.steps, model.input),
            got: format!("{} labels for windows [{steps}, {input}]", labels.len()),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.classes) {
        return Err(Error::IndexOutOfRange { index: bad, len: model.classes });
    }
    if windows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LSTM training windows"));
    }
    let mut velocity = Gradients::zeros_like(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let clip = T::lit(cfg.clip_norm);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = T::zero();
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, mut g) = model.loss_and_gradient(windows, labels, idx);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    detail: format!("loss {loss}, gradient norm {}", g.norm()),
                });
            }
            sum += loss * T::from_usize_lossy(idx.len());
            let norm = g.norm();
            if norm > clip {
                g.scale(clip / norm);
            }
            velocity.scale(mu);
            velocity.add(&g);
            let step = [&velocity.w.as_slice().expect("layout")[..], velocity.b.as_slice().expect("layout"), velocity.w_out.as_slice().expect("layout"), velocity.b_out.as_slice().expect("layout")];
            for (p, v) in model.params_mut().into_iter().zip(step) {
                for (a, b) in p.iter_mut().zip(v) {
                    *a -= lr * *b;
                }
            }
        }
        epoch_losses.push(sum / T::from_usize_lossy(n));
    }
    Ok((model, TrainReport { epoch_losses }))
}
