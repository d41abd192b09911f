//! Per-class hidden Markov models with diagonal Gaussian emissions, trained
//! by Baum-Welch with log-space forward-backward recursions.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_classes};
use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum HmmInit {
    /// Each sequence cut into `states` equal chunks, chunk `k` seeds state `k`.
    #[default]
    Segments,
    /// Means drawn from random frames, random stochastic rows.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmmConfig {
    pub states: usize,
    pub max_iter: usize,
    /// Stop once an iteration gains less log-likelihood than this.
    pub tol: f64,
    pub var_floor: f64,
    pub init: HmmInit,
    pub seed: u64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            states: 5,
            max_iter: 100,
            tol: 1e-4,
            var_floor: 1e-6,
            init: HmmInit::Segments,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GaussianHmm<T> {
    pub initial: Vec<T>,
    /// `transition[[i, j]] = P(j | i)`
    pub transition: Array2<T>,
    /// `[state, dim]`
    pub means: Array2<T>,
    pub variances: Array2<T>,
}

/// Sufficient statistics of one E-step.
struct Stats<T> {
    log_likelihood: T,
    initial: Vec<T>,
    transition: Array2<T>,
    occupancy: Vec<T>,
    weighted_sum: Array2<T>,
    /// Posterior state weights per sequence, kept for the variance pass.
    gammas: Vec<Array2<T>>,
}

impl<T: Real> GaussianHmm<T> {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn ln(x: T) -> T {
        if x > T::zero() {
            x.ln()
        } else {
            T::neg_infinity()
        }
    }

    pub fn log_emissions(&self, x: ArrayView1<T>) -> Vec<T> {
        let half = T::lit(0.5);
        let ln_tau = T::TAU().ln();
        (0..self.states())
            .map(|k| {
                let mut s = T::zero();
                for d in 0..self.dim() {
                    let v = self.variances[[k, d]];
                    let diff = x[d] - self.means[[k, d]];
                    s += ln_tau + v.ln() + diff * diff / v;
                }
                -half * s
            })
            .collect()
    }

    fn emission_matrix(&self, seq: ArrayView2<T>) -> Array2<T> {
        let mut b = Array2::zeros((seq.nrows(), self.states()));
        for (t, x) in seq.outer_iter().enumerate() {
            for (k, v) in self.log_emissions(x).into_iter().enumerate() {
                b[[t, k]] = v;
            }
        }
        b
    }

    fn log_transition(&self) -> Array2<T> {
        self.transition.mapv(Self::ln)
    }

    fn forward(&self, log_b: &Array2<T>, log_a: &Array2<T>) -> (Array2<T>, T) {
        let (n, k) = log_b.dim();
        let mut alpha = Array2::zeros((n, k));
        for j in 0..k {
            alpha[[0, j]] = Self::ln(self.initial[j]) + log_b[[0, j]];
        }
        for t in 1..n {
            for j in 0..k {
                let s = log_sum_exp((0..k).map(|i| alpha[[t - 1, i]] + log_a[[i, j]]));
                alpha[[t, j]] = s + log_b[[t, j]];
            }
        }
        let ll = log_sum_exp(alpha.row(n - 1).iter().copied());
        (alpha, ll)
    }

    fn backward(&self, log_b: &Array2<T>, log_a: &Array2<T>) -> Array2<T> {
        let (n, k) = log_b.dim();
        let mut beta = Array2::zeros((n, k));
        for t in (0..n - 1).rev() {
            for i in 0..k {
                beta[[t, i]] = log_sum_exp((0..k).map(|j| log_a[[i, j]] + log_b[[t + 1, j]] + beta[[t + 1, j]]));
            }
        }
        beta
    }

    /// Forward-algorithm log-likelihood of one sequence.
    pub fn log_likelihood(&self, seq: ArrayView2<T>) -> T {
        if seq.nrows() == 0 {
            return T::zero();
        }
        self.forward(&self.emission_matrix(seq), &self.log_transition()).1
    }

    fn e_step(&self, seqs: &[ArrayView2<T>]) -> Result<Stats<T>> {
        let k = self.states();
        let log_a = self.log_transition();
        let mut st = Stats {
            log_likelihood: T::zero(),
            initial: vec![T::zero(); k],
            transition: Array2::zeros((k, k)),
            occupancy: vec![T::zero(); k],
            weighted_sum: Array2::zeros((k, self.dim())),
            gammas: Vec::with_capacity(seqs.len()),
        };
        for seq in seqs {
            let log_b = self.emission_matrix(*seq);
            let (alpha, ll) = self.forward(&log_b, &log_a);
            if !ll.is_finite() {
                return Err(Error::NumericalUnderflow("HMM forward pass"));
            }
            let beta = self.backward(&log_b, &log_a);
            st.log_likelihood += ll;
            let n = seq.nrows();
            let gamma = Array2::from_shape_fn((n, k), |(t, j)| (alpha[[t, j]] + beta[[t, j]] - ll).exp());
            for t in 0..n.saturating_sub(1) {
                for i in 0..k {
                    for j in 0..k {
                        let lx = alpha[[t, i]] + log_a[[i, j]] + log_b[[t + 1, j]] + beta[[t + 1, j]] - ll;
                        st.transition[[i, j]] += lx.exp();
                    }
                }
            }
            for j in 0..k {
                st.initial[j] += gamma[[0, j]];
                for t in 0..n {
                    let g = gamma[[t, j]];
                    st.occupancy[j] += g;
                    for d in 0..self.dim() {
                        st.weighted_sum[[j, d]] += g * seq[[t, d]];
                    }
                }
            }
            st.gammas.push(gamma);
        }
        Ok(st)
    }

    /// One Baum-Welch iteration. Returns the re-estimated model and the
    /// log-likelihood of `self` on `seqs`.
    pub fn baum_welch_step(&self, seqs: &[ArrayView2<T>], var_floor: T) -> Result<(GaussianHmm<T>, T)> {
        let st = self.e_step(seqs)?;
        let k = self.states();
        let dim = self.dim();
        let tiny = T::lit(1e-300);
        let mut next = self.clone();
        let n_seq = T::from_usize_lossy(seqs.len());
        for j in 0..k {
            next.initial[j] = st.initial[j] / n_seq;
        }
        for i in 0..k {
            let row: T = st.transition.row(i).iter().copied().sum();
            if row > tiny {
                for j in 0..k {
                    next.transition[[i, j]] = st.transition[[i, j]] / row;
                }
            }
        }
        for j in 0..k {
            let occ = st.occupancy[j];
            if occ <= tiny {
                continue;
            }
            for d in 0..dim {
                next.means[[j, d]] = st.weighted_sum[[j, d]] / occ;
            }
            for d in 0..dim {
                let mu = next.means[[j, d]];
                let mut s = T::zero();
                for (seq, gamma) in seqs.iter().zip(&st.gammas) {
                    for t in 0..seq.nrows() {
                        let diff = seq[[t, d]] - mu;
                        s += gamma[[t, j]] * diff * diff;
                    }
                }
                next.variances[[j, d]] = (s / occ).max(var_floor);
            }
        }
        Ok((next, st.log_likelihood))
    }

    /// Same model with every emission standard deviation multiplied by `factor`.
    pub fn scale_std(&self, factor: T) -> Self {
        GaussianHmm {
            variances: self.variances.mapv(|v| v * factor * factor),
            ..self.clone()
        }
    }
}

fn pooled_variance<T: Real>(seqs: &[ArrayView2<T>], floor: T) -> Vec<T> {
    let dim = seqs[0].ncols();
    let n: usize = seqs.iter().map(|s| s.nrows()).sum();
    let count = T::from_usize_lossy(n);
    (0..dim)
        .map(|d| {
            let mean = seqs.iter().flat_map(|s| s.column(d).to_vec()).sum::<T>() / count;
            let var = seqs
                .iter()
                .flat_map(|s| s.column(d).to_vec())
                .map(|x| (x - mean) * (x - mean))
                .sum::<T>()
                / count;
            var.max(floor)
        })
        .collect()
}

/// Initial parameters for `seqs` according to `cfg.init`.
pub fn initial_model<T: Real>(seqs: &[ArrayView2<T>], cfg: &HmmConfig, rng: &mut ChaCha8Rng) -> GaussianHmm<T> {
    let k = cfg.states;
    let dim = seqs[0].ncols();
    let floor = T::lit(cfg.var_floor);
    let pooled = pooled_variance(seqs, floor);
    let mut means = Array2::zeros((k, dim));
    let mut variances = Array2::zeros((k, dim));
    let (initial, transition) = match cfg.init {
        HmmInit::Segments => {
            let mut counts = vec![T::zero(); k];
            let mut sums = Array2::<T>::zeros((k, dim));
            let mut squares = Array2::<T>::zeros((k, dim));
            for s in seqs {
                let n = s.nrows();
                for (t, x) in s.outer_iter().enumerate() {
                    let state = (t * k / n).min(k - 1);
                    counts[state] += T::one();
                    for d in 0..dim {
                        sums[[state, d]] += x[d];
                        squares[[state, d]] += x[d] * x[d];
                    }
                }
            }
            for j in 0..k {
                for d in 0..dim {
                    let m = sums[[j, d]] / counts[j];
                    means[[j, d]] = m;
                    variances[[j, d]] = (squares[[j, d]] / counts[j] - m * m).max(pooled[d] * T::lit(0.1)).max(floor);
                }
            }
            let stay = if k == 1 { T::one() } else { T::lit(0.8) };
            let leave = if k == 1 { T::zero() } else { T::lit(0.2) / T::from_usize_lossy(k - 1) };
            let a = Array2::from_shape_fn((k, k), |(i, j)| if i == j { stay } else { leave });
            (vec![T::one() / T::from_usize_lossy(k); k], a)
        }
        HmmInit::Random => {
            for j in 0..k {
                let s = &seqs[rng.random_range(0..seqs.len())];
                let x = s.row(rng.random_range(0..s.nrows()));
                for d in 0..dim {
                    means[[j, d]] = x[d];
                    variances[[j, d]] = pooled[d];
                }
            }
            let mut draw = |n: usize| -> Vec<T> {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                let total: f64 = v.iter().sum();
                v.into_iter().map(|x| T::lit(x / total)).collect()
            };
            let initial = draw(k);
            let mut a = Array2::zeros((k, k));
            for i in 0..k {
                for (j, v) in draw(k).into_iter().enumerate() {
                    a[[i, j]] = v;
                }
            }
            (initial, a)
        }
    };
    GaussianHmm {
        initial,
        transition,
        means,
        variances,
    }
}

/// Trained single model plus the log-likelihood before each iteration.
#[derive(Debug, Clone)]
pub struct FitTrace<T> {
    pub model: GaussianHmm<T>,
    pub log_likelihoods: Vec<T>,
}

/// Baum-Welch from `init` until the gain drops below `cfg.tol` or
/// `cfg.max_iter` iterations; a decrease in log-likelihood is an error.
pub fn baum_welch<T: Real>(init: GaussianHmm<T>, seqs: &[ArrayView2<T>], cfg: &HmmConfig) -> Result<FitTrace<T>> {
    let floor = T::lit(cfg.var_floor);
    let mut model = init;
    let mut trace: Vec<T> = Vec::new();
    for iteration in 0..cfg.max_iter {
        let (next, ll) = model.baum_welch_step(seqs, floor)?;
        if let Some(&prev) = trace.last() {
            let slack = T::lit(1e-9) * (T::one() + prev.abs());
            if ll < prev - slack {
                return Err(Error::LikelihoodDecreased {
                    iteration,
                    before: prev.as_f64(),
                    after: ll.as_f64(),
                });
            }
            if ll - prev < T::lit(cfg.tol) {
                trace.push(ll);
                break;
            }
        }
        trace.push(ll);
        model = next;
    }
    Ok(FitTrace {
        model,
        log_likelihoods: trace,
    })
}

fn validate<T: Real>(seqs: &[ArrayView2<T>], cfg: &HmmConfig) -> Result<usize> {
    if cfg.states == 0 || cfg.max_iter == 0 || !(cfg.var_floor > 0.0) {
        return Err(Error::InvalidConfig(format!("invalid HMM configuration {cfg:?}")));
    }
    let dim = seqs.first().ok_or(Error::EmptyInput("no sequences"))?.ncols();
    for s in seqs {
        if s.ncols() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim} features"),
                got: s.ncols().to_string(),
            });
        }
        if s.nrows() < cfg.states {
            return Err(Error::SeriesTooShort {
                len: s.nrows(),
                window: cfg.states,
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("HMM training sequence"));
        }
    }
    Ok(dim)
}

/// Fits one model to `seqs` from the configured initialization.
pub fn fit_gaussian_hmm<T: Real>(seqs: &[ArrayView2<T>], cfg: &HmmConfig, stream: u64) -> Result<FitTrace<T>> {
    validate(seqs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    baum_welch(initial_model(seqs, cfg, &mut rng), seqs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HmmModel<T> {
    pub classes: Vec<GaussianHmm<T>>,
}

impl<T: Real> HmmModel<T> {
    pub fn log_likelihoods(&self, seq: ArrayView2<T>) -> Result<Vec<T>> {
        let dim = self.classes[0].dim();
        if seq.ncols() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim} features"),
                got: seq.ncols().to_string(),
            });
        }
        Ok(self.classes.iter().map(|m| m.log_likelihood(seq)).collect())
    }

    /// Class with the highest likelihood; the lowest index wins ties.
    pub fn predict(&self, seq: ArrayView2<T>) -> Result<usize> {
        Ok(argmax(&self.log_likelihoods(seq)?))
    }
}

/// One model per class, trained in parallel on that class's sequences.
pub fn hmm_fit<T: Real>(seqs: &[ArrayView2<T>], labels: &[usize], n_classes: usize, cfg: &HmmConfig) -> Result<HmmModel<T>> {
    if seqs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} sequences, {} labels", seqs.len(), labels.len())));
    }
    check_classes(labels, n_classes)?;
    validate(seqs, cfg)?;
    let classes = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let own: Vec<ArrayView2<T>> = seqs.iter().zip(labels).filter(|(_, &l)| l == c).map(|(s, _)| *s).collect();
            fit_gaussian_hmm(&own, cfg, c as u64).map(|f| f.model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HmmModel { classes })
}
