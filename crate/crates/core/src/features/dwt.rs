//! Periodized multilevel discrete wavelet transform (Daubechies-4, 8 taps).

use crate::error::{Error, Result};
use crate::num::Real;

/// Daubechies-4 scaling (reconstruction low-pass) filter.
pub const DB4_SCALING: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// Multilevel decomposition: `details[0]` is level 1 (finest).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub details: Vec<Vec<T>>,
    pub approximation: Vec<T>,
}

fn filters<T: Real>() -> (Vec<T>, Vec<T>) {
    let n = DB4_SCALING.len();
    let low: Vec<T> = DB4_SCALING.iter().map(|&h| T::lit(h)).collect();
    let high: Vec<T> = (0..n)
        .map(|k| {
            let v = T::lit(DB4_SCALING[n - 1 - k]);
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    (low, high)
}

/// One orthogonal analysis step with periodic extension. `x.len()` must be even.
fn step<T: Real>(x: &[T], low: &[T], high: &[T]) -> (Vec<T>, Vec<T>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![T::zero(); half];
    let mut d = vec![T::zero(); half];
    for i in 0..half {
        let (mut sa, mut sd) = (T::zero(), T::zero());
        for k in 0..low.len() {
            let v = x[(2 * i + k) % n];
            sa += low[k] * v;
            sd += high[k] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// `levels`-level decomposition; the length must be divisible by `2^levels`.
pub fn wavedec<T: Real>(x: &[T], levels: usize) -> Result<Decomposition<T>> {
    let block = 1usize << levels;
    if x.is_empty() || x.len() % block != 0 {
        return Err(Error::SeriesTooShort {
            len: x.len(),
            window: block,
        });
    }
    let (low, high) = filters::<T>();
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = step(&approx, &low, &high);
        details.push(d);
        approx = a;
    }
    Ok(Decomposition {
        details,
        approximation: approx,
    })
}

/// Symmetric (half-sample) reflection of `x` out to `len` samples.
pub fn reflect_pad<T: Real>(x: &[T], len: usize) -> Vec<T> {
    let n = x.len();
    if n == 0 {
        return vec![T::zero(); len];
    }
    (0..len)
        .map(|i| {
            let j = i % (2 * n);
            if j < n {
                x[j]
            } else {
                x[2 * n - 1 - j]
            }
        })
        .collect()
}

/// Detail band of level `level` (1-based): `(fs / 2^(level+1), fs / 2^level]`.
pub fn level_band(sample_rate: f64, level: usize) -> (f64, f64) {
    (sample_rate / 2f64.powi(level as i32 + 1), sample_rate / 2f64.powi(level as i32))
}

pub fn energy<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}
