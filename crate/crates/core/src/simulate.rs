//! Synthetic CSI from a multipath scene with moving human scatterers.
//!
//! Every path contributes `gain * exp(-j 2 pi f_i tau(t))` on subcarrier
//! `f_i = center + i * spacing`, where `tau(t)` grows with the path-length
//! change. Body reflections change path length at twice the body speed.
//! Activity presets are synthetic speed profiles tuned only to reproduce the
//! qualitative orderings (running faster than walking, falls short and fast).

use std::f64::consts::TAU;
use std::fmt::Write as _;

use ndarray::Array3;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivityLabel, CsiFrame, CsiStream, Dims, DEFAULT_SUBCARRIER_SPACING_HZ, SPEED_OF_LIGHT};
use crate::num::Real;

pub const MAX_SPEED: f64 = 10.0;

/// Doppler shift of a body reflection moving at `speed` (m/s) for carrier `frequency` (Hz).
pub fn doppler_of_speed<T: Real>(speed: T, frequency: T) -> T {
    T::lit(2.0) * speed * frequency / T::lit(SPEED_OF_LIGHT)
}

/// Inverse of [`doppler_of_speed`].
pub fn speed_of_doppler<T: Real>(doppler: T, frequency: T) -> T {
    doppler * T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * frequency)
}

/// Piecewise-linear speed profile over `(time, speed)` knots; held constant
/// outside the knot range. Positive speed lengthens the path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SpeedProfile {
    knots: Vec<(f64, f64)>,
    /// Integral of speed from t = 0 up to each knot.
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl PartialEq for SpeedProfile {
    fn eq(&self, other: &Self) -> bool {
        self.knots == other.knots
    }
}

impl SpeedProfile {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidScenario(format!("duplicate knot time {}", w[0].0)));
            }
        }
        if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidScenario("non-finite speed knot".into()));
        }
        if knots.iter().any(|&(_, v)| v.abs() > MAX_SPEED) {
            return Err(Error::InvalidScenario(format!("speed exceeds {MAX_SPEED} m/s")));
        }
        let mut p = SpeedProfile {
            knots,
            cumulative: Vec::new(),
        };
        p.cumulative = p.knots.iter().map(|&(t, _)| p.integrate_raw(t)).collect();
        Ok(p)
    }

    pub fn stationary() -> Self {
        SpeedProfile::default()
    }

    pub fn constant(speed: f64) -> Result<Self> {
        Self::new(vec![(0.0, speed)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn is_stationary(&self) -> bool {
        self.knots.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn max_abs_speed(&self) -> f64 {
        self.knots.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match self.knots.len() {
            0 => 0.0,
            _ if t <= self.knots[0].0 => self.knots[0].1,
            n if t >= self.knots[n - 1].0 => self.knots[n - 1].1,
            _ => {
                let j = self.knots.partition_point(|&(kt, _)| kt <= t);
                let (t0, v0) = self.knots[j - 1];
                let (t1, v1) = self.knots[j];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    // integral of speed over [0, t] by walking the segments
    fn integrate_raw(&self, t: f64) -> f64 {
        let area = |a: f64, b: f64| (b - a) * 0.5 * (self.speed_at(a) + self.speed_at(b));
        if self.knots.is_empty() {
            return 0.0;
        }
        let (lo, hi, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
        let mut pts = vec![lo];
        pts.extend(self.knots.iter().map(|k| k.0).filter(|&kt| kt > lo && kt < hi));
        pts.push(hi);
        sign * pts.windows(2).map(|w| area(w[0], w[1])).sum::<f64>()
    }

    /// Path-length change (m) accumulated between t = 0 and `t`.
    pub fn displacement(&self, t: f64) -> f64 {
        if self.knots.is_empty() {
            return 0.0;
        }
        if self.cumulative.len() != self.knots.len() {
            return self.integrate_raw(t);
        }
        let j = self.knots.partition_point(|&(kt, _)| kt <= t);
        if j == 0 || t < 0.0 {
            return self.integrate_raw(t);
        }
        let (tk, _) = self.knots[j - 1];
        let vk = self.speed_at(tk);
        self.cumulative[j - 1] + (t - tk) * 0.5 * (vk + self.speed_at(t))
    }
}

/// One propagation path of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPath {
    /// Propagation delay at t = 0 (s).
    pub base_delay: f64,
    pub gain: f64,
    pub motion: SpeedProfile,
    /// Body reflection: path length changes at twice the scatterer speed.
    pub reflection: bool,
    /// Extra phase per receive antenna index (rad), from the arrival angle.
    pub antenna_phase: f64,
    /// Extra phase per transmit antenna index (rad).
    pub tx_phase: f64,
}

impl ScatterPath {
    pub fn fixed(base_delay: f64, gain: f64) -> Self {
        ScatterPath {
            base_delay,
            gain,
            motion: SpeedProfile::stationary(),
            reflection: false,
            antenna_phase: 0.0,
            tx_phase: 0.0,
        }
    }

    pub fn body(base_delay: f64, gain: f64, motion: SpeedProfile) -> Self {
        ScatterPath {
            base_delay,
            gain,
            motion,
            reflection: true,
            antenna_phase: 0.0,
            tx_phase: 0.0,
        }
    }

    pub fn with_antenna_phase(mut self, phase: f64) -> Self {
        self.antenna_phase = phase;
        self
    }

    fn length_factor(&self) -> f64 {
        if self.reflection {
            2.0
        } else {
            1.0
        }
    }

    /// Delay at time `t`.
    pub fn delay_at(&self, t: f64) -> f64 {
        self.base_delay + self.length_factor() * self.motion.displacement(t) / SPEED_OF_LIGHT
    }
}

/// A scene plus impairments; all randomness flows from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityScenario {
    pub label: ActivityLabel,
    pub duration: f64,
    pub paths: Vec<ScatterPath>,
    /// Std of circularly-symmetric complex Gaussian noise per entry.
    pub noise_std: f64,
    pub cfo_hz: f64,
    /// SFO phase per subcarrier index per frame (rad).
    pub sfo_slope: f64,
    /// Per-frame probability of an impulse-noise burst.
    pub burst_prob: f64,
    pub burst_std: f64,
    /// Std of a slow common gain fluctuation (transmit power / AGC drift).
    pub power_jitter: f64,
    pub seed: u64,
}

impl ActivityScenario {
    pub fn new(label: ActivityLabel, duration: f64, paths: Vec<ScatterPath>) -> Self {
        ActivityScenario {
            label,
            duration,
            paths,
            noise_std: 0.0,
            cfo_hz: 0.0,
            sfo_slope: 0.0,
            burst_prob: 0.0,
            burst_std: 0.0,
            power_jitter: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.noise_std >= 0.0 && self.burst_std >= 0.0 && self.power_jitter >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.burst_prob) {
            return bad(format!("burst probability {} outside [0, 1]", self.burst_prob));
        }
        if self.paths.is_empty() {
            return bad("scenario needs at least one path".into());
        }
        for p in &self.paths {
            if !(p.gain >= 0.0 && p.gain.is_finite()) || !p.base_delay.is_finite() {
                return bad(format!("path gain {} / delay {} invalid", p.gain, p.base_delay));
            }
            if p.motion.max_abs_speed() > MAX_SPEED {
                return bad(format!("speed exceeds {MAX_SPEED} m/s"));
            }
        }
        Ok(())
    }

    /// Largest Doppler of any path over the band.
    pub fn max_doppler(&self, highest_frequency: f64) -> f64 {
        self.paths
            .iter()
            .map(|p| p.length_factor() * p.motion.max_abs_speed() * highest_frequency / SPEED_OF_LIGHT)
            .fold(0.0, f64::max)
    }
}

/// Capture parameters for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sample_rate: f64,
    pub center_frequency: f64,
    pub subcarrier_spacing: f64,
    pub dims: Dims,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sample_rate: 1000.0,
            center_frequency: 5e9,
            subcarrier_spacing: DEFAULT_SUBCARRIER_SPACING_HZ,
            dims: Dims::reference_nic(),
        }
    }
}

impl SimConfig {
    pub fn subcarrier_frequency(&self, i: usize) -> f64 {
        self.center_frequency + i as f64 * self.subcarrier_spacing
    }
}

/// Generates the channel snapshots of `scenario` on a uniform time grid.
pub fn synthesize<T: Real>(scenario: &ActivityScenario, cfg: &SimConfig) -> Result<CsiStream<T>> {
    scenario.validate()?;
    let dims = cfg.dims;
    if dims.columns() == 0 {
        return Err(Error::InvalidConfig("dimensions must be positive".into()));
    }
    let top = cfg.subcarrier_frequency(dims.subcarriers - 1).max(cfg.center_frequency);
    let doppler = scenario.max_doppler(top);
    if cfg.sample_rate < 2.0 * doppler {
        return Err(Error::AliasedDoppler {
            sample_rate: cfg.sample_rate,
            doppler,
        });
    }
    let n = (scenario.duration * cfg.sample_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = Normal::new(0.0, scenario.noise_std / 2f64.sqrt()).expect("finite std");
    let burst = Normal::new(0.0, scenario.burst_std / 2f64.sqrt()).expect("finite std");
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    // AR(1) drift with a ~0.5 s time constant
    let rho = (-1.0 / (0.5 * cfg.sample_rate)).exp();
    let mut drift = 0.0;
    let freqs: Vec<f64> = (0..dims.subcarriers).map(|i| cfg.subcarrier_frequency(i)).collect();
    let mut frames = Vec::with_capacity(n);
    let mut delays = vec![0.0; scenario.paths.len()];
    for k in 0..n {
        let t = k as f64 / cfg.sample_rate;
        for (d, p) in delays.iter_mut().zip(&scenario.paths) {
            *d = p.delay_at(t);
        }
        if scenario.power_jitter > 0.0 {
            drift = rho * drift + (1.0 - rho * rho).sqrt() * scenario.power_jitter * unit.sample(&mut rng);
        }
        let common = Complex::from_polar(1.0 + drift, TAU * scenario.cfo_hz * t);
        let bursting = scenario.burst_prob > 0.0 && rng.random::<f64>() < scenario.burst_prob;
        let mut gains = Array3::from_elem((dims.rx, dims.tx, dims.subcarriers), Complex::new(T::zero(), T::zero()));
        for ((r, x, i), g) in gains.indexed_iter_mut() {
            let mut h = Complex::new(0.0, 0.0);
            for (p, &tau) in scenario.paths.iter().zip(&delays) {
                let phase = -TAU * freqs[i] * tau + r as f64 * p.antenna_phase + x as f64 * p.tx_phase;
                h += Complex::from_polar(p.gain, phase);
            }
            h *= common * Complex::from_polar(1.0, scenario.sfo_slope * i as f64 * k as f64);
            if scenario.noise_std > 0.0 {
                h += Complex::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
            if bursting {
                h += Complex::new(burst.sample(&mut rng), burst.sample(&mut rng));
            }
            *g = Complex::new(T::lit(h.re), T::lit(h.im));
        }
        frames.push(CsiFrame::new(T::lit(t), gains)?);
    }
    let mut stream = CsiStream::new(frames, T::lit(cfg.sample_rate), T::lit(cfg.center_frequency))?;
    stream.subcarrier_spacing = T::lit(cfg.subcarrier_spacing);
    stream.label = Some(scenario.label);
    Ok(stream)
}

/// Per-subject scene geometry and motion style, drawn from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub static_paths: Vec<ScatterPath>,
    pub body_delay: f64,
    pub body_gain: f64,
    pub speed_scale: f64,
    pub antenna_phases: [f64; 3],
}

impl SubjectProfile {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5B1EC7);
        let los = ScatterPath::fixed(10e-9, 1.0).with_antenna_phase(rng.random_range(-1.0..1.0));
        let wall = ScatterPath::fixed(rng.random_range(25e-9..45e-9), rng.random_range(0.3..0.5))
            .with_antenna_phase(rng.random_range(-2.0..2.0));
        SubjectProfile {
            static_paths: vec![los, wall],
            body_delay: rng.random_range(14e-9..22e-9),
            body_gain: rng.random_range(0.85..1.15),
            speed_scale: rng.random_range(0.93..1.07),
            antenna_phases: [
                rng.random_range(-2.5..2.5),
                rng.random_range(-2.5..2.5),
                rng.random_range(-2.5..2.5),
            ],
        }
    }
}

/// Trial length used when a preset is asked for without an explicit duration.
pub const PRESET_DURATION: f64 = 4.0;

/// Smooth 0 -> 1 -> 0 envelope over `[start, start + len]` with linear ramps.
fn plateau(start: f64, len: f64, ramp: f64) -> Vec<(f64, f64)> {
    vec![(start, 0.0), (start + ramp, 1.0), (start + len - ramp, 1.0), (start + len, 0.0)]
}

/// Triangle 0 -> 1 -> 0 over `[start, start + len]` peaking at fraction `peak_at`.
fn triangle(start: f64, len: f64, peak_at: f64) -> Vec<(f64, f64)> {
    vec![(start, 0.0), (start + peak_at * len, 1.0), (start + len, 0.0)]
}

fn envelope_value(knots: &[(f64, f64)], t: f64) -> f64 {
    SpeedProfile {
        knots: knots.to_vec(),
        cumulative: Vec::new(),
    }
    .speed_at(t)
}

/// Samples `speed * envelope(t) * (1 + depth * sin(2 pi rate t + phase))`
/// every 10 ms, clamped to 4 m/s.
fn modulated(envelope: &[(f64, f64)], speed: f64, depth: f64, rate: f64, phase: f64, duration: f64) -> Result<SpeedProfile> {
    let steps = (duration / 0.01).ceil() as usize;
    let knots = (0..=steps)
        .map(|k| {
            let t = k as f64 * 0.01;
            let v = speed * envelope_value(envelope, t) * (1.0 + depth * (TAU * rate * t + phase).sin());
            (t, v.clamp(-4.0, 4.0))
        })
        .collect();
    SpeedProfile::new(knots)
}

fn scaled(knots: &[(f64, f64)], speed: f64) -> Result<SpeedProfile> {
    SpeedProfile::new(knots.iter().map(|&(t, v)| (t, (v * speed).clamp(-4.0, 4.0))).collect())
}

/// Scenario for one trial of `subject` performing `label`.
pub fn scenario_for(label: ActivityLabel, subject: &SubjectProfile, trial_seed: u64, duration: f64) -> Result<ActivityScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ label.index() as u64);
    let s = subject.speed_scale * rng.random_range(0.95..1.05);
    let g = subject.body_gain * 0.3;
    let onset = rng.random_range(0.15..0.3);
    let avail = (duration - onset - 0.15).max(0.5);
    let phase = rng.random_range(0.0..TAU);
    let d = subject.body_delay;
    let ap = subject.antenna_phases;
    let mut body: Vec<ScatterPath> = Vec::new();
    let mut push = |delay: f64, gain: f64, motion: SpeedProfile, ap: f64| {
        body.push(ScatterPath::body(delay, gain, motion).with_antenna_phase(ap));
    };
    match label {
        ActivityLabel::Walk | ActivityLabel::Run => {
            let (v, cadence, depth) = if label == ActivityLabel::Walk {
                (1.2 * s, 1.8, 0.6)
            } else {
                (2.5 * s, 2.8, 0.55)
            };
            let env = plateau(onset, avail, 0.15);
            push(d, g, scaled(&env, v)?, ap[0]);
            push(d + 2e-9, 0.4 * g, modulated(&env, v, depth, cadence, phase, duration)?, ap[1]);
            push(d + 3e-9, 0.3 * g, modulated(&env, v, depth, cadence, phase + std::f64::consts::PI, duration)?, ap[2]);
        }
        ActivityLabel::Fall => {
            let start = onset + rng.random_range(0.1..0.5);
            let shape = triangle(start, 0.6, 0.75);
            push(d, g, scaled(&shape, 2.8 * s)?, ap[0]);
            push(d + 2e-9, 0.5 * g, scaled(&shape, 3.6 * s)?, ap[1]);
        }
        ActivityLabel::SitDown => {
            let start = onset + rng.random_range(0.0..0.3);
            let shape = triangle(start, 1.3, 0.3);
            push(d, g, scaled(&shape, 1.0 * s)?, ap[0]);
            push(d + 2e-9, 0.5 * g, scaled(&shape, 0.7 * s)?, ap[1]);
        }
        ActivityLabel::StandUp => {
            let start = onset + rng.random_range(0.0..0.3);
            // forward lean, then rise
            let mut shape = triangle(start, 0.4, 0.5);
            shape[1].1 = 0.4;
            shape.extend(triangle(start + 0.4, 1.0, 0.7).into_iter().skip(1));
            push(d, g, scaled(&shape, -1.0 * s)?, ap[0]);
            push(d + 2e-9, 0.5 * g, scaled(&shape, -0.7 * s)?, ap[1]);
        }
        ActivityLabel::LayDown => {
            let start = onset + rng.random_range(0.0..0.15);
            let mut shape = triangle(start, 0.9, 0.3);
            shape.extend(triangle(start + 1.05, 0.6, 0.6));
            let shape: Vec<(f64, f64)> = shape
                .into_iter()
                .map(|(t, v)| if t > start + 1.0 { (t, 1.9 * v) } else { (t, 0.9 * v) })
                .collect();
            push(d, g, scaled(&shape, s)?, ap[0]);
            push(d + 2e-9, 0.5 * g, scaled(&shape, 1.2 * s)?, ap[1]);
        }
        ActivityLabel::NoActivity => {}
    }
    let mut paths = subject.static_paths.clone();
    paths.extend(body);
    Ok(ActivityScenario {
        label,
        duration,
        paths,
        noise_std: 0.02,
        cfo_hz: 0.0,
        sfo_slope: 0.0,
        burst_prob: 0.002,
        burst_std: 0.15,
        power_jitter: 0.03,
        seed: trial_seed ^ (label.index() as u64) << 48,
    })
}

/// Deterministic preset scenario for `label`; subject and trial both derive from `seed`.
pub fn scenario_preset(label: ActivityLabel, seed: u64) -> ActivityScenario {
    scenario_for(label, &SubjectProfile::from_seed(seed), seed, PRESET_DURATION).expect("preset profiles are valid")
}

// scenario files

fn parse_bool(v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("expected boolean, got {v:?}"),
        }),
    }
}

fn parse_f64(v: &str, line: usize) -> Result<f64> {
    v.parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected number, got {v:?}"),
    })
}

/// Parses the key-value scenario text format.
pub fn parse_scenario(text: &str) -> Result<ActivityScenario> {
    let mut sc = ActivityScenario::new(ActivityLabel::NoActivity, 0.0, Vec::new());
    let mut saw_label = false;
    let mut saw_duration = false;
    let mut current: Option<ScatterPath> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content == "[path]" {
            if let Some(p) = current.take() {
                sc.paths.push(p);
            }
            current = Some(ScatterPath::fixed(0.0, 0.0));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(p) = current.as_mut() {
            match key {
                "base_delay" => p.base_delay = parse_f64(value, line)?,
                "gain" => p.gain = parse_f64(value, line)?,
                "reflection" => p.reflection = parse_bool(value, line)?,
                "antenna_phase" => p.antenna_phase = parse_f64(value, line)?,
                "tx_phase" => p.tx_phase = parse_f64(value, line)?,
                "speed" => {
                    let knots = value
                        .split(',')
                        .map(|kv| {
                            let (t, v) = kv.trim().split_once(':').ok_or_else(|| Error::Parse {
                                line,
                                message: format!("speed knot {kv:?} is not `time:speed`"),
                            })?;
                            Ok((parse_f64(t.trim(), line)?, parse_f64(v.trim(), line)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    p.motion = SpeedProfile::new(knots)?;
                }
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown path key {key:?}"),
                    })
                }
            }
            continue;
        }
        match key {
            "label" => {
                sc.label = value.parse()?;
                saw_label = true;
            }
            "duration" => {
                sc.duration = parse_f64(value, line)?;
                saw_duration = true;
            }
            "noise_std" => sc.noise_std = parse_f64(value, line)?,
            "cfo_hz" => sc.cfo_hz = parse_f64(value, line)?,
            "sfo_slope" => sc.sfo_slope = parse_f64(value, line)?,
            "burst_prob" => sc.burst_prob = parse_f64(value, line)?,
            "burst_std" => sc.burst_std = parse_f64(value, line)?,
            "power_jitter" => sc.power_jitter = parse_f64(value, line)?,
            "seed" => {
                sc.seed = value.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("expected integer seed, got {value:?}"),
                })?
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown scenario key {key:?}"),
                })
            }
        }
    }
    if let Some(p) = current {
        sc.paths.push(p);
    }
    if !saw_label || !saw_duration {
        return Err(Error::HeaderMissing("scenario needs `label` and `duration`".into()));
    }
    sc.validate()?;
    Ok(sc)
}

/// Renders a scenario in the text format read by [`parse_scenario`].
pub fn write_scenario(sc: &ActivityScenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "label = {}", sc.label);
    let _ = writeln!(out, "duration = {}", sc.duration);
    let _ = writeln!(out, "noise_std = {}", sc.noise_std);
    let _ = writeln!(out, "cfo_hz = {}", sc.cfo_hz);
    let _ = writeln!(out, "sfo_slope = {}", sc.sfo_slope);
    let _ = writeln!(out, "burst_prob = {}", sc.burst_prob);
    let _ = writeln!(out, "burst_std = {}", sc.burst_std);
    let _ = writeln!(out, "power_jitter = {}", sc.power_jitter);
    let _ = writeln!(out, "seed = {}", sc.seed);
    for p in &sc.paths {
        let _ = writeln!(out, "\n[path]");
        let _ = writeln!(out, "base_delay = {}", p.base_delay);
        let _ = writeln!(out, "gain = {}", p.gain);
        let _ = writeln!(out, "reflection = {}", p.reflection);
        let _ = writeln!(out, "antenna_phase = {}", p.antenna_phase);
        let _ = writeln!(out, "tx_phase = {}", p.tx_phase);
        if !p.motion.knots().is_empty() {
            let knots: Vec<String> = p.motion.knots().iter().map(|(t, v)| format!("{t}:{v}")).collect();
            let _ = writeln!(out, "speed = {}", knots.join(", "));
        }
    }
    out
}
