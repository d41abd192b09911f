//! Doppler-profile gesture recognition: two-sided STFT, energy segmentation
//! against a noise floor, per-segment sign symbols, and edit-distance
//! template matching.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::stft::{complex_frames, StftParams};
use crate::model::ActivityLabel;
use crate::num::Real;
use crate::simulate::{ActivityScenario, ScatterPath, SpeedProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GestureConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// A segment starts above `threshold_ratio * noise_floor` (2 = 3 dB).
    pub threshold_ratio: f64,
    /// Below-threshold run needed to close a segment; segments shorter than
    /// this are dropped as blips.
    pub hysteresis_s: f64,
    /// Share of segment energy on one side needed for a `Pos`/`Neg` symbol.
    pub dominance: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        GestureConfig {
            window_s: 0.5,
            hop_s: 0.005,
            band_low_hz: 8.0,
            band_high_hz: 134.0,
            threshold_ratio: 2.0,
            hysteresis_s: 0.025,
            dominance: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerProfile<T> {
    /// `[frame, bin]`, magnitudes; bins outside the band are zero.
    pub frames: Array2<T>,
    /// Signed bin frequencies in ascending order.
    pub frequencies: Vec<T>,
    pub frame_period: T,
    /// Time of the first frame's window centre.
    pub start_time: T,
}

impl<T: Real> DopplerProfile<T> {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn frame_time(&self, f: usize) -> T {
        self.start_time + T::from_usize_lossy(f) * self.frame_period
    }

    /// Band energy of one frame split into (negative, positive) halves.
    pub fn frame_energy_split(&self, f: usize) -> (T, T) {
        let mut neg = T::zero();
        let mut pos = T::zero();
        for (m, &freq) in self.frames.row(f).iter().zip(&self.frequencies) {
            if freq > T::zero() {
                pos += *m * *m;
            } else if freq < T::zero() {
                neg += *m * *m;
            }
        }
        (neg, pos)
    }

    pub fn frame_energy(&self, f: usize) -> T {
        let (n, p) = self.frame_energy_split(f);
        n + p
    }

    /// Uniformly rescaled copy.
    pub fn scaled(&self, factor: T) -> Self {
        DopplerProfile {
            frames: self.frames.mapv(|v| v * factor),
            ..self.clone()
        }
    }
}

/// Two-sided windowed STFT of a complex series restricted to the Doppler band.
pub fn doppler_profile<T: Real>(series: &[Complex<T>], sample_rate: T, cfg: &GestureConfig) -> Result<DopplerProfile<T>> {
    let fs = sample_rate.as_f64();
    let window_len = (cfg.window_s * fs).round() as usize;
    let hop_len = ((cfg.hop_s * fs).round() as usize).max(1);
    let fft_len = window_len.max(1).next_power_of_two();
    let params = StftParams::new(window_len, hop_len, fft_len);
    let spectra = complex_frames(series, &params, true)?;
    let bin_width = fs / fft_len as f64;
    // fftshift order: -N/2 .. N/2 - 1
    let half = fft_len as isize / 2;
    let order: Vec<(usize, f64)> = (-half..half)
        .map(|k| ((k.rem_euclid(fft_len as isize)) as usize, k as f64 * bin_width))
        .collect();
    let in_band = |f: f64| f.abs() >= cfg.band_low_hz && f.abs() <= cfg.band_high_hz;
    let mut frames = Array2::zeros((spectra.nrows(), order.len()));
    for (t, row) in spectra.outer_iter().enumerate() {
        for (j, &(k, f)) in order.iter().enumerate() {
            if in_band(f) {
                frames[[t, j]] = row[k].norm();
            }
        }
    }
    Ok(DopplerProfile {
        frames,
        frequencies: order.iter().map(|&(_, f)| T::lit(f)).collect(),
        frame_period: T::lit(hop_len as f64 / fs),
        start_time: T::lit(window_len as f64 / (2.0 * fs)),
    })
}

/// Mean band energy of the frames whose centres fall in `[start_s, stop_s]`.
pub fn estimate_noise_floor<T: Real>(profile: &DopplerProfile<T>, start_s: T, stop_s: T) -> Result<T> {
    let frames: Vec<usize> = (0..profile.len())
        .filter(|&f| {
            let t = profile.frame_time(f);
            t >= start_s && t <= stop_s
        })
        .collect();
    if frames.is_empty() {
        return Err(Error::EmptyInput("no profile frames inside the quiet interval"));
    }
    let mean = frames.iter().map(|&f| profile.frame_energy(f)).sum::<T>() / T::from_usize_lossy(frames.len());
    Ok(mean.max(T::min_positive_value()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Pos,
    Neg,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureSegment {
    pub start: f64,
    pub stop: f64,
    pub symbol: Symbol,
}

/// Splits the profile into active segments and labels each by Doppler sign.
pub fn segment<T: Real>(profile: &DopplerProfile<T>, noise_floor: T, cfg: &GestureConfig) -> Vec<GestureSegment> {
    let threshold = T::lit(cfg.threshold_ratio) * noise_floor;
    let hold = (cfg.hysteresis_s / profile.frame_period.as_f64()).round().max(1.0) as usize;
    let active: Vec<bool> = (0..profile.len()).map(|f| profile.frame_energy(f) > threshold).collect();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (f, &on) in active.iter().enumerate() {
        if !on {
            continue;
        }
        match runs.last_mut() {
            // the gap since the last active frame is shorter than the hold time
            Some((_, last)) if f - *last <= hold => *last = f,
            _ => runs.push((f, f)),
        }
    }

    let half = profile.frame_period.as_f64() / 2.0;
    runs.into_iter()
        .filter(|&(a, z)| z + 1 - a >= hold)
        .map(|(a, z)| {
            let (mut neg, mut pos) = (T::zero(), T::zero());
            for f in a..=z {
                let (n, p) = profile.frame_energy_split(f);
                neg += n;
                pos += p;
            }
            let total = neg + pos;
            let d = T::lit(cfg.dominance);
            let symbol = if pos >= d * total {
                Symbol::Pos
            } else if neg >= d * total {
                Symbol::Neg
            } else {
                Symbol::Both
            };
            GestureSegment {
                start: profile.frame_time(a).as_f64() - half,
                stop: profile.frame_time(z).as_f64() + half,
                symbol,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureTemplate {
    pub name: String,
    pub symbols: Vec<Symbol>,
}

pub fn parse_templates(json: &str) -> Result<Vec<GestureTemplate>> {
    let templates: Vec<GestureTemplate> = serde_json::from_str(json)?;
    if let Some(t) = templates.iter().find(|t| t.symbols.is_empty()) {
        return Err(Error::InvalidConfig(format!("template {:?} has no symbols", t.name)));
    }
    Ok(templates)
}

pub fn load_templates(path: &Path) -> Result<Vec<GestureTemplate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text)
}

pub fn edit_distance<A: PartialEq>(a: &[A], b: &[A]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Best template by edit distance; earlier templates win ties.
pub fn classify_gesture(segments: &[GestureSegment], templates: &[GestureTemplate]) -> Result<(String, f64)> {
    if templates.is_empty() {
        return Err(Error::NoTemplates);
    }
    if segments.is_empty() {
        return Err(Error::NoSegments);
    }
    let observed: Vec<Symbol> = segments.iter().map(|s| s.symbol).collect();
    let mut best: Option<(usize, usize)> = None;
    for (i, t) in templates.iter().enumerate() {
        let d = edit_distance(&observed, &t.symbols);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    let (i, d) = best.expect("templates nonempty");
    let longest = observed.len().max(templates[i].symbols.len());
    Ok((templates[i].name.clone(), 1.0 - d as f64 / longest as f64))
}

/// Full pipeline on one complex series: profile, noise floor from the quiet
/// lead-in, segmentation, and template matching.
pub fn recognize<T: Real>(
    series: &[Complex<T>],
    sample_rate: T,
    quiet_s: T,
    templates: &[GestureTemplate],
    cfg: &GestureConfig,
) -> Result<(Vec<GestureSegment>, String, f64)> {
    let profile = doppler_profile(series, sample_rate, cfg)?;
    let floor = estimate_noise_floor(&profile, T::zero(), quiet_s)?;
    let segs = segment(&profile, floor, cfg);
    let (name, score) = classify_gesture(&segs, templates)?;
    Ok((segs, name, score))
}

/// Scene with one hand path per stroke: `Pos` strokes approach, `Neg`
/// strokes recede, `Both` moves two reflectors in opposite directions.
/// Strokes last `stroke_s`, are separated by `gap_s`, and start after a
/// 0.7 s quiet lead-in.
pub fn gesture_scenario(symbols: &[Symbol], stroke_s: f64, gap_s: f64, peak_speed: f64, seed: u64) -> Result<ActivityScenario> {
    let lead = 0.7;
    let duration = lead + symbols.len() as f64 * (stroke_s + gap_s) + 0.6;
    let mut plus = vec![(0.0, 0.0)];
    let mut minus = vec![(0.0, 0.0)];
    for (i, s) in symbols.iter().enumerate() {
        let t0 = lead + i as f64 * (stroke_s + gap_s);
        let (a, b) = match s {
            Symbol::Pos => (-peak_speed, 0.0),
            Symbol::Neg => (peak_speed, 0.0),
            Symbol::Both => (-peak_speed, peak_speed),
        };
        // speed profile: 0 -> peak -> 0, half a sine approximated by a triangle
        for (knots, v) in [(&mut plus, a), (&mut minus, b)] {
            knots.push((t0, 0.0));
            knots.push((t0 + stroke_s / 2.0, v));
            knots.push((t0 + stroke_s, 0.0));
        }
    }
    plus.push((duration, 0.0));
    minus.push((duration, 0.0));
    let dedup = |k: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(k.len());
        for p in k {
            match out.last() {
                Some(q) if (p.0 - q.0).abs() < 1e-12 => {}
                _ => out.push(p),
            }
        }
        out
    };
    let mut paths = vec![
        ScatterPath::fixed(12e-9, 1.0),
        ScatterPath::body(18e-9, 0.25, SpeedProfile::new(dedup(plus))?),
    ];
    if symbols.contains(&Symbol::Both) {
        paths.push(ScatterPath::body(19e-9, 0.25, SpeedProfile::new(dedup(minus))?));
    }
    let mut sc = ActivityScenario::new(ActivityLabel::NoActivity, duration, paths);
    sc.noise_std = 0.01;
    sc.power_jitter = 0.0;
    sc.burst_prob = 0.0;
    sc.seed = seed;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use crate::simulate::{synthesize, SimConfig};

    fn series_of(sc: &ActivityScenario) -> Vec<Complex<f64>> {
        let cfg = SimConfig {
            dims: Dims::new(1, 1, 1),
            ..SimConfig::default()
        };
        synthesize::<f64>(sc, &cfg).unwrap().column_series(0).unwrap()
    }

    fn constant_motion(speed: f64) -> Vec<Complex<f64>> {
        let mut sc = ActivityScenario::new(
            ActivityLabel::NoActivity,
            1.5,
            vec![ScatterPath::fixed(10e-9, 1.0), ScatterPath::body(20e-9, 0.3, SpeedProfile::constant(speed).unwrap())],
        );
        sc.noise_std = 0.0;
        sc.power_jitter = 0.0;
        sc.burst_prob = 0.0;
        series_of(&sc)
    }

    fn tmpl(name: &str, s: &[Symbol]) -> GestureTemplate {
        GestureTemplate {
            name: name.into(),
            symbols: s.to_vec(),
        }
    }

    #[test]
    fn receding_path_is_negative() {
        let p = doppler_profile(&constant_motion(0.5), 1000.0, &GestureConfig::default()).unwrap();
        for f in 0..p.len() {
            let (neg, pos) = p.frame_energy_split(f);
            assert!(pos <= 1e-6 * neg, "frame {f}: {pos} vs {neg}");
        }
    }

    #[test]
    fn approaching_half_metre_per_second_peaks_near_17_hz() {
        let p = doppler_profile(&constant_motion(-0.5), 1000.0, &GestureConfig::default()).unwrap();
        let width = 1000.0 / 512.0;
        for f in [0, p.len() / 2, p.len() - 1] {
            let row = p.frames.row(f);
            let k = (0..row.len()).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
            let peak = p.frequencies[k];
            assert!(peak > 0.0);
            assert!((peak - 16.678).abs() <= width, "{peak}");
        }
    }

    #[test]
    fn static_scene_is_empty_in_band() {
        let mut sc = ActivityScenario::new(ActivityLabel::NoActivity, 1.0, vec![ScatterPath::fixed(10e-9, 1.0)]);
        sc.noise_std = 0.0;
        sc.power_jitter = 0.0;
        sc.burst_prob = 0.0;
        let p = doppler_profile(&series_of(&sc), 1000.0, &GestureConfig::default()).unwrap();
        assert!(p.frames.iter().all(|&m| m < 1e-9));
        assert!(segment(&p, 1e-6, &GestureConfig::default()).is_empty());
    }

    #[test]
    fn band_limits_are_applied() {
        let p = doppler_profile(&constant_motion(1.0), 1000.0, &GestureConfig::default()).unwrap();
        for (j, &f) in p.frequencies.iter().enumerate() {
            if !(8.0..=134.0).contains(&f64::abs(f)) {
                assert!(p.frames.column(j).iter().all(|&m| m == 0.0));
            }
        }
        assert!(matches!(
            doppler_profile(&constant_motion(1.0)[..100], 1000.0, &GestureConfig::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    fn segments_for(symbols: &[Symbol], gap: f64, cfg: &GestureConfig) -> Vec<GestureSegment> {
        let sc = gesture_scenario(symbols, 0.4, gap, 1.0, 5).unwrap();
        let p = doppler_profile(&series_of(&sc), 1000.0, cfg).unwrap();
        let floor = estimate_noise_floor(&p, 0.0, 0.4).unwrap();
        segment(&p, floor, cfg)
    }

    #[test]
    fn push_is_one_positive_segment() {
        let segs = segments_for(&[Symbol::Pos], 0.2, &GestureConfig::default());
        assert_eq!(segs.len(), 1, "{segs:?}");
        assert_eq!(segs[0].symbol, Symbol::Pos);
        assert!(segs[0].start < segs[0].stop);
    }

    #[test]
    fn push_pull_split_depends_on_gap_and_window() {
        let default = GestureConfig::default();
        // the half-second window bridges a 100 ms pause
        let merged = segments_for(&[Symbol::Pos, Symbol::Neg], 0.1, &default);
        assert_eq!(merged.len(), 1, "{merged:?}");
        assert_eq!(merged[0].symbol, Symbol::Both);
        // a pause longer than the window separates the strokes
        let split = segments_for(&[Symbol::Pos, Symbol::Neg], 0.8, &default);
        assert_eq!(split.iter().map(|s| s.symbol).collect::<Vec<_>>(), vec![Symbol::Pos, Symbol::Neg]);
        // a window shorter than the pause also resolves the 100 ms gap
        let fine = GestureConfig {
            window_s: 0.064,
            ..default
        };
        let split = segments_for(&[Symbol::Pos, Symbol::Neg], 0.1, &fine);
        assert_eq!(split.iter().map(|s| s.symbol).collect::<Vec<_>>(), vec![Symbol::Pos, Symbol::Neg]);
    }

    #[test]
    fn raising_the_floor_only_shrinks_segments() {
        let sc = gesture_scenario(&[Symbol::Pos, Symbol::Both, Symbol::Neg], 0.4, 0.7, 1.0, 8).unwrap();
        let cfg = GestureConfig::default();
        let p = doppler_profile(&series_of(&sc), 1000.0, &cfg).unwrap();
        let floor = estimate_noise_floor(&p, 0.0, 0.4).unwrap();
        let mut prev = segment(&p, floor, &cfg);
        assert_eq!(prev.len(), 3);
        for k in 1..40 {
            let next = segment(&p, floor * 1.5f64.powi(k), &cfg);
            for s in &next {
                assert!(prev.iter().any(|q| q.start <= s.start && s.stop <= q.stop), "{s:?} not inside {prev:?}");
            }
            prev = next;
        }
        assert!(prev.is_empty());
    }

    #[test]
    fn symbols_ignore_uniform_scaling() {
        let sc = gesture_scenario(&[Symbol::Pos, Symbol::Both, Symbol::Neg], 0.4, 0.7, 1.0, 9).unwrap();
        let cfg = GestureConfig::default();
        let p = doppler_profile(&series_of(&sc), 1000.0, &cfg).unwrap();
        let floor = estimate_noise_floor(&p, 0.0, 0.4).unwrap();
        let a = segment(&p, floor, &cfg);
        let b = segment(&p.scaled(7.0), floor * 49.0, &cfg);
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.symbol).collect::<Vec<_>>(), vec![Symbol::Pos, Symbol::Both, Symbol::Neg]);
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
        assert_eq!(edit_distance::<u8>(b"", b"abc"), 3);
        assert_eq!(edit_distance(b"abc", b"abc"), 0);
    }

    fn segs(symbols: &[Symbol]) -> Vec<GestureSegment> {
        symbols
            .iter()
            .enumerate()
            .map(|(i, &symbol)| GestureSegment {
                start: i as f64,
                stop: i as f64 + 0.5,
                symbol,
            })
            .collect()
    }

    #[test]
    fn classification_cases() {
        use Symbol::*;
        let templates = vec![tmpl("push-pull", &[Pos, Neg]), tmpl("pull-push", &[Neg, Pos])];
        assert_eq!(classify_gesture(&segs(&[Pos, Neg]), &templates).unwrap(), ("push-pull".into(), 1.0));
        assert!(matches!(classify_gesture(&[], &templates), Err(Error::NoSegments)));
        assert!(matches!(classify_gesture(&segs(&[Pos]), &[]), Err(Error::NoTemplates)));

        let near = tmpl("near", &[Pos, Neg, Both, Pos]);
        let far = tmpl("far", &[Neg, Neg, Both, Neg]);
        assert_eq!(edit_distance(&near.symbols, &far.symbols), 2);
        let observed = segs(&[Pos, Neg, Neg, Pos]);
        for order in [vec![near.clone(), far.clone()], vec![far.clone(), near.clone()]] {
            let (name, score) = classify_gesture(&observed, &order).unwrap();
            assert_eq!(name, "near");
            assert!((score - 0.75).abs() < 1e-12);
        }
        // equal distance: template order decides
        let (name, _) = classify_gesture(&segs(&[Both]), &templates).unwrap();
        assert_eq!(name, "push-pull");
    }

    #[test]
    fn self_template_scores_one() {
        use Symbol::*;
        for seq in [vec![Pos], vec![Both, Neg, Pos], vec![Neg, Neg, Neg, Both]] {
            let t = vec![tmpl("a", &[Pos, Pos]), tmpl("self", &seq)];
            let (name, score) = classify_gesture(&segs(&seq), &t).unwrap();
            assert_eq!((name.as_str(), score), ("self", 1.0));
        }
    }

    #[test]
    fn templates_json() {
        let t = parse_templates(r#"[{"name":"push","symbols":["Pos"]},{"name":"wave","symbols":["Pos","Neg","Both"]}]"#).unwrap();
        assert_eq!(t[1].symbols, vec![Symbol::Pos, Symbol::Neg, Symbol::Both]);
        assert!(parse_templates(r#"[{"name":"x","symbols":[]}]"#).is_err());
        assert!(parse_templates(r#"[{"name":"x","symbols":["Up"]}]"#).is_err());
    }

    #[test]
    fn end_to_end_recognition() {
        use Symbol::*;
        let templates = vec![tmpl("push", &[Pos]), tmpl("pull", &[Neg]), tmpl("push-pull", &[Pos, Neg]), tmpl("swipe", &[Both])];
        for (syms, expect) in [(vec![Pos], "push"), (vec![Pos, Neg], "push-pull"), (vec![Both], "swipe")] {
            let sc = gesture_scenario(&syms, 0.4, 0.8, 1.0, 2).unwrap();
            let (_, name, score) = recognize(&series_of(&sc), 1000.0, 0.4, &templates, &GestureConfig::default()).unwrap();
            assert_eq!((name.as_str(), score), (expect, 1.0));
        }
    }
}
