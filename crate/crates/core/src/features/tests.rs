use super::*;
use crate::model::{ActivityLabel, CsiFrame, Dims};
use crate::preprocess::znormalize;
use crate::simulate::{scenario_preset, synthesize, ActivityScenario, ScatterPath, SimConfig, SpeedProfile};
use ndarray::Array3;
use std::f64::consts::TAU;

const FS: f64 = 1000.0;

fn tone_matrix(freqs: &[(f64, f64)], n: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, cols), |(k, c)| {
        let t = k as f64 / FS;
        freqs.iter().map(|&(f, a)| a * (TAU * f * t + c as f64).sin()).sum()
    })
}

fn denoised(label: ActivityLabel, seed: u64) -> Array2<f64> {
    let s = synthesize::<f64>(&scenario_preset(label, seed), &SimConfig::default()).unwrap();
    denoise_amplitudes(s.amplitude_matrix().unwrap().view()).unwrap()
}

#[test]
fn two_seconds_give_38_frames() {
    let seq = stft_feature_frames(Array2::<f64>::zeros((2000, 5)).view(), FS, &StftFeatureConfig::default()).unwrap();
    assert_eq!(seq.frames(), 38);
    assert_eq!(seq.width(), 25);
    assert!((seq.frame_period - 0.05).abs() < 1e-12);
}

#[test]
fn static_amplitude_stays_in_lowest_bins() {
    let m = Array2::from_elem((1000, 3), 2.5f64);
    let seq = stft_feature_frames(m.view(), FS, &StftFeatureConfig::default()).unwrap();
    for row in seq.vectors.outer_iter() {
        let dc = row[0];
        assert!(dc > 0.0);
        assert!(row.iter().all(|&m| m <= dc));
        // zero-padded Hann: the main lobe spans bins 0..4, side lobes are tiny
        let total: f64 = row.iter().map(|m| m * m).sum();
        let lobe: f64 = row.iter().take(4).map(|m| m * m).sum();
        assert!(lobe >= 0.999 * total);
    }
}

#[test]
fn run_has_more_high_bin_energy_than_walk() {
    let cfg = StftFeatureConfig::default();
    let high = |m: &Array2<f64>| {
        let seq = stft_feature_frames(m.view(), FS, &cfg).unwrap();
        let e: f64 = seq.vectors.slice(ndarray::s![.., 13..25]).iter().map(|v| v * v).sum();
        e / seq.frames() as f64
    };
    for seed in [1, 2, 3] {
        let walk = high(&denoised(ActivityLabel::Walk, seed));
        let run = high(&denoised(ActivityLabel::Run, seed));
        assert!(run > walk, "seed {seed}: run {run} walk {walk}");
    }
}

#[test]
fn stft_frames_survive_rescaling_after_znormalize() {
    let m = denoised(ActivityLabel::SitDown, 4);
    let cfg = StftFeatureConfig::default();
    let a = stft_feature_frames(znormalize(m.view()).unwrap().view(), FS, &cfg).unwrap();
    let b = stft_feature_frames(znormalize((&m * 37.5).view()).unwrap().view(), FS, &cfg).unwrap();
    for (x, y) in a.vectors.iter().zip(b.vectors.iter()) {
        assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    }
}

#[test]
fn stacking() {
    let seq = stft_feature_frames(tone_matrix(&[(30.0, 1.0)], 2500, 3).view(), FS, &StftFeatureConfig::default()).unwrap();
    assert!(seq.frames() >= 40);
    let one = stack_window(&seq, 0.05, 7).unwrap();
    assert_eq!(one, seq.vectors.row(7).to_vec());
    let flat = stack_window(&seq, 2.0, 0).unwrap();
    assert_eq!(flat.len(), 1000);
    let back = unstack(&flat, 25).unwrap();
    assert_eq!(back, seq.vectors.slice(ndarray::s![0..40, ..]));
    assert!(matches!(stack_window(&seq, 5.0, 0), Err(Error::SpanTooLong { .. })));
    assert!(matches!(stack_window(&seq, 0.07, 0), Err(Error::SpanNotMultiple { .. })));
    let all = stacked_windows(&seq, 2.0, 2).unwrap();
    assert_eq!(all.len(), (seq.frames() - 40) / 2 + 1);
}

#[test]
fn dwt_zero_input_gives_zero_features() {
    let seq = dwt_features(Array2::<f64>::zeros((1000, 5)).view(), FS, 5e9, &DwtConfig::default()).unwrap();
    assert_eq!(seq.frames(), 5);
    assert_eq!(seq.width(), 27);
    assert!(seq.vectors.iter().all(|&v| v == 0.0));
}

#[test]
fn dwt_tone_lands_in_its_dyadic_level() {
    // 90 Hz is inside (62.5, 125] = level 3; 40 Hz inside (31.25, 62.5] = level 4
    for (freq, level) in [(90.0, 3usize), (40.0, 4), (180.0, 2)] {
        let (lo, hi) = dwt::level_band(FS, level);
        assert!(lo < freq && freq <= hi);
        let seq = dwt_features(tone_matrix(&[(freq, 1.0)], 1000, 5).view(), FS, 5e9, &DwtConfig::default()).unwrap();
        for row in seq.vectors.outer_iter() {
            let energies = row.slice(ndarray::s![0..12]);
            let best = (0..12).max_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap()).unwrap();
            assert_eq!(best + 1, level, "{freq} Hz");
            assert!(energies[level - 1] > 0.5 * row[26]);
        }
        // steady tone: deltas vanish after the first interval
        assert!(seq.vectors.slice(ndarray::s![1.., 12..24]).iter().all(|d| d.abs() < 0.05 * seq.vectors[[0, 26]]));
    }
}

#[test]
fn walk_torso_speed_matches_preset() {
    let m = denoised(ActivityLabel::Walk, 11);
    let seq = dwt_features(m.view(), FS, 5e9, &DwtConfig::default()).unwrap();
    // intervals fully inside the walking plateau
    let mut torso: Vec<f64> = seq.vectors.slice(ndarray::s![3..seq.frames() - 3, 24]).to_vec();
    torso.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = torso[torso.len() / 2];
    assert!((0.9..=1.5).contains(&med), "median torso speed {med}");
    let leg = seq.vectors[[seq.frames() / 2, 25]];
    assert!(leg >= seq.vectors[[seq.frames() / 2, 24]]);
}

fn spectrogram_of(x: &[f64]) -> Spectrogram<f64> {
    stft(x, FS, 128, 16, 256).unwrap()
}

#[test]
fn single_tone_speed() {
    let x: Vec<f64> = (0..1000).map(|k| (TAU * 16.7 * k as f64 / FS).sin()).collect();
    let spec = spectrogram_of(&x);
    let est = torso_leg_speeds(&spec, 5e9);
    let per_bin = crate::simulate::speed_of_doppler(spec.bin_width, 5e9);
    assert!(!est.no_energy);
    assert!((est.torso - 0.5).abs() <= per_bin, "{}", est.torso);
    assert!((est.leg - 0.5).abs() <= 2.0 * per_bin, "{}", est.leg);
}

#[test]
fn silent_input_flags_no_energy() {
    let est = torso_leg_speeds(&spectrogram_of(&[0.0; 500]), 5e9);
    assert!(est.no_energy);
    assert_eq!((est.torso, est.leg), (0.0, 0.0));
}

#[test]
fn two_tone_percentiles() {
    // energy ratio 80:20 means amplitude ratio 2:1
    let x: Vec<f64> = (0..1000)
        .map(|k| {
            let t = k as f64 / FS;
            2.0 * (TAU * 20.0 * t).sin() + (TAU * 80.0 * t).sin()
        })
        .collect();
    let spec = spectrogram_of(&x);
    let est = torso_leg_speeds(&spec, 5e9);
    let bin = |v: f64| crate::simulate::doppler_of_speed(v, 5e9) / spec.bin_width;
    assert!((bin(est.torso) - 20.0 / spec.bin_width).abs() <= 1.0, "{}", bin(est.torso));
    assert!((bin(est.leg) - 80.0 / spec.bin_width).abs() <= 1.0, "{}", bin(est.leg));
}

fn stream_from(n: usize, f: impl Fn(usize, usize, usize) -> Complex<f64>) -> CsiStream<f64> {
    let dims = Dims::new(3, 1, 4);
    let frames = (0..n)
        .map(|t| {
            let g = Array3::from_shape_fn((3, 1, 4), |(r, x, s)| f(t, r, s + x));
            CsiFrame::new(t as f64 / FS, g).unwrap()
        })
        .collect();
    let s = CsiStream::new(frames, FS, 5e9).unwrap();
    assert_eq!(s.dims(), Some(dims));
    s
}

#[test]
fn identical_antennas_have_zero_difference() {
    let s = stream_from(20, |t, _, s| Complex::from_polar(1.0 + s as f64, 0.3 * t as f64 - s as f64));
    let pd = phase_difference(&s).unwrap();
    assert_eq!(pd.dim(), (20, 8));
    assert!(pd.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn common_phase_ramp_cancels() {
    let base = |t: usize, r: usize, s: usize| Complex::from_polar(1.0, 0.7 * r as f64 + 0.1 * s as f64 + 0.01 * t as f64);
    let a = phase_difference(&stream_from(50, base)).unwrap();
    let ramp = |t: usize, r: usize, s: usize| base(t, r, s) * Complex::from_polar(1.0, TAU * 80e3 * t as f64 / FS + 0.05 * s as f64 * t as f64);
    let b = phase_difference(&stream_from(50, ramp)).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn simulated_antenna_offset_is_recovered() {
    let delta = 0.8;
    let mut sc = ActivityScenario::new(ActivityLabel::NoActivity, 0.2, vec![ScatterPath::fixed(20e-9, 1.0).with_antenna_phase(delta)]);
    sc.noise_std = 0.0;
    sc.power_jitter = 0.0;
    sc.burst_prob = 0.0;
    sc.cfo_hz = 3e4;
    sc.sfo_slope = 0.01;
    let s = synthesize::<f64>(&sc, &SimConfig::default()).unwrap();
    let pd = phase_difference(&s).unwrap();
    assert_eq!(pd.ncols(), 60);
    assert!(pd.iter().all(|v| (v - delta).abs() < 1e-9));
    let single = Dims::new(1, 1, 30);
    let one = synthesize::<f64>(&sc, &SimConfig { dims: single, ..SimConfig::default() }).unwrap();
    assert!(matches!(phase_difference(&one), Err(Error::SingleAntenna)));
}

#[test]
fn phase_diff_features_are_fifty_wide() {
    let mut sc = scenario_preset(ActivityLabel::Walk, 3);
    sc.duration = 1.0;
    sc.paths.iter_mut().for_each(|p| {
        if !p.motion.is_stationary() {
            p.motion = SpeedProfile::constant(1.0).unwrap();
        }
    });
    let s = synthesize::<f64>(&sc, &SimConfig::default()).unwrap();
    let seq = phase_diff_feature_frames(&s, &StftFeatureConfig::default()).unwrap();
    assert_eq!(seq.width(), 50);
    assert_eq!(seq.kind, FeatureKind::PhaseDiffAug);
    assert!(seq.vectors.iter().all(|v| v.is_finite()));
}

#[test]
fn features_are_deterministic() {
    let m = denoised(ActivityLabel::Fall, 9);
    let a = dwt_features(m.view(), FS, 5e9, &DwtConfig::default()).unwrap();
    let b = dwt_features(m.view(), FS, 5e9, &DwtConfig::default()).unwrap();
    assert_eq!(a, b);
}
