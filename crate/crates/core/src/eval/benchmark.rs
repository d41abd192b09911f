use std::fmt::Write as _;

use rayon::prelude::*;

use super::{evaluate, featurize, EvalReport, FrameKind, ModelKind, PipelineConfig, SplitSpec, TrialFrames};
use crate::error::{Error, Result};
use crate::ingest::regularize;
use crate::model::CsiStream;
use crate::num::Real;
use crate::simulate::{scenario_for, synthesize, SimConfig, SubjectProfile};

pub fn synthetic_trial_count(cfg: &PipelineConfig) -> usize {
    let b = &cfg.benchmark;
    b.activities.len() * b.subjects as usize * b.trials as usize
}

/// Trial `index` of the synthetic benchmark, ordered subject, activity, trial.
pub fn synthetic_trial<T: Real>(cfg: &PipelineConfig, index: usize) -> Result<CsiStream<T>> {
    let b = &cfg.benchmark;
    let n = synthetic_trial_count(cfg);
    if index >= n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let trials = b.trials as usize;
    let per_subject = b.activities.len() * trials;
    let subject = (index / per_subject) as u32;
    let label = b.activities[(index % per_subject) / trials];
    let trial = (index % trials) as u32;
    let base = cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D);
    let profile = SubjectProfile::from_seed(base.wrapping_add(u64::from(subject)));
    let trial_seed = base ^ (u64::from(subject) << 32 | u64::from(trial)).wrapping_add(1);
    let scenario = scenario_for(label, &profile, trial_seed, b.duration_s)?;
    Ok(synthesize::<T>(&scenario, &SimConfig::default())?.with_ids(subject, trial))
}

/// Decimates to `rate` by nearest-neighbour resampling (no anti-alias
/// filter, as a slow capture would) and holds each sample back up to the
/// native rate. Identity at the native rate.
pub fn degrade<T: Real>(stream: &CsiStream<T>, rate: f64) -> Result<CsiStream<T>> {
    let native = stream.sample_rate.as_f64();
    if (rate - native).abs() <= 1e-9 * native {
        return Ok(stream.clone());
    }
    if !(rate > 0.0) || rate > native {
        return Err(Error::InvalidConfig(format!("rate {rate} Hz outside (0, {native}] Hz")));
    }
    let low = regularize(stream, T::lit(rate))?;
    let mut up = regularize(&low, stream.sample_rate)?;
    up.held_gaps.clear();
    Ok(up)
}

/// Synthetic benchmark at `rate`, featurized into each of `kinds`.
pub fn synthetic_frames<T: Real>(cfg: &PipelineConfig, rate: f64, kinds: &[FrameKind]) -> Result<Vec<Vec<TrialFrames<T>>>> {
    let per_trial: Vec<Vec<TrialFrames<T>>> = (0..synthetic_trial_count(cfg))
        .into_par_iter()
        .map(|i| featurize(&degrade(&synthetic_trial::<T>(cfg, i)?, rate)?, kinds, cfg))
        .collect::<Result<_>>()?;
    let mut out: Vec<Vec<TrialFrames<T>>> = kinds.iter().map(|_| Vec::with_capacity(per_trial.len())).collect();
    for frames in per_trial {
        for (slot, f) in out.iter_mut().zip(frames) {
            slot.push(f);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub rate: f64,
    pub report: EvalReport,
}

/// Evaluates `kind` on `count` trials from `source`, each degraded to every
/// rate (ascending).
pub fn benchmark_frame_rate<T, F>(count: usize, source: F, kind: ModelKind, split: &SplitSpec, rates: &[f64], cfg: &PipelineConfig) -> Result<Vec<RateResult>>
where
    T: Real,
    F: Fn(usize) -> Result<CsiStream<T>> + Sync,
{
    let mut rates = rates.to_vec();
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("frame rate"));
    }
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let frames = kind.frames(cfg);
    let mut out = Vec::with_capacity(rates.len());
    for rate in rates {
        let trials: Vec<TrialFrames<T>> = (0..count)
            .into_par_iter()
            .map(|i| Ok(featurize(&degrade(&source(i)?, rate)?, &[frames], cfg)?.remove(0)))
            .collect::<Result<_>>()?;
        out.push(RateResult {
            rate,
            report: evaluate(kind, &trials, split, cfg)?,
        });
    }
    Ok(out)
}

/// `rate,window_accuracy,trial_accuracy,macro_accuracy` plus one trial-level
/// accuracy column per class.
pub fn rate_table_csv(results: &[RateResult]) -> String {
    let mut out = String::from("rate,window_accuracy,trial_accuracy,macro_accuracy");
    if let Some(first) = results.first() {
        for l in &first.report.trials.labels {
            let _ = write!(out, ",{l}");
        }
    }
    out.push('\n');
    for r in results {
        let rep = &r.report;
        let _ = write!(
            out,
            "{},{},{},{}",
            r.rate,
            rep.windows.overall_accuracy(),
            rep.trials.overall_accuracy(),
            rep.macro_accuracy()
        );
        for acc in rep.trials.per_class_accuracy() {
            let _ = write!(out, ",{}", acc.map_or(String::new(), |a| a.to_string()));
        }
        out.push('\n');
    }
    out
}
