use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrialMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSpec {
    /// Stratified k-fold over trials.
    KFold(usize),
    /// One fold per subject.
    LeaveOneSubjectOut,
    /// The listed subjects are the test set.
    Fixed(Vec<u32>),
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown split {s:?} (kfold:<k>, loso, fixed:<subject,...>)"));
        if s == "loso" {
            return Ok(SplitSpec::LeaveOneSubjectOut);
        }
        if let Some(k) = s.strip_prefix("kfold:") {
            return k.parse().map(SplitSpec::KFold).map_err(|_| bad());
        }
        if let Some(list) = s.strip_prefix("fixed:") {
            let ids: std::result::Result<Vec<u32>, _> = list.split(',').map(|x| x.trim().parse()).collect();
            return ids.map(SplitSpec::Fixed).map_err(|_| bad());
        }
        Err(bad())
    }
}

impl std::fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitSpec::KFold(k) => write!(f, "kfold:{k}"),
            SplitSpec::LeaveOneSubjectOut => write!(f, "loso"),
            SplitSpec::Fixed(ids) => {
                let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                write!(f, "fixed:{}", ids.join(","))
            }
        }
    }
}

/// Trial indices of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fails with `Leakage` if a test trial (by index or by subject, trial and
/// label) also appears in training.
pub fn check_disjoint(fold: &Fold, metas: &[TrialMeta]) -> Result<()> {
    let train_idx: HashSet<usize> = fold.train.iter().copied().collect();
    let train_keys: HashSet<(Option<u32>, Option<u32>, _)> = fold
        .train
        .iter()
        .map(|&i| (metas[i].subject, metas[i].trial, metas[i].label))
        .filter(|k| k.1.is_some())
        .collect();
    for &i in &fold.test {
        let m = &metas[i];
        if train_idx.contains(&i) || (m.trial.is_some() && train_keys.contains(&(m.subject, m.trial, m.label))) {
            return Err(Error::Leakage(format!(
                "fold {}: test trial {i} ({} subject {:?} trial {:?}) is also in training",
                fold.name, m.label, m.subject, m.trial
            )));
        }
    }
    Ok(())
}

fn subject_of(m: &TrialMeta, i: usize) -> Result<u32> {
    m.subject.ok_or_else(|| Error::SplitImpossible(format!("trial {i} has no subject id")))
}

/// Deterministic folds for `spec`; every fold passes `check_disjoint`.
pub fn folds(spec: &SplitSpec, metas: &[TrialMeta], seed: u64) -> Result<Vec<Fold>> {
    let labels: BTreeSet<_> = metas.iter().map(|m| m.label).collect();
    if labels.len() < 2 {
        return Err(Error::SplitImpossible(format!("need at least two classes, found {}", labels.len())));
    }
    let out = match spec {
        SplitSpec::KFold(k) => {
            let k = *k;
            if k < 2 || k > metas.len() {
                return Err(Error::SplitImpossible(format!("{k} folds over {} trials", metas.len())));
            }
            let mut by_label: BTreeMap<_, Vec<usize>> = BTreeMap::new();
            for (i, m) in metas.iter().enumerate() {
                by_label.entry(m.label).or_default().push(i);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut assign = vec![0usize; metas.len()];
            let mut next = 0usize;
            for idx in by_label.values_mut() {
                idx.shuffle(&mut rng);
                for &i in idx.iter() {
                    assign[i] = next % k;
                    next += 1;
                }
            }
            (0..k)
                .map(|f| Fold {
                    name: format!("fold{f}"),
                    train: (0..metas.len()).filter(|&i| assign[i] != f).collect(),
                    test: (0..metas.len()).filter(|&i| assign[i] == f).collect(),
                })
                .collect()
        }
        SplitSpec::LeaveOneSubjectOut => {
            let subjects: Vec<u32> = metas.iter().enumerate().map(|(i, m)| subject_of(m, i)).collect::<Result<_>>()?;
            let distinct: BTreeSet<u32> = subjects.iter().copied().collect();
            if distinct.len() < 2 {
                return Err(Error::SplitImpossible("leave-one-subject-out needs two subjects".into()));
            }
            distinct
                .into_iter()
                .map(|s| Fold {
                    name: format!("subject{s}"),
                    train: (0..metas.len()).filter(|&i| subjects[i] != s).collect(),
                    test: (0..metas.len()).filter(|&i| subjects[i] == s).collect(),
                })
                .collect()
        }
        SplitSpec::Fixed(test) => {
            let subjects: Vec<u32> = metas.iter().enumerate().map(|(i, m)| subject_of(m, i)).collect::<Result<_>>()?;
            let is_test = |i: usize| test.contains(&subjects[i]);
            let fold = Fold {
                name: "fixed".into(),
                train: (0..metas.len()).filter(|&i| !is_test(i)).collect(),
                test: (0..metas.len()).filter(|&i| is_test(i)).collect(),
            };
            if fold.train.is_empty() || fold.test.is_empty() {
                return Err(Error::SplitImpossible(format!("fixed split {spec} leaves an empty side")));
            }
            vec![fold]
        }
    };
    for f in &out {
        if f.train.is_empty() || f.test.is_empty() {
            return Err(Error::SplitImpossible(format!("fold {} is empty", f.name)));
        }
        check_disjoint(f, metas)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActivityLabel;

    fn metas(subjects: u32, trials: u32) -> Vec<TrialMeta> {
        let mut v = Vec::new();
        for label in [ActivityLabel::Walk, ActivityLabel::Run, ActivityLabel::Fall] {
            for s in 0..subjects {
                for t in 0..trials {
                    v.push(TrialMeta {
                        label,
                        subject: Some(s),
                        trial: Some(t),
                    });
                }
            }
        }
        v
    }

    #[test]
    fn parse_round_trip() {
        for s in ["kfold:5", "loso", "fixed:1,3"] {
            assert_eq!(s.parse::<SplitSpec>().unwrap().to_string(), s);
        }
        for s in ["kfold:x", "loo", "fixed:", ""] {
            assert!(s.parse::<SplitSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn kfold_partitions_and_stratifies() {
        let m = metas(2, 10);
        let fs = folds(&SplitSpec::KFold(5), &m, 3).unwrap();
        let mut seen = vec![0; m.len()];
        for f in &fs {
            assert_eq!(f.train.len() + f.test.len(), m.len());
            for &i in &f.test {
                seen[i] += 1;
            }
            for label in [ActivityLabel::Walk, ActivityLabel::Run, ActivityLabel::Fall] {
                assert_eq!(f.test.iter().filter(|&&i| m[i].label == label).count(), 4);
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(fs, folds(&SplitSpec::KFold(5), &m, 3).unwrap());
        assert_ne!(fs, folds(&SplitSpec::KFold(5), &m, 4).unwrap());
    }

    #[test]
    fn loso_holds_out_whole_subjects() {
        let m = metas(3, 4);
        let fs = folds(&SplitSpec::LeaveOneSubjectOut, &m, 0).unwrap();
        assert_eq!(fs.len(), 3);
        for (s, f) in fs.iter().enumerate() {
            assert!(f.test.iter().all(|&i| m[i].subject == Some(s as u32)));
            assert!(f.train.iter().all(|&i| m[i].subject != Some(s as u32)));
        }
    }

    #[test]
    fn impossible_splits() {
        let m = metas(1, 2);
        assert!(matches!(folds(&SplitSpec::LeaveOneSubjectOut, &m, 0), Err(Error::SplitImpossible(_))));
        assert!(matches!(folds(&SplitSpec::KFold(7), &m, 0), Err(Error::SplitImpossible(_))));
        assert!(matches!(folds(&SplitSpec::KFold(1), &m, 0), Err(Error::SplitImpossible(_))));
        assert!(matches!(folds(&SplitSpec::Fixed(vec![0]), &m, 0), Err(Error::SplitImpossible(_))));
        let one_class: Vec<TrialMeta> = m.iter().copied().filter(|x| x.label == ActivityLabel::Walk).collect();
        assert!(matches!(folds(&SplitSpec::KFold(2), &one_class, 0), Err(Error::SplitImpossible(_))));
    }

    #[test]
    fn duplicated_trial_is_reported_as_leakage() {
        let mut m = metas(2, 2);
        m.push(m[0]);
        let fold = Fold {
            name: "x".into(),
            train: vec![0, 1],
            test: vec![m.len() - 1],
        };
        assert!(matches!(check_disjoint(&fold, &m), Err(Error::Leakage(_))));
    }
}
