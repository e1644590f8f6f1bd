//! Continued training on a class-stratified slice of the held-out subjects.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{fuse_rows, labels_of, metrics_from_proba, select, Aggregate, FineTuneRow, Metrics, Scheme, SplitPlan, TrialReport};
use crate::deepnet::{continue_training, TrainConfig, TrainedModel};
use crate::domain::{SensorLocation, StyleLabel, SubjectId, N_SENSORS, N_STYLES};
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};
use crate::windowing::{Segment, SegmentTable};

pub const LADDER: [f64; 5] = [0.0, 0.02, 0.05, 0.10, 0.20];
pub const DEFAULT_TUNE_EPOCHS: usize = 50;

/// Training settings for fine-tuning: `epochs` at the training learning rate,
/// no early stopping.
pub fn tune_config(train: &TrainConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        patience: None,
        ..train.clone()
    }
}

/// Positions into the input split into tuning and evaluation parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningSplit {
    pub tune: Vec<usize>,
    pub eval: Vec<usize>,
    pub warnings: Vec<String>,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("tuning fraction must lie in [0, 1), got {fraction}")));
    }
    Ok(())
}

/// Per subject, `round(fraction · n)` items (at most `n - 1`) split across
/// classes by largest remainder of their proportional quotas. Ties go to the
/// lowest class index for the first subject; later subjects continue after
/// the last class the previous subject received an extra pick for.
///
/// Within each (subject, class) group the order of picks depends only on
/// `seed`, so smaller fractions select subsets of larger ones.
pub fn stratified_tuning_split(items: &[(&SubjectId, usize)], fraction: f64, seed: u64) -> Result<TuningSplit> {
    check_fraction(fraction)?;
    let mut groups: BTreeMap<&SubjectId, [Vec<usize>; N_STYLES]> = BTreeMap::new();
    for (i, &(subject, label)) in items.iter().enumerate() {
        if label >= N_STYLES {
            return Err(Error::Contract(format!("label {label} outside 0..{N_STYLES}")));
        }
        groups.entry(subject).or_default()[label].push(i);
    }

    let mut tune = Vec::new();
    let mut warnings = Vec::new();
    // remainder ties continue from where the previous subject stopped, so a
    // pooled tuning set spreads over as many classes as possible
    let mut cursor = 0;
    for (s, (subject, classes)) in groups.into_iter().enumerate() {
        let n: usize = classes.iter().map(Vec::len).sum();
        let k = ((fraction * n as f64).round() as usize).min(n - 1);
        let mut quota: [usize; N_STYLES] = std::array::from_fn(|c| classes[c].len() * k / n);
        let mut order: Vec<usize> = (0..N_STYLES).collect();
        order.sort_by_key(|&c| (std::cmp::Reverse(classes[c].len() * k % n), (c + N_STYLES - cursor) % N_STYLES));
        let short = k - quota.iter().sum::<usize>();
        for &c in order.iter().take(short) {
            quota[c] += 1;
            cursor = (c + 1) % N_STYLES;
        }
        for (c, mut members) in classes.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            if quota[c] == 0 && fraction > 0.0 {
                let style = StyleLabel::from_index(c).expect("style index");
                warnings.push(format!("subject {subject}: no tuning segment for {style} at fraction {fraction}"));
            }
            members.shuffle(&mut stream_rng(seed, stream_id(11, &[s as u64, c as u64])));
            tune.extend_from_slice(&members[..quota[c]]);
        }
    }
    tune.sort_unstable();
    let eval = (0..items.len()).filter(|i| tune.binary_search(i).is_err()).collect();
    Ok(TuningSplit { tune, eval, warnings })
}

#[derive(Debug, Clone)]
pub struct FineTuned {
    pub model: TrainedModel,
    /// Scores on the untouched remainder.
    pub metrics: Metrics,
    pub split: TuningSplit,
}

/// Fine-tunes every parameter of `trained` on a stratified `fraction` of the
/// given held-out segments and scores it on the rest. Fraction 0 returns the
/// model unchanged, scored on all segments.
pub fn fine_tune(trained: &TrainedModel, segments: &[&Segment], fraction: f64, cfg: &TrainConfig) -> Result<FineTuned> {
    let items: Vec<(&SubjectId, usize)> = segments.iter().map(|s| (s.subject(), s.style().index())).collect();
    let split = stratified_tuning_split(&items, fraction, cfg.seed)?;
    let pick = |idx: &[usize]| -> Vec<&Segment> { idx.iter().map(|&i| segments[i]).collect() };
    let labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| items[i].1).collect() };
    let model = if split.tune.is_empty() {
        trained.clone()
    } else {
        continue_training(trained, &pick(&split.tune), &labels(&split.tune), cfg)?
    };
    if split.eval.is_empty() {
        return Err(Error::Contract("no segments left for evaluation".into()));
    }
    let probs = model.predict_proba_batch(&pick(&split.eval))?;
    let metrics = metrics_from_proba(&probs, &labels(&split.eval))?;
    Ok(FineTuned { model, metrics, split })
}

/// The fine-tuning ladder over a leave-subjects-out plan. `models[t]` holds
/// trial `t`'s five sensor models in sensor order. Per trial the tuning
/// segments of all test subjects train each sensor model; fusion and
/// per-sensor scores use the remainder.
pub fn fine_tuning_ladder(
    table: &SegmentTable,
    plan: &SplitPlan,
    models: &[Vec<&TrainedModel>],
    fractions: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<FineTuneRow>> {
    if plan.scheme != Scheme::LeaveSubjectsOut {
        return Err(Error::Parameter("fine-tuning needs a leave-subjects-out plan".into()));
    }
    if models.len() != plan.trials.len() || models.iter().any(|m| m.len() != N_SENSORS) {
        return Err(Error::Contract(format!(
            "expected {} trial(s) of {N_SENSORS} sensor models",
            plan.trials.len()
        )));
    }
    if fractions.is_empty() {
        return Err(Error::Parameter("no tuning fractions given".into()));
    }
    for &f in fractions {
        check_fraction(f)?;
    }
    cfg.validate()?;

    let splits: Vec<Vec<TuningSplit>> = plan
        .trials
        .iter()
        .enumerate()
        .map(|(t, trial)| {
            let items: Vec<(&SubjectId, usize)> =
                trial.test.iter().map(|&r| (&table.keys[r].subject, table.label(r))).collect();
            let seed = stream_id(11, &[plan.seed, t as u64]);
            fractions
                .iter()
                .map(|&f| stratified_tuning_split(&items, f, seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize, SensorLocation)> = (0..plan.trials.len())
        .flat_map(|t| (0..fractions.len()).flat_map(move |f| SensorLocation::ALL.map(|s| (t, f, s))))
        .collect();
    let probs: Vec<Result<ndarray::Array2<f64>>> = cells
        .par_iter()
        .map(|&(t, f, s)| {
            let trial = &plan.trials[t];
            let split = &splits[t][f];
            let rows = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| trial.test[i]).collect() };
            let segs = table.sensor(s);
            let base = models[t][s.index()];
            let tuned;
            let model = if split.tune.is_empty() {
                base
            } else {
                log::info!("fine-tune trial {t} fraction {} sensor {s}", fractions[f]);
                let tune_rows = rows(&split.tune);
                let seed = stream_id(12, &[plan.seed, t as u64, f as u64, s.index() as u64]);
                let cfg = TrainConfig { seed, ..cfg.clone() };
                tuned = continue_training(base, &select(segs, &tune_rows), &labels_of(table, &tune_rows), &cfg)?;
                &tuned
            };
            model.predict_proba_batch(&select(segs, &rows(&split.eval)))
        })
        .collect();

    let mut probs = probs.into_iter();
    let mut per_fraction: Vec<(Vec<TrialReport>, Vec<String>)> = vec![(Vec::new(), Vec::new()); fractions.len()];
    for (t, trial) in plan.trials.iter().enumerate() {
        for (f, (reports, warnings)) in per_fraction.iter_mut().enumerate() {
            let wrap = |e: Error| Error::Trial {
                trial: t,
                source: Box::new(e),
            };
            let p: Vec<_> = probs.by_ref().take(N_SENSORS).collect::<Result<_>>().map_err(wrap)?;
            let split = &splits[t][f];
            if split.eval.is_empty() {
                return Err(wrap(Error::Contract("no segments left for evaluation".into())));
            }
            let eval_rows: Vec<usize> = split.eval.iter().map(|&i| trial.test[i]).collect();
            let truth = labels_of(table, &eval_rows);
            let sensors: Vec<Metrics> = p.iter().map(|x| metrics_from_proba(x, &truth)).collect::<Result<_>>().map_err(wrap)?;
            let fusion = metrics_from_proba(&fuse_rows(&p).map_err(wrap)?, &truth).map_err(wrap)?;
            let sensors: [Metrics; N_SENSORS] = sensors.try_into().expect("five sensors");
            reports.push(TrialReport::new(t, trial.test_subjects.clone(), &sensors, &fusion));
            warnings.extend(split.warnings.iter().map(|w| format!("trial {t}: {w}")));
        }
    }
    for (_, w) in &per_fraction {
        for line in w {
            log::warn!("{line}");
        }
    }
    fractions
        .iter()
        .zip(per_fraction)
        .map(|(&fraction, (trials, warnings))| {
            Ok(FineTuneRow {
                fraction,
                aggregate: Aggregate::of(&trials)?,
                trials,
                warnings,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<SubjectId> {
        (0..n).map(|i| SubjectId::new(format!("S{i:02}"))).collect()
    }

    #[test]
    fn quotas_follow_largest_remainder() {
        let subjects = ids(1);
        // 10 items of class 0, 6 of class 1, 4 of class 2; 25 % → 5 picks
        // quotas 2.5, 1.5, 1.0 → floors 2, 1, 1 and one extra for class 0
        let mut items = Vec::new();
        for (c, n) in [(0, 10), (1, 6), (2, 4)] {
            items.extend(std::iter::repeat_n((&subjects[0], c), n));
        }
        let split = stratified_tuning_split(&items, 0.25, 1).unwrap();
        assert_eq!(split.tune.len(), 5);
        let count = |c| split.tune.iter().filter(|&&i| items[i].1 == c).count();
        assert_eq!((count(0), count(1), count(2)), (3, 1, 1));
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn split_is_a_partition_and_nests() {
        let subjects = ids(2);
        let items: Vec<(&SubjectId, usize)> = (0..300).map(|i| (&subjects[i % 2], (i / 2) % N_STYLES)).collect();
        let mut previous: Vec<usize> = Vec::new();
        for f in LADDER {
            let split = stratified_tuning_split(&items, f, 5).unwrap();
            let mut all: Vec<usize> = split.tune.iter().chain(&split.eval).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..items.len()).collect::<Vec<_>>());
            assert!(previous.iter().all(|i| split.tune.contains(i)));
            // per subject round(f · 150)
            let expected = 2 * (f * 150.0).round() as usize;
            assert_eq!(split.tune.len(), expected);
            previous = split.tune;
        }
    }

    #[test]
    fn remainder_ties_rotate_across_subjects() {
        let subjects = ids(3);
        // 24 balanced items per subject; 12.5 % → 3 picks, all remainders equal
        let items: Vec<(&SubjectId, usize)> = (0..72).map(|i| (&subjects[i / 24], i % N_STYLES)).collect();
        let split = stratified_tuning_split(&items, 0.125, 3).unwrap();
        let classes = |s: usize| -> Vec<usize> {
            let mut c: Vec<usize> = split.tune.iter().filter(|&&i| i / 24 == s).map(|&i| items[i].1).collect();
            c.sort_unstable();
            c
        };
        assert_eq!(classes(0), vec![0, 1, 2]);
        assert_eq!(classes(1), vec![3, 4, 5]);
        assert_eq!(classes(2), vec![0, 6, 7]);
    }

    #[test]
    fn zero_quota_classes_warn() {
        let subjects = ids(1);
        let items: Vec<(&SubjectId, usize)> = (0..80).map(|i| (&subjects[0], i % N_STYLES)).collect();
        let split = stratified_tuning_split(&items, 0.05, 0).unwrap();
        assert_eq!(split.tune.len(), 4);
        assert_eq!(split.warnings.len(), 4);
        assert!(stratified_tuning_split(&items, 0.0, 0).unwrap().warnings.is_empty());
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let subjects = ids(1);
        let items = vec![(&subjects[0], 0)];
        for f in [-0.1, 1.0, f64::NAN] {
            assert!(matches!(stratified_tuning_split(&items, f, 0), Err(Error::Parameter(_))));
        }
    }
}
