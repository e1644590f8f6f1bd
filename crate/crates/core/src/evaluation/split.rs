//! Train/validation/test plans over segment-table rows.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::SubjectId;
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};
use crate::windowing::SegmentTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Repeated independent random draws of test segments.
    RandomSegments,
    /// Disjoint subject groups held out in turn.
    LeaveSubjectsOut,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::RandomSegments => "random_segments",
            Scheme::LeaveSubjectsOut => "leave_subjects_out",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_segments" => Ok(Scheme::RandomSegments),
            "leave_subjects_out" => Ok(Scheme::LeaveSubjectsOut),
            other => Err(Error::Parameter(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Row indices into a [`SegmentTable`]; the same row selects all five sensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Held-out subjects under leave-subjects-out, empty otherwise.
    pub test_subjects: Vec<SubjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub seed: u64,
    pub trials: Vec<Trial>,
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Splits shuffled rows into `(val, train)`, validation taking `floor(frac · n)`.
fn carve_validation(mut rows: Vec<usize>, val_frac: f64, seed: u64, trial: usize) -> (Vec<usize>, Vec<usize>) {
    rows.shuffle(&mut stream_rng(seed, stream_id(5, &[trial as u64])));
    let n_val = (val_frac * rows.len() as f64).floor() as usize;
    let train = rows.split_off(n_val);
    (sorted(rows), sorted(train))
}

/// Independent uniform draws: per trial `floor(test_frac · n)` test rows, then
/// `floor(val_frac · remainder)` validation rows; the rest trains.
pub fn plan_random_segment_split(
    table: &SegmentTable,
    trials: usize,
    test_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_fraction("test fraction", test_frac)?;
    check_fraction("validation fraction", val_frac)?;
    if test_frac + val_frac >= 1.0 {
        return Err(Error::Parameter(format!(
            "test fraction {test_frac} and validation fraction {val_frac} leave no training data"
        )));
    }
    if trials == 0 {
        return Err(Error::Parameter("at least one trial is required".into()));
    }
    let n = table.len();
    if n < 10 {
        return Err(Error::Parameter(format!("random split needs at least 10 segments, got {n}")));
    }
    let n_test = (test_frac * n as f64).floor() as usize;
    let trials = (0..trials)
        .map(|t| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut stream_rng(seed, stream_id(4, &[t as u64])));
            let rest = rows.split_off(n_test);
            let (val, train) = carve_validation(rest, val_frac, seed, t);
            Trial {
                train,
                val,
                test: sorted(rows),
                test_subjects: Vec::new(),
            }
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::RandomSegments,
        seed,
        trials,
    })
}

/// Shuffles subjects by seed and partitions them into `ceil(1 / test_subject_frac)`
/// disjoint groups of near-equal size; each group is the test set of one trial.
pub fn plan_leave_subjects_out(
    table: &SegmentTable,
    test_subject_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_fraction("test subject fraction", test_subject_frac)?;
    check_fraction("validation fraction", val_frac)?;
    let mut subjects = table.subjects();
    let n_groups = (1.0 / test_subject_frac).ceil() as usize;
    if subjects.len() < n_groups {
        return Err(Error::Parameter(format!(
            "{} subject(s) cannot form {n_groups} disjoint test groups",
            subjects.len()
        )));
    }
    subjects.shuffle(&mut stream_rng(seed, stream_id(6, &[])));
    let base = subjects.len() / n_groups;
    let extra = subjects.len() % n_groups;
    let mut start = 0;
    let mut trials = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let size = base + usize::from(g < extra);
        let mut group = subjects[start..start + size].to_vec();
        group.sort();
        start += size;
        let test = table.rows_of_subjects(&group);
        let rest: Vec<usize> = (0..table.len()).filter(|&r| !group.contains(&table.keys[r].subject)).collect();
        let (val, train) = carve_validation(rest, val_frac, seed, g);
        trials.push(Trial {
            train,
            val,
            test,
            test_subjects: group,
        });
    }
    Ok(SplitPlan {
        scheme: Scheme::LeaveSubjectsOut,
        seed,
        trials,
    })
}
