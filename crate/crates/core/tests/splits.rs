use std::collections::HashSet;

use proptest::prelude::*;

use runstyle::evaluation::{plan_leave_subjects_out, plan_random_segment_split, Scheme};
use runstyle::synthgait::{generate_in_memory, GeneratorConfig};
use runstyle::windowing::{segment_dataset, SegmentTable};

fn table() -> &'static SegmentTable {
    static TABLE: std::sync::OnceLock<SegmentTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let cfg = GeneratorConfig {
            duration_s: 25.0,
            ..GeneratorConfig::default()
        };
        segment_dataset(&generate_in_memory(&cfg).unwrap(), 10.0, 0.5).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_segment_sets_are_disjoint(seed in any::<u64>()) {
        let t = table();
        let plan = plan_random_segment_split(t, 5, 0.2, 0.1, seed).unwrap();
        prop_assert_eq!(plan.scheme, Scheme::RandomSegments);
        for trial in &plan.trials {
            let train: HashSet<usize> = trial.train.iter().copied().collect();
            let val: HashSet<usize> = trial.val.iter().copied().collect();
            let test: HashSet<usize> = trial.test.iter().copied().collect();
            prop_assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
            prop_assert_eq!(train.len() + val.len() + test.len(), t.len());
            prop_assert_eq!(test.len(), t.len() / 5);
        }
    }

    #[test]
    fn held_out_subjects_never_leak(seed in any::<u64>()) {
        let t = table();
        let plan = plan_leave_subjects_out(t, 0.2, 0.1, seed).unwrap();
        let mut covered = Vec::new();
        for trial in &plan.trials {
            for &r in trial.train.iter().chain(&trial.val) {
                prop_assert!(!trial.test_subjects.contains(&t.keys[r].subject));
            }
            for &r in &trial.test {
                prop_assert!(trial.test_subjects.contains(&t.keys[r].subject));
            }
            covered.extend(trial.test_subjects.iter().cloned());
        }
        covered.sort();
        prop_assert_eq!(covered, t.subjects());
    }
}
