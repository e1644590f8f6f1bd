//! Classical baselines trained on hand-crafted feature vectors.
//!
//! Every learner sees z-scored features (statistics from the training rows) and
//! returns a probability vector over the eight styles, so baseline scores can be
//! fused across sensors exactly like network outputs.

mod naive_bayes;
mod svm;
mod tree;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use naive_bayes::GaussianNb;
pub use svm::{BinaryMachine, Kernel, MulticlassScheme, Svm};
pub use tree::{DecisionTree, SplitCriterion, TreeParams};

use crate::domain::{SensorLocation, N_STYLES};
use crate::error::{Error, Result};
use crate::rng::{stream_id, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKind {
    NaiveBayes,
    DecisionTree,
    Svm,
    BaggedTreeEnsemble,
}

impl ClassicalKind {
    pub const ALL: [ClassicalKind; 4] = [
        ClassicalKind::NaiveBayes,
        ClassicalKind::DecisionTree,
        ClassicalKind::Svm,
        ClassicalKind::BaggedTreeEnsemble,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalParams {
    NaiveBayes,
    DecisionTree {
        split_criterion: SplitCriterion,
    },
    Svm {
        kernel: Kernel,
        scheme: MulticlassScheme,
        box_constraint: f64,
    },
    BaggedTreeEnsemble {
        n_trees: usize,
    },
}

impl ClassicalParams {
    pub fn kind(&self) -> ClassicalKind {
        match self {
            ClassicalParams::NaiveBayes => ClassicalKind::NaiveBayes,
            ClassicalParams::DecisionTree { .. } => ClassicalKind::DecisionTree,
            ClassicalParams::Svm { .. } => ClassicalKind::Svm,
            ClassicalParams::BaggedTreeEnsemble { .. } => ClassicalKind::BaggedTreeEnsemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    pub sensor: SensorLocation,
    #[serde(flatten)]
    pub params: ClassicalParams,
    #[serde(default)]
    pub seed: u64,
}

/// Per-sensor configurations: cubic one-vs-one SVMs except a Gaussian
/// one-vs-all SVM on the left foot; deviance trees except twoing on the
/// lower back; 100 bagged trees.
pub fn default_config(kind: ClassicalKind, sensor: SensorLocation) -> ClassicalConfig {
    let params = match kind {
        ClassicalKind::NaiveBayes => ClassicalParams::NaiveBayes,
        ClassicalKind::DecisionTree => ClassicalParams::DecisionTree {
            split_criterion: if sensor == SensorLocation::Com {
                SplitCriterion::Twoing
            } else {
                SplitCriterion::MaxDevianceReduction
            },
        },
        ClassicalKind::Svm => {
            let (kernel, scheme) = if sensor == SensorLocation::LFoot {
                (Kernel::Gaussian, MulticlassScheme::OneVsAll)
            } else {
                (Kernel::CubicPolynomial, MulticlassScheme::OneVsOne)
            };
            ClassicalParams::Svm {
                kernel,
                scheme,
                box_constraint: 1.0,
            }
        }
        ClassicalKind::BaggedTreeEnsemble => ClassicalParams::BaggedTreeEnsemble { n_trees: 100 },
    };
    ClassicalConfig {
        sensor,
        params,
        seed: 0,
    }
}

/// Per-feature z-scoring; zero-variance features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty matrix");
        let std = x.std_axis(Axis(0), 0.0);
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    trees: Vec<DecisionTree>,
}

impl BaggedTrees {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], n_trees: usize, seed: u64) -> Self {
        let n = x.nrows();
        let params = TreeParams::bagged();
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = stream_rng(seed, stream_id(3, &[t as u64]));
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(x, y, &rows, &params)
            })
            .collect();
        BaggedTrees { trees }
    }

    /// Fraction of trees voting for each class.
    pub fn predict_proba_row(&self, x: ndarray::ArrayView1<'_, f64>) -> [f64; N_STYLES] {
        let mut votes = [0.0; N_STYLES];
        for tree in &self.trees {
            votes[argmax(&tree.predict_proba_row(x))] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.map(|v| v / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Learner {
    NaiveBayes(GaussianNb),
    DecisionTree(DecisionTree),
    Svm(Svm),
    BaggedTreeEnsemble(BaggedTrees),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalModel {
    pub config: ClassicalConfig,
    pub standardizer: Standardizer,
    pub learner: Learner,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Softmax over the finite entries; `-inf` entries get probability 0.
pub(crate) fn softmax_finite(logits: &[f64; N_STYLES]) -> [f64; N_STYLES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 });
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

fn check_training_data(x: ArrayView2<'_, f64>, y: &[usize]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Contract(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite feature value".into()));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= N_STYLES) {
        return Err(Error::Contract(format!("label {bad} outside 0..{N_STYLES}")));
    }
    let first = y.first().copied();
    if y.iter().all(|&l| Some(l) == first) {
        return Err(Error::Training(
            "training data must contain at least two classes".into(),
        ));
    }
    Ok(())
}

pub fn train_classical(config: &ClassicalConfig, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<ClassicalModel> {
    check_training_data(features, labels)?;
    let standardizer = Standardizer::fit(features);
    let z = standardizer.transform(features);
    let learner = match &config.params {
        ClassicalParams::NaiveBayes => Learner::NaiveBayes(GaussianNb::fit(z.view(), labels)),
        ClassicalParams::DecisionTree { split_criterion } => {
            let rows: Vec<usize> = (0..z.nrows()).collect();
            Learner::DecisionTree(DecisionTree::fit(
                z.view(),
                labels,
                &rows,
                &TreeParams::single(*split_criterion),
            ))
        }
        ClassicalParams::Svm {
            kernel,
            scheme,
            box_constraint,
        } => {
            if !(*box_constraint > 0.0) {
                return Err(Error::Parameter("box constraint must be positive".into()));
            }
            Learner::Svm(Svm::fit(z.view(), labels, *kernel, *scheme, *box_constraint))
        }
        ClassicalParams::BaggedTreeEnsemble { n_trees } => {
            if *n_trees == 0 {
                return Err(Error::Parameter("ensemble needs at least one tree".into()));
            }
            Learner::BaggedTreeEnsemble(BaggedTrees::fit(z.view(), labels, *n_trees, config.seed))
        }
    };
    Ok(ClassicalModel {
        config: config.clone(),
        standardizer,
        learner,
    })
}

pub fn predict_proba_classical(model: &ClassicalModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let d = model.standardizer.mean.len();
    if features.ncols() != d {
        return Err(Error::Contract(format!(
            "model expects {d} features, got {}",
            features.ncols()
        )));
    }
    let z = model.standardizer.transform(features);
    let mut out = Array2::zeros((z.nrows(), N_STYLES));
    for (row, mut o) in z.rows().into_iter().zip(out.rows_mut()) {
        let p = match &model.learner {
            Learner::NaiveBayes(m) => m.predict_proba_row(row),
            Learner::DecisionTree(m) => m.predict_proba_row(row),
            Learner::Svm(m) => m.predict_proba_row(row),
            Learner::BaggedTreeEnsemble(m) => m.predict_proba_row(row),
        };
        o.assign(&ndarray::ArrayView1::from(&p[..]));
    }
    Ok(out)
}

impl ClassicalModel {
    /// Writes `config.json` and `model.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: std::result::Result<String, serde_json::Error>| {
            let path = dir.join(name);
            let text = text.map_err(|e| Error::json(&path, e))?;
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("config.json", serde_json::to_string_pretty(&self.config))?;
        write("model.json", serde_json::to_string(self))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("model.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Two Gaussian blobs in 24-D, 100 points each, centred at ±3 on every axis.
    pub(crate) fn blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = stream_rng(seed, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::zeros((200, 24));
        let mut y = Vec::with_capacity(200);
        for i in 0..200 {
            let class = i % 2;
            let centre = if class == 0 { -3.0 } else { 3.0 };
            for j in 0..24 {
                x[[i, j]] = centre + normal.sample(&mut rng);
            }
            y.push(class * 5);
        }
        (x, y)
    }

    fn all_configs() -> Vec<ClassicalConfig> {
        let mut v = Vec::new();
        for kind in ClassicalKind::ALL {
            for sensor in [SensorLocation::Com, SensorLocation::LFoot, SensorLocation::RShank] {
                v.push(default_config(kind, sensor));
            }
        }
        v
    }

    #[test]
    fn defaults_follow_per_sensor_choices() {
        assert_eq!(
            default_config(ClassicalKind::Svm, SensorLocation::LFoot).params,
            ClassicalParams::Svm {
                kernel: Kernel::Gaussian,
                scheme: MulticlassScheme::OneVsAll,
                box_constraint: 1.0
            }
        );
        assert_eq!(
            default_config(ClassicalKind::Svm, SensorLocation::RShank).params,
            ClassicalParams::Svm {
                kernel: Kernel::CubicPolynomial,
                scheme: MulticlassScheme::OneVsOne,
                box_constraint: 1.0
            }
        );
        assert_eq!(
            default_config(ClassicalKind::DecisionTree, SensorLocation::Com).params,
            ClassicalParams::DecisionTree {
                split_criterion: SplitCriterion::Twoing
            }
        );
        assert_eq!(
            default_config(ClassicalKind::DecisionTree, SensorLocation::LShank).params,
            ClassicalParams::DecisionTree {
                split_criterion: SplitCriterion::MaxDevianceReduction
            }
        );
        assert_eq!(
            default_config(ClassicalKind::BaggedTreeEnsemble, SensorLocation::Com).params,
            ClassicalParams::BaggedTreeEnsemble { n_trees: 100 }
        );
    }

    #[test]
    fn config_json_is_kind_tagged() {
        let c = default_config(ClassicalKind::Svm, SensorLocation::LFoot);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["kind"], "svm");
        assert_eq!(json["kernel"], "gaussian");
        assert_eq!(json["scheme"], "one_vs_all");
        assert!(json.get("split_criterion").is_none());
        let back: ClassicalConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_kind_separates_blobs() {
        let (x, y) = blobs(11);
        for cfg in all_configs() {
            let m = train_classical(&cfg, x.view(), &y).unwrap();
            let p = predict_proba_classical(&m, x.view()).unwrap();
            let correct = p
                .rows()
                .into_iter()
                .zip(&y)
                .filter(|(row, &label)| argmax(row.as_slice().unwrap()) == label)
                .count();
            let acc = correct as f64 / y.len() as f64;
            assert!(acc >= 0.99, "{:?}: training accuracy {acc}", cfg.params);
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = blobs(1);
        let y = vec![3; x.nrows()];
        for cfg in all_configs() {
            assert!(matches!(
                train_classical(&cfg, x.view(), &y),
                Err(Error::Training(_))
            ));
        }
    }

    #[test]
    fn zero_variance_feature_is_tolerated() {
        let (mut x, y) = blobs(2);
        x.column_mut(4).fill(7.0);
        let cfg = default_config(ClassicalKind::NaiveBayes, SensorLocation::Com);
        let m = train_classical(&cfg, x.view(), &y).unwrap();
        assert_eq!(m.standardizer.std[4], 0.0);
        let z = m.standardizer.transform(x.view());
        assert!(z.column(4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(5);
        let probe = x.slice(ndarray::s![..20, ..]).to_owned();
        for cfg in all_configs() {
            let a = train_classical(&cfg, x.view(), &y).unwrap();
            let b = train_classical(&cfg, x.view(), &y).unwrap();
            assert_eq!(
                predict_proba_classical(&a, probe.view()).unwrap(),
                predict_proba_classical(&b, probe.view()).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let (x, y) = blobs(3);
        let m = train_classical(&default_config(ClassicalKind::NaiveBayes, SensorLocation::Com), x.view(), &y).unwrap();
        let wrong = Array2::zeros((2, 23));
        assert!(matches!(
            predict_proba_classical(&m, wrong.view()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn naive_bayes_midpoint_is_even() {
        // Mirror-image classes: the midpoint is equally likely under both.
        let mut x = Array2::zeros((200, 2));
        let mut y = Vec::new();
        let (base, _) = blobs(9);
        for i in 0..100 {
            x[[2 * i, 0]] = -2.0 + base[[i, 0]] * 0.1;
            x[[2 * i, 1]] = base[[i, 1]];
            x[[2 * i + 1, 0]] = 2.0 - base[[i, 0]] * 0.1;
            x[[2 * i + 1, 1]] = base[[i, 1]];
            y.extend([1, 2]);
        }
        let m = train_classical(&default_config(ClassicalKind::NaiveBayes, SensorLocation::Com), x.view(), &y).unwrap();
        let mid = ndarray::array![[0.0, 0.0]];
        let p = predict_proba_classical(&m, mid.view()).unwrap();
        assert!((p[[0, 1]] - 0.5).abs() <= 0.05, "{p:?}");
        assert!((p[[0, 2]] - 0.5).abs() <= 0.05, "{p:?}");
        assert_eq!(p[[0, 0]], 0.0);
    }

    #[test]
    fn affine_rescaling_keeps_predictions() {
        let (x, y) = blobs(21);
        let (test, _) = blobs(22);
        let rescale = |m: &Array2<f64>| {
            let mut m = m.clone();
            m.column_mut(3).mapv_inplace(|v| 4.0 * v + 10.0);
            m.column_mut(7).mapv_inplace(|v| 0.5 * v - 3.0);
            m
        };
        for cfg in all_configs() {
            let a = train_classical(&cfg, x.view(), &y).unwrap();
            let b = train_classical(&cfg, rescale(&x).view(), &y).unwrap();
            let pa = predict_proba_classical(&a, test.view()).unwrap();
            let pb = predict_proba_classical(&b, rescale(&test).view()).unwrap();
            for (ra, rb) in pa.rows().into_iter().zip(pb.rows()) {
                assert_eq!(argmax(ra.as_slice().unwrap()), argmax(rb.as_slice().unwrap()));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = blobs(4);
        for (i, cfg) in all_configs().into_iter().enumerate() {
            let m = train_classical(&cfg, x.view(), &y).unwrap();
            let sub = dir.path().join(i.to_string());
            m.save(&sub).unwrap();
            assert!(sub.join("config.json").is_file());
            let back = ClassicalModel::load(&sub).unwrap();
            assert_eq!(
                predict_proba_classical(&m, x.view()).unwrap(),
                predict_proba_classical(&back, x.view()).unwrap()
            );
        }
    }
}
