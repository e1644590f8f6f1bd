//! Experiment protocols: split plans, per-sensor training with score fusion,
//! fine-tuning on held-out subjects, metrics and reports.

mod finetune;
mod metrics;
mod report;
mod split;

use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use finetune::{
    fine_tune, fine_tuning_ladder, stratified_tuning_split, tune_config, FineTuned, TuningSplit, DEFAULT_TUNE_EPOCHS,
    LADDER,
};
pub use metrics::{accuracy_of, compute_metrics, macro_f1_of, total, trace, Confusion, Metrics};
pub use report::{
    confusion_csv, mean_std, pooled_confusion, write_confusion_csv, Aggregate, EvaluationReport, FineTuneRow, Score,
    Summary, TrialReport, COLUMNS,
};
pub use split::{plan_leave_subjects_out, plan_random_segment_split, Scheme, SplitPlan, Trial};

use crate::classical::{self, argmax, ClassicalKind, ClassicalModel};
use crate::deepnet::{self, CnnLstmSpec, CnnSpec, ModelSpec, TrainConfig, TrainedModel};
use crate::domain::{SensorLocation, N_SENSORS, N_STYLES};
use crate::error::{Error, Result};
use crate::features::feature_matrix;
use crate::rng::stream_id;
use crate::windowing::{Segment, SegmentTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    CnnLstm { spec: CnnLstmSpec },
    Cnn { spec: CnnSpec },
    Classical { kind: ClassicalKind },
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::CnnLstm { .. } => "cnn_lstm",
            ModelFamily::Cnn { .. } => "cnn",
            ModelFamily::Classical { kind } => match kind {
                ClassicalKind::NaiveBayes => "naive_bayes",
                ClassicalKind::DecisionTree => "decision_tree",
                ClassicalKind::Svm => "svm",
                ClassicalKind::BaggedTreeEnsemble => "bagged_tree_ensemble",
            },
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelFamily::CnnLstm { .. } => "CNN-LSTM",
            ModelFamily::Cnn { .. } => "CNN",
            ModelFamily::Classical { kind } => match kind {
                ClassicalKind::NaiveBayes => "Naive Bayes",
                ClassicalKind::DecisionTree => "Decision Tree",
                ClassicalKind::Svm => "SVM",
                ClassicalKind::BaggedTreeEnsemble => "BTE",
            },
        }
    }

    pub fn model_spec(&self) -> Option<ModelSpec> {
        match self {
            ModelFamily::CnnLstm { spec } => Some(ModelSpec::CnnLstm(spec.clone())),
            ModelFamily::Cnn { spec } => Some(ModelSpec::Cnn(spec.clone())),
            ModelFamily::Classical { .. } => None,
        }
    }

    pub fn is_deep(&self) -> bool {
        self.model_spec().is_some()
    }
}

#[derive(Debug, Clone)]
pub enum SensorModel {
    Deep(TrainedModel),
    Classical(ClassicalModel),
}

impl SensorModel {
    pub fn as_deep(&self) -> Option<&TrainedModel> {
        match self {
            SensorModel::Deep(m) => Some(m),
            SensorModel::Classical(_) => None,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        match self {
            SensorModel::Deep(m) => m.save(dir),
            SensorModel::Classical(m) => m.save(dir),
        }
    }
}

/// Trained models and test-row probabilities of one trial, in sensor order.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub models: Vec<SensorModel>,
    pub probs: Vec<Array2<f64>>,
    pub fused: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub report: EvaluationReport,
    pub trials: Vec<TrialRun>,
}

impl SchemeRun {
    /// Per-trial deep models in sensor order; `None` for classical runs.
    pub fn deep_models(&self) -> Option<Vec<Vec<&TrainedModel>>> {
        self.trials
            .iter()
            .map(|t| t.models.iter().map(SensorModel::as_deep).collect())
            .collect()
    }
}

/// Seed for the model of one (trial, sensor) cell.
pub fn model_seed(seed: u64, trial: usize, sensor: SensorLocation) -> u64 {
    stream_id(10, &[seed, trial as u64, sensor.index() as u64])
}

pub(crate) fn select<'a>(segs: &'a [Segment], rows: &[usize]) -> Vec<&'a Segment> {
    rows.iter().map(|&r| &segs[r]).collect()
}

pub(crate) fn labels_of(table: &SegmentTable, rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&r| table.label(r)).collect()
}

/// Row-wise arg-max predictions scored against `truth`.
pub fn metrics_from_proba(probs: &Array2<f64>, truth: &[usize]) -> Result<Metrics> {
    let pred: Vec<usize> = probs.rows().into_iter().map(|r| argmax(r.as_slice().expect("row-major"))).collect();
    compute_metrics(truth, &pred)
}

/// Row-wise score-level fusion of five per-sensor probability matrices.
pub fn fuse_rows(probs: &[Array2<f64>]) -> Result<Array2<f64>> {
    if probs.len() != N_SENSORS {
        return Err(Error::Contract(format!("fusion needs {N_SENSORS} sensors, got {}", probs.len())));
    }
    let n = probs[0].nrows();
    if probs.iter().any(|p| p.dim() != (n, N_STYLES)) {
        return Err(Error::Contract("per-sensor probability matrices differ in shape".into()));
    }
    let mut out = Array2::zeros((n, N_STYLES));
    for i in 0..n {
        let rows: Vec<[f64; N_STYLES]> = probs.iter().map(|p| std::array::from_fn(|k| p[[i, k]])).collect();
        let f = deepnet::fuse_scores(&rows)?;
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&f[..]));
    }
    Ok(out)
}

fn check_plan(table: &SegmentTable, plan: &SplitPlan) -> Result<()> {
    if plan.trials.is_empty() {
        return Err(Error::Contract("plan has no trials".into()));
    }
    for (t, trial) in plan.trials.iter().enumerate() {
        let mut seen = vec![false; table.len()];
        for &r in trial.train.iter().chain(&trial.val).chain(&trial.test) {
            if r >= table.len() {
                return Err(Error::Contract(format!("trial {t}: row {r} outside the table")));
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::Contract(format!("trial {t}: row {r} is assigned twice")));
            }
        }
        if trial.train.is_empty() || trial.test.is_empty() {
            return Err(Error::Contract(format!("trial {t}: empty train or test set")));
        }
    }
    Ok(())
}

fn train_cell(
    table: &SegmentTable,
    trial: &Trial,
    sensor: SensorLocation,
    family: &ModelFamily,
    cfg: &TrainConfig,
    features: Option<&(Array2<f64>, Vec<usize>)>,
    seed: u64,
) -> Result<(SensorModel, Array2<f64>)> {
    match family {
        ModelFamily::Classical { kind } => {
            let (x, y) = features.expect("features computed for classical families");
            let train_y: Vec<usize> = trial.train.iter().map(|&r| y[r]).collect();
            let mut config = classical::default_config(*kind, sensor);
            config.seed = seed;
            let model = classical::train_classical(&config, x.select(Axis(0), &trial.train).view(), &train_y)?;
            let probs = classical::predict_proba_classical(&model, x.select(Axis(0), &trial.test).view())?;
            Ok((SensorModel::Classical(model), probs))
        }
        _ => {
            let spec = family.model_spec().expect("deep family");
            let segs = table.sensor(sensor);
            let model = deepnet::build(&spec, seed)?;
            let cfg = TrainConfig { seed, ..cfg.clone() };
            let trained = deepnet::train(
                model,
                &select(segs, &trial.train),
                &labels_of(table, &trial.train),
                &select(segs, &trial.val),
                &labels_of(table, &trial.val),
                &cfg,
            )?;
            let probs = trained.predict_proba_batch(&select(segs, &trial.test))?;
            Ok((SensorModel::Deep(trained), probs))
        }
    }
}

/// Trains one model per sensor in every trial, scores each sensor and the
/// fused probabilities on the trial's test rows. `cfg` applies to deep
/// families; its seed is replaced by [`model_seed`] per model. Classical
/// models fit on the training rows only.
pub fn run_scheme(table: &SegmentTable, plan: &SplitPlan, family: &ModelFamily, cfg: &TrainConfig) -> Result<SchemeRun> {
    check_plan(table, plan)?;
    if family.is_deep() {
        cfg.validate()?;
    }
    let features: Vec<(Array2<f64>, Vec<usize>)> = match family {
        ModelFamily::Classical { .. } => SensorLocation::ALL
            .par_iter()
            .map(|&s| feature_matrix(table, s))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };

    let cells: Vec<(usize, SensorLocation)> = (0..plan.trials.len())
        .flat_map(|t| SensorLocation::ALL.map(|s| (t, s)))
        .collect();
    let outputs: Vec<Result<(SensorModel, Array2<f64>)>> = cells
        .par_iter()
        .map(|&(t, s)| {
            log::info!("{} trial {t} sensor {s}", family.name());
            train_cell(
                table,
                &plan.trials[t],
                s,
                family,
                cfg,
                features.get(s.index()),
                model_seed(plan.seed, t, s),
            )
        })
        .collect();

    let mut outputs = outputs.into_iter();
    let mut trials = Vec::with_capacity(plan.trials.len());
    let mut reports = Vec::with_capacity(plan.trials.len());
    for (t, trial) in plan.trials.iter().enumerate() {
        let wrap = |e: Error| Error::Trial {
            trial: t,
            source: Box::new(e),
        };
        let (models, probs): (Vec<_>, Vec<_>) = outputs
            .by_ref()
            .take(N_SENSORS)
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?
            .into_iter()
            .unzip();
        let truth = labels_of(table, &trial.test);
        let (report, fused) = score_trial(t, trial, &probs, &truth).map_err(wrap)?;
        reports.push(report);
        trials.push(TrialRun { models, probs, fused });
    }

    let report = EvaluationReport {
        scheme: plan.scheme,
        seed: plan.seed,
        family: family.clone(),
        train: family.is_deep().then(|| cfg.clone()),
        aggregate: Aggregate::of(&reports)?,
        trials: reports,
        fine_tuning: Vec::new(),
        run_config: None,
    };
    Ok(SchemeRun { report, trials })
}

fn score_trial(t: usize, trial: &Trial, probs: &[Array2<f64>], truth: &[usize]) -> Result<(TrialReport, Array2<f64>)> {
    let sensors: Vec<Metrics> = probs.iter().map(|p| metrics_from_proba(p, truth)).collect::<Result<_>>()?;
    let sensors: [Metrics; N_SENSORS] = sensors.try_into().expect("five sensors");
    let fused = fuse_rows(probs)?;
    let fusion = metrics_from_proba(&fused, truth)?;
    Ok((TrialReport::new(t, trial.test_subjects.clone(), &sensors, &fusion), fused))
}
