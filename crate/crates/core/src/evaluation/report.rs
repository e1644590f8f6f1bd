use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, Metrics};
use super::split::Scheme;
use super::ModelFamily;
use crate::deepnet::TrainConfig;
use crate::domain::{SensorLocation, StyleLabel, SubjectId, N_SENSORS, N_STYLES};
use crate::error::{Error, Result};

/// Table column headers, five sensors then fusion.
pub const COLUMNS: [&str; N_SENSORS + 1] = ["COM", "LFoot", "LShank", "RFoot", "RShank", "Fusion"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub acc: f64,
    pub f1: f64,
}

impl From<&Metrics> for Score {
    fn from(m: &Metrics) -> Self {
        Score {
            acc: m.accuracy,
            f1: m.macro_f1,
        }
    }
}

/// One trial's scores in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_subjects: Vec<SubjectId>,
    pub n_test: usize,
    pub com: Score,
    pub lfoot: Score,
    pub lshank: Score,
    pub rfoot: Score,
    pub rshank: Score,
    pub fusion: Score,
    /// Fused-score confusion matrix.
    pub confusion: Confusion,
    /// Per-sensor confusion matrices in sensor order.
    pub sensor_confusion: [Confusion; N_SENSORS],
}

impl TrialReport {
    /// `sensors` in [`SensorLocation::ALL`] order.
    pub fn new(trial: usize, test_subjects: Vec<SubjectId>, sensors: &[Metrics; N_SENSORS], fusion: &Metrics) -> Self {
        let n_test = super::metrics::total(&fusion.confusion) as usize;
        TrialReport {
            trial,
            test_subjects,
            n_test,
            com: (&sensors[0]).into(),
            lfoot: (&sensors[1]).into(),
            lshank: (&sensors[2]).into(),
            rfoot: (&sensors[3]).into(),
            rshank: (&sensors[4]).into(),
            fusion: fusion.into(),
            confusion: fusion.confusion,
            sensor_confusion: std::array::from_fn(|s| sensors[s].confusion),
        }
    }

    pub fn scores(&self) -> [Score; N_SENSORS + 1] {
        [self.com, self.lfoot, self.lshank, self.rfoot, self.rshank, self.fusion]
    }

    pub fn sensor(&self, sensor: SensorLocation) -> Score {
        self.scores()[sensor.index()]
    }

    /// Every confusion matrix with the score it belongs to, fusion last.
    pub fn confusions(&self) -> impl Iterator<Item = (&Confusion, Score)> {
        let scores = self.scores();
        self.sensor_confusion
            .iter()
            .chain(std::iter::once(&self.confusion))
            .zip(scores)
    }
}

/// Mean and population standard deviation over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc_mean: f64,
    pub acc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Summary {
    pub fn of(scores: &[Score]) -> Summary {
        let acc: Vec<f64> = scores.iter().map(|s| s.acc).collect();
        let f1: Vec<f64> = scores.iter().map(|s| s.f1).collect();
        let (acc_mean, acc_std) = mean_std(&acc);
        let (f1_mean, f1_std) = mean_std(&f1);
        Summary {
            acc_mean,
            acc_std,
            f1_mean,
            f1_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub com: Summary,
    pub lfoot: Summary,
    pub lshank: Summary,
    pub rfoot: Summary,
    pub rshank: Summary,
    pub fusion: Summary,
}

impl Aggregate {
    pub fn of(trials: &[TrialReport]) -> Result<Aggregate> {
        if trials.is_empty() {
            return Err(Error::Contract("cannot aggregate zero trials".into()));
        }
        let col = |c: usize| Summary::of(&trials.iter().map(|t| t.scores()[c]).collect::<Vec<_>>());
        Ok(Aggregate {
            com: col(0),
            lfoot: col(1),
            lshank: col(2),
            rfoot: col(3),
            rshank: col(4),
            fusion: col(5),
        })
    }

    pub fn columns(&self) -> [Summary; N_SENSORS + 1] {
        [self.com, self.lfoot, self.lshank, self.rfoot, self.rshank, self.fusion]
    }
}

/// One rung of the fine-tuning ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRow {
    pub fraction: f64,
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
    /// Trials where some present class got no tuning segment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FineTuneRow {
    pub fn label(&self) -> String {
        if self.fraction == 0.0 {
            "No Tuning".into()
        } else {
            format!("Tuning {}%", round_percent(self.fraction))
        }
    }
}

fn round_percent(f: f64) -> String {
    let p = f * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub family: ModelFamily,
    /// Absent for classical families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub trials: Vec<TrialReport>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fine_tuning: Vec<FineTuneRow>,
    /// Caller-supplied resolved configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("<report>", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EvaluationReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Sensor columns then fusion; one row of mean ± std accuracy and F1.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} | {} | seed {} | {} trial(s)",
            self.family.name(),
            self.scheme.name(),
            self.seed,
            self.trials.len()
        );
        let cell = |m: f64, s: f64| format!("{m:.3}±{s:.3}");
        let mut header = format!("{:<14}", "Model");
        let mut sub = format!("{:<14}", "");
        for c in COLUMNS {
            let _ = write!(header, "| {:<25}", c);
            let _ = write!(sub, "| {:<12} {:<12}", "Acc.", "F1");
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{sub}");
        let mut row = format!("{:<14}", self.family.display_name());
        for s in self.aggregate.columns() {
            let _ = write!(row, "| {:<12} {:<12}", cell(s.acc_mean, s.acc_std), cell(s.f1_mean, s.f1_std));
        }
        let _ = writeln!(out, "{row}");
        if !self.fine_tuning.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<14}| {:<12} {:<12}", "Tuning", "Acc.", "F1");
            for r in &self.fine_tuning {
                let f = r.aggregate.fusion;
                let _ = writeln!(
                    out,
                    "{:<14}| {:<12} {:<12}",
                    r.label(),
                    cell(f.acc_mean, f.acc_std),
                    cell(f.f1_mean, f.f1_std)
                );
            }
        }
        out
    }
}

/// Truth rows against predicted columns, headed by style names.
pub fn confusion_csv(c: &Confusion) -> String {
    let names: Vec<&str> = (0..N_STYLES)
        .map(|k| StyleLabel::from_index(k).expect("style index").name())
        .collect();
    let mut out = format!("truth\\pred,{}\n", names.join(","));
    for (k, row) in c.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "{},{}", names[k], cells.join(","));
    }
    out
}

/// Element-wise sum of the fused confusion matrices over trials.
pub fn pooled_confusion(trials: &[TrialReport]) -> Confusion {
    let mut c = [[0u64; N_STYLES]; N_STYLES];
    for t in trials {
        for (i, row) in t.confusion.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                c[i][j] += v;
            }
        }
    }
    c
}

pub fn write_confusion_csv(c: &Confusion, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, confusion_csv(c)).map_err(|e| Error::io(path, e))
}
