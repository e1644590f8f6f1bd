use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;

use runstyle::classical::ClassicalKind;
use runstyle::deepnet::TrainedModel;
use runstyle::domain::SensorLocation;
use runstyle::evaluation::{
    fine_tuning_ladder, pooled_confusion, run_scheme, tune_config, write_confusion_csv, EvaluationReport, ModelFamily,
    Scheme, SplitPlan,
};
use runstyle::profile::Profile;
use runstyle::synthgait::{generate_dataset, GeneratorConfig};

use crate::config::{DatasetSource, RunConfig, StoredConfig};
use crate::{EvalArgs, FinetuneArgs, ModelArg, SynthArgs};

/// A bad flag combination or configuration file; exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(String);

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// 2 for configuration problems, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<runstyle::Error>() {
            return match err {
                runstyle::Error::Parameter(_) | runstyle::Error::OutputExists(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let profile: Profile = a.profile.into();
    let cfg = match &a.config {
        Some(path) => GeneratorConfig::from_json_file(path).map_err(|e| config_error(e.to_string()))?,
        None => GeneratorConfig {
            n_subjects: a.subjects,
            duration_s: a.duration.unwrap_or(profile.duration_s()),
            ..profile.generator(a.seed, a.personalization)
        },
    };
    cfg.validate()?;
    let (dataset, manifest) = generate_dataset(&cfg, &a.out, a.force)?;
    log::info!("{} recordings written", dataset.recordings.len());
    println!("{}", manifest.display());
    Ok(())
}

fn family(model: ModelArg, profile: Profile) -> ModelFamily {
    let classical = |kind| ModelFamily::Classical { kind };
    match model {
        ModelArg::CnnLstm => ModelFamily::CnnLstm {
            spec: profile.cnn_lstm_spec(),
        },
        ModelArg::Cnn => ModelFamily::Cnn {
            spec: profile.cnn_spec(),
        },
        ModelArg::NaiveBayes => classical(ClassicalKind::NaiveBayes),
        ModelArg::DecisionTree => classical(ClassicalKind::DecisionTree),
        ModelArg::Svm => classical(ClassicalKind::Svm),
        ModelArg::BaggedTreeEnsemble => classical(ClassicalKind::BaggedTreeEnsemble),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Creates `<root>/<UTC stamp>-<label>`, suffixing a counter on collision.
fn create_run_dir(root: &Path, label: &str) -> anyhow::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    for n in 0.. {
        let name = if n == 0 { format!("{stamp}-{label}") } else { format!("{stamp}-{label}-{n}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

fn model_dir(run: &Path, trial: usize, sensor: SensorLocation) -> PathBuf {
    run.join("models").join(format!("trial_{trial}")).join(sensor.name())
}

fn write_outputs(run_dir: &Path, report: &EvaluationReport) -> anyhow::Result<()> {
    report.save(run_dir.join("report.json"))?;
    fs::write(run_dir.join("table.txt"), report.render_table())
        .with_context(|| format!("writing table in {}", run_dir.display()))?;
    write_confusion_csv(&pooled_confusion(&report.trials), run_dir.join("confusion.csv"))?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let profile: Profile = a.profile.into();
    let dataset = match &a.data {
        Some(path) => DatasetSource::manifest(path)?,
        None => RunConfig::default_dataset(profile),
    };
    let mut cfg = RunConfig::new(profile, dataset, a.scheme.into(), a.seed, family(a.model, profile));
    cfg.trials = a.trials;
    if let (Some(epochs), Some(train)) = (a.epochs, cfg.train.as_mut()) {
        train.epochs = epochs;
    }
    if let Some(train) = &cfg.train {
        train.validate()?;
    }

    let table = cfg.dataset.load(cfg.window_s, cfg.overlap)?;
    let plan = cfg.plan(&table)?;
    let run_dir = create_run_dir(&a.out, &format!("{}-{}", cfg.family.name(), cfg.scheme.name()))?;
    write_json(
        &run_dir.join("config.json"),
        &StoredConfig {
            created_at: chrono::Utc::now().to_rfc3339(),
            config: cfg.clone(),
        },
    )?;
    write_json(&run_dir.join("plan.json"), &plan)?;

    let train = cfg.train.clone().unwrap_or_default();
    let mut run = run_scheme(&table, &plan, &cfg.family, &train)?;
    run.report.run_config = Some(serde_json::to_value(&cfg)?);
    write_outputs(&run_dir, &run.report)?;
    if !a.no_models {
        for (t, trial) in run.trials.iter().enumerate() {
            for (sensor, model) in SensorLocation::ALL.iter().zip(&trial.models) {
                model.save(model_dir(&run_dir, t, *sensor))?;
            }
        }
    }
    print!("{}", run.report.render_table());
    println!("{}", run_dir.display());
    Ok(())
}

pub fn finetune(a: FinetuneArgs) -> anyhow::Result<()> {
    if a.fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
        bail!(config_error(format!("fractions must lie in [0, 1), got {:?}", a.fractions)));
    }
    let stored: StoredConfig = read_json(&a.run.join("config.json"))?;
    let cfg = stored.config;
    let plan: SplitPlan = read_json(&a.run.join("plan.json"))?;
    if plan.scheme != Scheme::LeaveSubjectsOut {
        bail!(config_error(format!(
            "{} is a {} run; fine-tuning needs leave_subjects_out",
            a.run.display(),
            plan.scheme.name()
        )));
    }
    let Some(train) = cfg.train.as_ref().filter(|_| cfg.family.is_deep()) else {
        bail!(config_error(format!("{} models cannot be fine-tuned", cfg.family.name())));
    };

    let models: Vec<Vec<TrainedModel>> = (0..plan.trials.len())
        .map(|t| {
            SensorLocation::ALL
                .iter()
                .map(|&s| {
                    let dir = model_dir(&a.run, t, s);
                    TrainedModel::load(&dir).with_context(|| format!("model artifact {}", dir.display()))
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;
    let refs: Vec<Vec<&TrainedModel>> = models.iter().map(|m| m.iter().collect()).collect();

    let table = cfg.dataset.load(cfg.window_s, cfg.overlap)?;
    let tune = tune_config(train, a.tune_epochs.unwrap_or(cfg.profile.tune_epochs()));
    let rows = fine_tuning_ladder(&table, &plan, &refs, &a.fractions, &tune)?;

    let report_path = a.run.join("report.json");
    let mut report = EvaluationReport::load(&report_path)?;
    report.fine_tuning.retain(|r| !a.fractions.contains(&r.fraction));
    report.fine_tuning.extend(rows);
    report.fine_tuning.sort_by(|x, y| x.fraction.total_cmp(&y.fraction));
    if let Some(serde_json::Value::Object(map)) = report.run_config.as_mut() {
        map.insert("fine_tune".into(), serde_json::to_value(&tune)?);
    }
    write_outputs(&a.run, &report)?;
    print!("{}", report.render_table());
    Ok(())
}
