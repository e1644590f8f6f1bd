use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use runstyle::deepnet::TrainConfig;
use runstyle::evaluation::{plan_leave_subjects_out, plan_random_segment_split, ModelFamily, Scheme, SplitPlan};
use runstyle::ingest::load_manifest;
use runstyle::profile::Profile;
use runstyle::synthgait::{generate_in_memory, GeneratorConfig};
use runstyle::windowing::{segment_dataset, SegmentTable, OVERLAP, WINDOW_S};

/// Seed and personalization of the default synthetic dataset.
pub const DEFAULT_DATA_SEED: u64 = 42;
pub const DEFAULT_PERSONALIZATION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Manifest { path: PathBuf },
    Synthetic { generator: GeneratorConfig },
}

impl DatasetSource {
    /// A directory argument means its `manifest.json`.
    pub fn manifest(path: &Path) -> anyhow::Result<Self> {
        let path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let path = path
            .canonicalize()
            .with_context(|| format!("dataset manifest {} not found", path.display()))?;
        Ok(DatasetSource::Manifest { path })
    }

    pub fn load(&self, window_s: f64, overlap: f64) -> anyhow::Result<SegmentTable> {
        let dataset = match self {
            DatasetSource::Manifest { path } => {
                load_manifest(path).with_context(|| format!("loading dataset {}", path.display()))?
            }
            DatasetSource::Synthetic { generator } => generate_in_memory(generator)?,
        };
        Ok(segment_dataset(&dataset, window_s, overlap)?)
    }
}

/// Everything an evaluation run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub dataset: DatasetSource,
    pub window_s: f64,
    pub overlap: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub trials: usize,
    pub test_fraction: f64,
    pub test_subject_fraction: f64,
    pub val_fraction: f64,
    pub family: ModelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
}

impl RunConfig {
    pub fn new(profile: Profile, dataset: DatasetSource, scheme: Scheme, seed: u64, family: ModelFamily) -> Self {
        let train = family.is_deep().then(|| profile.train_config(seed));
        RunConfig {
            profile,
            dataset,
            window_s: WINDOW_S,
            overlap: OVERLAP,
            scheme,
            seed,
            trials: 5,
            test_fraction: 0.2,
            test_subject_fraction: 0.2,
            val_fraction: 0.1,
            family,
            train,
        }
    }

    pub fn default_dataset(profile: Profile) -> DatasetSource {
        DatasetSource::Synthetic {
            generator: profile.generator(DEFAULT_DATA_SEED, DEFAULT_PERSONALIZATION),
        }
    }

    pub fn plan(&self, table: &SegmentTable) -> runstyle::Result<SplitPlan> {
        match self.scheme {
            Scheme::RandomSegments => {
                plan_random_segment_split(table, self.trials, self.test_fraction, self.val_fraction, self.seed)
            }
            Scheme::LeaveSubjectsOut => {
                plan_leave_subjects_out(table, self.test_subject_fraction, self.val_fraction, self.seed)
            }
        }
    }
}

/// Contents of a run directory's `config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredConfig {
    pub created_at: String,
    pub config: RunConfig,
}
