//! Run-size presets: a laptop-scale `desk` profile and the full-size `full` one.

use serde::{Deserialize, Serialize};

use crate::deepnet::{CnnLstmSpec, CnnSpec, PoolingMode, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_TUNE_EPOCHS;
use crate::synthgait::GeneratorConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Parameter(format!("unknown profile {other:?}"))),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }

    /// Recording length per (subject, style) in seconds.
    pub fn duration_s(self) -> f64 {
        match self {
            Profile::Desk => 120.0,
            Profile::Full => 300.0,
        }
    }

    pub fn generator(self, seed: u64, personalization: f64) -> GeneratorConfig {
        GeneratorConfig {
            duration_s: self.duration_s(),
            seed,
            personalization,
            ..GeneratorConfig::default()
        }
    }

    /// Full: the published topology. Desk: narrow 8-filter blocks on a
    /// 25 Hz input with a 16-unit LSTM.
    pub fn cnn_lstm_spec(self) -> CnnLstmSpec {
        match self {
            Profile::Full => CnnLstmSpec::default(),
            Profile::Desk => CnnLstmSpec {
                input_downsample: 20,
                conv_blocks: vec![vec![8, 8], vec![8, 8], vec![8, 8]],
                pooling_mode: PoolingMode::PerBlock,
                pool_size: 2,
                reduce_factor: 1,
                lstm_hidden: 16,
                lstm_layers: 2,
                head: vec![32, 8],
                ..CnnLstmSpec::default()
            },
        }
    }

    pub fn cnn_spec(self) -> CnnSpec {
        match self {
            Profile::Full => CnnSpec::default(),
            Profile::Desk => CnnSpec {
                input_downsample: 10,
                filters: vec![8, 16, 16, 16],
                pool_size: 4,
                head: vec![48, 24, 16, 8],
                ..CnnSpec::default()
            },
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        match self {
            Profile::Full => TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            Profile::Desk => TrainConfig {
                epochs: 30,
                batch_size: 64,
                learning_rate: 3e-3,
                patience: Some(8),
                seed,
                ..TrainConfig::default()
            },
        }
    }

    pub fn tune_epochs(self) -> usize {
        DEFAULT_TUNE_EPOCHS
    }
}
