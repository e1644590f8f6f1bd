//! Wearable running-style classification workbench.
//!
//! The crate covers the whole experiment pipeline on multi-sensor tri-axial
//! accelerometer data:
//!
//! - [`synthgait`] generates deterministic five-sensor datasets for eight
//!   running styles, with per-subject variation.
//! - [`ingest`] reads and writes the CSV + JSON manifest dataset format.
//! - [`windowing`] cuts recordings into 10 s windows (50 % overlap) and
//!   1.25 s sub-windows.
//! - [`features`] computes 24 per-axis statistics for the classical baselines.
//! - [`classical`] holds Naive Bayes, decision tree, SVM and bagged trees.
//! - [`deepnet`] holds the per-sensor CNN-LSTM, the CNN baseline, training and
//!   score-level fusion.
//! - [`evaluation`] implements random-segment and leave-subjects-out protocols,
//!   fine-tuning, metrics and reports.
//! - [`profile`] bundles model widths and training budgets for desk-sized and
//!   full-sized runs.

pub mod domain;
pub mod error;
pub mod classical;
pub mod deepnet;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod profile;
pub mod rng;
pub mod synthgait;
pub mod windowing;

pub use error::{Error, Result};
