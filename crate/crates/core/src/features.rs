//! Hand-crafted per-axis statistics used by the classical baselines.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::domain::SensorLocation;
use crate::error::{Error, Result};
use crate::windowing::{Segment, SegmentTable};

pub const N_STATS: usize = 8;
pub const N_FEATURES: usize = 3 * N_STATS;

pub const STAT_NAMES: [&str; N_STATS] = [
    "mean",
    "std",
    "min",
    "max",
    "rms",
    "skewness",
    "kurtosis",
    "p2p_time",
];

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Standard deviations at or below this fraction of the signal scale count as zero
/// variance, which fixes skewness and kurtosis to 0.
const DEGENERATE_STD: f64 = 1e-12;

/// Values within this relative distance of an extremum tie with it; the first
/// tied sample gives the extremum's position.
pub const EXTREMUM_TIE: f64 = 1e-12;

/// Eight statistics for each of the x, y, z axes, axis-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.0[axis * N_STATS..(axis + 1) * N_STATS]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Column names in feature order: `x_mean, x_std, ..., z_p2p_time`.
pub fn feature_names() -> Vec<String> {
    AXIS_NAMES
        .iter()
        .flat_map(|a| STAT_NAMES.iter().map(move |s| format!("{a}_{s}")))
        .collect()
}

fn axis_stats(x: ArrayView1<'_, f64>, fs: f64) -> [f64; N_STATS] {
    let n = x.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x.iter() {
        sum += v;
        sum_sq += v * v;
        min = min.min(v);
        max = max.max(v);
    }
    let tie = EXTREMUM_TIE * max.abs().max(min.abs());
    let argmax = x.iter().position(|&v| v >= max - tie).unwrap_or(0);
    let argmin = x.iter().position(|&v| v <= min + tie).unwrap_or(0);
    let mean = sum / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x.iter() {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    let scale = mean.abs().max(1.0);
    let (skewness, kurtosis) = if std <= DEGENERATE_STD * scale {
        (0.0, 0.0)
    } else {
        (m3 / (std * std * std), m4 / (m2 * m2) - 3.0)
    };
    let rms = (sum_sq / n).sqrt();
    let p2p_time = argmax.abs_diff(argmin) as f64 / fs;
    [mean, std, min, max, rms, skewness, kurtosis, p2p_time]
}

/// Computes the 24 statistics of an `n × 3` window sampled at `fs`.
pub fn extract_window_features(data: ArrayView2<'_, f64>, fs: f64) -> Result<FeatureVector> {
    if data.ncols() != 3 || data.nrows() == 0 {
        return Err(Error::Contract(format!(
            "feature extraction needs a non-empty n × 3 window, got {:?}",
            data.dim()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite value in segment".into()));
    }
    let mut out = [0.0; N_FEATURES];
    for axis in 0..3 {
        out[axis * N_STATS..(axis + 1) * N_STATS].copy_from_slice(&axis_stats(data.column(axis), fs));
    }
    Ok(FeatureVector(out))
}

pub fn extract_features(seg: &Segment) -> Result<FeatureVector> {
    extract_window_features(seg.data.view(), seg.fs as f64)
}

/// Feature rows for one sensor in table order, with style indices as labels.
pub fn feature_matrix(table: &SegmentTable, sensor: SensorLocation) -> Result<(Array2<f64>, Vec<usize>)> {
    let segs = table.sensor(sensor);
    let mut m = Array2::zeros((segs.len(), N_FEATURES));
    for (mut row, seg) in m.rows_mut().into_iter().zip(segs) {
        let f = extract_features(seg)?;
        row.assign(&ArrayView1::from(&f.0[..]));
    }
    Ok((m, table.labels()))
}

/// Writes a feature matrix as CSV with a `label` column appended.
pub fn write_feature_csv(features: &Array2<f64>, labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&feature_names().join(","));
    out.push_str(",label\n");
    for (row, label) in features.rows().into_iter().zip(labels) {
        for v in row {
            out.push_str(&crate::ingest::format_value(*v));
            out.push(',');
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
