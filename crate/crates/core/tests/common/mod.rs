#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use runstyle::domain::{RecordingKey, SensorLocation, StyleLabel, SubjectId, SAMPLING_RATE_HZ};
use runstyle::rng::stream_rng;
use runstyle::windowing::{Segment, SegmentOrigin, SEGMENT_LEN};

/// The 24 statistics computed straight from their definitions, one loop per
/// quantity, without sharing any intermediate with the library.
pub fn oracle_features(data: ArrayView2<'_, f64>, fs: f64) -> [f64; 24] {
    let mut out = [0.0; 24];
    for axis in 0..3 {
        let x: Vec<f64> = data.column(axis).to_vec();
        let n = x.len() as f64;

        let mut mean = 0.0;
        for v in &x {
            mean += v;
        }
        mean /= n;

        let mut var = 0.0;
        for v in &x {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        let std = var.sqrt();

        let mut min = x[0];
        let mut max = x[0];
        let mut imin = 0;
        let mut imax = 0;
        for (i, &v) in x.iter().enumerate() {
            if v < min {
                min = v;
                imin = i;
            }
            if v > max {
                max = v;
                imax = i;
            }
        }

        let mut sq = 0.0;
        for v in &x {
            sq += v * v;
        }
        let rms = (sq / n).sqrt();

        let mut m3 = 0.0;
        for v in &x {
            m3 += (v - mean).powi(3);
        }
        m3 /= n;
        let mut m4 = 0.0;
        for v in &x {
            m4 += (v - mean).powi(4);
        }
        m4 /= n;
        let (skew, kurt) = if std == 0.0 {
            (0.0, 0.0)
        } else {
            (m3 / std.powi(3), m4 / var.powi(2) - 3.0)
        };

        let p2p = (imax as f64 - imin as f64).abs() / fs;
        out[axis * 8..axis * 8 + 8].copy_from_slice(&[mean, std, min, max, rms, skew, kurt, p2p]);
    }
    out
}

/// Relative closeness with a floor that only matters for values at round-off scale.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-6)
}

/// A 5000 × 3 segment of uniform noise with per-axis offset and scale drawn
/// from the same stream; skewed by squaring on some axes.
pub fn random_segment(seed: u64, index: u64) -> Segment {
    let mut rng = stream_rng(seed, index);
    let params: Vec<(f64, f64, bool)> = (0..3)
        .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.05..4.0), rng.random_bool(0.5)))
        .collect();
    let data = Array2::from_shape_fn((SEGMENT_LEN, 3), |(_, a)| {
        let (offset, scale, square) = params[a];
        let u: f64 = rng.random_range(-1.0..1.0);
        offset + scale * if square { u * u } else { u }
    });
    Segment {
        origin: SegmentOrigin {
            recording: RecordingKey {
                subject: SubjectId::new("S01"),
                style: StyleLabel::Bouncing,
                sensor: SensorLocation::Com,
            },
            start: index as usize * SEGMENT_LEN,
        },
        fs: SAMPLING_RATE_HZ,
        data,
    }
}
