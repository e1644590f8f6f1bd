//! Fixed-size analysis windows and their sub-windows.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_dataset, Dataset, ImuRecording, RecordingKey, SensorLocation, StyleLabel, SubjectId,
    N_SENSORS,
};
use crate::error::{Error, Result};

pub const WINDOW_S: f64 = 10.0;
pub const OVERLAP: f64 = 0.5;
/// 10 s at 500 Hz.
pub const SEGMENT_LEN: usize = 5000;
pub const N_SUBSEGMENTS: usize = 8;
/// 1.25 s at 500 Hz.
pub const SUBSEGMENT_LEN: usize = SEGMENT_LEN / N_SUBSEGMENTS;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentOrigin {
    pub recording: RecordingKey,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub origin: SegmentOrigin,
    pub fs: u32,
    /// `window × 3` acceleration in g.
    pub data: Array2<f64>,
}

impl Segment {
    pub fn subject(&self) -> &SubjectId {
        &self.origin.recording.subject
    }

    pub fn style(&self) -> StyleLabel {
        self.origin.recording.style
    }

    pub fn sensor(&self) -> SensorLocation {
        self.origin.recording.sensor
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SubSegment<'a> {
    pub position: usize,
    pub data: ArrayView2<'a, f64>,
}

/// Sample counts for a window length and overlap at a given rate.
pub fn window_geometry(fs: u32, window_s: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Parameter(format!(
            "overlap must lie in [0, 1), got {overlap}"
        )));
    }
    let w = window_s * fs as f64;
    if !(w >= 1.0) || (w - w.round()).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "window of {window_s} s at {fs} Hz is not an integral sample count"
        )));
    }
    let w = w.round() as usize;
    let hop = ((w as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    Ok((w, hop))
}

/// Splits a recording into overlapping windows, dropping the trailing partial one.
pub fn segment(recording: &ImuRecording, window_s: f64, overlap: f64) -> Result<Vec<Segment>> {
    let (w, hop) = window_geometry(recording.fs, window_s, overlap)?;
    let n = recording.len();
    if n < w {
        return Ok(Vec::new());
    }
    let count = (n - w) / hop + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            Segment {
                origin: SegmentOrigin {
                    recording: recording.key.clone(),
                    start,
                },
                fs: recording.fs,
                data: recording.samples.slice(s![start..start + w, ..]).to_owned(),
            }
        })
        .collect())
}

/// The eight contiguous, non-overlapping sub-windows of a segment.
pub fn subsegment(seg: &Segment) -> Result<Vec<SubSegment<'_>>> {
    if seg.len() != SEGMENT_LEN {
        return Err(Error::Contract(format!(
            "sub-segmentation needs {SEGMENT_LEN} samples, segment has {}",
            seg.len()
        )));
    }
    Ok((0..N_SUBSEGMENTS)
        .map(|position| SubSegment {
            position,
            data: seg
                .data
                .slice(s![position * SUBSEGMENT_LEN..(position + 1) * SUBSEGMENT_LEN, ..]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey {
    pub subject: SubjectId,
    pub style: StyleLabel,
    pub index: usize,
}

/// Every segment of a dataset, index-aligned across the five sensors.
///
/// Row `i` of every sensor column covers the same time span of the same
/// (subject, style) session, so per-sensor scores can be fused row by row.
#[derive(Debug, Clone)]
pub struct SegmentTable {
    pub keys: Vec<SegmentKey>,
    by_sensor: Vec<Vec<Segment>>,
}

impl SegmentTable {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn sensor(&self, sensor: SensorLocation) -> &[Segment] {
        &self.by_sensor[sensor.index()]
    }

    pub fn label(&self, row: usize) -> usize {
        self.keys[row].style.index()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.keys.iter().map(|k| k.style.index()).collect()
    }

    pub fn subjects(&self) -> Vec<SubjectId> {
        let mut ids: Vec<_> = self.keys.iter().map(|k| k.subject.clone()).collect();
        ids.dedup();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Rows belonging to any of the given subjects.
    pub fn rows_of_subjects(&self, subjects: &[SubjectId]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| subjects.contains(&self.keys[i].subject))
            .collect()
    }
}

pub fn segment_dataset(d: &Dataset, window_s: f64, overlap: f64) -> Result<SegmentTable> {
    validate_dataset(d).into_result()?;

    let mut groups: BTreeMap<(SubjectId, StyleLabel), [Option<&ImuRecording>; N_SENSORS]> =
        BTreeMap::new();
    for rec in &d.recordings {
        groups
            .entry((rec.key.subject.clone(), rec.key.style))
            .or_default()[rec.key.sensor.index()] = Some(rec);
    }

    let mut keys = Vec::new();
    let mut by_sensor: Vec<Vec<Segment>> = vec![Vec::new(); N_SENSORS];
    for ((subject, style), recs) in groups {
        let mut count = None;
        for (slot, rec) in recs.iter().enumerate() {
            let rec = rec.expect("validated dataset has all sensors");
            let segs = segment(rec, window_s, overlap)?;
            debug_assert!(count.is_none_or(|c| c == segs.len()));
            count = Some(segs.len());
            by_sensor[slot].extend(segs);
        }
        for index in 0..count.unwrap_or(0) {
            keys.push(SegmentKey {
                subject: subject.clone(),
                style,
                index,
            });
        }
    }
    Ok(SegmentTable { keys, by_sensor })
}
