//! On-disk dataset format: one CSV per recording plus a JSON manifest.
//!
//! CSV files start with the exact header `t,ax,ay,az`, followed by one row per
//! sample. Values are written with at most 9 significant digits so fixtures stay
//! readable and diff-able. The manifest lists every recording and is the
//! authority on which files belong to the dataset; the
//! `S{subject}_{style}_{sensor}.csv` naming is only a convention.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Dataset, ImuRecording, RecordingKey, SensorLocation, StyleLabel, SubjectId, SubjectMeta,
    ACCEL_UNIT, SAMPLING_RATE_HZ,
};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,ax,ay,az";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: SubjectId,
    pub style: String,
    pub sensor: String,
    pub path: PathBuf,
    pub fs: u32,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub unit: String,
    pub fs: u32,
    pub subjects: Vec<SubjectMeta>,
    pub recordings: Vec<ManifestEntry>,
}

/// Conventional file name for a recording.
pub fn recording_file_name(key: &RecordingKey) -> String {
    let subject = key.subject.as_str();
    let subject = subject.strip_prefix('S').unwrap_or(subject);
    format!("S{}_{}_{}.csv", subject, key.style, key.sensor)
}

/// Formats a value with at most 9 significant digits in plain decimal notation.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn write_imu_csv(recording: &ImuRecording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if recording.is_empty() {
        return Err(Error::Data(format!(
            "refusing to write empty recording {} to {}",
            recording.key,
            path.display()
        )));
    }
    if recording.fs == 0 {
        return Err(Error::Data("sampling rate must be positive".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut buf = String::with_capacity(64 * (recording.len() + 1));
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    let fs_hz = recording.fs as f64;
    for (i, row) in recording.samples.rows().into_iter().enumerate() {
        buf.push_str(&format_value(i as f64 / fs_hz));
        for v in row {
            buf.push(',');
            buf.push_str(&format_value(*v));
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads the samples of one recording CSV; `key` and `fs` come from the manifest.
pub fn read_imu_csv(path: impl AsRef<Path>, key: RecordingKey, fs: u32) -> Result<ImuRecording> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;

    let format_err = |line: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(format_err(1, e.to_string())),
        None => return Err(format_err(1, "empty file, expected header".into())),
    };
    let header_line = header.iter().collect::<Vec<_>>().join(",");
    if header_line != CSV_HEADER {
        return Err(format_err(
            1,
            format!("expected header {CSV_HEADER:?}, found {header_line:?}"),
        ));
    }

    let mut values = Vec::new();
    for (row_idx, record) in records.enumerate() {
        let line = row_idx as u64 + 2;
        let record = record.map_err(|e| format_err(line, e.to_string()))?;
        if record.len() != 4 {
            return Err(format_err(
                line,
                format!("expected 4 columns, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| {
                format_err(line, format!("non-numeric cell {cell:?} in column {col}"))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: non-finite value {cell:?} at line {line}",
                    path.display()
                )));
            }
            values.push(v);
        }
    }
    let n = values.len() / 3;
    let samples = Array2::from_shape_vec((n, 3), values).expect("three values per row");
    Ok(ImuRecording::new(key, fs, samples))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Loads a manifest and all recordings it lists, then aligns sensor groups.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    if manifest.unit != ACCEL_UNIT {
        return Err(Error::UnitMismatch {
            expected: ACCEL_UNIT.into(),
            found: manifest.unit,
        });
    }
    if manifest.fs != SAMPLING_RATE_HZ {
        return Err(Error::Schema(format!(
            "manifest fs {} != {SAMPLING_RATE_HZ}",
            manifest.fs
        )));
    }
    let root = path.parent().unwrap_or_else(|| Path::new("."));

    let mut keys = BTreeSet::new();
    let mut entries = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let key = RecordingKey {
            subject: entry.subject_id.clone(),
            style: entry.style.parse::<StyleLabel>()?,
            sensor: entry.sensor.parse::<SensorLocation>()?,
        };
        if !keys.insert(key.clone()) {
            return Err(Error::Schema(format!("duplicate recording key {key}")));
        }
        if entry.fs != manifest.fs {
            return Err(Error::Schema(format!(
                "{key}: fs {} differs from manifest fs {}; resampling is not supported",
                entry.fs, manifest.fs
            )));
        }
        entries.push((key, entry));
    }

    let missing: Vec<PathBuf> = entries
        .iter()
        .map(|(_, e)| root.join(&e.path))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }

    let mut recordings = Vec::with_capacity(entries.len());
    for (key, entry) in entries {
        let file = root.join(&entry.path);
        let rec = read_imu_csv(&file, key, entry.fs)?;
        if rec.len() != entry.n_samples {
            return Err(Error::Schema(format!(
                "{}: manifest says {} samples, file has {}",
                file.display(),
                entry.n_samples,
                rec.len()
            )));
        }
        recordings.push(rec);
    }
    align_groups(&mut recordings);

    Ok(Dataset {
        subjects: manifest.subjects,
        recordings,
    })
}

/// Truncates every (subject, style) sensor group to its shortest member.
pub fn align_groups(recordings: &mut [ImuRecording]) {
    let mut min_len: BTreeMap<(SubjectId, StyleLabel), usize> = BTreeMap::new();
    for r in recordings.iter() {
        let e = min_len
            .entry((r.key.subject.clone(), r.key.style))
            .or_insert(usize::MAX);
        *e = (*e).min(r.len());
    }
    for r in recordings.iter_mut() {
        let target = min_len[&(r.key.subject.clone(), r.key.style)];
        if r.len() > target {
            r.samples = r.samples.slice(ndarray::s![..target, ..]).to_owned();
        }
    }
}

/// Writes every recording plus `manifest.json` under `dir`; returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(dataset.recordings.len());
    for rec in &dataset.recordings {
        let name = recording_file_name(&rec.key);
        write_imu_csv(rec, dir.join(&name))?;
        entries.push(ManifestEntry {
            subject_id: rec.key.subject.clone(),
            style: rec.key.style.name().into(),
            sensor: rec.key.sensor.name().into(),
            path: PathBuf::from(name),
            fs: rec.fs,
            n_samples: rec.len(),
        });
    }
    let manifest = Manifest {
        unit: ACCEL_UNIT.into(),
        fs: SAMPLING_RATE_HZ,
        subjects: dataset.subjects.clone(),
        recordings: entries,
    };
    let path = dir.join("manifest.json");
    write_manifest(&manifest, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn key(sensor: SensorLocation) -> RecordingKey {
        RecordingKey {
            subject: SubjectId::new("S01"),
            style: StyleLabel::Bouncing,
            sensor,
        }
    }

    #[test]
    fn reads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "t,ax,ay,az\n0,0,0,1\n0.002,0.1,-0.2,1.0\n0.004,0,0,1\n").unwrap();
        let rec = read_imu_csv(&p, key(SensorLocation::Com), 500).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.samples.row(1).to_vec(), vec![0.1, -0.2, 1.0]);
    }

    #[test]
    fn bad_header_names_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "time,x,y,z\n0,0,0,1\n").unwrap();
        match read_imu_csv(&p, key(SensorLocation::Com), 500) {
            Err(Error::Format { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "t,ax,ay,az\n0,0,0,1\n0.002,abc,0,1\n").unwrap();
        match read_imu_csv(&p, key(SensorLocation::Com), 500) {
            Err(Error::Format { line: 3, message, .. }) => assert!(message.contains("abc")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "t,ax,ay,az\n0,NaN,0,1\n").unwrap();
        assert!(matches!(
            read_imu_csv(&p, key(SensorLocation::Com), 500),
            Err(Error::Data(_))
        ));
        fs::write(&p, "t,ax,ay,az\n0,inf,0,1\n").unwrap();
        assert!(matches!(
            read_imu_csv(&p, key(SensorLocation::Com), 500),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn empty_recording_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ImuRecording::new(key(SensorLocation::Com), 500, Array2::zeros((0, 3)));
        assert!(write_imu_csv(&rec, dir.path().join("e.csv")).is_err());
    }

    #[test]
    fn line_count_is_samples_plus_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("big.csv");
        let rec = ImuRecording::new(key(SensorLocation::Com), 500, Array2::zeros((150_000, 3)));
        write_imu_csv(&rec, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 150_001);
        assert!(text.starts_with("t,ax,ay,az\n0,0,0,0\n0.002,0,0,0\n"));
    }

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(0.1), "0.1");
        assert_eq!(format_value(-0.2), "-0.2");
        assert_eq!(format_value(1.0), "1");
        assert_eq!(format_value(1.0 / 3.0), "0.333333333");
        assert_eq!(format_value(123456.789012), "123456.789");
        assert_eq!(format_value(-0.0), "0");
    }

    #[test]
    fn writes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let rec = ImuRecording::new(
            key(SensorLocation::LFoot),
            500,
            array![[0.123456789123, -1.5, 2e-7], [3.0, 4.0, 5.0]],
        );
        write_imu_csv(&rec, dir.path().join("a.csv")).unwrap();
        write_imu_csv(&rec, dir.path().join("b.csv")).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a.csv")).unwrap(),
            fs::read(dir.path().join("b.csv")).unwrap()
        );
    }

    fn small_dataset(lengths: [usize; 5]) -> Dataset {
        let mut d = Dataset {
            subjects: vec![SubjectMeta::bare("S01")],
            recordings: vec![],
        };
        for (sensor, len) in SensorLocation::ALL.into_iter().zip(lengths) {
            let samples = Array2::from_shape_fn((len, 3), |(i, j)| (i * 3 + j) as f64 * 0.001);
            d.recordings.push(ImuRecording::new(key(sensor), 500, samples));
        }
        d
    }

    #[test]
    fn load_truncates_to_group_minimum() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset([1000, 1000, 998, 1000, 1000]);
        let manifest = write_dataset(&d, dir.path()).unwrap();
        let loaded = load_manifest(&manifest).unwrap();
        assert_eq!(loaded.recordings.len(), 5);
        assert!(loaded.recordings.iter().all(|r| r.len() == 998));
        assert!(crate::domain::validate_dataset(&loaded).is_empty());
    }

    #[test]
    fn unit_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset([10; 5]);
        let path = write_dataset(&d, dir.path()).unwrap();
        let mut m = read_manifest(&path).unwrap();
        m.unit = "m/s2".into();
        write_manifest(&m, &path).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::UnitMismatch { .. })));
    }

    #[test]
    fn missing_files_all_listed() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset([10; 5]);
        let path = write_dataset(&d, dir.path()).unwrap();
        fs::remove_file(dir.path().join("S01_bouncing_com.csv")).unwrap();
        fs::remove_file(dir.path().join("S01_bouncing_rfoot.csv")).unwrap();
        match load_manifest(&path) {
            Err(Error::MissingFiles(paths)) => assert_eq!(paths.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset([10; 5]);
        let path = write_dataset(&d, dir.path()).unwrap();
        let mut m = read_manifest(&path).unwrap();
        let dup = m.recordings[0].clone();
        m.recordings.push(dup);
        write_manifest(&m, &path).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Schema(_))));
    }
}
