//! Deterministic generator of five-sensor running accelerations.
//!
//! Each axis of each sensor is a sum of four stride-frequency harmonics, plus a
//! train of damped foot-strike transients and white noise:
//!
//! ```text
//! a(t) = Σ_h A[h]·sin(2π·h·f·t + φ[h]) + dc + Σ_k c·I·exp(−(t−t_k)/τ)·sin(2π·f_imp·(t−t_k)) + σ·n(t)
//! ```
//!
//! Steps alternate left/right at `t_k = k / (2f)`. A transient reaches a sensor on
//! the stepping side at full strength, the opposite side at 0.3× and the
//! lower-back unit at 0.6×, and is cut off at the next step.
//!
//! Styles are expressed as multiplicative modifiers over a neutral gait. Every
//! subject also carries a multiplier `ε ∈ [1 − p, 1 + p]` per (style, parameter),
//! so the same named style looks slightly different on every subject; `p` is the
//! personalization level.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Dataset, ImuRecording, RecordingKey, SensorLocation, Sex, Side, StyleLabel, SubjectId,
    SubjectMeta, N_SENSORS, N_STYLES, SAMPLING_RATE_HZ,
};
use crate::error::{Error, Result};
use crate::ingest;
use crate::rng::{stream_id, stream_rng};

pub const N_HARMONICS: usize = 4;
/// Axis order of every sample: fore-aft, lateral, vertical.
pub const FORE_AFT: usize = 0;
pub const LATERAL: usize = 1;
pub const VERTICAL: usize = 2;

const SAME_SIDE_COUPLING: f64 = 1.0;
const OPPOSITE_SIDE_COUPLING: f64 = 0.3;
const COM_COUPLING: f64 = 0.6;
/// Share of the vertical impact that appears (as braking) on the fore-aft axis.
const FORE_AFT_IMPACT_SHARE: f64 = -0.4;

const SUBJECT_STREAM: u8 = 1;
const RECORDING_STREAM: u8 = 2;

/// Style parameters a subject personalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    VerticalGain,
    ForeAftGain,
    LateralGain,
    ImpactGain,
    ImpactDecay,
    ImpactRing,
    StrideFreq,
    LateralOffset,
    LateralPhase,
}

impl Knob {
    pub const ALL: [Knob; 9] = [
        Knob::VerticalGain,
        Knob::ForeAftGain,
        Knob::LateralGain,
        Knob::ImpactGain,
        Knob::ImpactDecay,
        Knob::ImpactRing,
        Knob::StrideFreq,
        Knob::LateralOffset,
        Knob::LateralPhase,
    ];
    pub const COUNT: usize = 9;
}

/// Neutral gait amplitudes, indexed `[feet, shanks, com]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeutralBaseline {
    pub vertical: [f64; 3],
    pub fore_aft: [f64; 3],
    pub lateral: [f64; 3],
    pub impact: [f64; 3],
    pub decay_s: f64,
    pub ring_hz: f64,
}

impl Default for NeutralBaseline {
    fn default() -> Self {
        NeutralBaseline {
            vertical: [1.0, 0.7, 0.4],
            fore_aft: [0.5, 0.4, 0.2],
            lateral: [0.3, 0.25, 0.15],
            impact: [3.0, 2.0, 0.8],
            decay_s: 0.03,
            ring_hz: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleModifiers {
    pub egg_beater_lateral: f64,
    pub egg_beater_phase: f64,
    pub bouncing_vertical: f64,
    pub heel_strike_impact: f64,
    pub heel_strike_decay: f64,
    pub heel_strike_ring: f64,
    pub toe_strike_impact: f64,
    pub toe_strike_decay: f64,
    pub toe_strike_fore_aft: f64,
    pub long_stride_freq: f64,
    pub long_stride_fore_aft: f64,
    pub short_stride_freq: f64,
    pub short_stride_fore_aft: f64,
    /// Lateral DC on the feet, positive on the left foot.
    pub wide_stance_offset: f64,
    pub wide_stance_com_lateral: f64,
    pub narrow_stance_lateral: f64,
    /// Lateral DC on the feet, applied with the opposite sign to wide stance.
    pub narrow_stance_offset: f64,
}

impl Default for StyleModifiers {
    fn default() -> Self {
        StyleModifiers {
            egg_beater_lateral: 2.5,
            egg_beater_phase: PI / 2.0,
            bouncing_vertical: 1.8,
            heel_strike_impact: 1.6,
            heel_strike_decay: 0.5,
            heel_strike_ring: 1.5,
            toe_strike_impact: 0.6,
            toe_strike_decay: 1.5,
            toe_strike_fore_aft: 1.2,
            long_stride_freq: 0.8,
            long_stride_fore_aft: 1.4,
            short_stride_freq: 1.25,
            short_stride_fore_aft: 0.7,
            wide_stance_offset: 0.2,
            wide_stance_com_lateral: 1.5,
            narrow_stance_lateral: 0.5,
            narrow_stance_offset: 0.05,
        }
    }
}

/// Uniform ranges subjects are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectRanges {
    pub stride_freq_hz: (f64, f64),
    pub amplitude_scale: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl Default for SubjectRanges {
    fn default() -> Self {
        SubjectRanges {
            stride_freq_hz: (1.2, 1.6),
            amplitude_scale: (0.8, 1.2),
            noise_sigma: (0.05, 0.15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub fs: u32,
    pub personalization: f64,
    pub seed: u64,
    pub baseline: NeutralBaseline,
    pub modifiers: StyleModifiers,
    pub ranges: SubjectRanges,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_subjects: 10,
            duration_s: 300.0,
            fs: SAMPLING_RATE_HZ,
            personalization: 0.15,
            seed: 42,
            baseline: NeutralBaseline::default(),
            modifiers: StyleModifiers::default(),
            ranges: SubjectRanges::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn n_samples(&self) -> Result<usize> {
        let n = self.duration_s * self.fs as f64;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "duration {} s at {} Hz is not an integral sample count",
                self.duration_s, self.fs
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_samples()?;
        if self.n_subjects == 0 {
            return Err(Error::Parameter("n_subjects must be at least 1".into()));
        }
        if !(self.personalization >= 0.0 && self.personalization < 1.0) {
            return Err(Error::Parameter(format!(
                "personalization level must lie in [0, 1), got {}",
                self.personalization
            )));
        }
        let positive = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo;
        if !positive(self.ranges.stride_freq_hz) || !positive(self.ranges.amplitude_scale) {
            return Err(Error::Parameter("subject ranges must be positive".into()));
        }
        if !(self.ranges.noise_sigma.0 >= 0.0 && self.ranges.noise_sigma.1 >= self.ranges.noise_sigma.0) {
            return Err(Error::Parameter("noise range must be non-negative".into()));
        }
        if !(self.baseline.decay_s > 0.0 && self.baseline.ring_hz > 0.0) {
            return Err(Error::Parameter("impact decay and ring frequency must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: SubjectId,
    pub index: usize,
    pub stride_freq_hz: f64,
    pub amplitude_scale: f64,
    pub noise_sigma: f64,
    /// `ε[style][knob]`.
    pub personalization: [[f64; Knob::COUNT]; N_STYLES],
    /// Subject-specific harmonic phases per axis.
    pub phases: [[f64; N_HARMONICS]; 3],
    pub seed: u64,
}

impl SubjectProfile {
    pub fn epsilon(&self, style: StyleLabel, knob: Knob) -> f64 {
        self.personalization[style.index()][knob as usize]
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn subject_id(index: usize) -> SubjectId {
    SubjectId::new(format!("S{:02}", index + 1))
}

pub fn make_subject(index: usize, cfg: &GeneratorConfig) -> SubjectProfile {
    let mut rng = stream_rng(cfg.seed, stream_id(SUBJECT_STREAM, &[index as u64]));
    let stride_freq_hz = uniform(&mut rng, cfg.ranges.stride_freq_hz);
    let amplitude_scale = uniform(&mut rng, cfg.ranges.amplitude_scale);
    let noise_sigma = uniform(&mut rng, cfg.ranges.noise_sigma);
    let p = cfg.personalization;
    let mut personalization = [[1.0; Knob::COUNT]; N_STYLES];
    for row in personalization.iter_mut() {
        for eps in row.iter_mut() {
            *eps = 1.0 + p * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    let mut phases = [[0.0; N_HARMONICS]; 3];
    for axis in phases.iter_mut() {
        for phi in axis.iter_mut() {
            *phi = 2.0 * PI * rng.random::<f64>();
        }
    }
    SubjectProfile {
        subject_id: subject_id(index),
        index,
        stride_freq_hz,
        amplitude_scale,
        noise_sigma,
        personalization,
        phases,
        seed: rng.random(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisParams {
    pub amplitudes: [f64; N_HARMONICS],
    pub phases: [f64; N_HARMONICS],
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Indexed fore-aft, lateral, vertical.
    pub axes: [AxisParams; 3],
    pub impact: f64,
    pub decay_s: f64,
    pub ring_hz: f64,
}

impl SensorParams {
    /// Upper bound of the noise-free signal on one axis.
    pub fn axis_bound(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        let share = match axis {
            VERTICAL => 1.0,
            FORE_AFT => FORE_AFT_IMPACT_SHARE.abs(),
            _ => 0.0,
        };
        a.amplitudes.iter().map(|v| v.abs()).sum::<f64>() + a.offset.abs() + share * self.impact
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    /// `None` for the neutral gait.
    pub style: Option<StyleLabel>,
    pub freq_multiplier: f64,
    pub stride_freq_hz: f64,
    pub sensors: [SensorParams; N_SENSORS],
}

/// Multipliers (and additive lateral terms) a style applies to the neutral gait.
#[derive(Debug, Clone, Copy)]
struct StyleGains {
    vertical: f64,
    fore_aft: f64,
    lateral_limbs: f64,
    lateral_com: f64,
    impact: f64,
    decay: f64,
    ring: f64,
    freq: f64,
    /// Lateral DC on the left foot; mirrored on the right foot.
    foot_offset: f64,
    /// Extra lateral phase on feet and shanks.
    limb_phase: f64,
}

impl StyleGains {
    const NEUTRAL: StyleGains = StyleGains {
        vertical: 1.0,
        fore_aft: 1.0,
        lateral_limbs: 1.0,
        lateral_com: 1.0,
        impact: 1.0,
        decay: 1.0,
        ring: 1.0,
        freq: 1.0,
        foot_offset: 0.0,
        limb_phase: 0.0,
    };
}

fn style_gains(style: StyleLabel, m: &StyleModifiers) -> StyleGains {
    let mut g = StyleGains::NEUTRAL;
    match style {
        StyleLabel::EggBeater => {
            g.lateral_limbs = m.egg_beater_lateral;
            g.lateral_com = m.egg_beater_lateral;
            g.limb_phase = m.egg_beater_phase;
        }
        StyleLabel::Bouncing => g.vertical = m.bouncing_vertical,
        StyleLabel::HeelStrike => {
            g.impact = m.heel_strike_impact;
            g.decay = m.heel_strike_decay;
            g.ring = m.heel_strike_ring;
        }
        StyleLabel::ToeStrike => {
            g.impact = m.toe_strike_impact;
            g.decay = m.toe_strike_decay;
            g.fore_aft = m.toe_strike_fore_aft;
        }
        StyleLabel::LongStride => {
            g.freq = m.long_stride_freq;
            g.fore_aft = m.long_stride_fore_aft;
        }
        StyleLabel::ShortStride => {
            g.freq = m.short_stride_freq;
            g.fore_aft = m.short_stride_fore_aft;
        }
        StyleLabel::WideStance => {
            g.foot_offset = m.wide_stance_offset;
            g.lateral_com = m.wide_stance_com_lateral;
        }
        StyleLabel::NarrowStance => {
            g.lateral_limbs = m.narrow_stance_lateral;
            g.lateral_com = m.narrow_stance_lateral;
            g.foot_offset = -m.narrow_stance_offset;
        }
    }
    g
}

fn personalize(g: StyleGains, subject: &SubjectProfile, style: StyleLabel) -> StyleGains {
    let e = |k| subject.epsilon(style, k);
    StyleGains {
        vertical: g.vertical * e(Knob::VerticalGain),
        fore_aft: g.fore_aft * e(Knob::ForeAftGain),
        lateral_limbs: g.lateral_limbs * e(Knob::LateralGain),
        lateral_com: g.lateral_com * e(Knob::LateralGain),
        impact: g.impact * e(Knob::ImpactGain),
        decay: g.decay * e(Knob::ImpactDecay),
        ring: g.ring * e(Knob::ImpactRing),
        freq: g.freq * e(Knob::StrideFreq),
        foot_offset: g.foot_offset * e(Knob::LateralOffset),
        limb_phase: g.limb_phase * e(Knob::LateralPhase),
    }
}

fn location_class(sensor: SensorLocation) -> usize {
    match sensor {
        SensorLocation::LFoot | SensorLocation::RFoot => 0,
        SensorLocation::LShank | SensorLocation::RShank => 1,
        SensorLocation::Com => 2,
    }
}

fn build_params(
    style: Option<StyleLabel>,
    g: StyleGains,
    subject: &SubjectProfile,
    cfg: &GeneratorConfig,
) -> StyleParams {
    let b = &cfg.baseline;
    let alpha = subject.amplitude_scale;
    let sensors = SensorLocation::ALL.map(|sensor| {
        let class = location_class(sensor);
        let side = sensor.side();
        let lateral_gain = if sensor == SensorLocation::Com {
            g.lateral_com
        } else {
            g.lateral_limbs
        };
        let base = [
            b.fore_aft[class] * g.fore_aft,
            b.lateral[class] * lateral_gain,
            b.vertical[class] * g.vertical,
        ];
        let axes = std::array::from_fn(|axis| {
            let amplitudes = std::array::from_fn(|h| alpha * base[axis] / (h + 1) as f64);
            let phases = std::array::from_fn(|h| {
                let mut phi = subject.phases[axis][h];
                // right limbs run half a stride behind the left
                if side == Side::Right {
                    phi += (h + 1) as f64 * PI;
                }
                if axis == LATERAL && side != Side::Centre {
                    phi += g.limb_phase;
                }
                phi.rem_euclid(2.0 * PI)
            });
            let offset = if axis == LATERAL && sensor.is_foot() {
                match side {
                    Side::Left => g.foot_offset,
                    _ => -g.foot_offset,
                }
            } else {
                0.0
            };
            AxisParams {
                amplitudes,
                phases,
                offset,
            }
        });
        SensorParams {
            axes,
            impact: alpha * b.impact[class] * g.impact,
            decay_s: b.decay_s * g.decay,
            ring_hz: b.ring_hz * g.ring,
        }
    });
    StyleParams {
        style,
        freq_multiplier: g.freq,
        stride_freq_hz: subject.stride_freq_hz * g.freq,
        sensors,
    }
}

/// The subject's gait with no style modifier applied.
pub fn neutral_params(subject: &SubjectProfile, cfg: &GeneratorConfig) -> StyleParams {
    build_params(None, StyleGains::NEUTRAL, subject, cfg)
}

pub fn style_params(style: StyleLabel, subject: &SubjectProfile, cfg: &GeneratorConfig) -> StyleParams {
    let g = personalize(style_gains(style, &cfg.modifiers), subject, style);
    build_params(Some(style), g, subject, cfg)
}

/// Noise-free signal for one sensor, `t0` being the gait phase at sample 0.
pub fn clean_signal(params: &StyleParams, sensor: SensorLocation, n: usize, fs: u32, t0: f64) -> Array2<f64> {
    let sp = &params.sensors[sensor.index()];
    let f = params.stride_freq_hz;
    let dt = 1.0 / fs as f64;
    let mut out = Array2::zeros((n, 3));
    for axis in 0..3 {
        let ax = &sp.axes[axis];
        let mut col = out.column_mut(axis);
        for (i, v) in col.iter_mut().enumerate() {
            let t = t0 + i as f64 * dt;
            let mut acc = ax.offset;
            for h in 0..N_HARMONICS {
                acc += ax.amplitudes[h] * (2.0 * PI * (h + 1) as f64 * f * t + ax.phases[h]).sin();
            }
            *v = acc;
        }
    }

    // Steps at t_k = k / (2f) in gait time; even k is a left step.
    let step = 1.0 / (2.0 * f);
    let first = (t0 / step).ceil() as i64;
    let end_t = t0 + n as f64 * dt;
    let mut k = first;
    loop {
        let tk = k as f64 * step;
        if tk >= end_t {
            break;
        }
        let step_side = if k.rem_euclid(2) == 0 { Side::Left } else { Side::Right };
        let coupling = match sensor.side() {
            Side::Centre => COM_COUPLING,
            s if s == step_side => SAME_SIDE_COUPLING,
            _ => OPPOSITE_SIDE_COUPLING,
        };
        let amp = coupling * sp.impact;
        let start = ((tk - t0) / dt).ceil().max(0.0) as usize;
        let stop = (((tk + step - t0) / dt).ceil().max(0.0) as usize).min(n);
        for i in start..stop {
            let tau = t0 + i as f64 * dt - tk;
            if tau < 0.0 || tau >= step {
                continue;
            }
            let pulse = amp * (-tau / sp.decay_s).exp() * (2.0 * PI * sp.ring_hz * tau).sin();
            out[[i, VERTICAL]] += pulse;
            out[[i, FORE_AFT]] += FORE_AFT_IMPACT_SHARE * pulse;
        }
        k += 1;
    }
    out
}

pub fn generate_recording(
    subject: &SubjectProfile,
    style: StyleLabel,
    sensor: SensorLocation,
    cfg: &GeneratorConfig,
) -> Result<ImuRecording> {
    let n = cfg.n_samples()?;
    let params = style_params(style, subject, cfg);
    // The gait phase is shared by the five sensors of one session.
    let mut session_rng = stream_rng(
        subject.seed,
        stream_id(RECORDING_STREAM, &[style.index() as u64]),
    );
    let t0 = session_rng.random::<f64>() / params.stride_freq_hz;
    let mut samples = clean_signal(&params, sensor, n, cfg.fs, t0);
    let mut noise_rng = stream_rng(
        subject.seed,
        stream_id(RECORDING_STREAM, &[style.index() as u64, sensor.index() as u64]),
    );
    for v in samples.iter_mut() {
        let z: f64 = noise_rng.sample(StandardNormal);
        *v += subject.noise_sigma * z;
    }
    Ok(ImuRecording::new(
        RecordingKey {
            subject: subject.subject_id.clone(),
            style,
            sensor,
        },
        cfg.fs,
        samples,
    ))
}

fn subject_meta(profile: &SubjectProfile, cfg: &GeneratorConfig) -> SubjectMeta {
    let mut rng = stream_rng(cfg.seed, stream_id(SUBJECT_STREAM, &[profile.index as u64, 1]));
    SubjectMeta {
        subject_id: profile.subject_id.clone(),
        height_m: Some(uniform(&mut rng, (1.55, 1.90))),
        weight_kg: Some(uniform(&mut rng, (50.0, 85.0))),
        age_years: Some(20.0 + (rng.random::<f64>() * 7.0).floor()),
        sex: Some(if profile.index % 2 == 0 { Sex::Female } else { Sex::Male }),
    }
}

pub fn subjects(cfg: &GeneratorConfig) -> Vec<SubjectProfile> {
    (0..cfg.n_subjects).map(|i| make_subject(i, cfg)).collect()
}

/// Builds the whole dataset in memory.
pub fn generate_in_memory(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let profiles = subjects(cfg);
    let mut recordings = Vec::with_capacity(profiles.len() * N_STYLES * N_SENSORS);
    for p in &profiles {
        for style in StyleLabel::ALL {
            for sensor in SensorLocation::ALL {
                recordings.push(generate_recording(p, style, sensor, cfg)?);
            }
        }
    }
    Ok(Dataset {
        subjects: profiles.iter().map(|p| subject_meta(p, cfg)).collect(),
        recordings,
    })
}

/// Generates the dataset and writes CSVs plus `manifest.json` to `out_dir`.
pub fn generate_dataset(cfg: &GeneratorConfig, out_dir: impl AsRef<Path>, overwrite: bool) -> Result<(Dataset, PathBuf)> {
    let out_dir = out_dir.as_ref();
    if out_dir.exists() {
        let non_empty = fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            return Err(Error::OutputExists(out_dir.to_path_buf()));
        }
    }
    let dataset = generate_in_memory(cfg)?;
    let manifest = ingest::write_dataset(&dataset, out_dir)?;
    let cfg_path = out_dir.join("generator.json");
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Error::json(&cfg_path, e))?;
    fs::write(&cfg_path, text + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    Ok((dataset, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: f64) -> GeneratorConfig {
        GeneratorConfig {
            personalization: p,
            duration_s: 20.0,
            ..Default::default()
        }
    }

    #[test]
    fn subjects_are_deterministic_and_distinct() {
        let c = cfg(0.15);
        assert_eq!(make_subject(3, &c), make_subject(3, &c));
        let all = subjects(&GeneratorConfig::default());
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
                assert_ne!(all[i].stride_freq_hz, all[j].stride_freq_hz);
            }
        }
        let s = &all[0];
        assert!((1.2..1.6).contains(&s.stride_freq_hz));
        assert!((0.8..1.2).contains(&s.amplitude_scale));
        assert!((0.05..0.15).contains(&s.noise_sigma));
    }

    #[test]
    fn no_personalization_means_unit_epsilon() {
        let s = make_subject(0, &cfg(0.0));
        assert!(s.personalization.iter().flatten().all(|&e| e == 1.0));
        let s = make_subject(0, &cfg(0.15));
        assert!(s.personalization.iter().flatten().all(|&e| (0.85..=1.15).contains(&e)));
        assert!(s.personalization.iter().flatten().any(|&e| e != 1.0));
    }

    #[test]
    fn bouncing_scales_vertical_fundamental() {
        let c = cfg(0.0);
        let s = make_subject(2, &c);
        let neutral = neutral_params(&s, &c);
        let bouncing = style_params(StyleLabel::Bouncing, &s, &c);
        for sensor in SensorLocation::ALL {
            let i = sensor.index();
            let ratio = bouncing.sensors[i].axes[VERTICAL].amplitudes[0]
                / neutral.sensors[i].axes[VERTICAL].amplitudes[0];
            assert!((ratio - 1.8).abs() < 1e-12, "{ratio}");
            assert_eq!(
                bouncing.sensors[i].axes[LATERAL],
                neutral.sensors[i].axes[LATERAL]
            );
        }
    }

    #[test]
    fn stride_styles_scale_frequency() {
        let c = cfg(0.0);
        let s = make_subject(1, &c);
        let long = style_params(StyleLabel::LongStride, &s, &c);
        let short = style_params(StyleLabel::ShortStride, &s, &c);
        assert!((long.stride_freq_hz / s.stride_freq_hz - 0.8).abs() < 1e-12);
        assert!((short.stride_freq_hz / s.stride_freq_hz - 1.25).abs() < 1e-12);
    }

    #[test]
    fn wide_stance_offsets_are_mirrored() {
        let c = cfg(0.0);
        let s = make_subject(0, &c);
        let wide = style_params(StyleLabel::WideStance, &s, &c);
        let dc = |sensor: SensorLocation| wide.sensors[sensor.index()].axes[LATERAL].offset;
        assert_eq!(dc(SensorLocation::LFoot), 0.2);
        assert_eq!(dc(SensorLocation::RFoot), -0.2);
        assert_eq!(dc(SensorLocation::Com), 0.0);
        let narrow = style_params(StyleLabel::NarrowStance, &s, &c);
        assert_eq!(narrow.sensors[SensorLocation::LFoot.index()].axes[LATERAL].offset, -0.05);
    }

    #[test]
    fn recordings_are_deterministic_and_sized() {
        let c = cfg(0.15);
        let s = make_subject(0, &c);
        let a = generate_recording(&s, StyleLabel::HeelStrike, SensorLocation::RShank, &c).unwrap();
        let b = generate_recording(&s, StyleLabel::HeelStrike, SensorLocation::RShank, &c).unwrap();
        assert_eq!(a.len(), 10_000);
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn default_duration_gives_150000_samples() {
        assert_eq!(GeneratorConfig::default().n_samples().unwrap(), 150_000);
        let bad = GeneratorConfig {
            duration_s: 0.0001,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn clean_signal_respects_bound() {
        let c = cfg(0.15);
        for idx in 0..3 {
            let s = make_subject(idx, &c);
            for style in StyleLabel::ALL {
                let p = style_params(style, &s, &c);
                for sensor in SensorLocation::ALL {
                    let x = clean_signal(&p, sensor, 5000, 500, 0.123);
                    for axis in 0..3 {
                        let bound = p.sensors[sensor.index()].axis_bound(axis);
                        let peak = x.column(axis).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                        assert!(peak <= bound + 1e-12, "{style} {sensor} axis {axis}: {peak} > {bound}");
                    }
                }
            }
        }
    }

    #[test]
    fn bouncing_louder_than_short_stride_vertically() {
        let c = cfg(0.0);
        let s = make_subject(4, &c);
        let rms = |style| {
            let r = generate_recording(&s, style, SensorLocation::Com, &c).unwrap();
            let col = r.samples.column(VERTICAL);
            (col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64).sqrt()
        };
        assert!(rms(StyleLabel::Bouncing) > rms(StyleLabel::ShortStride));
    }

    #[test]
    fn existing_output_needs_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("junk.txt"), "x").unwrap();
        let c = GeneratorConfig {
            n_subjects: 1,
            duration_s: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            generate_dataset(&c, dir.path(), false),
            Err(Error::OutputExists(_))
        ));
        let (d, manifest) = generate_dataset(&c, dir.path(), true).unwrap();
        assert_eq!(d.recordings.len(), 40);
        assert!(manifest.is_file());
    }
}
