//! File formats: scene and pipeline TOML, the raw waveform container, and
//! result JSON.
//!
//! Waveform container, all little-endian:
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | u64 | sensors `M` |
//! | 8 | u64 | samples per sensor `N` |
//! | 16 | f64 | sampling rate in Hz |
//! | 24 | f64 × M·N | samples, row-major (sensor by sensor) |

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::histogram::DEFAULT_ZETA;
use crate::pipeline::{AlgorithmId, PipelineConfig, PipelineOutput};
use crate::ptft::PtftConfig;
use crate::signal::{noise_power_for_snr, ArrayGeometry, LfmPulse, SampledWaveforms, Scene, Target};
use crate::solver::SolverSettings;

/// Header length of the waveform container in bytes.
pub const WAVEFORM_HEADER_LEN: usize = 24;

fn config_err(e: impl std::fmt::Display) -> DoaError {
    DoaError::Config(e.to_string())
}

/// One target as written in a scene file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Degrees, broadside 0.
    pub theta: f64,
    /// `|b|`.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// `∠b` in degrees.
    #[serde(default)]
    pub phase_deg: f64,
    /// Echo delay at the first sensor, seconds.
    #[serde(default)]
    pub tau: f64,
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn to_target(&self) -> Target {
        Target::new(
            self.theta,
            Complex64::from_polar(self.amplitude, self.phase_deg * PI / 180.0),
            self.tau,
        )
    }
}

/// Scene description. Noise is given either as an input SNR relative to the
/// first target (`snr_db`) or as a raw per-sample power (`noise_power`);
/// neither means noiseless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub array: ArrayGeometry,
    #[serde(default)]
    pub pulse: LfmPulse,
    pub targets: Vec<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(config_err)?;
        file.build()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Validated simulation scene.
    pub fn build(&self) -> Result<Scene> {
        if self.snr_db.is_some() && self.noise_power.is_some() {
            return Err(DoaError::Config("give snr_db or noise_power, not both".into()));
        }
        if self.targets.is_empty() {
            return Err(DoaError::Config("scene needs at least one target".into()));
        }
        let noise_power = match (self.snr_db, self.noise_power) {
            (Some(snr), None) => {
                if !snr.is_finite() {
                    return Err(DoaError::Config(format!("snr_db must be finite, got {snr}")));
                }
                noise_power_for_snr(snr, self.targets[0].amplitude).map_err(config_err)?
            }
            (None, Some(p)) => p,
            _ => 0.0,
        };
        let scene = Scene {
            geometry: self.array,
            pulse: self.pulse,
            targets: self.targets.iter().map(TargetSpec::to_target).collect(),
            noise_power,
            seed: self.seed,
        };
        scene.validate().map_err(config_err)?;
        Ok(scene)
    }
}

/// Processing settings as written in a spec file; all fields optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub ptft: PtftConfig,
    pub solver: SolverSettings,
    pub zeta: f64,
    pub grid_step: f64,
    pub music_dim: Option<usize>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            ptft: PtftConfig::default(),
            solver: SolverSettings::default(),
            zeta: DEFAULT_ZETA,
            grid_step: 0.1,
            music_dim: None,
        }
    }
}

impl PipelineSection {
    /// Pipeline configuration for `targets` sources of `scene`.
    pub fn config(&self, scene: &Scene, targets: usize) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::new(scene.geometry, scene.pulse, targets);
        cfg.ptft = self.ptft;
        cfg.solver = self.solver;
        cfg.zeta = self.zeta;
        cfg.grid_step = self.grid_step;
        cfg.music_dim = self.music_dim;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

/// Serializes an array record into the waveform container.
pub fn encode_waveforms(w: &SampledWaveforms) -> Vec<u8> {
    let (m, n) = w.samples.dim();
    let mut out = Vec::with_capacity(WAVEFORM_HEADER_LEN + 8 * m * n);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    for v in w.samples.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&bytes[at..at + 8]);
    u64::from_le_bytes(b)
}

/// Parses the waveform container. Rejects truncated or oversized payloads,
/// empty dimensions, a non-positive rate and non-finite samples.
pub fn decode_waveforms(bytes: &[u8]) -> Result<SampledWaveforms> {
    if bytes.len() < WAVEFORM_HEADER_LEN {
        return Err(DoaError::Config(format!(
            "waveform file holds {} bytes, header needs {WAVEFORM_HEADER_LEN}",
            bytes.len()
        )));
    }
    let m = read_u64(bytes, 0);
    let n = read_u64(bytes, 8);
    let rate = f64::from_bits(read_u64(bytes, 16));
    if m == 0 || n == 0 {
        return Err(DoaError::Config(format!("empty waveform dimensions {m}×{n}")));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(DoaError::Config(format!("sampling rate must be positive, got {rate}")));
    }
    let expected = m
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(WAVEFORM_HEADER_LEN as u64))
        .ok_or_else(|| DoaError::Config(format!("waveform dimensions {m}×{n} overflow")))?;
    if expected != bytes.len() as u64 {
        return Err(DoaError::Config(format!(
            "waveform {m}×{n} needs {expected} bytes, file holds {}",
            bytes.len()
        )));
    }
    let (m, n) = (m as usize, n as usize);
    let body = &bytes[WAVEFORM_HEADER_LEN..];
    let mut data = Vec::with_capacity(m * n);
    for chunk in body.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(DoaError::Config("waveform holds a non-finite sample".into()));
        }
        data.push(v);
    }
    let samples = Array2::from_shape_vec((m, n), data).map_err(|e| DoaError::Internal(e.to_string()))?;
    Ok(SampledWaveforms {
        samples,
        sample_rate: rate,
    })
}

pub fn write_waveforms(path: &Path, w: &SampledWaveforms) -> Result<()> {
    std::fs::write(path, encode_waveforms(w))?;
    Ok(())
}

pub fn read_waveforms(path: &Path) -> Result<SampledWaveforms> {
    decode_waveforms(&std::fs::read(path)?)
}

/// JSON written by a single estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub theta_deg: Vec<f64>,
    /// Coarse bin left edges (histogram scheme), empty otherwise.
    pub bins: Vec<f64>,
    /// Coarse bin counts aligned with `bins`.
    pub counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub unconverged_solves: usize,
}

impl EstimateRecord {
    pub fn from_output(out: &PipelineOutput, seed: u64) -> Self {
        let (bins, counts) = out
            .histogram
            .as_ref()
            .map(|h| (h.bins.clone(), h.counts.clone()))
            .unwrap_or_default();
        Self {
            algorithm: out.algorithm,
            seed,
            theta_deg: out.theta_deg.clone(),
            bins,
            counts,
            warning: out.warning.clone(),
            unconverged_solves: out.unconverged_solves,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| DoaError::Internal(e.to_string()))
    }
}

/// Writes serializable rows as CSV, optionally preceded by a `#` comment
/// line.
pub fn csv_string<T: Serialize>(rows: &[T], comment: Option<&str>) -> Result<String> {
    let mut out = Vec::new();
    if let Some(c) = comment {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| DoaError::Internal(e.to_string()))?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| DoaError::Internal(e.to_string()))
}
