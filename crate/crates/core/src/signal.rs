//! Array signal model: LFM pulse generation, array reception and spectra.
//!
//! Sensor `m` (0-based) of a uniform linear array sees a far-field wavefront
//! from angle `θ` with delay `m·d·sin θ / c` relative to the first sensor.
//! Reception is synthesized in the frequency domain: every positive DFT bin of
//! sensor `m` is `Σ_k b_k S(f) e^{-j2πf(τ_k + τ_m(θ_k))}` exactly, where `S`
//! is the DFT of the sampled pulse. Delays therefore act circularly on the
//! record, which keeps the model exact even when the pulse fills the whole
//! record.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{ensure_param, Result};

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayGeometry {
    /// Number of sensors `M`.
    pub sensors: usize,
    /// Inter-sensor spacing `d` in meters.
    pub spacing: f64,
    /// Propagation speed `c` in m/s.
    pub speed: f64,
}

/// 16 sensors, 3.75 m apart, in water (1500 m/s).
impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            sensors: 16,
            spacing: 3.75,
            speed: 1500.0,
        }
    }
}

impl ArrayGeometry {
    pub fn new(sensors: usize, spacing: f64, speed: f64) -> Result<Self> {
        let g = Self {
            sensors,
            spacing,
            speed,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.sensors >= 2, "array needs at least 2 sensors, got {}", self.sensors);
        ensure_param!(
            self.spacing.is_finite() && self.spacing > 0.0,
            "sensor spacing must be positive, got {}",
            self.spacing
        );
        ensure_param!(
            self.speed.is_finite() && self.speed > 0.0,
            "propagation speed must be positive, got {}",
            self.speed
        );
        Ok(())
    }

    /// Propagation delay of sensor `m` (0-based) relative to sensor 0.
    #[inline]
    pub fn delay(&self, m: usize, theta_deg: f64) -> f64 {
        m as f64 * self.spacing * theta_deg.to_radians().sin() / self.speed
    }

    /// Largest difference frequency `c/(2d)` that keeps the array unambiguous.
    pub fn max_unambiguous_frequency(&self) -> f64 {
        self.speed / (2.0 * self.spacing)
    }

    /// Array aperture delay `(M-1)d/c`.
    pub fn max_delay(&self) -> f64 {
        (self.sensors - 1) as f64 * self.spacing / self.speed
    }
}

/// Linear frequency modulated pulse and the sampling of its record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfmPulse {
    /// Start frequency `f_L` in Hz.
    pub f_low: f64,
    /// End frequency `f_H` in Hz.
    pub f_high: f64,
    /// Pulse duration `T` in seconds.
    pub duration: f64,
    /// Record length `T_all` in seconds.
    pub record: f64,
    /// Sampling rate in Hz.
    pub sample_rate: f64,
}

/// 10-20 kHz sweep filling a 1 s record sampled at 50 kHz.
impl Default for LfmPulse {
    fn default() -> Self {
        Self {
            f_low: 10e3,
            f_high: 20e3,
            duration: 1.0,
            record: 1.0,
            sample_rate: 50e3,
        }
    }
}

impl LfmPulse {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.f_low, self.f_high, self.duration, self.record, self.sample_rate]
            .iter()
            .all(|v| v.is_finite());
        ensure_param!(finite, "pulse parameters must be finite");
        ensure_param!(
            0.0 < self.f_low && self.f_low < self.f_high,
            "need 0 < f_L < f_H, got f_L={} f_H={}",
            self.f_low,
            self.f_high
        );
        ensure_param!(
            0.0 < self.duration && self.duration <= self.record,
            "need 0 < T <= T_all, got T={} T_all={}",
            self.duration,
            self.record
        );
        ensure_param!(
            self.sample_rate > 2.0 * self.f_high,
            "sampling rate {} Hz does not exceed 2·f_H = {} Hz",
            self.sample_rate,
            2.0 * self.f_high
        );
        ensure_param!(self.num_samples() >= 2, "record holds fewer than two samples");
        Ok(())
    }

    /// Bandwidth `B = f_H - f_L`.
    #[inline]
    pub fn bandwidth(&self) -> f64 {
        self.f_high - self.f_low
    }

    /// Record length in samples, `round(T_all·fs)`.
    pub fn num_samples(&self) -> usize {
        (self.record * self.sample_rate).round() as usize
    }

    /// DFT bin spacing of the record.
    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.num_samples() as f64
    }
}

/// A point reflector in the far field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Arrival angle in degrees, broadside is 0.
    pub theta_deg: f64,
    /// Complex amplitude `b_k`.
    pub amplitude: Complex64,
    /// Delay `τ_k` of the echo at the first sensor, seconds.
    pub delay: f64,
}

impl Target {
    pub fn new(theta_deg: f64, amplitude: Complex64, delay: f64) -> Self {
        Self {
            theta_deg,
            amplitude,
            delay,
        }
    }
}

/// Complete simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub geometry: ArrayGeometry,
    pub pulse: LfmPulse,
    pub targets: Vec<Target>,
    /// Per-sensor white noise power `E[n²]`.
    pub noise_power: f64,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.pulse.validate()?;
        ensure_param!(!self.targets.is_empty(), "scene needs at least one target");
        ensure_param!(
            self.noise_power.is_finite() && self.noise_power >= 0.0,
            "noise power must be non-negative, got {}",
            self.noise_power
        );
        // Inter-sensor delays wrap circularly; only a wrap of the whole
        // record would alias the model.
        ensure_param!(
            self.geometry.max_delay() < self.pulse.record,
            "array aperture delay {} s exceeds the record length",
            self.geometry.max_delay()
        );
        for t in &self.targets {
            ensure_param!(
                t.theta_deg.is_finite() && t.theta_deg.abs() <= 90.0,
                "target angle {} outside [-90, 90]",
                t.theta_deg
            );
            ensure_param!(
                t.amplitude.re.is_finite() && t.amplitude.im.is_finite(),
                "target amplitude must be finite"
            );
            ensure_param!(
                t.delay >= 0.0 && t.delay + self.pulse.duration <= self.pulse.record * (1.0 + 1e-12),
                "target delay {} s pushes the pulse outside the record",
                t.delay
            );
        }
        Ok(())
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    /// True angles sorted ascending.
    pub fn sorted_angles(&self) -> Vec<f64> {
        let mut a: Vec<f64> = self.targets.iter().map(|t| t.theta_deg).collect();
        a.sort_by(f64::total_cmp);
        a
    }

    /// Copy of the scene with the targets' noise recalibrated to `snr_db`
    /// relative to the first target's amplitude.
    pub fn with_snr(&self, snr_db: f64) -> Result<Self> {
        let reference = self
            .targets
            .first()
            .map(|t| t.amplitude.norm())
            .unwrap_or(1.0);
        Ok(Self {
            noise_power: noise_power_for_snr(snr_db, reference)?,
            ..self.clone()
        })
    }
}

/// Time-domain array record, one row per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveforms {
    pub samples: Array2<f64>,
    pub sample_rate: f64,
}

impl SampledWaveforms {
    pub fn sensors(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Positive-frequency DFT bins per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMatrix {
    /// `M × (⌊N/2⌋+1)` bins, bin `k` sits at frequency `k·df`.
    pub bins: Array2<Complex64>,
    /// Bin spacing in Hz.
    pub df: f64,
    /// Length of the time record the bins came from.
    pub record_len: usize,
}

impl SpectrumMatrix {
    /// Bin index whose center is `f`, if `f` is on the bin grid.
    pub fn bin_of(&self, f: f64) -> Option<usize> {
        let k = (f / self.df).round();
        if k < 0.0 || (k * self.df - f).abs() > 1e-9 * self.df.max(f.abs()) {
            return None;
        }
        let k = k as usize;
        (k < self.bins.ncols()).then_some(k)
    }

    /// Column of array data at frequency `f` (nearest bin).
    pub fn column_at(&self, f: f64) -> Vec<Complex64> {
        let k = ((f / self.df).round().max(0.0) as usize).min(self.bins.ncols() - 1);
        self.bins.column(k).to_vec()
    }
}

/// Unit-amplitude LFM pulse `cos(2π(f_L t + B t²/(2T)))` on `[0, T)`, zero
/// for the rest of the record.
pub fn lfm_waveform(pulse: &LfmPulse) -> Result<Vec<f64>> {
    pulse.validate()?;
    let n = pulse.num_samples();
    let rate = pulse.bandwidth() / (2.0 * pulse.duration);
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / pulse.sample_rate;
            if t < pulse.duration {
                (2.0 * PI * (pulse.f_low * t + rate * t * t)).cos()
            } else {
                0.0
            }
        })
        .collect())
}

/// Noise power giving input SNR `10 log10(|b|² / E[n²]) = snr_db`.
pub fn noise_power_for_snr(snr_db: f64, amplitude: f64) -> Result<f64> {
    ensure_param!(amplitude > 0.0, "amplitude must be positive, got {amplitude}");
    Ok(amplitude * amplitude * 10f64.powf(-snr_db / 10.0))
}

/// Counter-based generator for one Monte Carlo trial.
///
/// The stream is keyed by `(seed, trial)` only, so trials can be evaluated in
/// any order or on any worker and still reproduce bit for bit.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Noiseless positive-frequency spectra of every sensor.
pub fn noiseless_spectra(scene: &Scene) -> Result<SpectrumMatrix> {
    scene.validate()?;
    let pulse = &scene.pulse;
    let n = pulse.num_samples();
    let source = dft::real_forward_half(&lfm_waveform(pulse)?);
    let df = pulse.bin_spacing();
    let m_count = scene.geometry.sensors;
    let mut bins = Array2::<Complex64>::zeros((m_count, source.len()));
    for target in &scene.targets {
        for m in 0..m_count {
            let delay = target.delay + scene.geometry.delay(m, target.theta_deg);
            let mut row = bins.row_mut(m);
            for (k, (out, s)) in row.iter_mut().zip(&source).enumerate() {
                let phase = -2.0 * PI * (k as f64 * df) * delay;
                *out += target.amplitude * s * Complex64::from_polar(1.0, phase);
            }
        }
    }
    Ok(SpectrumMatrix {
        bins,
        df,
        record_len: n,
    })
}

/// Received array record for `scene` using its own seed as trial 0.
pub fn synthesize_received(scene: &Scene) -> Result<SampledWaveforms> {
    synthesize_trial(scene, 0)
}

/// Received array record for one Monte Carlo trial of `scene`.
pub fn synthesize_trial(scene: &Scene, trial: u64) -> Result<SampledWaveforms> {
    let clean = noiseless_spectra(scene)?;
    let n = clean.record_len;
    let m_count = scene.geometry.sensors;
    let mut samples = Array2::<f64>::zeros((m_count, n));
    for (m, mut row) in samples.axis_iter_mut(Axis(0)).enumerate() {
        let series = dft::real_inverse_half(&clean.bins.row(m).to_vec(), n);
        row.iter_mut().zip(series).for_each(|(o, v)| *o = v);
    }
    if scene.noise_power > 0.0 {
        let std = scene.noise_power.sqrt();
        let mut rng = trial_rng(scene.seed, trial);
        for v in samples.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += std * g;
        }
    }
    Ok(SampledWaveforms {
        samples,
        sample_rate: scene.pulse.sample_rate,
    })
}

/// Positive-frequency DFT of every sensor row; no window, no padding.
pub fn spectra(w: &SampledWaveforms) -> SpectrumMatrix {
    let n = w.len();
    let half = n / 2 + 1;
    let mut bins = Array2::<Complex64>::zeros((w.sensors(), half));
    for (m, row) in w.samples.axis_iter(Axis(0)).enumerate() {
        let spec = dft::real_forward_half(&row.to_vec());
        bins.row_mut(m).iter_mut().zip(spec).for_each(|(o, v)| *o = v);
    }
    SpectrumMatrix {
        bins,
        df: if n > 0 { w.sample_rate / n as f64 } else { 0.0 },
        record_len: n,
    }
}

/// Stationary-phase spectrum of the complex chirp,
/// `Rect((f - f_c)/B) · √(T/B) e^{jπ/4} · e^{-jπT(f-f_L)²/B}`.
pub fn analytic_lfm_spectrum(pulse: &LfmPulse, f: f64) -> Complex64 {
    if f < pulse.f_low || f > pulse.f_high {
        return Complex64::new(0.0, 0.0);
    }
    let b = pulse.bandwidth();
    let gamma = Complex64::from_polar((pulse.duration / b).sqrt(), PI / 4.0);
    let df = f - pulse.f_low;
    gamma * Complex64::from_polar(1.0, -PI * pulse.duration * df * df / b)
}
