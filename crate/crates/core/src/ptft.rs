//! Parameterized time-frequency transform with a chirp-matched kernel.
//!
//! For an LFM pulse the kernel `κ(f) = -T(f-f_L)/B + C` is the pulse's group
//! delay law. The rotation operator `Γ^R(f) = e^{-j2π∫κ df}` cancels the
//! quadratic spectral phase of the chirp, so every analysis window of width
//! `σ` collapses the pulse into a vertical ridge at its arrival time. The
//! window is an ideal DFT-bin mask: bin `k` belongs to window `w` iff
//! `k·df ∈ [f_w - σ/2, f_w + σ/2)`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{ensure_param, DoaError, Result};
use crate::signal::{self, ArrayGeometry, LfmPulse, SampledWaveforms, Scene, SpectrumMatrix};

/// Transform settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtftConfig {
    /// Window width `σ` in Hz.
    pub sigma: f64,
    /// Spacing of window centers in Hz.
    pub f_step: f64,
    /// Frequency difference `Δf` in Hz.
    pub delta_f: f64,
    /// Kernel constant `C` in seconds.
    pub kernel_offset: f64,
    /// Use `Γ^S ≡ 1`.
    pub gamma_s_unity: bool,
}

impl Default for PtftConfig {
    fn default() -> Self {
        Self {
            sigma: 32.0,
            f_step: 100.0,
            delta_f: 200.0,
            kernel_offset: 0.0,
            gamma_s_unity: true,
        }
    }
}

impl PtftConfig {
    pub fn validate(&self, pulse: &LfmPulse) -> Result<()> {
        ensure_param!(self.sigma.is_finite() && self.sigma > 0.0, "sigma must be positive");
        ensure_param!(self.f_step.is_finite() && self.f_step > 0.0, "f_step must be positive");
        ensure_param!(
            self.delta_f.is_finite() && self.delta_f > 0.0,
            "delta_f must be positive"
        );
        ensure_param!(self.kernel_offset.is_finite(), "kernel constant must be finite");
        ensure_param!(
            self.num_pairs(pulse) >= 1,
            "no frequency pair fits: (B - Δf)/f_step < 1"
        );
        Ok(())
    }

    /// `W = ⌊(f_H - f_L - Δf) / f_step⌋`.
    pub fn num_pairs(&self, pulse: &LfmPulse) -> usize {
        let w = ((pulse.bandwidth() - self.delta_f) / self.f_step + 1e-9).floor();
        if w.is_finite() && w > 0.0 {
            w as usize
        } else {
            0
        }
    }

    /// Window centers `f_w = f_L + (w-1)·f_step`, `w = 1..W`.
    pub fn centers(&self, pulse: &LfmPulse) -> Vec<f64> {
        (0..self.num_pairs(pulse))
            .map(|i| pulse.f_low + i as f64 * self.f_step)
            .collect()
    }
}

/// Kernel value and rotation phase at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPhase {
    /// `κ(f)` in seconds.
    pub kappa: f64,
    /// Phase of `Γ^R(f)` in radians.
    pub rotation_phase: f64,
}

pub fn kernel_phase(pulse: &LfmPulse, kernel_offset: f64, f: f64) -> KernelPhase {
    let t = pulse.duration;
    let b = pulse.bandwidth();
    let df = f - pulse.f_low;
    KernelPhase {
        kappa: -t * df / b + kernel_offset,
        rotation_phase: 2.0 * PI * (t * df * df / (2.0 * b) - kernel_offset * f),
    }
}

/// `Γ^R(f)`.
pub fn rotation(pulse: &LfmPulse, kernel_offset: f64, f: f64) -> Complex64 {
    Complex64::from_polar(1.0, kernel_phase(pulse, kernel_offset, f).rotation_phase)
}

/// Precomputed bins and weights `Γ^R Γ^S H*` of one analysis window.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Window {
    pub center: f64,
    pub first_bin: usize,
    pub weights: Vec<Complex64>,
}

impl Window {
    pub fn new(pulse: &LfmPulse, cfg: &PtftConfig, center: f64, df: f64, bins: usize) -> Result<Self> {
        let lo = center - cfg.sigma / 2.0;
        let hi = center + cfg.sigma / 2.0;
        let nyquist = (bins - 1) as f64 * df;
        ensure_param!(
            lo >= 0.0 && hi <= nyquist + df,
            "window [{lo}, {hi}) Hz exceeds the spectrum range [0, {nyquist}] Hz"
        );
        let first = (lo / df - 1e-9).ceil().max(0.0) as usize;
        let end = ((hi / df - 1e-9).ceil() as usize).min(bins);
        ensure_param!(end > first, "window of width {} Hz holds no DFT bin", cfg.sigma);
        let shift = kernel_phase(pulse, cfg.kernel_offset, center).kappa;
        let weights = (first..end)
            .map(|k| {
                let f = k as f64 * df;
                let mut w = rotation(pulse, cfg.kernel_offset, f);
                if !cfg.gamma_s_unity {
                    w *= Complex64::from_polar(1.0, 2.0 * PI * f * shift);
                }
                w
            })
            .collect();
        Ok(Self {
            center,
            first_bin: first,
            weights,
        })
    }

    /// Full transform series for one spectrum row.
    pub fn series(&self, row: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, w) in self.weights.iter().enumerate() {
            let k = self.first_bin + i;
            buf[k] = row[k] * w;
        }
        dft::inverse(&mut buf);
        buf
    }

    /// Transform value at one sample index, by direct summation.
    pub fn at(&self, row: &[Complex64], n: usize, index: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, w) in self.weights.iter().enumerate() {
            let k = self.first_bin + i;
            let turns = ((k as u128 * index as u128) % n as u128) as f64;
            let phase = 2.0 * PI * turns / n as f64;
            acc += row[k] * w * Complex64::from_polar(1.0, phase);
        }
        acc / n as f64
    }
}

fn windows_for(
    pulse: &LfmPulse,
    cfg: &PtftConfig,
    centers: &[f64],
    spec: &SpectrumMatrix,
) -> Result<Vec<Window>> {
    centers
        .iter()
        .map(|&c| Window::new(pulse, cfg, c, spec.df, spec.bins.ncols()))
        .collect()
}

/// Transform `g(t, f_w)` of one sensor record for window `w` (1-based).
pub fn ptft_transform(
    record: &[f64],
    sample_rate: f64,
    pulse: &LfmPulse,
    cfg: &PtftConfig,
    w: usize,
) -> Result<Vec<Complex64>> {
    cfg.validate(pulse)?;
    let count = cfg.num_pairs(pulse);
    ensure_param!((1..=count).contains(&w), "window index {w} outside 1..={count}");
    let n = record.len();
    ensure_param!(n >= 2, "record too short");
    let row = dft::real_forward_half(record);
    let center = pulse.f_low + (w - 1) as f64 * cfg.f_step;
    let win = Window::new(pulse, cfg, center, sample_rate / n as f64, row.len())?;
    Ok(win.series(&row, n))
}

/// Transform of one sensor over all windows, indexed `(time sample, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMap {
    pub values: Array2<Complex64>,
    pub sample_rate: f64,
    pub centers: Vec<f64>,
}

impl TfMap {
    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate
    }
}

pub fn tf_map(record: &[f64], sample_rate: f64, pulse: &LfmPulse, cfg: &PtftConfig) -> Result<TfMap> {
    cfg.validate(pulse)?;
    let n = record.len();
    let row = dft::real_forward_half(record);
    let centers = cfg.centers(pulse);
    let mut values = Array2::<Complex64>::zeros((n, centers.len()));
    for (j, &c) in centers.iter().enumerate() {
        let win = Window::new(pulse, cfg, c, sample_rate / n as f64, row.len())?;
        values
            .column_mut(j)
            .iter_mut()
            .zip(win.series(&row, n))
            .for_each(|(o, v)| *o = v);
    }
    Ok(TfMap {
        values,
        sample_rate,
        centers,
    })
}

/// Location of the time-frequency ridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ridge {
    pub index: usize,
    pub time: f64,
}

fn argmax_earliest(energy: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in energy.iter().enumerate() {
        if e > energy[best] {
            best = i;
        }
    }
    best
}

/// `argmax_t Σ_w |g(t, f_w)|²`, ties resolved to the earliest sample.
pub fn ridge_time(map: &TfMap) -> Result<Ridge> {
    ensure_param!(map.values.ncols() >= 1, "map has no windows");
    let energy: Vec<f64> = map
        .values
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let index = argmax_earliest(&energy);
    Ok(Ridge {
        index,
        time: map.time(index),
    })
}

/// Ridge of the transform energy summed over every row and window.
///
/// Each window's `|g(t)|²` is a trigonometric polynomial whose coefficients
/// are the autocorrelation of its weighted bins, so the summed energy at all
/// `n` samples costs one inverse DFT instead of one per row and window.
fn ridge_from_rows<'a>(
    rows: impl IntoIterator<Item = &'a [Complex64]>,
    n: usize,
    windows: &[Window],
    sample_rate: f64,
) -> Ridge {
    let lags = windows.iter().map(|w| w.weights.len()).max().unwrap_or(0).min(n);
    let mut r = vec![Complex64::new(0.0, 0.0); lags];
    let mut c = Vec::new();
    for row in rows {
        for win in windows {
            c.clear();
            c.extend(win.weights.iter().enumerate().map(|(i, w)| row[win.first_bin + i] * w));
            for (d, rd) in r.iter_mut().enumerate().take(c.len()) {
                *rd += c[d..].iter().zip(&c).map(|(a, b)| a * b.conj()).sum::<Complex64>();
            }
        }
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (d, rd) in r.iter().enumerate() {
        buf[d] = if d == 0 { *rd } else { rd * 2.0 };
    }
    dft::inverse(&mut buf);
    let energy: Vec<f64> = buf.iter().map(|v| v.re).collect();
    let index = argmax_earliest(&energy);
    Ridge {
        index,
        time: index as f64 / sample_rate,
    }
}

/// Single-snapshot multi-frequency array data sampled on the ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct TfSnapshotSet {
    /// `M × W`, column `w` is `ỹ(t̂, f_w)`.
    pub snapshots: Array2<Complex64>,
    /// `M × W`, column `w` is `ỹ(t̂, f_w + Δf)`.
    pub shifted: Array2<Complex64>,
    pub ridge: Ridge,
    pub centers: Vec<f64>,
    pub delta_f: f64,
}

impl TfSnapshotSet {
    pub fn pairs(&self) -> usize {
        self.centers.len()
    }
}

/// Runs the transform for every sensor and window and samples all of them
/// at one ridge time, the peak of the energy summed over the whole array.
pub fn extract_snapshots(
    records: &SampledWaveforms,
    pulse: &LfmPulse,
    cfg: &PtftConfig,
) -> Result<TfSnapshotSet> {
    snapshots_from_spectra(&signal::spectra(records), pulse, cfg, records.sample_rate)
}

pub(crate) fn snapshots_from_spectra(
    spec: &SpectrumMatrix,
    pulse: &LfmPulse,
    cfg: &PtftConfig,
    sample_rate: f64,
) -> Result<TfSnapshotSet> {
    cfg.validate(pulse)?;
    let n = spec.record_len;
    ensure_param!(n >= 2, "record too short");
    let centers = cfg.centers(pulse);
    let shifted_centers: Vec<f64> = centers.iter().map(|c| c + cfg.delta_f).collect();
    let lower = windows_for(pulse, cfg, &centers, spec)?;
    let upper = windows_for(pulse, cfg, &shifted_centers, spec)?;
    let rows: Vec<Vec<Complex64>> = spec.bins.rows().into_iter().map(|r| r.to_vec()).collect();
    let ridge = ridge_from_rows(rows.iter().map(Vec::as_slice), n, &lower, sample_rate);
    let sample = |windows: &[Window]| {
        let mut out = Array2::<Complex64>::zeros((spec.bins.nrows(), windows.len()));
        for (m, row) in rows.iter().enumerate() {
            for (j, win) in windows.iter().enumerate() {
                out[[m, j]] = win.at(row, n, ridge.index);
            }
        }
        out
    };
    Ok(TfSnapshotSet {
        snapshots: sample(&lower),
        shifted: sample(&upper),
        ridge,
        centers,
        delta_f: cfg.delta_f,
    })
}

/// Predicted ridge amplitude of one sensor, `|b|σ√(T/B)·sinc(πσε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeAmplitudeModel {
    pub rho: f64,
    pub epsilon: f64,
    /// Second-order amplitude deviation `|b|σ√(T/B)(πσε)²/6`.
    pub delta: f64,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

pub fn ridge_amplitude(amplitude: f64, pulse: &LfmPulse, sigma: f64, epsilon: f64) -> RidgeAmplitudeModel {
    let peak = amplitude * sigma * (pulse.duration / pulse.bandwidth()).sqrt();
    let x = PI * sigma * epsilon;
    RidgeAmplitudeModel {
        rho: peak * sinc(x),
        epsilon,
        delta: peak * x * x / 6.0,
    }
}

/// Bound `(πστ_M(θ))²/6` on the relative amplitude deviation across the
/// array, for a ridge anywhere between the first and last arrivals.
pub fn relative_amplitude_deviation(geom: &ArrayGeometry, sigma: f64, theta_deg: f64) -> f64 {
    let tau = geom.delay(geom.sensors - 1, theta_deg);
    let x = PI * sigma * tau;
    x * x / 6.0
}

/// Returns a warning when the amplitude deviation at endfire exceeds
/// `tolerance` (relative to the ridge peak).
pub fn screen_window_width(geom: &ArrayGeometry, cfg: &PtftConfig, tolerance: f64) -> Option<String> {
    let worst = relative_amplitude_deviation(geom, cfg.sigma, 90.0);
    (worst > tolerance).then(|| {
        format!(
            "window width {} Hz gives a relative ridge amplitude deviation of {:.3} at endfire (tolerance {})",
            cfg.sigma, worst, tolerance
        )
    })
}

/// Per-sensor output SNRs of the plain DFT and of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorSnr {
    pub sensor: usize,
    pub snr_fft_db: f64,
    pub snr_ptft_db: f64,
}

/// Output SNR of DFT bins and of ridge samples, measured by Monte Carlo.
///
/// Signal powers come from the noiseless scene, averaged over the `W` window
/// centers. Noise powers come from `trials` noise-only records of the scene's
/// noise level, averaged over trials and centers.
pub fn output_snr_gain(scene: &Scene, cfg: &PtftConfig, trials: usize) -> Result<Vec<SensorSnr>> {
    ensure_param!(trials >= 1, "need at least one trial");
    if scene.noise_power <= 0.0 {
        return Err(DoaError::Numeric(
            "noise power is zero; output SNR is undefined".into(),
        ));
    }
    let pulse = &scene.pulse;
    cfg.validate(pulse)?;
    let clean = signal::noiseless_spectra(scene)?;
    let n = clean.record_len;
    let centers = cfg.centers(pulse);
    let windows = windows_for(pulse, cfg, &centers, &clean)?;
    let bins: Vec<usize> = centers
        .iter()
        .map(|&c| (c / clean.df).round() as usize)
        .collect();
    let first = clean.bins.row(0).to_vec();
    let ridge = ridge_from_rows([first.as_slice()], n, &windows, pulse.sample_rate);

    let m_count = scene.geometry.sensors;
    let wc = centers.len() as f64;
    let mut sig_fft = vec![0.0; m_count];
    let mut sig_ptft = vec![0.0; m_count];
    for m in 0..m_count {
        let row = clean.bins.row(m).to_vec();
        sig_fft[m] = bins.iter().map(|&k| row[k].norm_sqr()).sum::<f64>() / wc;
        sig_ptft[m] = windows
            .iter()
            .map(|w| w.at(&row, n, ridge.index).norm_sqr())
            .sum::<f64>()
            / wc;
    }

    let std = scene.noise_power.sqrt();
    let mut noise_fft = vec![0.0; m_count];
    let mut noise_ptft = vec![0.0; m_count];
    for trial in 0..trials {
        let mut rng = signal::trial_rng(scene.seed, trial as u64);
        for m in 0..m_count {
            let series: Vec<f64> = (0..n)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    std * g
                })
                .collect();
            let row = dft::real_forward_half(&series);
            noise_fft[m] += bins.iter().map(|&k| row[k].norm_sqr()).sum::<f64>() / wc;
            noise_ptft[m] += windows
                .iter()
                .map(|w| w.at(&row, n, ridge.index).norm_sqr())
                .sum::<f64>()
                / wc;
        }
    }
    let db = |s: f64, noise: f64| 10.0 * (s / (noise / trials as f64)).log10();
    Ok((0..m_count)
        .map(|m| SensorSnr {
            sensor: m,
            snr_fft_db: db(sig_fft[m], noise_fft[m]),
            snr_ptft_db: db(sig_ptft[m], noise_ptft[m]),
        })
        .collect())
}
