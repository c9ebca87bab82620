//! Thin wrappers over `rustfft` with a per-thread planner cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X[k] = Σ x[n] e^{-j2πkn/N}`.
pub(crate) fn forward(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place inverse DFT including the `1/N` factor.
pub(crate) fn inverse(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Positive-frequency half (`⌊N/2⌋+1` bins) of the DFT of a real series.
pub(crate) fn real_forward_half(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward(&mut buf);
    buf.truncate(samples.len() / 2 + 1);
    buf
}

/// Real series of length `n` whose positive-frequency DFT bins equal `half`.
///
/// The DC bin and (for even `n`) the Nyquist bin only contribute their real
/// parts, since a real series cannot carry anything else there.
pub(crate) fn real_inverse_half(half: &[Complex64], n: usize) -> Vec<f64> {
    debug_assert_eq!(half.len(), n / 2 + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Vec::new();
    }
    buf[0] = Complex64::new(half[0].re, 0.0);
    for k in 1..half.len() {
        if 2 * k == n {
            buf[k] = Complex64::new(half[k].re, 0.0);
        } else {
            buf[k] = half[k];
            buf[n - k] = half[k].conj();
        }
    }
    inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}
