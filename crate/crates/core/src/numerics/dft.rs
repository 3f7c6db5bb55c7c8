use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Conjugate-symmetry tolerance for [`inverse_dft`], relative to the largest bin.
const SYMMETRY_TOL: f64 = 1e-9;

/// Discrete Fourier transform of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    bins: Vec<Complex64>,
    sample_rate: f64,
    n: usize,
    one_sided: bool,
}

impl ComplexSpectrum {
    /// Wraps a full two-sided spectrum of `bins.len()` samples.
    pub fn two_sided(bins: Vec<Complex64>, sample_rate: f64) -> Self {
        let n = bins.len();
        Self {
            bins,
            sample_rate,
            n,
            one_sided: false,
        }
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Original sample count.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_one_sided(&self) -> bool {
        self.one_sided
    }

    /// Spacing between bins in Hz.
    pub fn resolution(&self) -> f64 {
        self.sample_rate / self.n as f64
    }

    /// Absolute frequency of bin `k` in Hz (mirrored above Nyquist).
    pub fn bin_frequency(&self, k: usize) -> f64 {
        let k = if k <= self.n / 2 { k } else { self.n - k };
        k as f64 * self.resolution()
    }

    /// Bins `0..=n/2`.
    pub fn one_sided(&self) -> ComplexSpectrum {
        if self.one_sided {
            return self.clone();
        }
        Self {
            bins: self.bins[..=self.n / 2].to_vec(),
            sample_rate: self.sample_rate,
            n: self.n,
            one_sided: true,
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Two-sided DFT, `X_k = Σ x_n e^{-2πi kn/N}`.
pub fn dft(signal: &[f64], sample_rate: f64) -> Result<ComplexSpectrum> {
    if signal.len() < 2 {
        return Err(Error::EmptySignal(signal.len()));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal"));
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan(buf.len(), false).process(&mut buf);
    Ok(ComplexSpectrum::two_sided(buf, sample_rate))
}

/// Inverse of [`dft`] for spectra of real signals.
pub fn inverse_dft(spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
    if spectrum.is_one_sided() {
        return Err(Error::AsymmetricSpectrum {
            bin: spectrum.bins().len(),
            deviation: f64::INFINITY,
        });
    }
    let bins = spectrum.bins();
    let n = bins.len();
    if n < 2 {
        return Err(Error::EmptySignal(n));
    }
    if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("spectrum"));
    }
    let scale = bins.iter().map(|c| c.norm()).fold(1.0, f64::max);
    for k in 0..=n / 2 {
        let deviation = (bins[k] - bins[(n - k) % n].conj()).norm();
        if deviation > SYMMETRY_TOL * scale {
            return Err(Error::AsymmetricSpectrum { bin: k, deviation });
        }
    }
    let mut buf = bins.to_vec();
    plan(n, true).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    Ok(buf.into_iter().map(|c| c.re * inv_n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    /// Direct O(N²) evaluation of the DFT sum.
    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                        Complex64::from_polar(v, ang)
                    })
                    .sum()
            })
            .collect()
    }

    fn close(a: &[Complex64], b: &[f64]) -> bool {
        a.iter()
            .zip(b)
            .all(|(c, &r)| (c.re - r).abs() < 1e-12 && c.im.abs() < 1e-12)
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let s = dft(&[1.0, 1.0, 1.0, 1.0], 4.0).unwrap();
        assert!(close(s.bins(), &[4.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn hand_computed_n4() {
        let s = dft(&[1.0, 0.0, -1.0, 0.0], 4.0).unwrap();
        assert!(close(s.bins(), &[0.0, 2.0, 0.0, 2.0]));
    }

    #[test]
    fn inverse_hand_cases() {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        let x = inverse_dft(&ComplexSpectrum::two_sided(c(&[4.0, 0.0, 0.0, 0.0]), 4.0)).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let x = inverse_dft(&ComplexSpectrum::two_sided(c(&[0.0, 2.0, 0.0, 2.0]), 4.0)).unwrap();
        for (a, b) in x.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_sum_for_awkward_lengths() {
        let mut rng = Rng::new(1);
        for n in [2usize, 3, 5, 7, 12, 30, 97, 100, 128] {
            let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let fast = dft(&x, 1.0).unwrap();
            let slow = naive_dft(&x);
            for (a, b) in fast.bins().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn rejects_short_and_non_finite() {
        assert!(matches!(dft(&[1.0], 1.0), Err(Error::EmptySignal(1))));
        assert!(matches!(dft(&[1.0, f64::INFINITY], 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn rejects_asymmetric_spectrum() {
        let bins = vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let r = inverse_dft(&ComplexSpectrum::two_sided(bins, 1.0));
        assert!(matches!(r, Err(Error::AsymmetricSpectrum { .. })));
    }

    #[test]
    fn bin_frequencies_mirror() {
        let s = dft(&[0.0; 8], 80.0).unwrap();
        assert_eq!(s.bin_frequency(1), 10.0);
        assert_eq!(s.bin_frequency(7), 10.0);
        assert_eq!(s.bin_frequency(4), 40.0);
        assert_eq!(s.one_sided().bins().len(), 5);
    }
}
