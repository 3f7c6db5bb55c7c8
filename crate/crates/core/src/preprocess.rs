//! Zero-phase Butterworth low-pass filtering and dataset augmentation.

use serde::{Deserialize, Serialize};

use crate::numerics::{derive_seed, dft, inverse_dft, Rng};
use crate::sim::Recording;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    /// Cutoff frequency, Hz.
    pub cutoff: f64,
    pub order: u32,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            cutoff: 1000.0,
            order: 4,
        }
    }
}

impl FilterSpec {
    /// Butterworth magnitude response `1/√(1 + (f/f_c)^{2n})`.
    pub fn magnitude(&self, freq: f64) -> f64 {
        1.0 / (1.0 + (freq.abs() / self.cutoff).powi(2 * self.order as i32)).sqrt()
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.cutoff > 0.0 && self.cutoff < nyquist) {
            return Err(Error::CutoffAboveNyquist {
                cutoff: self.cutoff,
                nyquist,
            });
        }
        if self.order < 1 {
            return Err(Error::InvalidSpec {
                what: "filter",
                detail: "order must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Multiplies every DFT bin by the Butterworth magnitude at its absolute
/// frequency and transforms back. No phase distortion.
pub fn butterworth_filter(signal: &[f64], sample_rate: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    spec.validate(sample_rate)?;
    let mut spectrum = dft(signal, sample_rate)?;
    let gains: Vec<f64> = (0..spectrum.len())
        .map(|k| spec.magnitude(spectrum.bin_frequency(k)))
        .collect();
    for (bin, g) in spectrum.bins_mut().iter_mut().zip(gains) {
        *bin *= g;
    }
    inverse_dft(&spectrum)
}

/// Circular shift: `out[i] = signal[(i + shift) mod N]`.
pub fn time_shift(signal: &[f64], shift: i64) -> Result<Vec<f64>> {
    let n = signal.len();
    if shift.unsigned_abs() as usize >= n.max(1) {
        return Err(Error::ShiftTooLarge { shift, len: n });
    }
    let mut out = signal.to_vec();
    let k = shift.rem_euclid(n as i64) as usize;
    out.rotate_left(k);
    Ok(out)
}

pub fn amplitude_scale(signal: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveScale(alpha));
    }
    Ok(signal.iter().map(|v| v * alpha).collect())
}

/// Adds i.i.d. `N(0, σ²)` noise drawn from `seed`.
pub fn add_noise(signal: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(signal.to_vec());
    }
    let mut rng = Rng::new(seed);
    Ok(signal.iter().map(|v| v + sigma * rng.standard_normal()).collect())
}

/// Filters every channel of a recording.
pub fn filter_recording(rec: &Recording, spec: &FilterSpec) -> Result<Recording> {
    let mut out = rec.clone();
    for ch in &mut out.channels {
        ch.samples = butterworth_filter(&ch.samples, rec.sample_rate, spec)?;
    }
    Ok(out)
}

/// Ranges for randomized augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    /// Augmented copies generated per recording.
    pub copies: usize,
    /// Maximum circular shift as a fraction of recording length.
    pub max_shift_fraction: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Noise standard deviation as a fraction of each channel's RMS.
    pub noise_fraction: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            copies: 1,
            max_shift_fraction: 0.1,
            scale_min: 0.8,
            scale_max: 1.2,
            noise_fraction: 0.01,
        }
    }
}

/// Returns the originals followed, per recording, by `spec.copies` variants
/// with one shared shift and scale across channels and independent noise per
/// channel. Labels are preserved.
pub fn augment_dataset(recordings: &[Recording], spec: &AugmentationSpec, seed: u64) -> Result<Vec<Recording>> {
    if !(spec.scale_min > 0.0 && spec.scale_max >= spec.scale_min) {
        return Err(Error::NonPositiveScale(spec.scale_min));
    }
    let mut out = recordings.to_vec();
    for rec in recordings {
        let n = rec.len();
        let mut rng = Rng::new(derive_seed(seed, &rec.id));
        let max_shift = ((n as f64 * spec.max_shift_fraction).floor() as i64).min(n as i64 - 1).max(0);
        for copy in 0..spec.copies {
            let shift = rng.uniform_int(-max_shift, max_shift);
            let alpha = rng.uniform(spec.scale_min, spec.scale_max);
            let mut aug = rec.clone();
            aug.id = format!("{}+aug{copy}", rec.id);
            for ch in &mut aug.channels {
                let rms = (ch.samples.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
                let shifted = time_shift(&ch.samples, shift)?;
                let scaled = amplitude_scale(&shifted, alpha)?;
                ch.samples = add_noise(&scaled, spec.noise_fraction * rms * alpha, rng.next_u64())?;
            }
            out.push(aug);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{peak_amplitude, rms};
    use crate::sim::{FaultSpec, OperatingPoint, Simulator};
    use std::f64::consts::PI;

    fn tone(freq: f64, n: usize, rate: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn amplitude(x: &[f64]) -> f64 {
        rms(x).unwrap() * 2f64.sqrt()
    }

    #[test]
    fn dc_passes_unchanged() {
        let x = vec![3.5; 1000];
        let y = butterworth_filter(&x, 1000.0, &FilterSpec { cutoff: 50.0, order: 2 }).unwrap();
        assert!(y.iter().all(|v| (v - 3.5).abs() < 1e-9));
    }

    #[test]
    fn tone_at_cutoff_is_half_power() {
        let x = tone(100.0, 1000, 1000.0);
        let y = butterworth_filter(&x, 1000.0, &FilterSpec { cutoff: 100.0, order: 4 }).unwrap();
        assert!((amplitude(&y) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn tone_far_above_cutoff_is_removed() {
        let x = tone(400.0, 1000, 1000.0);
        let y = butterworth_filter(&x, 1000.0, &FilterSpec { cutoff: 40.0, order: 4 }).unwrap();
        assert!(amplitude(&y) < 1e-4);
    }

    #[test]
    fn output_length_and_cutoff_validation() {
        let x = tone(10.0, 333, 1000.0);
        let y = butterworth_filter(&x, 1000.0, &FilterSpec { cutoff: 200.0, order: 4 }).unwrap();
        assert_eq!(y.len(), 333);
        let r = butterworth_filter(&x, 1000.0, &FilterSpec { cutoff: 500.0, order: 4 });
        assert!(matches!(r, Err(Error::CutoffAboveNyquist { .. })));
    }

    #[test]
    fn double_filtering_equals_squared_response() {
        let mut rng = Rng::new(2);
        let x: Vec<f64> = (0..256).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let spec = FilterSpec { cutoff: 60.0, order: 3 };
        let twice = butterworth_filter(&butterworth_filter(&x, 500.0, &spec).unwrap(), 500.0, &spec).unwrap();
        let a = dft(&twice, 500.0).unwrap();
        let b = dft(&x, 500.0).unwrap();
        for k in 0..a.len() {
            let g = spec.magnitude(b.bin_frequency(k));
            assert!((a.bins()[k] - b.bins()[k] * g * g).norm() < 1e-9);
        }
    }

    #[test]
    fn shift_examples() {
        assert_eq!(time_shift(&[1.0, 2.0, 3.0, 4.0], 0).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(time_shift(&[1.0, 2.0, 3.0, 4.0], 1).unwrap(), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(time_shift(&[1.0, 2.0, 3.0, 4.0], -1).unwrap(), vec![4.0, 1.0, 2.0, 3.0]);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let full = time_shift(&time_shift(&x, 3).unwrap(), 2).unwrap();
        assert_eq!(full, x.to_vec());
        assert!(matches!(time_shift(&x, 5), Err(Error::ShiftTooLarge { .. })));
    }

    #[test]
    fn shift_preserves_rms_and_spectrum_magnitude() {
        let mut rng = Rng::new(8);
        let x: Vec<f64> = (0..200).map(|_| rng.normal(0.3, 1.0)).collect();
        let y = time_shift(&x, 37).unwrap();
        assert!((rms(&x).unwrap() - rms(&y).unwrap()).abs() < 1e-9);
        let a = dft(&x, 1.0).unwrap();
        let b = dft(&y, 1.0).unwrap();
        for (p, q) in a.bins().iter().zip(b.bins()) {
            assert!((p.norm() - q.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_examples() {
        let x = tone(5.0, 1000, 1000.0);
        assert_eq!(amplitude_scale(&x, 1.0).unwrap(), x);
        let y = amplitude_scale(&x, 2.0).unwrap();
        assert!((rms(&y).unwrap() - 2.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!((peak_amplitude(&y).unwrap() - 2.0 * peak_amplitude(&x).unwrap()).abs() < 1e-12);
        let back = amplitude_scale(&y, 0.5).unwrap();
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(amplitude_scale(&x, 0.0), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn noise_examples() {
        let x = vec![1.0, 2.0];
        assert_eq!(add_noise(&x, 0.0, 3).unwrap(), x);
        assert!(matches!(add_noise(&x, -1.0, 3), Err(Error::NegativeSigma(_))));
        let z = add_noise(&vec![0.0; 100_000], 1.0, 11).unwrap();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!((0.97..=1.03).contains(&var), "{var}");
        assert_eq!(z, add_noise(&vec![0.0; 100_000], 1.0, 11).unwrap());
    }

    #[test]
    fn augmentation_counts_and_labels() {
        let sim = Simulator::new(
            crate::sim::MachineSpec { duration: 0.05, ..Default::default() },
            Default::default(),
        );
        let recs: Vec<Recording> = (0..4)
            .map(|i| {
                let f = if i % 2 == 0 { FaultSpec::healthy() } else { FaultSpec::broken_bars(2) };
                sim.synthesize(OperatingPoint::from_load(10.0), f, Some(30.0), i, format!("r{i}")).unwrap()
            })
            .collect();
        let none = augment_dataset(&recs, &AugmentationSpec { copies: 0, ..Default::default() }, 1).unwrap();
        assert_eq!(none, recs);
        let two = augment_dataset(&recs, &AugmentationSpec { copies: 2, ..Default::default() }, 1).unwrap();
        assert_eq!(two.len(), 12);
        for aug in &two[4..] {
            let src = recs.iter().find(|r| aug.id.starts_with(&format!("{}+", r.id))).unwrap();
            assert_eq!(aug.label, src.label);
            assert_eq!(aug.channels.len(), src.channels.len());
            assert_eq!(aug.len(), src.len());
        }
        assert_eq!(two, augment_dataset(&recs, &AugmentationSpec { copies: 2, ..Default::default() }, 1).unwrap());
    }
}

