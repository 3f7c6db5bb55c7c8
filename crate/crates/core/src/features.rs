//! Per-window time- and frequency-domain features.
//!
//! Each channel of a window contributes, in order: peak amplitude, RMS,
//! population variance, dominant frequency (Hz) and spectral entropy (nats).
//! Spectral quantities use the one-sided spectrum with the DC bin excluded,
//! and no window taper.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::numerics::dft;
use crate::sim::Recording;
use crate::{Error, Result};

/// Spectral magnitudes below this fraction of `max(1, Σ|x|)` count as empty.
const SPECTRAL_FLOOR: f64 = 1e-12;

/// Literal maximum sample value (signed).
pub fn peak_amplitude(window: &[f64]) -> Result<f64> {
    window
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyWindow)
}

/// Maximum absolute sample value.
pub fn abs_peak_amplitude(window: &[f64]) -> Result<f64> {
    window
        .iter()
        .map(|v| v.abs())
        .reduce(f64::max)
        .ok_or(Error::EmptyWindow)
}

pub fn rms(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok((window.iter().map(|v| v * v).sum::<f64>() / window.len() as f64).sqrt())
}

pub fn mean(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Population variance (divides by the window length).
pub fn variance(window: &[f64]) -> Result<f64> {
    let mu = mean(window)?;
    Ok(window.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / window.len() as f64)
}

/// Power `|X_k|²` of one-sided bins `1..=N/2`, and the emptiness floor.
fn one_sided_power(window: &[f64]) -> Result<(Vec<f64>, f64)> {
    let spectrum = dft(window, 1.0)?;
    let half = window.len() / 2;
    let power = spectrum.bins()[1..=half].iter().map(|c| c.norm_sqr()).collect();
    let scale = window.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    Ok((power, SPECTRAL_FLOOR * scale))
}

/// Frequency of the strongest non-DC bin; ties go to the lower frequency.
pub fn dominant_frequency(window: &[f64], sample_rate: f64) -> Result<f64> {
    if window.len() < 4 {
        return Err(Error::EmptySignal(window.len()));
    }
    let (power, floor) = one_sided_power(window)?;
    let (best, &p) = power
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (k, p)| if *p > *acc.1 { (k, p) } else { acc });
    if p.sqrt() <= floor {
        return Err(Error::NoSpectralContent);
    }
    Ok((best + 1) as f64 * sample_rate / window.len() as f64)
}

/// Shannon entropy (nats) of the normalized one-sided non-DC power spectrum.
pub fn spectral_entropy(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let (power, floor) = one_sided_power(window)?;
    let total: f64 = power.iter().sum();
    if total.sqrt() <= floor {
        return Err(Error::ZeroPower);
    }
    Ok(power
        .iter()
        .map(|p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_len: 2048,
            hop: 1024,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 16 || self.hop < 1 || self.hop > self.window_len {
            return Err(Error::InvalidSpec {
                what: "window",
                detail: format!("window_len {} / hop {} violate T >= 16, 1 <= hop <= T", self.window_len, self.hop),
            });
        }
        Ok(())
    }

    pub fn window_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Which per-channel features are extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Peak, RMS, variance, dominant frequency, spectral entropy.
    #[default]
    Full,
    /// Peak, RMS, variance.
    TimeOnly,
}

impl FeatureSet {
    pub fn per_channel(self) -> usize {
        match self {
            FeatureSet::Full => 5,
            FeatureSet::TimeOnly => 3,
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        const ALL: [&str; 5] = ["peak", "rms", "variance", "dominant_frequency", "spectral_entropy"];
        &ALL[..self.per_channel()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub set: FeatureSet,
    /// Use `max |x|` instead of the signed maximum for the peak feature.
    pub absolute_peak: bool,
}

/// Feature vector of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub x: Vec<f64>,
    pub window_index: usize,
    pub source: String,
}

/// Column names `<channel>_<feature>` in vector order.
pub fn feature_names(channels: &[String], options: &FeatureOptions) -> Vec<String> {
    channels
        .iter()
        .flat_map(|c| options.set.names().iter().map(move |f| format!("{c}_{f}")))
        .collect()
}

fn channel_features(w: &[f64], sample_rate: f64, options: &FeatureOptions, out: &mut Vec<f64>) -> Result<()> {
    let peak = if options.absolute_peak {
        abs_peak_amplitude(w)?
    } else {
        peak_amplitude(w)?
    };
    out.extend([peak, rms(w)?, variance(w)?]);
    if options.set == FeatureSet::Full {
        out.push(dominant_frequency(w, sample_rate)?);
        out.push(spectral_entropy(w)?);
    }
    Ok(())
}

/// Slices a recording into `floor((L − T)/hop) + 1` windows and featurizes
/// each one over all channels in recording order.
pub fn extract_windows(rec: &Recording, spec: &WindowSpec, options: &FeatureOptions) -> Result<Vec<WindowFeatures>> {
    spec.validate()?;
    let len = rec.len();
    if len < spec.window_len {
        return Err(Error::RecordingTooShort {
            id: rec.id.clone(),
            len,
            window: spec.window_len,
        });
    }
    (0..spec.window_count(len))
        .map(|w| {
            let start = w * spec.hop;
            let mut x = Vec::with_capacity(rec.channels.len() * options.set.per_channel());
            for ch in &rec.channels {
                channel_features(&ch.samples[start..start + spec.window_len], rec.sample_rate, options, &mut x)?;
            }
            Ok(WindowFeatures {
                x,
                window_index: w,
                source: rec.id.clone(),
            })
        })
        .collect()
}

/// Per-dimension standardization with statistics fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per dimension. Dimensions with
    /// (near-)zero spread get unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut rows_vec = Vec::new();
        for r in rows {
            if sum.is_empty() {
                sum = vec![0.0; r.len()];
            }
            if r.len() != sum.len() {
                return Err(Error::FeatureDimMismatch {
                    expected: sum.len(),
                    found: r.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(r) {
                *s += v;
            }
            rows_vec.push(r);
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        sum_sq.resize(mean.len(), 0.0);
        for r in rows_vec {
            for ((s, v), m) in sum_sq.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = sum_sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::FeatureDimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

/// Writes `recording_id,window_index,<features…>` rows with a header.
pub fn write_feature_csv<W: Write>(out: W, names: &[String], windows: &[WindowFeatures]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Format {
        path: "feature table".into(),
        detail: e.to_string(),
    };
    let mut header = vec!["recording_id".to_owned(), "window_index".to_owned()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for win in windows {
        let mut row = vec![win.source.clone(), win.window_index.to_string()];
        row.extend(win.x.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("feature table", e))?;
    Ok(())
}
