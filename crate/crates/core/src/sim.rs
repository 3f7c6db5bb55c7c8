//! Synthetic three-phase induction machine recordings.
//!
//! Stator currents are balanced sinusoids at the supply frequency. Faults are
//! injected as spectral components at their characteristic frequencies:
//!
//! - broken rotor bars: sidebands at `(1 ± 2s)·f_s`, and the rotor-slot
//!   family `f_s·(k(1−s)/p ± s)` via [`brb_frequency`];
//! - eccentricity: rotor-frequency sidebands `f_s ± f_r` with
//!   `f_r = f_s(1−s)/p`, amplitude-modulated at the slip frequency for the
//!   dynamic subtype;
//! - bearing defects: a vibration sum over `|f_s ± m·f_v|`.
//!
//! The vibration channel always carries a once-per-revolution component at
//! `f_r`; bearing recordings add the defect harmonics on top.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{derive_seed, Rng};
use crate::{Error, Result};

/// Channel names in storage and feature order.
pub const CHANNEL_NAMES: [&str; 4] = ["phase_a", "phase_b", "phase_c", "vibration"];

/// Torque grid used by the catalog, N·m.
pub const LOAD_GRID: [f64; 4] = [0.0, 10.0, 30.0, 40.0];
const SLIP_GRID: [f64; 4] = [0.01, 0.02, 0.04, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineSpec {
    /// Supply frequency, Hz.
    pub supply_frequency: f64,
    pub pole_pairs: u32,
    /// Peak phase current, A.
    pub rated_current: f64,
    pub sample_rate: f64,
    /// Seconds.
    pub duration: f64,
}

impl Default for MachineSpec {
    fn default() -> Self {
        Self {
            supply_frequency: 50.0,
            pole_pairs: 2,
            rated_current: 10.0,
            sample_rate: 10_000.0,
            duration: 1.0,
        }
    }
}

impl MachineSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidSpec { what: "machine", detail });
        if !(self.supply_frequency > 0.0) {
            return bad(format!("supply_frequency {} must be > 0", self.supply_frequency));
        }
        if self.pole_pairs < 1 {
            return bad("pole_pairs must be >= 1".into());
        }
        if !(self.sample_rate >= 10.0 * self.supply_frequency) {
            return bad(format!(
                "sample_rate {} must be at least 10x supply_frequency",
                self.sample_rate
            ));
        }
        if !(self.duration > 0.0) {
            return bad(format!("duration {} must be > 0", self.duration));
        }
        if !(self.rated_current > 0.0) {
            return bad(format!("rated_current {} must be > 0", self.rated_current));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    /// Mechanical rotation frequency at slip `s`.
    pub fn rotor_frequency(&self, slip: f64) -> f64 {
        self.supply_frequency * (1.0 - slip) / f64::from(self.pole_pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// N·m.
    pub load_torque: f64,
    pub slip: f64,
}

impl OperatingPoint {
    /// Operating point for a load torque, with slip interpolated piecewise
    /// linearly over the load grid (0→0.01, 10→0.02, 30→0.04, 40→0.05) and
    /// held constant outside it.
    pub fn from_load(load_torque: f64) -> Self {
        let slip = if load_torque <= LOAD_GRID[0] {
            SLIP_GRID[0]
        } else if load_torque >= LOAD_GRID[3] {
            SLIP_GRID[3]
        } else {
            let i = LOAD_GRID.windows(2).position(|w| load_torque <= w[1]).unwrap_or(2);
            let t = (load_torque - LOAD_GRID[i]) / (LOAD_GRID[i + 1] - LOAD_GRID[i]);
            SLIP_GRID[i] + t * (SLIP_GRID[i + 1] - SLIP_GRID[i])
        };
        Self { load_torque, slip }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EccentricityType {
    Static,
    Dynamic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearingSite {
    Ball,
    Inner,
    Outer,
}

impl BearingSite {
    pub const ALL: [BearingSite; 3] = [BearingSite::Ball, BearingSite::Inner, BearingSite::Outer];
}

impl EccentricityType {
    pub const ALL: [EccentricityType; 3] = [
        EccentricityType::Static,
        EccentricityType::Dynamic,
        EccentricityType::Mixed,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    Healthy,
    Eccentricity { subtype: EccentricityType },
    BrokenBars { count: u8 },
    Bearing { site: BearingSite },
}

/// Fault family, which is also the class index of the type head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultFamily {
    Eccentricity,
    BarBreakage,
    Bearing,
}

impl FaultFamily {
    pub const ALL: [FaultFamily; 3] = [
        FaultFamily::Eccentricity,
        FaultFamily::BarBreakage,
        FaultFamily::Bearing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultFamily::Eccentricity => "eccentricity",
            FaultFamily::BarBreakage => "bar_breakage",
            FaultFamily::Bearing => "bearing",
        }
    }
}

impl std::fmt::Display for FaultFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(flatten)]
    pub kind: FaultKind,
    /// Normalized to `[0, 1]`.
    pub severity: f64,
    /// Bearing characteristic frequency, Hz (bearing faults only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fv: Option<f64>,
}

impl FaultSpec {
    pub fn healthy() -> Self {
        Self {
            kind: FaultKind::Healthy,
            severity: 0.0,
            fv: None,
        }
    }

    /// `percent` is the air-gap eccentricity level, one of 10/20/30/40.
    pub fn eccentricity(subtype: EccentricityType, percent: u32) -> Self {
        Self {
            kind: FaultKind::Eccentricity { subtype },
            severity: f64::from(percent) / 40.0,
            fv: None,
        }
    }

    pub fn broken_bars(count: u8) -> Self {
        Self {
            kind: FaultKind::BrokenBars { count },
            severity: f64::from(count) / 3.0,
            fv: None,
        }
    }

    /// `size_code` is the defect size code, one of 7/14/21.
    pub fn bearing(site: BearingSite, size_code: u32, fv: f64) -> Self {
        Self {
            kind: FaultKind::Bearing { site },
            severity: f64::from(size_code) / 21.0,
            fv: Some(fv),
        }
    }

    pub fn family(&self) -> Option<FaultFamily> {
        match self.kind {
            FaultKind::Healthy => None,
            FaultKind::Eccentricity { .. } => Some(FaultFamily::Eccentricity),
            FaultKind::BrokenBars { .. } => Some(FaultFamily::BarBreakage),
            FaultKind::Bearing { .. } => Some(FaultFamily::Bearing),
        }
    }

    pub fn is_fault(&self) -> bool {
        self.kind != FaultKind::Healthy
    }

    /// Short identifier of kind and subtype, e.g. `bearing-outer`.
    pub fn slug(&self) -> String {
        match self.kind {
            FaultKind::Healthy => "healthy".into(),
            FaultKind::Eccentricity { subtype } => format!("ecc-{}", snake(&subtype)),
            FaultKind::BrokenBars { count } => format!("brb-{count}"),
            FaultKind::Bearing { site } => format!("bearing-{}", snake(&site)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidSpec { what: "fault", detail });
        if !(0.0..=1.0).contains(&self.severity) {
            return bad(format!("severity {} outside [0, 1]", self.severity));
        }
        match self.kind {
            FaultKind::Healthy if self.severity != 0.0 => bad("healthy label with non-zero severity".into()),
            FaultKind::BrokenBars { count } if !(1..=3).contains(&count) => {
                bad(format!("broken bar count {count} outside 1..=3"))
            }
            FaultKind::Bearing { .. } => match self.fv {
                Some(fv) if fv > 0.0 => Ok(()),
                Some(fv) => Err(Error::InvalidFv(fv)),
                None => bad("bearing fault without characteristic frequency".into()),
            },
            _ => Ok(()),
        }
    }
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub channels: Vec<Channel>,
    pub sample_rate: f64,
    pub label: FaultSpec,
    pub operating_point: OperatingPoint,
    pub seed: u64,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.samples.as_slice())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }
}

/// Fault-model parameters. Amplitudes are relative to the carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultModel {
    pub kappa_brb: f64,
    pub kappa_ecc: f64,
    pub kappa_bear: f64,
    /// Depth of the slip-frequency modulation on dynamic eccentricity.
    pub dynamic_modulation: f64,
    /// Once-per-revolution vibration amplitude present in every recording, g.
    pub vibration_baseline: f64,
    pub bearing_harmonics: u32,
    pub fv_ball: f64,
    pub fv_inner: f64,
    pub fv_outer: f64,
}

impl Default for FaultModel {
    fn default() -> Self {
        Self {
            kappa_brb: 0.05,
            kappa_ecc: 0.04,
            kappa_bear: 0.5,
            dynamic_modulation: 0.5,
            vibration_baseline: 0.1,
            bearing_harmonics: 3,
            fv_ball: 60.0,
            fv_inner: 120.0,
            fv_outer: 90.0,
        }
    }
}

impl FaultModel {
    pub fn fv(&self, site: BearingSite) -> f64 {
        match site {
            BearingSite::Ball => self.fv_ball,
            BearingSite::Inner => self.fv_inner,
            BearingSite::Outer => self.fv_outer,
        }
    }
}

/// Rotor-bar fault frequency pair `f_s·(k(1−s)/p ± s)`, each clamped at 0.
pub fn brb_frequency(supply_frequency: f64, slip: f64, pole_pairs: u32, k: u32) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidSlip(slip));
    }
    if k < 1 || pole_pairs < 1 {
        return Err(Error::InvalidSpec {
            what: "brb_frequency",
            detail: format!("k={k} and p={pole_pairs} must both be >= 1"),
        });
    }
    let base = f64::from(k) * (1.0 - slip) / f64::from(pole_pairs);
    Ok((
        (supply_frequency * (base + slip)).max(0.0),
        (supply_frequency * (base - slip)).max(0.0),
    ))
}

/// Twice-slip current sidebands `f_s ∓ 2s·f_s`.
pub fn brb_sidebands(supply_frequency: f64, slip: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::InvalidSlip(slip));
    }
    let offset = 2.0 * slip * supply_frequency;
    Ok(((supply_frequency - offset).max(0.0), supply_frequency + offset))
}

/// `|f_s − m·f_v|` and `|f_s + m·f_v|` for `m = 1..=m_max`, ordered by `m`
/// with the difference term first.
pub fn bearing_frequencies(supply_frequency: f64, fv: f64, m_max: u32) -> Result<Vec<f64>> {
    if !(fv > 0.0) {
        return Err(Error::InvalidFv(fv));
    }
    if m_max < 1 {
        return Err(Error::InvalidSpec {
            what: "bearing_frequencies",
            detail: "m_max must be >= 1".into(),
        });
    }
    Ok((1..=m_max)
        .flat_map(|m| {
            let mf = f64::from(m) * fv;
            [(supply_frequency - mf).abs(), (supply_frequency + mf).abs()]
        })
        .collect())
}

/// Recording synthesizer for one machine.
#[derive(Debug, Clone, Default)]
pub struct Simulator {
    pub machine: MachineSpec,
    pub model: FaultModel,
}

/// A spectral component `amplitude · cos(2π f t + phase)`, optionally with a
/// slow amplitude modulation `1 + depth·cos(2π f_mod t)`.
#[derive(Debug, Clone, Copy)]
struct Tone {
    freq: f64,
    amplitude: f64,
    phase: f64,
    modulation: Option<(f64, f64)>,
}

impl Tone {
    fn at(&self, t: f64) -> f64 {
        let env = self
            .modulation
            .map_or(1.0, |(depth, fm)| 1.0 + depth * (2.0 * PI * fm * t).cos());
        self.amplitude * env * (2.0 * PI * self.freq * t + self.phase).cos()
    }
}

impl Simulator {
    pub fn new(machine: MachineSpec, model: FaultModel) -> Self {
        Self { machine, model }
    }

    /// Synthesizes one recording. `noise_snr_db = None` disables noise.
    pub fn synthesize(
        &self,
        op: OperatingPoint,
        fault: FaultSpec,
        noise_snr_db: Option<f64>,
        seed: u64,
        id: impl Into<String>,
    ) -> Result<Recording> {
        self.machine.validate()?;
        fault.validate()?;
        if !(0.0..1.0).contains(&op.slip) {
            return Err(Error::InvalidSlip(op.slip));
        }
        if let Some(snr) = noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidSpec {
                    what: "noise",
                    detail: format!("snr {snr} dB is not finite"),
                });
            }
        }

        let m = &self.machine;
        let fs = m.supply_frequency;
        let amp = m.rated_current;
        let s = op.slip;
        let fr = m.rotor_frequency(s);
        let mut rng = Rng::new(derive_seed(seed, "phases"));

        // Components shared by all three phases; each phase adds its own offset.
        let mut current_tones = vec![Tone {
            freq: fs,
            amplitude: amp,
            phase: 0.0,
            modulation: None,
        }];
        let mut vibration_tones = vec![Tone {
            freq: fr,
            amplitude: self.model.vibration_baseline,
            phase: 0.0,
            modulation: None,
        }];

        match fault.kind {
            FaultKind::Healthy => {}
            FaultKind::BrokenBars { .. } => {
                let a = fault.severity * self.model.kappa_brb * amp;
                let (lo, hi) = brb_sidebands(fs, s)?;
                for freq in [lo, hi] {
                    current_tones.push(Tone { freq, amplitude: a, phase: 0.0, modulation: None });
                }
            }
            FaultKind::Eccentricity { subtype } => {
                let a = fault.severity * self.model.kappa_ecc * amp;
                let dynamic = Some((self.model.dynamic_modulation, s * fs));
                let variants: &[Option<(f64, f64)>] = match subtype {
                    EccentricityType::Static => &[None],
                    EccentricityType::Dynamic => &[dynamic],
                    EccentricityType::Mixed => &[None, dynamic],
                };
                for &modulation in variants {
                    for freq in [(fs - fr).abs(), fs + fr] {
                        current_tones.push(Tone { freq, amplitude: a, phase: 0.0, modulation });
                    }
                }
            }
            FaultKind::Bearing { .. } => {
                // validate() guarantees fv is present
                let fv = fault.fv.unwrap_or_default();
                let freqs = bearing_frequencies(fs, fv, self.model.bearing_harmonics)?;
                for (idx, freq) in freqs.into_iter().enumerate() {
                    let harmonic = (idx / 2 + 1) as f64;
                    vibration_tones.push(Tone {
                        freq,
                        amplitude: fault.severity * self.model.kappa_bear / harmonic,
                        phase: rng.uniform(0.0, 2.0 * PI),
                        modulation: None,
                    });
                }
            }
        }

        let n = m.sample_count();
        let dt = 1.0 / m.sample_rate;
        let phase_offsets = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];
        let mut channels = Vec::with_capacity(CHANNEL_NAMES.len());
        for (ch, offset) in phase_offsets.iter().enumerate() {
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    current_tones
                        .iter()
                        .map(|tone| Tone { phase: tone.phase + offset, ..*tone }.at(t))
                        .sum()
                })
                .collect();
            channels.push(Channel {
                name: CHANNEL_NAMES[ch].to_owned(),
                samples,
            });
        }
        let vibration = (0..n)
            .map(|i| vibration_tones.iter().map(|tone| tone.at(i as f64 * dt)).sum())
            .collect();
        channels.push(Channel {
            name: CHANNEL_NAMES[3].to_owned(),
            samples: vibration,
        });

        if let Some(snr) = noise_snr_db {
            for ch in &mut channels {
                let power = ch.samples.iter().map(|v| v * v).sum::<f64>() / n as f64;
                let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
                let mut noise = Rng::new(derive_seed(seed, &ch.name));
                for v in &mut ch.samples {
                    *v += sigma * noise.standard_normal();
                }
            }
        }

        Ok(Recording {
            id: id.into(),
            channels,
            sample_rate: m.sample_rate,
            label: fault,
            operating_point: op,
            seed,
        })
    }

    /// The full condition grid in catalog order, as `(id, operating point, fault)`.
    pub fn catalog_conditions(&self) -> Vec<(String, OperatingPoint, FaultSpec)> {
        let mut faults = vec![FaultSpec::healthy()];
        for subtype in EccentricityType::ALL {
            for pct in [10, 20, 30, 40] {
                faults.push(FaultSpec::eccentricity(subtype, pct));
            }
        }
        for count in 1..=3 {
            faults.push(FaultSpec::broken_bars(count));
        }
        for site in BearingSite::ALL {
            for code in [7, 14, 21] {
                faults.push(FaultSpec::bearing(site, code, self.model.fv(site)));
            }
        }
        let mut out = Vec::with_capacity(faults.len() * LOAD_GRID.len());
        for fault in faults {
            for load in LOAD_GRID {
                let idx = out.len();
                let id = format!(
                    "{idx:03}-{}-s{:03}-L{:02}",
                    fault.slug(),
                    (fault.severity * 100.0).round() as u32,
                    load as u32
                );
                out.push((id, OperatingPoint::from_load(load), fault));
            }
        }
        out
    }

    /// One replicate of the condition grid (100 recordings), noisy at
    /// `noise_snr_db`, with per-recording seeds derived from `seed` and the id.
    pub fn generate_catalog(&self, seed: u64, noise_snr_db: Option<f64>) -> Result<Vec<Recording>> {
        self.catalog_conditions()
            .into_par_iter()
            .map(|(id, op, fault)| {
                let rec_seed = derive_seed(seed, &id);
                self.synthesize(op, fault, noise_snr_db, rec_seed, id)
            })
            .collect()
    }
}
