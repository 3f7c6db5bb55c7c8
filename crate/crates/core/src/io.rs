//! On-disk dataset format: one CSV per recording (`t` then one column per
//! channel) and a JSON manifest describing every recording.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sim::{Channel, FaultModel, FaultSpec, MachineSpec, OperatingPoint, Recording};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDINGS_DIR: &str = "recordings";

/// How a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub machine: MachineSpec,
    pub fault_model: FaultModel,
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Path relative to the dataset directory.
    pub file: String,
    pub sample_rate: f64,
    pub samples: usize,
    pub channels: Vec<String>,
    pub label: FaultSpec,
    pub operating_point: OperatingPoint,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(flatten)]
    pub info: DatasetInfo,
    pub recordings: Vec<ManifestEntry>,
}

/// Signal columns of a recording CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub t: Vec<f64>,
    pub channels: Vec<Channel>,
}

impl SignalTable {
    /// Sample rate implied by the time column, rounded to 1 µHz.
    pub fn sample_rate(&self) -> Option<f64> {
        let n = self.t.len();
        if n < 2 {
            return None;
        }
        let span = self.t[n - 1] - self.t[0];
        let rate = (n - 1) as f64 / span;
        (rate.is_finite() && rate > 0.0).then(|| (rate * 1e6).round() / 1e6)
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist"),
        )),
        _ => Ok(()),
    }
}

/// Writes `t, <channels...>` with every value in shortest round-trip form.
pub fn write_recording_csv(path: &Path, rec: &Recording) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("t");
    for ch in &rec.channels {
        line.push(',');
        line.push_str(&ch.name);
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for i in 0..rec.len() {
        line.clear();
        line.push_str(&(i as f64 / rec.sample_rate).to_string());
        for ch in &rec.channels {
            line.push(',');
            line.push_str(&ch.samples[i].to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a recording CSV. The first column must be `t`; every other column
/// is a channel. Errors name the file and the 1-based line.
pub fn read_recording_csv(path: &Path) -> Result<SignalTable> {
    let shown = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { path: shown.clone(), line: 1, detail: e.to_string() })?
        .clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(Error::Parse {
            path: shown,
            line: 1,
            detail: format!("header must be `t,<channel>,...`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut t = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { path: shown.clone(), line, detail: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut values = record.iter().map(|field| {
            field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                path: shown.clone(),
                line,
                detail: format!("`{field}` is not a finite number"),
            })
        });
        t.push(values.next().transpose()?.unwrap_or(f64::NAN));
        for col in columns.iter_mut() {
            col.push(values.next().transpose()?.unwrap_or(f64::NAN));
        }
    }
    if t.is_empty() {
        return Err(Error::Parse { path: shown, line: 2, detail: "no samples".into() });
    }
    let channels = names.into_iter().zip(columns).map(|(name, samples)| Channel { name, samples }).collect();
    Ok(SignalTable { t, channels })
}

fn recording_file(id: &str) -> String {
    format!("{RECORDINGS_DIR}/{id}.csv")
}

/// Writes every recording and the manifest into `dir` (created if needed;
/// its parent must exist).
pub fn write_dataset(dir: &Path, info: &DatasetInfo, recordings: &[Recording]) -> Result<Manifest> {
    create_parent(dir)?;
    let rec_dir = dir.join(RECORDINGS_DIR);
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let mut entries = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let file = recording_file(&rec.id);
        write_recording_csv(&dir.join(&file), rec)?;
        entries.push(ManifestEntry {
            id: rec.id.clone(),
            file,
            sample_rate: rec.sample_rate,
            samples: rec.len(),
            channels: rec.channel_names(),
            label: rec.label,
            operating_point: rec.operating_point,
            seed: rec.seed,
        });
    }
    let manifest = Manifest { info: info.clone(), recordings: entries };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Format {
        path: path.display().to_string(),
        detail: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

/// Loads a recording CSV and attaches the manifest metadata, checking
/// channel names and length.
pub fn load_recording(dir: &Path, entry: &ManifestEntry) -> Result<Recording> {
    let path: PathBuf = dir.join(&entry.file);
    let table = read_recording_csv(&path)?;
    let found: Vec<String> = table.channels.iter().map(|c| c.name.clone()).collect();
    if found != entry.channels {
        return Err(Error::ChannelMismatch {
            path: path.display().to_string(),
            expected: entry.channels.clone(),
            found,
        });
    }
    if table.t.len() != entry.samples {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!("{} samples, manifest says {}", table.t.len(), entry.samples),
        });
    }
    Ok(Recording {
        id: entry.id.clone(),
        channels: table.channels,
        sample_rate: entry.sample_rate,
        label: entry.label,
        operating_point: entry.operating_point,
        seed: entry.seed,
    })
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Recording>)> {
    let manifest = read_manifest(dir)?;
    let recordings = manifest
        .recordings
        .iter()
        .map(|e| load_recording(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, recordings))
}
