//! Text file formats: trial CSV, dataset directories, reports, configuration
//! and model files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{validate_calibration, ChannelCalibration};
use crate::direction::DirectionLabel;
use crate::eval::{AccuracyReport, Counts};
use crate::geometry::{self, InterfaceGeometry, LayoutDims, MotionLimits, SpringParams};
use crate::mapping::{CalibrationOptions, MappingModel};
use crate::mechanics::CELLS;
use crate::synth::{Dataset, DatasetSpec, NoiseSpec, Trial, Truth};
use crate::{Command64, Frame64, Plant, Pose64};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.csv";

const FORCE_COLUMNS: [&str; CELLS] = ["F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8"];
const TRUTH_COLUMNS: [&str; 8] = ["x", "y", "yaw", "pitch", "Fx", "Fy", "Fz", "M"];
const MANIFEST_COLUMNS: [&str; 5] = ["file", "subject", "direction", "repetition", "seed"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: malformed header, missing column `{column}`")]
    MalformedHeader { path: PathBuf, column: String },
    #[error("{path}:{line}: {message}")]
    MalformedRow { path: PathBuf, line: u64, message: String },
    #[error("manifest references missing file {0}")]
    MissingFile(PathBuf),
    #[error("model format version {found} is not supported (expected {expected})")]
    ModelVersion { found: i64, expected: u32 },
    #[error("model digest mismatch: file says {stored}, content hashes to {computed}")]
    DigestMismatch { stored: String, computed: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid codec calibration: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> FormatError {
    FormatError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

// Trials ----------------------------------------------------------------

/// CSV text of a trial's frames, plus truth columns when present.
pub fn trial_to_csv(trial: &Trial) -> String {
    let mut out = String::from("t");
    for c in FORCE_COLUMNS {
        let _ = write!(out, ",{c}");
    }
    if trial.truth.is_some() {
        for c in TRUTH_COLUMNS {
            let _ = write!(out, ",{c}");
        }
    }
    out.push('\n');
    for (k, f) in trial.frames.iter().enumerate() {
        let _ = write!(out, "{}", f.t);
        for v in f.forces {
            let _ = write!(out, ",{v}");
        }
        if let Some(truth) = &trial.truth {
            let p = truth.poses[k];
            let c = truth.commands[k];
            for v in [p.x, p.y, p.yaw, p.pitch, c.fx, c.fy, c.fz, c.m] {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Frames and optional truth parsed from trial CSV text. `path` labels errors.
pub fn trial_from_csv(text: &str, path: &Path) -> Result<(Vec<Frame64>, Option<Truth>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| FormatError::MalformedRow { path: path.into(), line: 1, message: e.to_string() })?
        .clone();
    let need = |name: &str| {
        column_index(&headers, name)
            .ok_or_else(|| FormatError::MalformedHeader { path: path.into(), column: name.into() })
    };
    let t_col = need("t")?;
    let f_cols = FORCE_COLUMNS.iter().map(|c| need(c)).collect::<Result<Vec<_>>>()?;
    let truth_cols = if TRUTH_COLUMNS.iter().any(|c| column_index(&headers, c).is_some()) {
        Some(TRUTH_COLUMNS.iter().map(|c| need(c)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let mut frames = Vec::new();
    let (mut poses, mut commands) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| FormatError::MalformedRow { path: path.into(), line, message: e.to_string() })?;
        let num = |col: usize| -> Result<f64> {
            let s = rec.get(col).unwrap_or("").trim();
            s.parse::<f64>().map_err(|_| FormatError::MalformedRow {
                path: path.into(),
                line,
                message: format!("`{s}` in column `{}` is not a number", &headers[col]),
            })
        };
        let mut forces = [0.0; CELLS];
        for (j, &c) in f_cols.iter().enumerate() {
            forces[j] = num(c)?;
        }
        frames.push(Frame64::new(num(t_col)?, forces));
        if let Some(cols) = &truth_cols {
            let v = cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
            poses.push(Pose64::new(v[0], v[1], v[2], v[3]));
            commands.push(Command64::new(v[4], v[5], v[6], v[7]));
        }
    }
    let truth = truth_cols.map(|_| Truth { poses, commands });
    Ok((frames, truth))
}

pub fn write_trial(path: &Path, trial: &Trial) -> Result<()> {
    write_text(path, &trial_to_csv(trial))
}

/// Reads frames from a trial CSV; metadata comes from the caller.
pub fn read_trial_file(path: &Path) -> Result<(Vec<Frame64>, Option<Truth>)> {
    trial_from_csv(&read_text(path)?, path)
}

pub fn trial_file_name(t: &Trial) -> String {
    format!("s{:02}_{}_r{}.csv", t.subject, t.direction, t.repetition)
}

/// Writes one CSV per trial plus the manifest.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut manifest = MANIFEST_COLUMNS.join(",");
    manifest.push('\n');
    for t in &ds.trials {
        let name = trial_file_name(t);
        write_trial(&dir.join(&name), t)?;
        let _ = writeln!(manifest, "{name},{},{},{},{}", t.subject, t.direction, t.repetition, t.seed);
    }
    write_text(&dir.join(MANIFEST), &manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST);
    let text = read_text(&mpath)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| FormatError::MalformedRow { path: mpath.clone(), line: 1, message: e.to_string() })?
        .clone();
    let cols = MANIFEST_COLUMNS
        .iter()
        .map(|c| {
            column_index(&headers, c)
                .ok_or_else(|| FormatError::MalformedHeader { path: mpath.clone(), column: (*c).into() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trials = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let bad = |m: String| FormatError::MalformedRow { path: mpath.clone(), line, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim().to_string();
        let file = dir.join(field(0));
        let subject = field(1).parse::<u32>().map_err(|e| bad(format!("subject: {e}")))?;
        let direction = field(2).parse::<DirectionLabel>().map_err(|e| bad(e.to_string()))?;
        let repetition = field(3).parse::<u32>().map_err(|e| bad(format!("repetition: {e}")))?;
        let seed = field(4).parse::<u64>().map_err(|e| bad(format!("seed: {e}")))?;
        if !file.is_file() {
            return Err(FormatError::MissingFile(file));
        }
        let (frames, truth) = read_trial_file(&file)?;
        trials.push(Trial { subject, direction, repetition, seed, frames, truth });
    }
    Ok(Dataset { trials })
}

// Reports ----------------------------------------------------------------

/// Rebuilds a report from the per-(direction, subject) rows of its CSV.
pub fn report_from_csv(text: &str, path: &Path) -> Result<AccuracyReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| FormatError::MalformedRow { path: path.into(), line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| {
        column_index(&headers, name)
            .ok_or_else(|| FormatError::MalformedHeader { path: path.into(), column: name.into() })
    };
    let (mc, dc, sc, cc, tc) = (col("model")?, col("direction")?, col("subject")?, col("correct")?, col("total")?);
    let mut model = String::new();
    let mut cells = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let bad = |m: String| FormatError::MalformedRow { path: path.into(), line, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let Ok(subject) = rec.get(sc).unwrap_or("").parse::<u32>() else {
            continue;
        };
        model = rec.get(mc).unwrap_or("").to_string();
        let d = rec.get(dc).unwrap_or("").parse::<DirectionLabel>().map_err(|e| bad(e.to_string()))?;
        let n = |c: usize| rec.get(c).unwrap_or("").parse::<u64>().map_err(|e| bad(e.to_string()));
        cells.insert((d, subject), Counts { correct: n(cc)?, total: n(tc)? });
    }
    if cells.is_empty() {
        return Err(bad_parse(path, "report has no per-subject rows"));
    }
    Ok(AccuracyReport::from_cells(model, cells))
}

pub fn read_report(path: &Path) -> Result<AccuracyReport> {
    report_from_csv(&read_text(path)?, path)
}

fn bad_parse(path: &Path, m: impl std::fmt::Display) -> FormatError {
    FormatError::Parse { path: path.into(), message: m.to_string() }
}

// Configuration ------------------------------------------------------------

/// Geometry and spring constants from which the plant is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub dims: LayoutDims<f64>,
    pub pitch_lever: f64,
    /// Limits in metres and radians.
    pub limits: MotionLimits<f64>,
    pub stiffness: f64,
    pub free_length: f64,
    pub home_deflection: f64,
    pub max_deflection: f64,
    pub torsion_stiffness: f64,
    pub pitch_preload: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let (g, s) = geometry::default_geometry::<f64>();
        Self {
            dims: g.dims,
            pitch_lever: g.pitch_lever,
            limits: g.limits,
            stiffness: s.stiffness[0],
            free_length: s.free_length,
            home_deflection: s.home_deflection,
            max_deflection: s.max_deflection,
            torsion_stiffness: s.torsion_stiffness,
            pitch_preload: s.pitch_preload[0],
        }
    }
}

impl PlantConfig {
    pub fn build(&self) -> Result<Plant> {
        let geom = InterfaceGeometry::from_dims(self.dims, self.pitch_lever, self.limits);
        let springs = SpringParams::uniform(
            &geom,
            self.stiffness,
            self.free_length,
            self.home_deflection,
            self.max_deflection,
            self.torsion_stiffness,
            self.pitch_preload,
        );
        let report = geometry::validate(&geom, &springs);
        if !report.is_ok() {
            return Err(FormatError::Geometry(report.to_string()));
        }
        Ok(Plant { geom, springs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub samples: usize,
    pub steps: usize,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self { samples: 100_000, steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub channels: [ChannelCalibration; CELLS],
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { channels: [ChannelCalibration::default(); CELLS] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub plant: PlantConfig,
    pub noise: NoiseSpec,
    pub dataset: DatasetSpec,
    pub mapping: CalibrationOptions,
    /// Repetitions used for calibration; the rest are evaluated.
    pub calibration_reps: Vec<u32>,
    pub workspace: WorkspaceConfig,
    pub codec: CodecConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            plant: PlantConfig::default(),
            noise: NoiseSpec::zero(),
            dataset: DatasetSpec::default(),
            mapping: CalibrationOptions::default(),
            calibration_reps: vec![0],
            workspace: WorkspaceConfig::default(),
            codec: CodecConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| bad_parse(path, e))?;
        cfg.noise.validate().map_err(|e| bad_parse(path, e))?;
        validate_calibration(&cfg.codec.channels).map_err(|e| FormatError::Calibration(e.to_string()))?;
        cfg.plant.build()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

// Models -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    pub subject: u32,
    pub model: MappingModel,
}

/// Per-subject models of one mapping method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub method: String,
    pub calibration_reps: Vec<u32>,
    pub models: Vec<SubjectModel>,
}

impl ModelBundle {
    pub fn for_subject(&self, subject: u32) -> Option<&MappingModel> {
        self.models.iter().find(|m| m.subject == subject).map(|m| &m.model)
    }
}

fn digest_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn model_to_text(bundle: &ModelBundle) -> String {
    let body = toml::to_string(bundle).expect("model serializes");
    format!("format_version = {MODEL_FORMAT_VERSION}\ndigest = \"{}\"\n\n{body}", digest_hex(&body))
}

pub fn model_from_text(text: &str, path: &Path) -> Result<ModelBundle> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| bad_parse(path, e))?;
    let found = match table.remove("format_version") {
        Some(toml::Value::Integer(v)) => v,
        _ => return Err(bad_parse(path, "missing integer `format_version`")),
    };
    if found != i64::from(MODEL_FORMAT_VERSION) {
        return Err(FormatError::ModelVersion { found, expected: MODEL_FORMAT_VERSION });
    }
    let stored = match table.remove("digest") {
        Some(toml::Value::String(s)) => s,
        _ => return Err(bad_parse(path, "missing string `digest`")),
    };
    let bundle: ModelBundle = table.try_into().map_err(|e| bad_parse(path, e))?;
    let computed = digest_hex(&toml::to_string(&bundle).expect("model serializes"));
    if computed != stored {
        return Err(FormatError::DigestMismatch { stored, computed });
    }
    Ok(bundle)
}

pub fn write_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    write_text(path, &model_to_text(bundle))
}

pub fn read_model(path: &Path) -> Result<ModelBundle> {
    model_from_text(&read_text(path)?, path)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_trial;

    fn trial() -> Trial {
        let noise = NoiseSpec { sigma: 0.05, ..NoiseSpec::zero() };
        generate_trial(&Plant::default(), 3, DirectionLabel::RTU, 1, &noise, 2.0, 99).unwrap()
    }

    #[test]
    fn trial_csv_round_trip_is_exact() {
        let t = trial();
        let (frames, truth) = trial_from_csv(&trial_to_csv(&t), Path::new("x.csv")).unwrap();
        assert_eq!(frames, t.frames);
        assert_eq!(truth, t.truth);
    }

    #[test]
    fn missing_force_column_is_named() {
        let text = trial_to_csv(&trial()).replacen(",F7,", ",G7,", 1);
        match trial_from_csv(&text, Path::new("x.csv")) {
            Err(FormatError::MalformedHeader { column, .. }) => assert_eq!(column, "F7"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_truth_columns_rejected() {
        let text = "t,F1,F2,F3,F4,F5,F6,F7,F8,x\n0,1,1,1,1,1,1,1,1,0\n";
        match trial_from_csv(text, Path::new("x.csv")) {
            Err(FormatError::MalformedHeader { column, .. }) => assert_eq!(column, "y"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset { trials: vec![trial()] };
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        let name = trial_file_name(&ds.trials[0]);
        fs::remove_file(dir.path().join(&name)).unwrap();
        match read_dataset(dir.path()) {
            Err(FormatError::MissingFile(p)) => assert!(p.ends_with(&name)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml(), Path::new("c.toml")).unwrap();
        assert_eq!(back, cfg);
        let partial = Config::from_toml("seed = 9\n[noise]\nsigma = 0.1\n", Path::new("c.toml")).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.noise.sigma, 0.1);
        assert_eq!(partial.plant, PlantConfig::default());
        assert!(Config::from_toml("bogus = 1\n", Path::new("c.toml")).is_err());
    }

    #[test]
    fn bad_geometry_config_rejected() {
        let err = Config::from_toml("[plant]\nhome_deflection = 0.05\n", Path::new("c.toml")).unwrap_err();
        assert!(matches!(err, FormatError::Geometry(_)), "{err}");
    }
}
