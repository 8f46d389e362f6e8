//! Sensor-to-command mappings: statics, global and local ICA, kNN.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::{Channel, DirectionLabel};
use crate::ica::{fastica, IcaError, IcaOptions};
use crate::mechanics::{reconstruct_statics, MechanicsError, StaticsOptions, CELLS};
use crate::synth::{progress, Trial};
use crate::{Command64, Frame64, Plant};

/// Channel values at or below this fraction of the largest channel magnitude
/// of the same command are treated as zero.
pub const RELATIVE_ZERO: f64 = 1e-9;
/// Leading samples of each calibration trial averaged into the rest frame.
pub const REST_SAMPLES: usize = 3;
/// Two components claiming one channel closer than this are ambiguous.
pub const ASSIGNMENT_MARGIN: f64 = 0.05;

/// Fixed sensor groups of the local model (0-based cells) and their channels.
pub const LOCAL_GROUPS: [([usize; 4], [Channel; 2]); 2] = [
    ([2, 3, 4, 5], [Channel::Fx, Channel::M]),
    ([0, 1, 6, 7], [Channel::Fy, Channel::Fz]),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("calibration set has no {0} trial")]
    MissingDirection(DirectionLabel),
    #[error("calibration trial {0} is not single-axis")]
    NotSingleAxis(DirectionLabel),
    #[error("trial {0} has no frames")]
    EmptyTrial(DirectionLabel),
    #[error("components {first} and {second} both claim {channel:?} within the assignment margin")]
    AmbiguousAssignment { channel: Channel, first: usize, second: usize },
    #[error("channel {0:?} has no calibration excursion to scale against")]
    NoExcursion(Channel),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("k = {k} is invalid for {n} training samples (need odd k between 1 and n)")]
    InvalidK { k: usize, n: usize },
    #[error("feature length {got} does not match model dimension {want}")]
    FeatureDimension { got: usize, want: usize },
    #[error("a kNN model predicts labels, not command vectors")]
    NotACommandModel,
    #[error(transparent)]
    Ica(#[from] IcaError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
}

pub type Result<T> = std::result::Result<T, MappingError>;

/// Per-channel zero regions (channel units).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Deadbands {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub m: f64,
}

impl Deadbands {
    pub fn new(eps: [f64; 4]) -> Self {
        Self { fx: eps[0], fy: eps[1], fz: eps[2], m: eps[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.fx, self.fy, self.fz, self.m]
    }

    pub fn get(&self, c: Channel) -> f64 {
        self.to_array()[c.index()]
    }

    pub fn scaled(self, f: f64) -> Self {
        Self::new(self.to_array().map(|v| v * f))
    }
}

/// Largest channel magnitude of a command, the reference for [`RELATIVE_ZERO`].
pub fn command_scale(cmd: &[f64; 4]) -> f64 {
    cmd.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn is_numerically_zero(v: f64, scale: f64) -> bool {
    v.abs() <= RELATIVE_ZERO * scale
}

/// Single-axis calibration trials of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    trials: Vec<Trial>,
}

impl CalibrationSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        for t in &trials {
            if !t.direction.is_single() {
                return Err(MappingError::NotSingleAxis(t.direction));
            }
            if t.frames.is_empty() {
                return Err(MappingError::EmptyTrial(t.direction));
            }
        }
        for d in DirectionLabel::SINGLE {
            if !trials.iter().any(|t| t.direction == d) {
                return Err(MappingError::MissingDirection(d));
            }
        }
        Ok(Self { trials })
    }

    /// Single-axis trials of `subject` whose repetition is in `reps`.
    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>, subject: u32, reps: &[u32]) -> Result<Self> {
        Self::new(
            trials
                .into_iter()
                .filter(|t| t.subject == subject && t.direction.is_single() && reps.contains(&t.repetition))
                .cloned()
                .collect(),
        )
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    fn frames(&self) -> impl Iterator<Item = &Frame64> {
        self.trials.iter().flat_map(|t| t.frames.iter())
    }

    fn channel_trials(&self, c: Channel) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| t.direction.channel() == Some(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// The eight cell forces.
    Raw,
    /// The statics wrench (F_x, F_y, F_z, M).
    Wrench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub ica: IcaOptions,
    pub safety_factor: f64,
    /// Loop-closure residual accepted by the statics mapping (m²).
    pub residual_tolerance: f64,
    pub knn_k: usize,
    pub knn_mode: FeatureMode,
    /// Fraction of the commanded excursion below which a kNN training sample
    /// is labelled Neutral.
    pub activity_threshold: f64,
    /// Train kNN on diagonal trials as well (they are its only source of
    /// diagonal labels).
    pub knn_include_diagonal: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            ica: IcaOptions::default(),
            safety_factor: 1.0,
            residual_tolerance: 1e-2,
            knn_k: 3,
            knn_mode: FeatureMode::Raw,
            activity_threshold: 0.1,
            knn_include_diagonal: true,
        }
    }
}

/// Linear unmixing of one sensor group into signed, scaled channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaBlock {
    /// 0-based cells feeding the block.
    pub cells: Vec<usize>,
    /// Row-major unmixing, one row per component.
    pub unmixing: Vec<Vec<f64>>,
    /// Rest-frame forces of `cells` subtracted before unmixing.
    pub rest: Vec<f64>,
    pub channels: Vec<Channel>,
    pub signs: Vec<f64>,
    pub scales: Vec<f64>,
}

impl IcaBlock {
    /// Raw components (before sign and scale) of a frame.
    pub fn components(&self, frame: &Frame64) -> Vec<f64> {
        self.unmixing
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.cells)
                    .zip(&self.rest)
                    .map(|((w, &c), r)| w * (frame.forces[c] - r))
                    .sum()
            })
            .collect()
    }

    fn apply(&self, frame: &Frame64, out: &mut [f64; 4]) {
        for (i, y) in self.components(frame).into_iter().enumerate() {
            out[self.channels[i].index()] = self.signs[i] * self.scales[i] * y;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub mode: FeatureMode,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<DirectionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum ModelKind {
    Statics,
    GlobalIca { block: IcaBlock },
    LocalIca { blocks: Vec<IcaBlock> },
    Knn { knn: KnnModel },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Statics => "statics",
            ModelKind::GlobalIca { .. } => "global-ica",
            ModelKind::LocalIca { .. } => "local-ica",
            ModelKind::Knn { .. } => "knn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingModel {
    pub kind: ModelKind,
    pub plant: Plant,
    pub residual_tolerance: f64,
    pub deadbands: Deadbands,
}

impl MappingModel {
    fn statics_options(&self) -> StaticsOptions<f64> {
        StaticsOptions { residual_tolerance: self.residual_tolerance }
    }
}

fn statics_wrench(frame: &Frame64, plant: &Plant, tol: f64) -> Result<Command64> {
    let opts = StaticsOptions { residual_tolerance: tol };
    Ok(reconstruct_statics(frame, &plant.geom, &plant.springs, &opts, None)?.wrench)
}

/// Command vector of a frame. Deadbands are not applied here.
pub fn map(frame: &Frame64, model: &MappingModel) -> Result<Command64> {
    let mut out = [0.0; 4];
    match &model.kind {
        ModelKind::Statics => {
            let opts = model.statics_options();
            return Ok(reconstruct_statics(frame, &model.plant.geom, &model.plant.springs, &opts, None)?.wrench);
        }
        ModelKind::GlobalIca { block } => block.apply(frame, &mut out),
        ModelKind::LocalIca { blocks } => blocks.iter().for_each(|b| b.apply(frame, &mut out)),
        ModelKind::Knn { .. } => return Err(MappingError::NotACommandModel),
    }
    Ok(Command64::from_array(out))
}

/// Statics mapping with deadbands from the calibration set.
pub fn calibrate_statics(calib: &CalibrationSet, plant: &Plant, opts: &CalibrationOptions) -> Result<MappingModel> {
    let mut model = MappingModel {
        kind: ModelKind::Statics,
        plant: plant.clone(),
        residual_tolerance: opts.residual_tolerance,
        deadbands: Deadbands::default(),
    };
    model.deadbands = estimate_deadbands(calib, &model, opts.safety_factor)?;
    Ok(model)
}

pub fn calibrate_global_ica(calib: &CalibrationSet, plant: &Plant, opts: &CalibrationOptions) -> Result<MappingModel> {
    let cells: Vec<usize> = (0..CELLS).collect();
    let block = fit_block(calib, plant, opts, &cells, &Channel::ALL, opts.ica.seed)?;
    finish(calib, plant, opts, ModelKind::GlobalIca { block })
}

pub fn calibrate_local_ica(calib: &CalibrationSet, plant: &Plant, opts: &CalibrationOptions) -> Result<MappingModel> {
    let blocks = LOCAL_GROUPS
        .iter()
        .enumerate()
        .map(|(g, (cells, channels))| fit_block(calib, plant, opts, cells, channels, opts.ica.seed.wrapping_add(g as u64)))
        .collect::<Result<Vec<_>>>()?;
    finish(calib, plant, opts, ModelKind::LocalIca { blocks })
}

fn finish(calib: &CalibrationSet, plant: &Plant, opts: &CalibrationOptions, kind: ModelKind) -> Result<MappingModel> {
    let mut model = MappingModel {
        kind,
        plant: plant.clone(),
        residual_tolerance: opts.residual_tolerance,
        deadbands: Deadbands::default(),
    };
    model.deadbands = estimate_deadbands(calib, &model, opts.safety_factor)?;
    Ok(model)
}

fn rest_forces(calib: &CalibrationSet, cells: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; cells.len()];
    let mut n = 0usize;
    for t in calib.trials() {
        for f in t.frames.iter().take(REST_SAMPLES) {
            for (s, &c) in sum.iter_mut().zip(cells) {
                *s += f.forces[c];
            }
            n += 1;
        }
    }
    sum.into_iter().map(|s| s / n as f64).collect()
}

fn fit_block(
    calib: &CalibrationSet,
    plant: &Plant,
    opts: &CalibrationOptions,
    cells: &[usize],
    channels: &[Channel],
    seed: u64,
) -> Result<IcaBlock> {
    let frames: Vec<&Frame64> = calib.frames().collect();
    let data = DMatrix::from_fn(frames.len(), cells.len(), |i, j| frames[i].forces[cells[j]]);
    let ica = fastica(&data, channels.len(), &IcaOptions { seed, ..opts.ica.clone() })?;
    let mut block = IcaBlock {
        cells: cells.to_vec(),
        unmixing: ica.unmixing.row_iter().map(|r| r.iter().copied().collect()).collect(),
        rest: rest_forces(calib, cells),
        channels: vec![Channel::Fx; channels.len()],
        signs: vec![1.0; channels.len()],
        scales: vec![1.0; channels.len()],
    };
    let k = channels.len();

    // Mean |component| over each channel's single-axis trials.
    let mut act = vec![vec![0.0; k]; k];
    for (ci, &ch) in channels.iter().enumerate() {
        let mut n = 0usize;
        for t in calib.channel_trials(ch) {
            for f in &t.frames {
                for (p, y) in block.components(f).into_iter().enumerate() {
                    act[p][ci] += y.abs();
                }
                n += 1;
            }
        }
        for row in act.iter_mut() {
            row[ci] /= n as f64;
        }
    }
    let assignment = assign(&act)?;
    for (p, &ci) in assignment.iter().enumerate() {
        let ch = channels[ci];
        block.channels[p] = ch;
        let (neg, pos) = ch.directions();
        let mean_of = |d: DirectionLabel| {
            let (s, n) = calib
                .trials()
                .iter()
                .filter(|t| t.direction == d)
                .flat_map(|t| t.frames.iter())
                .fold((0.0, 0usize), |(s, n), f| (s + block.components(f)[p], n + 1));
            s / n.max(1) as f64
        };
        block.signs[p] = if mean_of(pos) - mean_of(neg) >= 0.0 { 1.0 } else { -1.0 };

        let (mut comp_ext, mut stat_ext) = (0.0f64, 0.0f64);
        for t in calib.channel_trials(ch) {
            for f in &t.frames {
                comp_ext = comp_ext.max(block.components(f)[p].abs());
                let w = statics_wrench(f, plant, opts.residual_tolerance)?;
                stat_ext = stat_ext.max(w.to_array()[ch.index()].abs());
            }
        }
        if !(comp_ext > 0.0 && stat_ext > 0.0) {
            return Err(MappingError::NoExcursion(ch));
        }
        block.scales[p] = stat_ext / comp_ext;
    }
    Ok(block)
}

/// Bijection component → channel index maximizing total activation. Two
/// components preferring the same channel with activations within
/// [`ASSIGNMENT_MARGIN`] of each other are rejected.
pub fn assign(act: &[Vec<f64>]) -> Result<Vec<usize>> {
    let k = act.len();
    let mut claims: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, row) in act.iter().enumerate() {
        let best = (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        claims.entry(best).or_default().push(p);
    }
    for (&ci, comps) in &claims {
        for (i, &a) in comps.iter().enumerate() {
            for &b in &comps[i + 1..] {
                let (x, y) = (act[a][ci], act[b][ci]);
                if (x - y).abs() <= ASSIGNMENT_MARGIN * x.max(y) {
                    return Err(MappingError::AmbiguousAssignment {
                        channel: Channel::ALL[ci.min(3)],
                        first: a,
                        second: b,
                    });
                }
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    permutations(k, &mut |perm| {
        let score: f64 = perm.iter().enumerate().map(|(p, &c)| act[p][c]).sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, perm.to_vec()));
        }
    });
    Ok(best.map(|(_, p)| p).unwrap_or_default())
}

fn permutations(k: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(perm: &mut Vec<usize>, used: &mut [bool], visit: &mut impl FnMut(&[usize])) {
        if perm.len() == used.len() {
            visit(perm);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                perm.push(c);
                rec(perm, used, visit);
                perm.pop();
                used[c] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], visit);
}

/// ε per channel: `safety_factor` times the largest |mapped value| of that
/// channel over calibration trials where it is off-axis.
pub fn estimate_deadbands(calib: &CalibrationSet, model: &MappingModel, safety_factor: f64) -> Result<Deadbands> {
    if matches!(model.kind, ModelKind::Knn { .. }) {
        return Ok(Deadbands::default());
    }
    let mut eps = [0.0f64; 4];
    for t in calib.trials() {
        let on = t.direction.channel();
        for f in &t.frames {
            let v = map(f, model)?.to_array();
            let scale = command_scale(&v);
            for c in Channel::ALL {
                let x = v[c.index()];
                if Some(c) != on && !is_numerically_zero(x, scale) {
                    eps[c.index()] = eps[c.index()].max(x.abs());
                }
            }
        }
    }
    Ok(Deadbands::new(eps.map(|e| e * safety_factor.max(0.0))))
}

/// Features of a frame in the given mode.
pub fn features(frame: &Frame64, mode: FeatureMode, plant: &Plant, residual_tolerance: f64) -> Result<Vec<f64>> {
    Ok(match mode {
        FeatureMode::Raw => frame.forces.to_vec(),
        FeatureMode::Wrench => statics_wrench(frame, plant, residual_tolerance)?.to_array().to_vec(),
    })
}

pub fn knn_fit(features: Vec<Vec<f64>>, labels: Vec<DirectionLabel>, k: usize, mode: FeatureMode) -> Result<KnnModel> {
    let n = features.len();
    if n == 0 {
        return Err(MappingError::EmptyTraining);
    }
    if k == 0 || k.is_multiple_of(2) || k > n || labels.len() != n {
        return Err(MappingError::InvalidK { k, n });
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(MappingError::FeatureDimension { got: f.len(), want: dim });
    }
    Ok(KnnModel { k, mode, features, labels })
}

/// Majority label among the k nearest samples; ties go to the smaller mean
/// distance, then to the earlier label.
pub fn knn_predict_features(model: &KnnModel, query: &[f64]) -> Result<DirectionLabel> {
    let dim = model.features[0].len();
    if query.len() != dim {
        return Err(MappingError::FeatureDimension { got: query.len(), want: dim });
    }
    let mut dist: Vec<(f64, usize)> = model
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    let k = model.k.min(dist.len());
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes: BTreeMap<DirectionLabel, (usize, f64)> = BTreeMap::new();
    for &(d2, i) in &dist[..k] {
        let e = votes.entry(model.labels[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += d2.sqrt();
    }
    let best = votes
        .into_iter()
        .map(|(l, (n, s))| (l, n, s / n as f64))
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.2 < a.2) {
                b
            } else {
                a
            }
        })
        .map(|(l, _, _)| l);
    Ok(best.unwrap_or(DirectionLabel::Neutral))
}

pub fn knn_predict(frame: &Frame64, model: &MappingModel) -> Result<DirectionLabel> {
    let ModelKind::Knn { knn } = &model.kind else {
        return Err(MappingError::NotACommandModel);
    };
    let q = features(frame, knn.mode, &model.plant, model.residual_tolerance)?;
    knn_predict_features(knn, &q)
}

/// Fraction of the commanded excursion reached at each sample: from truth
/// poses when present, otherwise from the nominal ramp-hold-return profile.
pub fn excursion(trial: &Trial, plant: &Plant) -> Vec<f64> {
    match &trial.truth {
        Some(truth) => {
            let l = plant.geom.limits;
            let ext = crate::synth::extreme_pose(trial.direction, &plant.geom).ok();
            truth
                .poses
                .iter()
                .map(|p| {
                    let Some(e) = ext else { return 0.0 };
                    let pairs = [(p.x, e.x, l.x_max), (p.y, e.y, l.y_max), (p.yaw, e.yaw, l.yaw_max), (p.pitch, e.pitch, l.pitch_max)];
                    pairs
                        .iter()
                        .filter(|(_, e, _)| *e != 0.0)
                        .map(|(v, e, _)| v / e)
                        .fold(0.0, f64::max)
                })
                .collect()
        }
        None => (0..trial.frames.len()).map(progress).collect(),
    }
}

/// kNN over labelled frames: each sample takes its trial's direction once
/// the excursion reaches `activity_threshold`, Neutral before that.
pub fn calibrate_knn<'a>(
    trials: impl IntoIterator<Item = &'a Trial>,
    plant: &Plant,
    opts: &CalibrationOptions,
) -> Result<MappingModel> {
    let (mut feats, mut labels) = (Vec::new(), Vec::new());
    for t in trials {
        if !t.direction.is_target() || (t.direction.is_diagonal() && !opts.knn_include_diagonal) {
            continue;
        }
        for (f, e) in t.frames.iter().zip(excursion(t, plant)) {
            feats.push(features(f, opts.knn_mode, plant, opts.residual_tolerance)?);
            labels.push(if e >= opts.activity_threshold { t.direction } else { DirectionLabel::Neutral });
        }
    }
    let knn = knn_fit(feats, labels, opts.knn_k, opts.knn_mode)?;
    Ok(MappingModel {
        kind: ModelKind::Knn { knn },
        plant: plant.clone(),
        residual_tolerance: opts.residual_tolerance,
        deadbands: Deadbands::default(),
    })
}
