//! Direction-prediction accuracy: sample classification, per-trial counts
//! and per-direction, per-subject aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::direction::{DirectionLabel, Plane};
use crate::mapping::{command_scale, is_numerically_zero, knn_predict, map, Deadbands, MappingError, MappingModel, ModelKind};
use crate::synth::{Dataset, Trial};
use crate::{Command64, Frame64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dataset has no target-direction trials")]
    EmptyDataset,
    #[error("reports cover different directions: {0}")]
    MismatchedDirections(String),
    #[error("need at least one report")]
    NoReports,
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// Quantizes each channel against its deadband and matches the sign pattern.
pub fn classify_sample(cmd: &Command64, bands: &Deadbands) -> DirectionLabel {
    let v = cmd.to_array();
    let eps = bands.to_array();
    let scale = command_scale(&v);
    let signs: [i8; 4] = std::array::from_fn(|i| {
        let x = v[i];
        if x.is_nan() || x.abs() <= eps[i] || is_numerically_zero(x, scale) {
            0
        } else if x > 0.0 {
            1
        } else {
            -1
        }
    });
    DirectionLabel::from_pattern(signs)
}

/// Label of one frame under a model, using its own deadbands.
pub fn label_frame(frame: &Frame64, model: &MappingModel) -> Result<DirectionLabel, MappingError> {
    label_frame_with(frame, model, &model.deadbands)
}

pub fn label_frame_with(frame: &Frame64, model: &MappingModel, bands: &Deadbands) -> Result<DirectionLabel, MappingError> {
    match model.kind {
        ModelKind::Knn { .. } => knn_predict(frame, model),
        _ => Ok(classify_sample(&map(frame, model)?, bands)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub correct: u64,
    pub total: u64,
}

impl Counts {
    /// 100·P_c/P_t, or `None` when no sample left the zero region.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts { correct: self.correct + o.correct, total: self.total + o.total }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

/// Counts of a labelled sequence against its target: every non-Neutral
/// label is counted, matches are correct.
pub fn count_labels(labels: impl IntoIterator<Item = DirectionLabel>, target: DirectionLabel) -> Counts {
    labels.into_iter().fold(Counts::default(), |c, l| Counts {
        correct: c.correct + (l == target) as u64,
        total: c.total + (l != DirectionLabel::Neutral) as u64,
    })
}

pub fn trial_accuracy(trial: &Trial, model: &MappingModel, bands: &Deadbands) -> Result<Counts, MappingError> {
    let labels = trial
        .frames
        .iter()
        .map(|f| label_frame_with(f, model, bands))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(count_labels(labels, trial.direction))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSummary {
    pub direction: DirectionLabel,
    /// Subjects with a defined accuracy.
    pub subjects: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation across subjects (0 for a single subject).
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub model: String,
    /// Pooled counts per (direction, subject).
    pub cells: BTreeMap<(DirectionLabel, u32), Counts>,
    pub directions: Vec<DirectionSummary>,
    pub grand_mean: Option<f64>,
    pub plane_means: Vec<(Plane, Option<f64>)>,
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(m), Some(sd))
}

impl AccuracyReport {
    pub fn from_cells(model: impl Into<String>, cells: BTreeMap<(DirectionLabel, u32), Counts>) -> Self {
        let mut dirs: Vec<DirectionLabel> = cells.keys().map(|k| k.0).collect();
        dirs.dedup();
        let directions: Vec<DirectionSummary> = dirs
            .iter()
            .map(|&d| {
                let acc: Vec<f64> = cells.range((d, 0)..=(d, u32::MAX)).filter_map(|(_, c)| c.accuracy()).collect();
                let (mean, sd) = mean_sd(&acc);
                DirectionSummary { direction: d, subjects: acc.len(), mean, sd }
            })
            .collect();
        let means: Vec<f64> = directions.iter().filter_map(|s| s.mean).collect();
        let grand_mean = mean_sd(&means).0;
        let plane_means = Plane::ALL
            .iter()
            .map(|&p| {
                let v: Vec<f64> = directions
                    .iter()
                    .filter(|s| s.direction.plane() == Some(p))
                    .filter_map(|s| s.mean)
                    .collect();
                (p, mean_sd(&v).0)
            })
            .collect();
        Self { model: model.into(), cells, directions, grand_mean, plane_means }
    }

    pub fn direction(&self, d: DirectionLabel) -> Option<&DirectionSummary> {
        self.directions.iter().find(|s| s.direction == d)
    }

    /// Mean of the per-direction means over `dirs` (directions without a
    /// defined mean are skipped).
    pub fn group_mean(&self, dirs: &[DirectionLabel]) -> Option<f64> {
        let v: Vec<f64> = dirs.iter().filter_map(|d| self.direction(*d)?.mean).collect();
        mean_sd(&v).0
    }

    pub fn direction_set(&self) -> Vec<DirectionLabel> {
        self.directions.iter().map(|s| s.direction).collect()
    }

    /// Long-format CSV: one row per (direction, subject), then one summary
    /// row per direction with subject `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,direction,subject,correct,total,accuracy,sd\n");
        for ((d, s), c) in &self.cells {
            let _ = writeln!(out, "{},{},{},{},{},{},", self.model, d, s, c.correct, c.total, fmt_opt(c.accuracy()));
        }
        for s in &self.directions {
            let (c, t) = self
                .cells
                .range((s.direction, 0)..=(s.direction, u32::MAX))
                .fold((0, 0), |(c, t), (_, n)| (c + n.correct, t + n.total));
            let _ = writeln!(out, "{},{},all,{},{},{},{}", self.model, s.direction, c, t, fmt_opt(s.mean), fmt_opt(s.sd));
        }
        for (p, m) in &self.plane_means {
            let _ = writeln!(out, "{},{},all,,,{},", self.model, p.name(), fmt_opt(*m));
        }
        let _ = writeln!(out, "{},grand,all,,,{},", self.model, fmt_opt(self.grand_mean));
        out
    }

    /// Aligned text table of the per-direction summary.
    pub fn to_text(&self) -> String {
        let mut out = format!("model: {}\n", self.model);
        let _ = writeln!(out, "{:<10} {:>8} {:>9} {:>8}", "direction", "subjects", "mean(%)", "sd(%)");
        for s in &self.directions {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>9} {:>8}",
                s.direction.as_str(),
                s.subjects,
                fmt_pct(s.mean),
                fmt_pct(s.sd)
            );
        }
        for (p, m) in &self.plane_means {
            if m.is_some() {
                let _ = writeln!(out, "{:<10} {:>8} {:>9}", p.name(), "", fmt_pct(*m));
            }
        }
        let _ = writeln!(out, "{:<10} {:>8} {:>9}", "grand", "", fmt_pct(self.grand_mean));
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

/// Pooled counts per (direction, subject) for every target-direction trial.
pub fn evaluate_trials<'a>(
    trials: impl IntoIterator<Item = &'a Trial>,
    model: &MappingModel,
    bands: &Deadbands,
) -> Result<AccuracyReport, EvalError> {
    let mut cells: BTreeMap<(DirectionLabel, u32), Counts> = BTreeMap::new();
    for t in trials {
        if !t.direction.is_target() {
            continue;
        }
        let c = trial_accuracy(t, model, bands)?;
        let e = cells.entry((t.direction, t.subject)).or_default();
        *e += c;
    }
    if cells.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(AccuracyReport::from_cells(model.kind.name(), cells))
}

pub fn evaluate_dataset(dataset: &Dataset, model: &MappingModel, bands: &Deadbands) -> Result<AccuracyReport, EvalError> {
    evaluate_trials(&dataset.trials, model, bands)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub direction: DirectionLabel,
    pub accuracies: Vec<Option<f64>>,
    /// Each report minus the first.
    pub deltas: Vec<Option<f64>>,
    /// Index of the best report, `None` on a tie or undefined values.
    pub winner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub models: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub grand: Vec<Option<f64>>,
}

pub fn compare(reports: &[AccuracyReport]) -> Result<Comparison, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    let dirs = first.direction_set();
    for r in &reports[1..] {
        if r.direction_set() != dirs {
            return Err(EvalError::MismatchedDirections(format!("{} vs {}", first.model, r.model)));
        }
    }
    let rows = dirs
        .iter()
        .map(|&d| {
            let accuracies: Vec<Option<f64>> = reports.iter().map(|r| r.direction(d).and_then(|s| s.mean)).collect();
            let base = accuracies[0];
            let deltas = accuracies.iter().map(|a| Some((*a)? - base?)).collect();
            let winner = if accuracies.iter().all(Option::is_some) {
                let vals: Vec<f64> = accuracies.iter().flatten().copied().collect();
                let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let idx: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] == best).collect();
                (idx.len() == 1).then(|| idx[0])
            } else {
                None
            };
            ComparisonRow { direction: d, accuracies, deltas, winner }
        })
        .collect();
    Ok(Comparison {
        models: reports.iter().map(|r| r.model.clone()).collect(),
        rows,
        grand: reports.iter().map(|r| r.grand_mean).collect(),
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction");
        for m in &self.models {
            let _ = write!(out, ",{m}");
        }
        for m in &self.models[1..] {
            let _ = write!(out, ",delta_{m}");
        }
        out.push_str(",winner\n");
        for r in &self.rows {
            out.push_str(r.direction.as_str());
            for a in &r.accuracies {
                let _ = write!(out, ",{}", fmt_opt(*a));
            }
            for d in &r.deltas[1..] {
                let _ = write!(out, ",{}", fmt_opt(*d));
            }
            let _ = writeln!(out, ",{}", r.winner.map(|i| self.models[i].as_str()).unwrap_or("tie"));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}", "direction");
        for m in &self.models {
            let _ = write!(out, " {m:>12}");
        }
        for m in &self.models[1..] {
            let _ = write!(out, " {:>12}", format!("d({m})"));
        }
        let _ = writeln!(out, " {:>12}", "winner");
        for r in &self.rows {
            let _ = write!(out, "{:<10}", r.direction.as_str());
            for a in &r.accuracies {
                let _ = write!(out, " {:>12}", fmt_pct(*a));
            }
            for d in &r.deltas[1..] {
                let _ = write!(out, " {:>12}", d.map(|v| format!("{v:+.2}")).unwrap_or_else(|| "n/a".into()));
            }
            let _ = writeln!(out, " {:>12}", r.winner.map(|i| self.models[i].as_str()).unwrap_or("tie"));
        }
        let _ = write!(out, "{:<10}", "grand");
        for g in &self.grand {
            let _ = write!(out, " {:>12}", fmt_pct(*g));
        }
        out.push('\n');
        out
    }
}
