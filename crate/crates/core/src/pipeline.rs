//! Per-subject calibration and evaluation over a whole dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::{evaluate_trials, AccuracyReport, EvalError};
use crate::formats::{ModelBundle, SubjectModel};
use crate::mapping::{
    calibrate_global_ica, calibrate_knn, calibrate_local_ica, calibrate_statics, CalibrationOptions, CalibrationSet,
    MappingError, MappingModel,
};
use crate::synth::Dataset;
use crate::Plant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Statics,
    GlobalIca,
    LocalIca,
    Knn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Statics, Method::GlobalIca, Method::LocalIca, Method::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Statics => "statics",
            Method::GlobalIca => "global-ica",
            Method::LocalIca => "local-ica",
            Method::Knn => "knn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PipelineError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("unknown method `{0}` (expected statics, global-ica, local-ica or knn)")]
    UnknownMethod(String),
    #[error("subject {subject}: {source}")]
    Calibration { subject: u32, source: MappingError },
    #[error("no model for subject {0}")]
    MissingSubject(u32),
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn calibrate_subject(
    ds: &Dataset,
    subject: u32,
    plant: &Plant,
    method: Method,
    opts: &CalibrationOptions,
    reps: &[u32],
) -> Result<MappingModel, MappingError> {
    let calib = CalibrationSet::from_trials(&ds.trials, subject, reps)?;
    match method {
        Method::Statics => calibrate_statics(&calib, plant, opts),
        Method::GlobalIca => calibrate_global_ica(&calib, plant, opts),
        Method::LocalIca => calibrate_local_ica(&calib, plant, opts),
        Method::Knn => calibrate_knn(
            ds.for_subject(subject).filter(|t| reps.contains(&t.repetition)),
            plant,
            opts,
        ),
    }
}

/// One model per subject (or for the listed subjects only).
pub fn calibrate_bundle(
    ds: &Dataset,
    plant: &Plant,
    method: Method,
    opts: &CalibrationOptions,
    reps: &[u32],
    subjects: Option<&[u32]>,
) -> Result<ModelBundle, PipelineError> {
    let all = ds.subjects();
    let list: Vec<u32> = subjects.map(<[u32]>::to_vec).unwrap_or(all);
    if list.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let models = list
        .iter()
        .map(|&subject| {
            calibrate_subject(ds, subject, plant, method, opts, reps)
                .map(|model| SubjectModel { subject, model })
                .map_err(|source| PipelineError::Calibration { subject, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelBundle { method: method.name().into(), calibration_reps: reps.to_vec(), models })
}

/// Evaluates every subject's held-out trials with that subject's model.
/// Subjects without a model are an error.
pub fn evaluate_bundle(ds: &Dataset, bundle: &ModelBundle) -> Result<AccuracyReport, PipelineError> {
    let subjects = ds.subjects();
    if subjects.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let mut cells = BTreeMap::new();
    for s in subjects {
        let model = bundle.for_subject(s).ok_or(PipelineError::MissingSubject(s))?;
        let held_out = ds.for_subject(s).filter(|t| !bundle.calibration_reps.contains(&t.repetition));
        match evaluate_trials(held_out, model, &model.deadbands) {
            Ok(r) => cells.extend(r.cells),
            Err(EvalError::EmptyDataset) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if cells.is_empty() {
        return Err(EvalError::EmptyDataset.into());
    }
    Ok(AccuracyReport::from_cells(bundle.method.clone(), cells))
}
