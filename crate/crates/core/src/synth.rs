//! Synthetic calibration and test trials with ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::DirectionLabel;
use crate::geometry::{InterfaceGeometry, SpringParams, SPRINGS};
use crate::mechanics::{
    guide_lengths, pitch_cell_forces, reconstruct_statics, spring_forces, MechanicsError, StaticsOptions, CELLS,
};
use crate::{Command64, Frame64, Plant, Pose64};

pub const SAMPLE_PERIOD: f64 = 0.02;
/// Samples per ramp, hold and return phase (1 s each at 50 Hz).
pub const PHASE_SAMPLES: usize = 50;
pub const TRIAL_SAMPLES: usize = 3 * PHASE_SAMPLES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("direction {0} has no trajectory")]
    NoTrajectory(DirectionLabel),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
}

/// Stand-in for human variability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Additive Gaussian noise per cell (N).
    pub sigma: f64,
    /// Cross-coupling applied to cell deviations from rest, unit diagonal.
    pub coupling: [[f64; CELLS]; CELLS],
    /// Tremor on the trajectory progress, as a fraction of the excursion.
    pub tremor_amplitude: f64,
    pub tremor_frequency: f64,
    /// Relative spread of the push-through force between trials.
    pub effort_jitter: f64,
    /// Relative spread of the off-diagonal coupling between subjects.
    pub subject_jitter: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::zero()
    }
}

pub fn identity8() -> [[f64; CELLS]; CELLS] {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            sigma: 0.0,
            coupling: identity8(),
            tremor_amplitude: 0.0,
            tremor_frequency: 0.0,
            effort_jitter: 0.0,
            subject_jitter: 0.0,
        }
    }

    /// Coupling that rotates lateral translation patterns toward yaw patterns
    /// and back by `gamma`, as when a sideways push also twists the foot.
    pub fn lateral_yaw_coupling(gamma: f64) -> [[f64; CELLS]; CELLS] {
        let mut c = identity8();
        c[2][3] = -gamma;
        c[3][2] = gamma;
        c[4][5] = -gamma;
        c[5][4] = gamma;
        c
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidNoise(m.to_string()));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and ≥ 0");
        }
        for i in 0..CELLS {
            if self.coupling[i][i] != 1.0 {
                return bad("coupling diagonal must be 1");
            }
            if self.coupling[i].iter().any(|v| !v.is_finite()) {
                return bad("coupling entries must be finite");
            }
        }
        for (name, v) in [
            ("tremor_amplitude", self.tremor_amplitude),
            ("effort_jitter", self.effort_jitter),
            ("subject_jitter", self.subject_jitter),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(SynthError::InvalidNoise(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.tremor_frequency >= 0.0 && self.tremor_frequency.is_finite()) {
            return bad("tremor_frequency must be finite and ≥ 0");
        }
        Ok(())
    }

    /// Copy with off-diagonal coupling scaled by `factor`.
    pub fn with_coupling_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for i in 0..CELLS {
            for j in 0..CELLS {
                if i != j {
                    out.coupling[i][j] *= factor;
                }
            }
        }
        out
    }
}

/// Ground truth carried by synthetic trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub poses: Vec<Pose64>,
    pub commands: Vec<Command64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub subject: u32,
    pub direction: DirectionLabel,
    pub repetition: u32,
    pub seed: u64,
    pub frames: Vec<Frame64>,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub trials: Vec<Trial>,
}

impl Dataset {
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.trials.iter().map(|t| t.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn for_subject(&self, subject: u32) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(move |t| t.subject == subject)
    }
}

/// Minimum-jerk blend 10τ³ − 15τ⁴ + 6τ⁵ on [0, 1].
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Fraction of the excursion at sample `k`: ramp, hold, mirrored return.
pub fn progress(k: usize) -> f64 {
    let n = PHASE_SAMPLES;
    match k {
        k if k < n => min_jerk(k as f64 / n as f64),
        k if k < 2 * n => 1.0,
        k if k < 3 * n => min_jerk((3 * n - 1 - k) as f64 / n as f64),
        _ => 0.0,
    }
}

pub fn in_hold(k: usize) -> bool {
    (PHASE_SAMPLES..2 * PHASE_SAMPLES).contains(&k)
}

/// Pose at the end of the ramp; every active axis sits at its own limit.
pub fn extreme_pose(direction: DirectionLabel, geom: &InterfaceGeometry<f64>) -> Result<Pose64, SynthError> {
    let p = direction.pattern().ok_or(SynthError::NoTrajectory(direction))?;
    let l = &geom.limits;
    Ok(Pose64::new(
        p[0] as f64 * l.x_max,
        p[1] as f64 * l.y_max,
        p[3] as f64 * l.yaw_max,
        p[2] as f64 * l.pitch_max,
    ))
}

fn scale_pose(p: &Pose64, s: f64) -> Pose64 {
    Pose64::new(p.x * s, p.y * s, p.yaw * s, p.pitch * s)
}

pub fn trajectory(direction: DirectionLabel, geom: &InterfaceGeometry<f64>) -> Result<Vec<Pose64>, SynthError> {
    let e = extreme_pose(direction, geom)?;
    Ok((0..TRIAL_SAMPLES).map(|k| scale_pose(&e, progress(k))).collect())
}

/// Ideal load-cell readings at a pose.
pub fn inverse_sense(
    pose: &Pose64,
    geom: &InterfaceGeometry<f64>,
    springs: &SpringParams<f64>,
) -> Result<Frame64, MechanicsError> {
    let f = spring_forces(&guide_lengths(pose, geom)?, springs).forces;
    let p = pitch_cell_forces(pose.pitch, geom, springs);
    Ok(Frame64::new(0.0, [f[0], f[1], f[2], f[3], f[4], f[5], p[0], p[1]]))
}

/// SplitMix64 finaliser folded over `parts`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(master), |acc, p| mix(acc ^ mix(*p)))
}

/// One trial: trajectory, ideal sensing, push-through while held at a
/// saturated extreme, then coupling on deviations from rest, additive noise
/// and a clamp at zero.
#[allow(clippy::too_many_arguments)]
pub fn generate_trial(
    plant: &Plant,
    subject: u32,
    direction: DirectionLabel,
    repetition: u32,
    noise: &NoiseSpec,
    over_force: f64,
    seed: u64,
) -> Result<Trial, SynthError> {
    noise.validate()?;
    let (geom, springs) = (&plant.geom, &plant.springs);
    let extreme = extreme_pose(direction, geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effort = if noise.effort_jitter > 0.0 {
        1.0 + noise.effort_jitter * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        1.0
    };
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let gauss = Normal::new(0.0, noise.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let rest = Frame64::rest(springs).forces;

    let mut frames = Vec::with_capacity(TRIAL_SAMPLES);
    let mut poses = Vec::with_capacity(TRIAL_SAMPLES);
    let mut commands = Vec::with_capacity(TRIAL_SAMPLES);
    for k in 0..TRIAL_SAMPLES {
        let t = k as f64 * SAMPLE_PERIOD;
        let mut s = progress(k);
        if noise.tremor_amplitude > 0.0 {
            let w = std::f64::consts::TAU * noise.tremor_frequency * t + phase;
            s = (s * (1.0 + noise.tremor_amplitude * w.sin())).clamp(0.0, 1.0);
        }
        let pose = scale_pose(&extreme, s);
        let mut clean = inverse_sense(&pose, geom, springs)?;
        clean.t = t;
        if in_hold(k) && over_force > 0.0 {
            let sat = spring_forces(&guide_lengths(&pose, geom)?, springs).saturated;
            for i in 0..SPRINGS {
                if sat[i] {
                    clean.forces[i] += over_force * effort;
                }
            }
        }
        let truth = reconstruct_statics(&clean, geom, springs, &StaticsOptions::default(), None)?;
        let dev: [f64; CELLS] = std::array::from_fn(|i| clean.forces[i] - rest[i]);
        let mut observed = clean;
        for i in 0..CELLS {
            let leak: f64 = (0..CELLS).filter(|&j| j != i).map(|j| noise.coupling[i][j] * dev[j]).sum();
            let n = if noise.sigma > 0.0 { gauss.sample(&mut rng) } else { 0.0 };
            observed.forces[i] = (clean.forces[i] + leak + n).max(0.0);
        }
        frames.push(observed);
        poses.push(Pose64::new(pose.x, pose.y, pose.yaw, pose.pitch));
        commands.push(truth.wrench);
    }
    Ok(Trial {
        subject,
        direction,
        repetition,
        seed,
        frames,
        truth: Some(Truth { poses, commands }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub subjects: u32,
    pub trials_per_direction: u32,
    pub directions: Vec<DirectionLabel>,
    /// Push-through beyond saturation during the hold (N).
    pub over_force: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            subjects: 10,
            trials_per_direction: 3,
            directions: DirectionLabel::TARGETS.to_vec(),
            over_force: 2.0,
        }
    }
}

/// Subject-specific noise: off-diagonal coupling scaled by a factor drawn
/// from [1 − j, 1 + j].
pub fn subject_noise(noise: &NoiseSpec, subject: u32, seed: u64) -> NoiseSpec {
    if noise.subject_jitter == 0.0 {
        return noise.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5ab1, subject as u64]));
    let f = 1.0 + noise.subject_jitter * (2.0 * rng.random::<f64>() - 1.0);
    noise.with_coupling_scale(f)
}

pub fn trial_seed(seed: u64, subject: u32, direction: DirectionLabel, repetition: u32) -> u64 {
    derive_seed(seed, &[subject as u64, direction as u64, repetition as u64])
}

/// Trials ordered by subject, repetition, then direction order of `spec`.
pub fn generate_dataset(
    plant: &Plant,
    spec: &DatasetSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Dataset, SynthError> {
    if spec.subjects == 0 || spec.trials_per_direction == 0 || spec.directions.is_empty() {
        return Err(SynthError::InvalidSpec("counts and direction set must be nonempty".into()));
    }
    if let Some(d) = spec.directions.iter().find(|d| !d.is_target()) {
        return Err(SynthError::NoTrajectory(*d));
    }
    noise.validate()?;
    let mut trials = Vec::new();
    for subject in 1..=spec.subjects {
        let sn = subject_noise(noise, subject, seed);
        for rep in 0..spec.trials_per_direction {
            for &d in &spec.directions {
                let ts = trial_seed(seed, subject, d, rep);
                trials.push(generate_trial(plant, subject, d, rep, &sn, spec.over_force, ts)?);
            }
        }
    }
    Ok(Dataset { trials })
}
