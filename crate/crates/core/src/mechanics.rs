//! Kinematics and statics of the six-spring planar stage and the pitch treadle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{InterfaceGeometry, Point2, SpringParams, SPRINGS};
use crate::scalar::Real;

/// Number of load cells in a sensor frame.
pub const CELLS: usize = 8;

/// Default acceptance threshold for the loop-closure residual of the
/// closed-form solver, max_i |l_i(pose)² − l_i²| in m².
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;

/// Relative slack for limit checks so exact boundary poses survive round-off.
const LIMIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanicsError {
    #[error("pose outside limits: |{axis}| = {value} > {limit}")]
    OutOfLimits { axis: &'static str, value: f64, limit: f64 },
    #[error("guide lengths inconsistent: loop-closure residual {residual:e} m² exceeds {tolerance:e}")]
    InconsistentLengths { residual: f64, tolerance: f64 },
    #[error("closed-form coefficients singular ({0})")]
    SingularCoefficients(&'static str),
    #[error("numeric pose solver did not converge in {iterations} iterations (residual {residual:e} m²)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("spring {spring} has a zero-length guide vector")]
    DegenerateVector { spring: usize },
    #[error("sensor frame invalid: {0}")]
    InvalidFrame(String),
}

pub type Result<T, E = MechanicsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
    pub pitch: T,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, yaw: T, pitch: T) -> Self {
        Self { x, y, yaw, pitch }
    }

    pub fn home() -> Self {
        Self::default()
    }

    pub fn planar(x: T, y: T, yaw: T) -> Self {
        Self::new(x, y, yaw, T::zero())
    }

    pub fn check_limits(&self, geom: &InterfaceGeometry<T>) -> Result<()> {
        let l = &geom.limits;
        for (axis, v, lim) in [
            ("x", self.x, l.x_max),
            ("y", self.y, l.y_max),
            ("yaw", self.yaw, l.yaw_max),
            ("pitch", self.pitch, l.pitch_max),
        ] {
            if !(v.abs() <= lim * (T::one() + T::lit(LIMIT_SLACK))) {
                return Err(MechanicsError::OutOfLimits {
                    axis,
                    value: v.abs().to_f64_lossy(),
                    limit: lim.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// Clamps every coordinate into the motion limits.
    pub fn clamped(&self, geom: &InterfaceGeometry<T>) -> Self {
        let l = &geom.limits;
        let c = |v: T, m: T| v.max(-m).min(m);
        Self::new(c(self.x, l.x_max), c(self.y, l.y_max), c(self.yaw, l.yaw_max), c(self.pitch, l.pitch_max))
    }
}

/// Calibrated load-cell forces at one sample. Cells 1..6 are the planar
/// springs, 7 the toe-side and 8 the heel-side pitch cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorFrame<T> {
    pub t: T,
    pub forces: [T; CELLS],
}

impl<T: Real> SensorFrame<T> {
    pub fn new(t: T, forces: [T; CELLS]) -> Self {
        Self { t, forces }
    }

    /// Frame with every cell at its pretension or preload.
    pub fn rest(springs: &SpringParams<T>) -> Self {
        let mut forces = [T::zero(); CELLS];
        forces[..SPRINGS].copy_from_slice(&springs.pretension);
        forces[6] = springs.pitch_preload[0];
        forces[7] = springs.pitch_preload[1];
        Self::new(T::zero(), forces)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.forces.iter().enumerate() {
            if !f.is_finite() || *f < T::zero() {
                return Err(MechanicsError::InvalidFrame(format!("F{} = {}", i + 1, f)));
            }
        }
        Ok(())
    }
}

/// Per-spring geometric state at a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringState<T> {
    pub length: T,
    /// Direction of the loop-closure vector a_i − R·b_i − p.
    pub direction_angle: T,
    /// Angle between the lever arm C→B_i and the guide A_i→B_i, in [0, π].
    pub lever_angle: T,
    pub compression: T,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCoefficients<T> {
    pub e: T,
    pub f: T,
    pub g: T,
    pub m_c: T,
    pub q: T,
    pub p: T,
}

/// Mapped command (F_x, F_y, F_z in N; M in N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandVector<T> {
    pub fx: T,
    pub fy: T,
    pub fz: T,
    pub m: T,
}

impl<T: Real> CommandVector<T> {
    pub fn new(fx: T, fy: T, fz: T, m: T) -> Self {
        Self { fx, fy, fz, m }
    }

    pub fn to_array(self) -> [T; 4] {
        [self.fx, self.fy, self.fz, self.m]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringForces<T> {
    pub forces: [T; SPRINGS],
    pub saturated: [bool; SPRINGS],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensedLengths<T> {
    pub lengths: [T; SPRINGS],
    pub isometric: [bool; SPRINGS],
}

/// Loop-closure vectors a_i − R(φ)·b_i − p, without a limit check.
pub fn guide_vectors<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>) -> [Point2<T>; SPRINGS] {
    let p = Point2::new(pose.x, pose.y);
    std::array::from_fn(|i| geom.base[i] - geom.mobile[i].rotated(pose.yaw) - p)
}

pub fn guide_lengths_unchecked<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>) -> [T; SPRINGS] {
    guide_vectors(pose, geom).map(|d| d.norm())
}

/// Guide lengths l_i = |a_i − R(φ)·b_i − p|.
pub fn guide_lengths<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>) -> Result<[T; SPRINGS]> {
    pose.check_limits(geom)?;
    Ok(guide_lengths_unchecked(pose, geom))
}

pub fn compression<T: Real>(length: T, i: usize, springs: &SpringParams<T>) -> T {
    (springs.home_deflection + (springs.home_length[i] - length))
        .max(T::zero())
        .min(springs.max_deflection)
}

/// Hooke's law on clamped compressions.
pub fn spring_forces<T: Real>(lengths: &[T; SPRINGS], springs: &SpringParams<T>) -> SpringForces<T> {
    let mut out = SpringForces {
        forces: [T::zero(); SPRINGS],
        saturated: [false; SPRINGS],
    };
    for i in 0..SPRINGS {
        let d = compression(lengths[i], i, springs);
        out.forces[i] = springs.stiffness[i] * d;
        out.saturated[i] = d >= springs.max_deflection * (T::one() - T::lit(1e-9));
    }
    out
}

fn at_saturation<T: Real>(force: T, i: usize, springs: &SpringParams<T>) -> bool {
    force >= springs.saturation_force(i) * (T::one() - T::lit(1e-12))
}

/// Inverts Hooke's law. Forces at or beyond saturation pin the guide at full
/// compression and raise the isometric flag; the force itself stays in the frame.
pub fn sensor_to_lengths<T: Real>(frame: &SensorFrame<T>, springs: &SpringParams<T>) -> SensedLengths<T> {
    let mut out = SensedLengths {
        lengths: [T::zero(); SPRINGS],
        isometric: [false; SPRINGS],
    };
    for i in 0..SPRINGS {
        let f = frame.forces[i];
        if at_saturation(f, i, springs) {
            out.lengths[i] = springs.home_length[i] - springs.travel();
            out.isometric[i] = true;
        } else {
            out.lengths[i] = springs.home_length[i] - (f - springs.pretension[i]) / springs.stiffness[i];
        }
    }
    out
}

pub fn closed_form_coefficients<T: Real>(
    lengths: &[T; SPRINGS],
    geom: &InterfaceGeometry<T>,
) -> ClosedFormCoefficients<T> {
    let l2 = lengths.map(|l| l * l);
    let h2 = geom.home_lengths().map(|l| l * l);
    // Differences are taken relative to home so the home state is exactly zero.
    let d: [T; SPRINGS] = std::array::from_fn(|i| l2[i] - h2[i]);
    let dm = &geom.dims;
    let (a, ap, b, bp, c, cp) = (
        dm.base_length,
        dm.mobile_length,
        dm.base_width,
        dm.mobile_width,
        dm.spacing_base,
        dm.spacing_mobile,
    );
    ClosedFormCoefficients {
        e: d[3] + d[4] - d[2] - d[5],
        f: d[4] + d[5] - d[2] - d[3],
        g: d[1] - d[0],
        m_c: a * b + ap * bp,
        q: a * bp + ap * b,
        p: b * cp - bp * c,
    }
}

/// Largest |l_i(pose)² − l_i²| over the six chains (m²).
pub fn loop_closure_residual<T: Real>(pose: &Pose<T>, lengths: &[T; SPRINGS], geom: &InterfaceGeometry<T>) -> T {
    guide_vectors(pose, geom)
        .iter()
        .zip(lengths)
        .map(|(d, l)| (d.dot(*d) - *l * *l).abs())
        .fold(T::zero(), T::max)
}

/// Closed-form planar pose from six guide lengths, with the default residual tolerance.
pub fn forward_pose_closed_form<T: Real>(lengths: &[T; SPRINGS], geom: &InterfaceGeometry<T>) -> Result<Pose<T>> {
    forward_pose_closed_form_tol(lengths, geom, T::lit(CLOSED_FORM_TOLERANCE))
}

/// Closed-form planar pose; rejects lengths whose loop-closure residual exceeds `tolerance` (m²).
pub fn forward_pose_closed_form_tol<T: Real>(
    lengths: &[T; SPRINGS],
    geom: &InterfaceGeometry<T>,
    tolerance: T,
) -> Result<Pose<T>> {
    let k = closed_form_coefficients(lengths, geom);
    let dm = &geom.dims;
    let (a, ap, b, bp) = (dm.base_length, dm.mobile_length, dm.base_width, dm.mobile_width);
    let two = T::lit(2.0);
    let disc = T::lit(4.0) * k.p * k.p - k.e * k.e;
    if !(disc > T::zero()) {
        return Err(MechanicsError::SingularCoefficients("4P² − E² ≤ 0"));
    }
    let s = k.p.signum() * disc.sqrt();
    let yaw = (k.e / (two * k.p)).asin();
    let den = T::lit(4.0) * k.q * s - T::lit(8.0) * k.p * k.m_c;
    if den.abs() <= T::epsilon() * (k.q * s).abs().max((k.p * k.m_c).abs()) {
        return Err(MechanicsError::SingularCoefficients("vanishing denominator"));
    }
    let x = (k.f * (two * a * k.p - ap * s) - two * bp * k.e * k.g) / den;
    let y = (two * k.g * (bp * s - two * b * k.p) - ap * k.e * k.f) / den;
    let pose = Pose::planar(x, y, yaw);
    let residual = loop_closure_residual(&pose, lengths, geom);
    if !(residual <= tolerance) {
        return Err(MechanicsError::InconsistentLengths {
            residual: residual.to_f64_lossy(),
            tolerance: tolerance.to_f64_lossy(),
        });
    }
    Ok(pose.clamped(geom))
}

fn solve3<T: Real>(m: [[T; 3]; 3], r: [T; 3]) -> Option<[T; 3]> {
    let det = |m: &[[T; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    let mut out = [T::zero(); 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        *o = det(&mc) / d;
    }
    Some(out)
}

/// Damped least squares on the six squared-length residuals over (x, y, φ).
///
/// Converges when the residual norm drops below 1e-10 m² or the step becomes
/// negligible (inconsistent lengths settle at their least-squares pose).
pub fn forward_pose_numeric<T: Real>(
    lengths: &[T; SPRINGS],
    geom: &InterfaceGeometry<T>,
    initial: &Pose<T>,
) -> Result<Pose<T>> {
    const MAX_ITER: usize = 100;
    let residuals = |q: &[T; 3]| -> [T; SPRINGS] {
        let d = guide_vectors(&Pose::planar(q[0], q[1], q[2]), geom);
        std::array::from_fn(|i| d[i].dot(d[i]) - lengths[i] * lengths[i])
    };
    let norm = |r: &[T; SPRINGS]| r.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
    let mut q = [initial.x, initial.y, initial.yaw];
    let mut r = residuals(&q);
    let mut cost = norm(&r);
    let mut lambda = T::lit(1e-6);
    let target = T::lit(1e-10);
    let step_tol = T::lit(1e-15);
    for _ in 0..MAX_ITER {
        if cost < target * T::lit(1e-4) {
            break;
        }
        let (s, c) = q[2].sin_cos();
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtr = [T::zero(); 3];
        for i in 0..SPRINGS {
            let b = geom.mobile[i];
            let d = geom.base[i] - Point2::new(c * b.x - s * b.y + q[0], s * b.x + c * b.y + q[1]);
            let dr = Point2::new(-s * b.x - c * b.y, c * b.x - s * b.y);
            let m2 = T::lit(-2.0);
            let j = [m2 * d.x, m2 * d.y, m2 * d.dot(dr)];
            for a in 0..3 {
                jtr[a] = jtr[a] + j[a] * r[i];
                for bb in 0..3 {
                    jtj[a][bb] = jtj[a][bb] + j[a] * j[bb];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..20 {
            let mut damped = jtj;
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] = row[a] * (T::one() + lambda);
            }
            let Some(step) = solve3(damped, jtr.map(|v| -v)) else {
                lambda = lambda * T::lit(10.0);
                continue;
            };
            let trial = [q[0] + step[0], q[1] + step[1], q[2] + step[2]];
            let tr = residuals(&trial);
            let tc = norm(&tr);
            if tc <= cost {
                let small = step.iter().all(|v| v.abs() <= step_tol);
                q = trial;
                r = tr;
                cost = tc;
                lambda = (lambda * T::lit(0.1)).max(T::lit(1e-12));
                accepted = true;
                if small {
                    return finish_numeric(q, geom);
                }
                break;
            }
            lambda = lambda * T::lit(10.0);
        }
        if !accepted {
            // No descent direction left: a least-squares stationary point.
            return finish_numeric(q, geom);
        }
    }
    if cost < target {
        finish_numeric(q, geom)
    } else {
        Err(MechanicsError::NonConvergence {
            iterations: MAX_ITER,
            residual: cost.to_f64_lossy(),
        })
    }
}

fn finish_numeric<T: Real>(q: [T; 3], geom: &InterfaceGeometry<T>) -> Result<Pose<T>> {
    if q.iter().all(|v| v.is_finite()) {
        Ok(Pose::planar(q[0], q[1], q[2]).clamped(geom))
    } else {
        Err(MechanicsError::NonConvergence {
            iterations: 0,
            residual: f64::NAN,
        })
    }
}

fn unit<T: Real>(d: Point2<T>, spring: usize) -> Result<Point2<T>> {
    let n = d.norm();
    if n == T::zero() || !n.is_finite() {
        return Err(MechanicsError::DegenerateVector { spring: spring + 1 });
    }
    Ok(Point2::new(d.x / n, d.y / n))
}

pub fn spring_geometry<T: Real>(
    pose: &Pose<T>,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
) -> Result<[SpringState<T>; SPRINGS]> {
    pose.check_limits(geom)?;
    let d = guide_vectors(pose, geom);
    let mut out = [SpringState {
        length: T::zero(),
        direction_angle: T::zero(),
        lever_angle: T::zero(),
        compression: T::zero(),
        saturated: false,
    }; SPRINGS];
    for i in 0..SPRINGS {
        let u = unit(d[i], i)?;
        let lever = geom.mobile[i].rotated(pose.yaw);
        let ab = Point2::new(-u.x, -u.y);
        let length = d[i].norm();
        let delta = compression(length, i, springs);
        out[i] = SpringState {
            length,
            direction_angle: d[i].y.atan2(d[i].x),
            lever_angle: lever.cross(ab).abs().atan2(lever.dot(ab)),
            compression: delta,
            saturated: delta >= springs.max_deflection * (T::one() - T::lit(1e-9)),
        };
    }
    Ok(out)
}

/// Σ F_i·u_i and Σ F_i·(R·b_i × u_i) for explicit per-spring forces at a pose.
pub fn planar_wrench<T: Real>(
    pose: &Pose<T>,
    forces: &[T; SPRINGS],
    geom: &InterfaceGeometry<T>,
) -> Result<(T, T, T)> {
    let d = guide_vectors(pose, geom);
    let (mut fx, mut fy, mut m) = (T::zero(), T::zero(), T::zero());
    for i in 0..SPRINGS {
        let u = unit(d[i], i)?;
        let r = geom.mobile[i].rotated(pose.yaw);
        fx = fx + forces[i] * u.x;
        fy = fy + forces[i] * u.y;
        m = m + forces[i] * r.cross(u);
    }
    Ok((fx, fy, m))
}

/// Options for the statics reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticsOptions<T> {
    /// Loop-closure residual accepted from sensed lengths (m²). Noisy or
    /// cross-coupled frames are not exactly consistent, so this is looser
    /// than the kinematic default.
    pub residual_tolerance: T,
}

impl<T: Real> Default for StaticsOptions<T> {
    fn default() -> Self {
        Self {
            residual_tolerance: T::lit(CLOSED_FORM_TOLERANCE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticsSolution<T> {
    pub pose: Pose<T>,
    pub wrench: CommandVector<T>,
    pub isometric: [bool; SPRINGS],
}

/// Pose and command wrench reconstructed from one frame.
///
/// The planar wrench sums absolute spring forces along the current guide
/// directions and subtracts the same sum at the rest frame, so the rest frame
/// maps to zero for any layout. Saturated cells pin the pose at the boundary,
/// freezing the directions, while their full recorded force enters the sums.
pub fn reconstruct_statics<T: Real>(
    frame: &SensorFrame<T>,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
    opts: &StaticsOptions<T>,
    seed: Option<&Pose<T>>,
) -> Result<StaticsSolution<T>> {
    frame.validate()?;
    let sensed = sensor_to_lengths(frame, springs);
    let planar = match forward_pose_closed_form_tol(&sensed.lengths, geom, opts.residual_tolerance) {
        Ok(p) => p,
        Err(MechanicsError::SingularCoefficients(_)) => {
            let start = seed.copied().unwrap_or_default();
            forward_pose_numeric(&sensed.lengths, geom, &start)?
        }
        Err(e) => return Err(e),
    };
    let forces: [T; SPRINGS] = std::array::from_fn(|i| frame.forces[i]);
    let (fx, fy, m) = planar_wrench(&planar, &forces, geom)?;
    let (tx, ty, tm) = planar_wrench(&Pose::home(), &springs.pretension, geom)?;
    let fz = (frame.forces[6] - springs.pitch_preload[0]) - (frame.forces[7] - springs.pitch_preload[1]);
    let pitch = pitch_from_frame(frame, geom, springs);
    Ok(StaticsSolution {
        pose: Pose::new(planar.x, planar.y, planar.yaw, pitch),
        wrench: CommandVector::new(fx - tx, fy - ty, fz, m - tm),
        isometric: sensed.isometric,
    })
}

/// Command wrench of a frame with default statics options.
pub fn resultant_wrench<T: Real>(
    frame: &SensorFrame<T>,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
) -> Result<CommandVector<T>> {
    Ok(reconstruct_statics(frame, geom, springs, &StaticsOptions::default(), None)?.wrench)
}

/// Treadle angle implied by the pitch cells, clamped to the pitch limit.
pub fn pitch_from_frame<T: Real>(frame: &SensorFrame<T>, geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> T {
    let net = (frame.forces[6] - springs.pitch_preload[0]) - (frame.forces[7] - springs.pitch_preload[1]);
    let theta = net * geom.pitch_lever / springs.torsion_stiffness;
    theta.max(-geom.limits.pitch_max).min(geom.limits.pitch_max)
}

/// Pitch-cell forces for a treadle angle.
pub fn pitch_cell_forces<T: Real>(pitch: T, geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> [T; 2] {
    let f = springs.torsion_stiffness * pitch / geom.pitch_lever;
    [
        springs.pitch_preload[0] + f.max(T::zero()),
        springs.pitch_preload[1] + (-f).max(T::zero()),
    ]
}

pub fn elastic_energy_unchecked<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> T {
    let lengths = guide_lengths_unchecked(pose, geom);
    let h = T::lit(0.5);
    let planar = (0..SPRINGS).fold(T::zero(), |e, i| {
        let d = compression(lengths[i], i, springs);
        e + h * springs.stiffness[i] * d * d
    });
    planar + h * springs.torsion_stiffness * pose.pitch * pose.pitch
}

/// Σ ½k_i·δ_i² + ½k_t·θ² (J).
pub fn elastic_energy<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> Result<T> {
    pose.check_limits(geom)?;
    Ok(elastic_energy_unchecked(pose, geom, springs))
}
