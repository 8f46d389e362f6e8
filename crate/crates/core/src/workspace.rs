//! Monte Carlo estimate of the reachable translation set at fixed yaw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{InterfaceGeometry, SpringParams, SPRINGS};
use crate::mechanics::{guide_lengths_unchecked, Pose};
use crate::scalar::Real;

const BOUNDARY_SLACK: f64 = 1e-12;

/// Bounding box of the accepted points (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extents<T> {
    pub x_min: T,
    pub x_max: T,
    pub y_min: T,
    pub y_max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceSlice<T> {
    pub yaw: T,
    pub samples: usize,
    pub points: Vec<(T, T)>,
    pub extents: Option<Extents<T>>,
    /// Acceptance fraction times the sampling-box area (m²).
    pub area: T,
}

impl<T: Real> WorkspaceSlice<T> {
    pub fn fraction(&self) -> f64 {
        self.points.len() as f64 / self.samples as f64
    }

    /// Binomial standard error of `area`.
    pub fn area_sigma(&self, box_area: T) -> T {
        let p = self.fraction();
        T::lit((p * (1.0 - p) / self.samples as f64).sqrt()) * box_area
    }
}

/// A pose is reachable while every spring compression stays within
/// [0, δ_max] and the yaw is within its limit.
pub fn is_reachable<T: Real>(pose: &Pose<T>, geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> bool {
    if !(pose.yaw.abs() <= geom.limits.yaw_max * (T::one() + T::lit(BOUNDARY_SLACK))) {
        return false;
    }
    let lengths = guide_lengths_unchecked(pose, geom);
    let slack = T::lit(BOUNDARY_SLACK);
    (0..SPRINGS).all(|i| {
        let d = springs.home_deflection + springs.home_length[i] - lengths[i];
        d >= -slack && d <= springs.max_deflection + slack
    })
}

fn box_area<T: Real>(geom: &InterfaceGeometry<T>) -> T {
    T::lit(4.0) * geom.limits.x_max * geom.limits.y_max
}

fn slice_with_rng<T: Real>(
    yaw: T,
    n: usize,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
    rng: &mut ChaCha8Rng,
) -> WorkspaceSlice<T> {
    let (xm, ym) = (geom.limits.x_max.to_f64_lossy(), geom.limits.y_max.to_f64_lossy());
    let mut points = Vec::new();
    for _ in 0..n {
        let x = T::lit(rng.random_range(-xm..=xm));
        let y = T::lit(rng.random_range(-ym..=ym));
        if is_reachable(&Pose::planar(x, y, yaw), geom, springs) {
            points.push((x, y));
        }
    }
    let extents = points.split_first().map(|(&(x0, y0), rest)| {
        rest.iter().fold(
            Extents { x_min: x0, x_max: x0, y_min: y0, y_max: y0 },
            |e, &(x, y)| Extents {
                x_min: e.x_min.min(x),
                x_max: e.x_max.max(x),
                y_min: e.y_min.min(y),
                y_max: e.y_max.max(y),
            },
        )
    });
    let area = box_area(geom) * T::lit(points.len() as f64 / n.max(1) as f64);
    WorkspaceSlice { yaw, samples: n, points, extents, area }
}

/// Samples `n` points uniformly over the limit box at yaw `yaw`.
pub fn monte_carlo_slice<T: Real>(
    yaw: T,
    n: usize,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
    seed: u64,
) -> WorkspaceSlice<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slice_with_rng(yaw, n.max(1), geom, springs, &mut rng)
}

/// Slices at `steps` evenly spaced yaw angles from 0 to yaw_max. Slice k
/// draws from stream k of the master seed.
pub fn yaw_sweep<T: Real>(
    steps: usize,
    n: usize,
    geom: &InterfaceGeometry<T>,
    springs: &SpringParams<T>,
    seed: u64,
) -> Vec<WorkspaceSlice<T>> {
    let steps = steps.max(2);
    (0..steps)
        .map(|k| {
            let yaw = geom.limits.yaw_max * T::lit(k as f64 / (steps - 1) as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            slice_with_rng(yaw, n.max(1), geom, springs, &mut rng)
        })
        .collect()
}

/// True when each area is at most the previous one plus `sigmas` combined
/// standard errors.
pub fn areas_nonincreasing<T: Real>(slices: &[WorkspaceSlice<T>], geom: &InterfaceGeometry<T>, sigmas: f64) -> bool {
    let a = box_area(geom);
    slices.windows(2).all(|w| {
        let s = (w[0].area_sigma(a).powi(2) + w[1].area_sigma(a).powi(2)).sqrt();
        w[1].area <= w[0].area + T::lit(sigmas) * s
    })
}
