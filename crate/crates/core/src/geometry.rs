//! Physical constants of the interface: attachment layout, springs and motion limits.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Number of planar compression springs.
pub const SPRINGS: usize = 6;

/// Narrowest abduction/adduction range reported for the human ankle (deg).
pub const HUMAN_YAW_RANGE_DEG: f64 = 15.4;
/// Narrowest dorsiflexion range reported for the human ankle (deg).
pub const HUMAN_PITCH_RANGE_DEG: f64 = 20.3;

/// Planar point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// Rotates the point by `angle` radians about the origin.
    pub fn rotated(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    fn mirror_x(self) -> Self {
        Self::new(-self.x, self.y)
    }

    fn mirror_y(self) -> Self {
        Self::new(self.x, -self.y)
    }
}

impl<T: Real> std::ops::Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> std::ops::Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

/// Full-span dimension constants of the six-spring layout (m).
///
/// Springs 1 and 2 sit on the y axis at ±a/2 (base) and ±a′/2 (pedal).
/// Springs 3..6 sit at (∓b/2, ±c/2) on the base and (∓b′/2, ±c′/2) on the
/// pedal, left pair first, front before rear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutDims<T> {
    pub base_length: T,
    pub base_width: T,
    pub mobile_length: T,
    pub mobile_width: T,
    pub spacing_base: T,
    pub spacing_mobile: T,
}

impl<T: Real> LayoutDims<T> {
    /// Base attachment points a_i in frame {O}.
    pub fn base_points(&self) -> [Point2<T>; SPRINGS] {
        layout(self.base_length, self.base_width, self.spacing_base)
    }

    /// Pedal attachment points b_i in frame {C}.
    pub fn mobile_points(&self) -> [Point2<T>; SPRINGS] {
        layout(self.mobile_length, self.mobile_width, self.spacing_mobile)
    }
}

fn layout<T: Real>(length: T, width: T, spacing: T) -> [Point2<T>; SPRINGS] {
    let h = T::lit(0.5);
    let (l, w, s) = (length * h, width * h, spacing * h);
    [
        Point2::new(T::zero(), l),
        Point2::new(T::zero(), -l),
        Point2::new(-w, s),
        Point2::new(-w, -s),
        Point2::new(w, s),
        Point2::new(w, -s),
    ]
}

/// Motion limits (m, rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits<T> {
    pub x_max: T,
    pub y_max: T,
    pub yaw_max: T,
    pub pitch_max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceGeometry<T> {
    pub dims: LayoutDims<T>,
    /// a_i in frame {O}.
    pub base: [Point2<T>; SPRINGS],
    /// b_i in frame {C}.
    pub mobile: [Point2<T>; SPRINGS],
    /// Treadle lever arm converting torsion torque to load-cell force (m).
    pub pitch_lever: T,
    pub limits: MotionLimits<T>,
}

impl<T: Real> InterfaceGeometry<T> {
    pub fn from_dims(dims: LayoutDims<T>, pitch_lever: T, limits: MotionLimits<T>) -> Self {
        Self {
            base: dims.base_points(),
            mobile: dims.mobile_points(),
            dims,
            pitch_lever,
            limits,
        }
    }

    /// Guide length of every spring at the home pose.
    pub fn home_lengths(&self) -> [T; SPRINGS] {
        std::array::from_fn(|i| (self.base[i] - self.mobile[i]).norm())
    }

    pub fn cast<U: Real>(&self) -> InterfaceGeometry<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        let p = |q: &Point2<T>| Point2::new(c(q.x), c(q.y));
        InterfaceGeometry {
            dims: LayoutDims {
                base_length: c(self.dims.base_length),
                base_width: c(self.dims.base_width),
                mobile_length: c(self.dims.mobile_length),
                mobile_width: c(self.dims.mobile_width),
                spacing_base: c(self.dims.spacing_base),
                spacing_mobile: c(self.dims.spacing_mobile),
            },
            base: std::array::from_fn(|i| p(&self.base[i])),
            mobile: std::array::from_fn(|i| p(&self.mobile[i])),
            pitch_lever: c(self.pitch_lever),
            limits: MotionLimits {
                x_max: c(self.limits.x_max),
                y_max: c(self.limits.y_max),
                yaw_max: c(self.limits.yaw_max),
                pitch_max: c(self.limits.pitch_max),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringParams<T> {
    /// k_i (N/m).
    pub stiffness: [T; SPRINGS],
    pub free_length: T,
    pub home_deflection: T,
    pub max_deflection: T,
    /// l_0i, guide length at home (m).
    pub home_length: [T; SPRINGS],
    /// F_0i (N).
    pub pretension: [T; SPRINGS],
    /// k_t (N·m/rad).
    pub torsion_stiffness: T,
    /// F7_0 and F8_0 (N).
    pub pitch_preload: [T; 2],
}

impl<T: Real> SpringParams<T> {
    /// Uniform springs seated on `geom`'s home guide lengths.
    pub fn uniform(
        geom: &InterfaceGeometry<T>,
        stiffness: T,
        free_length: T,
        home_deflection: T,
        max_deflection: T,
        torsion_stiffness: T,
        pitch_preload: T,
    ) -> Self {
        Self {
            stiffness: [stiffness; SPRINGS],
            free_length,
            home_deflection,
            max_deflection,
            home_length: geom.home_lengths(),
            pretension: [stiffness * home_deflection; SPRINGS],
            torsion_stiffness,
            pitch_preload: [pitch_preload; 2],
        }
    }

    /// k_i·δ_max.
    pub fn saturation_force(&self, i: usize) -> T {
        self.stiffness[i] * self.max_deflection
    }

    /// Travel from home to full compression, δ_max − δ_home.
    pub fn travel(&self) -> T {
        self.max_deflection - self.home_deflection
    }

    pub fn cast<U: Real>(&self) -> SpringParams<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        SpringParams {
            stiffness: self.stiffness.map(c),
            free_length: c(self.free_length),
            home_deflection: c(self.home_deflection),
            max_deflection: c(self.max_deflection),
            home_length: self.home_length.map(c),
            pretension: self.pretension.map(c),
            torsion_stiffness: c(self.torsion_stiffness),
            pitch_preload: self.pitch_preload.map(c),
        }
    }
}

/// Lateral half spacing at which pure yaw of `yaw` fully compresses the
/// front-right spring, for a layout with equal base and pedal spacing.
///
/// Solved by bisection on the guide length of spring 5.
pub fn yaw_saturation_half_spacing<T: Real>(
    base_half_width: T,
    mobile_half_width: T,
    home_length: T,
    travel: T,
    yaw: T,
) -> Option<T> {
    let target = home_length - travel;
    let f = |s: T| {
        let a = Point2::new(base_half_width, s);
        let b = Point2::new(mobile_half_width, s).rotated(yaw);
        (a - b).norm() - target
    };
    // First sign change on a coarse scan, then bisection.
    let steps = 400;
    let at = |k: usize| T::lit(1e-3 + k as f64 * (1.0 - 1e-3) / steps as f64);
    let k = (0..steps).find(|&k| f(at(k)).signum() != f(at(k + 1)).signum())?;
    let (mut lo, mut hi) = (at(k), at(k + 1));
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Some((lo + hi) * T::lit(0.5))
}

/// Canonical configuration.
///
/// Springs: 200 N/m, 28 mm home deflection (5.6 N pretension), 48 mm maximum
/// deflection, 60 mm free length, 80 mm home guide length. The pedal axial
/// span is twice its lateral span, which cancels the yaw moment produced by
/// diagonal translations, and the lateral spacing is solved so that pure yaw
/// saturates the front-right spring exactly at the yaw limit.
pub fn default_geometry<T: Real>() -> (InterfaceGeometry<T>, SpringParams<T>) {
    let home_length = T::lit(0.080);
    let travel = T::lit(0.020);
    let limits = MotionLimits {
        x_max: travel,
        y_max: travel,
        yaw_max: T::lit(12.5).to_radians(),
        pitch_max: T::lit(10.0).to_radians(),
    };
    let mobile_half_width = T::lit(0.12);
    let base_half_width = mobile_half_width - home_length;
    let mobile_half_length = mobile_half_width + mobile_half_width;
    let base_half_length = mobile_half_length - home_length;
    let half_spacing = yaw_saturation_half_spacing(
        base_half_width,
        mobile_half_width,
        home_length,
        travel,
        limits.yaw_max,
    )
    .expect("default layout brackets the yaw saturation spacing");
    let two = T::lit(2.0);
    let dims = LayoutDims {
        base_length: two * base_half_length,
        base_width: two * base_half_width,
        mobile_length: two * mobile_half_length,
        mobile_width: two * mobile_half_width,
        spacing_base: two * half_spacing,
        spacing_mobile: two * half_spacing,
    };
    let geom = InterfaceGeometry::from_dims(dims, T::lit(0.10), limits);
    let springs = SpringParams::uniform(
        &geom,
        T::lit(200.0),
        T::lit(0.060),
        T::lit(0.028),
        T::lit(0.048),
        T::lit(0.5),
        T::lit(2.0),
    );
    (geom, springs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, field: impl Into<String>, rule: &str) {
        self.violations.push(Violation {
            field: field.into(),
            rule: rule.to_string(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.field, v.rule)?;
        }
        Ok(())
    }
}

/// Rule labels reported by [`validate`].
pub mod rules {
    pub const SYMMETRIC: &str = "layout symmetric about both axes";
    pub const LAYOUT_DIMS: &str = "attachments match dimension constants";
    pub const AXIAL_MIDLINE: &str = "springs 1,2 on the y-axis midline";
    pub const SIDES: &str = "springs 3,4 left and 5,6 right";
    pub const NONDEGENERATE: &str = "closed-form coefficients nondegenerate";
    pub const LIMITS_POSITIVE: &str = "limits > 0";
    pub const YAW_HUMAN: &str = "yaw_max below human range";
    pub const PITCH_HUMAN: &str = "pitch_max below human range";
    pub const LEVER_POSITIVE: &str = "pitch lever > 0";
    pub const STIFFNESS_POSITIVE: &str = "k_i > 0";
    pub const PRETENSION: &str = "F_0i = k·δ_home";
    pub const HOME_BELOW_MAX: &str = "δ_home < δ_max";
    pub const HOME_POSITIVE: &str = "δ_home > 0";
    pub const MAX_BELOW_FREE: &str = "δ_max < free_length";
    pub const SATURATION_ABOVE_PRETENSION: &str = "k·δ_max > F_0i";
    pub const HOME_LENGTH: &str = "l_0i equals home guide length";
    pub const TORSION: &str = "k_t > 0";
    pub const PRELOAD: &str = "pitch preload ≥ 0";
}

/// Checks every geometric and spring invariant; never fails.
pub fn validate<T: Real>(geom: &InterfaceGeometry<T>, springs: &SpringParams<T>) -> ValidationReport {
    let mut r = ValidationReport::default();
    let tol = T::lit(1e-9);
    let close = |a: Point2<T>, b: Point2<T>| (a - b).norm() <= tol;

    let x_partner = [0, 1, 4, 5, 2, 3];
    let y_partner = [1, 0, 3, 2, 5, 4];
    for i in 0..SPRINGS {
        let (xi, yi) = (x_partner[i], y_partner[i]);
        let ok = close(geom.base[i].mirror_x(), geom.base[xi])
            && close(geom.mobile[i].mirror_x(), geom.mobile[xi])
            && close(geom.base[i].mirror_y(), geom.base[yi])
            && close(geom.mobile[i].mirror_y(), geom.mobile[yi]);
        if !ok {
            r.push(format!("attachment[{}]", i + 1), rules::SYMMETRIC);
        }
    }
    let (base, mobile) = (geom.dims.base_points(), geom.dims.mobile_points());
    for i in 0..SPRINGS {
        if !close(base[i], geom.base[i]) || !close(mobile[i], geom.mobile[i]) {
            r.push(format!("attachment[{}]", i + 1), rules::LAYOUT_DIMS);
        }
    }
    for i in 0..2 {
        let on_axis = geom.base[i].x.abs() <= tol && geom.mobile[i].x.abs() <= tol;
        let side = if i == 0 { T::one() } else { -T::one() };
        if !on_axis || geom.base[i].y * side <= T::zero() || geom.mobile[i].y * side <= T::zero() {
            r.push(format!("attachment[{}]", i + 1), rules::AXIAL_MIDLINE);
        }
    }
    for i in 2..SPRINGS {
        let side = if i < 4 { -T::one() } else { T::one() };
        if geom.base[i].x * side <= T::zero() || geom.mobile[i].x * side <= T::zero() {
            r.push(format!("attachment[{}]", i + 1), rules::SIDES);
        }
    }
    let d = &geom.dims;
    let p = d.base_width * d.spacing_mobile - d.mobile_width * d.spacing_base;
    let split = (d.base_length - d.mobile_length) * (d.base_width - d.mobile_width);
    if p.abs() <= tol * tol || split <= T::zero() {
        r.push("dims", rules::NONDEGENERATE);
    }

    let l = &geom.limits;
    for (name, v) in [("x_max", l.x_max), ("y_max", l.y_max), ("yaw_max", l.yaw_max), ("pitch_max", l.pitch_max)] {
        if !(v > T::zero()) {
            r.push(name, rules::LIMITS_POSITIVE);
        }
    }
    if l.yaw_max >= T::lit(HUMAN_YAW_RANGE_DEG).to_radians() {
        r.push("yaw_max", rules::YAW_HUMAN);
    }
    if l.pitch_max >= T::lit(HUMAN_PITCH_RANGE_DEG).to_radians() {
        r.push("pitch_max", rules::PITCH_HUMAN);
    }
    if !(geom.pitch_lever > T::zero()) {
        r.push("pitch_lever", rules::LEVER_POSITIVE);
    }

    let s = springs;
    if !(s.home_deflection > T::zero()) {
        r.push("home_deflection", rules::HOME_POSITIVE);
    }
    if !(s.home_deflection < s.max_deflection) {
        r.push("home_deflection", rules::HOME_BELOW_MAX);
    }
    if !(s.max_deflection < s.free_length) {
        r.push("max_deflection", rules::MAX_BELOW_FREE);
    }
    let home = geom.home_lengths();
    for i in 0..SPRINGS {
        let k = s.stiffness[i];
        if !(k > T::zero()) {
            r.push(format!("stiffness[{}]", i + 1), rules::STIFFNESS_POSITIVE);
        }
        let f0 = k * s.home_deflection;
        if (s.pretension[i] - f0).abs() > tol * f0.abs().max(T::one()) {
            r.push(format!("pretension[{}]", i + 1), rules::PRETENSION);
        }
        if !(k * s.max_deflection > s.pretension[i]) {
            r.push(format!("pretension[{}]", i + 1), rules::SATURATION_ABOVE_PRETENSION);
        }
        if (s.home_length[i] - home[i]).abs() > tol {
            r.push(format!("home_length[{}]", i + 1), rules::HOME_LENGTH);
        }
    }
    if !(s.torsion_stiffness > T::zero()) {
        r.push("torsion_stiffness", rules::TORSION);
    }
    for (i, f) in s.pitch_preload.iter().enumerate() {
        if !(*f >= T::zero()) {
            r.push(format!("pitch_preload[{}]", i + 7), rules::PRELOAD);
        }
    }
    r
}
