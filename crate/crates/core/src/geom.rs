//! Rigid-body pose algebra.
//!
//! Poses are position + unit quaternion `(w, x, y, z)` kept in canonical sign
//! (`w >= 0`). Everything here is a pure function on values.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Absolute tolerance for pure pose math.
pub const MATH_TOL: f64 = 1e-9;
/// Absolute tolerance for round trips through the simulated controller.
pub const SIM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 3]", into = "[f64; 3]"))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    /// Length of the xy projection.
    pub fn norm_xy(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn xy(self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Scales the vector down so its length is at most `limit`.
    /// Returns the (possibly unchanged) vector and whether it was shortened.
    pub fn clamp_norm(self, limit: f64) -> (Vec3, bool) {
        let n = self.norm();
        // Rounding slack keeps the clamp idempotent.
        if n > limit * (1.0 + 1e-12) && n > 0.0 {
            (self * (limit / n), true)
        } else {
            (self, false)
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 4]", into = "[f64; 4]"))]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    /// Unit length, `w >= 0`. At `w == 0` the sign is chosen so the first
    /// nonzero vector component is positive.
    pub fn canonical(self) -> Quat {
        let n = self.norm();
        let mut q = Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n };
        let flip = if q.w != 0.0 {
            q.w < 0.0
        } else if q.x != 0.0 {
            q.x < 0.0
        } else if q.y != 0.0 {
            q.y < 0.0
        } else {
            q.z < 0.0
        };
        if flip {
            q = Quat { w: -q.w, x: -q.x, y: -q.y, z: -q.z };
        }
        // -0.0 and 0.0 serialize differently
        q.w += 0.0;
        q.x += 0.0;
        q.y += 0.0;
        q.z += 0.0;
        q
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * o` (apply `o` first, then `self`).
    pub fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Exponential map of a rotation vector (axis * angle, radians).
    pub fn from_rotation_vector(r: Vec3) -> Quat {
        let angle = r.norm();
        if angle < 1e-12 {
            return Quat { w: 1.0, x: r.x * 0.5, y: r.y * 0.5, z: r.z * 0.5 }.canonical();
        }
        let half = angle * 0.5;
        let s = libm::sin(half) / angle;
        Quat { w: libm::cos(half), x: r.x * s, y: r.y * s, z: r.z * s }.canonical()
    }

    /// Logarithm map; the result has angle in `[0, pi]`.
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * libm::atan2(s, q.w);
        v * (angle / s)
    }

    pub fn from_yaw(yaw: f64) -> Quat {
        Quat::from_rotation_vector(Vec3::new(0.0, 0.0, yaw))
    }

    /// Rotation about +z, in `(-pi, pi]`.
    pub fn yaw(self) -> f64 {
        let x_axis = self.rotate(Vec3::new(1.0, 0.0, 0.0));
        libm::atan2(x_axis.y, x_axis.x)
    }

    /// Angle of the rotation taking `self` to `o`, in `[0, pi]`.
    pub fn angle_to(self, o: Quat) -> f64 {
        // atan2 of the relative rotation stays accurate near zero, where acos
        // of the dot product loses half the digits.
        let r = self.conjugate().mul(o);
        2.0 * libm::atan2(r.vector().norm(), r.w.abs())
    }

    /// Sign-insensitive component distance.
    pub fn distance(self, o: Quat) -> f64 {
        let a = [self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z];
        let b = [self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z];
        let na = a.iter().map(|c| c * c).sum::<f64>();
        let nb = b.iter().map(|c| c * c).sum::<f64>();
        libm::sqrt(na.min(nb))
    }
}

/// Rigid transform. Planar tasks use `z`-only rotations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Pose {
        Pose { position, orientation: orientation.canonical() }
    }

    pub fn from_translation(position: Vec3) -> Pose {
        Pose { position, orientation: Quat::IDENTITY }
    }

    pub fn planar(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
        Pose::new(Vec3::new(x, y, z), Quat::from_yaw(yaw))
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(p)
    }

    /// Position and orientation differences against `o`.
    pub fn distance(&self, o: &Pose) -> (f64, f64) {
        ((self.position - o.position).norm(), self.orientation.angle_to(o.orientation))
    }

    pub fn approx_eq(&self, o: &Pose, tol: f64) -> bool {
        (self.position - o.position).max_abs() <= tol
            && self.orientation.distance(o.orientation) <= tol
    }
}

/// `a` then `b` expressed in `a`'s frame: the homogeneous product `A * B`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        position: a.position + a.orientation.rotate(b.position),
        orientation: a.orientation.mul(b.orientation).canonical(),
    }
}

pub fn inverse(p: &Pose) -> Pose {
    let q = p.orientation.conjugate().canonical();
    Pose { position: -q.rotate(p.position), orientation: q }
}

/// Ordered, non-empty list of poses.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PoseSequence(Vec<Pose>);

impl PoseSequence {
    /// Returns `None` for an empty list.
    pub fn new(poses: Vec<Pose>) -> Option<PoseSequence> {
        if poses.is_empty() {
            None
        } else {
            Some(PoseSequence(poses))
        }
    }

    pub fn single(p: Pose) -> PoseSequence {
        PoseSequence(alloc::vec![p])
    }

    pub fn poses(&self) -> &[Pose] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Pose {
        &self.0[0]
    }

    pub fn last(&self) -> &Pose {
        &self.0[self.0.len() - 1]
    }

    pub fn into_vec(self) -> Vec<Pose> {
        self.0
    }

    /// Appends `other`, dropping its first pose when it coincides with our last.
    pub fn join(mut self, other: PoseSequence) -> PoseSequence {
        let mut rest = other.0.into_iter();
        if let Some(head) = rest.next() {
            if !head.approx_eq(self.last(), MATH_TOL) {
                self.0.push(head);
            }
        }
        self.0.extend(rest);
        self
    }
}

/// Re-expresses `seg` relative to `obj_dst` so that every pose keeps its
/// relative pose to the object frame.
pub fn transform_segment(seg: &PoseSequence, obj_src: &Pose, obj_dst: &Pose) -> PoseSequence {
    let t = compose(obj_dst, &inverse(obj_src));
    PoseSequence(seg.0.iter().map(|p| compose(&t, p)).collect())
}

/// Relative rotation `to * from^-1` as a rotation vector. Exactly antipodal
/// orientations resolve to a deterministic axis via [`Quat::canonical`].
fn relative_rotation(from: Quat, to: Quat) -> Vec3 {
    to.mul(from.conjugate()).canonical().to_rotation_vector()
}

/// Number of controller steps needed to cover `distance` and `angle`.
pub fn steps_required(distance: f64, angle: f64, limits: &ControllerLimits) -> usize {
    let need = (distance / limits.max_step_translation).max(angle / limits.max_step_rotation);
    // 0.1 / 0.02 evaluates to 5.000000000000001
    let n = libm::ceil(need - 1e-9);
    if n <= 0.0 {
        0
    } else {
        n as usize
    }
}

/// Straight-line position, shortest-arc orientation path from `from` to `to`,
/// with every consecutive step within the controller limits.
pub fn interpolate(from: &Pose, to: &Pose, limits: &ControllerLimits) -> PoseSequence {
    let dp = to.position - from.position;
    let rv = relative_rotation(from.orientation, to.orientation);
    let n = steps_required(dp.norm(), rv.norm(), limits);
    let mut out = Vec::with_capacity(n + 1);
    out.push(*from);
    for i in 1..n {
        let s = i as f64 / n as f64;
        out.push(Pose {
            position: from.position + dp * s,
            orientation: Quat::from_rotation_vector(rv * s).mul(from.orientation).canonical(),
        });
    }
    if n > 0 {
        out.push(*to);
    }
    PoseSequence(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GripperCommand {
    Open,
    Close,
    #[default]
    Hold,
}

/// Delta-pose command in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DeltaAction {
    pub translation: Vec3,
    /// Axis-angle, radians.
    pub rotation: Vec3,
    pub gripper: GripperCommand,
}

impl DeltaAction {
    pub const ZERO: DeltaAction =
        DeltaAction { translation: Vec3::ZERO, rotation: Vec3::ZERO, gripper: GripperCommand::Hold };

    pub fn translate(x: f64, y: f64, z: f64) -> DeltaAction {
        DeltaAction { translation: Vec3::new(x, y, z), ..DeltaAction::ZERO }
    }

    pub fn gripper(cmd: GripperCommand) -> DeltaAction {
        DeltaAction { gripper: cmd, ..DeltaAction::ZERO }
    }

    pub fn with_gripper(mut self, cmd: GripperCommand) -> DeltaAction {
        self.gripper = cmd;
        self
    }

    /// Shortens translation and rotation to the controller limits, keeping
    /// their directions. The flag reports whether anything was shortened.
    pub fn clamped(self, limits: &ControllerLimits) -> (DeltaAction, bool) {
        let (t, ct) = self.translation.clamp_norm(limits.max_step_translation);
        let (r, cr) = self.rotation.clamp_norm(limits.max_step_rotation);
        (DeltaAction { translation: t, rotation: r, gripper: self.gripper }, ct || cr)
    }

    pub fn within(&self, limits: &ControllerLimits) -> bool {
        self.translation.norm() <= limits.max_step_translation + MATH_TOL
            && self.rotation.norm() <= limits.max_step_rotation + MATH_TOL
    }
}

/// Per-step motion limits of the end-effector controller.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ControllerLimits {
    /// Meters per step.
    pub max_step_translation: f64,
    /// Radians per step.
    pub max_step_rotation: f64,
}

impl Default for ControllerLimits {
    fn default() -> Self {
        ControllerLimits { max_step_translation: 0.005, max_step_rotation: 0.1 }
    }
}

pub fn delta_between(from: &Pose, to: &Pose) -> DeltaAction {
    DeltaAction {
        translation: to.position - from.position,
        rotation: relative_rotation(from.orientation, to.orientation),
        gripper: GripperCommand::Hold,
    }
}

/// Applies `d` (clamped to `limits`) to `p`. The flag is set when clamping
/// kept the step from reaching its target.
pub fn apply_delta(p: &Pose, d: &DeltaAction, limits: &ControllerLimits) -> (Pose, bool) {
    let (d, clamped) = d.clamped(limits);
    (apply_delta_unclamped(p, &d), clamped)
}

pub(crate) fn apply_delta_unclamped(p: &Pose, d: &DeltaAction) -> Pose {
    Pose {
        position: p.position + d.translation,
        orientation: Quat::from_rotation_vector(d.rotation).mul(p.orientation).canonical(),
    }
}
