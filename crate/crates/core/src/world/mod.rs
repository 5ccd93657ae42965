//! Quasi-static kinematic simulator for the desk-scale tasks.
//!
//! The gripper is a point with a width. Objects are rigid poses; a held object
//! follows the end effector. The peg is a column: a held object can only pass
//! below its rim when centered within `epsilon`, otherwise it stops on the rim
//! and a [`ContactEvent`] fires.

mod corruption;
mod render;
mod task;

pub use corruption::{corrupt, CorruptionDraw, CorruptionError, CorruptionKind, CorruptionModel, MinOffsetAxis, MAX_REJECTION_DRAWS};
pub use render::{render_frame, FrameDescriptor, ShapeKind, SceneShape};
pub use task::{
    Criterion, FeedbackMode, GripperWidths, NutGeometry, ObjectId, PegGeometry, Placement, Predicate, Region,
    SubtaskSpec, TaskError, TaskId, TaskSpec, UnknownTask,
};

use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geom::{apply_delta_unclamped, compose, inverse, DeltaAction, GripperCommand, Pose, Vec3};
use crate::rng::{derive_seed, rng_from, uniform};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ObjectState {
    pub id: ObjectId,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Held {
    pub object: ObjectId,
    /// Object pose in the end-effector frame, fixed at grasp time.
    pub grip: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ContactEvent {
    pub objects: (ObjectId, ObjectId),
    pub location: Vec3,
    /// Step count after the step that produced the contact.
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeedbackFeatures {
    pub active: bool,
    pub payload: Vec3,
    pub mode: FeedbackMode,
}

impl FeedbackFeatures {
    pub fn inactive(mode: FeedbackMode) -> FeedbackFeatures {
        FeedbackFeatures { active: false, payload: Vec3::ZERO, mode }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WorldState {
    pub ee_pose: Pose,
    pub gripper_width: f64,
    /// Ground-truth poses.
    pub objects: Vec<ObjectState>,
    pub held: Option<Held>,
    /// 1 = nominal handle side, 2 = mirrored.
    pub geometry_variant: u8,
    pub step_count: u32,
    pub subtask_index: u32,
    /// Frozen per subtask once contact occurs.
    pub feedback: FeedbackFeatures,
    pub corruption: CorruptionDraw,
    pub last_contact: Option<ContactEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepError {
    EpisodeOver,
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("episode is over: horizon reached")
    }
}

impl core::error::Error for StepError {}

impl WorldState {
    pub fn object(&self, id: ObjectId) -> Option<&Pose> {
        self.objects.iter().find(|o| o.id == id).map(|o| &o.pose)
    }

    fn object_mut(&mut self, id: ObjectId) -> Option<&mut Pose> {
        self.objects.iter_mut().find(|o| o.id == id).map(|o| &mut o.pose)
    }

    /// True pose of the current subtask's reference object.
    pub fn reference_pose(&self, task: &TaskSpec) -> Option<Pose> {
        let s = task.subtask(self.subtask_index as usize)?;
        self.object(s.reference_object).copied()
    }

    pub fn holding(&self) -> Option<ObjectId> {
        self.held.map(|h| h.object)
    }

    /// Gripper shut on nothing: the observable signature of a missed grasp.
    pub fn closed_empty(&self, task: &TaskSpec) -> bool {
        self.held.is_none() && self.gripper_width <= task.gripper.closed_empty + 1e-12
    }

    pub fn is_done(&self, task: &TaskSpec) -> bool {
        goal_satisfied(self, task) || self.step_count >= task.horizon
    }
}

/// World position of the graspable handle for a nut at `nut`.
pub fn handle_position(nut: &Pose, geometry: &NutGeometry, variant: u8) -> Vec3 {
    let side = if variant == 2 { -1.0 } else { 1.0 };
    nut.transform_point(Vec3::new(side * geometry.handle_offset, 0.0, geometry.handle_height))
}

/// Samples an initial state. Object placement depends only on `seed`; the
/// corruption draw additionally on `z.seed`.
pub fn reset(task: &TaskSpec, z: &CorruptionModel, seed: u64) -> Result<WorldState, CorruptionError> {
    let mut rng = rng_from(derive_seed(seed, 0));
    let mut objects = Vec::new();
    for p in &task.placements {
        let r = &p.region;
        let pos = Vec3::new(
            uniform(&mut rng, r.min.x, r.max.x),
            uniform(&mut rng, r.min.y, r.max.y),
            uniform(&mut rng, r.min.z, r.max.z),
        );
        let yaw = uniform(&mut rng, p.yaw_min, p.yaw_max);
        objects.push(ObjectState { id: p.object, pose: Pose::planar(pos.x, pos.y, pos.z, yaw) });
    }
    let mut held = None;
    let mut gripper_width = task.gripper.open;
    if let Some(id) = task.initially_held {
        objects.push(ObjectState { id, pose: task.ee_start });
        held = Some(Held { object: id, grip: Pose::IDENTITY });
        gripper_width = task.gripper.holding;
    }
    let mut zrng = rng_from(derive_seed(derive_seed(seed, 1), z.seed));
    let corruption = z.draw(task, &mut zrng)?;
    Ok(WorldState {
        ee_pose: task.ee_start,
        gripper_width,
        objects,
        held,
        geometry_variant: corruption.variant,
        step_count: 0,
        subtask_index: 0,
        feedback: FeedbackFeatures::inactive(task.feedback),
        corruption,
        last_contact: None,
    })
}

/// Same placement as `reset`, with a given corruption draw.
pub fn reset_with_draw(task: &TaskSpec, seed: u64, draw: CorruptionDraw) -> WorldState {
    let mut s = reset(task, &CorruptionModel::none(), seed).expect("clean reset cannot fail");
    s.geometry_variant = draw.variant;
    s.corruption = draw;
    s
}

fn subtask_complete(state: &WorldState, task: &TaskSpec, s: &SubtaskSpec) -> bool {
    match s.predicate {
        Predicate::Grasped => {
            state.holding() == Some(s.reference_object)
                && state.object(s.reference_object).is_some_and(|o| o.position.z >= s.lift_height - 1e-9)
        }
        Predicate::Inserted | Predicate::Placed => {
            let Some(held) = state.held else { return false };
            let (Some(obj), Some(target)) = (state.object(held.object), state.object(s.reference_object)) else {
                return false;
            };
            let miss = (obj.position - target.position).norm_xy();
            miss <= task.epsilon && obj.position.z <= target.position.z + task.peg.seat_height + 1e-9
        }
    }
}

pub fn goal_satisfied(state: &WorldState, task: &TaskSpec) -> bool {
    state.subtask_index as usize >= task.subtasks.len()
}

/// Advances the world by one controller step.
pub fn step(
    task: &TaskSpec,
    state: &WorldState,
    action: &DeltaAction,
) -> Result<(WorldState, Option<ContactEvent>), StepError> {
    if state.step_count >= task.horizon {
        return Err(StepError::EpisodeOver);
    }
    let (action, _) = action.clamped(&task.limits);
    let mut next = state.clone();
    let mut contact = None;

    let mut target = apply_delta_unclamped(&state.ee_pose, &action);
    target.position = task.workspace.clamp(target.position);

    if let Some(held) = state.held {
        if let Some(peg) = state.object(ObjectId::Peg).copied() {
            let before = compose(&state.ee_pose, &held.grip).position;
            let after = compose(&target, &held.grip).position;
            let (adjusted, hit) = peg_constraint(task, &peg, before, after);
            target.position += adjusted - after;
            if let Some(location) = hit {
                contact = Some((ObjectId::Nut, ObjectId::Peg, location));
            }
        }
    }
    next.ee_pose = target;
    if let Some(held) = next.held {
        let pose = compose(&next.ee_pose, &held.grip);
        if let Some(p) = next.object_mut(held.object) {
            *p = pose;
        }
    }

    match action.gripper {
        GripperCommand::Hold => {}
        GripperCommand::Open => {
            next.held = None;
            next.gripper_width = task.gripper.open;
        }
        GripperCommand::Close => {
            if next.held.is_none() {
                match try_grasp(task, &next) {
                    Some(id) => {
                        let obj = *next.object(id).expect("grasped object exists");
                        next.held = Some(Held { object: id, grip: compose(&inverse(&next.ee_pose), &obj) });
                        next.gripper_width = task.gripper.holding;
                    }
                    None => {
                        next.gripper_width = task.gripper.closed_empty;
                        if let Some(loc) = inside_nut_body(task, &next) {
                            contact = Some((ObjectId::Gripper, ObjectId::Nut, loc));
                        }
                    }
                }
            }
        }
    }

    next.step_count += 1;
    let event = contact.map(|(a, b, location)| ContactEvent { objects: (a, b), location, step: next.step_count });
    next.last_contact = event;

    if let Some(s) = task.subtask(next.subtask_index as usize) {
        if event.is_some() && !next.feedback.active {
            if let Some(reference) = next.object(s.reference_object).copied() {
                next.feedback = feedback_for(task, &next, &reference);
            }
        }
        if subtask_complete(&next, task, s) {
            next.subtask_index += 1;
            next.feedback = FeedbackFeatures::inactive(task.feedback);
        }
    }
    Ok((next, event))
}

fn feedback_for(task: &TaskSpec, state: &WorldState, reference: &Pose) -> FeedbackFeatures {
    let mode = task.feedback;
    match mode {
        FeedbackMode::None => FeedbackFeatures::inactive(mode),
        FeedbackMode::Full => FeedbackFeatures { active: true, payload: reference.position, mode },
        FeedbackMode::Partial => {
            let from = state
                .held
                .and_then(|h| state.object(h.object))
                .map(|p| p.position)
                .unwrap_or(state.ee_pose.position);
            let d = (reference.position - from).xy();
            let n = d.norm();
            let payload = if n > 1e-12 { d * (1.0 / n) } else { Vec3::new(1.0, 0.0, 0.0) };
            FeedbackFeatures { active: true, payload, mode }
        }
    }
}

/// Moves a held object's origin from `before` toward `after` subject to the
/// peg column. Returns the admissible position and the rim contact location.
fn peg_constraint(task: &TaskSpec, peg: &Pose, before: Vec3, after: Vec3) -> (Vec3, Option<Vec3>) {
    let g = &task.peg;
    let rim = peg.position.z + g.rim_height;
    let seat = peg.position.z + g.seat_height;
    let miss_vec = (after - peg.position).xy();
    let miss = miss_vec.norm();
    let aligned = miss <= task.epsilon;
    let mut out = after;

    if before.z >= rim - 1e-12 {
        if after.z < rim && !aligned && miss < g.obstruction_radius {
            out.z = rim;
            let dir = if miss > 1e-12 { miss_vec * (1.0 / miss) } else { Vec3::new(1.0, 0.0, 0.0) };
            let loc = peg.position.xy() + dir * miss.min(g.radius);
            return (out, Some(Vec3::new(loc.x, loc.y, rim)));
        }
    } else {
        let before_miss = (before - peg.position).norm_xy();
        let before_aligned = before_miss <= task.epsilon;
        if !aligned && miss < g.obstruction_radius {
            // Sliding inside the hole or against the side: lateral motion blocked.
            out.x = before.x;
            out.y = before.y;
            if !before_aligned && before_miss >= g.obstruction_radius {
                let dir = if miss > 1e-12 { miss_vec * (1.0 / miss) } else { Vec3::new(1.0, 0.0, 0.0) };
                let loc = peg.position.xy() + dir * g.obstruction_radius;
                return (clamp_seat(out, peg, task, seat), Some(Vec3::new(loc.x, loc.y, before.z)));
            }
        }
    }
    (clamp_seat(out, peg, task, seat), None)
}

fn clamp_seat(mut p: Vec3, peg: &Pose, task: &TaskSpec, seat: f64) -> Vec3 {
    if (p - peg.position).norm_xy() <= task.epsilon && p.z < seat {
        p.z = seat;
    }
    p
}

fn try_grasp(task: &TaskSpec, state: &WorldState) -> Option<ObjectId> {
    let geometry = task.nut.as_ref()?;
    let nut = state.object(ObjectId::Nut)?;
    let handle = handle_position(nut, geometry, state.geometry_variant);
    ((handle - state.ee_pose.position).norm() <= task.grasp_radius).then_some(ObjectId::Nut)
}

fn inside_nut_body(task: &TaskSpec, state: &WorldState) -> Option<Vec3> {
    let geometry = task.nut.as_ref()?;
    let nut = state.object(ObjectId::Nut)?;
    let ee = state.ee_pose.position;
    let inside = (ee - nut.position).norm_xy() < geometry.body_radius && ee.z < nut.position.z + geometry.body_height;
    inside.then_some(ee)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Robot,
    Expert,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Observation {
    pub ee_pose: Pose,
    pub gripper_width: f64,
    /// Aligned with `TaskSpec::observed_objects`.
    pub objects: Vec<ObjectState>,
    pub feedback: FeedbackFeatures,
    pub subtask_index: u32,
    /// Present only in expert observations.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub geometry_variant: Option<u8>,
}

impl Observation {
    pub fn object(&self, id: ObjectId) -> Option<&Pose> {
        self.objects.iter().find(|o| o.id == id).map(|o| &o.pose)
    }
}

/// Projects the state into what `role` sees. The robot sees object poses
/// shifted by the frozen offset of the current subtask; the expert sees truth.
pub fn observe(state: &WorldState, task: &TaskSpec, role: Role) -> Observation {
    let subtask = (state.subtask_index as usize).min(task.subtasks.len().saturating_sub(1));
    let objects = task
        .observed_objects
        .iter()
        .enumerate()
        .map(|(slot, &id)| {
            let mut pose = state.object(id).copied().unwrap_or(Pose::IDENTITY);
            if role == Role::Robot && state.holding() != Some(id) {
                pose.position += state.corruption.offset(subtask, slot);
            }
            ObjectState { id, pose }
        })
        .collect();
    Observation {
        ee_pose: state.ee_pose,
        gripper_width: state.gripper_width,
        objects,
        feedback: state.feedback,
        subtask_index: state.subtask_index,
        geometry_variant: (role == Role::Expert).then_some(state.geometry_variant),
    }
}
