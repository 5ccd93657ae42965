use alloc::vec::Vec;
use core::fmt;

use super::dataset::{Actor, Step};
use super::segment::Piece;
use crate::geom::{compose, delta_between, interpolate, inverse, transform_segment, DeltaAction, Pose, PoseSequence, SIM_TOL};
use crate::world::{observe, step, Role, TaskSpec, WorldState};

/// Target poses plus the commands that should realize them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPlan {
    pub poses: PoseSequence,
    /// `actions[i]` moves from `poses[i]` to `poses[i + 1]`.
    pub actions: Vec<DeltaAction>,
    /// Number of leading interpolation steps.
    pub bridge_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptError {
    /// A planned pose leaves the workspace.
    OutsideWorkspace { index: usize },
    /// The reference object is missing from the current state.
    MissingObject,
}

impl fmt::Display for AdaptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptError::OutsideWorkspace { index } => write!(f, "planned pose {index} leaves the workspace"),
            AdaptError::MissingObject => f.write_str("reference object missing"),
        }
    }
}

impl core::error::Error for AdaptError {}

/// Rigidly re-expresses a world-frame delta under `t`.
fn transform_action(t: &Pose, a: &DeltaAction) -> DeltaAction {
    DeltaAction {
        translation: t.orientation.rotate(a.translation),
        rotation: t.orientation.rotate(a.rotation),
        gripper: a.gripper,
    }
}

/// Retargets `piece` to the current true pose of its reference object and
/// prefixes an interpolation bridge from the current end-effector pose.
pub fn adapt(current: &WorldState, task: &TaskSpec, piece: &Piece) -> Result<ReplayPlan, AdaptError> {
    let sub = task.subtask(piece.segment.subtask as usize).ok_or(AdaptError::MissingObject)?;
    let obj_dst = *current.object(sub.reference_object).ok_or(AdaptError::MissingObject)?;
    let obj_src = piece.reference();
    let moved = transform_segment(&piece.poses, &obj_src, &obj_dst);
    let t = compose(&obj_dst, &inverse(&obj_src));

    let bridge = interpolate(&current.ee_pose, moved.first(), &task.limits);
    let mut actions: Vec<DeltaAction> = bridge.poses().windows(2).map(|w| delta_between(&w[0], &w[1])).collect();
    let bridge_len = actions.len();
    actions.extend(piece.actions.iter().map(|a| transform_action(&t, a)));

    let mut poses = bridge.into_vec();
    poses.extend_from_slice(&moved.poses()[1..]);
    if let Some(index) = poses.iter().position(|p| !task.workspace.contains_with(p.position, 1e-9)) {
        return Err(AdaptError::OutsideWorkspace { index });
    }
    Ok(ReplayPlan { poses: PoseSequence::new(poses).expect("bridge is non-empty"), actions, bridge_len })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayFailure {
    /// The end effector missed a planned pose by more than the tolerance.
    Drift { index: usize },
    Horizon,
}

/// Executes `plan` open-loop, appending one step per action with `actor`.
pub fn replay(
    task: &TaskSpec,
    state: WorldState,
    plan: &ReplayPlan,
    actor: Actor,
    out: &mut Vec<Step>,
) -> Result<WorldState, ReplayFailure> {
    let mut s = state;
    for (i, action) in plan.actions.iter().enumerate() {
        if s.step_count >= task.horizon {
            return Err(ReplayFailure::Horizon);
        }
        let obs = observe(&s, task, Role::Robot);
        out.push(Step { t: s.step_count, obs, action: *action, actor, contact: s.last_contact });
        s = step(task, &s, action).map_err(|_| ReplayFailure::Horizon)?.0;
        let expected = &plan.poses.poses()[i + 1];
        if !s.ee_pose.approx_eq(expected, SIM_TOL) {
            return Err(ReplayFailure::Drift { index: i });
        }
    }
    Ok(s)
}
