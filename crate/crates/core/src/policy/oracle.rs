#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geom::{DeltaAction, GripperCommand, Pose, Vec3};
use crate::world::{handle_position, Observation, ObjectId, Predicate, TaskSpec};

/// Scripted expert acting on ground-truth observations.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct OracleExpert {
    /// Alignment tolerance before grasping, meters.
    pub tolerance: f64,
    /// Yaw alignment tolerance, radians.
    pub yaw_tolerance: f64,
    /// How far below the seat a placement descent aims, meters.
    pub press_depth: f64,
    /// Height above the rim at which a carried object is moved sideways.
    pub clearance: f64,
    /// Lateral miss below which a placement descends while still correcting.
    pub descend_radius: f64,
    /// Proportional gain on lateral placement moves.
    pub lateral_gain: f64,
}

impl Default for OracleExpert {
    fn default() -> Self {
        OracleExpert { tolerance: 0.001, yaw_tolerance: 0.01, press_depth: 0.005, clearance: 0.01, descend_radius: 0.005, lateral_gain: 0.5 }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut a = libm::fmod(a + core::f64::consts::PI, two_pi);
    if a < 0.0 {
        a += two_pi;
    }
    a - core::f64::consts::PI
}

impl OracleExpert {
    /// Proportional step toward the current subtask's waypoint, clamped to
    /// the controller limits. `obs` must be an expert-role observation.
    pub fn act(&self, obs: &Observation, task: &TaskSpec) -> DeltaAction {
        self.act_believing(obs, task, Vec3::ZERO, None)
    }

    /// Like [`act`](Self::act), but aiming at the reference object shifted by
    /// `target_shift` and assuming `variant` for the handle side. Used to
    /// script deliberate mistakes.
    pub fn act_believing(&self, obs: &Observation, task: &TaskSpec, target_shift: Vec3, variant: Option<u8>) -> DeltaAction {
        let Some(sub) = task.subtask(obs.subtask_index as usize) else {
            return DeltaAction::ZERO;
        };
        let Some(reference) = obs.object(sub.reference_object).copied() else {
            return DeltaAction::ZERO;
        };
        let mut reference = reference;
        reference.position += target_shift;
        let raw = match sub.predicate {
            Predicate::Grasped if obs.gripper_width >= task.gripper.holding - 1e-12 && obs.gripper_width < task.gripper.open => {
                DeltaAction::translate(0.0, 0.0, sub.lift_height - reference.position.z)
            }
            Predicate::Grasped => {
                let v = variant.or(obs.geometry_variant).unwrap_or(1);
                self.grasp(obs, task, &reference, v)
            }
            Predicate::Inserted | Predicate::Placed => self.place(obs, task, &reference),
        };
        raw.clamped(&task.limits).0
    }

    fn place(&self, obs: &Observation, task: &TaskSpec, peg: &Pose) -> DeltaAction {
        let ee = obs.ee_pose.position;
        let carried = obs.object(ObjectId::Nut).map(|p| p.position).unwrap_or(ee);
        let target = peg.position;
        let rim = target.z + task.peg.rim_height;
        let seat = target.z + task.peg.seat_height;
        let lateral = (target - carried).xy();
        let miss = lateral.norm();
        if miss <= self.descend_radius {
            let dz = (seat - self.press_depth) - carried.z;
            return DeltaAction::translate(lateral.x, lateral.y, dz.min(0.0));
        }
        if miss > task.epsilon && carried.z < rim + self.clearance - 1e-9 {
            return DeltaAction::translate(0.0, 0.0, rim + self.clearance - carried.z);
        }
        let (dxy, _) = (lateral * self.lateral_gain).clamp_norm(task.limits.max_step_translation);
        DeltaAction::translate(dxy.x, dxy.y, 0.0)
    }

    fn grasp(&self, obs: &Observation, task: &TaskSpec, nut: &Pose, variant: u8) -> DeltaAction {
        let Some(geometry) = task.nut.as_ref() else {
            return DeltaAction::ZERO;
        };
        let ee = obs.ee_pose;
        let handle = handle_position(nut, geometry, variant);
        let dyaw = wrap_angle(nut.orientation.yaw() - ee.orientation.yaw());
        let rotation = Vec3::new(0.0, 0.0, dyaw);
        let to_handle = handle - ee.position;
        let yaw_ok = dyaw.abs() <= self.yaw_tolerance;
        let closed_empty = obs.gripper_width <= task.gripper.closed_empty + 1e-12;
        if closed_empty {
            if to_handle.norm() <= self.tolerance && yaw_ok {
                return DeltaAction::gripper(GripperCommand::Open);
            }
            return DeltaAction { translation: to_handle, rotation, gripper: GripperCommand::Hold };
        }
        if to_handle.norm() <= self.tolerance && yaw_ok {
            return DeltaAction::gripper(GripperCommand::Close);
        }
        if to_handle.norm_xy() <= self.tolerance && yaw_ok {
            return DeltaAction { translation: to_handle, ..DeltaAction::ZERO };
        }
        let (dxy, _) = to_handle.xy().clamp_norm(task.limits.max_step_translation);
        DeltaAction { translation: dxy, rotation, gripper: GripperCommand::Hold }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{goal_satisfied, observe, reset, step, CorruptionModel, Role, TaskSpec};

    fn run(task: &TaskSpec, z: &CorruptionModel, seed: u64) -> (bool, u32) {
        let expert = OracleExpert::default();
        let mut s = reset(task, z, seed).unwrap();
        while !goal_satisfied(&s, task) && s.step_count < task.horizon {
            let a = expert.act(&observe(&s, task, Role::Expert), task);
            s = step(task, &s, &a).unwrap().0;
        }
        (goal_satisfied(&s, task), s.step_count)
    }

    #[test]
    fn at_target_gives_zero_translation() {
        let task = TaskSpec::geometry_assembly();
        let mut s = reset(&task, &CorruptionModel::none(), 3).unwrap();
        let nut = *s.object(ObjectId::Nut).unwrap();
        s.ee_pose = Pose::new(handle_position(&nut, task.nut.as_ref().unwrap(), 1), nut.orientation);
        let a = OracleExpert::default().act(&observe(&s, &task, Role::Expert), &task);
        assert_eq!(a.translation, Vec3::ZERO);
        assert_eq!(a.gripper, GripperCommand::Close);
    }

    #[test]
    fn far_target_is_clamped() {
        let task = TaskSpec::planar_peg_insert();
        let mut s = reset(&task, &CorruptionModel::none(), 3).unwrap();
        let peg = s.object(ObjectId::Peg).unwrap().position;
        s.ee_pose = Pose::from_translation(Vec3::new(peg.x - 0.1, peg.y, 0.1));
        s.objects.iter_mut().find(|o| o.id == ObjectId::Nut).unwrap().pose = s.ee_pose;
        let a = OracleExpert::default().act(&observe(&s, &task, Role::Expert), &task);
        assert!((a.translation - Vec3::new(0.005, 0.0, 0.0)).max_abs() < 1e-15);
    }

    #[test]
    fn solves_every_clean_instance() {
        for task in [TaskSpec::planar_peg_insert(), TaskSpec::geometry_assembly()] {
            for seed in 0..1000 {
                let (ok, steps) = run(&task, &CorruptionModel::none(), seed);
                assert!(ok, "{} seed {seed} after {steps} steps", task.task_id);
            }
        }
        let task = TaskSpec::geometry_assembly();
        for seed in 0..300 {
            assert!(run(&task, &CorruptionModel::geometry_flip(1.0), seed).0);
        }
    }
}
