use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geom::{Quat, Vec3};
use crate::world::{Observation, TaskId, TaskSpec};

/// Describes how an [`Observation`] flattens into a feature row.
///
/// Row layout: ee position (3), [ee x-axis (3)], gripper width (1), per
/// observed object offset from the ee (3) [+ x-axis (3)], feedback flag (1)
/// and payload (3), subtask one-hot.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureLayout {
    pub task_id: TaskId,
    pub objects: usize,
    pub orientation: bool,
    pub subtasks: usize,
}

fn x_axis(q: Quat) -> Vec3 {
    q.rotate(Vec3::new(1.0, 0.0, 0.0))
}

impl FeatureLayout {
    pub fn for_task(task: &TaskSpec) -> FeatureLayout {
        FeatureLayout {
            task_id: task.task_id,
            objects: task.observed_objects.len(),
            orientation: task.orientation_features,
            subtasks: task.subtasks.len(),
        }
    }

    pub fn dims(&self) -> usize {
        let per_pose = if self.orientation { 6 } else { 3 };
        per_pose + 1 + self.objects * per_pose + 4 + self.subtasks
    }

    /// Whether `obs` has the shape this layout expects.
    pub fn matches(&self, obs: &Observation) -> bool {
        obs.objects.len() == self.objects
    }

    pub fn write(&self, obs: &Observation, out: &mut Vec<f64>) {
        let push3 = |out: &mut Vec<f64>, v: Vec3| out.extend_from_slice(&[v.x, v.y, v.z]);
        push3(out, obs.ee_pose.position);
        if self.orientation {
            push3(out, x_axis(obs.ee_pose.orientation));
        }
        out.push(obs.gripper_width);
        for o in obs.objects.iter().take(self.objects) {
            push3(out, o.pose.position - obs.ee_pose.position);
            if self.orientation {
                push3(out, x_axis(o.pose.orientation));
            }
        }
        out.push(if obs.feedback.active { 1.0 } else { 0.0 });
        push3(out, if obs.feedback.active { obs.feedback.payload } else { Vec3::ZERO });
        let current = (obs.subtask_index as usize).min(self.subtasks.saturating_sub(1));
        for i in 0..self.subtasks {
            out.push(if i == current { 1.0 } else { 0.0 });
        }
    }

    pub fn extract(&self, obs: &Observation) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims());
        self.write(obs, &mut v);
        v
    }
}
