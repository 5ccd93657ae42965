use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{handle_position, observe, ObjectId, Role, TaskSpec, WorldState};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShapeKind {
    Circle,
    Cross,
    Gripper,
}

/// One top-down drawable. Positions in meters, world frame.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SceneShape {
    pub label: String,
    pub kind: ShapeKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub radius: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameDescriptor {
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
    /// End effector plus the robot's believed object poses.
    pub shapes: Vec<SceneShape>,
    /// Ground truth; for debugging overlays only.
    pub debug_only: Vec<SceneShape>,
    pub contact: Option<Vec3>,
    pub subtask_index: u32,
    pub step: u32,
}

fn shape(label: &str, kind: ShapeKind, p: Vec3, yaw: f64, radius: f64, color: &str) -> SceneShape {
    SceneShape { label: String::from(label), kind, x: p.x, y: p.y, z: p.z, yaw, radius, color: String::from(color) }
}

fn object_label(id: ObjectId) -> &'static str {
    match id {
        ObjectId::Gripper => "gripper",
        ObjectId::Peg => "peg",
        ObjectId::Nut => "nut",
    }
}

fn object_radius(task: &TaskSpec, id: ObjectId) -> f64 {
    match id {
        ObjectId::Peg => task.peg.radius,
        ObjectId::Nut => task.nut.map(|n| n.body_radius).unwrap_or(task.epsilon),
        ObjectId::Gripper => 0.0,
    }
}

/// Top-down scene description of `state`. Pure.
pub fn render_frame(task: &TaskSpec, state: &WorldState) -> FrameDescriptor {
    let robot = observe(state, task, Role::Robot);
    let mut shapes = Vec::new();
    shapes.push(shape(
        "ee",
        ShapeKind::Gripper,
        state.ee_pose.position,
        state.ee_pose.orientation.yaw(),
        state.gripper_width / 2.0,
        "#3060c0",
    ));
    for o in &robot.objects {
        let label = object_label(o.id);
        shapes.push(shape(label, ShapeKind::Circle, o.pose.position, o.pose.orientation.yaw(), object_radius(task, o.id), "#a0a0a0"));
    }
    let mut debug_only = Vec::new();
    for o in &state.objects {
        let label = object_label(o.id);
        debug_only.push(shape(label, ShapeKind::Circle, o.pose.position, o.pose.orientation.yaw(), object_radius(task, o.id), "#20a040"));
        if o.id == ObjectId::Nut {
            if let Some(g) = task.nut.as_ref() {
                let h = handle_position(&o.pose, g, state.geometry_variant);
                debug_only.push(shape("handle", ShapeKind::Cross, h, 0.0, task.grasp_radius, "#20a040"));
            }
        }
    }
    FrameDescriptor {
        workspace_min: task.workspace.min,
        workspace_max: task.workspace.max,
        shapes,
        debug_only,
        contact: state.last_contact.map(|c| c.location),
        subtask_index: state.subtask_index,
        step: state.step_count,
    }
}
