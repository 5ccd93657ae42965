use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geom::{ControllerLimits, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskId {
    PlanarPegInsert,
    GeometryAssembly,
}

impl TaskId {
    pub fn name(self) -> &'static str {
        match self {
            TaskId::PlanarPegInsert => "planar_peg_insert",
            TaskId::GeometryAssembly => "geometry_assembly",
        }
    }

    pub fn spec(self) -> TaskSpec {
        match self {
            TaskId::PlanarPegInsert => TaskSpec::planar_peg_insert(),
            TaskId::GeometryAssembly => TaskSpec::geometry_assembly(),
        }
    }
}

impl core::str::FromStr for TaskId {
    type Err = UnknownTask;

    /// Accepts the full name or the short forms `peg` and `geometry`.
    fn from_str(s: &str) -> Result<TaskId, UnknownTask> {
        match s {
            "planar_peg_insert" | "peg" => Ok(TaskId::PlanarPegInsert),
            "geometry_assembly" | "geometry" => Ok(TaskId::GeometryAssembly),
            _ => Err(UnknownTask),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownTask;

impl fmt::Display for UnknownTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown task (expected planar_peg_insert or geometry_assembly)")
    }
}

impl core::error::Error for UnknownTask {}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ObjectId {
    Gripper,
    Peg,
    Nut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Predicate {
    /// Reference object held by the gripper.
    Grasped,
    /// Held object seated on the reference object within tolerance.
    Inserted,
    /// Same geometric test as `Inserted` for a multi-stage task.
    Placed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SubtaskSpec {
    pub reference_object: ObjectId,
    pub predicate: Predicate,
    /// For `Grasped`: height the held object must reach before the subtask
    /// counts as done.
    #[cfg_attr(feature = "serde", serde(default))]
    pub lift_height: f64,
}

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Region {
    pub min: Vec3,
    pub max: Vec3,
}

impl Region {
    pub fn new(min: Vec3, max: Vec3) -> Region {
        Region { min, max }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.contains_with(p, 0.0)
    }

    pub fn contains_with(&self, p: Vec3, slack: f64) -> bool {
        p.x >= self.min.x - slack
            && p.x <= self.max.x + slack
            && p.y >= self.min.y - slack
            && p.y <= self.max.y + slack
            && p.z >= self.min.z - slack
            && p.z <= self.max.z + slack
    }

    pub fn contains_region(&self, o: &Region) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.min.x <= self.max.x && self.min.y <= self.max.y && self.min.z <= self.max.z
    }
}

/// Initial-state distribution for one object: uniform position in `region`
/// and uniform yaw in `[yaw_min, yaw_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Placement {
    pub object: ObjectId,
    pub region: Region,
    pub yaw_min: f64,
    pub yaw_max: f64,
}

/// Cylindrical peg the held object is lowered onto.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PegGeometry {
    pub radius: f64,
    /// Top of the peg; a misaligned held object stops here.
    pub rim_height: f64,
    /// Height of the held object's origin once fully seated.
    pub seat_height: f64,
    /// Horizontal reach of the peg body around its axis.
    pub obstruction_radius: f64,
}

/// Nut with a single handle; `geometry_variant` 2 mirrors the handle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NutGeometry {
    /// Handle distance from the nut center along the nut x-axis.
    pub handle_offset: f64,
    pub handle_height: f64,
    pub body_radius: f64,
    pub body_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GripperWidths {
    pub open: f64,
    pub holding: f64,
    pub closed_empty: f64,
}

impl Default for GripperWidths {
    fn default() -> Self {
        GripperWidths { open: 0.08, holding: 0.02, closed_empty: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeedbackMode {
    /// True reference position once contact occurs.
    Full,
    /// Unit vector from the held object toward the true reference position.
    Partial,
    #[default]
    None,
}

/// When a policy rollout counts as having made a mistake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Criterion {
    Contact,
    GripperClosedEmpty,
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub workspace: Region,
    pub placements: Vec<Placement>,
    /// Goal tolerance, meters.
    pub epsilon: f64,
    pub grasp_radius: f64,
    pub horizon: u32,
    pub limits: ControllerLimits,
    pub subtasks: Vec<SubtaskSpec>,
    /// Objects whose (possibly corrupted) pose appears in observations.
    pub observed_objects: Vec<ObjectId>,
    pub ee_start: Pose,
    /// Travel height for the scripted expert.
    pub hover_height: f64,
    pub gripper: GripperWidths,
    pub peg: PegGeometry,
    pub nut: Option<NutGeometry>,
    /// Object rigidly held at reset, at the end-effector origin.
    pub initially_held: Option<ObjectId>,
    /// Include end-effector and object orientation in policy features.
    pub orientation_features: bool,
    pub feedback: FeedbackMode,
    pub termination: Criterion,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskError {
    PlacementOutsideWorkspace(ObjectId),
    NonPositiveEpsilon,
    ZeroHorizon,
    NoSubtasks,
    UnknownObject(ObjectId),
    InvalidRegion,
    NonPositiveLimits,
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskError::PlacementOutsideWorkspace(o) => write!(f, "placement region of {o:?} leaves the workspace"),
            TaskError::NonPositiveEpsilon => f.write_str("epsilon must be positive"),
            TaskError::ZeroHorizon => f.write_str("horizon must be positive"),
            TaskError::NoSubtasks => f.write_str("task needs at least one subtask"),
            TaskError::UnknownObject(o) => write!(f, "object {o:?} is not part of the task"),
            TaskError::InvalidRegion => f.write_str("region min exceeds max"),
            TaskError::NonPositiveLimits => f.write_str("controller limits must be positive"),
        }
    }
}

impl core::error::Error for TaskError {}

impl TaskSpec {
    /// Nut held in hand, lowered onto a peg sampled in a 10 cm square.
    pub fn planar_peg_insert() -> TaskSpec {
        TaskSpec {
            task_id: TaskId::PlanarPegInsert,
            workspace: default_workspace(),
            placements: vec![Placement {
                object: ObjectId::Peg,
                region: Region::new(Vec3::new(0.05, -0.05, 0.0), Vec3::new(0.15, 0.05, 0.0)),
                yaw_min: 0.0,
                yaw_max: 0.0,
            }],
            epsilon: 0.01,
            grasp_radius: 0.01,
            horizon: 400,
            limits: ControllerLimits::default(),
            subtasks: vec![SubtaskSpec { reference_object: ObjectId::Peg, predicate: Predicate::Inserted, lift_height: 0.0 }],
            observed_objects: vec![ObjectId::Peg],
            ee_start: Pose::from_translation(Vec3::new(-0.1, 0.0, 0.1)),
            hover_height: 0.1,
            gripper: GripperWidths::default(),
            peg: PegGeometry { radius: 0.01, rim_height: 0.05, seat_height: 0.02, obstruction_radius: 0.08 },
            nut: None,
            initially_held: Some(ObjectId::Nut),
            orientation_features: false,
            feedback: FeedbackMode::Full,
            termination: Criterion::Contact,
        }
    }

    /// Grasp a nut by its handle, then place it on a fixed peg. The nut sits
    /// in a 0.5 cm x 11.5 cm strip with a random yaw.
    pub fn geometry_assembly() -> TaskSpec {
        let yaw = core::f64::consts::FRAC_PI_6;
        TaskSpec {
            task_id: TaskId::GeometryAssembly,
            workspace: default_workspace(),
            placements: vec![
                Placement {
                    object: ObjectId::Nut,
                    region: Region::new(Vec3::new(0.0475, -0.0575, 0.0), Vec3::new(0.0525, 0.0575, 0.0)),
                    yaw_min: -yaw,
                    yaw_max: yaw,
                },
                Placement {
                    object: ObjectId::Peg,
                    region: Region::new(Vec3::new(-0.1, 0.1, 0.0), Vec3::new(-0.1, 0.1, 0.0)),
                    yaw_min: 0.0,
                    yaw_max: 0.0,
                },
            ],
            epsilon: 0.01,
            grasp_radius: 0.015,
            horizon: 250,
            limits: ControllerLimits::default(),
            subtasks: vec![
                SubtaskSpec { reference_object: ObjectId::Nut, predicate: Predicate::Grasped, lift_height: 0.06 },
                SubtaskSpec { reference_object: ObjectId::Peg, predicate: Predicate::Placed, lift_height: 0.0 },
            ],
            observed_objects: vec![ObjectId::Nut, ObjectId::Peg],
            ee_start: Pose::from_translation(Vec3::new(0.0, -0.12, 0.1)),
            hover_height: 0.1,
            gripper: GripperWidths::default(),
            peg: PegGeometry { radius: 0.01, rim_height: 0.05, seat_height: 0.02, obstruction_radius: 0.12 },
            nut: Some(NutGeometry { handle_offset: 0.04, handle_height: 0.01, body_radius: 0.025, body_height: 0.02 }),
            initially_held: None,
            orientation_features: true,
            feedback: FeedbackMode::None,
            termination: Criterion::Composite,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.epsilon > 0.0) {
            return Err(TaskError::NonPositiveEpsilon);
        }
        if self.horizon == 0 {
            return Err(TaskError::ZeroHorizon);
        }
        if self.subtasks.is_empty() {
            return Err(TaskError::NoSubtasks);
        }
        if !(self.limits.max_step_translation > 0.0 && self.limits.max_step_rotation > 0.0) {
            return Err(TaskError::NonPositiveLimits);
        }
        if !self.workspace.is_valid() {
            return Err(TaskError::InvalidRegion);
        }
        for p in &self.placements {
            if !p.region.is_valid() || p.yaw_min > p.yaw_max {
                return Err(TaskError::InvalidRegion);
            }
            if !self.workspace.contains_region(&p.region) {
                return Err(TaskError::PlacementOutsideWorkspace(p.object));
            }
        }
        let known = |o: ObjectId| self.has_object(o);
        for s in &self.subtasks {
            if !known(s.reference_object) {
                return Err(TaskError::UnknownObject(s.reference_object));
            }
        }
        for &o in &self.observed_objects {
            if !known(o) {
                return Err(TaskError::UnknownObject(o));
            }
        }
        Ok(())
    }

    pub fn has_object(&self, o: ObjectId) -> bool {
        self.initially_held == Some(o) || self.placements.iter().any(|p| p.object == o)
    }

    pub fn subtask(&self, index: usize) -> Option<&SubtaskSpec> {
        self.subtasks.get(index)
    }
}

fn default_workspace() -> Region {
    Region::new(Vec3::new(-0.2, -0.2, 0.0), Vec3::new(0.2, 0.2, 0.3))
}
