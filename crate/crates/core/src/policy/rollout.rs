use alloc::vec::Vec;
use core::fmt;

use super::{OracleExpert, PolicyModel};
use crate::datagen::{Actor, Episode, EpisodeHeader, Provenance, Step};
use crate::world::{
    goal_satisfied, observe, reset, step, ContactEvent, CorruptionError, CorruptionModel, Criterion, Observation, Role,
    TaskSpec,
};

#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Policy(&'a PolicyModel),
    Expert(&'a OracleExpert),
}

/// Hands control to the expert when the criterion fires and back to the
/// policy once the subtask it took over in is complete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGate {
    pub expert: OracleExpert,
    pub criterion: Criterion,
}

impl OracleGate {
    pub fn for_task(task: &TaskSpec) -> OracleGate {
        OracleGate { expert: OracleExpert::default(), criterion: task.termination }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RolloutError {
    Corruption(CorruptionError),
}

impl fmt::Display for RolloutError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RolloutError::Corruption(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for RolloutError {}

impl From<CorruptionError> for RolloutError {
    fn from(e: CorruptionError) -> Self {
        RolloutError::Corruption(e)
    }
}

/// Whether a state observed as `obs`, entered with `contact`, counts as a
/// mistake under `criterion`.
pub fn criterion_fired(task: &TaskSpec, criterion: Criterion, contact: Option<&ContactEvent>, obs: &Observation) -> bool {
    let closed_empty = obs.gripper_width <= task.gripper.closed_empty + 1e-12;
    match criterion {
        Criterion::Contact => contact.is_some(),
        Criterion::GripperClosedEmpty => closed_empty,
        Criterion::Composite => contact.is_some() || closed_empty,
    }
}

/// Steps one episode to goal or horizon, recording robot-side observations.
pub fn rollout(
    task: &TaskSpec,
    z: &CorruptionModel,
    seed: u64,
    controller: Controller<'_>,
    gate: Option<&OracleGate>,
) -> Result<Episode, RolloutError> {
    let mut state = reset(task, z, seed)?;
    let start = state.clone();
    let mut steps = Vec::new();
    let mut actor = match controller {
        Controller::Policy(_) => Actor::Policy,
        Controller::Expert(_) => Actor::Expert,
    };
    let mut takeover_subtask = 0;
    let mut termination = None;
    while !goal_satisfied(&state, task) && state.step_count < task.horizon {
        let obs = observe(&state, task, Role::Robot);
        if let (Some(g), Controller::Policy(_)) = (gate, controller) {
            if actor == Actor::Expert && state.subtask_index > takeover_subtask {
                actor = Actor::Policy;
            }
            if actor == Actor::Policy && criterion_fired(task, g.criterion, state.last_contact.as_ref(), &obs) {
                actor = Actor::Expert;
                takeover_subtask = state.subtask_index;
                termination.get_or_insert(steps.len() as u32);
            }
        }
        let action = match (actor, controller) {
            (Actor::Policy, Controller::Policy(m)) => m.act(&obs),
            (_, Controller::Expert(e)) => e.act(&observe(&state, task, Role::Expert), task),
            (Actor::Expert, Controller::Policy(_)) => {
                let g = gate.expect("expert control requires a gate");
                g.expert.act(&observe(&state, task, Role::Expert), task)
            }
        };
        steps.push(Step { t: state.step_count, obs, action, actor, contact: state.last_contact });
        state = step(task, &state, &action).expect("horizon checked above").0;
    }
    let provenance = match controller {
        Controller::Policy(_) => Provenance::Synthetic,
        Controller::Expert(_) => Provenance::SourceHuman,
    };
    Ok(Episode {
        header: EpisodeHeader {
            task: task.task_id,
            seed,
            corruption: *z,
            draw: start.corruption.clone(),
            geometry_variant: start.geometry_variant,
            provenance,
            termination,
        },
        goal: goal_satisfied(&state, task),
        start,
        steps,
    })
}
