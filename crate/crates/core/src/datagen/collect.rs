use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::dataset::{Actor, Dataset, Episode, EpisodeHeader, Provenance, SourceDataset, Step};
use super::generate::episode_seed;
use crate::geom::Vec3;
use crate::policy::{criterion_fired, rollout, Controller, OracleExpert, OracleGate, PolicyModel, RolloutError};
use crate::world::{goal_satisfied, observe, reset, step, CorruptionError, CorruptionModel, Role, TaskSpec};

/// Consecutive mistake-free attempts after which collection gives up.
pub const NO_MISTAKE_LIMIT: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CollectReport {
    pub attempts: u64,
    pub kept: u64,
    pub no_mistake: u64,
    pub expert_failed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CollectError {
    /// The policy never needed help.
    NoMistake { attempts: u64 },
    Corruption(CorruptionError),
}

impl fmt::Display for CollectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectError::NoMistake { attempts } => {
                write!(f, "no mistake observed in {attempts} consecutive attempts")
            }
            CollectError::Corruption(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for CollectError {}

impl From<CorruptionError> for CollectError {
    fn from(e: CorruptionError) -> Self {
        CollectError::Corruption(e)
    }
}

impl From<RolloutError> for CollectError {
    fn from(e: RolloutError) -> Self {
        match e {
            RolloutError::Corruption(c) => CollectError::Corruption(c),
        }
    }
}

/// Runs the policy under `gate` until `m` trajectories with at least one
/// takeover reach the goal.
pub fn collect_interventions(
    task: &TaskSpec,
    z: &CorruptionModel,
    policy: &PolicyModel,
    gate: &OracleGate,
    m: usize,
    seed: u64,
) -> Result<(SourceDataset, CollectReport), CollectError> {
    let mut out = Dataset::new(task.clone());
    let mut report = CollectReport::default();
    let mut dry = 0;
    while out.len() < m {
        let s = episode_seed(seed, report.attempts);
        report.attempts += 1;
        let mut ep = rollout(task, z, s, Controller::Policy(policy), Some(gate))?;
        if ep.header.termination.is_none() {
            report.no_mistake += 1;
            dry += 1;
            if dry >= NO_MISTAKE_LIMIT {
                return Err(CollectError::NoMistake { attempts: dry as u64 });
            }
            continue;
        }
        dry = 0;
        if !ep.goal {
            report.expert_failed += 1;
            continue;
        }
        ep.header.provenance = Provenance::SourceHuman;
        out.episodes.push(ep);
        report.kept += 1;
    }
    Ok((out, report))
}

/// Expert demonstrations without interventions.
pub fn collect_demos(
    task: &TaskSpec,
    z: &CorruptionModel,
    expert: &OracleExpert,
    n: usize,
    seed: u64,
    provenance: Provenance,
) -> Result<(Dataset, CollectReport), CollectError> {
    let mut out = Dataset::new(task.clone());
    let mut report = CollectReport::default();
    while out.len() < n {
        let s = episode_seed(seed, report.attempts);
        report.attempts += 1;
        let mut ep = rollout(task, z, s, Controller::Expert(expert), None)?;
        if !ep.goal {
            report.expert_failed += 1;
            continue;
        }
        ep.header.provenance = provenance;
        out.episodes.push(ep);
        report.kept += 1;
    }
    Ok((out, report))
}

/// A deliberate mistake: the expert first aims at the reference object
/// displaced by `shift`, reaching for the wrong handle side if `flip_handle`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ScriptedMistake {
    pub shift: Vec3,
    pub flip_handle: bool,
}

impl ScriptedMistake {
    pub fn shift(x: f64, y: f64) -> ScriptedMistake {
        ScriptedMistake { shift: Vec3::new(x, y, 0.0), flip_handle: false }
    }

    pub fn wrong_handle() -> ScriptedMistake {
        ScriptedMistake { shift: Vec3::ZERO, flip_handle: true }
    }
}

/// Offline collection: the expert acts out a scripted mistake (labelled as
/// the policy) until the criterion fires, then recovers. With an empty
/// script every trajectory is a plain demonstration.
pub fn offline_collect(
    task: &TaskSpec,
    z: &CorruptionModel,
    expert: &OracleExpert,
    script: &[ScriptedMistake],
    m: usize,
    seed: u64,
) -> Result<(SourceDataset, CollectReport), CollectError> {
    let mut out = Dataset::new(task.clone());
    let mut report = CollectReport::default();
    while out.len() < m {
        let s = episode_seed(seed, report.attempts);
        report.attempts += 1;
        let mistake = (!script.is_empty()).then(|| script[out.len() % script.len()]);
        let ep = scripted_episode(task, z, expert, mistake, s)?;
        if !ep.goal {
            report.expert_failed += 1;
            continue;
        }
        if ep.header.termination.is_none() {
            report.no_mistake += 1;
        }
        out.episodes.push(ep);
        report.kept += 1;
    }
    Ok((out, report))
}

fn scripted_episode(
    task: &TaskSpec,
    z: &CorruptionModel,
    expert: &OracleExpert,
    mistake: Option<ScriptedMistake>,
    seed: u64,
) -> Result<Episode, CollectError> {
    let mut state = reset(task, z, seed)?;
    let start = state.clone();
    let mut steps = Vec::new();
    let mut actor = if mistake.is_some() { Actor::Policy } else { Actor::Expert };
    let mut termination = None;
    while !goal_satisfied(&state, task) && state.step_count < task.horizon {
        let obs = observe(&state, task, Role::Robot);
        if actor == Actor::Policy && criterion_fired(task, task.termination, state.last_contact.as_ref(), &obs) {
            actor = Actor::Expert;
            termination = Some(steps.len() as u32);
        }
        let truth = observe(&state, task, Role::Expert);
        let action = match (actor, mistake) {
            (Actor::Policy, Some(m)) => {
                let variant = m.flip_handle.then(|| if state.geometry_variant == 2 { 1 } else { 2 });
                expert.act_believing(&truth, task, m.shift, variant)
            }
            _ => expert.act(&truth, task),
        };
        steps.push(Step { t: state.step_count, obs, action, actor, contact: state.last_contact });
        state = step(task, &state, &action).expect("horizon checked above").0;
    }
    Ok(Episode {
        header: EpisodeHeader {
            task: task.task_id,
            seed,
            corruption: *z,
            draw: start.corruption.clone(),
            geometry_variant: start.geometry_variant,
            provenance: Provenance::SourceHuman,
            termination,
        },
        goal: goal_satisfied(&state, task),
        start,
        steps,
    })
}
