use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geom::DeltaAction;
use crate::world::{goal_satisfied, step, ContactEvent, CorruptionDraw, CorruptionModel, Observation, TaskId, TaskSpec, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Actor {
    Policy,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Provenance {
    /// Clean demonstrations used to train the base policy.
    Base,
    /// Produced by the generator.
    Synthetic,
    /// Recorded from the expert (human or oracle).
    SourceHuman,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Step {
    /// Step index within the original rollout.
    pub t: u32,
    /// Robot-side observation of the state the action was taken in.
    pub obs: Observation,
    pub action: DeltaAction,
    pub actor: Actor,
    /// Contact produced by the step that led into this state.
    pub contact: Option<ContactEvent>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeHeader {
    pub task: TaskId,
    pub seed: u64,
    pub corruption: CorruptionModel,
    pub draw: CorruptionDraw,
    pub geometry_variant: u8,
    pub provenance: Provenance,
    /// Index of the first mistake state; recorded steps start here for
    /// generated episodes.
    pub termination: Option<u32>,
}

/// One recorded episode. `start` is the simulator state in which the first
/// recorded step was taken, so the steps can be re-simulated exactly.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Episode {
    pub header: EpisodeHeader,
    pub start: WorldState,
    pub steps: Vec<Step>,
    pub goal: bool,
}

pub type Trajectory = Episode;

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayError {
    /// Re-simulated observation or outcome differs from the record.
    Mismatch { step: usize },
    Horizon { step: usize },
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::Mismatch { step } => write!(f, "recorded step {step} does not re-simulate"),
            ReplayError::Horizon { step } => write!(f, "horizon reached while re-simulating step {step}"),
        }
    }
}

impl core::error::Error for ReplayError {}

impl Episode {
    pub fn expert_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.actor == Actor::Expert).count()
    }

    pub fn has_expert(&self) -> bool {
        self.steps.iter().any(|s| s.actor == Actor::Expert)
    }

    /// Simulator states visited by the recorded actions: `states[i]` is the
    /// state in which step `i` was taken; the last entry is the final state.
    pub fn states(&self, task: &TaskSpec) -> Result<Vec<WorldState>, ReplayError> {
        let mut states = Vec::with_capacity(self.steps.len() + 1);
        let mut s = self.start.clone();
        for (i, st) in self.steps.iter().enumerate() {
            let (next, _) = step(task, &s, &st.action).map_err(|_| ReplayError::Horizon { step: i })?;
            states.push(s);
            s = next;
        }
        states.push(s);
        Ok(states)
    }

    /// Re-simulates the logged actions, checks every recorded observation and
    /// contact, and returns whether the final state satisfies the goal.
    pub fn verify(&self, task: &TaskSpec) -> Result<bool, ReplayError> {
        use crate::world::{observe, Role};
        let mut s = self.start.clone();
        for (i, st) in self.steps.iter().enumerate() {
            if observe(&s, task, Role::Robot) != st.obs || s.last_contact != st.contact {
                return Err(ReplayError::Mismatch { step: i });
            }
            s = step(task, &s, &st.action).map_err(|_| ReplayError::Horizon { step: i })?.0;
        }
        let goal = goal_satisfied(&s, task);
        if goal != self.goal {
            return Err(ReplayError::Mismatch { step: self.steps.len() });
        }
        Ok(goal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    LayoutMismatch,
    Empty,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::LayoutMismatch => f.write_str("datasets differ in task or feature layout"),
            DatasetError::Empty => f.write_str("dataset has no steps"),
        }
    }
}

impl core::error::Error for DatasetError {}

/// Episodes of one task, in a stable order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dataset {
    pub task: TaskSpec,
    pub episodes: Vec<Episode>,
}

pub type SourceDataset = Dataset;

impl Dataset {
    pub fn new(task: TaskSpec) -> Dataset {
        Dataset { task, episodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn step_count(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.episodes.iter().filter(|e| e.header.provenance == p).count()
    }

    /// Keeps only expert-actor steps of every episode; episodes left empty
    /// are dropped.
    pub fn human_filtered(&self) -> Dataset {
        let episodes = self
            .episodes
            .iter()
            .filter_map(|e| {
                let steps: Vec<Step> = e.steps.iter().filter(|s| s.actor == Actor::Expert).cloned().collect();
                (!steps.is_empty()).then(|| Episode { steps, ..e.clone() })
            })
            .collect();
        Dataset { task: self.task.clone(), episodes }
    }

    pub fn with_provenance(mut self, p: Provenance) -> Dataset {
        for e in &mut self.episodes {
            e.header.provenance = p;
        }
        self
    }
}

/// Concatenates `new` after `base`.
pub fn aggregate(base: &Dataset, new: &Dataset) -> Result<Dataset, DatasetError> {
    if base.task != new.task {
        return Err(DatasetError::LayoutMismatch);
    }
    let mut out = base.clone();
    out.episodes.extend(new.episodes.iter().cloned());
    Ok(out)
}
