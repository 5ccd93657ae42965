//! Success-rate evaluation of a controller under a corruption model.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::datagen::episode_seed;
use crate::policy::Controller;
use crate::world::{goal_satisfied, observe, reset, step, CorruptionError, CorruptionModel, Role, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrialOutcome {
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SuccessStats {
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
    /// Mean steps over successful trials.
    pub mean_steps_to_goal: Option<f64>,
    pub outcomes: Vec<TrialOutcome>,
}

impl SuccessStats {
    pub fn from_outcomes(outcomes: Vec<TrialOutcome>) -> SuccessStats {
        let trials = outcomes.len() as u32;
        let successes = outcomes.iter().filter(|o| o.success).count() as u32;
        let total: u64 = outcomes.iter().filter(|o| o.success).map(|o| o.steps as u64).sum();
        SuccessStats {
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            mean_steps_to_goal: (successes > 0).then(|| total as f64 / successes as f64),
            outcomes,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.outcomes.iter().map(|o| o.seed)
    }
}

/// One closed-loop episode. The policy only ever sees robot-role
/// observations; the expert acts on the truth.
pub fn run_trial(task: &TaskSpec, z: &CorruptionModel, controller: Controller<'_>, seed: u64) -> Result<TrialOutcome, CorruptionError> {
    let mut s = reset(task, z, seed)?;
    while !goal_satisfied(&s, task) && s.step_count < task.horizon {
        let a = match controller {
            Controller::Policy(m) => m.act(&observe(&s, task, Role::Robot)),
            Controller::Expert(e) => e.act(&observe(&s, task, Role::Expert), task),
        };
        s = step(task, &s, &a).expect("horizon checked above").0;
    }
    Ok(TrialOutcome { seed, success: goal_satisfied(&s, task), steps: s.step_count })
}

/// Seed of evaluation trial `i`.
pub fn trial_seed(seed: u64, i: u32) -> u64 {
    episode_seed(seed ^ 0x5EED_E7A1, i as u64)
}

pub fn evaluate(
    task: &TaskSpec,
    z: &CorruptionModel,
    controller: Controller<'_>,
    trials: u32,
    seed: u64,
) -> Result<SuccessStats, CorruptionError> {
    let outcomes = (0..trials).map(|i| run_trial(task, z, controller, trial_seed(seed, i))).collect::<Result<Vec<_>, _>>()?;
    Ok(SuccessStats::from_outcomes(outcomes))
}
