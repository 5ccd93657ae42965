use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::adapt::{adapt, replay, ReplayFailure};
use super::dataset::{Actor, Dataset, Episode, EpisodeHeader, Provenance, Step};
use super::segment::SourceIndex;
use crate::policy::{criterion_fired, PolicyModel};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::world::{goal_satisfied, observe, reset, reset_with_draw, step, CorruptionModel, Role, TaskSpec, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Failure {
    GoalFailed,
    Horizon,
    NoMistake,
    InfeasibleAdapt,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Failure::GoalFailed => "goal-failed",
            Failure::Horizon => "horizon",
            Failure::NoMistake => "no-mistake",
            Failure::InfeasibleAdapt => "infeasible-adapt",
        })
    }
}

impl From<ReplayFailure> for Failure {
    fn from(f: ReplayFailure) -> Self {
        match f {
            ReplayFailure::Drift { .. } => Failure::InfeasibleAdapt,
            ReplayFailure::Horizon => Failure::Horizon,
        }
    }
}

/// How episodes are synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GenerationMode {
    /// Closed-loop policy rollouts until a mistake, then retargeted recovery.
    #[default]
    Interventional,
    /// Mistakes replayed open-loop from the sources, with their corruption.
    NoPolicy,
    /// Whole demonstrations retargeted piece by piece.
    Demo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GenerationConfig {
    pub mode: GenerationMode,
    /// Recoveries allowed per episode before giving up.
    pub max_recoveries: u32,
    /// Keep policy-only successes as plain episodes instead of discarding.
    pub keep_no_mistake: bool,
    /// Attempt cap as a multiple of the requested episode count.
    pub attempt_factor: u32,
    pub provenance: Provenance,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            mode: GenerationMode::Interventional,
            max_recoveries: 4,
            keep_no_mistake: false,
            attempt_factor: 20,
            provenance: Provenance::Synthetic,
        }
    }
}

/// Everything an attempt reads. Shared read-only across workers.
#[derive(Clone, Copy)]
pub struct GenerationContext<'a> {
    pub task: &'a TaskSpec,
    pub z: &'a CorruptionModel,
    pub policy: Option<&'a PolicyModel>,
    pub sources: &'a SourceIndex,
    pub config: &'a GenerationConfig,
}

fn header(ctx: &GenerationContext<'_>, seed: u64, start: &WorldState, z: CorruptionModel, termination: Option<u32>) -> EpisodeHeader {
    EpisodeHeader {
        task: ctx.task.task_id,
        seed,
        corruption: z,
        draw: start.corruption.clone(),
        geometry_variant: start.geometry_variant,
        provenance: ctx.config.provenance,
        termination,
    }
}

fn pick(rng: &mut Rng, candidates: &[usize]) -> Option<usize> {
    use rand::Rng as _;
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

/// One attempt with the episode seed `seed`.
pub fn generate_one(ctx: &GenerationContext<'_>, seed: u64) -> Result<Episode, Failure> {
    match ctx.config.mode {
        GenerationMode::Interventional => generate_interventional(ctx, seed),
        GenerationMode::NoPolicy => generate_no_policy(ctx, seed),
        GenerationMode::Demo => generate_demo(ctx, seed),
    }
}

fn generate_interventional(ctx: &GenerationContext<'_>, seed: u64) -> Result<Episode, Failure> {
    let task = ctx.task;
    let policy = ctx.policy.expect("interventional generation needs a policy");
    let mut state = reset(task, ctx.z, seed).map_err(|_| Failure::InfeasibleAdapt)?;
    let initial = state.clone();
    let mut rng = rng_from(derive_seed(seed, 2));
    let mut steps: Vec<Step> = Vec::new();
    let mut source: Option<usize> = None;
    let mut recoveries = 0;
    let mut termination: Option<(usize, WorldState)> = None;

    while !goal_satisfied(&state, task) {
        if state.step_count >= task.horizon {
            return Err(Failure::Horizon);
        }
        let obs = observe(&state, task, Role::Robot);
        if criterion_fired(task, task.termination, state.last_contact.as_ref(), &obs) {
            if recoveries >= ctx.config.max_recoveries {
                return Err(Failure::GoalFailed);
            }
            if termination.is_none() {
                termination = Some((steps.len(), state.clone()));
            }
            let sub = state.subtask_index;
            let usable = |j: usize| ctx.sources.entries[j].recovery(sub).is_some();
            let j = match source {
                Some(j) if usable(j) => j,
                _ => {
                    let candidates: Vec<usize> = (0..ctx.sources.len()).filter(|&j| usable(j)).collect();
                    pick(&mut rng, &candidates).ok_or(Failure::GoalFailed)?
                }
            };
            source = Some(j);
            let piece = ctx.sources.entries[j].recovery(sub).expect("usable source");
            let plan = adapt(&state, task, piece).map_err(|_| Failure::InfeasibleAdapt)?;
            state = replay(task, state, &plan, Actor::Expert, &mut steps)?;
            recoveries += 1;
            continue;
        }
        let action = policy.act(&obs);
        steps.push(Step { t: state.step_count, obs, action, actor: Actor::Policy, contact: state.last_contact });
        state = step(task, &state, &action).map_err(|_| Failure::Horizon)?.0;
    }

    match termination {
        Some((t, start)) => Ok(Episode {
            header: header(ctx, seed, &initial, *ctx.z, Some(t as u32)),
            start,
            steps: steps.split_off(t),
            goal: true,
        }),
        None if ctx.config.keep_no_mistake => Ok(Episode {
            header: header(ctx, seed, &initial, *ctx.z, None),
            start: initial,
            steps,
            goal: true,
        }),
        None => Err(Failure::NoMistake),
    }
}

/// Copies a source episode's corruption draw and replays every one of its
/// pieces, mistakes included, retargeted to freshly sampled object poses.
fn generate_no_policy(ctx: &GenerationContext<'_>, seed: u64) -> Result<Episode, Failure> {
    let task = ctx.task;
    let mut rng = rng_from(derive_seed(seed, 2));
    let candidates: Vec<usize> = (0..ctx.sources.len()).filter(|&j| ctx.sources.entries[j].episode.has_expert()).collect();
    let j = pick(&mut rng, &candidates).ok_or(Failure::GoalFailed)?;
    let entry = &ctx.sources.entries[j];
    let mut state = reset_with_draw(task, seed, entry.episode.header.draw.clone());
    let initial = state.clone();
    let mut steps = Vec::new();
    let mut termination: Option<(usize, WorldState)> = None;
    for piece in &entry.pieces {
        if goal_satisfied(&state, task) {
            break;
        }
        if piece.segment.subtask != state.subtask_index {
            return Err(Failure::GoalFailed);
        }
        if piece.segment.actor == Actor::Expert && termination.is_none() {
            termination = Some((steps.len(), state.clone()));
        }
        let plan = adapt(&state, task, piece).map_err(|_| Failure::InfeasibleAdapt)?;
        state = replay(task, state, &plan, piece.segment.actor, &mut steps)?;
    }
    if !goal_satisfied(&state, task) {
        return Err(Failure::GoalFailed);
    }
    let Some((t, start)) = termination else {
        return Err(Failure::NoMistake);
    };
    Ok(Episode {
        header: header(ctx, seed, &initial, entry.episode.header.corruption, Some(t as u32)),
        start,
        steps: steps.split_off(t),
        goal: true,
    })
}

fn generate_demo(ctx: &GenerationContext<'_>, seed: u64) -> Result<Episode, Failure> {
    let task = ctx.task;
    let mut state = reset(task, ctx.z, seed).map_err(|_| Failure::InfeasibleAdapt)?;
    let initial = state.clone();
    let mut rng = rng_from(derive_seed(seed, 2));
    let candidates: Vec<usize> = (0..ctx.sources.len()).filter(|&j| !ctx.sources.entries[j].pieces.is_empty()).collect();
    let j = pick(&mut rng, &candidates).ok_or(Failure::GoalFailed)?;
    let mut steps = Vec::new();
    for piece in &ctx.sources.entries[j].pieces {
        if goal_satisfied(&state, task) {
            break;
        }
        if piece.segment.subtask != state.subtask_index {
            return Err(Failure::GoalFailed);
        }
        let plan = adapt(&state, task, piece).map_err(|_| Failure::InfeasibleAdapt)?;
        state = replay(task, state, &plan, Actor::Expert, &mut steps)?;
    }
    if !goal_satisfied(&state, task) {
        return Err(Failure::GoalFailed);
    }
    Ok(Episode { header: header(ctx, seed, &initial, *ctx.z, None), start: initial, steps, goal: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FailureCounts {
    pub goal_failed: u64,
    pub horizon: u64,
    pub no_mistake: u64,
    pub infeasible_adapt: u64,
}

impl FailureCounts {
    pub fn total(&self) -> u64 {
        self.goal_failed + self.horizon + self.no_mistake + self.infeasible_adapt
    }

    pub fn add(&mut self, f: Failure) {
        match f {
            Failure::GoalFailed => self.goal_failed += 1,
            Failure::Horizon => self.horizon += 1,
            Failure::NoMistake => self.no_mistake += 1,
            Failure::InfeasibleAdapt => self.infeasible_adapt += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AttemptRecord {
    pub index: u64,
    pub seed: u64,
    /// `None` for a retained episode.
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GenerationReport {
    pub attempts: u64,
    pub successes: u64,
    pub failures: FailureCounts,
    /// Filled in by callers that can read a clock.
    pub wall_clock_seconds: Option<f64>,
    pub episodes: Vec<AttemptRecord>,
}

impl GenerationReport {
    pub fn reconciles(&self) -> bool {
        self.successes + self.failures.total() == self.attempts && self.episodes.len() as u64 == self.attempts
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub report: GenerationReport,
}

#[derive(Debug, Clone)]
pub enum GenerateError {
    /// Attempt cap hit before `n` episodes were retained; carries the partial result.
    CapReached(alloc::boxed::Box<Generated>),
    /// Nothing to sample from.
    EmptySource,
}

impl fmt::Display for GenerateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenerateError::CapReached(g) => write!(
                f,
                "attempt cap reached after {} attempts with {} episodes retained",
                g.report.attempts, g.report.successes
            ),
            GenerateError::EmptySource => f.write_str("source dataset is empty"),
        }
    }
}

impl core::error::Error for GenerateError {}

/// Index-ordered accounting shared by sequential and parallel drivers.
/// Results must be pushed in increasing index order.
pub struct Assembler {
    n: usize,
    cap: u64,
    dataset: Dataset,
    report: GenerationReport,
}

impl Assembler {
    pub fn new(task: &TaskSpec, n: usize, attempt_factor: u32) -> Assembler {
        Assembler {
            n,
            cap: (n as u64).saturating_mul(attempt_factor.max(1) as u64),
            dataset: Dataset::new(task.clone()),
            report: GenerationReport::default(),
        }
    }

    pub fn done(&self) -> bool {
        self.dataset.len() >= self.n || self.report.attempts >= self.cap
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn next_index(&self) -> u64 {
        self.report.attempts
    }

    pub fn push(&mut self, index: u64, seed: u64, result: Result<Episode, Failure>) {
        if self.done() {
            return;
        }
        debug_assert_eq!(index, self.report.attempts);
        self.report.attempts += 1;
        let failure = match result {
            Ok(ep) => {
                self.report.successes += 1;
                self.dataset.episodes.push(ep);
                None
            }
            Err(f) => {
                self.report.failures.add(f);
                Some(f)
            }
        };
        self.report.episodes.push(AttemptRecord { index, seed, failure });
    }

    pub fn finish(self) -> Result<Generated, GenerateError> {
        let complete = self.dataset.len() >= self.n;
        let g = Generated { dataset: self.dataset, report: self.report };
        if complete {
            Ok(g)
        } else {
            Err(GenerateError::CapReached(alloc::boxed::Box::new(g)))
        }
    }
}

/// Seed of attempt `index` under run seed `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, index)
}

/// Sequential driver: attempts indices 0, 1, ... until `n` episodes are
/// retained or the attempt cap is hit.
pub fn generate(ctx: &GenerationContext<'_>, n: usize, seed: u64) -> Result<Generated, GenerateError> {
    if ctx.sources.is_empty() {
        return Err(GenerateError::EmptySource);
    }
    let mut asm = Assembler::new(ctx.task, n, ctx.config.attempt_factor);
    while !asm.done() {
        let index = asm.next_index();
        let s = episode_seed(seed, index);
        asm.push(index, s, generate_one(ctx, s));
    }
    asm.finish()
}
