use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::dataset::{Actor, Episode, ReplayError, Step};
use crate::geom::{DeltaAction, Pose, PoseSequence};
use crate::policy::criterion_fired;
use crate::world::{Criterion, TaskSpec, WorldState};

/// A maximal run of steps by one actor, `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub actor: Actor,
    /// Subtask active at `start`.
    pub subtask: u32,
    /// True pose of the subtask's reference object at `start`.
    pub reference_pose: Option<Pose>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn runs(steps: &[Step], split_on_subtask: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=steps.len() {
        let boundary = i == steps.len()
            || steps[i].actor != steps[start].actor
            || (split_on_subtask && steps[i].obs.subtask_index != steps[start].obs.subtask_index);
        if boundary {
            out.push((start, i));
            start = i;
        }
    }
    out
}

fn annotate(task: &TaskSpec, ep: &Episode, spans: Vec<(usize, usize)>, states: Option<&[WorldState]>) -> Vec<Segment> {
    spans
        .into_iter()
        .map(|(start, end)| {
            let subtask = ep.steps[start].obs.subtask_index;
            let reference_pose = states.and_then(|s| s[start].reference_pose(task));
            Segment { start, end, actor: ep.steps[start].actor, subtask, reference_pose }
        })
        .collect()
}

/// Splits a trajectory into maximal actor runs. Reference poses come from
/// re-simulating the logged actions and are absent when that fails.
pub fn segment(task: &TaskSpec, ep: &Episode) -> Vec<Segment> {
    if ep.steps.is_empty() {
        return Vec::new();
    }
    let states = ep.states(task).ok();
    annotate(task, ep, runs(&ep.steps, false), states.as_deref())
}

/// Smallest step index at which `criterion` fires, if any.
pub fn detect_termination(task: &TaskSpec, steps: &[Step], criterion: Criterion) -> Option<usize> {
    steps.iter().position(|s| criterion_fired(task, criterion, s.contact.as_ref(), &s.obs))
}

/// A replayable slice of a recorded trajectory: one actor, one subtask.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub segment: Segment,
    /// End-effector poses from the segment's first state through the state
    /// after its last step (`actions.len() + 1` entries).
    pub poses: PoseSequence,
    /// Commanded actions, including gripper commands.
    pub actions: Vec<DeltaAction>,
}

impl Piece {
    pub fn reference(&self) -> Pose {
        self.segment.reference_pose.expect("pieces are always annotated")
    }
}

/// Splits a trajectory into pieces at every actor or subtask change.
pub fn pieces(task: &TaskSpec, ep: &Episode) -> Result<Vec<Piece>, ReplayError> {
    if ep.steps.is_empty() {
        return Ok(Vec::new());
    }
    let states = ep.states(task)?;
    let segments = annotate(task, ep, runs(&ep.steps, true), Some(&states));
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        if seg.reference_pose.is_none() {
            continue;
        }
        let poses: Vec<Pose> = states[seg.start..=seg.end].iter().map(|s| s.ee_pose).collect();
        let actions = ep.steps[seg.start..seg.end].iter().map(|s| s.action).collect();
        out.push(Piece { segment: seg, poses: PoseSequence::new(poses).expect("non-empty span"), actions });
    }
    Ok(out)
}

/// Pre-split source trajectories, ready for sampling during generation.
#[derive(Debug, Clone)]
pub struct SourceIndex {
    pub entries: Vec<SourceEntry>,
}

#[derive(Debug, Clone)]
pub struct SourceEntry {
    pub episode: Episode,
    pub pieces: Vec<Piece>,
}

impl SourceEntry {
    /// First expert piece recorded in `subtask`.
    pub fn recovery(&self, subtask: u32) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.segment.actor == Actor::Expert && p.segment.subtask == subtask)
    }
}

impl SourceIndex {
    pub fn build(task: &TaskSpec, episodes: &[Episode]) -> Result<SourceIndex, ReplayError> {
        let mut entries = Vec::with_capacity(episodes.len());
        for e in episodes {
            entries.push(SourceEntry { episode: e.clone(), pieces: pieces(task, e)? });
        }
        Ok(SourceIndex { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
