use std::fs;
use std::path::Path;

use ivgen_core::datagen::{Actor, Dataset, Episode, Provenance};
use ivgen_core::policy::FeatureLayout;
use ivgen_core::world::TaskSpec;
use serde::Serialize;

use super::{parse_header, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Short machine-readable tag, e.g. `goal-filter`.
    pub kind: &'static str,
    /// 1-based file line, when known.
    pub line: Option<usize>,
    pub episode: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub episodes: usize,
    pub steps: usize,
    pub violations: Vec<Violation>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}]", self.kind)?;
        if let Some(l) = self.line {
            write!(f, " line {l}")?;
        }
        if let Some(e) = self.episode {
            write!(f, " episode {e}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.kind).collect()
    }

    fn push(&mut self, kind: &'static str, line: Option<usize>, episode: Option<usize>, detail: impl Into<String>) {
        self.violations.push(Violation { kind, line, episode, detail: detail.into() });
    }
}

/// Checks a dataset file. Problems are reported as violations, never as
/// errors.
pub fn validate(path: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.push("io", None, None, format!("{}: {e}", path.display()));
            return report;
        }
    };
    let mut lines = text.lines();
    let Some(first) = lines.next() else {
        report.push("schema", Some(1), None, "missing header");
        return report;
    };
    let task = match parse_header(first) {
        Ok(h) => h.task,
        Err(e) => {
            let kind = if matches!(e, StoreError::FutureVersion { .. }) { "schema-version" } else { "schema" };
            report.push(kind, Some(1), None, e.to_string());
            return report;
        }
    };
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<Episode>(line) {
            Ok(ep) => {
                let index = report.episodes;
                check_episode(&task, &ep, index, Some(n), &mut report);
                report.episodes += 1;
                report.steps += ep.steps.len();
            }
            Err(e) => report.push("schema", Some(n), None, e.to_string()),
        }
    }
    report
}

/// The same checks on an in-memory dataset.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, ep) in ds.episodes.iter().enumerate() {
        check_episode(&ds.task, ep, i, None, &mut report);
        report.episodes += 1;
        report.steps += ep.steps.len();
    }
    report
}

fn check_episode(task: &TaskSpec, ep: &Episode, index: usize, line: Option<usize>, r: &mut ValidationReport) {
    let at = Some(index);
    if ep.header.task != task.task_id {
        r.push("task-mismatch", line, at, format!("episode task {} in a {} file", ep.header.task, task.task_id));
        return;
    }
    let layout = FeatureLayout::for_task(task);
    if let Some(i) = ep.steps.iter().position(|s| !layout.matches(&s.obs)) {
        r.push("schema", line, at, format!("step {i} observation does not match the task layout"));
        return;
    }
    if let Some(first) = ep.steps.first() {
        if first.t != ep.start.step_count {
            r.push("monotone-t", line, at, format!("first step t={} but start state is at {}", first.t, ep.start.step_count));
        }
    }
    if let Some(i) = ep.steps.windows(2).position(|w| w[1].t <= w[0].t) {
        r.push("monotone-t", line, at, format!("t={} follows t={} at step {}", ep.steps[i + 1].t, ep.steps[i].t, i + 1));
    }
    if ep.header.provenance == Provenance::Synthetic {
        if !ep.goal {
            r.push("goal-filter", line, at, "generated episode does not reach the goal");
        }
        if let Some(t) = ep.header.termination {
            match ep.steps.first() {
                Some(s) if s.t == t && s.actor == Actor::Expert => {}
                Some(s) => r.push(
                    "suffix-filter",
                    line,
                    at,
                    format!("retained steps start at t={} ({:?}), termination is {t}", s.t, s.actor),
                ),
                None => r.push("suffix-filter", line, at, "no steps after termination"),
            }
        }
    }
    match ep.verify(task) {
        Ok(_) => {}
        Err(e) => r.push("replay", line, at, e.to_string()),
    }
}
