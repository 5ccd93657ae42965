use std::fmt::Write as _;

use ivgen_core::datagen::Dataset;
use ivgen_core::eval::SuccessStats;
use ivgen_core::policy::FitConfig;
use ivgen_core::world::TaskId;
use serde::Serialize;

use super::{mean_all, ArmKind, AssertionResult};

pub const FOOTER: &str = "Single-fit evaluation: each arm is fitted once per seed (the fit is deterministic) and \
evaluated on the same trial seeds as every other arm; there is no checkpoint selection.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSeedResult {
    pub seed: u64,
    pub episodes: usize,
    pub steps: usize,
    pub columns: Vec<SuccessStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ArmSeedResult {
    pub fn from_result(seed: u64, r: Result<(Dataset, Vec<SuccessStats>), String>) -> ArmSeedResult {
        match r {
            Ok((d, columns)) => ArmSeedResult { seed, episodes: d.len(), steps: d.step_count(), columns, error: None },
            Err(e) => {
                log::warn!("seed {seed}: {e}");
                ArmSeedResult { seed, episodes: 0, steps: 0, columns: Vec::new(), error: Some(e) }
            }
        }
    }

    /// Per-column success rates followed by the mixture when there are
    /// several columns.
    pub fn rates(&self) -> Option<Vec<f64>> {
        if self.error.is_some() {
            return None;
        }
        let mut r: Vec<f64> = self.columns.iter().map(|c| c.success_rate).collect();
        if r.len() > 1 {
            r.push(r.iter().sum::<f64>() / r.len() as f64);
        }
        Some(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmRow {
    pub arm: ArmKind,
    pub fit: FitConfig,
    pub per_seed: Vec<ArmSeedResult>,
    /// Mean over seeds for each report column; `None` if any seed failed.
    pub mean: Vec<Option<f64>>,
}

impl ArmRow {
    pub fn new(arm: ArmKind, fit: FitConfig) -> ArmRow {
        ArmRow { arm, fit, per_seed: Vec::new(), mean: Vec::new() }
    }

    pub(crate) fn finish(&mut self, columns: usize) {
        let width = if columns > 1 { columns + 1 } else { columns };
        let rates: Vec<Option<Vec<f64>>> = self.per_seed.iter().map(ArmSeedResult::rates).collect();
        self.mean = (0..width).map(|c| mean_all(&rates.iter().map(|r| r.as_ref().map(|v| v[c])).collect::<Vec<_>>())).collect();
    }

    /// The last column: the mixture, or the only column.
    pub fn headline(&self) -> Option<f64> {
        self.mean.last().copied().flatten()
    }

    pub fn column(&self, i: usize) -> Option<f64> {
        self.mean.get(i).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub per_seed: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub seed: u64,
    pub sources: Option<usize>,
    /// Over the first 200 generated episodes.
    pub ivg_distinct_offsets: Option<usize>,
    pub ivg_minus_policy_distinct_offsets: Option<usize>,
    pub source_demo_active_feedback_steps: Option<usize>,
    pub mg_demo_active_feedback_steps: Option<usize>,
    /// store.validate violations summed over every generated dataset.
    pub generated_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub task: TaskId,
    pub seeds: Vec<u64>,
    pub trials: u32,
    pub columns: Vec<String>,
    pub rows: Vec<ArmRow>,
    pub scaling: Vec<ScalingPoint>,
    pub coverage: Vec<Coverage>,
    pub assertions: Vec<AssertionResult>,
    pub footer: String,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "failed".into())
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

impl ExperimentReport {
    pub fn row(&self, arm: ArmKind) -> Option<&ArmRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "task {}  trials {}  seeds [{}]", self.task, self.trials, seeds.join(", "));
        let _ = writeln!(out);
        let arm_w = self.rows.iter().map(|r| r.arm.name().len()).max().unwrap_or(3).max(3);
        let col_w: Vec<usize> = self.columns.iter().map(|c| c.len().max(7)).collect();
        let _ = write!(out, "{:<arm_w$}", "arm");
        for (c, w) in self.columns.iter().zip(&col_w) {
            let _ = write!(out, "  {c:>w$}");
        }
        let _ = write!(out, "  per-seed");
        let _ = writeln!(out);
        for r in &self.rows {
            let _ = write!(out, "{:<arm_w$}", r.arm.name());
            for (i, w) in col_w.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", cell(r.column(i)));
            }
            let per: Vec<String> = r.per_seed.iter().map(|s| cell(s.rates().and_then(|v| v.last().copied()))).collect();
            let _ = writeln!(out, "  {}", per.join(" "));
        }
        if !self.scaling.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "scaling (ivg, generated prefix)");
            for p in &self.scaling {
                let _ = writeln!(out, "  n={:<6} {}", p.n, cell(p.mean));
            }
        }
        if !self.coverage.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "seed  sources  ivg-offsets  ivg-policy-offsets  demo-feedback  mg-feedback  violations");
            for c in &self.coverage {
                let _ = writeln!(
                    out,
                    "{:<4}  {:>7}  {:>11}  {:>18}  {:>13}  {:>11}  {:>10}",
                    c.seed,
                    opt(c.sources),
                    opt(c.ivg_distinct_offsets),
                    opt(c.ivg_minus_policy_distinct_offsets),
                    opt(c.source_demo_active_feedback_steps),
                    opt(c.mg_demo_active_feedback_steps),
                    opt(c.generated_violations)
                );
            }
        }
        let failures: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.per_seed.iter().filter_map(|s| s.error.as_ref().map(|e| format!("seed {}: {e}", s.seed))))
            .collect();
        if !failures.is_empty() {
            let _ = writeln!(out);
            for f in failures {
                let _ = writeln!(out, "error: {f}");
            }
        }
        if !self.assertions.is_empty() {
            let _ = writeln!(out);
            for a in &self.assertions {
                let _ = writeln!(out, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{}", self.footer);
        out
    }
}
