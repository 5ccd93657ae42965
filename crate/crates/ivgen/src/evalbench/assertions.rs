use serde::Serialize;

use super::{ArmKind, ExperimentPlan, ExperimentReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub min_gain: f64,
    pub min_ivg: f64,
    pub slack: f64,
    pub min_policy_gain: f64,
    pub geometry_base_seen: f64,
    pub geometry_base_unseen: f64,
    pub geometry_ivg_each: f64,
    pub geometry_margin: f64,
    pub min_scaling_gain: f64,
    pub min_distinct_offsets: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_gain: 0.40,
            min_ivg: 0.80,
            slack: 0.05,
            min_policy_gain: 0.10,
            geometry_base_seen: 0.95,
            geometry_base_unseen: 0.10,
            geometry_ivg_each: 0.75,
            geometry_margin: 0.15,
            min_scaling_gain: 0.10,
            min_distinct_offsets: 100,
        }
    }
}

fn result(name: &'static str, passed: bool, detail: String) -> AssertionResult {
    AssertionResult { name, passed, detail }
}

fn f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "missing".into())
}

/// Checks that apply to the arms and columns present in `plan`.
pub fn check(plan: &ExperimentPlan, report: &ExperimentReport, th: &Thresholds) -> Vec<AssertionResult> {
    let mut out = Vec::new();
    let head = |a: ArmKind| report.row(a).and_then(|r| r.headline());
    let single = plan.columns.len() == 1;

    if single && plan.has(ArmKind::Base) && plan.has(ArmKind::Ivg) {
        let (b, i) = (head(ArmKind::Base), head(ArmKind::Ivg));
        let passed = matches!((b, i), (Some(b), Some(i)) if i - b >= th.min_gain && i >= th.min_ivg);
        out.push(result("robustness-gain", passed, format!("base {} ivg {}", f(b), f(i))));
    }

    let ladder = [ArmKind::Base, ArmKind::SourceInt, ArmKind::IvgMinusPolicy, ArmKind::Ivg];
    if single && ladder.iter().all(|&a| plan.has(a)) {
        let v: Vec<Option<f64>> = ladder.iter().map(|&a| head(a)).collect();
        let passed = match (v[0], v[1], v[2], v[3]) {
            (Some(b), Some(s), Some(p), Some(i)) => {
                b <= s + th.slack && s <= p + th.slack && p <= i + th.slack && i - p >= th.min_policy_gain
            }
            _ => false,
        };
        out.push(result(
            "ablation-ordering",
            passed,
            format!("base {} source_int {} ivg_minus_policy {} ivg {}", f(v[0]), f(v[1]), f(v[2]), f(v[3])),
        ));
    }

    if plan.columns.len() == 2 && plan.has(ArmKind::Base) && plan.has(ArmKind::Ivg) {
        let base = report.row(ArmKind::Base);
        let ivg = report.row(ArmKind::Ivg);
        let (b1, b2) = (base.and_then(|r| r.column(0)), base.and_then(|r| r.column(1)));
        let (i1, i2, im) = (ivg.and_then(|r| r.column(0)), ivg.and_then(|r| r.column(1)), ivg.and_then(|r| r.column(2)));
        let others: Vec<(ArmKind, Option<f64>)> =
            report.rows.iter().filter(|r| r.arm != ArmKind::Ivg).map(|r| (r.arm, r.column(2))).collect();
        let passed = match (b1, b2, i1, i2, im) {
            (Some(b1), Some(b2), Some(i1), Some(i2), Some(im)) => {
                b1 >= th.geometry_base_seen
                    && b2 <= th.geometry_base_unseen
                    && i1 >= th.geometry_ivg_each
                    && i2 >= th.geometry_ivg_each
                    && others.iter().all(|(_, m)| m.is_some_and(|m| im >= m + th.geometry_margin))
            }
            _ => false,
        };
        let mixes: Vec<String> = others.iter().map(|(a, m)| format!("{a} {}", f(*m))).collect();
        out.push(result(
            "geometry-mixture",
            passed,
            format!("base {}/{} ivg {}/{} mixture {} vs {}", f(b1), f(b2), f(i1), f(i2), f(im), mixes.join(", ")),
        ));
    }

    if plan.has(ArmKind::SourceDemo) || plan.has(ArmKind::MgDemo) {
        let mut counts = Vec::new();
        for c in &report.coverage {
            if plan.has(ArmKind::SourceDemo) {
                counts.push(c.source_demo_active_feedback_steps);
            }
            if plan.has(ArmKind::MgDemo) {
                counts.push(c.mg_demo_active_feedback_steps);
            }
        }
        let passed = counts.iter().all(|c| *c == Some(0));
        let total: usize = counts.iter().flatten().sum();
        out.push(result("no-recovery-in-demos", passed, format!("{total} steps with active feedback")));
    }

    if report.scaling.len() >= 2 {
        let means: Vec<Option<f64>> = report.scaling.iter().map(|p| p.mean).collect();
        let passed = means.iter().all(Option::is_some) && {
            let m: Vec<f64> = means.iter().flatten().copied().collect();
            m.windows(2).all(|w| w[1] >= w[0] - th.slack) && m[m.len() - 1] - m[0] >= th.min_scaling_gain
        };
        let pts: Vec<String> = report.scaling.iter().map(|p| format!("n={} {}", p.n, f(p.mean))).collect();
        out.push(result("scaling", passed, pts.join(", ")));
    }

    let checked: Vec<usize> = report.coverage.iter().filter_map(|c| c.generated_violations).collect();
    if !checked.is_empty() {
        let total: usize = checked.iter().sum();
        out.push(result("generated-filters", total == 0, format!("{total} violations over {} seeds", checked.len())));
    }

    if plan.has(ArmKind::Ivg) || plan.has(ArmKind::IvgMinusPolicy) {
        let mut passed = true;
        let mut parts = Vec::new();
        for c in &report.coverage {
            if plan.has(ArmKind::Ivg) && plan.n >= 200 {
                passed &= c.ivg_distinct_offsets.is_some_and(|d| d >= th.min_distinct_offsets);
                parts.push(format!("seed {} ivg {}", c.seed, super::report_opt(c.ivg_distinct_offsets)));
            }
            if plan.has(ArmKind::IvgMinusPolicy) {
                passed &= c.ivg_minus_policy_distinct_offsets.is_some_and(|d| d <= plan.m);
                parts.push(format!("seed {} ivg_minus_policy {}", c.seed, super::report_opt(c.ivg_minus_policy_distinct_offsets)));
            }
        }
        if !parts.is_empty() && plan.task == ivgen_core::world::TaskId::PlanarPegInsert {
            out.push(result("fresh-mistake-coverage", passed, parts.join(", ")));
        }
    }
    out
}
