//! Arm datasets, paired evaluation and the experiment report.

mod assertions;
mod plan;
mod report;

pub use assertions::{check, AssertionResult, Thresholds};
pub use plan::{ArmKind, ArmSpec, EvalColumn, ExperimentPlan, PlanError};
pub use report::{ArmRow, ArmSeedResult, Coverage, ExperimentReport, ScalingPoint, FOOTER};

use std::collections::HashSet;

use ivgen_core::datagen::{
    aggregate, collect_demos, collect_interventions, Dataset, GenerateError, Generated, GenerationConfig,
    GenerationContext, GenerationMode, Provenance, SourceIndex,
};
use ivgen_core::eval::SuccessStats;
use ivgen_core::policy::{Controller, FitConfig, OracleExpert, OracleGate, PolicyModel};
use ivgen_core::rng::derive_seed;
use ivgen_core::world::{CorruptionModel, TaskSpec};

use crate::parallel::{evaluate_parallel, generate_parallel};
use crate::store::validate_dataset;

pub fn evaluate(
    model: &PolicyModel,
    task: &TaskSpec,
    z: &CorruptionModel,
    trials: u32,
    seed: u64,
    workers: usize,
) -> Result<SuccessStats, String> {
    evaluate_parallel(task, z, Controller::Policy(model), trials, seed, workers).map_err(|e| e.to_string())
}

/// Intermediate datasets of one experiment seed. Each is built once and
/// shared by every arm that needs it; a failed step poisons only its
/// dependents.
pub struct SharedInputs {
    pub task: TaskSpec,
    pub base: Result<Dataset, String>,
    pub base_model: Result<PolicyModel, String>,
    pub sources: Result<Dataset, String>,
    pub ivg: Result<Dataset, String>,
    pub no_policy: Result<Dataset, String>,
    pub source_demo: Result<Dataset, String>,
    pub mg_demo: Result<Dataset, String>,
}

fn skipped<T>() -> Result<T, String> {
    Err("not requested by the plan".into())
}

fn finished(r: Result<Generated, GenerateError>) -> Result<Dataset, String> {
    match r {
        Ok(g) => Ok(g.dataset),
        Err(GenerateError::CapReached(g)) => Err(format!(
            "attempt cap reached after {} attempts with {} episodes",
            g.report.attempts,
            g.dataset.len()
        )),
        Err(e) => Err(e.to_string()),
    }
}

fn expand(
    task: &TaskSpec,
    z: &CorruptionModel,
    policy: Option<&PolicyModel>,
    sources: &Dataset,
    config: GenerationConfig,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Dataset, String> {
    let index = SourceIndex::build(task, &sources.episodes).map_err(|e| e.to_string())?;
    let ctx = GenerationContext { task, z, policy, sources: &index, config: &config };
    finished(generate_parallel(&ctx, n, seed, workers))
}

impl SharedInputs {
    pub fn build(plan: &ExperimentPlan, seed: u64) -> SharedInputs {
        use ArmKind::*;
        let task = plan.task.spec();
        let expert = OracleExpert::default();
        let needs = |arms: &[ArmKind]| arms.iter().any(|&a| plan.has(a));
        let want_sources = needs(&[SourceInt, WeightedSrcInt, IvgMinusPolicy, Ivg]);
        let want_base = want_sources || needs(&[Base, BaseMgDemo]);
        let want_demo = needs(&[SourceDemo, MgDemo, BaseMgDemo]);
        let w = plan.workers;

        let base = if want_base {
            collect_demos(&task, &plan.clean_corruption, &expert, plan.base_demos, derive_seed(seed, 1), Provenance::Base)
                .map_err(|e| e.to_string())
                .and_then(|(demos, _)| {
                    let cfg = GenerationConfig { mode: GenerationMode::Demo, provenance: Provenance::Base, ..Default::default() };
                    expand(&task, &plan.clean_corruption, None, &demos, cfg, plan.n, derive_seed(seed, 2), w)
                })
        } else {
            skipped()
        };
        let base_model = base.as_ref().map_err(Clone::clone).and_then(|b| fit(b, &FitConfig::default()));
        let sources = match (&base_model, want_sources) {
            (Ok(m), true) => {
                collect_interventions(&task, &plan.corruption, m, &OracleGate::for_task(&task), plan.m, derive_seed(seed, 3))
                    .map(|(d, _)| d)
                    .map_err(|e| e.to_string())
            }
            (Err(e), true) => Err(e.clone()),
            _ => skipped(),
        };
        let generated = |mode: GenerationMode, k: u64| match (&sources, &base_model) {
            (Ok(s), Ok(m)) => {
                let cfg = GenerationConfig { mode, ..Default::default() };
                expand(&task, &plan.corruption, Some(m), s, cfg, plan.n, derive_seed(seed, k), w)
            }
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        let ivg = if plan.has(Ivg) { generated(GenerationMode::Interventional, 4) } else { skipped() };
        let no_policy = if plan.has(IvgMinusPolicy) { generated(GenerationMode::NoPolicy, 5) } else { skipped() };
        let source_demo = if want_demo {
            collect_demos(&task, &plan.demo_corruption, &expert, plan.m, derive_seed(seed, 6), Provenance::SourceHuman)
                .map(|(d, _)| d)
                .map_err(|e| e.to_string())
        } else {
            skipped()
        };
        let mg_demo = if needs(&[MgDemo, BaseMgDemo]) {
            source_demo.as_ref().map_err(Clone::clone).and_then(|sd| {
                let cfg = GenerationConfig { mode: GenerationMode::Demo, ..Default::default() };
                expand(&task, &plan.demo_corruption, None, sd, cfg, plan.n, derive_seed(seed, 7), w)
            })
        } else {
            skipped()
        };
        SharedInputs { task, base, base_model, sources, ivg, no_policy, source_demo, mg_demo }
    }
}

pub fn fit(d: &Dataset, config: &FitConfig) -> Result<PolicyModel, String> {
    PolicyModel::fit(d, config).map_err(|e| e.to_string())
}

fn with_base(inputs: &SharedInputs, extra: &Result<Dataset, String>) -> Result<Dataset, String> {
    let base = inputs.base.as_ref().map_err(Clone::clone)?;
    let extra = extra.as_ref().map_err(Clone::clone)?;
    aggregate(base, extra).map_err(|e| e.to_string())
}

/// Training set of `arm`. Errors name the arm.
pub fn build_arm_dataset(arm: ArmKind, inputs: &SharedInputs) -> Result<Dataset, String> {
    let r = match arm {
        ArmKind::Base => inputs.base.clone(),
        ArmKind::SourceInt | ArmKind::WeightedSrcInt => {
            with_base(inputs, &inputs.sources.as_ref().map(|s| s.human_filtered()).map_err(Clone::clone))
        }
        ArmKind::SourceDemo => inputs.source_demo.clone(),
        ArmKind::MgDemo => inputs.mg_demo.clone(),
        ArmKind::IvgMinusPolicy => with_base(inputs, &inputs.no_policy),
        ArmKind::Ivg => with_base(inputs, &inputs.ivg),
        ArmKind::BaseMgDemo => with_base(inputs, &inputs.mg_demo),
    };
    r.map_err(|e| format!("arm {arm}: {e}"))
}

/// Distinct per-episode corruption offsets over the first `limit` episodes.
pub fn distinct_offsets(ds: &Dataset, limit: usize) -> usize {
    let mut seen = HashSet::new();
    for e in ds.episodes.iter().take(limit) {
        let key: Vec<[u64; 3]> = e
            .header
            .draw
            .reference_offsets(&ds.task)
            .iter()
            .map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()])
            .collect();
        seen.insert(key);
    }
    seen.len()
}

pub fn active_feedback_steps(ds: &Dataset) -> usize {
    ds.episodes.iter().flat_map(|e| &e.steps).filter(|s| s.obs.feedback.active).count()
}

/// Replays every generated dataset of one seed through the store validator.
fn generated_violations(inputs: &SharedInputs) -> Option<usize> {
    let sets = [&inputs.base, &inputs.ivg, &inputs.no_policy, &inputs.mg_demo];
    let checked: Vec<usize> =
        sets.iter().filter_map(|d| d.as_ref().ok()).map(|d| validate_dataset(d).violations.len()).collect();
    (!checked.is_empty()).then(|| checked.iter().sum())
}

fn eval_columns(plan: &ExperimentPlan, task: &TaskSpec, model: &PolicyModel, eval_seed: u64) -> Result<Vec<SuccessStats>, String> {
    plan.columns.iter().map(|c| evaluate(model, task, &c.corruption, plan.trials, eval_seed, plan.workers)).collect()
}

/// Headline score: the single column, or the mixture of several.
pub fn headline(columns: &[SuccessStats]) -> f64 {
    columns.iter().map(|c| c.success_rate).sum::<f64>() / columns.len() as f64
}

/// Evaluation seed shared by all arms of one experiment seed.
pub fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, 8)
}

pub fn run_experiment(plan: &ExperimentPlan) -> ExperimentReport {
    let mut rows: Vec<ArmRow> = plan.arms.iter().map(|a| ArmRow::new(a.name, a.fit())).collect();
    let mut scaling: Vec<ScalingPoint> = plan.scaling.iter().map(|&n| ScalingPoint { n, per_seed: Vec::new(), mean: None }).collect();
    let mut coverage = Vec::new();
    for &seed in &plan.seeds {
        log::info!("seed {seed}: building shared datasets");
        let inputs = SharedInputs::build(plan, seed);
        let es = eval_seed(seed);
        for (row, spec) in rows.iter_mut().zip(&plan.arms) {
            let result = build_arm_dataset(spec.name, &inputs).and_then(|d| {
                let m = fit(&d, &spec.fit()).map_err(|e| format!("arm {}: {e}", spec.name))?;
                let cols = eval_columns(plan, &inputs.task, &m, es)?;
                Ok((d, cols))
            });
            log::info!("seed {seed}: arm {} done", spec.name);
            row.per_seed.push(ArmSeedResult::from_result(seed, result));
        }
        for p in &mut scaling {
            let r = inputs.ivg.as_ref().map_err(Clone::clone).and_then(|g| {
                let mut prefix = g.clone();
                prefix.episodes.truncate(p.n);
                let d = with_base(&inputs, &Ok(prefix))?;
                let m = fit(&d, &FitConfig::default())?;
                Ok(headline(&eval_columns(plan, &inputs.task, &m, es)?))
            });
            p.per_seed.push(r.ok());
        }
        coverage.push(Coverage {
            seed,
            sources: inputs.sources.as_ref().ok().map(|s| s.len()),
            ivg_distinct_offsets: inputs.ivg.as_ref().ok().map(|d| distinct_offsets(d, 200)),
            ivg_minus_policy_distinct_offsets: inputs.no_policy.as_ref().ok().map(|d| distinct_offsets(d, 200)),
            source_demo_active_feedback_steps: inputs.source_demo.as_ref().ok().map(active_feedback_steps),
            mg_demo_active_feedback_steps: inputs.mg_demo.as_ref().ok().map(active_feedback_steps),
            generated_violations: generated_violations(&inputs),
        });
    }
    for row in &mut rows {
        row.finish(plan.columns.len());
    }
    for p in &mut scaling {
        p.mean = mean_all(&p.per_seed);
    }
    let mut report = ExperimentReport {
        task: plan.task,
        seeds: plan.seeds.clone(),
        trials: plan.trials,
        columns: plan.column_names(),
        rows,
        scaling,
        coverage,
        assertions: Vec::new(),
        footer: FOOTER.to_string(),
    };
    report.assertions = check(plan, &report, &Thresholds::default());
    report
}

pub(crate) fn mean_all(v: &[Option<f64>]) -> Option<f64> {
    if v.is_empty() || v.iter().any(Option::is_none) {
        return None;
    }
    Some(v.iter().flatten().sum::<f64>() / v.len() as f64)
}

pub(crate) fn report_opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "missing".into())
}
