//! Multi-threaded drivers for generation and evaluation. Results are
//! identical to the sequential drivers for any worker count.

use std::time::Instant;

use ivgen_core::datagen::{episode_seed, generate_one, Assembler, GenerateError, Generated, GenerationContext};
use ivgen_core::eval::{run_trial, trial_seed, SuccessStats};
use ivgen_core::policy::Controller;
use ivgen_core::world::{CorruptionError, CorruptionModel, TaskSpec};
use rayon::prelude::*;

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// Attempts are dispatched in index-ordered batches and fed to the
/// assembler in index order, so the retained set never depends on timing.
pub fn generate_parallel(
    ctx: &GenerationContext<'_>,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Generated, GenerateError> {
    if ctx.sources.is_empty() {
        return Err(GenerateError::EmptySource);
    }
    let started = Instant::now();
    let mut asm = Assembler::new(ctx.task, n, ctx.config.attempt_factor);
    let pool = pool(workers);
    let batch = (pool.current_num_threads() * 4).max(1) as u64;
    while !asm.done() {
        let first = asm.next_index();
        let last = (first + batch).min(asm.cap());
        let results: Vec<_> = pool.install(|| {
            (first..last)
                .into_par_iter()
                .map(|i| {
                    let s = episode_seed(seed, i);
                    (i, s, generate_one(ctx, s))
                })
                .collect()
        });
        for (i, s, r) in results {
            asm.push(i, s, r);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    match asm.finish() {
        Ok(mut g) => {
            g.report.wall_clock_seconds = Some(elapsed);
            Ok(g)
        }
        Err(GenerateError::CapReached(mut g)) => {
            g.report.wall_clock_seconds = Some(elapsed);
            Err(GenerateError::CapReached(g))
        }
        Err(e) => Err(e),
    }
}

pub fn evaluate_parallel(
    task: &TaskSpec,
    z: &CorruptionModel,
    controller: Controller<'_>,
    trials: u32,
    seed: u64,
    workers: usize,
) -> Result<SuccessStats, CorruptionError> {
    let outcomes = pool(workers).install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| run_trial(task, z, controller, trial_seed(seed, i)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(SuccessStats::from_outcomes(outcomes))
}
