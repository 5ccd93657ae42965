use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ivgen::evalbench::{self, ExperimentPlan};
use ivgen::parallel::generate_parallel;
use ivgen::store::{self, RunConfig};
use ivgen::teleop::{serve, ServeConfig, DEFAULT_TICK_HZ};
use ivgen_core::datagen::{
    aggregate, collect_demos, collect_interventions, offline_collect, Dataset, GenerateError, GenerationContext,
    GenerationMode, Provenance, ScriptedMistake, SourceIndex,
};
use ivgen_core::policy::{OracleExpert, OracleGate, PolicyModel, WeightsMode};
use ivgen_core::world::{CorruptionModel, TaskId};

#[derive(Parser)]
#[command(name = "ivgen", version, about = "Interventional data generation for cloned manipulation policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides for RunConfig keys. A flag beats the config file, which beats
/// the defaults.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// planar_peg_insert (peg) or geometry_assembly (geometry).
    #[arg(long, global = true)]
    task: Option<TaskId>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// generation.m
    #[arg(long, global = true)]
    m: Option<usize>,
    /// generation.n
    #[arg(long, global = true)]
    n: Option<usize>,
    /// policy.k
    #[arg(long, global = true)]
    k: Option<usize>,
    /// generation.workers (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// generation.attempt_factor
    #[arg(long, global = true)]
    attempt_factor: Option<u32>,
    /// generation.max_recoveries
    #[arg(long, global = true)]
    max_recoveries: Option<u32>,
    /// eval.trials
    #[arg(long, global = true)]
    trials: Option<u32>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::new(self.task.unwrap_or(TaskId::PlanarPegInsert)),
        };
        if let Some(t) = self.task {
            if self.config.is_some() && t != c.task {
                bail!("--task {t} disagrees with the config file ({})", c.task);
            }
            c.task = t;
        }
        if let Some(s) = self.seed {
            c.generation.seed = s;
            c.eval.seed = s;
        }
        macro_rules! set {
            ($field:expr, $v:expr) => {
                if let Some(v) = $v {
                    $field = v;
                }
            };
        }
        set!(c.generation.m, self.m);
        set!(c.generation.n, self.n);
        set!(c.policy.k, self.k);
        set!(c.generation.workers, self.workers);
        set!(c.generation.attempt_factor, self.attempt_factor);
        set!(c.generation.max_recoveries, self.max_recoveries);
        set!(c.eval.trials, self.trials);
        c.validate()?;
        Ok(c)
    }
}

fn workers(c: &RunConfig) -> usize {
    match c.generation.workers {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        w => w,
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Gate {
    Oracle,
    Teleop,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Ablation {
    NoPolicy,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective run config as TOML.
    Config {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Scripted expert demonstrations.
    CollectDemos {
        #[command(flatten)]
        run: RunArgs,
        /// Number of demonstrations.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Collect under the config's corruption instead of clean poses.
        #[arg(long)]
        corrupted: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a policy under a gate and keep the corrected trajectories.
    CollectInterventions {
        #[command(flatten)]
        run: RunArgs,
        /// Policy model to monitor. Not needed with --offline.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Gate::Oracle)]
        gate: Gate,
        /// Scripted mistakes acted out by the expert; no policy involved.
        #[arg(long)]
        offline: bool,
        /// Dataset file (oracle gate) or session directory (teleop gate).
        #[arg(short, long)]
        out: PathBuf,
        /// Listen address for the teleop gate.
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: String,
    },
    /// Synthesize a dataset from source interventions.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        sources: PathBuf,
        /// Policy model. Not needed with --demo-mode.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "demo_mode")]
        ablation: Option<Ablation>,
        /// Retarget whole demonstrations without running a policy. New
        /// episodes use the corruption the sources were recorded under.
        #[arg(long)]
        demo_mode: bool,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the generation report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a k-NN policy on one or more datasets.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        /// Up-weight non-base rows by the base/non-base step ratio.
        #[arg(long)]
        balanced: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Success rate of a policy.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Evaluate on clean poses instead of the config's corruption.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run an experiment plan and print the report.
    Experiment {
        /// TOML plan. Without it a built-in preset is used.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "plan")]
        preset: Option<Preset>,
        /// Exit nonzero if any assertion fails.
        #[arg(long)]
        assert: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Print the resolved plan as TOML and exit.
        #[arg(long)]
        print_plan: bool,
    },
    /// Check a dataset file against the schema and replay invariants.
    Validate {
        dataset: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Teleoperation WebSocket server.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        listen: String,
        /// Session files are written here.
        #[arg(long, default_value = "sessions")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
        tick_hz: f64,
        /// Exit after this many sessions.
        #[arg(long)]
        max_sessions: Option<usize>,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Preset {
    Peg,
    Geometry,
}

fn load_policy(path: &Path, c: &RunConfig) -> Result<PolicyModel> {
    let m = store::read_model(path).with_context(|| format!("reading {}", path.display()))?;
    if m.layout().task_id != c.task {
        bail!("{} was fitted for {}, config task is {}", path.display(), m.layout().task_id, c.task);
    }
    Ok(m)
}

fn load_dataset(path: &Path, c: &RunConfig) -> Result<Dataset> {
    let d = store::read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
    if d.task.task_id != c.task {
        bail!("{} holds {} episodes, config task is {}", path.display(), d.task.task_id, c.task);
    }
    Ok(d)
}

fn write(d: &Dataset, path: &Path) -> Result<()> {
    store::write_dataset(d, path).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} episodes to {}", d.len(), path.display());
    Ok(())
}

fn source_corruption(src: &Dataset) -> Result<CorruptionModel> {
    let Some(first) = src.episodes.first() else {
        bail!("source dataset is empty");
    };
    let z = first.header.corruption;
    if src.episodes.iter().any(|e| e.header.corruption != z) {
        bail!("sources were recorded under different corruption models");
    }
    Ok(z)
}

fn offline_script(task: TaskId) -> Vec<ScriptedMistake> {
    match task {
        TaskId::PlanarPegInsert => vec![
            ScriptedMistake::shift(0.02, 0.0),
            ScriptedMistake::shift(0.0, 0.02),
            ScriptedMistake::shift(-0.02, 0.0),
            ScriptedMistake::shift(0.0, -0.02),
        ],
        TaskId::GeometryAssembly => vec![ScriptedMistake::wrong_handle()],
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Config { run } => {
            print!("{}", run.resolve()?.to_toml());
        }
        Command::CollectDemos { run, count, corrupted, out } => {
            let c = run.resolve()?;
            let (z, provenance) =
                if corrupted { (c.corruption(), Provenance::SourceHuman) } else { (CorruptionModel::none(), Provenance::Base) };
            let (d, report) =
                collect_demos(&c.task_spec(), &z, &OracleExpert::default(), count, c.generation.seed, provenance)?;
            log::info!("{report:?}");
            write(&d, &out)?;
        }
        Command::CollectInterventions { run, policy, gate, offline, out, listen } => {
            let c = run.resolve()?;
            let task = c.task_spec();
            match (gate, offline) {
                (Gate::Teleop, true) => bail!("--offline needs no gate; drop --gate teleop"),
                (Gate::Teleop, false) => {
                    let policy = policy.context("--gate teleop needs --policy")?;
                    fs::create_dir_all(&out)?;
                    let cfg = ServeConfig {
                        policy: load_policy(&policy, &c)?,
                        task,
                        corruption: c.corruption(),
                        seed: c.generation.seed,
                        tick_hz: DEFAULT_TICK_HZ,
                        output_dir: out,
                        max_sessions: None,
                    };
                    serve(cfg, listen.as_str())?;
                }
                (Gate::Oracle, true) => {
                    let script = offline_script(c.task);
                    let (d, report) = offline_collect(
                        &task,
                        &c.corruption(),
                        &OracleExpert::default(),
                        &script,
                        c.generation.m,
                        c.generation.seed,
                    )?;
                    log::info!("{report:?}");
                    write(&d, &out)?;
                }
                (Gate::Oracle, false) => {
                    let policy = policy.context("collecting interventions needs --policy (or --offline)")?;
                    let model = load_policy(&policy, &c)?;
                    let gate = OracleGate::for_task(&task);
                    let (d, report) =
                        collect_interventions(&task, &c.corruption(), &model, &gate, c.generation.m, c.generation.seed)?;
                    log::info!("{report:?}");
                    write(&d, &out)?;
                }
            }
        }
        Command::Generate { run, sources, policy, ablation, demo_mode, out, report } => {
            let c = run.resolve()?;
            let task = c.task_spec();
            let src = load_dataset(&sources, &c)?;
            let mut cfg = c.generation_config();
            cfg.mode = match (ablation, demo_mode) {
                (Some(Ablation::NoPolicy), _) => GenerationMode::NoPolicy,
                (None, true) => GenerationMode::Demo,
                (None, false) => GenerationMode::Interventional,
            };
            let model = match (cfg.mode, policy) {
                (GenerationMode::Interventional, None) => bail!("interventional generation needs --policy"),
                (_, Some(p)) => Some(load_policy(&p, &c)?),
                (_, None) => None,
            };
            let z = match cfg.mode {
                GenerationMode::Demo => source_corruption(&src)?,
                _ => c.corruption(),
            };
            let index = SourceIndex::build(&task, &src.episodes).context("indexing sources")?;
            let ctx = GenerationContext { task: &task, z: &z, policy: model.as_ref(), sources: &index, config: &cfg };
            let g = match generate_parallel(&ctx, c.generation.n, c.generation.seed, workers(&c)) {
                Ok(g) => g,
                Err(GenerateError::CapReached(g)) => {
                    if let Some(r) = &report {
                        store::write_json(&g.report, r)?;
                    }
                    bail!(
                        "attempt cap reached: {} of {} episodes after {} attempts",
                        g.dataset.len(),
                        c.generation.n,
                        g.report.attempts
                    );
                }
                Err(e) => bail!("{e}"),
            };
            eprintln!(
                "{} attempts, {} kept; failures: {:?}",
                g.report.attempts, g.report.successes, g.report.failures
            );
            if let Some(r) = &report {
                store::write_json(&g.report, r)?;
            }
            write(&g.dataset, &out)?;
        }
        Command::Fit { run, data, balanced, out } => {
            let mut c = run.resolve()?;
            if balanced {
                c.policy.weights = WeightsMode::Balanced;
            }
            let mut all = load_dataset(&data[0], &c)?;
            for p in &data[1..] {
                all = aggregate(&all, &load_dataset(p, &c)?)?;
            }
            let model = PolicyModel::fit(&all, &c.policy)?;
            store::write_model(&model, &out)?;
            eprintln!("fitted k={} on {} rows, wrote {}", c.policy.k, model.data().actions.len(), out.display());
        }
        Command::Eval { run, policy, clean, json } => {
            let c = run.resolve()?;
            let model = load_policy(&policy, &c)?;
            let z = if clean { CorruptionModel::none() } else { c.corruption() };
            let stats = evalbench::evaluate(&model, &c.task_spec(), &z, c.eval.trials, c.eval.seed, workers(&c))
                .map_err(anyhow::Error::msg)?;
            println!("success {}/{} = {:.3}", stats.successes, stats.trials, stats.success_rate);
            if let Some(p) = json {
                store::write_json(&stats, &p)?;
            }
        }
        Command::Experiment { plan, preset, assert, workers, json, print_plan } => {
            let mut plan = match (plan, preset) {
                (Some(p), _) => ExperimentPlan::load(&p)?,
                (None, Some(Preset::Geometry)) => ExperimentPlan::geometry_study(),
                (None, _) => ExperimentPlan::peg_ladder(),
            };
            if let Some(w) = workers {
                plan.workers = w;
            }
            plan.validate()?;
            if print_plan {
                print!("{}", plan.to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            let report = evalbench::run_experiment(&plan);
            print!("{}", report.to_text());
            if let Some(p) = json {
                fs::write(&p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
            }
            if assert && !report.all_passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Validate { dataset, json } => {
            let r = store::validate(&dataset);
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("{}: {} episodes, {} steps, {} violations", dataset.display(), r.episodes, r.steps, r.violations.len());
                for v in &r.violations {
                    println!("  {v}");
                }
            }
            if !r.is_clean() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve { run, policy, listen, out_dir, tick_hz, max_sessions } => {
            let c = run.resolve()?;
            if !(tick_hz > 0.0 && tick_hz.is_finite()) {
                bail!("--tick-hz must be positive");
            }
            fs::create_dir_all(&out_dir)?;
            let cfg = ServeConfig {
                policy: load_policy(&policy, &c)?,
                task: c.task_spec(),
                corruption: c.corruption(),
                seed: c.generation.seed,
                tick_hz,
                output_dir: out_dir,
                max_sessions,
            };
            serve(cfg, listen.as_str())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
