#![allow(dead_code)]

use ivgen_core::datagen::{
    collect_demos, collect_interventions, generate, Dataset, GenerationConfig, GenerationContext, GenerationMode, Provenance,
    SourceIndex,
};
use ivgen_core::policy::{FitConfig, OracleExpert, OracleGate, PolicyModel};
use ivgen_core::world::{CorruptionModel, TaskSpec};

pub fn peg() -> TaskSpec {
    TaskSpec::planar_peg_insert()
}

pub fn demos(task: &TaskSpec, n: usize) -> Dataset {
    collect_demos(task, &CorruptionModel::none(), &OracleExpert::default(), n, 1, Provenance::Base).unwrap().0
}

/// Ten clean demos expanded to `n` episodes, as the base arm builds them.
pub fn base_model(task: &TaskSpec, n: usize) -> PolicyModel {
    let d = demos(task, 10);
    let index = SourceIndex::build(task, &d.episodes).unwrap();
    let cfg = GenerationConfig { mode: GenerationMode::Demo, provenance: Provenance::Base, ..GenerationConfig::default() };
    let z = CorruptionModel::none();
    let ctx = GenerationContext { task, z: &z, policy: None, sources: &index, config: &cfg };
    PolicyModel::fit(&generate(&ctx, n, 2).unwrap().dataset, &FitConfig::default()).unwrap()
}

/// A small interventional dataset on the peg task.
pub fn generated(n: usize) -> Dataset {
    let task = peg();
    let z = CorruptionModel::peg_noise();
    let model = PolicyModel::fit(&demos(&task, 10), &FitConfig::default()).unwrap();
    let (src, _) = collect_interventions(&task, &z, &model, &OracleGate::for_task(&task), 3, 4).unwrap();
    let index = SourceIndex::build(&task, &src.episodes).unwrap();
    let cfg = GenerationConfig::default();
    let ctx = GenerationContext { task: &task, z: &z, policy: Some(&model), sources: &index, config: &cfg };
    generate(&ctx, n, 5).unwrap().dataset
}
