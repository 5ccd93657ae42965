use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use ivgen_core::policy::{FitConfig, WeightsMode};
use ivgen_core::world::{CorruptionModel, TaskId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    /// Clean demonstrations expanded by demonstration-mode generation.
    Base,
    /// Base plus the expert steps of the m interventions.
    SourceInt,
    /// Source Int with balanced weights.
    WeightedSrcInt,
    /// m expert demonstrations under the demo corruption, alone.
    SourceDemo,
    /// Source Demo expanded to n by demonstration-mode generation.
    MgDemo,
    /// Base plus generation that replays the sources' mistakes open loop.
    IvgMinusPolicy,
    /// Base plus interventional generation.
    Ivg,
    /// Base plus the MG Demo expansion.
    BaseMgDemo,
}

impl ArmKind {
    pub const LADDER: [ArmKind; 7] = [
        ArmKind::Base,
        ArmKind::SourceInt,
        ArmKind::WeightedSrcInt,
        ArmKind::SourceDemo,
        ArmKind::MgDemo,
        ArmKind::IvgMinusPolicy,
        ArmKind::Ivg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArmKind::Base => "base",
            ArmKind::SourceInt => "source_int",
            ArmKind::WeightedSrcInt => "weighted_src_int",
            ArmKind::SourceDemo => "source_demo",
            ArmKind::MgDemo => "mg_demo",
            ArmKind::IvgMinusPolicy => "ivg_minus_policy",
            ArmKind::Ivg => "ivg",
            ArmKind::BaseMgDemo => "base_mg_demo",
        }
    }

    pub fn default_fit(self) -> FitConfig {
        match self {
            ArmKind::WeightedSrcInt => FitConfig { weights: WeightsMode::Balanced, ..FitConfig::default() },
            _ => FitConfig::default(),
        }
    }
}

impl fmt::Display for ArmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub name: ArmKind,
    /// Overrides the arm's default fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

impl ArmSpec {
    pub fn new(name: ArmKind) -> ArmSpec {
        ArmSpec { name, fit: None }
    }

    pub fn fit(&self) -> FitConfig {
        self.fit.unwrap_or_else(|| self.name.default_fit())
    }
}

/// One evaluation column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalColumn {
    pub name: String,
    pub corruption: CorruptionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub task: TaskId,
    pub arms: Vec<ArmSpec>,
    /// Experiment seeds; every arm runs once per seed.
    pub seeds: Vec<u64>,
    pub trials: u32,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Clean demonstrations behind the base arm.
    #[serde(default = "default_m")]
    pub base_demos: usize,
    /// Corruption during intervention collection and generation.
    pub corruption: CorruptionModel,
    /// Corruption of the clean demonstrations.
    pub clean_corruption: CorruptionModel,
    /// Corruption under which Source Demo is collected.
    pub demo_corruption: CorruptionModel,
    /// Evaluation columns; a mixture column is added when there are several.
    pub columns: Vec<EvalColumn>,
    /// Prefix sizes of the IVG generated set to evaluate separately.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scaling: Vec<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_m() -> usize {
    10
}

fn default_n() -> usize {
    1000
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("plan: {0}")]
    Parse(String),
    #[error("plan: arm {0} listed twice")]
    DuplicateArm(ArmKind),
    #[error("plan: {0}")]
    Invalid(String),
}

impl ExperimentPlan {
    /// Full ladder on the peg task with its stated noise.
    pub fn peg_ladder() -> ExperimentPlan {
        let z = CorruptionModel::peg_noise();
        ExperimentPlan {
            task: TaskId::PlanarPegInsert,
            arms: ArmKind::LADDER.iter().map(|&a| ArmSpec::new(a)).collect(),
            seeds: vec![0, 1, 2],
            trials: 200,
            m: 10,
            n: 1000,
            base_demos: 10,
            corruption: z,
            clean_corruption: CorruptionModel::none(),
            demo_corruption: z,
            columns: vec![EvalColumn { name: "success".into(), corruption: z }],
            scaling: vec![100, 300, 1000],
            workers: 1,
        }
    }

    /// Geometry study: per-geometry columns and their mixture.
    pub fn geometry_study() -> ExperimentPlan {
        let arms = [ArmKind::Base, ArmKind::SourceInt, ArmKind::MgDemo, ArmKind::BaseMgDemo, ArmKind::Ivg];
        ExperimentPlan {
            task: TaskId::GeometryAssembly,
            arms: arms.iter().map(|&a| ArmSpec::new(a)).collect(),
            seeds: vec![0],
            trials: 200,
            m: 10,
            n: 1000,
            base_demos: 10,
            corruption: CorruptionModel::geometry_flip(0.5),
            clean_corruption: CorruptionModel::geometry_flip(0.0),
            demo_corruption: CorruptionModel::geometry_flip(1.0),
            columns: vec![
                EvalColumn { name: "geometry_1".into(), corruption: CorruptionModel::geometry_flip(0.0) },
                EvalColumn { name: "geometry_2".into(), corruption: CorruptionModel::geometry_flip(1.0) },
            ],
            scaling: Vec::new(),
            workers: 1,
        }
    }

    pub fn from_toml(text: &str) -> Result<ExperimentPlan, PlanError> {
        let p: ExperimentPlan = toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<ExperimentPlan, PlanError> {
        let text =
            fs::read_to_string(path).map_err(|e| PlanError::Io { path: path.display().to_string(), message: e.to_string() })?;
        ExperimentPlan::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let mut seen = HashSet::new();
        for a in &self.arms {
            if !seen.insert(a.name) {
                return Err(PlanError::DuplicateArm(a.name));
            }
            if a.fit().k == 0 {
                return Err(PlanError::Invalid(format!("arm {}: k must be at least 1", a.name)));
            }
        }
        let invalid = |m: &str| Err(PlanError::Invalid(m.into()));
        if self.arms.is_empty() {
            return invalid("no arms");
        }
        if self.seeds.is_empty() {
            return invalid("no seeds");
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.m == 0 || self.n == 0 || self.base_demos == 0 {
            return invalid("m, n and base_demos must be at least 1");
        }
        if self.columns.is_empty() {
            return invalid("no evaluation columns");
        }
        if self.scaling.iter().any(|&s| s == 0 || s > self.n) {
            return invalid("scaling sizes must lie in 1..=n");
        }
        for z in [&self.corruption, &self.clean_corruption, &self.demo_corruption]
            .into_iter()
            .chain(self.columns.iter().map(|c| &c.corruption))
        {
            z.validate().map_err(|e| PlanError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn has(&self, arm: ArmKind) -> bool {
        self.arms.iter().any(|a| a.name == arm)
    }

    /// Column names including the mixture column.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        if self.columns.len() > 1 {
            names.push("mixture".into());
        }
        names
    }
}
