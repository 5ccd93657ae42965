use std::fs;
use std::path::Path;

use ivgen_core::datagen::GenerationConfig;
use ivgen_core::geom::ControllerLimits;
use ivgen_core::policy::FitConfig;
use ivgen_core::world::{CorruptionModel, FeedbackMode, TaskId, TaskSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {key} {message}")]
    Range { key: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSettings {
    /// Source interventions to collect.
    pub m: usize,
    /// Episodes to generate.
    pub n: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Attempt cap as a multiple of `n`.
    pub attempt_factor: u32,
    pub max_recoveries: u32,
    pub keep_no_mistake: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        let g = GenerationConfig::default();
        GenerationSettings {
            m: 10,
            n: 1000,
            seed: 0,
            workers: 1,
            attempt_factor: g.attempt_factor,
            max_recoveries: g.max_recoveries,
            keep_no_mistake: g.keep_no_mistake,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub trials: u32,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { trials: 200, seed: 0 }
    }
}

/// Everything one pipeline run needs. Loaded from TOML; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskId,
    /// Defaults to the task's standard corruption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionModel>,
    #[serde(default)]
    pub policy: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ControllerLimits>,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observability: Option<FeedbackMode>,
    #[serde(default)]
    pub eval: EvalSettings,
}

/// Test-time corruption used when a config names none.
pub fn default_corruption(task: TaskId) -> CorruptionModel {
    match task {
        TaskId::PlanarPegInsert => CorruptionModel::peg_noise(),
        TaskId::GeometryAssembly => CorruptionModel::geometry_flip(0.5),
    }
}

impl RunConfig {
    pub fn new(task: TaskId) -> RunConfig {
        RunConfig {
            task,
            corruption: None,
            policy: FitConfig::default(),
            limits: None,
            generation: GenerationSettings::default(),
            observability: None,
            eval: EvalSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |key, message: &str| Err(ConfigError::Range { key, message: message.into() });
        if self.policy.k == 0 {
            return range("policy.k", "must be at least 1");
        }
        if self.generation.m == 0 {
            return range("generation.m", "must be at least 1");
        }
        if self.generation.n == 0 {
            return range("generation.n", "must be at least 1");
        }
        if self.generation.attempt_factor == 0 {
            return range("generation.attempt_factor", "must be at least 1");
        }
        if self.eval.trials == 0 {
            return range("eval.trials", "must be at least 1");
        }
        if let Some(l) = self.limits {
            if !(l.max_step_translation > 0.0 && l.max_step_rotation > 0.0) {
                return range("limits", "must be positive");
            }
        }
        self.corruption()
            .validate()
            .map_err(|e| ConfigError::Range { key: "corruption", message: e.to_string() })?;
        self.task_spec().validate().map_err(|e| ConfigError::Range { key: "task", message: e.to_string() })?;
        Ok(())
    }

    /// The task with limit and observability overrides applied.
    pub fn task_spec(&self) -> TaskSpec {
        let mut t = self.task.spec();
        if let Some(l) = self.limits {
            t.limits = l;
        }
        if let Some(f) = self.observability {
            t.feedback = f;
        }
        t
    }

    pub fn corruption(&self) -> CorruptionModel {
        self.corruption.unwrap_or_else(|| default_corruption(self.task))
    }

    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            attempt_factor: self.generation.attempt_factor,
            max_recoveries: self.generation.max_recoveries,
            keep_no_mistake: self.generation.keep_no_mistake,
            ..GenerationConfig::default()
        }
    }
}
