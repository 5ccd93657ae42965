//! Interventional data generation: gated collection, mistake detection,
//! recovery retargeting and replay, filtering and aggregation.

mod adapt;
mod collect;
mod dataset;
mod generate;
mod segment;

pub use adapt::{adapt, replay, AdaptError, ReplayFailure, ReplayPlan};
pub use collect::{collect_demos, collect_interventions, offline_collect, CollectError, CollectReport, ScriptedMistake, NO_MISTAKE_LIMIT};
pub use dataset::{aggregate, Actor, Dataset, DatasetError, Episode, EpisodeHeader, Provenance, ReplayError, SourceDataset, Step, Trajectory};
pub use generate::{
    episode_seed, generate, generate_one, Assembler, AttemptRecord, Failure, FailureCounts, GenerateError, Generated,
    GenerationConfig, GenerationContext, GenerationMode, GenerationReport,
};
pub use segment::{detect_termination, pieces, segment, Piece, Segment, SourceEntry, SourceIndex};

#[cfg(test)]
mod tests;
