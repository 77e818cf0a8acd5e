//! Pipeline orchestration for the `nrr` binary: configuration, stage
//! manifests and the generate → preprocess → train → evaluate → report
//! stages.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::{parse_models, parse_seeds, ExperimentConfig, Overrides, SEED_ENV};
pub use error::{CliError, CliResult, Failure};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use stages::Pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Preprocess,
    Train,
    Evaluate,
    Report,
    RunAll,
}

/// Runs one command against an already loaded configuration.
pub fn execute(stage: Stage, config: ExperimentConfig) -> CliResult<()> {
    let p = Pipeline::new(config);
    match stage {
        Stage::Generate => p.generate().map(drop),
        Stage::Preprocess => p.preprocess().map(drop),
        Stage::Train => p.train().map(drop),
        Stage::Evaluate => p.evaluate().map(drop),
        Stage::Report => p.report().map(drop),
        Stage::RunAll => p.run_all(),
    }
}
