//! Experiment harness: configuration, synthetic data, training, scoring
//! and report tables.

pub mod config;
pub mod experiment;
pub mod report;
pub mod schedule;
pub mod synth;
pub mod trainer;

pub use config::{ExperimentConfig, InputMode};
pub use experiment::{run_experiment, ExperimentOutput};
pub use report::{timing_report, RunReport};
pub use schedule::{resolve_schedule, Schedule};
pub use synth::{make_synthetic_corpus, SynthConfig, SynthCorpus};
pub use trainer::{train, Example, ExampleInput, TrainOptions};
