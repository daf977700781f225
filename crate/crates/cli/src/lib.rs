//! Pipeline orchestration and benchmark harness behind the `spinflow` binary.

pub mod bench;
pub mod config;
pub mod error;
pub mod pipeline;

pub use bench::{bench, write_bench_outputs, BenchReport, Summary, TrialRow};
pub use config::PipelineConfig;
pub use error::{CliError, StageError};
pub use pipeline::run_pipeline;
