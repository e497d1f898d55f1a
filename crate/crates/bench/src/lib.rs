//! Synthetic streams, clustering metrics and a reaching-task emulation used
//! to evaluate `sosc-core`.

pub mod generate;
pub mod metrics;
pub mod reaching;
pub mod stream_io;

pub use generate::{generate, ClusterSpec, GeneratorSpec, LabeledStream, Mutation, Stage};
pub use metrics::{hungarian, mean_match_error, nmi, silhouette};
pub use stream_io::{read_jsonl, write_jsonl, Record};

/// Errors from generation, metrics and stream I/O.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("could not place cluster {index} at distance {min_distance} from the others after {attempts} draws")]
    Separation { index: usize, min_distance: f64, attempts: usize },
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] sosc_core::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
