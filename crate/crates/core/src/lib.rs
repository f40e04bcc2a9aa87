//! Anytime bag-of-visual-words image retrieval.
//!
//! The pipeline is the classic appearance-based retrieval stack — quantize
//! local descriptors against a k-means vocabulary, score database images
//! through an inverted index with tf-idf weights — with one twist: query
//! features are quantized one at a time in random order, a score histogram
//! over database images is maintained incrementally, and a pluggable
//! [`stopping::StoppingRule`] may terminate quantization early once the best
//! match is already evident. Easy queries (few plausible candidates) stop
//! after a small fraction of their features; hard queries keep processing.
//!
//! Modules follow the pipeline order:
//!
//! - [`dataset`] — descriptor containers on disk, ground-truth sidecars
//! - [`synth`] — synthetic datasets with planted matches of controlled difficulty
//! - [`vocab`] — k-means vocabulary training, vector quantization, idf
//! - [`index`] — inverted index with per-image tf-idf weights and norms
//! - [`stopping`] — stopping rules and the two-distribution race simulator
//! - [`query`] — the anytime query engine
//! - [`eval`] — precision/recall harness, threshold sweeps, feature profiles

use thiserror::Error;

pub mod dataset;
pub mod eval;
pub mod index;
pub mod query;
pub mod stopping;
pub mod synth;
pub mod vocab;

pub use dataset::{Dataset, Descriptor, ImageRecord};
pub use index::{InvertedIndex, Posting};
pub use query::{run_query, QueryOptions, QueryResult, ScoreHistogram, StopReason};
pub use stopping::{race_simulate, should_stop, RaceReport, StopState, StoppingRule};
pub use synth::{synthesize, SynthConfig};
pub use vocab::{KMeansConfig, Vocabulary};

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("word id {word} out of range for vocabulary of {k} words")]
    WordOutOfRange { word: usize, k: usize },
    #[error("inconsistent stop state: {0}")]
    InconsistentState(String),
    #[error("query image has no descriptors")]
    EmptyQuery,
    #[error("missing ground truth for query image {0}")]
    MissingGroundTruth(u32),
}

impl Error {
    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
