//! Per-pair quality scores from three backends: embedding cosine similarity,
//! a precomputed score file, or a remote scorer process.

mod cosine;
mod file;
pub mod mock;
pub mod protocol;
mod remote;

pub use cosine::{cosine_similarity, score_cosine, CosineOptions, CosineSummary};
pub use file::{format_score, score_from_file, ScoreFileReader, ScoreWriter};
pub use remote::{RemoteScorer, RemoteSummary, Sidecar};

use std::path::PathBuf;

use serde::Serialize;

pub const COSINE_SCORER: &str = "cosine";
pub const FILE_SCORER: &str = "file";

/// A quality score attached to the pair at `index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPair {
    pub index: u64,
    pub score: f64,
    pub scorer_id: String,
}

/// How a per-pair scoring failure (zero embedding, sidecar-rejected pair) is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairErrorPolicy {
    /// Abort with the offending index.
    #[default]
    Error,
    /// Leave the pair unscored and list it in the run summary.
    SkipWithReport,
}

/// A pair that received no score, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedPair {
    pub index: u64,
    pub reason: String,
}

/// Backend selection with exactly the parameters that backend needs.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerConfig {
    Cosine {
        source_embeddings: PathBuf,
        target_embeddings: PathBuf,
    },
    File {
        path: PathBuf,
    },
    Remote {
        command: String,
        /// Caps the in-flight window below what the sidecar advertises.
        batch_size: Option<usize>,
    },
}
