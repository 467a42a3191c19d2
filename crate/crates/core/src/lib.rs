//! Quality-score based filtering of noisy parallel corpora.
//!
//! The pipeline is: read a pseudo-parallel corpus ([`corpus`]), score each
//! pair ([`scoring`]) from sentence embeddings ([`embedding`]), a score file,
//! or an external quality-estimation process, keep pairs scoring at or above a
//! threshold and merge them with trusted data ([`filtering`]), optionally add
//! high-probability phrase pairs ([`ppi`]), and compare scorers against each
//! other or human judgments ([`metrics`]).

pub mod corpus;
pub mod embedding;
mod error;
pub mod filtering;
mod lines;
pub mod metrics;
pub mod ppi;
pub mod report;
pub mod scoring;

pub use error::{Error, ErrorClass, Result};
