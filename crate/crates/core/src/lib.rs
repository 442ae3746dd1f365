//! Classification of Malayalam and Tamil social-media comments into
//! Homophobic / Transphobic / Non-anti-LGBT+content.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: loading, validating and splitting labeled TSV datasets
//! - [`textprep`]: the comment cleaning rules applied before any tokenization
//! - [`featurize`]: vocabulary, padding and word-vector matrices for the CNN/LSTM path
//! - [`models`]: the CNN, LSTM and transformer fine-tuning classifiers
//! - [`trainer`]: Adam + categorical cross-entropy training loop
//! - [`metrics`]: confusion matrices, per-class P/R/F1 and weighted F1 reports

pub mod artifact;
pub mod corpus;
pub mod featurize;
pub mod metrics;
pub mod models;
pub mod textprep;
pub mod trainer;

pub use corpus::{CategoryLabel, CommentRecord, DatasetSplit, Language};
pub use textprep::{clean_text, CleanText};
