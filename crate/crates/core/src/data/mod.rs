//! Treebank parsing, the binary sentiment task, vocabularies, word
//! vectors, train splits, and the synthetic corpus generator.

mod embeddings;
mod example;
mod splits;
mod synth;
mod tree;
mod vocab;

pub use embeddings::{load_word_vectors, random_embeddings, read_word_vectors, EmbeddingTable, MISSING_VECTOR_STD};
pub use example::{binarize, binarize_label, extract_subtrees, Example};
pub use splits::{make_splits, DataSplits, MODEL_TRAIN_FRACTION};
pub use synth::{generate_synthetic, SyntheticConfig, SyntheticCorpus, PIVOT_TOKEN};
pub use tree::{parse_ptb_line, read_treebank, write_treebank, SentTree};
pub use vocab::{build_vocab, Vocab, PAD, UNK};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
