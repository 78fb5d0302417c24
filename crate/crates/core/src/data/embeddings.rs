use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::nn::{Parameter, Rng, Tensor};

use super::{DataError, Result, Vocab, PAD, UNK};

/// Standard deviation for rows that have no pretrained vector.
pub const MISSING_VECTOR_STD: f64 = 0.1;

/// `|V| × dim` word-vector matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Parameter,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn new(matrix: Tensor, trainable: bool) -> Self {
        Self {
            weights: Parameter::new("embeddings", matrix),
            trainable,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.value.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.value.rows()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.weights.value.row(index)
    }

    pub fn with_trainable(mut self, trainable: bool) -> Self {
        self.trainable = trainable;
        self
    }
}

fn initial_matrix(vocab: &Vocab, dim: usize, rng: &mut Rng) -> Vec<f64> {
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for i in 0..vocab.len() {
        if i == UNK || i == PAD {
            data.extend(std::iter::repeat_n(0.0, dim));
        } else {
            data.extend((0..dim).map(|_| rng.normal(0.0, MISSING_VECTOR_STD)));
        }
    }
    data
}

/// Table with every non-special row drawn from `N(0, 0.1²)`.
pub fn random_embeddings(vocab: &Vocab, dim: usize, rng: &mut Rng) -> EmbeddingTable {
    let data = initial_matrix(vocab, dim, rng);
    EmbeddingTable::new(Tensor::new(vec![vocab.len(), dim], data).expect("shape"), true)
}

/// Reads `token v1 … v_dim` lines. In-vocabulary rows are copied from the
/// source, the rest keep their random initialization, UNK and PAD stay zero.
pub fn read_word_vectors<R: BufRead>(
    reader: R,
    source: &str,
    vocab: &Vocab,
    dim: usize,
    rng: &mut Rng,
) -> Result<EmbeddingTable> {
    let mut data = initial_matrix(vocab, dim, rng);
    let format_err = |line: usize, message: String| DataError::Format {
        path: source.to_owned(),
        line,
        message,
    };
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::io(source, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| format_err(n + 1, format!("bad number {f:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(format_err(n + 1, format!("expected {dim} values, found {}", values.len())));
        }
        if let Some(row) = vocab.get(token) {
            if row != UNK && row != PAD {
                data[row * dim..(row + 1) * dim].copy_from_slice(&values);
            }
        }
    }
    Ok(EmbeddingTable::new(
        Tensor::new(vec![vocab.len(), dim], data).expect("shape"),
        true,
    ))
}

pub fn load_word_vectors(path: impl AsRef<Path>, vocab: &Vocab, dim: usize, rng: &mut Rng) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_word_vectors(BufReader::new(file), &path.display().to_string(), vocab, dim, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_vocab;

    #[test]
    fn copies_in_vocab_rows() {
        let vocab = build_vocab(vec![vec!["good", "bad"]], 1);
        let table = read_word_vectors("good 0.1 0.2\nother 1 1\n".as_bytes(), "mem", &vocab, 2, &mut Rng::new(0)).unwrap();
        assert_eq!(table.row(vocab.lookup("good")), &[0.1, 0.2]);
        assert_eq!(table.row(UNK), &[0.0, 0.0]);
        assert_eq!(table.row(PAD), &[0.0, 0.0]);
        assert_ne!(table.row(vocab.lookup("bad")), &[0.0, 0.0]);
    }

    #[test]
    fn wrong_width_reports_line() {
        let vocab = build_vocab(vec![vec!["good"]], 1);
        let err = read_word_vectors("x 1 2\ngood 0.1\n".as_bytes(), "mem", &vocab, 2, &mut Rng::new(0)).unwrap_err();
        match err {
            DataError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let vocab = build_vocab(vec![vec!["a"]], 1);
        let err = load_word_vectors("/nonexistent/vectors.txt", &vocab, 2, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn missing_rows_are_centered() {
        let words: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
        let vocab = build_vocab(vec![words.iter().map(String::as_str).collect::<Vec<_>>()], 1);
        let dim = 4;
        let table = read_word_vectors("".as_bytes(), "mem", &vocab, dim, &mut Rng::new(17)).unwrap();
        let values: Vec<f64> = (2..vocab.len()).flat_map(|r| table.row(r).to_vec()).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let bound = 3.0 * MISSING_VECTOR_STD / ((1000 * dim) as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
    }
}
