//! Synthetic sentiment corpus with a controllable share of contrastive
//! sentences.
//!
//! Plain sentences are labelled by the sign of their summed word polarity,
//! so any order-free model can solve them. Contrastive sentences have the
//! shape `A but B` where the clauses carry opposite polarity and the gold
//! label follows `B`. They are emitted in mirrored pairs (`A but B`,
//! `B but A`), so the two members share a token multiset but not a label.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::Rng;

use super::{write_treebank, DataError, Result, SentTree};

pub const PIVOT_TOKEN: &str = "but";

const NEUTRAL_WORD_RATE: f64 = 0.25;
const STRONG_LEAF_RATE: f64 = 0.3;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Total sentences across train, dev, and test (80/10/10).
    pub n_sentences: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub contrast_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_sentences: 2000,
            vocab_size: 40,
            max_len: 10,
            contrast_rate: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<SentTree>,
    pub valid: Vec<SentTree>,
    pub test: Vec<SentTree>,
}

impl SyntheticCorpus {
    /// Writes `train.txt`, `dev.txt`, and `test.txt`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        write_treebank(dir.join("train.txt"), &self.train)?;
        write_treebank(dir.join("dev.txt"), &self.valid)?;
        write_treebank(dir.join("test.txt"), &self.test)
    }
}

struct Lexicon {
    positive: Vec<String>,
    negative: Vec<String>,
    neutral: Vec<String>,
}

impl Lexicon {
    fn new(vocab_size: usize) -> Self {
        let words = vocab_size - 1;
        let polar = words * 2 / 5;
        let neutral = words - 2 * polar;
        Self {
            positive: (0..polar).map(|i| format!("pos{i}")).collect(),
            negative: (0..polar).map(|i| format!("neg{i}")).collect(),
            neutral: (0..neutral).map(|i| format!("neu{i}")).collect(),
        }
    }
}

/// A word with its polarity in {-1, 0, +1}.
type Word = (String, i32);

fn clause(lex: &Lexicon, len: usize, polarity: i32, rng: &mut Rng) -> Vec<Word> {
    loop {
        let words: Vec<Word> = (0..len)
            .map(|_| {
                if rng.bernoulli(NEUTRAL_WORD_RATE) {
                    (lex.neutral[rng.below(lex.neutral.len())].clone(), 0)
                } else if rng.bernoulli(0.5) {
                    (lex.positive[rng.below(lex.positive.len())].clone(), 1)
                } else {
                    (lex.negative[rng.below(lex.negative.len())].clone(), -1)
                }
            })
            .collect();
        let sum: i32 = words.iter().map(|w| w.1).sum();
        if sum * polarity > 0 {
            return words;
        }
    }
}

fn span_label(sum: i32) -> u8 {
    match sum {
        s if s >= 3 => 4,
        s if s > 0 => 3,
        0 => 2,
        s if s > -3 => 1,
        _ => 0,
    }
}

fn leaf(word: &Word, rng: &mut Rng) -> SentTree {
    let strong = rng.bernoulli(STRONG_LEAF_RATE);
    let label = match word.1 {
        1 if strong => 4,
        1 => 3,
        -1 if strong => 0,
        -1 => 1,
        _ => 2,
    };
    SentTree::leaf(label, word.0.clone())
}

/// Right-branching tree over a clause; each span is labelled by its
/// polarity sum.
fn clause_tree(words: &[Word], rng: &mut Rng) -> SentTree {
    if words.len() == 1 {
        return leaf(&words[0], rng);
    }
    let head = leaf(&words[0], rng);
    let rest = clause_tree(&words[1..], rng);
    let sum = words.iter().map(|w| w.1).sum();
    SentTree::node(span_label(sum), vec![head, rest])
}

fn contrastive_tree(first: &[Word], second: &[Word], rng: &mut Rng) -> SentTree {
    let polarity: i32 = second.iter().map(|w| w.1).sum::<i32>().signum();
    let label = if polarity > 0 { 3 } else { 1 };
    let tail = SentTree::node(
        label,
        vec![SentTree::leaf(2, PIVOT_TOKEN), clause_tree(second, rng)],
    );
    SentTree::node(label, vec![clause_tree(first, rng), tail])
}

fn key(tree: &SentTree) -> Vec<String> {
    tree.tokens().into_iter().map(str::to_owned).collect()
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.vocab_size < 8 {
        return Err(DataError::Config(format!("vocab_size must be at least 8, got {}", config.vocab_size)));
    }
    if config.max_len < 5 {
        return Err(DataError::Config(format!("max_len must be at least 5, got {}", config.max_len)));
    }
    if !(0.0..=1.0).contains(&config.contrast_rate) {
        return Err(DataError::Config(format!("contrast_rate {} not in [0, 1]", config.contrast_rate)));
    }
    if config.n_sentences < 10 {
        return Err(DataError::Config(format!("n_sentences must be at least 10, got {}", config.n_sentences)));
    }
    let lex = Lexicon::new(config.vocab_size);
    let mut rng = Rng::new(config.seed);
    let n = config.n_sentences;
    let pairs = ((config.contrast_rate * n as f64) / 2.0).round() as usize;
    let plain = n - 2 * pairs;
    let clause_max = ((config.max_len - 1) / 2).max(2);

    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut trees = Vec::with_capacity(n);
    let exhausted = || DataError::Config("vocabulary too small to emit enough distinct sentences".into());

    for _ in 0..plain {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(exhausted());
            }
            let polarity = if rng.bernoulli(0.5) { 1 } else { -1 };
            let len = rng.between(2, config.max_len);
            let words = clause(&lex, len, polarity, &mut rng);
            let tree = clause_tree(&words, &mut rng);
            if seen.insert(key(&tree)) {
                trees.push(tree);
                break;
            }
        }
    }
    for _ in 0..pairs {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(exhausted());
            }
            let polarity = if rng.bernoulli(0.5) { 1 } else { -1 };
            let a = clause(&lex, rng.between(2, clause_max), -polarity, &mut rng);
            let b = clause(&lex, rng.between(2, clause_max), polarity, &mut rng);
            let ab = contrastive_tree(&a, &b, &mut rng);
            let ba = contrastive_tree(&b, &a, &mut rng);
            let (ka, kb) = (key(&ab), key(&ba));
            if !seen.contains(&ka) && !seen.contains(&kb) {
                seen.insert(ka);
                seen.insert(kb);
                trees.push(ab);
                trees.push(ba);
                break;
            }
        }
    }
    rng.shuffle(&mut trees);

    let held_out = n / 10;
    let test = trees.split_off(n - held_out);
    let valid = trees.split_off(n - 2 * held_out);
    Ok(SyntheticCorpus {
        train: trees,
        valid,
        test,
    })
}
