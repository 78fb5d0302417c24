use std::collections::{BTreeMap, HashSet};

use crate::nn::Rng;

use super::{binarize, extract_subtrees, DataError, Example, Result, SentTree, Vocab};

/// Share of training sentences used to fit the classifiers before the
/// decision network sees the rest.
pub const MODEL_TRAIN_FRACTION: f64 = 0.8;

const MIN_TRAIN_SENTENCES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub model_train: Vec<Example>,
    pub decision_train: Vec<Example>,
    pub full_train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
    /// Indices into the training trees, per side of the 80/20 partition.
    pub model_train_sentences: Vec<usize>,
    pub decision_train_sentences: Vec<usize>,
}

/// Roots followed by their subtrees; a subtree already present in the
/// split (as root or subtree) is skipped.
fn training_examples<'a>(trees: impl IntoIterator<Item = &'a SentTree>, vocab: &Vocab) -> Vec<Example> {
    let mut seen: HashSet<(Vec<usize>, usize)> = HashSet::new();
    let mut out = Vec::new();
    for tree in trees {
        for ex in extract_subtrees(tree, vocab) {
            let key = (ex.tokens.clone(), ex.label);
            if !ex.is_subtree {
                seen.insert(key);
                out.push(ex);
            } else if seen.insert(key) {
                out.push(ex);
            }
        }
    }
    out
}

fn sentence_examples(trees: &[SentTree], vocab: &Vocab) -> Vec<Example> {
    trees.iter().filter_map(|t| binarize(t, vocab)).collect()
}

/// Sentence-level 80/20 partition of `train`. Identical sentences stay on
/// the same side, and every subtree follows its sentence. Valid and test
/// keep full sentences only.
pub fn make_splits(
    train: &[SentTree],
    valid: &[SentTree],
    test: &[SentTree],
    seed: u64,
    vocab: &Vocab,
) -> Result<DataSplits> {
    if train.len() < MIN_TRAIN_SENTENCES {
        return Err(DataError::Config(format!(
            "need at least {MIN_TRAIN_SENTENCES} training sentences, got {}",
            train.len()
        )));
    }
    let mut groups: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
    for (i, t) in train.iter().enumerate() {
        groups.entry(t.tokens()).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    // BTreeMap order depends on content only; shuffle by seed
    groups.sort_by_key(|g| g[0]);
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut groups);

    let target = (MODEL_TRAIN_FRACTION * train.len() as f64).round() as usize;
    let mut model = Vec::new();
    let mut decision = Vec::new();
    for g in groups {
        if model.len() + g.len() <= target {
            model.extend(g);
        } else {
            decision.extend(g);
        }
    }
    model.sort_unstable();
    decision.sort_unstable();

    let model_train = training_examples(model.iter().map(|&i| &train[i]), vocab);
    let decision_train = training_examples(decision.iter().map(|&i| &train[i]), vocab);
    let full_train = training_examples(train.iter(), vocab);
    Ok(DataSplits {
        model_train,
        decision_train,
        full_train,
        valid: sentence_examples(valid, vocab),
        test: sentence_examples(test, vocab),
        model_train_sentences: model,
        decision_train_sentences: decision,
    })
}
