use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{SentTree, Vocab};

/// One classification instance of the binary task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    /// 0 negative, 1 positive.
    pub label: usize,
    pub is_subtree: bool,
}

/// `{0,1} → 0`, `{3,4} → 1`, neutral `2 → None`.
pub fn binarize_label(label: u8) -> Option<usize> {
    match label {
        0 | 1 => Some(0),
        3 | 4 => Some(1),
        _ => None,
    }
}

/// The whole sentence as one example; neutral roots are dropped.
pub fn binarize(tree: &SentTree, vocab: &Vocab) -> Option<Example> {
    let label = binarize_label(tree.label)?;
    let tokens = vocab.encode(tree.tokens());
    if tokens.is_empty() {
        return None;
    }
    Some(Example {
        tokens,
        label,
        is_subtree: false,
    })
}

/// Every non-neutral node as an example, root first, duplicates by
/// `(tokens, label)` removed.
pub fn extract_subtrees(tree: &SentTree, vocab: &Vocab) -> Vec<Example> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, node) in tree.nodes().into_iter().enumerate() {
        let Some(mut ex) = binarize(node, vocab) else { continue };
        ex.is_subtree = i > 0;
        if seen.insert((ex.tokens.clone(), ex.label)) {
            out.push(ex);
        }
    }
    out
}
