use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{DataError, Result};

pub const UNK: usize = 0;
pub const PAD: usize = 1;

const UNK_TOKEN: &str = "<unk>";
const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            min_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false: the special tokens are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or [`UNK`].
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.lookup(t)).collect()
    }

    /// Stable fingerprint of the token list, stored in checkpoints.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    /// One token per line, in index order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_owned).collect();
        if tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN) || tokens.get(PAD).map(String::as_str) != Some(PAD_TOKEN) {
            return Err(DataError::Format {
                path: path.display().to_string(),
                line: 1,
                message: "vocabulary must start with <unk> and <pad>".into(),
            });
        }
        Ok(Self::from_tokens(tokens, 1))
    }
}

/// Tokens seen at least `min_freq` times get an index, sorted
/// lexicographically after the two specials.
pub fn build_vocab<I, S, T>(sequences: I, min_freq: usize) -> Vocab
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let min_freq = min_freq.max(1);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seq in sequences {
        for tok in seq {
            *counts.entry(tok.as_ref().to_owned()).or_default() += 1;
        }
    }
    let mut tokens = vec![UNK_TOKEN.to_owned(), PAD_TOKEN.to_owned()];
    tokens.extend(
        counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && t != UNK_TOKEN && t != PAD_TOKEN)
            .map(|(t, _)| t),
    );
    Vocab::from_tokens(tokens, min_freq)
}
