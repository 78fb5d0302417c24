use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, Result};

/// A sentiment-labelled constituency tree in the SST bracketed format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentTree {
    pub label: u8,
    pub children: Vec<SentTree>,
    /// Present exactly on leaves.
    pub token: Option<String>,
}

impl SentTree {
    pub fn leaf(label: u8, token: impl Into<String>) -> Self {
        Self {
            label,
            children: Vec::new(),
            token: Some(token.into()),
        }
    }

    pub fn node(label: u8, children: Vec<SentTree>) -> Self {
        Self {
            label,
            children,
            token: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.token.is_some()
    }

    /// Leaf tokens, left to right.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_tokens(out)),
        }
    }

    /// Pre-order traversal of every node, root first.
    pub fn nodes(&self) -> Vec<&SentTree> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.nodes());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(SentTree::node_count).sum::<usize>()
    }
}

impl fmt::Display for SentTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.label)?;
        match &self.token {
            Some(t) => write!(f, " {t}")?,
            None => {
                for c in &self.children {
                    write!(f, " {c}")?;
                }
            }
        }
        write!(f, ")")
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> DataError {
        DataError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        // slicing at ASCII delimiters keeps UTF-8 boundaries intact
        std::str::from_utf8(&self.src[start..self.pos]).expect("input is a str")
    }

    fn node(&mut self) -> Result<SentTree> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => self.pos += 1,
            Some(_) => return Err(self.error("expected '('")),
            None => return Err(self.error("unexpected end of input")),
        }
        self.skip_ws();
        let label_at = self.pos;
        let label_text = self.atom();
        if label_text.is_empty() {
            return Err(match self.peek() {
                None => self.error("unexpected end of input"),
                Some(_) => self.error("empty node"),
            });
        }
        let label: u8 = label_text.parse().map_err(|_| DataError::Parse {
            offset: label_at,
            message: format!("label {label_text:?} is not an integer"),
        })?;
        if label > 4 {
            return Err(DataError::Parse {
                offset: label_at,
                message: format!("label {label} outside 0..=4"),
            });
        }
        self.skip_ws();
        let tree = match self.peek() {
            None => return Err(self.error("unexpected end of input")),
            Some(b')') => return Err(self.error("empty node")),
            Some(b'(') => {
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b'(') => children.push(self.node()?),
                        Some(b')') | None => break,
                        Some(_) => return Err(self.error("token mixed with child nodes")),
                    }
                }
                SentTree::node(label, children)
            }
            Some(_) => SentTree::leaf(label, self.atom()),
        };
        self.skip_ws();
        match self.peek() {
            Some(b')') => {
                self.pos += 1;
                Ok(tree)
            }
            None => Err(self.error("unexpected end of input")),
            Some(_) => Err(self.error("expected ')'")),
        }
    }
}

/// Parses one bracketed tree such as `(3 (2 Good) (2 movie))`.
pub fn parse_ptb_line(line: &str) -> Result<SentTree> {
    let mut p = Parser {
        src: line.as_bytes(),
        pos: 0,
    };
    let tree = p.node()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input after tree"));
    }
    Ok(tree)
}

/// Reads a treebank file with one tree per line; blank lines are skipped.
pub fn read_treebank(path: impl AsRef<Path>) -> Result<Vec<SentTree>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_ptb_line(l).map_err(|e| DataError::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_treebank(path: impl AsRef<Path>, trees: &[SentTree]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for t in trees {
        writeln!(buf, "{t}").expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_leaf_tree() {
        let t = parse_ptb_line("(3 (2 Good) (2 movie))").unwrap();
        assert_eq!(t.label, 3);
        assert_eq!(t.tokens(), vec!["Good", "movie"]);
        assert_eq!(t.node_count(), 3);
    }

    #[test]
    fn single_leaf() {
        let t = parse_ptb_line("(4 fine)").unwrap();
        assert_eq!(t, SentTree::leaf(4, "fine"));
    }

    #[test]
    fn unbalanced_reports_end_offset() {
        let line = "(3 (2 Good)";
        match parse_ptb_line(line) {
            Err(DataError::Parse { offset, .. }) => assert_eq!(offset, line.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["", "()", "(3)", "(x good)", "(7 good)", "(3 (2 a)) extra", "(3 a (2 b))", "3 good"] {
            assert!(
                matches!(parse_ptb_line(bad), Err(DataError::Parse { .. })),
                "{bad:?} should fail"
            );
        }
    }

    #[test]
    fn label_error_points_at_label() {
        match parse_ptb_line("(2 (x a))") {
            Err(DataError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn serializes_canonically() {
        let line = "(3  (2 Good)\t(2 (2 the) (3 movie)) )";
        let t = parse_ptb_line(line).unwrap();
        assert_eq!(t.to_string(), "(3 (2 Good) (2 (2 the) (3 movie)))");
        assert_eq!(parse_ptb_line(&t.to_string()).unwrap(), t);
    }

    #[test]
    fn non_ascii_tokens() {
        let t = parse_ptb_line("(3 (2 café) (4 naïve))").unwrap();
        assert_eq!(t.tokens(), vec!["café", "naïve"]);
    }
}
