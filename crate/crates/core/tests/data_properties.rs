use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use skimread::data::{
    binarize, binarize_label, build_vocab, extract_subtrees, generate_synthetic, make_splits, parse_ptb_line,
    SentTree, SyntheticConfig, Vocab,
};

fn arb_tree() -> impl Strategy<Value = SentTree> {
    let leaf = (0u8..5, "[a-z]{1,6}").prop_map(|(l, t)| SentTree::leaf(l, t));
    leaf.prop_recursive(4, 24, 3, |inner| {
        (0u8..5, prop::collection::vec(inner, 1..4)).prop_map(|(l, c)| SentTree::node(l, c))
    })
}

fn vocab_for(trees: &[SentTree]) -> Vocab {
    build_vocab(trees.iter().map(|t| t.tokens()), 1)
}

proptest! {
    #[test]
    fn parser_round_trip(tree in arb_tree()) {
        let line = tree.to_string();
        let back = parse_ptb_line(&line).unwrap();
        prop_assert_eq!(&back, &tree);
        prop_assert_eq!(back.to_string(), line);
    }

    #[test]
    fn whitespace_does_not_matter(tree in arb_tree()) {
        let spaced = tree.to_string().replace(' ', "  \t ").replace('(', " ( ").replace(')', " ) ");
        prop_assert_eq!(parse_ptb_line(&spaced).unwrap(), tree);
    }

    #[test]
    fn binarization_drops_neutral(tree in arb_tree()) {
        let vocab = vocab_for(std::slice::from_ref(&tree));
        let subtrees = extract_subtrees(&tree, &vocab);
        prop_assert!(subtrees.len() <= tree.node_count());
        for ex in &subtrees {
            prop_assert!(ex.label <= 1);
            prop_assert!(!ex.tokens.is_empty());
        }
        match binarize(&tree, &vocab) {
            Some(ex) => prop_assert_eq!(Some(ex.label), binarize_label(tree.label)),
            None => prop_assert_eq!(tree.label, 2),
        }
    }

    #[test]
    fn subtrees_match_enumeration(tree in arb_tree()) {
        let vocab = vocab_for(std::slice::from_ref(&tree));
        let mut expected: HashSet<(Vec<usize>, usize)> = HashSet::new();
        for node in tree.nodes() {
            if let Some(label) = binarize_label(node.label) {
                expected.insert((vocab.encode(node.tokens()), label));
            }
        }
        let got: HashSet<_> = extract_subtrees(&tree, &vocab).into_iter().map(|e| (e.tokens, e.label)).collect();
        prop_assert_eq!(got, expected);
    }
}

fn synthetic(contrast_rate: f64, seed: u64) -> skimread::data::SyntheticCorpus {
    generate_synthetic(&SyntheticConfig {
        n_sentences: 1000,
        contrast_rate,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn all_trees(c: &skimread::data::SyntheticCorpus) -> Vec<&SentTree> {
    c.train.iter().chain(&c.valid).chain(&c.test).collect()
}

#[test]
fn plain_corpus_is_solved_by_counting_words() {
    for seed in 0..5 {
        let corpus = synthetic(0.0, seed);
        for tree in all_trees(&corpus) {
            let score: i32 = tree
                .tokens()
                .iter()
                .map(|t| match t {
                    t if t.starts_with("pos") => 1,
                    t if t.starts_with("neg") => -1,
                    _ => 0,
                })
                .sum();
            assert_eq!(binarize_label(tree.label), Some(usize::from(score > 0)), "{tree}");
        }
    }
}

#[test]
fn contrastive_corpus_has_multiset_collisions() {
    let corpus = synthetic(0.5, 3);
    let mut by_bag: HashMap<Vec<String>, HashSet<u8>> = HashMap::new();
    for tree in all_trees(&corpus) {
        let mut bag: Vec<String> = tree.tokens().into_iter().map(String::from).collect();
        bag.sort();
        by_bag.entry(bag).or_default().insert(tree.label);
    }
    let collisions = by_bag.values().filter(|labels| labels.len() > 1).count();
    assert!(collisions > 0);
}

#[test]
fn labels_are_balanced() {
    for (rate, seed) in [(0.0, 1), (0.5, 2), (1.0, 3)] {
        let corpus = synthetic(rate, seed);
        let trees = all_trees(&corpus);
        let positive = trees.iter().filter(|t| binarize_label(t.label) == Some(1)).count();
        let share = positive as f64 / trees.len() as f64;
        assert!((share - 0.5).abs() < 0.05, "rate {rate}: {share}");
    }
}

#[test]
fn generator_files_are_reproducible() {
    let config = SyntheticConfig {
        n_sentences: 300,
        seed: 11,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic(&config).unwrap().write_to_dir(a.path()).unwrap();
    generate_synthetic(&config).unwrap().write_to_dir(b.path()).unwrap();
    for name in ["train.txt", "dev.txt", "test.txt"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn splits_are_leakage_free() {
    let corpus = synthetic(0.5, 4);
    let vocab = vocab_for(&corpus.train);
    for seed in 0..5 {
        let s = make_splits(&corpus.train, &corpus.valid, &corpus.test, seed, &vocab).unwrap();
        let model: HashSet<usize> = s.model_train_sentences.iter().copied().collect();
        let decision: HashSet<usize> = s.decision_train_sentences.iter().copied().collect();
        assert!(model.is_disjoint(&decision));
        assert_eq!(model.len() + decision.len(), corpus.train.len());
        let target = 0.8 * corpus.train.len() as f64;
        assert!((model.len() as f64 - target).abs() <= 1.0);

        let roots = |side: &[skimread::data::Example]| -> HashSet<Vec<usize>> {
            side.iter().filter(|e| !e.is_subtree).map(|e| e.tokens.clone()).collect()
        };
        assert!(roots(&s.model_train).is_disjoint(&roots(&s.decision_train)));
    }
}
