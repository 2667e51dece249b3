//! Tree ensemble for sentiment, with a line-oriented text format.
//!
//! ```text
//! # comment
//! labels negative neutral positive
//! features 16
//! tree
//! 0 split 14 0.05 1 2          # id split <feature> <threshold> <left> <right>
//! 1 leaf 3 1 0                 # id leaf <one vote count per label>
//! 2 leaf 0 1 4
//! tree
//! ...
//! ```
//!
//! A sample goes left when `x[feature] <= threshold`. Node 0 is the root;
//! children must have larger ids than their parent, so trees are acyclic.
//! Each tree votes for the label with the largest leaf count (lowest label
//! index on ties) and the ensemble takes the majority, again breaking ties
//! toward the lower label index.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub const LABELS: [&str; 3] = ["negative", "neutral", "positive"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("expected {expected} features, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { votes: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Label index chosen by this tree.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { votes } => return argmax_low(votes),
            }
        }
    }
}

fn argmax_low(votes: &[u32]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub labels: Vec<String>,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub index: usize,
    /// Fraction of trees voting for each label, in label order.
    pub votes: Vec<f64>,
}

impl TreeEnsemble {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |s: String| Err(ModelError::Invalid(s));
        if self.trees.is_empty() {
            return bad("ensemble has no trees".into());
        }
        if self.labels.is_empty() {
            return bad("no labels".into());
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return bad(format!("tree {t} is empty"));
            }
            let mut reached = vec![false; tree.nodes.len()];
            reached[0] = true;
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Split { feature, threshold, left, right } => {
                        if *feature >= self.n_features {
                            return bad(format!("tree {t} node {i}: feature {feature} out of range"));
                        }
                        if !threshold.is_finite() {
                            return bad(format!("tree {t} node {i}: threshold is not finite"));
                        }
                        for &c in [left, right] {
                            if c <= i || c >= tree.nodes.len() {
                                return bad(format!("tree {t} node {i}: bad child {c}"));
                            }
                            reached[c] = true;
                        }
                    }
                    TreeNode::Leaf { votes } => {
                        if votes.len() != self.labels.len() {
                            return bad(format!("tree {t} node {i}: {} votes for {} labels", votes.len(), self.labels.len()));
                        }
                    }
                }
            }
            if let Some(i) = reached.iter().position(|r| !r) {
                return bad(format!("tree {t} node {i} is unreachable"));
            }
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        self.validate()?;
        if x.len() != self.n_features {
            return Err(ModelError::Arity { expected: self.n_features, found: x.len() });
        }
        let mut counts = vec![0u32; self.labels.len()];
        for tree in &self.trees {
            counts[tree.predict(x)] += 1;
        }
        let index = argmax_low(&counts);
        let n = self.trees.len() as f64;
        Ok(Prediction {
            label: self.labels[index].clone(),
            index,
            votes: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut labels = None;
        let mut n_features = None;
        let mut trees: Vec<Tree> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let err = |reason: String| ModelError::Parse { line, reason };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            match words[0] {
                "labels" => labels = Some(words[1..].iter().map(|s| s.to_string()).collect::<Vec<_>>()),
                "features" => {
                    let n = words.get(1).and_then(|w| w.parse().ok()).ok_or_else(|| err("bad feature count".into()))?;
                    n_features = Some(n);
                }
                "tree" => trees.push(Tree { nodes: Vec::new() }),
                id => {
                    let tree = trees.last_mut().ok_or_else(|| err("node before any `tree` line".into()))?;
                    let id: usize = id.parse().map_err(|_| err(format!("unknown directive {id:?}")))?;
                    if id != tree.nodes.len() {
                        return Err(err(format!("expected node id {}, got {id}", tree.nodes.len())));
                    }
                    let num = |i: usize| words.get(i).copied().ok_or_else(|| err("missing field".into()));
                    let node = match words.get(1).copied() {
                        Some("split") => {
                            if words.len() != 6 {
                                return Err(err("split needs feature, threshold, left, right".into()));
                            }
                            let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad index {s:?}")));
                            TreeNode::Split {
                                feature: parse_usize(num(2)?)?,
                                threshold: num(3)?.parse().map_err(|_| err("bad threshold".into()))?,
                                left: parse_usize(num(4)?)?,
                                right: parse_usize(num(5)?)?,
                            }
                        }
                        Some("leaf") => TreeNode::Leaf {
                            votes: words[2..]
                                .iter()
                                .map(|s| s.parse().map_err(|_| err(format!("bad vote count {s:?}"))))
                                .collect::<Result<_, _>>()?,
                        },
                        _ => return Err(err("expected `split` or `leaf`".into())),
                    };
                    tree.nodes.push(node);
                }
            }
        }
        let model = TreeEnsemble {
            labels: labels.ok_or_else(|| ModelError::Invalid("missing `labels` line".into()))?,
            n_features: n_features.ok_or_else(|| ModelError::Invalid("missing `features` line".into()))?,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Text form; floats are written in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut out = format!("labels {}\nfeatures {}\n", self.labels.join(" "), self.n_features);
        for tree in &self.trees {
            out.push_str("tree\n");
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Split { feature, threshold, left, right } => {
                        let _ = writeln!(out, "{i} split {feature} {threshold:?} {left} {right}");
                    }
                    TreeNode::Leaf { votes } => {
                        let v: Vec<String> = votes.iter().map(u32::to_string).collect();
                        let _ = writeln!(out, "{i} leaf {}", v.join(" "));
                    }
                }
            }
        }
        out
    }
}

/// Model shipped with the crate, trained on `assets/audio/sentiment_train.csv`.
pub fn bundled_model() -> TreeEnsemble {
    TreeEnsemble::parse(include_str!("../../assets/audio/sentiment.model")).expect("bundled model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> TreeEnsemble {
        TreeEnsemble::parse("labels negative neutral positive\nfeatures 16\ntree\n0 split 14 0.5 1 2\n1 leaf 0 1 0\n2 leaf 0 0 1\n")
            .unwrap()
    }

    #[test]
    fn stump_on_silence() {
        let p = stump().predict(&[0.0; 16]).unwrap();
        assert_eq!(p.label, "neutral");
        assert_eq!(p.votes, [0.0, 1.0, 0.0]);
        let mut loud = [0.0; 16];
        loud[14] = 0.9;
        assert_eq!(stump().predict(&loud).unwrap().label, "positive");
    }

    #[test]
    fn empty_and_broken_models() {
        assert!(matches!(TreeEnsemble::parse("labels a b\nfeatures 2\n"), Err(ModelError::Invalid(_))));
        let cyc = "labels a b\nfeatures 2\ntree\n0 split 0 1.0 0 1\n1 leaf 1 0\n";
        assert!(matches!(TreeEnsemble::parse(cyc), Err(ModelError::Invalid(_))));
        let range = "labels a b\nfeatures 2\ntree\n0 split 5 1.0 1 2\n1 leaf 1 0\n2 leaf 0 1\n";
        assert!(matches!(TreeEnsemble::parse(range), Err(ModelError::Invalid(_))));
        assert!(matches!(TreeEnsemble::parse("labels a\nfeatures 1\ntree\n0 oops\n"), Err(ModelError::Parse { line: 4, .. })));
        let m = TreeEnsemble { labels: vec!["a".into()], n_features: 1, trees: vec![] };
        assert!(matches!(m.predict(&[0.0]), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn ties_break_toward_lower_label() {
        let text = "labels negative neutral positive\nfeatures 1\ntree\n0 leaf 0 0 5\ntree\n0 leaf 2 2 0\n";
        let p = TreeEnsemble::parse(text).unwrap().predict(&[0.0]).unwrap();
        assert_eq!(p.label, "negative");
        assert_eq!(p.votes, [0.5, 0.0, 0.5]);
    }

    #[test]
    fn bundled_model_matches_frozen_labels() {
        let m = bundled_model();
        let fixtures = crate::audio::synth::bundled_fixtures();
        let expected = crate::audio::synth::bundled_expected_labels();
        assert_eq!(fixtures.len(), 30);
        for (s, want) in fixtures.iter().zip(&expected) {
            assert_eq!(m.predict(&s.features).unwrap().label, *want);
        }
    }

    #[test]
    fn text_roundtrip() {
        let m = bundled_model();
        assert_eq!(m.trees.len(), 10);
        assert_eq!(TreeEnsemble::parse(&m.to_text()).unwrap(), m);
    }
}
