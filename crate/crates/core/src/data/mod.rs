//! Entailment samples, the two synthetic generators and file loaders.

mod generate;
mod load;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use generate::{gen_adjnoun, gen_numbers, AdjNounConfig, NumbersConfig};
pub use load::{load_dataset, write_samples, DataFormat, LoadedFile};
pub use vocab::{build_vocab, normalize_token, Vocab, NORMALIZATION, UNK, UNK_ID};

use crate::error::{Error, Result};
use crate::treeparse::{ParseTree, Token, TraversalArrays};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    /// Class index for a `classes`-way task. Binary: entailment = 0, everything
    /// else = 1. Three-way: entailment, neutral, contradiction = 0, 1, 2.
    pub fn class_index(self, classes: usize) -> usize {
        match (classes, self) {
            (_, Label::Entailment) => 0,
            (2, _) => 1,
            (_, Label::Neutral) => 1,
            (_, Label::Contradiction) => 2,
        }
    }

    pub fn is_entailment(self) -> bool {
        self == Label::Entailment
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }

    /// Parses a gold label; `"-"` (no annotator consensus) yields `None`.
    pub fn parse_gold(s: &str) -> std::result::Result<Option<Label>, String> {
        match s {
            "-" => Ok(None),
            other => other.parse().map(Some),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "entailment" => Ok(Label::Entailment),
            "neutral" => Ok(Label::Neutral),
            "contradiction" => Ok(Label::Contradiction),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A sentence as read from disk or generated, before vocabulary lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawSentence {
    Tree(ParseTree),
    Tokens(Vec<String>),
}

impl RawSentence {
    pub fn tokens(&self) -> Vec<&str> {
        match self {
            RawSentence::Tree(t) => t.leaves().into_iter().map(|t| t.text.as_str()).collect(),
            RawSentence::Tokens(ts) => ts.iter().map(String::as_str).collect(),
        }
    }

    pub fn text(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn encode(&self, vocab: &Vocab) -> Sentence {
        match self {
            RawSentence::Tree(t) => {
                let mut tree = t.clone();
                tree.assign_ids(vocab);
                let arrays = tree.post_order_arrays();
                Sentence {
                    ids: arrays.leaf_ids(),
                    arrays: Some(arrays),
                }
            }
            RawSentence::Tokens(ts) => Sentence {
                ids: ts.iter().map(|t| vocab.id(t)).collect(),
                arrays: None,
            },
        }
    }

    /// SNLI-style parse string; token sequences render left-branching.
    pub fn to_sexpr(&self) -> String {
        match self {
            RawSentence::Tree(t) => t.to_sexpr(),
            RawSentence::Tokens(ts) => {
                let toks: Vec<Token> = ts.iter().map(|t| Token { text: t.clone(), id: 0 }).collect();
                ParseTree::left_branching(&toks)
                    .map(|t| t.to_sexpr())
                    .unwrap_or_default()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSample {
    pub premise: RawSentence,
    pub hypothesis: RawSentence,
    pub label: Label,
}

impl RawSample {
    pub fn key(&self) -> (String, String) {
        (self.premise.text(), self.hypothesis.text())
    }

    pub fn encode(&self, vocab: &Vocab) -> Sample {
        Sample {
            premise: self.premise.encode(vocab),
            hypothesis: self.hypothesis.encode(vocab),
            label: self.label,
        }
    }
}

/// Vocabulary-encoded sentence: leaf ids in order plus the post-order tree
/// arrays when a parse is available.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub ids: Vec<usize>,
    pub arrays: Option<TraversalArrays>,
}

impl Sentence {
    pub fn from_ids(ids: Vec<usize>) -> Self {
        Self { ids, arrays: None }
    }

    pub fn with_tree(arrays: TraversalArrays) -> Self {
        Self {
            ids: arrays.leaf_ids(),
            arrays: Some(arrays),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub premise: Sentence,
    pub hypothesis: Sentence,
    pub label: Label,
}

/// Train/validation/test samples with the vocabulary built from training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<RawSample>,
    pub validation: Vec<RawSample>,
    pub test: Vec<RawSample>,
    pub vocab: Vocab,
}

impl DatasetSplit {
    pub fn new(train: Vec<RawSample>, validation: Vec<RawSample>, test: Vec<RawSample>) -> Self {
        let vocab = build_vocab(
            train
                .iter()
                .map(|s| s.premise.tokens().into_iter().chain(s.hypothesis.tokens())),
        );
        Self {
            train,
            validation,
            test,
            vocab,
        }
    }

    /// Builds a split from separately loaded files. Without a validation file,
    /// `val_fraction` of the (seed-shuffled) training samples is held out.
    pub fn from_parts(
        mut train: Vec<RawSample>,
        validation: Option<Vec<RawSample>>,
        test: Vec<RawSample>,
        val_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 1), got {val_fraction}"
            )));
        }
        let validation = match validation {
            Some(v) => v,
            None if val_fraction > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                train.shuffle(&mut rng);
                let n_val = ((train.len() as f64) * val_fraction).round() as usize;
                train.split_off(train.len() - n_val)
            }
            None => Vec::new(),
        };
        Ok(Self::new(train, validation, test))
    }

    pub fn encode(samples: &[RawSample], vocab: &Vocab) -> Vec<Sample> {
        samples.iter().map(|s| s.encode(vocab)).collect()
    }
}
