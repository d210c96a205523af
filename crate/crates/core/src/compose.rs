//! Sentence representations built from word embeddings.
//!
//! | method | representation |
//! |--------|----------------|
//! | `TreeMobius` (MS) | Möbius sum along the parse tree, children before parents |
//! | `LeftChain` (LMS) | `w1 ⊕ (w2 ⊕ (... ⊕ wN))` |
//! | `RightChain` (RMS) | `((w1 ⊕ w2) ⊕ ...) ⊕ wN` |
//! | `MobiusAverage` (MA) | `(1/N) ⊗ MS`, or `(1/N) ⊗ RMS` without a tree |
//! | `EuclideanAverage` (EA) | `(1/N) Σ wi` |
//! | `EuclideanSum` (ES) | `Σ wi` |
//!
//! The chain names follow the established naming even though "left" sums
//! are right-parenthesized.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::data::Sentence;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{raw, BallPoint, CurvatureSpace};
use crate::treeparse::TraversalArrays;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompositionMethod {
    TreeMobius,
    LeftChain,
    RightChain,
    MobiusAverage,
    EuclideanAverage,
    EuclideanSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainDirection {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EuclideanMode {
    Average,
    Sum,
}

impl CompositionMethod {
    pub fn is_hyperbolic(self) -> bool {
        !matches!(
            self,
            CompositionMethod::EuclideanAverage | CompositionMethod::EuclideanSum
        )
    }

    pub fn needs_tree(self) -> bool {
        self == CompositionMethod::TreeMobius
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            CompositionMethod::TreeMobius => "MS",
            CompositionMethod::LeftChain => "LMS",
            CompositionMethod::RightChain => "RMS",
            CompositionMethod::MobiusAverage => "MA",
            CompositionMethod::EuclideanAverage => "EA",
            CompositionMethod::EuclideanSum => "ES",
        }
    }
}

impl fmt::Display for CompositionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

impl FromStr for CompositionMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "MS" => CompositionMethod::TreeMobius,
            "LMS" => CompositionMethod::LeftChain,
            "RMS" => CompositionMethod::RightChain,
            "MA" => CompositionMethod::MobiusAverage,
            "EA" => CompositionMethod::EuclideanAverage,
            "ES" => CompositionMethod::EuclideanSum,
            other => return Err(format!("unknown composition method {other:?}")),
        })
    }
}

fn word(table: &EmbeddingTable, id: usize) -> Result<&[f64]> {
    table.get(id)
}

fn check_dim(table: &EmbeddingTable, space: &CurvatureSpace) -> Result<()> {
    if table.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: table.dim(),
        });
    }
    Ok(())
}

/// Möbius summation along the post-order arrays; returns the root value.
pub fn compose_tree(arrays: &TraversalArrays, table: &EmbeddingTable, space: &CurvatureSpace) -> Result<BallPoint> {
    check_dim(table, space)?;
    arrays.validate()?;
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(arrays.len());
    for i in 0..arrays.len() {
        let v = match (arrays.word_ids[i], arrays.left[i], arrays.right[i]) {
            (Some(id), _, _) => word(table, id)?.to_vec(),
            (None, Some(l), Some(r)) => raw::mobius_add(space.c(), &values[l], &values[r]),
            _ => unreachable!("validated arrays"),
        };
        values.push(v);
    }
    Ok(space.point_unchecked(values.pop().expect("non-empty arrays")))
}

pub fn compose_chain(
    ids: &[usize],
    table: &EmbeddingTable,
    space: &CurvatureSpace,
    direction: ChainDirection,
) -> Result<BallPoint> {
    check_dim(table, space)?;
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let c = space.c();
    let acc = match direction {
        ChainDirection::Left => {
            let (&last, rest) = ids.split_last().expect("non-empty");
            let mut acc = word(table, last)?.to_vec();
            for &id in rest.iter().rev() {
                acc = raw::mobius_add(c, word(table, id)?, &acc);
            }
            acc
        }
        ChainDirection::Right => {
            let (&first, rest) = ids.split_first().expect("non-empty");
            let mut acc = word(table, first)?.to_vec();
            for &id in rest {
                acc = raw::mobius_add(c, &acc, word(table, id)?);
            }
            acc
        }
    };
    Ok(space.point_unchecked(acc))
}

/// `(1/n_tokens) ⊗ compose_tree(...)`.
pub fn compose_mobius_average(
    arrays: &TraversalArrays,
    table: &EmbeddingTable,
    space: &CurvatureSpace,
    n_tokens: usize,
) -> Result<BallPoint> {
    if n_tokens == 0 {
        return Err(Error::EmptySequence);
    }
    let sum = compose_tree(arrays, table, space)?;
    Ok(space.point_unchecked(raw::mobius_scalar_mul(space.c(), 1.0 / n_tokens as f64, &sum)))
}

pub fn compose_euclidean(ids: &[usize], table: &EmbeddingTable, mode: EuclideanMode) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut acc = vec![0.0; table.dim()];
    for &id in ids {
        for (a, x) in acc.iter_mut().zip(word(table, id)?) {
            *a += x;
        }
    }
    if mode == EuclideanMode::Average {
        let inv = 1.0 / ids.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    Ok(acc)
}

/// Representation of `sentence` under `method`.
pub fn compose(
    sentence: &Sentence,
    method: CompositionMethod,
    table: &EmbeddingTable,
    space: &CurvatureSpace,
) -> Result<Vec<f64>> {
    Ok(match method {
        CompositionMethod::TreeMobius => compose_tree(tree_of(sentence)?, table, space)?.into_vec(),
        CompositionMethod::LeftChain => compose_chain(&sentence.ids, table, space, ChainDirection::Left)?.into_vec(),
        CompositionMethod::RightChain => compose_chain(&sentence.ids, table, space, ChainDirection::Right)?.into_vec(),
        CompositionMethod::MobiusAverage => {
            let n = sentence.ids.len();
            match &sentence.arrays {
                Some(a) => compose_mobius_average(a, table, space, n)?.into_vec(),
                None => {
                    let sum = compose_chain(&sentence.ids, table, space, ChainDirection::Right)?;
                    raw::mobius_scalar_mul(space.c(), 1.0 / n as f64, &sum)
                }
            }
        }
        CompositionMethod::EuclideanAverage => compose_euclidean(&sentence.ids, table, EuclideanMode::Average)?,
        CompositionMethod::EuclideanSum => compose_euclidean(&sentence.ids, table, EuclideanMode::Sum)?,
    })
}

fn tree_of(sentence: &Sentence) -> Result<&TraversalArrays> {
    sentence
        .arrays
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("tree composition requires a parse tree".into()))
}

/// Builds the composition of `sentence` into `g` and returns the root node.
/// Intermediate node values stay cached in the graph for `backward`.
pub fn compose_graph<'p>(
    g: &mut Graph<'p>,
    sentence: &Sentence,
    method: CompositionMethod,
    table: &EmbeddingTable,
    space: &CurvatureSpace,
) -> Result<NodeId> {
    check_dim(table, space)?;
    let c = space.c();
    if sentence.ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let leaves =
        |g: &mut Graph<'p>| -> Result<Vec<NodeId>> { sentence.ids.iter().map(|&id| g.word(id, table)).collect() };
    match method {
        CompositionMethod::TreeMobius => tree_graph(g, tree_of(sentence)?, table, c),
        CompositionMethod::LeftChain => {
            let ws = leaves(g)?;
            let (&last, rest) = ws.split_last().expect("non-empty");
            rest.iter().rev().try_fold(last, |acc, &w| g.mobius_add(w, acc, c))
        }
        CompositionMethod::RightChain => {
            let ws = leaves(g)?;
            right_chain_graph(g, &ws, c)
        }
        CompositionMethod::MobiusAverage => {
            let sum = match &sentence.arrays {
                Some(a) => tree_graph(g, a, table, c)?,
                None => {
                    let ws = leaves(g)?;
                    right_chain_graph(g, &ws, c)?
                }
            };
            Ok(g.mobius_scale(sum, 1.0 / sentence.ids.len() as f64, c))
        }
        CompositionMethod::EuclideanSum => {
            let ws = leaves(g)?;
            g.sum(&ws)
        }
        CompositionMethod::EuclideanAverage => {
            let ws = leaves(g)?;
            let s = g.sum(&ws)?;
            Ok(g.scale(s, 1.0 / ws.len() as f64))
        }
    }
}

fn right_chain_graph(g: &mut Graph<'_>, ws: &[NodeId], c: f64) -> Result<NodeId> {
    let (&first, rest) = ws.split_first().ok_or(Error::EmptySequence)?;
    rest.iter().try_fold(first, |acc, &w| g.mobius_add(acc, w, c))
}

fn tree_graph(g: &mut Graph<'_>, arrays: &TraversalArrays, table: &EmbeddingTable, c: f64) -> Result<NodeId> {
    arrays.validate()?;
    let mut ids: Vec<NodeId> = Vec::with_capacity(arrays.len());
    for i in 0..arrays.len() {
        let n = match (arrays.word_ids[i], arrays.left[i], arrays.right[i]) {
            (Some(id), _, _) => g.word(id, table)?,
            (None, Some(l), Some(r)) => g.mobius_add(ids[l], ids[r], c)?,
            _ => unreachable!("validated arrays"),
        };
        ids.push(n);
    }
    Ok(*ids.last().expect("non-empty arrays"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Vocab;
    use crate::treeparse::parse_sexpr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rows: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..rows)
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.3..0.3)).collect())
            .collect();
        EmbeddingTable::from_rows(rows).unwrap()
    }

    #[test]
    fn it_is_raining_today() {
        let mut vocab = Vocab::new();
        for w in ["it", "is", "raining", "today"] {
            vocab.insert(w);
        }
        let tree = parse_sexpr("( It ( is ( raining today ) ) )", &vocab).unwrap();
        let table = random_table(5, 3, 1);
        let space = CurvatureSpace::unit_ball(3).unwrap();
        let got = compose_tree(&tree.post_order_arrays(), &table, &space).unwrap();
        let c = 1.0;
        let w = |i| table.get(i).unwrap();
        let expect = raw::mobius_add(c, w(1), &raw::mobius_add(c, w(2), &raw::mobius_add(c, w(3), w(4))));
        assert_eq!(got.coords(), expect.as_slice());
        let left = compose_chain(&[1, 2, 3, 4], &table, &space, ChainDirection::Left).unwrap();
        assert_eq!(left, got);
    }

    #[test]
    fn single_leaf_and_origin() {
        let table = random_table(3, 2, 2);
        let space = CurvatureSpace::unit_ball(2).unwrap();
        let single = TraversalArrays::left_branching(&[2]).unwrap();
        assert_eq!(
            compose_tree(&single, &table, &space).unwrap().coords(),
            table.get(2).unwrap()
        );
        let zeros = EmbeddingTable::zeros(3, 2);
        let arrays = TraversalArrays::left_branching(&[0, 1, 2]).unwrap();
        assert_eq!(compose_tree(&arrays, &zeros, &space).unwrap().coords(), &[0.0, 0.0]);
    }

    #[test]
    fn missing_word_is_an_error() {
        let table = random_table(2, 2, 0);
        let space = CurvatureSpace::unit_ball(2).unwrap();
        let arrays = TraversalArrays::left_branching(&[0, 5]).unwrap();
        assert!(matches!(
            compose_tree(&arrays, &table, &space),
            Err(Error::MissingWord(5))
        ));
    }

    #[test]
    fn chains_agree_on_two_tokens_but_not_three() {
        let table = random_table(4, 3, 7);
        let space = CurvatureSpace::unit_ball(3).unwrap();
        let l = compose_chain(&[1, 2], &table, &space, ChainDirection::Left).unwrap();
        let r = compose_chain(&[1, 2], &table, &space, ChainDirection::Right).unwrap();
        assert_eq!(l, r);
        assert_eq!(
            compose_chain(&[3], &table, &space, ChainDirection::Left)
                .unwrap()
                .coords(),
            table.get(3).unwrap()
        );
        let l = compose_chain(&[1, 2, 3], &table, &space, ChainDirection::Left).unwrap();
        let r = compose_chain(&[1, 2, 3], &table, &space, ChainDirection::Right).unwrap();
        let diff: f64 = l.iter().zip(r.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-6, "{diff}");
        assert!(compose_chain(&[], &table, &space, ChainDirection::Left).is_err());
    }

    #[test]
    fn caterpillar_tree_equals_right_chain() {
        let table = random_table(6, 4, 3);
        let space = CurvatureSpace::new(4, 0.7).unwrap();
        let ids = [5, 1, 4, 2, 3];
        let tree = compose_tree(&TraversalArrays::left_branching(&ids).unwrap(), &table, &space).unwrap();
        let chain = compose_chain(&ids, &table, &space, ChainDirection::Right).unwrap();
        assert_eq!(tree, chain);
    }

    #[test]
    fn mobius_average_of_repeated_word_is_the_word() {
        let table = random_table(2, 3, 11);
        let space = CurvatureSpace::unit_ball(3).unwrap();
        for k in 1..=6 {
            let arrays = TraversalArrays::left_branching(&vec![1; k]).unwrap();
            let avg = compose_mobius_average(&arrays, &table, &space, k).unwrap();
            for (a, b) in avg.iter().zip(table.get(1).unwrap()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mobius_average_two_words() {
        let table = random_table(3, 3, 12);
        let space = CurvatureSpace::unit_ball(3).unwrap();
        let arrays = TraversalArrays::left_branching(&[1, 2]).unwrap();
        let avg = compose_mobius_average(&arrays, &table, &space, 2).unwrap();
        let sum = space.mobius_add(table.get(1).unwrap(), table.get(2).unwrap()).unwrap();
        let expect = space.mobius_scalar_mul(0.5, &sum).unwrap();
        assert_eq!(avg, expect);
    }

    #[test]
    fn euclidean_modes() {
        let table = random_table(4, 3, 5);
        let w = table.get(2).unwrap().to_vec();
        assert_eq!(compose_euclidean(&[2], &table, EuclideanMode::Sum).unwrap(), w);
        assert_eq!(compose_euclidean(&[2], &table, EuclideanMode::Average).unwrap(), w);
        let avg = compose_euclidean(&[2, 2], &table, EuclideanMode::Average).unwrap();
        for (a, b) in avg.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
        let a = compose_euclidean(&[1, 2, 3], &table, EuclideanMode::Average).unwrap();
        let b = compose_euclidean(&[3, 1, 2], &table, EuclideanMode::Average).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(compose_euclidean(&[], &table, EuclideanMode::Sum).is_err());
    }

    #[test]
    fn graph_matches_pure_composition() {
        let table = random_table(6, 4, 21);
        let space = CurvatureSpace::new(4, 0.5).unwrap();
        let arrays = TraversalArrays::left_branching(&[1, 2, 3]).unwrap();
        let mut vocab = Vocab::new();
        for w in ["a", "b", "c"] {
            vocab.insert(w);
        }
        // ( a ( b c ) ) rather than the caterpillar
        let tree = parse_sexpr("( a ( b c ) )", &vocab).unwrap().post_order_arrays();
        let sentence = Sentence::with_tree(tree);
        for method in [
            CompositionMethod::TreeMobius,
            CompositionMethod::LeftChain,
            CompositionMethod::RightChain,
            CompositionMethod::MobiusAverage,
            CompositionMethod::EuclideanAverage,
            CompositionMethod::EuclideanSum,
        ] {
            let pure = compose(&sentence, method, &table, &space).unwrap();
            let mut g = Graph::new();
            let n = compose_graph(&mut g, &sentence, method, &table, &space).unwrap();
            assert_eq!(g.value(n), pure.as_slice(), "{method}");
        }
        let chain_only = Sentence::from_ids(vec![1, 2, 3]);
        assert!(compose(&chain_only, CompositionMethod::TreeMobius, &table, &space).is_err());
        let ma = compose(&chain_only, CompositionMethod::MobiusAverage, &table, &space).unwrap();
        let expect = compose_mobius_average(&arrays, &table, &space, 3).unwrap();
        assert_eq!(ma, expect.into_vec());
    }
}
