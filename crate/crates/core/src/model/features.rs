//! Feature vectors fed to the classifier head, built from a premise
//! representation `u` and a hypothesis representation `v`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::geometry::{self, raw, CurvatureSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureBlock {
    Premise,
    Hypothesis,
    /// `-u ⊕ v`
    MobiusDiff,
    /// `|-u ⊕ v|`, coordinate-wise
    AbsMobiusDiff,
    Cosine,
    HypDistance,
    /// `|u - v|`, coordinate-wise
    AbsDiff,
    Hadamard,
    Dot,
    EuclidDistance,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 10] = [
        FeatureBlock::Premise,
        FeatureBlock::Hypothesis,
        FeatureBlock::MobiusDiff,
        FeatureBlock::AbsMobiusDiff,
        FeatureBlock::Cosine,
        FeatureBlock::HypDistance,
        FeatureBlock::AbsDiff,
        FeatureBlock::Hadamard,
        FeatureBlock::Dot,
        FeatureBlock::EuclidDistance,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FeatureBlock::Premise => "u",
            FeatureBlock::Hypothesis => "v",
            FeatureBlock::MobiusDiff => "mdiff",
            FeatureBlock::AbsMobiusDiff => "absmdiff",
            FeatureBlock::Cosine => "cos",
            FeatureBlock::HypDistance => "dist",
            FeatureBlock::AbsDiff => "absdiff",
            FeatureBlock::Hadamard => "hadamard",
            FeatureBlock::Dot => "dot",
            FeatureBlock::EuclidDistance => "edist",
        }
    }

    pub fn is_scalar(self) -> bool {
        matches!(
            self,
            FeatureBlock::Cosine | FeatureBlock::HypDistance | FeatureBlock::Dot | FeatureBlock::EuclidDistance
        )
    }

    /// Blocks that only make sense with a curved space.
    pub fn is_hyperbolic(self) -> bool {
        matches!(
            self,
            FeatureBlock::MobiusDiff | FeatureBlock::AbsMobiusDiff | FeatureBlock::HypDistance
        )
    }

    pub fn width(self, dim: usize) -> usize {
        if self.is_scalar() {
            1
        } else {
            dim
        }
    }
}

impl FromStr for FeatureBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureBlock::ALL.into_iter().find(|b| b.token() == s).ok_or_else(|| {
            let known: Vec<&str> = FeatureBlock::ALL.iter().map(|b| b.token()).collect();
            Error::Config(format!("unknown feature {s:?} (known: {})", known.join(",")))
        })
    }
}

/// Ordered feature blocks. The layout places vector blocks first, then
/// scalar blocks, each group in the order given.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSpec {
    blocks: Vec<FeatureBlock>,
}

impl FeatureSpec {
    pub fn new(blocks: Vec<FeatureBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("feature spec is empty".into()));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    /// Blocks in concatenation order.
    pub fn layout(&self) -> Vec<FeatureBlock> {
        let vectors = self.blocks.iter().filter(|b| !b.is_scalar());
        let scalars = self.blocks.iter().filter(|b| b.is_scalar());
        vectors.chain(scalars).copied().collect()
    }

    pub fn len(&self, dim: usize) -> usize {
        self.blocks.iter().map(|b| b.width(dim)).sum()
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.blocks.iter().any(|b| b.is_hyperbolic())
    }

    pub fn check_space(&self, space: &CurvatureSpace) -> Result<()> {
        if space.is_euclidean() {
            if let Some(b) = self.blocks.iter().find(|b| b.is_hyperbolic()) {
                return Err(Error::Config(format!(
                    "feature {:?} needs a curved space (c > 0)",
                    b.token()
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        FeatureSpec::new(blocks)
    }
}

impl TryFrom<String> for FeatureSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSpec> for String {
    fn from(f: FeatureSpec) -> Self {
        f.to_string()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<&str> = self.blocks.iter().map(|b| b.token()).collect();
        f.write_str(&tokens.join(","))
    }
}

pub fn build_features(u: &[f64], v: &[f64], spec: &FeatureSpec, space: &CurvatureSpace) -> Result<Vec<f64>> {
    spec.check_space(space)?;
    for x in [u, v] {
        if x.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: x.len(),
            });
        }
    }
    let c = space.c();
    let mut out = Vec::with_capacity(spec.len(space.dim()));
    for block in spec.layout() {
        match block {
            FeatureBlock::Premise => out.extend_from_slice(u),
            FeatureBlock::Hypothesis => out.extend_from_slice(v),
            FeatureBlock::MobiusDiff => out.extend(raw::mobius_add(c, &geometry::neg(u), v)),
            FeatureBlock::AbsMobiusDiff => out.extend(raw::mobius_add(c, &geometry::neg(u), v).iter().map(|x| x.abs())),
            FeatureBlock::Cosine => out.push(raw::cosine(u, v)),
            FeatureBlock::HypDistance => out.push(raw::distance(c, u, v)),
            FeatureBlock::AbsDiff => out.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs())),
            FeatureBlock::Hadamard => out.extend(u.iter().zip(v).map(|(a, b)| a * b)),
            FeatureBlock::Dot => out.push(geometry::dot(u, v)),
            FeatureBlock::EuclidDistance => {
                out.push(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            }
        }
    }
    Ok(out)
}

/// Graph counterpart of [`build_features`].
pub fn build_features_graph(
    g: &mut Graph<'_>,
    u: NodeId,
    v: NodeId,
    spec: &FeatureSpec,
    space: &CurvatureSpace,
) -> Result<NodeId> {
    spec.check_space(space)?;
    let c = space.c();
    let mut parts = Vec::with_capacity(spec.blocks().len());
    for block in spec.layout() {
        let part = match block {
            FeatureBlock::Premise => u,
            FeatureBlock::Hypothesis => v,
            FeatureBlock::MobiusDiff => {
                let nu = g.neg(u);
                g.mobius_add(nu, v, c)?
            }
            FeatureBlock::AbsMobiusDiff => {
                let nu = g.neg(u);
                let d = g.mobius_add(nu, v, c)?;
                g.abs(d)
            }
            FeatureBlock::Cosine => g.cosine(u, v)?,
            FeatureBlock::HypDistance => g.distance(u, v, c)?,
            FeatureBlock::AbsDiff => {
                let d = g.sub(u, v)?;
                g.abs(d)
            }
            FeatureBlock::Hadamard => g.mul(u, v)?,
            FeatureBlock::Dot => g.dot(u, v)?,
            FeatureBlock::EuclidDistance => {
                let d = g.sub(u, v)?;
                g.norm(d)
            }
        };
        parts.push(part);
    }
    Ok(g.concat(&parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> FeatureSpec {
        s.parse().unwrap()
    }

    #[test]
    fn lengths() {
        assert_eq!(spec("u,v").len(5), 10);
        assert_eq!(spec("u,v,mdiff,cos,dist").len(50), 152);
        let space = CurvatureSpace::unit_ball(50).unwrap();
        let u = vec![0.01; 50];
        let f = build_features(&u, &u, &spec("u,v,mdiff,cos,dist"), &space).unwrap();
        assert_eq!(f.len(), 152);
    }

    #[test]
    fn identical_pair() {
        let space = CurvatureSpace::unit_ball(3).unwrap();
        let u = [0.1, -0.2, 0.3];
        let f = build_features(&u, &u, &spec("mdiff,cos,dist"), &space).unwrap();
        for x in &f[..3] {
            assert!(x.abs() < 1e-12);
        }
        assert!((f[3] - 1.0).abs() < 1e-12);
        assert!(f[4].abs() < 1e-7);
    }

    #[test]
    fn scalars_follow_vectors() {
        let s = spec("cos,u,dist,v");
        assert_eq!(
            s.layout(),
            vec![
                FeatureBlock::Premise,
                FeatureBlock::Hypothesis,
                FeatureBlock::Cosine,
                FeatureBlock::HypDistance
            ]
        );
        let space = CurvatureSpace::unit_ball(2).unwrap();
        let f = build_features(&[0.1, 0.0], &[0.0, 0.2], &s, &space).unwrap();
        assert_eq!(&f[..4], &[0.1, 0.0, 0.0, 0.2]);
        assert_eq!(f[4], 0.0);
    }

    #[test]
    fn euclidean_blocks() {
        let space = CurvatureSpace::euclidean(2).unwrap();
        let f = build_features(&[1.0, 2.0], &[4.0, -2.0], &spec("absdiff,hadamard,dot,edist"), &space).unwrap();
        assert_eq!(f, vec![3.0, 4.0, 4.0, -4.0, 0.0, 5.0]);
    }

    #[test]
    fn hyperbolic_block_rejected_in_flat_space() {
        let space = CurvatureSpace::euclidean(2).unwrap();
        assert!(build_features(&[0.1, 0.0], &[0.0, 0.1], &spec("u,dist"), &space).is_err());
        assert!(build_features(&[0.1, 0.0], &[0.0, 0.1], &spec("u,cos"), &space).is_ok());
    }

    #[test]
    fn parse_errors_and_round_trip() {
        assert!("u,w".parse::<FeatureSpec>().is_err());
        assert!("".parse::<FeatureSpec>().is_err());
        let s = spec("u, v,absmdiff");
        assert_eq!(s.to_string(), "u,v,absmdiff");
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "\"u,v,absmdiff\"");
        assert_eq!(serde_json::from_str::<FeatureSpec>(&json).unwrap(), s);
    }

    #[test]
    fn graph_matches_pure() {
        use crate::embedding::EmbeddingTable;
        let space = CurvatureSpace::new(3, 0.8).unwrap();
        let table = EmbeddingTable::from_rows(vec![vec![0.1, -0.3, 0.2], vec![-0.25, 0.05, 0.4]]).unwrap();
        let all = spec("u,v,mdiff,absmdiff,cos,dist,absdiff,hadamard,dot,edist");
        let pure = build_features(table.get(0).unwrap(), table.get(1).unwrap(), &all, &space).unwrap();
        let mut g = Graph::new();
        let u = g.word(0, &table).unwrap();
        let v = g.word(1, &table).unwrap();
        let f = build_features_graph(&mut g, u, v, &all, &space).unwrap();
        assert_eq!(g.value(f), pure.as_slice());
        assert_eq!(pure.len(), all.len(3));
    }
}
