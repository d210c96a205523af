//! Finite-difference verification of the analytic gradients for every
//! model, loss and feature layout.
//!
//! Each trial draws a random space, random word embeddings and random parse
//! trees, builds the loss graph and compares `backward` against central
//! differences. Configurations whose arguments sit within `min_kink_margin`
//! of a non-differentiable point are redrawn, since central differences are
//! meaningless across a kink.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_diff_check, DenseParam, GradientRecord, Graph, NodeId};
use crate::compose::CompositionMethod;
use crate::data::{Label, Sample, Sentence};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::CurvatureSpace;
use crate::model::{build_features, Architecture, FeatureSpec, FfnnParams, LossConfig, Model, ModelParams};
use crate::treeparse::{ParseTree, TraversalArrays};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const MAX_DIM: usize = 10;
pub const MAX_LEAVES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LossKind {
    Margin,
    CrossEntropy,
    Disentangle,
    Order,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Case {
    pub arch: Architecture,
    pub loss: LossKind,
    pub features: Option<FeatureSpec>,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.arch, self.loss)?;
        if let Some(spec) = &self.features {
            write!(f, " [{spec}]")?;
        }
        Ok(())
    }
}

const HYPERBOLIC_SPECS: [&str; 8] = [
    "u,v",
    "u,v,mdiff",
    "u,v,absmdiff",
    "u,v,mdiff,dist",
    "u,v,mdiff,cos,dist",
    "u,v,absdiff,hadamard",
    "u,v,absdiff,hadamard,dot,edist",
    "u,v,mdiff,absmdiff,cos,dist,absdiff,hadamard,dot,edist",
];

const EUCLIDEAN_SPECS: [&str; 5] = [
    "u,v",
    "u,v,cos",
    "u,v,absdiff,hadamard",
    "u,v,absdiff,hadamard,edist",
    "u,v,absdiff,hadamard,dot,edist",
];

/// Every architecture with its native loss (and every feature layout for the
/// classifier models), plus the disentanglement and order losses over each
/// composition.
pub fn all_cases() -> Vec<Case> {
    let mut cases = Vec::new();
    for arch in Architecture::ALL {
        if arch.is_margin() {
            cases.push(Case {
                arch,
                loss: LossKind::Margin,
                features: None,
            });
            continue;
        }
        let specs: &[&str] = if arch.is_hyperbolic() {
            &HYPERBOLIC_SPECS
        } else {
            &EUCLIDEAN_SPECS
        };
        for s in specs {
            cases.push(Case {
                arch,
                loss: LossKind::CrossEntropy,
                features: Some(s.parse().expect("valid spec")),
            });
        }
    }
    for arch in [
        Architecture::Ms,
        Architecture::Lms,
        Architecture::Rms,
        Architecture::MaFfnn,
        Architecture::EaFfnn,
        Architecture::EsFfnn,
    ] {
        for loss in [LossKind::Disentangle, LossKind::Order] {
            cases.push(Case {
                arch,
                loss,
                features: None,
            });
        }
    }
    cases
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub max_dim: usize,
    pub max_leaves: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Hidden width of the classifier during checks.
    pub hidden: usize,
    /// Classifier coordinates sampled per trial.
    pub ffnn_coords: usize,
    /// Near a kink the third derivative grows like the inverse square of the
    /// distance, so the central-difference truncation error is about
    /// `(step / margin)^2` relative. The default keeps that near 1e-6.
    pub min_kink_margin: f64,
    /// Largest `c |x|^2` allowed for any composed sentence. Near the boundary
    /// the loss loses most of its significant digits and central differences
    /// stop resolving the gradient.
    pub max_ball_load: f64,
    /// Smallest classifier input magnitude allowed. A first-layer weight's
    /// gradient is proportional to its input, and one below about 1e-8 is
    /// lost in the rounding noise of an O(1) loss.
    pub min_feature: f64,
    /// Test hook: perturbs one analytic coordinate so the check must fail.
    pub corrupt_gradient: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            max_dim: MAX_DIM,
            max_leaves: MAX_LEAVES,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            hidden: 8,
            ffnn_coords: 24,
            min_kink_margin: 1e-2,
            max_ball_load: 0.9,
            min_feature: 1e-3,
            corrupt_gradient: false,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_dim == 0 || self.max_dim > MAX_DIM {
            return Err(Error::Config(format!("gradcheck dimension must be in 1..={MAX_DIM}")));
        }
        if self.max_leaves == 0 || self.max_leaves > MAX_LEAVES {
            return Err(Error::Config(format!(
                "gradcheck trees must have 1..={MAX_LEAVES} leaves"
            )));
        }
        if self.trials == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "gradcheck needs at least one trial and hidden unit".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: String,
    pub trials: usize,
    pub max_error: f64,
    /// Draws discarded for sitting too close to a kink or the boundary.
    pub redrawn: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub seed: u64,
    pub max_error: f64,
    pub passed: bool,
    pub cases: Vec<CaseReport>,
}

/// Random binary tree over `ids` with split points drawn uniformly.
pub fn random_tree<R: Rng>(rng: &mut R, ids: &[usize]) -> ParseTree {
    if ids.len() == 1 {
        return ParseTree::leaf(&format!("w{}", ids[0]), ids[0]);
    }
    let k = rng.gen_range(1..ids.len());
    ParseTree::node(random_tree(rng, &ids[..k]), random_tree(rng, &ids[k..]))
}

/// Random sentence over the word ids `pool`; words may repeat.
/// Draws `1..=max_leaves` words from `pool` with at least `min_distinct`
/// different ones (the pool must be that large).
fn random_sentence<R: Rng>(
    rng: &mut R,
    pool: std::ops::Range<usize>,
    max_leaves: usize,
    min_distinct: usize,
) -> Sentence {
    let ids = loop {
        let n = rng.gen_range(min_distinct.max(1)..=max_leaves);
        let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(pool.clone())).collect();
        if ids.iter().collect::<std::collections::BTreeSet<_>>().len() >= min_distinct {
            break ids;
        }
    };
    let arrays: TraversalArrays = random_tree(rng, &ids).post_order_arrays();
    Sentence::with_tree(arrays)
}

/// A point with norm uniform in `[0.05, 0.5]` times the ball radius (or in
/// `[0.05, 0.5]` for flat space).
fn random_point<R: Rng>(rng: &mut R, space: &CurvatureSpace) -> Vec<f64> {
    let dir: Vec<f64> = (0..space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = crate::geometry::norm(&dir).max(1e-12);
    let scale = if space.is_euclidean() { 1.0 } else { space.radius() };
    let r = rng.gen_range(0.05..0.5) * scale;
    dir.iter().map(|x| x * r / n).collect()
}

struct Trial {
    model: Model,
    sample: Sample,
    negatives: Vec<Sentence>,
    loss: LossKind,
}

impl Trial {
    /// Largest `c |x|^2` over the composed sentences of the trial.
    fn ball_load(&self) -> Result<f64> {
        let c = self.model.space.c();
        let sentences = [&self.sample.premise, &self.sample.hypothesis]
            .into_iter()
            .chain(&self.negatives);
        let mut worst = 0.0f64;
        for s in sentences {
            worst = worst.max(c * crate::geometry::sq_norm(&self.model.represent(s)?));
        }
        Ok(worst)
    }

    /// Smallest classifier input magnitude, or infinity without a classifier.
    fn min_feature(&self) -> Result<f64> {
        let Some(spec) = self
            .model
            .features
            .as_ref()
            .filter(|_| self.loss == LossKind::CrossEntropy)
        else {
            return Ok(f64::INFINITY);
        };
        let u = self.model.represent(&self.sample.premise)?;
        let v = self.model.represent(&self.sample.hypothesis)?;
        let f = build_features(&u, &v, spec, &self.model.space)?;
        Ok(f.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min))
    }

    fn build<'p>(&self, model: &'p Model, g: &mut Graph<'p>) -> Result<NodeId> {
        match self.loss {
            LossKind::Margin | LossKind::CrossEntropy => model.sample_loss(g, &self.sample),
            LossKind::Order => model.order_loss(g, &self.sample),
            LossKind::Disentangle => {
                let negs: Vec<&Sentence> = self.negatives.iter().collect();
                model.disentangle_loss(g, &self.sample.premise, &self.sample.hypothesis, &negs)
            }
        }
    }
}

fn draw_trial<R: Rng>(rng: &mut R, case: &Case, cfg: &GradcheckConfig) -> Result<Trial> {
    // On a line the disentanglement loss ignores the premise whenever both
    // compared sentences sit on the same side of it, so that loss starts at 2.
    let min_dim = if case.loss == LossKind::Disentangle { 2 } else { 1 };
    let dim = rng.gen_range(min_dim..=cfg.max_dim.max(min_dim));
    let c = if case.arch.is_hyperbolic() {
        if rng.gen_bool(0.5) {
            1.0
        } else {
            rng.gen_range(0.1..2.0)
        }
    } else {
        0.0
    };
    let space = CurvatureSpace::new(dim, c)?;
    let classes = if case.loss == LossKind::CrossEntropy && rng.gen_bool(0.5) {
        3
    } else {
        2
    };
    // margins spread so the negative hinge is active in roughly half the draws
    let loss = LossConfig {
        alpha: rng.gen_range(0.05..3.0),
        beta: rng.gen_range(0.0..=1.0),
        classes,
    };
    let features = match case.loss {
        LossKind::CrossEntropy => case.features.clone(),
        _ => None,
    };
    // Each sentence draws from its own word pool. A word shared between two
    // compared sentences can make the loss exactly invariant to it (Möbius
    // left translations are isometries, flat translations cancel), and a
    // true zero gradient is below the resolution of central differences.
    //
    // A Möbius average of one repeated word is that word, so each coordinate
    // feeds only itself and an inactive order hinge gives another exact zero.
    let min_distinct = if case.loss == LossKind::Order && case.arch.composition() == CompositionMethod::MobiusAverage {
        2
    } else {
        1
    };
    let mut pools = Vec::with_capacity(5);
    let mut vocab = 0;
    for _ in 0..5 {
        let size = rng.gen_range(min_distinct.max(1)..=4);
        pools.push(vocab..vocab + size);
        vocab += size;
    }
    let ffnn = match &features {
        Some(spec) => Some(FfnnParams::init(spec.len(dim), cfg.hidden, classes, rng)?),
        None => None,
    };
    // disentanglement and order losses are checked on the bare composition
    let mut model = Model {
        arch: case.arch,
        space,
        features,
        loss,
        params: ModelParams {
            embeddings: EmbeddingTable::zeros(vocab, dim),
            ffnn,
        },
    };
    for id in 0..vocab {
        let p = random_point(rng, &space);
        model.params.embeddings.row_mut(id).copy_from_slice(&p);
    }
    if let Some(ffnn) = model.params.ffnn.as_mut() {
        for b in ffnn.hidden_bias.iter_mut().chain(ffnn.output_bias.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let labels = [Label::Entailment, Label::Neutral, Label::Contradiction];
    let label = *labels.choose(rng).expect("non-empty");
    let sample = Sample {
        premise: random_sentence(rng, pools[0].clone(), cfg.max_leaves, min_distinct),
        hypothesis: random_sentence(rng, pools[1].clone(), cfg.max_leaves, min_distinct),
        label,
    };
    let negatives = (0..rng.gen_range(1..=3))
        .map(|k| random_sentence(rng, pools[2 + k].clone(), cfg.max_leaves, min_distinct))
        .collect();
    Ok(Trial {
        model,
        sample,
        negatives,
        loss: case.loss,
    })
}

/// Coordinates under test: every touched embedding coordinate plus a random
/// subset of classifier coordinates.
#[derive(Clone, Copy, Debug)]
enum Coord {
    Word(usize, usize),
    Dense(DenseParam, usize),
}

fn choose_coords<R: Rng>(rng: &mut R, trial: &Trial, grads: &GradientRecord, cfg: &GradcheckConfig) -> Vec<Coord> {
    let dim = trial.model.space.dim();
    let mut coords: Vec<Coord> = grads
        .hyperbolic
        .keys()
        .flat_map(|&w| (0..dim).map(move |k| Coord::Word(w, k)))
        .collect();
    if let Some(ffnn) = &trial.model.params.ffnn {
        let keys = [
            DenseParam::HiddenWeight,
            DenseParam::HiddenBias,
            DenseParam::OutputWeight,
            DenseParam::OutputBias,
        ];
        let mut picked = std::collections::BTreeSet::new();
        for _ in 0..cfg.ffnn_coords {
            let key = *keys.choose(rng).expect("non-empty");
            let len = ffnn.param(key).len();
            picked.insert((key, rng.gen_range(0..len)));
        }
        coords.extend(picked.into_iter().map(|(key, i)| Coord::Dense(key, i)));
    }
    coords
}

fn read(model: &Model, c: Coord) -> f64 {
    match c {
        Coord::Word(w, k) => model.params.embeddings.get(w).expect("touched word")[k],
        Coord::Dense(key, i) => model.params.ffnn.as_ref().expect("classifier").param(key)[i],
    }
}

fn write(model: &mut Model, c: Coord, value: f64) {
    match c {
        Coord::Word(w, k) => model.params.embeddings.row_mut(w)[k] = value,
        Coord::Dense(key, i) => model.params.ffnn.as_mut().expect("classifier").param_mut(key)[i] = value,
    }
}

fn analytic(grads: &GradientRecord, c: Coord) -> f64 {
    match c {
        Coord::Word(w, k) => grads.hyperbolic.get(&w).map_or(0.0, |g| g[k]),
        Coord::Dense(key, i) => grads.euclidean.get(&key).map_or(0.0, |g| g[i]),
    }
}

pub fn run_case(case: &Case, cfg: &GradcheckConfig, seed: u64) -> Result<CaseReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    let mut redrawn = 0;
    for _ in 0..cfg.trials {
        let mut attempts = 0;
        let (trial, grads) = loop {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::NonFinite(format!(
                    "{case}: could not draw a configuration away from kinks"
                )));
            }
            let trial = draw_trial(&mut rng, case, cfg)?;
            let mut g = Graph::new();
            let loss = trial.build(&trial.model, &mut g)?;
            if g.kink_margin() < cfg.min_kink_margin
                || !g.scalar_value(loss).is_finite()
                || trial.ball_load()? > cfg.max_ball_load
                || trial.min_feature()? < cfg.min_feature
            {
                redrawn += 1;
                continue;
            }
            let grads = g.backward(loss)?;
            break (trial, grads);
        };
        let coords = choose_coords(&mut rng, &trial, &grads, cfg);
        let params: Vec<f64> = coords.iter().map(|&c| read(&trial.model, c)).collect();
        let mut expected: Vec<f64> = coords.iter().map(|&c| analytic(&grads, c)).collect();
        if cfg.corrupt_gradient {
            if let Some(first) = expected.first_mut() {
                *first = *first * 1.01 + 1e-3;
            }
        }
        let mut work = trial.model.clone();
        let err = finite_diff_check(
            |x| {
                for (&c, &v) in coords.iter().zip(x) {
                    write(&mut work, c, v);
                }
                let mut g = Graph::new();
                let loss = trial.build(&work, &mut g)?;
                Ok(g.scalar_value(loss))
            },
            &params,
            &expected,
            cfg.step,
        )?;
        max_error = max_error.max(err);
    }
    Ok(CaseReport {
        case: case.to_string(),
        trials: cfg.trials,
        max_error,
        redrawn,
    })
}

/// Runs every case with its own seed derived from `cfg.seed`.
pub fn run_gradcheck(cases: &[Case], cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        reports.push(run_case(case, cfg, cfg.seed.wrapping_add(i as u64))?);
    }
    let max_error = reports.iter().map(|r| r.max_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        step: cfg.step,
        seed: cfg.seed,
        max_error,
        passed: max_error < cfg.tolerance,
        cases: reports,
    })
}
