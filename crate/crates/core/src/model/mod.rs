//! Model definitions: composition plus either an energy/threshold head or a
//! feed-forward classifier, the losses, and the per-sample update.

mod features;
mod ffnn;
mod loss;
mod threshold;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use features::{build_features, build_features_graph, FeatureBlock, FeatureSpec};
pub use ffnn::{ffnn_forward, FfnnParams, DEFAULT_HIDDEN, HIDDEN_ACTIVATION};
pub use loss::{
    cross_entropy, disentangle_graph, disentangle_loss, margin_loss, negative_hinge, negative_hinge_graph,
    order_energy, order_energy_graph, pair_energy, pair_energy_graph, LossConfig, DEFAULT_ALPHA, DEFAULT_BETA,
};
pub use threshold::{candidate_thresholds, select_threshold, ThresholdChoice};

use crate::autodiff::{rsgd_step_in_place, sgd_step_in_place, softmax, GradientRecord, Graph, NodeId};
use crate::compose::{compose, compose_graph, CompositionMethod};
use crate::data::{Sample, Sentence};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::CurvatureSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "MS")]
    Ms,
    #[serde(rename = "MS_FFNN")]
    MsFfnn,
    #[serde(rename = "MA_FFNN")]
    MaFfnn,
    #[serde(rename = "LMS")]
    Lms,
    #[serde(rename = "RMS")]
    Rms,
    #[serde(rename = "LMS_FFNN")]
    LmsFfnn,
    #[serde(rename = "RMS_FFNN")]
    RmsFfnn,
    #[serde(rename = "EA_FFNN")]
    EaFfnn,
    #[serde(rename = "ES_FFNN")]
    EsFfnn,
}

impl Architecture {
    pub const ALL: [Architecture; 9] = [
        Architecture::Ms,
        Architecture::MsFfnn,
        Architecture::MaFfnn,
        Architecture::Lms,
        Architecture::Rms,
        Architecture::LmsFfnn,
        Architecture::RmsFfnn,
        Architecture::EaFfnn,
        Architecture::EsFfnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Ms => "MS",
            Architecture::MsFfnn => "MS_FFNN",
            Architecture::MaFfnn => "MA_FFNN",
            Architecture::Lms => "LMS",
            Architecture::Rms => "RMS",
            Architecture::LmsFfnn => "LMS_FFNN",
            Architecture::RmsFfnn => "RMS_FFNN",
            Architecture::EaFfnn => "EA_FFNN",
            Architecture::EsFfnn => "ES_FFNN",
        }
    }

    pub fn composition(self) -> CompositionMethod {
        match self {
            Architecture::Ms | Architecture::MsFfnn => CompositionMethod::TreeMobius,
            Architecture::MaFfnn => CompositionMethod::MobiusAverage,
            Architecture::Lms | Architecture::LmsFfnn => CompositionMethod::LeftChain,
            Architecture::Rms | Architecture::RmsFfnn => CompositionMethod::RightChain,
            Architecture::EaFfnn => CompositionMethod::EuclideanAverage,
            Architecture::EsFfnn => CompositionMethod::EuclideanSum,
        }
    }

    pub fn has_ffnn(self) -> bool {
        !matches!(self, Architecture::Ms | Architecture::Lms | Architecture::Rms)
    }

    /// Energy-scored models trained with the margin loss.
    pub fn is_margin(self) -> bool {
        !self.has_ffnn()
    }

    pub fn is_hyperbolic(self) -> bool {
        self.composition().is_hyperbolic()
    }

    pub fn default_curvature(self) -> f64 {
        if self.is_hyperbolic() {
            1.0
        } else {
            0.0
        }
    }

    pub fn default_features(self) -> Option<FeatureSpec> {
        let spec = match self {
            _ if self.is_margin() => return None,
            Architecture::EaFfnn | Architecture::EsFfnn => "u,v,absdiff,hadamard",
            _ => "u,v,mdiff,cos,dist",
        };
        Some(spec.parse().expect("valid default feature spec"))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace(['+', '-'], "_");
        Architecture::ALL.into_iter().find(|a| a.name() == key).ok_or_else(|| {
            let known: Vec<&str> = Architecture::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown model {s:?} (known: {})", known.join(", ")))
        })
    }
}

/// Trainable parameters: word embeddings in the ball and the optional
/// Euclidean classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embeddings: EmbeddingTable,
    pub ffnn: Option<FfnnParams>,
}

/// Result of one per-sample update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Updated embeddings found outside the ball after the step.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub space: CurvatureSpace,
    pub features: Option<FeatureSpec>,
    pub loss: LossConfig,
    pub params: ModelParams,
}

impl Model {
    /// Checks that architecture, space, feature spec and class count fit together.
    pub fn check_compatible(
        arch: Architecture,
        space: &CurvatureSpace,
        features: Option<&FeatureSpec>,
        loss: &LossConfig,
    ) -> Result<()> {
        loss.validate()?;
        if arch.is_hyperbolic() && space.is_euclidean() {
            return Err(Error::Config(format!("{arch} needs a curved space (c > 0)")));
        }
        if !arch.is_hyperbolic() && !space.is_euclidean() {
            return Err(Error::Config(format!(
                "{arch} embeds in flat space; curvature must be 0"
            )));
        }
        if arch.is_margin() {
            if loss.classes != 2 {
                return Err(Error::Config(format!("{arch} is a binary model; classes must be 2")));
            }
            if features.is_some() {
                return Err(Error::Config(format!(
                    "{arch} has no classifier; features do not apply"
                )));
            }
        } else {
            let spec = features.ok_or_else(|| Error::Config(format!("{arch} needs a feature spec")))?;
            spec.check_space(space)?;
        }
        Ok(())
    }

    /// Fresh model: embeddings uniform in a tiny box around the origin, Glorot
    /// classifier weights.
    pub fn init<R: Rng>(
        arch: Architecture,
        space: CurvatureSpace,
        features: Option<FeatureSpec>,
        loss: LossConfig,
        vocab_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_compatible(arch, &space, features.as_ref(), &loss)?;
        let embeddings = EmbeddingTable::random_init(vocab_size, &space, rng);
        let ffnn = match &features {
            Some(spec) => Some(FfnnParams::init(spec.len(space.dim()), hidden, loss.classes, rng)?),
            None => None,
        };
        Ok(Self {
            arch,
            space,
            features,
            loss,
            params: ModelParams { embeddings, ffnn },
        })
    }

    /// Checks stored parameters against the declared configuration.
    pub fn validate(&self) -> Result<()> {
        Self::check_compatible(self.arch, &self.space, self.features.as_ref(), &self.loss)?;
        if self.params.embeddings.dim() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: self.params.embeddings.dim(),
            });
        }
        match (&self.features, &self.params.ffnn) {
            (Some(spec), Some(ffnn)) => {
                ffnn.validate()?;
                if ffnn.input != spec.len(self.space.dim()) || ffnn.classes != self.loss.classes {
                    return Err(Error::Shape(
                        "classifier shape disagrees with features or classes".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::Shape(
                    "classifier presence disagrees with the architecture".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn represent(&self, sentence: &Sentence) -> Result<Vec<f64>> {
        compose(sentence, self.arch.composition(), &self.params.embeddings, &self.space)
    }

    fn ffnn(&self) -> Result<(&FfnnParams, &FeatureSpec)> {
        match (&self.params.ffnn, &self.features) {
            (Some(p), Some(f)) => Ok((p, f)),
            _ => Err(Error::InvalidArgument(format!("{} has no classifier", self.arch))),
        }
    }

    /// Pair energy of the composed sentences; lower means more entailing.
    pub fn score(&self, sample: &Sample) -> Result<f64> {
        let u = self.represent(&sample.premise)?;
        let v = self.represent(&sample.hypothesis)?;
        Ok(pair_energy(&u, &v, self.loss.beta, &self.space))
    }

    pub fn probabilities(&self, sample: &Sample) -> Result<Vec<f64>> {
        let (ffnn, spec) = self.ffnn()?;
        let u = self.represent(&sample.premise)?;
        let v = self.represent(&sample.hypothesis)?;
        let f = build_features(&u, &v, spec, &self.space)?;
        Ok(softmax(&ffnn.logits(&f)?))
    }

    /// Predicted class index. Margin models need the selected threshold.
    pub fn predict(&self, sample: &Sample, threshold: Option<f64>) -> Result<usize> {
        if self.arch.is_margin() {
            let t = threshold.ok_or_else(|| Error::InvalidArgument("margin model needs a threshold".into()))?;
            Ok(if self.score(sample)? < t { 0 } else { 1 })
        } else {
            let p = self.probabilities(sample)?;
            Ok(argmax(&p))
        }
    }

    fn represent_graph<'p>(&'p self, g: &mut Graph<'p>, s: &Sentence) -> Result<NodeId> {
        compose_graph(g, s, self.arch.composition(), &self.params.embeddings, &self.space)
    }

    /// Per-sample training loss: the margin term for energy models, softmax
    /// cross-entropy otherwise.
    pub fn sample_loss<'p>(&'p self, g: &mut Graph<'p>, sample: &Sample) -> Result<NodeId> {
        let u = self.represent_graph(g, &sample.premise)?;
        let v = self.represent_graph(g, &sample.hypothesis)?;
        if self.arch.is_margin() {
            let e = pair_energy_graph(g, u, v, self.loss.beta, self.space.c())?;
            return Ok(if sample.label.is_entailment() {
                e
            } else {
                negative_hinge_graph(g, e, self.loss.alpha)
            });
        }
        let (ffnn, spec) = self.ffnn()?;
        let f = build_features_graph(g, u, v, spec, &self.space)?;
        let logits = ffnn.logits_graph(g, f)?;
        g.softmax_cross_entropy(logits, sample.label.class_index(self.loss.classes))
    }

    /// Margin loss with the order-embedding energy in place of the pair energy.
    pub fn order_loss<'p>(&'p self, g: &mut Graph<'p>, sample: &Sample) -> Result<NodeId> {
        let u = self.represent_graph(g, &sample.premise)?;
        let v = self.represent_graph(g, &sample.hypothesis)?;
        let e = order_energy_graph(g, u, v)?;
        Ok(if sample.label.is_entailment() {
            e
        } else {
            negative_hinge_graph(g, e, self.loss.alpha)
        })
    }

    /// Disentanglement loss of one entailment pair against hypotheses drawn as
    /// negatives for the same premise.
    pub fn disentangle_loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        premise: &Sentence,
        hypothesis: &Sentence,
        negatives: &[&Sentence],
    ) -> Result<NodeId> {
        let c = self.space.c();
        let u = self.represent_graph(g, premise)?;
        let v = self.represent_graph(g, hypothesis)?;
        let d = g.distance(u, v, c)?;
        let mut neg = Vec::with_capacity(negatives.len());
        for s in negatives {
            let w = self.represent_graph(g, s)?;
            neg.push(g.distance(u, w, c)?);
        }
        disentangle_graph(g, d, &neg)
    }

    /// RSGD on the touched embeddings, plain SGD on the classifier.
    /// Returns the number of updated embeddings left outside the ball.
    pub fn apply_gradients(&mut self, grads: &GradientRecord, lr: f64) -> usize {
        let c = self.space.c();
        let mut violations = 0;
        for (&id, grad) in &grads.hyperbolic {
            let row = self.params.embeddings.row_mut(id);
            rsgd_step_in_place(c, row, grad, lr);
            if !self.space.contains(row) {
                violations += 1;
            }
        }
        if let Some(ffnn) = self.params.ffnn.as_mut() {
            for (&key, grad) in &grads.euclidean {
                sgd_step_in_place(ffnn.param_mut(key), grad, lr);
            }
        }
        violations
    }

    /// Builds the loss with `build`, backpropagates, and applies the update.
    /// A non-finite loss or gradient aborts before any parameter changes.
    pub fn step_with<F>(&mut self, lr: f64, build: F) -> Result<StepOutcome>
    where
        F: for<'p> FnOnce(&'p Model, &mut Graph<'p>) -> Result<NodeId>,
    {
        let (loss, grads) = {
            let mut g = Graph::new();
            let l = build(self, &mut g)?;
            (g.scalar_value(l), g.backward(l)?)
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let violations = self.apply_gradients(&grads, lr);
        Ok(StepOutcome { loss, violations })
    }

    pub fn train_step(&mut self, sample: &Sample, lr: f64) -> Result<StepOutcome> {
        self.step_with(lr, |m, g| m.sample_loss(g, sample))
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
