use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dense_forward, softmax, DenseLayer, DenseParam, Graph, NodeId};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 256;
/// Recorded in checkpoints next to the weights.
pub const HIDDEN_ACTIVATION: &str = "relu";

/// One hidden ReLU layer followed by a softmax output layer. Weights are
/// row-major: `hidden_weight` is `hidden x input`, `output_weight` is
/// `classes x hidden`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnParams {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub hidden_weight: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weight: Vec<f64>,
    pub output_bias: Vec<f64>,
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect()
}

impl FfnnParams {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden,
            classes,
            hidden_weight: vec![0.0; hidden * input],
            hidden_bias: vec![0.0; hidden],
            output_weight: vec![0.0; classes * hidden],
            output_bias: vec![0.0; classes],
        }
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if input == 0 || hidden == 0 || classes < 2 {
            return Err(Error::Shape(format!(
                "ffnn needs input, hidden > 0 and at least 2 classes (got {input}, {hidden}, {classes})"
            )));
        }
        let mut p = Self::zeros(input, hidden, classes);
        p.hidden_weight = glorot(rng, input, hidden);
        p.output_weight = glorot(rng, hidden, classes);
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden_weight.len() == self.hidden * self.input
            && self.hidden_bias.len() == self.hidden
            && self.output_weight.len() == self.classes * self.hidden
            && self.output_bias.len() == self.classes;
        if !ok {
            return Err(Error::Shape(
                "ffnn parameter lengths disagree with declared sizes".into(),
            ));
        }
        Ok(())
    }

    pub fn hidden_layer(&self) -> DenseLayer<'_> {
        DenseLayer {
            weight: &self.hidden_weight,
            bias: &self.hidden_bias,
            rows: self.hidden,
            cols: self.input,
            weight_key: DenseParam::HiddenWeight,
            bias_key: DenseParam::HiddenBias,
        }
    }

    pub fn output_layer(&self) -> DenseLayer<'_> {
        DenseLayer {
            weight: &self.output_weight,
            bias: &self.output_bias,
            rows: self.classes,
            cols: self.hidden,
            weight_key: DenseParam::OutputWeight,
            bias_key: DenseParam::OutputBias,
        }
    }

    pub fn param(&self, key: DenseParam) -> &[f64] {
        match key {
            DenseParam::HiddenWeight => &self.hidden_weight,
            DenseParam::HiddenBias => &self.hidden_bias,
            DenseParam::OutputWeight => &self.output_weight,
            DenseParam::OutputBias => &self.output_bias,
        }
    }

    pub fn param_mut(&mut self, key: DenseParam) -> &mut [f64] {
        match key {
            DenseParam::HiddenWeight => &mut self.hidden_weight,
            DenseParam::HiddenBias => &mut self.hidden_bias,
            DenseParam::OutputWeight => &mut self.output_weight,
            DenseParam::OutputBias => &mut self.output_bias,
        }
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input {
            return Err(Error::Shape(format!(
                "ffnn expects {} features, got {}",
                self.input,
                features.len()
            )));
        }
        let mut h = dense_forward(&self.hidden_layer(), features);
        h.iter_mut().for_each(|x| *x = x.max(0.0));
        Ok(dense_forward(&self.output_layer(), &h))
    }

    /// Graph nodes for the logits; the softmax is folded into the loss.
    pub fn logits_graph<'p>(&'p self, g: &mut Graph<'p>, features: NodeId) -> Result<NodeId> {
        let pre = g.dense(features, self.hidden_layer())?;
        let h = g.relu(pre);
        g.dense(h, self.output_layer())
    }
}

/// Class probabilities.
pub fn ffnn_forward(params: &FfnnParams, features: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&params.logits(features)?))
}
