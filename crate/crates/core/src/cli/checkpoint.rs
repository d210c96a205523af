use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::config::RunConfig;
use crate::data::{Vocab, NORMALIZATION};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{FfnnParams, Model, ModelParams, HIDDEN_ACTIVATION};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Saved model: the configuration it was trained with, the vocabulary, the
/// parameters of the selected epoch and, for margin models, the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    /// Epoch the parameters come from; 0 is the initialization.
    pub epoch: usize,
    pub vocab: Vocab,
    pub normalization: String,
    pub activation: Option<String>,
    pub embeddings: EmbeddingTable,
    pub ffnn: Option<FfnnParams>,
    #[serde(with = "threshold_repr")]
    pub threshold: Option<f64>,
}

/// Thresholds may be infinite, which JSON numbers cannot carry; those are
/// written as the strings `"inf"` and `"-inf"`.
pub(super) mod threshold_repr {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(t: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match t {
            None => s.serialize_none(),
            Some(v) if *v == f64::INFINITY => s.serialize_some("inf"),
            Some(v) if *v == f64::NEG_INFINITY => s.serialize_some("-inf"),
            Some(v) => s.serialize_some(v),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        use serde::de::Error as _;
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Number(v)) => Ok(Some(v)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(D::Error::custom(format!("bad threshold {other:?}"))),
            },
        }
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Checkpoint {
    pub fn new(config: RunConfig, epoch: usize, vocab: Vocab, model: &Model, threshold: Option<f64>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            epoch,
            vocab,
            normalization: NORMALIZATION.to_string(),
            activation: model.params.ffnn.as_ref().map(|_| HIDDEN_ACTIVATION.to_string()),
            embeddings: model.params.embeddings.clone(),
            ffnn: model.params.ffnn.clone(),
            threshold,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(probe.version));
        }
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the model and checks it against the stored configuration.
    pub fn model(&self) -> Result<Model> {
        if self.normalization != NORMALIZATION {
            return Err(Error::Config(format!(
                "checkpoint uses token normalization {:?}, expected {NORMALIZATION:?}",
                self.normalization
            )));
        }
        if let Some(act) = &self.activation {
            if act != HIDDEN_ACTIVATION {
                return Err(Error::Config(format!("unsupported activation {act:?}")));
            }
        }
        if self.embeddings.len() != self.vocab.len() {
            return Err(Error::Shape(format!(
                "{} embeddings for a vocabulary of {}",
                self.embeddings.len(),
                self.vocab.len()
            )));
        }
        let model = Model {
            arch: self.config.model,
            space: self.config.space()?,
            features: self.config.features.clone(),
            loss: self.config.loss(),
            params: ModelParams {
                embeddings: self.embeddings.clone(),
                ffnn: self.ffnn.clone(),
            },
        };
        model.validate()?;
        if model.arch.is_margin() && self.threshold.is_none() {
            return Err(Error::Config(format!("{} checkpoint has no threshold", model.arch)));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::Architecture;

    fn checkpoint(arch: Architecture, threshold: Option<f64>) -> Checkpoint {
        let mut cfg = RunConfig::for_model(arch);
        cfg.dim = 3;
        cfg.hidden = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vocab = Vocab::from(vec!["<unk>".to_string(), "a".into(), "b".into()]);
        let model = Model::init(
            arch,
            cfg.space().unwrap(),
            cfg.features.clone(),
            cfg.loss(),
            3,
            4,
            &mut rng,
        )
        .unwrap();
        Checkpoint::new(cfg, 2, vocab, &model, threshold)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for (arch, t) in [
            (Architecture::Lms, Some(f64::INFINITY)),
            (Architecture::Ms, Some(f64::NEG_INFINITY)),
            (Architecture::Rms, Some(0.1 + 0.2)),
            (Architecture::MsFfnn, None),
            (Architecture::EsFfnn, None),
        ] {
            let c = checkpoint(arch, t);
            let text = c.to_json().unwrap();
            let back = Checkpoint::from_json(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_json().unwrap(), text);
        }
        let text = checkpoint(Architecture::Lms, Some(f64::NEG_INFINITY))
            .to_json()
            .unwrap();
        assert!(text.contains("\"threshold\": \"-inf\""));
    }

    #[test]
    fn rejects_bad_checkpoints() {
        let c = checkpoint(Architecture::LmsFfnn, None);
        let text = c.to_json().unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::CheckpointVersion(9))));

        let mut missing = checkpoint(Architecture::Lms, Some(0.5));
        missing.threshold = None;
        assert!(Checkpoint::from_json(&missing.to_json().unwrap()).is_err());

        let mut short = checkpoint(Architecture::Lms, Some(0.5));
        short.vocab = Vocab::new();
        assert!(short.model().is_err());

        let mut wrong_dim = checkpoint(Architecture::LmsFfnn, None);
        wrong_dim.config.dim = 4;
        assert!(wrong_dim.model().is_err());
    }
}
