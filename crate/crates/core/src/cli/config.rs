use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::data::DataFormat;
use crate::error::{Error, Result};
use crate::geometry::CurvatureSpace;
use crate::model::{Architecture, FeatureSpec, LossConfig, Model, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_HIDDEN};

pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_EPOCHS: usize = 15;
pub const DEFAULT_DIM: usize = 50;
/// Negative hypotheses per premise in disentanglement epochs.
pub const DEFAULT_NEGATIVES: usize = 10;

/// Fully resolved training configuration. Echoed into checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Architecture,
    pub dim: usize,
    pub curvature: f64,
    pub classes: usize,
    pub features: Option<FeatureSpec>,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: Option<String>,
    /// Share of the training file held out for validation when no
    /// validation file is given.
    pub val_fraction: f64,
    /// Leading epochs trained with the disentanglement loss instead.
    pub disentangle_epochs: usize,
    pub negatives: usize,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `model`: curvature and feature layout follow the
    /// architecture.
    pub fn for_model(model: Architecture) -> Self {
        Self {
            model,
            dim: DEFAULT_DIM,
            curvature: model.default_curvature(),
            classes: 2,
            features: model.default_features(),
            hidden: DEFAULT_HIDDEN,
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            seed: 0,
            train: None,
            val: None,
            test: None,
            format: None,
            val_fraction: 0.0,
            disentangle_epochs: 0,
            negatives: DEFAULT_NEGATIVES,
            out: PathBuf::from("checkpoint.json"),
            log: None,
        }
    }

    pub fn space(&self) -> Result<CurvatureSpace> {
        CurvatureSpace::new(self.dim, self.curvature)
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            beta: self.beta,
            classes: self.classes,
        }
    }

    pub fn data_format(&self, path: &Path) -> Result<DataFormat> {
        match &self.format {
            Some(f) => f.parse().map_err(Error::Config),
            None => Ok(DataFormat::from_path(path)),
        }
    }

    /// Metrics log path: `log` if set, else next to the checkpoint.
    pub fn log_path(&self) -> PathBuf {
        self.log.clone().unwrap_or_else(|| self.out.with_extension("log.jsonl"))
    }

    /// Rejects incompatible combinations before any data is touched.
    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        self.loss().validate()?;
        Model::check_compatible(self.model, &space, self.features.as_ref(), &self.loss())?;
        if self.model.has_ffnn() && self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.disentangle_epochs > 0 && self.negatives == 0 {
            return Err(Error::Config("disentanglement needs at least one negative".into()));
        }
        if let Some(f) = &self.format {
            f.parse::<DataFormat>().map_err(Error::Config)?;
        }
        Ok(())
    }
}

/// Training flags. Every field is optional so a config file can fill the
/// gaps; flags given on the command line win.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct RunArgs {
    /// MS, MS_FFNN, MA_FFNN, LMS, RMS, LMS_FFNN, RMS_FFNN, EA_FFNN or ES_FFNN
    #[arg(long)]
    pub model: Option<Architecture>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Ball curvature; 0 for the Euclidean models [default: 1 or 0 by model]
    #[arg(long)]
    pub curvature: Option<f64>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Classifier inputs, comma separated: u, v, mdiff, absmdiff, cos, dist,
    /// absdiff, hadamard, dot, edist
    #[arg(long)]
    pub features: Option<FeatureSpec>,
    /// Classifier hidden width
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Margin for non-entailing pairs
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the distance term in the pair energy
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// jsonl or tsv [default: from the file extension]
    #[arg(long)]
    pub format: Option<String>,
    /// Hold out this share of training when no --val file is given
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Train the first N epochs with the disentanglement loss
    #[arg(long)]
    pub disentangle_epochs: Option<usize>,
    /// Negative hypotheses per premise in disentanglement epochs
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Checkpoint path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch metrics log [default: next to the checkpoint]
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?} for {key}: {e}")))
}

impl RunArgs {
    /// Sets one field from its flag name (dashes or underscores).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "model" => self.model = Some(parse_value(k, value)?),
            "dim" => self.dim = Some(parse_value(k, value)?),
            "curvature" => self.curvature = Some(parse_value(k, value)?),
            "classes" => self.classes = Some(parse_value(k, value)?),
            "features" => self.features = Some(parse_value(k, value)?),
            "hidden" => self.hidden = Some(parse_value(k, value)?),
            "lr" => self.lr = Some(parse_value(k, value)?),
            "epochs" => self.epochs = Some(parse_value(k, value)?),
            "alpha" => self.alpha = Some(parse_value(k, value)?),
            "beta" => self.beta = Some(parse_value(k, value)?),
            "seed" => self.seed = Some(parse_value(k, value)?),
            "train" => self.train = Some(value.into()),
            "val" => self.val = Some(value.into()),
            "test" => self.test = Some(value.into()),
            "format" => self.format = Some(value.into()),
            "val-fraction" => self.val_fraction = Some(parse_value(k, value)?),
            "disentangle-epochs" => self.disentangle_epochs = Some(parse_value(k, value)?),
            "negatives" => self.negatives = Some(parse_value(k, value)?),
            "out" => self.out = Some(value.into()),
            "log" => self.log = Some(value.into()),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut args = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", i + 1)))?;
            args.set(key, value)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(args)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::from_config_text(&std::fs::read_to_string(path)?)
    }

    /// Fields set here win; the rest come from `base`.
    pub fn over(self, base: RunArgs) -> RunArgs {
        RunArgs {
            model: self.model.or(base.model),
            dim: self.dim.or(base.dim),
            curvature: self.curvature.or(base.curvature),
            classes: self.classes.or(base.classes),
            features: self.features.or(base.features),
            hidden: self.hidden.or(base.hidden),
            lr: self.lr.or(base.lr),
            epochs: self.epochs.or(base.epochs),
            alpha: self.alpha.or(base.alpha),
            beta: self.beta.or(base.beta),
            seed: self.seed.or(base.seed),
            train: self.train.or(base.train),
            val: self.val.or(base.val),
            test: self.test.or(base.test),
            format: self.format.or(base.format),
            val_fraction: self.val_fraction.or(base.val_fraction),
            disentangle_epochs: self.disentangle_epochs.or(base.disentangle_epochs),
            negatives: self.negatives.or(base.negatives),
            out: self.out.or(base.out),
            log: self.log.or(base.log),
        }
    }

    /// Fills unset fields with the model's defaults and validates.
    pub fn resolve(self) -> Result<RunConfig> {
        let model = self
            .model
            .ok_or_else(|| Error::Config("no model given (use --model or a config file)".into()))?;
        let d = RunConfig::for_model(model);
        let cfg = RunConfig {
            model,
            dim: self.dim.unwrap_or(d.dim),
            curvature: self.curvature.unwrap_or(d.curvature),
            classes: self.classes.unwrap_or(d.classes),
            features: self.features.or(d.features),
            hidden: self.hidden.unwrap_or(d.hidden),
            lr: self.lr.unwrap_or(d.lr),
            epochs: self.epochs.unwrap_or(d.epochs),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            seed: self.seed.unwrap_or(d.seed),
            train: self.train,
            val: self.val,
            test: self.test,
            format: self.format,
            val_fraction: self.val_fraction.unwrap_or(d.val_fraction),
            disentangle_epochs: self.disentangle_epochs.unwrap_or(d.disentangle_epochs),
            negatives: self.negatives.unwrap_or(d.negatives),
            out: self.out.unwrap_or(d.out),
            log: self.log,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file =
            RunArgs::from_config_text("# numbers run\nmodel = LMS_FFNN\ndim=5\nlr = 0.1 # fast\nval_fraction=0.1\n")
                .unwrap();
        let flags = RunArgs {
            dim: Some(7),
            ..Default::default()
        };
        let cfg = flags.over(file).resolve().unwrap();
        assert_eq!(cfg.model, Architecture::LmsFfnn);
        assert_eq!(cfg.dim, 7);
        assert_eq!(cfg.lr, 0.1);
        assert_eq!(cfg.val_fraction, 0.1);
        assert_eq!(cfg.curvature, 1.0);
        assert_eq!(cfg.features.unwrap().to_string(), "u,v,mdiff,cos,dist");
    }

    #[test]
    fn defaults_follow_the_model() {
        let ea = RunArgs {
            model: Some(Architecture::EaFfnn),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(ea.curvature, 0.0);
        assert_eq!(ea.features.unwrap().to_string(), "u,v,absdiff,hadamard");
        let ms = RunArgs {
            model: Some(Architecture::Ms),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert!(ms.features.is_none());
        assert_eq!((ms.alpha, ms.beta, ms.lr), (0.05, 0.5, 0.05));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(RunArgs::from_config_text("model LMS").is_err());
        assert!(RunArgs::from_config_text("colour = red").is_err());
        assert!(RunArgs::from_config_text("dim = five").is_err());
        let bad = |text: &str| RunArgs::from_config_text(text).unwrap().resolve().is_err();
        assert!(bad("dim = 5"));
        assert!(bad("model = MS\nclasses = 3"));
        assert!(bad("model = MS_FFNN\ncurvature = 0"));
        assert!(bad("model = EA_FFNN\nfeatures = u,v,dist"));
        assert!(bad("model = LMS\nlr = -1"));
        assert!(bad("model = LMS\nformat = csv"));
    }
}
