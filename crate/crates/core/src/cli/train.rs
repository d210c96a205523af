use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use crate::data::{DatasetSplit, Sample, Sentence};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{select_threshold, Model};

/// Vocabulary-encoded splits ready for training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl EncodedSplit {
    pub fn new(split: &DatasetSplit) -> Self {
        Self {
            train: DatasetSplit::encode(&split.train, &split.vocab),
            validation: DatasetSplit::encode(&split.validation, &split.vocab),
            test: DatasetSplit::encode(&split.test, &split.vocab),
        }
    }

    fn all(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Metrics of the initial parameters.
    Init,
    Classify,
    Disentangle,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: Option<f64>,
    /// Embeddings found outside the ball after an update.
    pub violations: usize,
    #[serde(with = "super::checkpoint::threshold_repr")]
    pub threshold: Option<f64>,
    /// Accuracy on the model-selection set (validation, or training when
    /// there is none).
    pub selection_accuracy: f64,
    pub validation: Option<MetricsReport>,
    pub test: Option<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best epoch by selection accuracy.
    pub model: Model,
    pub threshold: Option<f64>,
    pub best_epoch: usize,
    pub records: Vec<EpochRecord>,
    pub violations: usize,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }
}

/// Energies of every sample, computed in parallel.
pub fn scores(model: &Model, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| model.score(s)).collect()
}

pub fn predictions(model: &Model, samples: &[Sample], threshold: Option<f64>) -> Result<Vec<usize>> {
    samples.par_iter().map(|s| model.predict(s, threshold)).collect()
}

pub fn evaluate_model(model: &Model, samples: &[Sample], threshold: Option<f64>) -> Result<MetricsReport> {
    let pred = predictions(model, samples, threshold)?;
    let classes = model.loss.classes;
    let gold: Vec<usize> = samples.iter().map(|s| s.label.class_index(classes)).collect();
    evaluate(&pred, &gold, classes)
}

/// Threshold for a margin model, chosen to maximize accuracy on `samples`.
pub fn fit_threshold(model: &Model, samples: &[Sample]) -> Result<f64> {
    let s = scores(model, samples)?;
    let entails: Vec<bool> = samples.iter().map(|x| x.label.is_entailment()).collect();
    Ok(select_threshold(&s, &entails)?.threshold)
}

fn check_sentences(cfg: &RunConfig, data: &EncodedSplit) -> Result<()> {
    let needs_tree = cfg.model.composition().needs_tree();
    for s in data.all() {
        for sentence in [&s.premise, &s.hypothesis] {
            if sentence.is_empty() {
                return Err(Error::EmptySequence);
            }
            if needs_tree && sentence.arrays.is_none() {
                return Err(Error::Config(format!(
                    "{} composes along parse trees; the data has plain token sequences",
                    cfg.model
                )));
            }
        }
    }
    Ok(())
}

struct Evaluation {
    threshold: Option<f64>,
    selection_accuracy: f64,
    validation: Option<MetricsReport>,
    test: Option<MetricsReport>,
}

fn evaluate_epoch(model: &Model, data: &EncodedSplit) -> Result<Evaluation> {
    let selection = if data.validation.is_empty() {
        &data.train
    } else {
        &data.validation
    };
    let threshold = if model.arch.is_margin() {
        Some(fit_threshold(model, selection)?)
    } else {
        None
    };
    let report = |samples: &[Sample]| -> Result<Option<MetricsReport>> {
        if samples.is_empty() {
            Ok(None)
        } else {
            evaluate_model(model, samples, threshold).map(Some)
        }
    };
    let validation = report(&data.validation)?;
    let selection_accuracy = match &validation {
        Some(v) => v.accuracy,
        None => evaluate_model(model, &data.train, threshold)?.accuracy,
    };
    Ok(Evaluation {
        threshold,
        selection_accuracy,
        validation,
        test: report(&data.test)?,
    })
}

/// Negative hypotheses for the premise of `anchor`: hypotheses of other
/// training samples, drawn with replacement.
fn draw_negatives<'a, R: Rng>(rng: &mut R, train: &'a [Sample], anchor: usize, count: usize) -> Vec<&'a Sentence> {
    if train.len() < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let mut j = rng.gen_range(0..train.len() - 1);
            if j >= anchor {
                j += 1;
            }
            &train[j].hypothesis
        })
        .collect()
}

/// Per-sample training with model selection by validation accuracy.
///
/// Epoch 0 evaluates the initial parameters; epochs `1..=cfg.epochs` each
/// visit the training set once in a freshly shuffled order. `on_epoch` sees
/// every record as soon as it is complete.
pub fn train<F>(cfg: &RunConfig, data: &EncodedSplit, vocab_size: usize, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord) -> Result<()>,
{
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_sentences(cfg, data)?;
    if data.validation.is_empty() {
        warn!("no validation set; threshold and model selection use the training set");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(
        cfg.model,
        cfg.space()?,
        cfg.features.clone(),
        cfg.loss(),
        vocab_size,
        cfg.hidden,
        &mut rng,
    )?;

    let mut records = Vec::with_capacity(cfg.epochs + 1);
    let mut total_violations = 0;
    let eval = evaluate_epoch(&model, data)?;
    let mut best = (0, eval.selection_accuracy, model.clone(), eval.threshold);
    let record = EpochRecord {
        seed: cfg.seed,
        epoch: 0,
        phase: Phase::Init,
        mean_loss: None,
        violations: 0,
        threshold: eval.threshold,
        selection_accuracy: eval.selection_accuracy,
        validation: eval.validation,
        test: eval.test,
    };
    on_epoch(&record)?;
    records.push(record);

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let phase = if epoch <= cfg.disentangle_epochs {
            Phase::Disentangle
        } else {
            Phase::Classify
        };
        order.shuffle(&mut rng);
        let (mut loss_sum, mut steps, mut violations) = (0.0, 0usize, 0usize);
        for &i in &order {
            let sample = &data.train[i];
            let outcome = match phase {
                Phase::Disentangle => {
                    // only entailing pairs have a premise to pull the hypothesis towards
                    if !sample.label.is_entailment() {
                        continue;
                    }
                    let negatives = draw_negatives(&mut rng, &data.train, i, cfg.negatives);
                    model.step_with(cfg.lr, |m, g| {
                        m.disentangle_loss(g, &sample.premise, &sample.hypothesis, &negatives)
                    })
                }
                _ => model.train_step(sample, cfg.lr),
            }
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, training sample {i}")),
                other => other,
            })?;
            loss_sum += outcome.loss;
            steps += 1;
            violations += outcome.violations;
        }
        total_violations += violations;
        let eval = evaluate_epoch(&model, data)?;
        let record = EpochRecord {
            seed: cfg.seed,
            epoch,
            phase,
            mean_loss: (steps > 0).then(|| loss_sum / steps as f64),
            violations,
            threshold: eval.threshold,
            selection_accuracy: eval.selection_accuracy,
            validation: eval.validation,
            test: eval.test,
        };
        info!(
            "epoch {epoch}: loss {:.5} selection accuracy {:.4}",
            record.mean_loss.unwrap_or(f64::NAN),
            record.selection_accuracy
        );
        if record.selection_accuracy > best.1 {
            best = (epoch, record.selection_accuracy, model.clone(), record.threshold);
        }
        on_epoch(&record)?;
        records.push(record);
    }
    let (best_epoch, _, model, threshold) = best;
    Ok(TrainOutcome {
        model,
        threshold,
        best_epoch,
        records,
        violations: total_violations,
    })
}
