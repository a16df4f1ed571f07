use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::optim::{early_stop, Adam, Scheduler};
use super::report::{accuracy_table, Evaluation, RunRecord, RunReport, REPORT_FILE};
use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::models::{model_input_width, predict, Input, Model, ModelConfig, DEFAULT_VOCAB_SIZE};
use crate::nnkernel::{load_checkpoint, save_checkpoint, Gradients, ParamStore, Tape};
use crate::scalar::Scalar;
use crate::synthgen::label_distribution;
use crate::tensorio::{Dataset, FeatureType, Manifest, Matrix, Sample, Split};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint-best";
pub const LOG_FILE: &str = "log.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation accuracy before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Group similar lengths into batches instead of pure shuffling.
    pub bucket: bool,
}

impl TrainConfig {
    pub const DEFAULT_BATCH: usize = 16;
    pub const DEFAULT_MAX_EPOCHS: usize = 50;
    pub const DEFAULT_PATIENCE: usize = 10;

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            batch: Self::DEFAULT_BATCH,
            max_epochs: Self::DEFAULT_MAX_EPOCHS,
            patience: Self::DEFAULT_PATIENCE,
            seed: 0,
            bucket: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.batch == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch, max_epochs and patience must be positive".into()));
        }
        Ok(())
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let cfg = Self {
            lr: m.require("lr")?,
            batch: m.parse_or("batch", Self::DEFAULT_BATCH)?,
            max_epochs: m.parse_or("max_epochs", Self::DEFAULT_MAX_EPOCHS)?,
            patience: m.parse_or("patience", Self::DEFAULT_PATIENCE)?,
            seed: m.parse_or("seed", 0)?,
            bucket: m.parse_or("bucket", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("lr", self.lr);
        m.set("batch", self.batch);
        m.set("max_epochs", self.max_epochs);
        m.set("patience", self.patience);
        m.set("seed", self.seed);
        m.set("bucket", self.bucket);
        m
    }
}

/// Model config for a dataset: `classes`, `input_width` and, for token
/// corpora, a default `vocab_size` come from the manifest; everything else
/// from `kv`.
pub fn model_config_for(kv: &KvMap, manifest: &Manifest) -> Result<ModelConfig> {
    let mut m = kv.clone();
    m.set("classes", manifest.classes());
    m.set("input_width", model_input_width(manifest.feature_type));
    if manifest.feature_type == FeatureType::Tokens {
        if !m.contains("vocab_size") {
            m.set("vocab_size", DEFAULT_VOCAB_SIZE);
        }
    } else {
        m.remove("vocab_size");
    }
    ModelConfig::from_kv(&m)
}

/// One labelled sequence converted to the model's scalar type.
#[derive(Clone, Debug, PartialEq)]
pub struct Example<S> {
    pub features: Option<Matrix<S>>,
    pub tokens: Vec<usize>,
    pub label: usize,
}

impl<S: Scalar> Example<S> {
    pub fn input(&self) -> Input<'_, S> {
        match &self.features {
            Some(m) => Input::Features(m),
            None => Input::Tokens(&self.tokens),
        }
    }

    pub fn len(&self) -> usize {
        self.input().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn prepare<S: Scalar>(model: &Model, samples: &[Sample]) -> Result<Vec<Example<S>>> {
    let cfg = model.config();
    samples
        .iter()
        .map(|s| {
            if s.label >= cfg.classes {
                return Err(Error::LabelOutOfRange {
                    id: s.id.clone(),
                    label: s.label,
                    classes: cfg.classes,
                });
            }
            match cfg.vocab_size {
                Some(v) => {
                    let tokens = s.token_ids()?;
                    if let Some(&id) = tokens.iter().find(|&&id| id >= v) {
                        return Err(Error::IdOutOfRange { id, size: v });
                    }
                    Ok(Example {
                        features: None,
                        tokens,
                        label: s.label,
                    })
                }
                None => Ok(Example {
                    features: Some(s.features.cast()),
                    tokens: Vec::new(),
                    label: s.label,
                }),
            }
        })
        .collect()
}

/// Cross-entropy of one example and its parameter gradients.
pub fn example_loss_grad<S: Scalar>(
    model: &Model,
    params: &ParamStore<S>,
    ex: &Example<S>,
) -> Result<(f64, Gradients<S>)> {
    let mut tape = Tape::new(params);
    let out = model.forward(&mut tape, ex.input(), None)?;
    let loss = tape.cross_entropy(out.logits, ex.label)?;
    let value = tape.value(loss).get(0, 0).as_f64();
    Ok((value, tape.backward(loss)?))
}

fn example_loss_logits<S: Scalar>(model: &Model, params: &ParamStore<S>, ex: &Example<S>) -> Result<(f64, usize)> {
    let mut tape = Tape::new(params);
    let out = model.forward(&mut tape, ex.input(), None)?;
    let pred = predict(tape.value(out.logits).as_slice());
    let loss = tape.cross_entropy(out.logits, ex.label)?;
    Ok((tape.value(loss).get(0, 0).as_f64(), pred))
}

/// Accuracy, per-class accuracy, confusion matrix and mean loss.
pub fn evaluate_examples<S: Scalar>(
    model: &Model,
    params: &ParamStore<S>,
    examples: &[Example<S>],
) -> Result<Evaluation> {
    let results = examples
        .par_iter()
        .map(|ex| example_loss_logits(model, params, ex))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let preds: Vec<usize> = results.iter().map(|r| r.1).collect();
    let mut eval = Evaluation::from_predictions(&labels, &preds, model.config().classes)?;
    eval.mean_loss = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
    Ok(eval)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

pub fn log_tsv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\tval_acc\tlr\n");
    for e in log {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    /// Parameters from the epoch with the best validation accuracy.
    pub best: ParamStore<S>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Per-epoch visiting order: a seeded shuffle, optionally sorted by length
/// into batches whose order is then shuffled.
fn epoch_batches<S: Scalar>(examples: &[Example<S>], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    if cfg.bucket {
        order.sort_by_key(|&i| examples[i].len());
        let mut batches: Vec<Vec<usize>> = order.chunks(cfg.batch).map(<[usize]>::to_vec).collect();
        batches.shuffle(rng);
        return batches;
    }
    order.chunks(cfg.batch).map(<[usize]>::to_vec).collect()
}

/// Adam with the plateau schedule and early stopping on validation accuracy.
/// Each batch evaluates its examples in parallel, then sums their gradients
/// in batch order, so results do not depend on the thread count.
pub fn train<S: Scalar>(
    model: &Model,
    mut params: ParamStore<S>,
    train_set: &[Example<S>],
    val_set: &[Example<S>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit(Split::Train.name().into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit(Split::Val.name().into()));
    }
    let mut adam = Adam::new(&params, cfg.lr);
    let mut sched = Scheduler::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = Vec::new();
    let mut history = Vec::new();
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        adam.lr = lr;
        let mut loss_sum = 0.0;
        for batch in epoch_batches(train_set, cfg, &mut rng) {
            let results = batch
                .par_iter()
                .map(|&i| example_loss_grad(model, &params, &train_set[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut total: Option<Gradients<S>> = None;
            for (loss, grads) in results {
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("non-finite training loss {loss}"),
                    });
                }
                loss_sum += loss;
                match &mut total {
                    Some(t) => t.add(&grads),
                    None => total = Some(grads),
                }
            }
            let total = total.expect("non-empty batch");
            if !total.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite gradient".into(),
                });
            }
            params.zero_grad();
            params.accumulate(&total, S::one() / S::of_usize(batch.len()));
            adam.step(&mut params).map_err(|e| Error::Diverged {
                epoch,
                detail: e.to_string(),
            })?;
        }
        let val = evaluate_examples(model, &params, val_set)?;
        if !val.mean_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite validation loss {}", val.mean_loss),
            });
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.mean_loss,
            val_acc: val.accuracy,
            lr,
        };
        on_epoch(&entry);
        log.push(entry);
        history.push(val.accuracy);
        if val.accuracy > best.2 {
            best = (params.clone(), epoch, val.accuracy);
        }
        sched.step(val.mean_loss);
        if early_stop(&history, cfg.patience).0 {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        best_val_acc: best.2,
        log,
        stopped_early,
    })
}

/// Everything a finished run directory records.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub test: Evaluation,
    pub log: Vec<EpochLog>,
}

/// Trains one model on a dataset and writes the run directory:
/// `config.txt`, `checkpoint-best/`, `log.tsv` and `report.txt`.
/// `settings` is echoed into `config.txt` next to the resolved values.
pub fn run_training(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    out_dir: &Path,
    settings: &KvMap,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RunOutcome> {
    train_cfg.validate()?;
    let model = Model::new(model_cfg.clone())?;
    let feature = dataset.manifest.feature_type;
    if model_cfg.feature_type() != Some(feature) {
        return Err(Error::Config(format!("model config does not take {feature} inputs")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut echo = settings.clone();
    echo.merge(&model_cfg.to_kv());
    echo.merge(&train_cfg.to_kv());
    echo.write(out_dir.join(CONFIG_FILE))?;

    let load = |split: Split| -> Result<Vec<Example<f32>>> {
        let samples = dataset.load_split(split)?;
        if samples.is_empty() {
            return Err(Error::EmptySplit(split.name().into()));
        }
        prepare(&model, &samples)
    };
    let train_set = load(Split::Train)?;
    let val_set = load(Split::Val)?;
    let test_set = load(Split::Test)?;

    let params = model.init::<f32>(train_cfg.seed)?;
    let outcome = train(&model, params, &train_set, &val_set, train_cfg, on_epoch);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let _ = fs::write(out_dir.join("error.txt"), format!("{e}\n"));
            return Err(e);
        }
    };
    fs::write(out_dir.join(LOG_FILE), log_tsv(&outcome.log)).map_err(|e| Error::io(out_dir.join(LOG_FILE), e))?;
    let ckpt = out_dir.join(CHECKPOINT_DIR);
    save_checkpoint(&ckpt, &outcome.best)?;
    model_cfg.to_kv().write(ckpt.join(CONFIG_FILE))?;

    let test = evaluate_examples(&model, &outcome.best, &test_set)?;
    let majority = label_distribution(&dataset.manifest)?.majority_accuracy;
    let record = RunRecord {
        family: model_cfg.family(),
        feature,
        seed: train_cfg.seed,
        test_accuracy: test.accuracy,
        val_accuracy: outcome.best_val_acc,
        best_epoch: outcome.best_epoch,
        majority_accuracy: majority,
    };
    write_report(out_dir, &record, &test, &dataset.manifest.class_names)?;
    Ok(RunOutcome {
        record,
        test,
        log: outcome.log,
    })
}

fn write_report(out_dir: &Path, record: &RunRecord, test: &Evaluation, class_names: &[String]) -> Result<()> {
    let single = RunReport {
        family: record.family,
        feature: record.feature,
        seeds: vec![record.seed],
        accuracies: vec![record.test_accuracy],
        evaluations: vec![test.clone()],
    };
    let mut text = accuracy_table(&[single], Some(record.majority_accuracy));
    text.push('\n');
    for (k, v) in record.to_kv().iter() {
        writeln!(text, "# {k}={v}").unwrap();
    }
    for line in test.to_text(class_names).lines() {
        writeln!(text, "# {line}").unwrap();
    }
    let path = out_dir.join(REPORT_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Loads a checkpoint directory written by [`run_training`].
pub fn load_trained(checkpoint_dir: &Path) -> Result<(Model, ParamStore<f32>)> {
    let cfg = ModelConfig::from_kv(&KvMap::load(checkpoint_dir.join(CONFIG_FILE))?)?;
    let model = Model::new(cfg)?;
    let params = load_checkpoint::<f32>(checkpoint_dir)?;
    let expected = model.param_specs();
    let matches =
        |s: &crate::nnkernel::ParamSpec| params.get(&s.name).is_some_and(|e| e.value.shape() == (s.rows, s.cols));
    if params.len() != expected.len() || !expected.iter().all(matches) {
        return Err(Error::shape(
            "load_trained",
            format!(
                "checkpoint {} does not match its model config",
                checkpoint_dir.display()
            ),
        ));
    }
    Ok((model, params))
}

/// Evaluates a saved checkpoint on one split of a dataset.
pub fn evaluate_checkpoint(checkpoint_dir: &Path, dataset: &Dataset, split: Split) -> Result<Evaluation> {
    let (model, params) = load_trained(checkpoint_dir)?;
    let feature = dataset.manifest.feature_type;
    if model.config().feature_type() != Some(feature) {
        return Err(Error::Config(format!("checkpoint does not take {feature} inputs")));
    }
    if model.config().classes != dataset.manifest.classes() {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, manifest {}",
            model.config().classes,
            dataset.manifest.classes()
        )));
    }
    let samples = dataset.load_split(split)?;
    if samples.is_empty() {
        return Err(Error::EmptySplit(split.name().into()));
    }
    evaluate_examples(&model, &params, &prepare(&model, &samples)?)
}
