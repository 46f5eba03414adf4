//! Training loops with early stopping, best-epoch selection and seeding.
//!
//! Both model families share one loop: Adam updates on summed cross
//! entropy, one validation pass per epoch, and a snapshot of the parameters
//! at the best validation score. Given the same config, data and seed a run
//! is bitwise reproducible.

mod config;
mod multiseed;

use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{ModelKind, SelectionMetric, TrainConfig};
pub use multiseed::{multiseed, MeanSd};

use crate::embed::{EmbeddingProvider, EmbeddingScorer};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::genmodels::{BeamConfig, GenBatch, GenerationModel};
use crate::nn::clip_grad_norm;
use crate::resolver::{ResBatch, ResolverModel};
use crate::textprep::{shuffle_contexts, GenInstance, ResInstance, ShuffleMode, Vocabulary};
use crate::util::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss per target token (generation) or per instance (resolution).
    pub train_loss: f64,
    pub validation: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation: Option<f64>,
    pub stop_reason: StopReason,
    /// Where the best-epoch parameters were written, if anywhere.
    pub checkpoint: Option<PathBuf>,
    /// Excluded from serialized records so they stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunRecord {
    fn new(config: &TrainConfig) -> Self {
        RunRecord {
            model: config.model,
            seed: config.seed,
            epochs: Vec::new(),
            best_epoch: None,
            best_validation: None,
            stop_reason: StopReason::MaxEpochs,
            checkpoint: None,
            wall_clock_secs: 0.0,
        }
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Inputs for a generation run.
pub struct GenerationData<'a> {
    pub vocab: &'a Vocabulary,
    pub features: &'a FeatureTable,
    pub train: &'a [GenInstance],
    pub validation: &'a [GenInstance],
    /// Scores decoded utterances when selecting on embedding F1.
    pub embeddings: &'a dyn EmbeddingProvider,
}

/// Inputs for a resolution run.
pub struct ResolutionData<'a> {
    pub features: &'a FeatureTable,
    pub embeddings: &'a dyn EmbeddingProvider,
    pub train: &'a [ResInstance],
    pub validation: &'a [ResInstance],
}

/// Directory layout of one training run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn log(&self) -> PathBuf {
        self.root.join("train.log")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.checkpoints().join("best.ckpt")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("record.json")
    }

    /// Creates the directories and writes the config.
    pub fn prepare(&self, config: &TrainConfig) -> Result<()> {
        std::fs::create_dir_all(self.checkpoints()).map_err(|e| Error::io(self.checkpoints(), e))?;
        util::write_string(&self.config(), &config.to_toml())
    }
}

/// One model family as seen by the shared loop.
trait Task {
    fn vars(&self) -> Vec<Var>;
    fn snapshot(&self) -> Result<Vec<(String, Tensor)>>;
    fn restore(&self, tensors: &[(String, Tensor)]) -> Result<()>;
    fn train_len(&self) -> usize;
    fn start_epoch(&mut self, epoch: usize);
    /// Summed loss over `indices` and the number of terms it sums.
    fn batch_loss(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<(Tensor, usize)>;
    fn validate(&self) -> Result<f64>;
}

/// Returns the record and the best-epoch parameters, already loaded into
/// the task's model.
fn run_loop<T: Task>(config: &TrainConfig, task: &mut T) -> Result<RunRecord> {
    let started = Instant::now();
    let mut record = RunRecord::new(config);
    let vars = task.vars();
    let mut opt = AdamW::new(
        vars.clone(),
        ParamsAdamW {
            lr: config.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout", 0));
    let mut best: Option<Vec<(String, Tensor)>> = None;
    let mut stale = 0usize;
    let limit = config.patience.max(1);
    let n = task.train_len();
    if n == 0 {
        return Err(Error::Input("empty training set".into()));
    }
    for epoch in 1..=config.max_epochs {
        task.start_epoch(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "batch-order", epoch as u64)));
        let mut total = 0.0f64;
        let mut terms = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (loss, count) = task.batch_loss(chunk, &mut dropout_rng)?;
            let value = f64::from(loss.to_scalar::<f32>()?);
            if !value.is_finite() {
                record.stop_reason = StopReason::Diverged;
                record.wall_clock_secs = started.elapsed().as_secs_f64();
                if let Some(b) = &best {
                    task.restore(b)?;
                }
                return Err(Error::Diverged {
                    epoch,
                    message: format!("non-finite training loss {value}"),
                    record: Box::new(record),
                });
            }
            total += value;
            terms += count;
            let mut grads = loss.backward()?;
            if let Some(max_norm) = config.grad_clip {
                clip_grad_norm(&vars, &mut grads, max_norm)?;
            }
            opt.step(&grads)?;
        }
        let train_loss = total / terms.max(1) as f64;
        let validation = task.validate()?;
        let improved = record.best_validation.is_none_or(|b| validation > b);
        if improved {
            record.best_validation = Some(validation);
            record.best_epoch = Some(epoch);
            best = Some(task.snapshot()?);
            stale = 0;
        } else {
            stale += 1;
        }
        log::info!(
            "epoch {epoch}: loss {train_loss:.4} validation {validation:.2}{}",
            if improved { " *" } else { "" }
        );
        record.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation,
            improved,
        });
        if stale >= limit {
            record.stop_reason = StopReason::Patience;
            break;
        }
    }
    if let Some(b) = &best {
        task.restore(b)?;
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    log::info!(
        "finished after {} epochs in {:.1}s; best epoch {:?}",
        record.epochs.len(),
        record.wall_clock_secs,
        record.best_epoch
    );
    Ok(record)
}

struct GenTask<'a> {
    model: GenerationModel,
    data: &'a GenerationData<'a>,
    train: Vec<GenInstance>,
    config: &'a TrainConfig,
}

impl GenTask<'_> {
    fn batch(&self, instances: &[&GenInstance]) -> Result<GenBatch> {
        GenBatch::new(instances, self.data.features, self.data.vocab, self.model.config().context_size)
    }
}

impl Task for GenTask<'_> {
    fn vars(&self) -> Vec<Var> {
        self.model.params().vars()
    }

    fn snapshot(&self) -> Result<Vec<(String, Tensor)>> {
        self.model.params().snapshot()
    }

    fn restore(&self, tensors: &[(String, Tensor)]) -> Result<()> {
        self.model.params().assign(tensors)
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn start_epoch(&mut self, _epoch: usize) {}

    fn batch_loss(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<(Tensor, usize)> {
        let insts: Vec<&GenInstance> = indices.iter().map(|&i| &self.train[i]).collect();
        let batch = self.batch(&insts)?;
        let fwd = self.model.forward(&batch, Some(rng))?;
        let tokens = insts.iter().map(|i| i.target.len() - 1).sum();
        Ok((self.model.loss(&fwd, &batch)?, tokens))
    }

    fn validate(&self) -> Result<f64> {
        validate_generation(&self.model, self.data, self.config)
    }
}

/// Selection metric of `model` on the validation split.
pub fn validate_generation(model: &GenerationModel, data: &GenerationData<'_>, config: &TrainConfig) -> Result<f64> {
    if data.validation.is_empty() {
        return Err(Error::Input("empty validation set".into()));
    }
    match config.selection {
        SelectionMetric::TokenAccuracy => {
            let (mut correct, mut total) = (0usize, 0usize);
            for chunk in data.validation.chunks(config.batch_size) {
                let refs: Vec<&GenInstance> = chunk.iter().collect();
                let batch = GenBatch::new(&refs, data.features, data.vocab, model.config().context_size)?;
                let (c, t) = model.token_accuracy(&model.forward(&batch, None)?, &batch)?;
                correct += c;
                total += t;
            }
            Ok(100.0 * correct as f64 / total.max(1) as f64)
        }
        SelectionMetric::EmbeddingF1 => {
            let beam = BeamConfig {
                width: config.validation_beam_width,
                max_len: config.max_decode_len,
                length_normalize: true,
            };
            let scorer = EmbeddingScorer::new(data.embeddings);
            let mut sum = 0.0;
            for inst in data.validation {
                let out = model.generate(inst, data.features, data.vocab, &beam)?;
                sum += scorer.best_f1(&out.tokens, &inst.chain_refs)?;
            }
            Ok(100.0 * sum / data.validation.len() as f64)
        }
        SelectionMetric::Accuracy => Err(Error::Config("generation models cannot select on accuracy".into())),
    }
}

/// Trains a generation model; the returned model holds the best-epoch
/// parameters, which are also written to `checkpoint` when given.
pub fn train_generation(
    config: &TrainConfig,
    data: &GenerationData<'_>,
    checkpoint: Option<&Path>,
) -> Result<(GenerationModel, RunRecord)> {
    config.validate()?;
    let gen_config = config.gen_config(data.vocab.len(), data.features.dim())?;
    let model = GenerationModel::new(gen_config, config.seed)?;
    let mut train = data.train.to_vec();
    shuffle_contexts(&mut train, ShuffleMode::Once, config.seed, 0);
    let mut task = GenTask {
        model,
        data,
        train,
        config,
    };
    let hash = data.vocab.content_hash();
    let result = run_loop(config, &mut task);
    let mut record = match result {
        Ok(r) => r,
        Err(Error::Diverged { epoch, message, mut record }) => {
            if let (Some(path), Some(_)) = (checkpoint, record.best_epoch) {
                task.model.save(path, &hash)?;
                record.checkpoint = Some(path.to_path_buf());
            }
            return Err(Error::Diverged { epoch, message, record });
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = checkpoint {
        task.model.save(path, &hash)?;
        record.checkpoint = Some(path.to_path_buf());
    }
    Ok((task.model, record))
}

struct ResTask<'a> {
    model: ResolverModel,
    data: &'a ResolutionData<'a>,
    train: Vec<ResInstance>,
    config: &'a TrainConfig,
}

impl Task for ResTask<'_> {
    fn vars(&self) -> Vec<Var> {
        self.model.params().vars()
    }

    fn snapshot(&self) -> Result<Vec<(String, Tensor)>> {
        self.model.params().snapshot()
    }

    fn restore(&self, tensors: &[(String, Tensor)]) -> Result<()> {
        self.model.params().assign(tensors)
    }

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn start_epoch(&mut self, epoch: usize) {
        shuffle_contexts(&mut self.train, ShuffleMode::PerEpoch, self.config.seed, epoch);
    }

    fn batch_loss(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<(Tensor, usize)> {
        let insts: Vec<&ResInstance> = indices.iter().map(|&i| &self.train[i]).collect();
        let batch = ResBatch::new(&insts, self.data.features, self.data.embeddings, self.model.config().context_size)?;
        let fwd = self.model.forward(&batch, Some(rng))?;
        Ok((self.model.loss(&fwd, &batch)?, insts.len()))
    }

    fn validate(&self) -> Result<f64> {
        validate_resolution(&self.model, self.data, self.config.batch_size)
    }
}

/// Resolution accuracy x100 on the validation split.
pub fn validate_resolution(model: &ResolverModel, data: &ResolutionData<'_>, batch_size: usize) -> Result<f64> {
    if data.validation.is_empty() {
        return Err(Error::Input("empty validation set".into()));
    }
    let mut correct = 0usize;
    for chunk in data.validation.chunks(batch_size.max(1)) {
        let refs: Vec<&ResInstance> = chunk.iter().collect();
        let batch = ResBatch::new(&refs, data.features, data.embeddings, model.config().context_size)?;
        let res = model.resolve(&model.forward(&batch, None)?)?;
        correct += res.iter().zip(&batch.targets).filter(|(r, &t)| r.predicted == t).count();
    }
    Ok(100.0 * correct as f64 / data.validation.len() as f64)
}

/// Trains a resolver; the returned model holds the best-epoch parameters.
pub fn train_resolution(
    config: &TrainConfig,
    data: &ResolutionData<'_>,
    checkpoint: Option<&Path>,
) -> Result<(ResolverModel, RunRecord)> {
    config.validate()?;
    let mut universe: Vec<String> = data
        .train
        .iter()
        .chain(data.validation)
        .flat_map(|i| i.context.iter().cloned())
        .collect();
    universe.sort();
    universe.dedup();
    let res_config = config.resolver_config(data.embeddings.dim(), data.features.dim(), universe)?;
    let model = ResolverModel::new(res_config, config.seed)?;
    let mut task = ResTask {
        model,
        data,
        train: data.train.to_vec(),
        config,
    };
    let result = run_loop(config, &mut task);
    let mut record = match result {
        Ok(r) => r,
        Err(Error::Diverged { epoch, message, mut record }) => {
            if let (Some(path), Some(_)) = (checkpoint, record.best_epoch) {
                task.model.save(path)?;
                record.checkpoint = Some(path.to_path_buf());
            }
            return Err(Error::Diverged { epoch, message, record });
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = checkpoint {
        task.model.save(path)?;
        record.checkpoint = Some(path.to_path_buf());
    }
    Ok((task.model, record))
}
