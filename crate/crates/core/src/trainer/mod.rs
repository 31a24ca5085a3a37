//! Joint task and adversarial training.
//!
//! Each sentence is run forward once on its fused embeddings `e`. The
//! gradient of the task loss at `e` gives the perturbation
//! `r = ε g / ‖g‖₂`, and a second forward on `e + r` (with `r` constant)
//! gives the adversarial loss. Both backward passes accumulate into the same
//! parameter gradients, so one optimizer step minimizes
//! `mean(L_task) + λ · mean(L_adv)` over the batch.

mod checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::{Corpus, EmbeddingBank, Sentence, SentenceEmbeddings, MAX_SEQUENCE_LENGTH};
use crate::embed::{adversarial_perturbation, dropout_mask, perturb, AdversarialConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, MetricsReport};
use crate::gcn::DependencyGraph;
use crate::model::{ModelConfig, SentimentModel};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use checkpoint::{Checkpoint, ParamRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub max_sequence_length: usize,
    pub dropout: f64,
    pub gcn_layers: usize,
    pub gcn_bias: bool,
    pub adversarial: bool,
    pub epsilon: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub fused_dim: usize,
    pub attn_dim: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 50,
            seeds: vec![1, 2, 3, 4, 5],
            max_sequence_length: MAX_SEQUENCE_LENGTH,
            dropout: 0.1,
            gcn_layers: 3,
            gcn_bias: true,
            adversarial: true,
            epsilon: 0.05,
            lambda: 1.0,
            threshold: 0.5,
            fused_dim: 64,
            attn_dim: 32,
            batch_size: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 || self.max_sequence_length == 0 {
            return fail("batch_size and max_sequence_length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        self.adversarial_config().validate()
    }

    pub fn adversarial_config(&self) -> AdversarialConfig {
        AdversarialConfig {
            enabled: self.adversarial,
            epsilon: self.epsilon,
            lambda: self.lambda,
        }
    }

    pub fn model_config(&self, model_dims: &[usize]) -> ModelConfig {
        ModelConfig {
            model_dims: model_dims.to_vec(),
            fused_dim: self.fused_dim,
            attn_dim: self.attn_dim,
            gcn_layers: self.gcn_layers,
            gcn_bias: self.gcn_bias,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::json("parsing config", e))?;
        c.validate()?;
        Ok(c)
    }
}

/// Combines seed components into one generator seed (splitmix64 rounds).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Visiting order of `n` training sentences in `epoch`; a pure function
/// of its arguments.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, SHUFFLE_STREAM, epoch as u64]));
    order.shuffle(&mut rng);
    order
}

/// Model and optimizer state of one training run.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub model: SentimentModel<T>,
    pub adam: Adam<T>,
    pub seed: u64,
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: &TrainConfig, model_dims: &[usize], seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(TrainState {
            model: SentimentModel::new(config.model_config(model_dims), seed)?,
            adam: Adam::new(AdamConfig::with_learning_rate(config.learning_rate)),
            seed,
            epoch: 0,
            step: 0,
        })
    }
}

/// Batch means of the losses of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLoss {
    /// `task + λ · adversarial`, the minimized objective.
    pub combined: f64,
    pub task: f64,
    /// Zero when the adversarial pass is inactive.
    pub adversarial: f64,
}

/// One optimizer step over `batch`.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &[(&Sentence, &SentenceEmbeddings<T>)],
    config: &TrainConfig,
) -> Result<StepLoss> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let adv = config.adversarial_config();
    let lambda = T::lit(adv.lambda);
    let epsilon = T::lit(adv.epsilon);
    let share = T::one() / T::lit(batch.len() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        state.seed,
        DROPOUT_STREAM,
        state.epoch as u64,
        state.step as u64,
    ]));

    let model = &mut state.model;
    model.params_mut().zero_grads();
    let (mut task_sum, mut adv_sum) = (0.0, 0.0);
    for &(sentence, entry) in batch {
        let graph = DependencyGraph::from_heads(&sentence.heads).map_err(|e| match e {
            Error::Tree { message, .. } => Error::Tree {
                sent_id: sentence.sent_id.clone(),
                message,
            },
            other => other,
        })?;
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, true);
        let mut fused = model.fuse(&mut tape, &bound, entry)?;
        if config.dropout > 0.0 {
            let mask = dropout_mask(&mut rng, tape.value(fused).len(), config.dropout);
            fused = tape.mul_const(fused, mask)?;
        }
        let hidden = model.encode_from(&mut tape, &bound, fused, &graph)?;
        let task = model
            .task_losses(&mut tape, &bound, hidden, sentence)?
            .total(&mut tape)?;
        tape.backward(task)?;
        task_sum += tape.scalar_value(task).as_f64();

        if adv.active() {
            let g = match tape.grad(fused) {
                Some(g) => Tensor::new(tape.shape(fused).to_vec(), g.to_vec())?,
                None => Tensor::zeros(tape.shape(fused)),
            };
            let r = adversarial_perturbation(&g, epsilon);
            let perturbed = perturb(&mut tape, fused, &r)?;
            let hidden = model.encode_from(&mut tape, &bound, perturbed, &graph)?;
            let adv_loss = model
                .task_losses(&mut tape, &bound, hidden, sentence)?
                .total(&mut tape)?;
            let weighted = tape.scale(adv_loss, lambda);
            tape.backward(weighted)?;
            adv_sum += tape.scalar_value(adv_loss).as_f64();
        }
        model.params_mut().absorb(&tape, &bound, share)?;
    }

    let b = batch.len() as f64;
    let task = task_sum / b;
    let adversarial = adv_sum / b;
    let combined = if adv.active() {
        task + adv.lambda * adversarial
    } else {
        task
    };
    let grads_finite = model
        .params()
        .iter()
        .all(|(_, t)| t.grad().is_some_and(|g| g.iter().all(|v| v.is_finite())));
    if !combined.is_finite() || !grads_finite {
        return Err(Error::Divergence {
            epoch: state.epoch,
            step: state.step,
            loss: combined,
        });
    }
    state.adam.step(model.params_mut())?;
    state.step += 1;
    Ok(StepLoss {
        combined,
        task,
        adversarial,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_targeted_f1: f64,
}

/// Result of [`train_seed`]: the best checkpoint and the per-epoch log.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
}

fn dev_targeted_f1<T: Scalar>(
    model: &SentimentModel<T>,
    dev: &Corpus,
    bank: &EmbeddingBank<T>,
    threshold: f64,
) -> Result<f64> {
    Ok(evaluate_model(model, dev, bank, threshold)?.targeted_f1)
}

/// Trains with one seed and keeps the epoch with the best dev targeted F1
/// (earliest on ties).
pub fn train_seed<T: Scalar>(
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    dev: &Corpus,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainRun> {
    config.validate()?;
    if dev.is_empty() {
        return Err(Error::Config("development set is empty".into()));
    }
    bank.verify(corpus)?;
    bank.verify(dev)?;
    let mut state = TrainState::<T>::new(config, bank.model_dims(), seed)?;
    let f1 = dev_targeted_f1(&state.model, dev, bank, config.threshold)?;
    let mut best = Checkpoint::from_model(&state.model, config, seed, 0, f1);
    let mut history = Vec::with_capacity(config.epochs);
    if corpus.is_empty() && config.epochs > 0 {
        return Err(Error::Config("training corpus is empty".into()));
    }

    let entries: Vec<&SentenceEmbeddings<T>> = corpus
        .sentences
        .iter()
        .map(|s| bank.check_sentence(s))
        .collect::<Result<_>>()?;
    for epoch in 1..=config.epochs {
        state.epoch = epoch;
        let order = epoch_order(seed, epoch, corpus.len());
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (&corpus.sentences[i], entries[i]))
                .collect();
            loss_sum += train_step(&mut state, &batch, config)?.combined;
            batches += 1;
        }
        let f1 = dev_targeted_f1(&state.model, dev, bank, config.threshold)?;
        history.push(EpochLog {
            epoch,
            mean_loss: loss_sum / batches as f64,
            dev_targeted_f1: f1,
        });
        if epoch == 1 || f1 > best.dev_targeted_f1 {
            best = Checkpoint::from_model(&state.model, config, seed, epoch, f1);
        }
    }
    Ok(TrainRun {
        checkpoint: best,
        history,
    })
}

/// Trains with the first configured seed.
pub fn train<T: Scalar>(
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    dev: &Corpus,
    config: &TrainConfig,
) -> Result<Checkpoint> {
    let seed = *config
        .seeds
        .first()
        .ok_or_else(|| Error::Config("no seeds configured".into()))?;
    Ok(train_seed(corpus, bank, dev, config, seed)?.checkpoint)
}

/// Mean or spread of the four F1 scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub holder_f1: f64,
    pub target_f1: f64,
    pub expression_f1: f64,
    pub targeted_f1: f64,
}

impl F1Summary {
    fn from_array([holder_f1, target_f1, expression_f1, targeted_f1]: [f64; 4]) -> Self {
        F1Summary {
            holder_f1,
            target_f1,
            expression_f1,
            targeted_f1,
        }
    }

    /// Mean and population standard deviation over reports.
    pub fn mean_and_std<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> (Self, Self) {
        let rows: Vec<[f64; 4]> = reports.into_iter().map(MetricsReport::f1s).collect();
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; 4];
        for r in &rows {
            (0..4).for_each(|i| mean[i] += r[i] / n);
        }
        let mut var = [0.0; 4];
        for r in &rows {
            (0..4).for_each(|i| var[i] += (r[i] - mean[i]).powi(2) / n);
        }
        (Self::from_array(mean), Self::from_array(var.map(f64::sqrt)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub epoch: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub per_seed: Vec<SeedResult>,
    pub mean: F1Summary,
    pub std_dev: F1Summary,
}

/// Independent runs for every configured seed, each scored on `dev`.
pub fn multi_seed<T: Scalar>(
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    dev: &Corpus,
    config: &TrainConfig,
) -> Result<(SeedSummary, Vec<Checkpoint>)> {
    if config.seeds.is_empty() {
        return Err(Error::Config("no seeds configured".into()));
    }
    let runs: Vec<(SeedResult, Checkpoint)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let ckpt = train_seed(corpus, bank, dev, config, seed)?.checkpoint;
            let model = ckpt.to_model::<T>()?;
            let report = evaluate_model(&model, dev, bank, config.threshold)?;
            Ok((
                SeedResult {
                    seed,
                    epoch: ckpt.epoch,
                    report,
                },
                ckpt,
            ))
        })
        .collect::<Result<_>>()?;
    let (per_seed, checkpoints): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let (mean, std_dev) = F1Summary::mean_and_std(per_seed.iter().map(|r| &r.report));
    Ok((
        SeedSummary {
            per_seed,
            mean,
            std_dev,
        },
        checkpoints,
    ))
}
