//! The full network: attention fusion, GCN encoder and decoder heads over
//! one shared parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::Polarity;
use crate::corpus::{Sentence, SentenceEmbeddings};
use crate::decoder::{decode_spans, DecoderParams, PredictedOpinion, Role, TaskLosses};
use crate::embed::AttentionParams;
use crate::error::{Error, Result};
use crate::gcn::{DependencyGraph, GcnStack};
use crate::params::{Bound, ParamStore};
use crate::scalar::Scalar;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Widths of the K encoder outputs.
    pub model_dims: Vec<usize>,
    pub fused_dim: usize,
    pub attn_dim: usize,
    pub gcn_layers: usize,
    pub gcn_bias: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dims.is_empty() || self.model_dims.contains(&0) {
            return Err(Error::Config(format!(
                "invalid model dims {:?}",
                self.model_dims
            )));
        }
        if self.fused_dim == 0 || self.attn_dim == 0 || self.gcn_layers == 0 {
            return Err(Error::Config(
                "fused_dim, attn_dim and gcn_layers must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SentimentModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    attention: AttentionParams,
    gcn: GcnStack,
    decoder: DecoderParams,
}

/// Handles produced by one encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub fused: Var,
    pub hidden: Var,
}

impl<T: Scalar> SentimentModel<T> {
    /// Fresh model with parameters drawn from a generator seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.fused_dim;
        let attention = AttentionParams::init(
            &mut params,
            &config.model_dims,
            d,
            config.attn_dim,
            &mut rng,
        );
        let dims = vec![d; config.gcn_layers + 1];
        let gcn = GcnStack::init(&mut params, &dims, config.gcn_bias, &mut rng)?;
        let decoder = DecoderParams::init(&mut params, gcn.output_dim(), &mut rng);
        Ok(SentimentModel {
            config,
            params,
            attention,
            gcn,
            decoder,
        })
    }

    /// Rebuilds a model from named parameter values. Every parameter of the
    /// architecture must be present with a matching length.
    pub fn from_named<'a>(
        config: ModelConfig,
        named: impl IntoIterator<Item = (&'a str, Vec<T>)>,
    ) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        let mut seen = 0;
        for (name, values) in named {
            model.params.set_values(name, values)?;
            seen += 1;
        }
        if seen != model.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {seen}",
                model.params.len()
            )));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn attention(&self) -> &AttentionParams {
        &self.attention
    }

    pub fn gcn(&self) -> &GcnStack {
        &self.gcn
    }

    pub fn decoder(&self) -> &DecoderParams {
        &self.decoder
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    /// Fused embeddings of one sentence (`|x| × d`).
    pub fn fuse(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        entry: &SentenceEmbeddings<T>,
    ) -> Result<Var> {
        Ok(self.attention.fuse(tape, bound, entry)?.fused)
    }

    /// GCN representations computed from (possibly perturbed) fused embeddings.
    pub fn encode_from(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        fused: Var,
        graph: &DependencyGraph<T>,
    ) -> Result<Var> {
        self.gcn.forward(tape, bound, fused, graph)
    }

    pub fn encode(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        entry: &SentenceEmbeddings<T>,
        graph: &DependencyGraph<T>,
    ) -> Result<Encoded> {
        let fused = self.fuse(tape, bound, entry)?;
        let hidden = self.encode_from(tape, bound, fused, graph)?;
        Ok(Encoded { fused, hidden })
    }

    pub fn task_losses(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        hidden: Var,
        sentence: &Sentence,
    ) -> Result<TaskLosses> {
        self.decoder.task_losses(tape, bound, hidden, sentence)
    }

    /// Runs the extraction pipeline on one sentence: expressions first,
    /// then targets, holders and polarity for each predicted expression.
    pub fn predict_sentence(
        &self,
        sentence: &Sentence,
        entry: &SentenceEmbeddings<T>,
        threshold: f64,
    ) -> Result<Vec<PredictedOpinion>> {
        let graph = DependencyGraph::from_heads(&sentence.heads).map_err(|e| match e {
            Error::Tree { message, .. } => Error::Tree {
                sent_id: sentence.sent_id.clone(),
                message,
            },
            other => other,
        })?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let enc = self.encode(&mut tape, &bound, entry, &graph)?;
        let dec = &self.decoder;
        let expr_scores = dec
            .expression_probs(&mut tape, &bound, enc.hidden)?
            .read(&tape);
        let expressions = decode_spans(&expr_scores, threshold);
        if expressions.is_empty() {
            return Ok(Vec::new());
        }
        let pooled = dec.pool(&mut tape, enc.hidden)?;
        let mut out = Vec::new();
        for expr in expressions {
            let features = dec.conditioned_features(&mut tape, enc.hidden, expr)?;
            let targets = dec
                .role_probs(&mut tape, &bound, features, Role::Target)?
                .read(&tape);
            let holders = dec
                .role_probs(&mut tape, &bound, features, Role::Holder)?
                .read(&tape);
            let probs = dec.polarity_probs(&mut tape, &bound, enc.hidden, pooled, expr)?;
            let probs = [tape.value(probs)[0].as_f64(), tape.value(probs)[1].as_f64()];
            let polarity = if probs[0] >= probs[1] {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            let holder = decode_spans(&holders, threshold).first().copied();
            let targets = decode_spans(&targets, threshold);
            let make = |target| PredictedOpinion {
                holder,
                target,
                expression: expr,
                polarity,
                polarity_probs: probs,
            };
            if targets.is_empty() {
                out.push(make(None));
            } else {
                out.extend(targets.into_iter().map(|t| make(Some(t))));
            }
        }
        Ok(out)
    }
}
