//! Word-level attention over K encoder outputs and the worst-case
//! perturbation of the fused embeddings.
//!
//! For word i and encoder k the score is `v · tanh(e_ik W_k + b_k)`; the K
//! scores of a word are softmax-normalized and the fused vector is the
//! weighted sum of the encoder vectors after each is mapped to the common
//! width `d` by a learned matrix `M_k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::SentenceEmbeddings;
use crate::error::{Error, Result};
use crate::params::{uniform, Bound, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradients below this norm yield no perturbation.
pub const MIN_GRAD_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub lambda: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            enabled: true,
            epsilon: 0.05,
            lambda: 1.0,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enabled && (self.epsilon.is_nan() || self.epsilon <= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive when adversarial training is on, got {}",
                self.epsilon
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Whether the perturbed second pass contributes anything.
    pub fn active(&self) -> bool {
        self.enabled && self.lambda != 0.0
    }
}

/// Parameter handles of the attention fusion.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    /// `d_k × d` maps into the fused width.
    pub align: Vec<ParamId>,
    /// `d_k × d_attn` projections.
    pub proj: Vec<ParamId>,
    /// `d_attn` projection biases.
    pub proj_bias: Vec<ParamId>,
    /// `d_attn × 1` scoring vector shared by all encoders.
    pub score: ParamId,
    pub fused_dim: usize,
    pub attn_dim: usize,
}

/// Output of [`AttentionParams::fuse`].
#[derive(Clone, Copy, Debug)]
pub struct Fusion {
    /// `|x| × d`
    pub fused: Var,
    /// `|x| × K`, rows sum to one.
    pub weights: Var,
}

impl AttentionParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        model_dims: &[usize],
        fused_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut align = Vec::new();
        let mut proj = Vec::new();
        let mut proj_bias = Vec::new();
        for (k, &dk) in model_dims.iter().enumerate() {
            let map = if dk == fused_dim {
                Tensor::identity(dk)
            } else {
                uniform(rng, &[dk, fused_dim], dk)
            };
            align.push(store.insert(format!("embed.align.{k}"), map));
            proj.push(store.insert(
                format!("embed.attn_w.{k}"),
                uniform(rng, &[dk, attn_dim], dk),
            ));
            proj_bias
                .push(store.insert(format!("embed.attn_b.{k}"), uniform(rng, &[attn_dim], dk)));
        }
        let score = store.insert("embed.attn_v", uniform(rng, &[attn_dim, 1], attn_dim));
        AttentionParams {
            align,
            proj,
            proj_bias,
            score,
            fused_dim,
            attn_dim,
        }
    }

    pub fn model_count(&self) -> usize {
        self.align.len()
    }

    /// Records the fusion of one sentence's encoder outputs.
    pub fn fuse<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        entry: &SentenceEmbeddings<T>,
    ) -> Result<Fusion> {
        if entry.models.len() != self.model_count() {
            return Err(Error::Alignment {
                sent_id: String::new(),
                message: format!(
                    "{} encoder matrices for {} attention inputs",
                    entry.models.len(),
                    self.model_count()
                ),
            });
        }
        let n = entry.token_count();
        if let Some(m) = entry.models.iter().find(|m| m.rows() != n) {
            return Err(Error::Alignment {
                sent_id: String::new(),
                message: format!("encoder matrix with {} rows, expected {n}", m.rows()),
            });
        }
        let mut aligned = Vec::with_capacity(self.model_count());
        let mut scores = Vec::with_capacity(self.model_count());
        for (k, m) in entry.models.iter().enumerate() {
            let e = tape.constant(m);
            aligned.push(tape.matmul(e, bound.var(self.align[k]))?);
            let z = tape.matmul(e, bound.var(self.proj[k]))?;
            let z = tape.add_row_bias(z, bound.var(self.proj_bias[k]))?;
            let z = tape.tanh(z);
            scores.push(tape.matmul(z, bound.var(self.score))?);
        }
        let scores = tape.concat_cols(&scores)?;
        let weights = tape.softmax(scores, 1)?;
        let mut fused = None;
        for (k, &a) in aligned.iter().enumerate() {
            let w = tape.column(weights, k)?;
            let part = tape.mul_column(a, w)?;
            fused = Some(match fused {
                None => part,
                Some(acc) => tape.add(acc, part)?,
            });
        }
        Ok(Fusion {
            fused: fused.expect("at least one encoder"),
            weights,
        })
    }
}

/// `ε g / ‖g‖₂` over the whole flattened gradient; zero if `‖g‖₂ < 1e-12`.
pub fn adversarial_perturbation<T: Scalar>(grad: &Tensor<T>, epsilon: T) -> Tensor<T> {
    let norm = grad.l2_norm();
    let mut out = Tensor::zeros(grad.shape());
    if norm < T::lit(MIN_GRAD_NORM) {
        return out;
    }
    out.values_mut()
        .iter_mut()
        .zip(grad.values())
        .for_each(|(r, &g)| *r = epsilon * g / norm);
    out
}

/// `fused + r`, with `r` entering as a constant.
pub fn perturb<T: Scalar>(tape: &mut Tape<T>, fused: Var, r_adv: &Tensor<T>) -> Result<Var> {
    tape.add_const(fused, r_adv)
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar>(rng: &mut impl Rng, len: usize, rate: f64) -> Vec<T> {
    if rate <= 0.0 {
        return vec![T::one(); len];
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_model_params(store: &mut ParamStore<f64>) -> AttentionParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        AttentionParams::init(store, &[2, 2], 2, 1, &mut rng)
    }

    fn entry(rows: &[&[&[f64]]]) -> SentenceEmbeddings<f64> {
        SentenceEmbeddings {
            models: rows.iter().map(|m| Tensor::from_rows(m).unwrap()).collect(),
        }
    }

    #[test]
    fn single_encoder_passes_embedding_through() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = AttentionParams::init(&mut store, &[3], 3, 4, &mut rng);
        let e = entry(&[&[&[0.1, -0.2, 0.3], &[1.5, 0.0, -7.0]]]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, true);
        let f = p.fuse(&mut tape, &b, &e).unwrap();
        assert_eq!(tape.value(f.weights), &[1.0, 1.0]);
        assert_eq!(tape.value(f.fused), e.models[0].values());
    }

    #[test]
    fn zero_attention_means_equal_weights() {
        let mut store = ParamStore::new();
        let p = two_model_params(&mut store);
        for id in p.proj.iter().chain(&p.proj_bias).chain([&p.score]) {
            store.get_mut(*id).values_mut().fill(0.0);
        }
        let e = entry(&[&[&[1.0, 2.0]], &[&[3.0, -2.0]]]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let f = p.fuse(&mut tape, &b, &e).unwrap();
        assert_eq!(tape.value(f.weights), &[0.5, 0.5]);
        assert_eq!(tape.value(f.fused), &[2.0, 0.0]);
    }

    #[test]
    fn scores_ln3_and_zero_give_three_to_one_mix() {
        let mut store = ParamStore::new();
        let p = two_model_params(&mut store);
        // score_1 = v tanh(0.5) = ln 3, score_2 = v tanh(0) = 0
        let v = 3f64.ln() / 0.5f64.tanh();
        for id in &p.proj {
            store.get_mut(*id).values_mut().fill(0.0);
        }
        store.get_mut(p.proj_bias[0]).values_mut()[0] = 0.5;
        store.get_mut(p.proj_bias[1]).values_mut()[0] = 0.0;
        store.get_mut(p.score).values_mut()[0] = v;
        let e = entry(&[&[&[1.0, 0.0]], &[&[0.0, 1.0]]]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        let f = p.fuse(&mut tape, &b, &e).unwrap();
        assert_relative_eq!(tape.value(f.weights)[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(tape.value(f.weights)[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(tape.value(f.fused)[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(tape.value(f.fused)[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let mut store = ParamStore::new();
        let p = two_model_params(&mut store);
        let e = entry(&[&[&[1.0, 0.0]], &[&[0.0, 1.0], &[1.0, 1.0]]]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape, false);
        assert!(matches!(
            p.fuse(&mut tape, &b, &e),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn perturbation_examples() {
        let g = Tensor::vector(vec![3.0, 4.0]);
        let r = adversarial_perturbation(&g, 1.0);
        assert_relative_eq!(r.values()[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(r.values()[1], 0.8, epsilon = 1e-15);

        let z = adversarial_perturbation(&Tensor::<f64>::zeros(&[2, 3]), 0.05);
        assert!(z.values().iter().all(|&v| v == 0.0));
        assert_eq!(z.shape(), &[2, 3]);
    }

    #[test]
    fn perturb_adds_constant() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::vector(vec![1.0, 1.0]).with_grad());
        let y = perturb(&mut tape, x, &Tensor::vector(vec![0.1, -0.1])).unwrap();
        assert_relative_eq!(tape.value(y)[0], 1.1);
        assert_relative_eq!(tape.value(y)[1], 0.9);
        let y0 = perturb(&mut tape, x, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(tape.value(y0), &[1.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = AdversarialConfig::default();
        assert!(c.validate().is_ok());
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        c.enabled = false;
        assert!(c.validate().is_ok());
        assert!(!c.active());
    }

    #[test]
    fn dropout_mask_scales_kept_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: Vec<f64> = dropout_mask(&mut rng, 1000, 0.1);
        let kept = m.iter().filter(|&&v| v != 0.0).count();
        assert!((850..=950).contains(&kept));
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-15));
        let ones: Vec<f64> = dropout_mask(&mut rng, 5, 0.0);
        assert_eq!(ones, vec![1.0; 5]);
    }
}
