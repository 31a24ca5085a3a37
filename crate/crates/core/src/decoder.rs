//! Expression, target, holder and polarity heads, span decoding and the
//! task losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::{Opinion, Polarity, Sentence, Span};
use crate::error::{Error, Result};
use crate::params::{uniform, Bound, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Linear {
            weight: store.insert(
                format!("{name}.weight"),
                uniform(rng, &[input, output], input),
            ),
            bias: store.insert(format!("{name}.bias"), uniform(rng, &[output], input)),
        }
    }

    fn apply<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let z = tape.matmul(x, bound.var(self.weight))?;
        tape.add_row_bias(z, bound.var(self.bias))
    }
}

/// Which expression-conditioned head to query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Target,
    Holder,
}

#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub expression_start: Linear,
    pub expression_end: Linear,
    pub target_start: Linear,
    pub target_end: Linear,
    pub holder_start: Linear,
    pub holder_end: Linear,
    pub polarity: Linear,
    pub hidden_dim: usize,
}

/// Start and end probabilities for every token.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanScores {
    pub start_probs: Vec<f64>,
    pub end_probs: Vec<f64>,
}

/// Recorded start/end probability columns (`|x| × 1` each).
#[derive(Clone, Copy, Debug)]
pub struct SpanProbs {
    pub start: Var,
    pub end: Var,
}

impl SpanProbs {
    pub fn read<T: Scalar>(&self, tape: &Tape<T>) -> SpanScores {
        SpanScores {
            start_probs: tape.value(self.start).iter().map(|v| v.as_f64()).collect(),
            end_probs: tape.value(self.end).iter().map(|v| v.as_f64()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedOpinion {
    pub holder: Option<Span>,
    pub target: Option<Span>,
    pub expression: Span,
    pub polarity: Polarity,
    /// Probabilities of (P, N).
    pub polarity_probs: [f64; 2],
}

impl PredictedOpinion {
    pub fn to_opinion(&self) -> Opinion {
        Opinion {
            holder: self.holder,
            target: self.target,
            expression: self.expression,
            polarity: self.polarity,
        }
    }
}

/// The four task losses of one sentence, as recorded scalars.
#[derive(Clone, Copy, Debug)]
pub struct TaskLosses {
    pub expression: Var,
    pub target: Var,
    pub holder: Var,
    pub polarity: Var,
}

impl TaskLosses {
    /// Unweighted sum of the four losses.
    pub fn total<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Var> {
        let a = tape.add(self.expression, self.target)?;
        let b = tape.add(self.holder, self.polarity)?;
        tape.add(a, b)
    }

    pub fn values<T: Scalar>(&self, tape: &Tape<T>) -> [f64; 4] {
        [self.expression, self.target, self.holder, self.polarity]
            .map(|v| tape.scalar_value(v).as_f64())
    }
}

fn check_span(span: Span, n: usize) -> Result<()> {
    if span.fits(n) {
        Ok(())
    } else {
        Err(Error::Span(format!("span {span} invalid for {n} tokens")))
    }
}

impl DecoderParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let d = hidden_dim;
        DecoderParams {
            expression_start: Linear::init(store, "decoder.expression_start", d, 1, rng),
            expression_end: Linear::init(store, "decoder.expression_end", d, 1, rng),
            target_start: Linear::init(store, "decoder.target_start", 3 * d, 1, rng),
            target_end: Linear::init(store, "decoder.target_end", 3 * d, 1, rng),
            holder_start: Linear::init(store, "decoder.holder_start", 3 * d, 1, rng),
            holder_end: Linear::init(store, "decoder.holder_end", 3 * d, 1, rng),
            polarity: Linear::init(store, "decoder.polarity", 3 * d, 2, rng),
            hidden_dim,
        }
    }

    /// Sigmoid start/end probabilities of expressions for every token.
    pub fn expression_probs<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        hidden: Var,
    ) -> Result<SpanProbs> {
        let s = self.expression_start.apply(tape, bound, hidden)?;
        let e = self.expression_end.apply(tape, bound, hidden)?;
        Ok(SpanProbs {
            start: tape.sigmoid(s),
            end: tape.sigmoid(e),
        })
    }

    /// `[h_i; h_start(expr); h_end(expr)]` for every token i.
    pub fn conditioned_features<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        hidden: Var,
        expr: Span,
    ) -> Result<Var> {
        let n = tape.shape(hidden)[0];
        check_span(expr, n)?;
        let starts = tape.gather_rows(hidden, &vec![expr.start; n])?;
        let ends = tape.gather_rows(hidden, &vec![expr.end; n])?;
        tape.concat_cols(&[hidden, starts, ends])
    }

    /// Start/end probabilities of the target or holder of `expr`, computed
    /// from features returned by [`Self::conditioned_features`].
    pub fn role_probs<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        features: Var,
        role: Role,
    ) -> Result<SpanProbs> {
        let (start, end) = match role {
            Role::Target => (&self.target_start, &self.target_end),
            Role::Holder => (&self.holder_start, &self.holder_end),
        };
        let s = start.apply(tape, bound, features)?;
        let e = end.apply(tape, bound, features)?;
        Ok(SpanProbs {
            start: tape.sigmoid(s),
            end: tape.sigmoid(e),
        })
    }

    pub fn conditioned_probs<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        hidden: Var,
        expr: Span,
        role: Role,
    ) -> Result<SpanProbs> {
        let f = self.conditioned_features(tape, hidden, expr)?;
        self.role_probs(tape, bound, f, role)
    }

    /// Softmax over (P, N) from the max-pooled sentence vector and the
    /// expression's boundary vectors. `pooled` is the `1 × d` sentence
    /// representation.
    pub fn polarity_probs<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        hidden: Var,
        pooled: Var,
        expr: Span,
    ) -> Result<Var> {
        let n = tape.shape(hidden)[0];
        check_span(expr, n)?;
        let s = tape.gather_rows(hidden, &[expr.start])?;
        let e = tape.gather_rows(hidden, &[expr.end])?;
        let features = tape.concat_cols(&[pooled, s, e])?;
        let logits = self.polarity.apply(tape, bound, features)?;
        tape.softmax(logits, 1)
    }

    /// Max-pooled sentence representation as a `1 × d` row.
    pub fn pool<T: Scalar>(&self, tape: &mut Tape<T>, hidden: Var) -> Result<Var> {
        let d = tape.shape(hidden)[1];
        let pooled = tape.max_pool_rows(hidden)?;
        tape.reshape(pooled, &[1, d])
    }

    /// Task losses of one sentence under teacher forcing: target, holder and
    /// polarity heads are conditioned on the gold expressions.
    pub fn task_losses<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        hidden: Var,
        sentence: &Sentence,
    ) -> Result<TaskLosses> {
        let n = sentence.len();
        let inv_n = T::one() / T::lit(n as f64);
        let expr = self.expression_probs(tape, bound, hidden)?;
        let (start_labels, end_labels) =
            boundary_labels::<T>(n, sentence.opinions.iter().map(|o| Some(o.expression)));
        let ls = tape.binary_cross_entropy(expr.start, &start_labels)?;
        let le = tape.binary_cross_entropy(expr.end, &end_labels)?;
        let sum = tape.add(ls, le)?;
        let expression = tape.scale(sum, inv_n);

        if sentence.opinions.is_empty() {
            let zero = Tensor::scalar(T::zero());
            return Ok(TaskLosses {
                expression,
                target: tape.constant(&zero),
                holder: tape.constant(&zero),
                polarity: tape.constant(&zero),
            });
        }

        let pooled = self.pool(tape, hidden)?;
        let mut target_terms = Vec::new();
        let mut holder_terms = Vec::new();
        let mut polarity_terms = Vec::new();
        for o in &sentence.opinions {
            let features = self.conditioned_features(tape, hidden, o.expression)?;
            for (role, span, terms) in [
                (Role::Target, o.target, &mut target_terms),
                (Role::Holder, o.holder, &mut holder_terms),
            ] {
                let probs = self.role_probs(tape, bound, features, role)?;
                let (sl, el) = boundary_labels::<T>(n, std::iter::once(span));
                terms.push(tape.binary_cross_entropy(probs.start, &sl)?);
                terms.push(tape.binary_cross_entropy(probs.end, &el)?);
            }
            let probs = self.polarity_probs(tape, bound, hidden, pooled, o.expression)?;
            polarity_terms.push(tape.cross_entropy(probs, o.polarity.class_index())?);
        }
        let m = T::lit(sentence.opinions.len() as f64);
        let mut average = |terms: &[Var], denom: T| -> Result<Var> {
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = tape.add(acc, t)?;
            }
            Ok(tape.scale(acc, T::one() / denom))
        };
        Ok(TaskLosses {
            expression,
            target: average(&target_terms, m * T::lit(n as f64))?,
            holder: average(&holder_terms, m * T::lit(n as f64))?,
            polarity: average(&polarity_terms, m)?,
        })
    }
}

/// 0/1 start and end labels marking the boundaries of every present span.
fn boundary_labels<T: Scalar>(
    n: usize,
    spans: impl Iterator<Item = Option<Span>>,
) -> (Vec<T>, Vec<T>) {
    let mut start = vec![T::zero(); n];
    let mut end = vec![T::zero(); n];
    for s in spans.flatten() {
        start[s.start] = T::one();
        end[s.end] = T::one();
    }
    (start, end)
}

/// Greedy span decoding: each start at or above `threshold` is paired with
/// the nearest end at or above `threshold` at or after it. Starts that fall
/// inside an already emitted span, or find no end, are skipped.
pub fn decode_spans(scores: &SpanScores, threshold: f64) -> Vec<Span> {
    let ends: Vec<usize> = scores
        .end_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect();
    let mut spans: Vec<Span> = Vec::new();
    for (s, &p) in scores.start_probs.iter().enumerate() {
        if p < threshold {
            continue;
        }
        if spans.last().is_some_and(|last| s <= last.end) {
            continue;
        }
        if let Some(&e) = ends.iter().find(|&&e| e >= s) {
            spans.push(Span::new(s, e));
        }
    }
    spans
}
