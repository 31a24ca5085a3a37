//! Token-level and targeted F1.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Opinion, Polarity, Span};
use crate::error::{Error, Result};

/// Opinions attached to one sentence, gold or predicted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceOpinions {
    pub sent_id: String,
    pub opinions: Vec<Opinion>,
}

impl SentenceOpinions {
    pub fn gold(corpus: &Corpus) -> Vec<SentenceOpinions> {
        corpus
            .sentences
            .iter()
            .map(|s| SentenceOpinions {
                sent_id: s.sent_id.clone(),
                opinions: s.opinions.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.gold as f64
        }
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, tp: usize, predicted: usize, gold: usize) {
        self.true_positives += tp;
        self.predicted += predicted;
        self.gold += gold;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Element {
    Holder,
    Target,
    Expression,
}

impl Element {
    fn span(self, o: &Opinion) -> Option<Span> {
        match self {
            Element::Holder => o.holder,
            Element::Target => o.target,
            Element::Expression => Some(o.expression),
        }
    }
}

/// Pairs gold and predicted sentences by id. Both sides must hold the same
/// ids, each once.
fn align<'a>(
    gold: &'a [SentenceOpinions],
    pred: &'a [SentenceOpinions],
) -> Result<Vec<(&'a SentenceOpinions, &'a SentenceOpinions)>> {
    let mismatch = |id: &str, message: &str| Error::Alignment {
        sent_id: id.to_string(),
        message: message.to_string(),
    };
    let mut by_id: HashMap<&str, &SentenceOpinions> = HashMap::with_capacity(pred.len());
    for p in pred {
        if by_id.insert(p.sent_id.as_str(), p).is_some() {
            return Err(mismatch(&p.sent_id, "duplicate predicted sentence"));
        }
    }
    let mut seen = HashSet::with_capacity(gold.len());
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.sent_id.as_str()) {
            return Err(mismatch(&g.sent_id, "duplicate gold sentence"));
        }
        let p = by_id
            .get(g.sent_id.as_str())
            .ok_or_else(|| mismatch(&g.sent_id, "no prediction for gold sentence"))?;
        pairs.push((g, *p));
    }
    if let Some(extra) = pred.iter().find(|p| !seen.contains(p.sent_id.as_str())) {
        return Err(mismatch(&extra.sent_id, "prediction for unknown sentence"));
    }
    Ok(pairs)
}

fn covered(opinions: &[Opinion], element: Element) -> BTreeSet<usize> {
    opinions
        .iter()
        .filter_map(|o| element.span(o))
        .flat_map(|s| s.tokens())
        .collect()
}

/// Token-level counts: a token is positive when any span of `element`
/// covers it.
pub fn token_counts(
    gold: &[SentenceOpinions],
    pred: &[SentenceOpinions],
    element: Element,
) -> Result<Counts> {
    let mut counts = Counts::default();
    for (g, p) in align(gold, pred)? {
        let gs = covered(&g.opinions, element);
        let ps = covered(&p.opinions, element);
        counts.add(gs.intersection(&ps).count(), ps.len(), gs.len());
    }
    Ok(counts)
}

pub fn token_f1(
    gold: &[SentenceOpinions],
    pred: &[SentenceOpinions],
    element: Element,
) -> Result<f64> {
    Ok(token_counts(gold, pred, element)?.f1())
}

/// Counts for exact (target span, polarity) matching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedCounts {
    pub counts: Counts,
    /// Opinions left out because they have no target.
    pub gold_without_target: usize,
    pub predicted_without_target: usize,
}

fn targeted_units(opinions: &[Opinion]) -> (HashSet<(Span, Polarity)>, usize) {
    let units = opinions
        .iter()
        .filter_map(|o| o.target.map(|t| (t, o.polarity)))
        .collect();
    let nulls = opinions.iter().filter(|o| o.target.is_none()).count();
    (units, nulls)
}

pub fn targeted_counts(
    gold: &[SentenceOpinions],
    pred: &[SentenceOpinions],
) -> Result<TargetedCounts> {
    let mut out = TargetedCounts::default();
    for (g, p) in align(gold, pred)? {
        let (gs, gn) = targeted_units(&g.opinions);
        let (ps, pn) = targeted_units(&p.opinions);
        out.counts
            .add(gs.intersection(&ps).count(), ps.len(), gs.len());
        out.gold_without_target += gn;
        out.predicted_without_target += pn;
    }
    Ok(out)
}

pub fn targeted_f1(gold: &[SentenceOpinions], pred: &[SentenceOpinions]) -> Result<f64> {
    Ok(targeted_counts(gold, pred)?.counts.f1())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub holder_f1: f64,
    pub target_f1: f64,
    pub expression_f1: f64,
    pub targeted_f1: f64,
    pub holder: Counts,
    pub target: Counts,
    pub expression: Counts,
    pub targeted: TargetedCounts,
}

impl MetricsReport {
    pub fn compute(gold: &[SentenceOpinions], pred: &[SentenceOpinions]) -> Result<Self> {
        let holder = token_counts(gold, pred, Element::Holder)?;
        let target = token_counts(gold, pred, Element::Target)?;
        let expression = token_counts(gold, pred, Element::Expression)?;
        let targeted = targeted_counts(gold, pred)?;
        Ok(MetricsReport {
            holder_f1: holder.f1(),
            target_f1: target.f1(),
            expression_f1: expression.f1(),
            targeted_f1: targeted.counts.f1(),
            holder,
            target,
            expression,
            targeted,
        })
    }

    /// The four F1 values in (holder, target, expression, targeted) order.
    pub fn f1s(&self) -> [f64; 4] {
        [
            self.holder_f1,
            self.target_f1,
            self.expression_f1,
            self.targeted_f1,
        ]
    }
}
