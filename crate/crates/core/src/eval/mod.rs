//! Prediction, scoring and the cross-corpus transfer matrix.

pub mod metrics;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingBank};
use crate::decoder::PredictedOpinion;
use crate::error::{Error, Result};
use crate::model::SentimentModel;
use crate::scalar::Scalar;
use crate::trainer::{multi_seed, Checkpoint, F1Summary, TrainConfig};

pub use metrics::{
    targeted_counts, targeted_f1, token_counts, token_f1, Counts, Element, MetricsReport,
    SentenceOpinions, TargetedCounts,
};

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sent_id: String,
    pub opinions: Vec<PredictedOpinion>,
}

impl SentencePrediction {
    pub fn to_opinions(&self) -> SentenceOpinions {
        SentenceOpinions {
            sent_id: self.sent_id.clone(),
            opinions: self
                .opinions
                .iter()
                .map(PredictedOpinion::to_opinion)
                .collect(),
        }
    }
}

/// Predicts every sentence of `corpus`, in corpus order.
pub fn predict_corpus<T: Scalar>(
    model: &SentimentModel<T>,
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    threshold: f64,
) -> Result<Vec<SentencePrediction>> {
    corpus
        .sentences
        .par_iter()
        .map(|s| {
            let entry = bank.check_sentence(s)?;
            Ok(SentencePrediction {
                sent_id: s.sent_id.clone(),
                opinions: model.predict_sentence(s, entry, threshold)?,
            })
        })
        .collect()
}

pub fn score(corpus: &Corpus, predictions: &[SentencePrediction]) -> Result<MetricsReport> {
    let pred: Vec<SentenceOpinions> = predictions
        .iter()
        .map(SentencePrediction::to_opinions)
        .collect();
    MetricsReport::compute(&SentenceOpinions::gold(corpus), &pred)
}

pub fn evaluate_model<T: Scalar>(
    model: &SentimentModel<T>,
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    threshold: f64,
) -> Result<MetricsReport> {
    score(corpus, &predict_corpus(model, corpus, bank, threshold)?)
}

pub fn evaluate<T: Scalar>(
    checkpoint: &Checkpoint,
    corpus: &Corpus,
    bank: &EmbeddingBank<T>,
    threshold: f64,
) -> Result<MetricsReport> {
    evaluate_model(&checkpoint.to_model::<T>()?, corpus, bank, threshold)
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &[SentencePrediction]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in predictions {
        let line =
            serde_json::to_string(p).map_err(|e| Error::json("serializing prediction", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<SentencePrediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::json(format!("prediction line {}", i + 1), e))
        })
        .collect()
}

/// A corpus taking part in a transfer experiment. Training uses `train`
/// with model selection on `dev`; as a target, the corpus is scored on `dev`.
pub struct TransferInput<T> {
    pub name: String,
    pub train: Corpus,
    pub dev: Corpus,
    pub bank: EmbeddingBank<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub per_seed: Vec<MetricsReport>,
    pub mean: F1Summary,
    pub std_dev: F1Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub corpora: Vec<String>,
    /// Row-major: `cells[i][j]` trains on corpus `i` and scores corpus `j`.
    pub cells: Vec<Vec<TransferCell>>,
}

impl TransferMatrix {
    pub fn cell(&self, source: &str, target: &str) -> Option<&TransferCell> {
        let i = self.corpora.iter().position(|c| c == source)?;
        let j = self.corpora.iter().position(|c| c == target)?;
        Some(&self.cells[i][j])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("serializing matrix", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Trains once per source and seed, then scores every target. The sources
/// must share encoder widths so one model can read every bank.
pub fn transfer_matrix<T: Scalar>(
    inputs: &[TransferInput<T>],
    config: &TrainConfig,
) -> Result<TransferMatrix> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput(
            "transfer matrix needs at least one corpus".into(),
        ));
    }
    let dims = inputs[0].bank.model_dims();
    if let Some(other) = inputs.iter().find(|c| c.bank.model_dims() != dims) {
        return Err(Error::Config(format!(
            "corpus {} has encoder widths {:?}, expected {dims:?}",
            other.name,
            other.bank.model_dims()
        )));
    }
    let mut cells = Vec::with_capacity(inputs.len());
    for source in inputs {
        let (_, checkpoints) = multi_seed(&source.train, &source.bank, &source.dev, config)?;
        let models = checkpoints
            .iter()
            .map(Checkpoint::to_model::<T>)
            .collect::<Result<Vec<_>>>()?;
        let mut row = Vec::with_capacity(inputs.len());
        for target in inputs {
            let per_seed = models
                .iter()
                .map(|m| evaluate_model(m, &target.dev, &target.bank, config.threshold))
                .collect::<Result<Vec<_>>>()?;
            let (mean, std_dev) = F1Summary::mean_and_std(&per_seed);
            row.push(TransferCell {
                source: source.name.clone(),
                target: target.name.clone(),
                per_seed,
                mean,
                std_dev,
            });
        }
        cells.push(row);
    }
    Ok(TransferMatrix {
        corpora: inputs.iter().map(|c| c.name.clone()).collect(),
        cells,
    })
}
