//! Precomputed word vectors from several pretrained encoders.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The K embedding matrices of one sentence; matrix k is `|x| × d_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEmbeddings<T> {
    pub models: Vec<Tensor<T>>,
}

impl<T: Scalar> SentenceEmbeddings<T> {
    pub fn token_count(&self) -> usize {
        self.models.first().map_or(0, Tensor::rows)
    }
}

/// Frozen per-sentence, per-model word vectors keyed by sentence id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBank<T> {
    model_dims: Vec<usize>,
    entries: IndexMap<String, SentenceEmbeddings<T>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    sent_id: String,
    models: Vec<Vec<Vec<f64>>>,
}

impl<T: Scalar> EmbeddingBank<T> {
    pub fn new(model_dims: Vec<usize>) -> Result<Self> {
        if model_dims.is_empty() || model_dims.contains(&0) {
            return Err(Error::Config(format!(
                "model dims must be a non-empty list of positive sizes, got {model_dims:?}"
            )));
        }
        Ok(EmbeddingBank {
            model_dims,
            entries: IndexMap::new(),
        })
    }

    pub fn model_dims(&self) -> &[usize] {
        &self.model_dims
    }

    /// Number of encoders K.
    pub fn model_count(&self) -> usize {
        self.model_dims.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sent_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, sent_id: &str) -> Result<&SentenceEmbeddings<T>> {
        self.entries
            .get(sent_id)
            .ok_or_else(|| Error::Coverage(sent_id.to_string()))
    }

    /// Adds or replaces the vectors of one sentence after checking their
    /// dimensions against the bank header.
    pub fn insert(
        &mut self,
        sent_id: impl Into<String>,
        entry: SentenceEmbeddings<T>,
    ) -> Result<()> {
        let sent_id = sent_id.into();
        self.check_entry(&sent_id, &entry, None)?;
        self.entries.insert(sent_id, entry);
        Ok(())
    }

    fn check_entry(
        &self,
        sent_id: &str,
        entry: &SentenceEmbeddings<T>,
        tokens: Option<usize>,
    ) -> Result<()> {
        let align = |message: String| Error::Alignment {
            sent_id: sent_id.to_string(),
            message,
        };
        if entry.models.len() != self.model_dims.len() {
            return Err(align(format!(
                "{} model matrices, bank declares {}",
                entry.models.len(),
                self.model_dims.len()
            )));
        }
        let rows = tokens.unwrap_or_else(|| entry.token_count());
        for (k, (m, &d)) in entry.models.iter().zip(&self.model_dims).enumerate() {
            if m.shape() != [rows, d] {
                return Err(align(format!(
                    "model {k} matrix has shape {:?}, expected [{rows}, {d}]",
                    m.shape()
                )));
            }
        }
        Ok(())
    }

    /// Checks that every sentence of `corpus` has correctly sized vectors.
    pub fn verify(&self, corpus: &Corpus) -> Result<()> {
        for s in &corpus.sentences {
            self.check_sentence(s)?;
        }
        Ok(())
    }

    pub(crate) fn check_sentence(&self, s: &Sentence) -> Result<&SentenceEmbeddings<T>> {
        let entry = self.get(&s.sent_id)?;
        self.check_entry(&s.sent_id, entry, Some(s.len()))?;
        Ok(entry)
    }

    /// Copies every entry of `other` into this bank.
    pub fn merge(&mut self, other: EmbeddingBank<T>) -> Result<()> {
        if other.model_dims != self.model_dims {
            return Err(Error::Config(format!(
                "cannot merge bank with dims {:?} into {:?}",
                other.model_dims, self.model_dims
            )));
        }
        self.entries.extend(other.entries);
        Ok(())
    }

    /// Parses the JSON Lines bank format.
    pub fn parse(text: &str) -> Result<Self> {
        Self::read(BufReader::new(text.as_bytes()), "<memory>")
    }

    fn read(reader: impl BufRead, origin: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, Ok(l))) if l.trim().is_empty() => continue,
                Some((_, Ok(l))) => break l,
                Some((_, Err(e))) => return Err(Error::io(origin, e)),
                None => return Err(Error::Config(format!("{origin}: empty bank file"))),
            }
        };
        let header: Header = serde_json::from_str(&header)
            .map_err(|e| Error::json(format!("{origin}: bank header"), e))?;
        let mut bank = EmbeddingBank::new(header.model_dims)?;
        for (no, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{origin}: bank line {}", no + 1), e))?;
            let mut models = Vec::with_capacity(rec.models.len());
            for (k, rows) in rec.models.into_iter().enumerate() {
                let rows: Vec<Vec<T>> = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(T::lit).collect())
                    .collect();
                let d = bank.model_dims.get(k).copied().unwrap_or(0);
                let m = if rows.is_empty() {
                    Tensor::zeros(&[0, d])
                } else {
                    Tensor::from_rows(&rows).map_err(|e| Error::Alignment {
                        sent_id: rec.sent_id.clone(),
                        message: format!("model {k}: {e}"),
                    })?
                };
                models.push(m);
            }
            bank.insert(rec.sent_id, SentenceEmbeddings { models })?;
        }
        Ok(bank)
    }

    /// Loads a bank file and checks it covers `corpus`.
    pub fn load(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bank = Self::read(BufReader::new(file), &path.display().to_string())?;
        bank.verify(corpus)?;
        Ok(bank)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            model_dims: self.model_dims.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (sent_id, entry) in &self.entries {
            let line = Line {
                sent_id: sent_id.clone(),
                models: entry
                    .models
                    .iter()
                    .map(|m| {
                        (0..m.rows())
                            .map(|i| m.row(i).iter().map(|v| v.as_f64()).collect())
                            .collect()
                    })
                    .collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic stand-in for pretrained encoder outputs.
///
/// The vector of a token under model k is drawn uniformly from `[-1, 1]^d_k`
/// by a generator seeded from `(seed, k, key(token))`. Equal keys therefore
/// get equal vectors wherever they occur; by default the key is the token
/// string itself.
pub struct SyntheticBank<'a> {
    dims: Vec<usize>,
    seed: u64,
    key: Box<dyn Fn(&str) -> String + 'a>,
}

impl<'a> SyntheticBank<'a> {
    pub fn new(dims: &[usize], seed: u64) -> Self {
        SyntheticBank {
            dims: dims.to_vec(),
            seed,
            key: Box::new(str::to_string),
        }
    }

    /// Maps tokens to the lexical key that determines their vectors.
    pub fn with_key(mut self, key: impl Fn(&str) -> String + 'a) -> Self {
        self.key = Box::new(key);
        self
    }

    pub fn vector(&self, model: usize, token: &str) -> Vec<f64> {
        let key = (self.key)(token);
        let mut h = fnv1a(&self.seed.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
        h = fnv1a(&(model as u64).to_le_bytes(), h);
        h = fnv1a(key.as_bytes(), h);
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        (0..self.dims[model])
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect()
    }

    pub fn build<T: Scalar>(&self, corpora: &[&Corpus]) -> Result<EmbeddingBank<T>> {
        let mut bank = EmbeddingBank::new(self.dims.clone())?;
        for s in corpora.iter().flat_map(|c| &c.sentences) {
            let models = (0..self.dims.len())
                .map(|k| {
                    let rows: Vec<Vec<T>> = s
                        .tokens
                        .iter()
                        .map(|tok| self.vector(k, tok).into_iter().map(T::lit).collect())
                        .collect();
                    Tensor::from_rows(&rows)
                })
                .collect::<Result<Vec<_>>>()?;
            bank.insert(s.sent_id.clone(), SentenceEmbeddings { models })?;
        }
        Ok(bank)
    }
}

/// Synthetic bank with `models` encoders of the given dimensions.
pub fn synthetic_bank<T: Scalar>(
    corpus: &Corpus,
    models: usize,
    dims: &[usize],
    seed: u64,
) -> Result<EmbeddingBank<T>> {
    if models != dims.len() {
        return Err(Error::Config(format!(
            "{models} models requested with {} dimensions",
            dims.len()
        )));
    }
    SyntheticBank::new(dims, seed).build(&[corpus])
}
