use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::SentimentModel;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Parameters of a selected epoch together with the configuration that
/// produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub dev_targeted_f1: f64,
    pub params: IndexMap<String, ParamRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(
        model: &SentimentModel<T>,
        config: &TrainConfig,
        seed: u64,
        epoch: usize,
        dev_targeted_f1: f64,
    ) -> Self {
        let params = model
            .params()
            .iter()
            .map(|(name, t)| {
                let record = ParamRecord {
                    shape: t.shape().to_vec(),
                    values: t.values().iter().map(|v| v.as_f64()).collect(),
                };
                (name.to_string(), record)
            })
            .collect();
        Checkpoint {
            config: config.clone(),
            seed,
            epoch,
            dev_targeted_f1,
            params,
        }
    }

    /// Encoder widths, read off the attention projections.
    pub fn model_dims(&self) -> Result<Vec<usize>> {
        let dims: Vec<usize> = (0..)
            .map_while(|k| self.params.get(&format!("embed.attn_w.{k}")))
            .map(|p| p.shape.first().copied().unwrap_or(0))
            .collect();
        if dims.is_empty() {
            return Err(Error::Config(
                "checkpoint has no attention parameters".into(),
            ));
        }
        Ok(dims)
    }

    pub fn to_model<T: Scalar>(&self) -> Result<SentimentModel<T>> {
        let config = self.config.model_config(&self.model_dims()?);
        let reference = SentimentModel::<T>::new(config.clone(), 0)?;
        for (name, t) in reference.params().iter() {
            let rec = self
                .params
                .get(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))?;
            if rec.shape != t.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: checkpoint shape {:?}, model expects {:?}",
                    rec.shape,
                    t.shape()
                )));
            }
        }
        SentimentModel::from_named(
            config,
            self.params
                .iter()
                .map(|(n, r)| (n.as_str(), r.values.iter().map(|&v| T::lit(v)).collect())),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("serializing checkpoint", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::json("parsing checkpoint", e))?;
        ckpt.config.validate()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            fused_dim: 4,
            attn_dim: 3,
            gcn_layers: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let config = small();
        let model = SentimentModel::<f64>::new(config.model_config(&[5, 4]), 9).unwrap();
        let ckpt = Checkpoint::from_model(&model, &config, 9, 3, 0.25);
        let back: Checkpoint = serde_json::from_str(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.model_dims().unwrap(), vec![5, 4]);
        let rebuilt = back.to_model::<f64>().unwrap();
        for ((a, x), (b, y)) in model.params().iter().zip(rebuilt.params().iter()) {
            assert_eq!(a, b);
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let config = small();
        let model = SentimentModel::<f64>::new(config.model_config(&[5]), 1).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, &config, 1, 0, 0.0);
        ckpt.config.fused_dim = 6;
        assert!(ckpt.to_model::<f64>().is_err());
    }
}
