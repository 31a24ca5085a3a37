//! Structured sentiment extraction with multilingual embedding fusion,
//! dependency-graph convolution and adversarial training.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to [`Real`], which is what the CLI uses.

pub mod autodiff;
pub mod corpus;
pub mod decoder;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod gcn;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Activation, Var};
pub use corpus::{Corpus, Opinion, Polarity, Sentence, Span};
pub use error::{Error, Result};
pub use eval::{MetricsReport, SentencePrediction, TransferMatrix};
pub use model::ModelConfig;
pub use scalar::Scalar;
pub use trainer::{Checkpoint, TrainConfig};

/// Scalar used by the concrete aliases.
pub type Real = f64;

pub type Tensor = tensor::Tensor<Real>;
pub type Tape = autodiff::Tape<Real>;
pub type ParamStore = params::ParamStore<Real>;
pub type Model = model::SentimentModel<Real>;
pub type EmbeddingBank = corpus::EmbeddingBank<Real>;
pub type SentenceEmbeddings = corpus::SentenceEmbeddings<Real>;
pub type DependencyGraph = gcn::DependencyGraph<Real>;
pub type Adam = optim::Adam<Real>;
pub type TrainState = trainer::TrainState<Real>;
