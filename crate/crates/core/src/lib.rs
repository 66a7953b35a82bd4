//! Federated learning by model fusion for offensive-language classification.
//!
//! Clients fine-tune copies of a shared base encoder on private data. A
//! coordinator fuses their parameters by elementwise mean, optionally
//! finetunes the fused model at one client, and the result is compared with
//! non-fused and ensemble baselines by Macro F1.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod label;
pub mod model;
pub mod pipeline;
pub(crate) mod rng;
pub mod tensor;
pub mod train;

pub use data::{CanonicalDataset, LabeledInstance};
pub use error::{Error, Result};
pub use eval::{Approach, EvaluationReport};
pub use fusion::{ClientRecord, Coordinator, FusionJob};
pub use label::Label;
pub use model::{ModelArchitecture, ModelState, TokenSequence};
pub use pipeline::{run_pipeline, RunConfig};
pub use rng::{derive_seed, rng_for};
pub use tensor::{elementwise_mean, ParameterSet, Tensor};
pub use train::{TrainLog, TrainingConfig};
