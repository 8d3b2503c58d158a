//! Fully connected networks with hand-written reverse-mode gradients, Adam
//! and Polyak target updates.

mod adam;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{ForwardCache, Gradients, LayerRecord, Mlp, MlpRecord, MlpSpec, OutputActivation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("invalid layer sizes {0:?}")]
    BadSpec(Vec<usize>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient or parameter")]
    NonFinite,
}
