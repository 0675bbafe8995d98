//! Dense tensor math, multilayer perceptrons with hand-written reverse-mode
//! gradients, layer normalization, Adam and a binary checkpoint container.
//!
//! Everything is 64-bit and single-threaded per call. Parameters of an [`Mlp`]
//! live in one flat buffer so optimizers, Polyak averaging and serialization
//! all operate on plain slices.

mod adam;
mod checkpoint;
mod error;
pub mod fastmath;
mod mlp;
mod norm;
mod tensor;

pub use adam::{polyak_update, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Entry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::NumericsError;
pub use mlp::{Activation, Mlp, MlpCache, MlpConfig, MlpGradients};
pub use norm::{layer_norm, LAYER_NORM_EPS};
pub use tensor::{gemm, Tensor, Transpose};

pub type Result<T> = std::result::Result<T, NumericsError>;
