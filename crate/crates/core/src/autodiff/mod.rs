//! Reverse-mode differentiation, dense layers and Adam.

mod adam;
mod layers;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{forward_mlp, Activation, BoundMlp, Dense, MlpSpec};
pub use params::{GradMap, ParamStore, SerializedTensor};
pub use tape::{sigmoid, softplus, Gradients, Tape, Tensor, Var};
