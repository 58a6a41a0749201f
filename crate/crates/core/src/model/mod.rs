//! Learnable dynamics: the FHNN, its ablations and the Neural ODE baseline.

mod descriptor;
mod dynamics;
mod rollout;
mod stream;

pub use descriptor::{CapConfig, Checkpoint, CheckpointMeta, ModelDescriptor, PhysicalContext, Variant, CHECKPOINT_FORMAT};
pub use dynamics::{cap_inverse, cap_map, zero_weights, BatchState, BoundModel, FlowEval, LearnedFlow, Model};
pub use rollout::{integer_checkpoints, rollout_model, Rollout, DEFAULT_ROLLOUT_STEP, DIVERGENCE_LIMIT};
pub use stream::{stream_eval, StreamEval};
