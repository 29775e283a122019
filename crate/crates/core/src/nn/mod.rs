//! Minimal sequential neural-network kernel with hand-written backward passes.

mod backward;
pub mod checkpoint;
mod forward;
pub mod gradcheck;
mod layer;
pub mod loss;
mod network;
mod ops;
mod sgd;

pub use backward::{backward, backward_injected, Gradients};
pub use checkpoint::{Checkpoint, NetworkRecord};
pub use forward::{forward, forward_range, predict, Activations, Mode};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{LayerParams, LayerSpec, ModelParams};
pub use network::Network;
pub use sgd::{sgd_step, SgdConfig};

#[cfg(test)]
mod tests;
