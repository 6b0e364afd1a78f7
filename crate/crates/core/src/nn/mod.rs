//! Self-contained neural network stack: reverse-mode autodiff, a causal
//! transformer policy with reward and cost critics, Adam, and a binary
//! checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod model;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use model::{Critic, Model, ModelSpec, Params, Tensor, TokenStep};
pub use tape::{NnError, NodeId, Tape};
