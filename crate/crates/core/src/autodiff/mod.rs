//! Minimal MLP engine with exact input jets and parameter gradients of
//! jet-based losses.

mod checkpoint;
mod graph;
mod jet;
mod mlp;
mod optim;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use graph::{loss_param_grad, Gradients, JetGraph, JetVars, NetId};
pub use jet::{InputJet, JetCache};
pub use mlp::{Activation, Embedding, Layer, Mlp, ParamVector};
pub use optim::{Direction, Optimizer};
pub use tape::{Tape, Var};
