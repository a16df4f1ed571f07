//! Differentiable kernels on a reverse-mode tape.

mod checkpoint;
pub mod flops;
mod gradcheck;
mod layers;
mod params;
mod tape;


pub use checkpoint::{load_checkpoint, save_checkpoint, INDEX_FILE};
pub use gradcheck::{grad_check, DEFAULT_EPS};
pub use layers::{
    attention_specs, feed_forward, feed_forward_specs, layer_norm, layer_norm_specs, linear, linear_specs, lstm_cell,
    lstm_specs, multi_head_attention, softmax,
};
pub use params::{build_store, Gradients, Init, ParamEntry, ParamSpec, ParamStore};
pub use tape::{Tape, Var};
