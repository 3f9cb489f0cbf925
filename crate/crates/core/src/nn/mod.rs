//! Minimal reverse-mode autodiff over [`crate::tensor::Tensor`] plus the
//! layer kit built on it.
//!
//! The networks here are small enough that a purpose-built tape beats a
//! framework dependency: every op is deterministic (fixed reduction order),
//! generic over `f32`/`f64`, and finite-difference tested.

mod graph;
mod graph_ops;
mod layers;
mod params;

pub use graph::{Grads, Graph, NodeId};
pub use layers::{
    sinusoidal_embedding, Conv2d, GroupNorm, LayerNorm, Linear, Mha, ResBlock,
    SpatialTransformer3d, TransformerBlock,
};
pub use params::{ParamId, ParamStore};
