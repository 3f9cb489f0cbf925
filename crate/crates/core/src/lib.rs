//! Distillation of a toy multi-view diffusion teacher into a feed-forward
//! single-image → 3D-Gaussians generator.
//!
//! The pipeline: procedural ground-truth scenes ([`datakit`]) train a small
//! multi-view diffusion teacher ([`teacher`]); deterministic DDIM simulation
//! of the teacher produces `{N, C, II, OI}` quadruples; the student generator
//! ([`pepd`]) is distilled against those quadruples with a joint objective of
//! explicit supervision and implicit verification ([`objectives`], [`trainer`]),
//! rendering through a differentiable Gaussian splatting rasterizer
//! ([`renderer`]). [`evalkit`] measures the result and exports viewer-compatible
//! PLY files.
//!
//! All numeric code is generic over the scalar type (`f32`/`f64`) via
//! [`scalar::Scalar`]; training runs in `f32`, gradient checks in `f64`.

pub mod camera;
pub mod checkpoint;
pub mod config;
pub mod datakit;
pub mod error;
pub mod evalkit;
pub mod gaussians;
pub mod image_plane;
pub mod io;
pub mod nn;
pub mod objectives;
pub mod pepd;
pub mod renderer;
pub mod rng;
pub mod scalar;
pub mod teacher;
pub mod tensor;
pub mod trainer;

pub use error::{DdError, Result};
pub use scalar::Scalar;

/// Default scalar type for training and inference.
pub type Real = f32;

/// Concrete aliases for the common instantiations.
pub type GaussianSet32 = gaussians::GaussianSet<f32>;
pub type GaussianSet64 = gaussians::GaussianSet<f64>;
pub type Camera32 = camera::Camera<f32>;
pub type Camera64 = camera::Camera<f64>;
pub type ImagePlane32 = image_plane::ImagePlane<f32>;
pub type ImagePlane64 = image_plane::ImagePlane<f64>;





pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
