//! Denoising pipeline for cone-beam CT volumes: volume I/O, noise simulation,
//! foreground segmentation and patching, a small autodiff engine, the hybrid
//! attention residual U-Net, image quality metrics and training utilities.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod error;
pub mod image;
pub mod metrics;
pub mod morphology;
pub mod network;
pub mod nn;
pub mod noise;
pub mod patching;
pub mod scalar;
pub mod segmentation;
pub mod training;
pub mod volume_io;

pub use error::{HaruError, Result};
pub use image::Image;
pub use network::{HaruNet, NetworkConfig};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type ParameterStore32 = nn::ParameterStore<f32>;
pub type ParameterStore64 = nn::ParameterStore<f64>;
pub type Graph32 = nn::Graph<f32>;
pub type Graph64 = nn::Graph<f64>;
pub type HaruNet32 = network::HaruNet<f32>;
pub type HaruNet64 = network::HaruNet<f64>;
