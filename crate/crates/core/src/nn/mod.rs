//! Minimal differentiable tensor engine for the denoising network.

pub mod attention;
pub mod conv;
pub mod graph;
pub mod params;
pub mod tensor;

pub use graph::{Graph, Var};
pub use params::{read_checkpoint, CheckpointEntry, ParamId, ParameterStore};
pub use tensor::Tensor;
