pub mod baselines;
pub mod config;
pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod generator;
pub mod hierarchy;
mod io_util;
pub mod langevin;
pub mod mask;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tasks;
pub mod tensor;
pub mod trainer;
pub mod window;

pub use error::{Error, Result};
pub use hierarchy::{HierarchySpec, LatentLayout, LatentState};
pub use mask::Mask;
pub use tensor::Tensor;
