//! Semantic-priority Gaussian splatting for driving scenes: scene model,
//! differentiable tile rasterizer, importance-driven training and an
//! early-depth inference renderer.

pub mod camera;
pub mod error;
pub mod image;
pub mod io;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod priority;
pub mod raster;
pub mod scene;
pub mod semantic;
pub mod sh;
pub mod synth;

pub use error::{Error, Result};
