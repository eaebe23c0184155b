//! On-disk formats: splat PLY, PNG images and masks, text configs and
//! scene directories.

pub mod config;
pub mod dataset;
pub mod ply;
pub mod png;

pub use config::{parse_key_values, RunConfig, Toggles};
pub use dataset::{load_dataset, load_labels, save_dataset, save_labels, Dataset};
pub use ply::{load_ply, save_ply, PlyTable};
pub use png::{load_image, load_mask, save_image, save_mask};
