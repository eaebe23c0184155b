//! Training: photometric optimization with hybrid-importance pruning,
//! semantic dropout and densification.

pub mod adam;
pub mod config;
pub mod densify;
pub mod dropout;
pub mod importance;
pub mod loss;
pub mod prune;
pub mod train;

pub use config::{DensifyConfig, LearningRates, ScheduleEvent, TrainConfig};
pub use densify::{densify_step, DensifyEvent};
pub use dropout::{apply_dropout, compensation, dropout_probability, DropoutDraw};
pub use importance::{hybrid_score, normalize_grad_scores, ImportanceState};
pub use loss::{photometric_loss, LossValue};
pub use prune::{prune_count, prune_step, PruneEvent};
pub use train::{contribution_scores, mean_psnr, render_view, train, IterRecord, TrainOutcome};
