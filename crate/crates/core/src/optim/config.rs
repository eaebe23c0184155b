use crate::error::{Error, Result};

/// Per parameter-class Adam step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    /// Initial position rate; decays exponentially to `position_final`.
    pub position: f64,
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub pose: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
            pose: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Mean ‖dL/dmean2d‖ (per visible iteration) above which a Gaussian grows.
    pub grad_threshold: f64,
    /// Largest axis scale (world units) still treated as small, i.e. cloned.
    pub split_scale: f64,
    /// Upper bound on the population; densification stops there.
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            split_scale: 0.05,
            max_gaussians: 200_000,
        }
    }
}

/// Schedule milestones before scaling, in paper iterations.
pub const PAPER_DENSIFY_MILESTONES: [u64; 3] = [10_000, 15_000, 20_000];
pub const PAPER_FINETUNE_START: u64 = 25_000;
pub const PAPER_FINETUNE_INTERVAL: u64 = 5_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of `s_sem` in the hybrid importance.
    pub alpha: f64,
    /// Strength of semantic protection against dropout.
    pub beta: f64,
    /// Dropout probability cap at the end of the schedule.
    pub gamma: f64,
    pub iterations: u64,
    /// Maps paper milestones to this run (`0.1` turns 10k into 1000).
    pub schedule_scale: f64,
    pub densify_milestones: Vec<u64>,
    pub densify_prune_rate: f64,
    pub finetune_start: u64,
    pub finetune_interval: u64,
    pub finetune_prune_rate: f64,
    pub pruning: bool,
    pub dropout: bool,
    /// When false, dropout ignores `s_sem` (β treated as 0).
    pub semantic_dropout: bool,
    pub densify: DensifyConfig,
    pub lr: LearningRates,
    /// Weight of the D-SSIM term in the photometric loss.
    pub lambda_dssim: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.5,
            gamma: 0.25,
            iterations: 3_000,
            schedule_scale: 0.1,
            densify_milestones: PAPER_DENSIFY_MILESTONES.to_vec(),
            densify_prune_rate: 0.6,
            finetune_start: PAPER_FINETUNE_START,
            finetune_interval: PAPER_FINETUNE_INTERVAL,
            finetune_prune_rate: 0.3,
            pruning: true,
            dropout: true,
            semantic_dropout: true,
            densify: DensifyConfig::default(),
            lr: LearningRates::default(),
            lambda_dssim: 0.2,
            seed: 0,
        }
    }
}

/// What happens at a scheduled iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleEvent {
    /// Normalize gradient scores, prune at `rate`, then densify.
    Densify { rate: f64 },
    /// Normalize gradient scores and prune at `rate`.
    Finetune { rate: f64 },
}

impl TrainConfig {
    fn scaled(&self, paper_iteration: u64) -> u64 {
        (paper_iteration as f64 * self.schedule_scale).round() as u64
    }

    /// Dropout strength actually applied.
    pub fn effective_beta(&self) -> f64 {
        if self.semantic_dropout {
            self.beta
        } else {
            0.0
        }
    }

    /// Checks ranges and that the dropout probability stays below 1 for any
    /// `s_sem ∈ [0, 1]` and `t ≤ t_total`.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        let half_open = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in [0, 1)")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        half_open("gamma", self.gamma)?;
        half_open("densify_prune_rate", self.densify_prune_rate)?;
        half_open("finetune_prune_rate", self.finetune_prune_rate)?;
        unit("lambda_dssim", self.lambda_dssim)?;
        // With β ∈ [0, 1] and s_sem ∈ [0, 1], D peaks at γ·t/t_total ≤ γ < 1.
        if !(self.schedule_scale > 0.0) {
            return Err(Error::Config("schedule_scale must be positive".into()));
        }
        if self.finetune_interval == 0 || self.scaled(self.finetune_interval) == 0 {
            return Err(Error::Config("finetune interval scales to zero".into()));
        }
        for (name, v) in [
            ("lr.position", self.lr.position),
            ("lr.position_final", self.lr.position_final),
            ("lr.sh", self.lr.sh),
            ("lr.opacity", self.lr.opacity),
            ("lr.scale", self.lr.scale),
            ("lr.rotation", self.lr.rotation),
            ("lr.pose", self.lr.pose),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// The scaled schedule up to and including `iterations`, in order.
    pub fn schedule(&self) -> Vec<(u64, ScheduleEvent)> {
        let mut out: Vec<(u64, ScheduleEvent)> = self
            .densify_milestones
            .iter()
            .map(|&m| {
                (
                    self.scaled(m),
                    ScheduleEvent::Densify {
                        rate: self.densify_prune_rate,
                    },
                )
            })
            .filter(|(t, _)| *t >= 1 && *t <= self.iterations)
            .collect();
        let step = self.scaled(self.finetune_interval).max(1);
        let mut t = self.scaled(self.finetune_start);
        while t <= self.iterations {
            if t >= 1 {
                out.push((
                    t,
                    ScheduleEvent::Finetune {
                        rate: self.finetune_prune_rate,
                    },
                ));
            }
            t += step;
        }
        out.sort_by_key(|(t, _)| *t);
        out
    }

    /// Position learning rate at iteration `t` (log-linear decay).
    pub fn position_lr(&self, t: u64) -> f64 {
        let (a, b) = (self.lr.position, self.lr.position_final);
        if self.iterations == 0 || a <= 0.0 || b <= 0.0 {
            return a;
        }
        let s = (t as f64 / self.iterations as f64).clamp(0.0, 1.0);
        (a.ln() * (1.0 - s) + b.ln() * s).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_at_one_tenth() {
        let cfg = TrainConfig {
            iterations: 4_000,
            ..Default::default()
        };
        let s = cfg.schedule();
        let at: Vec<u64> = s.iter().map(|(t, _)| *t).collect();
        assert_eq!(at, vec![1000, 1500, 2000, 2500, 3000, 3500, 4000]);
        assert!(matches!(s[2].1, ScheduleEvent::Densify { rate } if rate == 0.6));
        assert!(matches!(s[3].1, ScheduleEvent::Finetune { rate } if rate == 0.3));
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { alpha: 1.2, ..Default::default() },
            TrainConfig { gamma: 1.0, ..Default::default() },
            TrainConfig { densify_prune_rate: 1.0, ..Default::default() },
            TrainConfig { beta: -0.1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn position_lr_decays_between_endpoints() {
        let cfg = TrainConfig::default();
        assert!((cfg.position_lr(0) - 1.6e-4).abs() < 1e-18);
        assert!((cfg.position_lr(cfg.iterations) - 1.6e-6).abs() < 1e-18);
        assert!(cfg.position_lr(10) > cfg.position_lr(20));
    }
}
