use std::collections::HashSet;

use super::importance::ImportanceState;
use crate::error::{Error, Result};
use crate::scene::{GaussianId, SceneModel};

#[derive(Clone, Debug, PartialEq)]
pub struct PruneEvent {
    pub iteration: u64,
    pub rate: f64,
    /// α used for the ranking; 0 means gradient-only.
    pub alpha: f64,
    pub removed: Vec<GaussianId>,
    pub count_before: usize,
    pub count_after: usize,
}

impl PruneEvent {
    pub fn to_line(&self) -> String {
        format!(
            "event=prune iter={} rate={} alpha={} count_before={} count_after={} removed={}",
            self.iteration,
            self.rate,
            self.alpha,
            self.count_before,
            self.count_after,
            self.removed.len()
        )
    }
}

/// `⌈rate · n⌉`, ignoring floating-point noise right above an integer.
pub fn prune_count(rate: f64, n: usize) -> usize {
    let x = rate * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k.max(0.0) as usize).min(n)
}

/// Removes the `⌈rate · N⌉` Gaussians with the lowest `s_hybrid`, lower id
/// first on ties. `state` must be aligned with `scene` and is realigned.
pub fn prune_step(
    scene: &mut SceneModel,
    state: &mut ImportanceState,
    rate: f64,
    iteration: u64,
) -> Result<PruneEvent> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("prune rate {rate} must lie in [0, 1)")));
    }
    let n = scene.gaussian_count();
    if state.len() != n {
        return Err(Error::Dimensions(format!("importance state has {} entries for {n} gaussians", state.len())));
    }
    let k = prune_count(rate, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        state.s_hybrid[a]
            .total_cmp(&state.s_hybrid[b])
            .then(state.ids[a].cmp(&state.ids[b]))
    });
    let mut removed: Vec<GaussianId> = order[..k].iter().map(|&i| state.ids[i]).collect();
    removed.sort();
    if k > 0 {
        let gone: HashSet<GaussianId> = removed.iter().copied().collect();
        scene.retain(|id| !gone.contains(&id));
        state.realign(scene);
    }
    Ok(PruneEvent {
        iteration,
        rate,
        alpha: state.alpha,
        removed,
        count_before: n,
        count_after: scene.gaussian_count(),
    })
}
