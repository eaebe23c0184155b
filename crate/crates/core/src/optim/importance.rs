use std::collections::HashMap;

use crate::scene::{GaussianId, SceneModel};

/// `α·s_sem + (1 − α)·s_grad`.
#[inline]
pub fn hybrid_score(s_sem: f64, s_grad: f64, alpha: f64) -> f64 {
    alpha * s_sem + (1.0 - alpha) * s_grad
}

/// Per-Gaussian importance bookkeeping, aligned with [`SceneModel::ids`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceState {
    pub alpha: f64,
    pub ids: Vec<GaussianId>,
    pub s_sem: Vec<f64>,
    pub raw_grad_accum: Vec<f64>,
    pub s_grad: Vec<f64>,
    pub s_hybrid: Vec<f64>,
    pub drop_count: Vec<u32>,
}

impl ImportanceState {
    pub fn new(scene: &SceneModel, alpha: f64) -> Self {
        let ids = scene.ids();
        let n = ids.len();
        let s_sem: Vec<f64> = scene.semantic_flags().iter().map(|f| f.0).collect();
        let s_hybrid = s_sem.iter().map(|&s| hybrid_score(s, 0.0, alpha)).collect();
        Self {
            alpha,
            ids,
            s_sem,
            raw_grad_accum: vec![0.0; n],
            s_grad: vec![0.0; n],
            s_hybrid,
            drop_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn accumulate(&mut self, raw: &[f64]) {
        for (a, r) in self.raw_grad_accum.iter_mut().zip(raw) {
            *a += r;
        }
    }

    fn refresh_hybrid(&mut self) {
        for i in 0..self.len() {
            self.s_hybrid[i] = hybrid_score(self.s_sem[i], self.s_grad[i], self.alpha);
        }
    }

    /// Re-indexes the state after the scene changed. Surviving ids keep their
    /// values; new ids start from zero gradient with their own `s_sem`.
    pub fn realign(&mut self, scene: &SceneModel) {
        let old: HashMap<GaussianId, usize> = self.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let ids = scene.ids();
        let flags = scene.semantic_flags();
        let pick = |v: &Vec<f64>, id: &GaussianId| old.get(id).map_or(0.0, |&i| v[i]);
        let raw = ids.iter().map(|id| pick(&self.raw_grad_accum, id)).collect();
        let s_grad = ids.iter().map(|id| pick(&self.s_grad, id)).collect();
        let drops = ids.iter().map(|id| old.get(id).map_or(0, |&i| self.drop_count[i])).collect();
        self.s_sem = flags.iter().map(|f| f.0).collect();
        self.raw_grad_accum = raw;
        self.s_grad = s_grad;
        self.drop_count = drops;
        self.s_hybrid = vec![0.0; ids.len()];
        self.ids = ids;
        self.refresh_hybrid();
    }
}

/// Max-normalizes the accumulated gradient scores into `s_grad`, refreshes
/// `s_hybrid` and clears the accumulators.
pub fn normalize_grad_scores(state: &mut ImportanceState) {
    let max = state.raw_grad_accum.iter().copied().fold(0.0, f64::max);
    for (g, r) in state.s_grad.iter_mut().zip(&state.raw_grad_accum) {
        *g = if max > 0.0 { r / max } else { 0.0 };
    }
    state.raw_grad_accum.iter_mut().for_each(|r| *r = 0.0);
    state.refresh_hybrid();
}
