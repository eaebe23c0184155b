//! Per-Gaussian semantic importance from per-view label masks.
//!
//! Each Gaussian's mean is projected into every masked view. A view counts as
//! critical for that Gaussian when the majority label in the 3x3 neighborhood
//! around the projected pixel is a critical class. `s_sem` is the fraction of
//! views, among those where the mean lands in-image and in front of the
//! camera, that count as critical. Occlusion is not modelled.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::camera::{CameraView, Z_NEAR};
use crate::error::{Error, Result};
use crate::image::LabelMask;
use crate::scene::{compose_world, SceneModel};

/// Flag threshold on `s_sem` for the binary critical partition.
pub const CRITICAL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassEntry {
    pub name: String,
    pub critical: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticClassTable {
    pub classes: BTreeMap<u16, ClassEntry>,
}

pub const CRITICAL_CLASSES: [&str; 3] = ["vehicle", "pedestrian", "cyclist"];

pub mod labels {
    pub const UNLABELED: u16 = 0;
    pub const ROAD: u16 = 1;
    pub const BUILDING: u16 = 2;
    pub const VEGETATION: u16 = 3;
    pub const SKY: u16 = 4;
    pub const VEHICLE: u16 = 5;
    pub const PEDESTRIAN: u16 = 6;
    pub const CYCLIST: u16 = 7;
}

impl Default for SemanticClassTable {
    fn default() -> Self {
        let names = [
            "unlabeled",
            "road",
            "building",
            "vegetation",
            "sky",
            "vehicle",
            "pedestrian",
            "cyclist",
        ];
        Self::from_names(names.iter().enumerate().map(|(i, n)| (i as u16, n.to_string())))
    }
}

impl SemanticClassTable {
    /// Builds a table where criticality follows the class name.
    pub fn from_names(entries: impl IntoIterator<Item = (u16, String)>) -> Self {
        let classes = entries
            .into_iter()
            .map(|(id, name)| {
                let critical = CRITICAL_CLASSES.contains(&name.as_str());
                (id, ClassEntry { name, critical })
            })
            .collect();
        Self { classes }
    }

    pub fn insert(&mut self, label: u16, name: &str, critical: bool) {
        self.classes.insert(
            label,
            ClassEntry {
                name: name.to_string(),
                critical,
            },
        );
    }

    pub fn label_of(&self, name: &str) -> Option<u16> {
        self.classes
            .iter()
            .find(|(_, e)| e.name == name)
            .map(|(&id, _)| id)
    }
}

/// Critical flag for a label; unknown labels are Non-Critical.
pub fn criticality(label: u16, table: &SemanticClassTable) -> bool {
    match table.classes.get(&label) {
        Some(entry) => entry.critical,
        None => {
            warn!("unknown semantic label {label}, treating as non-critical");
            false
        }
    }
}

/// Per-pixel critical flags of a label mask; unknown labels are
/// Non-Critical.
pub fn critical_pixels(mask: &LabelMask, table: &SemanticClassTable) -> Vec<bool> {
    mask.labels
        .iter()
        .map(|l| table.classes.get(l).is_some_and(|e| e.critical))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMask {
    pub view_id: u32,
    pub mask: LabelMask,
}

/// Majority label of the in-bounds 3x3 neighborhood around `(px, py)`;
/// ties go to the smallest label id.
pub fn majority_label(mask: &LabelMask, px: usize, py: usize) -> u16 {
    let mut counts: BTreeMap<u16, u32> = BTreeMap::new();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let x = px as i64 + dx;
            let y = py as i64 + dy;
            if x >= 0 && y >= 0 && (x as usize) < mask.width && (y as usize) < mask.height {
                *counts.entry(mask.get(x as usize, y as usize)).or_default() += 1;
            }
        }
    }
    let mut best = (0u16, 0u32);
    for (label, n) in counts {
        if n > best.1 {
            best = (label, n);
        }
    }
    best.0
}

/// Per-Gaussian `(s_sem, critical)` in [`SceneModel::ids`] order.
pub fn compute_semantic_scores(
    scene: &SceneModel,
    views: &[CameraView],
    masks: &[SemanticMask],
    table: &SemanticClassTable,
) -> Result<Vec<(f64, bool)>> {
    if views.is_empty() || masks.is_empty() {
        return Err(Error::NoViews);
    }
    let mut paired = Vec::with_capacity(masks.len());
    for m in masks {
        let view = views
            .iter()
            .find(|v| v.id == m.view_id)
            .ok_or_else(|| Error::Dimensions(format!("mask for unknown view {}", m.view_id)))?;
        if view.width() != m.mask.width || view.height() != m.mask.height {
            return Err(Error::Dimensions(format!(
                "mask {}x{} vs view {} {}x{}",
                m.mask.width,
                m.mask.height,
                view.id,
                view.width(),
                view.height()
            )));
        }
        paired.push((view, &m.mask));
    }
    // Views are processed in id order so the result is independent of input order.
    paired.sort_by_key(|(v, _)| v.id);

    let n = scene.gaussian_count();
    let mut visible = vec![0u32; n];
    let mut critical_hits = vec![0u32; n];
    for (view, mask) in &paired {
        let world = compose_world(scene, view.timestamp);
        let w = view.world_to_camera.matrix();
        let k = &view.intrinsics;
        let hits: Vec<Option<bool>> = world
            .par_iter()
            .map(|g| {
                let p = w * g.mean + view.world_to_camera.translation;
                if p.z <= Z_NEAR {
                    return None;
                }
                let u = k.fx * p.x / p.z + k.cx;
                let v = k.fy * p.y / p.z + k.cy;
                if !(u >= 0.0 && v >= 0.0 && u < k.width as f64 && v < k.height as f64) {
                    return None;
                }
                let label = majority_label(mask, u as usize, v as usize);
                Some(criticality(label, table))
            })
            .collect();
        for (i, h) in hits.into_iter().enumerate() {
            if let Some(c) = h {
                visible[i] += 1;
                critical_hits[i] += c as u32;
            }
        }
    }

    let mut out: Vec<(f64, bool)> = visible
        .iter()
        .zip(&critical_hits)
        .map(|(&v, &c)| {
            let s = if v == 0 { 0.0 } else { c as f64 / v as f64 };
            (s, s >= CRITICAL_THRESHOLD)
        })
        .collect();

    // Dynamic objects are segmented per instance upstream: every Gaussian of an
    // object takes the object's majority flag.
    let mut offset = scene.static_gaussians.len();
    for object in &scene.dynamic_objects {
        let range = offset..offset + object.gaussians.len();
        let flagged = out[range.clone()].iter().filter(|(_, c)| *c).count();
        let majority = 2 * flagged >= object.gaussians.len() && !object.gaussians.is_empty();
        for entry in &mut out[range] {
            entry.1 = majority;
        }
        offset += object.gaussians.len();
    }
    Ok(out)
}

/// Computes scores and writes them into the scene.
pub fn score_scene(
    scene: &mut SceneModel,
    views: &[CameraView],
    masks: &[SemanticMask],
    table: &SemanticClassTable,
) -> Result<()> {
    let flags = compute_semantic_scores(scene, views, masks, table)?;
    scene.set_semantic_flags(&flags);
    Ok(())
}
