//! Packed 64-bit tile/depth/priority sort keys and the LSD radix sort used to
//! order tile instances.
//!
//! Key layout, most significant first:
//!
//! ```text
//! | tile id (32) | quantized depth (24) | quantized 1 - priority (8) |
//! ```
//!
//! Sorting ascending groups instances by tile, front to back within a tile,
//! with higher-priority splats first among equal quantized depths.

use crate::camera::Z_NEAR;

pub const DEPTH_BITS: u32 = 24;
pub const PRIORITY_BITS: u32 = 8;
const DEPTH_MAX: u64 = (1 << DEPTH_BITS) - 1;
const PRIORITY_MAX: u64 = (1 << PRIORITY_BITS) - 1;

/// Depth range mapped onto the 24-bit depth field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self {
            near: Z_NEAR,
            far: 1000.0,
        }
    }
}

/// Packs a tile id, depth and priority into one key. The flag is `true` when
/// the depth had to be clamped into range.
pub fn composite_sort_key(tile_id: u32, depth: f64, priority: f64, range: DepthRange) -> (u64, bool) {
    let unit = (depth - range.near) / (range.far - range.near);
    let clamped = !(0.0..=1.0).contains(&unit);
    let depth_q = quantize_depth(depth, range);
    let prio_q = ((1.0 - priority.clamp(0.0, 1.0)) * PRIORITY_MAX as f64).round() as u64;
    let key = ((tile_id as u64) << 32) | (depth_q << PRIORITY_BITS) | prio_q;
    (key, clamped)
}

/// The 24-bit depth field; non-decreasing in `depth`.
pub fn quantize_depth(depth: f64, range: DepthRange) -> u64 {
    let unit = (depth - range.near) / (range.far - range.near);
    (unit.clamp(0.0, 1.0) * DEPTH_MAX as f64).round() as u64
}

pub fn key_tile(key: u64) -> u32 {
    (key >> 32) as u32
}

pub fn key_depth(key: u64) -> u64 {
    (key >> PRIORITY_BITS) & DEPTH_MAX
}

/// Stable LSD radix sort of `(key, value)` pairs, 8 bits per pass. Passes
/// above `key_bits` are skipped.
pub fn radix_sort_pairs(keys: &mut Vec<u64>, values: &mut Vec<u32>, key_bits: u32) {
    assert_eq!(keys.len(), values.len());
    let n = keys.len();
    if n < 2 {
        return;
    }
    let mut tmp_keys = vec![0u64; n];
    let mut tmp_vals = vec![0u32; n];
    let passes = key_bits.div_ceil(8).min(8);
    for pass in 0..passes {
        let shift = pass * 8;
        let mut counts = [0usize; 256];
        for k in keys.iter() {
            counts[((k >> shift) & 0xff) as usize] += 1;
        }
        if counts.contains(&n) {
            continue;
        }
        let mut offsets = [0usize; 256];
        let mut sum = 0;
        for (o, c) in offsets.iter_mut().zip(counts.iter()) {
            *o = sum;
            sum += c;
        }
        for i in 0..n {
            let b = ((keys[i] >> shift) & 0xff) as usize;
            tmp_keys[offsets[b]] = keys[i];
            tmp_vals[offsets[b]] = values[i];
            offsets[b] += 1;
        }
        std::mem::swap(keys, &mut tmp_keys);
        std::mem::swap(values, &mut tmp_vals);
    }
}
