use log::warn;

use super::sort::{composite_sort_key, key_tile, radix_sort_pairs};
use super::{RasterConfig, SplatInput};

/// Axis-aligned half extents (px) outside of which the splat's alpha is below
/// `alpha_min`. Never smaller than 3σ. `None` if the splat can never reach
/// `alpha_min` or is degenerate.
pub fn footprint_extent(splat: &SplatInput, alpha_min: f64) -> Option<(f64, f64)> {
    splat.conic()?;
    let opacity = splat.opacity.min(super::ALPHA_MAX);
    if opacity < alpha_min {
        return None;
    }
    let k = (2.0 * (opacity / alpha_min).ln()).sqrt().max(3.0);
    Some((k * splat.cov2d[(0, 0)].sqrt(), k * splat.cov2d[(1, 1)].sqrt()))
}

/// One tile's depth-sorted splat list.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBin<'a> {
    pub tile_x: usize,
    pub tile_y: usize,
    pub entries: &'a [u32],
    pub keys: &'a [u64],
}

/// All tile bins of a frame, stored as one key-sorted instance list.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    pub keys: Vec<u64>,
    pub entries: Vec<u32>,
    /// `[start, end)` into `entries` per tile id.
    pub ranges: Vec<(usize, usize)>,
}

impl TileBins {
    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    pub fn tile_entries(&self, tile: usize) -> &[u32] {
        let (s, e) = self.ranges[tile];
        &self.entries[s..e]
    }

    pub fn tile_keys(&self, tile: usize) -> &[u64] {
        let (s, e) = self.ranges[tile];
        &self.keys[s..e]
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive end) of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            y0,
            (x0 + self.tile_size).min(self.width),
            (y0 + self.tile_size).min(self.height),
        )
    }

    /// Non-empty bins in tile order.
    pub fn bins(&self) -> impl Iterator<Item = TileBin<'_>> {
        (0..self.tile_count()).filter_map(move |t| {
            let (s, e) = self.ranges[t];
            (e > s).then(|| TileBin {
                tile_x: t % self.tiles_x,
                tile_y: t / self.tiles_x,
                entries: &self.entries[s..e],
                keys: &self.keys[s..e],
            })
        })
    }

    /// Σ over tiles of (bin length × pixels in tile).
    pub fn fragment_count(&self) -> u64 {
        (0..self.tile_count())
            .map(|t| {
                let (x0, y0, x1, y1) = self.tile_rect(t);
                (self.tile_entries(t).len() * (x1 - x0) * (y1 - y0)) as u64
            })
            .sum()
    }
}

/// Assigns each splat to every tile its footprint box touches and sorts each
/// tile's list by composite key.
pub fn bin_to_tiles(splats: &[SplatInput], width: usize, height: usize, cfg: &RasterConfig) -> TileBins {
    let ts = cfg.tile_size;
    let tiles_x = width.div_ceil(ts);
    let tiles_y = height.div_ceil(ts);
    let mut keys = Vec::new();
    let mut entries = Vec::new();
    let mut clamped = 0usize;
    for (i, s) in splats.iter().enumerate() {
        let Some((hx, hy)) = footprint_extent(s, cfg.alpha_min) else {
            continue;
        };
        let (x0, x1) = (s.mean2d.x - hx, s.mean2d.x + hx);
        let (y0, y1) = (s.mean2d.y - hy, s.mean2d.y + hy);
        if x1 < 0.0 || y1 < 0.0 || x0 >= width as f64 || y0 >= height as f64 {
            continue;
        }
        let tx0 = (x0 / ts as f64).floor().max(0.0) as usize;
        let ty0 = (y0 / ts as f64).floor().max(0.0) as usize;
        let tx1 = ((x1 / ts as f64).floor() as usize).min(tiles_x - 1);
        let ty1 = ((y1 / ts as f64).floor() as usize).min(tiles_y - 1);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let (k, c) = composite_sort_key((ty * tiles_x + tx) as u32, s.depth, s.priority, cfg.depth_range);
                clamped += c as usize;
                keys.push(k);
                entries.push(i as u32);
            }
        }
    }
    if clamped > 0 {
        warn!("{clamped} tile instances had depth outside the sort range and were clamped");
    }
    let tile_bits = usize::BITS - (tiles_x * tiles_y).leading_zeros();
    radix_sort_pairs(&mut keys, &mut entries, 32 + tile_bits);

    let mut ranges = vec![(0usize, 0usize); tiles_x * tiles_y];
    let mut start = 0;
    while start < keys.len() {
        let tile = key_tile(keys[start]) as usize;
        let mut end = start + 1;
        while end < keys.len() && key_tile(keys[end]) as usize == tile {
            end += 1;
        }
        ranges[tile] = (start, end);
        start = end;
    }
    TileBins {
        tile_size: ts,
        tiles_x,
        tiles_y,
        width,
        height,
        keys,
        entries,
        ranges,
    }
}
