//! Patch permutations and the block-edge overlay.

use rand::seq::SliceRandom;
use rand::Rng;

use super::seeded_rng;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Geometry of a `grid x grid` tiling: patches of `patch_w x patch_h`
/// starting at `(x0, y0)`. Pixels outside the tiled region are never moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub grid: usize,
    pub x0: usize,
    pub y0: usize,
    pub patch_w: usize,
    pub patch_h: usize,
}

impl PatchGrid {
    /// Top-left anchored tiling with `floor(dim / grid)` patches; the
    /// right/bottom remainder strip stays in place.
    pub fn anchored(width: usize, height: usize, grid: usize) -> Result<Self> {
        check_grid(width, height, grid)?;
        Ok(Self {
            grid,
            x0: 0,
            y0: 0,
            patch_w: width / grid,
            patch_h: height / grid,
        })
    }

    pub fn patch_count(&self) -> usize {
        self.grid * self.grid
    }

    fn origin(&self, index: usize) -> (usize, usize) {
        let (row, col) = (index / self.grid, index % self.grid);
        (self.x0 + col * self.patch_w, self.y0 + row * self.patch_h)
    }
}

fn check_grid(width: usize, height: usize, grid: usize) -> Result<()> {
    if grid < 2 {
        return Err(Error::InvalidParameter(format!("grid must be >= 2, got {grid}")));
    }
    if grid > width.min(height) {
        return Err(Error::InvalidParameter(format!(
            "grid {grid} exceeds image dimensions {width}x{height}"
        )));
    }
    Ok(())
}

/// Centred square tiling used by [`patch_rotation`]: side
/// `grid * floor(min(w, h) / grid)`, so every patch is square.
pub fn rotation_region(width: usize, height: usize, grid: usize) -> Result<PatchGrid> {
    check_grid(width, height, grid)?;
    let p = width.min(height) / grid;
    let side = p * grid;
    Ok(PatchGrid {
        grid,
        x0: (width - side) / 2,
        y0: (height - side) / 2,
        patch_w: p,
        patch_h: p,
    })
}

fn copy_patch(
    src: &ImageBuffer,
    dst: &mut [f64],
    geo: &PatchGrid,
    from: usize,
    to: usize,
) {
    let ch = src.channels();
    let (sx, sy) = geo.origin(from);
    let (dx, dy) = geo.origin(to);
    let row_len = geo.patch_w * ch;
    for r in 0..geo.patch_h {
        let s = src.index(sx, sy + r, 0);
        let d = src.index(dx, dy + r, 0);
        dst[d..d + row_len].copy_from_slice(&src.data()[s..s + row_len]);
    }
}

/// Rearranges patches so that output patch `i` holds input patch `perm[i]`.
pub fn shuffle_patches_with(img: &ImageBuffer, grid: usize, perm: &[usize]) -> Result<ImageBuffer> {
    let geo = PatchGrid::anchored(img.width(), img.height(), grid)?;
    let n = geo.patch_count();
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidParameter(format!(
            "expected a permutation of 0..{n}"
        )));
    }
    let mut data = img.data().to_vec();
    for (to, &from) in perm.iter().enumerate() {
        copy_patch(img, &mut data, &geo, from, to);
    }
    Ok(ImageBuffer::from_parts(img.width(), img.height(), img.channels(), data))
}

/// Randomly permutes the `grid x grid` patches (uniform permutation from
/// the seeded generator).
pub fn patch_shuffle(img: &ImageBuffer, grid: usize, seed: u64) -> Result<ImageBuffer> {
    let geo = PatchGrid::anchored(img.width(), img.height(), grid)?;
    let mut perm: Vec<usize> = (0..geo.patch_count()).collect();
    perm.shuffle(&mut seeded_rng(seed));
    shuffle_patches_with(img, grid, &perm)
}

/// Rotates each patch of the centred square tiling in place by
/// `quarter_turns[i] * 90` degrees counter-clockwise.
pub fn rotate_patches_with(
    img: &ImageBuffer,
    grid: usize,
    quarter_turns: &[u8],
) -> Result<ImageBuffer> {
    let geo = rotation_region(img.width(), img.height(), grid)?;
    if quarter_turns.len() != geo.patch_count() {
        return Err(Error::InvalidParameter(format!(
            "expected {} rotations, got {}",
            geo.patch_count(),
            quarter_turns.len()
        )));
    }
    let ch = img.channels();
    let p = geo.patch_w;
    let mut data = img.data().to_vec();
    for (i, &turns) in quarter_turns.iter().enumerate() {
        let (ox, oy) = geo.origin(i);
        for r in 0..p {
            for c in 0..p {
                // Source coordinate (row, col) inside the patch.
                let (sr, sc) = match turns % 4 {
                    0 => (r, c),
                    1 => (c, p - 1 - r),
                    2 => (p - 1 - r, p - 1 - c),
                    _ => (p - 1 - c, r),
                };
                let s = img.index(ox + sc, oy + sr, 0);
                let d = img.index(ox + c, oy + r, 0);
                data[d..d + ch].copy_from_slice(&img.data()[s..s + ch]);
            }
        }
    }
    Ok(ImageBuffer::from_parts(img.width(), img.height(), ch, data))
}

/// Rotates every patch by an angle drawn uniformly from {0, 90, 180, 270}.
pub fn patch_rotation(img: &ImageBuffer, grid: usize, seed: u64) -> Result<ImageBuffer> {
    let geo = rotation_region(img.width(), img.height(), grid)?;
    let mut rng = seeded_rng(seed);
    let turns: Vec<u8> = (0..geo.patch_count())
        .map(|_| rng.random_range(0..4u8))
        .collect();
    rotate_patches_with(img, grid, &turns)
}

/// Pixels on the two-pixel bands straddling interior patch boundaries of the
/// anchored tiling: columns `c*pw - 1, c*pw` and rows `r*ph - 1, r*ph` for
/// `c, r in 1..grid`, restricted to the tiled region.
pub fn overlay_band_mask(width: usize, height: usize, grid: usize) -> Result<Vec<bool>> {
    let geo = PatchGrid::anchored(width, height, grid)?;
    let (tw, th) = (geo.patch_w * grid, geo.patch_h * grid);
    // Interior boundaries sit at multiples of the patch size strictly inside
    // the tiled extent; the band is the pixel on each side.
    let on_band = |v: usize, step: usize| {
        let boundary = if (v + 1) % step == 0 { v + 1 } else { v };
        boundary % step == 0 && boundary > 0 && boundary < step * grid
    };
    let mut mask = vec![false; width * height];
    for y in 0..th {
        for x in 0..tw {
            mask[y * width + x] = on_band(x, geo.patch_w) || on_band(y, geo.patch_h);
        }
    }
    Ok(mask)
}

/// Original image with the block-boundary bands of
/// `patch_shuffle(img, grid, seed)` pasted on top.
pub fn grid_overlay(img: &ImageBuffer, grid: usize, seed: u64) -> Result<ImageBuffer> {
    let shuffled = patch_shuffle(img, grid, seed)?;
    let mask = overlay_band_mask(img.width(), img.height(), grid)?;
    let ch = img.channels();
    let mut data = img.data().to_vec();
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        data[i * ch..(i + 1) * ch].copy_from_slice(&shuffled.data()[i * ch..(i + 1) * ch]);
    }
    Ok(ImageBuffer::from_parts(img.width(), img.height(), ch, data))
}
