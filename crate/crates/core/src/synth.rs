//! Synthetic natural-like images from an occlusion ("dead leaves") model.
//!
//! Leaves are ellipses with power-law radii painted back to front. Each leaf
//! carries its own colour and surface texture (an oriented grating plus
//! grain), and the result goes through a mild optical blur and sensor noise.
//! The scale-invariant radius law gives the roughly `1/f^2` power spectrum of
//! photographs while the leaf boundaries give them object-like contours.

use rand::Rng;

use crate::error::Result;
use crate::image::ImageBuffer;
use crate::transforms::{gaussian_blur, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafModel {
    pub leaves: usize,
    pub min_radius: f64,
    /// Largest radius as a fraction of the shorter image side.
    pub max_radius_frac: f64,
    pub optics_sigma: f64,
    pub sensor_noise: f64,
}

impl Default for LeafModel {
    fn default() -> Self {
        Self {
            leaves: 600,
            min_radius: 2.0,
            max_radius_frac: 0.35,
            optics_sigma: 0.7,
            sensor_noise: 0.01,
        }
    }
}

/// Draws from `p(r) ~ r^-3` on `[lo, hi]` by inversion.
fn power_law_radius(u: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.powi(-2), hi.powi(-2));
    (a - u * (a - b)).powf(-0.5)
}

pub fn dead_leaves(width: usize, height: usize, seed: u64, model: &LeafModel) -> Result<ImageBuffer> {
    let mut rng = seeded_rng(seed);
    let mut data = vec![0.0; width * height * 3];
    let background: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
    for px in data.chunks_exact_mut(3) {
        px.copy_from_slice(&background);
    }

    let hi = (width.min(height) as f64 * model.max_radius_frac).max(model.min_radius + 1.0);
    for _ in 0..model.leaves {
        let r = power_law_radius(rng.random::<f64>(), model.min_radius, hi);
        let cx = rng.random_range(-r..width as f64 + r);
        let cy = rng.random_range(-r..height as f64 + r);
        let aspect = rng.random_range(0.5..1.0);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (st, ct) = theta.sin_cos();

        let luma = rng.random_range(0.05..0.95);
        let colour: [f64; 3] = std::array::from_fn(|_| luma + rng.random_range(-0.15..0.15));
        let freq = rng.random_range(0.04..0.4);
        let phi = rng.random_range(0.0..std::f64::consts::PI);
        let (sp, cp) = phi.sin_cos();
        let amp = rng.random_range(0.0..0.12);
        let grain = rng.random_range(0.0..0.06);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);

        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil().max(0.0) as usize).min(width);
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let u = dx * ct + dy * st;
                let v = (-dx * st + dy * ct) / aspect;
                if u * u + v * v > r * r {
                    continue;
                }
                let wave = amp
                    * (std::f64::consts::TAU * freq * (x as f64 * cp + y as f64 * sp) + phase).sin();
                let noise = grain * (rng.random::<f64>() - 0.5);
                let i = (y * width + x) * 3;
                for c in 0..3 {
                    data[i + c] = colour[c] + wave + noise;
                }
            }
        }
    }

    let img = ImageBuffer::from_fn(width, height, 3, |x, y, c| data[(y * width + x) * 3 + c])?;
    let img = if model.optics_sigma > 0.0 {
        let k = 2 * (3.0 * model.optics_sigma).ceil() as usize + 1;
        gaussian_blur(&img, k, model.optics_sigma)?
    } else {
        img
    };
    if model.sensor_noise <= 0.0 {
        return Ok(img);
    }
    let noisy = img
        .data()
        .iter()
        .map(|v| v + model.sensor_noise * standard_normal(&mut rng))
        .collect::<Vec<_>>();
    ImageBuffer::from_fn(width, height, 3, |x, y, c| noisy[(y * width + x) * 3 + c])
}

/// Box-Muller.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` images of `size x size`, image `i` seeded with `base_seed + i`.
pub fn corpus(n: usize, size: usize, base_seed: u64) -> Result<Vec<ImageBuffer>> {
    let model = LeafModel::default();
    (0..n as u64)
        .map(|i| dead_leaves(size, size, base_seed.wrapping_add(i), &model))
        .collect()
}
