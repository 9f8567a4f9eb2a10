//! Smoothing filters. Box, Gaussian and median work per channel; bilateral
//! and non-local means share one weight per pixel pair across channels. All
//! use half-sample symmetric reflection (`cba|abc|cba`) at the borders.
//!
//! Weighted means are accumulated as `centre + sum(w * (v - centre)) / sum(w)`
//! so flat regions come out bit-identical.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Maps an out-of-range index back into `0..n` by mirroring about the
/// half-sample points `-0.5` and `n - 0.5`. Handles offsets of any size.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Index lookup covering `-pad..n + pad`; entry `i + pad` is `reflect(i, n)`.
fn reflect_table(n: usize, pad: usize) -> Vec<usize> {
    (0..n + 2 * pad)
        .map(|i| reflect(i as isize - pad as isize, n))
        .collect()
}

/// Sampled Gaussian with `k` taps, normalised to sum to one.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    let c = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Plain separable correlation with odd, centred kernels:
/// `out(x) = sum_j k[j] * in(x + j - k/2)`.
pub(crate) fn convolve_separable(
    plane: &[f64],
    width: usize,
    height: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let rx = kx.len() / 2;
    let ry = ky.len() / 2;
    let xmap = reflect_table(width, rx);
    let ymap = reflect_table(height, ry);
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            tmp[y * width + x] = kx
                .iter()
                .enumerate()
                .map(|(j, k)| k * row[xmap[x + j]])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = ky
                .iter()
                .enumerate()
                .map(|(j, k)| k * tmp[ymap[y + j] * width + x])
                .sum();
        }
    }
    out
}

/// Separable smoothing with a normalised kernel, in centre-relative form.
fn smooth_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let xmap = reflect_table(width, r);
    let ymap = reflect_table(height, r);
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let c = row[x];
            let delta: f64 = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * (row[xmap[x + j]] - c))
                .sum();
            tmp[y * width + x] = c + delta;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let c = tmp[y * width + x];
            let delta: f64 = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * (tmp[ymap[y + j] * width + x] - c))
                .sum();
            out[y * width + x] = c + delta;
        }
    }
    out
}

fn map_planes(img: &ImageBuffer, f: impl Fn(&[f64]) -> Vec<f64>) -> ImageBuffer {
    let planes: Vec<Vec<f64>> = (0..img.channels()).map(|c| f(&img.plane(c))).collect();
    ImageBuffer::from_planes(img.width(), img.height(), &planes)
}

fn check_odd_kernel(name: &str, k: usize) -> Result<()> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "{name} kernel size must be odd and >= 3, got {k}"
        )));
    }
    Ok(())
}

pub fn gaussian_blur(img: &ImageBuffer, k: usize, sigma: f64) -> Result<ImageBuffer> {
    check_odd_kernel("gaussian", k)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be > 0, got {sigma}"
        )));
    }
    let kernel = gaussian_kernel(k, sigma);
    Ok(map_planes(img, |p| {
        smooth_separable(p, img.width(), img.height(), &kernel)
    }))
}

pub fn box_blur(img: &ImageBuffer, k: usize) -> Result<ImageBuffer> {
    check_odd_kernel("box", k)?;
    let kernel = vec![1.0 / k as f64; k];
    Ok(map_planes(img, |p| {
        smooth_separable(p, img.width(), img.height(), &kernel)
    }))
}

pub fn median_filter(img: &ImageBuffer, k: usize) -> Result<ImageBuffer> {
    check_odd_kernel("median", k)?;
    let (w, h) = (img.width(), img.height());
    let r = k / 2;
    let xmap = reflect_table(w, r);
    let ymap = reflect_table(h, r);
    Ok(map_planes(img, |plane| {
        let mut window = Vec::with_capacity(k * k);
        let mut out = vec![0.0; plane.len()];
        for y in 0..h {
            for x in 0..w {
                window.clear();
                for dy in 0..k {
                    let row = ymap[y + dy] * w;
                    window.extend((0..k).map(|dx| plane[row + xmap[x + dx]]));
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
                out[y * w + x] = *m;
            }
        }
        out
    }))
}

/// Bilateral filter over the disk of radius `floor(d / 2)`.
///
/// Weights are `exp(-|p - q|^2 / (2 sigma_space^2) - D(p, q)^2 /
/// (2 sigma_color^2))` where `D` is the summed absolute channel difference
/// on the 8-bit scale. One weight per pixel pair is shared by all channels,
/// the convention of the common OpenCV implementation whose parameter names
/// and magnitudes these are.
pub fn bilateral(
    img: &ImageBuffer,
    d: usize,
    sigma_color: f64,
    sigma_space: f64,
) -> Result<ImageBuffer> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "bilateral diameter must be >= 3, got {d}"
        )));
    }
    if !(sigma_color > 0.0) || !(sigma_space > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bilateral sigmas must be > 0, got sigma_color={sigma_color} sigma_space={sigma_space}"
        )));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let radius = (d / 2) as isize;
    let pad = radius as usize;
    let xmap = reflect_table(w, pad);
    let ymap = reflect_table(h, pad);

    let space_coeff = 1.0 / (2.0 * sigma_space * sigma_space);
    let range_coeff = 255.0 * 255.0 / (2.0 * sigma_color * sigma_color);
    // (window x index, window y index, spatial weight)
    let taps: Vec<(usize, usize, f64)> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= radius * radius)
        .map(|(dx, dy)| {
            (
                (dx + radius) as usize,
                (dy + radius) as usize,
                (-((dx * dx + dy * dy) as f64) * space_coeff).exp(),
            )
        })
        .collect();

    let src = img.data();
    let mut out = vec![0.0; src.len()];
    let mut num = vec![0.0; ch];
    for y in 0..h {
        for x in 0..w {
            let centre = &src[(y * w + x) * ch..(y * w + x + 1) * ch];
            num.iter_mut().for_each(|v| *v = 0.0);
            let mut den = 0.0;
            for &(tx, ty, ws) in &taps {
                let q = (ymap[y + ty] * w + xmap[x + tx]) * ch;
                let px = &src[q..q + ch];
                let dist: f64 = px.iter().zip(centre).map(|(v, c)| (v - c).abs()).sum();
                let wt = ws * (-dist * dist * range_coeff).exp();
                for (n, (v, c)) in num.iter_mut().zip(px.iter().zip(centre)) {
                    *n += wt * (v - c);
                }
                den += wt;
            }
            for c in 0..ch {
                out[(y * w + x) * ch + c] = centre[c] + num[c] / den;
            }
        }
    }
    Ok(ImageBuffer::from_parts(w, h, ch, out))
}

/// Non-local means.
///
/// Each pixel becomes the weighted mean of the `sws x sws` search window
/// around it, weighted by `exp(-D^2 / h^2)` where `D^2` is the mean squared
/// difference (8-bit scale, averaged over channels) between the `tws x tws`
/// patches centred on the two pixels. One weight per pixel pair is shared by
/// all channels. Patch sums are taken from an integral image per search
/// offset.
pub fn nlmeans(img: &ImageBuffer, h: f64, tws: usize, sws: usize) -> Result<ImageBuffer> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nlmeans h must be > 0, got {h}"
        )));
    }
    if tws % 2 == 0 || sws % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "nlmeans windows must be odd, got tws={tws} sws={sws}"
        )));
    }
    let (w, hgt, ch) = (img.width(), img.height(), img.channels());
    let pr = tws / 2;
    let sr = sws / 2;
    let pad = pr + sr;
    let pw = w + 2 * pad;
    let ph = hgt + 2 * pad;
    let xmap = reflect_table(w, pad);
    let ymap = reflect_table(hgt, pad);

    let padded: Vec<Vec<f64>> = (0..ch)
        .map(|c| {
            let plane = img.plane(c);
            let mut out = Vec::with_capacity(pw * ph);
            for py in 0..ph {
                let row = ymap[py] * w;
                out.extend((0..pw).map(|px| plane[row + xmap[px]]));
            }
            out
        })
        .collect();

    // Patch-difference field covers every pixel a patch can touch.
    let zw = w + 2 * pr;
    let zh = hgt + 2 * pr;
    let z0 = sr;
    let scale = 255.0 * 255.0 / ((tws * tws * ch) as f64 * h * h);

    let mut diff = vec![0.0; zw * zh];
    let mut integral = vec![0.0; (zw + 1) * (zh + 1)];
    let mut num = vec![vec![0.0; w * hgt]; ch];
    let mut den = vec![0.0; w * hgt];

    let sr_i = sr as isize;
    for oy in -sr_i..=sr_i {
        for ox in -sr_i..=sr_i {
            diff.iter_mut().for_each(|v| *v = 0.0);
            for plane in &padded {
                for zy in 0..zh {
                    let a_row = (z0 + zy) * pw + z0;
                    let b_row = ((z0 + zy) as isize + oy) as usize * pw;
                    let b_col = (z0 as isize + ox) as usize;
                    for zx in 0..zw {
                        let dv = plane[a_row + zx] - plane[b_row + b_col + zx];
                        diff[zy * zw + zx] += dv * dv;
                    }
                }
            }
            for zy in 0..zh {
                let mut row_sum = 0.0;
                for zx in 0..zw {
                    row_sum += diff[zy * zw + zx];
                    integral[(zy + 1) * (zw + 1) + zx + 1] =
                        integral[zy * (zw + 1) + zx + 1] + row_sum;
                }
            }
            for y in 0..hgt {
                for x in 0..w {
                    let (x1, y1) = (x + tws, y + tws);
                    let s = integral[y1 * (zw + 1) + x1] - integral[y * (zw + 1) + x1]
                        - integral[y1 * (zw + 1) + x]
                        + integral[y * (zw + 1) + x];
                    let weight = if ox == 0 && oy == 0 {
                        1.0
                    } else {
                        (-(s.max(0.0)) * scale).exp()
                    };
                    if weight == 0.0 {
                        continue;
                    }
                    let centre = (y + pad) * pw + x + pad;
                    let other = ((y + pad) as isize + oy) as usize * pw
                        + ((x + pad) as isize + ox) as usize;
                    for (c, plane) in padded.iter().enumerate() {
                        num[c][y * w + x] += weight * (plane[other] - plane[centre]);
                    }
                    den[y * w + x] += weight;
                }
            }
        }
    }

    let planes: Vec<Vec<f64>> = (0..ch)
        .map(|c| {
            let base = img.plane(c);
            base.iter()
                .zip(&num[c])
                .zip(&den)
                .map(|((v, n), d)| v + n / d)
                .collect()
        })
        .collect();
    Ok(ImageBuffer::from_planes(w, hgt, &planes))
}
