//! Sobel magnitude maps and SSIM between them.

use super::Plane;
use crate::transforms::{convolve_separable, gaussian_kernel};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 1..n {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// Extended Sobel pair for odd `k >= 3`: a binomial smoothing kernel
/// (sum 1) and a binomial-smoothed central difference scaled so a unit ramp
/// has derivative 1.
pub(crate) fn sobel_kernels(k: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(k >= 3 && k % 2 == 1);
    let smooth = binomial_row(k);
    let total: f64 = smooth.iter().sum();
    let smooth: Vec<f64> = smooth.into_iter().map(|v| v / total).collect();

    let inner = binomial_row(k - 2);
    let mut deriv = vec![0.0; k];
    for (i, b) in inner.iter().enumerate() {
        deriv[i] -= b;
        deriv[i + 2] += b;
    }
    let centre = (k / 2) as f64;
    let ramp: f64 = deriv
        .iter()
        .enumerate()
        .map(|(j, d)| d * (j as f64 - centre))
        .sum();
    let deriv = deriv.into_iter().map(|v| v / ramp).collect();
    (smooth, deriv)
}

pub(crate) fn sobel_magnitude(plane: &Plane, k: usize) -> Plane {
    let (smooth, deriv) = sobel_kernels(k);
    let (w, h) = (plane.width, plane.height);
    let gx = convolve_separable(&plane.data, w, h, &deriv, &smooth);
    let gy = convolve_separable(&plane.data, w, h, &smooth, &deriv);
    Plane {
        width: w,
        height: h,
        data: gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect(),
    }
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), data range 1.
pub(crate) fn ssim(a: &Plane, b: &Plane) -> f64 {
    let (w, h) = (a.width, a.height);
    let g = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let blur = |v: &[f64]| convolve_separable(v, w, h, &g, &g);
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };

    let mu_a = blur(&a.data);
    let mu_b = blur(&b.data);
    let e_aa = blur(&product(&a.data, &a.data));
    let e_bb = blur(&product(&b.data, &b.data));
    let e_ab = blur(&product(&a.data, &b.data));

    let mut total = 0.0;
    for i in 0..w * h {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * (ma * mb) + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = ((ma * ma + mb * mb) + SSIM_C1) * ((var_a + var_b) + SSIM_C2);
        total += num / den;
    }
    total / (w * h) as f64
}

pub(crate) fn edge_ssim(x: &Plane, y: &Plane, k: usize) -> f64 {
    ssim(&sobel_magnitude(x, k), &sobel_magnitude(y, k)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sobel3_is_classic_up_to_scale() {
        let (s, d) = sobel_kernels(3);
        assert_eq!(s, vec![0.25, 0.5, 0.25]);
        assert_eq!(d, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn sobel11_shapes() {
        let (s, d) = sobel_kernels(11);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(d.iter().sum::<f64>().abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(s[i], s[10 - i]);
            assert_eq!(d[i], -d[10 - i]);
        }
    }

    #[test]
    fn ramp_gradient_is_unit() {
        let w = 32;
        let plane = Plane {
            width: w,
            height: 20,
            data: (0..w * 20).map(|i| (i % w) as f64 / 100.0).collect(),
        };
        let m = sobel_magnitude(&plane, 11);
        // Away from the mirrored borders the slope is exactly 0.01 per pixel.
        for y in 0..20 {
            for x in 6..w - 6 {
                assert!((m.data[y * w + x] - 0.01).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ssim_identity_and_constants() {
        let p = Plane {
            width: 20,
            height: 15,
            data: (0..300).map(|i| ((i * 17) % 23) as f64 / 22.0).collect(),
        };
        assert_eq!(ssim(&p, &p), 1.0);
        let flat = Plane {
            width: 20,
            height: 15,
            data: vec![0.3; 300],
        };
        assert_eq!(edge_ssim(&flat, &flat, 11), 1.0);
        assert!(edge_ssim(&p, &flat, 11) < 0.5);
    }
}
