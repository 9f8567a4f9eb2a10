use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{clamped_ratio, Plane};

/// Unnormalised 2-D DFT power spectrum `|F(u, v)|^2`, row-major, unshifted.
pub(crate) fn power_spectrum(plane: &Plane) -> Vec<f64> {
    let (w, h) = (plane.width, plane.height);
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut buf: Vec<Complex<f64>> = plane.data.iter().map(|v| Complex::new(*v, 0.0)).collect();
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Signed distance of DFT bin `k` from the DC bin after an fftshift
/// (DC moved to index `n / 2`).
#[inline]
fn centred_offset(k: usize, n: usize) -> f64 {
    ((k + n / 2) % n) as f64 - (n / 2) as f64
}

/// Share of spectral energy in bins farther than `radius` from DC.
pub(crate) fn high_frequency_fraction(plane: &Plane, radius: f64) -> f64 {
    let power = power_spectrum(plane);
    let (w, h) = (plane.width, plane.height);
    let mut high = 0.0;
    let mut total = 0.0;
    for v in 0..h {
        let dv = centred_offset(v, h);
        for u in 0..w {
            let du = centred_offset(u, w);
            let e = power[v * w + u];
            total += e;
            if (du * du + dv * dv).sqrt() > radius {
                high += e;
            }
        }
    }
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

pub(crate) fn high_frequency_energy(x: &Plane, y: &Plane, radius: f64) -> f64 {
    clamped_ratio(
        high_frequency_fraction(y, radius),
        high_frequency_fraction(x, radius),
    )
}
