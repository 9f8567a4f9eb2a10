use super::Plane;

/// Variances at or below this are treated as zero.
const ZERO_VARIANCE: f64 = 1e-24;

/// Central differences `(I[i+1] - I[i-1]) / 2` with edge samples replicated.
pub(crate) fn central_gradients(plane: &Plane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (plane.width, plane.height);
    let at = |x: usize, y: usize| plane.data[y * w + x];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            gx[y * w + x] = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            gy[y * w + x] = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
        }
    }
    (gx, gy)
}

/// Pearson correlation; 1 when both sides are flat, 0 when only one is.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    let (flat_a, flat_b) = (va / n <= ZERO_VARIANCE, vb / n <= ZERO_VARIANCE);
    match (flat_a, flat_b) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => cov / (va * vb).sqrt(),
    }
}

pub(crate) fn gradient_correlation(x: &Plane, y: &Plane) -> f64 {
    let (xg, yg) = (central_gradients(x), central_gradients(y));
    (0.5 * (pearson(&xg.0, &yg.0) + pearson(&xg.1, &yg.1))).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Plane {
        Plane {
            width: w,
            height: h,
            data: (0..w * h).map(|i| f(i % w, i / w)).collect(),
        }
    }

    #[test]
    fn gradients_of_ramp() {
        let p = plane(5, 3, |x, _| x as f64 * 0.1);
        let (gx, gy) = central_gradients(&p);
        assert!((gx[2] - 0.1).abs() < 1e-15);
        assert!((gx[0] - 0.05).abs() < 1e-15);
        assert!(gy.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn correlation_cases() {
        let p = plane(9, 7, |x, y| ((x * 3 + y * 5) % 7) as f64 / 6.0);
        assert_eq!(gradient_correlation(&p, &p), 1.0);
        let inv = plane(9, 7, |x, y| 1.0 - ((x * 3 + y * 5) % 7) as f64 / 6.0);
        assert_eq!(gradient_correlation(&p, &inv), 0.0);
        let flat = plane(9, 7, |_, _| 0.4);
        let flat2 = plane(9, 7, |_, _| 0.9);
        assert_eq!(gradient_correlation(&flat, &flat2), 1.0);
        assert_eq!(gradient_correlation(&p, &flat), 0.0);
    }

    #[test]
    fn pearson_matches_textbook() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 5.0, 4.0];
        // Sums of products of deviations: cov 3.5, var_a 5, var_b 4.75.
        let expected = 3.5 / (5.0f64 * 4.75).sqrt();
        assert!((pearson(&a, &b) - expected).abs() < 1e-15);
    }
}
