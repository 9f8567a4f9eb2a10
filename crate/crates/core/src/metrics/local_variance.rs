use super::{clamped_ratio, Plane};

/// Mean population variance over non-overlapping `win x win` tiles from the
/// top-left corner; partial tiles at the right/bottom are skipped.
pub(crate) fn mean_window_variance(plane: &Plane, win: usize) -> f64 {
    let nx = plane.width / win;
    let ny = plane.height / win;
    let n = (win * win) as f64;
    let mut total = 0.0;
    for ty in 0..ny {
        for tx in 0..nx {
            let values = (0..win).flat_map(|dy| {
                let row = (ty * win + dy) * plane.width + tx * win;
                plane.data[row..row + win].iter().copied()
            });
            let mean = values.clone().sum::<f64>() / n;
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            total += var;
        }
    }
    total / (nx * ny) as f64
}

pub(crate) fn local_variance(x: &Plane, y: &Plane, win: usize) -> f64 {
    clamped_ratio(mean_window_variance(y, win), mean_window_variance(x, win))
}
