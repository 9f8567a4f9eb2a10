//! Named spec lists for validation runs and suppression sweeps.

use super::TransformSpec;

const KERNELS: [usize; 6] = [5, 7, 9, 11, 13, 15];

pub const PRESET_NAMES: [&str; 8] = [
    "validation",
    "bilateral-diagonal",
    "gaussian-diagonal",
    "nlmeans-diagonal",
    "box-kernels",
    "median-kernels",
    "patch-shuffle-grids",
    "patch-rotation-grids",
];

/// The seven transforms at their reference parameters.
pub fn validation() -> Vec<TransformSpec> {
    vec![
        TransformSpec::bilateral(11, 170.0, 75.0),
        TransformSpec::box_blur(11),
        TransformSpec::gaussian_blur(11, 2.0),
        TransformSpec::median_filter(11),
        TransformSpec::nlmeans(20.0, 11, 11),
        TransformSpec::patch_shuffle(6),
        TransformSpec::patch_rotation(6),
    ]
}

/// Sigma-color and window size grow together: (50, 5), (80, 7) ... (200, 15).
pub fn bilateral_diagonal() -> Vec<TransformSpec> {
    KERNELS
        .iter()
        .enumerate()
        .map(|(i, &d)| TransformSpec::bilateral(d, 50.0 + 30.0 * i as f64, 75.0))
        .collect()
}

/// sigma = (k - 1) / 6: (0.67, 5), (1.0, 7) ... (2.33, 15).
pub fn gaussian_diagonal() -> Vec<TransformSpec> {
    KERNELS
        .iter()
        .map(|&k| TransformSpec::gaussian_blur(k, (k - 1) as f64 / 6.0))
        .collect()
}

/// (h, tws) = (5, 5), (5, 7), (10, 9) ... (25, 15).
pub fn nlmeans_diagonal() -> Vec<TransformSpec> {
    const H: [f64; 6] = [5.0, 5.0, 10.0, 15.0, 20.0, 25.0];
    KERNELS
        .iter()
        .zip(H)
        .map(|(&k, h)| TransformSpec::nlmeans(h, k, 11))
        .collect()
}

pub fn preset(name: &str) -> Option<Vec<TransformSpec>> {
    let grids = 2..=8;
    Some(match name {
        "validation" => validation(),
        "bilateral-diagonal" => bilateral_diagonal(),
        "gaussian-diagonal" => gaussian_diagonal(),
        "nlmeans-diagonal" => nlmeans_diagonal(),
        "box-kernels" => KERNELS.iter().map(|&k| TransformSpec::box_blur(k)).collect(),
        "median-kernels" => KERNELS.iter().map(|&k| TransformSpec::median_filter(k)).collect(),
        "patch-shuffle-grids" => grids.map(TransformSpec::patch_shuffle).collect(),
        "patch-rotation-grids" => grids.map(TransformSpec::patch_rotation).collect(),
        _ => return None,
    })
}
