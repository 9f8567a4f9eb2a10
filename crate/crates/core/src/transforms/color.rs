use rand::Rng;

use super::seeded_rng;
use crate::error::{Error, Result};
use crate::image::{to_grayscale, ImageBuffer};

/// The five non-identity orderings of (R, G, B). Output channel `c` takes
/// input channel `perm[c]`.
pub const CHANNEL_PERMUTATIONS: [[usize; 3]; 5] =
    [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Luma-only image (one channel).
pub fn grayscale(img: &ImageBuffer) -> ImageBuffer {
    to_grayscale(img)
}

/// Reorders the color channels with one non-identity permutation drawn
/// uniformly from [`CHANNEL_PERMUTATIONS`].
pub fn channel_shuffle(img: &ImageBuffer, seed: u64) -> Result<ImageBuffer> {
    let mut rng = seeded_rng(seed);
    let perm = CHANNEL_PERMUTATIONS[rng.random_range(0..CHANNEL_PERMUTATIONS.len())];
    channel_shuffle_with(img, perm)
}

pub fn channel_shuffle_with(img: &ImageBuffer, perm: [usize; 3]) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(Error::InvalidParameter(
            "channel shuffle needs a 3-channel image".into(),
        ));
    }
    let mut sorted = perm;
    sorted.sort_unstable();
    if sorted != [0, 1, 2] {
        return Err(Error::InvalidParameter(format!(
            "{perm:?} is not a permutation of the channels"
        )));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .flat_map(|px| perm.map(|c| px[c]))
        .collect();
    Ok(ImageBuffer::from_parts(img.width(), img.height(), 3, data))
}
