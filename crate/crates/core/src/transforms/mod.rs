//! Feature-suppressing transforms.
//!
//! Shape: [`patch_shuffle`], [`patch_rotation`]. Texture: [`bilateral`],
//! [`gaussian_blur`] plus the comparison smoothers [`box_blur`],
//! [`median_filter`] and [`nlmeans`]. Color: [`grayscale`],
//! [`channel_shuffle`]. [`grid_overlay`] is the block-edge control stimulus.
//!
//! Randomised transforms take an explicit seed. [`apply`] derives that seed
//! per image from the image id so corpus runs do not depend on processing
//! order.

mod color;
mod filters;
mod patch;
pub mod presets;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, ImageId};

pub use color::{channel_shuffle, channel_shuffle_with, grayscale, CHANNEL_PERMUTATIONS};
pub use filters::{bilateral, box_blur, gaussian_blur, gaussian_kernel, median_filter, nlmeans};
pub(crate) use filters::convolve_separable;
pub use patch::{
    grid_overlay, overlay_band_mask, patch_rotation, patch_shuffle, rotate_patches_with,
    rotation_region, shuffle_patches_with, PatchGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// No-op; used as the zero-strength point of a sweep.
    Identity,
    PatchShuffle,
    PatchRotation,
    Bilateral,
    GaussianBlur,
    BoxBlur,
    MedianFilter,
    Nlmeans,
    Grayscale,
    ChannelShuffle,
    GridOverlay,
}

impl TransformKind {
    pub const ALL: [TransformKind; 11] = [
        TransformKind::Identity,
        TransformKind::PatchShuffle,
        TransformKind::PatchRotation,
        TransformKind::Bilateral,
        TransformKind::GaussianBlur,
        TransformKind::BoxBlur,
        TransformKind::MedianFilter,
        TransformKind::Nlmeans,
        TransformKind::Grayscale,
        TransformKind::ChannelShuffle,
        TransformKind::GridOverlay,
    ];

    /// Parameter names the kind requires, sorted.
    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            TransformKind::Identity | TransformKind::Grayscale | TransformKind::ChannelShuffle => {
                &[]
            }
            TransformKind::PatchShuffle
            | TransformKind::PatchRotation
            | TransformKind::GridOverlay => &["grid"],
            TransformKind::Bilateral => &["d", "sigma_color", "sigma_space"],
            TransformKind::GaussianBlur => &["k", "sigma"],
            TransformKind::BoxBlur | TransformKind::MedianFilter => &["k"],
            TransformKind::Nlmeans => &["h", "sws", "tws"],
        }
    }

    /// Parameter that orders a sweep when no explicit strength is given.
    pub fn strength_param(self) -> Option<&'static str> {
        match self {
            TransformKind::PatchShuffle
            | TransformKind::PatchRotation
            | TransformKind::GridOverlay => Some("grid"),
            TransformKind::Bilateral => Some("sigma_color"),
            TransformKind::GaussianBlur => Some("sigma"),
            TransformKind::BoxBlur | TransformKind::MedianFilter => Some("k"),
            TransformKind::Nlmeans => Some("h"),
            TransformKind::Identity | TransformKind::Grayscale | TransformKind::ChannelShuffle => {
                None
            }
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            TransformKind::PatchShuffle
                | TransformKind::PatchRotation
                | TransformKind::ChannelShuffle
                | TransformKind::GridOverlay
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::PatchShuffle => "patch_shuffle",
            TransformKind::PatchRotation => "patch_rotation",
            TransformKind::Bilateral => "bilateral",
            TransformKind::GaussianBlur => "gaussian_blur",
            TransformKind::BoxBlur => "box_blur",
            TransformKind::MedianFilter => "median_filter",
            TransformKind::Nlmeans => "nlmeans",
            TransformKind::Grayscale => "grayscale",
            TransformKind::ChannelShuffle => "channel_shuffle",
            TransformKind::GridOverlay => "grid_overlay",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A transform kind with its parameters and optional seed component.
///
/// Wire format: `{"kind": "...", "params": {...}, "seed": n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        Self {
            kind,
            params: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn identity() -> Self {
        Self::new(TransformKind::Identity)
    }

    pub fn patch_shuffle(grid: usize) -> Self {
        Self::new(TransformKind::PatchShuffle).with_param("grid", grid as f64)
    }

    pub fn patch_rotation(grid: usize) -> Self {
        Self::new(TransformKind::PatchRotation).with_param("grid", grid as f64)
    }

    pub fn grid_overlay(grid: usize) -> Self {
        Self::new(TransformKind::GridOverlay).with_param("grid", grid as f64)
    }

    pub fn bilateral(d: usize, sigma_color: f64, sigma_space: f64) -> Self {
        Self::new(TransformKind::Bilateral)
            .with_param("d", d as f64)
            .with_param("sigma_color", sigma_color)
            .with_param("sigma_space", sigma_space)
    }

    pub fn gaussian_blur(k: usize, sigma: f64) -> Self {
        Self::new(TransformKind::GaussianBlur)
            .with_param("k", k as f64)
            .with_param("sigma", sigma)
    }

    pub fn box_blur(k: usize) -> Self {
        Self::new(TransformKind::BoxBlur).with_param("k", k as f64)
    }

    pub fn median_filter(k: usize) -> Self {
        Self::new(TransformKind::MedianFilter).with_param("k", k as f64)
    }

    pub fn nlmeans(h: f64, tws: usize, sws: usize) -> Self {
        Self::new(TransformKind::Nlmeans)
            .with_param("h", h)
            .with_param("tws", tws as f64)
            .with_param("sws", sws as f64)
    }

    pub fn grayscale() -> Self {
        Self::new(TransformKind::Grayscale)
    }

    pub fn channel_shuffle() -> Self {
        Self::new(TransformKind::ChannelShuffle)
    }

    /// Checks the parameter set against the kind and the per-kind ranges.
    pub fn validate(&self) -> Result<()> {
        let required = self.kind.required_params();
        let given: Vec<&str> = self.params.keys().map(String::as_str).collect();
        if given != required {
            return Err(Error::InvalidSpec(format!(
                "{} requires params {:?}, got {:?}",
                self.kind, required, given
            )));
        }
        if let Some((name, v)) = self.params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("{name} = {v} is not finite")));
        }
        match self.kind {
            TransformKind::PatchShuffle
            | TransformKind::PatchRotation
            | TransformKind::GridOverlay => {
                if self.int("grid")? < 2 {
                    return Err(Error::InvalidSpec("grid must be >= 2".into()));
                }
            }
            TransformKind::Bilateral => {
                if self.int("d")? < 3 {
                    return Err(Error::InvalidSpec("bilateral d must be >= 3".into()));
                }
                self.positive("sigma_color")?;
                self.positive("sigma_space")?;
            }
            TransformKind::GaussianBlur => {
                self.odd_kernel("k")?;
                self.positive("sigma")?;
            }
            TransformKind::BoxBlur | TransformKind::MedianFilter => {
                self.odd_kernel("k")?;
            }
            TransformKind::Nlmeans => {
                self.positive("h")?;
                for name in ["tws", "sws"] {
                    let v = self.int(name)?;
                    if v % 2 == 0 {
                        return Err(Error::InvalidSpec(format!("{name} must be odd, got {v}")));
                    }
                }
            }
            TransformKind::Identity | TransformKind::Grayscale | TransformKind::ChannelShuffle => {}
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidSpec(format!("{} missing param {name}", self.kind)))
    }

    fn int(&self, name: &str) -> Result<usize> {
        let v = self.param(name)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidSpec(format!(
                "{name} must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    }

    fn positive(&self, name: &str) -> Result<f64> {
        let v = self.param(name)?;
        if v <= 0.0 {
            return Err(Error::InvalidSpec(format!("{name} must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn odd_kernel(&self, name: &str) -> Result<usize> {
        let v = self.int(name)?;
        if v < 3 || v % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "{name} must be odd and >= 3, got {v}"
            )));
        }
        Ok(v)
    }

    /// Canonical parameter identifier, e.g. `d11-sigma_color170-sigma_space75`.
    /// Empty for parameterless kinds.
    pub fn param_id(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}{v}"))
            .collect::<Vec<_>>()
            .join("-")
    }

    /// `kind` or `kind-<param_id>`; stable across runs and used as a file stem.
    pub fn label(&self) -> String {
        let id = self.param_id();
        if id.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}-{id}", self.kind)
        }
    }

    /// Sweep ordering value: the kind's strength parameter, or 0 for
    /// identity and 1 for the parameterless color transforms.
    pub fn default_strength(&self) -> f64 {
        match self.kind.strength_param() {
            Some(p) => self.params.get(p).copied().unwrap_or(0.0),
            None if self.kind == TransformKind::Identity => 0.0,
            None => 1.0,
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Per-image seed: `fnv1a64(id) ^ global_seed ^ spec_seed`.
pub fn derive_seed(image_id: &ImageId, global_seed: u64, spec_seed: Option<u64>) -> u64 {
    fnv1a64(image_id.as_bytes()) ^ global_seed ^ spec_seed.unwrap_or(0)
}

/// Generator used by every randomised transform.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Validates `spec` and runs it on `img` with the per-image derived seed.
pub fn apply(
    spec: &TransformSpec,
    img: &ImageBuffer,
    image_id: &ImageId,
    global_seed: u64,
) -> Result<ImageBuffer> {
    spec.validate()?;
    let seed = derive_seed(image_id, global_seed, spec.seed);
    match spec.kind {
        TransformKind::Identity => Ok(img.clone()),
        TransformKind::PatchShuffle => patch_shuffle(img, spec.int("grid")?, seed),
        TransformKind::PatchRotation => patch_rotation(img, spec.int("grid")?, seed),
        TransformKind::GridOverlay => grid_overlay(img, spec.int("grid")?, seed),
        TransformKind::Bilateral => bilateral(
            img,
            spec.int("d")?,
            spec.param("sigma_color")?,
            spec.param("sigma_space")?,
        ),
        TransformKind::GaussianBlur => gaussian_blur(img, spec.int("k")?, spec.param("sigma")?),
        TransformKind::BoxBlur => box_blur(img, spec.int("k")?),
        TransformKind::MedianFilter => median_filter(img, spec.int("k")?),
        TransformKind::Nlmeans => nlmeans(
            img,
            spec.param("h")?,
            spec.int("tws")?,
            spec.int("sws")?,
        ),
        TransformKind::Grayscale => Ok(grayscale(img)),
        TransformKind::ChannelShuffle => channel_shuffle(img, seed),
    }
}
