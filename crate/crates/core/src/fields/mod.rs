//! View-synthesis model families: coordinate-MLP radiance fields (positional,
//! sinusoidal or multiresolution-hash encoded) and isotropic Gaussian splat
//! sets, plus masked rendering for both.
//!
//! Field math is generic over f32/f64. Stored model parameters are f32 (the
//! checkpoint format's precision); gradient verification instantiates the
//! same code at f64.

pub mod checkpoint;
pub mod encoding;
pub mod mlp;
pub mod nerf;
pub mod splats;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use encoding::{encode_features, EncodingConfig, HashConfig, HASH_PRIMES};
pub use mlp::{Activation, Layer, MlpNet};
pub use nerf::{
    camera_ray_bounds, composite_ray, render_view_nerf, MlpViewCache, DEFAULT_RAY_SAMPLES,
};
pub use splats::{project_splat, render_view_splats, SplatProjection, SplatSet};

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

/// Float precision the field math is generic over.
pub trait Real: NdFloat + FromPrimitive + Send + Sync {}
impl Real for f32 {}
impl Real for f64 {}

/// Shorthand f64 -> T conversion for constants.
#[inline]
pub(crate) fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite constant")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "nerf-pe")]
    NerfPe,
    #[serde(rename = "nerf-spe")]
    NerfSpe,
    #[serde(rename = "nerf-hash")]
    NerfHash,
    #[serde(rename = "gs3d")]
    Gs3d,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::NerfPe => "nerf-pe",
            ModelKind::NerfSpe => "nerf-spe",
            ModelKind::NerfHash => "nerf-hash",
            ModelKind::Gs3d => "gs3d",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nerf-pe" => Ok(ModelKind::NerfPe),
            "nerf-spe" => Ok(ModelKind::NerfSpe),
            "nerf-hash" => Ok(ModelKind::NerfHash),
            "gs3d" => Ok(ModelKind::Gs3d),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

/// Binary dropout mask over a model's maskable units: one flag per entry of
/// the MLP dropout layer's weight matrix (row-major), or one per splat.
/// `true` means dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub dropped: Vec<bool>,
    pub n_dropped: usize,
}

impl Mask {
    pub fn none(units: usize) -> Mask {
        Mask {
            dropped: vec![false; units],
            n_dropped: 0,
        }
    }

    pub fn units(&self) -> usize {
        self.dropped.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpField {
    pub net: MlpNet<f32>,
    /// Scene bounding radius; fixes the hash-grid domain and ray near/far.
    pub bound: f64,
    pub kind: ModelKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplatField {
    pub splats: SplatSet<f32>,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldModel {
    Mlp(MlpField),
    Splats(SplatField),
}

impl FieldModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FieldModel::Mlp(m) => m.kind,
            FieldModel::Splats(_) => ModelKind::Gs3d,
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            FieldModel::Mlp(m) => m.bound,
            FieldModel::Splats(s) => s.bound,
        }
    }

    /// Number of maskable units (dropout-layer weight entries, or splats).
    pub fn dropout_units(&self) -> usize {
        match self {
            FieldModel::Mlp(m) => m.net.dropout_units(),
            FieldModel::Splats(s) => s.splats.count(),
        }
    }

    /// Renders one view, optionally under a dropout mask.
    pub fn render_view(
        &self,
        cam: &crate::scene::Camera,
        opts: &RenderOpts,
        mask: Option<&Mask>,
    ) -> crate::img::Image {
        match self {
            FieldModel::Mlp(m) => render_view_nerf(&m.net, m.bound, cam, opts, mask),
            FieldModel::Splats(s) => {
                render_view_splats(&s.splats, s.bound, cam, opts.background, mask)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RenderOpts {
    pub n_samples: usize,
    /// Keys the per-ray stratified jitter stream (MLP fields only).
    pub rng_key: u64,
    pub background: [f32; 3],
}

impl RenderOpts {
    pub fn new(background: [f32; 3], rng_key: u64) -> RenderOpts {
        RenderOpts {
            n_samples: DEFAULT_RAY_SAMPLES,
            rng_key,
            background,
        }
    }
}

/// Process-wide count of single-view renders (full or mask-cached), used to
/// assert that uncertainty estimation costs renders, not retraining.
static RENDER_COUNT: AtomicU64 = AtomicU64::new(0);

pub fn render_count() -> u64 {
    RENDER_COUNT.load(Ordering::Relaxed)
}

pub fn reset_render_count() {
    RENDER_COUNT.store(0, Ordering::Relaxed);
}

pub(crate) fn bump_render_count() {
    RENDER_COUNT.fetch_add(1, Ordering::Relaxed);
}
