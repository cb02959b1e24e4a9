//! Ray-marched volume rendering of the coordinate MLP.
//!
//! Each pixel casts one ray; densities and colors at stratified sample
//! points are composited front to back:
//! C = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + T_final * background,
//! T_i = exp(-sum_{j<i} sigma_j delta_j).
//!
//! Per-ray jitter is keyed by (rng_key, ray id), never by call order, so
//! renders are bitwise identical at any worker count. A view cache holds the
//! activations entering the dropout layer; re-rendering under a fresh mask
//! then repeats only the layers the mask can affect.

use super::mlp::MlpNet;
use super::{bump_render_count, c, Mask, Real, RenderOpts};
use crate::img::Image;
use crate::rng::{mix, unit_f64};
use crate::scene::Camera;
use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis};
use rayon::prelude::*;

pub const DEFAULT_RAY_SAMPLES: usize = 48;
/// Near-plane floor, world units.
const MIN_NEAR: f64 = 0.05;

/// Marching interval from the camera position and the scene's bounding
/// radius (scene centered at the origin): conservative near/far that bracket
/// the bounding sphere for every pixel of the view.
pub fn camera_ray_bounds(cam: &Camera, bound: f64) -> (f64, f64) {
    let d = cam.pos.norm();
    ((d - bound).max(MIN_NEAR), d + bound)
}

/// Front-to-back compositing of one ray. `samples` pairs each sample's
/// density with its color, ordered near to far; `deltas` are the matching
/// inter-sample distances.
pub fn composite_ray<T: Real>(samples: &[(T, [T; 3])], deltas: &[T], background: [T; 3]) -> [T; 3] {
    debug_assert_eq!(samples.len(), deltas.len());
    let mut trans = T::one();
    let mut acc = [T::zero(); 3];
    for ((sigma, color), delta) in samples.iter().zip(deltas) {
        let alpha = T::one() - (-*sigma * *delta).exp();
        let w = trans * alpha;
        acc[0] += w * color[0];
        acc[1] += w * color[1];
        acc[2] += w * color[2];
        trans *= T::one() - alpha;
    }
    [
        acc[0] + trans * background[0],
        acc[1] + trans * background[1],
        acc[2] + trans * background[2],
    ]
}

/// Stratified sample points and deltas for every pixel of a view, ray-major:
/// pixel (y, x) owns rows (y*w + x)*s .. +s. Geometry is computed in f64 and
/// narrowed once.
pub fn sample_view_points<T: Real>(
    cam: &Camera,
    bound: f64,
    n_samples: usize,
    rng_key: u64,
) -> (Array2<T>, Vec<T>) {
    assert!(n_samples >= 2, "need at least two samples per ray");
    let (h, w) = (cam.height as usize, cam.width as usize);
    let (near, far) = camera_ray_bounds(cam, bound);
    let bin = (far - near) / n_samples as f64;
    let row_len = w * n_samples;

    let mut points = Array2::zeros((h * row_len, 3));
    let mut deltas = vec![T::zero(); h * row_len];
    points
        .axis_chunks_iter_mut(Axis(0), row_len)
        .into_par_iter()
        .zip(deltas.par_chunks_mut(row_len))
        .enumerate()
        .for_each(|(y, (mut prow, drow))| {
            let mut ts = vec![0.0f64; n_samples];
            for x in 0..w {
                let ray_id = (y * w + x) as u64;
                let (origin, dir) = cam.ray_for_pixel(x, y);
                let jitter_key = mix(&[rng_key, ray_id]);
                for (k, t) in ts.iter_mut().enumerate() {
                    *t = near + (k as f64 + unit_f64(jitter_key, k as u64)) * bin;
                }
                for k in 0..n_samples {
                    let p = origin + dir * ts[k];
                    let r = x * n_samples + k;
                    prow[(r, 0)] = c(p.x);
                    prow[(r, 1)] = c(p.y);
                    prow[(r, 2)] = c(p.z);
                    drow[r] = c(if k + 1 < n_samples {
                        ts[k + 1] - ts[k]
                    } else {
                        far - ts[k]
                    });
                }
            }
        });
    (points, deltas)
}

/// Per-view state that a fresh dropout mask cannot touch: sample deltas and
/// the activations entering the dropout layer.
pub struct MlpViewCache {
    pub h: usize,
    pub w: usize,
    pub n_samples: usize,
    prefix: Array2<f32>,
    deltas: Vec<f32>,
}

pub fn build_view_cache(
    net: &MlpNet<f32>,
    bound: f64,
    cam: &Camera,
    opts: &RenderOpts,
) -> MlpViewCache {
    let (points, deltas) = sample_view_points::<f32>(cam, bound, opts.n_samples, opts.rng_key);
    let feats = net.encode_batch(&points.view(), bound);
    let prefix = net.forward_prefix(&feats.view());
    MlpViewCache {
        h: cam.height as usize,
        w: cam.width as usize,
        n_samples: opts.n_samples,
        prefix,
        deltas,
    }
}

/// Renders from a view cache under the given dropout-layer weight (the
/// stored weight, or a masked copy of it).
pub fn render_from_cache(
    net: &MlpNet<f32>,
    cache: &MlpViewCache,
    dropout_w: &Array2<f32>,
    background: [f32; 3],
) -> Image {
    let y = net.forward_suffix(&cache.prefix.view(), dropout_w);
    let (h, w, s) = (cache.h, cache.w, cache.n_samples);
    let mut img = Image::new(h, w);
    img.data
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(py, row)| {
            let mut samples = vec![(0.0f32, [0.0f32; 3]); s];
            for px in 0..w {
                let base = (py * w + px) * s;
                for (k, slot) in samples.iter_mut().enumerate() {
                    let r = y.row(base + k);
                    *slot = (r[0], [r[1], r[2], r[3]]);
                }
                let rgb = composite_ray(&samples, &cache.deltas[base..base + s], background);
                row[px * 3] = rgb[0];
                row[px * 3 + 1] = rgb[1];
                row[px * 3 + 2] = rgb[2];
            }
        });
    bump_render_count();
    img
}

pub fn render_view_nerf(
    net: &MlpNet<f32>,
    bound: f64,
    cam: &Camera,
    opts: &RenderOpts,
    mask: Option<&Mask>,
) -> Image {
    let cache = build_view_cache(net, bound, cam, opts);
    match mask {
        Some(m) => render_from_cache(net, &cache, &net.masked_weight(m), opts.background),
        None => render_from_cache(
            net,
            &cache,
            &net.layers[net.dropout_layer].w,
            opts.background,
        ),
    }
}
