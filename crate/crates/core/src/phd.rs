//! Post-hoc dropout uncertainty on a trained field model.
//!
//! The whole pipeline costs only renders, never gradient steps: sample
//! binary dropout masks over the model's maskable units, find the largest
//! drop ratio whose masked renders still match the unmasked ones on the
//! train views (the fit gap gate), then read per-pixel uncertainty off the
//! spread of a masked render ensemble on the test views.
//!
//! Two conventions fixed here and relied on everywhere downstream: a mask
//! marks DROPPED units (survivors keep their exact weights, no rescaling),
//! and the drop ratio r means `round(r * U)` units out of U.

use crate::fields::nerf::{build_view_cache, render_from_cache};
use crate::fields::splats::render_view_splats;
use crate::fields::{FieldModel, Mask, ModelKind, RenderOpts};
use crate::img::{save_gray16, save_rgb16, Image, ImageIoError};
use crate::rng::{mix, stream, tag};
use crate::scene::{SceneDataset, View};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhdError {
    #[error("invalid phd config: {0}")]
    Config(String),
    /// The fit gap already exceeds the gate at the first ratio step, so no
    /// redundancy can be certified.
    #[error(
        "model is not properly trained: fit gap {gap:.6} at the first ratio step is not under eps {eps}"
    )]
    NotProperlyTrained { gap: f64, eps: f64 },
    #[error("report image: {0}")]
    Image(#[from] ImageIoError),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
}

/// Knobs of the ratio search and the ensemble estimate. `eps` is a mean
/// absolute per-pixel-channel gap on the [0,1] color scale.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhdConfig {
    pub eps: f64,
    /// Ratio grid step; candidate ratios are k * dr.
    pub dr: f64,
    /// Masks averaged per grid point during the search.
    pub n_search: usize,
    /// Masks in the uncertainty ensemble.
    pub n_est: usize,
    pub r_max: f64,
    pub seed: u64,
}

impl Default for PhdConfig {
    fn default() -> Self {
        PhdConfig {
            eps: 0.01,
            dr: 0.01,
            n_search: 8,
            n_est: 32,
            r_max: 0.99,
            seed: 0,
        }
    }
}

impl PhdConfig {
    pub fn validate(&self) -> Result<(), PhdError> {
        let bad = |m: String| Err(PhdError::Config(m));
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("eps {} must be positive", self.eps));
        }
        if !(self.dr > 0.0 && self.dr <= self.r_max && self.r_max < 1.0) {
            return bad(format!(
                "need 0 < dr <= r_max < 1, got dr {} r_max {}",
                self.dr, self.r_max
            ));
        }
        if self.n_search < 2 {
            return bad(format!("n_search {} must be >= 2", self.n_search));
        }
        if self.n_est < 2 {
            return bad(format!("n_est {} must be >= 2", self.n_est));
        }
        Ok(())
    }
}

/// A sampled mask plus what it targets: the dropout layer's weight entries
/// for MLP fields, the splat list for splat fields.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub kind: ModelKind,
    /// Dropout layer index for MLP targets.
    pub layer: Option<u32>,
    /// Nominal ratio; the realized count is `mask.n_dropped`.
    pub r: f64,
    pub mask: Mask,
}

/// Uniform mask over `units` maskable units dropping exactly round(r * units)
/// of them (half away from zero), via a partial Fisher-Yates shuffle of the
/// unit indices. Same key, same mask; the key alone seeds the stream.
pub fn sample_mask_units(units: usize, r: f64, mask_key: u64) -> Mask {
    assert!((0.0..=1.0).contains(&r), "ratio {r} outside [0, 1]");
    assert!(units > 0 && units <= u32::MAX as usize);
    let k = ((r * units as f64).round() as usize).min(units);
    let mut dropped = vec![false; units];
    if k > 0 {
        let mut rng = stream(&[tag("mask"), mask_key]);
        let mut idx: Vec<u32> = (0..units as u32).collect();
        for i in 0..k {
            let j = rng.gen_range(i as u32..units as u32) as usize;
            idx.swap(i, j);
            dropped[idx[i] as usize] = true;
        }
    }
    Mask {
        dropped,
        n_dropped: k,
    }
}

/// Mask for a model's own maskable units. Callers compose `mask_key` from
/// their seed and purpose (see `gap_search_key` / `estimate_key`).
pub fn sample_mask(model: &FieldModel, r: f64, mask_key: u64) -> DropoutMask {
    let mask = sample_mask_units(model.dropout_units(), r, mask_key);
    let layer = match model {
        FieldModel::Mlp(m) => Some(m.net.dropout_layer as u32),
        FieldModel::Splats(_) => None,
    };
    DropoutMask {
        kind: model.kind(),
        layer,
        r,
        mask,
    }
}

/// Key of the gap evaluation at search grid point k (r = k * dr, 1-based).
/// Public so the gate can be re-evaluated post hoc with the search's exact
/// masks.
pub fn gap_search_key(seed: u64, grid_index: usize) -> u64 {
    mix(&[seed, tag("search"), grid_index as u64])
}

/// Key of the estimation ensemble (fresh masks, never the search's).
pub fn estimate_key(seed: u64) -> u64 {
    mix(&[seed, tag("estimate")])
}

/// Per-view jitter key used for every render of view index v under `opts`.
/// Masked and unmasked renders of a view share it, so their difference
/// isolates the mask.
fn view_jitter(opts: &RenderOpts, v: usize) -> u64 {
    mix(&[opts.rng_key, v as u64])
}

/// Mean absolute per-pixel-channel gap between unmasked and masked renders,
/// averaged over `n` masks (keys mix(key, i)) and pooled over every pixel of
/// every view. r = 0 returns exactly 0 because masked rendering shares the
/// unmasked code path.
pub fn train_fit_gap(
    model: &FieldModel,
    views: &[View],
    r: f64,
    n: usize,
    key: u64,
    opts: &RenderOpts,
) -> f64 {
    assert!(n >= 1, "need at least one mask");
    assert!(!views.is_empty(), "need at least one view");
    let masks: Vec<Mask> = (0..n)
        .map(|i| sample_mask(model, r, mix(&[key, i as u64])).mask)
        .collect();

    let mut sums = vec![0.0f64; n];
    let mut total = 0usize;
    for (v, view) in views.iter().enumerate() {
        let vopts = RenderOpts {
            rng_key: view_jitter(opts, v),
            ..*opts
        };
        let renders = masked_view_stack(model, view, &masks, &vopts);
        let base = &renders.base;
        total += base.data.len();
        for (i, img) in renders.masked.iter().enumerate() {
            let mut s = 0.0f64;
            for (a, b) in img.data.iter().zip(&base.data) {
                s += (*a as f64 - *b as f64).abs();
            }
            sums[i] += s;
        }
    }
    sums.iter().map(|s| s / total as f64).sum::<f64>() / n as f64
}

struct ViewStack {
    base: Image,
    masked: Vec<Image>,
}

/// Unmasked render plus one render per mask, sharing per-view work: the MLP
/// path reuses the activations below the dropout layer, the splat path
/// re-rasterizes with survivors only.
fn masked_view_stack(
    model: &FieldModel,
    view: &View,
    masks: &[Mask],
    opts: &RenderOpts,
) -> ViewStack {
    match model {
        FieldModel::Mlp(m) => {
            let cache = build_view_cache(&m.net, m.bound, &view.camera, opts);
            let w0 = &m.net.layers[m.net.dropout_layer].w;
            let base = render_from_cache(&m.net, &cache, w0, opts.background);
            let masked = masks
                .iter()
                .map(|mk| {
                    render_from_cache(&m.net, &cache, &m.net.masked_weight(mk), opts.background)
                })
                .collect();
            ViewStack { base, masked }
        }
        FieldModel::Splats(s) => {
            let base = render_view_splats(&s.splats, s.bound, &view.camera, opts.background, None);
            let masked = masks
                .iter()
                .map(|mk| {
                    render_view_splats(&s.splats, s.bound, &view.camera, opts.background, Some(mk))
                })
                .collect();
            ViewStack { base, masked }
        }
    }
}

/// Single forward sweep over the ratio grid r = dr, 2dr, ...: keep stepping
/// while the fit gap stays under eps, return the last passing ratio (capped
/// at r_max). Failing already at the first step means the model cannot
/// absorb any dropout and is reported as not properly trained.
pub fn find_r_drop(
    model: &FieldModel,
    views: &[View],
    cfg: &PhdConfig,
    opts: &RenderOpts,
) -> Result<f64, PhdError> {
    cfg.validate()?;
    let steps = (cfg.r_max / cfg.dr + 1e-9).floor() as usize;
    let mut last_pass = 0usize;
    for k in 1..=steps {
        let r = k as f64 * cfg.dr;
        let gap = train_fit_gap(
            model,
            views,
            r,
            cfg.n_search,
            gap_search_key(cfg.seed, k),
            opts,
        );
        if gap < cfg.eps {
            last_pass = k;
        } else if k == 1 {
            return Err(PhdError::NotProperlyTrained { gap, eps: cfg.eps });
        } else {
            break;
        }
    }
    Ok(last_pass as f64 * cfg.dr)
}

/// Per-view uncertainty: ζ is the per-pixel-channel sample standard
/// deviation over the masked ensemble, `mean` its per-pixel-channel average.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    pub view_id: u32,
    pub zeta: Image,
    pub mean: Image,
}

/// Renders each view under `n_est` fresh masks at ratio `r_drop` (mask keys
/// mix(key, i)) and reduces the stack per pixel and channel: two-pass mean
/// then sample standard deviation (divisor n_est - 1), accumulated in f64 in
/// mask order, so the result is identical at any worker count.
pub fn estimate_uncertainty(
    model: &FieldModel,
    views: &[View],
    r_drop: f64,
    n_est: usize,
    key: u64,
    opts: &RenderOpts,
) -> Vec<UncertaintyMap> {
    assert!(r_drop > 0.0, "estimation needs a positive ratio");
    assert!(n_est >= 2, "sample std needs at least two renders");
    let masks: Vec<Mask> = (0..n_est)
        .map(|i| sample_mask(model, r_drop, mix(&[key, i as u64])).mask)
        .collect();

    views
        .iter()
        .enumerate()
        .map(|(v, view)| {
            let vopts = RenderOpts {
                rng_key: view_jitter(opts, v),
                ..*opts
            };
            let stack = masked_view_stack(model, view, &masks, &vopts).masked;
            let (h, w) = (stack[0].h, stack[0].w);
            let len = stack[0].data.len();
            let mut zeta = Image::new(h, w);
            let mut mean = Image::new(h, w);
            for e in 0..len {
                let mut m = 0.0f64;
                for img in &stack {
                    m += img.data[e] as f64;
                }
                m /= n_est as f64;
                let mut ss = 0.0f64;
                for img in &stack {
                    let d = img.data[e] as f64 - m;
                    ss += d * d;
                }
                mean.data[e] = m as f32;
                zeta.data[e] = (ss / (n_est - 1) as f64).sqrt() as f32;
            }
            UncertaintyMap {
                view_id: v as u32,
                zeta,
                mean,
            }
        })
        .collect()
}

/// Unmasked renders of `views` under the same per-view jitter keys the gap
/// search and the estimation use, so masked-vs-unmasked comparisons isolate
/// the masks.
pub fn render_unmasked(model: &FieldModel, views: &[View], opts: &RenderOpts) -> Vec<Image> {
    views
        .iter()
        .enumerate()
        .map(|(v, view)| {
            let vopts = RenderOpts {
                rng_key: view_jitter(opts, v),
                ..*opts
            };
            model.render_view(&view.camera, &vopts, None)
        })
        .collect()
}

/// Per-view maxima of ζ over pixels and channels, and their mean across
/// views: the scene-level uncertainty score.
pub fn sigma_max_summary(maps: &[UncertaintyMap]) -> (Vec<f64>, f64) {
    assert!(!maps.is_empty(), "summary of zero maps");
    let per_view: Vec<f64> = maps
        .iter()
        .map(|m| m.zeta.data.iter().fold(0.0f64, |acc, &z| acc.max(z as f64)))
        .collect();
    let mean = per_view.iter().sum::<f64>() / per_view.len() as f64;
    (per_view, mean)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UQViewRef {
    pub id: u32,
    pub zeta_png: String,
    pub mean_png: String,
}

/// The written uncertainty report. ζ PNGs are max-over-channel maps
/// normalized by `zeta_max` (stored for de-normalization); `split` records
/// that the maps and summaries come from the test cameras.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UQReport {
    pub r_drop: f64,
    pub eps: f64,
    pub dr: f64,
    pub n_est: usize,
    pub checkpoint_digest: String,
    pub split: String,
    pub sigma_max: Vec<f64>,
    pub sigma_max_mean: f64,
    pub zeta_max: f64,
    pub views: Vec<UQViewRef>,
}

/// The full pipeline: gate the ratio on the train views, estimate on the
/// test views, write `report.json` plus per-view ζ/mean maps under
/// `out_dir/maps/`. Reruns with equal inputs produce byte-identical files.
/// The full-precision maps come back alongside the report so callers can
/// persist or evaluate them without requantizing the PNGs.
pub fn run_phd(
    model: &FieldModel,
    dataset: &SceneDataset,
    cfg: &PhdConfig,
    checkpoint_digest: &str,
    out_dir: &Path,
) -> Result<(UQReport, Vec<UncertaintyMap>), PhdError> {
    cfg.validate()?;
    let opts = RenderOpts::new(dataset.spec.background, mix(&[cfg.seed, tag("phd-jitter")]));
    let r_drop = find_r_drop(model, &dataset.train, cfg, &opts)?;
    let maps = estimate_uncertainty(
        model,
        &dataset.test,
        r_drop,
        cfg.n_est,
        estimate_key(cfg.seed),
        &opts,
    );
    let (sigma_max, sigma_max_mean) = sigma_max_summary(&maps);
    let zeta_max = sigma_max.iter().fold(0.0f64, |a, &b| a.max(b));

    let maps_dir = out_dir.join("maps");
    std::fs::create_dir_all(&maps_dir)?;
    let mut views = Vec::with_capacity(maps.len());
    for m in &maps {
        let zeta_rel = format!("maps/view_{:03}_zeta.png", m.view_id);
        let mean_rel = format!("maps/view_{:03}_mean.png", m.view_id);
        let (h, w) = (m.zeta.h, m.zeta.w);
        let mut gray = vec![0.0f32; h * w];
        if zeta_max > 0.0 {
            for (px, g) in gray.iter_mut().enumerate() {
                let p = m.zeta.px(px / w, px % w);
                let zmax = p[0].max(p[1]).max(p[2]) as f64;
                *g = (zmax / zeta_max) as f32;
            }
        }
        save_gray16(&out_dir.join(&zeta_rel), h, w, &gray)?;
        save_rgb16(&out_dir.join(&mean_rel), &m.mean)?;
        views.push(UQViewRef {
            id: m.view_id,
            zeta_png: zeta_rel,
            mean_png: mean_rel,
        });
    }

    let report = UQReport {
        r_drop,
        eps: cfg.eps,
        dr: cfg.dr,
        n_est: cfg.n_est,
        checkpoint_digest: checkpoint_digest.to_string(),
        split: "test".to_string(),
        sigma_max,
        sigma_max_mean,
        zeta_max,
        views,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok((report, maps))
}
