//! Training: Adam over flattened parameters, analytic backprop for both model
//! families, and finite-difference gradient verification.
//!
//! All gradient math is generic over the parameter precision and accumulates
//! in f64. The checker instantiates the same code at f64, so what it verifies
//! is the arithmetic the trainer actually runs, not a parallel
//! implementation.

use crate::fields::encoding::hash_corners;
use crate::fields::mlp::{sigmoid, Activation, MlpNet, Tape};
use crate::fields::nerf::camera_ray_bounds;
use crate::fields::splats::{
    bin_tiles, composite_pixel, init_log_scale, init_op_logit, prepare, Contribution, SplatSet,
    MIN_SCALE, TILE,
};
use crate::fields::{
    c, EncodingConfig, FieldModel, MlpField, ModelKind, Real, RenderOpts, SplatField,
};
use crate::img::Image;
use crate::metrics::psnr_of_mse;
use crate::rng::{mix, stream, tag, unit_f64};
use crate::scene::{Camera, SceneDataset, View};
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("training diverged at iteration {iter}: loss {loss}")]
    Diverged { iter: u32, loss: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    L2,
}

/// Training hyperparameters. One type serves both families: splat training
/// ignores the MLP architecture block, MLP training ignores the prune block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iters: u32,
    /// Rays per step. Splat steps always use one full training image instead.
    pub batch_rays: usize,
    pub lr: f32,
    pub betas: (f32, f32),
    pub adam_eps: f32,
    pub seed: u64,
    pub loss: LossKind,
    /// Samples per ray, both for MLP training batches and training-time
    /// renders.
    pub n_samples: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub dropout_layer: usize,
    /// Splats with decoded opacity below this are respawned at a fresh
    /// uniform position. Must stay in [0, 0.1).
    pub prune_threshold: f32,
    /// Prune every this many iterations; 0 disables pruning. The final
    /// period is left alone so respawned splats never reach the checkpoint
    /// untrained.
    pub prune_period: u32,
}

impl TrainConfig {
    pub fn default_mlp(seed: u64) -> TrainConfig {
        TrainConfig {
            iters: 3000,
            batch_rays: 1024,
            lr: 1e-3,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed,
            loss: LossKind::L2,
            n_samples: crate::fields::DEFAULT_RAY_SAMPLES,
            hidden_width: crate::fields::mlp::DEFAULT_HIDDEN_WIDTH,
            hidden_layers: crate::fields::mlp::DEFAULT_HIDDEN_LAYERS,
            dropout_layer: crate::fields::mlp::DEFAULT_DROPOUT_LAYER,
            prune_threshold: 0.02,
            prune_period: 300,
        }
    }

    /// Same fields, splat-appropriate rate. The 1e-2 base rate decays to a
    /// tenth over the run on a cosine schedule.
    pub fn default_splats(seed: u64) -> TrainConfig {
        TrainConfig {
            iters: 2000,
            lr: 1e-2,
            ..TrainConfig::default_mlp(seed)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.iters < 1 {
            return bad("iters must be >= 1".into());
        }
        if self.batch_rays < 1 {
            return bad("batch_rays must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        for b in [self.betas.0, self.betas.1] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("beta {b} outside [0, 1)"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if self.n_samples < 2 {
            return bad("n_samples must be >= 2".into());
        }
        if self.hidden_layers < 2 {
            return bad("hidden_layers must be >= 2".into());
        }
        if self.dropout_layer < 1 || self.dropout_layer >= self.hidden_layers {
            return bad(format!(
                "dropout_layer {} outside 1..{}",
                self.dropout_layer, self.hidden_layers
            ));
        }
        if !(0.0..0.1).contains(&self.prune_threshold) {
            return bad(format!(
                "prune_threshold {} outside [0, 0.1)",
                self.prune_threshold
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iter: u32,
    /// Step loss: batch MSE for MLPs, full-image MSE for splats.
    pub loss: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
    /// PSNR over every training view, rendered once after the last step.
    pub final_psnr: f64,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,loss,psnr\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{}\n", e.iter, e.loss, e.psnr));
        }
        s
    }

    /// Mean loss over the `window` entries ending at `idx` (inclusive).
    pub fn smoothed_loss(&self, idx: usize, window: usize) -> f64 {
        assert!(idx < self.entries.len() && window >= 1);
        let lo = (idx + 1).saturating_sub(window);
        let span = &self.entries[lo..=idx];
        span.iter().map(|e| e.loss).sum::<f64>() / span.len() as f64
    }
}

// ---------------------------------------------------------------- optimizer

/// Adam with bias correction over a flat parameter vector.
pub struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
    beta1: f32,
    beta2: f32,
    eps: f32,
}

impl Adam {
    pub fn new(n: usize, betas: (f32, f32), eps: f32) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: betas.0,
            beta2: betas.1,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f32) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = (1.0 - (self.beta1 as f64).powi(self.t as i32)) as f32;
        let bc2 = (1.0 - (self.beta2 as f64).powi(self.t as i32)) as f32;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }

    /// Clears the moments of one parameter (respawned splats start cold).
    pub fn reset_at(&mut self, i: usize) {
        self.m[i] = 0.0;
        self.v[i] = 0.0;
    }
}

// ------------------------------------------------- flat parameter layouts

/// Checkpoint order: hash tables (if any), then per layer weights row-major
/// followed by biases.
pub(crate) fn flatten_mlp<T: Real>(net: &MlpNet<T>) -> Vec<T> {
    let mut flat = Vec::with_capacity(net.param_count());
    if let Some(t) = &net.tables {
        flat.extend(t.iter().copied());
    }
    for l in &net.layers {
        flat.extend(l.w.iter().copied());
        flat.extend(l.b.iter().copied());
    }
    flat
}

pub(crate) fn unflatten_mlp<T: Real>(net: &mut MlpNet<T>, flat: &[T]) {
    assert_eq!(
        flat.len(),
        net.param_count(),
        "flat parameter length mismatch"
    );
    let mut at = 0;
    let mut take = |n: usize| {
        at += n;
        &flat[at - n..at]
    };
    if let Some(t) = &mut net.tables {
        let nt = t.len();
        t.as_slice_mut().unwrap().copy_from_slice(take(nt));
    }
    for l in &mut net.layers {
        let (nw, nb) = (l.w.len(), l.b.len());
        l.w.as_slice_mut().unwrap().copy_from_slice(take(nw));
        l.b.as_slice_mut().unwrap().copy_from_slice(take(nb));
    }
}

/// Checkpoint order: positions, log scales, color logits, opacity logits.
pub(crate) fn flatten_splats<T: Real>(s: &SplatSet<T>) -> Vec<T> {
    let mut flat = Vec::with_capacity(s.param_count());
    flat.extend(s.pos.iter().copied());
    flat.extend(s.log_scale.iter().copied());
    flat.extend(s.color_logit.iter().copied());
    flat.extend(s.op_logit.iter().copied());
    flat
}

pub(crate) fn unflatten_splats<T: Real>(s: &mut SplatSet<T>, flat: &[T]) {
    assert_eq!(
        flat.len(),
        s.param_count(),
        "flat parameter length mismatch"
    );
    let n = s.count();
    s.pos
        .as_slice_mut()
        .unwrap()
        .copy_from_slice(&flat[..3 * n]);
    s.log_scale
        .as_slice_mut()
        .unwrap()
        .copy_from_slice(&flat[3 * n..4 * n]);
    s.color_logit
        .as_slice_mut()
        .unwrap()
        .copy_from_slice(&flat[4 * n..7 * n]);
    s.op_logit
        .as_slice_mut()
        .unwrap()
        .copy_from_slice(&flat[7 * n..]);
}

/// Flat indices of splat i's eight parameters.
fn splat_param_indices(i: usize, n: usize) -> [usize; 8] {
    [
        3 * i,
        3 * i + 1,
        3 * i + 2,
        3 * n + i,
        4 * n + 3 * i,
        4 * n + 3 * i + 1,
        4 * n + 3 * i + 2,
        7 * n + i,
    ]
}

// ----------------------------------------------------------- MLP gradients

/// A training batch: stratified sample points (ray r owns rows
/// r*n_samples..(r+1)*n_samples), per-sample deltas, per-ray GT colors.
pub(crate) struct RayBatch<T> {
    pub points: Array2<T>,
    pub deltas: Vec<T>,
    pub gt: Vec<[T; 3]>,
    pub n_samples: usize,
}

/// Builds a batch from (view, y, x) ray picks. Ray r's jitter stream is
/// keyed by (jitter_key, r), so the batch is a pure function of its inputs
/// no matter how the fill is scheduled.
pub(crate) fn assemble_rays<T: Real>(
    views: &[View],
    rays: &[(u32, u32, u32)],
    bound: f64,
    n_samples: usize,
    jitter_key: u64,
) -> RayBatch<T> {
    let s = n_samples;
    let gt: Vec<[T; 3]> = rays
        .iter()
        .map(|&(v, y, x)| {
            let p = views[v as usize].image.px(y as usize, x as usize);
            [c(p[0] as f64), c(p[1] as f64), c(p[2] as f64)]
        })
        .collect();
    let mut points = Array2::<T>::zeros((rays.len() * s, 3));
    let mut deltas = vec![T::zero(); rays.len() * s];
    points
        .axis_chunks_iter_mut(Axis(0), s)
        .into_par_iter()
        .zip(deltas.par_chunks_mut(s))
        .enumerate()
        .for_each_init(
            || vec![0.0f64; s],
            |ts, (r, (mut prow, drow))| {
                let (v, y, x) = rays[r];
                let cam = &views[v as usize].camera;
                let (near, far) = camera_ray_bounds(cam, bound);
                let bin = (far - near) / s as f64;
                let (origin, dir) = cam.ray_for_pixel(x as usize, y as usize);
                let jk = mix(&[jitter_key, r as u64]);
                for (k, t) in ts.iter_mut().enumerate() {
                    *t = near + (k as f64 + unit_f64(jk, k as u64)) * bin;
                }
                for k in 0..s {
                    let p = origin + dir * ts[k];
                    prow[(k, 0)] = c(p.x);
                    prow[(k, 1)] = c(p.y);
                    prow[(k, 2)] = c(p.z);
                    drow[k] = c(if k + 1 < s {
                        ts[k + 1] - ts[k]
                    } else {
                        far - ts[k]
                    });
                }
            },
        );
    RayBatch {
        points,
        deltas,
        gt,
        n_samples: s,
    }
}

/// Volume-composites every ray, accumulates mean squared error against GT,
/// and writes dL/d(activated outputs) into `dy`. Per-ray math runs in f64.
///
/// Backward uses the suffix recurrence: with S_k the composite of samples
/// k.. plus background, dC/dalpha_k = T_k (c_k - S_{k+1}) and
/// dalpha/dsigma_k = delta_k (1 - alpha_k).
pub(crate) fn composite_rays_grad<T: Real>(
    y: &Array2<T>,
    deltas: &[T],
    gt: &[[T; 3]],
    background: [f64; 3],
    n_samples: usize,
    dy: &mut Array2<T>,
) -> f64 {
    let s = n_samples;
    let b = gt.len();
    assert_eq!(y.nrows(), b * s);
    let scale = 1.0 / (b as f64 * 3.0);

    let errs: Vec<f64> = dy
        .axis_chunks_iter_mut(Axis(0), s)
        .into_par_iter()
        .zip(y.axis_chunks_iter(Axis(0), s).into_par_iter())
        .zip(deltas.par_chunks(s))
        .enumerate()
        .map_init(
            || (vec![0.0f64; s], vec![0.0f64; s]),
            |(alphas, trans), (r, ((mut dyr, yr), dr))| {
                // Forward at f64: alphas and the transmittance in front of
                // each sample, then the composite color.
                let mut t = 1.0f64;
                let mut acc = [0.0f64; 3];
                for k in 0..s {
                    let sg = yr[(k, 0)].to_f64().unwrap();
                    let dl = dr[k].to_f64().unwrap();
                    let a = 1.0 - (-sg * dl).exp();
                    alphas[k] = a;
                    trans[k] = t;
                    let wg = t * a;
                    for ch in 0..3 {
                        acc[ch] += wg * yr[(k, 1 + ch)].to_f64().unwrap();
                    }
                    t *= 1.0 - a;
                }
                let mut cfin = [0.0f64; 3];
                let mut dc = [0.0f64; 3];
                let gtr = gt[r];
                let mut sqerr = 0.0;
                for ch in 0..3 {
                    cfin[ch] = acc[ch] + t * background[ch];
                    let e = cfin[ch] - gtr[ch].to_f64().unwrap();
                    sqerr += e * e;
                    dc[ch] = scale * 2.0 * e;
                }
                // Backward: suffix composite S starts at the background.
                let mut suffix = background;
                for k in (0..s).rev() {
                    let a = alphas[k];
                    let tk = trans[k];
                    let dl = dr[k].to_f64().unwrap();
                    let col = [
                        yr[(k, 1)].to_f64().unwrap(),
                        yr[(k, 2)].to_f64().unwrap(),
                        yr[(k, 3)].to_f64().unwrap(),
                    ];
                    let mut dalpha = 0.0;
                    for ch in 0..3 {
                        dyr[(k, 1 + ch)] = c(dc[ch] * tk * a);
                        dalpha += dc[ch] * tk * (col[ch] - suffix[ch]);
                    }
                    dyr[(k, 0)] = c(dalpha * dl * (1.0 - a));
                    for ch in 0..3 {
                        suffix[ch] = a * col[ch] + (1.0 - a) * suffix[ch];
                    }
                }
                sqerr
            },
        )
        .collect();
    errs.iter().sum::<f64>() * scale
}

/// Backprop through the network given dL/d(activated outputs). Returns flat
/// gradients in checkpoint order. Matrix products run as single serial GEMM
/// calls and the hash-table scatter is serial, so the result does not depend
/// on worker count.
pub(crate) fn mlp_backward<T: Real>(
    net: &MlpNet<T>,
    tape: &Tape<T>,
    dy: &Array2<T>,
    bound: f64,
) -> Vec<T> {
    let nl = net.layers.len();
    let n = dy.nrows();
    let zlast = &tape.z[nl - 1];

    // Output heads: col 0 softplus (deriv sigmoid of pre-activation), cols
    // 1..4 logistic (deriv y(1-y)).
    let mut dz = Array2::<T>::zeros((n, 4));
    {
        let mut c0 = dz.column_mut(0);
        Zip::from(&mut c0)
            .and(dy.column(0))
            .and(zlast.column(0))
            .par_for_each(|d, &dv, &z| *d = dv * sigmoid(z));
    }
    for ch in 1..4 {
        let mut cc = dz.column_mut(ch);
        Zip::from(&mut cc)
            .and(dy.column(ch))
            .and(tape.y.column(ch))
            .par_for_each(|d, &dv, &yv| *d = dv * yv * (T::one() - yv));
    }

    let mut per_layer: Vec<(Array2<T>, ndarray::Array1<T>)> = Vec::with_capacity(nl);
    let mut dcur = dz;
    for l in (0..nl).rev() {
        let input: ArrayView2<T> = if l == 0 {
            tape.feats.view()
        } else {
            tape.a[l - 1].view()
        };
        let mut dw = Array2::<T>::zeros((input.ncols(), dcur.ncols()));
        general_mat_mul(T::one(), &input.t(), &dcur, T::zero(), &mut dw);
        let db = dcur.sum_axis(Axis(0));
        per_layer.push((dw, db));
        if l > 0 {
            let w = &net.layers[l].w;
            let mut dx = Array2::<T>::zeros((n, w.nrows()));
            general_mat_mul(T::one(), &dcur, &w.t(), T::zero(), &mut dx);
            let act = net.layers[l - 1].act;
            Zip::from(&mut dx)
                .and(&tape.z[l - 1])
                .par_for_each(|d, &z| *d *= act.deriv(z));
            dcur = dx;
        } else if let EncodingConfig::Hash(_) = net.encoding {
            let w = &net.layers[0].w;
            let mut df = Array2::<T>::zeros((n, w.nrows()));
            general_mat_mul(T::one(), &dcur, &w.t(), T::zero(), &mut df);
            dcur = df;
        }
    }
    per_layer.reverse();

    // Scatter encoder gradients into the hash tables. PE/SPE features are
    // functions of the (non-learned) points, so they stop here.
    let mut dtables: Option<Array2<T>> = None;
    if let EncodingConfig::Hash(h) = net.encoding {
        let tables = net.tables.as_ref().expect("hash encoding requires tables");
        let fw = h.features as usize;
        let mut dt = Array2::<f64>::zeros(tables.dim());
        for (r, prow) in tape.points.rows().into_iter().enumerate() {
            let p = [prow[0], prow[1], prow[2]];
            for lev in 0..h.levels {
                let corners = hash_corners(&h, lev, bound, p);
                for (slot, wgt) in corners {
                    let wgt = wgt.to_f64().unwrap();
                    for f in 0..fw {
                        dt[(slot, f)] += wgt * dcur[(r, lev as usize * fw + f)].to_f64().unwrap();
                    }
                }
            }
        }
        dtables = Some(dt.mapv(|v| c(v)));
    }

    let mut flat = Vec::with_capacity(net.param_count());
    if let Some(dt) = dtables {
        flat.extend(dt.iter().copied());
    }
    for (dw, db) in per_layer {
        flat.extend(dw.iter().copied());
        flat.extend(db.iter().copied());
    }
    flat
}

/// Loss and flat gradients of one batch. The forward pass is the tape
/// variant of the renderer's own forward.
pub(crate) fn mlp_loss_grad<T: Real>(
    net: &MlpNet<T>,
    bound: f64,
    batch: &RayBatch<T>,
    background: [f64; 3],
) -> (f64, Vec<T>) {
    let tape = net.forward_tape(batch.points.clone(), bound);
    let mut dy = Array2::<T>::zeros(tape.y.dim());
    let loss = composite_rays_grad(
        &tape.y,
        &batch.deltas,
        &batch.gt,
        background,
        batch.n_samples,
        &mut dy,
    );
    let grads = mlp_backward(net, &tape, &dy, bound);
    (loss, grads)
}

/// Fits an MLP radiance field to the training views. Batches are sampled
/// (view, pixel) pairs from a per-iteration stream; jitter is re-keyed per
/// iteration.
pub fn train_mlp(
    dataset: &SceneDataset,
    encoding: EncodingConfig,
    cfg: &TrainConfig,
) -> Result<(FieldModel, TrainLog), TrainError> {
    cfg.validate()?;
    encoding.validate().map_err(TrainError::Config)?;
    if dataset.train.is_empty() {
        return Err(TrainError::Config("dataset has no training views".into()));
    }
    let bound = dataset.spec.bounding_radius;
    let bg = dataset.spec.background.map(|v| v as f64);
    let kind = match encoding {
        EncodingConfig::Pe { .. } => ModelKind::NerfPe,
        EncodingConfig::Spe { .. } => ModelKind::NerfSpe,
        EncodingConfig::Hash(_) => ModelKind::NerfHash,
    };
    let mut net = MlpNet::<f32>::new(
        encoding,
        cfg.hidden_width,
        cfg.hidden_layers,
        cfg.dropout_layer,
        cfg.seed,
    );
    let mut adam = Adam::new(net.param_count(), cfg.betas, cfg.adam_eps);
    let mut params = flatten_mlp(&net);
    let mut log = TrainLog::default();
    let views = &dataset.train;
    let (h, w) = (views[0].image.h as u32, views[0].image.w as u32);

    for iter in 1..=cfg.iters {
        let mut r = stream(&[cfg.seed, tag("batch"), iter as u64]);
        let rays: Vec<(u32, u32, u32)> = (0..cfg.batch_rays)
            .map(|_| {
                (
                    r.gen_range(0..views.len() as u32),
                    r.gen_range(0..h),
                    r.gen_range(0..w),
                )
            })
            .collect();
        let jkey = mix(&[cfg.seed, tag("train-jitter"), iter as u64]);
        let batch = assemble_rays::<f32>(views, &rays, bound, cfg.n_samples, jkey);
        let (loss, grads) = mlp_loss_grad(&net, bound, &batch, bg);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { iter, loss });
        }
        adam.step(&mut params, &grads, cfg.lr);
        unflatten_mlp(&mut net, &params);
        log.entries.push(TrainLogEntry {
            iter,
            loss,
            psnr: psnr_of_mse(loss),
        });
    }

    let model = FieldModel::Mlp(MlpField { net, bound, kind });
    log.final_psnr = full_train_psnr(&model, dataset, cfg);
    Ok((model, log))
}

fn full_train_psnr(model: &FieldModel, dataset: &SceneDataset, cfg: &TrainConfig) -> f64 {
    let opts = RenderOpts {
        n_samples: cfg.n_samples,
        rng_key: mix(&[cfg.seed, tag("eval-jitter")]),
        background: dataset.spec.background,
    };
    let mut se = 0.0f64;
    let mut n = 0usize;
    for v in &dataset.train {
        let r = model.render_view(&v.camera, &opts, None);
        se += r.mse(&v.image) * r.data.len() as f64;
        n += r.data.len();
    }
    psnr_of_mse(se / n as f64)
}

// ---------------------------------------------------------- splat gradients

/// Rasterizes one view, measures MSE against `gt` (row-major rgb, len
/// h*w*3), and accumulates flat parameter gradients. Returns (mse, rendered
/// pixels, gradients).
///
/// The forward pass is `composite_pixel` — the rasterizer's own loop — so
/// the footprint cutoff and the transmittance early exit truncate forward
/// and backward identically: a contribution the renderer never saw gets zero
/// gradient. Pixels are processed in tile-row bands; each band accumulates
/// into its own f64 buffer and bands merge in fixed order.
pub(crate) fn splat_loss_grad<T: Real>(
    splats: &SplatSet<T>,
    bound: f64,
    cam: &Camera,
    gt: &[T],
    background: [T; 3],
) -> (f64, Vec<T>, Vec<T>) {
    let (h, w) = (cam.height as usize, cam.width as usize);
    assert_eq!(gt.len(), h * w * 3, "gt length mismatch");
    let n = splats.count();
    let gs = prepare(splats, bound, cam, None);
    let (tx, tiles) = bin_tiles(&gs, h, w);

    // Per-survivor flag: is the decoded scale inside the clamp range? A
    // clamped scale has zero gradient w.r.t. its log-scale.
    let unclamped: Vec<bool> = gs
        .iter()
        .map(|g| {
            let raw = splats.log_scale[g.idx as usize].to_f64().unwrap().exp();
            (MIN_SCALE..=bound).contains(&raw)
        })
        .collect();

    let (right, up, fwd) = cam.basis();
    let focal = cam.focal_px();
    let bgf = [
        background[0].to_f64().unwrap(),
        background[1].to_f64().unwrap(),
        background[2].to_f64().unwrap(),
    ];
    let scale = 1.0 / (h as f64 * w as f64 * 3.0);
    let n_bands = h.div_ceil(TILE);

    let bands: Vec<(f64, Vec<T>, Vec<f64>)> = (0..n_bands)
        .into_par_iter()
        .map(|band| {
            let y0 = band * TILE;
            let y1 = (y0 + TILE).min(h);
            let mut grad = vec![0.0f64; 8 * n];
            let mut pixels = vec![T::zero(); (y1 - y0) * w * 3];
            let mut sqerr = 0.0f64;
            let mut contribs: Vec<Contribution<T>> = Vec::new();
            for py in y0..y1 {
                for px in 0..w {
                    let tile = &tiles[(py / TILE) * tx + px / TILE];
                    contribs.clear();
                    let rgb =
                        composite_pixel(&gs, tile, px, py, background, |ct| contribs.push(ct));
                    let mut dc = [0.0f64; 3];
                    for ch in 0..3 {
                        pixels[((py - y0) * w + px) * 3 + ch] = rgb[ch];
                        let e = rgb[ch].to_f64().unwrap()
                            - gt[(py * w + px) * 3 + ch].to_f64().unwrap();
                        sqerr += e * e;
                        dc[ch] = scale * 2.0 * e;
                    }
                    let mut suffix = bgf;
                    for ct in contribs.iter().rev() {
                        let g = &gs[ct.pos as usize];
                        let i = g.idx as usize;
                        let tk = ct.trans_before.to_f64().unwrap();
                        let a = ct.alpha.to_f64().unwrap();
                        let gw = ct.gw;
                        let op = g.opacity.to_f64().unwrap();
                        let col = [
                            g.color[0].to_f64().unwrap(),
                            g.color[1].to_f64().unwrap(),
                            g.color[2].to_f64().unwrap(),
                        ];
                        let idxs = splat_param_indices(i, n);
                        let mut dalpha = 0.0;
                        for ch in 0..3 {
                            let dcol = dc[ch] * tk * a;
                            grad[idxs[4 + ch]] += dcol * col[ch] * (1.0 - col[ch]);
                            dalpha += dc[ch] * tk * (col[ch] - suffix[ch]);
                        }
                        grad[idxs[7]] += dalpha * gw * op * (1.0 - op);
                        let dgw = dalpha * op;
                        // Footprint chain: gw = exp(-d^2 / (2 s^2)).
                        let dxp = g.x - (px as f64 + 0.5);
                        let dyp = g.y - (py as f64 + 0.5);
                        let s = g.sigma_px;
                        let gwd = dgw * gw;
                        let dgx = gwd * (-dxp / (s * s));
                        let dgy = gwd * (-dyp / (s * s));
                        let dsig = gwd * ((dxp * dxp + dyp * dyp) / (s * s * s));
                        // Projection chain. With q = p - campos, A = q.right,
                        // B = q.up, depth = q.fwd:
                        //   x = f A / depth + w/2, y = -f B / depth + h/2,
                        //   sigma_px = scale * f / depth.
                        let xc = g.x - w as f64 / 2.0;
                        let yc = g.y - h as f64 / 2.0;
                        let inv_d = 1.0 / g.depth;
                        let dp = (right * focal - fwd * xc) * (dgx * inv_d)
                            + (up * (-focal) - fwd * yc) * (dgy * inv_d)
                            + fwd * (dsig * (-s * inv_d));
                        grad[idxs[0]] += dp.x;
                        grad[idxs[1]] += dp.y;
                        grad[idxs[2]] += dp.z;
                        if unclamped[ct.pos as usize] {
                            grad[idxs[3]] += dsig * s;
                        }
                        for ch in 0..3 {
                            suffix[ch] = a * col[ch] + (1.0 - a) * suffix[ch];
                        }
                    }
                }
            }
            (sqerr, pixels, grad)
        })
        .collect();

    let mut grad = vec![0.0f64; 8 * n];
    let mut pixels = Vec::with_capacity(h * w * 3);
    let mut sqerr = 0.0f64;
    for (se, px, g) in bands {
        sqerr += se;
        pixels.extend(px);
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    (
        sqerr * scale,
        pixels,
        grad.into_iter().map(|v| c(v)).collect(),
    )
}

/// Respawns splats whose decoded opacity dropped below the threshold: fresh
/// uniform position and color, initial scale and opacity, Adam moments
/// cleared. Consumes no randomness when nothing is below threshold. Returns
/// the respawn count.
pub(crate) fn prune_respawn(
    splats: &mut SplatSet<f32>,
    adam: &mut Adam,
    threshold: f32,
    seed: u64,
    iter: u32,
    bound: f64,
) -> usize {
    let low: Vec<usize> = (0..splats.count())
        .filter(|&i| sigmoid(splats.op_logit[i]) < threshold)
        .collect();
    if low.is_empty() {
        return 0;
    }
    let n = splats.count();
    let mut rng = stream(&[seed, tag("respawn"), iter as u64]);
    for &i in &low {
        for k in 0..3 {
            splats.pos[(i, k)] = (0.6 * bound * (2.0 * rng.gen::<f64>() - 1.0)) as f32;
        }
        for k in 0..3 {
            splats.color_logit[(i, k)] = (2.0 * rng.gen::<f64>() - 1.0) as f32;
        }
        splats.log_scale[i] = init_log_scale(n, bound) as f32;
        splats.op_logit[i] = init_op_logit() as f32;
        for idx in splat_param_indices(i, n) {
            adam.reset_at(idx);
        }
    }
    low.len()
}

/// Base rate at iteration `iter` of `total` on a cosine ramp down to a tenth.
fn cosine_lr(lr0: f32, iter: u32, total: u32) -> f32 {
    let lr_end = lr0 as f64 / 10.0;
    if total <= 1 {
        return lr0;
    }
    let t = (iter - 1) as f64 / (total - 1) as f64;
    (lr_end + 0.5 * (lr0 as f64 - lr_end) * (1.0 + (std::f64::consts::PI * t).cos())) as f32
}

/// Fits a splat cloud to the training views. Each step renders one full
/// training image (picked per iteration from the seed) and descends its MSE;
/// the learning rate follows a cosine ramp and low-opacity splats are
/// periodically respawned.
pub fn train_splats(
    dataset: &SceneDataset,
    count: usize,
    cfg: &TrainConfig,
) -> Result<(FieldModel, TrainLog), TrainError> {
    cfg.validate()?;
    if count == 0 {
        return Err(TrainError::Config("splat count must be >= 1".into()));
    }
    if dataset.train.is_empty() {
        return Err(TrainError::Config("dataset has no training views".into()));
    }
    let bound = dataset.spec.bounding_radius;
    let bg = dataset.spec.background;
    let mut splats = SplatSet::<f32>::new(count, bound, cfg.seed);
    let mut adam = Adam::new(splats.param_count(), cfg.betas, cfg.adam_eps);
    let mut params = flatten_splats(&splats);
    let mut log = TrainLog::default();
    let n_views = dataset.train.len() as u64;

    for iter in 1..=cfg.iters {
        let v = (mix(&[cfg.seed, tag("view"), iter as u64]) % n_views) as usize;
        let view = &dataset.train[v];
        let (loss, _, grads) =
            splat_loss_grad::<f32>(&splats, bound, &view.camera, &view.image.data, bg);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { iter, loss });
        }
        adam.step(&mut params, &grads, cosine_lr(cfg.lr, iter, cfg.iters));
        unflatten_splats(&mut splats, &params);
        if cfg.prune_period > 0
            && iter % cfg.prune_period == 0
            && iter + cfg.prune_period <= cfg.iters
            && prune_respawn(
                &mut splats,
                &mut adam,
                cfg.prune_threshold,
                cfg.seed,
                iter,
                bound,
            ) > 0
        {
            params = flatten_splats(&splats);
        }
        log.entries.push(TrainLogEntry {
            iter,
            loss,
            psnr: psnr_of_mse(loss),
        });
    }

    let model = FieldModel::Splats(SplatField { splats, bound });
    log.final_psnr = full_train_psnr(&model, dataset, cfg);
    Ok((model, log))
}

// ------------------------------------------------------------- grad checks

#[derive(Clone, Copy, Debug)]
pub enum GradCheckTarget {
    /// sum_i a_i x_i^2 on raw parameters, bypassing the renderer.
    Quadratic,
    /// Width-16 radiance MLP rendering one 8x8 view against random GT.
    Mlp(EncodingConfig),
    /// 16 splats rasterized to one 8x8 view against random GT.
    Splats,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
}

/// Central-difference check of the analytic gradients at f64. Probes are
/// stratified across the flat parameter vector; per probe the relative error
/// is |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-6).
///
/// A central difference is only an oracle where the loss is smooth across
/// [x - h, x + h]. Relu nets have kinks, and a probe step that shifts the
/// pre-activations of every batch row across dozens of downstream units
/// almost always pushes one across zero; the difference then measures the
/// kink, not the gradient. Kinked windows are detected exactly by comparing
/// the relu sign pattern at the three evaluation points; on detection the
/// step shrinks by 4x (down to h/4096, then the probe moves to the next
/// parameter) until the pattern is stable. A wrong gradient cannot hide
/// behind this rule: it disagrees with the finite difference on smooth
/// windows too.
pub fn grad_check(
    target: GradCheckTarget,
    probes: usize,
    fd_step: f64,
    seed: u64,
) -> GradCheckReport {
    assert!(probes >= 1 && fd_step > 0.0);
    type Loss = Box<dyn Fn(&[f64]) -> f64>;
    type Signs = Box<dyn Fn(&[f64]) -> Vec<bool>>;
    let (params, analytic, loss, signs): (Vec<f64>, Vec<f64>, Loss, Option<Signs>) = match target {
        GradCheckTarget::Quadratic => {
            let mut rng = stream(&[seed, tag("gc-quad")]);
            let x: Vec<f64> = (0..64).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let a: Vec<f64> = (0..64).map(|_| 0.5 + rng.gen::<f64>()).collect();
            let g = x.iter().zip(&a).map(|(x, a)| 2.0 * a * x).collect();
            let af = a.clone();
            (
                x,
                g,
                Box::new(move |p| p.iter().zip(&af).map(|(x, a)| a * x * x).sum()),
                None,
            )
        }
        GradCheckTarget::Mlp(enc) => {
            let bound = 1.5;
            let net = MlpNet::<f64>::new(enc, 16, 3, 1, seed);
            let (_, view) = check_view(seed);
            let rays: Vec<(u32, u32, u32)> = (0..8u32)
                .flat_map(|y| (0..8u32).map(move |x| (0, y, x)))
                .collect();
            let batch = assemble_rays::<f64>(
                std::slice::from_ref(&view),
                &rays,
                bound,
                8,
                mix(&[seed, tag("gc-jitter")]),
            );
            let bg = [1.0, 1.0, 1.0];
            let (_, g) = mlp_loss_grad(&net, bound, &batch, bg);
            let params = flatten_mlp(&net);
            let relu_layers: Vec<usize> = net
                .layers
                .iter()
                .enumerate()
                .filter(|(l, ly)| l + 1 < net.layers.len() && ly.act == Activation::Relu)
                .map(|(l, _)| l)
                .collect();
            let base = net.clone();
            let sign_base = net.clone();
            let sign_points = batch.points.clone();
            let loss: Loss = Box::new(move |p| {
                let mut net = base.clone();
                unflatten_mlp(&mut net, p);
                mlp_loss_grad(&net, bound, &batch, bg).0
            });
            let signs: Signs = Box::new(move |p| {
                let mut net = sign_base.clone();
                unflatten_mlp(&mut net, p);
                let t = net.forward_tape(sign_points.clone(), bound);
                let mut out = Vec::new();
                for &l in &relu_layers {
                    out.extend(t.z[l].iter().map(|&v| v > 0.0));
                }
                out
            });
            (params, g, loss, Some(signs))
        }
        GradCheckTarget::Splats => {
            let bound = 1.5;
            let splats = SplatSet::<f64>::new(16, bound, seed);
            let (cam, view) = check_view(seed);
            let gt: Vec<f64> = view.image.data.iter().map(|&v| v as f64).collect();
            let bg = [1.0, 1.0, 1.0];
            let (_, _, g) = splat_loss_grad(&splats, bound, &cam, &gt, bg);
            let params = flatten_splats(&splats);
            let base = splats.clone();
            (
                params,
                g,
                Box::new(move |p| {
                    let mut s = base.clone();
                    unflatten_splats(&mut s, p);
                    splat_loss_grad(&s, bound, &cam, &gt, bg).0
                }),
                None,
            )
        }
    };

    let pk = mix(&[seed, tag("probes")]);
    let mut p = params;
    let mut worst = 0.0f64;
    for t in 0..probes {
        let u = unit_f64(pk, t as u64);
        let start = (((t as f64 + u) / probes as f64) * p.len() as f64) as usize;
        let start = start.min(p.len() - 1);
        let mut idx = start;
        let mut h = fd_step;
        if let Some(signs) = &signs {
            'placed: for shift in 0..16usize {
                idx = (start + shift) % p.len();
                h = fd_step;
                for _ in 0..7 {
                    let x0 = p[idx];
                    let s0 = signs(&p);
                    p[idx] = x0 + h;
                    let sp = signs(&p);
                    p[idx] = x0 - h;
                    let sm = signs(&p);
                    p[idx] = x0;
                    if s0 == sp && s0 == sm {
                        break 'placed;
                    }
                    h /= 4.0;
                }
            }
        }
        let x0 = p[idx];
        p[idx] = x0 + h;
        let lp = loss(&p);
        p[idx] = x0 - h;
        let lm = loss(&p);
        p[idx] = x0;
        let fd = (lp - lm) / (2.0 * h);
        let ga = analytic[idx];
        let rel = (ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    GradCheckReport {
        max_rel_err: worst,
        probes,
    }
}

/// Fixed 8x8 camera over a seeded random GT image for the render-based
/// gradient checks.
fn check_view(seed: u64) -> (Camera, View) {
    let cam = Camera::look_at(
        crate::scene::math::v3(0.4, -3.0, 0.8),
        crate::scene::math::v3(0.0, 0.0, 0.0),
        50.0,
        8,
        8,
    );
    let mut rng = stream(&[seed, tag("gc-gt")]);
    let mut img = Image::new(8, 8);
    for v in img.data.iter_mut() {
        *v = rng.gen::<f32>();
    }
    (
        cam.clone(),
        View {
            camera: cam,
            image: img,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::splats::rasterize;
    use crate::scene::{make_dataset, SceneKind, SceneSpec};

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            iters: 60,
            batch_rays: 128,
            n_samples: 8,
            hidden_width: 16,
            hidden_layers: 2,
            ..TrainConfig::default_mlp(seed)
        }
    }

    /// Empty scene: every GT pixel is exactly the background.
    fn flat_dataset(res: u32, n_train: usize) -> SceneDataset {
        let spec = SceneSpec {
            object_count: 0,
            ..SceneSpec::new(SceneKind::Spheres, 11)
        };
        make_dataset(&spec, n_train, 1, (res, res), 50.0, 4.0).unwrap()
    }

    #[test]
    fn adam_first_step_matches_hand_value() {
        // With g = 1: m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let mut adam = Adam::new(1, (0.9, 0.999), 1e-8);
        let mut p = vec![0.5f32];
        adam.step(&mut p, &[1.0], 0.01);
        assert!((p[0] - (0.5 - 0.01 / (1.0 + 1e-8))).abs() < 1e-7);
    }

    #[test]
    fn flatten_roundtrip_preserves_models() {
        let net = MlpNet::<f32>::new(EncodingConfig::Pe { l: 3 }, 16, 3, 1, 5);
        let flat = flatten_mlp(&net);
        assert_eq!(flat.len(), net.param_count());
        let mut other = MlpNet::<f32>::new(EncodingConfig::Pe { l: 3 }, 16, 3, 1, 6);
        unflatten_mlp(&mut other, &flat);
        assert_eq!(net, other);

        let s = SplatSet::<f32>::new(12, 1.5, 5);
        let flat = flatten_splats(&s);
        assert_eq!(flat.len(), s.param_count());
        let mut other = SplatSet::<f32>::new(12, 1.5, 6);
        unflatten_splats(&mut other, &flat);
        assert_eq!(s, other);
    }

    #[test]
    fn quadratic_grad_check_is_machine_tight() {
        let r = grad_check(GradCheckTarget::Quadratic, 32, 1e-3, 7);
        assert!(r.max_rel_err < 1e-8, "rel err {}", r.max_rel_err);
    }

    #[test]
    fn mlp_pe_grads_match_finite_differences() {
        let r = grad_check(
            GradCheckTarget::Mlp(EncodingConfig::Pe { l: 4 }),
            32,
            1e-3,
            7,
        );
        assert!(r.max_rel_err < 1e-3, "rel err {}", r.max_rel_err);
    }

    #[test]
    fn mlp_spe_grads_match_finite_differences() {
        let r = grad_check(
            GradCheckTarget::Mlp(EncodingConfig::Spe { l: 4 }),
            32,
            1e-3,
            7,
        );
        assert!(r.max_rel_err < 1e-3, "rel err {}", r.max_rel_err);
    }

    #[test]
    fn mlp_hash_grads_match_finite_differences() {
        let h = crate::fields::HashConfig {
            levels: 4,
            base_res: 4,
            table_size: 1 << 8,
            features: 2,
        };
        let r = grad_check(GradCheckTarget::Mlp(EncodingConfig::Hash(h)), 32, 1e-3, 7);
        assert!(r.max_rel_err < 1e-3, "rel err {}", r.max_rel_err);
    }

    #[test]
    fn splat_grads_match_finite_differences() {
        let r = grad_check(GradCheckTarget::Splats, 32, 1e-3, 7);
        assert!(r.max_rel_err < 1e-3, "rel err {}", r.max_rel_err);
    }

    #[test]
    fn splat_backward_forward_matches_rasterize_exactly() {
        let splats = SplatSet::<f64>::new(24, 1.5, 3);
        let (cam, view) = check_view(3);
        let gt: Vec<f64> = view.image.data.iter().map(|&v| v as f64).collect();
        let bg = [0.3, 0.5, 0.7];
        let (_, pixels, _) = splat_loss_grad(&splats, 1.5, &cam, &gt, bg);
        let direct = rasterize(&splats, 1.5, &cam, bg, None);
        assert_eq!(pixels, direct);
    }

    #[test]
    fn mlp_fits_uniform_background() {
        let ds = flat_dataset(16, 2);
        let cfg = TrainConfig {
            iters: 3000,
            lr: 2e-3,
            ..small_cfg(2)
        };
        let (model, log) = train_mlp(&ds, EncodingConfig::Pe { l: 4 }, &cfg).unwrap();
        let opts = RenderOpts {
            n_samples: 8,
            ..RenderOpts::new(ds.spec.background, 9)
        };
        let r = model.render_view(&ds.train[0].camera, &opts, None);
        let worst = r
            .data
            .iter()
            .zip(&ds.train[0].image.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(
            worst < 1e-2,
            "worst channel error {worst}, log tail {:?}",
            log.entries.last()
        );
        assert!(log.final_psnr > 40.0, "final psnr {}", log.final_psnr);
    }

    #[test]
    fn splats_fit_uniform_background() {
        let ds = flat_dataset(16, 2);
        let cfg = TrainConfig {
            iters: 2400,
            prune_period: 0,
            ..TrainConfig::default_splats(2)
        };
        let (model, log) = train_splats(&ds, 32, &cfg).unwrap();
        let opts = RenderOpts::new(ds.spec.background, 0);
        let r = model.render_view(&ds.train[0].camera, &opts, None);
        let worst = r
            .data
            .iter()
            .zip(&ds.train[0].image.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(
            worst < 2e-2,
            "worst channel error {worst}, log tail {:?}",
            log.entries.last()
        );
    }

    #[test]
    fn prune_leaves_healthy_splats_alone() {
        let mut s = SplatSet::<f32>::new(16, 1.5, 4);
        let mut adam = Adam::new(s.param_count(), (0.9, 0.999), 1e-8);
        let before = s.clone();
        // Initial opacity is 0.1, above the 0.02 threshold.
        assert_eq!(prune_respawn(&mut s, &mut adam, 0.02, 4, 100, 1.5), 0);
        assert_eq!(s, before);

        // Push one splat below threshold; only that one moves.
        s.op_logit[5] = -8.0;
        adam.m[5 * 3] = 0.7;
        let moved = prune_respawn(&mut s, &mut adam, 0.02, 4, 100, 1.5);
        assert_eq!(moved, 1);
        assert_eq!(adam.m[5 * 3], 0.0);
        assert!((sigmoid(s.op_logit[5]) - 0.1).abs() < 1e-6);
        for i in 0..16 {
            if i != 5 {
                assert_eq!(s.pos.row(i), before.pos.row(i));
            }
        }
    }

    #[test]
    fn mlp_training_is_bitwise_deterministic() {
        let ds = flat_dataset(8, 2);
        let cfg = small_cfg(3);
        let (m1, l1) = train_mlp(&ds, EncodingConfig::Pe { l: 3 }, &cfg).unwrap();
        let (m2, l2) = train_mlp(&ds, EncodingConfig::Pe { l: 3 }, &cfg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn splat_training_is_bitwise_deterministic() {
        let ds = flat_dataset(8, 2);
        let cfg = TrainConfig {
            iters: 40,
            ..TrainConfig::default_splats(3)
        };
        let (m1, l1) = train_splats(&ds, 16, &cfg).unwrap();
        let (m2, l2) = train_splats(&ds, 16, &cfg).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let mut ds = flat_dataset(8, 1);
        // Poison the whole view so iteration 1 is guaranteed to sample it.
        for v in ds.train[0].image.data.iter_mut() {
            *v = f32::NAN;
        }
        let err = train_mlp(&ds, EncodingConfig::Pe { l: 3 }, &small_cfg(1)).unwrap_err();
        match err {
            TrainError::Diverged { iter: 1, .. } => {}
            other => panic!("expected divergence at iter 1, got {other:?}"),
        }
        let err = train_splats(
            &ds,
            8,
            &TrainConfig {
                iters: 5,
                ..TrainConfig::default_splats(1)
            },
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::Diverged { iter: 1, .. }));
    }

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        assert_eq!(cosine_lr(1e-2, 1, 100), 1e-2);
        assert!((cosine_lr(1e-2, 100, 100) - 1e-3).abs() < 1e-9);
        assert!(cosine_lr(1e-2, 50, 100) < 1e-2);
    }

    #[test]
    fn train_log_csv_has_strictly_increasing_iters() {
        let ds = flat_dataset(8, 1);
        let cfg = TrainConfig {
            iters: 5,
            ..small_cfg(9)
        };
        let (_, log) = train_mlp(&ds, EncodingConfig::Pe { l: 3 }, &cfg).unwrap();
        assert_eq!(log.entries.len(), 5);
        assert!(log.entries.windows(2).all(|w| w[0].iter < w[1].iter));
        let csv = log.to_csv();
        assert!(csv.starts_with("iter,loss,psnr\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = TrainConfig::default_mlp(1);
        assert!(ok.validate().is_ok());
        assert!(TrainConfig {
            iters: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            prune_threshold: 0.1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            dropout_layer: 4,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            betas: (1.0, 0.999),
            ..ok
        }
        .validate()
        .is_err());
    }
}
