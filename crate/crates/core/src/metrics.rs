//! Image fidelity and uncertainty-quality metrics: error maps, PSNR, SSIM,
//! rank and linear correlations, and sparsification (AUSE) scores.
//!
//! Everything here is pure and accumulates in f64 in a fixed order, so any
//! metric of the same inputs is the same bits on every run and worker count.

use crate::img::Image;
use crate::phd::UncertaintyMap;
use crate::rng::{stream, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the 11x11 ssim window")]
    TooSmall(usize, usize),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("empty sample pool")]
    EmptyPool,
}

fn check_shapes(a: &Image, b: &Image) -> Result<(), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch(a.h, a.w, b.h, b.w));
    }
    Ok(())
}

/// Elementwise absolute difference, H x W x 3.
pub fn error_map(render: &Image, gt: &Image) -> Result<Image, MetricsError> {
    check_shapes(render, gt)?;
    let mut out = Image::new(render.h, render.w);
    for ((o, a), b) in out.data.iter_mut().zip(&render.data).zip(&gt.data) {
        *o = (a - b).abs();
    }
    Ok(out)
}

/// PSNR in dB against peak 1.0, capped at 99 (the zero-MSE convention).
pub fn psnr_of_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return 99.0;
    }
    (10.0 * (1.0 / mse).log10()).min(99.0)
}

pub fn psnr(render: &Image, gt: &Image) -> Result<f64, MetricsError> {
    check_shapes(render, gt)?;
    Ok(psnr_of_mse(render.mse(gt)))
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 1e-4; // (0.01 * L)^2 at L = 1
const SSIM_C2: f64 = 9e-4; // (0.03 * L)^2

fn ssim_kernel() -> [f64; SSIM_WIN] {
    let mut k = [0.0f64; SSIM_WIN];
    let c = (SSIM_WIN / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable valid-region Gaussian filter: rows then columns. Input is an
/// h x w plane, output (h-10) x (w-10).
fn gauss_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WIN]) -> Vec<f64> {
    let wv = w - SSIM_WIN + 1;
    let hv = h - SSIM_WIN + 1;
    let mut rows = vec![0.0f64; h * wv];
    for y in 0..h {
        for x in 0..wv {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * plane[y * w + x + i];
            }
            rows[y * wv + x] = s;
        }
    }
    let mut out = vec![0.0f64; hv * wv];
    for y in 0..hv {
        for x in 0..wv {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * rows[(y + i) * wv + x];
            }
            out[y * wv + x] = s;
        }
    }
    out
}

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), standard constants,
/// valid window positions only, computed per channel and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let (h, w) = (a.h, a.w);
    if h < SSIM_WIN || w < SSIM_WIN {
        return Err(MetricsError::TooSmall(h, w));
    }
    let k = ssim_kernel();
    let mut per_channel_sum = 0.0f64;
    for ch in 0..3 {
        let pa: Vec<f64> = a
            .data
            .iter()
            .skip(ch)
            .step_by(3)
            .map(|&v| v as f64)
            .collect();
        let pb: Vec<f64> = b
            .data
            .iter()
            .skip(ch)
            .step_by(3)
            .map(|&v| v as f64)
            .collect();
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();

        let mu_a = gauss_valid(&pa, h, w, &k);
        let mu_b = gauss_valid(&pb, h, w, &k);
        let e_aa = gauss_valid(&paa, h, w, &k);
        let e_bb = gauss_valid(&pbb, h, w, &k);
        let e_ab = gauss_valid(&pab, h, w, &k);

        let mut s = 0.0f64;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            s += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
        per_channel_sum += s / mu_a.len() as f64;
    }
    Ok(per_channel_sum / 3.0)
}

fn check_pairs(u: &[f64], e: &[f64]) -> Result<(), MetricsError> {
    if u.len() != e.len() {
        return Err(MetricsError::LengthMismatch(u.len(), e.len()));
    }
    if u.len() < 2 {
        return Err(MetricsError::Degenerate("need at least two samples".into()));
    }
    Ok(())
}

/// Average ranks (1-based); tied values share the mean of their rank run.
fn mean_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[a].partial_cmp(&v[b])
            .expect("finite values")
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0.0f64; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j occupy this run; their mean is (i + j + 1) / 2.
        let r = (i + j + 1) as f64 / 2.0;
        for &p in &idx[i..j] {
            ranks[p] = r;
        }
        i = j;
    }
    ranks
}

/// Product-moment correlation.
pub fn pearson(u: &[f64], e: &[f64]) -> Result<f64, MetricsError> {
    check_pairs(u, e)?;
    let n = u.len() as f64;
    let mu: f64 = u.iter().sum::<f64>() / n;
    let me: f64 = e.iter().sum::<f64>() / n;
    let (mut suu, mut see, mut sue) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in u.iter().zip(e) {
        let (dx, dy) = (x - mu, y - me);
        suu += dx * dx;
        see += dy * dy;
        sue += dx * dy;
    }
    if suu == 0.0 || see == 0.0 {
        return Err(MetricsError::Degenerate("zero variance".into()));
    }
    Ok(sue / (suu * see).sqrt())
}

/// Spearman rank correlation: Pearson on mean ranks.
pub fn spearman(u: &[f64], e: &[f64]) -> Result<f64, MetricsError> {
    check_pairs(u, e)?;
    pearson(&mean_ranks(u), &mean_ranks(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuseKind {
    Rmse,
    Mse,
    Mae,
}

impl AuseKind {
    fn statistic(self, sum_for_kind: f64, n: usize) -> f64 {
        let m = sum_for_kind / n as f64;
        match self {
            AuseKind::Rmse => m.sqrt(),
            AuseKind::Mse | AuseKind::Mae => m,
        }
    }

    fn term(self, e: f64) -> f64 {
        match self {
            AuseKind::Rmse | AuseKind::Mse => e * e,
            AuseKind::Mae => e.abs(),
        }
    }
}

/// Indices sorted by value descending, ties by index ascending (the stable
/// removal order used by both sparsification curves).
fn removal_order(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[b].partial_cmp(&v[a])
            .expect("finite values")
            .then(a.cmp(&b))
    });
    idx
}

/// Survivor error statistic after removing the top floor(t * n) samples in
/// the given order, for every t in {0.00, 0.01, ..., 0.99}.
fn sparsification_curve(e: &[f64], order: &[usize], kind: AuseKind) -> [f64; 100] {
    let n = e.len();
    // suffix[k] = sum of the statistic terms of survivors order[k..].
    let mut suffix = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + kind.term(e[order[k]]);
    }
    let mut curve = [0.0f64; 100];
    for (ti, c) in curve.iter_mut().enumerate() {
        let removed = ((ti as f64 / 100.0) * n as f64).floor() as usize;
        *c = kind.statistic(suffix[removed], n - removed);
    }
    curve
}

/// Area between the sparsification curve of `u`-ordered removal and the
/// oracle curve of `e`-ordered removal, both normalized by their full-set
/// value; 0 means `u` ranks the errors perfectly.
pub fn ause(u: &[f64], e: &[f64], kind: AuseKind) -> Result<f64, MetricsError> {
    check_pairs(u, e)?;
    if e.iter().all(|&x| x == e[0]) {
        return Err(MetricsError::Degenerate("all errors equal".into()));
    }
    let by_u = sparsification_curve(e, &removal_order(u), kind);
    let by_e = sparsification_curve(e, &removal_order(e), kind);
    let base = by_u[0];
    if base == 0.0 {
        return Err(MetricsError::Degenerate("zero full-set error".into()));
    }
    let mut area = 0.0f64;
    for (cu, ce) in by_u.iter().zip(&by_e) {
        area += cu / base - ce / base;
    }
    Ok(area / 100.0)
}

pub const DEFAULT_SUBSAMPLE_CAP: usize = 1_000_000;

/// The uncertainty-quality bundle of one run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho_s: f64,
    pub rho_p: f64,
    pub ause_rmse: f64,
    pub ause_mse: f64,
    pub ause_mae: f64,
    /// Pool size before and after the subsample cap.
    pub n_pooled: usize,
    pub n_used: usize,
}

/// Pools (zeta, |ensemble mean - gt|) pairs over every pixel and channel of
/// every view, subsamples to `cap` with a seeded draw if larger (chosen
/// indices kept in original order), and computes the correlation bundle.
pub fn correlation_report(
    maps: &[UncertaintyMap],
    gts: &[Image],
    cap: usize,
    seed: u64,
) -> Result<CorrelationReport, MetricsError> {
    if maps.len() != gts.len() {
        return Err(MetricsError::LengthMismatch(maps.len(), gts.len()));
    }
    let mut u = Vec::new();
    let mut e = Vec::new();
    for (m, gt) in maps.iter().zip(gts) {
        check_shapes(&m.mean, gt)?;
        for i in 0..gt.data.len() {
            u.push(m.zeta.data[i] as f64);
            e.push((m.mean.data[i] as f64 - gt.data[i] as f64).abs());
        }
    }
    if u.is_empty() {
        return Err(MetricsError::EmptyPool);
    }
    let n_pooled = u.len();
    if n_pooled > cap {
        let mut idx: Vec<u32> = (0..n_pooled as u32).collect();
        let mut rng = stream(&[seed, tag("subsample")]);
        for i in 0..cap {
            let j = rng.gen_range(i as u32..n_pooled as u32) as usize;
            idx.swap(i, j);
        }
        let mut keep = idx[..cap].to_vec();
        keep.sort_unstable();
        u = keep.iter().map(|&i| u[i as usize]).collect();
        e = keep.iter().map(|&i| e[i as usize]).collect();
    }
    Ok(CorrelationReport {
        rho_s: spearman(&u, &e)?,
        rho_p: pearson(&u, &e)?,
        ause_rmse: ause(&u, &e, AuseKind::Rmse)?,
        ause_mse: ause(&u, &e, AuseKind::Mse)?,
        ause_mae: ause(&u, &e, AuseKind::Mae)?,
        n_pooled,
        n_used: u.len(),
    })
}
