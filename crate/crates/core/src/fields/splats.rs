//! Isotropic 3D Gaussian splats with a tile-binned software rasterizer.
//!
//! Splats are the maskable units of this family: a dropout mask removes whole
//! splats, and survivors are composited as-is (no renormalization). Survivors
//! are depth-sorted per view (ties broken by splat index) and accumulated
//! front to back: C = sum_i c_i a_i prod_{j<i}(1-a_j) + bg * prod(1-a_j),
//! a_i = opacity_i * exp(-d^2 / (2 sigma_i^2)), cut off at 3 sigma.
//!
//! Screen-space geometry (centers, footprints, depths) is computed in f64;
//! the compositing accumulator runs at the parameter precision.

use super::mlp::sigmoid;
use super::{bump_render_count, c, Mask, Real};
use crate::img::Image;
use crate::rng::{stream, tag};
use crate::scene::math::{v3, Vec3};
use crate::scene::Camera;
use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

pub const DEFAULT_SPLAT_COUNT: usize = 4096;
/// Footprint cutoff radius in units of the screen-space std.
pub const CUTOFF_SIGMAS: f64 = 3.0;
/// Decoded world-space scale floor.
pub const MIN_SCALE: f64 = 1e-4;
/// Pixels per tile edge for the rasterizer's binning grid.
pub(crate) const TILE: usize = 8;
/// Compositing stops once transmittance drops below this.
const STOP_TRANSMITTANCE: f64 = 1e-6;
/// Splats closer than this to the camera plane are culled.
const MIN_DEPTH: f64 = 1e-6;

/// Splat parameters, struct-of-arrays: world centers, log of the isotropic
/// world-space scale, color logits, opacity logits.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatSet<T> {
    pub pos: Array2<T>,
    pub log_scale: Array1<T>,
    pub color_logit: Array2<T>,
    pub op_logit: Array1<T>,
}

impl<T: Real> SplatSet<T> {
    /// Fresh cloud: centers uniform in a cube of half-extent 0.6*bound,
    /// scales sized so neighboring splats overlap, opacity 0.1, colors drawn
    /// uniformly (logits in [-1, 1], so decoded colors span roughly
    /// [0.27, 0.73]).
    pub fn new(count: usize, bound: f64, seed: u64) -> SplatSet<T> {
        assert!(count >= 1, "need at least one splat");
        let mut rng = stream(&[seed, tag("splat-init")]);
        let pos = Array2::from_shape_simple_fn((count, 3), || {
            c::<T>(0.6 * bound * (2.0 * rng.gen::<f64>() - 1.0))
        });
        let color_logit =
            Array2::from_shape_simple_fn((count, 3), || c::<T>(2.0 * rng.gen::<f64>() - 1.0));
        SplatSet {
            pos,
            log_scale: Array1::from_elem(count, c(init_log_scale(count, bound))),
            color_logit,
            op_logit: Array1::from_elem(count, c(init_op_logit())),
        }
    }

    pub fn count(&self) -> usize {
        self.pos.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.count() * 8
    }

    pub fn all_finite(&self) -> bool {
        self.pos.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.color_logit.iter().all(|v| v.is_finite())
            && self.op_logit.iter().all(|v| v.is_finite())
    }

    /// Same parameters at a different float precision.
    pub fn cast<U: Real>(&self) -> SplatSet<U> {
        let conv = |x: &T| c::<U>(x.to_f64().expect("finite parameter"));
        SplatSet {
            pos: self.pos.map(conv),
            log_scale: self.log_scale.map(conv),
            color_logit: self.color_logit.map(conv),
            op_logit: self.op_logit.map(conv),
        }
    }

    pub fn world_pos(&self, i: usize) -> Vec3 {
        v3(
            self.pos[(i, 0)].to_f64().unwrap(),
            self.pos[(i, 1)].to_f64().unwrap(),
            self.pos[(i, 2)].to_f64().unwrap(),
        )
    }
}

/// exp(log_scale) clamped into [MIN_SCALE, bound], the valid scale range.
pub fn decode_scale(log_scale: f64, bound: f64) -> f64 {
    log_scale.exp().clamp(MIN_SCALE, bound)
}

/// Log-scale a fresh cloud of `count` splats starts from; pruned splats are
/// respawned at the same value.
pub(crate) fn init_log_scale(count: usize, bound: f64) -> f64 {
    (1.2 * bound / (count as f64).cbrt())
        .max(MIN_SCALE * 2.0)
        .ln()
}

/// Opacity logit for fresh and respawned splats (decodes to 0.1).
pub(crate) fn init_op_logit() -> f64 {
    (0.1f64 / 0.9).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatProjection {
    /// Continuous pixel coordinates of the center.
    pub x: f64,
    pub y: f64,
    /// Screen-space std in pixels: world scale * focal / depth.
    pub sigma_px: f64,
    /// Camera-space depth along the view axis.
    pub depth: f64,
    /// True when the splat sits at or behind the camera plane.
    pub cull: bool,
}

pub fn project_splat(cam: &Camera, center: Vec3, scale: f64) -> SplatProjection {
    let (x, y, depth) = cam.project(center);
    if depth <= MIN_DEPTH {
        return SplatProjection {
            x: 0.0,
            y: 0.0,
            sigma_px: 0.0,
            depth,
            cull: true,
        };
    }
    SplatProjection {
        x,
        y,
        sigma_px: scale * cam.focal_px() / depth,
        depth,
        cull: false,
    }
}

/// One surviving splat after projection and decoding, rasterizer-ready.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Gaussian2d<T> {
    pub x: f64,
    pub y: f64,
    pub sigma_px: f64,
    pub depth: f64,
    pub color: [T; 3],
    pub opacity: T,
    /// Index into the SplatSet.
    pub idx: u32,
}

/// Projects, decodes, and depth-sorts the survivors (unmasked, in front of
/// the camera). Sort key (depth, index) makes the order total.
pub(crate) fn prepare<T: Real>(
    splats: &SplatSet<T>,
    bound: f64,
    cam: &Camera,
    mask: Option<&Mask>,
) -> Vec<Gaussian2d<T>> {
    if let Some(m) = mask {
        assert_eq!(
            m.units(),
            splats.count(),
            "mask covers {} units, splat set has {}",
            m.units(),
            splats.count()
        );
    }
    let mut out = Vec::with_capacity(splats.count());
    for i in 0..splats.count() {
        if mask.is_some_and(|m| m.dropped[i]) {
            continue;
        }
        let scale = decode_scale(splats.log_scale[i].to_f64().unwrap(), bound);
        let proj = project_splat(cam, splats.world_pos(i), scale);
        if proj.cull {
            continue;
        }
        out.push(Gaussian2d {
            x: proj.x,
            y: proj.y,
            sigma_px: proj.sigma_px,
            depth: proj.depth,
            color: [
                sigmoid(splats.color_logit[(i, 0)]),
                sigmoid(splats.color_logit[(i, 1)]),
                sigmoid(splats.color_logit[(i, 2)]),
            ],
            opacity: sigmoid(splats.op_logit[i]),
            idx: i as u32,
        });
    }
    out.sort_unstable_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap()
            .then(a.idx.cmp(&b.idx))
    });
    out
}

/// Bins sorted splats into TILE x TILE pixel tiles by footprint bounding box.
/// Entries are positions into the sorted list, so each tile's list stays in
/// front-to-back order.
pub(crate) fn bin_tiles<T>(gs: &[Gaussian2d<T>], h: usize, w: usize) -> (usize, Vec<Vec<u32>>) {
    let tx = w.div_ceil(TILE);
    let ty = h.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tx * ty];
    for (pos, g) in gs.iter().enumerate() {
        let r = CUTOFF_SIGMAS * g.sigma_px;
        let (x0, x1) = (g.x - r, g.x + r);
        let (y0, y1) = (g.y - r, g.y + r);
        if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
            continue;
        }
        let tx0 = (x0.max(0.0) as usize) / TILE;
        let tx1 = ((x1.min(w as f64 - 1.0)) as usize) / TILE;
        let ty0 = (y0.max(0.0) as usize) / TILE;
        let ty1 = ((y1.min(h as f64 - 1.0)) as usize) / TILE;
        for t_y in ty0..=ty1 {
            for t_x in tx0..=tx1 {
                tiles[t_y * tx + t_x].push(pos as u32);
            }
        }
    }
    (tx, tiles)
}

/// Gaussian footprint weight at a pixel center, or None outside the cutoff.
#[inline]
pub(crate) fn footprint(g_x: f64, g_y: f64, sigma_px: f64, px: usize, py: usize) -> Option<f64> {
    let dx = g_x - (px as f64 + 0.5);
    let dy = g_y - (py as f64 + 0.5);
    let d2 = dx * dx + dy * dy;
    let r = CUTOFF_SIGMAS * sigma_px;
    if d2 > r * r {
        return None;
    }
    Some((-d2 / (2.0 * sigma_px * sigma_px)).exp())
}

/// One accepted compositing contribution at a pixel: index into the prepared
/// list, footprint weight, alpha, and transmittance in front of this splat.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Contribution<T> {
    pub pos: u32,
    pub gw: f64,
    pub alpha: T,
    pub trans_before: T,
}

/// Composites one pixel, invoking `on_contrib` for every accepted splat in
/// front-to-back order. The single definition of the compositing loop; the
/// rasterizer and the training backward both run through here, so the
/// backward sees exactly the contributions the forward used (same cutoff,
/// same early exit).
#[inline]
pub(crate) fn composite_pixel<T: Real>(
    gs: &[Gaussian2d<T>],
    tile: &[u32],
    px: usize,
    py: usize,
    background: [T; 3],
    mut on_contrib: impl FnMut(Contribution<T>),
) -> [T; 3] {
    let stop = c::<T>(STOP_TRANSMITTANCE);
    let mut trans = T::one();
    let mut acc = [T::zero(); 3];
    for &pos in tile {
        let g = &gs[pos as usize];
        let Some(gw) = footprint(g.x, g.y, g.sigma_px, px, py) else {
            continue;
        };
        let alpha = g.opacity * c::<T>(gw);
        on_contrib(Contribution {
            pos,
            gw,
            alpha,
            trans_before: trans,
        });
        let wgt = trans * alpha;
        acc[0] += wgt * g.color[0];
        acc[1] += wgt * g.color[1];
        acc[2] += wgt * g.color[2];
        trans *= T::one() - alpha;
        if trans < stop {
            break;
        }
    }
    [
        acc[0] + trans * background[0],
        acc[1] + trans * background[1],
        acc[2] + trans * background[2],
    ]
}

/// Full-view rasterization at parameter precision; pixels row-major rgb.
pub(crate) fn rasterize<T: Real>(
    splats: &SplatSet<T>,
    bound: f64,
    cam: &Camera,
    background: [T; 3],
    mask: Option<&Mask>,
) -> Vec<T> {
    let (h, w) = (cam.height as usize, cam.width as usize);
    let gs = prepare(splats, bound, cam, mask);
    let (tx, tiles) = bin_tiles(&gs, h, w);

    let mut data = vec![T::zero(); h * w * 3];
    data.par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(py, row)| {
            for px in 0..w {
                let tile = &tiles[(py / TILE) * tx + px / TILE];
                let rgb = composite_pixel(&gs, tile, px, py, background, |_| {});
                for ch in 0..3 {
                    row[px * 3 + ch] = rgb[ch];
                }
            }
        });
    data
}

pub fn render_view_splats(
    splats: &SplatSet<f32>,
    bound: f64,
    cam: &Camera,
    background: [f32; 3],
    mask: Option<&Mask>,
) -> Image {
    let data = rasterize(splats, bound, cam, background, mask);
    bump_render_count();
    Image {
        h: cam.height as usize,
        w: cam.width as usize,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam9() -> Camera {
        Camera::look_at(v3(0.0, -4.0, 0.0), v3(0.0, 0.0, 0.0), 50.0, 9, 9)
    }

    /// One splat per row of `spec`: (position, scale, color logits, op logit).
    fn build(spec: &[(Vec3, f64, [f64; 3], f64)]) -> SplatSet<f64> {
        let n = spec.len();
        let mut s = SplatSet::<f64>::new(n, 1.5, 0);
        for (i, (p, scale, cl, op)) in spec.iter().enumerate() {
            s.pos[(i, 0)] = p.x;
            s.pos[(i, 1)] = p.y;
            s.pos[(i, 2)] = p.z;
            s.log_scale[i] = scale.ln();
            for (ch, &v) in cl.iter().enumerate() {
                s.color_logit[(i, ch)] = v;
            }
            s.op_logit[i] = *op;
        }
        s
    }

    #[test]
    fn projection_formula_and_cull_flag() {
        let cam = cam9();
        // At the camera target: depth = |pos - target| = 4.
        let p = project_splat(&cam, v3(0.0, 0.0, 0.0), 0.5);
        assert!(!p.cull);
        assert!((p.depth - 4.0).abs() < 1e-12);
        assert!((p.sigma_px - 0.5 * cam.focal_px() / 4.0).abs() < 1e-12);
        assert!((p.x - 4.5).abs() < 1e-12 && (p.y - 4.5).abs() < 1e-12);
        // Behind the camera.
        assert!(project_splat(&cam, v3(0.0, -5.0, 0.0), 0.5).cull);
    }

    #[test]
    fn off_axis_center_matches_pinhole_oracle() {
        let cam = cam9();
        let p = v3(0.3, -0.5, 0.2);
        let got = project_splat(&cam, p, 0.1);
        // Independent pinhole arithmetic from the camera basis.
        let (right, up, fwd) = cam.basis();
        let q = p - cam.pos;
        let depth = q.dot(fwd);
        let f = cam.focal_px();
        let ex = f * q.dot(right) / depth + 4.5;
        let ey = -f * q.dot(up) / depth + 4.5;
        assert!((got.x - ex).abs() < 1e-12);
        assert!((got.y - ey).abs() < 1e-12);
        assert!((got.depth - depth).abs() < 1e-12);
    }

    #[test]
    fn full_mask_renders_uniform_background() {
        let splats = SplatSet::<f32>::new(16, 1.5, 3);
        let mask = Mask {
            dropped: vec![true; 16],
            n_dropped: 16,
        };
        let bg = [0.3f32, 0.5, 0.7];
        let img = render_view_splats(&splats, 1.5, &cam9(), bg, Some(&mask));
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(img.px(y, x), bg);
            }
        }
    }

    #[test]
    fn near_opaque_splat_dominates_its_center_pixel() {
        // Image center (4.5, 4.5) is the center of pixel (4, 4), distance 0:
        // alpha = sigmoid(12) so the white background leaks ~6e-6.
        let s = build(&[(v3(0.0, 0.0, 0.0), 0.5, [40.0, -40.0, -40.0], 12.0)]);
        let img = rasterize(&s, 1.5, &cam9(), [1.0, 1.0, 1.0], None);
        let px = &img[(4 * 9 + 4) * 3..(4 * 9 + 4) * 3 + 3];
        assert!((px[0] - 1.0).abs() < 1e-3);
        assert!(px[1] < 1e-3 && px[2] < 1e-3);
    }

    #[test]
    fn two_splat_composite_matches_hand_formula() {
        // Both splats centered on the middle pixel's ray. Near (depth 2) red
        // at opacity 0.75, far (depth 4) blue at opacity 0.5, gray background:
        // C = 0.75 R + 0.25*0.5 B + 0.25*0.5 bg.
        let red = (v3(0.0, -2.0, 0.0), 0.2, [40.0, -40.0, -40.0], (3.0f64).ln());
        let blue = (v3(0.0, 0.0, 0.0), 0.2, [-40.0, -40.0, 40.0], 0.0);
        let bg = [0.2, 0.2, 0.2];
        let want = [0.75 + 0.125 * 0.2, 0.125 * 0.2, 0.125 + 0.125 * 0.2];
        // Parameter-list order must not matter: depth sorting decides.
        for order in [[red, blue], [blue, red]] {
            let s = build(&order);
            let img = rasterize(&s, 1.5, &cam9(), bg, None);
            let px = &img[(4 * 9 + 4) * 3..(4 * 9 + 4) * 3 + 3];
            for ch in 0..3 {
                assert!(
                    (px[ch] - want[ch]).abs() < 1e-6,
                    "ch {ch}: {} vs {}",
                    px[ch],
                    want[ch]
                );
            }
        }
    }

    #[test]
    fn nearer_opaque_splat_occludes_regardless_of_list_order() {
        let near_red = (v3(0.0, -2.0, 0.0), 0.3, [40.0, -40.0, -40.0], 30.0);
        let far_blue = (v3(0.0, 0.0, 0.0), 0.3, [-40.0, -40.0, 40.0], 30.0);
        for order in [[near_red, far_blue], [far_blue, near_red]] {
            let s = build(&order);
            let img = rasterize(&s, 1.5, &cam9(), [1.0; 3], None);
            let px = &img[(4 * 9 + 4) * 3..(4 * 9 + 4) * 3 + 3];
            assert!((px[0] - 1.0).abs() < 1e-3 && px[2] < 1e-3);
        }
    }

    #[test]
    fn ratio_zero_mask_is_bitwise_identity() {
        let splats = SplatSet::<f32>::new(64, 1.5, 7);
        let cam = cam9();
        let plain = render_view_splats(&splats, 1.5, &cam, [1.0; 3], None);
        let masked = render_view_splats(&splats, 1.5, &cam, [1.0; 3], Some(&Mask::none(64)));
        assert_eq!(plain.data, masked.data);
    }

    #[test]
    fn masked_splats_contribute_nothing() {
        // Dropping the far splat must leave exactly the near one's composite.
        let near_red = (v3(0.0, -2.0, 0.0), 0.2, [40.0, -40.0, -40.0], 0.0);
        let far_blue = (v3(0.0, 0.0, 0.0), 0.2, [-40.0, -40.0, 40.0], 0.0);
        let s = build(&[near_red, far_blue]);
        let only_near = build(&[near_red]);
        let mask = Mask {
            dropped: vec![false, true],
            n_dropped: 1,
        };
        let a = rasterize(&s, 1.5, &cam9(), [0.0; 3], Some(&mask));
        let b = rasterize(&only_near, 1.5, &cam9(), [0.0; 3], None);
        assert_eq!(a, b);
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let splats = SplatSet::<f32>::new(256, 1.5, 11);
        let img = render_view_splats(&splats, 1.5, &cam9(), [1.0; 3], None);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn render_is_worker_count_invariant() {
        let splats = SplatSet::<f32>::new(512, 1.5, 13);
        let cam = Camera::look_at(v3(1.0, -3.5, 1.2), v3(0.0, 0.0, 0.0), 50.0, 32, 32);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| render_view_splats(&splats, 1.5, &cam, [0.1, 0.2, 0.3], None))
        };
        assert_eq!(run(1).data, run(3).data);
    }

    #[test]
    fn init_is_seed_deterministic_and_in_bounds() {
        let a = SplatSet::<f32>::new(128, 1.5, 5);
        let b = SplatSet::<f32>::new(128, 1.5, 5);
        let c = SplatSet::<f32>::new(128, 1.5, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.pos.iter().all(|v| v.abs() <= 0.6 * 1.5));
        let scale = decode_scale(a.log_scale[0] as f64, 1.5);
        assert!(scale > MIN_SCALE && scale <= 1.5);
        // Colors are randomized, not a constant fill.
        assert!(a.color_logit.iter().any(|&v| v != a.color_logit[(0, 0)]));
        assert!(a.color_logit.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn tile_binning_covers_footprints() {
        // A splat spanning several tiles must appear in every tile its
        // 3-sigma box touches, in sorted order.
        let s = build(&[(v3(0.0, 0.0, 0.0), 0.8, [0.0; 3], 0.0)]);
        let cam = Camera::look_at(v3(0.0, -4.0, 0.0), v3(0.0, 0.0, 0.0), 50.0, 32, 32);
        let gs = prepare(&s, 1.5, &cam, None);
        let (tx, tiles) = bin_tiles(&gs, 32, 32);
        assert_eq!(tx, 4);
        let r = CUTOFF_SIGMAS * gs[0].sigma_px;
        for ty in 0..4 {
            for t_x in 0..4 {
                let tile_box_touches = {
                    let (x0, x1) = ((t_x * TILE) as f64, ((t_x + 1) * TILE) as f64);
                    let (y0, y1) = ((ty * TILE) as f64, ((ty + 1) * TILE) as f64);
                    gs[0].x + r >= x0 && gs[0].x - r < x1 && gs[0].y + r >= y0 && gs[0].y - r < y1
                };
                let binned = !tiles[ty * tx + t_x].is_empty();
                assert_eq!(binned, tile_box_touches, "tile ({ty}, {t_x})");
            }
        }
    }
}
