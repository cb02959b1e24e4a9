//! Analytic ground-truth renderer: exact ray/primitive intersection with
//! single-bounce Lambertian shading, no shadows.

use super::math::{v3, Vec3};
use super::{Camera, SceneKind, SceneSpec};
use crate::img::{quantize_u16, Image};
use crate::rng::{self, mix, tag};
use rand::Rng;
use rayon::prelude::*;

pub const AMBIENT: f64 = 0.2;
const T_MIN: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum Prim {
    Sphere {
        center: Vec3,
        radius: f64,
        albedo: [f64; 3],
    },
    /// Horizontal disk at height z, centered on the world axis.
    Disk {
        z: f64,
        radius: f64,
        albedo: [f64; 3],
    },
    /// Axis-aligned cube at the origin with a per-face checker texture.
    Cube {
        half: f64,
        checks: u32,
        albedo: [[f64; 3]; 2],
    },
}

/// Deterministic geometry for a spec. `spheres` places object_count spheres
/// resting on a ground disk; `checker-cube` is a single textured cube.
/// object_count == 0 yields an empty scene for either kind.
pub fn build_geometry(spec: &SceneSpec) -> Vec<Prim> {
    if spec.object_count == 0 {
        return Vec::new();
    }
    let rb = spec.bounding_radius;
    match spec.kind {
        SceneKind::Spheres => {
            let mut prims = vec![Prim::Disk {
                z: 0.0,
                radius: rb,
                albedo: [0.72, 0.72, 0.75],
            }];
            let mut rng = rng::stream(&[mix(&[spec.seed, tag("geometry")])]);
            for _ in 0..spec.object_count {
                let radius = rb * (0.12 + 0.10 * rng.gen::<f64>());
                let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                let z = radius;
                let reach = (0.98 * rb - radius).max(radius);
                let rho_max = (reach * reach - z * z).max(0.0).sqrt();
                let rho = rho_max * rng.gen::<f64>().sqrt();
                let center = v3(rho * phi.cos(), rho * phi.sin(), z);
                let albedo = hsv_to_rgb(rng.gen::<f64>(), 0.8, 0.95);
                prims.push(Prim::Sphere {
                    center,
                    radius,
                    albedo,
                });
            }
            prims
        }
        SceneKind::CheckerCube => vec![Prim::Cube {
            half: 0.55 * rb,
            checks: 4,
            albedo: [[0.92, 0.25, 0.18], [0.95, 0.95, 0.92]],
        }],
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).clamp(0.0, 6.0 - 1e-12);
    let i = h6 as u32;
    let f = h6 - i as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

struct Hit {
    t: f64,
    normal: Vec3,
    albedo: [f64; 3],
}

fn hit_sphere(center: Vec3, radius: f64, o: Vec3, d: Vec3) -> Option<f64> {
    let oc = o - center;
    let b = oc.dot(d);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    if t0 > T_MIN {
        return Some(t0);
    }
    let t1 = -b + sq;
    if t1 > T_MIN {
        return Some(t1);
    }
    None
}

fn intersect(prim: &Prim, o: Vec3, d: Vec3) -> Option<Hit> {
    match *prim {
        Prim::Sphere {
            center,
            radius,
            albedo,
        } => hit_sphere(center, radius, o, d).map(|t| Hit {
            t,
            normal: ((o + d * t) - center).normalized(),
            albedo,
        }),
        Prim::Disk { z, radius, albedo } => {
            if d.z.abs() < 1e-12 {
                return None;
            }
            let t = (z - o.z) / d.z;
            if t <= T_MIN {
                return None;
            }
            let p = o + d * t;
            if p.x * p.x + p.y * p.y > radius * radius {
                return None;
            }
            Some(Hit {
                t,
                normal: v3(0.0, 0.0, 1.0),
                albedo,
            })
        }
        Prim::Cube {
            half,
            checks,
            albedo,
        } => {
            // Slab test, tracking which axis bounds the entry point.
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut axis = 0usize;
            let o_a = [o.x, o.y, o.z];
            let d_a = [d.x, d.y, d.z];
            for a in 0..3 {
                if d_a[a].abs() < 1e-15 {
                    if o_a[a].abs() > half {
                        return None;
                    }
                    continue;
                }
                let inv = 1.0 / d_a[a];
                let (mut t0, mut t1) = ((-half - o_a[a]) * inv, (half - o_a[a]) * inv);
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > t_near {
                    t_near = t0;
                    axis = a;
                }
                t_far = t_far.min(t1);
                if t_near > t_far {
                    return None;
                }
            }
            if t_near <= T_MIN {
                return None;
            }
            let p = o + d * t_near;
            let p_a = [p.x, p.y, p.z];
            let mut n = [0.0; 3];
            n[axis] = p_a[axis].signum();
            let (u_axis, v_axis) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let to_unit = |w: f64| ((w + half) / (2.0 * half)).clamp(0.0, 1.0 - 1e-12);
            let (u, v) = (to_unit(p_a[u_axis]), to_unit(p_a[v_axis]));
            let k = checks as f64;
            let tile = ((u * k) as u32 + (v * k) as u32) % 2;
            Some(Hit {
                t: t_near,
                normal: v3(n[0], n[1], n[2]),
                albedo: albedo[tile as usize],
            })
        }
    }
}

/// Shaded color for one ray, in [0, 1]^3 (f64, unquantized).
pub fn trace_ray(spec: &SceneSpec, geom: &[Prim], o: Vec3, d: Vec3) -> [f64; 3] {
    let mut best: Option<Hit> = None;
    for prim in geom {
        if let Some(h) = intersect(prim, o, d) {
            if best.as_ref().is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        }
    }
    match best {
        None => [
            spec.background[0] as f64,
            spec.background[1] as f64,
            spec.background[2] as f64,
        ],
        Some(h) => {
            let lambert = h.normal.dot(spec.light()).max(0.0);
            let shade = AMBIENT + lambert * (1.0 - AMBIENT);
            [
                h.albedo[0] * shade,
                h.albedo[1] * shade,
                h.albedo[2] * shade,
            ]
        }
    }
}

/// Ray-traced ground truth for one camera. Output values are snapped to the
/// 16-bit grid so that PNG round trips are lossless.
pub fn render_ground_truth(spec: &SceneSpec, geom: &[Prim], cam: &Camera) -> Image {
    let (h, w) = (cam.height as usize, cam.width as usize);
    let mut img = Image::new(h, w);
    img.data
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let (o, d) = cam.ray_for_pixel(x, y);
                let rgb = trace_ray(spec, geom, o, d);
                for c in 0..3 {
                    row[x * 3 + c] = quantize_u16(rgb[c] as f32) as f32 / 65535.0;
                }
            }
        });
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::math::v3;

    fn empty_spec() -> SceneSpec {
        let mut s = SceneSpec::new(SceneKind::Spheres, 3);
        s.object_count = 0;
        s
    }

    #[test]
    fn empty_scene_renders_background() {
        let mut spec = empty_spec();
        spec.background = [1.0, 0.0, 1.0];
        let geom = build_geometry(&spec);
        let cam = Camera::look_at(v3(0.0, -4.0, 1.0), v3(0.0, 0.0, 0.0), 50.0, 8, 8);
        let img = render_ground_truth(&spec, &geom, &cam);
        assert_eq!(img, Image::filled(8, 8, [1.0, 0.0, 1.0]));
    }

    #[test]
    fn head_on_sphere_center_pixel_is_full_albedo() {
        // Light along -view direction: the sphere point facing the camera has
        // n.l = 1, so shading is ambient + (1 - ambient) = 1.
        let mut spec = empty_spec();
        spec.light_dir = [0.0, 0.0, 1.0];
        let geom = vec![Prim::Sphere {
            center: v3(0.0, 0.0, 0.0),
            radius: 0.8,
            albedo: [1.0, 0.0, 0.0],
        }];
        let cam = Camera::look_at(v3(0.0, 0.0, 4.0), v3(0.0, 0.0, 0.0), 50.0, 65, 65);
        let img = render_ground_truth(&spec, &geom, &cam);
        assert_eq!(img.px(32, 32), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_pixels_lie_in_unit_range() {
        for seed in [0u64, 5, 9] {
            for kind in [SceneKind::Spheres, SceneKind::CheckerCube] {
                let spec = SceneSpec::new(kind, seed);
                let geom = build_geometry(&spec);
                let cam = Camera::look_at(v3(2.5, -2.5, 1.4), v3(0.0, 0.0, 0.0), 50.0, 24, 24);
                let img = render_ground_truth(&spec, &geom, &cam);
                assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn sphere_geometry_stays_inside_bounds() {
        for seed in 0..30u64 {
            let spec = SceneSpec::new(SceneKind::Spheres, seed);
            for prim in build_geometry(&spec) {
                if let Prim::Sphere { center, radius, .. } = prim {
                    assert!(center.norm() + radius <= spec.bounding_radius * 0.98 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn checker_cube_has_two_face_colors() {
        let spec = SceneSpec::new(SceneKind::CheckerCube, 1);
        let geom = build_geometry(&spec);
        let cam = Camera::look_at(v3(0.0, -4.0, 0.0), v3(0.0, 0.0, 0.0), 50.0, 64, 64);
        let img = render_ground_truth(&spec, &geom, &cam);
        let center_colors: std::collections::BTreeSet<[u16; 3]> = (16..48)
            .flat_map(|y| (16..48).map(move |x| (y, x)))
            .map(|(y, x)| {
                let p = img.px(y, x);
                [quantize_u16(p[0]), quantize_u16(p[1]), quantize_u16(p[2])]
            })
            .collect();
        assert!(center_colors.len() >= 2, "expected checker tiles to differ");
    }

    #[test]
    fn cube_misses_outside_slabs() {
        let spec = SceneSpec::new(SceneKind::CheckerCube, 1);
        let geom = build_geometry(&spec);
        let rgb = trace_ray(&spec, &geom, v3(0.0, -4.0, 3.0), v3(0.0, 1.0, 0.0));
        assert_eq!(rgb, [1.0, 1.0, 1.0]);
    }
}
