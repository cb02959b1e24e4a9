//! Procedural analytic scenes: ground-truth ray tracing, camera sampling,
//! dataset construction and disk round trip.

mod dataset;
pub mod math;
mod trace;

pub use dataset::{load_dataset, save_dataset};
pub use trace::{build_geometry, render_ground_truth, trace_ray, Prim, AMBIENT};

use crate::img::ImageIoError;
use crate::rng::{self, mix, tag};
use math::{v3, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset image: {0}")]
    Image(#[from] ImageIoError),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    #[serde(rename = "spheres")]
    Spheres,
    #[serde(rename = "checker-cube")]
    CheckerCube,
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneKind::Spheres => write!(f, "spheres"),
            SceneKind::CheckerCube => write!(f, "checker-cube"),
        }
    }
}

impl std::str::FromStr for SceneKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spheres" => Ok(SceneKind::Spheres),
            "checker-cube" => Ok(SceneKind::CheckerCube),
            other => Err(format!("unknown scene kind '{other}'")),
        }
    }
}

/// Full description of a procedural scene. Geometry is a pure function of
/// this struct; equal specs trace identical images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Number of spheres for `spheres` scenes; 0 means an empty scene for
    /// either kind. Ignored (beyond the 0 check) by `checker-cube`.
    pub object_count: u32,
    pub bounding_radius: f64,
    pub background: [f32; 3],
    /// Unit vector pointing from surfaces toward the light.
    pub light_dir: [f64; 3],
    pub seed: u64,
}

impl SceneSpec {
    /// Defaults: sphere count drawn from the seed in 3..=8, bounding radius
    /// 1.5, white background, a fixed oblique light.
    pub fn new(kind: SceneKind, seed: u64) -> SceneSpec {
        let object_count = match kind {
            SceneKind::Spheres => 3 + (mix(&[seed, tag("object-count")]) % 6) as u32,
            SceneKind::CheckerCube => 1,
        };
        let light = v3(0.35, 0.25, 0.9).normalized();
        SceneSpec {
            kind,
            object_count,
            bounding_radius: 1.5,
            background: [1.0, 1.0, 1.0],
            light_dir: [light.x, light.y, light.z],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.object_count > 16 {
            return Err(SceneError::InvalidSpec(format!(
                "object_count {} exceeds 16",
                self.object_count
            )));
        }
        if !(self.bounding_radius.is_finite() && self.bounding_radius > 0.0) {
            return Err(SceneError::InvalidSpec(
                "bounding_radius must be positive".into(),
            ));
        }
        let l = Vec3::from(self.light_dir);
        if !(l.norm().is_finite() && l.norm() > 1e-9) {
            return Err(SceneError::InvalidSpec("light_dir must be nonzero".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SceneError::InvalidSpec("background outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn light(&self) -> Vec3 {
        Vec3::from(self.light_dir).normalized()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub pos: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera at `pos` looking at `target`, world-z up (falls back to world-y
    /// when the view direction is within ~1e-6 of vertical).
    pub fn look_at(pos: Vec3, target: Vec3, fov_deg: f64, width: u32, height: u32) -> Camera {
        let fwd = (target - pos).normalized();
        let up = if fwd.z.abs() > 1.0 - 1e-6 {
            v3(0.0, 1.0, 0.0)
        } else {
            v3(0.0, 0.0, 1.0)
        };
        Camera {
            pos,
            target,
            up,
            fov_deg,
            width,
            height,
        }
    }

    /// Orthonormal (right, up, forward).
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (self.target - self.pos).normalized();
        let right = fwd.cross(self.up).normalized();
        let up = right.cross(fwd);
        (right, up, fwd)
    }

    pub fn focal_px(&self) -> f64 {
        self.height as f64 / (2.0 * (self.fov_deg.to_radians() / 2.0).tan())
    }

    /// Ray through the center of pixel (x, y); y indexes rows from the top.
    pub fn ray_for_pixel(&self, x: usize, y: usize) -> (Vec3, Vec3) {
        let (right, up, fwd) = self.basis();
        let f = self.focal_px();
        let dx = (x as f64 + 0.5 - self.width as f64 / 2.0) / f;
        let dy = (y as f64 + 0.5 - self.height as f64 / 2.0) / f;
        let dir = (right * dx + up * (-dy) + fwd).normalized();
        (self.pos, dir)
    }

    /// Projects a world point to continuous pixel coordinates plus camera
    /// depth. A point on the ray of pixel (x, y) lands at (x+0.5, y+0.5).
    /// Depth <= 0 means the point is behind the camera.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let (right, up, fwd) = self.basis();
        let q = p - self.pos;
        let depth = q.dot(fwd);
        let f = self.focal_px();
        let x_px = f * q.dot(right) / depth + self.width as f64 / 2.0;
        let y_px = -f * q.dot(up) / depth + self.height as f64 / 2.0;
        (x_px, y_px, depth)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: crate::img::Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub spec: SceneSpec,
    pub resolution: (u32, u32),
    pub fov_deg: f64,
    pub orbit_radius: f64,
    pub train: Vec<View>,
    pub test: Vec<View>,
}

/// Samples distinct camera positions uniformly on the upper hemisphere
/// (z >= 0) of the given radius, all looking at the origin. For a fixed key
/// the first n cameras of a longer sample equal the n-camera sample, which is
/// what makes nested train splits possible.
pub fn sample_cameras(
    count: usize,
    orbit_radius: f64,
    fov_deg: f64,
    resolution: (u32, u32),
    key: u64,
) -> Vec<Camera> {
    let mut rng = rng::stream(&[key]);
    let mut cams: Vec<Camera> = Vec::with_capacity(count);
    let mut taken: Vec<Vec3> = Vec::with_capacity(count);
    while cams.len() < count {
        let pos = draw_hemisphere(&mut rng, orbit_radius, &taken);
        taken.push(pos);
        cams.push(Camera::look_at(
            pos,
            v3(0.0, 0.0, 0.0),
            fov_deg,
            resolution.1,
            resolution.0,
        ));
    }
    cams
}

fn draw_hemisphere(rng: &mut impl rand::Rng, radius: f64, avoid: &[Vec3]) -> Vec3 {
    loop {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let cos_t = u;
        let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
        let phi = 2.0 * std::f64::consts::PI * v;
        let pos = v3(sin_t * phi.cos(), sin_t * phi.sin(), cos_t) * radius;
        if avoid.iter().all(|a| (*a - pos).norm() > 1e-9 * radius) {
            return pos;
        }
    }
}

pub const DEFAULT_FOV_DEG: f64 = 50.0;
pub const DEFAULT_RESOLUTION: u32 = 64;
pub const DEFAULT_TEST_VIEWS: usize = 32;

/// Orbit radius used for dataset cameras, a fixed multiple of the scene size.
pub fn default_orbit_radius(bounding_radius: f64) -> f64 {
    bounding_radius * 8.0 / 3.0
}

/// Renders a full train/test dataset. Train cameras come from one seeded
/// stream (prefix-stable in n_train), test cameras from an independent one;
/// test positions that collide with a train position are redrawn.
pub fn make_dataset(
    spec: &SceneSpec,
    n_train: usize,
    n_test: usize,
    resolution: (u32, u32),
    fov_deg: f64,
    orbit_radius: f64,
) -> Result<SceneDataset, SceneError> {
    spec.validate()?;
    let train_cams = sample_cameras(
        n_train,
        orbit_radius,
        fov_deg,
        resolution,
        mix(&[spec.seed, tag("train-cams")]),
    );
    let test_cams = {
        let mut rng = rng::stream(&[mix(&[spec.seed, tag("test-cams")])]);
        let mut taken: Vec<Vec3> = train_cams.iter().map(|c| c.pos).collect();
        let mut cams = Vec::with_capacity(n_test);
        while cams.len() < n_test {
            let pos = draw_hemisphere(&mut rng, orbit_radius, &taken);
            taken.push(pos);
            cams.push(Camera::look_at(
                pos,
                v3(0.0, 0.0, 0.0),
                fov_deg,
                resolution.1,
                resolution.0,
            ));
        }
        cams
    };
    let geom = build_geometry(spec);
    let render = |cams: Vec<Camera>| -> Vec<View> {
        cams.into_iter()
            .map(|camera| {
                let image = render_ground_truth(spec, &geom, &camera);
                View { camera, image }
            })
            .collect()
    };
    Ok(SceneDataset {
        spec: spec.clone(),
        resolution,
        fov_deg,
        orbit_radius,
        train: render(train_cams),
        test: render(test_cams),
    })
}
