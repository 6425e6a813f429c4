//! Analytic scenes with exact ground truth, rendered by sphere tracing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::{Mat3, Ray, Rgb, Vec3};
use crate::par;
use crate::scene::camera::CameraModel;
use crate::scene::dataset::{quantize_channel, Dataset, PosedImage, Split};
use crate::surface::RaySurface;

/// Signed-distance primitive. All variants are exact (1-Lipschitz) distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    /// Torus in the xy-plane around the z axis.
    Torus {
        major: f64,
        minor: f64,
    },
    /// Union of axis-aligned boxes `(center, half_extent)`.
    BoxUnion {
        boxes: Vec<([f64; 3], [f64; 3])>,
    },
}

fn box_sdf(p: &Vec3, c: &[f64; 3], h: &[f64; 3]) -> f64 {
    let q = Vec3::new(
        (p.x - c[0]).abs() - h[0],
        (p.y - c[1]).abs() - h[1],
        (p.z - c[2]).abs() - h[2],
    );
    let outside = q.sup(&Vec3::zeros()).norm();
    outside + q.x.max(q.y).max(q.z).min(0.0)
}

impl Shape {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Torus { major, minor } => {
                let qx = (p.x * p.x + p.y * p.y).sqrt() - major;
                (qx * qx + p.z * p.z).sqrt() - minor
            }
            Shape::BoxUnion { boxes } => boxes
                .iter()
                .map(|(c, h)| box_sdf(p, c, h))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn normal(&self, p: &Vec3) -> Vec3 {
        match self {
            Shape::Sphere { .. } => p.normalize(),
            _ => {
                let e = 1e-6;
                let g = Vec3::new(
                    self.sdf(&(p + Vec3::x() * e)) - self.sdf(&(p - Vec3::x() * e)),
                    self.sdf(&(p + Vec3::y() * e)) - self.sdf(&(p - Vec3::y() * e)),
                    self.sdf(&(p + Vec3::z() * e)) - self.sdf(&(p - Vec3::z() * e)),
                );
                g.normalize()
            }
        }
    }

    /// Area-uniform samples on the surface.
    pub fn sample_surface(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(n);
        let gauss3 = |rng: &mut dyn rand::RngCore| {
            let mut v;
            loop {
                v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let l = v.norm_squared();
                if l > 1e-6 && l <= 1.0 {
                    break;
                }
            }
            v.normalize()
        };
        match self {
            Shape::Sphere { radius } => {
                while out.len() < n {
                    out.push(gauss3(rng) * *radius);
                }
            }
            Shape::Torus { major, minor } => {
                while out.len() < n {
                    let u = rng.gen_range(0.0..std::f64::consts::TAU);
                    let v = rng.gen_range(0.0..std::f64::consts::TAU);
                    let w = (major + minor * v.cos()) / (major + minor);
                    if rng.gen::<f64>() <= w {
                        let rr = major + minor * v.cos();
                        out.push(Vec3::new(rr * u.cos(), rr * u.sin(), minor * v.sin()));
                    }
                }
            }
            Shape::BoxUnion { boxes } => {
                let areas: Vec<[f64; 3]> = boxes
                    .iter()
                    .map(|(_, h)| [4.0 * h[1] * h[2], 4.0 * h[0] * h[2], 4.0 * h[0] * h[1]])
                    .collect();
                let total: f64 = areas.iter().map(|a| 2.0 * (a[0] + a[1] + a[2])).sum();
                while out.len() < n {
                    let mut pick = rng.gen::<f64>() * total;
                    'outer: for (bi, (c, h)) in boxes.iter().enumerate() {
                        for axis in 0..3 {
                            for side in [-1.0, 1.0] {
                                let a = areas[bi][axis];
                                if pick < a {
                                    let mut p = Vec3::new(
                                        c[0] + rng.gen_range(-h[0]..h[0]),
                                        c[1] + rng.gen_range(-h[1]..h[1]),
                                        c[2] + rng.gen_range(-h[2]..h[2]),
                                    );
                                    p[axis] = c[axis] + side * h[axis];
                                    if self.sdf(&p).abs() < 1e-9 {
                                        out.push(p);
                                    }
                                    break 'outer;
                                }
                                pick -= a;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Procedural surface color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Albedo {
    Constant {
        rgb: Rgb,
    },
    /// Smooth per-channel sinusoidal bands.
    Bands {
        frequency: f64,
    },
}

impl Albedo {
    pub fn at(&self, p: &Vec3) -> Rgb {
        match self {
            Albedo::Constant { rgb } => *rgb,
            Albedo::Bands { frequency: f } => [
                0.55 + 0.35 * (f * p.x + 0.3).sin(),
                0.55 + 0.35 * (f * p.y + 1.3).sin(),
                0.55 + 0.35 * (f * p.z + 2.3).sin(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    pub shape: Shape,
    pub albedo: Albedo,
    /// Strength of the view-dependent highlight, in `[0, 1]`.
    pub gloss: f64,
}

const LIGHT_DIR: [f64; 3] = [0.4, 0.45, 0.8];
const AMBIENT: f64 = 0.35;
const SHININESS: f64 = 24.0;

impl SyntheticScene {
    pub fn sphere(radius: f64) -> Self {
        Self {
            shape: Shape::Sphere { radius },
            albedo: Albedo::Bands { frequency: 3.0 },
            gloss: 0.3,
        }
    }

    /// Radiance leaving surface point `p` towards a viewer along `-view_dir`.
    pub fn shade_point(&self, p: &Vec3, view_dir: &Vec3) -> Rgb {
        let n = self.shape.normal(p);
        let l = Vec3::from(LIGHT_DIR).normalize();
        let diffuse = AMBIENT + (1.0 - AMBIENT) * n.dot(&l).max(0.0);
        let alb = self.albedo.at(p);
        let h = (l - view_dir).normalize();
        let spec = self.gloss * n.dot(&h).max(0.0).powf(SHININESS);
        [
            (alb[0] * diffuse + spec).clamp(0.0, 1.0),
            (alb[1] * diffuse + spec).clamp(0.0, 1.0),
            (alb[2] * diffuse + spec).clamp(0.0, 1.0),
        ]
    }

    /// Color seen along `ray`, or `None` when it misses.
    pub fn radiance(&self, ray: &Ray) -> Option<Rgb> {
        let oracle = SurfaceOracle {
            shape: self.shape.clone(),
        };
        oracle
            .first_hit(ray)
            .map(|t| self.shade_point(&ray.at(t), &ray.dir))
    }
}

/// Exact geometry of a synthetic scene: signed distance, ray hits, surface samples.
#[derive(Debug, Clone)]
pub struct SurfaceOracle {
    pub shape: Shape,
}

impl SurfaceOracle {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.shape.sdf(p)
    }

    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.shape.sample_surface(n, &mut rng)
    }
}

impl RaySurface for SurfaceOracle {
    fn first_hit(&self, ray: &Ray) -> Option<f64> {
        if let Shape::Sphere { radius } = self.shape {
            let b = ray.origin.dot(&ray.dir);
            let c = ray.origin.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            let t0 = -b - s;
            let t1 = -b + s;
            return if t0 > 0.0 {
                Some(t0)
            } else if t1 > 0.0 {
                Some(t1)
            } else {
                None
            };
        }
        sphere_trace(&self.shape, ray, 100.0)
    }
}

fn sphere_trace(shape: &Shape, ray: &Ray, t_max: f64) -> Option<f64> {
    let mut t = 0.0;
    for _ in 0..4096 {
        let d = shape.sdf(&ray.at(t));
        if d < 1e-9 {
            return Some(t);
        }
        t += d;
        if t > t_max {
            return None;
        }
    }
    // glancing rays converge slowly; accept if already very close
    (shape.sdf(&ray.at(t)) < 1e-5).then_some(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_views: usize,
    pub n_test_views: usize,
    pub resolution: u32,
    pub camera_radius: f64,
    pub fov_x: f64,
    pub background: Rgb,
    pub scene_bound: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_views: 20,
            n_test_views: 5,
            resolution: 64,
            camera_radius: 2.6,
            fov_x: 0.6911112070083618,
            background: [1.0, 1.0, 1.0],
            scene_bound: 1.0,
        }
    }
}

/// `n` roughly uniform directions (Fibonacci lattice) under a random rotation.
fn fibonacci_directions(n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    let axis = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let rot: Mat3 = nalgebra::Rotation3::new(axis.normalize() * angle).into_inner();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            rot * Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn snap(c: Rgb) -> Rgb {
    c.map(|v| quantize_channel(v) as f64 / 255.0)
}

/// Renders one image of the scene. Colors are snapped to the 8-bit lattice so
/// the in-memory dataset equals what a PNG round trip produces.
pub fn render_scene(scene: &SyntheticScene, camera: &CameraModel, background: Rgb) -> Vec<Rgb> {
    let bg = snap(background);
    let w = camera.width;
    par::map_range(camera.pixel_count(), |i| {
        let ray = camera.ray(i as u32 % w, i as u32 / w, (0.0, 0.0));
        scene.radiance(&ray).map(snap).unwrap_or(bg)
    })
}

/// Cameras on a sphere looking at the origin, images rendered analytically.
pub fn generate_synthetic_dataset(
    scene: &SyntheticScene,
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<(Dataset, SurfaceOracle)> {
    assert!(cfg.n_views >= 1, "need at least one view");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut splits = Vec::new();
    let bg = snap(cfg.background);
    for (split, count) in [(Split::Train, cfg.n_views), (Split::Test, cfg.n_test_views)] {
        if count == 0 {
            continue;
        }
        for dir in fibonacci_directions(count, &mut rng) {
            let camera = CameraModel::look_at(
                dir * cfg.camera_radius,
                Vec3::zeros(),
                Vec3::z(),
                cfg.resolution,
                cfg.resolution,
                cfg.fov_x,
            )?;
            let pixels = render_scene(scene, &camera, bg);
            images.push(PosedImage {
                camera,
                pixels,
                background: bg,
            });
            splits.push(split);
        }
    }
    let ds = Dataset {
        images,
        splits,
        scene_bound: cfg.scene_bound,
        fov_x: cfg.fov_x,
    };
    ds.validate()?;
    Ok((
        ds,
        SurfaceOracle {
            shape: scene.shape.clone(),
        },
    ))
}
