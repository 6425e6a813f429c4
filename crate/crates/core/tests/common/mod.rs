//! Shared oracles for the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod gradients;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texmesh::field::{AppearanceField, FieldConfig};
use texmesh::math::{Rgb, Vec3};
use texmesh::meshops::{decimate, midpoint_subdivide, remesh_region, AuditReport, TriMesh};
use texmesh::refine::{refine_topology, FaceErrorAccumulator, Stage2Config};
use texmesh::scene::CameraModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_field_config() -> FieldConfig {
    FieldConfig {
        levels: 4,
        base_res: 2,
        max_res: 12,
        geo_hidden: 8,
        app_hidden: 16,
        spec_hidden: 8,
    }
}

/// Appearance field with grid values large enough to matter.
pub fn random_appearance(seed: u64) -> AppearanceField {
    let mut rng = rng(seed);
    let mut f = AppearanceField::new(&tiny_field_config(), 1.5, &mut rng).unwrap();
    f.grid
        .values
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.5..0.5));
    f
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
        rng.gen_range(-half..half),
    )
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = random_point(rng, 1.0);
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn front_camera(res: u32) -> CameraModel {
    CameraModel::look_at(
        Vec3::new(0.4, 0.3, 2.8),
        Vec3::zeros(),
        Vec3::y(),
        res,
        res,
        0.7,
    )
    .unwrap()
}

/// Icosphere with a deterministic radial wobble.
pub fn bumpy_sphere() -> TriMesh {
    let mut m = texmesh::meshops::icosphere(2);
    for (i, v) in m.vertices.iter_mut().enumerate() {
        *v *= 0.8 + 0.05 * ((i * 7919) % 13) as f64 / 13.0;
    }
    m
}

/// Fixed pseudo-random per-pixel weights for a linear image loss.
pub fn pixel_weights(n: usize, seed: u64) -> Vec<Rgb> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect()
}

pub fn weighted_sum(img: &[Rgb], w: &[Rgb]) -> f64 {
    img.iter()
        .zip(w)
        .map(|(c, w)| (0..3).map(|k| c[k] * w[k]).sum::<f64>())
        .sum()
}

/// `‖a − b‖ / ‖b‖` over whole vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Brute-force per-channel MSE with explicit loops.
pub fn brute_mse(a: &[Rgb], b: &[Rgb]) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        for k in 0..3 {
            se += (a[i][k] - b[i][k]) * (a[i][k] - b[i][k]);
            n += 1;
        }
    }
    se / n as f64
}

pub fn psnr_db(mse: f64) -> f64 {
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

pub fn verdict(name: &str, ok: bool, detail: impl std::fmt::Display) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Area-weighted uniform samples on the effective surface of a mesh.
pub fn sample_mesh(mesh: &TriMesh, n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = rng(seed);
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.gen_range(0.0..acc);
            let f = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            let [a, b, c] = mesh.corners(f);
            let (mut s, mut t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            if s + t > 1.0 {
                (s, t) = (1.0 - s, 1.0 - t);
            }
            a + (b - a) * s + (c - a) * t
        })
        .collect()
}

pub fn unit_sphere_points(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = rng(seed);
    (0..n).map(|_| random_unit(&mut rng)).collect()
}

/// Jittered icosphere with a random radius and center.
pub fn random_sphere(rng: &mut impl Rng) -> TriMesh {
    let mut m = texmesh::meshops::icosphere(rng.gen_range(2..=3));
    let r = rng.gen_range(0.3..1.5);
    let c = random_point(rng, 0.5);
    for v in m.vertices.iter_mut() {
        *v = c + *v * r * rng.gen_range(0.97..1.03);
    }
    m
}

/// Applies `rounds` rounds of subdivide, decimate and remesh with random
/// parameters, auditing after every operation.
pub fn topology_fuzz(seed: u64, rounds: usize) -> Vec<(&'static str, AuditReport)> {
    let mut rng = rng(seed);
    let mut mesh = random_sphere(&mut rng);
    let mut log = Vec::new();
    for _ in 0..rounds {
        let n = mesh.faces.len();
        let pick: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.2)).collect();
        let edge = mesh.mean_edge_length();
        mesh = midpoint_subdivide(&mesh, &pick, edge * rng.gen_range(0.0..0.8)).mesh;
        log.push(("subdivide", mesh.audit()));

        let target = (mesh.faces.len() as f64 * rng.gen_range(0.4..0.9)) as usize;
        mesh = decimate(&mesh, target.max(8)).mesh;
        log.push(("decimate", mesh.audit()));

        let center = mesh.face_centroid(rng.gen_range(0..mesh.faces.len()));
        let radius = rng.gen_range(0.2..0.8) * mesh.bbox().diagonal();
        let region: Vec<usize> = (0..mesh.faces.len())
            .filter(|&f| (mesh.face_centroid(f) - center).norm() < radius)
            .collect();
        let target_edge = mesh.mean_edge_length() * rng.gen_range(0.6..2.0);
        mesh = remesh_region(&mesh, &region, target_edge).mesh;
        log.push(("remesh", mesh.audit()));
    }
    log
}

/// Cameras on a Fibonacci sphere of radius 3 looking at the origin.
pub fn surrounding_cameras(n: usize, res: u32) -> Vec<CameraModel> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let eye = Vec3::new(r * phi.cos(), y, r * phi.sin()) * 3.0;
            let up = if y.abs() > 0.9 { Vec3::x() } else { Vec3::y() };
            CameraModel::look_at(eye, Vec3::zeros(), up, res, res, 0.8).unwrap()
        })
        .collect()
}

/// Nearest-rank oracle: the value at 1-based rank ⌈p/100 · n⌉ of the sorted list.
pub fn sorted_rank(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let mut rank = 1;
    while (rank as f64) < p / 100.0 * n as f64 {
        rank += 1;
    }
    v[rank - 1]
}

pub struct HotFaceOutcome {
    pub subdivided: usize,
    /// All four midpoint children of the hot face are in the output.
    pub children_present: bool,
    pub faces_out: usize,
    /// Face count when only the hot face is subdivided.
    pub faces_subdivided_only: usize,
    pub offsets_zero: bool,
    pub audit_ok: bool,
}

/// One refinement round on a sphere with a single high-error face, a band of
/// observed low-error faces and unobserved faces elsewhere.
pub fn hot_face_example() -> HotFaceOutcome {
    let mut mesh = texmesh::meshops::icosphere(2);
    let mut r = rng(5);
    for d in mesh.offsets.iter_mut() {
        *d = random_point(&mut r, 1e-3);
    }
    let nf = mesh.faces.len();
    let hot = nf - 1;
    let mut acc = FaceErrorAccumulator::new(nf);
    for f in 0..20 {
        acc.count[f] = 4;
    }
    for f in 20..40 {
        acc.sum[f] = 0.4;
        acc.count[f] = 4;
    }
    acc.sum[hot] = 10.0;
    acc.count[hot] = 10;
    let cfg = Stage2Config {
        target_edge_rel: 0.2,
        ..Default::default()
    };
    let (out, report) = refine_topology(&mesh, &acc, &cfg, None).unwrap();

    let mut base = mesh.clone();
    base.apply_offsets();
    let [a, b, c] = base.corners(hot);
    let m = [(a + b) / 2.0, (b + c) / 2.0, (c + a) / 2.0];
    let has_face = |corners: [Vec3; 3]| {
        out.faces.iter().any(|f| {
            let p = f.map(|i| out.vertices[i as usize]);
            corners
                .iter()
                .all(|q| p.iter().any(|x| (x - q).norm() < 1e-12))
        })
    };
    let children_present = [m, [a, m[0], m[2]], [b, m[1], m[0]], [c, m[2], m[1]]]
        .into_iter()
        .all(has_face);
    let only = midpoint_subdivide(&base, &[hot], cfg.min_edge_rel * base.bbox().diagonal()).mesh;
    HotFaceOutcome {
        subdivided: report.subdivided,
        children_present,
        faces_out: out.faces.len(),
        faces_subdivided_only: only.faces.len(),
        offsets_zero: out.offsets.iter().all(|d| *d == Vec3::zeros()),
        audit_ok: out.audit().is_ok(),
    }
}

/// Front-to-back accumulation written out independently of the library.
pub fn oracle_composite(sigmas: &[f64], deltas: &[f64], colors: &[Rgb], bg: &Rgb) -> Rgb {
    let mut out = [0.0; 3];
    let mut trans = 1.0;
    let mut acc = 0.0;
    for i in 0..sigmas.len() {
        let a = 1.0 - (-sigmas[i] * deltas[i]).exp();
        let w = trans * a;
        for k in 0..3 {
            out[k] += w * colors[i][k];
        }
        acc += w;
        trans *= 1.0 - a;
    }
    for k in 0..3 {
        out[k] += (1.0 - acc) * bg[k];
    }
    out
}

pub fn random_ray_inputs(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>, Vec<Rgb>, Rgb) {
    let n = rng.gen_range(0..=64);
    let sig = (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..50.0)
            }
        })
        .collect();
    let del = (0..n).map(|_| rng.gen_range(0.001..0.2)).collect();
    let col = (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .collect();
    let bg = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    (sig, del, col, bg)
}
