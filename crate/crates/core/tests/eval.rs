mod common;

use std::fs;

use proptest::prelude::*;
use rand::Rng;
use texmesh::bake::{bake_asset, export_asset, BakeConfig};
use texmesh::eval::{chamfer, chamfer_points, mesh_stats, psnr};
use texmesh::math::{Rgb, Vec3};
use texmesh::meshops::TriMesh;
use texmesh::scene::{Shape, SurfaceOracle};
use texmesh::Error;

use common::{brute_mse, psnr_db, random_point, rng};

/// Halved sum of the two directed means of squared nearest distances, by exhaustive search.
fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let directed = |from: &[Vec3], to: &[Vec3]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(a, b) + directed(b, a))
}

fn cloud(r: &mut impl Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| random_point(r, 1.0)).collect()
}

#[test]
fn kd_tree_chamfer_matches_exhaustive_search() {
    let mut r = rng(1);
    for n in [1, 7, 300, 2000] {
        let (a, b) = (cloud(&mut r, n), cloud(&mut r, n / 2 + 1));
        let fast = chamfer_points(&a, &b).unwrap();
        let slow = brute_chamfer(&a, &b);
        assert!(
            (fast - slow).abs() <= 1e-12 * slow.max(1e-300),
            "{fast} vs {slow}"
        );
    }
}

#[test]
fn concentric_spheres_one_percent_apart() {
    let unit = SurfaceOracle {
        shape: Shape::Sphere { radius: 1.0 },
    };
    let outer = SurfaceOracle {
        shape: Shape::Sphere { radius: 1.01 },
    };
    let cams = common::surrounding_cameras(20, 200);
    let cd = chamfer(&unit, &outer, &cams, 400_000).unwrap();
    assert!((cd - 1e-4).abs() <= 0.2e-4, "CD {cd}");
    let back = chamfer(&outer, &unit, &cams, 400_000).unwrap();
    assert!((cd - back).abs() <= 1e-15);
}

#[test]
fn surface_missed_by_every_ray_is_an_error() {
    let far = SurfaceOracle {
        shape: Shape::Sphere { radius: 0.001 },
    };
    let unit = SurfaceOracle {
        shape: Shape::Sphere { radius: 1.0 },
    };
    let cams = vec![common::front_camera(4)];
    assert!(matches!(
        chamfer(&far, &unit, &cams, 100),
        Err(Error::NoSamples(_))
    ));
    assert!(matches!(
        chamfer_points(&[], &[Vec3::zeros()]),
        Err(Error::NoSamples(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_is_symmetric_translation_invariant_and_quadratic_in_scale(
        seed in any::<u64>(),
        shift in prop::array::uniform3(-5.0f64..5.0),
        s in 0.1f64..10.0,
    ) {
        let mut r = rng(seed);
        let (a, b) = (cloud(&mut r, 200), cloud(&mut r, 150));
        let cd = chamfer_points(&a, &b).unwrap();
        prop_assert_eq!(cd, chamfer_points(&b, &a).unwrap());
        let t = Vec3::from(shift);
        let moved = |v: &[Vec3]| v.iter().map(|p| p + t).collect::<Vec<_>>();
        prop_assert!((chamfer_points(&moved(&a), &moved(&b)).unwrap() - cd).abs() < 1e-9);
        let scaled = |v: &[Vec3]| v.iter().map(|p| p * s).collect::<Vec<_>>();
        let cs = chamfer_points(&scaled(&a), &scaled(&b)).unwrap();
        prop_assert!((cs - cd * s * s).abs() <= 1e-6 * cd * s * s);
        prop_assert_eq!(chamfer_points(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn psnr_matches_double_loop_mse(seed in any::<u64>(), n in 1usize..500) {
        let mut r = rng(seed);
        let img = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<Rgb> {
            (0..n).map(|_| std::array::from_fn(|_| r.gen_range(0.0..1.0))).collect()
        };
        let (a, b) = (img(&mut r), img(&mut r));
        prop_assert!((psnr(&a, &b, 1.0).unwrap() - psnr_db(brute_mse(&a, &b))).abs() <= 1e-9);
    }
}

#[test]
fn psnr_examples() {
    let a = vec![[0.5; 3]; 10];
    let b = vec![[0.6; 3]; 10];
    assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
    assert!(matches!(psnr(&a, &b[..3], 1.0), Err(Error::Shape(_))));
}

#[test]
fn stats_of_empty_and_single_triangle_assets() {
    let dir = tempfile::tempdir().unwrap();
    let s = mesh_stats(dir.path()).unwrap();
    assert_eq!((s.vertices, s.faces, s.total_bytes()), (0, 0, 0));

    let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    fs::write(dir.path().join("tri.obj"), text).unwrap();
    fs::write(dir.path().join("notes.toml"), "x = 1\n").unwrap();
    let s = mesh_stats(dir.path()).unwrap();
    assert_eq!((s.vertices, s.faces), (3, 1));
    assert_eq!(s.bytes.get("mesh"), Some(&(text.len() as u64)));
    assert_eq!(s.total_bytes(), text.len() as u64);
}

#[test]
fn stats_agree_with_the_exported_asset() {
    let dir = tempfile::tempdir().unwrap();
    let mut outer: TriMesh = common::bumpy_sphere();
    outer.vertices.iter_mut().for_each(|v| *v *= 1.7);
    let cfg = BakeConfig {
        resolution: 64,
        min_resolution: 32,
        ..Default::default()
    };
    let asset = bake_asset(
        &[(0, common::bumpy_sphere()), (1, outer)],
        &common::random_appearance(2),
        &cfg,
    )
    .unwrap();
    let manifest = export_asset(&asset, dir.path()).unwrap();
    let s = mesh_stats(dir.path()).unwrap();
    let (v, f) = asset.regions.iter().fold((0, 0), |(v, f), r| {
        (v + r.mesh.vertices.len(), f + r.mesh.faces.len())
    });
    assert_eq!((s.vertices, s.faces), (v, f));
    let on_disk: u64 = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().metadata().unwrap().len())
        .sum();
    assert_eq!(s.total_bytes(), on_disk);
    assert_eq!(
        manifest.files.len() + 1,
        fs::read_dir(dir.path()).unwrap().count()
    );
}
