mod common;

use texmesh::bake::{
    bake_asset, unwrap_uv, BakeConfig, BakedAsset, BakedRegion, TextureImage, UnwrapParams,
};
use texmesh::field::Mlp;
use texmesh::math::{Rgb, Vec3};
use texmesh::meshops::TriMesh;
use texmesh::rasterdiff::{rasterize, shade};
use texmesh::refrender::render_baked;
use texmesh::scene::CameraModel;

use common::{brute_mse, bumpy_sphere, front_camera, psnr_db, random_appearance, rng};

fn flat_texture(res: usize, c: Rgb) -> TextureImage {
    let mut t = TextureImage::new(res, res);
    t.texels.fill(c);
    t.mask.fill(true);
    t
}

/// One region with constant textures and the given specular network.
fn constant_asset(mesh: TriMesh, diffuse: Rgb, features: Rgb, mlp2: Mlp) -> BakedAsset {
    let atlas = unwrap_uv(
        &mesh,
        &UnwrapParams {
            resolution: 64,
            ..Default::default()
        },
    )
    .unwrap();
    BakedAsset {
        regions: vec![BakedRegion {
            k: 0,
            mesh,
            uvs: atlas.uvs,
            diffuse: flat_texture(64, diffuse),
            specular: flat_texture(64, features),
        }],
        mlp2,
    }
}

fn silent_mlp2() -> Mlp {
    let mut m = Mlp::zeros(random_appearance(0).mlp2.dims()).unwrap();
    let last = m.layers() - 1;
    m.biases_mut(last).fill(-20.0);
    m
}

#[test]
fn silenced_specular_leaves_an_exact_silhouette() {
    let mesh = bumpy_sphere();
    let cam = front_camera(48);
    let color = [0.2, 0.6, 0.4];
    let bg = [1.0, 1.0, 1.0];
    let img = render_baked(
        &constant_asset(mesh.clone(), color, [0.5; 3], silent_mlp2()),
        &cam,
        &bg,
    )
    .unwrap();
    let fb = rasterize(&mesh, &cam).unwrap();
    let mut covered = 0;
    for (px, f) in img.iter().zip(&fb.pixels) {
        match f {
            Some(_) => {
                covered += 1;
                // sigmoid(-20) is the only residue of the specular term
                assert!((0..3).all(|k| (px[k] - color[k]).abs() < 3e-9), "{px:?}");
            }
            None => assert_eq!(*px, bg),
        }
    }
    assert!(covered > 200);
}

fn pixel_of(cam: &CameraModel, p: &Vec3) -> usize {
    let (u, v, _) = cam.project(p).unwrap();
    v.floor() as usize * cam.width as usize + u.floor() as usize
}

#[test]
fn specular_term_depends_on_view_direction() {
    let mut mlp2 = random_appearance(3).mlp2;
    mlp2.params.iter_mut().for_each(|p| *p *= 4.0);
    let asset = constant_asset(
        texmesh::meshops::icosphere(3),
        [0.1; 3],
        [0.7, 0.2, 0.5],
        mlp2,
    );
    let target = Vec3::new(0.0, 0.0, 1.0);
    let eye_a = Vec3::new(0.0, 0.0, 3.0);
    let eye_b = Vec3::new(2.0, 0.5, 2.5);
    let cams =
        [eye_a, eye_b].map(|e| CameraModel::look_at(e, target, Vec3::y(), 64, 64, 0.6).unwrap());
    let imgs: Vec<Vec<Rgb>> = cams
        .iter()
        .map(|c| render_baked(&asset, c, &[0.0; 3]).unwrap())
        .collect();
    let p = texmesh::meshops::icosphere(3)
        .vertices
        .iter()
        .copied()
        .max_by(|a, b| a.z.total_cmp(&b.z))
        .unwrap();
    let (a, b) = (
        imgs[0][pixel_of(&cams[0], &p)],
        imgs[1][pixel_of(&cams[1], &p)],
    );
    let diff = (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max);
    assert!(diff > 1.0 / 255.0, "{a:?} vs {b:?}");
}

#[test]
fn face_order_does_not_change_the_image() {
    let app = random_appearance(4);
    let cfg = BakeConfig {
        resolution: 128,
        min_resolution: 32,
        ..Default::default()
    };
    let asset = bake_asset(&[(0, bumpy_sphere())], &app, &cfg).unwrap();
    let mut shuffled = asset.clone();
    let r = &mut shuffled.regions[0];
    let n = r.mesh.faces.len();
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng(5));
    r.mesh.faces = order
        .iter()
        .map(|&f| asset.regions[0].mesh.faces[f])
        .collect();
    r.uvs = order.iter().map(|&f| asset.regions[0].uvs[f]).collect();
    for cam in common::surrounding_cameras(4, 40) {
        let a = render_baked(&asset, &cam, &[0.3; 3]).unwrap();
        let b = render_baked(&shuffled, &cam, &[0.3; 3]).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn eight_bit_render_tracks_neural_shading() {
    let app = random_appearance(6);
    let mesh = bumpy_sphere();
    let cfg = BakeConfig {
        resolution: 256,
        min_resolution: 64,
        ..Default::default()
    };
    let asset = bake_asset(&[(0, mesh.clone())], &app, &cfg)
        .unwrap()
        .quantized();
    let bg = [1.0; 3];
    for cam in common::surrounding_cameras(3, 64) {
        let baked = render_baked(&asset, &cam, &bg).unwrap();
        let neural = shade(&rasterize(&mesh, &cam).unwrap(), &app, &cam, &bg, false);
        let db = psnr_db(brute_mse(&baked, &neural));
        assert!(db >= 30.0, "{db} dB");
    }
}
