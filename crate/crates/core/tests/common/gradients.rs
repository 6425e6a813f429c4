//! Central finite-difference checks for every differentiable operation.
//!
//! Each check draws random probes (a random input plus one random parameter or
//! input coordinate), compares the analytic derivative with a central
//! difference at step `STEP`, and reports `‖analytic − numeric‖ / ‖numeric‖`
//! over all probes. A probe whose central differences at `STEP` and `STEP / 2`
//! disagree has a kink (ReLU, trilinear cell face, clamp) inside the step and
//! is redrawn.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use texmesh::field::{AppEval, FeatureGrid, GeoEval, GeometryField, GridConfig, SpecEval};
use texmesh::math::{Rgb, Vec3};
use texmesh::meshops::{icosphere, laplacian_loss, offset_loss, TriMesh};
use texmesh::rasterdiff::{
    backward, rasterize, shade, shade_cached, FragmentBuffer, MIN_VIEW_COSINE,
};
use texmesh::volrender::composite::render_ray_backward;
use texmesh::volrender::{loss_entropy, loss_render, loss_specular, render_ray};

use super::*;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
pub const MIN_PROBES: usize = 100;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: &'static str,
    pub probes: usize,
    pub redrawn: usize,
    pub rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.probes >= MIN_PROBES && self.rel_err < TOLERANCE
    }
}

impl std::fmt::Display for GradCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: rel err {:.2e} over {} probes ({} redrawn)",
            self.name, self.rel_err, self.probes, self.redrawn
        )
    }
}

/// Central difference of `f` around 0, or `None` when the step straddles a kink.
pub fn central(mut f: impl FnMut(f64) -> f64, h: f64) -> Option<f64> {
    let coarse = (f(h) - f(-h)) / (2.0 * h);
    let fine = (f(h / 2.0) - f(-h / 2.0)) / h;
    let scale = coarse.abs().max(fine.abs()).max(1e-6);
    ((coarse - fine).abs() <= 1e-4 * scale).then_some(fine)
}

/// Runs `probe` until `wanted` probes succeed; `probe` returns
/// `(analytic, numeric)` or `None` to redraw.
pub fn run(
    name: &'static str,
    wanted: usize,
    rng: &mut ChaCha8Rng,
    mut probe: impl FnMut(&mut ChaCha8Rng) -> Option<(f64, f64)>,
) -> GradCheck {
    let (mut ana, mut num) = (Vec::new(), Vec::new());
    let mut redrawn = 0;
    while ana.len() < wanted && redrawn < 20 * wanted {
        match probe(rng) {
            Some((a, n)) => {
                ana.push(a);
                num.push(n);
            }
            None => redrawn += 1,
        }
    }
    GradCheck {
        name,
        probes: ana.len(),
        redrawn,
        rel_err: rel_err(&ana, &num),
    }
}

fn pick_nonzero(rng: &mut ChaCha8Rng, g: &[f64]) -> Option<usize> {
    let nz: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    (!nz.is_empty()).then(|| nz[rng.gen_range(0..nz.len())])
}

fn signed(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(0.5..1.5);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

pub fn density(wanted: usize, seed: u64) -> GradCheck {
    let mut rng = rng(seed);
    let mut geo = GeometryField::new(&tiny_field_config(), 1.5, &mut rng).unwrap();
    geo.grid
        .values
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.5..0.5));
    run("density", wanted, &mut rng.clone(), |rng| {
        let x = random_point(rng, 1.4);
        let w = signed(rng);
        let mut ev = GeoEval::default();
        geo.forward(&x, &mut ev);
        let mut mlp_g = vec![0.0; geo.mlp.params.len()];
        let mut dfeat = vec![0.0; geo.grid.output_dim()];
        geo.backward(&ev, w, &mut mlp_g, &mut dfeat, &mut Vec::new());
        let mut grid_g = vec![0.0; geo.grid.values.len()];
        geo.grid.accumulate(&x, &dfeat, &mut grid_g);
        let on_grid = rng.gen_bool(0.5);
        let (i, a) = if on_grid {
            let i = pick_nonzero(rng, &grid_g)?;
            (i, grid_g[i])
        } else {
            let i = rng.gen_range(0..mlp_g.len());
            (i, mlp_g[i])
        };
        let mut g = geo.clone();
        let n = central(
            |d| {
                let p = if on_grid {
                    &mut g.grid.values[i]
                } else {
                    &mut g.mlp.params[i]
                };
                let orig = *p;
                *p = orig + d;
                let v = w * g.density(&x);
                let p = if on_grid {
                    &mut g.grid.values[i]
                } else {
                    &mut g.mlp.params[i]
                };
                *p = orig;
                v
            },
            STEP,
        )?;
        Some((a, n))
    })
}

pub fn appearance(wanted: usize, seed: u64) -> GradCheck {
    let app = random_appearance(seed);
    let mut rng = rng(seed ^ 0xa99);
    run("appearance", wanted, &mut rng, |rng| {
        let x = random_point(rng, 1.4);
        let w_cd: Rgb = std::array::from_fn(|_| signed(rng));
        let w_fs: [f64; 3] = std::array::from_fn(|_| signed(rng));
        let mut ev = AppEval::default();
        app.forward_appearance(&x, &mut ev);
        let mut mlp_g = vec![0.0; app.mlp1.params.len()];
        let mut dfeat = vec![0.0; app.grid.output_dim()];
        app.backward_appearance(&ev, &w_cd, &w_fs, &mut mlp_g, &mut dfeat, &mut Vec::new());
        let mut grid_g = vec![0.0; app.grid.values.len()];
        app.grid.accumulate(&x, &dfeat, &mut grid_g);
        let on_grid = rng.gen_bool(0.5);
        let (i, a) = if on_grid {
            let i = pick_nonzero(rng, &grid_g)?;
            (i, grid_g[i])
        } else {
            let i = rng.gen_range(0..mlp_g.len());
            (i, mlp_g[i])
        };
        let mut f = app.clone();
        let n = central(
            |d| {
                let p = if on_grid {
                    &mut f.grid.values[i]
                } else {
                    &mut f.mlp1.params[i]
                };
                let orig = *p;
                *p = orig + d;
                let (cd, fs) = f.appearance(&x);
                let p = if on_grid {
                    &mut f.grid.values[i]
                } else {
                    &mut f.mlp1.params[i]
                };
                *p = orig;
                (0..3).map(|k| w_cd[k] * cd[k] + w_fs[k] * fs[k]).sum()
            },
            STEP,
        )?;
        Some((a, n))
    })
}

pub fn specular(wanted: usize, seed: u64) -> GradCheck {
    let mut app = random_appearance(seed);
    let mut rng = rng(seed ^ 0x5bec);
    app.mlp2.params.iter_mut().for_each(|p| *p *= 2.0);
    run("specular", wanted, &mut rng, |rng| {
        let fs: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.05..0.95));
        let dir = random_unit(rng);
        let w: Rgb = std::array::from_fn(|_| signed(rng));
        let mut ev = SpecEval::default();
        app.forward_specular(&fs, &dir, &mut ev);
        let mut mlp_g = vec![0.0; app.mlp2.params.len()];
        let d_fs = app.backward_specular(&ev, &w, &mut mlp_g, None, &mut Vec::new());
        let loss = |f: &texmesh::field::AppearanceField, fs: &[f64; 3]| -> f64 {
            let cs = f.specular(fs, &dir);
            (0..3).map(|k| w[k] * cs[k]).sum()
        };
        if rng.gen_bool(0.25) {
            let k = rng.gen_range(0..3);
            let n = central(
                |d| {
                    let mut p = fs;
                    p[k] += d;
                    loss(&app, &p)
                },
                STEP,
            )?;
            Some((d_fs[k], n))
        } else {
            let i = rng.gen_range(0..mlp_g.len());
            let mut f = app.clone();
            let orig = f.mlp2.params[i];
            let n = central(
                |d| {
                    f.mlp2.params[i] = orig + d;
                    loss(&f, &fs)
                },
                STEP,
            )?;
            Some((mlp_g[i], n))
        }
    })
}

fn random_rgbs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rgb> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .collect()
}

pub fn render_loss(wanted: usize, seed: u64) -> GradCheck {
    run("loss_render", wanted, &mut rng(seed), |rng| {
        let n = rng.gen_range(1..16);
        let (pred, target) = (random_rgbs(rng, n), random_rgbs(rng, n));
        let (_, g) = loss_render(&pred, &target);
        let (r, k) = (rng.gen_range(0..n), rng.gen_range(0..3));
        let num = central(
            |d| {
                let mut p = pred.clone();
                p[r][k] += d;
                loss_render(&p, &target).0
            },
            STEP,
        )?;
        Some((g[r][k], num))
    })
}

pub fn specular_loss(wanted: usize, seed: u64) -> GradCheck {
    run("loss_specular", wanted, &mut rng(seed), |rng| {
        let n = rng.gen_range(1..16);
        let cs = random_rgbs(rng, n);
        let (_, g) = loss_specular(&cs);
        let (r, k) = (rng.gen_range(0..n), rng.gen_range(0..3));
        let num = central(
            |d| {
                let mut c = cs.clone();
                c[r][k] += d;
                loss_specular(&c).0
            },
            STEP,
        )?;
        Some((g[r][k], num))
    })
}

pub fn entropy_loss(wanted: usize, seed: u64) -> GradCheck {
    run("loss_entropy", wanted, &mut rng(seed), |rng| {
        let n = rng.gen_range(1..32);
        let alphas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
        let (_, g) = loss_entropy(&alphas);
        let i = rng.gen_range(0..n);
        let num = central(
            |d| {
                let mut a = alphas.clone();
                a[i] += d;
                loss_entropy(&a).0
            },
            STEP,
        )?;
        Some((g[i], num))
    })
}

pub fn tv_loss(wanted: usize, seed: u64) -> GradCheck {
    let mut rng = rng(seed);
    let cfg = GridConfig {
        levels: 3,
        base_res: 2,
        max_res: 8,
        channels: 1,
    };
    let mut grid = FeatureGrid::zeros(cfg, 1.0).unwrap();
    grid.values
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let mut g = vec![0.0; grid.values.len()];
    grid.total_variation(1.0, Some(&mut g));
    run("loss_tv", wanted, &mut rng, |rng| {
        let i = rng.gen_range(0..grid.values.len());
        let mut gr = grid.clone();
        let num = central(
            |d| {
                gr.values[i] = grid.values[i] + d;
                gr.total_variation(1.0, None)
            },
            STEP,
        )?;
        Some((g[i], num))
    })
}

pub fn quadrature(wanted: usize, seed: u64) -> GradCheck {
    run("render_ray", wanted, &mut rng(seed), |rng| {
        let n = rng.gen_range(1..24);
        let sigmas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.5)).collect();
        let colors = random_rgbs(rng, n);
        let bg: Rgb = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let w: Rgb = std::array::from_fn(|_| signed(rng));
        let r = render_ray(&sigmas, &deltas, &colors, &bg);
        let mut d_sigma = vec![0.0; n];
        let mut d_colors = vec![[0.0; 3]; n];
        render_ray_backward(&deltas, &colors, &r, &bg, &w, &mut d_sigma, &mut d_colors);
        let loss = |s: &[f64], c: &[Rgb]| -> f64 {
            let col = render_ray(s, &deltas, c, &bg).color;
            (0..3).map(|k| w[k] * col[k]).sum()
        };
        let i = rng.gen_range(0..n);
        if rng.gen_bool(0.5) {
            let num = central(
                |d| {
                    let mut s = sigmas.clone();
                    s[i] += d;
                    loss(&s, &colors)
                },
                STEP,
            )?;
            Some((d_sigma[i], num))
        } else {
            let k = rng.gen_range(0..3);
            let num = central(
                |d| {
                    let mut c = colors.clone();
                    c[i][k] += d;
                    loss(&sigmas, &c)
                },
                STEP,
            )?;
            Some((d_colors[i][k], num))
        }
    })
}

fn wobbly_mesh(rng: &mut ChaCha8Rng) -> TriMesh {
    let mut m = icosphere(2);
    for o in &mut m.offsets {
        *o = random_point(rng, 0.05);
    }
    m
}

fn offset_probe(
    name: &'static str,
    wanted: usize,
    seed: u64,
    f: fn(&TriMesh) -> (f64, Vec<Vec3>),
) -> GradCheck {
    let mut rng = rng(seed);
    let mesh = wobbly_mesh(&mut rng);
    let (_, g) = f(&mesh);
    run(name, wanted, &mut rng, |rng| {
        let v = rng.gen_range(0..mesh.vertices.len());
        let a = rng.gen_range(0..3);
        let mut m = mesh.clone();
        let num = central(
            |d| {
                m.offsets[v][a] = mesh.offsets[v][a] + d;
                f(&m).0
            },
            STEP,
        )?;
        Some((g[v][a], num))
    })
}

pub fn laplacian(wanted: usize, seed: u64) -> GradCheck {
    offset_probe("laplacian_loss", wanted, seed, laplacian_loss)
}

pub fn offsets(wanted: usize, seed: u64) -> GradCheck {
    offset_probe("offset_loss", wanted, seed, offset_loss)
}

fn rerender(
    m: &TriMesh,
    app: &texmesh::field::AppearanceField,
    cam: &texmesh::scene::CameraModel,
) -> (FragmentBuffer, Vec<Rgb>) {
    let fb = rasterize(m, cam).unwrap();
    let img = shade(&fb, app, cam, &[1.0; 3], false);
    (fb, img)
}

fn face_of(fb: &FragmentBuffer, i: usize) -> Option<u32> {
    fb.pixels[i].map(|f| f.face)
}

/// Offset gradient of a linear image loss against central differences of a
/// full re-rasterization at step 1e-4. Pixels whose face changes under either
/// perturbation, grazing pixels (where the geometry term is dropped) and
/// pixels whose second difference exceeds 1e-7 are masked from both sides.
/// Returns the check and the masked fraction of covered pixel evaluations.
pub fn raster_offsets(seed: u64) -> (GradCheck, f64) {
    let mut m = bumpy_sphere();
    let cam = front_camera(32);
    let app = random_appearance(seed);
    let (fb, base) = rerender(&m, &app, &cam);
    let w = pixel_weights(fb.pixels.len(), seed + 1);
    let cache = shade_cached(&fb, &app, &cam, &[1.0; 3], false);
    let full = backward(&fb, &cache, &w, &m, &app).unwrap();

    let h = 1e-4;
    let (mut ana, mut num) = (Vec::new(), Vec::new());
    let mut masked = 0;
    let seen: Vec<usize> = (0..m.vertices.len())
        .filter(|&v| full.offsets[v].norm() > 0.0)
        .collect();
    for &v in &seen {
        for a in 0..3 {
            m.offsets[v][a] = h;
            let (fp, plus) = rerender(&m, &app, &cam);
            m.offsets[v][a] = -h;
            let (fm, minus) = rerender(&m, &app, &cam);
            m.offsets[v][a] = 0.0;
            let mut wm = w.clone();
            for i in 0..wm.len() {
                let moved =
                    face_of(&fp, i) != face_of(&fb, i) || face_of(&fm, i) != face_of(&fb, i);
                let grazing = fb.pixels[i].is_some_and(|f| {
                    let [a, b, c] = m.faces[f.face as usize].map(|k| m.vertices[k as usize]);
                    let n = (b - a).cross(&(c - a)).normalize();
                    n.dot(&(f.x - cam.origin()).normalize()).abs() < MIN_VIEW_COSINE
                });
                let kink =
                    (0..3).any(|k| (plus[i][k] - 2.0 * base[i][k] + minus[i][k]).abs() > 1e-7);
                if moved || grazing || kink {
                    wm[i] = [0.0; 3];
                    masked += 1;
                }
            }
            let g = backward(&fb, &cache, &wm, &m, &app).unwrap();
            ana.push(g.offsets[v][a]);
            num.push((weighted_sum(&plus, &wm) - weighted_sum(&minus, &wm)) / (2.0 * h));
        }
    }
    let considered = (fb.covered() * ana.len()).max(1);
    let check = GradCheck {
        name: "rasterdiff.backward offsets",
        probes: ana.len(),
        redrawn: 0,
        rel_err: rel_err(&ana, &num),
    };
    (check, masked as f64 / considered as f64)
}

/// Appearance-parameter gradients of the rasterized shading.
pub fn raster_appearance(seed: u64) -> GradCheck {
    let m = bumpy_sphere();
    let cam = front_camera(24);
    let mut app = random_appearance(seed);
    let fb = rasterize(&m, &cam).unwrap();
    let w = pixel_weights(fb.pixels.len(), seed + 1);
    let cache = shade_cached(&fb, &app, &cam, &[1.0; 3], false);
    let g = backward(&fb, &cache, &w, &m, &app).unwrap();
    let h = 1e-5;
    let (mut ana, mut num) = (Vec::new(), Vec::new());
    type Get = fn(&mut texmesh::field::AppearanceField) -> &mut Vec<f64>;
    let arrays: [(Get, &[f64]); 3] = [
        (|a| &mut a.mlp1.params, &g.app_mlp1),
        (|a| &mut a.mlp2.params, &g.app_mlp2),
        (|a| &mut a.grid.values, &g.app_grid),
    ];
    for (get, analytic) in arrays {
        let n = get(&mut app).len();
        let nonzero: Vec<usize> = (0..n).filter(|&i| analytic[i] != 0.0).collect();
        for &i in nonzero.iter().step_by((nonzero.len() / 50).max(1)) {
            let orig = get(&mut app)[i];
            get(&mut app)[i] = orig + h;
            let lp = weighted_sum(&shade(&fb, &app, &cam, &[1.0; 3], false), &w);
            get(&mut app)[i] = orig - h;
            let lm = weighted_sum(&shade(&fb, &app, &cam, &[1.0; 3], false), &w);
            get(&mut app)[i] = orig;
            ana.push(analytic[i]);
            num.push((lp - lm) / (2.0 * h));
        }
    }
    GradCheck {
        name: "rasterdiff.backward appearance",
        probes: ana.len(),
        redrawn: 0,
        rel_err: rel_err(&ana, &num),
    }
}

/// Every check at the acceptance probe count.
pub fn suite(seed: u64) -> Vec<GradCheck> {
    vec![
        density(MIN_PROBES, seed),
        appearance(MIN_PROBES, seed + 1),
        specular(MIN_PROBES, seed + 2),
        render_loss(MIN_PROBES, seed + 3),
        specular_loss(MIN_PROBES, seed + 4),
        entropy_loss(MIN_PROBES, seed + 5),
        tv_loss(MIN_PROBES, seed + 6),
        quadrature(MIN_PROBES, seed + 7),
        laplacian(MIN_PROBES, seed + 8),
        offsets(MIN_PROBES, seed + 9),
    ]
}
