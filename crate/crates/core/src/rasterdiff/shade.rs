//! Appearance shading of rasterized fragments and the matching backward pass.

use super::raster::FragmentBuffer;
use crate::error::{Error, Result};
use crate::field::{compose_color, AppEval, AppearanceField, SpecEval};
use crate::math::{Rgb, Vec3};
use crate::meshops::TriMesh;
use crate::par;
use crate::scene::CameraModel;

const PIXELS_PER_CHUNK: usize = 256;

/// Smallest |cos| between view ray and face normal that yields a geometry gradient.
pub const MIN_VIEW_COSINE: f64 = 0.05;

#[derive(Debug, Clone)]
struct PixelEval {
    app: AppEval,
    spec: Option<SpecEval>,
    dir: Vec3,
    color: Rgb,
}

/// Shaded image plus the per-pixel evaluations needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ShadeCache {
    pub image: Vec<Rgb>,
    evals: Vec<Option<PixelEval>>,
    diffuse_only: bool,
}

/// Gradients with respect to vertex offsets and the appearance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrads {
    pub offsets: Vec<Vec3>,
    pub app_grid: Vec<f64>,
    pub app_mlp1: Vec<f64>,
    pub app_mlp2: Vec<f64>,
}

impl RasterGrads {
    pub fn zeros(vertices: usize, app: &AppearanceField) -> Self {
        Self {
            offsets: vec![Vec3::zeros(); vertices],
            app_grid: vec![0.0; app.grid.values.len()],
            app_mlp1: vec![0.0; app.mlp1.params.len()],
            app_mlp2: vec![0.0; app.mlp2.params.len()],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.offsets.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && [&self.app_grid, &self.app_mlp1, &self.app_mlp2]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn eval_pixel(app: &AppearanceField, x: &Vec3, origin: &Vec3, diffuse_only: bool) -> PixelEval {
    let mut ae = AppEval::default();
    app.forward_appearance(x, &mut ae);
    let v = x - origin;
    let dist = v.norm();
    let dir = if dist > 0.0 {
        v / dist
    } else {
        Vec3::new(0.0, 0.0, -1.0)
    };
    let (spec, cs) = if diffuse_only {
        (None, [0.0; 3])
    } else {
        let mut se = SpecEval::default();
        let cs = app.forward_specular(&ae.fs, &dir, &mut se);
        (Some(se), cs)
    };
    let color = compose_color(&ae.cd, &cs, diffuse_only);
    PixelEval {
        app: ae,
        spec,
        dir,
        color,
    }
}

/// Colors every covered pixel from the appearance field viewed along the
/// camera ray; uncovered pixels take `background`.
pub fn shade(
    frag: &FragmentBuffer,
    app: &AppearanceField,
    camera: &CameraModel,
    background: &Rgb,
    diffuse_only: bool,
) -> Vec<Rgb> {
    shade_cached(frag, app, camera, background, diffuse_only).image
}

pub fn shade_cached(
    frag: &FragmentBuffer,
    app: &AppearanceField,
    camera: &CameraModel,
    background: &Rgb,
    diffuse_only: bool,
) -> ShadeCache {
    let origin = camera.origin();
    let evals = par::map_slice(&frag.pixels, |p| {
        p.map(|f| eval_pixel(app, &f.x, &origin, diffuse_only))
    });
    let image = evals
        .iter()
        .map(|e| e.as_ref().map_or(*background, |e| e.color))
        .collect();
    ShadeCache {
        image,
        evals,
        diffuse_only,
    }
}

struct ChunkGrad {
    mlp1: Vec<f64>,
    mlp2: Vec<f64>,
    xs: Vec<Vec3>,
    dfeat: Vec<f64>,
    /// `d loss / d t` for the hit distance along each pixel ray.
    dx: Vec<(usize, f64)>,
}

/// Chains `d loss / d image` through shading. Coverage is held fixed; each
/// covered pixel's surface point is the intersection of its camera ray with
/// the face plane, so moving a corner by `δ` moves the point along the ray by
/// `b_k (n·δ) / (n·d)`. Pixels viewing their face at grazing angles
/// contribute no geometry gradient.
pub fn backward(
    frag: &FragmentBuffer,
    cache: &ShadeCache,
    d_image: &[Rgb],
    mesh: &TriMesh,
    app: &AppearanceField,
) -> Result<RasterGrads> {
    frag.check_mesh(mesh)?;
    let n = frag.pixels.len();
    if d_image.len() != n || cache.evals.len() != n {
        return Err(Error::Contract(format!(
            "{} pixels in buffer, {} gradients, {} cached evaluations",
            n,
            d_image.len(),
            cache.evals.len()
        )));
    }
    let feat_dim = app.grid.output_dim();
    let parts = par::map_chunks(n, PIXELS_PER_CHUNK, |range| {
        let mut g = ChunkGrad {
            mlp1: vec![0.0; app.mlp1.params.len()],
            mlp2: vec![0.0; app.mlp2.params.len()],
            xs: Vec::new(),
            dfeat: Vec::new(),
            dx: Vec::new(),
        };
        let mut scratch = Vec::new();
        for i in range {
            let (Some(f), Some(e)) = (&frag.pixels[i], &cache.evals[i]) else {
                continue;
            };
            let dc = d_image[i];
            if dc == [0.0; 3] {
                continue;
            }
            // Clamp in the final composition passes gradient only where unsaturated.
            let dc: Rgb = if cache.diffuse_only {
                dc
            } else {
                std::array::from_fn(|k| {
                    let s = e.app.cd[k] + e.spec.as_ref().map_or(0.0, |s| s.cs[k]);
                    if (0.0..=1.0).contains(&s) {
                        dc[k]
                    } else {
                        0.0
                    }
                })
            };
            let d_fs = match &e.spec {
                Some(se) => app.backward_specular(se, &dc, &mut g.mlp2, None, &mut scratch),
                None => [0.0; 3],
            };
            let start = g.dfeat.len();
            g.dfeat.resize(start + feat_dim, 0.0);
            app.backward_appearance(
                &e.app,
                &dc,
                &d_fs,
                &mut g.mlp1,
                &mut g.dfeat[start..],
                &mut scratch,
            );
            g.xs.push(e.app.x);

            if e.app.x == f.x {
                let dx = app.grid.backprop_point(&f.x, &g.dfeat[start..]);
                g.dx.push((i, e.dir.dot(&dx)));
            }
        }
        g
    });

    let pos = mesh.positions();
    let mut grads = RasterGrads::zeros(mesh.vertices.len(), app);
    let mut xs = Vec::new();
    let mut dfeat = Vec::new();
    for p in parts {
        grads
            .app_mlp1
            .iter_mut()
            .zip(&p.mlp1)
            .for_each(|(a, b)| *a += b);
        grads
            .app_mlp2
            .iter_mut()
            .zip(&p.mlp2)
            .for_each(|(a, b)| *a += b);
        xs.extend(p.xs);
        dfeat.extend(p.dfeat);
        for (i, dt) in p.dx {
            let f = frag.pixels[i]
                .as_ref()
                .expect("gradient recorded for a covered pixel");
            let e = cache.evals[i]
                .as_ref()
                .expect("evaluation cached for a covered pixel");
            let face = mesh.faces[f.face as usize];
            let [a, b, c] = face.map(|v| pos[v as usize]);
            let n = crate::math::triangle_normal(&a, &b, &c);
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            let n = n / len;
            let cos = n.dot(&e.dir);
            if cos.abs() < MIN_VIEW_COSINE {
                continue;
            }
            let g = n * (dt / cos);
            for k in 0..3 {
                grads.offsets[face[k] as usize] += g * f.bary[k];
            }
        }
    }
    app.grid.scatter(&xs, &dfeat, &mut grads.app_grid);
    Ok(grads)
}
