//! Single-layer triangle rasterization into a per-pixel fragment buffer.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::meshops::TriMesh;
use crate::par;
use crate::scene::dataset::write_png;
use crate::scene::CameraModel;

/// Minimum camera depth kept by the near-plane clip.
pub const NEAR_PLANE: f64 = 1e-3;

const TILE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterMode {
    /// Pixel tiles processed in parallel, each against its binned triangles.
    Tiled,
    /// Rows processed in order against the triangles active on each row.
    Scanline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub face: u32,
    /// Perspective-correct barycentrics with respect to the face's corners.
    pub bary: [f64; 3],
    /// Interpolated world position.
    pub x: Vec3,
    /// Distance along the viewing axis.
    pub depth: f64,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Option<Fragment>>,
    pub vertex_count: usize,
    pub face_count: usize,
}

/// A clipped, projected sub-triangle of one mesh face.
#[derive(Debug, Clone)]
struct Prim {
    face: u32,
    key: [u32; 3],
    uv: [[f64; 2]; 3],
    inv_w: [f64; 3],
    /// Barycentrics of each corner with respect to the original face.
    bary: [[f64; 3]; 3],
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
}

struct Cover {
    depth: f64,
    lam: [f64; 3],
}

/// `(b − a) × (p − a)` evaluated with a canonical endpoint order, so that a
/// shared edge yields exactly opposite values for its two triangles.
fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let raw =
        |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Top-left ownership for an edge of a positively wound screen triangle.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

impl Prim {
    fn cover(&self, px: u32, py: u32) -> Option<Cover> {
        let p = [px as f64 + 0.5, py as f64 + 0.5];
        let mut e = [0.0; 3];
        for i in 0..3 {
            let (a, b) = (self.uv[i], self.uv[(i + 1) % 3]);
            let v = edge_fn(a, b, p);
            if v < 0.0 || (v == 0.0 && !owns_edge(a, b)) {
                return None;
            }
            e[i] = v;
        }
        let sum = e[0] + e[1] + e[2];
        if sum <= 0.0 {
            return None;
        }
        // Edge i is opposite corner i + 2.
        let lam = [e[1] / sum, e[2] / sum, e[0] / sum];
        let s: f64 = (0..3).map(|k| lam[k] * self.inv_w[k]).sum();
        Some(Cover {
            depth: 1.0 / s,
            lam,
        })
    }

    fn fragment(&self, c: &Cover, pos: &[Vec3], normals: &[Vec3], faces: &[[u32; 3]]) -> Fragment {
        let mut mu: [f64; 3] = std::array::from_fn(|k| c.lam[k] * self.inv_w[k]);
        let s = mu.iter().sum::<f64>();
        mu.iter_mut().for_each(|m| *m /= s);
        let mut bary = [0.0; 3];
        for k in 0..3 {
            for j in 0..3 {
                bary[j] += mu[k] * self.bary[k][j];
            }
        }
        bary.iter_mut().for_each(|b| *b = b.max(0.0));
        let bs = bary.iter().sum::<f64>();
        bary.iter_mut().for_each(|b| *b /= bs);
        let f = faces[self.face as usize];
        let (x, normal) = interpolate(&bary, f, pos, normals);
        Fragment {
            face: self.face,
            bary,
            x,
            depth: c.depth,
            normal,
        }
    }
}

fn interpolate(bary: &[f64; 3], f: [u32; 3], pos: &[Vec3], normals: &[Vec3]) -> (Vec3, Vec3) {
    let mut x = Vec3::zeros();
    let mut n = Vec3::zeros();
    for k in 0..3 {
        x += pos[f[k] as usize] * bary[k];
        n += normals[f[k] as usize] * bary[k];
    }
    let len = n.norm();
    if len > 0.0 {
        n /= len;
    } else {
        let (a, b, c) = (pos[f[0] as usize], pos[f[1] as usize], pos[f[2] as usize]);
        n = crate::math::triangle_normal(&a, &b, &c);
        n /= n.norm().max(f64::MIN_POSITIVE);
    }
    (x, n)
}

#[derive(Clone, Copy)]
struct ClipVert {
    pc: Vec3,
    bary: [f64; 3],
}

fn clip_near(tri: [ClipVert; 3]) -> Vec<ClipVert> {
    let depth = |v: &ClipVert| -v.pc.z - NEAR_PLANE;
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (da, db) = (depth(&a), depth(&b));
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            let t = da / (da - db);
            out.push(ClipVert {
                pc: a.pc + (b.pc - a.pc) * t,
                bary: std::array::from_fn(|k| a.bary[k] + (b.bary[k] - a.bary[k]) * t),
            });
        }
    }
    out
}

fn build_prims(mesh: &TriMesh, pos: &[Vec3], cam: &CameraModel) -> Vec<Prim> {
    let (w, h) = (cam.width, cam.height);
    let per_face = par::map_range(mesh.faces.len(), |fi| {
        let f = mesh.faces[fi];
        let corners: [ClipVert; 3] = std::array::from_fn(|k| {
            let mut bary = [0.0; 3];
            bary[k] = 1.0;
            ClipVert {
                pc: cam.world_to_camera(&pos[f[k] as usize]),
                bary,
            }
        });
        let poly = clip_near(corners);
        let mut key = f;
        key.sort_unstable();
        let mut prims = Vec::new();
        if poly.len() < 3 {
            return prims;
        }
        let proj: Vec<([f64; 2], f64)> = poly
            .iter()
            .map(|v| {
                let d = -v.pc.z;
                (
                    [cam.cx + cam.fx * v.pc.x / d, cam.cy - cam.fy * v.pc.y / d],
                    1.0 / d,
                )
            })
            .collect();
        for i in 1..poly.len() - 1 {
            let mut idx = [0, i, i + 1];
            let (a, b, c) = (proj[idx[0]].0, proj[idx[1]].0, proj[idx[2]].0);
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            if area < 0.0 {
                idx.swap(1, 2);
            }
            let uv = idx.map(|j| proj[j].0);
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in &uv {
                for a in 0..2 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
            // Pixel centers px + 0.5 within [lo, hi].
            let first = |v: f64, n: u32| (v - 0.5).ceil().clamp(0.0, n as f64) as u32;
            let last = |v: f64, n: u32| ((v - 0.5).floor() + 1.0).clamp(0.0, n as f64) as u32;
            let (x0, x1, y0, y1) = (
                first(lo[0], w),
                last(hi[0], w),
                first(lo[1], h),
                last(hi[1], h),
            );
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            prims.push(Prim {
                face: fi as u32,
                key,
                uv,
                inv_w: idx.map(|j| proj[j].1),
                bary: idx.map(|j| poly[j].bary),
                x0,
                x1,
                y0,
                y1,
            });
        }
        prims
    });
    per_face.into_iter().flatten().collect()
}

fn closer(prims: &[Prim], a: (f64, usize), b: (f64, usize)) -> bool {
    a.0.total_cmp(&b.0)
        .then_with(|| prims[a.1].key.cmp(&prims[b.1].key))
        .then(a.1.cmp(&b.1))
        == Ordering::Less
}

fn consider(
    prims: &[Prim],
    best: &mut Option<(f64, usize, [f64; 3])>,
    pi: usize,
    px: u32,
    py: u32,
) {
    if let Some(c) = prims[pi].cover(px, py) {
        if best.map_or(true, |(d, bi, _)| closer(prims, (c.depth, pi), (d, bi))) {
            *best = Some((c.depth, pi, c.lam));
        }
    }
}

/// Rasterizes with the default tiled mode.
pub fn rasterize(mesh: &TriMesh, camera: &CameraModel) -> Result<FragmentBuffer> {
    rasterize_with(mesh, camera, RasterMode::Tiled)
}

pub fn rasterize_with(
    mesh: &TriMesh,
    camera: &CameraModel,
    mode: RasterMode,
) -> Result<FragmentBuffer> {
    let nv = mesh.vertices.len();
    if mesh.offsets.len() != nv {
        return Err(Error::Contract(format!(
            "{} offsets for {} vertices",
            mesh.offsets.len(),
            nv
        )));
    }
    if let Some(f) = mesh
        .faces
        .iter()
        .find(|f| f.iter().any(|&i| i as usize >= nv))
    {
        return Err(Error::Contract(format!(
            "face {f:?} indexes past {nv} vertices"
        )));
    }
    let pos = mesh.positions();
    let normals = mesh.vertex_normals();
    let prims = build_prims(mesh, &pos, camera);
    let (w, h) = (camera.width, camera.height);
    let mut best: Vec<Option<(f64, usize, [f64; 3])>> = vec![None; (w * h) as usize];

    match mode {
        RasterMode::Tiled => {
            let (tw, th) = (w.div_ceil(TILE), h.div_ceil(TILE));
            let mut bins: Vec<Vec<usize>> = vec![Vec::new(); (tw * th) as usize];
            for (pi, p) in prims.iter().enumerate() {
                for ty in p.y0 / TILE..=(p.y1 - 1) / TILE {
                    for tx in p.x0 / TILE..=(p.x1 - 1) / TILE {
                        bins[(ty * tw + tx) as usize].push(pi);
                    }
                }
            }
            let tiles = par::map_range(bins.len(), |t| {
                let (tx, ty) = (t as u32 % tw, t as u32 / tw);
                let (bx0, by0) = (tx * TILE, ty * TILE);
                let (bx1, by1) = ((bx0 + TILE).min(w), (by0 + TILE).min(h));
                let mut local = vec![None; ((bx1 - bx0) * (by1 - by0)) as usize];
                for &pi in &bins[t] {
                    let p = &prims[pi];
                    for py in p.y0.max(by0)..p.y1.min(by1) {
                        for px in p.x0.max(bx0)..p.x1.min(bx1) {
                            let slot = ((py - by0) * (bx1 - bx0) + (px - bx0)) as usize;
                            consider(&prims, &mut local[slot], pi, px, py);
                        }
                    }
                }
                (bx0, by0, bx1, local)
            });
            for (bx0, by0, bx1, local) in tiles {
                let tw_px = bx1 - bx0;
                for (i, v) in local.into_iter().enumerate() {
                    let (px, py) = (bx0 + i as u32 % tw_px, by0 + i as u32 / tw_px);
                    best[(py * w + px) as usize] = v;
                }
            }
        }
        RasterMode::Scanline => {
            let mut order: Vec<usize> = (0..prims.len()).collect();
            order.sort_by_key(|&i| prims[i].y0);
            let mut next = 0;
            let mut active: Vec<usize> = Vec::new();
            for py in 0..h {
                while next < order.len() && prims[order[next]].y0 <= py {
                    active.push(order[next]);
                    next += 1;
                }
                active.retain(|&i| prims[i].y1 > py);
                for &pi in &active {
                    let p = &prims[pi];
                    for px in p.x0..p.x1 {
                        consider(&prims, &mut best[(py * w + px) as usize], pi, px, py);
                    }
                }
            }
        }
    }

    let pixels = par::map_slice(&best, |b| {
        b.map(|(depth, pi, lam)| {
            prims[pi].fragment(&Cover { depth, lam }, &pos, &normals, &mesh.faces)
        })
    });
    Ok(FragmentBuffer {
        width: w,
        height: h,
        pixels,
        vertex_count: nv,
        face_count: mesh.faces.len(),
    })
}

impl FragmentBuffer {
    pub fn covered(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }

    /// Errors unless the buffer was produced from a mesh of this shape.
    pub fn check_mesh(&self, mesh: &TriMesh) -> Result<()> {
        if self.vertex_count != mesh.vertices.len() || self.face_count != mesh.faces.len() {
            return Err(Error::Contract(format!(
                "fragment buffer built for {} vertices / {} faces, mesh has {} / {}",
                self.vertex_count,
                self.face_count,
                mesh.vertices.len(),
                mesh.faces.len()
            )));
        }
        Ok(())
    }

    /// Recomputes positions and normals from the stored barycentrics using the
    /// mesh's current effective positions; coverage is unchanged.
    pub fn reinterpolate(&self, mesh: &TriMesh) -> Result<FragmentBuffer> {
        self.check_mesh(mesh)?;
        let pos = mesh.positions();
        let normals = mesh.vertex_normals();
        let pixels = self
            .pixels
            .iter()
            .map(|p| {
                p.map(|mut f| {
                    let (x, n) = interpolate(&f.bary, mesh.faces[f.face as usize], &pos, &normals);
                    f.x = x;
                    f.normal = n;
                    f
                })
            })
            .collect();
        Ok(FragmentBuffer {
            pixels,
            ..self.clone()
        })
    }

    /// Face ids hashed to colors; uncovered pixels are black.
    pub fn face_id_image(&self) -> Vec<Rgb> {
        self.pixels
            .iter()
            .map(|p| match p {
                None => [0.0; 3],
                Some(f) => {
                    let h = (f.face as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    std::array::from_fn(|k| 0.2 + 0.8 * ((h >> (16 * k + 8)) & 0xff) as f64 / 255.0)
                }
            })
            .collect()
    }

    /// Depth normalized to the covered range, near is bright; uncovered is black.
    pub fn depth_image(&self) -> Vec<Rgb> {
        let ds = self.pixels.iter().flatten().map(|f| f.depth);
        let (lo, hi) = ds.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| {
            (a.min(d), b.max(d))
        });
        let span = (hi - lo).max(1e-12);
        self.pixels
            .iter()
            .map(|p| match p {
                None => [0.0; 3],
                Some(f) => [1.0 - 0.8 * (f.depth - lo) / span; 3],
            })
            .collect()
    }

    pub fn write_debug(&self, face_path: &Path, depth_path: &Path) -> Result<()> {
        write_png(face_path, self.width, self.height, &self.face_id_image())?;
        write_png(depth_path, self.width, self.height, &self.depth_image())
    }
}
