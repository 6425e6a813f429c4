//! Texel-space rasterization, baking, seam dilation and 8-bit quantization.

use crate::field::AppearanceField;
use crate::math::{Rgb, Vec3};
use crate::meshops::TriMesh;
use crate::par;
use crate::scene::dataset::quantize_channel;

use super::atlas::UvAtlas;

/// Float RGB image with a coverage mask. Row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<Rgb>,
    pub mask: Vec<bool>,
}

impl TextureImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            texels: vec![[0.0; 3]; width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn covered(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Bilinear lookup with clamp-to-edge addressing; `v` points up the image.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Rgb {
        let x = u * self.width as f64 - 0.5;
        let y = (1.0 - v) * self.height as f64 - 0.5;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let at = |i: f64, j: f64| {
            let i = (i.max(0.0) as usize).min(self.width - 1);
            let j = (j.max(0.0) as usize).min(self.height - 1);
            self.texels[j * self.width + i]
        };
        let (a, b, c, d) = (
            at(x0, y0),
            at(x0 + 1.0, y0),
            at(x0, y0 + 1.0),
            at(x0 + 1.0, y0 + 1.0),
        );
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            top + (bottom - top) * fy
        })
    }
}

/// 8-bit RGB image as written to PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTexture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<[u8; 3]>,
}

impl QuantizedTexture {
    /// `q / 255` per channel; every texel counts as covered.
    pub fn dequantize(&self) -> TextureImage {
        TextureImage {
            width: self.width,
            height: self.height,
            texels: self
                .texels
                .iter()
                .map(|q| q.map(|c| c as f64 / 255.0))
                .collect(),
            mask: vec![true; self.texels.len()],
        }
    }
}

/// `round(clamp(v, 0, 1) · 255)` with halves rounded away from zero.
pub fn quantize(tex: &TextureImage) -> QuantizedTexture {
    QuantizedTexture {
        width: tex.width,
        height: tex.height,
        texels: tex.texels.iter().map(|c| c.map(quantize_channel)).collect(),
    }
}

/// The surface sample behind one texel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelSample {
    pub face: u32,
    pub bary: [f64; 3],
    pub point: Vec3,
}

/// Surface samples for every texel touched by some face of the atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct TexelMap {
    pub resolution: usize,
    pub samples: Vec<Option<TexelSample>>,
}

type P2 = [f64; 2];

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn barycentric(t: &[P2; 3], p: P2) -> Option<[f64; 3]> {
    let area = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    let l1 = cross(sub(p, t[0]), sub(t[2], t[0])) / area;
    let l2 = cross(sub(t[1], t[0]), sub(p, t[0])) / area;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Barycentrics of the point of triangle `t` closest to `p`.
fn closest_point_bary(t: &[P2; 3], p: P2) -> [f64; 3] {
    let [a, b, c] = *t;
    let (ab, ac, ap) = (sub(b, a), sub(c, a), sub(p, a));
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(ab, bp), dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(ab, cp), dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let (v, w) = (vb / denom, vc / denom);
    [1.0 - v - w, v, w]
}

/// Separating-axis test between a triangle and the open unit texel square at `(i, j)`.
fn overlaps_texel(t: &[P2; 3], i: usize, j: usize) -> bool {
    let (x0, y0) = (i as f64, j as f64);
    let corners = [
        [x0, y0],
        [x0 + 1.0, y0],
        [x0, y0 + 1.0],
        [x0 + 1.0, y0 + 1.0],
    ];
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let n = [-(b[1] - a[1]), b[0] - a[0]];
        if n == [0.0, 0.0] {
            continue;
        }
        let proj_t = t.map(|p| dot(n, p));
        let proj_b = corners.map(|p| dot(n, p));
        let (tmin, tmax) = (
            proj_t.iter().cloned().fold(f64::INFINITY, f64::min),
            proj_t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let (bmin, bmax) = (
            proj_b.iter().cloned().fold(f64::INFINITY, f64::min),
            proj_b.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        if bmax <= tmin || bmin >= tmax {
            return false;
        }
    }
    true
}

fn texel_bounds(t: &[P2; 3], res: usize) -> (usize, usize, usize, usize) {
    let lo = |k: usize| {
        t.iter()
            .map(|p| p[k])
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0) as usize
    };
    let hi = |k: usize| {
        (t.iter()
            .map(|p| p[k])
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .max(0.0) as usize)
            .min(res)
    };
    (lo(0), hi(0), lo(1), hi(1))
}

/// Assigns each texel to a face: first every texel whose center lies inside a
/// face, then every remaining texel the face overlaps, sampled at the closest
/// point of the face. The first face in index order wins ties.
pub fn texel_map(mesh: &TriMesh, atlas: &UvAtlas) -> TexelMap {
    let res = atlas.resolution;
    let pos = mesh.positions();
    let mut owner: Vec<Option<(u32, [f64; 3])>> = vec![None; res * res];
    let tris: Vec<[P2; 3]> = (0..mesh.faces.len())
        .map(|f| std::array::from_fn(|k| atlas.texel_corner(f, k)))
        .collect();
    for (f, t) in tris.iter().enumerate() {
        let (x0, x1, y0, y1) = texel_bounds(t, res);
        for j in y0..y1 {
            for i in x0..x1 {
                let slot = &mut owner[j * res + i];
                if slot.is_some() {
                    continue;
                }
                if let Some(b) = barycentric(t, [i as f64 + 0.5, j as f64 + 0.5]) {
                    if b.iter().all(|&x| x >= -1e-12) {
                        *slot = Some((f as u32, b));
                    }
                }
            }
        }
    }
    for (f, t) in tris.iter().enumerate() {
        let (x0, x1, y0, y1) = texel_bounds(t, res);
        for j in y0..y1 {
            for i in x0..x1 {
                let slot = &mut owner[j * res + i];
                if slot.is_none() && overlaps_texel(t, i, j) {
                    *slot = Some((
                        f as u32,
                        closest_point_bary(t, [i as f64 + 0.5, j as f64 + 0.5]),
                    ));
                }
            }
        }
    }
    let samples = owner
        .into_iter()
        .map(|o| {
            o.map(|(face, bary)| {
                let [a, b, c] = mesh.faces[face as usize].map(|i| pos[i as usize]);
                TexelSample {
                    face,
                    bary,
                    point: a * bary[0] + b * bary[1] + c * bary[2],
                }
            })
        })
        .collect();
    TexelMap {
        resolution: res,
        samples,
    }
}

/// Diffuse color and specular features baked into two float textures.
#[derive(Debug, Clone, PartialEq)]
pub struct BakedTextures {
    pub diffuse: TextureImage,
    pub specular: TextureImage,
}

/// Queries the appearance field at every texel's surface point.
pub fn bake_textures(mesh: &TriMesh, atlas: &UvAtlas, app: &AppearanceField) -> BakedTextures {
    let map = texel_map(mesh, atlas);
    bake_from_map(&map, app)
}

pub fn bake_from_map(map: &TexelMap, app: &AppearanceField) -> BakedTextures {
    let res = map.resolution;
    let values = par::map_slice(&map.samples, |s| s.map(|s| app.appearance(&s.point)));
    let mut diffuse = TextureImage::new(res, res);
    let mut specular = TextureImage::new(res, res);
    for (i, v) in values.into_iter().enumerate() {
        if let Some((cd, fs)) = v {
            diffuse.texels[i] = cd;
            specular.texels[i] = fs;
            diffuse.mask[i] = true;
            specular.mask[i] = true;
        }
    }
    BakedTextures { diffuse, specular }
}

/// Each round, every uncovered texel with a covered 8-neighbor takes the mean
/// of those neighbors and becomes covered. Covered texels never change.
pub fn dilate_seams(tex: &TextureImage, rounds: usize) -> TextureImage {
    let (w, h) = (tex.width, tex.height);
    let mut cur = tex.clone();
    for _ in 0..rounds {
        let mut next = cur.clone();
        for j in 0..h {
            for i in 0..w {
                if cur.mask[j * w + i] {
                    continue;
                }
                let mut sum = [0.0; 3];
                let mut n = 0usize;
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (x, y) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) == (0, 0) || x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                            continue;
                        }
                        let k = y as usize * w + x as usize;
                        if cur.mask[k] {
                            for c in 0..3 {
                                sum[c] += cur.texels[k][c];
                            }
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    next.texels[j * w + i] = sum.map(|s| s / n as f64);
                    next.mask[j * w + i] = true;
                }
            }
        }
        cur = next;
    }
    cur
}
