//! UV unwrapping: normal-clustered planar charts packed onto shelves.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{tangent_frame, triangle_area, Vec3};
use crate::meshops::TriMesh;

pub type Uv = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnwrapParams {
    /// Texture resolution the atlas is packed for; gutters are measured in its texels.
    pub resolution: usize,
    /// Largest angle between a face normal and its chart's seed normal.
    pub max_angle_deg: f64,
    /// Empty texels kept between charts and around the border.
    pub gutter: usize,
}

impl Default for UnwrapParams {
    fn default() -> Self {
        Self {
            resolution: 1024,
            max_angle_deg: 60.0,
            gutter: 2,
        }
    }
}

/// Integer texel rectangle `[x, x + w) × [y, y + h)` reserved for one chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UvAtlas {
    pub resolution: usize,
    /// Per-face per-corner coordinates in `[0, 1]²`; `v` points up the image.
    pub uvs: Vec<[Uv; 3]>,
    pub chart_of_face: Vec<usize>,
    pub charts: Vec<ChartRect>,
}

impl UvAtlas {
    /// Corner `k` of face `f` in texel space, with row 0 at the top of the image.
    pub fn texel_corner(&self, f: usize, k: usize) -> [f64; 2] {
        let r = self.resolution as f64;
        let [u, v] = self.uvs[f][k];
        [u * r, (1.0 - v) * r]
    }

    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }
}

struct Chart {
    faces: Vec<usize>,
    /// Planar coordinates per face corner.
    flat: Vec<[[f64; 2]; 3]>,
    min: [f64; 2],
    size: [f64; 2],
}

fn unit_normal(mesh: &TriMesh, pos: &[Vec3], f: usize) -> Option<Vec3> {
    let [a, b, c] = mesh.faces[f].map(|i| pos[i as usize]);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    (len > 0.0 && len.is_finite()).then(|| n / len)
}

fn fallback_axis(mesh: &TriMesh, pos: &[Vec3], f: usize) -> Vec3 {
    let [a, b, c] = mesh.faces[f].map(|i| pos[i as usize]);
    let e = if (b - a).norm() > 0.0 { b - a } else { c - a };
    let t = e.try_normalize(0.0).unwrap_or_else(Vec3::x);
    tangent_frame(&t).0
}

type P2 = [f64; 2];

/// Interior overlap of two planar triangles by separating axes; contact along
/// an edge or at a vertex within `eps` does not count.
fn triangles_overlap(a: &[P2; 3], b: &[P2; 3], eps: f64) -> bool {
    for tri in [a, b] {
        for k in 0..3 {
            let (p, q) = (tri[k], tri[(k + 1) % 3]);
            let n = [p[1] - q[1], q[0] - p[0]];
            let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
            if len == 0.0 {
                continue;
            }
            let proj = |t: &[P2; 3]| {
                let d = t.map(|v| (v[0] * n[0] + v[1] * n[1]) / len);
                (d[0].min(d[1]).min(d[2]), d[0].max(d[1]).max(d[2]))
            };
            let ((amin, amax), (bmin, bmax)) = (proj(a), proj(b));
            if amax.min(bmax) - amin.max(bmin) <= eps {
                return false;
            }
        }
    }
    true
}

/// Uniform-grid index of the triangles accepted into one chart.
struct ChartIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl ChartIndex {
    fn cells(&self, t: &[P2; 3]) -> impl Iterator<Item = (i64, i64)> {
        let lo = |k: usize| (t[0][k].min(t[1][k]).min(t[2][k]) / self.cell).floor() as i64;
        let hi = |k: usize| (t[0][k].max(t[1][k]).max(t[2][k]) / self.cell).floor() as i64;
        let (x0, x1, y0, y1) = (lo(0), hi(0), lo(1), hi(1));
        (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| (x, y)))
    }

    fn insert(&mut self, id: usize, t: &[P2; 3]) {
        let cells: Vec<_> = self.cells(t).collect();
        for c in cells {
            self.buckets.entry(c).or_default().push(id);
        }
    }

    fn collides(&self, t: &[P2; 3], flat: &[[P2; 3]], eps: f64) -> bool {
        self.cells(t).any(|c| {
            self.buckets
                .get(&c)
                .is_some_and(|ids| ids.iter().any(|&i| triangles_overlap(t, &flat[i], eps)))
        })
    }
}

/// Greedy region growing across manifold edges. A face joins a chart when its
/// normal is within the angle limit of the seed normal and its projection onto
/// the seed plane does not overlap the faces already in the chart.
fn grow_charts(
    mesh: &TriMesh,
    pos: &[Vec3],
    normals: &[Option<Vec3>],
    cos_limit: f64,
) -> Vec<Chart> {
    let nf = mesh.faces.len();
    let mut adjacency = vec![Vec::new(); nf];
    for faces in mesh.edge_faces().values() {
        if faces.len() == 2 {
            adjacency[faces[0]].push(faces[1]);
            adjacency[faces[1]].push(faces[0]);
        }
    }
    let cell = mesh.mean_edge_length().max(1e-9);
    let eps = 1e-9 * cell;
    let mut assigned = vec![false; nf];
    let mut charts = Vec::new();
    for seed in 0..nf {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let axis = normals[seed].unwrap_or_else(|| fallback_axis(mesh, pos, seed));
        let (t, b) = tangent_frame(&axis);
        let project = |f: usize| -> [P2; 3] {
            mesh.faces[f].map(|i| {
                let p = pos[i as usize];
                [p.dot(&t), p.dot(&b)]
            })
        };
        let mut faces = vec![seed];
        let mut flat = vec![project(seed)];
        if normals[seed].is_none() {
            charts.push(Chart::new(faces, flat));
            continue;
        }
        let mut index = ChartIndex {
            cell,
            buckets: HashMap::new(),
        };
        index.insert(0, &flat[0]);
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            for &g in &adjacency[f] {
                if assigned[g] || !normals[g].is_some_and(|n| n.dot(&axis) >= cos_limit) {
                    continue;
                }
                let tri = project(g);
                if index.collides(&tri, &flat, eps) {
                    continue;
                }
                assigned[g] = true;
                index.insert(flat.len(), &tri);
                faces.push(g);
                flat.push(tri);
                queue.push_back(g);
            }
        }
        charts.push(Chart::new(faces, flat));
    }
    charts
}

impl Chart {
    fn new(faces: Vec<usize>, flat: Vec<[P2; 3]>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for c in flat.iter().flatten() {
            for k in 0..2 {
                min[k] = min[k].min(c[k]);
                max[k] = max[k].max(c[k]);
            }
        }
        Chart {
            faces,
            flat,
            min,
            size: [max[0] - min[0], max[1] - min[1]],
        }
    }
}

/// Per-face chart standing in for a face whose projection collapsed: a right
/// triangle with legs of the face's longest edge.
fn per_face_chart(mesh: &TriMesh, pos: &[Vec3], f: usize) -> Chart {
    let [a, b, c] = mesh.faces[f].map(|i| pos[i as usize]);
    let s = (b - a)
        .norm()
        .max((c - b).norm())
        .max((a - c).norm())
        .max(1e-9);
    Chart {
        faces: vec![f],
        flat: vec![[[0.0, 0.0], [s, 0.0], [0.0, s]]],
        min: [0.0, 0.0],
        size: [s, s],
    }
}

fn flat_area(tri: &[[f64; 2]; 3]) -> f64 {
    let [a, b, c] = tri;
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}

/// Texel footprint of a chart at `scale` texels per world unit.
fn footprint(size: &[f64; 2], scale: f64) -> (usize, usize) {
    (
        (size[0] * scale).ceil() as usize + 1,
        (size[1] * scale).ceil() as usize + 1,
    )
}

/// Shelf packing in decreasing height order. Returns `None` when the charts do
/// not fit in a `res × res` square.
fn pack(
    sizes: &[(usize, usize)],
    order: &[usize],
    res: usize,
    gutter: usize,
) -> Option<Vec<ChartRect>> {
    let mut rects = vec![
        ChartRect {
            x: 0,
            y: 0,
            w: 0,
            h: 0
        };
        sizes.len()
    ];
    let (mut x, mut y, mut shelf) = (gutter, gutter, 0);
    for &c in order {
        let (w, h) = sizes[c];
        if x + w + gutter > res {
            x = gutter;
            y += shelf + gutter;
            shelf = 0;
        }
        if x + w + gutter > res || y + h + gutter > res {
            return None;
        }
        rects[c] = ChartRect { x, y, w, h };
        x += w + gutter;
        shelf = shelf.max(h);
    }
    Some(rects)
}

/// Clusters faces into charts by normal similarity, projects each chart onto
/// the plane of its seed normal and packs the charts at a common texel density.
pub fn unwrap_uv(mesh: &TriMesh, params: &UnwrapParams) -> Result<UvAtlas> {
    let res = params.resolution;
    if res < 2 * params.gutter + 2 {
        return Err(Error::Validation(format!(
            "texture resolution {res} is too small for the gutter"
        )));
    }
    let pos = mesh.positions();
    let normals: Vec<Option<Vec3>> = (0..mesh.faces.len())
        .map(|f| unit_normal(mesh, &pos, f))
        .collect();
    let cos_limit = params.max_angle_deg.to_radians().cos();

    let mut charts = Vec::new();
    for chart in grow_charts(mesh, &pos, &normals, cos_limit) {
        let area: f64 = chart.flat.iter().map(flat_area).sum();
        let extent = chart.size[0].max(chart.size[1]);
        if area > 1e-12 * extent * extent && area > 0.0 {
            charts.push(chart);
        } else {
            charts.extend(chart.faces.iter().map(|&f| per_face_chart(mesh, &pos, f)));
        }
    }

    let mut order: Vec<usize> = (0..charts.len()).collect();
    order.sort_by(|&a, &b| {
        charts[b].size[1]
            .total_cmp(&charts[a].size[1])
            .then(a.cmp(&b))
    });

    let sizes_at =
        |s: f64| -> Vec<(usize, usize)> { charts.iter().map(|c| footprint(&c.size, s)).collect() };
    let fits = |s: f64| pack(&sizes_at(s), &order, res, params.gutter);
    if charts.is_empty() {
        return Ok(UvAtlas {
            resolution: res,
            uvs: Vec::new(),
            chart_of_face: Vec::new(),
            charts: Vec::new(),
        });
    }
    let largest = charts
        .iter()
        .map(|c| c.size[0].max(c.size[1]))
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, res as f64 / largest.max(1e-12));
    if fits(lo).is_none() {
        return Err(Error::Validation(format!(
            "{} charts do not fit in a {res}×{res} atlas",
            charts.len()
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fits(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = lo;
    let rects = fits(scale).expect("scale was verified to fit");

    let r = res as f64;
    let mut uvs = vec![[[0.0; 2]; 3]; mesh.faces.len()];
    let mut chart_of_face = vec![0; mesh.faces.len()];
    for (ci, chart) in charts.iter().enumerate() {
        let rect = rects[ci];
        for (face, flat) in chart.faces.iter().zip(&chart.flat) {
            chart_of_face[*face] = ci;
            uvs[*face] = flat.map(|p| {
                let tx = rect.x as f64 + 0.5 + scale * (p[0] - chart.min[0]);
                let ty = rect.y as f64 + 0.5 + scale * (p[1] - chart.min[1]);
                [(tx / r).clamp(0.0, 1.0), (1.0 - ty / r).clamp(0.0, 1.0)]
            });
        }
    }
    Ok(UvAtlas {
        resolution: res,
        uvs,
        chart_of_face,
        charts: rects,
    })
}

/// Sum of 3-d face areas divided by the packed UV area, in world units² per
/// unit UV area. Useful for judging texel density.
pub fn surface_per_uv_area(mesh: &TriMesh, atlas: &UvAtlas) -> f64 {
    let pos = mesh.positions();
    let (mut s, mut u) = (0.0, 0.0);
    for (f, face) in mesh.faces.iter().enumerate() {
        let [a, b, c] = face.map(|i| pos[i as usize]);
        s += triangle_area(&a, &b, &c);
        u += flat_area(&atlas.uvs[f]);
    }
    if u > 0.0 {
        s / u
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshops::icosphere;

    fn cube() -> TriMesh {
        let v: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let faces = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriMesh::new(v, faces)
    }

    #[test]
    fn cube_has_six_charts() {
        let atlas = unwrap_uv(
            &cube(),
            &UnwrapParams {
                resolution: 64,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(atlas.chart_count(), 6);
    }

    #[test]
    fn uvs_in_unit_square_and_rects_disjoint() {
        let m = icosphere(3);
        let p = UnwrapParams {
            resolution: 256,
            ..Default::default()
        };
        let atlas = unwrap_uv(&m, &p).unwrap();
        assert!(atlas
            .uvs
            .iter()
            .flatten()
            .flatten()
            .all(|x| (0.0..=1.0).contains(x)));
        for (i, a) in atlas.charts.iter().enumerate() {
            for b in &atlas.charts[i + 1..] {
                let sep_x = a.x + a.w + p.gutter <= b.x || b.x + b.w + p.gutter <= a.x;
                let sep_y = a.y + a.h + p.gutter <= b.y || b.y + b.h + p.gutter <= a.y;
                assert!(sep_x || sep_y);
            }
        }
        assert!(surface_per_uv_area(&m, &atlas) > 0.0);
    }

    #[test]
    fn too_small_resolution_is_rejected() {
        assert!(unwrap_uv(
            &cube(),
            &UnwrapParams {
                resolution: 4,
                ..Default::default()
            }
        )
        .is_err());
    }
}
