//! Bounding-volume hierarchy over triangles for first-hit ray queries.

use super::mesh::TriMesh;
use crate::math::{Aabb, Ray, Vec3};
use crate::surface::RaySurface;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Barycentric weights of the second and third corners.
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    /// Leaf: `start..start+count` into `order`. Inner: children at `start` and `start + 1`.
    start: usize,
    count: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.corners(f)).collect();
        Self::from_triangles(tris)
    }

    pub fn from_triangles(tris: Vec<[Vec3; 3]>) -> Self {
        let mut bvh = Self {
            order: (0..tris.len()).collect(),
            tris,
            nodes: Vec::new(),
        };
        if !bvh.tris.is_empty() {
            let centroids: Vec<Vec3> = bvh
                .tris
                .iter()
                .map(|t| (t[0] + t[1] + t[2]) / 3.0)
                .collect();
            bvh.nodes.push(Node {
                bbox: Aabb::empty(),
                start: 0,
                count: 0,
            });
            bvh.build(0, 0, bvh.tris.len(), &centroids);
        }
        bvh
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, centroids: &[Vec3]) {
        let mut bbox = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &i in &self.order[lo..hi] {
            for p in &self.tris[i] {
                bbox.grow(p);
            }
            cbox.grow(&centroids[i]);
        }
        self.nodes[node].bbox = bbox;
        if hi - lo <= LEAF_SIZE {
            self.nodes[node].start = lo;
            self.nodes[node].count = hi - lo;
            return;
        }
        let ext = cbox.max - cbox.min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (lo + hi) / 2;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
        });
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
        });
        self.nodes[node].start = left;
        self.nodes[node].count = 0;
        self.build(left, lo, mid, centroids);
        self.build(left + 1, mid, hi, centroids);
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest two-sided hit with `t > 1e-9`. Ties in `t` go to the lower face index.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let tmax = best.map_or(f64::INFINITY, |h| h.t);
            if !slab(&node.bbox, ray, &inv, tmax) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if let Some((t, u, v)) = moller_trumbore(ray, &self.tris[f]) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && f < b.face),
                        };
                        if better {
                            best = Some(Hit { t, face: f, u, v });
                        }
                    }
                }
            } else {
                stack.push(node.start + 1);
                stack.push(node.start);
            }
        }
        best
    }
}

impl RaySurface for Bvh {
    fn first_hit(&self, ray: &Ray) -> Option<f64> {
        self.intersect(ray).map(|h| h.t)
    }
}

fn slab(b: &Aabb, ray: &Ray, inv: &Vec3, tmax: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = tmax;
    for a in 0..3 {
        let mut lo = (b.min[a] - ray.origin[a]) * inv[a];
        let mut hi = (b.max[a] - ray.origin[a]) * inv[a];
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        // NaN from 0 * inf means the ray lies in the slab plane; keep it
        if lo.is_nan() || hi.is_nan() {
            continue;
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Two-sided ray/triangle test returning `(t, u, v)`.
pub fn moller_trumbore(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some((t, u, v))
}
