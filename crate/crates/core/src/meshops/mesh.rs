//! Indexed triangle meshes with per-vertex trainable offsets.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::math::{triangle_area, triangle_normal, Aabb, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise when seen from outside.
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex offsets optimized during refinement.
    pub offsets: Vec<Vec3>,
}

/// Undirected edge key with the smaller index first.
#[inline]
pub fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        let offsets = vec![Vec3::zeros(); vertices.len()];
        Self {
            vertices,
            faces,
            offsets,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Position including the offset.
    #[inline]
    pub fn position(&self, i: u32) -> Vec3 {
        self.vertices[i as usize] + self.offsets[i as usize]
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.vertices.len() as u32)
            .map(|i| self.position(i))
            .collect()
    }

    /// Folds the offsets into the vertex positions and zeroes them.
    pub fn apply_offsets(&mut self) {
        for (v, o) in self.vertices.iter_mut().zip(self.offsets.iter_mut()) {
            *v += *o;
            *o = Vec3::zeros();
        }
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.position(a), self.position(b), self.position(c)]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Unit normal, or zero for a degenerate face.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        let n = triangle_normal(&a, &b, &c);
        let l = n.norm();
        if l > 0.0 {
            n / l
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (a + b + c) / 3.0
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.vertices.len()];
        for (f, tri) in self.faces.iter().enumerate() {
            let [a, b, c] = self.corners(f);
            let fn_ = triangle_normal(&a, &b, &c);
            for &v in tri {
                n[v as usize] += fn_;
            }
        }
        n.into_iter()
            .map(|v| if v.norm() > 0.0 { v.normalize() } else { v })
            .collect()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.positions().iter())
    }

    /// Sorted, deduplicated neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<u32>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for &[a, b, c] in &self.faces {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                nb[x as usize].push(y);
                nb[y as usize].push(x);
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Faces incident to each vertex, in face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut vf = vec![Vec::new(); self.vertices.len()];
        for (f, tri) in self.faces.iter().enumerate() {
            for &v in tri {
                if vf[v as usize].last() != Some(&f) {
                    vf[v as usize].push(f);
                }
            }
        }
        vf
    }

    /// Faces incident to each undirected edge, ordered by edge then face.
    pub fn edge_faces(&self) -> BTreeMap<(u32, u32), Vec<usize>> {
        let mut m: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for (f, &[a, b, c]) in self.faces.iter().enumerate() {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                m.entry(edge_key(x, y)).or_default().push(f);
            }
        }
        m
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edge_faces()
            .keys()
            .map(|&(a, b)| (self.position(a) - self.position(b)).norm())
            .collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let l = self.edge_lengths();
        if l.is_empty() {
            0.0
        } else {
            l.iter().sum::<f64>() / l.len() as f64
        }
    }

    /// Face lists of connected components (faces sharing a vertex are connected).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.faces.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for fl in self.vertex_faces() {
            for w in fl.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for f in 0..self.faces.len() {
            let r = find(&mut parent, f);
            groups.entry(r).or_default().push(f);
        }
        groups.into_values().collect()
    }

    /// Keeps the selected faces and drops vertices no face references.
    pub fn retain_faces(&self, keep: impl Fn(usize) -> bool) -> TriMesh {
        let faces: Vec<[u32; 3]> = (0..self.faces.len())
            .filter(|&f| keep(f))
            .map(|f| self.faces[f])
            .collect();
        TriMesh {
            vertices: self.vertices.clone(),
            faces,
            offsets: self.offsets.clone(),
        }
        .compact()
    }

    /// Removes unreferenced vertices, preserving the order of the rest.
    pub fn compact(mut self) -> TriMesh {
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.faces {
            for &v in tri {
                used[v as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut n = 0u32;
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = n;
                n += 1;
            }
        }
        let vertices = (0..used.len())
            .filter(|&i| used[i])
            .map(|i| self.vertices[i])
            .collect();
        let offsets = (0..used.len())
            .filter(|&i| used[i])
            .map(|i| self.offsets[i])
            .collect();
        for tri in &mut self.faces {
            for v in tri.iter_mut() {
                *v = remap[*v as usize];
            }
        }
        TriMesh {
            vertices,
            faces: self.faces,
            offsets,
        }
    }

    /// Concatenates two meshes.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.offsets.extend_from_slice(&other.offsets);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }

    /// Signed enclosed volume; positive for closed outward-oriented meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn audit(&self) -> AuditReport {
        let n = self.vertices.len();
        let mut r = AuditReport {
            vertices: n,
            faces: self.faces.len(),
            ..Default::default()
        };
        if self.offsets.len() != n {
            r.offset_length_mismatch = 1;
        }
        let mut seen: HashMap<[u32; 3], usize> = HashMap::new();
        let mut used = vec![false; n];
        let mut valid = Vec::with_capacity(self.faces.len());
        for (f, tri) in self.faces.iter().enumerate() {
            if tri.iter().any(|&v| v as usize >= n) {
                r.out_of_range += 1;
                continue;
            }
            tri.iter().for_each(|&v| used[v as usize] = true);
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                r.degenerate += 1;
                continue;
            }
            if self.face_area(f) <= 0.0 {
                r.zero_area += 1;
            }
            let mut key = *tri;
            key.sort_unstable();
            *seen.entry(key).or_default() += 1;
            valid.push(*tri);
        }
        r.duplicate_faces = seen.values().map(|&c| c - 1).sum();
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for &[a, b, c] in &valid {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                *edges.entry(edge_key(x, y)).or_default() += 1;
            }
        }
        r.edges = edges.len();
        r.boundary_edges = edges.values().filter(|&&c| c == 1).count();
        r.nonmanifold_edges = edges.values().filter(|&&c| c > 2).count();
        r.unreferenced_vertices = used.iter().filter(|&&u| !u).count();
        r.nonfinite_vertices = self
            .vertices
            .iter()
            .chain(&self.offsets)
            .filter(|v| !v.iter().all(|x| x.is_finite()))
            .count();
        r
    }
}

/// Counts of each structural defect class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    pub out_of_range: usize,
    pub degenerate: usize,
    pub zero_area: usize,
    pub duplicate_faces: usize,
    pub nonmanifold_edges: usize,
    pub boundary_edges: usize,
    pub unreferenced_vertices: usize,
    pub nonfinite_vertices: usize,
    pub offset_length_mismatch: usize,
}

impl AuditReport {
    /// In-range indices, no repeated index within a face, no edge shared by
    /// more than two faces.
    pub fn is_ok(&self) -> bool {
        self.out_of_range == 0
            && self.degenerate == 0
            && self.nonmanifold_edges == 0
            && self.nonfinite_vertices == 0
            && self.offset_length_mismatch == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Regular icosahedron subdivided `levels` times and projected onto the unit sphere.
pub fn icosphere(levels: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut nf = Vec::with_capacity(f.len() * 4);
        let mut midpoint = |a: u32, b: u32, v: &mut Vec<Vec3>| -> u32 {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                v.push(((v[a as usize] + v[b as usize]) / 2.0).normalize());
                v.len() as u32 - 1
            })
        };
        for &[a, b, c] in &f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = nf;
    }
    TriMesh::new(v, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let m = icosphere(2);
        assert_eq!(m.faces.len(), 320);
        let a = m.audit();
        assert!(a.is_ok());
        assert_eq!(a.boundary_edges, 0);
        assert_eq!(a.vertices as i64 - a.edges as i64 + a.faces as i64, 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn audit_counts_defects() {
        let mut m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), -Vec3::z()],
            vec![
                [0, 1, 2],
                [0, 1, 3],
                [0, 1, 4],
                [0, 0, 2],
                [0, 1, 9],
                [2, 1, 0],
            ],
        );
        let a = m.audit();
        assert_eq!((a.out_of_range, a.degenerate, a.duplicate_faces), (1, 1, 1));
        assert_eq!(a.nonmanifold_edges, 1);
        assert!(!a.is_ok());
        m.faces.truncate(1);
        assert!(m.audit().is_ok());
    }

    #[test]
    fn compact_preserves_order() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x() * 9.0, Vec3::x(), Vec3::y()],
            vec![[0, 2, 3]],
        )
        .compact();
        assert_eq!(m.vertices, vec![Vec3::zeros(), Vec3::x(), Vec3::y()]);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }
}
