//! Mutable mesh with incremental vertex→face incidence for local edits
//! (edge collapse, split and flip).

use super::mesh::TriMesh;
use crate::math::{triangle_area, triangle_normal, Vec3};

/// Minimum cosine between a face normal before and after an edit.
pub const MIN_NORMAL_DOT: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct EditMesh {
    pub pos: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_alive: Vec<bool>,
    /// Faces flagged editable; edits never touch the others.
    pub editable: Vec<bool>,
    pub vert_alive: Vec<bool>,
    pub pinned: Vec<bool>,
    vfaces: Vec<Vec<usize>>,
    live_faces: usize,
}

impl EditMesh {
    /// Offsets are folded into the positions.
    pub fn from_mesh(m: &TriMesh) -> Self {
        let pos = m.positions();
        let mut vfaces = vec![Vec::new(); pos.len()];
        for (f, t) in m.faces.iter().enumerate() {
            for &v in t {
                vfaces[v as usize].push(f);
            }
        }
        Self {
            vert_alive: vec![true; pos.len()],
            pinned: vec![false; pos.len()],
            pos,
            faces: m.faces.clone(),
            face_alive: vec![true; m.faces.len()],
            editable: vec![true; m.faces.len()],
            vfaces,
            live_faces: m.faces.len(),
        }
    }

    /// Live faces and the vertices they use, original order preserved.
    pub fn to_mesh(&self) -> TriMesh {
        let faces = (0..self.faces.len())
            .filter(|&f| self.face_alive[f])
            .map(|f| self.faces[f])
            .collect();
        TriMesh::new(self.pos.clone(), faces).compact()
    }

    pub fn live_face_count(&self) -> usize {
        self.live_faces
    }

    pub fn vertex_faces(&self, v: u32) -> &[usize] {
        &self.vfaces[v as usize]
    }

    pub fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut n: Vec<u32> = self.vfaces[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn edge_faces(&self, a: u32, b: u32) -> Vec<usize> {
        self.vfaces[a as usize]
            .iter()
            .copied()
            .filter(|&f| self.faces[f].contains(&b))
            .collect()
    }

    pub fn is_boundary_vertex(&self, v: u32) -> bool {
        self.neighbors(v)
            .into_iter()
            .any(|w| self.edge_faces(v, w).len() == 1)
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f].map(|v| self.pos[v as usize]);
        triangle_normal(&a, &b, &c)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.pos[v as usize]);
        triangle_area(&a, &b, &c)
    }

    pub fn edge_length(&self, a: u32, b: u32) -> f64 {
        (self.pos[a as usize] - self.pos[b as usize]).norm()
    }

    /// Every undirected edge of the live faces, each once, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<(u32, u32)> = (0..self.faces.len())
            .filter(|&f| self.face_alive[f])
            .flat_map(|f| {
                let [a, b, c] = self.faces[f];
                [(a, b), (b, c), (c, a)]
            })
            .map(|(x, y)| (x.min(y), x.max(y)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// All faces on the edge are editable.
    pub fn edge_editable(&self, a: u32, b: u32) -> bool {
        self.edge_faces(a, b).iter().all(|&f| self.editable[f])
    }

    fn vertex_editable(&self, v: u32) -> bool {
        self.vfaces[v as usize].iter().all(|&f| self.editable[f])
    }

    /// Whether removing `gone` by merging it into `keep` placed at `p` keeps
    /// the mesh a manifold without flipping or degenerating faces.
    pub fn can_collapse(&self, keep: u32, gone: u32, p: &Vec3) -> bool {
        if keep == gone || !self.vert_alive[keep as usize] || !self.vert_alive[gone as usize] {
            return false;
        }
        if self.pinned[gone as usize]
            || (self.pinned[keep as usize] && *p != self.pos[keep as usize])
        {
            return false;
        }
        if !self.vertex_editable(keep) || !self.vertex_editable(gone) {
            return false;
        }
        let shared = self.edge_faces(keep, gone);
        if shared.is_empty() || shared.len() > 2 {
            return false;
        }
        // link condition: common neighbors are exactly the opposite corners
        let nk = self.neighbors(keep);
        let ng = self.neighbors(gone);
        let common: Vec<u32> = nk
            .iter()
            .copied()
            .filter(|v| ng.binary_search(v).is_ok())
            .collect();
        let mut opposite: Vec<u32> = shared
            .iter()
            .map(|&f| {
                *self.faces[f]
                    .iter()
                    .find(|&&v| v != keep && v != gone)
                    .unwrap()
            })
            .collect();
        opposite.sort_unstable();
        if common != opposite {
            return false;
        }
        if shared.len() == 2 && self.is_boundary_vertex(keep) && self.is_boundary_vertex(gone) {
            return false;
        }
        // resulting neighborhood must stay a proper disc (avoid tetrahedron collapse)
        if shared.len() == 2 && nk.len() + ng.len() - common.len() - 2 < 3 {
            return false;
        }
        for (v, moved) in [(keep, keep), (gone, gone)] {
            for &f in &self.vfaces[v as usize] {
                if shared.contains(&f) {
                    continue;
                }
                let old = self.face_normal(f);
                let pts = self.faces[f].map(|w| if w == moved { *p } else { self.pos[w as usize] });
                let new = triangle_normal(&pts[0], &pts[1], &pts[2]);
                let (lo, ln) = (old.norm(), new.norm());
                if ln <= 1e-14 * (1.0 + lo) || lo == 0.0 {
                    return false;
                }
                if old.dot(&new) / (lo * ln) < MIN_NORMAL_DOT {
                    return false;
                }
            }
        }
        true
    }

    /// Merges `gone` into `keep` at `p`. Call [`EditMesh::can_collapse`] first.
    pub fn collapse(&mut self, keep: u32, gone: u32, p: Vec3) {
        for f in self.edge_faces(keep, gone) {
            self.kill_face(f);
        }
        let moved = std::mem::take(&mut self.vfaces[gone as usize]);
        for f in moved {
            for v in self.faces[f].iter_mut() {
                if *v == gone {
                    *v = keep;
                }
            }
            self.vfaces[keep as usize].push(f);
        }
        self.vfaces[keep as usize].sort_unstable();
        self.pos[keep as usize] = p;
        self.vert_alive[gone as usize] = false;
    }

    fn kill_face(&mut self, f: usize) {
        if !self.face_alive[f] {
            return;
        }
        self.face_alive[f] = false;
        self.live_faces -= 1;
        for v in self.faces[f] {
            self.vfaces[v as usize].retain(|&g| g != f);
        }
    }

    fn add_face(&mut self, t: [u32; 3], editable: bool) -> usize {
        let f = self.faces.len();
        self.faces.push(t);
        self.face_alive.push(true);
        self.editable.push(editable);
        for v in t {
            self.vfaces[v as usize].push(f);
        }
        self.live_faces += 1;
        f
    }

    fn set_face(&mut self, f: usize, t: [u32; 3]) {
        for v in self.faces[f] {
            self.vfaces[v as usize].retain(|&g| g != f);
        }
        self.faces[f] = t;
        for v in t {
            self.vfaces[v as usize].push(f);
            self.vfaces[v as usize].sort_unstable();
        }
    }

    pub fn add_vertex(&mut self, p: Vec3) -> u32 {
        self.pos.push(p);
        self.vert_alive.push(true);
        self.pinned.push(false);
        self.vfaces.push(Vec::new());
        self.pos.len() as u32 - 1
    }

    /// Inserts the midpoint of edge `a-b`, splitting each incident face in two.
    pub fn split_edge(&mut self, a: u32, b: u32) -> u32 {
        let faces = self.edge_faces(a, b);
        let m = self.add_vertex((self.pos[a as usize] + self.pos[b as usize]) / 2.0);
        for f in faces {
            let t = self.faces[f];
            let i = (0..3).find(|&i| t[i] != a && t[i] != b).unwrap();
            let c = t[i];
            // rotate so the face reads (x, y, c)
            let (x, y) = (t[(i + 1) % 3], t[(i + 2) % 3]);
            let ed = self.editable[f];
            self.set_face(f, [x, m, c]);
            self.add_face([m, y, c], ed);
        }
        m
    }

    /// Replaces the diagonal `a-b` of its two faces by the other diagonal.
    /// Returns false when the flip is not possible.
    pub fn flip_edge(&mut self, a: u32, b: u32) -> bool {
        let Some((f1, f2, c, d)) = self.flip_candidates(a, b) else {
            return false;
        };
        // f1 reads (p, q, c) with p→q the shared edge; f2 reads (q, p, d)
        let t = self.faces[f1];
        let i = (0..3).find(|&i| t[i] == c).unwrap();
        let (p, q) = (t[(i + 1) % 3], t[(i + 2) % 3]);
        self.set_face(f1, [p, d, c]);
        self.set_face(f2, [d, q, c]);
        true
    }

    /// Faces and opposite corners of a flippable interior edge.
    pub fn flip_candidates(&self, a: u32, b: u32) -> Option<(usize, usize, u32, u32)> {
        let f = self.edge_faces(a, b);
        if f.len() != 2 || !self.editable[f[0]] || !self.editable[f[1]] {
            return None;
        }
        let opp = |f: usize| *self.faces[f].iter().find(|&&v| v != a && v != b).unwrap();
        let (c, d) = (opp(f[0]), opp(f[1]));
        if c == d || self.neighbors(c).binary_search(&d).is_ok() {
            return None;
        }
        Some((f[0], f[1], c, d))
    }

    /// Normals of the two faces a flip would create, for validity checks.
    pub fn flipped_normals(&self, a: u32, b: u32) -> Option<(Vec3, Vec3, Vec3, Vec3)> {
        let (f1, f2, c, d) = self.flip_candidates(a, b)?;
        let t = self.faces[f1];
        let i = (0..3).find(|&i| t[i] == c).unwrap();
        let (p, q) = (t[(i + 1) % 3], t[(i + 2) % 3]);
        let at = |v: u32| self.pos[v as usize];
        let n1 = triangle_normal(&at(p), &at(d), &at(c));
        let n2 = triangle_normal(&at(d), &at(q), &at(c));
        Some((self.face_normal(f1), self.face_normal(f2), n1, n2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshops::mesh::icosphere;

    #[test]
    fn split_and_flip_keep_manifold() {
        let mut e = EditMesh::from_mesh(&icosphere(1));
        let (a, b) = e.edges()[0];
        let before = e.live_face_count();
        e.split_edge(a, b);
        assert_eq!(e.live_face_count(), before + 2);
        let m = e.to_mesh();
        let r = m.audit();
        assert!(r.is_ok() && r.boundary_edges == 0);
        assert!(m.signed_volume() > 0.0);
        let mut e = EditMesh::from_mesh(&m);
        let (a, b) = e.edges()[3];
        assert!(e.flip_edge(a, b));
        let r = e.to_mesh().audit();
        assert!(r.is_ok() && r.boundary_edges == 0 && r.duplicate_faces == 0);
    }

    #[test]
    fn collapse_reduces_two_faces() {
        let mut e = EditMesh::from_mesh(&icosphere(2));
        let (a, b) = e.edges()[10];
        let p = (e.pos[a as usize] + e.pos[b as usize]) / 2.0;
        assert!(e.can_collapse(a, b, &p));
        e.collapse(a, b, p);
        let m = e.to_mesh();
        assert_eq!(m.faces.len(), 318);
        let r = m.audit();
        assert!(r.is_ok() && r.boundary_edges == 0 && r.duplicate_faces == 0);
    }

    #[test]
    fn pinned_vertex_cannot_move() {
        let mut e = EditMesh::from_mesh(&icosphere(1));
        let (a, b) = e.edges()[0];
        e.pinned[b as usize] = true;
        let mid = (e.pos[a as usize] + e.pos[b as usize]) / 2.0;
        assert!(!e.can_collapse(a, b, &mid));
        e.pinned[a as usize] = true;
        e.pinned[b as usize] = false;
        assert!(!e.can_collapse(a, b, &mid));
    }
}
