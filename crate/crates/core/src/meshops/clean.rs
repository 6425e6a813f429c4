//! Mesh repair: vertex welding, removal of degenerate and duplicate faces,
//! non-manifold repair and floater removal.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use crate::math::{Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CleanParams {
    /// Weld distance as a fraction of the bounding-box diagonal.
    pub merge_eps_rel: f64,
    /// Components with fewer faces than this and a smaller diameter are dropped.
    pub min_component_faces: usize,
    /// Diameter threshold as a fraction of the bounding-box diagonal.
    pub min_component_diameter_rel: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self {
            merge_eps_rel: 1e-5,
            min_component_faces: 64,
            min_component_diameter_rel: 0.05,
        }
    }
}

/// Cleans with thresholds scaled by the mesh's bounding-box diagonal.
pub fn clean_mesh_relative(mesh: &TriMesh, p: &CleanParams) -> TriMesh {
    let diag = mesh.bbox().diagonal();
    let diag = if diag.is_finite() && diag > 0.0 {
        diag
    } else {
        1.0
    };
    clean_mesh(
        mesh,
        p.merge_eps_rel * diag,
        p.min_component_faces,
        p.min_component_diameter_rel * diag,
    )
}

/// Offsets are folded into positions first; the result has zero offsets.
pub fn clean_mesh(
    mesh: &TriMesh,
    merge_eps: f64,
    min_component_faces: usize,
    min_component_diameter: f64,
) -> TriMesh {
    let mut m = mesh.clone();
    m.apply_offsets();
    let mut m = weld_vertices(&m, merge_eps);
    drop_degenerate_and_duplicates(&mut m);
    drop_overshared_edges(&mut m);
    split_nonmanifold_vertices(&mut m);
    let m = remove_small_components(m, min_component_faces, min_component_diameter);
    m.compact()
}

/// Maps every vertex to the lowest-indexed representative within `eps`.
/// Representatives are vertices that had no earlier representative nearby,
/// so they are pairwise at least `eps` apart.
pub fn weld_vertices(m: &TriMesh, eps: f64) -> TriMesh {
    let n = m.vertices.len();
    let mut remap: Vec<u32> = (0..n as u32).collect();
    if eps > 0.0 {
        let cell = |p: &Vec3| -> [i64; 3] { std::array::from_fn(|a| (p[a] / eps).floor() as i64) };
        let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for i in 0..n {
            let p = m.vertices[i];
            let c = cell(&p);
            let mut rep: Option<u32> = None;
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        for &j in list {
                            if (m.vertices[j as usize] - p).norm() < eps
                                && rep.map_or(true, |r| j < r)
                            {
                                rep = Some(j);
                            }
                        }
                    }
                }
            }
            match rep {
                Some(r) => remap[i] = r,
                None => grid.entry(c).or_default().push(i as u32),
            }
        }
    }
    let faces = m
        .faces
        .iter()
        .map(|t| {
            [
                remap[t[0] as usize],
                remap[t[1] as usize],
                remap[t[2] as usize],
            ]
        })
        .collect();
    TriMesh {
        vertices: m.vertices.clone(),
        faces,
        offsets: m.offsets.clone(),
    }
}

/// Drops faces with a repeated index or zero area, then faces whose vertex set
/// repeats an earlier face.
pub fn drop_degenerate_and_duplicates(m: &mut TriMesh) {
    let mut seen = HashSet::new();
    let mut keep = Vec::with_capacity(m.faces.len());
    for (f, t) in m.faces.iter().enumerate() {
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] || !(m.face_area(f) > 0.0) {
            continue;
        }
        let mut k = *t;
        k.sort_unstable();
        if seen.insert(k) {
            keep.push(*t);
        }
    }
    m.faces = keep;
}

/// While an edge has more than two incident faces, deletes the smallest-area
/// one (lowest index on ties).
pub fn drop_overshared_edges(m: &mut TriMesh) {
    loop {
        let ef = m.edge_faces();
        let mut dead = HashSet::new();
        for faces in ef.values() {
            let live: Vec<usize> = faces
                .iter()
                .copied()
                .filter(|f| !dead.contains(f))
                .collect();
            if live.len() > 2 {
                let victim = *live
                    .iter()
                    .min_by(|&&a, &&b| m.face_area(a).total_cmp(&m.face_area(b)).then(a.cmp(&b)))
                    .unwrap();
                dead.insert(victim);
            }
        }
        if dead.is_empty() {
            return;
        }
        let faces = std::mem::take(&mut m.faces);
        m.faces = faces
            .into_iter()
            .enumerate()
            .filter(|(f, _)| !dead.contains(f))
            .map(|(_, t)| t)
            .collect();
    }
}

/// Gives every edge-connected fan around a vertex its own copy of the vertex.
/// The fan containing the lowest face index keeps the original.
pub fn split_nonmanifold_vertices(m: &mut TriMesh) {
    let vf = m.vertex_faces();
    for (v, faces) in vf.iter().enumerate() {
        if faces.len() < 2 {
            continue;
        }
        // union faces around v that share an edge through v
        let mut parent: Vec<usize> = (0..faces.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut by_other: BTreeMap<u32, usize> = BTreeMap::new();
        for (k, &f) in faces.iter().enumerate() {
            for &w in &m.faces[f] {
                if w as usize == v {
                    continue;
                }
                match by_other.get(&w) {
                    Some(&j) => {
                        let (a, b) = (find(&mut parent, j), find(&mut parent, k));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                    None => {
                        by_other.insert(w, k);
                    }
                }
            }
        }
        let mut copy_of_root: BTreeMap<usize, u32> = BTreeMap::new();
        for k in 0..faces.len() {
            let root = find(&mut parent, k);
            if root == 0 {
                continue;
            }
            let nv = *copy_of_root.entry(root).or_insert_with(|| {
                m.vertices.push(m.vertices[v]);
                m.offsets.push(m.offsets[v]);
                m.vertices.len() as u32 - 1
            });
            for idx in m.faces[faces[k]].iter_mut() {
                if *idx as usize == v {
                    *idx = nv;
                }
            }
        }
    }
}

/// Removes components that have fewer than `min_faces` faces and a bounding
/// diagonal below `min_diameter`.
pub fn remove_small_components(m: TriMesh, min_faces: usize, min_diameter: f64) -> TriMesh {
    let comps = m.components();
    let mut keep = vec![true; m.faces.len()];
    for c in comps {
        let mut b = Aabb::empty();
        for &f in &c {
            for p in m.corners(f) {
                b.grow(&p);
            }
        }
        if c.len() < min_faces && b.diagonal() < min_diameter {
            c.iter().for_each(|&f| keep[f] = false);
        }
    }
    let faces = m
        .faces
        .iter()
        .enumerate()
        .filter(|(f, _)| keep[*f])
        .map(|(_, t)| *t)
        .collect();
    TriMesh { faces, ..m }
}

/// True when no two distinct vertices of `m` lie closer than `eps`.
pub fn min_vertex_separation_at_least(m: &TriMesh, eps: f64) -> bool {
    let w = weld_vertices(m, eps);
    w.faces == m.faces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshops::mesh::icosphere;

    #[test]
    fn coincident_vertices_merge() {
        let m = TriMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::x() + Vec3::repeat(1e-9),
                Vec3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 2]],
        );
        let c = clean_mesh(&m, 1e-6, 0, 0.0);
        assert_eq!(c.vertices.len(), 4);
        assert_eq!(c.faces.len(), 2);
        assert_eq!(c.faces[1], [1, 3, 2]);
    }

    #[test]
    fn floater_removed() {
        let mut m = icosphere(2);
        let base = m.vertices.len() as u32;
        m.vertices.extend([
            Vec3::new(5.0, 5.0, 5.0),
            Vec3::new(5.01, 5.0, 5.0),
            Vec3::new(5.0, 5.01, 5.0),
            Vec3::new(5.01, 5.01, 5.0),
        ]);
        m.offsets.extend([Vec3::zeros(); 4]);
        m.faces
            .extend([[base, base + 1, base + 2], [base + 1, base + 3, base + 2]]);
        let c = clean_mesh(&m, 1e-6, 10, 0.5);
        assert_eq!(c.faces.len(), 320);
        assert_eq!(c.vertices.len(), 162);
    }

    #[test]
    fn overshared_edge_and_bowtie_repaired() {
        // three faces on edge 0-1, plus a bowtie at vertex 0
        let m = TriMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::z(),
                Vec3::new(0.5, -0.1, 0.0),
                Vec3::new(-1.0, -1.0, 0.5),
                Vec3::new(-1.0, -2.0, 0.5),
            ],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4], [0, 5, 6]],
        );
        let c = clean_mesh(&m, 1e-9, 0, 0.0);
        let a = c.audit();
        assert!(a.is_ok(), "{a:?}");
        assert_eq!(c.faces.len(), 3);
        // the bowtie fan got its own copy of vertex 0
        let vf = c.vertex_faces();
        assert!(vf.iter().all(|f| f.len() <= 2));
    }

    #[test]
    fn idempotent() {
        let mut m = icosphere(2);
        m.vertices[5] = m.vertices[6] + Vec3::repeat(1e-8);
        let once = clean_mesh(&m, 1e-6, 4, 0.1);
        let twice = clean_mesh(&once, 1e-6, 4, 0.1);
        assert_eq!(once, twice);
        assert!(once.audit().is_ok());
    }
}
