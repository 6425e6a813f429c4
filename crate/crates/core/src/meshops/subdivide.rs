//! Midpoint subdivision of selected faces with crack-free neighbor splits.

use std::collections::{BTreeSet, HashMap};

use super::mesh::{edge_key, TriMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct SubdivideResult {
    pub mesh: TriMesh,
    /// For every output face, the input face it came from.
    pub parent: Vec<usize>,
    /// Selected faces actually split 1→4.
    pub split_faces: usize,
}

/// Splits each selected face whose edges are all at least `min_edge` long into
/// four at its edge midpoints. Unselected faces touching split edges are cut
/// into two or three so no T-junctions remain. New vertices take the midpoint
/// of both the base positions and the offsets.
pub fn midpoint_subdivide(mesh: &TriMesh, face_ids: &[usize], min_edge: f64) -> SubdivideResult {
    let selected: BTreeSet<usize> = face_ids
        .iter()
        .copied()
        .filter(|&f| f < mesh.faces.len())
        .filter(|&f| {
            let t = mesh.faces[f];
            (0..3).all(|i| (mesh.position(t[i]) - mesh.position(t[(i + 1) % 3])).norm() >= min_edge)
        })
        .collect();
    let mut out = mesh.clone();
    out.faces.clear();
    let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
    for &f in &selected {
        let t = mesh.faces[f];
        for i in 0..3 {
            let k = edge_key(t[i], t[(i + 1) % 3]);
            mid.entry(k).or_insert(u32::MAX);
        }
    }
    // assign midpoint vertices in sorted edge order for determinism
    let mut keys: Vec<(u32, u32)> = mid.keys().copied().collect();
    keys.sort_unstable();
    for k in keys {
        let (a, b) = (k.0 as usize, k.1 as usize);
        out.vertices
            .push((mesh.vertices[a] + mesh.vertices[b]) / 2.0);
        out.offsets.push((mesh.offsets[a] + mesh.offsets[b]) / 2.0);
        mid.insert(k, out.vertices.len() as u32 - 1);
    }

    let eff = out.positions();
    let mut parent = Vec::with_capacity(mesh.faces.len() + 3 * selected.len());
    let mut split_faces = 0;
    for (f, &t) in mesh.faces.iter().enumerate() {
        let m: [Option<u32>; 3] =
            std::array::from_fn(|i| mid.get(&edge_key(t[i], t[(i + 1) % 3])).copied());
        let n_split = m.iter().filter(|x| x.is_some()).count();
        let mut push = |tri: [u32; 3]| {
            out.faces.push(tri);
            parent.push(f);
        };
        match n_split {
            0 => push(t),
            3 => {
                let (ab, bc, ca) = (m[0].unwrap(), m[1].unwrap(), m[2].unwrap());
                push([t[0], ab, ca]);
                push([ab, t[1], bc]);
                push([ca, bc, t[2]]);
                push([ab, bc, ca]);
                if selected.contains(&f) {
                    split_faces += 1;
                }
            }
            1 => {
                let i = (0..3).find(|&i| m[i].is_some()).unwrap();
                let (a, b, c) = (t[i], t[(i + 1) % 3], t[(i + 2) % 3]);
                let x = m[i].unwrap();
                push([a, x, c]);
                push([x, b, c]);
            }
            _ => {
                // the unsplit edge is c→a; split edges a→b and b→c
                let i = (0..3).find(|&i| m[i].is_none()).unwrap();
                let (c, a, b) = (t[i], t[(i + 1) % 3], t[(i + 2) % 3]);
                let mab = m[(i + 1) % 3].unwrap();
                let mbc = m[(i + 2) % 3].unwrap();
                push([mab, b, mbc]);
                let d1 = (eff[a as usize] - eff[mbc as usize]).norm();
                let d2 = (eff[mab as usize] - eff[c as usize]).norm();
                if d1 <= d2 {
                    push([a, mab, mbc]);
                    push([a, mbc, c]);
                } else {
                    push([a, mab, c]);
                    push([mab, mbc, c]);
                }
            }
        }
    }
    SubdivideResult {
        mesh: out,
        parent,
        split_faces,
    }
}
