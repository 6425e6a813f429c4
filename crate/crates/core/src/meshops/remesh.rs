//! Isotropic remeshing of a face region toward a target edge length.

use super::edit::{EditMesh, MIN_NORMAL_DOT};
use super::mesh::TriMesh;
use super::qem::collapse_to;
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct RemeshResult {
    pub mesh: TriMesh,
    pub region_faces_before: usize,
    pub region_faces_after: usize,
    /// Vertex indices in the output that were held fixed.
    pub pinned: Vec<u32>,
}

const ITERATIONS: usize = 5;

/// Remeshes the faces in `face_ids`. Vertices on the region border or on an
/// open mesh boundary never move. The region is first simplified with quadric
/// collapses to roughly its area divided by the area of an equilateral
/// triangle with side `target_edge`, then refined by rounds of long-edge
/// splits, short-edge collapses, valence-improving flips and tangential
/// smoothing.
pub fn remesh_region(mesh: &TriMesh, face_ids: &[usize], target_edge: f64) -> RemeshResult {
    let mut em = EditMesh::from_mesh(mesh);
    em.editable.fill(false);
    for &f in face_ids {
        if f < em.editable.len() {
            em.editable[f] = true;
        }
    }
    let region_before = em.editable.iter().filter(|&&e| e).count();
    for v in 0..em.pos.len() as u32 {
        let fs = em.vertex_faces(v);
        let border = fs.iter().any(|&f| !em.editable[f]);
        em.pinned[v as usize] = fs.is_empty() || border || em.is_boundary_vertex(v);
    }
    if region_before == 0 || !(target_edge > 0.0) {
        return finish(&em, region_before);
    }

    let area: f64 = (0..em.faces.len())
        .filter(|&f| em.editable[f])
        .map(|f| em.face_area(f))
        .sum();
    let ideal = 3f64.sqrt() / 4.0 * target_edge * target_edge;
    let target_faces = ((area / ideal).ceil() as usize).max(1);
    if region_before > target_faces {
        collapse_to(&mut em, target_faces, region_before);
    }

    let hi = 4.0 / 3.0 * target_edge;
    let lo = 4.0 / 5.0 * target_edge;
    for _ in 0..ITERATIONS {
        split_long(&mut em, hi);
        collapse_short(&mut em, lo, hi);
        flip_for_valence(&mut em);
        relax(&mut em);
    }
    finish(&em, region_before)
}

fn finish(em: &EditMesh, region_before: usize) -> RemeshResult {
    let region_after = (0..em.faces.len())
        .filter(|&f| em.face_alive[f] && em.editable[f])
        .count();
    let mesh = em.to_mesh();
    // to_mesh keeps live vertices in order; recover the pinned flags
    let mut used = vec![false; em.pos.len()];
    for f in 0..em.faces.len() {
        if em.face_alive[f] {
            em.faces[f].iter().for_each(|&v| used[v as usize] = true);
        }
    }
    let mut pinned = Vec::new();
    let mut k = 0u32;
    for v in 0..em.pos.len() {
        if used[v] {
            if em.pinned[v] {
                pinned.push(k);
            }
            k += 1;
        }
    }
    RemeshResult {
        mesh,
        region_faces_before: region_before,
        region_faces_after: region_after,
        pinned,
    }
}

fn interior_region_edges(em: &EditMesh) -> Vec<(u32, u32)> {
    em.edges()
        .into_iter()
        .filter(|&(a, b)| {
            let f = em.edge_faces(a, b);
            f.len() == 2 && f.iter().all(|&g| em.editable[g])
        })
        .collect()
}

fn split_long(em: &mut EditMesh, hi: f64) {
    let mut edges: Vec<(f64, u32, u32)> = interior_region_edges(em)
        .into_iter()
        .map(|(a, b)| (em.edge_length(a, b), a, b))
        .filter(|e| e.0 > hi)
        .collect();
    edges.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    for (_, a, b) in edges {
        if em.edge_faces(a, b).len() == 2 && em.edge_length(a, b) > hi {
            em.split_edge(a, b);
        }
    }
}

fn collapse_short(em: &mut EditMesh, lo: f64, hi: f64) {
    let mut edges: Vec<(f64, u32, u32)> = interior_region_edges(em)
        .into_iter()
        .map(|(a, b)| (em.edge_length(a, b), a, b))
        .filter(|e| e.0 < lo)
        .collect();
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    for (_, a, b) in edges {
        if !em.vert_alive[a as usize]
            || !em.vert_alive[b as usize]
            || em.edge_faces(a, b).len() != 2
        {
            continue;
        }
        if em.edge_length(a, b) >= lo {
            continue;
        }
        let (pa, pb) = (em.pinned[a as usize], em.pinned[b as usize]);
        let (keep, gone, p) = match (pa, pb) {
            (true, true) => continue,
            (true, false) => (a, b, em.pos[a as usize]),
            (false, true) => (b, a, em.pos[b as usize]),
            (false, false) => (a, b, (em.pos[a as usize] + em.pos[b as usize]) / 2.0),
        };
        // do not create edges longer than the split threshold
        let too_long = em
            .neighbors(gone)
            .into_iter()
            .chain(em.neighbors(keep))
            .any(|n| n != keep && n != gone && (em.pos[n as usize] - p).norm() > hi);
        if too_long || !em.can_collapse(keep, gone, &p) {
            continue;
        }
        em.collapse(keep, gone, p);
    }
}

fn target_valence(em: &EditMesh, v: u32) -> i64 {
    if em.is_boundary_vertex(v) {
        4
    } else {
        6
    }
}

fn flip_for_valence(em: &mut EditMesh) {
    for (a, b) in interior_region_edges(em) {
        let Some((_, _, c, d)) = em.flip_candidates(a, b) else {
            continue;
        };
        let val = |em: &EditMesh, v: u32| em.neighbors(v).len() as i64;
        let dev = |em: &EditMesh, shift: [i64; 4]| -> i64 {
            [a, b, c, d]
                .iter()
                .zip(shift)
                .map(|(&v, s)| (val(em, v) + s - target_valence(em, v)).abs())
                .sum()
        };
        let before = dev(em, [0; 4]);
        let after = dev(em, [-1, -1, 1, 1]);
        if after >= before {
            continue;
        }
        let Some((o1, o2, n1, n2)) = em.flipped_normals(a, b) else {
            continue;
        };
        let avg = o1 + o2;
        let ok = [n1, n2].iter().all(|n| {
            let (ln, la) = (n.norm(), avg.norm());
            ln > 0.0 && la > 0.0 && n.dot(&avg) / (ln * la) > 0.9
        }) && o1.dot(&o2) > 0.0;
        if ok {
            em.flip_edge(a, b);
        }
    }
}

fn relax(em: &mut EditMesh) {
    let n = em.pos.len();
    let mut moves: Vec<(u32, Vec3)> = Vec::new();
    for v in 0..n as u32 {
        if !em.vert_alive[v as usize] || em.pinned[v as usize] || em.vertex_faces(v).is_empty() {
            continue;
        }
        if em.vertex_faces(v).iter().any(|&f| !em.editable[f]) {
            continue;
        }
        let nb = em.neighbors(v);
        let c = nb.iter().map(|&w| em.pos[w as usize]).sum::<Vec3>() / nb.len() as f64;
        let normal = em
            .vertex_faces(v)
            .iter()
            .map(|&f| em.face_normal(f))
            .sum::<Vec3>();
        if normal.norm() == 0.0 {
            continue;
        }
        let nn = normal.normalize();
        let p = em.pos[v as usize];
        let d = c - p;
        moves.push((v, p + d - nn * d.dot(&nn)));
    }
    for (v, target) in moves {
        let old = em.pos[v as usize];
        let normals: Vec<Vec3> = em
            .vertex_faces(v)
            .iter()
            .map(|&f| em.face_normal(f))
            .collect();
        em.pos[v as usize] = target;
        let ok = em.vertex_faces(v).iter().zip(&normals).all(|(&f, o)| {
            let n = em.face_normal(f);
            let (ln, lo) = (n.norm(), o.norm());
            ln > 1e-14 && n.dot(o) / (ln * lo) >= MIN_NORMAL_DOT
        });
        if !ok {
            em.pos[v as usize] = old;
        }
    }
}
