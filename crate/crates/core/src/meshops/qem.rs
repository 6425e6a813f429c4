//! Quadric-error-metric edge-collapse simplification.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::edit::EditMesh;
use super::mesh::TriMesh;
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct DecimateResult {
    pub mesh: TriMesh,
    pub achieved_faces: usize,
    /// Set when the target could not be reached without invalid collapses.
    pub best_effort: bool,
}

/// Collapses edges until at most `target_faces` faces remain.
pub fn decimate(mesh: &TriMesh, target_faces: usize) -> DecimateResult {
    if target_faces >= mesh.faces.len() {
        return DecimateResult {
            mesh: mesh.clone(),
            achieved_faces: mesh.faces.len(),
            best_effort: false,
        };
    }
    let mut em = EditMesh::from_mesh(mesh);
    let live = em.live_face_count();
    collapse_to(&mut em, target_faces, live);
    let out = em.to_mesh();
    DecimateResult {
        achieved_faces: out.faces.len(),
        best_effort: out.faces.len() > target_faces,
        mesh: out,
    }
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp: (u32, u32),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on cost, ties broken by vertex ids
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| (o.a, o.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn plane_quadric(n: &Vec3, p: &Vec3, w: f64) -> Matrix4<f64> {
    let q = Vector4::new(n.x, n.y, n.z, -n.dot(p));
    q * q.transpose() * w
}

fn quadric_cost(q: &Matrix4<f64>, p: &Vec3) -> f64 {
    let h = Vector4::new(p.x, p.y, p.z, 1.0);
    (h.transpose() * q * h)[0].max(0.0)
}

/// Editable-face quadrics per vertex, with heavy perpendicular planes along
/// boundary edges so open borders keep their shape.
fn vertex_quadrics(em: &EditMesh) -> Vec<Matrix4<f64>> {
    let mut q = vec![Matrix4::zeros(); em.pos.len()];
    for f in 0..em.faces.len() {
        if !em.face_alive[f] {
            continue;
        }
        let n = em.face_normal(f);
        let area = 0.5 * n.norm();
        if area <= 0.0 {
            continue;
        }
        let nu = n.normalize();
        let t = em.faces[f];
        let k = plane_quadric(&nu, &em.pos[t[0] as usize], area);
        for v in t {
            q[v as usize] += k;
        }
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if em.edge_faces(a, b).len() == 1 {
                let e = em.pos[b as usize] - em.pos[a as usize];
                let side = e.cross(&nu);
                if side.norm() > 0.0 {
                    let k = plane_quadric(
                        &side.normalize(),
                        &em.pos[a as usize],
                        100.0 * e.norm_squared(),
                    );
                    q[a as usize] += k;
                    q[b as usize] += k;
                }
            }
        }
    }
    q
}

/// Best collapse of edge `a-b`: which vertex survives, where, and at what cost.
fn plan(em: &EditMesh, q: &[Matrix4<f64>], a: u32, b: u32) -> Option<(u32, u32, Vec3, f64)> {
    let (pa, pb) = (em.pinned[a as usize], em.pinned[b as usize]);
    if pa && pb {
        return None;
    }
    let qs = q[a as usize] + q[b as usize];
    let (xa, xb) = (em.pos[a as usize], em.pos[b as usize]);
    if pa || pb {
        let (keep, gone, p) = if pa { (a, b, xa) } else { (b, a, xb) };
        return Some((keep, gone, p, quadric_cost(&qs, &p)));
    }
    let mid = (xa + xb) / 2.0;
    let mut best = [
        (xa, quadric_cost(&qs, &xa)),
        (xb, quadric_cost(&qs, &xb)),
        (mid, quadric_cost(&qs, &mid)),
    ]
    .into_iter()
    .min_by(|x, y| x.1.total_cmp(&y.1))
    .unwrap();
    let m3: Matrix3<f64> = qs.fixed_view::<3, 3>(0, 0).into();
    let rhs = -Vec3::new(qs[(0, 3)], qs[(1, 3)], qs[(2, 3)]);
    let scale = m3.abs().max();
    if scale > 0.0 && m3.determinant().abs() > 1e-9 * scale.powi(3) {
        if let Some(inv) = m3.try_inverse() {
            let x = inv * rhs;
            let len = (xa - xb).norm();
            if (x - mid).norm() <= 2.0 * len {
                let c = quadric_cost(&qs, &x);
                if c <= best.1 {
                    best = (x, c);
                }
            }
        }
    }
    Some((a, b, best.0, best.1))
}

/// Collapses editable edges in order of increasing quadric error until the
/// number of live editable faces is at most `target`. Returns the count reached.
pub(crate) fn collapse_to(em: &mut EditMesh, target: usize, editable_faces: usize) -> usize {
    let mut q = vertex_quadrics(em);
    let mut stamp = vec![0u32; em.pos.len()];
    let mut heap = BinaryHeap::new();
    let push = |em: &EditMesh,
                q: &[Matrix4<f64>],
                stamp: &[u32],
                heap: &mut BinaryHeap<Candidate>,
                a: u32,
                b: u32| {
        if !em.edge_editable(a, b) {
            return;
        }
        if let Some((_, _, _, cost)) = plan(em, q, a, b) {
            heap.push(Candidate {
                cost,
                a,
                b,
                stamp: (stamp[a as usize], stamp[b as usize]),
            });
        }
    };
    for (a, b) in em.edges() {
        push(em, &q, &stamp, &mut heap, a, b);
    }
    let mut count = editable_faces;
    while count > target {
        let Some(c) = heap.pop() else { break };
        let (a, b) = (c.a, c.b);
        if !em.vert_alive[a as usize]
            || !em.vert_alive[b as usize]
            || c.stamp != (stamp[a as usize], stamp[b as usize])
        {
            continue;
        }
        let Some((keep, gone, p, _)) = plan(em, &q, a, b) else {
            continue;
        };
        if !em.can_collapse(keep, gone, &p) {
            continue;
        }
        let removed = em.edge_faces(keep, gone).len();
        em.collapse(keep, gone, p);
        count -= removed;
        let merged = q[keep as usize] + q[gone as usize];
        q[keep as usize] = merged;
        stamp[keep as usize] += 1;
        for n in em.neighbors(keep) {
            stamp[n as usize] += 1;
        }
        for n in em.neighbors(keep) {
            push(em, &q, &stamp, &mut heap, keep.min(n), keep.max(n));
            for m in em.neighbors(n) {
                if m != keep {
                    push(em, &q, &stamp, &mut heap, n.min(m), n.max(m));
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshops::mesh::icosphere;

    #[test]
    fn target_above_count_is_identity() {
        let m = icosphere(1);
        let r = decimate(&m, 1000);
        assert_eq!(r.mesh, m);
        assert!(!r.best_effort);
    }

    #[test]
    fn sphere_decimation_keeps_shape() {
        let m = icosphere(3);
        assert_eq!(m.faces.len(), 1280);
        let r = decimate(&m, 320);
        assert!(r.achieved_faces <= 320 || r.best_effort);
        assert!(r.achieved_faces <= 320);
        let a = r.mesh.audit();
        assert!(
            a.is_ok() && a.boundary_edges == 0 && a.duplicate_faces == 0,
            "{a:?}"
        );
        for v in &r.mesh.vertices {
            assert!((v.norm() - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn infeasible_target_is_best_effort() {
        let r = decimate(&icosphere(0), 0);
        assert!(r.best_effort);
        assert!(r.achieved_faces >= 4);
        assert!(r.mesh.audit().is_ok());
    }
}
