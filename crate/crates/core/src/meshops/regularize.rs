//! Smoothness and offset-magnitude penalties on vertex offsets.

use super::mesh::TriMesh;
use crate::math::Vec3;

/// `(1/N) Σ_i (1/|S_i|) Σ_{j∈S_i} ‖p_i − p_j‖²` over effective positions,
/// with its gradient with respect to the offsets.
pub fn laplacian_loss(mesh: &TriMesh) -> (f64, Vec<Vec3>) {
    let n = mesh.vertices.len();
    let mut grad = vec![Vec3::zeros(); n];
    if n == 0 {
        return (0.0, grad);
    }
    let p = mesh.positions();
    let nb = mesh.vertex_neighbors();
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        if nb[i].is_empty() {
            continue;
        }
        let w = inv_n / nb[i].len() as f64;
        for &j in &nb[i] {
            let d = p[i] - p[j as usize];
            total += w * d.norm_squared();
            grad[i] += d * (2.0 * w);
            grad[j as usize] -= d * (2.0 * w);
        }
    }
    (total, grad)
}

/// Mean over vertices of `‖Δv_i‖²` and its gradient `2Δv_i / N`.
pub fn offset_loss(mesh: &TriMesh) -> (f64, Vec<Vec3>) {
    let n = mesh.offsets.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let nf = n as f64;
    let v = mesh.offsets.iter().map(|o| o.norm_squared()).sum::<f64>() / nf;
    (v, mesh.offsets.iter().map(|o| o * (2.0 / nf)).collect())
}
