//! Removal of faces that no training camera sees.

use super::bvh::Bvh;
use super::mesh::TriMesh;
use crate::par;
use crate::scene::CameraModel;

#[derive(Debug, Clone, PartialEq)]
pub struct CullResult {
    pub mesh: TriMesh,
    /// Set when there were no cameras and the mesh was returned unchanged.
    pub no_cameras: bool,
    pub retained: usize,
    pub removed: usize,
}

/// Per-face flags: hit first by at least one pixel-center ray of any camera.
pub fn visible_faces(mesh: &TriMesh, cameras: &[CameraModel]) -> Vec<bool> {
    let bvh = Bvh::new(mesh);
    let mut vis = vec![false; mesh.faces.len()];
    for cam in cameras {
        let w = cam.width as usize;
        let hits = par::map_chunks(cam.pixel_count(), 1024, |r| {
            r.filter_map(|i| {
                bvh.intersect(&cam.ray((i % w) as u32, (i / w) as u32, (0.0, 0.0)))
                    .map(|h| h.face)
            })
            .collect::<Vec<_>>()
        });
        for f in hits.into_iter().flatten() {
            vis[f] = true;
        }
    }
    vis
}

/// Grows a face set `rounds` times over faces that share a vertex.
pub fn dilate_faces(mesh: &TriMesh, mut mask: Vec<bool>, rounds: usize) -> Vec<bool> {
    let vf = mesh.vertex_faces();
    for _ in 0..rounds {
        let mut vert = vec![false; mesh.vertices.len()];
        for (f, tri) in mesh.faces.iter().enumerate() {
            if mask[f] {
                tri.iter().for_each(|&v| vert[v as usize] = true);
            }
        }
        for (v, faces) in vf.iter().enumerate() {
            if vert[v] {
                faces.iter().for_each(|&f| mask[f] = true);
            }
        }
    }
    mask
}

/// Keeps faces seen by some camera, dilated `kernel` rounds, and drops
/// vertices left unreferenced.
pub fn visibility_cull(mesh: &TriMesh, cameras: &[CameraModel], kernel: usize) -> CullResult {
    if cameras.is_empty() {
        log::warn!("visibility culling skipped: no cameras");
        return CullResult {
            mesh: mesh.clone(),
            no_cameras: true,
            retained: mesh.faces.len(),
            removed: 0,
        };
    }
    let mask = dilate_faces(mesh, visible_faces(mesh, cameras), kernel);
    let out = mesh.retain_faces(|f| mask[f]);
    CullResult {
        retained: out.faces.len(),
        removed: mesh.faces.len() - out.faces.len(),
        mesh: out,
        no_cameras: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::meshops::mesh::icosphere;

    fn cam_at(eye: Vec3) -> CameraModel {
        let up = if eye.x.abs() < 1e-9 && eye.y.abs() < 1e-9 {
            Vec3::y()
        } else {
            Vec3::z()
        };
        CameraModel::look_at(eye, Vec3::zeros(), up, 48, 48, 0.9).unwrap()
    }

    #[test]
    fn single_camera_keeps_front_only() {
        let m = icosphere(3);
        let r = visibility_cull(&m, &[cam_at(Vec3::new(0.0, 0.0, 3.0))], 0);
        assert!(r.retained > 0 && r.removed > 0);
        for f in 0..r.mesh.faces.len() {
            assert!(r.mesh.corners(f).iter().any(|p| p.z >= 0.0));
        }
    }

    #[test]
    fn dilation_is_monotone() {
        let m = icosphere(3);
        let vis = visible_faces(&m, &[cam_at(Vec3::new(0.0, 0.0, 3.0))]);
        let mut prev = vis.clone();
        for k in 1..4 {
            let cur = dilate_faces(&m, vis.clone(), k);
            assert!(prev.iter().zip(&cur).all(|(&a, &b)| !a || b));
            prev = cur;
        }
    }

    #[test]
    fn no_cameras_flags_and_keeps() {
        let m = icosphere(1);
        let r = visibility_cull(&m, &[], 5);
        assert!(r.no_cameras);
        assert_eq!(r.mesh, m);
    }
}
