//! Coarse mesh extraction from a trained density field.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::Aabb;
use crate::meshops::{
    clean_mesh_relative, decimate, marching_cubes, visibility_cull, CleanParams, DensityVolume,
    TriMesh,
};
use crate::scene::CameraModel;
use crate::volrender::RadianceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Marching-cubes lattice resolution for the innermost region.
    pub resolution: usize,
    /// Density level set.
    pub threshold: f64,
    /// Dilation rounds applied to the visible face set.
    pub cull_kernel: usize,
    pub clean: CleanParams,
    pub target_faces: usize,
    /// Outermost cascade level; region k spans [−2^k, 2^k]³.
    pub cascades: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            threshold: 10.0,
            cull_kernel: 5,
            clean: CleanParams::default(),
            target_faces: 30_000,
            cascades: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub region: usize,
    pub resolution: usize,
    pub cell_size: f64,
    pub mc_faces: usize,
    pub culled_faces: usize,
    pub cleaned_faces: usize,
    pub final_faces: usize,
}

pub fn region_box(k: usize) -> Aabb {
    Aabb::cube(2f64.powi(k as i32))
}

/// Faces of cascade region `k`: marching cubes over the region box at
/// `resolution / 2^k`, with faces whose centroid lies in region `k − 1`
/// dropped, then culled, cleaned and decimated.
pub fn extract_region(
    model: &RadianceModel,
    cameras: &[CameraModel],
    cfg: &ExtractConfig,
    k: usize,
) -> Result<(TriMesh, ExtractReport)> {
    let bbox = region_box(k);
    let res = (cfg.resolution >> k).max(2);
    let geo = &model.geometry;
    let vol = DensityVolume::sample(res, bbox, |x| geo.density(x))?;
    let mut mesh = marching_cubes(&vol, cfg.threshold)?;
    if k > 0 {
        let inner = region_box(k - 1);
        mesh = mesh.retain_faces(|f| !inner.contains(&mesh.face_centroid(f)));
    }
    let mc_faces = mesh.faces.len();
    let culled = visibility_cull(&mesh, cameras, cfg.cull_kernel).mesh;
    let culled_faces = culled.faces.len();
    let cleaned = clean_mesh_relative(&culled, &cfg.clean);
    let cleaned_faces = cleaned.faces.len();
    let target = cfg.target_faces >> (2 * k);
    let out = if cleaned.faces.len() > target {
        clean_mesh_relative(&decimate(&cleaned, target).mesh, &cfg.clean)
    } else {
        cleaned
    };
    let report = ExtractReport {
        region: k,
        resolution: res,
        cell_size: vol.cell_size(),
        mc_faces,
        culled_faces,
        cleaned_faces,
        final_faces: out.faces.len(),
    };
    Ok((out, report))
}

/// The innermost-region coarse mesh.
pub fn extract_coarse_mesh(
    model: &RadianceModel,
    cameras: &[CameraModel],
    cfg: &ExtractConfig,
) -> Result<(TriMesh, ExtractReport)> {
    extract_region(model, cameras, cfg, 0)
}
