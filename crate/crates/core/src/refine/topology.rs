//! One topology round: subdivide high-error faces, remesh the lowest-error ones.

use std::collections::BTreeSet;

use log::warn;
use serde::Serialize;

use super::errors::{compute_thresholds, FaceErrorAccumulator, Thresholds};
use super::trainer::Stage2Config;
use crate::error::{Error, Result};
use crate::math::Aabb;
use crate::meshops::{midpoint_subdivide, remesh_region, TriMesh};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub step: usize,
    pub faces_before: usize,
    pub faces_after: usize,
    /// Faces selected for subdivision.
    pub subdivided: usize,
    /// Faces handed to the remesher.
    pub decimated: usize,
    pub thresholds: Option<Thresholds>,
    pub skipped: bool,
}

/// Folds offsets into positions, edits topology from the accumulated errors
/// and returns a mesh with zero offsets. Only faces whose centroid lies in
/// `region` are edited.
pub fn refine_topology(
    mesh: &TriMesh,
    acc: &FaceErrorAccumulator,
    cfg: &Stage2Config,
    region: Option<&Aabb>,
) -> Result<(TriMesh, RefineReport)> {
    if acc.faces() != mesh.faces.len() {
        return Err(Error::Contract(format!(
            "accumulator tracks {} faces, mesh has {}",
            acc.faces(),
            mesh.faces.len()
        )));
    }
    let mut base = mesh.clone();
    base.apply_offsets();
    let mut report = RefineReport {
        step: 0,
        faces_before: base.faces.len(),
        faces_after: base.faces.len(),
        subdivided: 0,
        decimated: 0,
        thresholds: None,
        skipped: true,
    };
    let Some(t) = compute_thresholds(acc) else {
        warn!("no observed faces; refinement round skipped");
        return Ok((base, report));
    };
    report.thresholds = Some(t);
    report.skipped = false;

    let inside = |f: usize| region.map_or(true, |b| b.contains(&base.face_centroid(f)));
    let nf = base.faces.len();
    let hot: Vec<usize> = (0..nf)
        .filter(|&f| inside(f) && acc.mean(f).is_some_and(|e| e > t.subdivide))
        .collect();
    let mut cold: Vec<(f64, usize)> = (0..nf)
        .filter(|&f| inside(f))
        .map(|f| (acc.mean_or_zero(f), f))
        .filter(|&(e, _)| e < t.decimate)
        .collect();
    cold.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cold.truncate((cfg.decimate_fraction * nf as f64).floor() as usize);
    let cold: BTreeSet<usize> = cold.into_iter().map(|(_, f)| f).collect();

    let diag = base.bbox().diagonal();
    let sub = midpoint_subdivide(&base, &hot, cfg.min_edge_rel * diag);
    report.subdivided = sub.split_faces;
    let hot_set: BTreeSet<usize> = hot.iter().copied().collect();
    let region_faces: Vec<usize> = (0..sub.mesh.faces.len())
        .filter(|&f| {
            let p = sub.parent[f];
            cold.contains(&p) && !hot_set.contains(&p)
        })
        .collect();
    report.decimated = cold.len();
    let out = if region_faces.is_empty() {
        sub.mesh
    } else {
        remesh_region(&sub.mesh, &region_faces, cfg.target_edge_rel * diag).mesh
    };
    let audit = out.audit();
    if !audit.is_ok() {
        return Err(Error::Audit(audit.to_json()));
    }
    report.faces_after = out.faces.len();
    Ok((out, report))
}
