//! Chamfer distance over ray-surface samples, and PSNR.

use crate::error::{Error, Result};
use crate::math::{psnr_from_mse, Rgb, Vec3};
use crate::par;
use crate::scene::CameraModel;
use crate::surface::RaySurface;

use super::kdtree::KdTree;

/// First hits of every pixel-center ray of `cameras`, thinned to at most
/// `n_points` by even striding.
pub fn ray_surface_points(
    surface: &dyn RaySurface,
    cameras: &[CameraModel],
    n_points: usize,
) -> Vec<Vec3> {
    let mut hits = Vec::new();
    for cam in cameras {
        let (w, h) = (cam.width, cam.height);
        let per = par::map_range((w * h) as usize, |i| {
            let ray = cam.ray(i as u32 % w, i as u32 / w, (0.0, 0.0));
            surface.first_hit(&ray).map(|t| ray.at(t))
        });
        hits.extend(per.into_iter().flatten());
    }
    if hits.len() <= n_points {
        return hits;
    }
    (0..n_points)
        .map(|i| hits[i * hits.len() / n_points])
        .collect()
}

fn mean_nearest_sq(from: &[Vec3], to: &KdTree) -> f64 {
    let d = par::map_slice(from, |p| to.nearest_sq(p).expect("non-empty tree"));
    d.iter().sum::<f64>() / from.len() as f64
}

/// Bidirectional Chamfer distance: the average of the two directed means of
/// squared nearest-neighbor distances.
pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::NoSamples(format!(
            "Chamfer needs points on both sides (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    Ok(0.5 * (mean_nearest_sq(a, &tb) + mean_nearest_sq(b, &ta)))
}

/// Chamfer distance between two surfaces sampled by the rays of `cameras`.
pub fn chamfer(
    a: &dyn RaySurface,
    b: &dyn RaySurface,
    cameras: &[CameraModel],
    n_points: usize,
) -> Result<f64> {
    let pa = ray_surface_points(a, cameras, n_points);
    if pa.is_empty() {
        return Err(Error::NoSamples(
            "first surface was not hit by any camera ray".into(),
        ));
    }
    let pb = ray_surface_points(b, cameras, n_points);
    if pb.is_empty() {
        return Err(Error::NoSamples(
            "second surface was not hit by any camera ray".into(),
        ));
    }
    chamfer_points(&pa, &pb)
}

/// `10·log10(peak² / MSE)` over all channels, capped for identical images.
pub fn psnr(a: &[Rgb], b: &[Rgb], peak: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "images have {} and {} pixels",
            a.len(),
            b.len()
        )));
    }
    let mut se = 0.0;
    for (x, y) in a.iter().zip(b) {
        for k in 0..3 {
            se += (x[k] - y[k]).powi(2);
        }
    }
    let mse = se / (3 * a.len().max(1)) as f64;
    Ok(psnr_from_mse(mse / (peak * peak)))
}
