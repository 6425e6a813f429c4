//! Stratified ray sampling with occupancy-based pruning.

use rand::Rng;

use super::occupancy::OccupancyGrid;
use crate::math::{Aabb, Ray, Vec3};

/// Flattened samples of many rays; ray `i` owns `offsets[i]..offsets[i+1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RaySampleSet {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub x: Vec<Vec3>,
    pub offsets: Vec<usize>,
}

impl RaySampleSet {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            ..Default::default()
        }
    }

    pub fn ray_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ray(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Appends the samples of one ray.
    pub fn push_ray(
        &mut self,
        ray: &Ray,
        occ: &OccupancyGrid,
        near: f64,
        far: f64,
        max_samples: usize,
        rng: Option<&mut dyn rand::RngCore>,
    ) {
        for_each_candidate(ray, occ, near, far, max_samples, rng, |t, d, x| {
            self.t.push(t);
            self.delta.push(d);
            self.x.push(x);
            true
        });
        self.offsets.push(self.t.len());
    }
}

/// Entry and exit distances of a ray through the cube `[-bound, bound]³`.
pub fn ray_bounds(ray: &Ray, bound: f64) -> Option<(f64, f64)> {
    Aabb::cube(bound).intersect(ray).filter(|(a, b)| b > a)
}

/// Samples for one ray: `max_samples` equal strata on `[near, far]`, one
/// candidate per stratum (its midpoint, or a uniform position when `rng` is
/// given). Each sample's step size is the stratum width. Candidates in
/// unoccupied cells are skipped.
pub fn sample_along_ray(
    ray: &Ray,
    occ: &OccupancyGrid,
    near: f64,
    far: f64,
    max_samples: usize,
    rng: Option<&mut dyn rand::RngCore>,
) -> RaySampleSet {
    let mut s = RaySampleSet::new();
    s.push_ray(ray, occ, near, far, max_samples, rng);
    s
}

/// Visits surviving candidates in order; `visit` returns false to stop early.
pub fn for_each_candidate(
    ray: &Ray,
    occ: &OccupancyGrid,
    near: f64,
    far: f64,
    max_samples: usize,
    mut rng: Option<&mut dyn rand::RngCore>,
    mut visit: impl FnMut(f64, f64, Vec3) -> bool,
) {
    if !(far > near) || max_samples == 0 {
        return;
    }
    let step = (far - near) / max_samples as f64;
    for j in 0..max_samples {
        let u = match rng.as_deref_mut() {
            Some(r) => r.gen::<f64>(),
            None => 0.5,
        };
        let t = near + (j as f64 + u) * step;
        let x = ray.at(t);
        if !occ.is_occupied(&x) {
            continue;
        }
        if !visit(t, step, x) {
            return;
        }
    }
}
