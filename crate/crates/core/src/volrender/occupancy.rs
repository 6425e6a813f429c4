//! Coarse occupancy grid used to skip empty space while sampling rays.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::Vec3;
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub res: usize,
    pub bound: f64,
    pub decay: f64,
    /// Running max density per cell.
    pub density: Vec<f64>,
    pub occupied: Vec<bool>,
    pub threshold: f64,
}

/// Upper cap on the occupancy threshold.
pub const MAX_OCCUPANCY_THRESHOLD: f64 = 1e-2;

impl OccupancyGrid {
    /// Every cell occupied, running density zero.
    pub fn full(res: usize, bound: f64) -> Self {
        let n = res.pow(3);
        Self {
            res,
            bound,
            decay: 0.95,
            density: vec![0.0; n],
            occupied: vec![true; n],
            threshold: 0.0,
        }
    }

    pub fn empty(res: usize, bound: f64) -> Self {
        let mut g = Self::full(res, bound);
        g.occupied.fill(false);
        g
    }

    /// Marks cells whose center satisfies `pred`.
    pub fn from_fn(res: usize, bound: f64, pred: impl Fn(&Vec3) -> bool) -> Self {
        let mut g = Self::full(res, bound);
        for i in 0..g.occupied.len() {
            g.occupied[i] = pred(&g.cell_center(i));
        }
        g
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.bound / self.res as f64
    }

    pub fn cell_index(&self, x: &Vec3) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let u = (x[a] + self.bound) / self.cell_size();
            if !(0.0..=self.res as f64).contains(&u) {
                return None;
            }
            idx[a] = (u as usize).min(self.res - 1);
        }
        Some(idx[0] + idx[1] * self.res + idx[2] * self.res * self.res)
    }

    pub fn cell_center(&self, i: usize) -> Vec3 {
        let r = self.res;
        let (x, y, z) = (i % r, (i / r) % r, i / (r * r));
        let h = self.cell_size();
        Vec3::new(
            -self.bound + (x as f64 + 0.5) * h,
            -self.bound + (y as f64 + 0.5) * h,
            -self.bound + (z as f64 + 0.5) * h,
        )
    }

    pub fn is_occupied(&self, x: &Vec3) -> bool {
        self.cell_index(x).is_some_and(|i| self.occupied[i])
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied.iter().filter(|&&o| o).count() as f64 / self.occupied.len() as f64
    }

    /// Decays the running densities, folds in one fresh sample per cell at a
    /// seeded random position inside it, then re-thresholds.
    pub fn update(&mut self, density: impl Fn(&Vec3) -> f64 + Sync + Send, seed: u64) {
        let h = self.cell_size();
        let fresh: Vec<f64> = {
            let this = &*self;
            par::map_chunks(this.density.len(), 4096, |range| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (range.start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                range
                    .map(|i| {
                        let j = Vec3::new(
                            rng.gen::<f64>() - 0.5,
                            rng.gen::<f64>() - 0.5,
                            rng.gen::<f64>() - 0.5,
                        );
                        density(&(this.cell_center(i) + j * h))
                    })
                    .collect::<Vec<_>>()
            })
            .concat()
        };
        for (d, f) in self.density.iter_mut().zip(fresh) {
            *d = (*d * self.decay).max(f);
        }
        let (sum, count) = self
            .density
            .iter()
            .filter(|&&d| d > 0.0)
            .fold((0.0, 0usize), |(s, c), &d| (s + d, c + 1));
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        self.threshold = (0.01 * mean).min(MAX_OCCUPANCY_THRESHOLD);
        for (o, &d) in self.occupied.iter_mut().zip(&self.density) {
            *o = d > self.threshold;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = OccupancyGrid::full(8, 1.0);
        for i in [0, 7, 63, 200, 511] {
            assert_eq!(g.cell_index(&g.cell_center(i)), Some(i));
        }
        assert_eq!(g.cell_index(&Vec3::new(1.5, 0.0, 0.0)), None);
        assert_eq!(g.cell_index(&Vec3::new(1.0, 1.0, 1.0)), Some(511));
    }

    #[test]
    fn update_tracks_density_and_threshold() {
        let mut g = OccupancyGrid::full(8, 1.0);
        g.update(|x| if x.norm() < 0.5 { 50.0 } else { 0.0 }, 1);
        assert!(g.threshold <= MAX_OCCUPANCY_THRESHOLD);
        assert!(g.is_occupied(&Vec3::zeros()));
        assert!(!g.is_occupied(&Vec3::new(0.9, 0.9, 0.9)));
        // decay keeps the running max for a while
        g.update(|_| 0.0, 2);
        assert!(g.is_occupied(&Vec3::zeros()));
        assert!(
            (g.density[g.cell_index(&Vec3::new(0.01, 0.01, 0.01)).unwrap()] - 47.5).abs() < 1e-9
        );
    }
}
