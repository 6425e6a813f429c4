//! Per-face error bookkeeping and percentile thresholds.

use serde::Serialize;

use crate::rasterdiff::FragmentBuffer;

/// Summed pixel error and pixel count per face since the last reset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaceErrorAccumulator {
    pub sum: Vec<f64>,
    pub count: Vec<u64>,
}

impl FaceErrorAccumulator {
    pub fn new(faces: usize) -> Self {
        Self {
            sum: vec![0.0; faces],
            count: vec![0; faces],
        }
    }

    pub fn faces(&self) -> usize {
        self.sum.len()
    }

    /// Adds each covered pixel's error to the bucket of the face it shows.
    pub fn accumulate(&mut self, frag: &FragmentBuffer, pixel_error: &[f64]) {
        debug_assert_eq!(frag.pixels.len(), pixel_error.len());
        for (p, &e) in frag.pixels.iter().zip(pixel_error) {
            if let Some(f) = p {
                let i = f.face as usize;
                if i < self.sum.len() {
                    self.sum[i] += e;
                    self.count[i] += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for i in 0..self.sum.len().min(other.sum.len()) {
            self.sum[i] += other.sum[i];
            self.count[i] += other.count[i];
        }
    }

    /// Mean error of face `f`, `None` when it was never observed.
    pub fn mean(&self, f: usize) -> Option<f64> {
        (self.count[f] > 0).then(|| self.sum[f] / self.count[f] as f64)
    }

    /// Mean error with unobserved faces counted as zero.
    pub fn mean_or_zero(&self, f: usize) -> f64 {
        self.mean(f).unwrap_or(0.0)
    }

    pub fn observed(&self) -> Vec<f64> {
        (0..self.faces()).filter_map(|f| self.mean(f)).collect()
    }

    pub fn reset(&mut self, faces: usize) {
        self.sum = vec![0.0; faces];
        self.count = vec![0; faces];
    }

    pub fn is_zero(&self) -> bool {
        self.sum.iter().all(|&s| s == 0.0) && self.count.iter().all(|&c| c == 0)
    }
}

/// Nearest-rank percentile: the smallest value with at least `p` percent of
/// the list at or below it. `None` for an empty list.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

pub const SUBDIVIDE_PERCENTILE: f64 = 95.0;
pub const DECIMATE_PERCENTILE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub subdivide: f64,
    pub decimate: f64,
}

/// Thresholds over the mean errors of observed faces; `None` when no face
/// was observed.
pub fn compute_thresholds(acc: &FaceErrorAccumulator) -> Option<Thresholds> {
    let obs = acc.observed();
    Some(Thresholds {
        subdivide: percentile_nearest_rank(&obs, SUBDIVIDE_PERCENTILE)?,
        decimate: percentile_nearest_rank(&obs, DECIMATE_PERCENTILE)?,
    })
}
