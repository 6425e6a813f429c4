//! Dense multi-resolution feature grids with trilinear interpolation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub levels: usize,
    pub base_res: usize,
    pub max_res: usize,
    pub channels: usize,
}

impl GridConfig {
    /// Per-level cell counts, growing geometrically from `base_res` to `max_res`.
    pub fn resolutions(&self) -> Result<Vec<usize>> {
        if self.levels == 0 || self.channels == 0 || self.base_res == 0 {
            return Err(Error::Config(
                "grid needs ≥1 level, channel and cell".into(),
            ));
        }
        let res: Vec<usize> = if self.levels == 1 {
            vec![self.base_res]
        } else {
            let growth = ((self.max_res as f64).ln() - (self.base_res as f64).ln())
                / (self.levels - 1) as f64;
            (0..self.levels)
                .map(|l| (self.base_res as f64 * (growth * l as f64).exp() + 1e-9).floor() as usize)
                .collect()
        };
        if res.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "grid resolutions must strictly increase, got {res:?}"
            )));
        }
        Ok(res)
    }
}

/// Trilinear stencil of one level: value indices of the 8 corners (channel 0),
/// their weights, and the weight gradients with respect to the query point.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub index: [usize; 8],
    pub weight: [f64; 8],
    pub dweight: [[f64; 3]; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub config: GridConfig,
    /// Half extent of the cube `[-bound, bound]³` the grid covers.
    pub bound: f64,
    resolutions: Vec<usize>,
    offsets: Vec<usize>,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(config: GridConfig, bound: f64) -> Result<Self> {
        let resolutions = config.resolutions()?;
        let mut offsets = Vec::with_capacity(resolutions.len() + 1);
        let mut total = 0;
        for &r in &resolutions {
            offsets.push(total);
            total += (r + 1).pow(3) * config.channels;
        }
        offsets.push(total);
        Ok(Self {
            config,
            bound,
            resolutions,
            offsets,
            values: vec![0.0; total],
        })
    }

    /// Values drawn from `U(-1e-4, 1e-4)`.
    pub fn new(config: GridConfig, bound: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut g = Self::zeros(config, bound)?;
        for v in &mut g.values {
            *v = rng.gen_range(-1e-4..1e-4);
        }
        Ok(g)
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn levels(&self) -> usize {
        self.resolutions.len()
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    pub fn output_dim(&self) -> usize {
        self.levels() * self.channels()
    }

    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        self.offsets[level]..self.offsets[level + 1]
    }

    pub fn clamp_point(&self, x: &Vec3) -> Vec3 {
        x.map(|c| c.clamp(-self.bound, self.bound))
    }

    /// Trilinear stencil at level `level`. Indices are absolute into `values`.
    pub fn stencil(&self, level: usize, x: &Vec3) -> Stencil {
        let r = self.resolutions[level];
        let n = r + 1;
        let scale = r as f64 / (2.0 * self.bound);
        let mut cell = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let pos = ((x[a] + self.bound) * scale).clamp(0.0, r as f64);
            let i = (pos.floor() as usize).min(r - 1);
            cell[a] = i;
            frac[a] = pos - i as f64;
        }
        let c = self.config.channels;
        let base = self.offsets[level];
        let mut st = Stencil {
            index: [0; 8],
            weight: [0.0; 8],
            dweight: [[0.0; 3]; 8],
        };
        for k in 0..8 {
            let b = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
            let mut w = [0.0; 3];
            let mut dw = [0.0; 3];
            for a in 0..3 {
                if b[a] == 1 {
                    w[a] = frac[a];
                    dw[a] = scale;
                } else {
                    w[a] = 1.0 - frac[a];
                    dw[a] = -scale;
                }
            }
            let vi = (cell[0] + b[0]) + (cell[1] + b[1]) * n + (cell[2] + b[2]) * n * n;
            st.index[k] = base + vi * c;
            st.weight[k] = w[0] * w[1] * w[2];
            st.dweight[k] = [
                dw[0] * w[1] * w[2],
                w[0] * dw[1] * w[2],
                w[0] * w[1] * dw[2],
            ];
        }
        st
    }

    /// Concatenated per-level features (coarse → fine), `out.len() == output_dim()`.
    pub fn encode_into(&self, x: &Vec3, out: &mut [f64]) {
        let c = self.config.channels;
        for l in 0..self.levels() {
            let st = self.stencil(l, x);
            let o = &mut out[l * c..(l + 1) * c];
            o.fill(0.0);
            for k in 0..8 {
                let w = st.weight[k];
                let vals = &self.values[st.index[k]..st.index[k] + c];
                for ch in 0..c {
                    o[ch] += w * vals[ch];
                }
            }
        }
    }

    pub fn encode(&self, x: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.encode_into(x, &mut out);
        out
    }

    /// `d loss / d x` given `d loss / d features`.
    pub fn backprop_point(&self, x: &Vec3, dfeat: &[f64]) -> Vec3 {
        let c = self.config.channels;
        let mut g = Vec3::zeros();
        for l in 0..self.levels() {
            let st = self.stencil(l, x);
            for k in 0..8 {
                let vals = &self.values[st.index[k]..st.index[k] + c];
                let mut s = 0.0;
                for ch in 0..c {
                    s += vals[ch] * dfeat[l * c + ch];
                }
                for a in 0..3 {
                    g[a] += st.dweight[k][a] * s;
                }
            }
        }
        g
    }

    /// Adds `d loss / d values` for one query into `grad` (same layout as `values`).
    pub fn accumulate(&self, x: &Vec3, dfeat: &[f64], grad: &mut [f64]) {
        for l in 0..self.levels() {
            self.accumulate_level(l, x, dfeat, grad, 0);
        }
    }

    fn accumulate_level(
        &self,
        level: usize,
        x: &Vec3,
        dfeat: &[f64],
        grad: &mut [f64],
        shift: usize,
    ) {
        let c = self.config.channels;
        let st = self.stencil(level, x);
        let d = &dfeat[level * c..(level + 1) * c];
        for k in 0..8 {
            let w = st.weight[k];
            let g = &mut grad[st.index[k] - shift..st.index[k] - shift + c];
            for ch in 0..c {
                g[ch] += w * d[ch];
            }
        }
    }

    /// Scatters many queries at once. `dfeats` holds `output_dim()` values per
    /// point. Levels are processed in parallel; within a level the points are
    /// added in order, so the result does not depend on the thread count.
    pub fn scatter(&self, xs: &[Vec3], dfeats: &[f64], grad: &mut [f64]) {
        let dim = self.output_dim();
        debug_assert_eq!(dfeats.len(), xs.len() * dim);
        let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(self.levels());
        let mut rest = grad;
        for l in 0..self.levels() {
            let len = self.offsets[l + 1] - self.offsets[l];
            let (head, tail) = rest.split_at_mut(len);
            slices.push((l, head));
            rest = tail;
        }
        par::for_each_mut(&mut slices, |_, (l, g)| {
            let shift = self.offsets[*l];
            for (i, x) in xs.iter().enumerate() {
                self.accumulate_level(*l, x, &dfeats[i * dim..(i + 1) * dim], g, shift);
            }
        });
    }

    /// Mean squared difference between axis-adjacent lattice values, over all
    /// axes, levels, channels and neighbour pairs. Returns the value and adds
    /// `weight * d/dvalues` into `grad` when given.
    pub fn total_variation(&self, weight: f64, mut grad: Option<&mut [f64]>) -> f64 {
        let c = self.config.channels;
        let pairs: usize = self
            .resolutions
            .iter()
            .map(|&r| 3 * r * (r + 1) * (r + 1) * c)
            .sum();
        if pairs == 0 {
            return 0.0;
        }
        let norm = 1.0 / pairs as f64;
        let mut sum = 0.0;
        for (l, &r) in self.resolutions.iter().enumerate() {
            let n = r + 1;
            let base = self.offsets[l];
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        let i = base + (x + y * n + z * n * n) * c;
                        for (ok, step) in [(x + 1 < n, 1), (y + 1 < n, n), (z + 1 < n, n * n)] {
                            if !ok {
                                continue;
                            }
                            let j = i + step * c;
                            for ch in 0..c {
                                let d = self.values[j + ch] - self.values[i + ch];
                                sum += d * d;
                                if let Some(g) = grad.as_deref_mut() {
                                    let gd = weight * 2.0 * d * norm;
                                    g[j + ch] += gd;
                                    g[i + ch] -= gd;
                                }
                            }
                        }
                    }
                }
            }
        }
        sum * norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(levels: usize, base: usize, max: usize, ch: usize) -> GridConfig {
        GridConfig {
            levels,
            base_res: base,
            max_res: max,
            channels: ch,
        }
    }

    fn random_grid(seed: u64) -> FeatureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = FeatureGrid::zeros(cfg(3, 2, 8, 2), 1.0).unwrap();
        for v in &mut g.values {
            *v = rng.gen_range(-1.0..1.0);
        }
        g
    }

    #[test]
    fn default_resolutions_increase() {
        let r = cfg(16, 16, 128, 1).resolutions().unwrap();
        assert_eq!(r.len(), 16);
        assert_eq!((r[0], r[15]), (16, 128));
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert!(cfg(16, 2, 4, 1).resolutions().is_err());
    }

    #[test]
    fn encoding_at_lattice_node_returns_node_values() {
        let g = random_grid(1);
        // -1, 0 and 1 are lattice nodes at the even resolutions 2, 4, 8
        let x = Vec3::new(0.0, -1.0, 1.0);
        let f = g.encode(&x);
        for (l, &r) in g.resolutions().iter().enumerate() {
            let n = r + 1;
            let idx = |p: f64| ((p + 1.0) * r as f64 / 2.0).round() as usize;
            let vi = idx(x.x) + idx(x.y) * n + idx(x.z) * n * n;
            let base = g.level_range(l).start + vi * 2;
            assert_eq!(&f[l * 2..l * 2 + 2], &g.values[base..base + 2]);
        }
    }

    #[test]
    fn cell_center_is_corner_mean() {
        let g = random_grid(2);
        let r = g.resolutions()[0];
        let h = 2.0 / r as f64;
        let x = Vec3::new(-1.0 + 0.5 * h, -1.0 + 0.5 * h, -1.0 + 1.5 * h);
        let f = g.encode(&x);
        let n = r + 1;
        let mut mean = [0.0; 2];
        for k in 0..8 {
            let (dx, dy, dz) = (k & 1, (k >> 1) & 1, (k >> 2) & 1);
            let vi = dx + dy * n + (1 + dz) * n * n;
            for ch in 0..2 {
                mean[ch] += g.values[vi * 2 + ch] / 8.0;
            }
        }
        assert!((f[0] - mean[0]).abs() < 1e-12 && (f[1] - mean[1]).abs() < 1e-12);
    }

    #[test]
    fn weights_match_independent_trilinear() {
        let g = random_grid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            for l in 0..g.levels() {
                let st = g.stencil(l, &x);
                let s: f64 = st.weight.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                // independent product-of-hat-functions evaluation
                let r = g.resolutions()[l] as f64;
                let u: Vec<f64> = (0..3).map(|a| (x[a] + 1.0) * r / 2.0).collect();
                for k in 0..8 {
                    assert!((0.0..=1.0).contains(&st.weight[k]));
                    let corner: Vec<f64> = (0..3)
                        .map(|a| u[a].floor() + ((k >> a) & 1) as f64)
                        .collect();
                    let hat: f64 = (0..3)
                        .map(|a| (1.0 - (u[a] - corner[a]).abs()).max(0.0))
                        .product();
                    assert!((hat - st.weight[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn encoding_is_affine_along_each_axis_inside_a_cell() {
        let g = random_grid(5);
        // a point well inside one finest-level cell; steps stay inside it
        let base = Vec3::new(0.03, -0.41, 0.27);
        let h = 1e-3;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            let f0 = g.encode(&(base - e));
            let f1 = g.encode(&base);
            let f2 = g.encode(&(base + e));
            for i in 0..f0.len() {
                assert!((f0[i] + f2[i] - 2.0 * f1[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_gradient_matches_finite_differences() {
        let g = random_grid(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dfeat: Vec<f64> = (0..g.output_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let x = Vec3::new(0.111, -0.333, 0.777);
        let gx = g.backprop_point(&x, &dfeat);
        let h = 1e-6;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            let fp: f64 = g
                .encode(&(x + e))
                .iter()
                .zip(&dfeat)
                .map(|(f, d)| f * d)
                .sum();
            let fm: f64 = g
                .encode(&(x - e))
                .iter()
                .zip(&dfeat)
                .map(|(f, d)| f * d)
                .sum();
            assert!(((fp - fm) / (2.0 * h) - gx[a]).abs() < 1e-6);
        }
    }

    #[test]
    fn scatter_equals_sequential_accumulate() {
        let g = random_grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec3> = (0..50)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let d: Vec<f64> = (0..50 * g.output_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut a = vec![0.0; g.values.len()];
        let mut b = vec![0.0; g.values.len()];
        g.scatter(&xs, &d, &mut a);
        for (i, x) in xs.iter().enumerate() {
            g.accumulate(x, &d[i * g.output_dim()..(i + 1) * g.output_dim()], &mut b);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn tv_constant_is_zero_and_matches_loop_oracle() {
        let mut g = FeatureGrid::zeros(cfg(1, 8, 8, 1), 1.0).unwrap();
        g.values.fill(0.7);
        assert_eq!(g.total_variation(1.0, None), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for v in &mut g.values {
            *v = rng.gen_range(-1.0..1.0);
        }
        // brute-force: enumerate every ordered lattice pair at unit Manhattan distance
        let n = 9usize;
        let at = |x: usize, y: usize, z: usize| g.values[x + y * n + z * n * n];
        let (mut sum, mut count) = (0.0, 0usize);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    if x + 1 < n {
                        sum += (at(x + 1, y, z) - at(x, y, z)).powi(2);
                        count += 1;
                    }
                    if y + 1 < n {
                        sum += (at(x, y + 1, z) - at(x, y, z)).powi(2);
                        count += 1;
                    }
                    if z + 1 < n {
                        sum += (at(x, y, z + 1) - at(x, y, z)).powi(2);
                        count += 1;
                    }
                }
            }
        }
        assert!((g.total_variation(1.0, None) - sum / count as f64).abs() < 1e-12);
    }

    #[test]
    fn tv_two_node_level() {
        let mut g = FeatureGrid::zeros(cfg(1, 1, 1, 1), 1.0).unwrap();
        // a single cell: 8 nodes, 12 edges; set x = 1 on the upper-x face
        for z in 0..2 {
            for y in 0..2 {
                g.values[1 + y * 2 + z * 4] = 1.0;
            }
        }
        // 4 of the 12 edges differ by 1
        assert!((g.total_variation(1.0, None) - 4.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        let mut g = random_grid(11);
        let mut grad = vec![0.0; g.values.len()];
        g.total_variation(1.0, Some(&mut grad));
        for &i in &[0usize, 5, 40, 200, g.values.len() - 1] {
            let h = 1e-5;
            let v = g.values[i];
            g.values[i] = v + h;
            let p = g.total_variation(1.0, None);
            g.values[i] = v - h;
            let m = g.total_variation(1.0, None);
            g.values[i] = v;
            assert!(((p - m) / (2.0 * h) - grad[i]).abs() < 1e-7);
        }
    }
}
