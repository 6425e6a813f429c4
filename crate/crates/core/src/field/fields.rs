//! Density and appearance fields: feature grids decoded by small networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{FeatureGrid, GridConfig};
use super::mlp::Mlp;
use super::sh::{sh_encode, sh_jacobian, SH_DIM};
use crate::error::Result;
use crate::math::{sigmoid, Rgb, Vec3};

/// Raw density is clamped to `±RAW_DENSITY_LIMIT` before exponentiation.
pub const RAW_DENSITY_LIMIT: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub levels: usize,
    pub base_res: usize,
    pub max_res: usize,
    pub geo_hidden: usize,
    pub app_hidden: usize,
    pub spec_hidden: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            base_res: 16,
            max_res: 128,
            geo_hidden: 32,
            app_hidden: 64,
            spec_hidden: 32,
        }
    }
}

impl FieldConfig {
    pub fn geo_grid(&self) -> GridConfig {
        GridConfig {
            levels: self.levels,
            base_res: self.base_res,
            max_res: self.max_res,
            channels: 1,
        }
    }

    pub fn app_grid(&self) -> GridConfig {
        GridConfig {
            channels: 2,
            ..self.geo_grid()
        }
    }
}

pub fn density_from_raw(raw: f64) -> f64 {
    raw.clamp(-RAW_DENSITY_LIMIT, RAW_DENSITY_LIMIT).exp()
}

/// Final pixel color: `c_d` alone during warmup, otherwise `c_d + c_s`, clamped.
pub fn compose_color(cd: &Rgb, cs: &Rgb, diffuse_only: bool) -> Rgb {
    if diffuse_only {
        return *cd;
    }
    std::array::from_fn(|i| (cd[i] + cs[i]).clamp(0.0, 1.0))
}

/// Unclamped color used inside losses.
pub fn color_sum(cd: &Rgb, cs: &Rgb, diffuse_only: bool) -> Rgb {
    if diffuse_only {
        return *cd;
    }
    std::array::from_fn(|i| cd[i] + cs[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryField {
    pub grid: FeatureGrid,
    pub mlp: Mlp,
}

/// Intermediate values of one density evaluation, kept for backprop.
#[derive(Debug, Clone, Default)]
pub struct GeoEval {
    pub x: Vec3,
    pub feat: Vec<f64>,
    pub acts: Vec<f64>,
    pub raw: f64,
    pub sigma: f64,
}

impl GeometryField {
    pub fn new(cfg: &FieldConfig, bound: f64, rng: &mut impl Rng) -> Result<Self> {
        let grid = FeatureGrid::new(cfg.geo_grid(), bound, rng)?;
        let mlp = Mlp::new(&[grid.output_dim(), cfg.geo_hidden, 1], rng)?;
        Ok(Self { grid, mlp })
    }

    pub fn forward(&self, x: &Vec3, ev: &mut GeoEval) -> f64 {
        ev.x = self.grid.clamp_point(x);
        ev.feat.resize(self.grid.output_dim(), 0.0);
        self.grid.encode_into(&ev.x, &mut ev.feat);
        ev.raw = self.mlp.forward(&ev.feat, &mut ev.acts)[0];
        ev.sigma = density_from_raw(ev.raw);
        ev.sigma
    }

    pub fn raw(&self, x: &Vec3) -> f64 {
        let mut ev = GeoEval::default();
        self.forward(x, &mut ev);
        ev.raw
    }

    pub fn density(&self, x: &Vec3) -> f64 {
        let mut ev = GeoEval::default();
        self.forward(x, &mut ev)
    }

    /// Given `d loss / d σ`, adds network gradients into `mlp_grad` and writes
    /// `d loss / d features` into `dfeat`.
    pub fn backward(
        &self,
        ev: &GeoEval,
        d_sigma: f64,
        mlp_grad: &mut [f64],
        dfeat: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let d_raw = if ev.raw.abs() > RAW_DENSITY_LIMIT {
            0.0
        } else {
            d_sigma * ev.sigma
        };
        self.mlp
            .backward(&ev.acts, &[d_raw], mlp_grad, Some(dfeat), scratch);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceField {
    pub grid: FeatureGrid,
    /// Grid features → 3 diffuse + 3 specular-feature logits.
    pub mlp1: Mlp,
    /// Specular features ⊕ view encoding → specular color logits.
    pub mlp2: Mlp,
}

#[derive(Debug, Clone, Default)]
pub struct AppEval {
    pub x: Vec3,
    pub feat: Vec<f64>,
    pub acts: Vec<f64>,
    pub cd: Rgb,
    pub fs: [f64; 3],
}

#[derive(Debug, Clone, Default)]
pub struct SpecEval {
    pub dir: Vec3,
    pub input: Vec<f64>,
    pub acts: Vec<f64>,
    pub cs: Rgb,
}

impl AppearanceField {
    pub fn new(cfg: &FieldConfig, bound: f64, rng: &mut impl Rng) -> Result<Self> {
        let grid = FeatureGrid::new(cfg.app_grid(), bound, rng)?;
        let mlp1 = Mlp::new(&[grid.output_dim(), cfg.app_hidden, cfg.app_hidden, 6], rng)?;
        let mlp2 = Mlp::new(&[3 + SH_DIM, cfg.spec_hidden, 3], rng)?;
        Ok(Self { grid, mlp1, mlp2 })
    }

    pub fn forward_appearance(&self, x: &Vec3, ev: &mut AppEval) {
        ev.x = self.grid.clamp_point(x);
        ev.feat.resize(self.grid.output_dim(), 0.0);
        self.grid.encode_into(&ev.x, &mut ev.feat);
        let out = self.mlp1.forward(&ev.feat, &mut ev.acts);
        ev.cd = [sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])];
        ev.fs = [sigmoid(out[3]), sigmoid(out[4]), sigmoid(out[5])];
    }

    /// `(c_d, f_s)` at `x`.
    pub fn appearance(&self, x: &Vec3) -> (Rgb, [f64; 3]) {
        let mut ev = AppEval::default();
        self.forward_appearance(x, &mut ev);
        (ev.cd, ev.fs)
    }

    pub fn forward_specular(&self, fs: &[f64; 3], dir: &Vec3, ev: &mut SpecEval) -> Rgb {
        ev.dir = *dir;
        ev.input.clear();
        ev.input.extend_from_slice(fs);
        ev.input.extend_from_slice(&sh_encode(dir));
        let out = self.mlp2.forward(&ev.input, &mut ev.acts);
        ev.cs = [sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])];
        ev.cs
    }

    pub fn specular(&self, fs: &[f64; 3], dir: &Vec3) -> Rgb {
        let mut ev = SpecEval::default();
        self.forward_specular(fs, dir, &mut ev)
    }

    /// Given `d loss / d c_s`, adds MLP2 gradients and returns `d loss / d f_s`;
    /// writes `d loss / d dir` when requested.
    pub fn backward_specular(
        &self,
        ev: &SpecEval,
        d_cs: &Rgb,
        mlp2_grad: &mut [f64],
        d_dir: Option<&mut Vec3>,
        scratch: &mut Vec<f64>,
    ) -> [f64; 3] {
        let d_raw: [f64; 3] = std::array::from_fn(|i| d_cs[i] * ev.cs[i] * (1.0 - ev.cs[i]));
        let mut d_in = [0.0; 3 + SH_DIM];
        self.mlp2
            .backward(&ev.acts, &d_raw, mlp2_grad, Some(&mut d_in), scratch);
        if let Some(dd) = d_dir {
            let jac = sh_jacobian(&ev.dir);
            *dd = Vec3::zeros();
            for (k, row) in jac.iter().enumerate() {
                for a in 0..3 {
                    dd[a] += d_in[3 + k] * row[a];
                }
            }
        }
        [d_in[0], d_in[1], d_in[2]]
    }

    /// Given gradients w.r.t. `c_d` and `f_s`, adds MLP1 gradients and writes
    /// `d loss / d features` into `dfeat`.
    pub fn backward_appearance(
        &self,
        ev: &AppEval,
        d_cd: &Rgb,
        d_fs: &[f64; 3],
        mlp1_grad: &mut [f64],
        dfeat: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let mut d_raw = [0.0; 6];
        for i in 0..3 {
            d_raw[i] = d_cd[i] * ev.cd[i] * (1.0 - ev.cd[i]);
            d_raw[3 + i] = d_fs[i] * ev.fs[i] * (1.0 - ev.fs[i]);
        }
        self.mlp1
            .backward(&ev.acts, &d_raw, mlp1_grad, Some(dfeat), scratch);
    }
}

/// Gradient buffers matching every trainable array of both fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrads {
    pub geo_grid: Vec<f64>,
    pub geo_mlp: Vec<f64>,
    pub app_grid: Vec<f64>,
    pub app_mlp1: Vec<f64>,
    pub app_mlp2: Vec<f64>,
}

impl FieldGrads {
    pub fn zeros(geo: &GeometryField, app: &AppearanceField) -> Self {
        Self {
            geo_grid: vec![0.0; geo.grid.values.len()],
            geo_mlp: vec![0.0; geo.mlp.params.len()],
            app_grid: vec![0.0; app.grid.values.len()],
            app_mlp1: vec![0.0; app.mlp1.params.len()],
            app_mlp2: vec![0.0; app.mlp2.params.len()],
        }
    }

    /// Network gradients only; the grids are handled by scatter.
    pub fn add_networks(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.geo_mlp, &other.geo_mlp),
            (&mut self.app_mlp1, &other.app_mlp1),
            (&mut self.app_mlp2, &other.app_mlp2),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in [
            &mut self.geo_grid,
            &mut self.geo_mlp,
            &mut self.app_grid,
            &mut self.app_mlp1,
            &mut self.app_mlp2,
        ] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.geo_grid,
            &self.geo_mlp,
            &self.app_grid,
            &self.app_mlp1,
            &self.app_mlp2,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> FieldConfig {
        FieldConfig {
            levels: 3,
            base_res: 2,
            max_res: 8,
            geo_hidden: 8,
            app_hidden: 8,
            spec_hidden: 8,
        }
    }

    fn noisy<R: Rng>(v: &mut [f64], rng: &mut R, s: f64) {
        v.iter_mut().for_each(|x| *x += rng.gen_range(-s..s));
    }

    #[test]
    fn density_values() {
        assert_eq!(density_from_raw(0.0), 1.0);
        assert!((density_from_raw(10f64.ln()) - 10.0).abs() < 1e-12);
        assert_eq!(density_from_raw(100.0), 15f64.exp());
        assert!(density_from_raw(-100.0) > 0.0);
    }

    #[test]
    fn compose() {
        let cd = [0.6, 0.6, 0.6];
        assert_eq!(compose_color(&cd, &[0.6, 0.0, 0.0], false), [1.0, 0.6, 0.6]);
        assert_eq!(compose_color(&cd, &[0.0; 3], false), cd);
        assert_eq!(compose_color(&cd, &[0.3, 0.2, 0.1], true), cd);
        assert_eq!(color_sum(&cd, &[0.6, 0.0, 0.0], false), [1.2, 0.6, 0.6]);
    }

    #[test]
    fn zero_networks_give_half_gray() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut app = AppearanceField::new(&small_cfg(), 1.0, &mut rng).unwrap();
        app.mlp1.params.fill(0.0);
        app.mlp2.params.fill(0.0);
        let (cd, fs) = app.appearance(&Vec3::new(0.1, 0.2, 0.3));
        assert_eq!(cd, [0.5; 3]);
        assert_eq!(fs, [0.5; 3]);
        assert_eq!(app.specular(&fs, &Vec3::z()), [0.5; 3]);
        for b in app.mlp2.biases_mut(1) {
            *b = -20.0;
        }
        assert!(app.specular(&fs, &Vec3::z()).iter().all(|c| c.abs() < 1e-8));
    }

    #[test]
    fn specular_depends_on_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let app = AppearanceField::new(&FieldConfig::default(), 1.0, &mut rng).unwrap();
        let d = Vec3::new(0.2, -0.4, 0.9).normalize();
        let fs = [0.3, 0.6, 0.2];
        assert_ne!(app.specular(&fs, &d), app.specular(&fs, &-d));
    }

    #[test]
    fn density_gradient_wrt_grid_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut geo = GeometryField::new(&small_cfg(), 1.0, &mut rng).unwrap();
        noisy(&mut geo.grid.values, &mut rng, 0.5);
        let x = Vec3::new(0.21, -0.37, 0.55);
        let mut ev = GeoEval::default();
        geo.forward(&x, &mut ev);
        let mut mlp_g = vec![0.0; geo.mlp.params.len()];
        let mut dfeat = vec![0.0; geo.grid.output_dim()];
        geo.backward(&ev, 1.0, &mut mlp_g, &mut dfeat, &mut Vec::new());
        let mut grid_g = vec![0.0; geo.grid.values.len()];
        geo.grid.accumulate(&ev.x, &dfeat, &mut grid_g);
        let h = 1e-5;
        let mut checked = 0;
        for i in 0..geo.grid.values.len() {
            if grid_g[i] == 0.0 {
                continue;
            }
            let v = geo.grid.values[i];
            geo.grid.values[i] = v + h;
            let p = geo.density(&x);
            geo.grid.values[i] = v - h;
            let m = geo.density(&x);
            geo.grid.values[i] = v;
            let fd = (p - m) / (2.0 * h);
            assert!(
                (fd - grid_g[i]).abs() <= 1e-4 * fd.abs().max(1e-8),
                "{i}: {fd} vs {}",
                grid_g[i]
            );
            checked += 1;
        }
        assert!(checked > 8);
    }
}
