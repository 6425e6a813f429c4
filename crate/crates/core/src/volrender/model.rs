//! The trained radiance model: both fields plus the occupancy grid, with
//! checkpoint I/O and inference-time rendering.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::composite::{alpha, render_ray};
use super::occupancy::OccupancyGrid;
use super::sampling::{for_each_candidate, ray_bounds};
use crate::error::{Error, Result};
use crate::field::{
    compose_color, AppEval, AppearanceField, FieldConfig, GeoEval, GeometryField, Mlp, SpecEval,
    TensorFile,
};
use crate::math::{Ray, Rgb};
use crate::par;
use crate::scene::CameraModel;

/// Transmittance below which a ray is terminated.
pub const EARLY_STOP_TRANSMITTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceModel {
    pub config: FieldConfig,
    pub bound: f64,
    pub geometry: GeometryField,
    pub appearance: AppearanceField,
    pub occupancy: OccupancyGrid,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    field: FieldConfig,
    bound: f64,
    occupancy_res: usize,
    occupancy_decay: f64,
    occupancy_threshold: f64,
    mlp_dims: [Vec<usize>; 3],
    config_echo: serde_json::Value,
}

impl RadianceModel {
    pub fn new(
        config: &FieldConfig,
        bound: f64,
        occupancy_res: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(bound > 0.0) || occupancy_res == 0 {
            return Err(Error::Config(
                "scene bound and occupancy resolution must be positive".into(),
            ));
        }
        Ok(Self {
            config: config.clone(),
            bound,
            geometry: GeometryField::new(config, bound, rng)?,
            appearance: AppearanceField::new(config, bound, rng)?,
            occupancy: OccupancyGrid::full(occupancy_res, bound),
        })
    }

    /// Composited color along one ray. Samples every stratum midpoint and stops
    /// once transmittance falls below [`EARLY_STOP_TRANSMITTANCE`].
    pub fn render_ray(
        &self,
        ray: &Ray,
        background: &Rgb,
        max_samples: usize,
        diffuse_only: bool,
    ) -> Rgb {
        let Some((near, far)) = ray_bounds(ray, self.bound) else {
            return *background;
        };
        let (mut sig, mut del, mut col) = (Vec::new(), Vec::new(), Vec::new());
        let mut ge = GeoEval::default();
        let mut ae = AppEval::default();
        let mut se = SpecEval::default();
        let mut t = 1.0;
        for_each_candidate(
            ray,
            &self.occupancy,
            near,
            far,
            max_samples,
            None,
            |_, d, x| {
                let s = self.geometry.forward(&x, &mut ge);
                self.appearance.forward_appearance(&x, &mut ae);
                let cs = if diffuse_only {
                    [0.0; 3]
                } else {
                    self.appearance.forward_specular(&ae.fs, &ray.dir, &mut se)
                };
                sig.push(s);
                del.push(d);
                col.push(compose_color(&ae.cd, &cs, diffuse_only));
                t *= 1.0 - alpha(s, d);
                t >= EARLY_STOP_TRANSMITTANCE
            },
        );
        render_ray(&sig, &del, &col, background).color
    }

    pub fn render_image(
        &self,
        camera: &CameraModel,
        background: &Rgb,
        max_samples: usize,
    ) -> Vec<Rgb> {
        let w = camera.width as usize;
        par::map_range(camera.pixel_count(), |i| {
            let ray = camera.ray((i % w) as u32, (i / w) as u32, (0.0, 0.0));
            self.render_ray(&ray, background, max_samples, false)
        })
    }

    pub fn to_tensors(&self, config_echo: serde_json::Value) -> TensorFile {
        let meta = ModelMeta {
            kind: "radiance-model".into(),
            field: self.config.clone(),
            bound: self.bound,
            occupancy_res: self.occupancy.res,
            occupancy_decay: self.occupancy.decay,
            occupancy_threshold: self.occupancy.threshold,
            mlp_dims: [
                self.geometry.mlp.dims().to_vec(),
                self.appearance.mlp1.dims().to_vec(),
                self.appearance.mlp2.dims().to_vec(),
            ],
            config_echo,
        };
        let mut t = TensorFile::new(serde_json::to_value(meta).expect("meta serializes"));
        t.push("geo_grid", &self.geometry.grid.values);
        t.push("geo_mlp", &self.geometry.mlp.params);
        t.push("app_grid", &self.appearance.grid.values);
        t.push("app_mlp1", &self.appearance.mlp1.params);
        t.push("app_mlp2", &self.appearance.mlp2.params);
        t.push("occ_density", &self.occupancy.density);
        let mask: Vec<f64> = self
            .occupancy
            .occupied
            .iter()
            .map(|&o| o as u8 as f64)
            .collect();
        t.push("occ_mask", &mask);
        t
    }

    pub fn from_tensors(mut t: TensorFile) -> std::result::Result<Self, String> {
        let meta: ModelMeta =
            serde_json::from_value(t.meta.clone()).map_err(|e| format!("bad model header: {e}"))?;
        if meta.kind != "radiance-model" {
            return Err(format!(
                "checkpoint kind '{}' is not a radiance model",
                meta.kind
            ));
        }
        let e = |e: Error| e.to_string();
        let mut geometry = GeometryField {
            grid: crate::field::FeatureGrid::zeros(meta.field.geo_grid(), meta.bound).map_err(e)?,
            mlp: Mlp::zeros(&meta.mlp_dims[0]).map_err(e)?,
        };
        let mut appearance = AppearanceField {
            grid: crate::field::FeatureGrid::zeros(meta.field.app_grid(), meta.bound).map_err(e)?,
            mlp1: Mlp::zeros(&meta.mlp_dims[1]).map_err(e)?,
            mlp2: Mlp::zeros(&meta.mlp_dims[2]).map_err(e)?,
        };
        geometry.grid.values = t.take("geo_grid", geometry.grid.values.len()).map_err(e)?;
        geometry.mlp.params = t.take("geo_mlp", geometry.mlp.params.len()).map_err(e)?;
        appearance.grid.values = t
            .take("app_grid", appearance.grid.values.len())
            .map_err(e)?;
        appearance.mlp1.params = t
            .take("app_mlp1", appearance.mlp1.params.len())
            .map_err(e)?;
        appearance.mlp2.params = t
            .take("app_mlp2", appearance.mlp2.params.len())
            .map_err(e)?;
        let mut occupancy = OccupancyGrid::full(meta.occupancy_res, meta.bound);
        occupancy.decay = meta.occupancy_decay;
        occupancy.threshold = meta.occupancy_threshold;
        let n = occupancy.density.len();
        occupancy.density = t.take("occ_density", n).map_err(e)?;
        occupancy.occupied = t
            .take("occ_mask", n)
            .map_err(e)?
            .iter()
            .map(|&m| m != 0.0)
            .collect();
        Ok(Self {
            config: meta.field,
            bound: meta.bound,
            geometry,
            appearance,
            occupancy,
        })
    }

    pub fn save(&self, path: &Path, config_echo: serde_json::Value) -> Result<()> {
        self.to_tensors(config_echo).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(TensorFile::load(path)?).map_err(|r| Error::load(path, r))
    }
}
