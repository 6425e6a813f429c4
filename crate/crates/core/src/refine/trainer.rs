//! Stage-2 joint optimization of vertex offsets and appearance on a mesh.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::errors::FaceErrorAccumulator;
use super::topology::{refine_topology, RefineReport};
use crate::error::{Error, Result};
use crate::field::{Adam, AppearanceField};
use crate::math::{psnr_from_mse, Aabb, Rgb, Vec3};
use crate::meshops::{laplacian_loss, offset_loss, TriMesh};
use crate::metrics::MetricsSink;
use crate::rasterdiff::{backward, rasterize, shade, shade_cached};
use crate::scene::{CameraModel, Dataset, PosedImage};
use crate::volrender::RadianceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub steps: usize,
    pub lr_offsets: f64,
    /// Appearance learning rate decays exponentially between these values.
    pub lr_app_start: f64,
    pub lr_app_end: f64,
    pub w_smooth: f64,
    pub w_offset: f64,
    /// Fractions of `steps` at which topology rounds run.
    pub refine_fractions: Vec<f64>,
    /// Fraction of all faces handed to the remesher per round.
    pub decimate_fraction: f64,
    /// Minimum subdivided edge length, relative to the bbox diagonal.
    pub min_edge_rel: f64,
    /// Remesh target edge length, relative to the bbox diagonal.
    pub target_edge_rel: f64,
    /// Half-size of the box whose faces may be refined.
    pub refine_bound: f64,
    pub background: Option<Rgb>,
    pub log_every: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            steps: 10_000,
            lr_offsets: 1e-4,
            lr_app_start: 1e-3,
            lr_app_end: 1e-4,
            w_smooth: 1e-3,
            w_offset: 0.1,
            refine_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.7],
            decimate_fraction: 0.10,
            min_edge_rel: 0.01,
            target_edge_rel: 0.02,
            refine_bound: 1.0,
            background: None,
            log_every: 100,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let f = &self.refine_fractions;
        if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) || f.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "refine fractions must be strictly increasing in (0, 1), got {f:?}"
            )));
        }
        if !(self.lr_offsets >= 0.0 && self.lr_app_start > 0.0 && self.lr_app_end > 0.0) {
            return Err(Error::Config(
                "stage-2 learning rates must be positive".into(),
            ));
        }
        if !(self.w_smooth >= 0.0 && self.w_offset >= 0.0) {
            return Err(Error::Config("stage-2 loss weights must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.decimate_fraction)
            || !(self.min_edge_rel > 0.0 && self.target_edge_rel > 0.0)
        {
            return Err(Error::Config("invalid stage-2 refinement sizes".into()));
        }
        Ok(())
    }

    /// Step indices after which a topology round runs, one per fraction.
    pub fn schedule(&self) -> Vec<usize> {
        self.refine_fractions
            .iter()
            .map(|f| (f * self.steps as f64).floor() as usize)
            .collect()
    }

    pub fn lr_app_at(&self, step: usize) -> f64 {
        let f = if self.steps == 0 {
            0.0
        } else {
            step as f64 / self.steps as f64
        };
        self.lr_app_start * (self.lr_app_end / self.lr_app_start).powf(f)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stage2Report {
    pub render_loss: Vec<f64>,
    pub rounds: Vec<RefineReport>,
}

struct AppOptim {
    grid: Adam,
    mlp1: Adam,
    mlp2: Adam,
}

/// Renders the mesh with the appearance field.
pub fn render_mesh(
    mesh: &TriMesh,
    app: &AppearanceField,
    camera: &CameraModel,
    background: &Rgb,
) -> Result<Vec<Rgb>> {
    let fb = rasterize(mesh, camera)?;
    Ok(shade(&fb, app, camera, background, false))
}

/// Mean PSNR of rasterized renders against a set of images.
pub fn mesh_psnr(mesh: &TriMesh, app: &AppearanceField, images: &[&PosedImage]) -> Result<f64> {
    let mut se = 0.0;
    let mut n = 0usize;
    for img in images {
        let out = render_mesh(mesh, app, &img.camera, &img.background)?;
        for (a, b) in out.iter().zip(&img.pixels) {
            se += (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
            n += 3;
        }
    }
    Ok(psnr_from_mse(se / n.max(1) as f64))
}

/// Refines mesh geometry and appearance against the training views.
pub fn train_stage2(
    ds: &Dataset,
    mesh: &TriMesh,
    model: &RadianceModel,
    cfg: &Stage2Config,
    seed: u64,
    sink: &mut MetricsSink,
) -> Result<(TriMesh, RadianceModel, Stage2Report)> {
    cfg.validate()?;
    let mut mesh = mesh.clone();
    let mut model = model.clone();
    let mut report = Stage2Report::default();
    if cfg.steps == 0 {
        return Ok((mesh, model, report));
    }
    let train = ds.train();
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let audit = mesh.audit();
    if !audit.is_ok() {
        return Err(Error::Audit(audit.to_json()));
    }
    let region = Aabb::cube(cfg.refine_bound);
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5245_4649_4e45);
    let mut acc = FaceErrorAccumulator::new(mesh.faces.len());
    let mut offsets = vec![0.0; 3 * mesh.vertices.len()];
    let mut offset_opt = Adam::new(offsets.len(), 1e-15, false);
    let app = &model.appearance;
    let mut opt = AppOptim {
        grid: Adam::new(app.grid.values.len(), 1e-15, true),
        mlp1: Adam::new(app.mlp1.params.len(), 1e-8, false),
        mlp2: Adam::new(app.mlp2.params.len(), 1e-8, false),
    };

    for step in 0..cfg.steps {
        let img = train[rng.gen_range(0..train.len())];
        let bg = cfg.background.unwrap_or(img.background);
        let app = &model.appearance;
        let fb = rasterize(&mesh, &img.camera)?;
        let cache = shade_cached(&fb, app, &img.camera, &bg, false);
        let npx = img.pixels.len() as f64;
        let mut pixel_err = Vec::with_capacity(img.pixels.len());
        let mut d_image = Vec::with_capacity(img.pixels.len());
        for (c, t) in cache.image.iter().zip(&img.pixels) {
            pixel_err.push((0..3).map(|k| (c[k] - t[k]).powi(2)).sum::<f64>());
            d_image.push(std::array::from_fn(|k| 2.0 * (c[k] - t[k]) / npx));
        }
        let l_render = pixel_err.iter().sum::<f64>() / npx;
        let (l_smooth, g_smooth) = laplacian_loss(&mesh);
        let (l_offset, g_offset) = offset_loss(&mesh);
        let total = l_render + cfg.w_smooth * l_smooth + cfg.w_offset * l_offset;
        if !total.is_finite() {
            return Err(Error::NonFinite {
                step,
                terms: format!("render={l_render} smooth={l_smooth} offset={l_offset}"),
            });
        }

        let mut g = backward(&fb, &cache, &d_image, &mesh, app)?;
        for (v, gv) in g.offsets.iter_mut().enumerate() {
            *gv += g_smooth[v] * cfg.w_smooth + g_offset[v] * cfg.w_offset;
        }
        if !g.all_finite() {
            return Err(Error::NonFinite {
                step,
                terms: "gradient contains NaN or infinity".into(),
            });
        }
        let mut flat: Vec<f64> = g.offsets.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        offset_opt.step(&mut offsets, &mut flat, cfg.lr_offsets);
        for (v, o) in mesh.offsets.iter_mut().enumerate() {
            *o = Vec3::new(offsets[3 * v], offsets[3 * v + 1], offsets[3 * v + 2]);
        }
        let lr = cfg.lr_app_at(step);
        let app = &mut model.appearance;
        opt.grid.step(&mut app.grid.values, &mut g.app_grid, lr);
        opt.mlp1.step(&mut app.mlp1.params, &mut g.app_mlp1, lr);
        opt.mlp2.step(&mut app.mlp2.params, &mut g.app_mlp2, lr);
        acc.accumulate(&fb, &pixel_err);
        report.render_loss.push(l_render);

        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            sink.emit(json!({
                "stage": 2,
                "step": step,
                "loss": total,
                "render": l_render,
                "smooth": l_smooth,
                "offset": l_offset,
                "psnr": psnr_from_mse(l_render / 3.0),
                "faces": mesh.faces.len(),
                "lr": lr,
            }));
        }

        for _ in schedule.iter().filter(|&&s| s == step) {
            let (next, mut round) = refine_topology(&mesh, &acc, cfg, Some(&region))?;
            round.step = step;
            sink.emit(json!({ "stage": 2, "refine": &round }));
            report.rounds.push(round);
            mesh = next;
            acc.reset(mesh.faces.len());
            offsets = vec![0.0; 3 * mesh.vertices.len()];
            offset_opt.resize(offsets.len());
        }
    }
    mesh.apply_offsets();
    sink.flush();
    Ok((mesh, model, report))
}
