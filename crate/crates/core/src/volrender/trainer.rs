//! Stage-1 optimization of the radiance fields from posed images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::composite::{alpha, render_ray, render_ray_backward, RayRender};
use super::losses::binary_entropy_grad;
use super::model::{RadianceModel, EARLY_STOP_TRANSMITTANCE};
use super::sampling::{for_each_candidate, ray_bounds};
use crate::error::{Error, Result};
use crate::field::{color_sum, Adam, AppEval, FieldConfig, FieldGrads, GeoEval, SpecEval};
use crate::math::{psnr_from_mse, Ray, Rgb, Vec3};
use crate::metrics::MetricsSink;
use crate::par;
use crate::scene::{Dataset, PosedImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub steps: usize,
    /// Target number of field evaluations per step; the ray batch adapts to it.
    pub points_per_step: usize,
    pub min_rays: usize,
    pub max_rays: usize,
    /// Strata per ray between the scene-box entry and exit.
    pub max_samples: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub diffuse_warmup_steps: usize,
    pub w_specular: f64,
    /// Defaults to 1e-3 for outdoor scenes, 0 otherwise.
    pub w_entropy: Option<f64>,
    /// Defaults to 1e-8 for outdoor scenes, 0 otherwise.
    pub w_tv: Option<f64>,
    pub outdoor: bool,
    pub occupancy_res: usize,
    pub occupancy_interval: usize,
    pub occupancy_decay: f64,
    /// Overrides the per-image background color.
    pub background: Option<Rgb>,
    pub jitter: bool,
    pub log_every: usize,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            steps: 30_000,
            points_per_step: 1 << 18,
            min_rays: 64,
            max_rays: 4096,
            max_samples: 256,
            lr_start: 1e-2,
            lr_end: 1e-3,
            diffuse_warmup_steps: 1000,
            w_specular: 1e-5,
            w_entropy: None,
            w_tv: None,
            outdoor: false,
            occupancy_res: 128,
            occupancy_interval: 16,
            occupancy_decay: 0.95,
            background: None,
            jitter: true,
            log_every: 100,
        }
    }
}

impl Stage1Config {
    pub fn entropy_weight(&self) -> f64 {
        self.w_entropy
            .unwrap_or(if self.outdoor { 1e-3 } else { 0.0 })
    }

    pub fn tv_weight(&self) -> f64 {
        self.w_tv.unwrap_or(if self.outdoor { 1e-8 } else { 0.0 })
    }

    /// Learning rate at `step`, decaying exponentially from `lr_start` to `lr_end`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let f = if self.steps == 0 {
            0.0
        } else {
            step as f64 / self.steps as f64
        };
        self.lr_start * (self.lr_end / self.lr_start).powf(f)
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_specular, self.entropy_weight(), self.tv_weight()];
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("stage-1 loss weights must be ≥ 0".into()));
        }
        if self.max_samples == 0 || self.min_rays == 0 || self.min_rays > self.max_rays {
            return Err(Error::Config("invalid stage-1 sampling budget".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.occupancy_res == 0 || self.occupancy_interval == 0 {
            return Err(Error::Config(
                "occupancy grid needs positive resolution and interval".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step history kept in memory alongside the metrics file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stage1Report {
    pub render_loss: Vec<f64>,
    pub samples_per_step: Vec<usize>,
}

/// Optimizer state for every trainable array of the radiance model.
pub(crate) struct FieldOptim {
    pub geo_grid: Adam,
    pub geo_mlp: Adam,
    pub app_grid: Adam,
    pub app_mlp1: Adam,
    pub app_mlp2: Adam,
}

impl FieldOptim {
    pub fn new(m: &RadianceModel) -> Self {
        Self {
            geo_grid: Adam::new(m.geometry.grid.values.len(), 1e-15, true),
            geo_mlp: Adam::new(m.geometry.mlp.params.len(), 1e-8, false),
            app_grid: Adam::new(m.appearance.grid.values.len(), 1e-15, true),
            app_mlp1: Adam::new(m.appearance.mlp1.params.len(), 1e-8, false),
            app_mlp2: Adam::new(m.appearance.mlp2.params.len(), 1e-8, false),
        }
    }

    pub fn step(&mut self, m: &mut RadianceModel, g: &mut FieldGrads, lr: f64, geometry: bool) {
        if geometry {
            self.geo_grid
                .step(&mut m.geometry.grid.values, &mut g.geo_grid, lr);
            self.geo_mlp
                .step(&mut m.geometry.mlp.params, &mut g.geo_mlp, lr);
        }
        self.app_grid
            .step(&mut m.appearance.grid.values, &mut g.app_grid, lr);
        self.app_mlp1
            .step(&mut m.appearance.mlp1.params, &mut g.app_mlp1, lr);
        self.app_mlp2
            .step(&mut m.appearance.mlp2.params, &mut g.app_mlp2, lr);
    }
}

struct RayJob {
    ray: Ray,
    target: Rgb,
    background: Rgb,
    seed: u64,
}

struct RayWork {
    deltas: Vec<f64>,
    sigmas: Vec<f64>,
    geo: Vec<GeoEval>,
    app: Vec<AppEval>,
    spec: Vec<SpecEval>,
    colors: Vec<Rgb>,
    render: RayRender,
}

/// Per-chunk gradient contributions; grid gradients are kept as point records
/// and scattered once per step.
struct ChunkGrad {
    geo_mlp: Vec<f64>,
    app_mlp1: Vec<f64>,
    app_mlp2: Vec<f64>,
    geo_x: Vec<Vec3>,
    geo_df: Vec<f64>,
    app_x: Vec<Vec3>,
    app_df: Vec<f64>,
}

const RAYS_PER_CHUNK: usize = 16;

fn forward_ray(
    m: &RadianceModel,
    job: &RayJob,
    max_samples: usize,
    jitter: bool,
    diffuse_only: bool,
) -> RayWork {
    let mut w = RayWork {
        deltas: Vec::new(),
        sigmas: Vec::new(),
        geo: Vec::new(),
        app: Vec::new(),
        spec: Vec::new(),
        colors: Vec::new(),
        render: RayRender::default(),
    };
    if let Some((near, far)) = ray_bounds(&job.ray, m.bound) {
        let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
        let rng: Option<&mut dyn rand::RngCore> = if jitter { Some(&mut rng) } else { None };
        let mut t = 1.0;
        for_each_candidate(
            &job.ray,
            &m.occupancy,
            near,
            far,
            max_samples,
            rng,
            |_, d, x| {
                let mut ge = GeoEval::default();
                let s = m.geometry.forward(&x, &mut ge);
                w.geo.push(ge);
                w.sigmas.push(s);
                w.deltas.push(d);
                t *= 1.0 - alpha(s, d);
                t >= EARLY_STOP_TRANSMITTANCE
            },
        );
        for ge in &w.geo {
            let mut ae = AppEval::default();
            m.appearance.forward_appearance(&ge.x, &mut ae);
            let cs = if diffuse_only {
                [0.0; 3]
            } else {
                let mut se = SpecEval::default();
                let cs = m.appearance.forward_specular(&ae.fs, &job.ray.dir, &mut se);
                w.spec.push(se);
                cs
            };
            w.colors.push(color_sum(&ae.cd, &cs, diffuse_only));
            w.app.push(ae);
        }
    }
    w.render = render_ray(&w.sigmas, &w.deltas, &w.colors, &job.background);
    w
}

struct LossScales {
    rays: f64,
    points: f64,
    w_specular: f64,
    w_entropy: f64,
    diffuse_only: bool,
}

fn backward_chunk(
    m: &RadianceModel,
    jobs: &[RayJob],
    works: &[RayWork],
    s: &LossScales,
) -> ChunkGrad {
    let geo_dim = m.geometry.grid.output_dim();
    let app_dim = m.appearance.grid.output_dim();
    let mut g = ChunkGrad {
        geo_mlp: vec![0.0; m.geometry.mlp.params.len()],
        app_mlp1: vec![0.0; m.appearance.mlp1.params.len()],
        app_mlp2: vec![0.0; m.appearance.mlp2.params.len()],
        geo_x: Vec::new(),
        geo_df: Vec::new(),
        app_x: Vec::new(),
        app_df: Vec::new(),
    };
    let mut scratch = Vec::new();
    for (job, w) in jobs.iter().zip(works) {
        let n = w.sigmas.len();
        if n == 0 {
            continue;
        }
        let d_color: Rgb =
            std::array::from_fn(|k| 2.0 * (w.render.color[k] - job.target[k]) / s.rays);
        let mut d_sigma = vec![0.0; n];
        let mut d_colors = vec![[0.0; 3]; n];
        render_ray_backward(
            &w.deltas,
            &w.colors,
            &w.render,
            &job.background,
            &d_color,
            &mut d_sigma,
            &mut d_colors,
        );
        for i in 0..n {
            if s.w_entropy > 0.0 {
                let a = w.render.alphas[i];
                d_sigma[i] +=
                    s.w_entropy * binary_entropy_grad(a) / s.points * w.deltas[i] * (1.0 - a);
            }
            let d_cd = d_colors[i];
            let d_fs = if s.diffuse_only {
                [0.0; 3]
            } else {
                let se = &w.spec[i];
                let d_cs: Rgb = std::array::from_fn(|k| {
                    d_colors[i][k] + s.w_specular * 2.0 * se.cs[k] / s.points
                });
                m.appearance
                    .backward_specular(se, &d_cs, &mut g.app_mlp2, None, &mut scratch)
            };
            let start = g.app_df.len();
            g.app_df.resize(start + app_dim, 0.0);
            m.appearance.backward_appearance(
                &w.app[i],
                &d_cd,
                &d_fs,
                &mut g.app_mlp1,
                &mut g.app_df[start..],
                &mut scratch,
            );
            g.app_x.push(w.app[i].x);

            let start = g.geo_df.len();
            g.geo_df.resize(start + geo_dim, 0.0);
            m.geometry.backward(
                &w.geo[i],
                d_sigma[i],
                &mut g.geo_mlp,
                &mut g.geo_df[start..],
                &mut scratch,
            );
            g.geo_x.push(w.geo[i].x);
        }
    }
    g
}

/// One optimization step's loss values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub render: f64,
    pub specular: f64,
    pub entropy: f64,
    pub tv: f64,
    pub total: f64,
    pub samples: usize,
}

/// Fits geometry and appearance fields to the training split.
pub fn train_stage1(
    ds: &Dataset,
    field_cfg: &FieldConfig,
    cfg: &Stage1Config,
    seed: u64,
    sink: &mut MetricsSink,
) -> Result<(RadianceModel, Stage1Report)> {
    cfg.validate()?;
    ds.validate()?;
    let train = ds.train();
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model =
        RadianceModel::new(field_cfg, ds.scene_bound, cfg.occupancy_res, &mut init_rng)?;
    model.occupancy.decay = cfg.occupancy_decay;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5354_4147_4531);
    let mut optim = FieldOptim::new(&model);
    let mut grads = FieldGrads::zeros(&model.geometry, &model.appearance);
    let mut report = Stage1Report::default();
    let mut n_rays = (cfg.points_per_step / 32).clamp(cfg.min_rays, cfg.max_rays);

    for step in 0..cfg.steps {
        if step % cfg.occupancy_interval == 0 {
            let geo = &model.geometry;
            model
                .occupancy
                .update(|x| geo.density(x), seed.wrapping_add(step as u64));
        }
        let lr = cfg.lr_at(step);
        let diffuse_only = step < cfg.diffuse_warmup_steps;
        let jobs = draw_rays(&train, n_rays, cfg, &mut rng);
        let losses = train_step(
            &mut model,
            &mut optim,
            &mut grads,
            &jobs,
            cfg,
            lr,
            diffuse_only,
            step,
        )?;

        report.render_loss.push(losses.render);
        report.samples_per_step.push(losses.samples);
        let mean_samples = (losses.samples as f64 / jobs.len() as f64).max(1.0);
        n_rays = ((cfg.points_per_step as f64 / mean_samples) as usize)
            .clamp(cfg.min_rays, cfg.max_rays);

        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            sink.emit(json!({
                "stage": 1,
                "step": step,
                "loss": losses.total,
                "render": losses.render,
                "specular": losses.specular,
                "entropy": losses.entropy,
                "tv": losses.tv,
                "psnr": psnr_from_mse(losses.render / 3.0),
                "rays": jobs.len(),
                "samples": losses.samples,
                "lr": lr,
                "occupied": model.occupancy.occupied_fraction(),
            }));
        }
    }
    sink.flush();
    Ok((model, report))
}

fn draw_rays(
    train: &[&PosedImage],
    n: usize,
    cfg: &Stage1Config,
    rng: &mut ChaCha8Rng,
) -> Vec<RayJob> {
    (0..n)
        .map(|_| {
            let img = train[rng.gen_range(0..train.len())];
            let (px, py) = (
                rng.gen_range(0..img.width()),
                rng.gen_range(0..img.height()),
            );
            let jit = if cfg.jitter {
                (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            } else {
                (0.0, 0.0)
            };
            RayJob {
                ray: img.camera.ray(px, py, jit),
                target: img.pixel(px, py),
                background: cfg.background.unwrap_or(img.background),
                seed: rng.gen(),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut RadianceModel,
    optim: &mut FieldOptim,
    grads: &mut FieldGrads,
    jobs: &[RayJob],
    cfg: &Stage1Config,
    lr: f64,
    diffuse_only: bool,
    step: usize,
) -> Result<StepLosses> {
    let m = &*model;
    let works: Vec<Vec<RayWork>> = par::map_chunks(jobs.len(), RAYS_PER_CHUNK, |r| {
        jobs[r]
            .iter()
            .map(|j| forward_ray(m, j, cfg.max_samples, cfg.jitter, diffuse_only))
            .collect()
    });

    let samples: usize = works.iter().flatten().map(|w| w.sigmas.len()).sum();
    let mut l = StepLosses {
        samples,
        ..Default::default()
    };
    for (j, w) in jobs.iter().zip(works.iter().flatten()) {
        l.render += (0..3)
            .map(|k| (w.render.color[k] - j.target[k]).powi(2))
            .sum::<f64>();
        if !diffuse_only {
            l.specular += w
                .spec
                .iter()
                .map(|s| s.cs.iter().map(|c| c * c).sum::<f64>())
                .sum::<f64>();
        }
        l.entropy += w
            .render
            .alphas
            .iter()
            .map(|&a| super::losses::binary_entropy(a))
            .sum::<f64>();
    }
    let pts = samples.max(1) as f64;
    l.render /= jobs.len() as f64;
    l.specular /= pts;
    l.entropy /= pts;
    let w_tv = cfg.tv_weight();
    let w_ent = cfg.entropy_weight();
    let w_spec = if diffuse_only { 0.0 } else { cfg.w_specular };
    if w_tv > 0.0 {
        l.tv = m
            .geometry
            .grid
            .total_variation(w_tv, Some(&mut grads.geo_grid));
    }
    l.total = l.render + w_spec * l.specular + w_ent * l.entropy + w_tv * l.tv;
    if !l.total.is_finite() {
        return Err(Error::NonFinite {
            step,
            terms: format!(
                "render={} specular={} entropy={} tv={}",
                l.render, l.specular, l.entropy, l.tv
            ),
        });
    }

    let scales = LossScales {
        rays: jobs.len() as f64,
        points: pts,
        w_specular: w_spec,
        w_entropy: w_ent,
        diffuse_only,
    };
    let chunk_jobs: Vec<&[RayJob]> = jobs.chunks(RAYS_PER_CHUNK).collect();
    let pairs: Vec<(&[RayJob], &Vec<RayWork>)> = chunk_jobs.into_iter().zip(works.iter()).collect();
    let parts = par::map_slice(&pairs, |(j, w)| backward_chunk(m, j, w, &scales));

    let mut geo_x = Vec::new();
    let mut geo_df = Vec::new();
    let mut app_x = Vec::new();
    let mut app_df = Vec::new();
    for p in parts {
        for (a, b) in [
            (&mut grads.geo_mlp, &p.geo_mlp),
            (&mut grads.app_mlp1, &p.app_mlp1),
            (&mut grads.app_mlp2, &p.app_mlp2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        geo_x.extend(p.geo_x);
        geo_df.extend(p.geo_df);
        app_x.extend(p.app_x);
        app_df.extend(p.app_df);
    }
    m.geometry
        .grid
        .scatter(&geo_x, &geo_df, &mut grads.geo_grid);
    m.appearance
        .grid
        .scatter(&app_x, &app_df, &mut grads.app_grid);
    if !grads.all_finite() {
        return Err(Error::NonFinite {
            step,
            terms: "gradient contains NaN or infinity".into(),
        });
    }
    optim.step(model, grads, lr, true);
    Ok(l)
}

/// Mean PSNR of the model over a set of images.
pub fn evaluate_psnr(model: &RadianceModel, images: &[&PosedImage], max_samples: usize) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for img in images {
        let out = model.render_image(&img.camera, &img.background, max_samples);
        for (a, b) in out.iter().zip(&img.pixels) {
            se += (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
            n += 3;
        }
    }
    psnr_from_mse(se / n.max(1) as f64)
}
