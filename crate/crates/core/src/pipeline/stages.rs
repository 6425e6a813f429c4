//! One function per command. Each reads its inputs from the artifact layout,
//! fails with a dependency error when an upstream artifact is absent and
//! writes its outputs plus a config echo into its own directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::bake::{bake_asset, export_asset, export_cascade, mesh_obj_string, parse_obj};
use crate::error::{Error, Result};
use crate::eval::{chamfer, mesh_stats, psnr, MetricsReport, CHAMFER_CONVENTION};
use crate::meshops::{Bvh, TriMesh};
use crate::metrics::MetricsSink;
use crate::refine::train_stage2;
use crate::refrender::{load_baked, render_baked};
use crate::scene::dataset::write_png;
use crate::scene::{
    generate_synthetic_dataset, load_dataset, write_dataset, Dataset, Split, SurfaceOracle,
    SyntheticScene,
};
use crate::volrender::{evaluate_psnr, train_stage1, RadianceModel};

use super::config::PipelineConfig;

pub const CONFIG_ECHO: &str = "config.toml";
pub const SCENE_FILE: &str = "scene.json";

/// Where every artifact lives under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub dataset: PathBuf,
}

impl Layout {
    pub fn new(root: &Path, cfg: &PipelineConfig) -> Self {
        Self {
            root: root.to_path_buf(),
            dataset: cfg.data.dir.clone().unwrap_or_else(|| root.join("dataset")),
        }
    }

    pub fn stage1(&self) -> PathBuf {
        self.root.join("stage1")
    }

    pub fn checkpoint1(&self) -> PathBuf {
        self.stage1().join("model.ckpt")
    }

    pub fn extract(&self) -> PathBuf {
        self.root.join("extract")
    }

    pub fn coarse(&self, k: usize) -> PathBuf {
        self.extract().join(format!("coarse_{k}.obj"))
    }

    pub fn stage2(&self) -> PathBuf {
        self.root.join("stage2")
    }

    pub fn fine(&self) -> PathBuf {
        self.stage2().join("fine.obj")
    }

    pub fn checkpoint2(&self) -> PathBuf {
        self.stage2().join("model.ckpt")
    }

    pub fn asset(&self) -> PathBuf {
        self.root.join("asset")
    }

    pub fn render(&self) -> PathBuf {
        self.root.join("render")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
}

fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            path,
            stage: stage.into(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("serializable") + "\n"),
    )
}

fn start(name: &str, dir: &Path, cfg: &PipelineConfig) -> Result<Instant> {
    let echo = cfg.to_toml();
    log::info!("{name}: seed {}", cfg.seed);
    log::info!("{name}: config\n{echo}");
    write_text(&dir.join(CONFIG_ECHO), &echo)?;
    Ok(Instant::now())
}

fn finish(name: &str, t: Instant) {
    log::info!("{name}: done in {:.1?}", t.elapsed());
}

fn dataset(layout: &Layout) -> Result<Dataset> {
    require(layout.dataset.join("transforms_train.json"), "synth")?;
    load_dataset(&layout.dataset)
}

fn read_mesh(path: &Path, stage: &str) -> Result<TriMesh> {
    let path = require(path.to_path_buf(), stage)?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(parse_obj(&path, &text)?.mesh)
}

fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    write_text(path, &mesh_obj_string(mesh))
}

fn load_model(path: PathBuf, stage: &str) -> Result<RadianceModel> {
    RadianceModel::load(&require(path, stage)?)
}

/// The analytic surface when the dataset was synthesized.
fn oracle(layout: &Layout) -> Result<Option<SurfaceOracle>> {
    let path = layout.dataset.join(SCENE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scene: SyntheticScene =
        serde_json::from_str(&text).map_err(|e| Error::load(&path, e.to_string()))?;
    Ok(Some(SurfaceOracle { shape: scene.shape }))
}

pub fn synth(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let dir = &layout.dataset;
    let t = start("synth", dir, cfg)?;
    let (ds, _) = generate_synthetic_dataset(&cfg.synth.scene, &cfg.synth.dataset, cfg.seed)?;
    write_dataset(&ds, dir)?;
    write_json(&dir.join(SCENE_FILE), &cfg.synth.scene)?;
    finish("synth", t);
    Ok(())
}

pub fn train1(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let ds = dataset(layout)?;
    let dir = layout.stage1();
    let t = start("train1", &dir, cfg)?;
    let mut sink = MetricsSink::to_file(&dir.join("metrics.jsonl"))?;
    let (model, report) = train_stage1(&ds, &cfg.field, &cfg.stage1, cfg.seed, &mut sink)?;
    sink.flush();
    model.save(&layout.checkpoint1(), cfg.to_json())?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "steps": cfg.stage1.steps,
            "final_render_loss": report.render_loss.last(),
        }),
    )?;
    finish("train1", t);
    Ok(())
}

pub fn extract(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let ds = dataset(layout)?;
    let model = load_model(layout.checkpoint1(), "train1")?;
    let dir = layout.extract();
    let t = start("extract", &dir, cfg)?;
    let regions = export_cascade(&model, &ds.cameras(Split::Train), &cfg.extract)?;
    let mut reports = Vec::new();
    for (k, (mesh, report)) in regions.iter().enumerate() {
        log::info!(
            "extract: region {k}: {} vertices, {} faces",
            mesh.vertices.len(),
            mesh.faces.len()
        );
        write_mesh(&layout.coarse(k), mesh)?;
        reports.push(report);
    }
    write_json(&dir.join("report.json"), &reports)?;
    finish("extract", t);
    Ok(())
}

pub fn train2(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let ds = dataset(layout)?;
    let model = load_model(layout.checkpoint1(), "train1")?;
    let coarse = read_mesh(&layout.coarse(0), "extract")?;
    let dir = layout.stage2();
    let t = start("train2", &dir, cfg)?;
    let mut sink = MetricsSink::to_file(&dir.join("metrics.jsonl"))?;
    let (fine, model, report) =
        train_stage2(&ds, &coarse, &model, &cfg.stage2, cfg.seed, &mut sink)?;
    sink.flush();
    write_mesh(&layout.fine(), &fine)?;
    model.save(&layout.checkpoint2(), cfg.to_json())?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "steps": cfg.stage2.steps,
            "coarse_faces": coarse.faces.len(),
            "fine_faces": fine.faces.len(),
            "final_render_loss": report.render_loss.last(),
            "rounds": report.rounds,
        }),
    )?;
    finish("train2", t);
    Ok(())
}

pub fn bake(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let model = load_model(layout.checkpoint2(), "train2")?;
    let mut regions = vec![(0, read_mesh(&layout.fine(), "train2")?)];
    for k in 1..=cfg.extract.cascades {
        regions.push((k, read_mesh(&layout.coarse(k), "extract")?));
    }
    let dir = layout.asset();
    let t = start("bake", &dir, cfg)?;
    let asset = bake_asset(&regions, &model.appearance, &cfg.bake)?;
    let manifest = export_asset(&asset, &dir)?;
    log::info!("bake: wrote {} files", manifest.files.len());
    finish("bake", t);
    Ok(())
}

pub fn render(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let ds = dataset(layout)?;
    let asset = load_baked(&layout.asset())?;
    let dir = layout.render();
    let t = start("render", &dir, cfg)?;
    let split = cfg.render.split;
    for (i, img) in ds.split(split).enumerate() {
        let camera = match cfg.render.resolution {
            Some(r) => img.camera.with_resolution(r, r),
            None => img.camera.clone(),
        };
        let pixels = render_baked(&asset, &camera, &img.background)?;
        write_png(
            &dir.join(format!("{}_{i:03}.png", split.name())),
            camera.width,
            camera.height,
            &pixels,
        )?;
    }
    finish("render", t);
    Ok(())
}

fn merged(meshes: impl IntoIterator<Item = TriMesh>) -> TriMesh {
    let mut out = TriMesh::default();
    for mut m in meshes {
        m.apply_offsets();
        out.append(&m);
    }
    out
}

/// Computes the metrics report without writing anything.
pub fn evaluate(cfg: &PipelineConfig, layout: &Layout) -> Result<MetricsReport> {
    let ds = dataset(layout)?;
    let asset = load_baked(&layout.asset())?;
    let ec = &cfg.eval;
    let images: Vec<_> = ds.split(ec.split).collect();
    if images.is_empty() {
        return Err(Error::Validation(format!(
            "{} split is empty",
            ec.split.name()
        )));
    }
    let mut per_view = Vec::with_capacity(images.len());
    for img in &images {
        let out = render_baked(&asset, &img.camera, &img.background)?;
        per_view.push(psnr(&out, &img.pixels, 1.0)?);
    }
    let baked_psnr = per_view.iter().sum::<f64>() / per_view.len() as f64;

    let (mut chamfer_coarse, mut chamfer_fine) = (None, None);
    if let Some(oracle) = oracle(layout)? {
        let cams = ds.cameras(ec.split);
        let fine = merged(asset.regions.iter().map(|r| r.mesh.clone()));
        chamfer_fine = Some(chamfer(&Bvh::new(&fine), &oracle, &cams, ec.n_points)?);
        let coarse_paths: Vec<_> = (0..=cfg.extract.cascades)
            .map(|k| layout.coarse(k))
            .collect();
        if coarse_paths.iter().all(|p| p.exists()) {
            let meshes = coarse_paths
                .iter()
                .map(|p| read_mesh(p, "extract"))
                .collect::<Result<Vec<_>>>()?;
            chamfer_coarse = Some(chamfer(
                &Bvh::new(&merged(meshes)),
                &oracle,
                &cams,
                ec.n_points,
            )?);
        }
    }

    let stage1_train_psnr = if layout.checkpoint1().exists() {
        let model = RadianceModel::load(&layout.checkpoint1())?;
        Some(evaluate_psnr(&model, &ds.train(), cfg.stage1.max_samples))
    } else {
        None
    };

    Ok(MetricsReport {
        seed: cfg.seed,
        split: ec.split.name().into(),
        chamfer_convention: CHAMFER_CONVENTION.into(),
        chamfer_points: ec.n_points,
        chamfer_coarse,
        chamfer_fine,
        stage1_train_psnr,
        baked_psnr,
        baked_psnr_per_view: per_view,
        asset: mesh_stats(&layout.asset())?,
    })
}

pub fn eval(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    let dir = layout.eval();
    let t = start("eval", &dir, cfg)?;
    let report = evaluate(cfg, layout)?;
    let table = report.table();
    log::info!("eval:\n{table}");
    write_text(&dir.join("metrics.json"), &report.to_json())?;
    write_text(&dir.join("metrics.txt"), &table)?;
    finish("eval", t);
    Ok(())
}

/// Every stage in order; synthesis is skipped when an external dataset is configured.
pub fn pipeline(cfg: &PipelineConfig, layout: &Layout) -> Result<()> {
    if cfg.data.dir.is_none() {
        synth(cfg, layout)?;
    }
    train1(cfg, layout)?;
    extract(cfg, layout)?;
    train2(cfg, layout)?;
    bake(cfg, layout)?;
    render(cfg, layout)?;
    eval(cfg, layout)
}
