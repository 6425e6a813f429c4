//! Asset statistics and the metrics report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bake::parse_obj;
use crate::error::{Error, Result};

/// Vertex and face counts summed over every OBJ in a directory, plus bytes on
/// disk grouped by file class. Files outside the mesh, texture and metadata
/// classes are not counted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub faces: usize,
    pub bytes: BTreeMap<String, u64>,
}

impl MeshStats {
    pub fn total_bytes(&self) -> u64 {
        self.bytes.values().sum()
    }
}

fn file_class(path: &Path) -> Option<&'static str> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") | Some("mtl") => Some("mesh"),
        Some("png") => Some("texture"),
        Some("json") => Some("metadata"),
        _ => None,
    }
}

pub fn mesh_stats(dir: &Path) -> Result<MeshStats> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    let mut stats = MeshStats::default();
    for entry in entries {
        let path = entry.path();
        let meta = entry.metadata().map_err(|e| Error::io(&path, e))?;
        let Some(class) = file_class(&path).filter(|_| meta.is_file()) else {
            continue;
        };
        *stats.bytes.entry(class.to_string()).or_default() += meta.len();
        if path.extension().is_some_and(|e| e == "obj") {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let obj = parse_obj(&path, &text)?;
            stats.vertices += obj.mesh.vertices.len();
            stats.faces += obj.mesh.faces.len();
        }
    }
    Ok(stats)
}

pub const CHAMFER_CONVENTION: &str =
    "symmetric mean of squared nearest-neighbour distances over ray-surface hits";

/// Machine-readable evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub split: String,
    pub chamfer_convention: String,
    pub chamfer_points: usize,
    /// Against the analytic surface; absent when the dataset has no ground truth.
    pub chamfer_coarse: Option<f64>,
    pub chamfer_fine: Option<f64>,
    /// Volume-rendered training-view PSNR of the stage-1 field.
    pub stage1_train_psnr: Option<f64>,
    pub baked_psnr: f64,
    pub baked_psnr_per_view: Vec<f64>,
    pub asset: MeshStats,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn table(&self) -> String {
        let opt =
            |v: Option<f64>, fmt: fn(f64) -> String| v.map(fmt).unwrap_or_else(|| "n/a".into());
        let sci = |v: f64| format!("{v:.4e}");
        let db = |v: f64| format!("{v:.2} dB");
        let mut rows = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("chamfer (coarse)".into(), opt(self.chamfer_coarse, sci)),
            ("chamfer (fine)".into(), opt(self.chamfer_fine, sci)),
            ("stage-1 train PSNR".into(), opt(self.stage1_train_psnr, db)),
            (format!("baked PSNR ({})", self.split), db(self.baked_psnr)),
            ("vertices".into(), self.asset.vertices.to_string()),
            ("faces".into(), self.asset.faces.to_string()),
        ];
        for (class, b) in &self.asset.bytes {
            rows.push((format!("bytes ({class})"), b.to_string()));
        }
        rows.push(("bytes (total)".into(), self.asset.total_bytes().to_string()));
        let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
        let mut s = format!(
            "Chamfer: {} ({} points per side)\n\n",
            self.chamfer_convention, self.chamfer_points
        );
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
        s
    }
}
