//! Posed-image datasets in the Blender `transforms_<split>.json` layout.
//!
//! ```json
//! { "camera_angle_x": 0.69,
//!   "w": 64, "h": 64,                 // optional; validated against the PNGs
//!   "scene_bound": 1.0,               // optional half-extent of the scene box
//!   "background": [1.0, 1.0, 1.0],    // optional compositing color
//!   "frames": [ { "file_path": "./train/r_0", "transform_matrix": [[...4x4...]] } ] }
//! ```
//! `file_path` may omit the `.png` extension.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb as PxRgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat4, Rgb};
use crate::scene::camera::CameraModel;

pub const DEFAULT_BACKGROUND: Rgb = [1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An RGB image with its camera. Pixels are row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedImage {
    pub camera: CameraModel,
    pub pixels: Vec<Rgb>,
    pub background: Rgb,
}

impl PosedImage {
    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    #[inline]
    pub fn pixel(&self, px: u32, py: u32) -> Rgb {
        self.pixels[py as usize * self.camera.width as usize + px as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<PosedImage>,
    pub splits: Vec<Split>,
    pub scene_bound: f64,
    pub fov_x: f64,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.splits.len() {
            return Err(Error::Validation(
                "split tags do not match image count".into(),
            ));
        }
        if !self.splits.contains(&Split::Train) {
            return Err(Error::Validation("dataset has no train images".into()));
        }
        if !(self.scene_bound > 0.0) {
            return Err(Error::Validation(format!(
                "scene_bound must be positive, got {}",
                self.scene_bound
            )));
        }
        for img in &self.images {
            if img.pixels.len() != img.camera.pixel_count() {
                return Err(Error::Validation(
                    "pixel buffer does not match camera size".into(),
                ));
            }
            if img
                .pixels
                .iter()
                .flatten()
                .any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(Error::Validation("pixel value outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &PosedImage> {
        self.images
            .iter()
            .zip(self.splits.iter())
            .filter(move |(_, s)| **s == split)
            .map(|(i, _)| i)
    }

    pub fn train(&self) -> Vec<&PosedImage> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&PosedImage> {
        self.split(Split::Test).collect()
    }

    pub fn cameras(&self, split: Split) -> Vec<CameraModel> {
        self.split(split).map(|i| i.camera).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    camera_angle_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<Rgb>,
    frames: Vec<Frame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Frame {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("transforms_{}.json", split.name()))
}

fn resolve_image(dir: &Path, file_path: &str) -> PathBuf {
    let p = dir.join(file_path.trim_start_matches("./"));
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

/// Alpha-composites an 8-bit RGBA value over `bg`.
pub fn composite_rgba(px: [u8; 4], bg: Rgb) -> Rgb {
    let a = px[3] as f64 / 255.0;
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = (px[c] as f64 / 255.0) * a + bg[c] * (1.0 - a);
    }
    out
}

/// Loads every `transforms_{train,test}.json` found in `dir`. The train manifest is required.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let train_path = manifest_path(dir, Split::Train);
    if !train_path.exists() {
        return Err(Error::load(&train_path, "pose manifest not found"));
    }
    let mut images = Vec::new();
    let mut splits = Vec::new();
    let mut scene_bound = 1.0;
    let mut fov_x = 0.0;
    for split in [Split::Train, Split::Test] {
        let path = manifest_path(dir, split);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::load(&path, format!("malformed manifest: {e}")))?;
        if split == Split::Train {
            scene_bound = manifest.scene_bound.unwrap_or(1.0);
            fov_x = manifest.camera_angle_x;
        }
        let bg = manifest.background.unwrap_or(DEFAULT_BACKGROUND);
        for frame in &manifest.frames {
            let img_path = resolve_image(dir, &frame.file_path);
            if !img_path.exists() {
                return Err(Error::load(&img_path, "referenced image is missing"));
            }
            let decoded = image::open(&img_path)
                .map_err(|e| Error::load(&img_path, format!("cannot decode image: {e}")))?
                .to_rgba8();
            let (w, h) = decoded.dimensions();
            if manifest.w.is_some_and(|mw| mw != w) || manifest.h.is_some_and(|mh| mh != h) {
                return Err(Error::Validation(format!(
                    "{}: image is {w}x{h} but manifest declares {}x{}",
                    img_path.display(),
                    manifest.w.unwrap_or(w),
                    manifest.h.unwrap_or(h)
                )));
            }
            let m = &frame.transform_matrix;
            let pose = Mat4::from_fn(|r, c| m[r][c]);
            let camera = CameraModel::from_fov(w, h, manifest.camera_angle_x, pose)
                .map_err(|e| Error::load(&path, e.to_string()))?;
            let pixels = decoded.pixels().map(|p| composite_rgba(p.0, bg)).collect();
            images.push(PosedImage {
                camera,
                pixels,
                background: bg,
            });
            splits.push(split);
        }
    }
    let ds = Dataset {
        images,
        splits,
        scene_bound,
        fov_x,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn quantize_channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, width: u32, height: u32, pixels: &[Rgb]) -> Result<()> {
    let img: ImageBuffer<PxRgb<u8>, Vec<u8>> = ImageBuffer::from_fn(width, height, |x, y| {
        let c = pixels[(y * width + x) as usize];
        PxRgb([
            quantize_channel(c[0]),
            quantize_channel(c[1]),
            quantize_channel(c[2]),
        ])
    });
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

/// Writes the dataset in the same layout `load_dataset` reads.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in [Split::Train, Split::Test] {
        let imgs: Vec<&PosedImage> = ds.split(split).collect();
        if imgs.is_empty() {
            continue;
        }
        let mut frames = Vec::new();
        for (i, img) in imgs.iter().enumerate() {
            let rel = format!("./{}/r_{}", split.name(), i);
            write_png(
                &resolve_image(dir, &rel),
                img.width(),
                img.height(),
                &img.pixels,
            )?;
            let m = &img.camera.camera_to_world;
            frames.push(Frame {
                file_path: rel,
                transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            });
        }
        let manifest = Manifest {
            camera_angle_x: ds.fov_x,
            w: Some(imgs[0].width()),
            h: Some(imgs[0].height()),
            scene_bound: Some(ds.scene_bound),
            background: Some(imgs[0].background),
            frames,
        };
        let path = manifest_path(dir, split);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
