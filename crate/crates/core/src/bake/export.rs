//! Baked assets and their on-disk form: OBJ/MTL, PNG textures, a metadata
//! file carrying the specular network, and a checksum manifest written last.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb as PxRgb};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{AppearanceField, Mlp, SH_DIM};
use crate::meshops::TriMesh;

use super::atlas::{unwrap_uv, UnwrapParams, Uv};
use super::obj::{mtl_string, obj_string};
use super::texture::{bake_textures, dilate_seams, quantize, QuantizedTexture, TextureImage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "asset.json";
pub const ASSET_FORMAT: &str = "texmesh-asset";
pub const ASSET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BakeConfig {
    /// Texture resolution of the center region.
    pub resolution: usize,
    /// Lower bound for outer-region textures, which halve per region.
    pub min_resolution: usize,
    pub max_angle_deg: f64,
    pub gutter: usize,
    pub dilate_rounds: usize,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self {
            resolution: 1024,
            min_resolution: 256,
            max_angle_deg: 60.0,
            gutter: 2,
            dilate_rounds: 1,
        }
    }
}

impl BakeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 8 || self.min_resolution < 8 {
            return Err(Error::Config("bake resolutions must be at least 8".into()));
        }
        if !(self.max_angle_deg > 0.0 && self.max_angle_deg < 180.0) {
            return Err(Error::Config(format!(
                "bake.max_angle_deg {} outside (0, 180)",
                self.max_angle_deg
            )));
        }
        Ok(())
    }

    /// `resolution / 2^k`, floored at `min_resolution` but never above `resolution`.
    pub fn resolution_for(&self, k: usize) -> usize {
        let halved = self.resolution.checked_shr(k as u32).unwrap_or(0);
        halved.max(self.min_resolution).min(self.resolution)
    }
}

/// One cascade region: a mesh with per-corner UVs and its two textures.
#[derive(Debug, Clone, PartialEq)]
pub struct BakedRegion {
    pub k: usize,
    pub mesh: TriMesh,
    pub uvs: Vec<[Uv; 3]>,
    pub diffuse: TextureImage,
    pub specular: TextureImage,
}

impl BakedRegion {
    /// The same region with both textures passed through 8-bit storage.
    pub fn quantized(&self) -> Self {
        Self {
            diffuse: quantize(&self.diffuse).dequantize(),
            specular: quantize(&self.specular).dequantize(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BakedAsset {
    pub regions: Vec<BakedRegion>,
    /// Specular network: features ⊕ view encoding → color logits.
    pub mlp2: Mlp,
}

impl BakedAsset {
    pub fn quantized(&self) -> Self {
        Self {
            regions: self.regions.iter().map(BakedRegion::quantized).collect(),
            mlp2: self.mlp2.clone(),
        }
    }
}

/// Unwraps, bakes and dilates one region.
pub fn bake_region(
    mesh: &TriMesh,
    k: usize,
    app: &AppearanceField,
    cfg: &BakeConfig,
) -> Result<BakedRegion> {
    let mut mesh = mesh.clone();
    mesh.apply_offsets();
    let params = UnwrapParams {
        resolution: cfg.resolution_for(k),
        max_angle_deg: cfg.max_angle_deg,
        gutter: cfg.gutter,
    };
    let atlas = unwrap_uv(&mesh, &params)?;
    let baked = bake_textures(&mesh, &atlas, app);
    Ok(BakedRegion {
        k,
        uvs: atlas.uvs,
        diffuse: dilate_seams(&baked.diffuse, cfg.dilate_rounds),
        specular: dilate_seams(&baked.specular, cfg.dilate_rounds),
        mesh,
    })
}

pub fn bake_asset(
    regions: &[(usize, TriMesh)],
    app: &AppearanceField,
    cfg: &BakeConfig,
) -> Result<BakedAsset> {
    cfg.validate()?;
    let regions = regions
        .iter()
        .map(|(k, m)| bake_region(m, *k, app, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BakedAsset {
        regions,
        mlp2: app.mlp2.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    /// Row-major `out × in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub dims: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn from_mlp(m: &Mlp) -> Self {
        Self {
            dims: m.dims().to_vec(),
            hidden_activation: "relu".into(),
            output_activation: "sigmoid".into(),
            layers: (0..m.layers())
                .map(|l| LayerSpec {
                    weights: m.weights(l).to_vec(),
                    biases: m.biases(l).to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the network, checking it maps specular features and the view
    /// encoding to three outputs.
    pub fn to_mlp(&self) -> Result<Mlp> {
        let d = &self.dims;
        if d.len() < 2 || d[0] != 3 + SH_DIM || d[d.len() - 1] != 3 {
            return Err(Error::Shape(format!(
                "specular network dims {d:?} must start at {} and end at 3",
                3 + SH_DIM
            )));
        }
        if self.layers.len() != d.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layers listed for dims {d:?}",
                self.layers.len()
            )));
        }
        let mut params = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != d[l] * d[l + 1] || layer.biases.len() != d[l + 1] {
                return Err(Error::Shape(format!(
                    "layer {l}: {} weights and {} biases for {}→{}",
                    layer.weights.len(),
                    layer.biases.len(),
                    d[l],
                    d[l + 1]
                )));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.biases);
        }
        Mlp::from_params(d, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEncodingSpec {
    pub kind: String,
    pub degree: usize,
    pub dim: usize,
    pub direction: String,
}

impl Default for ViewEncodingSpec {
    fn default() -> Self {
        Self {
            kind: "real_spherical_harmonics".into(),
            degree: 3,
            dim: SH_DIM,
            direction: "normalize(surface_point - camera_origin)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionEntry {
    pub k: usize,
    pub obj: String,
    pub mtl: String,
    pub diffuse: String,
    pub specular: String,
    pub texture_resolution: usize,
    pub vertices: usize,
    pub faces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetMetadata {
    pub format: String,
    pub version: u32,
    pub mlp2: NetworkSpec,
    pub view_encoding: ViewEncodingSpec,
    /// How a fragment's color is formed from the two texture samples.
    pub shading: String,
    pub regions: Vec<RegionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// File name → lowercase hex SHA-256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn png_bytes(tex: &QuantizedTexture) -> Result<Vec<u8>> {
    let raw: Vec<u8> = tex.texels.iter().flatten().copied().collect();
    let img: ImageBuffer<PxRgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(tex.width as u32, tex.height as u32, raw)
            .ok_or_else(|| Error::Shape("texture buffer does not match its size".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Validation(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn read_png(path: &Path) -> Result<QuantizedTexture> {
    let img = image::open(path)
        .map_err(|e| Error::load(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(QuantizedTexture {
        width: w as usize,
        height: h as usize,
        texels: img.pixels().map(|p| p.0).collect(),
    })
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    manifest.files.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Writes every region's OBJ, MTL and textures, then the metadata, then the
/// manifest. A directory without a manifest is an incomplete export.
pub fn export_asset(asset: &BakedAsset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stale = dir.join(MANIFEST_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    let mut manifest = Manifest {
        files: BTreeMap::new(),
    };
    let mut entries = Vec::new();
    for r in &asset.regions {
        let k = r.k;
        let entry = RegionEntry {
            k,
            obj: format!("mesh_{k}.obj"),
            mtl: format!("mesh_{k}.mtl"),
            diffuse: format!("diffuse_{k}.png"),
            specular: format!("specular_{k}.png"),
            texture_resolution: r.diffuse.width,
            vertices: r.mesh.vertices.len(),
            faces: r.mesh.faces.len(),
        };
        if r.uvs.len() != r.mesh.faces.len() {
            return Err(Error::Shape(format!(
                "region {k}: {} UV triples for {} faces",
                r.uvs.len(),
                r.mesh.faces.len()
            )));
        }
        let material = format!("region_{k}");
        write_file(
            dir,
            &entry.obj,
            obj_string(&r.mesh, &r.uvs, &entry.mtl, &material).as_bytes(),
            &mut manifest,
        )?;
        write_file(
            dir,
            &entry.mtl,
            mtl_string(&material, &entry.diffuse).as_bytes(),
            &mut manifest,
        )?;
        write_file(
            dir,
            &entry.diffuse,
            &png_bytes(&quantize(&r.diffuse))?,
            &mut manifest,
        )?;
        write_file(
            dir,
            &entry.specular,
            &png_bytes(&quantize(&r.specular))?,
            &mut manifest,
        )?;
        entries.push(entry);
    }
    let meta = AssetMetadata {
        format: ASSET_FORMAT.into(),
        version: ASSET_VERSION,
        mlp2: NetworkSpec::from_mlp(&asset.mlp2),
        view_encoding: ViewEncodingSpec::default(),
        shading: "clamp(diffuse + sigmoid(mlp2(specular ++ encoding(direction))), 0, 1)".into(),
        regions: entries,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Validation(e.to_string()))?;
    write_file(dir, METADATA_FILE, text.as_bytes(), &mut manifest)?;

    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Validation(e.to_string()))?;
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
