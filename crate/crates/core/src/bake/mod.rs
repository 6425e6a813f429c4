//! Texture baking and asset export.
//!
//! Meshes are cut into planar charts, packed into an atlas and rasterized in
//! texel space. Each texel stores the diffuse color and the specular features
//! of its surface point; a one-texel dilation keeps bilinear lookups at chart
//! borders away from unwritten texels.

pub mod atlas;
pub mod export;
pub mod obj;
pub mod texture;

pub use atlas::{surface_per_uv_area, unwrap_uv, ChartRect, UnwrapParams, Uv, UvAtlas};
pub use export::{
    bake_asset, bake_region, export_asset, read_png, sha256_hex, AssetMetadata, BakeConfig,
    BakedAsset, BakedRegion, Manifest, NetworkSpec, RegionEntry, ViewEncodingSpec, MANIFEST_FILE,
    METADATA_FILE,
};
pub use obj::{mesh_obj_string, parse_obj, ObjMesh};
pub use texture::{
    bake_from_map, bake_textures, dilate_seams, quantize, texel_map, BakedTextures,
    QuantizedTexture, TexelMap, TexelSample, TextureImage,
};

use crate::error::Result;
use crate::meshops::TriMesh;
use crate::pipeline::{extract_region, ExtractConfig, ExtractReport};
use crate::scene::CameraModel;
use crate::volrender::RadianceModel;

/// Meshes for regions `0..=cfg.cascades`, each over its own box with the
/// inner box excluded.
pub fn export_cascade(
    model: &RadianceModel,
    cameras: &[CameraModel],
    cfg: &ExtractConfig,
) -> Result<Vec<(TriMesh, ExtractReport)>> {
    (0..=cfg.cascades)
        .map(|k| extract_region(model, cameras, cfg, k))
        .collect()
}
