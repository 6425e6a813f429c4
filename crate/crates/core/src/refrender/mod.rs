//! Reference renderer for exported assets, mirroring what a fragment shader
//! does with the files: rasterize, fetch both textures bilinearly, run the
//! specular network on the view direction and add.

use std::fs;
use std::path::Path;

use crate::bake::export::{ASSET_FORMAT, ASSET_VERSION};
use crate::bake::{
    parse_obj, read_png, sha256_hex, AssetMetadata, BakedAsset, BakedRegion, Manifest,
    ViewEncodingSpec, MANIFEST_FILE, METADATA_FILE,
};
use crate::error::{Error, Result};
use crate::field::sh_encode;
use crate::math::{sigmoid, Rgb, Vec3};
use crate::meshops::TriMesh;
use crate::par;
use crate::rasterdiff::rasterize;
use crate::scene::CameraModel;

fn read_listed(dir: &Path, manifest: &Manifest, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let expected = manifest
        .files
        .get(name)
        .ok_or_else(|| Error::load(&path, "file is not listed in the manifest"))?;
    if !path.exists() {
        return Err(Error::load(&path, "file listed in the manifest is missing"));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if &sha256_hex(&bytes) != expected {
        return Err(Error::Checksum(path));
    }
    Ok(bytes)
}

/// Loads an exported asset, verifying every checksum and shape.
pub fn load_baked(dir: &Path) -> Result<BakedAsset> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.exists() {
        return Err(Error::MissingArtifact {
            path: mpath,
            stage: "bake".into(),
        });
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::load(&mpath, e.to_string()))?;
    for name in manifest.files.keys() {
        read_listed(dir, &manifest, name)?;
    }

    let meta_path = dir.join(METADATA_FILE);
    let meta_bytes = read_listed(dir, &manifest, METADATA_FILE)?;
    let meta: AssetMetadata =
        serde_json::from_slice(&meta_bytes).map_err(|e| Error::load(&meta_path, e.to_string()))?;
    if meta.format != ASSET_FORMAT || meta.version != ASSET_VERSION {
        return Err(Error::load(
            &meta_path,
            format!("unsupported asset {} v{}", meta.format, meta.version),
        ));
    }
    let enc = ViewEncodingSpec::default();
    if meta.view_encoding.kind != enc.kind
        || meta.view_encoding.degree != enc.degree
        || meta.view_encoding.dim != enc.dim
    {
        return Err(Error::Shape(format!(
            "view encoding {:?} is not the supported {:?}",
            meta.view_encoding, enc
        )));
    }
    let mlp2 = meta.mlp2.to_mlp()?;

    let mut regions = Vec::with_capacity(meta.regions.len());
    for entry in &meta.regions {
        let obj_path = dir.join(&entry.obj);
        let obj_text = String::from_utf8(read_listed(dir, &manifest, &entry.obj)?)
            .map_err(|e| Error::load(&obj_path, e.to_string()))?;
        read_listed(dir, &manifest, &entry.mtl)?;
        let obj = parse_obj(&obj_path, &obj_text)?;
        if obj.mesh.vertices.len() != entry.vertices || obj.mesh.faces.len() != entry.faces {
            return Err(Error::Shape(format!(
                "{}: {} vertices and {} faces, metadata says {} and {}",
                entry.obj,
                obj.mesh.vertices.len(),
                obj.mesh.faces.len(),
                entry.vertices,
                entry.faces
            )));
        }
        if obj.uvs.len() != obj.mesh.faces.len() {
            return Err(Error::Shape(format!(
                "{}: faces lack texture coordinates",
                entry.obj
            )));
        }
        let audit = obj.mesh.audit();
        if audit.out_of_range > 0 {
            return Err(Error::Audit(audit.to_json()));
        }
        let mut textures = Vec::with_capacity(2);
        for name in [&entry.diffuse, &entry.specular] {
            read_listed(dir, &manifest, name)?;
            let tex = read_png(&dir.join(name))?;
            if tex.width != entry.texture_resolution || tex.height != entry.texture_resolution {
                return Err(Error::Shape(format!(
                    "{name} is {}×{}, metadata says {}",
                    tex.width, tex.height, entry.texture_resolution
                )));
            }
            textures.push(tex.dequantize());
        }
        let specular = textures.pop().expect("two textures");
        let diffuse = textures.pop().expect("two textures");
        regions.push(BakedRegion {
            k: entry.k,
            mesh: obj.mesh,
            uvs: obj.uvs,
            diffuse,
            specular,
        });
    }
    Ok(BakedAsset { regions, mlp2 })
}

/// All region meshes merged for a single depth test, with the owning region
/// and local face of each merged face.
fn merge_regions(asset: &BakedAsset) -> (TriMesh, Vec<(usize, usize)>) {
    let mut merged = TriMesh::default();
    let mut owner = Vec::new();
    for (ri, r) in asset.regions.iter().enumerate() {
        let mut m = r.mesh.clone();
        m.apply_offsets();
        merged.append(&m);
        owner.extend((0..m.faces.len()).map(|f| (ri, f)));
    }
    (merged, owner)
}

/// Renders the asset from `camera`; pixels not covered by any region get `background`.
pub fn render_baked(
    asset: &BakedAsset,
    camera: &CameraModel,
    background: &Rgb,
) -> Result<Vec<Rgb>> {
    let (merged, owner) = merge_regions(asset);
    let frag = rasterize(&merged, camera)?;
    let origin = camera.origin();
    Ok(par::map_slice(&frag.pixels, |p| {
        let Some(f) = p else { return *background };
        let (ri, lf) = owner[f.face as usize];
        let r = &asset.regions[ri];
        let uvs = &r.uvs[lf];
        let u = f.bary[0] * uvs[0][0] + f.bary[1] * uvs[1][0] + f.bary[2] * uvs[2][0];
        let v = f.bary[0] * uvs[0][1] + f.bary[1] * uvs[1][1] + f.bary[2] * uvs[2][1];
        let cd = r.diffuse.sample_bilinear(u, v);
        let fs = r.specular.sample_bilinear(u, v);
        let view = f.x - origin;
        let dist = view.norm();
        let dir = if dist > 0.0 {
            view / dist
        } else {
            Vec3::new(0.0, 0.0, -1.0)
        };
        let mut input = fs.to_vec();
        input.extend_from_slice(&sh_encode(&dir));
        let out = asset.mlp2.eval(&input);
        std::array::from_fn(|k| (cd[k] + sigmoid(out[k])).clamp(0.0, 1.0))
    }))
}
