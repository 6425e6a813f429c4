//! Wavefront OBJ/MTL with per-corner texture coordinates.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::meshops::TriMesh;

use super::atlas::Uv;

/// Distinct texture coordinates in first-use order and the per-corner indices into them.
pub fn index_uvs(uvs: &[[Uv; 3]]) -> (Vec<Uv>, Vec<[u32; 3]>) {
    let mut table: HashMap<(u64, u64), u32> = HashMap::new();
    let mut unique = Vec::new();
    let corners = uvs
        .iter()
        .map(|face| {
            face.map(|uv| {
                *table
                    .entry((uv[0].to_bits(), uv[1].to_bits()))
                    .or_insert_with(|| {
                        unique.push(uv);
                        (unique.len() - 1) as u32
                    })
            })
        })
        .collect();
    (unique, corners)
}

/// OBJ text for a mesh with effective positions, one material and 1-based `v/vt` faces.
pub fn obj_string(mesh: &TriMesh, uvs: &[[Uv; 3]], mtl_file: &str, material: &str) -> String {
    let (table, corners) = index_uvs(uvs);
    let mut s = String::new();
    let _ = writeln!(s, "mtllib {mtl_file}");
    let _ = writeln!(s, "o {material}");
    for p in mesh.positions() {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for uv in &table {
        let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
    }
    let _ = writeln!(s, "usemtl {material}");
    for (f, t) in mesh.faces.iter().zip(&corners) {
        let _ = writeln!(
            s,
            "f {}/{} {}/{} {}/{}",
            f[0] + 1,
            t[0] + 1,
            f[1] + 1,
            t[1] + 1,
            f[2] + 1,
            t[2] + 1
        );
    }
    s
}

pub fn mtl_string(material: &str, diffuse_png: &str) -> String {
    format!("newmtl {material}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nd 1\nillum 1\nmap_Kd {diffuse_png}\n")
}

/// Plain OBJ text: positions and 1-based faces, no texture coordinates.
pub fn mesh_obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for p in mesh.positions() {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Parsed OBJ contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub mesh: TriMesh,
    pub uv_table: Vec<Uv>,
    /// Per-face corner coordinates; empty when the faces carry no texture indices.
    pub uvs: Vec<[Uv; 3]>,
    pub mtllib: Option<String>,
}

fn parse_floats<const N: usize>(path: &Path, line_no: usize, parts: &[&str]) -> Result<[f64; N]> {
    if parts.len() < N {
        return Err(Error::load(
            path,
            format!("line {line_no}: expected {N} numbers"),
        ));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::load(path, format!("line {line_no}: bad number {p:?}")))?;
    }
    Ok(out)
}

fn parse_index(path: &Path, line_no: usize, token: &str, len: usize) -> Result<u32> {
    let i: usize = token
        .parse()
        .map_err(|_| Error::load(path, format!("line {line_no}: bad index {token:?}")))?;
    if i == 0 || i > len {
        return Err(Error::load(
            path,
            format!("line {line_no}: index {i} out of range 1..={len}"),
        ));
    }
    Ok((i - 1) as u32)
}

/// Reads triangle faces written as `f v v v` or `f v/vt v/vt v/vt`; all faces
/// must use the same form.
pub fn parse_obj(path: &Path, text: &str) -> Result<ObjMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut uv_table: Vec<Uv> = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    let mut mtllib = None;
    let mut with_uvs: Option<bool> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let rest: Vec<&str> = it.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(path, line_no, &rest)?;
                vertices.push(Vec3::new(x, y, z));
            }
            "vt" => uv_table.push(parse_floats::<2>(path, line_no, &rest)?),
            "f" => {
                if rest.len() != 3 {
                    return Err(Error::load(
                        path,
                        format!("line {line_no}: only triangles are supported"),
                    ));
                }
                let mut f = [0u32; 3];
                let mut t = [[0.0; 2]; 3];
                let mut textured = 0;
                for k in 0..3 {
                    let mut parts = rest[k].split('/');
                    f[k] = parse_index(path, line_no, parts.next().unwrap_or(""), vertices.len())?;
                    if let Some(vt) = parts.next().filter(|s| !s.is_empty()) {
                        t[k] = uv_table[parse_index(path, line_no, vt, uv_table.len())? as usize];
                        textured += 1;
                    }
                }
                let face_textured = match textured {
                    0 => false,
                    3 => true,
                    _ => {
                        return Err(Error::load(
                            path,
                            format!("line {line_no}: some corners lack texture indices"),
                        ))
                    }
                };
                if *with_uvs.get_or_insert(face_textured) != face_textured {
                    return Err(Error::load(
                        path,
                        format!("line {line_no}: mixed textured and untextured faces"),
                    ));
                }
                faces.push(f);
                if face_textured {
                    uvs.push(t);
                }
            }
            "mtllib" => mtllib = rest.first().map(|s| s.to_string()),
            _ => {}
        }
    }
    Ok(ObjMesh {
        mesh: TriMesh::new(vertices, faces),
        uv_table,
        uvs,
        mtllib,
    })
}

/// The `map_Kd` entry of an MTL file.
pub fn mtl_diffuse_map(text: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let mut it = l.split_whitespace();
        (it.next() == Some("map_Kd"))
            .then(|| it.next().map(str::to_string))
            .flatten()
    })
}
