//! Marching-cubes isosurface extraction from a sampled scalar volume.

use std::collections::HashMap;

use super::mc_table::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};
use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::par;

/// `res³` scalar samples at the lattice points of `bbox` (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVolume {
    pub res: usize,
    pub bbox: Aabb,
    pub values: Vec<f64>,
}

impl DensityVolume {
    pub fn new(res: usize, bbox: Aabb, values: Vec<f64>) -> Result<Self> {
        if res < 2 {
            return Err(Error::Validation(format!("volume resolution {res} < 2")));
        }
        if values.len() != res.pow(3) {
            return Err(Error::Shape(format!(
                "volume expects {} samples, got {}",
                res.pow(3),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "volume contains non-finite samples".into(),
            ));
        }
        Ok(Self { res, bbox, values })
    }

    /// Samples `f` at every lattice point.
    pub fn sample(res: usize, bbox: Aabb, f: impl Fn(&Vec3) -> f64 + Sync + Send) -> Result<Self> {
        let pts = |i: usize| {
            Self::lattice_point_of(res, &bbox, i % res, (i / res) % res, i / (res * res))
        };
        let values = par::map_chunks(res.pow(3), 4096, |r| {
            r.map(|i| f(&pts(i))).collect::<Vec<_>>()
        })
        .concat();
        Self::new(res, bbox, values)
    }

    fn lattice_point_of(res: usize, bbox: &Aabb, x: usize, y: usize, z: usize) -> Vec3 {
        let d = bbox.max - bbox.min;
        let s = (res - 1) as f64;
        bbox.min + Vec3::new(d.x * x as f64 / s, d.y * y as f64 / s, d.z * z as f64 / s)
    }

    pub fn lattice_point(&self, x: usize, y: usize, z: usize) -> Vec3 {
        Self::lattice_point_of(self.res, &self.bbox, x, y, z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + y * self.res + z * self.res * self.res]
    }

    /// Lattice spacing along x.
    pub fn cell_size(&self) -> f64 {
        (self.bbox.max.x - self.bbox.min.x) / (self.res - 1) as f64
    }
}

/// Triangles of one z-slab, referencing global edge keys.
type SlabTris = Vec<[(usize, u8); 3]>;

/// Extracts the level set `value = tau`. Corners below `tau` are outside, so
/// faces are oriented toward decreasing values.
pub fn marching_cubes(vol: &DensityVolume, tau: f64) -> Result<TriMesh> {
    if !tau.is_finite() {
        return Err(Error::Validation("iso threshold must be finite".into()));
    }
    let r = vol.res;
    let slabs: Vec<SlabTris> = par::map_range(r - 1, |z| {
        let mut tris = Vec::new();
        for y in 0..r - 1 {
            for x in 0..r - 1 {
                let mut case = 0usize;
                for (k, o) in CORNER_OFFSETS.iter().enumerate() {
                    if vol.at(x + o[0], y + o[1], z + o[2]) < tau {
                        case |= 1 << k;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                for t in row.chunks(3) {
                    if t[0] < 0 {
                        break;
                    }
                    let key = |e: i8| -> (usize, u8) {
                        let [c0, c1] = EDGE_CORNERS[e as usize];
                        let (a, b) = (CORNER_OFFSETS[c0], CORNER_OFFSETS[c1]);
                        let lo = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
                        let axis = (0..3).find(|&i| a[i] != b[i]).unwrap() as u8;
                        ((x + lo[0]) + (y + lo[1]) * r + (z + lo[2]) * r * r, axis)
                    };
                    tris.push([key(t[0]), key(t[1]), key(t[2])]);
                }
            }
        }
        tris
    });

    let mut index: HashMap<(usize, u8), u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for tris in slabs {
        for tri in tris {
            let mut f = [0u32; 3];
            for (k, key) in tri.iter().enumerate() {
                f[k] = *index.entry(*key).or_insert_with(|| {
                    vertices.push(edge_vertex(vol, tau, *key));
                    vertices.len() as u32 - 1
                });
            }
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                faces.push(f);
            }
        }
    }
    Ok(TriMesh::new(vertices, faces))
}

fn edge_vertex(vol: &DensityVolume, tau: f64, (base, axis): (usize, u8)) -> Vec3 {
    let r = vol.res;
    let (x, y, z) = (base % r, (base / r) % r, base / (r * r));
    let mut o = [x, y, z];
    o[axis as usize] += 1;
    let (v0, v1) = (vol.at(x, y, z), vol.at(o[0], o[1], o[2]));
    let p0 = vol.lattice_point(x, y, z);
    let p1 = vol.lattice_point(o[0], o[1], o[2]);
    let t = if (v1 - v0).abs() > 1e-300 {
        ((tau - v0) / (v1 - v0)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    p0 + (p1 - p0) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_volume(res: usize) -> DensityVolume {
        DensityVolume::sample(res, Aabb::cube(1.0), |p| {
            10.0 * (1.0 - p.norm() / 0.7).exp()
        })
        .unwrap()
    }

    #[test]
    fn constant_volume_is_empty() {
        let v = DensityVolume::new(4, Aabb::cube(1.0), vec![1.0; 64]).unwrap();
        assert!(marching_cubes(&v, 10.0).unwrap().is_empty());
        assert!(DensityVolume::new(1, Aabb::cube(1.0), vec![1.0]).is_err());
    }

    #[test]
    fn sphere_is_closed_outward_and_accurate() {
        let m = marching_cubes(&sphere_volume(32), 10.0).unwrap();
        let a = m.audit();
        assert!(a.is_ok(), "{a:?}");
        assert_eq!(a.boundary_edges, 0);
        assert!(m.signed_volume() > 0.0);
        let h = 2.0 / 31.0;
        for v in &m.vertices {
            assert!((v.norm() - 0.7).abs() < 0.5 * h);
        }
        // normals point away from the center (decreasing density)
        let outward = (0..m.faces.len())
            .filter(|&f| m.face_normal(f).dot(&m.face_centroid(f)) > 0.0)
            .count();
        assert_eq!(outward, m.faces.len());
    }

    #[test]
    fn shared_edges_share_vertices() {
        let m = marching_cubes(&sphere_volume(16), 10.0).unwrap();
        // Euler characteristic of a sphere
        let a = m.audit();
        assert_eq!(a.vertices as i64 - a.edges as i64 + a.faces as i64, 2);
    }
}
