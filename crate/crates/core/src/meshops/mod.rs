//! Discrete mesh operations: extraction, culling, repair, simplification,
//! subdivision, remeshing and geometric regularizers.

pub mod bvh;
pub mod clean;
pub mod cull;
pub mod edit;
pub mod mc;
mod mc_table;
pub mod mesh;
pub mod qem;
pub mod regularize;
pub mod remesh;
pub mod subdivide;

pub use bvh::{Bvh, Hit};
pub use clean::{clean_mesh, clean_mesh_relative, CleanParams};
pub use cull::{visibility_cull, CullResult};
pub use mc::{marching_cubes, DensityVolume};
pub use mesh::{icosphere, AuditReport, TriMesh};
pub use qem::{decimate, DecimateResult};
pub use regularize::{laplacian_loss, offset_loss};
pub use remesh::{remesh_region, RemeshResult};
pub use subdivide::{midpoint_subdivide, SubdivideResult};
