//! Stage-2 refinement: joint offset/appearance optimization with
//! error-driven subdivision and remeshing rounds.

pub mod errors;
pub mod topology;
pub mod trainer;

pub use errors::{
    compute_thresholds, percentile_nearest_rank, FaceErrorAccumulator, Thresholds,
    DECIMATE_PERCENTILE, SUBDIVIDE_PERCENTILE,
};
pub use topology::{refine_topology, RefineReport};
pub use trainer::{mesh_psnr, render_mesh, train_stage2, Stage2Config, Stage2Report};
