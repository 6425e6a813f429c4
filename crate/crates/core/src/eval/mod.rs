//! Quantitative evaluation: Chamfer distance, PSNR and asset statistics.

pub mod kdtree;
pub mod metrics;
pub mod report;

pub use kdtree::KdTree;
pub use metrics::{chamfer, chamfer_points, psnr, ray_surface_points};
pub use report::{mesh_stats, MeshStats, MetricsReport, CHAMFER_CONVENTION};
