//! Stage 1: volume rendering of the radiance fields and their optimization.

pub mod composite;
pub mod losses;
pub mod model;
pub mod occupancy;
pub mod sampling;
pub mod trainer;

pub use composite::{render_ray, render_ray_backward, RayRender};
pub use losses::{loss_entropy, loss_render, loss_specular, loss_tv};
pub use model::RadianceModel;
pub use occupancy::OccupancyGrid;
pub use sampling::{sample_along_ray, RaySampleSet};
pub use trainer::{evaluate_psnr, train_stage1, Stage1Config, Stage1Report};
