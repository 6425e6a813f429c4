//! Cameras, posed-image datasets and synthetic ground-truthed scenes.

pub mod camera;
pub mod dataset;
pub mod synthetic;

pub use camera::CameraModel;
pub use dataset::{load_dataset, write_dataset, Dataset, PosedImage, Split};
pub use synthetic::{
    generate_synthetic_dataset, Albedo, Shape, SurfaceOracle, SyntheticConfig, SyntheticScene,
};
