//! Multi-resolution feature grids, evaluator networks and their optimizer.

pub mod adam;
pub mod checkpoint;
pub mod fields;
pub mod grid;
pub mod mlp;
pub mod sh;

pub use adam::Adam;
pub use checkpoint::TensorFile;
pub use fields::{
    color_sum, compose_color, density_from_raw, AppEval, AppearanceField, FieldConfig, FieldGrads,
    GeoEval, GeometryField, SpecEval, RAW_DENSITY_LIMIT,
};
pub use grid::{FeatureGrid, GridConfig};
pub use mlp::Mlp;
pub use sh::{sh_encode, SH_DIM};
