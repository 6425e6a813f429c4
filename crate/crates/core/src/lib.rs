//! Textured surface-mesh reconstruction from posed RGB images.
//!
//! The pipeline fits a grid-based radiance field whose appearance is split into
//! a view-independent diffuse color and a view-dependent specular term, extracts
//! a coarse mesh, refines vertex positions and face density from re-projected
//! rendering errors, and bakes the appearance into textures exported as
//! OBJ/MTL/PNG plus a small specular network.

pub mod bake;
pub mod error;
pub mod eval;
pub mod field;
pub mod math;
pub mod meshops;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rasterdiff;
pub mod refine;
pub mod refrender;
pub mod scene;
pub mod surface;
pub mod volrender;

pub use error::{Error, Result};
