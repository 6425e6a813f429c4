//! Software rasterizer with a coverage-fixed backward pass.
//!
//! Coverage is decided at pixel centers with a top-left rule and a total depth
//! order, so tiled and scanline execution give identical buffers. Geometry
//! gradients move each covered pixel's surface point along its camera ray;
//! silhouettes receive none.

pub mod raster;
pub mod shade;

pub use raster::{rasterize, rasterize_with, Fragment, FragmentBuffer, RasterMode, NEAR_PLANE};
pub use shade::{backward, shade, shade_cached, RasterGrads, ShadeCache, MIN_VIEW_COSINE};
