use crate::math::Ray;

/// Anything that can answer first-hit ray queries: triangle meshes, analytic
/// surfaces. Returns the hit distance along the (unit) ray direction.
pub trait RaySurface: Sync {
    fn first_hit(&self, ray: &Ray) -> Option<f64>;
}
