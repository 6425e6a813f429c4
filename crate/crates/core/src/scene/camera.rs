use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Mat4, Ray, Vec3};

/// Pinhole camera. `camera_to_world` is a rigid transform in the OpenGL/Blender
/// convention: right-handed, the camera looks along its local −z with +y up.
///
/// Pixel `(px, py)` covers `[px, px+1) × [py, py+1)` in image coordinates, so
/// its center sits at `(px + 0.5, py + 0.5)`. Image rows grow downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub camera_to_world: Mat4,
}

impl CameraModel {
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        camera_to_world: Mat4,
    ) -> Result<Self> {
        let cam = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            camera_to_world,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Intrinsics from a horizontal field of view, principal point at the image center.
    pub fn from_fov(width: u32, height: u32, fov_x: f64, camera_to_world: Mat4) -> Result<Self> {
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(
            width,
            height,
            f,
            f,
            0.5 * width as f64,
            0.5 * height as f64,
            camera_to_world,
        )
    }

    /// A camera at `eye` looking at `target`.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        width: u32,
        height: u32,
        fov_x: f64,
    ) -> Result<Self> {
        let back = (eye - target).normalize();
        let mut right = up.cross(&back);
        if right.norm() < 1e-9 {
            right = Vec3::x().cross(&back);
            if right.norm() < 1e-9 {
                right = Vec3::y().cross(&back);
            }
        }
        let right = right.normalize();
        let true_up = back.cross(&right);
        let mut m = Mat4::identity();
        for i in 0..3 {
            m[(i, 0)] = right[i];
            m[(i, 1)] = true_up[i];
            m[(i, 2)] = back[i];
            m[(i, 3)] = eye[i];
        }
        Self::from_fov(width, height, fov_x, m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("camera has zero-sized image".into()));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - Mat3::identity()).abs().max();
        if err >= 1e-6 {
            return Err(Error::Validation(format!(
                "camera rotation is not orthonormal (|RᵀR − I|∞ = {err:e})"
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        self.camera_to_world.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(
            self.camera_to_world[(0, 3)],
            self.camera_to_world[(1, 3)],
            self.camera_to_world[(2, 3)],
        )
    }

    /// Ray through pixel `(px, py)`; `jitter` offsets the sample from the pixel
    /// center, in pixels (nominally within ±0.5).
    pub fn ray(&self, px: u32, py: u32, jitter: (f64, f64)) -> Ray {
        self.ray_at(px as f64 + 0.5 + jitter.0, py as f64 + 0.5 + jitter.1)
    }

    /// Ray through a continuous image position.
    pub fn ray_at(&self, u: f64, v: f64) -> Ray {
        let d_cam = Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, -1.0);
        let d = self.rotation() * d_cam;
        Ray::new(self.origin(), d)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.origin())
    }

    /// Projects into continuous image coordinates; returns `(u, v, depth)`
    /// where depth is the distance along the viewing axis. `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let pc = self.world_to_camera(p);
        let depth = -pc.z;
        if depth <= 0.0 {
            return None;
        }
        Some((
            self.cx + self.fx * pc.x / depth,
            self.cy - self.fy * pc.y / depth,
            depth,
        ))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Same pose with the image resampled to `width × height`.
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            camera_to_world: self.camera_to_world,
        }
    }
}
