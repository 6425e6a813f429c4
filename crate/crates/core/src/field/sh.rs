//! Real spherical harmonics up to degree 3 (16 coefficients) for encoding
//! view directions.

use crate::math::Vec3;

pub const SH_DIM: usize = 16;

const K0: f64 = 0.282_094_791_773_878_14;
const K1: f64 = 0.488_602_511_902_919_9;
const K2A: f64 = 1.092_548_430_592_079_2;
const K2B: f64 = 0.946_174_695_757_56;
const K2C: f64 = 0.315_391_565_252_52;
const K2D: f64 = 0.546_274_215_296_039_6;
const K3A: f64 = 0.590_043_589_926_643_5;
const K3B: f64 = 2.890_611_442_640_554;
const K3C: f64 = 0.457_045_799_464_465_7;
const K3D: f64 = 0.373_176_332_590_115_4;
const K3E: f64 = 1.445_305_721_320_277;

pub fn sh_encode(d: &Vec3) -> [f64; SH_DIM] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        K0,
        -K1 * y,
        K1 * z,
        -K1 * x,
        K2A * x * y,
        -K2A * y * z,
        K2B * z * z - K2C,
        -K2A * x * z,
        K2D * (x * x - y * y),
        K3A * y * (y * y - 3.0 * x * x),
        K3B * x * y * z,
        K3C * y * (1.0 - 5.0 * z * z),
        K3D * z * (5.0 * z * z - 3.0),
        K3C * x * (1.0 - 5.0 * z * z),
        K3E * z * (x * x - y * y),
        K3A * x * (3.0 * y * y - x * x),
    ]
}

/// Gradient of each basis function with respect to the (unnormalized) input.
pub fn sh_jacobian(d: &Vec3) -> [[f64; 3]; SH_DIM] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        [0.0, 0.0, 0.0],
        [0.0, -K1, 0.0],
        [0.0, 0.0, K1],
        [-K1, 0.0, 0.0],
        [K2A * y, K2A * x, 0.0],
        [0.0, -K2A * z, -K2A * y],
        [0.0, 0.0, 2.0 * K2B * z],
        [-K2A * z, 0.0, -K2A * x],
        [2.0 * K2D * x, -2.0 * K2D * y, 0.0],
        [-6.0 * K3A * x * y, K3A * (3.0 * y * y - 3.0 * x * x), 0.0],
        [K3B * y * z, K3B * x * z, K3B * x * y],
        [0.0, K3C * (1.0 - 5.0 * z * z), -10.0 * K3C * y * z],
        [0.0, 0.0, K3D * (15.0 * z * z - 3.0)],
        [K3C * (1.0 - 5.0 * z * z), 0.0, -10.0 * K3C * x * z],
        [2.0 * K3E * x * z, -2.0 * K3E * y * z, K3E * (x * x - y * y)],
        [K3A * (3.0 * y * y - 3.0 * x * x), 6.0 * K3A * x * y, 0.0],
    ]
}
