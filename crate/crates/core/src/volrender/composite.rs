//! Emission-absorption quadrature along a ray and its analytic backward pass.

use crate::math::Rgb;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayRender {
    pub color: Rgb,
    /// Per-sample quadrature weights `T_i α_i`.
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Transmittance before each sample.
    pub trans: Vec<f64>,
    /// Transmittance after the last sample.
    pub trans_end: f64,
    pub opacity: f64,
}

pub fn alpha(sigma: f64, delta: f64) -> f64 {
    1.0 - (-sigma * delta).exp()
}

/// Composites samples front to back over `background`.
pub fn render_ray(sigmas: &[f64], deltas: &[f64], colors: &[Rgb], background: &Rgb) -> RayRender {
    let n = sigmas.len();
    let mut r = RayRender {
        weights: Vec::with_capacity(n),
        alphas: Vec::with_capacity(n),
        trans: Vec::with_capacity(n),
        ..Default::default()
    };
    let mut t = 1.0;
    let mut acc = 0.0;
    let mut c = [0.0; 3];
    for i in 0..n {
        let a = alpha(sigmas[i], deltas[i]);
        let w = t * a;
        for k in 0..3 {
            c[k] += w * colors[i][k];
        }
        acc += w;
        r.trans.push(t);
        r.alphas.push(a);
        r.weights.push(w);
        t *= 1.0 - a;
    }
    for k in 0..3 {
        c[k] += (1.0 - acc) * background[k];
    }
    r.color = c;
    r.trans_end = t;
    r.opacity = acc;
    r
}

/// Given `d loss / d color`, writes `d loss / d σ_i` and `d loss / d c_i`.
pub fn render_ray_backward(
    deltas: &[f64],
    colors: &[Rgb],
    r: &RayRender,
    background: &Rgb,
    d_color: &Rgb,
    d_sigma: &mut [f64],
    d_colors: &mut [Rgb],
) {
    // suffix holds Σ_{i>k} w_i c_i + T_end · background
    let mut suffix: Rgb = std::array::from_fn(|k| r.trans_end * background[k]);
    for i in (0..deltas.len()).rev() {
        let t_next = r.trans[i] * (1.0 - r.alphas[i]);
        let mut g = 0.0;
        for k in 0..3 {
            g += (t_next * colors[i][k] - suffix[k]) * d_color[k];
            d_colors[i][k] = r.weights[i] * d_color[k];
            suffix[k] += r.weights[i] * colors[i][k];
        }
        d_sigma[i] = deltas[i] * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opaque_first_sample() {
        let r = render_ray(
            &[1e6, 1.0],
            &[1.0, 1.0],
            &[[0.2, 0.4, 0.6], [1.0, 1.0, 1.0]],
            &[0.0; 3],
        );
        assert_eq!(r.color, [0.2, 0.4, 0.6]);
    }

    #[test]
    fn empty_space_shows_background() {
        let r = render_ray(&[0.0; 3], &[1.0; 3], &[[0.3; 3]; 3], &[0.1, 0.2, 0.3]);
        assert_eq!(r.color, [0.1, 0.2, 0.3]);
        assert_eq!(r.opacity, 0.0);
    }

    #[test]
    fn two_sample_hand_example() {
        let r = render_ray(
            &[2f64.ln(), 1e6],
            &[1.0, 1.0],
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[1.0; 3],
        );
        for (a, b) in r.color.iter().zip([0.5, 0.5, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trailing_zero_density_is_inert() {
        let s = [0.3, 2.0];
        let c = [[0.1, 0.5, 0.9], [0.7, 0.2, 0.4]];
        let a = render_ray(&s, &[0.5, 0.5], &c, &[1.0; 3]);
        let b = render_ray(
            &[0.3, 2.0, 0.0],
            &[0.5, 0.5, 0.5],
            &[c[0], c[1], [0.9; 3]],
            &[1.0; 3],
        );
        assert_eq!(a.color, b.color);
    }
}
