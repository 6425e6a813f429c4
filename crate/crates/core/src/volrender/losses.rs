//! Stage-1 loss terms. Each returns its value and the gradient with respect
//! to its inputs; all reductions are means.

use crate::field::FeatureGrid;
use crate::math::Rgb;

/// Mean over rays of `‖C − Ĉ‖²`; gradient w.r.t. `Ĉ`.
pub fn loss_render(pred: &[Rgb], target: &[Rgb]) -> (f64, Vec<Rgb>) {
    assert_eq!(pred.len(), target.len(), "batch shapes differ");
    if pred.is_empty() {
        return (0.0, Vec::new());
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            std::array::from_fn(|k| {
                let d = p[k] - t[k];
                sum += d * d;
                2.0 * d / n
            })
        })
        .collect();
    (sum / n, grad)
}

/// Mean over points of `‖c_s‖²`.
pub fn loss_specular(cs: &[Rgb]) -> (f64, Vec<Rgb>) {
    if cs.is_empty() {
        return (0.0, Vec::new());
    }
    let n = cs.len() as f64;
    let value = cs
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n;
    let grad = cs
        .iter()
        .map(|c| std::array::from_fn(|k| 2.0 * c[k] / n))
        .collect();
    (value, grad)
}

/// `−(α ln α + (1−α) ln(1−α))` with `0 ln 0 = 0`.
pub fn binary_entropy(a: f64) -> f64 {
    let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    -(xlx(a) + xlx(1.0 - a))
}

/// Derivative of [`binary_entropy`], clamped away from the poles at 0 and 1.
pub fn binary_entropy_grad(a: f64) -> f64 {
    let a = a.clamp(1e-6, 1.0 - 1e-6);
    ((1.0 - a) / a).ln()
}

/// Mean binary entropy of the opacities.
pub fn loss_entropy(alphas: &[f64]) -> (f64, Vec<f64>) {
    if alphas.is_empty() {
        return (0.0, Vec::new());
    }
    let n = alphas.len() as f64;
    let value = alphas.iter().map(|&a| binary_entropy(a)).sum::<f64>() / n;
    let grad = alphas.iter().map(|&a| binary_entropy_grad(a) / n).collect();
    (value, grad)
}

/// Mean squared difference between axis-adjacent grid values.
pub fn loss_tv(grid: &FeatureGrid) -> f64 {
    grid.total_variation(1.0, None)
}
