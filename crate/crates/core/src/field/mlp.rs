//! Small fully connected networks with rectifier hidden layers.
//!
//! All weights and biases live in one flat parameter vector so optimizers and
//! checkpoints can treat a network as a single array. Layer `l` stores a
//! row-major `out × in` weight block followed by `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("bad layer widths {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; n],
        })
    }

    /// Kaiming-uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        for l in 0..m.layers() {
            let (n_in, n_out) = (m.dims[l], m.dims[l + 1]);
            let bound = (6.0 / n_in as f64).sqrt();
            let (w, _) = m.layer_range(l);
            for p in &mut m.params[w.start..w.start + n_in * n_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        if params.len() != m.params.len() {
            return Err(Error::Shape(format!(
                "network {dims:?} needs {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Length of the activation buffer used by [`Mlp::forward`].
    pub fn act_len(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Weight and bias ranges of layer `l` within `params`.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.dims[k] * self.dims[k + 1] + self.dims[k + 1];
        }
        let w = self.dims[l] * self.dims[l + 1];
        (off..off + w, off + w..off + w + self.dims[l + 1])
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).0]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).1]
    }

    pub fn biases_mut(&mut self, l: usize) -> &mut [f64] {
        let r = self.layer_range(l).1;
        &mut self.params[r]
    }

    /// Runs the network. `acts` receives the input, every post-rectifier hidden
    /// layer and the raw (pre-activation) output, concatenated. Returns the
    /// output slice.
    pub fn forward<'a>(&self, input: &[f64], acts: &'a mut Vec<f64>) -> &'a [f64] {
        debug_assert_eq!(input.len(), self.input_dim());
        acts.clear();
        acts.resize(self.act_len(), 0.0);
        acts[..input.len()].copy_from_slice(input);
        let mut off = 0;
        let mut poff = 0;
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[poff..poff + n_in * n_out];
            let b = &self.params[poff + n_in * n_out..poff + n_in * n_out + n_out];
            let (prev, next) = acts.split_at_mut(off + n_in);
            let x = &prev[off..];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for i in 0..n_in {
                    s += row[i] * x[i];
                }
                next[o] = if l < last { s.max(0.0) } else { s };
            }
            off += n_in;
            poff += n_in * n_out + n_out;
        }
        &acts[off..]
    }

    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward(input, &mut acts).to_vec()
    }

    /// Backpropagates `d_out` (gradient w.r.t. the raw output) through the
    /// activations recorded by [`Mlp::forward`]. Parameter gradients are added
    /// into `grad`; the input gradient is written to `d_in` when given.
    pub fn backward(
        &self,
        acts: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
        d_in: Option<&mut [f64]>,
        scratch: &mut Vec<f64>,
    ) {
        let max_w = *self.dims.iter().max().unwrap();
        scratch.clear();
        scratch.resize(2 * max_w, 0.0);
        let (delta, prev_delta) = scratch.split_at_mut(max_w);
        delta[..d_out.len()].copy_from_slice(d_out);

        let mut act_off = self.act_len() - self.output_dim();
        let mut d_in = d_in;
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            act_off -= n_in;
            let x = &acts[act_off..act_off + n_in];
            let (wr, br) = self.layer_range(l);
            let w = &self.params[wr.clone()];
            {
                let (gw, gb) = grad[wr.start..br.end].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        row[i] += d * x[i];
                    }
                }
            }
            if l == 0 && d_in.is_none() {
                break;
            }
            let pd = &mut prev_delta[..n_in];
            pd.fill(0.0);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    pd[i] += row[i] * d;
                }
            }
            if l == 0 {
                if let Some(out) = d_in.take() {
                    out.copy_from_slice(pd);
                }
                break;
            }
            // rectifier derivative, read from the post-activation values
            for i in 0..n_in {
                delta[i] = if x[i] > 0.0 { pd[i] } else { 0.0 };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(m: &Mlp, x: &[f64], wout: &[f64]) -> f64 {
        m.eval(x).iter().zip(wout).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn shapes_and_init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&[16, 32, 1], &mut rng).unwrap();
        assert_eq!(m.params.len(), 16 * 32 + 32 + 32 + 1);
        let b = (6.0f64 / 16.0).sqrt();
        assert!(m.weights(0).iter().all(|w| w.abs() <= b));
        assert!(m.biases(0).iter().all(|&w| w == 0.0));
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::from_params(&[2, 2], vec![0.0; 5]).is_err());
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        // 2 → 2 → 1 with known weights
        let m = Mlp::from_params(
            &[2, 2, 1],
            vec![1.0, -1.0, 2.0, 1.0, 0.5, -4.0, 3.0, -2.0, 0.25],
        )
        .unwrap();
        // h = relu([x0 - x1 + 0.5, 2x0 + x1 - 4]) ; y = 3h0 - 2h1 + 0.25
        let y = m.eval(&[1.0, 2.0])[0];
        // h = relu([-0.5, 0]) = [0, 0]
        assert_eq!(y, 0.25);
        let y = m.eval(&[3.0, 1.0])[0];
        // h = [2.5, 3]
        assert_eq!(y, 3.0 * 2.5 - 2.0 * 3.0 + 0.25);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Mlp::new(&[5, 7, 6, 3], &mut rng).unwrap();
        for b in m.params.iter_mut() {
            *b += rng.gen_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wout = [0.3, -1.2, 0.7];
        let mut acts = Vec::new();
        m.forward(&x, &mut acts);
        let mut grad = vec![0.0; m.params.len()];
        let mut din = vec![0.0; 5];
        m.backward(&acts, &wout, &mut grad, Some(&mut din), &mut Vec::new());
        let h = 1e-6;
        for i in 0..m.params.len() {
            let v = m.params[i];
            m.params[i] = v + h;
            let p = loss(&m, &x, &wout);
            m.params[i] = v - h;
            let q = loss(&m, &x, &wout);
            m.params[i] = v;
            assert!(((p - q) / (2.0 * h) - grad[i]).abs() < 1e-6, "param {i}");
        }
        for i in 0..5 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&m, &xp, &wout) - loss(&m, &xm, &wout)) / (2.0 * h);
            assert!((fd - din[i]).abs() < 1e-6);
        }
    }
}
