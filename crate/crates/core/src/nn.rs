//! Shared numerics for the denoiser and the guidance classifiers: logistic
//! outputs, clamped binary cross-entropy, parameter initialization and a
//! small fully connected network with manual backpropagation.

use rand::Rng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy of a (clamped) probability against a bit.
#[inline]
pub fn bce(p: f64, target: bool) -> f64 {
    let p = clamp_prob(p);
    if target {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Clamped probability, loss and `d loss / d logit` for a logistic output.
/// The derivative is zero where the clamp is active.
#[inline]
pub fn logistic_bce(logit: f64, target: bool) -> (f64, f64, f64) {
    let p = sigmoid(logit);
    let pc = clamp_prob(p);
    let loss = bce(pc, target);
    let d = if pc != p { 0.0 } else { p - target as u8 as f64 };
    (pc, loss, d)
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for a weight block and its bias.
pub fn init_uniform<R: Rng + ?Sized>(out: &mut [f64], fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in out.iter_mut() {
        *w = rng.gen_range(-bound..=bound);
    }
}

/// Multilayer perceptron with ReLU hidden layers and one logit output.
///
/// Each layer's weights are stored row-major (`out x in`) followed by its
/// bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

pub struct MlpCache {
    /// Input of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// `hidden` may be empty, giving a linear logistic readout.
    pub fn new(input: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Mlp { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let len = w[1] * w[0] + w[1];
            init_uniform(&mut params[off..off + len], w[0], rng);
            off += len;
        }
        params
    }

    pub fn logit(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward(params, x).0
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> (f64, MlpCache) {
        debug_assert_eq!(x.len(), self.sizes[0]);
        debug_assert_eq!(params.len(), self.param_count());
        let layers = self.sizes.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
        };
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &params[off..off + fan_out * fan_in];
            let bias = &params[off + fan_out * fan_in..off + fan_out * fan_in + fan_out];
            off += fan_out * fan_in + fan_out;
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    row.iter().zip(&cur).map(|(a, b)| a * b).sum::<f64>() + bias[o]
                })
                .collect();
            cache.inputs.push(std::mem::take(&mut cur));
            if l + 1 < layers {
                cur = z.iter().map(|v| v.max(0.0)).collect();
                cache.pre.push(z);
            } else {
                return (z[0], cache);
            }
        }
        unreachable!("network has at least one layer")
    }

    /// Accumulates `d_logit * d logit / d params` into `grad`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_logit: f64, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[1] * w[0] + w[1];
        }
        let mut d_out = vec![d_logit];
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.inputs[l];
            for o in 0..fan_out {
                let d = d_out[o];
                if d == 0.0 {
                    continue;
                }
                for i in 0..fan_in {
                    grad[off + o * fan_in + i] += d * input[i];
                }
                grad[off + fan_out * fan_in + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &params[off..off + fan_out * fan_in];
            let pre = &cache.pre[l - 1];
            d_out = (0..fan_in)
                .map(|i| {
                    if pre[i] <= 0.0 {
                        return 0.0;
                    }
                    (0..fan_out).map(|o| d_out[o] * weights[o * fan_in + i]).sum()
                })
                .collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bce_is_clamped() {
        assert!(bce(0.0, true).is_finite());
        assert!((bce(0.5, false) - std::f64::consts::LN_2).abs() < 1e-15);
        let (_, _, d) = logistic_bce(100.0, true);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(11, 0);
        let mlp = Mlp::new(5, &[7, 4]);
        let params = mlp.init(&mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, cache) = mlp.forward(&params, &x);
        let mut grad = vec![0.0; params.len()];
        mlp.backward(&params, &cache, 1.0, &mut grad);
        let h = 1e-5;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let up = mlp.logit(&p, &x);
            p[k] -= 2.0 * h;
            let down = mlp.logit(&p, &x);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn linear_readout() {
        let mlp = Mlp::new(2, &[]);
        assert_eq!(mlp.param_count(), 3);
        assert_eq!(mlp.logit(&[2.0, -1.0, 0.5], &[1.0, 3.0]), 2.0 - 3.0 + 0.5);
    }
}
