//! Flip-probability schedules for the symmetric binary noising chain.
//!
//! Every binary variable (condition bit or edge bit) is noised independently
//! by the kernel `[[1-f, f], [f, 1-f]]`. Step `t` uses `f_t = beta_t / 2`,
//! i.e. the Bernoulli parameter `(1 - beta_t) x + beta_t / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub shape: ScheduleShape,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 50,
            beta_min: 0.02,
            beta_max: 0.6,
            shape: ScheduleShape::Linear,
        }
    }
}

/// Symmetric binary channel with flip probability `flip`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    pub flip: f64,
}

impl TransitionKernel {
    pub fn new(flip: f64) -> Self {
        debug_assert!((0.0..=0.5).contains(&flip));
        TransitionKernel { flip }
    }

    pub fn identity() -> Self {
        TransitionKernel { flip: 0.0 }
    }

    /// Row-stochastic matrix `m[from][to]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[1.0 - self.flip, self.flip], [self.flip, 1.0 - self.flip]]
    }

    /// `q(to | from)`.
    #[inline]
    pub fn prob(&self, from: bool, to: bool) -> f64 {
        if from == to {
            1.0 - self.flip
        } else {
            self.flip
        }
    }

    /// Probability that the output is 1 given the input bit.
    #[inline]
    pub fn prob_one(&self, from: bool) -> f64 {
        self.prob(from, true)
    }

    /// Kernel of applying `self` and then `next`.
    pub fn then(&self, next: &TransitionKernel) -> TransitionKernel {
        let (a, b) = (self.flip, next.flip);
        TransitionKernel {
            flip: a * (1.0 - b) + (1.0 - a) * b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    cum_flip: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit per-step `beta_t` values (`t = 1..=T`).
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter("schedule needs at least one step".into()));
        }
        if let Some((t, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::InvalidParameter(format!(
                "beta_{} = {b} outside (0, 1)",
                t + 1
            )));
        }
        // Composition of symmetric kernels; equals (1 - prod(1 - beta_s)) / 2.
        let mut acc = TransitionKernel::identity();
        let cum_flip = beta
            .iter()
            .map(|b| {
                acc = acc.then(&TransitionKernel::new(b / 2.0));
                acc.flip
            })
            .collect();
        Ok(NoiseSchedule { beta, cum_flip })
    }

    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        let t = cfg.steps;
        if t == 0 {
            return Err(Error::InvalidParameter("schedule steps must be >= 1".into()));
        }
        if cfg.beta_min > cfg.beta_max {
            return Err(Error::InvalidParameter("beta_min > beta_max".into()));
        }
        let betas = (0..t)
            .map(|s| {
                let frac = if t == 1 { 0.0 } else { s as f64 / (t - 1) as f64 };
                let w = match cfg.shape {
                    ScheduleShape::Linear => frac,
                    ScheduleShape::Cosine => (1.0 - (std::f64::consts::PI * frac).cos()) / 2.0,
                };
                cfg.beta_min + (cfg.beta_max - cfg.beta_min) * w
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.beta[t - 1])
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.beta.len() {
            Err(Error::StepOutOfRange {
                t,
                max: self.beta.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Kernel for `q(x_t | x_{t-1})`.
    pub fn step_kernel(&self, t: usize) -> Result<TransitionKernel> {
        self.check(t)?;
        Ok(TransitionKernel::new(self.beta[t - 1] / 2.0))
    }

    /// Kernel for `q(x_t | x_0)`.
    pub fn cumulative_kernel(&self, t: usize) -> Result<TransitionKernel> {
        self.check(t)?;
        Ok(TransitionKernel::new(self.cum_flip[t - 1]))
    }

    /// Like [`cumulative_kernel`](Self::cumulative_kernel) but accepts
    /// `t = 0` as the identity.
    pub fn cumulative_or_identity(&self, t: usize) -> Result<TransitionKernel> {
        if t == 0 {
            Ok(TransitionKernel::identity())
        } else {
            self.cumulative_kernel(t)
        }
    }

    /// `P(x_{t-1} = 1 | x_t, x_0)` for `2 <= t <= T`.
    pub fn posterior_flip(&self, t: usize, x_t: bool, x_0: bool) -> Result<f64> {
        self.check(t)?;
        if t < 2 {
            return Err(Error::StepOutOfRange { t, max: self.steps() });
        }
        let step = self.step_kernel(t)?;
        let prev = self.cumulative_kernel(t - 1)?;
        Ok(posterior_one(&step, &prev, x_t, x_0))
    }
}

/// `P(x_{t-1}=1 | x_t, x_0)` from the step kernel at `t` and the cumulative
/// kernel at `t-1`.
#[inline]
pub fn posterior_one(step: &TransitionKernel, prev: &TransitionKernel, x_t: bool, x_0: bool) -> f64 {
    let one = step.prob(true, x_t) * prev.prob(x_0, true);
    let zero = step.prob(false, x_t) * prev.prob(x_0, false);
    one / (one + zero)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    #[test]
    fn step_kernel_halves_beta() {
        let s = NoiseSchedule::from_betas(vec![0.2, 0.2]).unwrap();
        assert!((s.step_kernel(1).unwrap().flip - 0.1).abs() < 1e-15);
        let tiny = NoiseSchedule::from_betas(vec![1e-12]).unwrap();
        assert!(tiny.step_kernel(1).unwrap().flip < 1e-11);
        assert!(NoiseSchedule::from_betas(vec![1.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.0]).is_err());
        assert!(NoiseSchedule::from_betas(vec![]).is_err());
        assert!(matches!(s.step_kernel(0), Err(Error::StepOutOfRange { .. })));
        assert!(matches!(s.step_kernel(3), Err(Error::StepOutOfRange { .. })));
    }

    #[test]
    fn two_step_cumulative() {
        let s = NoiseSchedule::from_betas(vec![0.2, 0.2]).unwrap();
        assert!((s.cumulative_kernel(2).unwrap().flip - 0.18).abs() < 1e-15);
        assert_eq!(s.cumulative_kernel(1).unwrap(), s.step_kernel(1).unwrap());
        let long = NoiseSchedule::from_betas(vec![0.2; 400]).unwrap();
        assert!((long.cumulative_kernel(400).unwrap().flip - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_matrix_products() {
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let mut prod = [[1.0, 0.0], [0.0, 1.0]];
        let mut last = 0.0;
        for t in 1..=s.steps() {
            prod = matmul(prod, s.step_kernel(t).unwrap().matrix());
            let cum = s.cumulative_kernel(t).unwrap();
            assert!((cum.flip - prod[0][1]).abs() < 1e-12);
            assert!((cum.flip - prod[1][0]).abs() < 1e-12);
            assert!(cum.flip > last && cum.flip <= 0.5);
            let closed = (1.0 - s.betas()[..t].iter().map(|b| 1.0 - b).product::<f64>()) / 2.0;
            assert!((cum.flip - closed).abs() < 1e-12);
            last = cum.flip;
        }
    }

    #[test]
    fn posterior_example_and_symmetry() {
        // Cumulative flip at t-1 = 2 is 0.18.
        let s = NoiseSchedule::from_betas(vec![0.2, 0.2, 0.2]).unwrap();
        let p = s.posterior_flip(3, true, true).unwrap();
        let expected = (0.9 * 0.82) / (0.9 * 0.82 + 0.1 * 0.18);
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 0.97619).abs() < 1e-5);
        for xt in [false, true] {
            for x0 in [false, true] {
                let a = s.posterior_flip(3, xt, x0).unwrap();
                let b = s.posterior_flip(3, !xt, !x0).unwrap();
                assert!((a - (1.0 - b)).abs() < 1e-15);
            }
        }
        assert!(s.posterior_flip(1, true, true).is_err());
        let quiet = NoiseSchedule::from_betas(vec![1e-12, 1e-12]).unwrap();
        assert!((quiet.posterior_flip(2, true, true).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn marginal_consistency() {
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        for t in 2..=s.steps() {
            let step = s.step_kernel(t).unwrap();
            let prev = s.cumulative_kernel(t - 1).unwrap();
            let cum = s.cumulative_kernel(t).unwrap();
            for x0 in [false, true] {
                for xt in [false, true] {
                    let m: f64 = [false, true]
                        .iter()
                        .map(|&v| step.prob(v, xt) * prev.prob(x0, v))
                        .sum();
                    assert!((m - cum.prob(x0, xt)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cosine_shape_is_valid() {
        let cfg = ScheduleConfig {
            shape: ScheduleShape::Cosine,
            ..Default::default()
        };
        let s = NoiseSchedule::from_config(&cfg).unwrap();
        assert_eq!(s.steps(), 50);
        assert!((s.beta(1).unwrap() - 0.02).abs() < 1e-15);
        assert!((s.beta(50).unwrap() - 0.6).abs() < 1e-12);
        let one = NoiseSchedule::from_config(&ScheduleConfig { steps: 1, ..Default::default() }).unwrap();
        assert_eq!(one.steps(), 1);
    }
}
