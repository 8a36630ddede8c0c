//! Losses `ℓ(z; θ)` with exact gradients in both arguments, plus analytic and
//! empirical estimates of the smoothness, strong convexity and Lipschitz
//! constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distmaps::DistMapSpec;
use crate::error::{Error, Result};
use crate::model::{dist, dot, norm, ParamBox, SeedSpec, Theta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `‖θ − z‖² + (λ/2)‖θ‖²`, data dimension equal to the parameter dimension.
    SquaredRidge,
    /// `log(1 + exp(−y θᵀx)) + (λ/2)‖θ‖²` on `z = (x, y)`, `y ∈ {−1, +1}`.
    LogisticRidge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lambda: f64,
}

/// Constants of the loss over a bounded region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    /// Lipschitz constant of `z ↦ ∇_θ ℓ(z; θ)`.
    pub beta: f64,
    /// Strong convexity modulus in `θ`.
    pub gamma_sc: f64,
    /// `sup ‖∇_z ℓ‖`: value-Lipschitz constant in `z`, used with `W₁`.
    pub lip_value: f64,
    /// Lipschitz constant of `z ↦ ∇_z ℓ(z; θ)`.
    pub lip_grad: f64,
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LossSpec {
    pub fn squared_ridge(lambda: f64) -> Self {
        LossSpec {
            kind: LossKind::SquaredRidge,
            lambda,
        }
    }

    pub fn logistic_ridge(lambda: f64) -> Self {
        LossSpec {
            kind: LossKind::LogisticRidge,
            lambda,
        }
    }

    pub fn validate(&self, dim: usize, map: &DistMapSpec) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(
                "loss.lambda",
                format!("must be finite and nonnegative, got {}", self.lambda),
            ));
        }
        let m = map.data_dim();
        match self.kind {
            LossKind::SquaredRidge if m != dim => Err(Error::invalid(
                "loss.kind",
                format!("squared_ridge needs data dimension {dim}, map provides {m}"),
            )),
            LossKind::LogisticRidge if !matches!(map, DistMapSpec::StrategicResponse(_)) => {
                Err(Error::invalid(
                    "loss.kind",
                    "logistic_ridge needs labeled data from a strategic_response map",
                ))
            }
            _ => Ok(()),
        }
    }

    fn ridge(&self, theta: &[f64]) -> f64 {
        0.5 * self.lambda * dot(theta, theta)
    }

    pub fn value(&self, z: &[f64], theta: &[f64]) -> f64 {
        match self.kind {
            LossKind::SquaredRidge => {
                theta
                    .iter()
                    .zip(z)
                    .map(|(t, x)| (t - x) * (t - x))
                    .sum::<f64>()
                    + self.ridge(theta)
            }
            LossKind::LogisticRidge => {
                let (x, y) = z.split_at(theta.len());
                softplus(-y[0] * dot(theta, x)) + self.ridge(theta)
            }
        }
    }

    /// `∇_θ ℓ(z; θ)` written into `out`.
    pub fn grad_theta_into(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        match self.kind {
            LossKind::SquaredRidge => {
                for ((o, t), x) in out.iter_mut().zip(theta).zip(z) {
                    *o = 2.0 * (t - x) + self.lambda * t;
                }
            }
            LossKind::LogisticRidge => {
                let (x, y) = z.split_at(theta.len());
                let y = y[0];
                let s = sigmoid(-y * dot(theta, x));
                for ((o, t), xi) in out.iter_mut().zip(theta).zip(x) {
                    *o = -y * s * xi + self.lambda * t;
                }
            }
        }
    }

    pub fn grad_theta(&self, z: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        self.grad_theta_into(z, theta, &mut g);
        g
    }

    /// `∇_z ℓ(z; θ)`. For the logistic loss the label coordinate is treated as
    /// a real variable.
    pub fn grad_z(&self, z: &[f64], theta: &[f64]) -> Vec<f64> {
        match self.kind {
            LossKind::SquaredRidge => theta.iter().zip(z).map(|(t, x)| -2.0 * (t - x)).collect(),
            LossKind::LogisticRidge => {
                let (x, y) = z.split_at(theta.len());
                let y = y[0];
                let margin = dot(theta, x);
                let s = sigmoid(-y * margin);
                let mut g: Vec<f64> = theta.iter().map(|t| -y * s * t).collect();
                g.push(-s * margin);
                g
            }
        }
    }

    /// Closed-form constants over `theta_region × data_region`.
    pub fn analytic_constants(
        &self,
        theta_region: &ParamBox,
        data_region: &ParamBox,
    ) -> Result<LossConstants> {
        match self.kind {
            LossKind::SquaredRidge => {
                let per_coord: Vec<f64> = (0..theta_region.dim())
                    .map(|i| {
                        (theta_region.upper[i] - data_region.lower[i])
                            .max(data_region.upper[i] - theta_region.lower[i])
                            .max(0.0)
                    })
                    .collect();
                Ok(LossConstants {
                    beta: 2.0,
                    gamma_sc: 2.0 + self.lambda,
                    lip_value: 2.0 * norm(&per_coord),
                    lip_grad: 2.0,
                })
            }
            LossKind::LogisticRidge => Err(Error::Unsupported(
                "no closed-form constants for logistic_ridge; use estimate_constants".into(),
            )),
        }
    }

    /// Random-probe estimates over `theta_region × data_region`: maxima of the
    /// Lipschitz ratios and the minimum strong-convexity ratio. Data corners
    /// are always probed.
    pub fn estimate_constants(
        &self,
        theta_region: &ParamBox,
        data_region: &ParamBox,
        n_probes: usize,
        seed: &SeedSpec,
    ) -> LossConstants {
        let mut rng = seed.rng();
        let labeled = self.kind == LossKind::LogisticRidge;
        let draw_z = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let mut z: Vec<f64> = data_region
                .lower
                .iter()
                .zip(&data_region.upper)
                .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l })
                .collect();
            if labeled {
                let last = z.len() - 1;
                z[last] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            z
        };
        let draw_theta = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            theta_region
                .lower
                .iter()
                .zip(&theta_region.upper)
                .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l })
                .collect()
        };

        let mut beta: f64 = 0.0;
        let mut lip_grad: f64 = 0.0;
        let mut lip_value: f64 = 0.0;
        let mut gamma_sc = f64::INFINITY;

        let mut corners: Vec<Vec<f64>> = data_region.corners().into_iter().map(|t| t.0).collect();
        if labeled {
            corners.retain(|z| z[z.len() - 1].abs() == 1.0);
        }
        for theta in theta_region.corners() {
            for z in &corners {
                lip_value = lip_value.max(norm(&self.grad_z(z, &theta.0)));
            }
        }

        for _ in 0..n_probes {
            let theta = draw_theta(&mut rng);
            let theta2 = draw_theta(&mut rng);
            let z = draw_z(&mut rng);
            let mut z2 = draw_z(&mut rng);
            if labeled {
                // gradient Lipschitz ratios are taken with the label held fixed
                let last = z.len() - 1;
                z2[last] = z[last];
            }
            let dz = dist(&z, &z2);
            if dz > 0.0 {
                let gt = dist(&self.grad_theta(&z, &theta), &self.grad_theta(&z2, &theta));
                beta = beta.max(gt / dz);
                let gz = dist(&self.grad_z(&z, &theta), &self.grad_z(&z2, &theta));
                lip_grad = lip_grad.max(gz / dz);
            }
            lip_value = lip_value.max(norm(&self.grad_z(&z, &theta)));
            let dt = dist(&theta, &theta2);
            if dt > 0.0 {
                let g = self.grad_theta(&z, &theta);
                let diff: Vec<f64> = theta2.iter().zip(&theta).map(|(a, b)| a - b).collect();
                let gap = self.value(&z, &theta2) - self.value(&z, &theta) - dot(&g, &diff);
                gamma_sc = gamma_sc.min(2.0 * gap / (dt * dt));
            }
        }
        LossConstants {
            beta,
            gamma_sc: if gamma_sc.is_finite() { gamma_sc.max(0.0) } else { 0.0 },
            lip_value,
            lip_grad,
        }
    }
}

/// Convenience wrappers taking typed parameters.
pub fn loss_value(spec: &LossSpec, z: &[f64], theta: &Theta) -> f64 {
    spec.value(z, &theta.0)
}

pub fn grad_theta(spec: &LossSpec, z: &[f64], theta: &Theta) -> Vec<f64> {
    spec.grad_theta(z, &theta.0)
}

pub fn grad_z(spec: &LossSpec, z: &[f64], theta: &Theta) -> Vec<f64> {
    spec.grad_z(z, &theta.0)
}
