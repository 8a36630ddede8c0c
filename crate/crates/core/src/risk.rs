//! Estimators of the performative risk `PR(θ) = DPR(θ, θ)`, the decoupled risk
//! `DPR(θ₁, θ₂) = E_{z∼D(θ₁)} ℓ(z; θ₂)`, the suboptimality gap and the split
//! performative gradient `∇PR = E ∇_θ ℓ + E ℓ ∇_θ log p_θ`.
//!
//! Monte Carlo estimates reuse one draw of base noise for every `θ`, so
//! differences and finite differences are taken under common random numbers.

use serde::{Deserialize, Serialize};

use crate::distmaps::{BaseNoise, DistMapSpec, GaussianMap, SampleBatch};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::{dot, Instance, SeedSpec, Theta};

/// Step for the finite-difference fallback of `∇₂` when the map has no score.
pub const FD_FALLBACK_STEP: f64 = 1e-3;
/// Additive tolerance for exact (closed-form) comparisons.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n: usize,
    pub mode: EvalMode,
}

impl RiskEstimate {
    fn exact(value: f64) -> Self {
        RiskEstimate {
            value,
            std_err: 0.0,
            n: 0,
            mode: EvalMode::ClosedForm,
        }
    }

    /// `3·SE + 1e−9`.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.std_err + EXACT_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionTerm {
    /// `E[ℓ · score]`.
    Score,
    /// Central difference of `DPR` in its first argument.
    FiniteDifference,
    ClosedForm,
}

/// Performative gradient split into the loss term and the distribution term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub grad1: Vec<f64>,
    pub grad2: Vec<f64>,
    pub total: Vec<f64>,
    pub grad1_se: Vec<f64>,
    pub grad2_se: Vec<f64>,
    pub n: usize,
    pub grad2_method: DistributionTerm,
}

impl GradEstimate {
    /// Largest per-coordinate standard error of `total`.
    pub fn max_se(&self) -> f64 {
        self.grad1_se
            .iter()
            .zip(&self.grad2_se)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }
}

/// Evaluation settings: sample size, seed and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n: usize,
    pub seed: SeedSpec,
    pub mode: EvalMode,
}

impl EvalSettings {
    pub fn monte_carlo(n: usize, seed: SeedSpec) -> Self {
        EvalSettings {
            n,
            seed,
            mode: EvalMode::MonteCarlo,
        }
    }

    pub fn closed_form() -> Self {
        EvalSettings {
            n: 0,
            seed: SeedSpec::new(0),
            mode: EvalMode::ClosedForm,
        }
    }

    pub fn with_seed(&self, seed: SeedSpec) -> Self {
        EvalSettings {
            seed,
            ..self.clone()
        }
    }
}

/// Sample mean and standard error.
pub(crate) fn mean_se(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn column_mean_se(rows: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() / width;
    let mut mean = vec![0.0; width];
    for r in rows.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; width];
    for r in rows.chunks_exact(width) {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let se = var
        .iter()
        .map(|s| if n > 1 { (s / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 })
        .collect();
    (mean, se)
}

/// Risk evaluator bound to an instance and a seed.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    inst: &'a Instance,
    settings: EvalSettings,
    noise: Option<BaseNoise>,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a Instance, settings: &EvalSettings) -> Result<Self> {
        match settings.mode {
            EvalMode::ClosedForm => {
                closed_form_parts(inst)?;
                Ok(Evaluator {
                    inst,
                    settings: settings.clone(),
                    noise: None,
                })
            }
            EvalMode::MonteCarlo => {
                if settings.n == 0 {
                    return Err(Error::Contract("Monte Carlo needs n ≥ 1".into()));
                }
                Ok(Evaluator {
                    inst,
                    settings: settings.clone(),
                    noise: Some(inst.map.base_noise(settings.n, &settings.seed)),
                })
            }
        }
    }

    pub fn monte_carlo(inst: &'a Instance, n: usize, seed: SeedSpec) -> Result<Self> {
        Self::new(inst, &EvalSettings::monte_carlo(n, seed))
    }

    pub fn closed_form(inst: &'a Instance) -> Result<Self> {
        Self::new(inst, &EvalSettings::closed_form())
    }

    /// Closed form when the instance supports it, Monte Carlo otherwise.
    pub fn best_available(inst: &'a Instance, n: usize, seed: SeedSpec) -> Result<Self> {
        if closed_form_parts(inst).is_ok() {
            Self::closed_form(inst)
        } else {
            Self::monte_carlo(inst, n, seed)
        }
    }

    /// Same mode and size on a different stream.
    pub fn reseeded(&self, seed: SeedSpec) -> Result<Evaluator<'a>> {
        Self::new(self.inst, &self.settings.with_seed(seed))
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn settings(&self) -> &EvalSettings {
        &self.settings
    }

    pub fn mode(&self) -> EvalMode {
        self.settings.mode
    }

    pub fn is_exact(&self) -> bool {
        self.settings.mode == EvalMode::ClosedForm
    }

    /// The coupled batch at `θ`. Closed-form evaluators draw a fresh batch of
    /// 10⁴ points from the root seed.
    pub fn batch(&self, theta: &Theta) -> SampleBatch {
        match &self.noise {
            Some(noise) => self.inst.map.realize(noise, theta),
            None => {
                let noise = self.inst.map.base_noise(10_000, &self.settings.seed);
                self.inst.map.realize(&noise, theta)
            }
        }
    }

    fn check(&self, theta: &Theta) -> Result<()> {
        self.inst.check_theta(theta)
    }

    /// `DPR(θ₁, θ₂)`.
    pub fn dpr(&self, theta1: &Theta, theta2: &Theta) -> Result<RiskEstimate> {
        self.check(theta1)?;
        self.check(theta2)?;
        if self.is_exact() {
            let (g, lambda) = closed_form_parts(self.inst)?;
            return Ok(RiskEstimate::exact(closed_dpr(g, lambda, theta1, theta2)));
        }
        let batch = self.batch(theta1);
        let loss = &self.inst.loss;
        let vals: Vec<f64> = batch.rows().map(|z| loss.value(z, &theta2.0)).collect();
        let (value, std_err) = mean_se(vals.iter().copied());
        Ok(RiskEstimate {
            value,
            std_err,
            n: batch.len(),
            mode: EvalMode::MonteCarlo,
        })
    }

    /// `PR(θ)`, identical to `dpr(θ, θ)` on the same stream.
    pub fn pr(&self, theta: &Theta) -> Result<RiskEstimate> {
        self.dpr(theta, theta)
    }

    /// `Δ_θ(θ') = DPR(θ, θ') − DPR(θ, θ)` on one coupled batch.
    pub fn subopt_gap(&self, theta: &Theta, theta_prime: &Theta) -> Result<RiskEstimate> {
        self.check(theta)?;
        self.check(theta_prime)?;
        if self.is_exact() {
            let (g, lambda) = closed_form_parts(self.inst)?;
            return Ok(RiskEstimate::exact(
                closed_dpr(g, lambda, theta, theta_prime) - closed_dpr(g, lambda, theta, theta),
            ));
        }
        let batch = self.batch(theta);
        let loss = &self.inst.loss;
        let diffs: Vec<f64> = batch
            .rows()
            .map(|z| loss.value(z, &theta_prime.0) - loss.value(z, &theta.0))
            .collect();
        let (value, std_err) = mean_se(diffs.iter().copied());
        Ok(RiskEstimate {
            value,
            std_err,
            n: batch.len(),
            mode: EvalMode::MonteCarlo,
        })
    }

    /// `∇_{θ₂} DPR(θ₁, θ₂)` with per-coordinate standard errors.
    pub fn dpr_grad(&self, theta1: &Theta, theta2: &Theta) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(theta1)?;
        self.check(theta2)?;
        if self.is_exact() {
            let (g, lambda) = closed_form_parts(self.inst)?;
            let d = theta2.dim();
            return Ok((closed_grad_second(g, lambda, theta1, theta2), vec![0.0; d]));
        }
        let batch = self.batch(theta1);
        Ok(self.mean_grad_theta(&batch, theta2))
    }

    fn mean_grad_theta(&self, batch: &SampleBatch, theta: &Theta) -> (Vec<f64>, Vec<f64>) {
        let d = theta.dim();
        let mut rows = vec![0.0; batch.len() * d];
        for (z, out) in batch.rows().zip(rows.chunks_exact_mut(d)) {
            self.inst.loss.grad_theta_into(z, &theta.0, out);
        }
        column_mean_se(&rows, d)
    }

    /// `∇PR(θ) = ∇₁ + ∇₂`.
    pub fn performative_gradient(&self, theta: &Theta) -> Result<GradEstimate> {
        self.check(theta)?;
        let d = theta.dim();
        if self.is_exact() {
            let (g, lambda) = closed_form_parts(self.inst)?;
            let grad1 = closed_grad_second(g, lambda, theta, theta);
            let grad2 = closed_grad_first(g, theta, theta);
            let total = grad1.iter().zip(&grad2).map(|(a, b)| a + b).collect();
            return Ok(GradEstimate {
                grad1,
                grad2,
                total,
                grad1_se: vec![0.0; d],
                grad2_se: vec![0.0; d],
                n: 0,
                grad2_method: DistributionTerm::ClosedForm,
            });
        }
        let batch = self.batch(theta);
        let n = batch.len();
        let (grad1, grad1_se) = self.mean_grad_theta(&batch, theta);
        let loss = &self.inst.loss;
        let (grad2, grad2_se, method) = if self.inst.map.has_density() {
            // E[score] = 0, so a leave-one-out mean of the loss is a free baseline
            let losses: Vec<f64> = batch.rows().map(|z| loss.value(z, &theta.0)).collect();
            let total: f64 = losses.iter().sum();
            let mut rows = vec![0.0; n * d];
            for ((z, out), l) in batch.rows().zip(rows.chunks_exact_mut(d)).zip(&losses) {
                let baseline = if n > 1 { (total - l) / (n - 1) as f64 } else { 0.0 };
                let s = self.inst.map.score(z, theta)?;
                for (o, si) in out.iter_mut().zip(s) {
                    *o = (l - baseline) * si;
                }
            }
            let (m, se) = column_mean_se(&rows, d);
            (m, se, DistributionTerm::Score)
        } else {
            // perturb the distribution slot only, same base noise on both sides
            let noise = self.noise.as_ref().expect("Monte Carlo evaluator holds noise");
            let h = FD_FALLBACK_STEP;
            let mut rows = vec![0.0; n * d];
            for i in 0..d {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus.0[i] += h;
                minus.0[i] -= h;
                let bp = self.inst.map.realize(noise, &plus);
                let bm = self.inst.map.realize(noise, &minus);
                for (k, (zp, zm)) in bp.rows().zip(bm.rows()).enumerate() {
                    rows[k * d + i] = (loss.value(zp, &theta.0) - loss.value(zm, &theta.0)) / (2.0 * h);
                }
            }
            let (m, se) = column_mean_se(&rows, d);
            (m, se, DistributionTerm::FiniteDifference)
        };
        let total = grad1.iter().zip(&grad2).map(|(a, b)| a + b).collect();
        Ok(GradEstimate {
            grad1,
            grad2,
            total,
            grad1_se,
            grad2_se,
            n,
            grad2_method: method,
        })
    }

    /// Additive tolerance for a comparison built from estimates with the given
    /// standard error: `3·SE + 1e−9`, or `1e−9` in closed form.
    pub fn tolerance(&self, se: f64) -> f64 {
        if self.is_exact() {
            EXACT_TOL
        } else {
            3.0 * se + EXACT_TOL
        }
    }
}

/// The Gaussian × squared-ridge pair admitting closed forms.
pub(crate) fn closed_form_parts(inst: &Instance) -> Result<(&GaussianMap, f64)> {
    match (&inst.map, inst.loss.kind) {
        (DistMapSpec::GaussianLocationScale(g), LossKind::SquaredRidge) => Ok((g, inst.loss.lambda)),
        _ => Err(Error::Unsupported(format!(
            "closed form needs gaussian_location_scale × squared_ridge, got {} × {:?}",
            inst.map.kind_name(),
            inst.loss.kind
        ))),
    }
}

fn gaussian_mean(g: &GaussianMap, theta: &Theta) -> Vec<f64> {
    g.shift
        .iter()
        .zip(&g.base_mean)
        .map(|(row, mu)| mu + dot(row, &theta.0))
        .collect()
}

/// `‖θ₂ − m(θ₁)‖² + Σσ² + (λ/2)‖θ₂‖²`.
fn closed_dpr(g: &GaussianMap, lambda: f64, theta1: &Theta, theta2: &Theta) -> f64 {
    let mean = gaussian_mean(g, theta1);
    let bias: f64 = theta2.0.iter().zip(&mean).map(|(t, m)| (t - m) * (t - m)).sum();
    let var: f64 = g.sigma.iter().map(|s| s * s).sum();
    bias + var + 0.5 * lambda * dot(&theta2.0, &theta2.0)
}

/// `∇_{θ₂} DPR = 2(θ₂ − m(θ₁)) + λθ₂`.
fn closed_grad_second(g: &GaussianMap, lambda: f64, theta1: &Theta, theta2: &Theta) -> Vec<f64> {
    let mean = gaussian_mean(g, theta1);
    theta2
        .0
        .iter()
        .zip(&mean)
        .map(|(t, m)| 2.0 * (t - m) + lambda * t)
        .collect()
}

/// `∇_{θ₁} DPR = −2Aᵀ(θ₂ − m(θ₁))`.
fn closed_grad_first(g: &GaussianMap, theta1: &Theta, theta2: &Theta) -> Vec<f64> {
    let mean = gaussian_mean(g, theta1);
    let mut out = vec![0.0; theta1.dim()];
    for (row, (t, m)) in g.shift.iter().zip(theta2.0.iter().zip(&mean)) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += -2.0 * a * (t - m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{canonical, gauss_2d, strategic_2d};

    fn t(x: f64) -> Theta {
        Theta::scalar(x)
    }

    #[test]
    fn closed_form_examples() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        assert!((ev.dpr(&t(1.0), &t(1.0)).unwrap().value - 1.75).abs() < 1e-12);
        assert!((ev.dpr(&t(1.0), &t(2.0 / 3.0)).unwrap().value - 69.0 / 36.0).abs() < 1e-12);
        assert!((ev.pr(&t(2.0 / 3.0)).unwrap().value - 5.0 / 3.0).abs() < 1e-12);
        assert!((ev.pr(&t(0.0)).unwrap().value - 2.0).abs() < 1e-12);
        assert!((ev.subopt_gap(&t(1.0), &t(2.0 / 3.0)).unwrap().value - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(ev.subopt_gap(&t(0.4), &t(0.4)).unwrap().value, 0.0);
        assert_eq!(ev.pr(&t(0.0)).unwrap().std_err, 0.0);
    }

    #[test]
    fn subopt_gap_is_quadratic_at_stable_point() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        for &tp in &[-3.0, -1.0, 0.5, 2.0, 3.0] {
            let gap = ev.subopt_gap(&t(1.0), &t(tp)).unwrap().value;
            assert!((gap - 1.5 * (tp - 1.0f64).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn pr_equals_dpr_on_shared_seed() {
        let inst = canonical();
        let ev = Evaluator::monte_carlo(&inst, 2000, SeedSpec::new(8)).unwrap();
        let a = ev.pr(&t(0.7)).unwrap();
        let b = ev.dpr(&t(0.7), &t(0.7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let inst = canonical();
        let ev = Evaluator::monte_carlo(&inst, 100_000, SeedSpec::new(21)).unwrap();
        for (a, b, want) in [(1.0, 1.0, 1.75), (2.0 / 3.0, 2.0 / 3.0, 5.0 / 3.0), (1.0, 2.0 / 3.0, 69.0 / 36.0)] {
            let est = ev.dpr(&t(a), &t(b)).unwrap();
            assert!((est.value - want).abs() <= (3.0 * est.std_err).max(1e-2), "{est:?} vs {want}");
        }
    }

    #[test]
    fn std_err_scales_as_inverse_sqrt_n() {
        let inst = canonical();
        let ses: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| Evaluator::monte_carlo(&inst, n, SeedSpec::new(5)).unwrap().pr(&t(0.5)).unwrap().std_err)
            .collect();
        for w in ses.windows(2) {
            let ratio = w[0] / w[1];
            let want = 10f64.sqrt();
            assert!(ratio > want / 1.5 && ratio < want * 1.5, "ratio {ratio}");
        }
    }

    #[test]
    fn closed_form_gradient_examples() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let g = ev.performative_gradient(&t(0.0)).unwrap();
        assert!((g.grad1[0] + 2.0).abs() < 1e-12);
        assert!((g.grad2[0] - 1.0).abs() < 1e-12);
        assert!((g.total[0] + 1.0).abs() < 1e-12);
        let g = ev.performative_gradient(&t(2.0 / 3.0)).unwrap();
        assert!(g.total[0].abs() < 1e-12);
    }

    #[test]
    fn closed_form_gradient_matches_finite_difference_2d() {
        let inst = gauss_2d([0.5, -1.0], [[0.3, -0.2], [0.1, 0.4]], 0.5);
        let ev = Evaluator::closed_form(&inst).unwrap();
        let th = Theta(vec![0.4, -0.7]);
        let g = ev.performative_gradient(&th).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut p = th.clone();
            let mut q = th.clone();
            p.0[i] += h;
            q.0[i] -= h;
            let fd = (ev.pr(&p).unwrap().value - ev.pr(&q).unwrap().value) / (2.0 * h);
            assert!((fd - g.total[i]).abs() / (1.0 + fd.abs()) < 1e-6);
        }
    }

    #[test]
    fn monte_carlo_gradient_at_zero() {
        let inst = canonical();
        let ev = Evaluator::monte_carlo(&inst, 100_000, SeedSpec::new(77)).unwrap();
        let g = ev.performative_gradient(&t(0.0)).unwrap();
        assert_eq!(g.grad2_method, DistributionTerm::Score);
        assert!((g.grad1[0] + 2.0).abs() <= 4.0 * g.grad1_se[0]);
        assert!((g.grad2[0] - 1.0).abs() <= 4.0 * g.grad2_se[0]);
    }

    #[test]
    fn strategic_gradient_uses_fallback() {
        let inst = strategic_2d(2.0);
        let ev = Evaluator::monte_carlo(&inst, 20_000, SeedSpec::new(1)).unwrap();
        let th = Theta(vec![0.3, -0.2]);
        let g = ev.performative_gradient(&th).unwrap();
        assert_eq!(g.grad2_method, DistributionTerm::FiniteDifference);
        // under common random numbers PR is a smooth function of θ, so its
        // central difference must agree with ∇₁ + ∇₂
        let h = 1e-4;
        for i in 0..2 {
            let mut p = th.clone();
            let mut q = th.clone();
            p.0[i] += h;
            q.0[i] -= h;
            let fd = (ev.pr(&p).unwrap().value - ev.pr(&q).unwrap().value) / (2.0 * h);
            assert!((fd - g.total[i]).abs() < 1e-4, "{fd} vs {}", g.total[i]);
        }
        assert!(Evaluator::closed_form(&inst).is_err());
    }

    #[test]
    fn out_of_box_theta_rejected() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        assert!(ev.pr(&t(3.5)).is_err());
        assert!(ev.pr(&Theta(vec![0.0, 0.0])).is_err());
    }
}
