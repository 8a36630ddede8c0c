//! Retraining dynamics and reference solutions.
//!
//! * repeated risk minimization (RRM): `θ_{t+1} = argmin_θ DPR(θ_t, θ)`
//! * repeated gradient descent (RGD): one gradient step on `DPR(θ_t, ·)`
//! * performative gradient descent (PGD): steps along `∇PR = ∇₁ + ∇₂`
//! * brute-force oracles for the performative optimum and a stable point

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::{dist, dot, norm, ParamBox, SeedSpec, Theta};
use crate::objective::{DprTarget, Objective, PrTarget};
use crate::par;
use crate::risk::{Evaluator, RiskEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rrm,
    Rgd,
    Pgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rrm => "rrm",
            Method::Rgd => "rgd",
            Method::Pgd => "pgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub method: Method,
    pub iterates: Vec<Theta>,
    pub pr_values: Vec<RiskEstimate>,
    /// Stationarity measure of the method at each iterate.
    pub grad_norms: Vec<f64>,
    pub step_size: Option<f64>,
    pub tol: f64,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn final_theta(&self) -> &Theta {
        self.iterates.last().expect("trajectory has at least one iterate")
    }

    pub fn final_pr(&self) -> &RiskEstimate {
        self.pr_values.last().expect("trajectory has at least one iterate")
    }

    /// `‖θ_{t+1} − θ_t‖` for every step.
    pub fn gaps(&self) -> Vec<f64> {
        self.iterates.windows(2).map(|w| w[0].distance(&w[1])).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub step: Option<f64>,
}

pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Stopping tolerance for closed-form evaluation.
pub const EXACT_STOP_TOL: f64 = 1e-5;
const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITERS: usize = 5_000;

/// Outcome of a projected-gradient minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// `‖x − P(x − ∇f(x))‖`, zero exactly at box-constrained stationary points.
    pub stationarity: f64,
    pub iters: usize,
}

fn projected_step_norm(domain: &ParamBox, x: &[f64], g: &[f64]) -> f64 {
    let moved: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    dist(x, &domain.clamp(&moved))
}

/// Projected gradient descent with backtracking on a box.
pub fn minimize_on_box(
    obj: &dyn Objective,
    domain: &ParamBox,
    init: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Minimum> {
    let mut x = domain.clamp(init);
    let mut fx = obj.value(&x);
    let f0 = fx;
    let mut step = 1.0;
    for iter in 0..max_iters {
        let g = obj.grad(&x);
        let stationarity = projected_step_norm(domain, &x, &g);
        if stationarity <= tol {
            return Ok(Minimum { x, value: fx, stationarity, iters: iter });
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let trial = domain.clamp(&trial);
            let diff: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let ft = obj.value(&trial);
            let sq = dot(&diff, &diff);
            let model = fx + dot(&g, &diff) + sq / (2.0 * step);
            // Near a minimizer value differences drown in rounding; there the
            // step is judged by the gradient change instead.
            let flat = ft <= fx + 1e-12 * fx.abs().max(1.0) && {
                let gt = obj.grad(&trial);
                let curv: f64 = gt.iter().zip(&g).zip(&diff).map(|((a, b), d)| (a - b) * d).sum();
                curv <= sq / step
            };
            if ft <= model || flat {
                let moved = norm(&diff);
                x = trial;
                fx = ft;
                accepted = true;
                step *= 2.0;
                if moved == 0.0 {
                    let stationarity = projected_step_norm(domain, &x, &obj.grad(&x));
                    return Ok(Minimum { x, value: fx, stationarity, iters: iter + 1 });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || (fx - f0).abs() > 10.0 * f0.abs().max(1e-12) && fx > f0 {
            return Err(Error::Diverged {
                method: "projected gradient",
                iter,
                value: fx,
                initial: f0,
            });
        }
    }
    let stationarity = projected_step_norm(domain, &x, &obj.grad(&x));
    Ok(Minimum { x, value: fx, stationarity, iters: max_iters })
}

/// `argmin_{θ' ∈ Θ} DPR(θ_env, θ')` under a frozen batch from `D(θ_env)`.
pub fn inner_argmin(ev: &Evaluator<'_>, theta_env: &Theta, init: &Theta, tol: f64) -> Result<Theta> {
    let target = DprTarget::new(ev, theta_env)?;
    let min = minimize_on_box(&target, &ev.instance().domain, &init.0, tol, INNER_MAX_ITERS)?;
    Ok(Theta(min.x))
}

/// Minimizes from `restarts` seeded starting points and reports the spread of
/// the solutions around the best one.
pub fn minimize_with_restarts(
    obj: &dyn Objective,
    domain: &ParamBox,
    restarts: usize,
    seed: &SeedSpec,
    tol: f64,
) -> Result<(Minimum, f64)> {
    use rand::Rng;
    let mut rng = seed.rng();
    let starts: Vec<Vec<f64>> = (0..restarts.max(1))
        .map(|_| {
            domain
                .lower
                .iter()
                .zip(&domain.upper)
                .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l })
                .collect()
        })
        .collect();
    let mins = par::map(&starts, |s| minimize_on_box(obj, domain, s, tol, INNER_MAX_ITERS));
    let mins: Vec<Minimum> = mins.into_iter().collect::<Result<_>>()?;
    let best = mins
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .expect("at least one restart");
    let spread = mins.iter().map(|m| dist(&m.x, &best.x)).fold(0.0, f64::max);
    Ok((best, spread))
}

fn default_step(ev: &Evaluator<'_>) -> f64 {
    let inst = ev.instance();
    let beta = match inst.declared.beta {
        Some(b) => b,
        None if inst.loss.kind == LossKind::SquaredRidge => 2.0,
        None => 1.0,
    };
    0.1 / (beta + inst.loss.lambda + 1.0)
}

fn resolve_tol(ev: &Evaluator<'_>, opts: &SolverOptions, mc_se: impl FnOnce() -> Result<f64>) -> Result<f64> {
    match opts.tol {
        Some(t) => Ok(t),
        None if ev.is_exact() => Ok(EXACT_STOP_TOL),
        None => Ok(3.0 * mc_se()?),
    }
}

fn diverged(pr: &RiskEstimate, initial: &RiskEstimate) -> bool {
    !pr.value.is_finite() || (pr.value > initial.value && pr.value - initial.value > 10.0 * initial.value.abs().max(1e-12))
}

/// Repeated risk minimization. Each outer step solves the inner problem on a
/// fresh batch (`seed.child(t)`); PR along the path is reported on the root
/// stream.
pub fn rrm(ev: &Evaluator<'_>, theta0: &Theta, opts: &SolverOptions) -> Result<Trajectory> {
    ev.instance().check_theta(theta0)?;
    let max_iters = opts.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
    let tol = resolve_tol(ev, opts, || {
        // gradient noise divided by curvature bounds the minimizer noise
        let (_, se) = ev.dpr_grad(theta0, theta0)?;
        let curvature = match ev.instance().loss.kind {
            LossKind::SquaredRidge => 2.0 + ev.instance().loss.lambda,
            LossKind::LogisticRidge => ev.instance().loss.lambda.max(0.05),
        };
        Ok(se.iter().fold(0.0, |a: f64, b| a.max(*b)) / curvature)
    })?;
    let mut iterates = vec![theta0.clone()];
    let mut pr_values = vec![ev.pr(theta0)?];
    let mut grad_norms = vec![norm(&ev.dpr_grad(theta0, theta0)?.0)];
    let mut stop_reason = StopReason::MaxIters;
    for t in 0..max_iters {
        let current = iterates.last().expect("nonempty").clone();
        let stage = if ev.is_exact() { ev.clone() } else { ev.reseeded(ev.settings().seed.child(t as u64))? };
        let next = inner_argmin(&stage, &current, &current, INNER_TOL)?;
        let gap = current.distance(&next);
        pr_values.push(ev.pr(&next)?);
        grad_norms.push(norm(&ev.dpr_grad(&next, &next)?.0));
        iterates.push(next);
        if diverged(pr_values.last().unwrap(), &pr_values[0]) {
            stop_reason = StopReason::Diverged;
            break;
        }
        if gap <= tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(Trajectory {
        method: Method::Rrm,
        iterates,
        pr_values,
        grad_norms,
        step_size: None,
        tol,
        stop_reason,
    })
}

fn gradient_iteration(
    ev: &Evaluator<'_>,
    theta0: &Theta,
    opts: &SolverOptions,
    method: Method,
) -> Result<Trajectory> {
    ev.instance().check_theta(theta0)?;
    let domain = &ev.instance().domain;
    let step = opts.step.unwrap_or_else(|| default_step(ev));
    if !(step.is_finite() && step >= 0.0) {
        return Err(Error::invalid("step", format!("must be nonnegative, got {step}")));
    }
    let max_iters = opts.max_iters.unwrap_or(DEFAULT_MAX_ITERS);
    // direction and its largest per-coordinate standard error
    let direction = |stage: &Evaluator<'_>, th: &Theta| -> Result<(Vec<f64>, f64)> {
        match method {
            Method::Rgd => {
                let (g, se) = stage.dpr_grad(th, th)?;
                Ok((g, se.iter().fold(0.0, |a: f64, b| a.max(*b))))
            }
            _ => {
                let g = stage.performative_gradient(th)?;
                let se = g.max_se();
                Ok((g.total, se))
            }
        }
    };
    let (g0, se0) = direction(ev, theta0)?;
    let tol = resolve_tol(ev, opts, || Ok(se0))?;

    let mut iterates = vec![theta0.clone()];
    let mut pr_values = vec![ev.pr(theta0)?];
    let mut grad_norms = vec![projected_step_norm(domain, &theta0.0, &g0)];
    let mut grad = g0;
    let mut stop_reason = StopReason::MaxIters;
    if grad_norms[0] <= tol {
        stop_reason = StopReason::Converged;
    } else {
        for t in 0..max_iters {
            let current = iterates.last().expect("nonempty");
            let moved: Vec<f64> = current.0.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let next = Theta(domain.clamp(&moved));
            let stage = if ev.is_exact() { ev.clone() } else { ev.reseeded(ev.settings().seed.child(t as u64 + 1))? };
            let (g, _) = direction(&stage, &next)?;
            let gn = projected_step_norm(domain, &next.0, &g);
            pr_values.push(ev.pr(&next)?);
            grad_norms.push(gn);
            iterates.push(next);
            grad = g;
            if diverged(pr_values.last().unwrap(), &pr_values[0]) {
                stop_reason = StopReason::Diverged;
                break;
            }
            if gn <= tol {
                stop_reason = StopReason::Converged;
                break;
            }
        }
    }
    Ok(Trajectory {
        method,
        iterates,
        pr_values,
        grad_norms,
        step_size: Some(step),
        tol,
        stop_reason,
    })
}

/// Repeated gradient descent: `θ ← P(θ − η E_{D(θ)} ∇_θ ℓ(z; θ))`.
pub fn rgd(ev: &Evaluator<'_>, theta0: &Theta, opts: &SolverOptions) -> Result<Trajectory> {
    gradient_iteration(ev, theta0, opts, Method::Rgd)
}

/// Performative gradient descent: `θ ← P(θ − η ∇PR(θ))`.
pub fn pgd(ev: &Evaluator<'_>, theta0: &Theta, opts: &SolverOptions) -> Result<Trajectory> {
    gradient_iteration(ev, theta0, opts, Method::Pgd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Grid,
    FixedPoint,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub theta_star: Theta,
    pub objective: f64,
    pub grid_step: Option<f64>,
    pub method: OracleMethod,
    /// Fixed-point residual `‖T(θ) − θ‖` (stable-point oracle only).
    pub residual: Option<f64>,
    pub contraction_ratio: Option<f64>,
    pub inconclusive: bool,
}

/// Grid points over the box with spacing `h`, in row-major order (last
/// coordinate fastest).
pub fn grid_points(domain: &ParamBox, h: f64) -> Result<Vec<Theta>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("grid_step", format!("must be positive, got {h}")));
    }
    let axes: Vec<Vec<f64>> = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| {
            let k = ((u - l) / h + 1e-9).floor() as usize;
            (0..=k).map(|i| l + i as f64 * h).collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    Ok(out.into_iter().map(Theta).collect())
}

/// Lexicographic order used to break ties: norm first, then coordinates.
fn tie_order(a: &Theta, b: &Theta) -> std::cmp::Ordering {
    norm(&a.0)
        .total_cmp(&norm(&b.0))
        .then_with(|| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Minimizes PR over the full grid. Every cell is evaluated on the same base
/// noise, so the Monte Carlo landscape is a smooth function of `θ`.
pub fn grid_oracle_po(ev: &Evaluator<'_>, h: f64) -> Result<OracleResult> {
    let inst = ev.instance();
    if inst.dim > 2 {
        return Err(Error::Unsupported(format!(
            "grid oracle supports d ≤ 2, instance has d = {}",
            inst.dim
        )));
    }
    let grid = grid_points(&inst.domain, h)?;
    let values: Vec<f64> = par::map(&grid, |th| ev.pr(th).map(|r| r.value))
        .into_iter()
        .collect::<Result<_>>()?;
    let best = (0..grid.len())
        .min_by(|&i, &j| {
            values[i]
                .total_cmp(&values[j])
                .then_with(|| tie_order(&grid[i], &grid[j]))
        })
        .expect("grid is nonempty");
    Ok(OracleResult {
        theta_star: grid[best].clone(),
        objective: values[best],
        grid_step: Some(h),
        method: OracleMethod::Grid,
        residual: None,
        contraction_ratio: None,
        inconclusive: false,
    })
}

/// Grid oracle followed, in closed form, by a local descent on PR from the
/// best cell. Used wherever the optimum is needed below grid resolution.
pub fn po_reference(ev: &Evaluator<'_>, h: f64) -> Result<OracleResult> {
    let mut res = grid_oracle_po(ev, h)?;
    if ev.is_exact() {
        let target = PrTarget::new(ev)?;
        let min = minimize_on_box(&target, &ev.instance().domain, &res.theta_star.0, 1e-12, INNER_MAX_ITERS)?;
        if min.value <= res.objective {
            res.theta_star = Theta(min.x);
            res.objective = min.value;
            res.method = OracleMethod::Analytic;
        }
    }
    Ok(res)
}

/// Fixed point of the retraining map `T(θ) = argmin DPR(θ, ·)`.
///
/// Iterates `T` on one coupled batch (so `T` is deterministic) from the box
/// center. If the observed gap ratios show a contraction and the residual
/// reaches `tol`, that point is returned; otherwise the residual is minimized
/// over a grid and the result is flagged inconclusive when it stays above
/// `tol`.
pub fn fixed_point_oracle_ps(ev: &Evaluator<'_>, tol: f64) -> Result<OracleResult> {
    let inst = ev.instance();
    let map = |th: &Theta| inner_argmin(ev, th, th, INNER_TOL);
    let mut theta = inst.domain.center();
    let mut gaps: Vec<f64> = Vec::new();
    for _ in 0..500 {
        let next = map(&theta)?;
        let gap = theta.distance(&next);
        gaps.push(gap);
        theta = next;
        if gap <= tol * 1e-3 {
            break;
        }
    }
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|w| w[0] > 1e-6 && w[1] > 1e-7)
        .map(|w| w[1] / w[0])
        .collect();
    // median of the ratios measured above the inner solver's noise floor
    let contraction_ratio = if ratios.is_empty() {
        None
    } else {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        Some(sorted[sorted.len() / 2])
    };
    let residual = theta.distance(&map(&theta)?);
    let contracting = contraction_ratio.is_none_or(|r| r < 1.0);
    if contracting && residual <= tol {
        return Ok(OracleResult {
            objective: ev.pr(&theta)?.value,
            theta_star: theta,
            grid_step: None,
            method: OracleMethod::FixedPoint,
            residual: Some(residual),
            contraction_ratio,
            inconclusive: false,
        });
    }
    if inst.dim > 2 {
        return Err(Error::Unsupported(
            "retraining map is not contracting and d > 2 rules out the residual grid".into(),
        ));
    }
    let h = inst.domain.diameter() / 200.0;
    let grid = grid_points(&inst.domain, h.max(1e-6))?;
    let residuals: Vec<f64> = par::map(&grid, |th| map(th).map(|t| th.distance(&t)))
        .into_iter()
        .collect::<Result<_>>()?;
    let best = (0..grid.len())
        .min_by(|&i, &j| residuals[i].total_cmp(&residuals[j]).then_with(|| tie_order(&grid[i], &grid[j])))
        .expect("grid is nonempty");
    Ok(OracleResult {
        objective: ev.pr(&grid[best])?.value,
        theta_star: grid[best].clone(),
        grid_step: Some(h),
        method: OracleMethod::Grid,
        residual: Some(residuals[best]),
        contraction_ratio,
        inconclusive: residuals[best] > tol,
    })
}

/// `‖T(θ) − θ‖` for the retraining map on the evaluator's batch.
pub fn fixed_point_residual(ev: &Evaluator<'_>, theta: &Theta) -> Result<f64> {
    Ok(theta.distance(&inner_argmin(ev, theta, theta, INNER_TOL)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{canonical, gauss_2d, gauss_mean_1d, strategic_2d};

    fn t(x: f64) -> Theta {
        Theta::scalar(x)
    }

    #[test]
    fn inner_argmin_examples_closed_form() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let a = inner_argmin(&ev, &t(1.0), &t(-2.0), 1e-10).unwrap();
        assert!((a.0[0] - 1.0).abs() < 1e-8);
        let b = inner_argmin(&ev, &t(0.0), &t(0.0), 1e-10).unwrap();
        assert!((b.0[0] - 2.0 / 3.0).abs() < 1e-8);
        let stat = gauss_mean_1d(1.0, 0.0, 0.0);
        let ev = Evaluator::closed_form(&stat).unwrap();
        for env in [-2.0, 0.0, 2.5] {
            assert!((inner_argmin(&ev, &t(env), &t(0.0), 1e-10).unwrap().0[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn inner_argmin_monte_carlo_within_sampling_error() {
        let inst = canonical();
        let ev = Evaluator::monte_carlo(&inst, 100_000, SeedSpec::new(3)).unwrap();
        let a = inner_argmin(&ev, &t(1.0), &t(0.0), 1e-10).unwrap().0[0];
        // the minimizer is (2/3)·mean(z): its standard error is (2/3)/√n
        let se = (2.0 / 3.0) / (100_000f64).sqrt();
        assert!((a - 1.0).abs() <= 4.0 * se, "{a}");
    }

    #[test]
    fn rrm_closed_form_path() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let tr = rrm(&ev, &t(0.0), &SolverOptions::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        for (k, th) in tr.iterates.iter().enumerate().take(6) {
            let want = 1.0 - (1.0f64 / 3.0).powi(k as i32);
            assert!((th.0[0] - want).abs() < 1e-8, "iterate {k}: {}", th.0[0]);
        }
        assert!((tr.final_theta().0[0] - 1.0).abs() < 1e-5);
        assert!(tr.iterates.len() <= 21);
        let gaps = tr.gaps();
        for w in gaps.windows(2).skip(1) {
            assert!(w[1] / w[0] <= 0.34);
        }
        assert_eq!(tr.iterates.len(), tr.pr_values.len());
    }

    #[test]
    fn rrm_at_fixed_point_stops_immediately() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let tr = rrm(&ev, &t(1.0), &SolverOptions::default()).unwrap();
        assert_eq!(tr.iterates.len(), 2);
        assert_eq!(tr.stop_reason, StopReason::Converged);
    }

    #[test]
    fn rrm_static_problem_one_step() {
        let inst = gauss_mean_1d(1.0, 0.0, 1.0);
        let ev = Evaluator::closed_form(&inst).unwrap();
        let tr = rrm(&ev, &t(-2.0), &SolverOptions::default()).unwrap();
        assert!((tr.iterates[1].0[0] - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn rgd_fixed_point_is_stable_point() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let tr = rgd(&ev, &t(0.0), &SolverOptions::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        assert!((tr.final_theta().0[0] - 1.0).abs() < 1e-4);
        let frozen = rgd(&ev, &t(0.3), &SolverOptions { step: Some(0.0), max_iters: Some(5), ..Default::default() }).unwrap();
        assert!(frozen.iterates.iter().all(|th| th.0[0] == 0.3));
        let stat = gauss_mean_1d(1.0, 0.0, 1.0);
        let ev = Evaluator::closed_form(&stat).unwrap();
        let tr = rgd(&ev, &t(0.0), &SolverOptions::default()).unwrap();
        assert!((tr.final_theta().0[0] - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn pgd_reaches_optimum() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let tr = pgd(&ev, &t(0.0), &SolverOptions::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::Converged);
        assert!((tr.final_theta().0[0] - 2.0 / 3.0).abs() <= 1e-3);
        let still = pgd(&ev, &t(2.0 / 3.0), &SolverOptions::default()).unwrap();
        assert_eq!(still.iterates.len(), 1);
        let rr = rrm(&ev, &t(0.0), &SolverOptions::default()).unwrap();
        assert!(tr.final_pr().value < rr.final_pr().value);
    }

    #[test]
    fn iterates_stay_in_box() {
        // optimum outside the box: μ0 = 2, a = 0.8, λ = 0 puts both at θ = 10
        let inst = gauss_mean_1d(2.0, 0.8, 0.0);
        let ev = Evaluator::closed_form(&inst).unwrap();
        for tr in [
            rrm(&ev, &t(0.0), &SolverOptions::default()).unwrap(),
            pgd(&ev, &t(0.0), &SolverOptions::default()).unwrap(),
            rgd(&ev, &t(0.0), &SolverOptions::default()).unwrap(),
        ] {
            assert!(tr.iterates.iter().all(|th| inst.domain.contains(&th.0)));
            assert!((tr.final_theta().0[0] - 3.0).abs() < 1e-3, "{:?}", tr.method);
        }
    }

    #[test]
    fn grid_oracle_examples() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let o = grid_oracle_po(&ev, 1e-3).unwrap();
        assert!((o.theta_star.0[0] - 2.0 / 3.0).abs() <= 1e-3);
        assert!((o.objective - 5.0 / 3.0).abs() <= 1e-5);
        let stat = gauss_mean_1d(1.0, 0.0, 0.0);
        let ev = Evaluator::closed_form(&stat).unwrap();
        let o = grid_oracle_po(&ev, 1e-3).unwrap();
        assert!((o.theta_star.0[0] - 1.0).abs() <= 1e-3);
        assert_eq!(grid_points(&inst.domain, 0.5).unwrap().len(), 13);
    }

    #[test]
    fn grid_oracle_ties_prefer_small_norm() {
        // μ0 = 0, a = 0, λ = 0: PR(θ) = θ² + 1 is symmetric, grid ±0.5 tie at h = 1 offsets
        let inst = crate::model::Instance::new(
            ParamBox::new(vec![-0.5], vec![0.5]).unwrap(),
            crate::losses::LossSpec::squared_ridge(0.0),
            gauss_mean_1d(0.0, 0.0, 0.0).map,
            Default::default(),
        )
        .unwrap();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let o = grid_oracle_po(&ev, 1.0).unwrap();
        assert_eq!(o.theta_star.0, vec![-0.5]);
    }

    #[test]
    fn grid_oracle_2d_and_limits() {
        let inst = gauss_2d([0.5, -1.0], [[0.3, 0.0], [0.0, 0.2]], 0.5);
        let ev = Evaluator::closed_form(&inst).unwrap();
        let o = grid_oracle_po(&ev, 0.05).unwrap();
        let r = po_reference(&ev, 0.05).unwrap();
        assert!(o.theta_star.distance(&r.theta_star) <= 0.05 * 2f64.sqrt());
        assert!(r.objective <= o.objective);
    }

    #[test]
    fn fixed_point_oracle_examples() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let o = fixed_point_oracle_ps(&ev, 1e-7).unwrap();
        assert!((o.theta_star.0[0] - 1.0).abs() <= 1e-3);
        assert!(!o.inconclusive);
        let ratio = o.contraction_ratio.unwrap();
        assert!((ratio - 1.0 / 3.0).abs() < 1e-3, "{ratio}");
        let stat = gauss_mean_1d(1.0, 0.0, 1.0);
        let ev = Evaluator::closed_form(&stat).unwrap();
        let o = fixed_point_oracle_ps(&ev, 1e-7).unwrap();
        assert!((o.theta_star.0[0] - 2.0 / 3.0).abs() <= 1e-6);
    }

    #[test]
    fn strategic_rrm_converges() {
        let inst = strategic_2d(2.0);
        let ev = Evaluator::monte_carlo(&inst, 4000, SeedSpec::new(6)).unwrap();
        let o = fixed_point_oracle_ps(&ev, 1e-6).unwrap();
        assert!(!o.inconclusive);
        assert!(fixed_point_residual(&ev, &o.theta_star).unwrap() <= 1e-6);
    }

    #[test]
    fn po_below_ps_everywhere_sampled() {
        for (mu0, a, lam) in [(1.0, 0.5, 1.0), (-1.5, 0.3, 0.2), (0.7, 0.8, 2.0)] {
            let inst = gauss_mean_1d(mu0, a, lam);
            let ev = Evaluator::closed_form(&inst).unwrap();
            let po = grid_oracle_po(&ev, 1e-3).unwrap();
            let ps = fixed_point_oracle_ps(&ev, 1e-7).unwrap();
            assert!(po.objective <= ps.objective + 1e-9);
        }
    }
}
