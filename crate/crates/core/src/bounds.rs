//! Distance and suboptimality bounds between stable and optimal points, each
//! paired with oracle ground truth.
//!
//! Everything rests on the gap inequality
//!
//! ```text
//! PR(θ') ≥ PR(θ) + Δ_θ(θ') − L·W₁(D(θ), D(θ')),   Δ_θ(θ') = DPR(θ, θ') − PR(θ)
//! ```
//!
//! with `L` the value-Lipschitz constant of the loss in `z`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conditions::{
    self, base_probes, map_w1, Anchor, CheckOptions, Condition, ResolvedConstants, Target, Witness,
};
use crate::distmaps::SampleBatch;
use crate::error::{Error, Result};
use crate::model::{ConstantSource, ParamBox, SeedSpec, Sourced, Theta};
use crate::par;
use crate::risk::{Evaluator, RiskEstimate};
use crate::solvers::{self, OracleMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateName {
    Prop1Optimality,
    Ex1SuboptLb,
    Ex2DistSqrt,
    Ex3DistLin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Holds,
    Fails,
    /// The optimality premise failed at some probe; no claim is made.
    PremiseFailed,
    /// A required constant could not be certified.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: CertificateName,
    pub bound_value: f64,
    pub actual_value: f64,
    pub holds: bool,
    pub status: CertificateStatus,
    pub tolerance: f64,
    pub constants: BTreeMap<String, Sourced>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failing_probes: Vec<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Oracle reference points and values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta_ps: Theta,
    pub ps_residual: f64,
    pub ps_inconclusive: bool,
    pub theta_po: Theta,
    pub pr_ps: RiskEstimate,
    pub pr_min: f64,
    /// Resolution of `theta_po`.
    pub po_tol: f64,
}

pub fn ground_truth(ev: &Evaluator<'_>, grid_step: f64) -> Result<GroundTruth> {
    let ps = solvers::fixed_point_oracle_ps(ev, if ev.is_exact() { 1e-10 } else { 1e-7 })?;
    let po = solvers::po_reference(ev, grid_step)?;
    let pr_ps = ev.pr(&ps.theta_star)?;
    let po_tol = match po.method {
        OracleMethod::Grid => grid_step * (ev.instance().dim as f64).sqrt(),
        _ => 1e-6,
    };
    Ok(GroundTruth {
        ps_residual: ps.residual.unwrap_or(0.0),
        ps_inconclusive: ps.inconclusive,
        theta_ps: ps.theta_star,
        pr_min: po.objective.min(pr_ps.value),
        theta_po: po.theta_star,
        pr_ps,
        po_tol,
    })
}

fn need_lip(lip: Option<f64>) -> Result<f64> {
    lip.ok_or(Error::MissingConstant {
        name: "lip_l",
        hint: "declare constants.lip_l or take it from conditions::resolve_constants",
    })
}

/// `PR(θ') − PR(θ) − Δ_θ(θ') + L·W₁(D(θ), D(θ'))`; nonnegative when `L` is a
/// valid value-Lipschitz constant.
pub fn gap_inequality_residual(
    ev: &Evaluator<'_>,
    theta: &Theta,
    theta_prime: &Theta,
    lip: Option<f64>,
) -> Result<f64> {
    let l = need_lip(lip)?;
    let pr = ev.pr(theta)?;
    let pr_prime = ev.pr(theta_prime)?;
    let gap = ev.subopt_gap(theta, theta_prime)?;
    let w = map_w1(ev, theta, theta_prime)?;
    Ok(pr_prime.value - pr.value - gap.value + l * w.value)
}

pub fn ex1_bound(lip: f64, shift_bound: f64) -> f64 {
    lip * shift_bound
}

pub fn ex2_bound(lip: f64, shift_bound: f64, gamma_qg: f64) -> f64 {
    (lip * shift_bound / gamma_qg).sqrt()
}

pub fn ex3_bound(lip: f64, eps: f64, gamma_qg: f64) -> f64 {
    lip * eps / gamma_qg
}

/// Largest `W₁` between any two points of a grid with about 50 points.
pub fn estimate_shift_bound(ev: &Evaluator<'_>) -> Result<f64> {
    let domain: &ParamBox = &ev.instance().domain;
    let d = domain.dim();
    let per_axis = (50f64.powf(1.0 / d as f64).ceil() as usize).max(2);
    let h: Vec<f64> = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| (u - l) / (per_axis - 1) as f64)
        .collect();
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for (&lo, &step) in domain.lower.iter().zip(&h) {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                (0..per_axis).map(move |k| {
                    let mut q = p.clone();
                    q.push(lo + k as f64 * step);
                    q
                })
            })
            .collect();
    }
    let pairs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (i + 1..grid.len()).map(move |j| (i, j)))
        .collect();
    let ws: Vec<f64> = if ev.is_exact() {
        par::map(&pairs, |&(i, j)| {
            map_w1(ev, &Theta(grid[i].clone()), &Theta(grid[j].clone())).map(|w| w.value)
        })
        .into_iter()
        .collect::<Result<_>>()?
    } else {
        // one batch per grid point, sorted once so 1-D quantile matching is linear
        let batches: Vec<SampleBatch> = par::map(&grid, |p| {
            let mut b = ev.batch(&Theta(p.clone()));
            if b.data_dim == 1 {
                b.points.sort_by(f64::total_cmp);
            }
            b
        });
        par::map(&pairs, |&(i, j)| conditions::batch_w1(&batches[i], &batches[j]).map(|w| w.value))
            .into_iter()
            .collect::<Result<_>>()?
    };
    Ok(ws.into_iter().fold(0.0, f64::max))
}

fn stability_tol(ev: &Evaluator<'_>) -> f64 {
    if ev.is_exact() {
        1e-6
    } else {
        1e-4
    }
}

/// Proposition 1: if `Δ_θ(θ') ≥ L·W₁(D(θ), D(θ'))` at every probe `θ'`, the
/// stable point `θ` is optimal. The claim is cross-checked against the oracle
/// minimum; `actual_value` is the oracle suboptimality of `θ`.
pub fn prop1_certificate(
    ev: &Evaluator<'_>,
    theta_stable: &Theta,
    lip: Option<f64>,
    truth: &GroundTruth,
    seed: &SeedSpec,
) -> Result<Certificate> {
    let l = need_lip(lip)?;
    let residual = solvers::fixed_point_residual(ev, theta_stable)?;
    if residual > stability_tol(ev) {
        return Err(Error::NotStable { residual, tol: stability_tol(ev) });
    }
    let probes = base_probes(&ev.instance().domain, seed);
    let rows: Vec<(Vec<f64>, f64, f64)> = par::map(&probes, |p| -> Result<_> {
        let tp = Theta(p.clone());
        let gap = ev.subopt_gap(theta_stable, &tp)?;
        let w = map_w1(ev, theta_stable, &tp)?;
        Ok((p.clone(), gap.value - l * w.value, ev.tolerance(gap.std_err)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let failing: Vec<Witness> = {
        let mut f: Vec<Witness> = rows
            .iter()
            .filter(|(_, r, tol)| *r < -tol)
            .map(|(p, r, _)| Witness { points: vec![theta_stable.0.clone(), p.clone()], residual: *r })
            .collect();
        f.sort_by(|a, b| a.residual.total_cmp(&b.residual));
        f.truncate(5);
        f
    };
    let premise_failures = rows.iter().filter(|(_, r, tol)| *r < -tol).count();
    let pr = ev.pr(theta_stable)?;
    let actual = pr.value - truth.pr_min;
    let tol = ev.tolerance(pr.std_err);
    let optimal = actual <= tol;
    let (status, holds, note) = if premise_failures > 0 {
        (
            CertificateStatus::PremiseFailed,
            false,
            format!("premise fails at {premise_failures} of {} probes; no optimality claim", rows.len()),
        )
    } else if optimal {
        (CertificateStatus::Holds, true, "premise holds at every probe; optimality agrees with the oracle".into())
    } else {
        (
            CertificateStatus::Fails,
            false,
            "premise holds at every probe but the oracle finds a better point: L is invalid".into(),
        )
    };
    let mut constants = BTreeMap::new();
    constants.insert(
        "lip_l".to_string(),
        Sourced::new(l, source_of(ev.instance().declared.lip_l)),
    );
    Ok(Certificate {
        name: CertificateName::Prop1Optimality,
        bound_value: 0.0,
        actual_value: actual,
        holds,
        status,
        tolerance: tol,
        constants,
        failing_probes: failing,
        note: Some(note),
    })
}

fn source_of(declared: Option<f64>) -> ConstantSource {
    if declared.is_some() {
        ConstantSource::Declared
    } else {
        ConstantSource::Analytic
    }
}

/// Constants the example bounds need, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub lip_l: Sourced,
    pub eps: Sourced,
    pub shift_bound_b: Sourced,
    /// Quadratic growth of `Δ_θ` at the stable point; `None` when it could not
    /// be certified.
    pub gamma_qg: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_qg_note: Option<String>,
}

pub fn bound_constants(
    ev: &Evaluator<'_>,
    resolved: &ResolvedConstants,
    theta_stable: &Theta,
    opts: &CheckOptions,
) -> Result<BoundConstants> {
    let declared = &ev.instance().declared;
    let shift_bound_b = match declared.shift_bound_b {
        Some(b) => Sourced::new(b, ConstantSource::Declared),
        None => Sourced::new(estimate_shift_bound(ev)?, ConstantSource::Estimated),
    };
    let qg = conditions::check_condition(ev, Condition::Qg, &Anchor::At(theta_stable.clone()), Target::Dpr, opts)?;
    let (gamma_qg, gamma_qg_note) = if qg.is_certified() {
        let v = declared.gamma_qg.unwrap_or(qg.best_constant);
        (Some(Sourced::new(v, qg.constant_source)), None)
    } else {
        (None, Some(format!("QG of Δ_θ is {:?}: {}", qg.verdict, qg.note.unwrap_or_default())))
    };
    Ok(BoundConstants {
        lip_l: resolved.lip_value,
        eps: resolved.eps,
        shift_bound_b,
        gamma_qg,
        gamma_qg_note,
    })
}

fn constants_map(entries: &[(&str, Sourced)]) -> BTreeMap<String, Sourced> {
    entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn distance_certificate(
    name: CertificateName,
    bound: Option<f64>,
    actual: f64,
    tol: f64,
    constants: BTreeMap<String, Sourced>,
    note: Option<String>,
) -> Certificate {
    match bound {
        Some(b) => {
            let holds = actual <= b + tol;
            Certificate {
                name,
                bound_value: b,
                actual_value: actual,
                holds,
                status: if holds { CertificateStatus::Holds } else { CertificateStatus::Fails },
                tolerance: tol,
                constants,
                failing_probes: Vec::new(),
                note,
            }
        }
        None => Certificate {
            name,
            bound_value: f64::NAN,
            actual_value: actual,
            holds: false,
            status: CertificateStatus::Inconclusive,
            tolerance: tol,
            constants,
            failing_probes: Vec::new(),
            note,
        },
    }
}

/// `PR(θ_PS) − PR* ≤ L·B`.
pub fn example1_bound(ev: &Evaluator<'_>, c: &BoundConstants, truth: &GroundTruth) -> Certificate {
    let actual = truth.pr_ps.value - truth.pr_min;
    distance_certificate(
        CertificateName::Ex1SuboptLb,
        Some(ex1_bound(c.lip_l.value, c.shift_bound_b.value)),
        actual,
        ev.tolerance(truth.pr_ps.std_err),
        constants_map(&[("lip_l", c.lip_l), ("shift_bound_b", c.shift_bound_b)]),
        None,
    )
}

/// `‖θ_PO − θ_PS‖ ≤ √(L·B/γ)`.
pub fn example2_bound(c: &BoundConstants, truth: &GroundTruth) -> Certificate {
    let mut constants = constants_map(&[("lip_l", c.lip_l), ("shift_bound_b", c.shift_bound_b)]);
    if let Some(g) = c.gamma_qg {
        constants.insert("gamma_qg".into(), g);
    }
    distance_certificate(
        CertificateName::Ex2DistSqrt,
        c.gamma_qg.map(|g| ex2_bound(c.lip_l.value, c.shift_bound_b.value, g.value)),
        truth.theta_po.distance(&truth.theta_ps),
        truth.po_tol,
        constants,
        c.gamma_qg_note.clone(),
    )
}

/// `‖θ_PO − θ_PS‖ ≤ L·ε/γ`.
pub fn example3_bound(c: &BoundConstants, truth: &GroundTruth) -> Certificate {
    let mut constants = constants_map(&[("lip_l", c.lip_l), ("eps", c.eps)]);
    if let Some(g) = c.gamma_qg {
        constants.insert("gamma_qg".into(), g);
    }
    distance_certificate(
        CertificateName::Ex3DistLin,
        c.gamma_qg.map(|g| ex3_bound(c.lip_l.value, c.eps.value, g.value)),
        truth.theta_po.distance(&truth.theta_ps),
        truth.po_tol,
        constants,
        c.gamma_qg_note.clone(),
    )
}

/// All four certificates at the stable point found by the fixed-point oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSuite {
    pub truth: GroundTruth,
    pub constants: BoundConstants,
    pub certificates: Vec<Certificate>,
}

pub fn certify_all(ev: &Evaluator<'_>, opts: &CheckOptions) -> Result<CertificateSuite> {
    let truth = ground_truth(ev, opts.grid_step_for(ev))?;
    if truth.ps_inconclusive {
        return Err(Error::NotStable { residual: truth.ps_residual, tol: stability_tol(ev) });
    }
    let resolved = conditions::resolve_constants(ev.instance(), &opts.seed)?;
    let constants = bound_constants(ev, &resolved, &truth.theta_ps, opts)?;
    let prop1 = prop1_certificate(ev, &truth.theta_ps, Some(resolved.lip_value.value), &truth, &opts.seed)?;
    let certificates = vec![
        prop1,
        example1_bound(ev, &constants, &truth),
        example2_bound(&constants, &truth),
        example3_bound(&constants, &truth),
    ];
    Ok(CertificateSuite { truth, constants, certificates })
}
