//! Empirical certification of the structural conditions.
//!
//! Each convexity-type condition is written as `a(p) − μ·b(p) ≥ −tol` over a
//! probe set, with `b ≥ 0`:
//!
//! | condition | `a`                                   | `b`           |
//! |-----------|---------------------------------------|---------------|
//! | SC        | `f(y) − f(x) − ⟨∇f(x), y − x⟩`        | `½‖y − x‖²`   |
//! | WSC       | `f* − f(x) − ⟨∇f(x), x_p − x⟩`        | `½‖x − x_p‖²` |
//! | RSI       | `⟨∇f(x), x − x_p⟩`                    | `‖x − x_p‖²`  |
//! | PL        | `½‖∇f(x)‖²`                           | `f(x) − f*`   |
//! | QG        | `f(x) − f*`                           | `‖x − x_p‖²`  |
//!
//! The largest constant satisfying every probe is `min_{b>0} (a + tol)/b`,
//! computed exactly. QG uses the unnormalized form, so a quadratic with
//! curvature `c` has QG constant `c/2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distmaps::SampleBatch;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::{dist, dot, norm, ConstantSource, Instance, ParamBox, SeedSpec, Sourced, Theta};
use crate::objective::{DprTarget, Objective, OptimalSet, PrTarget, ANALYTIC_TOL};
use crate::par;
use crate::risk::{Evaluator, EXACT_TOL};
use crate::solvers::{self, minimize_with_restarts};
use crate::transport::{self, W1Estimate};

/// Constant required when none is declared.
pub const CERTIFY_FLOOR: f64 = 1e-3;
/// Restart disagreement above which a minimizer is treated as non-unique.
pub const UNIQUENESS_TOL: f64 = 1e-4;
/// Batch size cap for multi-dimensional empirical `W₁` (exact assignment).
pub const W1_ASSIGNMENT_CAP: usize = 256;
const SHELL_LEVELS: i32 = 12;
const WITNESS_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    Smooth,
    Sc,
    Lipz,
    Sens,
    Mixdom,
    Wsc,
    Rsi,
    Pl,
    Qg,
    WeakCvxAtPo,
}

impl Condition {
    /// Strongest first.
    pub const CHAIN: [Condition; 5] = [
        Condition::Sc,
        Condition::Wsc,
        Condition::Rsi,
        Condition::Pl,
        Condition::Qg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Smooth => "SMOOTH",
            Condition::Sc => "SC",
            Condition::Lipz => "LIPZ",
            Condition::Sens => "SENS",
            Condition::Mixdom => "MIXDOM",
            Condition::Wsc => "WSC",
            Condition::Rsi => "RSI",
            Condition::Pl => "PL",
            Condition::Qg => "QG",
            Condition::WeakCvxAtPo => "WEAK_CVX_AT_PO",
        }
    }

    pub fn parse(s: &str) -> Result<Condition> {
        let all = [
            Condition::Smooth,
            Condition::Sc,
            Condition::Lipz,
            Condition::Sens,
            Condition::Mixdom,
            Condition::Wsc,
            Condition::Rsi,
            Condition::Pl,
            Condition::Qg,
            Condition::WeakCvxAtPo,
        ];
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        all.into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown condition `{s}`")))
    }

    fn is_chain(self) -> bool {
        Self::CHAIN.contains(&self)
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub points: Vec<Vec<f64>>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub description: String,
    pub count: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: Verdict,
    /// Largest certified constant, or for plain inequalities the smallest
    /// residual.
    pub best_constant: f64,
    /// Constant the verdict was decided against.
    pub required: f64,
    pub constant_source: ConstantSource,
    /// Sorted by residual, most negative first.
    pub witnesses: Vec<Witness>,
    pub probes: ProbeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConditionReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

/// One probe of a constant-type condition.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub points: Vec<Vec<f64>>,
    pub a: f64,
    pub b: f64,
    /// Slack allowed on `a − μ·b`.
    pub tol: f64,
}

fn sort_witnesses(mut w: Vec<Witness>) -> Vec<Witness> {
    w.sort_by(|x, y| x.residual.total_cmp(&y.residual));
    w.truncate(WITNESS_LIMIT);
    w
}

/// Decides `a − μ·b ≥ −tol` for all terms at `μ = declared` (or the floor).
pub(crate) fn certify_terms(
    condition: Condition,
    terms: &[Term],
    declared: Option<f64>,
    probes: ProbeSpec,
) -> ConditionReport {
    let required = declared.unwrap_or(CERTIFY_FLOOR);
    let constant_source = if declared.is_some() {
        ConstantSource::Declared
    } else {
        ConstantSource::Estimated
    };
    let residual = |t: &Term| t.a - required * t.b;
    let witness = |t: &Term| Witness {
        points: t.points.clone(),
        residual: residual(t),
    };
    let negative = terms.iter().any(|t| t.a < -t.tol);
    let best = if negative {
        0.0
    } else {
        terms
            .iter()
            .filter(|t| t.b > 0.0)
            .map(|t| (t.a + t.tol) / t.b)
            .fold(f64::INFINITY, f64::min)
    };
    if !best.is_finite() {
        return ConditionReport {
            condition,
            verdict: Verdict::Inconclusive,
            best_constant: 0.0,
            required,
            constant_source,
            witnesses: Vec::new(),
            probes,
            note: Some("no probe lies off the optimal set".into()),
        };
    }
    let certified = best >= required;
    let witnesses = if certified {
        let mut binding: Vec<&Term> = terms.iter().filter(|t| t.b > 0.0).collect();
        binding.sort_by(|x, y| ((x.a + x.tol) / x.b).total_cmp(&((y.a + y.tol) / y.b)));
        binding.into_iter().take(3).map(witness).collect()
    } else {
        sort_witnesses(terms.iter().filter(|t| residual(t) < -t.tol).map(witness).collect())
    };
    ConditionReport {
        condition,
        verdict: if certified { Verdict::Certified } else { Verdict::Violated },
        best_constant: best,
        required,
        constant_source,
        witnesses,
        probes,
        note: None,
    }
}

/// Probe points, residual and the tolerance it is judged against.
pub(crate) type ResidualProbe = (Vec<Vec<f64>>, f64, f64);

/// Decides `residual ≥ −tol` for every probe. `best_constant` holds the
/// smallest residual.
pub(crate) fn certify_residuals(
    condition: Condition,
    residuals: &[ResidualProbe],
    probes: ProbeSpec,
) -> ConditionReport {
    let min = residuals.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let violated: Vec<Witness> = residuals
        .iter()
        .filter(|(_, r, tol)| *r < -tol)
        .map(|(p, r, _)| Witness { points: p.clone(), residual: *r })
        .collect();
    let verdict = if residuals.is_empty() {
        Verdict::Inconclusive
    } else if violated.is_empty() {
        Verdict::Certified
    } else {
        Verdict::Violated
    };
    let witnesses = if violated.is_empty() {
        let mut all: Vec<Witness> = residuals
            .iter()
            .map(|(p, r, _)| Witness { points: p.clone(), residual: *r })
            .collect();
        all.sort_by(|x, y| x.residual.total_cmp(&y.residual));
        all.truncate(3);
        all
    } else {
        sort_witnesses(violated)
    };
    ConditionReport {
        condition,
        verdict,
        best_constant: if min.is_finite() { min } else { 0.0 },
        required: 0.0,
        constant_source: ConstantSource::Estimated,
        witnesses,
        probes,
        note: if residuals.is_empty() { Some("no probes".into()) } else { None },
    }
}

fn random_point(domain: &ParamBox, rng: &mut impl Rng) -> Vec<f64> {
    domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| if u > l { rng.random_range(*l..=*u) } else { *l })
        .collect()
}

/// The base probe set: 201 grid points in one dimension, otherwise 200 seeded
/// uniform points plus the corners.
pub fn base_probes(domain: &ParamBox, seed: &SeedSpec) -> Vec<Vec<f64>> {
    if domain.dim() == 1 {
        let (l, u) = (domain.lower[0], domain.upper[0]);
        return (0..=200).map(|i| vec![l + (u - l) * i as f64 / 200.0]).collect();
    }
    let mut rng = seed.rng();
    let mut pts: Vec<Vec<f64>> = (0..200).map(|_| random_point(domain, &mut rng)).collect();
    pts.extend(domain.corners().into_iter().map(|t| t.0));
    pts
}

/// Base probes plus axis shells `anchor ± diam·2^−k·e_i`, `k = 1..12`, around
/// each anchor, so behavior near the optimal set is resolved below the grid
/// spacing.
pub fn probe_points(domain: &ParamBox, anchors: &[Vec<f64>], seed: &SeedSpec) -> (Vec<Vec<f64>>, String) {
    let mut pts = base_probes(domain, seed);
    let base = pts.len();
    let diam = domain.diameter();
    for anchor in anchors {
        for k in 1..=SHELL_LEVELS {
            let r = diam * 2f64.powi(-k);
            for i in 0..domain.dim() {
                for s in [-1.0, 1.0] {
                    let mut p = anchor.clone();
                    p[i] += s * r;
                    pts.push(domain.clamp(&p));
                }
            }
        }
    }
    let description = if domain.dim() == 1 {
        format!("201-point grid + {} shell points", pts.len() - base)
    } else {
        format!("200 random + {} corners + {} shell points", base - 200, pts.len() - base)
    };
    (pts, description)
}

fn terms_for(
    condition: Condition,
    obj: &dyn Objective,
    set: &OptimalSet,
    points: &[Vec<f64>],
) -> Vec<Term> {
    let f_star = obj.value(&set.anchors()[0]);
    // Closed-form objectives only carry rounding error, which is relative to
    // the magnitudes entering a term. A fixed floor would hide violations of
    // size μ·b once b drops below it (x⁴ near its minimizer).
    let tol = obj.tolerance();
    let rounding_only = tol <= ANALYTIC_TOL;
    let term_tol = |scale: f64| if rounding_only { tol * scale.min(1.0) } else { tol };
    let evals: Vec<(f64, Vec<f64>)> = par::map(points, |x| (obj.value(x), obj.grad(x)));
    match condition {
        Condition::Sc => {
            let n = points.len();
            let rows: Vec<Vec<Term>> = par::map_range(n, |i| {
                let (fx, gx) = &evals[i];
                let x = &points[i];
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let y = &points[j];
                        let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                        let lin = dot(gx, &diff);
                        Term {
                            points: vec![x.clone(), y.clone()],
                            a: evals[j].0 - fx - lin,
                            b: 0.5 * dot(&diff, &diff),
                            tol: term_tol(evals[j].0.abs().max(fx.abs()).max(lin.abs())),
                        }
                    })
                    .collect()
            });
            rows.into_iter().flatten().collect()
        }
        _ => points
            .iter()
            .zip(&evals)
            .map(|(x, (fx, g))| {
                let xp = set.project(x);
                let r = dist(x, &xp);
                let toward: Vec<f64> = xp.iter().zip(x).map(|(a, b)| a - b).collect();
                let lin = dot(g, &toward);
                let (a, b) = match condition {
                    Condition::Wsc => (f_star - fx - lin, 0.5 * r * r),
                    Condition::Rsi => (-lin, r * r),
                    Condition::Pl => (0.5 * dot(g, g), (fx - f_star).max(0.0)),
                    Condition::Qg => (fx - f_star, r * r),
                    other => unreachable!("{other} is not a pointwise chain condition"),
                };
                let scale = fx.abs().max(f_star.abs()).max(lin.abs()).max(a.abs());
                Term { points: vec![x.clone()], a, b, tol: term_tol(scale) }
            })
            .collect(),
    }
}

/// Checks one chain condition of `obj` against its optimal set.
pub fn check_objective(
    obj: &dyn Objective,
    set: &OptimalSet,
    domain: &ParamBox,
    condition: Condition,
    declared: Option<f64>,
    seed: &SeedSpec,
) -> Result<ConditionReport> {
    if !condition.is_chain() {
        return Err(Error::Contract(format!("{condition} is not a chain condition")));
    }
    let (points, description) = probe_points(domain, &set.anchors(), seed);
    let tol = obj.tolerance();
    let terms = terms_for(condition, obj, set, &points);
    let count = if condition == Condition::Sc { terms.len() } else { points.len() };
    let probes = ProbeSpec {
        description: if condition == Condition::Sc {
            format!("ordered pairs over {description}")
        } else {
            description
        },
        count,
        tolerance: tol,
    };
    let mut report = certify_terms(condition, &terms, declared, probes);
    report.note = report.note.or_else(|| Some(format!("target {}", obj.describe())));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAudit {
    pub reports: Vec<ConditionReport>,
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn audit_monotone(reports: Vec<ConditionReport>) -> ChainAudit {
    // a certified condition forces every weaker one to be certified
    let mut bad = Vec::new();
    for (i, strong) in reports.iter().enumerate() {
        if strong.verdict != Verdict::Certified {
            continue;
        }
        for weak in &reports[i + 1..] {
            if weak.verdict != Verdict::Certified {
                bad.push(format!("{} certified but {} is {:?}", strong.condition, weak.condition, weak.verdict));
            }
        }
    }
    ChainAudit {
        monotone: bad.is_empty(),
        diagnostic: if bad.is_empty() {
            None
        } else {
            Some(format!("checker inconsistency (tolerance misconfiguration?): {}", bad.join("; ")))
        },
        reports,
    }
}

/// SC, WSC, RSI, PL and QG on one target with one probe set, at the floor
/// constant.
pub fn chain_audit_objective(
    obj: &dyn Objective,
    set: &OptimalSet,
    domain: &ParamBox,
    seed: &SeedSpec,
) -> Result<ChainAudit> {
    let reports = Condition::CHAIN
        .iter()
        .map(|&c| check_objective(obj, set, domain, c, None, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(audit_monotone(reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    AtPo,
    At(Theta),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `θ' ↦ DPR(anchor, θ')`.
    Dpr,
    /// `θ ↦ PR(θ)`; the anchor is ignored.
    Pr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Oracle grid step; defaults to `1e−3` in closed form and `diam/600`
    /// otherwise.
    pub grid_step: Option<f64>,
    pub restarts: usize,
    pub seed: SeedSpec,
}

impl CheckOptions {
    pub fn new(seed: SeedSpec) -> Self {
        CheckOptions { grid_step: None, restarts: 10, seed }
    }

    pub fn grid_step_for(&self, ev: &Evaluator<'_>) -> f64 {
        self.grid_step.unwrap_or_else(|| {
            if ev.is_exact() {
                1e-3
            } else {
                ev.instance().domain.diameter() / 600.0
            }
        })
    }
}

fn declared_for(inst: &Instance, condition: Condition) -> Option<f64> {
    let c = &inst.declared;
    match condition {
        Condition::Sc => c.gamma_sc,
        Condition::Wsc => c.mu_wsc,
        Condition::Rsi => c.mu_rsi,
        Condition::Qg => c.gamma_qg,
        _ => None,
    }
}

/// A target objective together with its optimal set.
pub struct Setup<'a> {
    pub objective: Box<dyn Objective + 'a>,
    pub set: OptimalSet,
    pub anchor: Theta,
    /// Set when restarts disagree about the minimizer.
    pub non_unique: Option<String>,
}

/// Builds the target for `anchor` and locates its minimizer with restarts.
pub fn setup_target<'a>(
    ev: &'a Evaluator<'a>,
    anchor: &Anchor,
    target: Target,
    opts: &CheckOptions,
) -> Result<Setup<'a>> {
    let domain = &ev.instance().domain;
    let po = || solvers::po_reference(ev, opts.grid_step_for(ev)).map(|o| o.theta_star);
    let anchor = match anchor {
        Anchor::AtPo => po()?,
        Anchor::At(t) => {
            ev.instance().check_theta(t)?;
            t.clone()
        }
    };
    match target {
        Target::Dpr => {
            let obj = DprTarget::new(ev, &anchor)?;
            let (best, spread) = minimize_with_restarts(&obj, domain, opts.restarts, &opts.seed.child(0xA11), 1e-10)?;
            let non_unique = (spread > UNIQUENESS_TOL).then(|| {
                format!("restarts disagree by {spread:.3e} > {UNIQUENESS_TOL:e}: minimizer is not unique")
            });
            Ok(Setup {
                objective: Box::new(obj),
                set: OptimalSet::Point(best.x),
                anchor,
                non_unique,
            })
        }
        Target::Pr => {
            let obj = PrTarget::new(ev)?;
            let theta_po = po()?;
            let mut non_unique = None;
            if ev.is_exact() {
                let (best, spread) = minimize_with_restarts(&obj, domain, opts.restarts, &opts.seed.child(0xA12), 1e-10)?;
                if spread > UNIQUENESS_TOL || dist(&best.x, &theta_po.0) > UNIQUENESS_TOL {
                    non_unique = Some(format!("restarts disagree by {spread:.3e}: minimizer is not unique"));
                }
            }
            Ok(Setup {
                objective: Box::new(obj),
                set: OptimalSet::Point(theta_po.0),
                anchor,
                non_unique,
            })
        }
    }
}

fn inconclusive(condition: Condition, reason: String) -> ConditionReport {
    ConditionReport {
        condition,
        verdict: Verdict::Inconclusive,
        best_constant: 0.0,
        required: CERTIFY_FLOOR,
        constant_source: ConstantSource::Estimated,
        witnesses: Vec::new(),
        probes: ProbeSpec { description: "none".into(), count: 0, tolerance: 0.0 },
        note: Some(reason),
    }
}

/// Checks a chain condition on a DPR or PR target of the instance. A declared
/// constant for the condition becomes the required value.
pub fn check_condition(
    ev: &Evaluator<'_>,
    condition: Condition,
    anchor: &Anchor,
    target: Target,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    let s = setup_target(ev, anchor, target, opts)?;
    if let Some(reason) = s.non_unique {
        return Ok(inconclusive(condition, reason));
    }
    let declared = declared_for(ev.instance(), condition);
    check_objective(s.objective.as_ref(), &s.set, &ev.instance().domain, condition, declared, &opts.seed)
}

/// The chain audit on a DPR or PR target.
pub fn chain_audit(
    ev: &Evaluator<'_>,
    anchor: &Anchor,
    target: Target,
    opts: &CheckOptions,
) -> Result<ChainAudit> {
    let s = setup_target(ev, anchor, target, opts)?;
    if let Some(reason) = s.non_unique {
        let reports = Condition::CHAIN.iter().map(|&c| inconclusive(c, reason.clone())).collect();
        return Ok(audit_monotone(reports));
    }
    chain_audit_objective(s.objective.as_ref(), &s.set, &ev.instance().domain, &opts.seed)
}

/// `W₁(D(θ₁), D(θ₂))`: exact for the Gaussian family in closed-form mode,
/// otherwise the empirical distance between the coupled batches (capped at
/// 256 rows above one dimension).
pub fn map_w1(ev: &Evaluator<'_>, theta1: &Theta, theta2: &Theta) -> Result<W1Estimate> {
    if ev.is_exact() {
        return transport::w1_gaussian(&ev.instance().map, theta1, theta2);
    }
    batch_w1(&ev.batch(theta1), &ev.batch(theta2))
}

/// Empirical `W₁` between two batches. Above one dimension, batches that are
/// exact translates are measured directly and others are truncated to the
/// first 256 rows.
pub(crate) fn batch_w1(a: &SampleBatch, b: &SampleBatch) -> Result<W1Estimate> {
    if a.data_dim == 1 {
        return transport::w1(a, b);
    }
    if let Some(v) = transport::translation_offset(a, b) {
        return Ok(W1Estimate { value: norm(&v), method: transport::W1Method::Translation, n: a.len() });
    }
    let cap = |s: &SampleBatch| {
        let rows = s.len().min(W1_ASSIGNMENT_CAP);
        SampleBatch::from_points(s.points[..rows * s.data_dim].to_vec(), s.data_dim)
    };
    transport::w1(&cap(a)?, &cap(b)?)
}

/// Constants with provenance, plus the data region they were taken over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub beta: Sourced,
    pub gamma_sc: Sourced,
    /// `sup ‖∇_z ℓ‖` over the region; the constant used with `W₁`.
    pub lip_value: Sourced,
    /// Lipschitz constant of `∇_z ℓ` in `z`.
    pub lip_grad: Sourced,
    pub eps: Sourced,
    pub data_region: ParamBox,
}

/// Declared constants win; otherwise analytic values for the squared loss on
/// the Gaussian 99.9% region, estimates for the logistic loss on an empirical
/// region. The map's sensitivity is exact for both families.
pub fn resolve_constants(inst: &Instance, seed: &SeedSpec) -> Result<ResolvedConstants> {
    let domain = &inst.domain;
    let (lc, source, region) = match inst.loss.kind {
        LossKind::SquaredRidge => {
            let region = inst.map.quantile_region_exact(domain)?;
            (inst.loss.analytic_constants(domain, &region)?, ConstantSource::Analytic, region)
        }
        LossKind::LogisticRidge => {
            let region = inst.map.quantile_region(domain, 20_000, &seed.child(0xC0));
            (
                inst.loss.estimate_constants(domain, &region, 4000, &seed.child(0xC1)),
                ConstantSource::Estimated,
                region,
            )
        }
    };
    let pick = |declared: Option<f64>, value: f64, src: ConstantSource| match declared {
        Some(v) => Sourced::new(v, ConstantSource::Declared),
        None => Sourced::new(value, src),
    };
    let d = &inst.declared;
    Ok(ResolvedConstants {
        beta: pick(d.beta, lc.beta, source),
        gamma_sc: pick(d.gamma_sc, lc.gamma_sc, source),
        lip_value: pick(d.lip_l, lc.lip_value, source),
        lip_grad: Sourced::new(lc.lip_grad, source),
        eps: pick(d.eps, inst.map.exact_sensitivity(), ConstantSource::Analytic),
        data_region: region,
    })
}

/// SMOOTH, SC (of the loss) or LIPZ: a declared constant must dominate the
/// value computed over the data region (SC: be dominated by it).
pub fn check_loss_condition(inst: &Instance, condition: Condition, seed: &SeedSpec) -> Result<ConditionReport> {
    let mut undeclared = inst.clone();
    undeclared.declared = Default::default();
    let rc = resolve_constants(&undeclared, seed)?;
    let (computed, declared, upper) = match condition {
        Condition::Smooth => (rc.beta, inst.declared.beta, true),
        Condition::Lipz => (rc.lip_value, inst.declared.lip_l, true),
        Condition::Sc => (rc.gamma_sc, inst.declared.gamma_sc, false),
        other => return Err(Error::Contract(format!("{other} is not a loss condition"))),
    };
    let tol = if computed.source == ConstantSource::Analytic { EXACT_TOL } else { 1e-6 * computed.value.max(1.0) };
    let (verdict, witnesses, required, source) = match declared {
        None => (Verdict::Certified, Vec::new(), computed.value, computed.source),
        Some(v) => {
            let residual = if upper { v - computed.value } else { computed.value - v };
            let ok = residual >= -tol;
            let w = if ok { Vec::new() } else { vec![Witness { points: Vec::new(), residual }] };
            (if ok { Verdict::Certified } else { Verdict::Violated }, w, v, ConstantSource::Declared)
        }
    };
    let region = &rc.data_region;
    Ok(ConditionReport {
        condition,
        verdict,
        best_constant: computed.value,
        required,
        constant_source: source,
        witnesses,
        probes: ProbeSpec {
            description: format!(
                "{:?} over Θ × data region [{:?}, {:?}]",
                computed.source, region.lower, region.upper
            ),
            count: 0,
            tolerance: tol,
        },
        note: (condition == Condition::Lipz).then(|| {
            format!("value-Lipschitz L = {:.6}; gradient-Lipschitz L = {:.6}", rc.lip_value.value, rc.lip_grad.value)
        }),
    })
}

/// Estimates `ε̂ = max W₁(D(θ), D(θ'))/‖θ − θ'‖` over seeded pairs. Both
/// batches share base noise, so for translation families the empirical
/// distance is the exact translation length.
pub fn check_sensitivity(inst: &Instance, n_pairs: usize, n_samples: usize, seed: &SeedSpec) -> Result<ConditionReport> {
    let ev = Evaluator::monte_carlo(inst, n_samples, seed.child(0x5E))?;
    let mut rng = seed.rng();
    let pairs: Vec<(Theta, Theta)> = (0..n_pairs)
        .map(|_| {
            (
                Theta(random_point(&inst.domain, &mut rng)),
                Theta(random_point(&inst.domain, &mut rng)),
            )
        })
        .filter(|(a, b)| a.distance(b) > 1e-9)
        .collect();
    let measured: Vec<(f64, f64, &'static str)> = par::map(&pairs, |(a, b)| {
        map_w1(&ev, a, b).map(|w| {
            let method = match w.method {
                transport::W1Method::Quantile1d => "quantile_1d",
                transport::W1Method::Assignment => "assignment",
                transport::W1Method::GaussianClosedForm => "gaussian_closed_form",
                transport::W1Method::Translation => "translation",
            };
            (w.value, a.distance(b), method)
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let best = measured.iter().map(|(w, d, _)| w / d).fold(0.0, f64::max);
    let tol = EXACT_TOL;
    let declared = inst.declared.eps;
    let required = declared.unwrap_or(best);
    let residuals: Vec<(Vec<Vec<f64>>, f64)> = pairs
        .iter()
        .zip(&measured)
        .map(|((a, b), (w, d, _))| (vec![a.0.clone(), b.0.clone()], required * d - w))
        .collect();
    let violated: Vec<Witness> = residuals
        .iter()
        .filter(|(_, r)| *r < -tol)
        .map(|(p, r)| Witness { points: p.clone(), residual: *r })
        .collect();
    let verdict = if pairs.is_empty() {
        Verdict::Inconclusive
    } else if violated.is_empty() {
        Verdict::Certified
    } else {
        Verdict::Violated
    };
    let witnesses = if violated.is_empty() {
        let mut all: Vec<Witness> = residuals.iter().map(|(p, r)| Witness { points: p.clone(), residual: *r }).collect();
        all.sort_by(|x, y| x.residual.total_cmp(&y.residual));
        all.truncate(1);
        all
    } else {
        sort_witnesses(violated)
    };
    let method = measured.first().map(|m| m.2).unwrap_or("none");
    Ok(ConditionReport {
        condition: Condition::Sens,
        verdict,
        best_constant: best,
        required,
        constant_source: if declared.is_some() { ConstantSource::Declared } else { ConstantSource::Estimated },
        witnesses,
        probes: ProbeSpec {
            description: format!("{} θ-pairs, coupled batches of n = {n_samples}, W1 by {method}", pairs.len()),
            count: pairs.len(),
            tolerance: tol,
        },
        note: None,
    })
}

/// Both forms of mixture dominance at one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixdomReport {
    /// `DPR(λa + (1−λ)b, θ) ≤ λ·DPR(a, θ) + (1−λ)·DPR(b, θ)`.
    pub segment: ConditionReport,
    /// `DPR(θ', θ) ≥ PR(θ) + ⟨E[ℓ·score], θ' − θ⟩`; absent without a density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_order: Option<ConditionReport>,
}

impl MixdomReport {
    pub fn verdict(&self) -> Verdict {
        let parts = std::iter::once(&self.segment).chain(self.first_order.iter());
        let mut out = Verdict::Certified;
        for r in parts {
            match r.verdict {
                Verdict::Violated => return Verdict::Violated,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Certified => {}
            }
        }
        out
    }
}

pub fn check_mixture_dominance(
    ev: &Evaluator<'_>,
    anchor: &Theta,
    n_segments: usize,
    seed: &SeedSpec,
) -> Result<MixdomReport> {
    let inst = ev.instance();
    inst.check_theta(anchor)?;
    let mut rng = seed.rng();
    let segments: Vec<(Vec<f64>, Vec<f64>)> = (0..n_segments)
        .map(|_| (random_point(&inst.domain, &mut rng), random_point(&inst.domain, &mut rng)))
        .collect();
    let lambdas = [0.25, 0.5, 0.75];
    let rows: Vec<Vec<ResidualProbe>> = par::map(&segments, |(a, b)| -> Result<_> {
        let da = ev.dpr(&Theta(a.clone()), anchor)?;
        let db = ev.dpr(&Theta(b.clone()), anchor)?;
        lambdas
            .iter()
            .map(|&l| {
                let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| l * x + (1.0 - l) * y).collect();
                let dm = ev.dpr(&Theta(mid.clone()), anchor)?;
                let residual = l * da.value + (1.0 - l) * db.value - dm.value;
                let tol = ev.tolerance(da.std_err.max(db.std_err).max(dm.std_err));
                Ok((vec![a.clone(), b.clone(), mid], residual, tol))
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    let tol_max = flat.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut segment = certify_residuals(
        Condition::Mixdom,
        &flat,
        ProbeSpec {
            description: format!("{n_segments} random segments × λ ∈ {{0.25, 0.5, 0.75}}"),
            count: flat.len(),
            tolerance: tol_max,
        },
    );
    segment.note = Some(format!("segment form at anchor {:?}", anchor.0));

    let first_order = if inst.map.has_density() {
        let g2 = ev.performative_gradient(anchor)?;
        let pr = ev.pr(anchor)?;
        let probes = base_probes(&inst.domain, &seed.child(1));
        let rows: Vec<ResidualProbe> = par::map(&probes, |p| -> Result<_> {
            let tp = Theta(p.clone());
            let d = ev.dpr(&tp, anchor)?;
            let diff: Vec<f64> = p.iter().zip(&anchor.0).map(|(x, y)| x - y).collect();
            let residual = d.value - pr.value - dot(&g2.grad2, &diff);
            let se = d.std_err + pr.std_err + norm(&g2.grad2_se) * norm(&diff);
            Ok((vec![p.clone()], residual, ev.tolerance(se)))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let tol_max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let mut rep = certify_residuals(
            Condition::Mixdom,
            &rows,
            ProbeSpec {
                description: format!("{} probes θ'", rows.len()),
                count: rows.len(),
                tolerance: tol_max,
            },
        );
        rep.note = Some(format!("first-order form at anchor {:?}", anchor.0));
        Some(rep)
    } else {
        segment.note = Some(format!(
            "segment form at anchor {:?}; segment-convexity only: the map has no density",
            anchor.0
        ));
        None
    };
    Ok(MixdomReport { segment, first_order })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremStatus {
    Certified,
    Violated,
    /// The constants do not meet the theorem's threshold; the conclusion is
    /// still probed and reported.
    ThresholdNotMet,
    /// `μ' < 0`: the theorem says nothing at these constants.
    Vacuous,
    PremiseNotMet,
    Inconclusive,
}

impl TheoremStatus {
    pub fn verdict(self) -> Verdict {
        match self {
            TheoremStatus::Certified => Verdict::Certified,
            TheoremStatus::Violated => Verdict::Violated,
            _ => Verdict::Inconclusive,
        }
    }
}

/// The shared premise: the performative optimum is also stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Premise {
    pub theta_po: Theta,
    pub theta_ps: Theta,
    pub distance: f64,
    pub tolerance: f64,
    pub met: bool,
}

pub fn check_premise(ev: &Evaluator<'_>, opts: &CheckOptions) -> Result<Premise> {
    let h = opts.grid_step_for(ev);
    let po = solvers::po_reference(ev, h)?;
    let fp_tol = if ev.is_exact() { 1e-10 } else { 1e-7 };
    let ps = solvers::fixed_point_oracle_ps(ev, fp_tol)?;
    let tolerance = if ev.is_exact() { 1e-4 } else { 2e-2 + h };
    let distance = po.theta_star.distance(&ps.theta_star);
    Ok(Premise {
        met: distance <= tolerance && !ps.inconclusive,
        theta_po: po.theta_star,
        theta_ps: ps.theta_star,
        distance,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub premise: Premise,
    pub status: TheoremStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Sourced>,
    /// `μ/(2β)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_holds: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_report: Option<ConditionReport>,
    /// `PR(θ_PO) ≥ PR(θ) + ⟨∇PR(θ), θ_PO − θ⟩` at every probe: star-shaped
    /// first-order convexity toward the optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<ConditionReport>,
}

fn premise_report(premise: Premise) -> Theorem1Report {
    Theorem1Report {
        premise,
        status: TheoremStatus::PremiseNotMet,
        mu: None,
        beta: None,
        eps: None,
        ratio: None,
        threshold_holds: None,
        mu_report: None,
        conclusion: None,
    }
}

/// Theorem 1: WSC of `DPR(θ_PO, ·)` with `μ/(2β) ≥ ε` makes PR satisfy the
/// first-order inequality toward `θ_PO`.
pub fn validate_theorem1(ev: &Evaluator<'_>, opts: &CheckOptions) -> Result<Theorem1Report> {
    let inst = ev.instance();
    let premise = check_premise(ev, opts)?;
    if !premise.met {
        return Ok(premise_report(premise));
    }
    let theta_po = premise.theta_po.clone();
    let rc = resolve_constants(inst, &opts.seed)?;
    let mu_report = check_condition(ev, Condition::Wsc, &Anchor::At(theta_po.clone()), Target::Dpr, opts)?;
    let mu = match inst.declared.mu_wsc {
        Some(v) => Sourced::new(v, ConstantSource::Declared),
        None => Sourced::new(mu_report.best_constant, ConstantSource::Estimated),
    };
    let ratio = mu.value / (2.0 * rc.beta.value);
    let threshold_holds = ratio >= rc.eps.value;

    let pr_po = ev.pr(&theta_po)?;
    let probes = base_probes(&inst.domain, &opts.seed.child(0x71));
    let rows: Vec<ResidualProbe> = par::map(&probes, |p| -> Result<_> {
        let t = Theta(p.clone());
        let pr = ev.pr(&t)?;
        let g = ev.performative_gradient(&t)?;
        let toward: Vec<f64> = theta_po.0.iter().zip(p).map(|(a, b)| a - b).collect();
        let residual = pr_po.value - pr.value - dot(&g.total, &toward);
        let se = pr_po.std_err + pr.std_err + g.max_se() * norm(&toward);
        Ok((vec![p.clone()], residual, ev.tolerance(se)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let tol_max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut conclusion = certify_residuals(
        Condition::WeakCvxAtPo,
        &rows,
        ProbeSpec {
            description: format!("{} probes θ", rows.len()),
            count: rows.len(),
            tolerance: tol_max,
        },
    );
    conclusion.note = Some("star-shaped first-order inequality toward θ_PO".into());
    let status = match (mu_report.verdict, conclusion.verdict, threshold_holds) {
        (_, Verdict::Violated, _) => TheoremStatus::Violated,
        (Verdict::Inconclusive, _, _) | (_, Verdict::Inconclusive, _) => TheoremStatus::Inconclusive,
        (_, Verdict::Certified, true) => TheoremStatus::Certified,
        (_, Verdict::Certified, false) => TheoremStatus::ThresholdNotMet,
    };
    Ok(Theorem1Report {
        premise,
        status,
        mu: Some(mu),
        beta: Some(rc.beta),
        eps: Some(rc.eps),
        ratio: Some(ratio),
        threshold_holds: Some(threshold_holds),
        mu_report: Some(mu_report),
        conclusion: Some(conclusion),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub premise: Premise,
    pub status: TheoremStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_l: Option<Sourced>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Sourced>,
    /// `μ' = μ − (β + L)ε`, the constant for probes with `‖θ − θ_PO‖ ≥ 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_prime_far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_report: Option<ConditionReport>,
    /// RSI of PR at `μ'` over far probes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far: Option<ConditionReport>,
    /// RSI of PR at `μ'(θ) = μ‖θ − θ_PO‖ − (β + L)ε` over near probes where
    /// that constant is nonnegative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<ConditionReport>,
    /// Near probes outside the theorem's scope (`μ'(θ) < 0`).
    pub near_skipped: usize,
}

/// Theorem 2: RSI of `DPR(θ_PO, ·)` transfers to PR with `μ' = μ − (β + L)ε`
/// far from the optimum and `μ‖θ − θ_PO‖ − (β + L)ε` near it.
pub fn validate_theorem2(ev: &Evaluator<'_>, opts: &CheckOptions) -> Result<Theorem2Report> {
    let inst = ev.instance();
    let premise = check_premise(ev, opts)?;
    let mut report = Theorem2Report {
        premise,
        status: TheoremStatus::PremiseNotMet,
        mu: None,
        beta: None,
        lip_l: None,
        eps: None,
        mu_prime_far: None,
        mu_report: None,
        far: None,
        near: None,
        near_skipped: 0,
    };
    if !report.premise.met {
        return Ok(report);
    }
    let theta_po = report.premise.theta_po.clone();
    let rc = resolve_constants(inst, &opts.seed)?;
    let mu_report = check_condition(ev, Condition::Rsi, &Anchor::At(theta_po.clone()), Target::Dpr, opts)?;
    let mu = match inst.declared.mu_rsi {
        Some(v) => Sourced::new(v, ConstantSource::Declared),
        None => Sourced::new(mu_report.best_constant, ConstantSource::Estimated),
    };
    let shift = (rc.beta.value + rc.lip_value.value) * rc.eps.value;
    let mu_far = mu.value - shift;
    report.mu = Some(mu);
    report.beta = Some(rc.beta);
    report.lip_l = Some(rc.lip_value);
    report.eps = Some(rc.eps);
    report.mu_prime_far = Some(mu_far);
    let mu_verdict = mu_report.verdict;
    report.mu_report = Some(mu_report);
    if mu_verdict == Verdict::Inconclusive {
        report.status = TheoremStatus::Inconclusive;
        return Ok(report);
    }
    if mu_far < 0.0 {
        report.status = TheoremStatus::Vacuous;
        return Ok(report);
    }

    let probes = base_probes(&inst.domain, &opts.seed.child(0x72));
    struct Probe {
        p: Vec<f64>,
        r: f64,
        a: f64,
        tol: f64,
    }
    let evaluated: Vec<Probe> = par::map(&probes, |p| -> Result<Probe> {
        let t = Theta(p.clone());
        let g = ev.performative_gradient(&t)?;
        let away: Vec<f64> = p.iter().zip(&theta_po.0).map(|(a, b)| a - b).collect();
        let r = norm(&away);
        Ok(Probe {
            p: p.clone(),
            r,
            a: dot(&g.total, &away),
            tol: ev.tolerance(g.max_se() * r),
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let far: Vec<&Probe> = evaluated.iter().filter(|q| q.r >= 1.0).collect();
    let tol_far = far.iter().map(|q| q.tol).fold(EXACT_TOL, f64::max);
    let terms: Vec<Term> = far
        .iter()
        .map(|q| Term { points: vec![q.p.clone()], a: q.a, b: q.r * q.r, tol: tol_far })
        .collect();
    let far_report = if terms.is_empty() {
        inconclusive(Condition::Rsi, "no probe at distance ≥ 1 from θ_PO".into())
    } else {
        let mut rep = certify_terms(
            Condition::Rsi,
            &terms,
            Some(mu_far),
            ProbeSpec {
                description: format!("{} probes with ‖θ − θ_PO‖ ≥ 1", terms.len()),
                count: terms.len(),
                tolerance: tol_far,
            },
        );
        rep.constant_source = ConstantSource::Estimated;
        rep.note = Some("RSI of PR, far branch".into());
        rep
    };

    let mut skipped = 0;
    let near_rows: Vec<ResidualProbe> = evaluated
        .iter()
        .filter(|q| q.r < 1.0 && q.r > 0.0)
        .filter_map(|q| {
            let mu_near = mu.value * q.r - shift;
            if mu_near < 0.0 {
                skipped += 1;
                None
            } else {
                Some((vec![q.p.clone()], q.a - mu_near * q.r * q.r, q.tol))
            }
        })
        .collect();
    let near_report = if near_rows.is_empty() {
        None
    } else {
        let tol = near_rows.iter().map(|r| r.2).fold(0.0, f64::max);
        let mut rep = certify_residuals(
            Condition::Rsi,
            &near_rows,
            ProbeSpec {
                description: format!("{} probes with ‖θ − θ_PO‖ < 1 and μ'(θ) ≥ 0", near_rows.len()),
                count: near_rows.len(),
                tolerance: tol,
            },
        );
        rep.note = Some("RSI of PR, near branch with μ'(θ) = μ‖θ − θ_PO‖ − (β + L)ε".into());
        Some(rep)
    };
    report.near_skipped = skipped;
    let verdicts: Vec<Verdict> = std::iter::once(far_report.verdict)
        .chain(near_report.iter().map(|r| r.verdict))
        .collect();
    report.status = if verdicts.contains(&Verdict::Violated) {
        TheoremStatus::Violated
    } else if verdicts.contains(&Verdict::Inconclusive) {
        TheoremStatus::Inconclusive
    } else {
        TheoremStatus::Certified
    };
    report.far = Some(far_report);
    report.near = near_report;
    Ok(report)
}

/// Distribution of `W₁(D(θ), D(θ'))/‖∇_{θ'} DPR(θ, θ')‖²` over probes. Purely
/// descriptive: nothing is asserted about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioProbe {
    pub anchor: Theta,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn shift_gradient_ratio(ev: &Evaluator<'_>, anchor: &Theta, seed: &SeedSpec) -> Result<RatioProbe> {
    let probes = base_probes(&ev.instance().domain, seed);
    let ratios: Vec<Option<f64>> = par::map(&probes, |p| -> Result<Option<f64>> {
        let t = Theta(p.clone());
        let (g, _) = ev.dpr_grad(anchor, &t)?;
        let gn = dot(&g, &g);
        if gn <= 1e-12 {
            return Ok(None);
        }
        Ok(Some(map_w1(ev, anchor, &t)?.value / gn))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut r: Vec<f64> = ratios.into_iter().flatten().collect();
    r.sort_by(f64::total_cmp);
    let pick = |i: usize| r.get(i).copied().unwrap_or(0.0);
    Ok(RatioProbe {
        anchor: anchor.clone(),
        count: r.len(),
        min: pick(0),
        median: pick(r.len() / 2),
        max: if r.is_empty() { 0.0 } else { r[r.len() - 1] },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{FlatBottom, Quadratic, Quartic};
    use crate::presets::{canonical, gauss_mean_1d, strategic_2d};

    fn seed() -> SeedSpec {
        SeedSpec::new(17)
    }

    fn dom(l: f64, u: f64) -> ParamBox {
        ParamBox::cube(1, l, u)
    }

    #[test]
    fn quadratic_constants_match_curvature() {
        for c in [0.5, 1.0, 3.0] {
            let q = Quadratic { curvature: c, center: vec![0.3] };
            let set = q.optimal_set();
            let d = dom(-2.0, 2.0);
            for (cond, want) in [
                (Condition::Sc, c),
                (Condition::Wsc, c),
                (Condition::Rsi, c),
                (Condition::Pl, c),
                (Condition::Qg, c / 2.0),
            ] {
                let r = check_objective(&q, &set, &d, cond, None, &seed()).unwrap();
                assert!(r.is_certified(), "{cond} c={c}");
                assert!((r.best_constant - want).abs() <= 0.05 * want, "{cond} c={c}: {}", r.best_constant);
            }
        }
    }

    #[test]
    fn quadratic_2d_constants() {
        let q = Quadratic { curvature: 2.0, center: vec![0.5, -0.5] };
        let d = ParamBox::cube(2, -2.0, 2.0);
        let r = check_objective(&q, &q.optimal_set(), &d, Condition::Rsi, None, &seed()).unwrap();
        assert!((r.best_constant - 2.0).abs() < 0.1);
    }

    #[test]
    fn declared_constant_above_truth_is_violated() {
        let q = Quadratic { curvature: 1.0, center: vec![0.0] };
        let r = check_objective(&q, &q.optimal_set(), &dom(-1.0, 1.0), Condition::Rsi, Some(1.5), &seed()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(!r.witnesses.is_empty());
        assert!(r.witnesses.iter().all(|w| w.residual < 0.0));
        assert!(r.witnesses.windows(2).all(|w| w[0].residual <= w[1].residual));
    }

    #[test]
    fn quartic_violates_everything() {
        // wide boxes push the PL residual near the minimizer down to ~1e-12
        for (dim, half) in [(1, 1.0), (1, 3.0), (2, 2.0)] {
            let q = Quartic { dim };
            let d = ParamBox::cube(dim, -half, half);
            let audit = chain_audit_objective(&q, &q.optimal_set(), &d, &seed()).unwrap();
            assert!(audit.monotone, "{:?}", audit.diagnostic);
            for r in &audit.reports {
                assert_eq!(r.verdict, Verdict::Violated, "{} d={dim} half={half}", r.condition);
            }
        }
    }

    #[test]
    fn flat_bottom_only_sc_fails() {
        let f = FlatBottom { dim: 1, half_width: 1.0 };
        let audit = chain_audit_objective(&f, &f.optimal_set(), &dom(-3.0, 3.0), &seed()).unwrap();
        assert!(audit.monotone);
        let v: Vec<Verdict> = audit.reports.iter().map(|r| r.verdict).collect();
        assert_eq!(v[0], Verdict::Violated);
        assert!(v[1..].iter().all(|v| *v == Verdict::Certified), "{v:?}");
        // WSC, RSI and PL give 2, QG gives 1 (per its normalization)
        let c: Vec<f64> = audit.reports.iter().map(|r| r.best_constant).collect();
        assert!((c[2] - 2.0).abs() < 0.05 && (c[4] - 1.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn monotonicity_flag_detects_inconsistency() {
        let mk = |c, v| ConditionReport {
            condition: c,
            verdict: v,
            best_constant: 0.0,
            required: 0.0,
            constant_source: ConstantSource::Estimated,
            witnesses: vec![],
            probes: ProbeSpec { description: String::new(), count: 0, tolerance: 0.0 },
            note: None,
        };
        let a = audit_monotone(vec![mk(Condition::Sc, Verdict::Certified), mk(Condition::Wsc, Verdict::Violated)]);
        assert!(!a.monotone);
        assert!(a.diagnostic.is_some());
    }

    #[test]
    fn canonical_dpr_chain() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let opts = CheckOptions::new(seed());
        let audit = chain_audit(&ev, &Anchor::AtPo, Target::Dpr, &opts).unwrap();
        assert!(audit.monotone);
        assert!(audit.reports.iter().all(|r| r.is_certified()));
        let sc = &audit.reports[0];
        assert!((sc.best_constant - 3.0).abs() < 0.15);
        let pl = check_condition(&ev, Condition::Pl, &Anchor::AtPo, Target::Dpr, &opts).unwrap();
        assert!((pl.best_constant - 3.0).abs() < 0.15);
    }

    #[test]
    fn canonical_dpr_chain_monte_carlo() {
        let inst = canonical();
        let ev = Evaluator::monte_carlo(&inst, 20_000, seed()).unwrap();
        let opts = CheckOptions::new(seed());
        let sc = check_condition(&ev, Condition::Sc, &Anchor::At(Theta::scalar(2.0 / 3.0)), Target::Dpr, &opts).unwrap();
        assert!(sc.is_certified());
        assert!((sc.best_constant - 3.0).abs() < 0.15, "{}", sc.best_constant);
    }

    #[test]
    fn sensitivity_examples() {
        let inst = canonical();
        let r = check_sensitivity(&inst, 50, 2000, &seed()).unwrap();
        assert!((r.best_constant - 0.5).abs() <= 0.05, "{}", r.best_constant);
        assert!(r.is_certified());

        let mut declared = canonical();
        declared.declared.eps = Some(0.1);
        let r = check_sensitivity(&declared, 50, 2000, &seed()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(!r.witnesses.is_empty());

        let mut flat = gauss_mean_1d(1.0, 0.0, 1.0);
        flat.declared.eps = Some(0.0);
        let r = check_sensitivity(&flat, 20, 500, &seed()).unwrap();
        assert!(r.is_certified());
        assert!(r.best_constant <= 1e-12);
    }

    #[test]
    fn sensitivity_strategic_is_inverse_cost() {
        let inst = strategic_2d(2.0);
        let r = check_sensitivity(&inst, 10, 200, &seed()).unwrap();
        assert!((r.best_constant - 0.5).abs() < 1e-6, "{}", r.best_constant);
    }

    #[test]
    fn mixture_dominance_location_family() {
        let inst = canonical();
        for ev in [
            Evaluator::closed_form(&inst).unwrap(),
            Evaluator::monte_carlo(&inst, 10_000, seed()).unwrap(),
        ] {
            let r = check_mixture_dominance(&ev, &Theta::scalar(0.5), 30, &seed()).unwrap();
            assert_eq!(r.verdict(), Verdict::Certified, "{r:?}");
            assert!(r.first_order.is_some());
        }
        let strat = strategic_2d(2.0);
        let ev = Evaluator::monte_carlo(&strat, 2000, seed()).unwrap();
        let r = check_mixture_dominance(&ev, &Theta(vec![0.2, 0.1]), 10, &seed()).unwrap();
        assert!(r.first_order.is_none());
        assert!(r.segment.note.as_deref().unwrap().contains("segment-convexity only"));
    }

    #[test]
    fn loss_conditions() {
        let inst = canonical();
        let r = check_loss_condition(&inst, Condition::Smooth, &seed()).unwrap();
        assert_eq!(r.best_constant, 2.0);
        let mut bad = canonical();
        bad.declared.lip_l = Some(1.0);
        let r = check_loss_condition(&bad, Condition::Lipz, &seed()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
    }

    #[test]
    fn theorem1_examples() {
        let inst = gauss_mean_1d(1.0, 0.25, 0.0);
        let ev = Evaluator::closed_form(&inst).unwrap();
        let r = validate_theorem1(&ev, &CheckOptions::new(seed())).unwrap();
        assert_eq!(r.status, TheoremStatus::Certified, "{r:?}");
        assert!((r.ratio.unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(r.conclusion.as_ref().unwrap().probes.count, 201);

        let canon = canonical();
        let ev = Evaluator::closed_form(&canon).unwrap();
        let r = validate_theorem1(&ev, &CheckOptions::new(seed())).unwrap();
        assert_eq!(r.status, TheoremStatus::PremiseNotMet);
        assert!(r.conclusion.is_none());
    }

    #[test]
    fn theorem2_examples() {
        for a in [0.05, 0.1] {
            let inst = gauss_mean_1d(1.0, a, 0.0);
            let ev = Evaluator::closed_form(&inst).unwrap();
            let r = validate_theorem2(&ev, &CheckOptions::new(seed())).unwrap();
            let mu_far = r.mu_prime_far.unwrap();
            let want = r.mu.unwrap().value - (r.beta.unwrap().value + r.lip_l.unwrap().value) * a;
            assert!((mu_far - want).abs() < 1e-12);
            assert!(mu_far > 0.0);
            assert_eq!(r.status, TheoremStatus::Certified, "{r:?}");
        }
        let inst = gauss_mean_1d(1.0, 0.5, 0.0);
        let ev = Evaluator::closed_form(&inst).unwrap();
        let r = validate_theorem2(&ev, &CheckOptions::new(seed())).unwrap();
        assert_eq!(r.status, TheoremStatus::Vacuous);
        assert!(r.far.is_none());
    }

    #[test]
    fn ratio_probe_runs() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let r = shift_gradient_ratio(&ev, &Theta::scalar(1.0), &seed()).unwrap();
        assert!(r.count > 0 && r.min <= r.median && r.median <= r.max);
    }

    #[test]
    fn parse_names() {
        assert_eq!(Condition::parse("weak-cvx-at-po").unwrap(), Condition::WeakCvxAtPo);
        assert_eq!(Condition::parse("rsi").unwrap(), Condition::Rsi);
        assert!(Condition::parse("esc").is_err());
    }
}
