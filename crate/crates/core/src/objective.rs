//! Differentiable scalar targets over the parameter box, and the optimal sets
//! conditions are measured against.

use serde::{Deserialize, Serialize};

use crate::distmaps::SampleBatch;
use crate::error::Result;
use crate::model::{dist, ParamBox, Theta};
use crate::risk::Evaluator;

/// Slack for analytic targets, which are exact up to rounding. Kept well
/// below `1e−9` so that behavior at small scales stays visible.
pub const ANALYTIC_TOL: f64 = 1e-12;

/// A differentiable function `R^d → R`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    /// Additive slack for inequalities built from this objective.
    fn tolerance(&self) -> f64 {
        ANALYTIC_TOL
    }
    fn describe(&self) -> String;
}

/// Set of minimizers, with Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalSet {
    Point(Vec<f64>),
    Box(ParamBox),
}

impl OptimalSet {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            OptimalSet::Point(p) => p.clone(),
            OptimalSet::Box(b) => b.clamp(x),
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        dist(x, &self.project(x))
    }

    /// Points around which local probes are placed.
    pub fn anchors(&self) -> Vec<Vec<f64>> {
        match self {
            OptimalSet::Point(p) => vec![p.clone()],
            OptimalSet::Box(b) => b.corners().into_iter().map(|t| t.0).collect(),
        }
    }
}

/// `θ' ↦ DPR(anchor, θ')`. Monte Carlo evaluators freeze one batch from
/// `D(anchor)`, so value and gradient describe the same sample-average function.
pub struct DprTarget<'a> {
    ev: &'a Evaluator<'a>,
    anchor: Theta,
    batch: Option<SampleBatch>,
    tol: f64,
}

impl<'a> DprTarget<'a> {
    pub fn new(ev: &'a Evaluator<'a>, anchor: &Theta) -> Result<Self> {
        let at = ev.dpr(anchor, anchor)?;
        let batch = if ev.is_exact() { None } else { Some(ev.batch(anchor)) };
        Ok(DprTarget {
            ev,
            anchor: anchor.clone(),
            batch,
            tol: ev.tolerance(at.std_err),
        })
    }

    pub fn anchor(&self) -> &Theta {
        &self.anchor
    }
}

impl Objective for DprTarget<'_> {
    fn dim(&self) -> usize {
        self.anchor.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let loss = &self.ev.instance().loss;
        match &self.batch {
            Some(b) => b.rows().map(|z| loss.value(z, x)).sum::<f64>() / b.len() as f64,
            None => self
                .ev
                .dpr(&self.anchor, &Theta(x.to_vec()))
                .expect("closed-form DPR inside the box")
                .value,
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let loss = &self.ev.instance().loss;
        match &self.batch {
            Some(b) => {
                let mut acc = vec![0.0; x.len()];
                let mut g = vec![0.0; x.len()];
                for z in b.rows() {
                    loss.grad_theta_into(z, x, &mut g);
                    for (a, gi) in acc.iter_mut().zip(&g) {
                        *a += gi;
                    }
                }
                acc.iter().map(|a| a / b.len() as f64).collect()
            }
            None => {
                let th = Theta(x.to_vec());
                self.ev.dpr_grad(&self.anchor, &th).expect("closed-form gradient").0
            }
        }
    }

    fn tolerance(&self) -> f64 {
        self.tol
    }

    fn describe(&self) -> String {
        format!("DPR({:?}, ·)", self.anchor.0)
    }
}

/// `θ ↦ PR(θ)` with the split performative gradient.
pub struct PrTarget<'a> {
    ev: &'a Evaluator<'a>,
    tol: f64,
}

impl<'a> PrTarget<'a> {
    pub fn new(ev: &'a Evaluator<'a>) -> Result<Self> {
        let domain = &ev.instance().domain;
        let c = domain.center();
        let pr = ev.pr(&c)?;
        let g = ev.performative_gradient(&c)?;
        let se = pr.std_err + g.max_se() * domain.diameter();
        Ok(PrTarget {
            ev,
            tol: ev.tolerance(se),
        })
    }
}

impl Objective for PrTarget<'_> {
    fn dim(&self) -> usize {
        self.ev.instance().dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.ev.pr(&Theta(x.to_vec())).expect("PR inside the box").value
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.ev
            .performative_gradient(&Theta(x.to_vec()))
            .expect("performative gradient inside the box")
            .total
    }

    fn tolerance(&self) -> f64 {
        self.tol
    }

    fn describe(&self) -> String {
        "PR(·)".into()
    }
}

/// `(c/2)‖x − center‖²`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvature: f64,
    pub center: Vec<f64>,
}

impl Quadratic {
    pub fn optimal_set(&self) -> OptimalSet {
        OptimalSet::Point(self.center.clone())
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = dist(x, &self.center);
        0.5 * self.curvature * r * r
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| self.curvature * (a - b))
            .collect()
    }

    fn describe(&self) -> String {
        format!("({}/2)‖x − {:?}‖²", self.curvature, self.center)
    }
}

/// `Σ xᵢ⁴`: convex, minimized at 0, but flat to fourth order there.
#[derive(Debug, Clone)]
pub struct Quartic {
    pub dim: usize,
}

impl Quartic {
    pub fn optimal_set(&self) -> OptimalSet {
        OptimalSet::Point(vec![0.0; self.dim])
    }
}

impl Objective for Quartic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.powi(4)).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 4.0 * v.powi(3)).collect()
    }

    fn describe(&self) -> String {
        "Σ x⁴".into()
    }
}

/// `Σ max(|xᵢ| − w, 0)²`: minimized on the whole cube `[−w, w]^d`.
#[derive(Debug, Clone)]
pub struct FlatBottom {
    pub dim: usize,
    pub half_width: f64,
}

impl FlatBottom {
    pub fn optimal_set(&self) -> OptimalSet {
        OptimalSet::Box(ParamBox::cube(self.dim, -self.half_width, self.half_width))
    }
}

impl Objective for FlatBottom {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|v| (v.abs() - self.half_width).max(0.0).powi(2))
            .sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|v| 2.0 * (v.abs() - self.half_width).max(0.0) * v.signum())
            .collect()
    }

    fn describe(&self) -> String {
        format!("Σ max(|x| − {}, 0)²", self.half_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeedSpec;
    use crate::presets::canonical;

    fn fd_check(obj: &dyn Objective, x: &[f64]) {
        let g = obj.grad(x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[i] += h;
            q[i] -= h;
            let fd = (obj.value(&p) - obj.value(&q)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{} at {x:?}", obj.describe());
        }
    }

    #[test]
    fn analytic_gradients() {
        fd_check(&Quadratic { curvature: 3.0, center: vec![0.5, -1.0] }, &[0.1, 0.2]);
        fd_check(&Quartic { dim: 2 }, &[0.3, -1.2]);
        fd_check(&FlatBottom { dim: 1, half_width: 1.0 }, &[2.3]);
        fd_check(&FlatBottom { dim: 1, half_width: 1.0 }, &[-1.7]);
    }

    #[test]
    fn dpr_target_gradients() {
        let inst = canonical();
        let cf = Evaluator::closed_form(&inst).unwrap();
        let t = DprTarget::new(&cf, &Theta::scalar(2.0 / 3.0)).unwrap();
        fd_check(&t, &[0.1]);
        let mc = Evaluator::monte_carlo(&inst, 5000, SeedSpec::new(2)).unwrap();
        let t = DprTarget::new(&mc, &Theta::scalar(2.0 / 3.0)).unwrap();
        fd_check(&t, &[0.1]);
        assert!(t.tolerance() > 1e-9);
        let p = PrTarget::new(&cf).unwrap();
        fd_check(&p, &[-0.4]);
    }

    #[test]
    fn box_projection() {
        let s = FlatBottom { dim: 1, half_width: 1.0 }.optimal_set();
        assert_eq!(s.project(&[2.5]), vec![1.0]);
        assert_eq!(s.distance(&[0.2]), 0.0);
        assert_eq!(s.anchors().len(), 2);
    }
}
