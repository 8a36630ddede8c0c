//! Instance model: parameters, the parameter box, declared constants and the
//! seeding contract shared by every estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distmaps::DistMapSpec;
use crate::error::{Error, Result};
use crate::losses::LossSpec;

/// Model parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta(pub Vec<f64>);

impl Theta {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Contract("theta must have at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract(format!("non-finite theta {coords:?}")));
        }
        Ok(Theta(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Theta(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Theta) -> f64 {
        dist(&self.0, &other.0)
    }
}

impl From<Vec<f64>> for Theta {
    fn from(v: Vec<f64>) -> Self {
        Theta(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Axis-aligned box standing in for the closed convex parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid(
                "domain",
                format!("lower has {} entries, upper has {}", lower.len(), upper.len()),
            ));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::invalid(format!("domain.lower[{i}]"), "bounds must be finite"));
            }
            if l > u {
                return Err(Error::invalid(
                    format!("domain.lower[{i}]"),
                    format!("lower bound {l} exceeds upper bound {u}"),
                ));
            }
        }
        Ok(ParamBox { lower, upper })
    }

    /// Cube `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        ParamBox {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn center(&self) -> Theta {
        Theta(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
        )
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        dist(&self.lower, &self.upper)
    }

    /// Clamp a raw vector into the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    /// All `2^d` corners.
    pub fn corners(&self) -> Vec<Theta> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                Theta(
                    (0..d)
                        .map(|i| {
                            if mask >> i & 1 == 1 {
                                self.upper[i]
                            } else {
                                self.lower[i]
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }
}

/// Euclidean projection onto the box.
pub fn project(theta: &Theta, domain: &ParamBox) -> Result<Theta> {
    if theta.dim() != domain.dim() {
        return Err(Error::Contract(format!(
            "theta has dimension {}, box has dimension {}",
            theta.dim(),
            domain.dim()
        )));
    }
    Ok(Theta(domain.clamp(&theta.0)))
}

/// Where a constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Declared,
    Analytic,
    Estimated,
}

/// A constant together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sourced {
    pub value: f64,
    pub source: ConstantSource,
}

impl Sourced {
    pub fn new(value: f64, source: ConstantSource) -> Self {
        Sourced { value, source }
    }
}

/// Optional problem constants. Absent values are estimated on demand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_sc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_wsc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_rsi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_qg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_bound_b: Option<f64>,
}

impl ConstantSet {
    fn entries(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("beta", self.beta),
            ("gamma_sc", self.gamma_sc),
            ("lip_l", self.lip_l),
            ("eps", self.eps),
            ("mu_wsc", self.mu_wsc),
            ("mu_rsi", self.mu_rsi),
            ("gamma_qg", self.gamma_qg),
            ("shift_bound_b", self.shift_bound_b),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(
                        format!("constants.{name}"),
                        format!("must be finite and nonnegative, got {v}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_none())
    }
}

/// Hierarchical seed: a root plus a path of substream labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub root_seed: u64,
    pub stream_path: Vec<u64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl SeedSpec {
    pub fn new(root_seed: u64) -> Self {
        SeedSpec {
            root_seed,
            stream_path: Vec::new(),
        }
    }

    /// Substream with one more path label.
    pub fn child(&self, label: u64) -> Self {
        let mut stream_path = self.stream_path.clone();
        stream_path.push(label);
        SeedSpec {
            root_seed: self.root_seed,
            stream_path,
        }
    }

    /// Fresh generator for this stream. Same spec, same sequence.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = splitmix64(self.root_seed);
        // length is folded in so that [] and [0] differ
        h = splitmix64(h ^ self.stream_path.len() as u64);
        for &label in &self.stream_path {
            h = splitmix64(h ^ splitmix64(label));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            h = splitmix64(h.wrapping_add(i as u64));
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// A complete performative problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    pub dim: usize,
    pub domain: ParamBox,
    pub loss: LossSpec,
    pub map: DistMapSpec,
    pub declared: ConstantSet,
}

impl Instance {
    pub fn new(
        domain: ParamBox,
        loss: LossSpec,
        map: DistMapSpec,
        declared: ConstantSet,
    ) -> Result<Self> {
        let inst = Instance {
            name: None,
            dim: domain.dim(),
            domain,
            loss,
            map,
            declared,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn data_dim(&self) -> usize {
        self.map.data_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim != self.domain.dim() {
            return Err(Error::invalid("domain", "dimension must be positive and match the box"));
        }
        self.map.validate(self.dim)?;
        self.loss.validate(self.dim, &self.map)?;
        self.declared.validate()
    }

    /// Checks that `theta` has the right dimension and lies in the box.
    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.dim() != self.dim {
            return Err(Error::Contract(format!(
                "theta has dimension {}, instance has {}",
                theta.dim(),
                self.dim
            )));
        }
        if !self.domain.contains(&theta.0) {
            return Err(Error::Contract(format!("theta {:?} outside the parameter box", theta.0)));
        }
        Ok(())
    }

    pub fn project(&self, theta: &Theta) -> Result<Theta> {
        project(theta, &self.domain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn box3() -> ParamBox {
        ParamBox::cube(1, -3.0, 3.0)
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&Theta::scalar(5.0), &box3()).unwrap().0, vec![3.0]);
        assert_eq!(project(&Theta::scalar(0.5), &box3()).unwrap().0, vec![0.5]);
        let b2 = ParamBox::cube(2, -3.0, 3.0);
        assert_eq!(
            project(&Theta(vec![-4.0, 2.0]), &b2).unwrap().0,
            vec![-3.0, 2.0]
        );
    }

    #[test]
    fn project_dimension_mismatch() {
        let err = project(&Theta(vec![0.0, 0.0]), &box3()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn bad_box_rejected() {
        assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(ParamBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn negative_constant_rejected() {
        let c = ConstantSet {
            eps: Some(-0.1),
            ..Default::default()
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("constants.eps"), "{err}");
    }

    #[test]
    fn seed_reproducible_and_path_sensitive() {
        let s = SeedSpec::new(7).child(3);
        let a: Vec<u64> = (0..4).map({ let mut r = s.rng(); move |_| r.random() }).collect();
        let b: Vec<u64> = (0..4).map({ let mut r = s.rng(); move |_| r.random() }).collect();
        assert_eq!(a, b);
        let c: u64 = SeedSpec::new(7).child(4).rng().random();
        assert_ne!(a[0], c);
        let root: u64 = SeedSpec::new(7).rng().random();
        let zero: u64 = SeedSpec::new(7).child(0).rng().random();
        assert_ne!(root, zero);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 20_000;
        let mut ra = SeedSpec::new(1).child(0).rng();
        let mut rb = SeedSpec::new(1).child(1).rng();
        let xs: Vec<f64> = (0..n).map(|_| ra.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| rb.random::<f64>() - 0.5).collect();
        let corr = dot(&xs, &ys) / (norm(&xs) * norm(&ys));
        // 4 standard errors of a null correlation
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_nonexpansive(
            x in proptest::collection::vec(-10.0f64..10.0, 3),
            y in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let b = ParamBox::new(vec![-1.0, 0.0, -5.0], vec![1.0, 2.0, 5.0]).unwrap();
            let px = project(&Theta(x.clone()), &b).unwrap();
            let py = project(&Theta(y.clone()), &b).unwrap();
            prop_assert!(b.contains(&px.0));
            prop_assert_eq!(project(&px, &b).unwrap(), px.clone());
            prop_assert!(px.distance(&py) <= dist(&x, &y) + 1e-12);
        }
    }
}
