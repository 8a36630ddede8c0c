//! Parameter-dependent distribution maps `θ ↦ D(θ)`.
//!
//! Both families are driven by base noise that depends on the seed only, so
//! batches drawn at different `θ` with the same seed are coupled (common
//! random numbers). For the Gaussian family the coupling is an exact
//! translation: `z(θ') − z(θ) = A(θ' − θ)` row by row.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamBox, SeedSpec, Theta};

/// Gaussian location-scale map: `z = μ0 + Aθ + σ ⊙ ξ`, `ξ ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMap {
    pub base_mean: Vec<f64>,
    /// `m × d`, row-major as nested rows.
    pub shift: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation (diagonal covariance).
    pub sigma: Vec<f64>,
}

/// Strategic response with quadratic costs.
///
/// A base agent `(x0, y)` has `y = ±1` and `x0 ~ N(y·class_mean, s²I)`. Facing
/// the deployed score `θᵀx` it moves to `argmax_x −θᵀx − (c/2)‖x − x0‖²`,
/// i.e. `x = x0 − θ/c`. Labels do not move. Data points are `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicMap {
    pub class_mean: Vec<f64>,
    pub feature_sigma: f64,
    pub positive_rate: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistMapSpec {
    GaussianLocationScale(GaussianMap),
    StrategicResponse(StrategicMap),
}

/// `n` draws from `D(θ)`, row-major `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<f64>,
    pub data_dim: usize,
    pub theta_used: Theta,
    pub seed: SeedSpec,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len() / self.data_dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.data_dim..(i + 1) * self.data_dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.data_dim)
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// A batch from raw points, for tests and callers with their own data.
    pub fn from_points(points: Vec<f64>, data_dim: usize) -> Result<Self> {
        if data_dim == 0 || points.is_empty() || !points.len().is_multiple_of(data_dim) {
            return Err(Error::Contract("points must form a nonempty n × m matrix".into()));
        }
        Ok(SampleBatch {
            points,
            data_dim,
            theta_used: Theta(Vec::new()),
            seed: SeedSpec::new(0),
        })
    }
}

/// Seed-only randomness behind a batch. Reusable across `θ`.
#[derive(Debug, Clone)]
pub struct BaseNoise {
    n: usize,
    seed: SeedSpec,
    /// Gaussian: `n × m` standard normals. Strategic: `n × (d + 1)`, the
    /// last column holding the label.
    values: Vec<f64>,
}

impl BaseNoise {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn seed(&self) -> &SeedSpec {
        &self.seed
    }
}

impl DistMapSpec {
    pub fn data_dim(&self) -> usize {
        match self {
            DistMapSpec::GaussianLocationScale(g) => g.base_mean.len(),
            DistMapSpec::StrategicResponse(s) => s.class_mean.len() + 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DistMapSpec::GaussianLocationScale(_) => "gaussian_location_scale",
            DistMapSpec::StrategicResponse(_) => "strategic_response",
        }
    }

    pub fn has_density(&self) -> bool {
        matches!(self, DistMapSpec::GaussianLocationScale(_))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            DistMapSpec::GaussianLocationScale(g) => {
                let m = g.base_mean.len();
                if m == 0 {
                    return Err(Error::invalid("map.base_mean", "must be nonempty"));
                }
                if g.shift.len() != m {
                    return Err(Error::invalid(
                        "map.shift",
                        format!("expected {m} rows (data dimension), got {}", g.shift.len()),
                    ));
                }
                for (i, row) in g.shift.iter().enumerate() {
                    if row.len() != dim {
                        return Err(Error::invalid(
                            format!("map.shift[{i}]"),
                            format!("expected {dim} columns (parameter dimension), got {}", row.len()),
                        ));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid(format!("map.shift[{i}]"), "entries must be finite"));
                    }
                }
                if g.sigma.len() != m {
                    return Err(Error::invalid(
                        "map.sigma",
                        format!("expected {m} entries, got {}", g.sigma.len()),
                    ));
                }
                if let Some(s) = g.sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::invalid("map.sigma", format!("must be positive, got {s}")));
                }
                if g.base_mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("map.base_mean", "entries must be finite"));
                }
            }
            DistMapSpec::StrategicResponse(s) => {
                if s.class_mean.len() != dim {
                    return Err(Error::invalid(
                        "map.class_mean",
                        format!("expected {dim} entries, got {}", s.class_mean.len()),
                    ));
                }
                if !(s.feature_sigma.is_finite() && s.feature_sigma > 0.0) {
                    return Err(Error::invalid(
                        "map.feature_sigma",
                        format!("must be positive, got {}", s.feature_sigma),
                    ));
                }
                if !(0.0..=1.0).contains(&s.positive_rate) {
                    return Err(Error::invalid(
                        "map.positive_rate",
                        format!("must lie in [0, 1], got {}", s.positive_rate),
                    ));
                }
                if !(s.cost.is_finite() && s.cost > 0.0) {
                    return Err(Error::invalid("map.cost", format!("must be positive, got {}", s.cost)));
                }
            }
        }
        Ok(())
    }

    /// Draw the seed-only randomness for `n` points.
    pub fn base_noise(&self, n: usize, seed: &SeedSpec) -> BaseNoise {
        let mut rng = seed.rng();
        let values = match self {
            DistMapSpec::GaussianLocationScale(g) => (0..n * g.base_mean.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
            DistMapSpec::StrategicResponse(s) => {
                let d = s.class_mean.len();
                let mut v = Vec::with_capacity(n * (d + 1));
                for _ in 0..n {
                    let y = if rng.random::<f64>() < s.positive_rate { 1.0 } else { -1.0 };
                    for _ in 0..d {
                        v.push(rng.sample::<f64, _>(StandardNormal));
                    }
                    v.push(y);
                }
                v
            }
        };
        BaseNoise {
            n,
            seed: seed.clone(),
            values,
        }
    }

    /// Mean shift `Aθ` (Gaussian) or feature displacement `−θ/c` (strategic).
    fn displacement(&self, theta: &Theta) -> Vec<f64> {
        match self {
            DistMapSpec::GaussianLocationScale(g) => g
                .shift
                .iter()
                .zip(&g.base_mean)
                .map(|(row, mu)| mu + crate::model::dot(row, &theta.0))
                .collect(),
            DistMapSpec::StrategicResponse(s) => theta.0.iter().map(|t| -t / s.cost).collect(),
        }
    }

    /// Push base noise through the map at `θ`.
    pub fn realize(&self, noise: &BaseNoise, theta: &Theta) -> SampleBatch {
        let m = self.data_dim();
        let shift = self.displacement(theta);
        let mut points = Vec::with_capacity(noise.n * m);
        match self {
            DistMapSpec::GaussianLocationScale(g) => {
                for row in noise.values.chunks_exact(m) {
                    for j in 0..m {
                        points.push(shift[j] + g.sigma[j] * row[j]);
                    }
                }
            }
            DistMapSpec::StrategicResponse(s) => {
                let d = m - 1;
                for row in noise.values.chunks_exact(m) {
                    let y = row[d];
                    for j in 0..d {
                        let x0 = y * s.class_mean[j] + s.feature_sigma * row[j];
                        points.push(x0 + shift[j]);
                    }
                    points.push(y);
                }
            }
        }
        SampleBatch {
            points,
            data_dim: m,
            theta_used: theta.clone(),
            seed: noise.seed.clone(),
        }
    }

    /// `n` draws from `D(θ)`.
    pub fn sample(&self, theta: &Theta, n: usize, seed: &SeedSpec) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::Contract("sample size must be at least 1".into()));
        }
        Ok(self.realize(&self.base_noise(n, seed), theta))
    }

    /// `∇_θ log p_θ(z)`. Only the Gaussian family has a density here.
    pub fn score(&self, z: &[f64], theta: &Theta) -> Result<Vec<f64>> {
        let g = self.gaussian("score")?;
        let mean = self.displacement(theta);
        let mut out = vec![0.0; theta.dim()];
        for (j, row) in g.shift.iter().enumerate() {
            let w = (z[j] - mean[j]) / (g.sigma[j] * g.sigma[j]);
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        Ok(out)
    }

    /// Exact mean `μ0 + Aθ` and variance diagonal `σ²`.
    pub fn closed_form_mean_cov(&self, theta: &Theta) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.gaussian("closed_form_mean_cov")?;
        Ok((
            self.displacement(theta),
            g.sigma.iter().map(|s| s * s).collect(),
        ))
    }

    pub(crate) fn gaussian(&self, what: &str) -> Result<&GaussianMap> {
        match self {
            DistMapSpec::GaussianLocationScale(g) => Ok(g),
            other => Err(Error::Unsupported(format!(
                "{what} needs a gaussian_location_scale map, got {}",
                other.kind_name()
            ))),
        }
    }

    /// Exact sensitivity of the map: `‖A‖₂` (Gaussian) or `1/c` (strategic).
    /// Both families translate a fixed base law, so `W₁(D(θ), D(θ'))` equals
    /// the norm of the translation.
    pub fn exact_sensitivity(&self) -> f64 {
        match self {
            DistMapSpec::GaussianLocationScale(g) => spectral_norm(&g.shift),
            DistMapSpec::StrategicResponse(s) => 1.0 / s.cost,
        }
    }

    /// Per-coordinate box holding the central 99.9% of every `D(θ)` for `θ`
    /// at the corners and center of `domain`, estimated from `n` draws.
    pub fn quantile_region(&self, domain: &ParamBox, n: usize, seed: &SeedSpec) -> ParamBox {
        let m = self.data_dim();
        let noise = self.base_noise(n.max(2), seed);
        let mut lower = vec![f64::INFINITY; m];
        let mut upper = vec![f64::NEG_INFINITY; m];
        let mut probes = domain.corners();
        probes.push(domain.center());
        for theta in &probes {
            let batch = self.realize(&noise, theta);
            for j in 0..m {
                let mut col = batch.column(j);
                col.sort_by(f64::total_cmp);
                let lo = quantile_sorted(&col, 0.0005);
                let hi = quantile_sorted(&col, 0.9995);
                lower[j] = lower[j].min(lo);
                upper[j] = upper[j].max(hi);
            }
        }
        ParamBox { lower, upper }
    }

    /// Same region computed from Gaussian quantiles instead of draws.
    pub fn quantile_region_exact(&self, domain: &ParamBox) -> Result<ParamBox> {
        use statrs::distribution::{ContinuousCDF, Normal};
        let g = self.gaussian("quantile_region_exact")?;
        let zq = Normal::standard().inverse_cdf(0.9995);
        let m = g.base_mean.len();
        let mut lower = vec![f64::INFINITY; m];
        let mut upper = vec![f64::NEG_INFINITY; m];
        for theta in domain.corners() {
            let mean = self.displacement(&theta);
            for j in 0..m {
                lower[j] = lower[j].min(mean[j] - zq * g.sigma[j]);
                upper[j] = upper[j].max(mean[j] + zq * g.sigma[j]);
            }
        }
        Ok(ParamBox { lower, upper })
    }
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Largest singular value by power iteration on `AᵀA`.
pub(crate) fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let d = a.first().map_or(0, |r| r.len());
    if d == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut sigma = 0.0;
    for _ in 0..500 {
        let av: Vec<f64> = a.iter().map(|row| crate::model::dot(row, &v)).collect();
        let mut w = vec![0.0; d];
        for (row, x) in a.iter().zip(&av) {
            for (wi, aij) in w.iter_mut().zip(row) {
                *wi += aij * x;
            }
        }
        let nw = crate::model::norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w.iter().map(|x| x / nw).collect();
        if (next - sigma).abs() <= 1e-15 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::gauss_mean_1d;

    fn gauss() -> DistMapSpec {
        gauss_mean_1d(1.0, 0.5, 1.0).map
    }

    #[test]
    fn sample_mean_law_of_large_numbers() {
        let n = 100_000;
        let b = gauss().sample(&Theta::scalar(0.0), n, &SeedSpec::new(11)).unwrap();
        let mean = b.points.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn sample_deterministic() {
        let s = SeedSpec::new(5).child(2);
        let a = gauss().sample(&Theta::scalar(0.3), 100, &s).unwrap();
        let b = gauss().sample(&Theta::scalar(0.3), 100, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn location_structure_under_shared_seed() {
        let s = SeedSpec::new(9);
        let a = gauss().sample(&Theta::scalar(0.0), 500, &s).unwrap();
        let b = gauss().sample(&Theta::scalar(2.0), 500, &s).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert!((y - x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(gauss().sample(&Theta::scalar(0.0), 0, &SeedSpec::new(1)).is_err());
    }

    #[test]
    fn score_examples() {
        let g = gauss();
        assert_eq!(g.score(&[1.0], &Theta::scalar(0.0)).unwrap(), vec![0.0]);
        assert!((g.score(&[2.0], &Theta::scalar(0.0)).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_mean_vanishes() {
        let g = gauss();
        let theta = Theta::scalar(1.3);
        let n = 100_000;
        let b = g.sample(&theta, n, &SeedSpec::new(3)).unwrap();
        let s: Vec<f64> = b.rows().map(|z| g.score(z, &theta).unwrap()[0]).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() <= 4.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn score_matches_log_density_derivative() {
        let map = DistMapSpec::GaussianLocationScale(GaussianMap {
            base_mean: vec![0.5, -1.0],
            shift: vec![vec![0.3, -0.2], vec![0.1, 0.7]],
            sigma: vec![0.8, 1.5],
        });
        let logp = |z: &[f64], th: &[f64]| -> f64 {
            let (mean, var) = map.closed_form_mean_cov(&Theta(th.to_vec())).unwrap();
            z.iter()
                .zip(mean.iter().zip(&var))
                .map(|(zi, (m, v))| -(zi - m).powi(2) / (2.0 * v))
                .sum()
        };
        let z = [0.9, 0.2];
        let th = [0.4, -0.6];
        let s = map.score(&z, &Theta(th.to_vec())).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = th;
            let mut q = th;
            p[i] += h;
            q[i] -= h;
            let fd = (logp(&z, &p) - logp(&z, &q)) / (2.0 * h);
            assert!((fd - s[i]).abs() < 1e-8, "{fd} vs {}", s[i]);
        }
    }

    #[test]
    fn closed_form_examples() {
        let g = gauss();
        assert_eq!(g.closed_form_mean_cov(&Theta::scalar(2.0)).unwrap(), (vec![2.0], vec![1.0]));
        assert_eq!(g.closed_form_mean_cov(&Theta::scalar(0.0)).unwrap(), (vec![1.0], vec![1.0]));
        assert_eq!(g.closed_form_mean_cov(&Theta::scalar(-2.0)).unwrap(), (vec![0.0], vec![1.0]));
    }

    #[test]
    fn strategic_has_no_score() {
        let s = crate::presets::strategic_2d(2.0).map;
        let err = s.score(&[0.0, 0.0, 1.0], &Theta(vec![0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(s.closed_form_mean_cov(&Theta(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn strategic_best_response_moves_features_only() {
        let inst = crate::presets::strategic_2d(2.0);
        let s = SeedSpec::new(4);
        let a = inst.map.sample(&Theta(vec![0.0, 0.0]), 200, &s).unwrap();
        let b = inst.map.sample(&Theta(vec![1.0, -0.5]), 200, &s).unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            assert!((rb[0] - ra[0] + 0.5).abs() < 1e-12);
            assert!((rb[1] - ra[1] - 0.25).abs() < 1e-12);
            assert_eq!(ra[2], rb[2]);
            assert!(ra[2] == 1.0 || ra[2] == -1.0);
        }
    }

    #[test]
    fn spectral_norm_cases() {
        assert!((spectral_norm(&[vec![0.5]]) - 0.5).abs() < 1e-12);
        assert!((spectral_norm(&[vec![3.0, 0.0], vec![0.0, -4.0]]) - 4.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&[vec![0.0]]), 0.0);
    }

    #[test]
    fn quantile_region_close_to_exact() {
        let g = gauss();
        let domain = ParamBox::cube(1, -3.0, 3.0);
        let exact = g.quantile_region_exact(&domain).unwrap();
        let emp = g.quantile_region(&domain, 200_000, &SeedSpec::new(1));
        assert!((exact.lower[0] - emp.lower[0]).abs() < 0.1);
        assert!((exact.upper[0] - emp.upper[0]).abs() < 0.1);
        // mean range [-0.5, 2.5] widened by 3.29 sigma
        assert!((exact.upper[0] - (2.5 + 3.2905)).abs() < 1e-3);
    }
}
