//! Empirical Wasserstein-1 distances.
//!
//! One-dimensional batches use the quantile coupling (sorted samples), which is
//! exact for empirical measures. Multi-dimensional batches of equal size are
//! solved exactly as a linear assignment problem with Euclidean costs.

use serde::{Deserialize, Serialize};

use crate::distmaps::{DistMapSpec, SampleBatch};
use crate::error::{Error, Result};
use crate::model::{dist, Theta};

/// Largest batch accepted by the assignment solver.
pub const MAX_ASSIGNMENT_N: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W1Method {
    Quantile1d,
    Assignment,
    GaussianClosedForm,
    /// Row-by-row translates: `W₁ = ‖v‖`.
    Translation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Estimate {
    pub value: f64,
    pub method: W1Method,
    pub n: usize,
}

/// `W₁` between two empirical measures.
pub fn w1(a: &SampleBatch, b: &SampleBatch) -> Result<W1Estimate> {
    if a.data_dim != b.data_dim {
        return Err(Error::Contract(format!(
            "batches have data dimensions {} and {}",
            a.data_dim, b.data_dim
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if a.data_dim == 1 {
        return Ok(W1Estimate {
            value: w1_sorted_1d(a.points.clone(), b.points.clone()),
            method: W1Method::Quantile1d,
            n: a.len().max(b.len()),
        });
    }
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "assignment needs equal batch sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n > MAX_ASSIGNMENT_N {
        return Err(Error::Contract(format!(
            "assignment limited to n ≤ {MAX_ASSIGNMENT_N}, got {n}"
        )));
    }
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| dist(a.row(i), b.row(j)))
        .collect();
    let (total, _) = min_cost_assignment(&cost, n);
    Ok(W1Estimate {
        value: total / n as f64,
        method: W1Method::Assignment,
        n,
    })
}

/// The common offset `v` when `b` is `a` shifted row by row (`bᵢ = aᵢ + v`),
/// up to rounding. The identity coupling then attains the lower bound from the
/// linear test function `x ↦ ⟨x, v⟩/‖v‖`, so `W₁(a, b) = ‖v‖`.
pub fn translation_offset(a: &SampleBatch, b: &SampleBatch) -> Option<Vec<f64>> {
    if a.data_dim != b.data_dim || a.len() != b.len() || a.is_empty() {
        return None;
    }
    let v: Vec<f64> = b.row(0).iter().zip(a.row(0)).map(|(x, y)| x - y).collect();
    let same = a.rows().zip(b.rows()).all(|(ra, rb)| {
        ra.iter().zip(rb).zip(&v).all(|((x, y), vi)| {
            let scale = x.abs().max(y.abs()).max(1.0);
            (y - x - vi).abs() <= 1e-12 * scale
        })
    });
    same.then_some(v)
}

/// Exact 1-D `W₁ = ∫ |F_a − F_b|`.
fn w1_sorted_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return s / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        prev = next;
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
    }
    total
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix (row-major).
/// Returns the total cost and the column assigned to each row.
///
/// Shortest augmenting paths with potentials, `O(n³)`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based bookkeeping; column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, assignment)
}

/// Exact `W₁(D(θ₁), D(θ₂))` for the Gaussian location family. Both laws share
/// the covariance, so the distance is the norm of the mean gap `‖A(θ₁ − θ₂)‖`.
pub fn w1_gaussian(map: &DistMapSpec, theta1: &Theta, theta2: &Theta) -> Result<W1Estimate> {
    let g = map.gaussian("w1_gaussian").map_err(|_| {
        Error::Unsupported(format!(
            "no closed-form W1 for {} maps; use w1 on sample batches",
            map.kind_name()
        ))
    })?;
    let diff: Vec<f64> = theta1.0.iter().zip(&theta2.0).map(|(a, b)| a - b).collect();
    let gap: Vec<f64> = g.shift.iter().map(|row| crate::model::dot(row, &diff)).collect();
    Ok(W1Estimate {
        value: crate::model::norm(&gap),
        method: W1Method::GaussianClosedForm,
        n: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeedSpec;
    use crate::presets::canonical;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn batch1(points: Vec<f64>) -> SampleBatch {
        SampleBatch::from_points(points, 1).unwrap()
    }

    /// Brute force over all permutations.
    fn brute_assignment(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + rec(cost, n, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, n, 0, &mut vec![false; n])
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for n in 1..=7 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
                let (total, perm) = min_cost_assignment(&cost, n);
                assert!((total - brute_assignment(&cost, n)).abs() < 1e-9);
                let mut seen = perm.clone();
                seen.sort();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn identical_batches_have_zero_distance() {
        let b = canonical().map.sample(&Theta::scalar(0.0), 300, &SeedSpec::new(1)).unwrap();
        assert_eq!(w1(&b, &b).unwrap().value, 0.0);
        let p = SampleBatch::from_points((0..60).map(|i| (i as f64).sin()).collect(), 3).unwrap();
        assert_eq!(w1(&p, &p).unwrap().value, 0.0);
    }

    #[test]
    fn translation_is_exact() {
        let b = canonical().map.sample(&Theta::scalar(0.0), 1000, &SeedSpec::new(2)).unwrap();
        let c = 0.731;
        let shifted = batch1(b.points.iter().map(|x| x + c).collect());
        assert!((w1(&b, &shifted).unwrap().value - c).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes_1d() {
        // {0} vs {0, 1}: move half the mass by 1
        let v = w1(&batch1(vec![0.0]), &batch1(vec![0.0, 1.0])).unwrap().value;
        assert!((v - 0.5).abs() < 1e-15);
        // same empirical law written twice
        let v = w1(&batch1(vec![1.0, 2.0]), &batch1(vec![2.0, 1.0, 1.0, 2.0])).unwrap().value;
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn gaussian_mean_gap_over_seeds() {
        let map = canonical().map;
        let mut total = 0.0;
        for s in 0..20 {
            let a = map.sample(&Theta::scalar(0.0), 2000, &SeedSpec::new(100).child(2 * s)).unwrap();
            let b = map.sample(&Theta::scalar(2.0), 2000, &SeedSpec::new(100).child(2 * s + 1)).unwrap();
            total += w1(&a, &b).unwrap().value;
        }
        assert!((total / 20.0 - 1.0).abs() <= 0.05);
    }

    #[test]
    fn closed_form_examples() {
        let map = canonical().map;
        let w = |a: f64, b: f64| w1_gaussian(&map, &Theta::scalar(a), &Theta::scalar(b)).unwrap().value;
        assert!((w(0.0, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(w(1.0, 1.0), 0.0);
        assert!((w(-3.0, 3.0) - 3.0).abs() < 1e-15);
        let strat = crate::presets::strategic_2d(1.0).map;
        assert!(w1_gaussian(&strat, &Theta(vec![0.0; 2]), &Theta(vec![1.0; 2])).is_err());
    }

    #[test]
    fn contract_errors() {
        let a = SampleBatch::from_points(vec![0.0; 6], 2).unwrap();
        let b = SampleBatch::from_points(vec![0.0; 8], 2).unwrap();
        assert!(w1(&a, &b).is_err());
        assert!(w1(&a, &batch1(vec![0.0])).is_err());
    }

    fn random_batch(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize, shift: f64) -> SampleBatch {
        SampleBatch::from_points((0..n * m).map(|_| rng.random_range(-1.0..1.0) + shift).collect(), m).unwrap()
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in any::<u64>(), m in 1usize..4, n in 1usize..24) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_batch(&mut rng, n, m, 0.0);
            let b = random_batch(&mut rng, n, m, 0.5);
            let c = random_batch(&mut rng, n, m, -0.3);
            let ab = w1(&a, &b).unwrap().value;
            let ba = w1(&b, &a).unwrap().value;
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12);
            let ac = w1(&a, &c).unwrap().value;
            let cb = w1(&c, &b).unwrap().value;
            prop_assert!(ac + cb - ab >= -1e-9);
        }

        #[test]
        fn kantorovich_rubinstein_lower_bound(seed in any::<u64>(), n in 1usize..200, k in -2.0f64..2.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_batch(&mut rng, n, 1, 0.0);
            let b = random_batch(&mut rng, n + 3, 1, 0.4);
            // 1-Lipschitz test function: identity clipped at k
            let f = |x: f64| x.min(k);
            let ma = a.points.iter().map(|x| f(*x)).sum::<f64>() / a.len() as f64;
            let mb = b.points.iter().map(|x| f(*x)).sum::<f64>() / b.len() as f64;
            prop_assert!((ma - mb).abs() <= w1(&a, &b).unwrap().value + 1e-9);
        }

        #[test]
        fn translation_shortcut_matches_assignment(seed in any::<u64>(), n in 1usize..30, vx in -2.0f64..2.0, vy in -2.0f64..2.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = random_batch(&mut rng, n, 2, 0.0);
            let moved: Vec<f64> = a.rows().flat_map(|r| [r[0] + vx, r[1] + vy]).collect();
            let b = SampleBatch::from_points(moved, 2).unwrap();
            let v = translation_offset(&a, &b).unwrap();
            let exact = w1(&a, &b).unwrap().value;
            prop_assert!((crate::model::norm(&v) - exact).abs() <= 1e-9, "{v:?} vs {exact}");
            let c = random_batch(&mut rng, n.max(2), 2, 0.0);
            let d = random_batch(&mut rng, n.max(2), 2, 0.0);
            prop_assert!(translation_offset(&c, &d).is_none());
        }
    }
}
