//! Ready-made instances used by the examples, tests and benches.

use crate::distmaps::{DistMapSpec, GaussianMap, StrategicMap};
use crate::losses::LossSpec;
use crate::model::{ConstantSet, Instance, ParamBox};

/// One-dimensional Gaussian mean shift: `z ~ N(μ0 + aθ, 1)`, squared ridge
/// loss with weight `λ`, `Θ = [−3, 3]`.
pub fn gauss_mean_1d(mu0: f64, a: f64, lambda: f64) -> Instance {
    Instance::new(
        ParamBox::cube(1, -3.0, 3.0),
        LossSpec::squared_ridge(lambda),
        DistMapSpec::GaussianLocationScale(GaussianMap {
            base_mean: vec![mu0],
            shift: vec![vec![a]],
            sigma: vec![1.0],
        }),
        ConstantSet::default(),
    )
    .expect("preset is valid")
    .with_name("gauss-mean-1d")
}

/// The canonical instance: `μ0 = 1, a = 0.5, λ = 1, σ = 1`.
pub fn canonical() -> Instance {
    gauss_mean_1d(1.0, 0.5, 1.0)
}

/// Two-dimensional Gaussian location family on `[−2, 2]²`.
pub fn gauss_2d(base_mean: [f64; 2], shift: [[f64; 2]; 2], lambda: f64) -> Instance {
    Instance::new(
        ParamBox::cube(2, -2.0, 2.0),
        LossSpec::squared_ridge(lambda),
        DistMapSpec::GaussianLocationScale(GaussianMap {
            base_mean: base_mean.to_vec(),
            shift: shift.iter().map(|r| r.to_vec()).collect(),
            sigma: vec![1.0, 0.5],
        }),
        ConstantSet::default(),
    )
    .expect("preset is valid")
    .with_name("gauss-2d")
}

/// Strategic classification in two features with logistic ridge loss.
pub fn strategic_2d(cost: f64) -> Instance {
    Instance::new(
        ParamBox::cube(2, -2.0, 2.0),
        LossSpec::logistic_ridge(0.1),
        DistMapSpec::StrategicResponse(StrategicMap {
            class_mean: vec![1.0, 0.5],
            feature_sigma: 1.0,
            positive_rate: 0.5,
            cost,
        }),
        ConstantSet::default(),
    )
    .expect("preset is valid")
    .with_name("strategic-2d")
}
