//! TOML instance files.
//!
//! ```toml
//! name = "gauss-mean-1d"
//!
//! [domain]
//! lower = [-3.0]
//! upper = [3.0]
//!
//! [loss]
//! kind = "squared_ridge"
//! lambda = 1.0
//!
//! [map]
//! kind = "gaussian_location_scale"
//! base_mean = [1.0]
//! shift = 0.5
//! sigma = 1.0
//!
//! [constants]
//! eps = 0.5
//! ```
//!
//! `shift` accepts a scalar (times the identity) or a list of rows. `sigma`
//! accepts a scalar or one entry per data coordinate. Unknown keys are errors.

use serde::{Deserialize, Serialize};

use crate::distmaps::{DistMapSpec, GaussianMap, StrategicMap};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::model::{ConstantSet, Instance, ParamBox};

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    domain: RawDomain,
    loss: RawLoss,
    map: RawMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constants: Option<ConstantSet>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum ScalarOrRows {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawMap {
    GaussianLocationScale {
        base_mean: Vec<f64>,
        shift: ScalarOrRows,
        sigma: ScalarOrVec,
    },
    StrategicResponse {
        class_mean: Vec<f64>,
        feature_sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        positive_rate: Option<f64>,
        cost: f64,
    },
}

/// A validated instance together with the defaults that were filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInstance {
    pub instance: Instance,
    /// Dotted key paths, e.g. `loss.lambda`.
    pub defaults_applied: Vec<String>,
}

pub fn load_instance(text: &str) -> Result<Instance> {
    load_instance_with_defaults(text).map(|l| l.instance)
}

pub fn load_instance_with_defaults(text: &str) -> Result<LoadedInstance> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut defaults = Vec::new();

    let domain = ParamBox::new(raw.domain.lower, raw.domain.upper)?;
    let dim = domain.dim();

    let lambda = raw.loss.lambda.unwrap_or_else(|| {
        defaults.push("loss.lambda".to_string());
        0.0
    });
    let loss = LossSpec {
        kind: raw.loss.kind,
        lambda,
    };

    let map = match raw.map {
        RawMap::GaussianLocationScale {
            base_mean,
            shift,
            sigma,
        } => {
            let m = base_mean.len();
            let shift = match shift {
                ScalarOrRows::Scalar(a) => {
                    if m != dim {
                        return Err(Error::invalid(
                            "map.shift",
                            format!(
                                "a scalar shift needs data dimension {dim}, base_mean has {m}; give explicit rows"
                            ),
                        ));
                    }
                    (0..m)
                        .map(|i| (0..dim).map(|j| if i == j { a } else { 0.0 }).collect())
                        .collect()
                }
                ScalarOrRows::Rows(rows) => rows,
            };
            let sigma = match sigma {
                ScalarOrVec::Scalar(s) => vec![s; m],
                ScalarOrVec::Vec(v) => v,
            };
            DistMapSpec::GaussianLocationScale(GaussianMap {
                base_mean,
                shift,
                sigma,
            })
        }
        RawMap::StrategicResponse {
            class_mean,
            feature_sigma,
            positive_rate,
            cost,
        } => {
            let positive_rate = positive_rate.unwrap_or_else(|| {
                defaults.push("map.positive_rate".to_string());
                0.5
            });
            DistMapSpec::StrategicResponse(StrategicMap {
                class_mean,
                feature_sigma,
                positive_rate,
                cost,
            })
        }
    };

    let declared = raw.constants.unwrap_or_else(|| {
        defaults.push("constants".to_string());
        ConstantSet::default()
    });

    let mut instance = Instance::new(domain, loss, map, declared)?;
    instance.name = raw.name;
    Ok(LoadedInstance {
        instance,
        defaults_applied: defaults,
    })
}

/// Serializes an instance so that `load_instance` gives it back unchanged.
pub fn to_config_string(inst: &Instance) -> String {
    let map = match &inst.map {
        DistMapSpec::GaussianLocationScale(g) => RawMap::GaussianLocationScale {
            base_mean: g.base_mean.clone(),
            shift: ScalarOrRows::Rows(g.shift.clone()),
            sigma: ScalarOrVec::Vec(g.sigma.clone()),
        },
        DistMapSpec::StrategicResponse(s) => RawMap::StrategicResponse {
            class_mean: s.class_mean.clone(),
            feature_sigma: s.feature_sigma,
            positive_rate: Some(s.positive_rate),
            cost: s.cost,
        },
    };
    let raw = RawConfig {
        name: inst.name.clone(),
        domain: RawDomain {
            lower: inst.domain.lower.clone(),
            upper: inst.domain.upper.clone(),
        },
        loss: RawLoss {
            kind: inst.loss.kind,
            lambda: Some(inst.loss.lambda),
        },
        map,
        constants: Some(inst.declared.clone()),
    };
    toml::to_string(&raw).expect("instance serializes to TOML")
}
