//! Simulation and verification lab for performative prediction.
//!
//! An [`Instance`] couples a loss with a parameter-dependent distribution map
//! `θ ↦ D(θ)`. [`Evaluator`] estimates the performative risk
//! `PR(θ) = DPR(θ, θ)` and its gradient, [`solvers`] runs retraining and
//! gradient methods against grid and fixed-point oracles, [`conditions`]
//! probes the structural assumptions, and [`bounds`] checks the
//! stable-versus-optimal certificates against ground truth.
//!
//! ```
//! use perflab::{presets, Evaluator, Theta};
//!
//! let inst = presets::canonical();
//! let ev = Evaluator::closed_form(&inst).unwrap();
//! let pr = ev.pr(&Theta::scalar(1.0)).unwrap();
//! assert!((pr.value - 1.75).abs() < 1e-12);
//! ```

pub mod bounds;
pub mod conditions;
pub mod config;
pub mod distmaps;
pub mod error;
pub mod losses;
pub mod model;
pub mod objective;
pub mod output;
pub mod par;
pub mod presets;
pub mod risk;
pub mod solvers;
pub mod transport;

pub use config::{load_instance, to_config_string};
pub use error::{Error, Result};
pub use model::{ConstantSet, ConstantSource, Instance, ParamBox, SeedSpec, Theta};
pub use risk::{EvalSettings, Evaluator, RiskEstimate};
