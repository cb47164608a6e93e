//! Experience rating with Kappa-N and bonus-malus scale models.
//!
//! The numerical core (design matrices, GLMs, the Tweedie double GLM and the
//! elastic net) is generic over [`Scalar`]; the aliases below fix it to `f64`,
//! which is what the portfolio-level modules use.

pub mod bms_search;
pub mod design;
pub mod elasticnet;
pub mod error;
pub mod evaluate;
pub mod glm;
pub mod irls;
pub mod linalg;
pub mod portfolio;
pub mod scalar;
pub mod simulator;
pub mod special;
pub mod tweedie;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DesignMatrix64 = design::DesignMatrix<f64>;
pub type GlmFit64 = glm::GlmFit<f64>;
pub type Likelihood64 = glm::Likelihood<f64>;
pub type PenalizedFit64 = elasticnet::PenalizedFit<f64>;
pub type TweedieObservation64 = tweedie::TweedieObservation<f64>;
pub type MappedCpg64 = tweedie::MappedCpg<f64>;
pub type DglmFit64 = tweedie::DglmFit<f64>;
