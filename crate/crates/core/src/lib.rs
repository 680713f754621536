//! Exact coherent-risk analytics on finite scenario spaces.
//!
//! The crate evaluates spectral (distortion) risk measures in closed form on
//! finite probability spaces and builds the trading applications on top of
//! them:
//!
//! - [`scenario`]: probability spaces, random variables, measures, file I/O;
//! - [`spectral`]: weighting measures, distortion functions, exact risk;
//! - [`transforms`]: factor risk, extreme measures, risk contributions,
//!   exponential-utility measures;
//! - [`algebra`]: convolution and maxima of risk measures, concave majorants;
//! - [`lp`]: a dense two-phase simplex solver used by the pricing layer;
//! - [`pricing`]: good-deal price intervals, arbitrage checks, dual oracle,
//!   superreplication tranches, liquidity curves;
//! - [`sensitivity`]: derivative payoffs whose price intervals are delta
//!   intervals;
//! - [`estimation`]: empirical and Monte-Carlo risk estimators.
//!
//! All numerical code is generic over [`num::Scalar`] (`f32` or `f64`);
//! the `*64` aliases at the crate root pin the default double-precision
//! instantiations.

// Validation guards are deliberately spelled `!(x > limit)` rather than
// `x <= limit`: the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod error;
pub mod estimation;
pub mod lp;
pub mod num;
pub mod pricing;
pub mod scenario;
pub mod sensitivity;
pub mod spectral;
#[doc(hidden)]
pub mod testkit;
pub mod transforms;

pub use error::{Error, Result};
pub use num::Scalar;

/// Double-precision aliases for the core engine types.
pub type ScenarioSpace64 = scenario::ScenarioSpace<f64>;
pub type RandomVariable64 = scenario::RandomVariable<f64>;
pub type Measure64 = scenario::Measure<f64>;
pub type ScenarioTable64 = scenario::ScenarioTable<f64>;
pub type WeightingMeasure64 = spectral::WeightingMeasure<f64>;
pub type DistortionFunction64 = spectral::DistortionFunction<f64>;
pub type MeasureSpec64 = spectral::MeasureSpec<f64>;
pub type LinearProgram64 = lp::LinearProgram<f64>;
pub type MarketModel64 = pricing::MarketModel<f64>;
pub type PriceInterval64 = pricing::PriceInterval<f64>;
pub type TranchePlan64 = pricing::TranchePlan<f64>;
