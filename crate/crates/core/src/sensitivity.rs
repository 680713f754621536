//! Scenario-wise payoff derivatives and the price intervals they span.
//!
//! In an incomplete market a claim's sensitivity to a model input is not a
//! single number: every pricing measure in the valuation set gives one. The
//! generators here build the derivative-of-payoff random variable scenario
//! by scenario; [`delta_interval`] then prices that variable, producing the
//! interval of sensitivities consistent with the good-deal bounds.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::pricing::{price_interval, Aggregation, MarketModel, PriceInterval, ValuationGroup};
use crate::scenario::RandomVariable;

fn require_finite<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::domain(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

/// Derivative of the discounted call payoff with respect to spot.
///
/// The terminal price is modeled as `spot * xi` with `xi` a fixed price
/// relative per scenario, so the payoff `e^{-rT} (S xi - K)^+` has
/// spot-derivative `e^{-rT} xi` wherever the option finishes in the money;
/// the boundary `xi = K/S` is included.
pub fn call_delta_payoff<T: Scalar>(
    spot: T,
    strike: T,
    rate: T,
    expiry: T,
    xi: &RandomVariable<T>,
) -> Result<RandomVariable<T>> {
    require_finite("spot", spot)?;
    require_finite("strike", strike)?;
    require_finite("rate", rate)?;
    require_finite("expiry", expiry)?;
    if !(spot > T::zero()) {
        return Err(Error::domain(format!("spot must be positive, got {spot}")));
    }
    if expiry < T::zero() {
        return Err(Error::domain(format!(
            "expiry must be nonnegative, got {expiry}"
        )));
    }
    let discount = (-rate * expiry).exp();
    let threshold = strike / spot;
    xi.map(|x| {
        if x >= threshold {
            discount * x
        } else {
            T::zero()
        }
    })
}

/// Derivative of the discounted bond-option payoff with respect to the short
/// rate.
///
/// The short rate at expiry is `r0 * xi` per scenario. The underlying bond
/// pays `coupon_n` at `maturity_n > expiry`; each cashflow is discounted by
/// `f_n(r) = exp(-(maturity_n - expiry) * (r + shape_n))`, where `shape_n`
/// is the tabulated curve-shape value for that gap. The option's rate
/// derivative is the discounted sum of `coupon_n * f_n'(r0 xi)` on the
/// exercise set (bond value at least the strike, boundary included), with
/// discounting `exp(-expiry * (r0 + shape_at_expiry))`.
pub fn bond_option_delta_payoff<T: Scalar>(
    short_rate: T,
    strike: T,
    expiry: T,
    schedule: &[(T, T)],
    shape_at_gaps: &[T],
    shape_at_expiry: T,
    xi: &RandomVariable<T>,
) -> Result<RandomVariable<T>> {
    require_finite("short rate", short_rate)?;
    require_finite("strike", strike)?;
    require_finite("expiry", expiry)?;
    require_finite("curve shape at expiry", shape_at_expiry)?;
    if schedule.is_empty() {
        return Err(Error::domain(
            "bond schedule must contain at least one cashflow".to_string(),
        ));
    }
    if shape_at_gaps.len() != schedule.len() {
        return Err(Error::shape(format!(
            "{} curve-shape values for {} cashflows",
            shape_at_gaps.len(),
            schedule.len()
        )));
    }
    let mut gaps = Vec::with_capacity(schedule.len());
    for (&(maturity, coupon), &shape) in schedule.iter().zip(shape_at_gaps) {
        require_finite("cashflow maturity", maturity)?;
        require_finite("coupon", coupon)?;
        require_finite("curve shape", shape)?;
        if maturity <= expiry {
            return Err(Error::domain(format!(
                "cashflow maturity {maturity} must exceed the option expiry {expiry}"
            )));
        }
        gaps.push((maturity - expiry, coupon, shape));
    }
    let discount = (-expiry * (short_rate + shape_at_expiry)).exp();
    xi.map(|x| {
        let r = short_rate * x;
        let mut bond = T::zero();
        let mut deriv = T::zero();
        for &(gap, coupon, shape) in &gaps {
            let df = (-gap * r - gap * shape).exp();
            bond += coupon * df;
            deriv += coupon * (-gap) * df;
        }
        if bond >= strike {
            discount * deriv
        } else {
            T::zero()
        }
    })
}

/// Interval of deltas: the good-deal price interval of the derivative
/// payoff. Every pricing measure consistent with the market and the groups
/// assigns the claim one sensitivity `E_Q[deriv]`; the interval collects
/// them all.
pub fn delta_interval<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    deriv: &RandomVariable<T>,
    mode: Aggregation,
) -> Result<PriceInterval<T>> {
    price_interval(market, groups, deriv, mode)
}
