//! Factor risks, extreme measures, risk contributions and utility measures.
//!
//! These are the measure-level transforms used to attribute a portfolio's
//! risk: the worst-case (extreme) measure a spectral risk attains at, the
//! resulting directional risk contributions of sub-positions, conditioning on
//! factors, and the exponential-utility pricing measure.

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::scenario::{Measure, RandomVariable, ScenarioSpace};
use crate::spectral::WeightingMeasure;

/// Risk of the conditional expectation `E(X | Y)`: the part of the risk of
/// `X` explained by the factor `Y`.
pub fn factor_risk<T: Scalar>(
    mu: &WeightingMeasure<T>,
    space: &ScenarioSpace<T>,
    x: &RandomVariable<T>,
    y: &RandomVariable<T>,
) -> Result<T> {
    mu.risk(space, &space.conditional_expectation(x, y)?)
}

/// An extreme measure together with a uniqueness flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeMeasure<T> {
    pub measure: Measure<T>,
    /// False when the portfolio values contain exact ties, in which case the
    /// stable-sort representative is returned but other extreme measures may
    /// exist.
    pub unique: bool,
}

/// The measure at which the risk of `w` is attained: scenarios are sorted by
/// `w` ascending (stable) and the scenario of rank `t` receives the
/// distortion increment of the cumulative probability at rank `t`.
pub fn extreme_measure<T: Scalar>(
    mu: &WeightingMeasure<T>,
    space: &ScenarioSpace<T>,
    w: &RandomVariable<T>,
) -> Result<ExtremeMeasure<T>> {
    if w.len() != space.len() {
        return Err(Error::shape(format!(
            "portfolio has {} values but the space has {} scenarios",
            w.len(),
            space.len()
        )));
    }
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.sort_by(|&a, &b| {
        w.values()[a]
            .partial_cmp(&w.values()[b])
            .expect("portfolio values are finite")
    });
    let mut unique = true;
    for pair in order.windows(2) {
        if w.values()[pair[0]] == w.values()[pair[1]] {
            unique = false;
            break;
        }
    }
    let distortion = mu.distortion();
    let mut zs = Vec::with_capacity(order.len());
    let mut acc = T::zero();
    for &i in &order {
        acc += space.probs()[i];
        zs.push(acc);
    }
    *zs.last_mut().expect("space is nonempty") = T::one();
    let increments = distortion.increments(&zs);
    let mut masses = vec![T::zero(); space.len()];
    for (&i, d) in order.iter().zip(increments) {
        masses[i] = d.max(T::zero());
    }
    Ok(ExtremeMeasure {
        measure: Measure::new(masses)?,
        unique,
    })
}

/// A risk attribution value together with a uniqueness flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution<T> {
    pub value: T,
    /// False when ties in the sorted portfolio make the extreme measure, and
    /// hence the contribution, potentially non-unique.
    pub unique: bool,
}

/// Contribution of `x` to the risk of the portfolio `w`: the negated
/// expectation of `x` under the extreme measure of `w`. For portfolios
/// without ties this equals the one-sided directional derivative of the risk
/// at `w` in direction `x`.
pub fn risk_contribution<T: Scalar>(
    mu: &WeightingMeasure<T>,
    space: &ScenarioSpace<T>,
    x: &RandomVariable<T>,
    w: &RandomVariable<T>,
) -> Result<Contribution<T>> {
    if x.len() != space.len() {
        return Err(Error::shape(format!(
            "position has {} values but the space has {} scenarios",
            x.len(),
            space.len()
        )));
    }
    let extreme = extreme_measure(mu, space, w)?;
    Ok(Contribution {
        value: -extreme.measure.expectation(x)?,
        unique: extreme.unique,
    })
}

/// Factor-conditioned risk contribution: the contribution of `E(X | Y)` to
/// the risk of `E(W | Y)`.
pub fn factor_risk_contribution<T: Scalar>(
    mu: &WeightingMeasure<T>,
    space: &ScenarioSpace<T>,
    x: &RandomVariable<T>,
    y: &RandomVariable<T>,
    w: &RandomVariable<T>,
) -> Result<Contribution<T>> {
    let xc = space.conditional_expectation(x, y)?;
    let wc = space.conditional_expectation(w, y)?;
    risk_contribution(mu, space, &xc, &wc)
}

/// Exponential-utility pricing measure: masses proportional to
/// `p_i * exp(-gamma * w1_i)`, computed with the max-exponent subtracted so
/// large positions cannot overflow. Requires `gamma > 0`.
pub fn utility_measure<T: Scalar>(
    gamma: T,
    space: &ScenarioSpace<T>,
    w1: &RandomVariable<T>,
) -> Result<Measure<T>> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::domain(format!(
            "risk aversion must be positive and finite, got {gamma}"
        )));
    }
    if w1.len() != space.len() {
        return Err(Error::shape(format!(
            "terminal wealth has {} values but the space has {} scenarios",
            w1.len(),
            space.len()
        )));
    }
    let exponents: Vec<T> = w1.values().iter().map(|&w| -gamma * w).collect();
    let max_e = exponents
        .iter()
        .cloned()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let raw: Vec<T> = space
        .probs()
        .iter()
        .zip(&exponents)
        .map(|(&p, &e)| p * (e - max_e).exp())
        .collect();
    let total: T = raw.iter().cloned().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::Conditioning(format!(
            "utility weights degenerate (total {total}); risk aversion {gamma} is too extreme for these wealths"
        )));
    }
    Measure::new(raw.into_iter().map(|m| m / total).collect())
}
