//! Good-deal price intervals, arbitrage checks, superreplication tranches
//! and liquidity curves on finite scenario markets.
//!
//! The upper price of a claim is the smallest riskless add-on: the infimum
//! over attainable position P&Ls of the risk of hedged exposure. With a
//! spectral risk the infimum is a linear program, built here from the
//! variational form of each tail component: `rho_lambda(Y) = min_c (-c +
//! E(c - Y)^+ / lambda)`. The lower price is the negated upper price of the
//! negated claim.
//!
//! Two aggregation modes combine several measure groups: `Convolution`
//! prices against the intersection of the groups' determining sets (the
//! groups may split the exposure among themselves), `Maximum` against the
//! union (every group must accept the whole trade).

use crate::algebra::{convolve, convolve_distortions};
use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpOutcome, LpStatus, Sense};
use crate::num::{real, tol, Scalar};
use crate::scenario::{Measure, RandomVariable, ScenarioSpace};
use crate::spectral::{DistortionFunction, WeightingMeasure};
use rayon::prelude::*;

/// Which price bound to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// How multiple valuation groups combine into one acceptability criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Intersection of determining sets; the risk functional is the infimal
    /// convolution of the group risks.
    Convolution,
    /// Union of determining sets; the risk functional is the maximum of the
    /// group risks.
    Maximum,
}

/// One valuation group: either a spectral risk measure or an explicit finite
/// family of test measures (their convex hull is understood).
#[derive(Debug, Clone)]
pub enum ValuationGroup<T> {
    Spectral(WeightingMeasure<T>),
    Explicit(Vec<Measure<T>>),
}

impl<T: Scalar> ValuationGroup<T> {
    fn validate(&self, scenarios: usize) -> Result<()> {
        match self {
            ValuationGroup::Spectral(_) => Ok(()),
            ValuationGroup::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::shape(
                        "explicit valuation group has no measures".to_string(),
                    ));
                }
                for q in list {
                    if q.len() != scenarios {
                        return Err(Error::shape(format!(
                            "valuation measure has {} masses but the space has {scenarios} scenarios",
                            q.len()
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// A finite scenario market: named discounted asset P&Ls over a common
/// scenario space, with per-asset position bounds. Bounds must admit the
/// zero trade: lower `<= 0 <=` upper, with `None` for an unbounded side.
#[derive(Debug, Clone)]
pub struct MarketModel<T> {
    space: ScenarioSpace<T>,
    names: Vec<String>,
    assets: Vec<RandomVariable<T>>,
    bounds: Vec<(Option<T>, Option<T>)>,
}

impl<T: Scalar> MarketModel<T> {
    /// New market; every asset starts unconstrained (a two-sided cone).
    pub fn new(
        space: ScenarioSpace<T>,
        assets: Vec<(String, RandomVariable<T>)>,
    ) -> Result<Self> {
        let mut names = Vec::with_capacity(assets.len());
        let mut payoffs = Vec::with_capacity(assets.len());
        for (name, rv) in assets {
            if rv.len() != space.len() {
                return Err(Error::shape(format!(
                    "asset '{name}' has {} values but the space has {} scenarios",
                    rv.len(),
                    space.len()
                )));
            }
            if names.contains(&name) {
                return Err(Error::shape(format!("duplicate asset name '{name}'")));
            }
            names.push(name);
            payoffs.push(rv);
        }
        let n = payoffs.len();
        Ok(Self {
            space,
            names,
            assets: payoffs,
            bounds: vec![(None, None); n],
        })
    }

    /// Restrict positions in asset `i` to `[lower, upper]`; `None` leaves a
    /// side unbounded. The zero position must stay admissible.
    pub fn set_bounds(&mut self, i: usize, lower: Option<T>, upper: Option<T>) -> Result<()> {
        if i >= self.assets.len() {
            return Err(Error::shape(format!(
                "asset index {i} out of range for {} assets",
                self.assets.len()
            )));
        }
        if let Some(l) = lower {
            if !(l <= T::zero()) || !l.is_finite() {
                return Err(Error::domain(format!(
                    "lower position bound must be finite and <= 0, got {l}"
                )));
            }
        }
        if let Some(u) = upper {
            if !(u >= T::zero()) || !u.is_finite() {
                return Err(Error::domain(format!(
                    "upper position bound must be finite and >= 0, got {u}"
                )));
            }
        }
        self.bounds[i] = (lower, upper);
        Ok(())
    }

    /// True when the admissible position set is a cone: every bound is
    /// either absent or pins the side at zero.
    pub fn is_cone(&self) -> bool {
        self.bounds.iter().all(|&(lo, hi)| {
            lo.is_none_or(|l| l == T::zero()) && hi.is_none_or(|u| u == T::zero())
        })
    }

    pub fn space(&self) -> &ScenarioSpace<T> {
        &self.space
    }

    pub fn num_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn asset_names(&self) -> &[String] {
        &self.names
    }

    pub fn assets(&self) -> &[RandomVariable<T>] {
        &self.assets
    }

    pub fn bounds(&self) -> &[(Option<T>, Option<T>)] {
        &self.bounds
    }

    fn check_claim(&self, f: &RandomVariable<T>) -> Result<()> {
        if f.len() != self.space.len() {
            return Err(Error::shape(format!(
                "claim has {} values but the space has {} scenarios",
                f.len(),
                self.space.len()
            )));
        }
        Ok(())
    }

    fn require_cone(&self) -> Result<()> {
        if !self.is_cone() {
            return Err(Error::domain(
                "this operation requires a cone market (position bounds absent or zero)"
                    .to_string(),
            ));
        }
        Ok(())
    }
}

/// Interval of fair prices with, when available from the primal solve, the
/// hedge positions attaining each bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceInterval<T> {
    pub lower: T,
    pub upper: T,
    pub hedge_lower: Option<Vec<T>>,
    pub hedge_upper: Option<Vec<T>>,
}

/// Verdict of the no-strictly-acceptable-opportunities check.
#[derive(Debug, Clone, PartialEq)]
pub enum NsaoOutcome<T> {
    Holds,
    Violated(NsaoCertificate<T>),
}

/// Evidence for a violated check: either an explicit position whose P&L is
/// strictly acceptable at arbitrarily large scale, or (from the dual oracle)
/// the fact that no risk-neutral measure lies in the valuation set.
#[derive(Debug, Clone, PartialEq)]
pub enum NsaoCertificate<T> {
    AcceptableTrade { hedge: Vec<T> },
    EmptyIntersection,
}

fn spectral_measures<T: Scalar>(
    groups: &[ValuationGroup<T>],
) -> Option<Vec<WeightingMeasure<T>>> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        match g {
            ValuationGroup::Spectral(mu) => out.push(mu.clone()),
            ValuationGroup::Explicit(_) => return None,
        }
    }
    Some(out)
}

fn validate_groups<T: Scalar>(
    groups: &[ValuationGroup<T>],
    scenarios: usize,
) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::shape(
            "at least one valuation group is required".to_string(),
        ));
    }
    for g in groups {
        g.validate(scenarios)?;
    }
    Ok(())
}

/// Hedged-risk minimization LP for one spectral measure:
/// `min over h in H of rho_mu(sum_i h_i scale_i X^i - F)`.
///
/// Variables are the positions `h`, one free threshold per measure atom, and
/// one nonnegative shortfall per (atom, scenario).
fn hedged_risk_lp<T: Scalar>(
    market: &MarketModel<T>,
    mu: &WeightingMeasure<T>,
    f: &RandomVariable<T>,
    asset_scale: T,
) -> Result<LinearProgram<T>> {
    let i_count = market.num_assets();
    let atoms = mu.atoms();
    let k_count = atoms.len();
    let j_count = market.space.len();
    let probs = market.space.probs();

    let idx_c = |k: usize| i_count + k;
    let idx_u = |k: usize, j: usize| i_count + k_count + k * j_count + j;
    let n_vars = i_count + k_count + k_count * j_count;

    let mut objective = vec![T::zero(); n_vars];
    for (k, &(lambda, weight)) in atoms.iter().enumerate() {
        objective[idx_c(k)] = -weight;
        for (j, &p) in probs.iter().enumerate() {
            objective[idx_u(k, j)] = weight / lambda * p;
        }
    }
    let mut lp = LinearProgram::new(Sense::Minimize, objective)?;
    for (i, &(lo, hi)) in market.bounds.iter().enumerate() {
        lp.set_bounds(i, lo, hi)?;
    }
    for k in 0..k_count {
        lp.set_free(idx_c(k))?;
    }
    // Shortfall definition: u_kj >= c_k - (sum_i h_i scale X^i_j - F_j).
    for k in 0..k_count {
        for j in 0..j_count {
            let mut row = vec![T::zero(); n_vars];
            row[idx_c(k)] = T::one();
            row[idx_u(k, j)] = -T::one();
            for (i, asset) in market.assets.iter().enumerate() {
                row[i] = -asset.values()[j] * asset_scale;
            }
            lp.add_le(row, -f.values()[j])?;
        }
    }
    Ok(lp)
}

/// Epigraph LP for the maximum of several spectral risks:
/// `min over h of max_n rho_n(sum h_i X^i - F)`.
fn hedged_max_risk_lp<T: Scalar>(
    market: &MarketModel<T>,
    measures: &[WeightingMeasure<T>],
    f: &RandomVariable<T>,
) -> Result<LinearProgram<T>> {
    let i_count = market.num_assets();
    let j_count = market.space.len();
    let probs = market.space.probs();
    let idx_t = i_count;

    let mut offsets = Vec::with_capacity(measures.len());
    let mut n_vars = i_count + 1;
    for mu in measures {
        offsets.push(n_vars);
        n_vars += mu.atoms().len() * (1 + j_count);
    }

    let mut objective = vec![T::zero(); n_vars];
    objective[idx_t] = T::one();
    let mut lp = LinearProgram::new(Sense::Minimize, objective)?;
    for (i, &(lo, hi)) in market.bounds.iter().enumerate() {
        lp.set_bounds(i, lo, hi)?;
    }
    lp.set_free(idx_t)?;

    for (mu, &base) in measures.iter().zip(&offsets) {
        let atoms = mu.atoms();
        let k_count = atoms.len();
        let idx_c = |k: usize| base + k;
        let idx_u = |k: usize, j: usize| base + k_count + k * j_count + j;
        for k in 0..k_count {
            lp.set_free(idx_c(k))?;
        }
        for k in 0..k_count {
            for j in 0..j_count {
                let mut row = vec![T::zero(); n_vars];
                row[idx_c(k)] = T::one();
                row[idx_u(k, j)] = -T::one();
                for (i, asset) in market.assets.iter().enumerate() {
                    row[i] = -asset.values()[j];
                }
                lp.add_le(row, -f.values()[j])?;
            }
        }
        // This group's risk expression stays below the epigraph variable.
        let mut row = vec![T::zero(); n_vars];
        for (k, &(lambda, weight)) in atoms.iter().enumerate() {
            row[idx_c(k)] = -weight;
            for (j, &p) in probs.iter().enumerate() {
                row[idx_u(k, j)] = weight / lambda * p;
            }
        }
        row[idx_t] = -T::one();
        lp.add_le(row, T::zero())?;
    }
    Ok(lp)
}

enum HedgedRisk<T> {
    Bounded { value: T, hedge: Vec<T> },
    AcceptableTrade { hedge: Vec<T> },
}

fn solve_hedged<T: Scalar>(lp: &LinearProgram<T>, i_count: usize) -> Result<HedgedRisk<T>> {
    let out = solve(lp)?;
    match out.status {
        LpStatus::Optimal => Ok(HedgedRisk::Bounded {
            value: out.value,
            hedge: out.solution[..i_count].to_vec(),
        }),
        LpStatus::Unbounded => {
            let ray = out.ray.expect("unbounded status carries a ray");
            Ok(HedgedRisk::AcceptableTrade {
                hedge: ray[..i_count].to_vec(),
            })
        }
        LpStatus::Infeasible => Err(Error::Conditioning(
            "hedged-risk program reported infeasible, but the zero position is always feasible"
                .to_string(),
        )),
    }
}

fn acceptable_trade_error<T: Scalar>(hedge: &[T]) -> Error {
    Error::NsaoViolated(format!(
        "strictly acceptable opportunity exists; scale positions {hedge:?} arbitrarily"
    ))
}

/// Price interval of claim `f` under the given groups and aggregation mode.
///
/// With spectral groups the bounds are computed by the primal hedged-risk
/// LPs and come with attaining hedges. Any explicit group routes the
/// convolution mode to the dual oracle (no hedges, scenario count capped);
/// the maximum mode accepts explicit groups only when there is a single
/// group, where both modes coincide.
pub fn price_interval<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    f: &RandomVariable<T>,
    mode: Aggregation,
) -> Result<PriceInterval<T>> {
    market.require_cone()?;
    market.check_claim(f)?;
    validate_groups(groups, market.space.len())?;

    let interval = match (mode, spectral_measures(groups)) {
        (Aggregation::Convolution, Some(measures)) => {
            let mu_star = convolve(&measures)?;
            let upper = match solve_hedged(
                &hedged_risk_lp(market, &mu_star, f, T::one())?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, hedge } => (value, hedge),
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            let neg_f = f.affine(-T::one(), T::zero())?;
            let lower = match solve_hedged(
                &hedged_risk_lp(market, &mu_star, &neg_f, T::one())?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, hedge } => (value, hedge),
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            PriceInterval {
                lower: -lower.0,
                upper: upper.0,
                hedge_lower: Some(lower.1),
                hedge_upper: Some(upper.1),
            }
        }
        (Aggregation::Convolution, None) => PriceInterval {
            lower: dual_price_bound(market, groups, f, Side::Lower)?,
            upper: dual_price_bound(market, groups, f, Side::Upper)?,
            hedge_lower: None,
            hedge_upper: None,
        },
        (Aggregation::Maximum, maybe) => {
            if groups.len() == 1 {
                // One group: the union and the intersection are the same set.
                return price_interval(market, groups, f, Aggregation::Convolution);
            }
            let Some(measures) = maybe else {
                return Err(Error::Unsupported(
                    "maximum-mode pricing with explicit measure lists supports a single group only"
                        .to_string(),
                ));
            };
            let upper = match solve_hedged(
                &hedged_max_risk_lp(market, &measures, f)?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, hedge } => (value, hedge),
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            let neg_f = f.affine(-T::one(), T::zero())?;
            let lower = match solve_hedged(
                &hedged_max_risk_lp(market, &measures, &neg_f)?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, hedge } => (value, hedge),
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            PriceInterval {
                lower: -lower.0,
                upper: upper.0,
                hedge_lower: Some(lower.1),
                hedge_upper: Some(upper.1),
            }
        }
    };

    if interval.lower > interval.upper + tol::<T>(1e-9) {
        return Err(Error::Conditioning(format!(
            "price bounds crossed: lower {} exceeds upper {}",
            interval.lower, interval.upper
        )));
    }
    Ok(interval)
}

/// No-strictly-acceptable-opportunities check for a cone market: holds when
/// no admissible position has negative aggregated risk, equivalently when a
/// risk-neutral measure exists inside the aggregated valuation set.
pub fn nsao_check<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    mode: Aggregation,
) -> Result<NsaoOutcome<T>> {
    market.require_cone()?;
    validate_groups(groups, market.space.len())?;
    let zero = RandomVariable::constant(market.space.len(), T::zero())?;

    match (mode, spectral_measures(groups)) {
        (Aggregation::Convolution, Some(measures)) => {
            let mu_star = convolve(&measures)?;
            let lp = hedged_risk_lp(market, &mu_star, &zero, T::one())?;
            match solve_hedged(&lp, market.num_assets())? {
                HedgedRisk::Bounded { .. } => Ok(NsaoOutcome::Holds),
                HedgedRisk::AcceptableTrade { hedge } => {
                    Ok(NsaoOutcome::Violated(NsaoCertificate::AcceptableTrade {
                        hedge,
                    }))
                }
            }
        }
        (Aggregation::Maximum, Some(measures)) if groups.len() > 1 => {
            let lp = hedged_max_risk_lp(market, &measures, &zero)?;
            match solve_hedged(&lp, market.num_assets())? {
                HedgedRisk::Bounded { .. } => Ok(NsaoOutcome::Holds),
                HedgedRisk::AcceptableTrade { hedge } => {
                    Ok(NsaoOutcome::Violated(NsaoCertificate::AcceptableTrade {
                        hedge,
                    }))
                }
            }
        }
        (Aggregation::Maximum, None) if groups.len() > 1 => Err(Error::Unsupported(
            "maximum-mode checks with explicit measure lists support a single group only"
                .to_string(),
        )),
        _ => {
            // Explicit groups (or a single group in maximum mode): probe the
            // dual set for a feasible risk-neutral measure.
            let outcome = dual_lp(market, groups, &zero, Side::Upper)?;
            match outcome.status {
                LpStatus::Optimal => Ok(NsaoOutcome::Holds),
                LpStatus::Infeasible => {
                    Ok(NsaoOutcome::Violated(NsaoCertificate::EmptyIntersection))
                }
                LpStatus::Unbounded => Err(Error::Conditioning(
                    "dual feasibility probe reported unbounded on a bounded simplex".to_string(),
                )),
            }
        }
    }
}

/// Scenario-count cap for the brute-force dual: the subset constraints grow
/// as `2^n` per spectral group.
pub const DUAL_SCENARIO_CAP: usize = 14;

fn dual_lp<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    f: &RandomVariable<T>,
    side: Side,
) -> Result<LpOutcome<T>> {
    let j_count = market.space.len();
    if j_count > DUAL_SCENARIO_CAP {
        return Err(Error::Size(format!(
            "brute-force dual supports at most {DUAL_SCENARIO_CAP} scenarios, got {j_count}"
        )));
    }
    let probs = market.space.probs();

    // Variables: the candidate measure q, then one simplex weight vector per
    // explicit group.
    let mut n_vars = j_count;
    let mut explicit_offsets = Vec::new();
    for g in groups {
        if let ValuationGroup::Explicit(list) = g {
            explicit_offsets.push((n_vars, list));
            n_vars += list.len();
        }
    }

    let sense = match side {
        Side::Upper => Sense::Maximize,
        Side::Lower => Sense::Minimize,
    };
    let mut objective = vec![T::zero(); n_vars];
    objective[..j_count].copy_from_slice(f.values());
    let mut lp = LinearProgram::new(sense, objective)?;

    // q is a probability measure.
    let mut row = vec![T::zero(); n_vars];
    row[..j_count].fill(T::one());
    lp.add_eq(row, T::one())?;

    // Risk neutrality: admissible positions never gain in expectation. The
    // sidedness of each asset's cone decides equality vs inequality.
    for (asset, &(lo, hi)) in market.assets.iter().zip(market.bounds()) {
        let two_sided_lo = lo.is_none();
        let two_sided_hi = hi.is_none();
        let mut row = vec![T::zero(); n_vars];
        row[..j_count].copy_from_slice(asset.values());
        match (two_sided_lo, two_sided_hi) {
            (true, true) => lp.add_eq(row, T::zero())?,
            (false, true) => lp.add_le(row, T::zero())?, // positions h >= 0
            (true, false) => {
                let neg: Vec<T> = row.iter().map(|&x| -x).collect();
                lp.add_le(neg, T::zero())?; // positions h <= 0
            }
            (false, false) => {} // position pinned at zero: no constraint
        }
    }

    // Spectral groups: q(A) <= distortion(P(A)) over proper nonempty subsets.
    for g in groups {
        if let ValuationGroup::Spectral(mu) = g {
            let d = mu.distortion();
            let full: u32 = (1u32 << j_count) - 1;
            for mask in 1..full {
                let mut row = vec![T::zero(); n_vars];
                let mut p = T::zero();
                for j in 0..j_count {
                    if mask & (1 << j) != 0 {
                        row[j] = T::one();
                        p += probs[j];
                    }
                }
                lp.add_le(row, d.value(p))?;
            }
        }
    }

    // Explicit groups: q is a convex combination of the group's measures.
    for &(base, list) in &explicit_offsets {
        let mut simplex = vec![T::zero(); n_vars];
        for k in 0..list.len() {
            simplex[base + k] = T::one();
        }
        lp.add_eq(simplex, T::one())?;
        for j in 0..j_count {
            let mut row = vec![T::zero(); n_vars];
            row[j] = T::one();
            for (k, q) in list.iter().enumerate() {
                row[base + k] = -q.masses()[j];
            }
            lp.add_eq(row, T::zero())?;
        }
    }

    solve(&lp)
}

/// Brute-force dual price bound: optimize `E_Q F` over measures `Q` that are
/// risk neutral for the market and lie in every group's determining set
/// (spectral groups via subset constraints, explicit groups via convex
/// combinations). Exponential in the scenario count; capped at
/// [`DUAL_SCENARIO_CAP`] scenarios.
pub fn dual_price_bound<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    f: &RandomVariable<T>,
    side: Side,
) -> Result<T> {
    market.require_cone()?;
    market.check_claim(f)?;
    validate_groups(groups, market.space.len())?;
    let out = dual_lp(market, groups, f, side)?;
    match out.status {
        LpStatus::Optimal => Ok(out.value),
        LpStatus::Infeasible => Err(Error::NsaoViolated(
            "no risk-neutral measure lies in the valuation set".to_string(),
        )),
        LpStatus::Unbounded => Err(Error::Conditioning(
            "dual price program reported unbounded on a bounded simplex".to_string(),
        )),
    }
}

/// Piecewise-linear map with slopes in `{0, 1}`, anchored at `value(0) = 0`.
/// Used to carve a residual liability into tranche payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMap<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
    slope_below: T,
    slope_above: T,
}

impl<T: Scalar> PayoffMap<T> {
    fn new(xs: Vec<T>, slopes: Vec<T>, slope_below: T, slope_above: T) -> Self {
        debug_assert!(!xs.is_empty());
        debug_assert_eq!(slopes.len(), xs.len() - 1);
        // Values relative to the first breakpoint, then re-anchored at 0.
        let mut rel = Vec::with_capacity(xs.len());
        rel.push(T::zero());
        for (i, &s) in slopes.iter().enumerate() {
            let prev = *rel.last().expect("nonempty");
            rel.push(prev + s * (xs[i + 1] - xs[i]));
        }
        let raw = Self {
            xs,
            ys: rel,
            slopes,
            slope_below,
            slope_above,
        };
        let at_zero = raw.value(T::zero());
        let ys = raw.ys.iter().map(|&y| y - at_zero).collect();
        Self { ys, ..raw }
    }

    pub fn value(&self, x: T) -> T {
        let first = self.xs[0];
        let last = *self.xs.last().expect("nonempty");
        if x < first {
            return self.ys[0] - self.slope_below * (first - x);
        }
        if x >= last {
            return *self.ys.last().expect("nonempty") + self.slope_above * (x - last);
        }
        let i = self.xs.partition_point(|&b| b <= x);
        self.ys[i - 1] + self.slopes[i - 1] * (x - self.xs[i - 1])
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.xs
    }

    pub fn values_at_breakpoints(&self) -> &[T] {
        &self.ys
    }

    pub fn interior_slopes(&self) -> &[T] {
        &self.slopes
    }

    pub fn edge_slopes(&self) -> (T, T) {
        (self.slope_below, self.slope_above)
    }
}

/// One group's share of a tranche plan.
#[derive(Debug, Clone)]
pub struct TrancheGroup<T> {
    /// Closed intervals of cumulative probability where this group's
    /// distortion touches the pointwise minimum (the group is "cheapest").
    pub active: Vec<(T, T)>,
    /// The carving map applied to the residual liability.
    pub payoff_map: PayoffMap<T>,
    /// Constant added so the final tranche carries zero risk for this group.
    pub shift: T,
    /// Final tranche payoff: `payoff_map(residual) + shift`.
    pub payoff: RandomVariable<T>,
}

/// Superreplication plan: optimal hedge, residual liability, and a split of
/// the residual into per-group tranches, each costless under its group.
#[derive(Debug, Clone)]
pub struct TranchePlan<T> {
    pub hedge: Vec<T>,
    pub upper_price: T,
    pub residual: RandomVariable<T>,
    pub groups: Vec<TrancheGroup<T>>,
}

/// Split the superreplication of claim `f` into group tranches. The hedge
/// minimizes the convolved risk; the leftover liability is carved along the
/// cumulative-distribution axis: each group takes the region where its
/// distortion is the cheapest (lowest group index wins shared cells), and a
/// constant shift makes each tranche exactly costless for its group. The
/// tranches sum to the residual and the shifts sum to zero.
pub fn superreplication_split<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    f: &RandomVariable<T>,
) -> Result<TranchePlan<T>> {
    market.require_cone()?;
    market.check_claim(f)?;
    validate_groups(groups, market.space.len())?;
    let Some(measures) = spectral_measures(groups) else {
        return Err(Error::Unsupported(
            "tranche construction requires spectral groups".to_string(),
        ));
    };
    let distortions: Vec<DistortionFunction<T>> =
        measures.iter().map(|m| m.distortion()).collect();
    let envelope = convolve_distortions(&distortions)?;
    let mu_star = envelope.clone().to_weighting()?;

    let (upper_price, hedge) = match solve_hedged(
        &hedged_risk_lp(market, &mu_star, f, T::one())?,
        market.num_assets(),
    )? {
        HedgedRisk::Bounded { value, hedge } => (value, hedge),
        HedgedRisk::AcceptableTrade { hedge } => return Err(acceptable_trade_error(&hedge)),
    };

    // Residual liability L = hedge P&L - F + upper price.
    let j_count = market.space.len();
    let mut residual_values = vec![T::zero(); j_count];
    for (i, asset) in market.assets.iter().enumerate() {
        for (rj, &aj) in residual_values.iter_mut().zip(asset.values()) {
            *rj += hedge[i] * aj;
        }
    }
    for (rj, &fj) in residual_values.iter_mut().zip(f.values()) {
        *rj = *rj - fj + upper_price;
    }
    let residual = RandomVariable::new(residual_values)?;

    // Cell ownership along the cumulative-probability axis. The grid is the
    // union of all distortion knots (crossing points included via the
    // envelope's own knots).
    let gap = tol::<T>(1e-14);
    let mut grid: Vec<T> = distortions
        .iter()
        .flat_map(|d| d.knots().iter().map(|&(x, _)| x))
        .chain(envelope.knots().iter().map(|&(x, _)| x))
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("knot abscissae are finite"));
    grid.dedup_by(|a, b| (*a - *b).abs() <= gap);

    let eq_tol = tol::<T>(1e-12);
    let cell_count = grid.len() - 1;
    let mut active = vec![vec![false; cell_count]; measures.len()];
    let mut owner = vec![usize::MAX; cell_count];
    for c in 0..cell_count {
        let mid = (grid[c] + grid[c + 1]) / real::<T>(2.0);
        let env_mid = envelope.value(mid);
        for (n, d) in distortions.iter().enumerate() {
            if (d.value(mid) - env_mid).abs() <= eq_tol * (T::one() + env_mid.abs()) {
                active[n][c] = true;
                if owner[c] == usize::MAX {
                    owner[c] = n;
                }
            }
        }
        if owner[c] == usize::MAX {
            return Err(Error::Conditioning(format!(
                "no distortion matches the envelope on cell ({}, {})",
                grid[c],
                grid[c + 1]
            )));
        }
    }
    // Boundary points belong to the cell on their left; zero to the first.
    // Cumulative probabilities that coincide with a grid knot may differ
    // from it by rounding (crossing knots are computed, not given), so
    // anything within `snap` of a knot counts as sitting on it.
    let snap = tol::<T>(1e-12);
    let own = |z: T| -> usize {
        let i = grid.partition_point(|&g| g < z - snap);
        if i == 0 {
            owner[0]
        } else {
            owner[(i - 1).min(cell_count - 1)]
        }
    };

    // Distribution of the residual: distinct sorted values with cumulative
    // probabilities, the last pinned at one.
    let mut order: Vec<usize> = (0..j_count).collect();
    order.sort_by(|&a, &b| {
        residual.values()[a]
            .partial_cmp(&residual.values()[b])
            .expect("residual values are finite")
    });
    let mut breakpoints: Vec<T> = Vec::new();
    let mut cums: Vec<T> = Vec::new();
    let mut acc = T::zero();
    for &j in &order {
        let v = residual.values()[j];
        acc += market.space.probs()[j];
        if breakpoints.last() == Some(&v) {
            *cums.last_mut().expect("nonempty") = acc;
        } else {
            breakpoints.push(v);
            cums.push(acc);
        }
    }
    *cums.last_mut().expect("space is nonempty") = T::one();

    // Build each group's carving map and tranche.
    let mut tranche_groups = Vec::with_capacity(measures.len());
    let mut shift_sum = T::zero();
    for (n, mu) in measures.iter().enumerate() {
        let slope_below = if own(T::zero()) == n { T::one() } else { T::zero() };
        let slope_above = if own(T::one()) == n { T::one() } else { T::zero() };
        let slopes: Vec<T> = cums[..cums.len() - 1]
            .iter()
            .map(|&z| if own(z) == n { T::one() } else { T::zero() })
            .collect();
        let map = PayoffMap::new(breakpoints.clone(), slopes, slope_below, slope_above);
        let raw = residual.map(|x| map.value(x))?;
        let shift = mu.risk(&market.space, &raw)?;
        shift_sum += shift;
        let payoff = raw.affine(T::one(), shift)?;
        let final_risk = mu.risk(&market.space, &payoff)?;
        if final_risk.abs() > tol::<T>(1e-9) {
            return Err(Error::Conditioning(format!(
                "tranche for group {n} has residual risk {final_risk}"
            )));
        }
        // Merge this group's active cells into closed intervals.
        let mut intervals: Vec<(T, T)> = Vec::new();
        for c in 0..cell_count {
            if active[n][c] {
                match intervals.last_mut() {
                    Some(last) if last.1 == grid[c] => last.1 = grid[c + 1],
                    _ => intervals.push((grid[c], grid[c + 1])),
                }
            }
        }
        tranche_groups.push(TrancheGroup {
            active: intervals,
            payoff_map: map,
            shift,
            payoff,
        });
    }

    if shift_sum.abs() > tol::<T>(1e-9) {
        return Err(Error::Conditioning(format!(
            "tranche shifts sum to {shift_sum}, expected zero"
        )));
    }
    // The carving maps partition the identity; check at breakpoints and
    // midpoints, and the tranches rebuild the residual scenario-wise.
    let mut check_points: Vec<T> = breakpoints.clone();
    for w in breakpoints.windows(2) {
        check_points.push((w[0] + w[1]) / real::<T>(2.0));
    }
    for &x in &check_points {
        let total: T = tranche_groups
            .iter()
            .map(|g| g.payoff_map.value(x))
            .sum();
        if (total - x).abs() > tol::<T>(1e-10) * (T::one() + x.abs()) {
            return Err(Error::Conditioning(format!(
                "carving maps sum to {total} instead of {x}"
            )));
        }
    }
    for j in 0..j_count {
        let total: T = tranche_groups.iter().map(|g| g.payoff.values()[j]).sum();
        let expect = residual.values()[j] + shift_sum;
        if (total - expect).abs() > tol::<T>(1e-10) * (T::one() + expect.abs()) {
            return Err(Error::Conditioning(format!(
                "tranches sum to {total} instead of {expect} in scenario {j}"
            )));
        }
    }

    Ok(TranchePlan {
        hedge,
        upper_price,
        residual,
        groups: tranche_groups,
    })
}

/// One evaluated point of the liquidity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiquidityPoint<T> {
    pub volume: T,
    pub upper: T,
    pub lower: T,
}

/// Volume-dependent price bounds: for each traded volume `v`, positions are
/// held inside the market's box but hedge only `1/v` of each claim unit, so
/// larger trades face wider intervals. Grid points are evaluated
/// concurrently; results are returned in input order.
pub fn liquidity_curve<T: Scalar>(
    market: &MarketModel<T>,
    groups: &[ValuationGroup<T>],
    f: &RandomVariable<T>,
    volumes: &[T],
) -> Result<Vec<LiquidityPoint<T>>> {
    market.check_claim(f)?;
    validate_groups(groups, market.space.len())?;
    let Some(measures) = spectral_measures(groups) else {
        return Err(Error::Unsupported(
            "liquidity curves require spectral groups".to_string(),
        ));
    };
    for &v in volumes {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::domain(format!(
                "volumes must be positive and finite, got {v}"
            )));
        }
    }
    let mu_star = convolve(&measures)?;
    let neg_f = f.affine(-T::one(), T::zero())?;

    volumes
        .par_iter()
        .map(|&v| {
            let scale = v.recip();
            let up = match solve_hedged(
                &hedged_risk_lp(market, &mu_star, f, scale)?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, .. } => value,
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            let down = match solve_hedged(
                &hedged_risk_lp(market, &mu_star, &neg_f, scale)?,
                market.num_assets(),
            )? {
                HedgedRisk::Bounded { value, .. } => value,
                HedgedRisk::AcceptableTrade { hedge } => {
                    return Err(acceptable_trade_error(&hedge))
                }
            };
            Ok(LiquidityPoint {
                volume: v,
                upper: up,
                lower: -down,
            })
        })
        .collect()
}
