//! Spectral (distortion) risk measures on finite spaces.
//!
//! A risk measure here is specified by a discrete weighting measure on the
//! tail levels `(0, 1]`. Its distortion function is the concave piecewise
//! linear function obtained by integrating the induced step density; the risk
//! of a random variable is the negated distorted expectation, evaluated
//! exactly by sorting scenarios and weighting them with distortion increments
//! of cumulative probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{beta_quantile, real, tol, Scalar};
use crate::scenario::{RandomVariable, ScenarioSpace};

/// Discrete weighting measure: atoms `(level, weight)` with levels strictly
/// increasing in `(0, 1]`, positive weights summing to one (1e-12 validation,
/// then one renormalization). Atoms supplied at exactly equal levels are
/// merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightingMeasure<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> WeightingMeasure<T> {
    pub fn new(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::shape("weighting measure must have at least one atom"));
        }
        for &(level, weight) in &atoms {
            if !level.is_finite() || level <= T::zero() || level > T::one() {
                return Err(Error::domain(format!(
                    "atom level must lie in (0, 1], got {level}"
                )));
            }
            if !weight.is_finite() || weight <= T::zero() {
                return Err(Error::domain(format!(
                    "atom weight must be positive and finite, got {weight}"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("levels are finite"));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (level, weight) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == level => last.1 += weight,
                _ => merged.push((level, weight)),
            }
        }
        let total: T = merged.iter().map(|&(_, w)| w).sum();
        if (total - T::one()).abs() > tol::<T>(1e-12) {
            return Err(Error::domain(format!(
                "atom weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        for atom in &mut merged {
            atom.1 /= total;
        }
        Ok(WeightingMeasure { atoms: merged })
    }

    /// Point mass at `level`: the tail measure averaging the worst `level`
    /// fraction of outcomes.
    pub fn tail_var(level: T) -> Result<Self> {
        Self::new(vec![(level, T::one())])
    }

    /// Grid discretization of the two-parameter family with weighting density
    /// Beta(`beta + 1`, `alpha - beta`): `grid` equal-weight atoms placed at
    /// the cell-median quantiles of that distribution.
    ///
    /// Requires `alpha > -1`, `-1 < beta < alpha` and `grid >= 2`.
    pub fn beta_var_grid(alpha: T, beta: T, grid: usize) -> Result<Self> {
        let neg_one = -T::one();
        if !(alpha > neg_one) {
            return Err(Error::domain(format!(
                "beta-family parameter alpha must exceed -1, got {alpha}"
            )));
        }
        if !(beta > neg_one && beta < alpha) {
            return Err(Error::domain(format!(
                "beta-family parameter beta must lie in (-1, alpha) = (-1, {alpha}), got {beta}"
            )));
        }
        if grid < 2 {
            return Err(Error::domain(format!(
                "grid size must be at least 2, got {grid}"
            )));
        }
        let a = beta + T::one();
        let b = alpha - beta;
        let m = real::<T>(grid as f64);
        let w = T::one() / m;
        let half = real::<T>(0.5);
        let mut atoms = Vec::with_capacity(grid);
        for i in 0..grid {
            let p = (real::<T>(i as f64) + half) / m;
            atoms.push((beta_quantile(a, b, p), w));
        }
        Self::new(atoms)
    }

    /// Grid discretization of the one-parameter sub-family (`beta = 1`); the
    /// continuous measure is only proper for `alpha > 1`.
    pub fn alpha_var_grid(alpha: T, grid: usize) -> Result<Self> {
        if !(alpha > T::one()) {
            return Err(Error::domain(format!(
                "the one-parameter grid family requires alpha > 1 (beta = 1 must stay below alpha), got {alpha}"
            )));
        }
        Self::beta_var_grid(alpha, T::one(), grid)
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The concave distortion function of this measure.
    ///
    /// The step density at `x` is the total of `weight / level` over atoms
    /// with `level >= x`; integrating it gives value
    /// `sum_{level_i <= x} weight_i + x * sum_{level_i > x} weight_i / level_i`
    /// at each knot, evaluated directly per knot to avoid accumulation drift.
    pub fn distortion(&self) -> DistortionFunction<T> {
        let k = self.atoms.len();
        let mut suffix = vec![T::zero(); k + 1];
        for j in (0..k).rev() {
            let (level, weight) = self.atoms[j];
            suffix[j] = suffix[j + 1] + weight / level;
        }
        let mut knots = Vec::with_capacity(k + 2);
        knots.push((T::zero(), T::zero()));
        let mut prefix = T::zero();
        for j in 0..k {
            let (level, weight) = self.atoms[j];
            prefix += weight;
            knots.push((level, prefix + level * suffix[j + 1]));
        }
        // The prefix at the last atom is the total weight, which is exactly
        // one after renormalization; pin it so the function is flat (not
        // sloped by a few ulps) past the last atom level.
        knots.last_mut().expect("at least two knots").1 = T::one();
        let last = knots.last().expect("at least two knots").0;
        if last < T::one() {
            knots.push((T::one(), T::one()));
        }
        DistortionFunction::new(knots).expect("atoms produce a valid concave distortion")
    }

    /// Exact risk of `rv`: scenarios are sorted ascending (stable) and the
    /// sorted values are weighted by distortion increments of the cumulative
    /// probabilities.
    pub fn risk(&self, space: &ScenarioSpace<T>, rv: &RandomVariable<T>) -> Result<T> {
        self.distortion().risk(space, rv)
    }
}

/// Concave piecewise-linear distortion function on `[0, 1]` stored by knots.
///
/// Invariants: knot x-coordinates strictly increase from 0 to 1, values are
/// nondecreasing with value 0 at 0 and 1 at 1, and slopes strictly decrease
/// across knots once collinear segments are merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionFunction<T> {
    knots: Vec<(T, T)>,
}

impl<T: Scalar> DistortionFunction<T> {
    pub fn new(knots: Vec<(T, T)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::shape("distortion needs at least the two endpoint knots"));
        }
        for &(x, y) in &knots {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::domain("distortion knots must be finite".to_string()));
            }
        }
        let xtol = tol::<T>(1e-14);
        // Merge knots whose x-coordinates coincide within 1e-14.
        let mut dedup: Vec<(T, T)> = Vec::with_capacity(knots.len());
        for (x, y) in knots {
            match dedup.last() {
                Some(&(px, _)) if (x - px).abs() <= xtol => {}
                Some(&(px, _)) if x < px => {
                    return Err(Error::domain(
                        "distortion knot x-coordinates must be increasing".to_string(),
                    ))
                }
                _ => dedup.push((x, y)),
            }
        }
        if dedup.len() < 2 {
            return Err(Error::shape("distortion needs at least the two endpoint knots"));
        }
        let vtol = tol::<T>(1e-12);
        let (first, last) = (dedup[0], *dedup.last().expect("nonempty"));
        if first.0.abs() > xtol || first.1.abs() > vtol {
            return Err(Error::domain(format!(
                "distortion must start at (0, 0), got ({}, {})",
                first.0, first.1
            )));
        }
        if (last.0 - T::one()).abs() > xtol || (last.1 - T::one()).abs() > vtol {
            return Err(Error::domain(format!(
                "distortion must end at (1, 1), got ({}, {})",
                last.0, last.1
            )));
        }
        dedup[0] = (T::zero(), T::zero());
        let n = dedup.len();
        dedup[n - 1] = (T::one(), T::one());

        // Stack pass: enforce monotone values and concavity, merging
        // collinear segments as they appear.
        let mut out: Vec<(T, T)> = Vec::with_capacity(n);
        for (x, y) in dedup {
            let (_, py) = *out.last().unwrap_or(&(T::zero(), T::zero()));
            if !out.is_empty() && y < py - vtol {
                return Err(Error::domain(
                    "distortion values must be nondecreasing".to_string(),
                ));
            }
            out.push((x, if out.is_empty() { y } else { y.max(py) }));
            while out.len() >= 3 {
                let a = out[out.len() - 3];
                let b = out[out.len() - 2];
                let c = out[out.len() - 1];
                let s1 = (b.1 - a.1) / (b.0 - a.0);
                let s2 = (c.1 - b.1) / (c.0 - b.0);
                let stol = tol::<T>(1e-12) * (T::one() + s1.abs().max(s2.abs()));
                if s2 > s1 + stol {
                    return Err(Error::domain(format!(
                        "distortion is not concave: slope rises from {s1} to {s2} at x = {}",
                        b.0
                    )));
                }
                if (s2 - s1).abs() <= stol {
                    let len = out.len();
                    out.remove(len - 2);
                } else {
                    break;
                }
            }
        }
        Ok(DistortionFunction { knots: out })
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    /// Function value at `x`, clamping arguments into `[0, 1]` so cumulative
    /// rounding in callers cannot step outside the domain.
    pub fn value(&self, x: T) -> T {
        let x = x.max(T::zero()).min(T::one());
        let idx = self.knots.partition_point(|&(kx, _)| kx <= x);
        if idx == 0 {
            return self.knots[0].1;
        }
        if idx == self.knots.len() {
            return self.knots[self.knots.len() - 1].1;
        }
        let (x0, y0) = self.knots[idx - 1];
        if x == x0 {
            return y0;
        }
        let (x1, y1) = self.knots[idx];
        y0 + (x - x0) * (y1 - y0) / (x1 - x0)
    }

    /// Concave conjugate `sup_{y in [0,1]} (value(y) - x * y)` for `x >= 0`;
    /// the supremum of a concave piecewise-linear function minus a line is
    /// attained at a knot.
    pub fn conjugate(&self, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return Err(Error::domain(format!(
                "conjugate argument must be nonnegative, got {x}"
            )));
        }
        let mut best = T::neg_infinity();
        for &(kx, ky) in &self.knots {
            best = best.max(ky - x * kx);
        }
        Ok(best)
    }

    /// Increments `value(z_t) - value(z_{t-1})` over a nondecreasing grid
    /// starting implicitly at 0.
    pub fn increments(&self, zs: &[T]) -> Vec<T> {
        let mut prev = T::zero();
        zs.iter()
            .map(|&z| {
                let v = self.value(z);
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }

    /// Exact risk of `rv` under this distortion; see
    /// [`WeightingMeasure::risk`].
    pub fn risk(&self, space: &ScenarioSpace<T>, rv: &RandomVariable<T>) -> Result<T> {
        if rv.len() != space.len() {
            return Err(Error::shape(format!(
                "random variable has {} values but the space has {} scenarios",
                rv.len(),
                space.len()
            )));
        }
        let mut order: Vec<usize> = (0..space.len()).collect();
        order.sort_by(|&a, &b| {
            rv.values()[a]
                .partial_cmp(&rv.values()[b])
                .expect("random variable values are finite")
        });
        let mut zs = Vec::with_capacity(order.len());
        let mut acc = T::zero();
        for &i in &order {
            acc += space.probs()[i];
            zs.push(acc);
        }
        *zs.last_mut().expect("space is nonempty") = T::one();
        let increments = self.increments(&zs);
        let mut risk = T::zero();
        for (&i, d) in order.iter().zip(increments) {
            risk -= rv.values()[i] * d;
        }
        Ok(risk)
    }

    /// Recovers the weighting measure whose distortion this is: an atom at
    /// each interior kink `x` with mass `x * (left slope - right slope)`,
    /// plus an atom at 1 of mass equal to the final slope (the function is
    /// extended constant beyond 1).
    pub fn to_weighting(&self) -> Result<WeightingMeasure<T>> {
        let mut slopes = Vec::with_capacity(self.knots.len() - 1);
        for pair in self.knots.windows(2) {
            slopes.push((pair[1].1 - pair[0].1) / (pair[1].0 - pair[0].0));
        }
        // Masses at the level of rounding noise are artifacts of knot
        // arithmetic, not atoms.
        let dust = tol::<T>(1e-13);
        let mut atoms = Vec::new();
        for j in 1..self.knots.len() - 1 {
            let mass = self.knots[j].0 * (slopes[j - 1] - slopes[j]);
            if mass > dust {
                atoms.push((self.knots[j].0, mass));
            }
        }
        let final_slope = *slopes.last().expect("at least one segment");
        if final_slope > dust {
            atoms.push((T::one(), final_slope));
        }
        WeightingMeasure::new(atoms)
    }
}

/// Serializable specification of a weighting measure, as accepted by the CLI:
/// `{"type":"tailvar","lambda":0.5}`, `{"type":"discrete","atoms":[[l,w],..]}`,
/// `{"type":"alphavar","alpha":3,"grid":200}` or
/// `{"type":"betavar","alpha":a,"beta":b,"grid":m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec<T> {
    TailVar { lambda: T },
    Discrete { atoms: Vec<(T, T)> },
    AlphaVar { alpha: T, grid: usize },
    BetaVar { alpha: T, beta: T, grid: usize },
}

impl<T: Scalar> MeasureSpec<T> {
    pub fn build(&self) -> Result<WeightingMeasure<T>> {
        match self {
            MeasureSpec::TailVar { lambda } => WeightingMeasure::tail_var(*lambda),
            MeasureSpec::Discrete { atoms } => WeightingMeasure::new(atoms.clone()),
            MeasureSpec::AlphaVar { alpha, grid } => {
                WeightingMeasure::alpha_var_grid(*alpha, *grid)
            }
            MeasureSpec::BetaVar { alpha, beta, grid } => {
                WeightingMeasure::beta_var_grid(*alpha, *beta, *grid)
            }
        }
    }
}

impl<T: Scalar + serde::de::DeserializeOwned> MeasureSpec<T> {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(format!("measure spec: {e}")))
    }
}
