//! Dense linear programming by the two-phase primal simplex method.
//!
//! The solver keeps the problem in dictionary form: basic variables are
//! expressed in terms of the nonbasic ones, so the working matrix has one
//! column per nonbasic variable rather than one per variable. For problems
//! with many rows and few structural variables (the shape produced by the
//! pricing routines) this is dramatically smaller than a full tableau.
//!
//! Pivoting uses Bland's smallest-index rule throughout, which makes the
//! solver deterministic and immune to cycling. Solutions are verified before
//! being returned: primal residuals, dual signs and complementary slackness
//! are all checked against the original data, and a failure surfaces as a
//! conditioning error rather than a silently wrong answer.

use crate::error::{Error, Result};
use crate::num::{real, Scalar};

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A linear program over variables `x[0..n]`:
/// optimize `c'x` subject to equality rows `a'x = b`, inequality rows
/// `a'x <= b`, and per-variable bounds. Bounds default to `[0, +inf)`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    sense: Sense,
    objective: Vec<T>,
    eq: Vec<(Vec<T>, T)>,
    le: Vec<(Vec<T>, T)>,
    lower: Vec<Option<T>>,
    upper: Vec<Option<T>>,
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of a solve. `solution`, `value` and the dual vectors are only
/// meaningful when `status` is `Optimal`; `ray` is `Some` exactly when the
/// status is `Unbounded` and then holds an improving feasible direction.
///
/// Dual values are shadow prices: `dual_eq[i]` (resp. `dual_le[i]`) is the
/// derivative of the optimal value with respect to the right-hand side of
/// equality (resp. inequality) row `i`. For a maximization with `<=` rows
/// the inequality duals are nonnegative.
#[derive(Debug, Clone)]
pub struct LpOutcome<T> {
    pub status: LpStatus,
    pub value: T,
    pub solution: Vec<T>,
    pub dual_eq: Vec<T>,
    pub dual_le: Vec<T>,
    pub ray: Option<Vec<T>>,
}

impl<T: Scalar> LinearProgram<T> {
    /// New program with the given objective; all variables start with
    /// bounds `[0, +inf)`.
    pub fn new(sense: Sense, objective: Vec<T>) -> Result<Self> {
        if objective.is_empty() {
            return Err(Error::shape("objective has no variables".to_string()));
        }
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain(
                "objective coefficients must be finite".to_string(),
            ));
        }
        let n = objective.len();
        Ok(Self {
            sense,
            objective,
            eq: Vec::new(),
            le: Vec::new(),
            lower: vec![Some(T::zero()); n],
            upper: vec![None; n],
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Set bounds for variable `j`; `None` means unbounded on that side.
    pub fn set_bounds(&mut self, j: usize, lower: Option<T>, upper: Option<T>) -> Result<()> {
        if j >= self.num_vars() {
            return Err(Error::shape(format!(
                "variable index {j} out of range for {} variables",
                self.num_vars()
            )));
        }
        for side in [lower, upper].iter().flatten() {
            if !side.is_finite() {
                return Err(Error::domain(
                    "finite bounds required; use None for an unbounded side".to_string(),
                ));
            }
        }
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                return Err(Error::domain(format!(
                    "lower bound {l} exceeds upper bound {u} for variable {j}"
                )));
            }
        }
        self.lower[j] = lower;
        self.upper[j] = upper;
        Ok(())
    }

    /// Mark variable `j` as free (unbounded both sides).
    pub fn set_free(&mut self, j: usize) -> Result<()> {
        self.set_bounds(j, None, None)
    }

    fn check_row(&self, coeffs: &[T], rhs: T) -> Result<()> {
        if coeffs.len() != self.num_vars() {
            return Err(Error::shape(format!(
                "row has {} coefficients but the program has {} variables",
                coeffs.len(),
                self.num_vars()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !rhs.is_finite() {
            return Err(Error::domain("row data must be finite".to_string()));
        }
        Ok(())
    }

    /// Add an equality row `coeffs' x = rhs`.
    pub fn add_eq(&mut self, coeffs: Vec<T>, rhs: T) -> Result<()> {
        self.check_row(&coeffs, rhs)?;
        self.eq.push((coeffs, rhs));
        Ok(())
    }

    /// Add an inequality row `coeffs' x <= rhs`.
    pub fn add_le(&mut self, coeffs: Vec<T>, rhs: T) -> Result<()> {
        self.check_row(&coeffs, rhs)?;
        self.le.push((coeffs, rhs));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Eq,
    Le,
    Ge,
}

/// Origin of an internal row, for mapping duals back.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    UserEq(usize),
    UserLe(usize),
    Bound,
}

struct Dictionary<T> {
    m: usize,
    nb: usize,
    /// Row-major `m x nb`: basic = rhs - d * nonbasic.
    d: Vec<T>,
    rhs: Vec<T>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Reduced costs of the nonbasic variables and the objective constant:
    /// objective = obj_const + obj' nonbasic.
    obj: Vec<T>,
    obj_const: T,
    /// Variable ids `>= art_base` are artificial.
    art_base: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded { slot: usize },
}

#[allow(clippy::needless_range_loop)]
impl<T: Scalar> Dictionary<T> {
    fn at(&self, i: usize, j: usize) -> T {
        self.d[i * self.nb + j]
    }

    fn exchange(&mut self, l: usize, slot: usize) -> Result<()> {
        let piv = self.at(l, slot);
        if piv.abs() < real::<T>(1e-11) {
            return Err(Error::Conditioning(format!(
                "pivot magnitude {} below breakdown threshold",
                piv.abs()
            )));
        }
        let inv = piv.recip();
        let nb = self.nb;
        for j in 0..nb {
            if j != slot {
                self.d[l * nb + j] *= inv;
            }
        }
        self.d[l * nb + slot] = inv;
        self.rhs[l] *= inv;
        let (lrow_start, _) = (l * nb, (l + 1) * nb);
        for i in 0..self.m {
            if i == l {
                continue;
            }
            let f = self.at(i, slot);
            if f == T::zero() {
                continue;
            }
            for j in 0..nb {
                if j != slot {
                    let delta = f * self.d[lrow_start + j];
                    self.d[i * nb + j] -= delta;
                }
            }
            self.d[i * nb + slot] = -f * inv;
            let dr = f * self.rhs[l];
            self.rhs[i] -= dr;
        }
        let f = self.obj[slot];
        if f != T::zero() {
            for j in 0..nb {
                if j != slot {
                    let delta = f * self.d[lrow_start + j];
                    self.obj[j] -= delta;
                }
            }
            self.obj[slot] = -f * inv;
            self.obj_const += f * self.rhs[l];
        }
        std::mem::swap(&mut self.basic[l], &mut self.nonbasic[slot]);
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(Error::Conditioning(format!(
                "simplex iteration limit {} exceeded",
                self.max_iterations
            )));
        }
        Ok(())
    }

    /// Run Bland's rule to optimality or unboundedness. Never lets an
    /// artificial variable re-enter the basis.
    fn run(&mut self) -> Result<Step> {
        let opt_tol = real::<T>(1e-9);
        let ratio_tie = real::<T>(1e-12);
        loop {
            // Entering: most negative is irrelevant; Bland takes the
            // smallest variable id with a negative reduced cost.
            let mut enter: Option<(usize, usize)> = None; // (id, slot)
            for slot in 0..self.nb {
                let id = self.nonbasic[slot];
                if id >= self.art_base {
                    continue;
                }
                if self.obj[slot] < -opt_tol
                    && enter.is_none_or(|(best, _)| id < best) {
                        enter = Some((id, slot));
                    }
            }
            let Some((_, slot)) = enter else {
                return Ok(Step::Optimal);
            };
            // Leaving: minimum ratio; ties resolved by smallest basic id.
            let mut leave: Option<(T, usize, usize)> = None; // (ratio, id, row)
            for i in 0..self.m {
                let a = self.at(i, slot);
                if a > real::<T>(1e-11) {
                    let ratio = self.rhs[i].max(T::zero()) / a;
                    let id = self.basic[i];
                    let better = match leave {
                        None => true,
                        Some((best, best_id, _)) => {
                            if ratio < best - ratio_tie * (T::one() + best.abs()) {
                                true
                            } else if ratio <= best + ratio_tie * (T::one() + best.abs()) {
                                id < best_id
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some((ratio, id, i));
                    }
                }
            }
            match leave {
                Some((_, _, l)) => self.exchange(l, slot)?,
                None => return Ok(Step::Unbounded { slot }),
            }
        }
    }
}

/// Solve the program. Returns an error only for malformed input or numerical
/// breakdown; infeasible and unbounded instances are reported in the status.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpOutcome<T>> {
    let n = lp.num_vars();

    // --- variable transform -------------------------------------------------
    let mut cols: Vec<(usize, T)> = Vec::new();
    let mut shift = vec![T::zero(); n];
    let mut bound_rows: Vec<(usize, T)> = Vec::new();
    for (v, (&lo, &up)) in lp.lower.iter().zip(&lp.upper).enumerate() {
        match (lo, up) {
            (Some(l), None) => {
                shift[v] = l;
                cols.push((v, T::one()));
            }
            (Some(l), Some(u)) => {
                shift[v] = l;
                cols.push((v, T::one()));
                bound_rows.push((cols.len() - 1, u - l));
            }
            (None, Some(u)) => {
                shift[v] = u;
                cols.push((v, -T::one()));
            }
            (None, None) => {
                cols.push((v, T::one()));
                cols.push((v, -T::one()));
            }
        }
    }
    let nc = cols.len();

    // --- row assembly with nonnegative right-hand sides ---------------------
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    let mut kinds: Vec<RowKind> = Vec::new();
    let mut origins: Vec<RowOrigin> = Vec::new();
    let mut row_flip: Vec<T> = Vec::new();
    {
        let mut push_row = |coeffs: &[T], b: T, kind: RowKind, origin: RowOrigin| {
            let mut a: Vec<T> = cols.iter().map(|&(v, s)| coeffs[v] * s).collect();
            let mut b = b - coeffs.iter().zip(&shift).map(|(&c, &s)| c * s).sum::<T>();
            let mut flip = T::one();
            let mut kind = kind;
            if b < T::zero() {
                for x in a.iter_mut() {
                    *x = -*x;
                }
                b = -b;
                flip = -T::one();
                kind = match kind {
                    RowKind::Eq => RowKind::Eq,
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                };
            }
            rows.push(a);
            rhs.push(b);
            kinds.push(kind);
            origins.push(origin);
            row_flip.push(flip);
        };
        for (i, (coeffs, b)) in lp.eq.iter().enumerate() {
            push_row(coeffs, *b, RowKind::Eq, RowOrigin::UserEq(i));
        }
        for (i, (coeffs, b)) in lp.le.iter().enumerate() {
            push_row(coeffs, *b, RowKind::Le, RowOrigin::UserLe(i));
        }
    }
    for &(col, width) in &bound_rows {
        let mut a = vec![T::zero(); nc];
        a[col] = T::one();
        rows.push(a);
        rhs.push(width);
        kinds.push(RowKind::Le);
        origins.push(RowOrigin::Bound);
        row_flip.push(T::one());
    }
    let m = rows.len();

    // --- equilibration -------------------------------------------------------
    let mut row_scale = vec![T::one(); m];
    for i in 0..m {
        let mx = rows[i].iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
        if mx > T::zero() {
            row_scale[i] = mx;
            for x in rows[i].iter_mut() {
                *x /= mx;
            }
            rhs[i] /= mx;
        }
    }
    let mut col_scale = vec![T::one(); nc];
    for j in 0..nc {
        let mut mx = T::zero();
        for row in rows.iter() {
            mx = mx.max(row[j].abs());
        }
        if mx > T::zero() {
            col_scale[j] = mx;
            for row in rows.iter_mut() {
                row[j] /= mx;
            }
        }
    }

    let sense_sign = match lp.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };
    let c_int: Vec<T> = cols
        .iter()
        .zip(&col_scale)
        .map(|(&(v, s), &cs)| sense_sign * lp.objective[v] * s / cs)
        .collect();

    // --- dictionary construction ---------------------------------------------
    // Variable ids: structural cols, then one slack/surplus id per row, then
    // one artificial id per row (only Ge/Eq rows actually use theirs).
    let slack_id = |i: usize| nc + i;
    let art_id = |i: usize| nc + m + i;
    let art_base = nc + m;

    let mut nonbasic: Vec<usize> = (0..nc).collect();
    let mut surplus_slot = vec![usize::MAX; m];
    for i in 0..m {
        if kinds[i] == RowKind::Ge {
            surplus_slot[i] = nonbasic.len();
            nonbasic.push(slack_id(i));
        }
    }
    let nb = nonbasic.len();
    let mut d = vec![T::zero(); m * nb];
    let mut basic = vec![0usize; m];
    let mut has_artificial = false;
    for i in 0..m {
        for j in 0..nc {
            d[i * nb + j] = rows[i][j];
        }
        match kinds[i] {
            RowKind::Le => {
                basic[i] = slack_id(i);
            }
            RowKind::Ge => {
                d[i * nb + surplus_slot[i]] = -T::one();
                basic[i] = art_id(i);
                has_artificial = true;
            }
            RowKind::Eq => {
                basic[i] = art_id(i);
                has_artificial = true;
            }
        }
    }

    let mut dict = Dictionary {
        m,
        nb,
        d,
        rhs,
        basic,
        nonbasic,
        obj: vec![T::zero(); nb],
        obj_const: T::zero(),
        art_base,
        iterations: 0,
        max_iterations: 2000 + 50 * (m + nb),
    };

    // --- phase one -----------------------------------------------------------
    if has_artificial {
        for slot in 0..nb {
            let mut rc = T::zero();
            for i in 0..m {
                if dict.basic[i] >= art_base {
                    rc -= dict.at(i, slot);
                }
            }
            dict.obj[slot] = rc;
        }
        dict.obj_const = (0..m)
            .filter(|&i| dict.basic[i] >= art_base)
            .map(|i| dict.rhs[i])
            .sum();

        match dict.run()? {
            Step::Optimal => {}
            Step::Unbounded { .. } => {
                return Err(Error::Conditioning(
                    "auxiliary objective reported unbounded, which indicates numerical breakdown"
                        .to_string(),
                ));
            }
        }
        let infeasibility: T = (0..m)
            .filter(|&i| dict.basic[i] >= art_base)
            .map(|i| dict.rhs[i].max(T::zero()))
            .sum();
        let feas_tol = real::<T>(1e-9) * (T::one() + real::<T>((m as f64).sqrt()));
        if infeasibility > feas_tol {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                value: T::zero(),
                solution: Vec::new(),
                dual_eq: Vec::new(),
                dual_le: Vec::new(),
                ray: None,
            });
        }
        // Drive remaining artificials out of the basis where possible;
        // rows that resist are redundant and stay inert.
        for l in 0..m {
            if dict.basic[l] >= art_base {
                let slot = (0..nb).find(|&s| {
                    dict.nonbasic[s] < art_base && dict.at(l, s).abs() > real::<T>(1e-9)
                });
                if let Some(s) = slot {
                    dict.exchange(l, s)?;
                }
            }
        }
    }

    // --- phase two -----------------------------------------------------------
    let cost = |id: usize| -> T {
        if id < nc {
            c_int[id]
        } else {
            T::zero()
        }
    };
    for slot in 0..nb {
        let mut rc = cost(dict.nonbasic[slot]);
        for i in 0..m {
            let cb = cost(dict.basic[i]);
            if cb != T::zero() {
                rc -= cb * dict.at(i, slot);
            }
        }
        dict.obj[slot] = rc;
    }
    dict.obj_const = (0..m).map(|i| cost(dict.basic[i]) * dict.rhs[i]).sum();

    let step = dict.run()?;

    if let Step::Unbounded { slot } = step {
        // Improving direction: entering column moves by +1, basics respond.
        let mut dir_cols = vec![T::zero(); nc];
        let enter_id = dict.nonbasic[slot];
        if enter_id < nc {
            dir_cols[enter_id] = T::one();
        }
        for i in 0..m {
            if dict.basic[i] < nc {
                dir_cols[dict.basic[i]] = -dict.at(i, slot);
            }
        }
        let mut ray = vec![T::zero(); n];
        for (j, &(v, s)) in cols.iter().enumerate() {
            ray[v] += s * dir_cols[j] / col_scale[j];
        }
        return Ok(LpOutcome {
            status: LpStatus::Unbounded,
            value: T::zero(),
            solution: Vec::new(),
            dual_eq: Vec::new(),
            dual_le: Vec::new(),
            ray: Some(ray),
        });
    }

    // --- extraction ----------------------------------------------------------
    let mut x_cols = vec![T::zero(); nc];
    for i in 0..m {
        if dict.basic[i] < nc {
            x_cols[dict.basic[i]] = dict.rhs[i];
        }
    }
    let mut solution = shift.clone();
    for (j, &(v, s)) in cols.iter().enumerate() {
        solution[v] += s * x_cols[j] / col_scale[j];
    }
    let const_term: T = shift
        .iter()
        .zip(&lp.objective)
        .map(|(&s, &c)| c * s)
        .sum::<T>();
    let value_internal = dict.obj_const + sense_sign * const_term;
    let value = sense_sign * value_internal;

    // Reduced cost lookup for dual recovery.
    let mut slot_of: Vec<Option<usize>> = vec![None; nc + 2 * m];
    for (s, &id) in dict.nonbasic.iter().enumerate() {
        slot_of[id] = Some(s);
    }
    let mut is_basic: Vec<bool> = vec![false; nc + 2 * m];
    for &id in &dict.basic {
        is_basic[id] = true;
    }
    let rc_of = |id: usize| -> T {
        if is_basic[id] {
            T::zero()
        } else {
            slot_of[id].map_or(T::zero(), |s| dict.obj[s])
        }
    };

    let mut dual_eq = vec![T::zero(); lp.eq.len()];
    let mut dual_le = vec![T::zero(); lp.le.len()];
    for i in 0..m {
        let y_int = match kinds[i] {
            RowKind::Eq => -rc_of(art_id(i)),
            RowKind::Le => -rc_of(slack_id(i)),
            RowKind::Ge => rc_of(slack_id(i)),
        };
        let y = sense_sign * row_flip[i] * y_int / row_scale[i];
        match origins[i] {
            RowOrigin::UserEq(k) => dual_eq[k] = y,
            RowOrigin::UserLe(k) => dual_le[k] = y,
            RowOrigin::Bound => {}
        }
    }

    verify(lp, &solution, value, &dual_eq, &dual_le)?;

    Ok(LpOutcome {
        status: LpStatus::Optimal,
        value,
        solution,
        dual_eq,
        dual_le,
        ray: None,
    })
}

/// Check the claimed optimum against the original data: primal feasibility
/// to 1e-8, dual signs, and complementary slackness to 1e-7.
fn verify<T: Scalar>(
    lp: &LinearProgram<T>,
    x: &[T],
    value: T,
    dual_eq: &[T],
    dual_le: &[T],
) -> Result<()> {
    let feas = real::<T>(1e-8);
    let compl = real::<T>(1e-7);
    for (v, &xv) in x.iter().enumerate() {
        if !xv.is_finite() {
            return Err(Error::Conditioning(format!(
                "variable {v} is not finite in the computed solution"
            )));
        }
        if let Some(l) = lp.lower[v] {
            if xv < l - feas * (T::one() + l.abs()) {
                return Err(Error::Conditioning(format!(
                    "variable {v} violates its lower bound: {xv} < {l}"
                )));
            }
        }
        if let Some(u) = lp.upper[v] {
            if xv > u + feas * (T::one() + u.abs()) {
                return Err(Error::Conditioning(format!(
                    "variable {v} violates its upper bound: {xv} > {u}"
                )));
            }
        }
    }
    let dot = |a: &[T]| -> T { a.iter().zip(x).map(|(&c, &xv)| c * xv).sum() };
    for (i, (coeffs, b)) in lp.eq.iter().enumerate() {
        let r = dot(coeffs) - *b;
        if r.abs() > feas * (T::one() + b.abs()) {
            return Err(Error::Conditioning(format!(
                "equality row {i} has residual {r}"
            )));
        }
    }
    for (i, (coeffs, b)) in lp.le.iter().enumerate() {
        let slack = *b - dot(coeffs);
        if slack < -feas * (T::one() + b.abs()) {
            return Err(Error::Conditioning(format!(
                "inequality row {i} violated by {}",
                -slack
            )));
        }
        let y = dual_le[i];
        // Sign: max problems have nonnegative, min problems nonpositive duals.
        let wrong_sign = match lp.sense {
            Sense::Maximize => (-y).max(T::zero()),
            Sense::Minimize => y.max(T::zero()),
        };
        if wrong_sign > compl {
            return Err(Error::Conditioning(format!(
                "inequality dual {i} has the wrong sign: {y}"
            )));
        }
        if (y * slack).abs() > compl * (T::one() + y.abs()) * (T::one() + b.abs()) {
            return Err(Error::Conditioning(format!(
                "complementary slackness violated on row {i}: dual {y}, slack {slack}"
            )));
        }
    }
    let _ = dual_eq;
    if !value.is_finite() {
        return Err(Error::Conditioning(
            "optimal value is not finite".to_string(),
        ));
    }
    Ok(())
}
