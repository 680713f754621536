//! Combining risk measures: convolution, maxima and concave majorants.
//!
//! The convolution of spectral risks (the risk of an optimally split
//! portfolio) is again spectral, with distortion equal to the pointwise
//! minimum of the component distortions. The maximum of spectral risks is
//! coherent but generally not spectral; its smallest spectral upper bound is
//! given by the minimal concave majorant of the component distortions.

use crate::error::{Error, Result};
use crate::num::{real, tol, Scalar};
use crate::scenario::{RandomVariable, ScenarioSpace};
use crate::spectral::{DistortionFunction, WeightingMeasure};

/// Pointwise minimum of two piecewise-linear concave distortions, returned as
/// a knot list. Crossings inside shared segments become new knots.
fn min_envelope<T: Scalar>(
    a: &DistortionFunction<T>,
    b: &DistortionFunction<T>,
) -> Result<DistortionFunction<T>> {
    let gap = tol::<T>(1e-14);
    let mut grid: Vec<T> = a
        .knots()
        .iter()
        .chain(b.knots().iter())
        .map(|&(x, _)| x)
        .collect();
    grid.sort_by(|p, q| p.partial_cmp(q).expect("knot abscissae are finite"));
    grid.dedup_by(|p, q| (*p - *q).abs() <= gap);

    let mut knots: Vec<(T, T)> = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let d0 = a.value(x0) - b.value(x0);
        let d1 = a.value(x1) - b.value(x1);
        knots.push((x0, a.value(x0).min(b.value(x0))));
        if (d0 > T::zero() && d1 < T::zero()) || (d0 < T::zero() && d1 > T::zero()) {
            // The difference is linear on the segment; it vanishes at the
            // crossing, where the envelope has a kink.
            let t = d0 / (d0 - d1);
            let xc = x0 + t * (x1 - x0);
            if xc > x0 + gap && xc < x1 - gap {
                knots.push((xc, a.value(xc).min(b.value(xc))));
            }
        }
    }
    let last = *grid.last().expect("distortions have at least two knots");
    knots.push((last, a.value(last).min(b.value(last))));
    DistortionFunction::new(knots)
}

/// Distortion of the convolution: the pointwise minimum of the component
/// distortions.
pub fn convolve_distortions<T: Scalar>(
    parts: &[DistortionFunction<T>],
) -> Result<DistortionFunction<T>> {
    let (first, rest) = parts.split_first().ok_or_else(|| {
        Error::shape("convolution needs at least one distortion".to_string())
    })?;
    let mut env = first.clone();
    for d in rest {
        env = min_envelope(&env, d)?;
    }
    Ok(env)
}

/// Convolution of weighting measures: the measure whose risk equals the
/// infimum of summed component risks over all splits of a portfolio.
pub fn convolve<T: Scalar>(parts: &[WeightingMeasure<T>]) -> Result<WeightingMeasure<T>> {
    let distortions: Vec<DistortionFunction<T>> =
        parts.iter().map(|m| m.distortion()).collect();
    convolve_distortions(&distortions)?.to_weighting()
}

/// Largest of the component risks of a single position. Coherent, but not
/// representable by any single weighting measure in general.
pub fn max_risk<T: Scalar>(
    parts: &[WeightingMeasure<T>],
    space: &ScenarioSpace<T>,
    x: &RandomVariable<T>,
) -> Result<T> {
    if parts.is_empty() {
        return Err(Error::shape(
            "maximum risk needs at least one measure".to_string(),
        ));
    }
    let mut best = T::neg_infinity();
    for mu in parts {
        best = best.max(mu.risk(space, x)?);
    }
    Ok(best)
}

/// Minimal concave majorant of the pointwise maximum of the component
/// distortions: the upper convex hull of the union of their knots. Its risk
/// is the smallest spectral risk dominating every component risk.
pub fn concave_majorant<T: Scalar>(
    parts: &[DistortionFunction<T>],
) -> Result<DistortionFunction<T>> {
    if parts.is_empty() {
        return Err(Error::shape(
            "concave majorant needs at least one distortion".to_string(),
        ));
    }
    let gap = tol::<T>(1e-14);
    let mut points: Vec<(T, T)> = parts
        .iter()
        .flat_map(|d| d.knots().iter().copied())
        .collect();
    points.sort_by(|p, q| {
        p.0.partial_cmp(&q.0)
            .expect("knot abscissae are finite")
            .then(p.1.partial_cmp(&q.1).expect("knot ordinates are finite"))
    });
    // Coincident abscissae: only the highest point can lie on the majorant.
    points.dedup_by(|next, kept| {
        if (next.0 - kept.0).abs() <= gap {
            kept.1 = kept.1.max(next.1);
            true
        } else {
            false
        }
    });

    let mut hull: Vec<(T, T)> = Vec::with_capacity(points.len());
    for p in points {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            // Non-negative cross product means the middle point is not a
            // strict upper-hull vertex.
            if cross >= -real::<T>(1e-16) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    DistortionFunction::new(hull)
}

/// Weighting measure of the minimal concave majorant.
pub fn majorant_measure<T: Scalar>(
    parts: &[WeightingMeasure<T>],
) -> Result<WeightingMeasure<T>> {
    let distortions: Vec<DistortionFunction<T>> =
        parts.iter().map(|m| m.distortion()).collect();
    concave_majorant(&distortions)?.to_weighting()
}
