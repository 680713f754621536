//! Seeded random-instance generators shared by the test suites.
//!
//! Not part of the supported API surface; exposed so integration and
//! acceptance tests across the workspace can draw identical instance
//! families.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::num::{real, Scalar};
use crate::scenario::{RandomVariable, ScenarioSpace};
use crate::spectral::WeightingMeasure;

/// Deterministic generator for a test family.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random space with 2..=max_n scenarios and well-separated probabilities.
pub fn random_space<T: Scalar>(rng: &mut ChaCha12Rng, max_n: usize) -> ScenarioSpace<T> {
    let n = rng.gen_range(2..=max_n.max(2));
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs = raw.into_iter().map(|p| real::<T>(p / total)).collect();
    let labels = (1..=n).map(|i| format!("s{i}")).collect();
    ScenarioSpace::new(labels, probs).expect("generated probabilities are valid")
}

/// Random variable with values uniform in [-scale, scale].
pub fn random_rv<T: Scalar>(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> RandomVariable<T> {
    let values = (0..n)
        .map(|_| real::<T>(rng.gen_range(-scale..scale)))
        .collect();
    RandomVariable::new(values).expect("generated values are finite")
}

/// Random variable with all-distinct values (gaps at least `gap`).
pub fn random_rv_distinct<T: Scalar>(
    rng: &mut ChaCha12Rng,
    n: usize,
    scale: f64,
    gap: f64,
) -> RandomVariable<T> {
    loop {
        let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).all(|w| w[1] - w[0] >= gap) {
            let out = values.drain(..).map(real::<T>).collect();
            return RandomVariable::new(out).expect("generated values are finite");
        }
    }
}

/// Random variable re-centered to zero mean under the space's probabilities,
/// so the reference measure itself prices it at zero.
pub fn random_centered_rv<T: Scalar>(
    rng: &mut ChaCha12Rng,
    space: &ScenarioSpace<T>,
    scale: f64,
) -> RandomVariable<T> {
    let raw = random_rv::<T>(rng, space.len(), scale);
    let mean = space.expectation(&raw).expect("aligned by construction");
    raw.affine(T::one(), -mean).expect("finite shift")
}

/// Random discrete weighting measure with 1..=max_atoms atoms on the level
/// grid {1/200, ..., 1} and weights bounded away from zero.
pub fn random_weighting<T: Scalar>(rng: &mut ChaCha12Rng, max_atoms: usize) -> WeightingMeasure<T> {
    let k = rng.gen_range(1..=max_atoms.max(1));
    let mut levels: Vec<u32> = Vec::with_capacity(k);
    while levels.len() < k {
        let c = rng.gen_range(1..=200u32);
        if !levels.contains(&c) {
            levels.push(c);
        }
    }
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let atoms = levels
        .into_iter()
        .zip(raw)
        .map(|(c, w)| (real::<T>(c as f64 / 200.0), real::<T>(w / total)))
        .collect();
    WeightingMeasure::new(atoms).expect("generated atoms are valid")
}
