//! Finite scenario spaces and the primitives defined on them.
//!
//! A [`ScenarioSpace`] is a finite probability space given by labeled
//! scenarios with strictly positive probabilities. Random variables and
//! probability measures are index-aligned with the space. The module also
//! hosts the scenario-table file formats (JSON and CSV) used by the CLI.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::{DeserializeOwned, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::num::{real, tol, Scalar};

/// A finite probability space: unique scenario labels plus strictly positive
/// probabilities that sum to one (validated to 1e-12, then renormalized once).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpace<T> {
    labels: Vec<String>,
    probs: Vec<T>,
}

impl<T: Scalar> ScenarioSpace<T> {
    pub fn new(labels: Vec<String>, probs: Vec<T>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::shape("scenario space must contain at least one scenario"));
        }
        if labels.len() != probs.len() {
            return Err(Error::shape(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probs.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::shape(format!("duplicate scenario label '{label}'")));
            }
        }
        let mut total = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p <= T::zero() {
                return Err(Error::domain(format!(
                    "probability of scenario '{}' (index {i}) must be a positive finite number, got {p}",
                    labels[i]
                )));
            }
            total += p;
        }
        if (total - T::one()).abs() > tol::<T>(1e-12) {
            return Err(Error::domain(format!(
                "probabilities must sum to 1 within 1e-12, got {total}"
            )));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(ScenarioSpace { labels, probs })
    }

    /// Uniform space over `n` scenarios labeled `s1..sn`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::shape("scenario space must contain at least one scenario"));
        }
        let p = T::one() / real::<T>(n as f64);
        Self::new((1..=n).map(|i| format!("s{i}")).collect(), vec![p; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn check_aligned(&self, rv: &RandomVariable<T>) -> Result<()> {
        if rv.len() != self.len() {
            return Err(Error::shape(format!(
                "random variable has {} values but the space has {} scenarios",
                rv.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Expectation under the scenario probabilities.
    pub fn expectation(&self, rv: &RandomVariable<T>) -> Result<T> {
        self.check_aligned(rv)?;
        Ok(self
            .probs
            .iter()
            .zip(rv.values())
            .map(|(&p, &x)| p * x)
            .sum())
    }

    /// Left-continuous quantile `q_s = inf { x : P(X <= x) >= s }` for
    /// `s` in `(0, 1]`.
    pub fn quantile(&self, rv: &RandomVariable<T>, s: T) -> Result<T> {
        self.check_aligned(rv)?;
        if !(s > T::zero() && s <= T::one()) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0, 1], got {s}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            rv.values()[a]
                .partial_cmp(&rv.values()[b])
                .expect("random variable values are finite")
        });
        let mut acc = T::zero();
        for &i in &order {
            acc += self.probs[i];
            if acc >= s {
                return Ok(rv.values()[i]);
            }
        }
        // Cumulative rounding can leave acc marginally below 1 at the top.
        Ok(rv.values()[*order.last().expect("space is nonempty")])
    }

    /// Conditional expectation `E(X | Y)` as a random variable on the same
    /// space; scenarios are grouped by exact equality of the `Y` values.
    pub fn conditional_expectation(
        &self,
        x: &RandomVariable<T>,
        y: &RandomVariable<T>,
    ) -> Result<RandomVariable<T>> {
        self.check_aligned(x)?;
        self.check_aligned(y)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            y.values()[a]
                .partial_cmp(&y.values()[b])
                .expect("random variable values are finite")
        });
        let mut out = vec![T::zero(); self.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && y.values()[order[end]] == y.values()[order[start]] {
                end += 1;
            }
            let mut mass = T::zero();
            let mut weighted = T::zero();
            for &i in &order[start..end] {
                mass += self.probs[i];
                weighted += self.probs[i] * x.values()[i];
            }
            let mean = weighted / mass;
            for &i in &order[start..end] {
                out[i] = mean;
            }
            start = end;
        }
        RandomVariable::new(out)
    }
}

/// A random variable index-aligned with a scenario space; values are finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomVariable<T> {
    values: Vec<T>,
}

impl<T: Scalar> RandomVariable<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::shape("random variable must have at least one value"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::domain(format!(
                    "value at index {i} is not finite: {v}"
                )));
            }
        }
        Ok(RandomVariable { values })
    }

    /// Constant random variable on `n` scenarios.
    pub fn constant(n: usize, value: T) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pointwise map; the result must still be finite everywhere.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise sum of `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "cannot add random variables of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Self::new(
            self.values
                .iter()
                .zip(other.values())
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "cannot subtract random variables of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Self::new(
            self.values
                .iter()
                .zip(other.values())
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }

    /// `scale * self + shift`.
    pub fn affine(&self, scale: T, shift: T) -> Result<Self> {
        self.map(|v| scale * v + shift)
    }
}

/// A probability measure on an existing scenario space: nonnegative masses
/// summing to one (validated to 1e-12, then renormalized once). Zero masses
/// are allowed, unlike the reference probabilities of the space itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure<T> {
    masses: Vec<T>,
}

impl<T: Scalar> Measure<T> {
    pub fn new(masses: Vec<T>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::shape("measure must have at least one mass"));
        }
        let mut total = T::zero();
        for (i, &m) in masses.iter().enumerate() {
            if !m.is_finite() || m < T::zero() {
                return Err(Error::domain(format!(
                    "mass at index {i} must be a nonnegative finite number, got {m}"
                )));
            }
            total += m;
        }
        if (total - T::one()).abs() > tol::<T>(1e-12) {
            return Err(Error::domain(format!(
                "masses must sum to 1 within 1e-12, got {total}"
            )));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(Measure { masses })
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Expectation of `rv` under this measure.
    pub fn expectation(&self, rv: &RandomVariable<T>) -> Result<T> {
        if rv.len() != self.len() {
            return Err(Error::shape(format!(
                "random variable has {} values but the measure has {} masses",
                rv.len(),
                self.len()
            )));
        }
        Ok(self
            .masses
            .iter()
            .zip(rv.values())
            .map(|(&q, &x)| q * x)
            .sum())
    }
}

/// A scenario space together with named columns of scenario values.
///
/// This is the on-disk interchange format: JSON as
/// `{"labels": [...], "probs": [...], "columns": {"name": [...]}}` or CSV
/// with header `label,prob,<name>,...`.
#[derive(Debug, Clone)]
pub struct ScenarioTable<T> {
    space: ScenarioSpace<T>,
    columns: Vec<(String, RandomVariable<T>)>,
}

impl<T: Scalar> ScenarioTable<T> {
    pub fn new(space: ScenarioSpace<T>, columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut built = Vec::with_capacity(columns.len());
        for (name, values) in columns {
            if !seen.insert(name.clone()) {
                return Err(Error::parse(format!("duplicate column name '{name}'")));
            }
            if values.len() != space.len() {
                return Err(Error::shape(format!(
                    "column '{name}' has {} values but the space has {} scenarios",
                    values.len(),
                    space.len()
                )));
            }
            built.push((name, RandomVariable::new(values)?));
        }
        Ok(ScenarioTable { space, columns: built })
    }

    pub fn space(&self) -> &ScenarioSpace<T> {
        &self.space
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&RandomVariable<T>> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, rv)| rv)
            .ok_or_else(|| {
                let known: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
                Error::shape(format!(
                    "no column named '{name}' (available: {})",
                    known.join(", ")
                ))
            })
    }

    pub fn columns(&self) -> &[(String, RandomVariable<T>)] {
        &self.columns
    }
}

impl<T: Scalar + DeserializeOwned> ScenarioTable<T> {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawTable<T> = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("scenario JSON: {e}")))?;
        let space = ScenarioSpace::new(raw.labels, raw.probs)?;
        ScenarioTable::new(space, raw.columns.0)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(format!("scenario CSV header: {e}")))?
            .clone();
        if headers.len() < 2 || &headers[0] != "label" || &headers[1] != "prob" {
            return Err(Error::parse(
                "scenario CSV header must start with 'label,prob'".to_string(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        let mut cols: Vec<Vec<T>> = vec![Vec::new(); names.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let line = row_idx + 2; // header is line 1
            let record = record.map_err(|e| Error::parse(format!("scenario CSV line {line}: {e}")))?;
            if record.len() != headers.len() {
                return Err(Error::parse(format!(
                    "scenario CSV line {line}: expected {} fields, got {}",
                    headers.len(),
                    record.len()
                )));
            }
            labels.push(record[0].to_string());
            probs.push(parse_number::<T>(&record[1], line, "prob")?);
            for (c, col) in cols.iter_mut().enumerate() {
                col.push(parse_number::<T>(&record[2 + c], line, &names[c])?);
            }
        }
        let space = ScenarioSpace::new(labels, probs)?;
        ScenarioTable::new(space, names.into_iter().zip(cols).collect())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv_str(&text),
            _ => Self::from_json_str(&text),
        }
    }
}

impl<T: Scalar + Serialize> ScenarioTable<T> {
    /// Serializes back to the JSON interchange schema.
    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(&RawTableRef {
            labels: self.space.labels(),
            probs: self.space.probs(),
            columns: &self.columns,
        })
        .map_err(|e| Error::parse(format!("scenario JSON serialization: {e}")))
    }

    /// Serializes to the CSV interchange schema.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("label,prob");
        for (name, _) in &self.columns {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for i in 0..self.space.len() {
            let _ = write!(out, "{},{}", self.space.labels()[i], self.space.probs()[i]);
            for (_, col) in &self.columns {
                let _ = write!(out, ",{}", col.values()[i]);
            }
            out.push('\n');
        }
        out
    }
}

fn parse_number<T: Scalar>(field: &str, line: usize, column: &str) -> Result<T> {
    let v: f64 = field.parse().map_err(|_| {
        Error::parse(format!(
            "scenario CSV line {line}, column '{column}': invalid number '{field}'"
        ))
    })?;
    T::from_f64(v).ok_or_else(|| {
        Error::parse(format!(
            "scenario CSV line {line}, column '{column}': {v} is not representable"
        ))
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable<T> {
    labels: Vec<String>,
    probs: Vec<T>,
    #[serde(default = "Columns::empty")]
    columns: Columns<T>,
}

/// Column map that preserves order and rejects duplicate keys, which plain
/// `serde_json` maps would silently collapse.
struct Columns<T>(Vec<(String, Vec<T>)>);

impl<T> Columns<T> {
    fn empty() -> Self {
        Columns(Vec::new())
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Columns<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ColumnsVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for ColumnsVisitor<T> {
            type Value = Columns<T>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from column name to an array of numbers")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut entries: Vec<(String, Vec<T>)> = Vec::new();
                while let Some((key, value)) = map.next_entry::<String, Vec<T>>()? {
                    if entries.iter().any(|(k, _)| *k == key) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate column name '{key}'"
                        )));
                    }
                    entries.push((key, value));
                }
                Ok(Columns(entries))
            }
        }

        deserializer.deserialize_map(ColumnsVisitor(std::marker::PhantomData))
    }
}

struct RawTableRef<'a, T> {
    labels: &'a [String],
    probs: &'a [T],
    columns: &'a [(String, RandomVariable<T>)],
}

impl<T: Serialize> Serialize for RawTableRef<'_, T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Shape<'a, T> {
            labels: &'a [String],
            probs: &'a [T],
            columns: ColumnsRef<'a, T>,
        }
        struct ColumnsRef<'a, T>(&'a [(String, RandomVariable<T>)]);
        impl<T: Serialize> Serialize for ColumnsRef<'_, T> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (name, rv) in self.0 {
                    map.serialize_entry(name, &rv.values)?;
                }
                map.end()
            }
        }
        Shape {
            labels: self.labels,
            probs: self.probs,
            columns: ColumnsRef(self.columns),
        }
        .serialize(serializer)
    }
}
