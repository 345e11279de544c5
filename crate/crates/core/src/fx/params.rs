use std::collections::HashSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mapping {
    Linear,
    Logarithmic,
}

/// Physical range of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
    pub mapping: Mapping,
}

impl ParamSpec {
    pub fn new(
        name: impl Into<String>,
        unit: impl Into<String>,
        min: f64,
        max: f64,
        mapping: Mapping,
    ) -> Result<Self> {
        let name = name.into();
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Domain(format!(
                "parameter {name}: bounds [{min}, {max}] are not an increasing finite interval"
            )));
        }
        if mapping == Mapping::Logarithmic && min <= 0.0 {
            return Err(Error::Domain(format!(
                "parameter {name}: logarithmic mapping needs a positive lower bound"
            )));
        }
        Ok(Self {
            name,
            unit: unit.into(),
            min,
            max,
            mapping,
        })
    }

    pub fn linear(name: &str, unit: &str, min: f64, max: f64) -> Self {
        Self::new(name, unit, min, max, Mapping::Linear).expect("valid linear spec")
    }

    pub fn log(name: &str, unit: &str, min: f64, max: f64) -> Self {
        Self::new(name, unit, min, max, Mapping::Logarithmic).expect("valid log spec")
    }

    /// Maps `v ∈ [0, 1]` onto the physical range.
    pub fn denormalize(&self, v: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!(
                "parameter {}: normalized value {v} outside [0, 1]",
                self.name
            )));
        }
        Ok(self.denormalize_unchecked(v))
    }

    pub(crate) fn denormalize_unchecked(&self, v: f64) -> f64 {
        match self.mapping {
            Mapping::Linear => self.min + v * (self.max - self.min),
            Mapping::Logarithmic => self.min * (self.max / self.min).powf(v),
        }
    }

    /// Inverse of [`ParamSpec::denormalize`], clamped to `[0, 1]`.
    pub fn normalize(&self, physical: f64) -> f64 {
        let v = match self.mapping {
            Mapping::Linear => (physical - self.min) / (self.max - self.min),
            Mapping::Logarithmic => (physical / self.min).ln() / (self.max / self.min).ln(),
        };
        v.clamp(0.0, 1.0)
    }

    /// Width of the physical range; the chain-rule factor for linear maps.
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Ordered parameter specs. The order is the canonical gradient index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSpecSet {
    specs: Vec<ParamSpec>,
}

impl ParamSpecSet {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &specs {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate parameter name {}", s.name)));
            }
        }
        Ok(Self { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParamSpec> {
        self.specs.iter()
    }

    pub fn get(&self, i: usize) -> &ParamSpec {
        &self.specs[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Concatenates sets, prefixing names so they stay unique.
    pub fn concat<'a>(parts: impl IntoIterator<Item = (&'a str, &'a ParamSpecSet)>) -> Result<Self> {
        let mut specs = Vec::new();
        for (prefix, set) in parts {
            for s in set.iter() {
                let mut s = s.clone();
                s.name = format!("{prefix}.{}", s.name);
                specs.push(s);
            }
        }
        Self::new(specs)
    }

    pub fn denormalize(&self, params: &ParamVector) -> Result<Vec<f64>> {
        if params.len() != self.len() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.len(),
                params.len()
            )));
        }
        self.specs
            .iter()
            .zip(params.values())
            .map(|(s, &v)| s.denormalize(v))
            .collect()
    }
}

impl<'a> IntoIterator for &'a ParamSpecSet {
    type Item = &'a ParamSpec;
    type IntoIter = std::slice::Iter<'a, ParamSpec>;
    fn into_iter(self) -> Self::IntoIter {
        self.specs.iter()
    }
}

/// Normalized parameters `θ̂ ∈ [0, 1]^P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!(
                "normalized parameter {i} = {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn splat(len: usize, v: f64) -> Self {
        Self::new(vec![v; len]).expect("splat value in [0, 1]")
    }

    /// Builds `clip(self + scale·direction)` coordinate-wise into `[0, 1]`.
    pub fn perturbed(&self, direction: &[f64], scale: f64) -> Self {
        debug_assert_eq!(direction.len(), self.0.len());
        Self(
            self.0
                .iter()
                .zip(direction)
                .map(|(v, d)| (v + scale * d).clamp(0.0, 1.0))
                .collect(),
        )
    }

    /// Perturbs a single coordinate, clipped into `[0, 1]`.
    pub fn perturbed_at(&self, i: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[i] = (v[i] + delta).clamp(0.0, 1.0);
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn slice(&self, start: usize, len: usize) -> ParamVector {
        ParamVector(self.0[start..start + len].to_vec())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}
