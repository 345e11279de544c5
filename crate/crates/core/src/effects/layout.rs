use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fx::{ParamSpec, ParamSpecSet, ParamVector};

/// Full physical parameter list of an effect, split into trainable
/// parameters (exposed through the normalized interface) and fixed ones.
#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    fixed: Vec<Option<f64>>,
    trainable: Vec<(usize, ParamSpec)>,
    specs: ParamSpecSet,
    cache_key: Vec<f64>,
    physical: Vec<f64>,
}

impl ParamLayout {
    pub fn new(full: Vec<ParamSpec>, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        for name in overrides.keys() {
            if !full.iter().any(|s| &s.name == name) {
                return Err(Error::Config(format!("unknown fixed parameter `{name}`")));
            }
        }
        let mut fixed = Vec::with_capacity(full.len());
        let mut trainable = Vec::new();
        for (i, spec) in full.iter().enumerate() {
            match overrides.get(&spec.name) {
                Some(&v) if v.is_finite() => fixed.push(Some(v)),
                Some(&v) => {
                    return Err(Error::Config(format!(
                        "fixed parameter `{}` = {v} is not finite",
                        spec.name
                    )))
                }
                None => {
                    fixed.push(None);
                    trainable.push((i, spec.clone()));
                }
            }
        }
        let specs = ParamSpecSet::new(trainable.iter().map(|(_, s)| s.clone()).collect())?;
        let physical = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        Ok(Self {
            fixed,
            trainable,
            specs,
            cache_key: Vec::new(),
            physical,
        })
    }

    pub fn specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    /// Physical values for the full list. Returns `true` when they changed
    /// since the previous call.
    pub fn resolve(&mut self, params: &ParamVector) -> bool {
        if self.cache_key.as_slice() == params.values() {
            return false;
        }
        for ((i, spec), &v) in self.trainable.iter().zip(params.values()) {
            self.physical[*i] = spec.denormalize_unchecked(v);
        }
        debug_assert!(self
            .fixed
            .iter()
            .zip(&self.physical)
            .all(|(f, p)| f.is_none_or(|f| f == *p)));
        self.cache_key.clear();
        self.cache_key.extend_from_slice(params.values());
        true
    }

    pub fn physical(&self) -> &[f64] {
        &self.physical
    }
}
