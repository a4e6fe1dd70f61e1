//! Name-keyed factories for every interchangeable strategy in the crate.
//!
//! A config object such as `{"family":"alpha","alpha":2.0}` is dispatched on
//! its tag field (`family`, `strategy`, `search`) and the whole object is
//! handed to the registered factory, which parses its own parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::ctransform::{self, InnerSolver};
use crate::divergence::{self, Divergence};
use crate::dual::{self, ErmSearch};
use crate::error::{Error, Result};
use crate::objective::{self, LossFamily};
use crate::penalty::{self, Penalty};

pub type Factory<T> = fn(&Value) -> Result<Arc<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    tag: &'static str,
    entries: BTreeMap<String, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str, tag: &'static str) -> Self {
        Self { kind, tag, entries: BTreeMap::new() }
    }

    /// Adds or replaces a factory under `name`.
    pub fn register(&mut self, name: &str, factory: Factory<T>) -> &mut Self {
        self.entries.insert(name.to_owned(), factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, config: &Value) -> Result<Arc<T>> {
        let name = config
            .get(self.tag)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Malformed(format!("{} config needs a string `{}` field", self.kind, self.tag)))?;
        let factory = self.entries.get(name).ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_owned(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        factory(config)
    }
}

/// Deserializes the parameters of a tagged config object.
pub(crate) fn params<P: DeserializeOwned>(config: &Value) -> Result<P> {
    Ok(P::deserialize(config)?)
}

pub fn divergences() -> Registry<dyn Divergence> {
    let mut r = Registry::new("divergence", "family");
    r.register("kl", divergence::build_kl).register("alpha", divergence::build_alpha);
    r
}

pub fn penalties() -> Registry<dyn Penalty> {
    let mut r = Registry::new("penalty", "family");
    r.register("hard_ball", penalty::build_hard_ball)
        .register("power_law", penalty::build_power_law)
        .register("power_plus_linear", penalty::build_power_plus_linear)
        .register("exponential", penalty::build_exponential);
    r
}

pub fn loss_families() -> Registry<dyn LossFamily> {
    let mut r = Registry::new("loss family", "family");
    r.register("clamped_linear_margin", objective::build_clamped_linear_margin)
        .register("saturated_logistic", objective::build_saturated_logistic);
    r
}

pub fn inner_solvers() -> Registry<dyn InnerSolver> {
    let mut r = Registry::new("inner solver", "strategy");
    r.register("grid_1d", ctransform::build_grid_1d)
        .register("multi_start_ascent", ctransform::build_multi_start_ascent);
    r
}

pub fn erm_searches() -> Registry<dyn ErmSearch> {
    let mut r = Registry::new("erm search", "search");
    r.register("grid", dual::build_grid_search)
        .register("random_search", dual::build_random_search)
        .register("subgradient_descent", dual::build_subgradient_descent);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builds_by_tag_and_lists_names() {
        let reg = divergences();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["alpha", "kl"]);
        let d = reg.build(&json!({"family": "alpha", "alpha": 2.0})).unwrap();
        assert_eq!(d.name(), "alpha");
    }

    #[test]
    fn unknown_names_report_the_menu() {
        let err = penalties().build(&json!({"family": "huber"})).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("huber") && msg.contains("power_law"), "{msg}");
    }

    #[test]
    fn missing_tag_is_malformed() {
        assert!(matches!(inner_solvers().build(&json!({"steps": 3})), Err(Error::Malformed(_))));
    }
}
