//! Hyperparameter specifications, concrete values and tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A concrete hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Choice(s) => s.parse().ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Choice(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Real { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
    Boolean,
}

fn default_sigma_fraction() -> f64 {
    0.1
}

/// One searchable hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
    /// Gaussian sigma as a fraction of the range width (real/integer only).
    #[serde(default = "default_sigma_fraction")]
    pub mutation_sigma_fraction: f64,
}

impl HyperparameterSpec {
    pub fn real(name: &str, lo: f64, hi: f64) -> Self {
        Self::new(name, ParamKind::Real { lo, hi })
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Self::new(name, ParamKind::Integer { lo, hi })
    }

    pub fn categorical<S: AsRef<str>>(name: &str, choices: &[S]) -> Self {
        Self::new(
            name,
            ParamKind::Categorical {
                choices: choices.iter().map(|c| String::from(c.as_ref())).collect(),
            },
        )
    }

    pub fn boolean(name: &str) -> Self {
        Self::new(name, ParamKind::Boolean)
    }

    fn new(name: &str, kind: ParamKind) -> Self {
        Self {
            name: String::from(name),
            kind,
            mutation_sigma_fraction: default_sigma_fraction(),
        }
    }

    pub fn with_sigma_fraction(mut self, fraction: f64) -> Self {
        self.mutation_sigma_fraction = fraction;
        self
    }

    /// Checks the spec itself: ordered ranges, non-empty choices, a sane sigma.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("hyperparameter `{}`: {}", self.name, msg)));
        match &self.kind {
            ParamKind::Real { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad("requires finite lo < hi");
                }
            }
            ParamKind::Integer { lo, hi } => {
                if lo >= hi {
                    return bad("requires lo < hi");
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("categorical choices must be non-empty");
                }
            }
            ParamKind::Boolean => {}
        }
        // zero is allowed: it freezes the value
        if !(0.0..=1.0).contains(&self.mutation_sigma_fraction) {
            return bad("mutation_sigma_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::Real { lo, hi } => ParamValue::Real(rng.random_range(*lo..=*hi)),
            ParamKind::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamKind::Categorical { choices } => ParamValue::Choice(choices.choose(rng).cloned().unwrap_or_default()),
            ParamKind::Boolean => ParamValue::Bool(rng.random_bool(0.5)),
        }
    }

    /// Perturbs `value` in place: Gaussian + clamp for ranged kinds (integers
    /// round to nearest), uniform resample for categoricals, flip for booleans.
    pub fn mutate<R: Rng + ?Sized>(&self, value: &mut ParamValue, rng: &mut R) {
        match &self.kind {
            ParamKind::Real { lo, hi } => {
                let current = value.as_f64().unwrap_or(*lo);
                let v = gaussian_step(current, self.mutation_sigma_fraction * (hi - lo), rng);
                *value = ParamValue::Real(v.clamp(*lo, *hi));
            }
            ParamKind::Integer { lo, hi } => {
                let current = value.as_f64().unwrap_or(*lo as f64);
                let width = (*hi - *lo) as f64;
                let v = gaussian_step(current, self.mutation_sigma_fraction * width, rng);
                let v = libm::round(v).clamp(*lo as f64, *hi as f64);
                *value = ParamValue::Int(v as i64);
            }
            ParamKind::Categorical { .. } => *value = self.sample(rng),
            ParamKind::Boolean => {
                let b = value.as_bool().unwrap_or(false);
                *value = ParamValue::Bool(!b);
            }
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Real { lo, hi }, ParamValue::Real(v)) => v.is_finite() && *lo <= *v && *v <= *hi,
            (ParamKind::Integer { lo, hi }, ParamValue::Int(v)) => lo <= v && v <= hi,
            (ParamKind::Categorical { choices }, ParamValue::Choice(c)) => choices.contains(c),
            (ParamKind::Boolean, ParamValue::Bool(_)) => true,
            _ => false,
        }
    }

    /// Distance between two values normalized to [0, 1].
    pub fn normalized_distance(&self, a: &ParamValue, b: &ParamValue) -> f64 {
        match &self.kind {
            ParamKind::Real { lo, hi } => {
                let (x, y) = (a.as_f64().unwrap_or(*lo), b.as_f64().unwrap_or(*lo));
                (libm::fabs(x - y) / (hi - lo)).min(1.0)
            }
            ParamKind::Integer { lo, hi } => {
                let (x, y) = (a.as_f64().unwrap_or(*lo as f64), b.as_f64().unwrap_or(*lo as f64));
                (libm::fabs(x - y) / (*hi - *lo) as f64).min(1.0)
            }
            ParamKind::Categorical { .. } | ParamKind::Boolean => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

fn gaussian_step<R: Rng + ?Sized>(value: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma <= 0.0 {
        return value;
    }
    match Normal::new(0.0, sigma) {
        Ok(normal) => value + normal.sample(rng),
        Err(_) => value,
    }
}

/// Map from hyperparameter name to its concrete value.
pub type HyperparameterTable = BTreeMap<String, ParamValue>;

/// Samples a full table uniformly from `specs`.
pub fn sample_table<R: Rng + ?Sized>(specs: &[HyperparameterSpec], rng: &mut R) -> HyperparameterTable {
    specs.iter().map(|s| (s.name.clone(), s.sample(rng))).collect()
}

/// Mutates each entry independently with probability `per_param_prob`.
pub fn mutate_table<R: Rng + ?Sized>(table: &mut HyperparameterTable, specs: &[HyperparameterSpec], per_param_prob: f64, rng: &mut R) {
    for spec in specs {
        if !rng.random_bool(per_param_prob.clamp(0.0, 1.0)) {
            continue;
        }
        match table.get_mut(&spec.name) {
            Some(value) => spec.mutate(value, rng),
            None => {
                table.insert(spec.name.clone(), spec.sample(rng));
            }
        }
    }
}

/// Mean normalized distance over `specs`; 0 when `specs` is empty.
pub fn table_distance(a: &HyperparameterTable, b: &HyperparameterTable, specs: &[HyperparameterSpec]) -> f64 {
    if specs.is_empty() {
        return 0.0;
    }
    let total: f64 = specs
        .iter()
        .map(|s| match (a.get(&s.name), b.get(&s.name)) {
            (Some(x), Some(y)) => s.normalized_distance(x, y),
            (None, None) => 0.0,
            _ => 1.0,
        })
        .sum();
    total / specs.len() as f64
}

/// Every spec has a valid value and every key has a spec.
pub fn check_table(table: &HyperparameterTable, specs: &[HyperparameterSpec]) -> Result<()> {
    for spec in specs {
        match table.get(&spec.name) {
            Some(v) if spec.contains(v) => {}
            Some(v) => return Err(Error::InvalidChromosome(format!("value {:?} outside spec `{}`", v, spec.name))),
            None => return Err(Error::InvalidChromosome(format!("missing hyperparameter `{}`", spec.name))),
        }
    }
    if let Some(extra) = table.keys().find(|k| !specs.iter().any(|s| &s.name == *k)) {
        return Err(Error::InvalidChromosome(format!("unknown hyperparameter `{}`", extra)));
    }
    Ok(())
}

/// The searchable hyperparameters of both chromosome kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Per-node layer table of module chromosomes.
    pub module_params: Vec<HyperparameterSpec>,
    /// Network-wide globals carried by blueprints (learning rate, optimizer, ...).
    pub blueprint_globals: Vec<HyperparameterSpec>,
}

impl SearchSpace {
    pub fn check(&self) -> Result<()> {
        if self.module_params.is_empty() {
            return Err(Error::Config("module search space is empty".into()));
        }
        if self.blueprint_globals.is_empty() {
            return Err(Error::Config("blueprint global search space is empty".into()));
        }
        for spec in self.module_params.iter().chain(&self.blueprint_globals) {
            spec.check()?;
        }
        Ok(())
    }

    pub fn module_spec(&self, name: &str) -> Option<&HyperparameterSpec> {
        self.module_params.iter().find(|s| s.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> crate::EngineRng {
        crate::EngineRng::seed_from_u64(11)
    }

    #[test]
    fn dropout_mutation_stays_clamped() {
        let spec = HyperparameterSpec::real("dropout_rate", 0.0, 0.7).with_sigma_fraction(0.5);
        let mut r = rng();
        let mut v = ParamValue::Real(0.5);
        for _ in 0..10_000 {
            spec.mutate(&mut v, &mut r);
            let x = v.as_f64().unwrap();
            assert!((0.0..=0.7).contains(&x), "{x}");
        }
    }

    #[test]
    fn zero_sigma_leaves_value_unchanged() {
        let spec = HyperparameterSpec::real("lr", 0.0, 1.0).with_sigma_fraction(0.0);
        let mut r = rng();
        let mut v = ParamValue::Real(0.25);
        for _ in 0..100 {
            spec.mutate(&mut v, &mut r);
        }
        assert_eq!(v, ParamValue::Real(0.25));
        let ispec = HyperparameterSpec::integer("w", 16, 64).with_sigma_fraction(0.0);
        let mut iv = ParamValue::Int(33);
        ispec.mutate(&mut iv, &mut r);
        assert_eq!(iv, ParamValue::Int(33));
    }

    #[test]
    fn boolean_flip_rate_matches_probability() {
        let specs = [HyperparameterSpec::boolean("flag")];
        let p = 0.3;
        let trials = 10_000;
        let mut r = rng();
        let mut flips = 0;
        for _ in 0..trials {
            let mut t = HyperparameterTable::new();
            t.insert("flag".into(), ParamValue::Bool(false));
            mutate_table(&mut t, &specs, p, &mut r);
            if t["flag"] == ParamValue::Bool(true) {
                flips += 1;
            }
        }
        let n = trials as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!(((flips as f64) - n * p).abs() <= 3.0 * sigma, "flips {flips}");
    }

    #[test]
    fn integer_mutation_rounds_and_clamps() {
        let spec = HyperparameterSpec::integer("width", 16, 64).with_sigma_fraction(1.0);
        let mut r = rng();
        let mut v = ParamValue::Int(60);
        for _ in 0..1000 {
            spec.mutate(&mut v, &mut r);
            assert!(matches!(v, ParamValue::Int(x) if (16..=64).contains(&x)));
        }
    }

    #[test]
    fn spec_checks_reject_bad_ranges() {
        assert!(HyperparameterSpec::real("x", 1.0, 1.0).check().is_err());
        assert!(HyperparameterSpec::integer("x", 3, 2).check().is_err());
        let empty: [&str; 0] = [];
        assert!(HyperparameterSpec::categorical("x", &empty).check().is_err());
        assert!(HyperparameterSpec::boolean("x").check().is_ok());
    }

    #[test]
    fn categorical_distance_is_binary() {
        let spec = HyperparameterSpec::categorical("act", &["relu", "elu"]);
        let a = ParamValue::Choice("relu".into());
        let b = ParamValue::Choice("elu".into());
        assert_eq!(spec.normalized_distance(&a, &a), 0.0);
        assert_eq!(spec.normalized_distance(&a, &b), 1.0);
    }

    #[test]
    fn untagged_values_round_trip_through_json() {
        let mut t = HyperparameterTable::new();
        t.insert("a".into(), ParamValue::Real(3.0));
        t.insert("b".into(), ParamValue::Int(3));
        t.insert("c".into(), ParamValue::Bool(true));
        t.insert("d".into(), ParamValue::Choice("adam".into()));
        t.insert("e".into(), ParamValue::Real(1e-9));
        let s = serde_json::to_string(&t).unwrap();
        let back: HyperparameterTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
