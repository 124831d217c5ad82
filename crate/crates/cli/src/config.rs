//! Experiment configuration: a base profile, scenario overrides, sweep axes
//! and run options, read from one JSON document.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use irs_swipt::model::SystemConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Base scenario the overrides apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full-scale simulation defaults.
    Paper,
    /// Small CI-sized scenario.
    Desk,
}

impl Profile {
    pub fn base(self) -> SystemConfig {
        match self {
            Profile::Paper => SystemConfig::paper(),
            Profile::Desk => SystemConfig::desk(),
        }
    }
}

/// Solver families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    NonOverlap,
    Overlap,
    Random,
    NoUg,
}

/// A solver family, designed with or without the phase errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scheme {
    pub method: Method,
    pub robust: bool,
}

impl Scheme {
    pub const fn robust(method: Method) -> Self {
        Self { method, robust: true }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.method {
            Method::NonOverlap => "nonoverlap",
            Method::Overlap => "overlap",
            Method::Random => "random",
            Method::NoUg => "noug",
        };
        if self.robust {
            f.write_str(name)
        } else {
            write!(f, "nonrobust-{name}")
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (robust, name) = match s.trim().strip_prefix("nonrobust-") {
            Some(rest) => (false, rest),
            None => (true, s.trim()),
        };
        let method = match name {
            "nonoverlap" => Method::NonOverlap,
            "overlap" => Method::Overlap,
            "random" => Method::Random,
            "noug" => Method::NoUg,
            other => {
                return Err(format!(
                    "unknown scheme '{other}' (expected nonoverlap, overlap, random, noug, optionally prefixed by \
                     'nonrobust-')"
                ))
            }
        };
        Ok(Scheme { method, robust })
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Lists of values to sweep; an empty list keeps the scenario value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub info_users: Vec<usize>,
    pub energy_users: Vec<usize>,
    pub max_groups: Vec<usize>,
    pub irs_elements: Vec<usize>,
    pub energy_req: Vec<f64>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub profile: Profile,
    /// Scenario after applying the overrides to the profile.
    pub system: SystemConfig,
    pub sweep: Sweep,
    /// Number of channel seeds per sweep point.
    pub seeds: u64,
    /// First channel seed index.
    pub first_seed: u64,
    pub schemes: Vec<Scheme>,
    pub workers: usize,
    /// Phase-error samples per row for the sampled throughput (0 skips it).
    pub mc_samples: usize,
}

/// The raw document: everything optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    profile: Option<Profile>,
    system: Option<Map<String, Value>>,
    sweep: Option<Sweep>,
    seeds: Option<u64>,
    first_seed: Option<u64>,
    schemes: Option<Vec<Scheme>>,
    workers: Option<usize>,
    mc_samples: Option<usize>,
}

const TOP_KEYS: [&str; 8] = ["profile", "system", "sweep", "seeds", "first_seed", "schemes", "workers", "mc_samples"];

pub const DEFAULT_MC_SAMPLES: usize = 2000;

/// Command-line overrides of the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seeds: Option<u64>,
    pub schemes: Option<Vec<Scheme>>,
    pub workers: Option<usize>,
}

/// Keys of `given` that do not appear in `known`, as dotted paths.
fn unknown_keys(given: &Map<String, Value>, known: &Map<String, Value>, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in given {
        let path = format!("{prefix}{key}");
        match known.get(key) {
            None => out.push(path),
            Some(Value::Object(inner)) => {
                if let Value::Object(g) = value {
                    unknown_keys(g, inner, &format!("{path}."), out);
                }
            }
            Some(_) => {}
        }
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn schema(problems: Vec<String>) -> CliError {
    CliError::Schema(problems)
}

impl Experiment {
    /// Parses a configuration document and applies command-line overrides.
    /// Unknown keys anywhere in the document are reported together.
    pub fn from_json(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| schema(vec![format!("not valid JSON: {e}")]))?;
        let Value::Object(top) = &raw else {
            return Err(schema(vec!["the configuration must be a JSON object".into()]));
        };
        let mut problems: Vec<String> =
            top.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())).map(|k| format!("unknown key '{k}'")).collect();
        let known_system = match serde_json::to_value(SystemConfig::paper()) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        if let Some(Value::Object(sys)) = top.get("system") {
            let mut bad = Vec::new();
            unknown_keys(sys, &known_system, "system.", &mut bad);
            problems.extend(bad.into_iter().map(|k| format!("unknown key '{k}'")));
        }
        if let Some(Value::Object(sweep)) = top.get("sweep") {
            let known: BTreeSet<&str> =
                ["info_users", "energy_users", "max_groups", "irs_elements", "energy_req"].into();
            problems.extend(
                sweep.keys().filter(|k| !known.contains(k.as_str())).map(|k| format!("unknown key 'sweep.{k}'")),
            );
        }
        if !problems.is_empty() {
            return Err(schema(problems));
        }
        let doc: Document = serde_json::from_value(raw).map_err(|e| schema(vec![e.to_string()]))?;

        let profile = overrides.profile.or(doc.profile).unwrap_or(Profile::Paper);
        let mut system = serde_json::to_value(profile.base()).map_err(|e| schema(vec![e.to_string()]))?;
        if let Some(patch) = &doc.system {
            merge(&mut system, &Value::Object(patch.clone()));
        }
        let system: SystemConfig = serde_json::from_value(system).map_err(|e| schema(vec![format!("system: {e}")]))?;
        let exp = Experiment {
            profile,
            system,
            sweep: doc.sweep.unwrap_or_default(),
            seeds: overrides.seeds.or(doc.seeds).unwrap_or(1),
            first_seed: doc.first_seed.unwrap_or(1),
            schemes: overrides
                .schemes
                .clone()
                .or(doc.schemes)
                .unwrap_or_else(|| vec![Scheme::robust(Method::NonOverlap)]),
            workers: overrides.workers.or(doc.workers).unwrap_or(1),
            mc_samples: doc.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        };
        exp.check()?;
        Ok(exp)
    }

    fn check(&self) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.seeds == 0 {
            problems.push("seeds must be >= 1".to_string());
        }
        if self.workers == 0 {
            problems.push("workers must be >= 1".to_string());
        }
        if self.schemes.is_empty() {
            problems.push("at least one scheme is required".to_string());
        }
        for point in self.points() {
            if let Err(irs_swipt::model::ModelError::InvalidConfig(list)) = point.validate() {
                problems.extend(list.into_iter().map(|m| format!("system: {m}")));
            }
        }
        if self.sweep.energy_req.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            problems.push("sweep.energy_req entries must be finite and >= 0".to_string());
        }
        problems.dedup();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(schema(problems))
        }
    }

    /// Scenario of every sweep point, in the order K, J, L, N, E (last
    /// axis varying fastest).
    pub fn points(&self) -> Vec<SystemConfig> {
        fn axis<T: Copy>(values: &[T], current: T) -> Vec<T> {
            if values.is_empty() {
                vec![current]
            } else {
                values.to_vec()
            }
        }
        let s = &self.system;
        let mut out = Vec::new();
        for &k in &axis(&self.sweep.info_users, s.info_users) {
            for &j in &axis(&self.sweep.energy_users, s.energy_users) {
                for &l in &axis(&self.sweep.max_groups, s.max_groups) {
                    for &n in &axis(&self.sweep.irs_elements, s.irs_elements) {
                        for &e in &axis(&self.sweep.energy_req, s.energy_req) {
                            out.push(SystemConfig {
                                info_users: k,
                                energy_users: j,
                                max_groups: l,
                                irs_elements: n,
                                energy_req: e,
                                ..s.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Canonical JSON of the resolved experiment.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("experiment serializes")
    }
}
