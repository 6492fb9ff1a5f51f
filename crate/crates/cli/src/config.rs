//! Application configuration: a TOML document layered over a scenario
//! preset, with dotted-path overrides from the command line.
//!
//! Top-level keys `seed`, `scenario`, `trajectory_file`, `output_dir` and
//! the `[dataset]` table belong to the application. Every other key is a
//! field of the simulation run config (`camera`, `filter`, `detector`, ...)
//! and is merged over the chosen preset.

use std::path::{Path, PathBuf};

use ptzloc_core::dataset::{AugmentConfig, DatasetManifest};
use ptzloc_core::sim::{scenario, RunConfig, Trajectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

pub const DEFAULT_SCENARIO: &str = "s-path";
pub const SEED_ENV: &str = "PTZLOC_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Field { path: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Dataset generation settings; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub total: usize,
    pub positives: Option<usize>,
    pub image_dir: String,
    pub label_file: String,
    pub backgrounds_dir: Option<PathBuf>,
    pub augment: AugmentConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let m = DatasetManifest::default();
        Self {
            total: m.total,
            positives: m.positives,
            image_dir: m.image_dir,
            label_file: m.label_file,
            backgrounds_dir: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl DatasetSection {
    pub fn manifest(&self, seed: u64) -> DatasetManifest {
        DatasetManifest {
            total: self.total,
            positives: self.positives,
            image_dir: self.image_dir.clone(),
            label_file: self.label_file.clone(),
            seed,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub seed: u64,
    pub scenario: Option<String>,
    pub trajectory_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub run: RunConfig,
}

/// Inputs that sit above the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(dotted.path, value)` pairs applied in order.
    pub set: Vec<(String, String)>,
    pub seed: Option<u64>,
    /// Raw value of the seed environment variable, if set.
    pub env_seed: Option<String>,
}

pub fn read_document(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Parse `key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(format!("invalid key `{k}`"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn literal(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Table, path: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut table = root;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::Field {
            path: parts[..=i].join("."),
            reason: "not a table".into(),
        })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn take_string(t: &mut Table, key: &str) -> Result<Option<String>, ConfigError> {
    match t.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) if s.is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(ConfigError::Field {
            path: key.into(),
            reason: format!("expected a string, got {}", other.type_str()),
        }),
    }
}

fn parse_seed(raw: &str, origin: &str) -> Result<u64, ConfigError> {
    raw.trim().parse().map_err(|_| ConfigError::Field {
        path: origin.into(),
        reason: format!("expected a non-negative integer seed, got `{raw}`"),
    })
}

fn deserialize<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        ConfigError::Field {
            path,
            // the toml error repeats the key path on later lines
            reason: e.into_inner().to_string().lines().next().unwrap_or_default().to_string(),
        }
    })
}

fn load_trajectory(path: &Path) -> Result<Trajectory, ConfigError> {
    let text = read_document(path)?;
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
    } else {
        Value::Table(text.parse::<Table>().map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?)
    };
    deserialize(value, "trajectory_file")
}

impl AppConfig {
    /// Resolve a config document (possibly empty) with overrides applied.
    ///
    /// The seed is taken from, in order: the explicit override, the
    /// document's `seed`, the environment value, and finally zero.
    pub fn load(document: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut doc: Table = document.parse().map_err(|e| ConfigError::Parse(format!("{e}")))?;
        for (k, v) in &overrides.set {
            set_path(&mut doc, k, literal(v))?;
        }

        let doc_seed = match doc.remove("seed") {
            None => None,
            Some(Value::Integer(i)) if i >= 0 => Some(i as u64),
            Some(other) => {
                return Err(ConfigError::Field {
                    path: "seed".into(),
                    reason: format!("expected a non-negative integer, got {other}"),
                })
            }
        };
        let seed = match (overrides.seed, doc_seed, &overrides.env_seed) {
            (Some(s), _, _) => s,
            (None, Some(s), _) => s,
            (None, None, Some(raw)) => parse_seed(raw, SEED_ENV)?,
            (None, None, None) => 0,
        };

        let scenario_name = take_string(&mut doc, "scenario")?;
        let trajectory_file = take_string(&mut doc, "trajectory_file")?.map(PathBuf::from);
        let output_dir = take_string(&mut doc, "output_dir")?.map_or_else(|| PathBuf::from("out"), PathBuf::from);
        let dataset: DatasetSection = match doc.remove("dataset") {
            None => DatasetSection::default(),
            Some(v) => deserialize(v, "dataset")?,
        };

        let (scenario_name, base) = match (scenario_name, &trajectory_file) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "set either `scenario` or `trajectory_file`, not both".into(),
                ))
            }
            (None, Some(path)) => (
                None,
                RunConfig {
                    trajectory: load_trajectory(path)?,
                    ..RunConfig::default()
                },
            ),
            (name, None) => {
                let name = name.unwrap_or_else(|| DEFAULT_SCENARIO.to_string());
                let cfg = scenario(&name).map_err(|e| ConfigError::Field {
                    path: "scenario".into(),
                    reason: e.to_string(),
                })?;
                (Some(name), cfg)
            }
        };

        let mut run_table = match Value::try_from(&base).map_err(|e| ConfigError::Invalid(e.to_string()))? {
            Value::Table(t) => t,
            _ => unreachable!("run config serialises to a table"),
        };
        merge(&mut run_table, doc);
        let mut run: RunConfig = deserialize(Value::Table(run_table), "")?;
        run.seed = seed;
        run.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        dataset
            .manifest(seed)
            .validate()
            .and_then(|_| dataset.augment.validate())
            .map_err(|e| ConfigError::Invalid(format!("dataset: {e}")))?;

        Ok(Self {
            seed,
            scenario: scenario_name,
            trajectory_file,
            output_dir,
            dataset,
            run,
        })
    }

    /// Load from an optional file path.
    pub fn load_path(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let doc = match path {
            Some(p) => read_document(p)?,
            None => String::new(),
        };
        Self::load(&doc, overrides)
    }

    /// Serialise the effective configuration so that loading it again
    /// reproduces this value.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        let err = |e: toml::ser::Error| ConfigError::Invalid(e.to_string());
        let seed = i64::try_from(self.seed)
            .map_err(|_| ConfigError::Invalid(format!("seed {} does not fit a TOML integer", self.seed)))?;
        let mut t = Table::new();
        t.insert("seed".into(), Value::Integer(seed));
        if let Some(s) = &self.scenario {
            t.insert("scenario".into(), Value::String(s.clone()));
        }
        if let Some(p) = &self.trajectory_file {
            t.insert("trajectory_file".into(), Value::String(p.display().to_string()));
        }
        t.insert("output_dir".into(), Value::String(self.output_dir.display().to_string()));
        if let Value::Table(run) = Value::try_from(&self.run).map_err(err)? {
            for (k, v) in run {
                if k != "seed" {
                    t.insert(k, v);
                }
            }
        }
        t.insert("dataset".into(), Value::try_from(&self.dataset).map_err(err)?);
        toml::to_string_pretty(&t).map_err(err)
    }
}
