//! Layered run configuration.
//!
//! Precedence, lowest first: built-in defaults, the JSON config file,
//! `--set key=value` overrides in command-line order, then the dedicated
//! `--seed` and `--out-dir` flags. The output directory falls back to
//! `$DGSP_OUT_DIR` and then `./dgsp-out` when neither the flags nor the
//! config name one.

use std::path::{Path, PathBuf};

use dgsp::graph::{adjacency_shift, directed_cycle};
use dgsp::synth::{chorded_cycle, directed_er, south_north_grid};
use dgsp::{Digraph, GspError, ShiftOperator};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const OUT_DIR_ENV: &str = "DGSP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dgsp-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: GspError,
    },

    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Module { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "numerical-failure",
            _ => "config-error",
        }
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Tags a core error with the module that raised it.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for dgsp::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { module, source })
    }
}

/// Objects merge key by key. An object whose `kind` changes is replaced
/// wholesale, so fields of the old variant do not leak into the new one.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let kind_changed =
                matches!((b.get("kind"), t.get("kind")), (Some(x), Some(y)) if x != y);
            if kind_changed {
                *b = t;
                return;
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON when it parses and
/// taken as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{spec}' is not of the form key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_err(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut nested = value;
    for part in key.rsplit('.') {
        let mut m = Map::new();
        m.insert(part.to_string(), nested);
        nested = Value::Object(m);
    }
    merge(root, nested);
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct Layers {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Default values merged with every layer, before typed parsing.
pub fn layered_value<T: Serialize + Default>(layers: &Layers) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(T::default()).map_err(|e| config_err(e.to_string()))?;
    if let Some(path) = &layers.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(config_err(format!(
                "{}: top level must be a JSON object",
                path.display()
            )));
        }
        merge(&mut v, file);
    }
    for o in &layers.overrides {
        apply_override(&mut v, o)?;
    }
    if let Some(seed) = layers.seed {
        v["seed"] = Value::from(seed);
    }
    if let Some(dir) = &layers.out_dir {
        v["out_dir"] = Value::from(dir.to_string_lossy().into_owned());
    }
    Ok(v)
}

pub fn parse<T: DeserializeOwned>(v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| config_err(e.to_string()))
}

/// Flag or config value, then the environment, then the default.
pub fn resolve_out_dir(configured: Option<&Path>) -> PathBuf {
    if let Some(p) = configured {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT_DIR),
    }
}

fn d_n() -> usize {
    10
}
fn d_p() -> f64 {
    0.3
}
fn d_side() -> usize {
    4
}
fn d_chords() -> usize {
    10
}

/// Where an experiment's graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Matrix Market shift operator.
    File { path: PathBuf },
    DirectedCycle {
        #[serde(default = "d_n")]
        n: usize,
    },
    /// Without its own seed the graph uses the run seed.
    DirectedEr {
        #[serde(default = "d_n")]
        n: usize,
        #[serde(default = "d_p")]
        p: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    SouthNorthGrid {
        #[serde(default = "d_side")]
        rows: usize,
        #[serde(default = "d_side")]
        cols: usize,
    },
    ChordedCycle {
        #[serde(default = "d_n")]
        n: usize,
        #[serde(default = "d_chords")]
        chords: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl GraphSpec {
    /// True when building the graph consumes the run seed.
    pub fn needs_seed(&self) -> bool {
        matches!(
            self,
            GraphSpec::DirectedEr { seed: None, .. } | GraphSpec::ChordedCycle { seed: None, .. }
        )
    }

    pub fn input(&self) -> Option<&Path> {
        match self {
            GraphSpec::File { path } => Some(path),
            _ => None,
        }
    }

    pub fn digraph(&self, run_seed: u64) -> dgsp::Result<Digraph> {
        match self {
            GraphSpec::File { path } => Ok(Digraph::from_shift(&dgsp::io::load_shift(path)?)),
            GraphSpec::DirectedCycle { n } => directed_cycle(*n),
            GraphSpec::DirectedEr { n, p, seed } => directed_er(*n, *p, seed.unwrap_or(run_seed)),
            GraphSpec::SouthNorthGrid { rows, cols } => south_north_grid(*rows, *cols),
            GraphSpec::ChordedCycle { n, chords, seed } => {
                chorded_cycle(*n, *chords, seed.unwrap_or(run_seed))
            }
        }
    }

    pub fn shift(&self, run_seed: u64) -> dgsp::Result<ShiftOperator> {
        match self {
            GraphSpec::File { path } => dgsp::io::load_shift(path),
            _ => Ok(adjacency_shift(&self.digraph(run_seed)?)),
        }
    }
}
