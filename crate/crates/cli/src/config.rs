//! Flat TOML configuration plus command-line overrides.
//!
//! Recognised keys: `alpha`, `sigma`, `n_trunc`, `radius`, `seed`, `count`,
//! `samples`, `workers`, `t`, `integrator.method`, `integrator.rel_tol`,
//! `integrator.dt`, `p_list`, `m_list`, `n_list`, `n_ref`, `lambda`, `s`,
//! `s_prime` and `set` (one predicate string or an array of them).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use birkhoff_core::flow::Method;
use birkhoff_core::SetPredicate;
use toml::Value;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Syntax { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey { path: PathBuf, line: usize, key: String },
    #[error("{path}:{line}: key `{key}`: {message}")]
    BadValue {
        path: PathBuf,
        line: usize,
        key: String,
        message: String,
    },
    #[error("flag --{flag}: {message}")]
    BadFlag { flag: String, message: String },
    #[error("missing required key `{key}` (set it in the config file or pass --{flag})")]
    MissingKey { key: String, flag: String },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Core(#[from] birkhoff_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Every setting is optional here; defaults and requirements are decided per subcommand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub alpha: Option<f64>,
    pub sigma: Option<i8>,
    pub n_trunc: Option<usize>,
    pub radius: Option<f64>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub samples: Option<usize>,
    pub workers: Option<usize>,
    pub t: Option<f64>,
    pub method: Option<Method>,
    pub rel_tol: Option<f64>,
    pub dt: Option<f64>,
    pub p_list: Option<Vec<f64>>,
    pub m_list: Option<Vec<usize>>,
    pub n_list: Option<Vec<usize>>,
    pub n_ref: Option<usize>,
    pub lambda: Option<f64>,
    pub s: Option<f64>,
    pub s_prime: Option<f64>,
    pub set: Option<Vec<SetPredicate>>,
}

impl Settings {
    /// Fields set in `over` win.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            alpha: over.alpha.or(self.alpha),
            sigma: over.sigma.or(self.sigma),
            n_trunc: over.n_trunc.or(self.n_trunc),
            radius: over.radius.or(self.radius),
            seed: over.seed.or(self.seed),
            count: over.count.or(self.count),
            samples: over.samples.or(self.samples),
            workers: over.workers.or(self.workers),
            t: over.t.or(self.t),
            method: over.method.or(self.method),
            rel_tol: over.rel_tol.or(self.rel_tol),
            dt: over.dt.or(self.dt),
            p_list: over.p_list.or(self.p_list),
            m_list: over.m_list.or(self.m_list),
            n_list: over.n_list.or(self.n_list),
            n_ref: over.n_ref.or(self.n_ref),
            lambda: over.lambda.or(self.lambda),
            s: over.s.or(self.s),
            s_prime: over.s_prime.or(self.s_prime),
            set: over.set.or(self.set),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` (possibly dotted) is assigned; 0 when it cannot be located.
fn line_of_key(text: &str, key: &str) -> usize {
    let last = key.rsplit('.').next().unwrap_or(key);
    let assigns = |line: &str, k: &str| {
        line.trim_start()
            .strip_prefix(k)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    };
    text.lines()
        .position(|l| assigns(l, key))
        .or_else(|| text.lines().position(|l| assigns(l, last)))
        .map_or(0, |i| i + 1)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn bad(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::BadValue {
            path: self.path.to_path_buf(),
            line: line_of_key(self.text, key),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn float(&self, key: &str, v: &Value) -> Result<f64, CliError> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(self.bad(key, "expected a number")),
        }
    }

    fn uint(&self, key: &str, v: &Value) -> Result<u64, CliError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(self.bad(key, "expected a non-negative integer")),
        }
    }

    fn list<T>(&self, key: &str, v: &Value, f: impl Fn(&Self, &Value) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
        match v {
            Value::Array(items) => items.iter().map(|x| f(self, x)).collect(),
            _ => Err(self.bad(key, "expected an array")),
        }
    }
}

pub fn load_config(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(path, &text)
}

pub fn parse_config(path: &Path, text: &str) -> Result<Settings, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Syntax {
        path: path.to_path_buf(),
        line: e.span().map_or(0, |s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    let src = Source { path, text };
    let mut s = Settings::default();
    for (key, v) in &flat {
        let key = key.as_str();
        match key {
            "alpha" => s.alpha = Some(src.float(key, v)?),
            "sigma" => {
                s.sigma = Some(match v {
                    Value::Integer(1) => 1,
                    Value::Integer(-1) => -1,
                    _ => return Err(src.bad(key, "expected 1 or -1")),
                })
            }
            "n_trunc" => s.n_trunc = Some(src.uint(key, v)? as usize),
            "radius" => s.radius = Some(src.float(key, v)?),
            "seed" => s.seed = Some(src.uint(key, v)?),
            "count" => s.count = Some(src.uint(key, v)? as usize),
            "samples" => s.samples = Some(src.uint(key, v)? as usize),
            "workers" => s.workers = Some(src.uint(key, v)? as usize),
            "t" => s.t = Some(src.float(key, v)?),
            "integrator.method" => {
                let name = v.as_str().ok_or_else(|| src.bad(key, "expected a string"))?;
                s.method = Some(name.parse().map_err(|e: birkhoff_core::Error| src.bad(key, e.to_string()))?);
            }
            "integrator.rel_tol" => s.rel_tol = Some(src.float(key, v)?),
            "integrator.dt" => s.dt = Some(src.float(key, v)?),
            "p_list" => s.p_list = Some(src.list(key, v, |c, x| c.float(key, x))?),
            "m_list" => s.m_list = Some(src.list(key, v, |c, x| c.uint(key, x).map(|u| u as usize))?),
            "n_list" => s.n_list = Some(src.list(key, v, |c, x| c.uint(key, x).map(|u| u as usize))?),
            "n_ref" => s.n_ref = Some(src.uint(key, v)? as usize),
            "lambda" => s.lambda = Some(src.float(key, v)?),
            "s" => s.s = Some(src.float(key, v)?),
            "s_prime" => s.s_prime = Some(src.float(key, v)?),
            "set" => {
                let texts: Vec<&str> = match v {
                    Value::String(one) => vec![one.as_str()],
                    Value::Array(items) => items
                        .iter()
                        .map(|x| x.as_str().ok_or_else(|| src.bad(key, "expected predicate strings")))
                        .collect::<Result<_, _>>()?,
                    _ => return Err(src.bad(key, "expected a predicate string or an array of them")),
                };
                s.set = Some(
                    texts
                        .iter()
                        .map(|t| t.parse().map_err(|e: birkhoff_core::Error| src.bad(key, e.to_string())))
                        .collect::<Result<_, _>>()?,
                );
            }
            other => {
                return Err(CliError::UnknownKey {
                    path: path.to_path_buf(),
                    line: line_of_key(text, other),
                    key: other.to_string(),
                })
            }
        }
    }
    Ok(s)
}

/// Comma-separated list flag, e.g. `--p-list 2,4,6`.
pub fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|x| {
            x.trim().parse().map_err(|e: T::Err| CliError::BadFlag {
                flag: flag.to_string(),
                message: format!("`{x}`: {e}"),
            })
        })
        .collect()
}
