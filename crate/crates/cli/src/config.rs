//! Run parameters merged from a `key = value` file and command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use expint::Grid3D;

/// Bad input caught before any work starts; exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<expint::Error> for ConfigError {
    fn from(e: expint::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

/// Parameter values by normalized key (`t_end` and `t-end` are the same key).
#[derive(Debug, Default)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// Reads `key = value` lines; `#` starts a comment. Keys outside `allowed` are
    /// rejected.
    pub fn from_file(path: &Path, allowed: &[&str]) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("{}:{}: expected `key = value`", path.display(), k + 1))
            })?;
            let key = normalize(key);
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "{}:{}: unknown key `{key}` (allowed: {})",
                    path.display(),
                    k + 1,
                    allowed.join(", ")
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Params { values })
    }

    /// Flags win over file values.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.values.insert(normalize(key), v);
        }
    }

    pub fn set_flag(&mut self, key: &str, on: bool) {
        if on {
            self.values.insert(normalize(key), "true".into());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> ConfigResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("invalid {key} `{v}`: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> ConfigResult<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> ConfigResult<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError(format!("missing required parameter `{key}`")))
    }

    pub fn flag(&self, key: &str) -> ConfigResult<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(ConfigError(format!("invalid {key} `{v}`: expected true or false"))),
            },
        }
    }

    /// Comma-separated list, each item parsed.
    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> ConfigResult<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key).unwrap_or(default);
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|e| ConfigError(format!("invalid {key} entry `{}`: {e}", s.trim())))
            })
            .collect()
    }

    pub fn grid(&self, default: usize) -> ConfigResult<Grid3D> {
        match self.raw("grid") {
            None => Ok(Grid3D::cube(default)?),
            Some(s) => parse_grid(s),
        }
    }

    pub fn positive(&self, key: &str, default: Option<f64>) -> ConfigResult<f64> {
        let v = match default {
            Some(d) => self.get_or(key, d)?,
            None => self.require(key)?,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(ConfigError(format!("{key} must be positive and finite, got {v}")));
        }
        Ok(v)
    }
}

/// `N` for a cube or `NX,NY,NZ`.
pub fn parse_grid(s: &str) -> ConfigResult<Grid3D> {
    let dims = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| ConfigError(format!("invalid grid `{s}`: {e}")))
        })
        .collect::<ConfigResult<Vec<usize>>>()?;
    match dims[..] {
        [n] => Ok(Grid3D::cube(n)?),
        [nx, ny, nz] => Ok(Grid3D::new(nx, ny, nz)?),
        _ => Err(ConfigError(format!("invalid grid `{s}`: expected N or NX,NY,NZ"))),
    }
}
