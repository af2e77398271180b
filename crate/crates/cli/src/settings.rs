use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;

use crate::failure::Failure;

const KEYS: &[&str] = &[
    "n",
    "p",
    "sigma",
    "format",
    "rel_tol",
    "abs_tol",
    "l0",
    "l_max",
    "arc",
    "cap",
    "lambda1",
    "measure",
    "grid",
    "tol",
    "over",
    "from",
    "to",
    "step",
    "n_rho",
    "n_phi",
    "L",
    "eps_reg",
    "eps_schedule",
    "max_iter",
    "grad_tol",
    "init_perturb",
    "outer",
    "allow_sigma_one",
    "init",
    "field_out",
];

/// Values from a `key = value` file, consulted when a flag is absent.
#[derive(Debug, Default)]
pub struct FileLayer {
    values: BTreeMap<String, String>,
}

impl FileLayer {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(FileLayer::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::usage(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Failure::usage(format!(
                    "config line {}: unknown key {key:?}",
                    lineno + 1
                )));
            }
            values.insert(key.to_string(), value.to_string());
        }
        Ok(FileLayer { values })
    }

    /// The flag if given, else the file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Failure::usage(format!("config {key} = {s:?}: {e}")))
            })
            .transpose()
    }

    pub fn pick_enum<T: ValueEnum>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|s| {
                T::from_str(s, true)
                    .map_err(|e| Failure::usage(format!("config {key} = {s:?}: {e}")))
            })
            .transpose()
    }

    /// Boolean switches: set by the flag or by a true file value.
    pub fn pick_switch(&self, flag: bool, key: &str) -> Result<bool, Failure> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}
