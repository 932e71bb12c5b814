//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;

/// One asserted property with the value it was judged on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Acceptance condition on `measured`, e.g. `<= 1e-10` or `in [1.9, 2.1]`.
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("<= {limit:e}"),
            passed: measured <= limit,
        }
    }

    pub fn at_least(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!(">= {limit:e}"),
            passed: measured >= limit,
        }
    }

    pub fn below(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("< {limit:e}"),
            passed: measured < limit,
        }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&measured),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: measured {:.6e}, required {}", self.name, self.measured, self.threshold)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    /// Files written, relative to the run directory.
    pub outputs: Vec<PathBuf>,
    /// Fitted constants and other scalar results.
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per phase; stored apart from the report so that
    /// seeded reports stay byte-identical.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Timings<'a> {
    seconds: &'a BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config_hash: config.hash()?,
            config: config.clone(),
            outputs: Vec::new(),
            values: BTreeMap::new(),
            checks: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes `report.toml` and `timings.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.toml"), self.to_toml()?)?;
        let timings = toml::to_string(&Timings { seconds: &self.timings })?;
        fs::write(dir.join("timings.toml"), timings)?;
        Ok(())
    }
}
