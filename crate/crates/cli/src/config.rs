//! Run configuration, loadable from TOML with command-line overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bregman_core::fem::Discretization;
use bregman_core::mesh::TriangularMesh;
use bregman_core::quadrature::QuadratureRule;
use bregman_core::schedule::{ScheduleRule, Schedules};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Largest supported quadrature degree.
pub const MAX_QUAD_DEGREE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subdivisions per side of each mesh in the family.
    pub n_div: Vec<usize>,
    /// `α_k` rule, e.g. `0.1` or `0.5*0.97^k`.
    pub alpha: String,
    /// `ε_k` rule, e.g. `1*k^-1.5`.
    pub eps: String,
    pub k_max: usize,
    /// Newton iteration cap per subproblem.
    pub ssn_max_iter: usize,
    pub quad_degree: usize,
    pub out: PathBuf,
    pub seed: u64,
    /// Budget `C` of the stopping index.
    pub c_budget: f64,
    /// Nested reference mesh for `δ(h)`.
    pub reference_n_div: usize,
    /// Cells per side of the sublevel-measure grid.
    pub asc_resolution: usize,
    /// Inline `δ(h)` values, one per entry of `n_div`; empty means estimate.
    pub delta: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_div: vec![10, 20, 40],
            alpha: "0.1".into(),
            eps: "1*k^-1.5".into(),
            k_max: 500,
            ssn_max_iter: 50,
            quad_degree: 5,
            out: PathBuf::from("bregman-out"),
            seed: 0,
            c_budget: 10.0,
            reference_n_div: 160,
            asc_resolution: 4096,
            delta: Vec::new(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn canonical_rule(field: &str, text: &str) -> Result<String> {
    let rule: ScheduleRule = text
        .parse()
        .map_err(|e| config_error(format!("{field}: {e}")))?;
    let canonical = rule.to_string();
    let again: ScheduleRule = canonical
        .parse()
        .map_err(|e| config_error(format!("{field}: {e}")))?;
    if again != rule {
        return Err(config_error(format!("{field}: `{text}` does not round-trip")));
    }
    Ok(canonical)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every field and rewrites the schedules in canonical form.
    pub fn validated(mut self) -> Result<Self> {
        if self.n_div.is_empty() {
            return Err(config_error("n_div needs at least one mesh"));
        }
        if let Some(n) = self.n_div.iter().find(|&&n| n < 2) {
            return Err(config_error(format!("n_div must be at least 2, got {n}")));
        }
        self.alpha = canonical_rule("alpha", &self.alpha)?;
        self.eps = canonical_rule("eps", &self.eps)?;
        self.schedules()?;
        for (name, v) in [
            ("k_max", self.k_max),
            ("ssn_max_iter", self.ssn_max_iter),
            ("quad_degree", self.quad_degree),
        ] {
            if v == 0 {
                return Err(config_error(format!("{name} must be positive")));
            }
        }
        if self.quad_degree > MAX_QUAD_DEGREE {
            return Err(config_error(format!("quad_degree must be at most {MAX_QUAD_DEGREE}")));
        }
        if self.seed > i64::MAX as u64 {
            return Err(config_error("seed must fit in a signed 64-bit integer"));
        }
        if !(self.c_budget > 0.0 && self.c_budget.is_finite()) {
            return Err(config_error(format!("c_budget must be positive, got {}", self.c_budget)));
        }
        if self.reference_n_div < 2 {
            return Err(config_error("reference_n_div must be at least 2"));
        }
        if self.asc_resolution < 2 {
            return Err(config_error("asc_resolution must be at least 2"));
        }
        if let Some(d) = self.delta.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(config_error(format!("delta values must be finite and nonnegative, got {d}")));
        }
        if !self.delta.is_empty() && self.delta.len() != self.n_div.len() {
            return Err(config_error(format!(
                "{} delta values for {} meshes",
                self.delta.len(),
                self.n_div.len()
            )));
        }
        Ok(self)
    }

    pub fn schedules(&self) -> Result<Schedules> {
        let alpha: ScheduleRule = self.alpha.parse()?;
        let eps: ScheduleRule = self.eps.parse()?;
        Ok(Schedules::new(alpha, eps)?)
    }

    pub fn rule(&self) -> QuadratureRule {
        QuadratureRule::with_degree(self.quad_degree)
    }

    pub fn discretization(&self, n_div: usize) -> Result<Arc<Discretization>> {
        let mesh = Arc::new(TriangularMesh::new(n_div)?);
        Ok(Arc::new(Discretization::new(mesh, self.rule())?))
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_div: Vec<usize>,
    pub alpha: Option<String>,
    pub eps: Option<String>,
    pub k_max: Option<usize>,
    pub ssn_max_iter: Option<usize>,
    pub quad_degree: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub c_budget: Option<f64>,
    pub reference_n_div: Option<usize>,
    pub asc_resolution: Option<usize>,
    pub delta: Vec<f64>,
}

impl Overrides {
    pub fn apply(self, mut cfg: RunConfig) -> RunConfig {
        if !self.n_div.is_empty() {
            cfg.n_div = self.n_div;
        }
        if !self.delta.is_empty() {
            cfg.delta = self.delta;
        }
        macro_rules! take {
            ($($f:ident),*) => {
                $(if let Some(v) = self.$f {
                    cfg.$f = v;
                })*
            };
        }
        take!(alpha, eps, k_max, ssn_max_iter, quad_degree, out, seed, c_budget, reference_n_div, asc_resolution);
        cfg
    }
}

/// File (or defaults) with overrides applied, validated.
pub fn resolve(file: Option<&Path>, overrides: Overrides) -> Result<RunConfig> {
    let base = match file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(base).validated()
}
