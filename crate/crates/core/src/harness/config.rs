//! Experiment configuration files (TOML). Unknown keys are rejected.

use crate::error::{Error, Result};
use crate::field::{DiagonalSde, FieldSpec};
use crate::levy::AlphaSpec;
use crate::nonlocal::SingularQuadrature;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Density,
    Resolvent,
    Generator,
    Multiplier,
    Transience,
    Martingale,
    Uniqueness,
    Maximal,
}

impl ExperimentKind {
    /// CLI subcommand running this experiment.
    pub fn subcommand(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Density => "density",
            ExperimentKind::Resolvent => "resolvent",
            ExperimentKind::Generator => "generator",
            ExperimentKind::Multiplier => "multiplier",
            ExperimentKind::Transience => "transience",
            ExperimentKind::Martingale => "verify-martingale",
            ExperimentKind::Uniqueness => "verify-uniqueness",
            ExperimentKind::Maximal => "maximal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Optional; must equal the number of alphas when given.
    #[serde(default)]
    pub d: Option<usize>,
    pub alphas: Vec<f64>,
    /// Defaults to the unit constant field.
    #[serde(default)]
    pub field: Option<FieldSpec>,
    /// Defaults to the origin.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

/// Numerical knobs. Each experiment reads the ones it needs and falls back to
/// its own defaults for the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub times: Option<Vec<f64>>,
    pub half_width: Option<f64>,
    pub spacing: Option<f64>,
    pub grid_n: Option<usize>,
    pub grid_h: Option<f64>,
    pub pad: Option<usize>,
    pub points: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub npaths: Option<usize>,
    pub levels: Option<Vec<u32>>,
    pub coarsen: Option<usize>,
    #[serde(alias = "eps")]
    pub inner_cutoff: Option<f64>,
    #[serde(alias = "H")]
    pub outer_cutoff: Option<f64>,
    pub nodes_per_shell: Option<usize>,
    #[serde(alias = "lambda")]
    pub lambdas: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub fit_time: Option<f64>,
    pub radius: Option<f64>,
    pub refinement_levels: Option<u32>,
    pub random_specs: Option<usize>,
    pub xi_samples: Option<usize>,
    pub cross_checks: Option<usize>,
    pub eta_fractions: Option<Vec<f64>>,
    pub slack: Option<f64>,
    pub time_pairs: Option<Vec<[f64; 2]>>,
    pub export_paths: Option<usize>,
    pub discrepancy_paths: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => Error::Config(format!("{}: {other}", path.display())),
        })?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let d = p.alphas.len();
        let bad = |key: &str, msg: String| Err(Error::Config(format!("`{key}`: {msg}")));
        if d == 0 {
            return bad("problem.alphas", "must be non-empty".into());
        }
        if let Err(e) = AlphaSpec::new(&p.alphas) {
            return bad("problem.alphas", e.to_string());
        }
        if let Some(dd) = p.d {
            if dd != d {
                return bad("problem.d", format!("{dd} does not match {d} alphas"));
            }
        }
        if let Some(x0) = &p.x0 {
            if x0.len() != d {
                return bad("problem.x0", format!("has {} entries, expected {d}", x0.len()));
            }
        }
        if let Some(f) = &p.field {
            if f.dim() != d {
                return bad("problem.field", format!("has dimension {}, expected {d}", f.dim()));
            }
        }
        let n = &self.numerics;
        let positive = [
            ("numerics.half_width", n.half_width),
            ("numerics.spacing", n.spacing),
            ("numerics.grid_h", n.grid_h),
            ("numerics.dt", n.dt),
            ("numerics.horizon", n.horizon),
            ("numerics.inner_cutoff", n.inner_cutoff),
            ("numerics.outer_cutoff", n.outer_cutoff),
            ("numerics.fit_time", n.fit_time),
            ("numerics.radius", n.radius),
            ("numerics.slack", n.slack),
        ];
        for (key, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return bad(key, format!("{v} must be positive and finite"));
                }
            }
        }
        for (key, v) in [("numerics.times", &n.times), ("numerics.lambdas", &n.lambdas), ("numerics.deltas", &n.deltas)] {
            if let Some(v) = v {
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return bad(key, "needs positive finite entries".into());
                }
            }
        }
        if let Some(ps) = &n.p {
            if ps.is_empty() || ps.iter().any(|&x| !(x >= 1.0)) {
                return bad("numerics.p", "needs exponents in [1, inf]".into());
            }
        }
        if let Some(g) = n.grid_n {
            if g < 4 || g % 2 != 0 {
                return bad("numerics.grid_n", format!("{g} must be even and at least 4"));
            }
        }
        for (key, v) in [("numerics.npaths", n.npaths), ("numerics.points", n.points), ("numerics.coarsen", n.coarsen), ("numerics.pad", n.pad)] {
            if v == Some(0) {
                return bad(key, "must be positive".into());
            }
        }
        if let Some(pairs) = &n.time_pairs {
            if pairs.iter().any(|[s, t]| !(*s >= 0.0 && s < t)) {
                return bad("numerics.time_pairs", "needs 0 <= s < t in every pair".into());
            }
        }
        self.quadrature()?;
        self.system()?;
        Ok(())
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{:?}", self.experiment).to_lowercase())
    }

    pub fn dim(&self) -> usize {
        self.problem.alphas.len()
    }

    pub fn alpha_spec(&self) -> Result<AlphaSpec> {
        AlphaSpec::new(&self.problem.alphas)
    }

    pub fn x0(&self) -> Vec<f64> {
        self.problem.x0.clone().unwrap_or_else(|| vec![0.0; self.dim()])
    }

    pub fn field_spec(&self) -> FieldSpec {
        self.problem.field.clone().unwrap_or(FieldSpec::Constant { diag: vec![1.0; self.dim()] })
    }

    pub fn system(&self) -> Result<DiagonalSde> {
        DiagonalSde::from_spec(self.alpha_spec()?, &self.field_spec()).map_err(|e| Error::Config(format!("`problem.field`: {e}")))
    }

    pub fn quadrature(&self) -> Result<SingularQuadrature> {
        let n = &self.numerics;
        let mut q = SingularQuadrature::default();
        if let Some(v) = n.inner_cutoff {
            q.inner_cutoff = v;
        }
        if let Some(v) = n.outer_cutoff {
            q.outer_cutoff = v;
        }
        if let Some(v) = n.nodes_per_shell {
            q.nodes_per_shell = v;
        }
        q.validate().map_err(|e| Error::Config(format!("`numerics` quadrature: {e}")))?;
        Ok(q)
    }

    /// SHA-256 of the canonical JSON form, so formatting does not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "density"
[problem]
alphas = [1.0]
"#;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Density);
        assert_eq!(c.x0(), vec![0.0]);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[numerics]\nnpath = 3\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("npath"), "{err}");
        let text = format!("colour = 1\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml_str(&text).unwrap_err().to_string().contains("colour"));
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let text = "experiment = \"simulate\"\n[problem]\nalphas = [1.0, 1.5]\nx0 = [0.0]\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("problem.x0"), "{err}");
        let text = "experiment = \"simulate\"\n[problem]\nalphas = [2.5]\n";
        assert!(ExperimentConfig::from_toml_str(text).unwrap_err().to_string().contains("problem.alphas"));
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml_str("experiment=\"density\"\n\n[problem]\nalphas=[ 1.0 ]\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(a.hash(), c.hash());
    }
}
