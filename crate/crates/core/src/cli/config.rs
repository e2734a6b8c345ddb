//! Experiment configuration: a JSON document whose keys can each be
//! overridden from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dp::DEFAULT_SUPPORT_CAP;
use crate::env::{validate_spec, SiteLaw};
use crate::error::{Error, Result};
use crate::verify::Observable;
use crate::walk::CenteringKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Clt,
    Collisions,
    Scaling,
    Corrector,
    MgCheck,
    Ergodic,
    Density,
    All,
}

impl Experiment {
    /// Order in which `all` runs the suites.
    pub const SUITES: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::Clt,
        Experiment::Collisions,
        Experiment::Scaling,
        Experiment::Corrector,
        Experiment::MgCheck,
        Experiment::Ergodic,
        Experiment::Density,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Clt => "clt",
            Experiment::Collisions => "collisions",
            Experiment::Scaling => "scaling",
            Experiment::Corrector => "corrector",
            Experiment::MgCheck => "mg-check",
            Experiment::Ergodic => "ergodic",
            Experiment::Density => "density",
            Experiment::All => "all",
        }
    }

    pub fn suites(&self) -> Vec<Experiment> {
        match self {
            Experiment::All => Self::SUITES.to_vec(),
            e => vec![*e],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringChoice {
    Deterministic,
    Quenched,
    Both,
}

impl CenteringChoice {
    pub fn kinds(&self) -> Vec<CenteringKind> {
        match self {
            CenteringChoice::Deterministic => vec![CenteringKind::Deterministic],
            CenteringChoice::Quenched => vec![CenteringKind::Quenched],
            CenteringChoice::Both => vec![CenteringKind::Deterministic, CenteringKind::Quenched],
        }
    }
}

/// Every pass/fail threshold used by the suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub cov_rel_error: f64,
    pub ks_p: f64,
    pub increment_corr: f64,
    pub z_max: f64,
    /// Unset windows take dimension-dependent defaults, see
    /// [`Thresholds::variance_window`] and friends.
    pub variance_slope: Option<[f64; 2]>,
    pub collision_slope: Option<[f64; 2]>,
    pub decay_slope: Option<[f64; 2]>,
    pub remainder_alpha_max: f64,
    pub h_norm_alpha_max: f64,
    pub identity_residual: f64,
    pub cocycle_residual: f64,
    /// Resolvent-equation and martingale residuals, in units of `tol`.
    pub resolvent_tol_mult: f64,
    pub diffusion_abs: f64,
    pub diffusion_se_mult: f64,
    pub qv_rel_deviation: f64,
    pub lindeberg_delta: f64,
    pub lindeberg_max: f64,
    pub se_mult: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            cov_rel_error: 0.05,
            ks_p: 0.001,
            increment_corr: 0.05,
            z_max: 4.0,
            variance_slope: None,
            collision_slope: None,
            decay_slope: None,
            remainder_alpha_max: 0.35,
            h_norm_alpha_max: 0.35,
            identity_residual: 1e-9,
            cocycle_residual: 1e-9,
            resolvent_tol_mult: 2.0,
            diffusion_abs: 0.05,
            diffusion_se_mult: 4.0,
            qv_rel_deviation: 0.1,
            lindeberg_delta: 0.1,
            lindeberg_max: 0.01,
            se_mult: 4.0,
        }
    }
}

impl Thresholds {
    /// Window for the slope of `log √V(n)`: `α = 1/4` in one dimension; in
    /// higher dimensions the collision sum grows at most logarithmically.
    pub fn variance_window(&self, nu: usize) -> [f64; 2] {
        self.variance_slope
            .unwrap_or(if nu == 1 { [0.20, 0.30] } else { [-0.05, 0.15] })
    }

    /// Window for the growth exponent of `Σ_{k<n} P(Y_k = 0)`.
    pub fn collision_window(&self, nu: usize) -> [f64; 2] {
        self.collision_slope
            .unwrap_or(if nu == 1 { [0.4, 0.6] } else { [-0.05, 0.15] })
    }

    /// Window for the decay of `n^{-1/2} max_k |E_0^ω X_k - k v̄|`.
    pub fn decay_window(&self, nu: usize) -> [f64; 2] {
        self.decay_slope.unwrap_or(if nu == 1 {
            [-0.35, -0.15]
        } else {
            [-0.65, -0.35]
        })
    }
}

fn default_seed() -> u64 {
    42
}

fn default_tol() -> f64 {
    1e-6
}

fn default_output() -> PathBuf {
    PathBuf::from("rwre-out")
}

fn default_cap() -> u64 {
    DEFAULT_SUPPORT_CAP
}

/// The configuration file. Optional sizes left unset take the defaults of
/// the suite being run (see [`Resolved`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub law: SiteLaw,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    pub n: Option<usize>,
    #[serde(rename = "N")]
    pub replicas: Option<usize>,
    #[serde(rename = "M")]
    pub environments: Option<usize>,
    pub ladder: Option<Vec<usize>>,
    pub decay_ladder: Option<Vec<usize>>,
    pub rn_ladder: Option<Vec<usize>>,
    pub density_ladder: Option<Vec<usize>>,
    pub eps_ladder: Option<Vec<f64>>,
    pub h_eps_ladder: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub t_grid: Option<Vec<f64>>,
    pub directions: Option<Vec<Vec<f64>>>,
    pub centering: Option<CenteringChoice>,
    pub observable: Option<String>,
    pub n_pairs: Option<usize>,
    pub samples: Option<usize>,
    pub paths: Option<usize>,
    pub sites: Option<usize>,
    pub bridges: Option<usize>,
    pub steps_per_sample: Option<usize>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    #[serde(default = "default_cap")]
    pub support_cap: u64,
}

fn pow2(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|j| 1usize << j).collect()
}

/// Sizes of one suite after defaults are filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub n: usize,
    #[serde(rename = "N")]
    pub replicas: usize,
    #[serde(rename = "M")]
    pub environments: usize,
    pub ladder: Vec<usize>,
    pub decay_ladder: Vec<usize>,
    pub rn_ladder: Vec<usize>,
    pub density_ladder: Vec<usize>,
    pub eps_ladder: Vec<f64>,
    pub h_eps_ladder: Vec<f64>,
    pub epsilon: f64,
    pub t_grid: Vec<f64>,
    pub centering: CenteringChoice,
    pub observable: String,
    pub n_pairs: usize,
    pub samples: usize,
    pub paths: usize,
    pub sites: usize,
    pub bridges: usize,
    pub steps_per_sample: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults for `suite`, overridden by whatever the file sets.
    pub fn resolve(&self, suite: Experiment) -> Resolved {
        use Experiment::*;
        let (n, replicas, environments, samples) = match suite {
            Simulate => (256, 16, 2, 0),
            Clt => (4096, 20_000, 2, 0),
            Collisions => (256, 0, 2000, 0),
            Scaling => (0, 0, 2000, 0),
            Corrector => (256, 0, 5000, 500),
            MgCheck => (4096, 0, 2000, 50),
            Ergodic => (100_000, 0, 0, 0),
            Density => (0, 0, 5000, 0),
            All => (0, 0, 0, 0),
        };
        let epsilon_default = match suite {
            MgCheck => 1.0 / 64.0,
            Corrector => 1.0 / 16.0,
            _ => 1.0 / self.n.unwrap_or(n).max(1) as f64,
        };
        let t_grid_default = match suite {
            MgCheck => (1..=10).map(|j| j as f64 / 10.0).collect(),
            _ => vec![0.25, 0.5, 0.75, 1.0],
        };
        Resolved {
            n: self.n.unwrap_or(n),
            replicas: self.replicas.unwrap_or(replicas),
            environments: self.environments.unwrap_or(environments),
            ladder: self.ladder.clone().unwrap_or_else(|| pow2(6, 12)),
            decay_ladder: self.decay_ladder.clone().unwrap_or_else(|| pow2(8, 14)),
            rn_ladder: self
                .rn_ladder
                .clone()
                .unwrap_or_else(|| vec![64, 256, 1024]),
            density_ladder: self
                .density_ladder
                .clone()
                .unwrap_or_else(|| vec![0, 1, 2, 4, 8]),
            eps_ladder: self
                .eps_ladder
                .clone()
                .unwrap_or_else(|| vec![0.25, 0.0625, 0.015625]),
            h_eps_ladder: self
                .h_eps_ladder
                .clone()
                .unwrap_or_else(|| (2..=6).map(|j| 0.5f64.powi(j)).collect()),
            epsilon: self.epsilon.unwrap_or(epsilon_default),
            t_grid: self.t_grid.clone().unwrap_or(t_grid_default),
            centering: self.centering.unwrap_or(CenteringChoice::Both),
            observable: self.observable.clone().unwrap_or_else(|| "pi:0".into()),
            n_pairs: self.n_pairs.unwrap_or(100_000),
            samples: self.samples.unwrap_or(samples),
            paths: self.paths.unwrap_or(20),
            sites: self.sites.unwrap_or(100),
            bridges: self.bridges.unwrap_or(50),
            steps_per_sample: self.steps_per_sample.unwrap_or(0),
        }
    }

    /// Checks every field before any computation; returns the validated
    /// law.
    pub fn validate(&self) -> Result<SiteLaw> {
        let law = validate_spec(self.law.clone())?;
        let bad = |m: String| Err(Error::Config(m));
        let experiment = self
            .experiment
            .ok_or_else(|| Error::Config("no experiment given".into()))?;
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.support_cap == 0 {
            return bad("support_cap must be positive".into());
        }
        if let Some(d) = &self.directions {
            if d.iter().any(|v| v.len() != law.nu()) {
                return bad(format!("directions must have {} coordinates", law.nu()));
            }
        }
        for suite in experiment.suites() {
            let r = self.resolve(suite);
            let name = suite.name();
            let increasing = |key: &str,
                              l: &[usize],
                              min_len: usize,
                              allow_zero: bool|
             -> Result<()> {
                if l.len() < min_len
                    || l.windows(2).any(|w| w[0] >= w[1])
                    || (!allow_zero && l.first() == Some(&0))
                {
                    return Err(Error::Config(format!(
                        "{name}: {key} must be strictly increasing{} with at least {min_len} points, got {l:?}",
                        if allow_zero { "" } else { " and positive" }
                    )));
                }
                Ok(())
            };
            let positive = |key: &str, v: usize, min: usize| -> Result<()> {
                if v < min {
                    return Err(Error::Config(format!(
                        "{name}: {key} must be at least {min}, got {v}"
                    )));
                }
                Ok(())
            };
            let eps_ok = |key: &str, l: &[f64]| -> Result<()> {
                if l.is_empty() || l.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::Config(format!(
                        "{name}: {key} needs positive values, got {l:?}"
                    )));
                }
                Ok(())
            };
            let grid_ok = |l: &[f64]| -> Result<()> {
                if l.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::Config(format!(
                        "{name}: t_grid values must lie in [0, 1]"
                    )));
                }
                Ok(())
            };
            match suite {
                Experiment::Simulate => {
                    positive("n", r.n, 1)?;
                    positive("N", r.replicas, 1)?;
                }
                Experiment::Clt => {
                    positive("n", r.n, 1)?;
                    positive("N", r.replicas, 20)?;
                    grid_ok(&r.t_grid)?;
                }
                Experiment::Collisions => {
                    positive("n", r.n, 1)?;
                    positive("M", r.environments, 2)?;
                    positive("n_pairs", r.n_pairs, 2)?;
                }
                Experiment::Scaling => {
                    increasing("ladder", &r.ladder, 2, false)?;
                    positive("M", r.environments, 2)?;
                    if !r.decay_ladder.is_empty() {
                        increasing("decay_ladder", &r.decay_ladder, 4, false)?;
                    }
                }
                Experiment::Corrector => {
                    positive("n", r.n, 1)?;
                    positive("M", r.environments, 2)?;
                    positive("paths", r.paths, 1)?;
                    if !r.rn_ladder.is_empty() {
                        increasing("rn_ladder", &r.rn_ladder, 2, false)?;
                        positive("samples", r.samples, 2)?;
                    }
                    eps_ok("eps_ladder", &r.eps_ladder)?;
                    eps_ok("h_eps_ladder", &r.h_eps_ladder)?;
                    eps_ok("epsilon", &[r.epsilon])?;
                }
                Experiment::MgCheck => {
                    positive("n", r.n, 1)?;
                    positive("M", r.environments, 2)?;
                    positive("samples", r.samples, 1)?;
                    eps_ok("epsilon", &[r.epsilon])?;
                    grid_ok(&r.t_grid)?;
                }
                Experiment::Ergodic => {
                    positive("n", r.n, 2)?;
                    let obs: Observable = r.observable.parse()?;
                    let ok = match obs {
                        Observable::Pi(i) => i < law.support.len(),
                        Observable::Drift(c) => c < law.nu(),
                        Observable::DriftNormSq => true,
                    };
                    if !ok {
                        return Err(Error::UnknownObservable(r.observable));
                    }
                }
                Experiment::Density => {
                    increasing("density_ladder", &r.density_ladder, 1, true)?;
                    positive("M", r.environments, 2)?;
                }
                Experiment::All => unreachable!("expanded above"),
            }
        }
        Ok(law)
    }
}

/// Sets `key` (dotted for nested objects) to `raw`, read as JSON when it
/// parses and as a string otherwise.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad key {key:?}")));
        }
        let obj = match slot {
            Value::Object(m) => m,
            _ => return Err(Error::Config(format!("{key:?}: parent is not an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str =
        r#"{"law": {"nu": 1, "steps": [[-1], [1]], "kind": "dirichlet", "alphas": [1, 1]}}"#;

    #[test]
    fn defaults_and_overrides() {
        let mut v: Value = serde_json::from_str(BASE).unwrap();
        apply_override(&mut v, "experiment", "scaling").unwrap();
        apply_override(&mut v, "M", "100").unwrap();
        apply_override(&mut v, "thresholds.ks_p", "0.01").unwrap();
        let c = ExperimentConfig::from_value(v).unwrap();
        assert_eq!(c.experiment, Some(Experiment::Scaling));
        assert_eq!(c.environments, Some(100));
        assert_eq!(c.thresholds.ks_p, 0.01);
        assert_eq!(c.master_seed, 42);
        let r = c.resolve(Experiment::Scaling);
        assert_eq!(r.ladder, vec![64, 128, 256, 512, 1024, 2048, 4096]);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: Value = serde_json::from_str(BASE).unwrap();
        apply_override(&mut v, "nn", "3").unwrap();
        assert!(matches!(
            ExperimentConfig::from_value(v),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_law_rejected() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "clt", "law": {"nu": 1, "steps": [[-1], [1]], "kind": "deterministic", "vector": [0.5, 1.0]}}"#,
        )
        .unwrap();
        assert!(matches!(c.validate(), Err(Error::Normalization(_))));
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::SUITES {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("walk".parse::<Experiment>().is_err());
    }
}
