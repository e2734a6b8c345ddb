//! Ergodic averages of local functionals along the environment seen from
//! the walker.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::env::EnvironmentView;
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::stats::{mean_se, MeanSe};
use crate::walk::Path;

/// A local functional of the transition vector at the walker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// `π_i`, written `pi:<i>`.
    Pi(usize),
    /// `|D - v̄|²`, written `drift_norm_sq`.
    DriftNormSq,
    /// Coordinate `c` of the local drift `D`, written `drift:<c>`.
    Drift(usize),
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownObservable(s.to_string());
        if s == "drift_norm_sq" {
            return Ok(Observable::DriftNormSq);
        }
        let (name, idx) = s.split_once(':').ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match name {
            "pi" => Ok(Observable::Pi(idx)),
            "drift" => Ok(Observable::Drift(idx)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Pi(i) => write!(f, "pi:{i}"),
            Observable::DriftNormSq => write!(f, "drift_norm_sq"),
            Observable::Drift(c) => write!(f, "drift:{c}"),
        }
    }
}

impl Observable {
    fn check(&self, env: &EnvironmentView) -> Result<()> {
        let ok = match *self {
            Observable::Pi(i) => i < env.support().len(),
            Observable::Drift(c) => c < env.nu(),
            Observable::DriftNormSq => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownObservable(self.to_string()))
        }
    }

    pub fn eval(&self, env: &EnvironmentView, level: i64, x: &Site) -> f64 {
        let pi = env.transition_vector(level, x);
        match *self {
            Observable::Pi(i) => pi[i],
            Observable::DriftNormSq => env.centered_drift_of(&pi)[..env.nu()]
                .iter()
                .map(|g| g * g)
                .sum(),
            Observable::Drift(c) => env.drift_of(&pi)[c],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicSeries {
    pub observable: String,
    /// `running[m] = (m + 1)^{-1} Σ_{j ≤ m} Ψ(T_{(j, X_j)} ω)`, for `m < n`.
    pub running: Vec<f64>,
    /// Mean and standard error of the path values (which are i.i.d., as
    /// each level carries fresh vectors).
    pub path_average: MeanSe,
    /// `E Ψ` from fresh sites `(-j, 0)`, `j = 1..=baseline_sites`.
    pub baseline: MeanSe,
}

pub fn ergodic_average(
    env: &EnvironmentView,
    path: &Path,
    observable: &str,
    baseline_sites: usize,
) -> Result<ErgodicSeries> {
    let obs: Observable = observable.parse()?;
    obs.check(env)?;
    let values: Vec<f64> = (0..path.n)
        .map(|m| obs.eval(env, m as i64, &path.positions[m]))
        .collect();
    let mut running = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (m, v) in values.iter().enumerate() {
        acc += v;
        running.push(acc / (m + 1) as f64);
    }
    let fresh: Vec<f64> = (1..=baseline_sites as i64)
        .map(|j| obs.eval(env, -j, &Site::ORIGIN))
        .collect();
    Ok(ErgodicSeries {
        observable: obs.to_string(),
        running,
        path_average: mean_se(&values),
        baseline: mean_se(&fresh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SiteLaw;
    use crate::walk::sample_path;

    #[test]
    fn parse() {
        assert_eq!("pi:1".parse::<Observable>().unwrap(), Observable::Pi(1));
        assert_eq!(
            "drift:0".parse::<Observable>().unwrap(),
            Observable::Drift(0)
        );
        for bad in ["pi", "pie:1", "pi:x", "norm"] {
            assert_eq!(
                bad.parse::<Observable>().unwrap_err(),
                Error::UnknownObservable(bad.into())
            );
        }
    }

    #[test]
    fn deterministic_is_constant() {
        let env = EnvironmentView::new(SiteLaw::simple_symmetric(1), 1).unwrap();
        let path = sample_path(&env, 100, 1).unwrap();
        let s = ergodic_average(&env, &path, "pi:0", 10).unwrap();
        assert!(s.running.iter().all(|v| *v == 0.5));
        assert!(ergodic_average(&env, &path, "pi:2", 10).is_err());
    }

    #[test]
    fn beta_mean() {
        let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 9).unwrap();
        let path = sample_path(&env, 20_000, 1).unwrap();
        let s = ergodic_average(&env, &path, "pi:0", 20_000).unwrap();
        assert!((s.path_average.mean - 0.5).abs() < 4.0 * s.path_average.se);
        let s = ergodic_average(&env, &path, "drift_norm_sq", 100).unwrap();
        assert!((s.path_average.mean - 1.0 / 3.0).abs() < 4.0 * s.path_average.se);
    }
}
