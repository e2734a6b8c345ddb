//! Exponents of the quenched-mean fluctuations.

use serde::Serialize;

use super::fit::{fit_exponent, ExponentFit, FitPoint};
use crate::dp::{
    annealed_params, collision_sum, quenched_mean_series, variance_quenched_mean, VariancePoint,
};
use crate::env::{EnvironmentView, SiteLaw};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenteringDecay {
    /// `n^{-1/2} max_{k≤n} |E_0^ω X_k - k v̄|` per ladder point.
    pub values: Vec<(usize, f64)>,
    pub fit: ExponentFit,
}

fn check_ladder(ladder: &[usize], min_points: usize) -> Result<()> {
    if ladder.len() < min_points {
        return Err(Error::InvalidArgument(format!(
            "ladder needs at least {min_points} points, got {}",
            ladder.len()
        )));
    }
    if ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "ladder must be positive and strictly increasing: {ladder:?}"
        )));
    }
    Ok(())
}

/// Exact quenched means from one forward recursion up to the largest
/// ladder point.
pub fn centering_decay(
    env: &EnvironmentView,
    ladder: &[usize],
    cap: u64,
) -> Result<CenteringDecay> {
    check_ladder(ladder, 4)?;
    let horizon = *ladder.last().expect("non-empty");
    let nu = env.nu();
    let v_bar = env.mean_step();
    let mut running = vec![0.0; horizon + 1];
    if !env.is_degenerate() {
        let series = quenched_mean_series(env, horizon, cap)?;
        let mut worst: f64 = 0.0;
        for (k, m) in series.means.iter().enumerate() {
            let d = (0..nu)
                .map(|c| (m[c] - k as f64 * v_bar[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
            running[k] = worst;
        }
    }
    let values: Vec<(usize, f64)> = ladder
        .iter()
        .map(|&n| (n, running[n] / (n as f64).sqrt()))
        .collect();
    let fit = fit_exponent(
        values
            .iter()
            .map(|&(n, v)| FitPoint::new(n as f64, v, 0.0))
            .collect(),
    );
    Ok(CenteringDecay { values, fit })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceScaling {
    pub points: Vec<VariancePoint>,
    /// Fit of `log √V(n)` against `log n`.
    pub fit: ExponentFit,
    /// `Σ_{k<n} P(Y_k = 0)` per ladder point.
    pub collision_sums: Vec<(usize, f64)>,
    /// Fit of the collision partial sums against `n`.
    pub collision_fit: ExponentFit,
    pub g_norm_sq: f64,
}

pub fn variance_scaling(
    law: &SiteLaw,
    ladder: &[usize],
    m_envs: usize,
    master_seed: u64,
    cap: u64,
) -> Result<VarianceScaling> {
    check_ladder(ladder, 2)?;
    let points = variance_quenched_mean(law, master_seed, m_envs, ladder, cap)?;
    let fit = fit_exponent(
        points
            .iter()
            .map(|p| {
                let root = p.v.sqrt();
                let se = if root > 0.0 { p.se / (2.0 * root) } else { 0.0 };
                FitPoint::new(p.n as f64, root, se)
            })
            .collect(),
    );
    let params = annealed_params(law);
    let series = collision_sum(&params, *ladder.last().expect("non-empty"), cap)?;
    let collision_sums: Vec<(usize, f64)> = ladder
        .iter()
        .map(|&n| (n, series.partial_sums[n - 1]))
        .collect();
    let collision_fit = fit_exponent(
        collision_sums
            .iter()
            .map(|&(n, s)| FitPoint::new(n as f64, s, 0.0))
            .collect(),
    );
    Ok(VarianceScaling {
        points,
        fit,
        collision_sums,
        collision_fit,
        g_norm_sq: params.g_norm_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::DEFAULT_SUPPORT_CAP as CAP;

    #[test]
    fn degenerate_law_is_flat_zero() {
        let env = EnvironmentView::new(SiteLaw::simple_symmetric(1), 3).unwrap();
        let d = centering_decay(&env, &[4, 8, 16, 32], CAP).unwrap();
        assert!(d.values.iter().all(|v| v.1 == 0.0));
        assert!(d.fit.degenerate);
        let v = variance_scaling(&SiteLaw::simple_symmetric(1), &[4, 8], 10, 1, CAP).unwrap();
        assert!(v.fit.degenerate);
        assert!(v.points.iter().all(|p| p.v == 0.0));
    }

    #[test]
    fn values_nonnegative() {
        let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 3).unwrap();
        let d = centering_decay(&env, &[8, 16, 32, 64], CAP).unwrap();
        assert!(d.values.iter().all(|v| v.1 >= 0.0));
    }

    #[test]
    fn ladder_validation() {
        let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 3).unwrap();
        assert!(centering_decay(&env, &[8, 16, 32], CAP).is_err());
        assert!(centering_decay(&env, &[8, 16, 16, 32], CAP).is_err());
    }
}
