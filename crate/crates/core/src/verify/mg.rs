//! Hypotheses of the martingale-array invariance principle along a path.

use serde::Serialize;

use crate::corrector::{ResolventField, ResolventParams};
use crate::env::EnvironmentView;
use crate::error::{Error, Result};
use crate::lattice::MAX_NU;
use crate::stats::{frobenius, frobenius_diff};
use crate::walk::{grid_index, Path};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QvPoint {
    pub t: f64,
    /// `Σ_{k ≤ [nt]} E(Y_{n,k} Y_{n,k}^T | F_{k-1})`.
    pub matrix: Vec<Vec<f64>>,
    /// `‖matrix - t Γ̂‖_F / ‖Γ̂‖_F`.
    pub rel_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MgHypothesesReport {
    pub n: usize,
    pub epsilon: f64,
    pub gamma_hat: Vec<Vec<f64>>,
    pub qv_curve: Vec<QvPoint>,
    pub max_rel_deviation: f64,
    /// `(δ, Σ_k E(|Y_{n,k}|² 1{|Y_{n,k}| > δ} | F_{k-1}))`.
    pub lindeberg: Vec<(f64, f64)>,
    /// `max_k |Y_{n,k}|` over the realized increments.
    pub max_increment: f64,
    pub h_error_bound: f64,
}

/// `Y_{n,k} = n^{-1/2} (Z_k - D(T_{X_{k-1}} ω) + H_ε(...))` along `path`,
/// with conditional moments summed exactly over the next step.
pub fn mg_hypotheses(
    env: &EnvironmentView,
    path: &Path,
    params: &ResolventParams,
    gamma_hat: &[Vec<f64>],
    t_grid: &[f64],
    lindeberg_thresholds: &[f64],
    cap: u64,
) -> Result<MgHypothesesReport> {
    let nu = env.nu();
    let n = path.n;
    if gamma_hat.len() != nu || gamma_hat.iter().any(|r| r.len() != nu) {
        return Err(Error::InvalidArgument(format!("Γ̂ must be {nu}×{nu}")));
    }
    let mut grid = t_grid.to_vec();
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument(
            "qv grid times must lie in [0, 1]".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    let field = ResolventField::along(env, &path.positions, params, cap)?;
    let eps = params.epsilon;
    let scale = 1.0 / n as f64;
    let steps = env.support().steps();
    let missing = |k: usize| Error::Index {
        index: k,
        len: n + 1,
    };

    let mut qv = vec![0.0; nu * nu];
    let mut lind = vec![0.0; lindeberg_thresholds.len()];
    let mut max_increment: f64 = 0.0;
    let mut qv_curve = Vec::with_capacity(grid.len());
    let mut next_t = 0;
    let gamma_norm = frobenius(gamma_hat);
    let snapshot = |k: usize, qv: &[f64], out: &mut Vec<QvPoint>, next_t: &mut usize| {
        while *next_t < grid.len() && grid_index(n, grid[*next_t]) == k {
            let t = grid[*next_t];
            let m: Vec<Vec<f64>> = (0..nu).map(|a| qv[a * nu..(a + 1) * nu].to_vec()).collect();
            let target: Vec<Vec<f64>> = gamma_hat
                .iter()
                .map(|r| r.iter().map(|g| t * g).collect())
                .collect();
            let dev = frobenius_diff(&m, &target);
            out.push(QvPoint {
                t,
                matrix: m,
                rel_deviation: if gamma_norm > 0.0 {
                    dev / gamma_norm
                } else {
                    dev
                },
            });
            *next_t += 1;
        }
    };
    snapshot(0, &qv, &mut qv_curve, &mut next_t);
    for k in 0..n {
        let x = path.positions[k];
        let pi = env.transition_vector(k as i64, &x);
        let d = env.drift_of(&pi);
        let g = env.centered_drift_of(&pi);
        let h0 = field.h(k, &x).ok_or_else(|| missing(k))?;
        let taken = path.positions[k + 1] - x;
        for (z, p) in steps.iter().zip(&pi) {
            let h1 = field.h(k + 1, &(x + *z)).ok_or_else(|| missing(k + 1))?;
            let mut w = [0.0; MAX_NU];
            for c in 0..nu {
                w[c] = z.0[c] as f64 - d[c] + h1[c] - (1.0 + eps) * h0[c] + g[c];
            }
            let sq: f64 = w[..nu].iter().map(|v| v * v).sum::<f64>() * scale;
            if *z == taken {
                max_increment = max_increment.max(sq.sqrt());
            }
            if *p == 0.0 {
                continue;
            }
            for a in 0..nu {
                for b in 0..nu {
                    qv[a * nu + b] += p * w[a] * w[b] * scale;
                }
            }
            for (l, &delta) in lind.iter_mut().zip(lindeberg_thresholds) {
                if sq.sqrt() > delta {
                    *l += p * sq;
                }
            }
        }
        snapshot(k + 1, &qv, &mut qv_curve, &mut next_t);
    }
    let max_rel_deviation = qv_curve.iter().map(|q| q.rel_deviation).fold(0.0, f64::max);
    Ok(MgHypothesesReport {
        n,
        epsilon: eps,
        gamma_hat: gamma_hat.to_vec(),
        qv_curve,
        max_rel_deviation,
        lindeberg: lindeberg_thresholds.iter().copied().zip(lind).collect(),
        max_increment,
        h_error_bound: field.error_bound(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{annealed_params, DEFAULT_SUPPORT_CAP as CAP};
    use crate::env::SiteLaw;
    use crate::walk::sample_path;

    #[test]
    fn iid_steps_give_linear_qv() {
        let law = SiteLaw::simple_symmetric(2);
        let env = EnvironmentView::new(law.clone(), 5).unwrap();
        let d = annealed_params(&law).d_matrix;
        let path = sample_path(&env, 1024, 3).unwrap();
        let p = ResolventParams::new(&law, 1.0 / 64.0, 1e-6).unwrap();
        let r = mg_hypotheses(&env, &path, &p, &d, &[0.25, 0.5, 1.0], &[0.1, 1.0], CAP).unwrap();
        assert_eq!(r.qv_curve.len(), 3);
        for q in &r.qv_curve {
            assert_eq!(q.rel_deviation, 0.0);
        }
        assert_eq!(r.qv_curve[2].matrix, d);
        // increments are 1/32 in size: nothing exceeds either threshold
        assert_eq!(r.lindeberg, vec![(0.1, 0.0), (1.0, 0.0)]);
        assert_eq!(r.max_increment, 1.0 / 32.0);
    }
}
