//! Three-way check of `V(n) = E|g|² Σ_{k<n} P(Y_k = 0)`.

use rayon::prelude::*;

use crate::dp::{annealed_params, collision_sum, variance_quenched_mean};
use crate::env::{EnvironmentView, SiteLaw};
use crate::error::Result;
use crate::report::TestReport;
use crate::rng::{derive_seed, tag};
use crate::stats::{mean_se, z_score};
use crate::walk::sample_pair;

pub const Z_MAX: f64 = 4.0;

/// Compares (i) the exact collision-chain value, (ii) the environment
/// average of the exact quenched-mean variance and (iii) the Monte Carlo
/// count of meetings of walker pairs, each pair in a fresh environment.
pub fn collision_identity_test(
    law: &SiteLaw,
    n: usize,
    m_envs: usize,
    n_pairs: usize,
    master_seed: u64,
    cap: u64,
) -> Result<TestReport> {
    let params = annealed_params(law);
    let g2 = params.g_norm_sq;
    let exact = g2 * collision_sum(&params, n, cap)?.partial_sums[n - 1];
    let v = variance_quenched_mean(law, master_seed, m_envs, &[n], cap)?[0];

    let base = EnvironmentView::new(law.clone(), master_seed)?;
    let counts: Vec<f64> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|j| {
            let env = base.reseeded(derive_seed(master_seed, tag::PAIR, j));
            let (a, b) = sample_pair(
                &env,
                n,
                derive_seed(master_seed, tag::WALK, 2 * j),
                derive_seed(master_seed, tag::WALK, 2 * j + 1),
            )?;
            let meetings = (0..n).filter(|&k| a.positions[k] == b.positions[k]).count();
            Ok(meetings as f64)
        })
        .collect::<Result<_>>()?;
    let mc = mean_se(&counts);
    let (mc_mean, mc_se) = (g2 * mc.mean, g2 * mc.se);

    let z_exact_dp = z_score(exact, 0.0, v.v, v.se);
    let z_exact_mc = z_score(exact, 0.0, mc_mean, mc_se);
    let z_dp_mc = z_score(v.v, v.se, mc_mean, mc_se);
    let pass = [z_exact_dp, z_exact_mc, z_dp_mc]
        .iter()
        .all(|z| z.abs() < Z_MAX);
    let mut report = TestReport::new("collision_identity", master_seed)
        .input("n", n)
        .input("M", m_envs)
        .input("N_pairs", n_pairs)
        .stat("g_norm_sq", g2)
        .stat("exact", exact)
        .stat("dp_variance", v.v)
        .stat("dp_variance_se", v.se)
        .stat("mc", mc_mean)
        .stat("mc_se", mc_se)
        .stat("z_exact_dp", z_exact_dp)
        .stat("z_exact_mc", z_exact_mc)
        .stat("z_dp_mc", z_dp_mc)
        .threshold("abs_z_max", Z_MAX)
        .verdict(pass);
    if g2 == 0.0 {
        report = report.flag("degenerate law: all three quantities vanish");
    }
    Ok(report)
}
