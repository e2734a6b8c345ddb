//! Quenched CLT in one fixed environment, with both centerings.
//!
//! In one dimension the deterministic centering misses the random shift
//! E^ω X_n − n v̄, which is of order n^(1/4), and even the quenched-centered
//! law is still visibly non-normal at n = 1024 in a typical environment.

use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::verify::{clt_quenched, CltConfig, CltThresholds};
use rwre_lab::walk::CenteringKind;

fn main() -> rwre_lab::Result<()> {
    let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 42)?;
    for centering in [CenteringKind::Deterministic, CenteringKind::Quenched] {
        let rep = clt_quenched(
            &env,
            &CltConfig {
                n: 1024,
                samples: 4000,
                directions: None,
                t_grid: vec![0.25, 0.5, 0.75, 1.0],
                centering,
                batch_seed: 42,
                thresholds: CltThresholds::default(),
                cap: rwre_lab::dp::DEFAULT_SUPPORT_CAP,
            },
        )?;
        println!("{centering:?} centering:");
        println!(
            "  covariance {:?} vs {:?} (rel error {:.4})",
            rep.covariance, rep.reference, rep.cov_rel_error
        );
        for k in &rep.ks_results {
            println!(
                "  KS along {:?}: D = {:.4}, p = {:.3e}",
                k.direction, k.statistic, k.p_corrected
            );
        }
        for c in &rep.increment_corr {
            println!(
                "  corr of increments around t = {}: {:.4}",
                c.t_mid, c.max_abs_corr
            );
        }
        println!("  pass: {}", rep.pass);
    }
    Ok(())
}
