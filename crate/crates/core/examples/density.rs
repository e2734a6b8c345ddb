//! The density f_n of the environment seen from the walker against the
//! initial law has mean one.

use rwre_lab::dp::{density_f, environment_seed, DEFAULT_SUPPORT_CAP as CAP};
use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::stats::mean_se;

fn main() -> rwre_lab::Result<()> {
    let base = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 42)?;
    for n in [0, 1, 2, 4, 8, 16] {
        let xs = (0..2000)
            .map(|i| density_f(&base.reseeded(environment_seed(42, i)), n, CAP))
            .collect::<rwre_lab::Result<Vec<_>>>()?;
        let m = mean_se(&xs);
        println!("n = {n:2}: mean f_n = {:.4} ± {:.4}", m.mean, m.se);
    }
    Ok(())
}
