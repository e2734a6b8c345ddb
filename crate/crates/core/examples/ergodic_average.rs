//! Averages of a local observable along the path match its annealed
//! expectation, as for i.i.d. sites.

use rwre_lab::env::{law_moments, EnvironmentView, SiteLaw};
use rwre_lab::verify::ergodic_average;
use rwre_lab::walk::sample_path;

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(2);
    let env = EnvironmentView::new(law.clone(), 42)?;
    let path = sample_path(&env, 50_000, 9)?;
    for obs in ["pi:0", "pi:3", "drift:1", "drift_norm_sq"] {
        let s = ergodic_average(&env, &path, obs, 50_000)?;
        println!(
            "{obs:>14}: path {:.5} ± {:.5}, fresh sites {:.5} ± {:.5}",
            s.path_average.mean, s.path_average.se, s.baseline.mean, s.baseline.se
        );
    }
    println!("E π_z = {:?}", law_moments(&law).p);
    Ok(())
}
