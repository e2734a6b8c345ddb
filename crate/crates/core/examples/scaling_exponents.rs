//! The α = 1/4 exponent in one dimension: variance of the quenched mean,
//! collision partial sums and the decay of the quenched centering.

use rwre_lab::dp::DEFAULT_SUPPORT_CAP as CAP;
use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::verify::{centering_decay, variance_scaling};

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(1);
    let ladder: Vec<usize> = (6..=10).map(|j| 1 << j).collect();
    let vs = variance_scaling(&law, &ladder, 300, 42, CAP)?;
    for (p, (_, s)) in vs.points.iter().zip(&vs.collision_sums) {
        println!(
            "n = {:5}: V(n) = {:8.4} ± {:.4}   E|g|²·Σ P(Y=0) = {:8.4}",
            p.n,
            p.v,
            p.se,
            vs.g_norm_sq * s
        );
    }
    println!("slope of log √V(n): {:.4} (expect 1/4)", vs.fit.slope);
    println!(
        "slope of collision sums: {:.4} (expect 1/2)",
        vs.collision_fit.slope
    );

    let env = EnvironmentView::new(law, 42)?;
    let d = centering_decay(&env, &(8..=12).map(|j| 1 << j).collect::<Vec<_>>(), CAP)?;
    println!(
        "centering decay slope in this environment: {:.4} (expect -1/4)",
        d.fit.slope
    );
    Ok(())
}
