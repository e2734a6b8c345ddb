//! The martingale formula for the diffusion matrix approaches the annealed
//! one as ε decreases.

use rwre_lab::corrector::{limit_diffusion_matrix, ResolventParams};
use rwre_lab::dp::{annealed_params, DEFAULT_SUPPORT_CAP as CAP};
use rwre_lab::env::SiteLaw;
use rwre_lab::stats::frobenius_diff;

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(1);
    let d = annealed_params(&law).d_matrix;
    println!("annealed D = {d:?}");
    for eps in [0.25, 1.0 / 16.0, 1.0 / 64.0] {
        let params = ResolventParams::new(&law, eps, 1e-6)?;
        let est = limit_diffusion_matrix(&law, &params, 42, 1000, 0, CAP)?;
        println!(
            "ε = {eps:<8} Γ_ε = {:?} ± {:?}   |Γ_ε - D| = {:.4}",
            est.matrix,
            est.se,
            frobenius_diff(&est.matrix, &d)
        );
    }
    Ok(())
}
