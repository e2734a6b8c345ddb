//! Conditional quadratic variation and Lindeberg sums of the martingale
//! array along one path.

use rwre_lab::corrector::{limit_diffusion_matrix, ResolventParams};
use rwre_lab::dp::DEFAULT_SUPPORT_CAP as CAP;
use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::verify::mg_hypotheses;
use rwre_lab::walk::sample_path;

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(1);
    let params = ResolventParams::new(&law, 1.0 / 64.0, 1e-6)?;
    let gamma = limit_diffusion_matrix(&law, &params, 42, 500, 0, CAP)?.matrix;
    let env = EnvironmentView::new(law, 42)?;
    let path = sample_path(&env, 2048, 3)?;
    let grid: Vec<f64> = (1..=10).map(|j| j as f64 / 10.0).collect();
    let rep = mg_hypotheses(&env, &path, &params, &gamma, &grid, &[0.05, 0.1, 0.2], CAP)?;
    println!("Γ̂ = {gamma:?}");
    for q in &rep.qv_curve {
        println!(
            "t = {:.1}: <M>_t = {:?}, relative deviation from tΓ̂ {:.4}",
            q.t, q.matrix, q.rel_deviation
        );
    }
    for (delta, sum) in &rep.lindeberg {
        println!("Lindeberg sum at δ = {delta}: {sum:.3e}");
    }
    println!("largest realized increment {:.4}", rep.max_increment);
    Ok(())
}
