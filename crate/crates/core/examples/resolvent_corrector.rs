//! Resolvent corrector h_ε, the martingale decomposition of one path and the
//! path independence of the corrector χ.

use rwre_lab::corrector::{chi, chi_along, decompose, resolvent_h, ResolventParams};
use rwre_lab::dp::DEFAULT_SUPPORT_CAP as CAP;
use rwre_lab::env::{EnvironmentView, SiteLaw};
use rwre_lab::walk::sample_path;
use rwre_lab::Site;

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(1);
    let env = EnvironmentView::new(law.clone(), 42)?;
    let params = ResolventParams::new(&law, 1.0 / 16.0, 1e-8)?;
    println!("ε = {}, series depth K = {}", params.epsilon, params.depth);
    println!("h_ε at the origin: {:?}", resolvent_h(&env, &params, CAP)?);

    let path = sample_path(&env, 256, 1)?;
    let rec = decompose(&path, &env, &params, CAP)?;
    println!("X_n - n v̄ = X̄ + M + εS + R with");
    println!(
        "  X̄ = {:?}, M = {:?}, εS = {:?}, R = {:?}",
        rec.xbar,
        rec.m_eps,
        rec.s_eps
            .iter()
            .map(|s| s * rec.epsilon)
            .collect::<Vec<_>>(),
        rec.r_eps
    );
    println!(
        "  identity residual {:.2e}, field error bound {:.2e}",
        rec.identity_residual, rec.h_error_bound
    );

    // Two admissible paths to (4, 0) give the same corrector.
    let up_down = [0, 1, 2, 1, 0].map(|x| Site::at(&[x]));
    let zigzag = [0, -1, 0, 1, 0].map(|x| Site::at(&[x]));
    println!(
        "χ along +,+,-,-: {:?}",
        chi_along(&env, &up_down, &params, CAP)?
    );
    println!(
        "χ along -,+,+,-: {:?}",
        chi_along(&env, &zigzag, &params, CAP)?
    );
    println!(
        "χ directly:      {:?}",
        chi(&env, 4, &Site::at(&[0]), &params, CAP)?
    );
    Ok(())
}
