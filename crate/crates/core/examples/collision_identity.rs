//! The variance of the quenched mean equals E|g|² times the expected number
//! of collisions of two walkers sharing the environment.

use rwre_lab::dp::{annealed_params, collision_sum, DEFAULT_SUPPORT_CAP as CAP};
use rwre_lab::env::SiteLaw;
use rwre_lab::verify::collision_identity_test;

fn main() -> rwre_lab::Result<()> {
    let law = SiteLaw::uniform_dirichlet(1);
    let ap = annealed_params(&law);
    println!("q at the origin: {:?}", ap.q_origin);
    println!("q elsewhere:     {:?}", ap.q_homog);

    let series = collision_sum(&ap, 64, CAP)?;
    for k in [1, 4, 16, 63] {
        println!("Σ_(j≤{k}) P(Y_j = 0) = {:.5}", series.partial_sums[k]);
    }

    let rep = collision_identity_test(&law, 64, 500, 20_000, 42, CAP)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&rep).expect("serializes")
    );
    Ok(())
}
