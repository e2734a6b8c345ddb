//! Build site laws, validate them, and read transition vectors out of a
//! seeded environment.

use rwre_lab::dp::annealed_params;
use rwre_lab::env::{
    law_moments, validate_spec, EnvironmentView, MixtureComponent, SiteLaw, StepSupport,
};
use rwre_lab::Site;

fn main() -> rwre_lab::Result<()> {
    let nn = StepSupport::nearest_neighbour(2);
    let dirichlet = SiteLaw::dirichlet(nn.clone(), vec![1.0, 2.0, 1.0, 2.0]);
    let mixture = SiteLaw::mixture(
        nn.clone(),
        vec![
            MixtureComponent {
                weight: 0.5,
                vector: vec![0.4, 0.1, 0.25, 0.25],
            },
            MixtureComponent {
                weight: 0.5,
                vector: vec![0.1, 0.4, 0.25, 0.25],
            },
        ],
    );

    for law in [dirichlet, mixture] {
        let law = validate_spec(law)?;
        let ap = annealed_params(&law);
        println!("law {:?}", law.kind);
        println!("  p(z)      = {:?}", law_moments(&law).p);
        println!("  v̄         = {:?}", &ap.v_bar[..2]);
        println!("  D         = {:?}", ap.d_matrix);
        println!("  E|g|²     = {:.6}", ap.g_norm_sq);

        let env = EnvironmentView::new(law, 42)?;
        for (level, x) in [
            (0, Site::at(&[0, 0])),
            (3, Site::at(&[1, -2])),
            (-5, Site::at(&[7, 7])),
        ] {
            println!(
                "  π at ({level}, {x:?}) = {:?}",
                env.transition_vector(level, &x)
            );
        }
        // A shifted view reads the same numbers relative to a new origin.
        let shifted = env.shift(3, Site::at(&[1, -2]));
        println!(
            "  shifted π at origin = {:?}",
            shifted.transition_vector(0, &Site::ORIGIN)
        );
    }

    let bad = SiteLaw::deterministic(nn, vec![0.5, 0.5, 0.25, 0.25]);
    println!(
        "weights summing to 1.5: {}",
        validate_spec(bad).unwrap_err()
    );
    Ok(())
}
