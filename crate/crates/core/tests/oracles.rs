//! Exact quantities checked against independent computations: brute-force
//! path enumeration, closed forms and textbook values.

use std::collections::BTreeMap;

use rwre_lab::corrector::{resolvent_h, ResolventField, ResolventParams};
use rwre_lab::dp::{
    annealed_params, collision_sum, density_f, occupation, quenched_mean_series,
    DEFAULT_SUPPORT_CAP as CAP,
};
use rwre_lab::env::{EnvironmentView, SiteLaw, StepSupport};
use rwre_lab::verify::ks::kolmogorov_q;
use rwre_lab::Site;

/// Law of `X_n` in a fixed environment by summing over every step sequence.
fn enumerate(env: &EnvironmentView, n: usize) -> BTreeMap<Site, f64> {
    let steps = env.support().steps().to_vec();
    let mut out = BTreeMap::new();
    let total = steps.len().pow(n as u32);
    for code in 0..total {
        let (mut c, mut x, mut p) = (code, Site::ORIGIN, 1.0);
        for k in 0..n {
            let j = c % steps.len();
            c /= steps.len();
            p *= env.transition_vector(k as i64, &x)[j];
            x = x + steps[j];
        }
        *out.entry(x).or_insert(0.0) += p;
    }
    out
}

#[test]
fn occupation_matches_path_enumeration() {
    for (law, n) in [
        (SiteLaw::uniform_dirichlet(1), 12),
        (SiteLaw::uniform_dirichlet(2), 6),
    ] {
        let env = EnvironmentView::new(law, 11).unwrap();
        let occ = occupation(&env, n, CAP).unwrap();
        let brute = enumerate(&env, n);
        for (x, p) in &brute {
            assert!(
                (occ.prob(n, x) - p).abs() < 1e-14,
                "{x:?}: {} vs {p}",
                occ.prob(n, x)
            );
        }
        assert!((occ.mass(n) - 1.0).abs() < 1e-12);
        let means = quenched_mean_series(&env, n, CAP).unwrap().means;
        for c in 0..env.nu() {
            let m: f64 = brute.iter().map(|(x, p)| x.0[c] as f64 * p).sum();
            assert!((means[n][c] - m).abs() < 1e-12);
        }
    }
}

#[test]
fn simple_walk_return_probabilities_are_central_binomials() {
    // Two independent simple walks: P(Y_k = 0) = C(2k, k) / 4^k.
    let ap = annealed_params(&SiteLaw::simple_symmetric(1));
    let s = collision_sum(&ap, 40, CAP).unwrap();
    let mut c = 1.0f64;
    for k in 0..40 {
        assert!((s.return_probs[k] - c).abs() < 1e-13, "k = {k}");
        c *= (2 * k + 1) as f64 * (2 * k + 2) as f64 / ((k + 1) as f64 * (k + 1) as f64 * 4.0);
    }
}

#[test]
fn beta_law_closed_forms() {
    // π_+ ~ Beta(a, b): v̄ = (a - b)/(a + b), E|g|² = 4ab / ((a+b)²(a+b+1)),
    // D = 1 - v̄², q(0) at the origin = E π_+² + E π_-².
    let (a, b) = (2.0, 0.5);
    let law = SiteLaw::dirichlet(StepSupport::nearest_neighbour(1), vec![b, a]);
    let ap = annealed_params(&law);
    let s = a + b;
    let v = (a - b) / s;
    assert!((ap.v_bar[0] - v).abs() < 1e-14);
    assert!((ap.g_norm_sq - 4.0 * a * b / (s * s * (s + 1.0))).abs() < 1e-14);
    assert!((ap.d_matrix[0][0] - (1.0 - v * v)).abs() < 1e-14);
    let e2 = |x: f64| x * (x + 1.0) / (s * (s + 1.0));
    assert!((ap.q_origin[&Site::ORIGIN] - (e2(a) + e2(b))).abs() < 1e-14);
    assert!(ap.q_origin[&Site::ORIGIN] >= ap.q_homog[&Site::ORIGIN]);
}

#[test]
fn density_after_one_step_is_incoming_mass() {
    let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(2), 8).unwrap();
    let steps = env.support().steps().to_vec();
    let incoming: f64 = steps
        .iter()
        .enumerate()
        .map(|(j, z)| env.transition_vector(-1, &(Site::ORIGIN - *z))[j])
        .sum();
    assert!((density_f(&env, 1, CAP).unwrap() - incoming).abs() < 1e-14);
    assert_eq!(density_f(&env, 0, CAP).unwrap(), 1.0);
}

#[test]
fn resolvent_matches_brute_force_series() {
    // h_ε = Σ_{k≥1} (1+ε)^{-k} E^ω[g(T_{X_{k-1}} ω)], with the quenched
    // expectation taken by enumeration.
    let law = SiteLaw::uniform_dirichlet(1);
    let env = EnvironmentView::new(law.clone(), 4).unwrap();
    let eps = 2.0;
    let depth = 14;
    let params = ResolventParams::with_depth(&law, eps, 1e-6, depth).unwrap();
    let mut h = 0.0;
    for k in 1..=depth {
        let dist = enumerate(&env, k - 1);
        let eg: f64 = dist
            .iter()
            .map(|(x, p)| p * env.centered_drift_of(&env.transition_vector((k - 1) as i64, x))[0])
            .sum();
        h += (1.0 + eps).powi(-(k as i32)) * eg;
    }
    let series = resolvent_h(&env, &params, CAP).unwrap()[0];
    assert!((series - h).abs() < 1e-13, "{series} vs {h}");
    let field = ResolventField::along(&env, &[Site::ORIGIN], &params, CAP).unwrap();
    assert!((field.h(0, &Site::ORIGIN).unwrap()[0] - h).abs() <= field.error_bound() + 1e-12);
}

#[test]
fn kolmogorov_tail_matches_tables() {
    for (lambda, q) in [
        (0.5, 0.963_945),
        (1.0, 0.269_999),
        (1.358_1, 0.050_0),
        (1.627_6, 0.010_0),
    ] {
        assert!(
            (kolmogorov_q(lambda) - q).abs() < 2e-5,
            "λ = {lambda}: {}",
            kolmogorov_q(lambda)
        );
    }
}
