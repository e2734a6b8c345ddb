//! Human-readable plan of a run: operations, cost estimates, thresholds.

use std::fmt::Write;

use super::config::{Experiment, ExperimentConfig, Resolved};
use crate::corrector::ResolventParams;
use crate::dp::annealed_params;
use crate::env::SiteLaw;

/// Largest coordinate of any step.
fn reach(law: &SiteLaw) -> i64 {
    let nu = law.nu();
    law.support
        .steps()
        .iter()
        .flat_map(|z| z.coords(nu).iter().map(|c| c.abs()).collect::<Vec<_>>())
        .max()
        .unwrap_or(0)
}

/// Cells of a cube of half-width `w` in dimension `nu`, saturating.
fn cube(nu: usize, w: f64) -> f64 {
    (2.0 * w + 1.0).powi(nu as i32)
}

struct Plan {
    ops: Vec<&'static str>,
    /// `(what, peak cells)` for the dynamic programs.
    cells: Vec<(String, f64)>,
    work: Vec<String>,
}

fn plan(suite: Experiment, law: &SiteLaw, r: &Resolved, tol: f64) -> Plan {
    let nu = law.nu();
    let rc = reach(law) as f64;
    let series_box = |eps: f64| {
        let k = ResolventParams::min_depth(law, eps, tol) as f64;
        (k, cube(nu, rc * k))
    };
    let sigma = annealed_params(law)
        .d_matrix
        .iter()
        .enumerate()
        .map(|(c, row)| row[c])
        .fold(0.0, f64::max)
        .sqrt();
    // Band of the backward field in the Brownian escape model.
    let band = |eps: f64| {
        if sigma == 0.0 {
            2.0 * rc
        } else {
            (2.0f64 / tol).ln() / ((2.0 * eps).sqrt() / sigma) + 2.0 * rc
        }
    };
    let max = |l: &[usize]| l.iter().copied().max().unwrap_or(0) as f64;
    match suite {
        Experiment::Simulate => Plan {
            ops: vec!["validate_spec", "EnvironmentView::new", "sample_batch"],
            cells: vec![],
            work: vec![format!("{} paths of {} steps", r.replicas, r.n)],
        },
        Experiment::Clt => Plan {
            ops: vec![
                "validate_spec",
                "annealed_params",
                "quenched_mean_series (quenched centering)",
                "sample_batch",
                "scale_path",
                "ks_normal_test per direction",
                "increment correlations",
            ],
            cells: vec![(
                "quenched_mean_series level box".into(),
                cube(nu, rc * r.n as f64),
            )],
            work: vec![format!(
                "{} paths of {} steps per centering",
                r.replicas, r.n
            )],
        },
        Experiment::Collisions => Plan {
            ops: vec![
                "validate_spec",
                "annealed_params",
                "collision_sum",
                "variance_quenched_mean",
                "sample_pair (annealed)",
                "z-tests",
            ],
            cells: vec![
                (
                    "collision_sum level box".into(),
                    cube(nu, 2.0 * rc * r.n as f64),
                ),
                (
                    "variance_quenched_mean level box".into(),
                    cube(nu, rc * r.n as f64),
                ),
            ],
            work: vec![
                format!("{} environments", r.environments),
                format!("{} walker pairs", r.n_pairs),
            ],
        },
        Experiment::Scaling => Plan {
            ops: vec![
                "validate_spec",
                "annealed_params",
                "variance_quenched_mean",
                "collision_sum",
                "quenched_mean_series",
                "fit_exponent ×3",
            ],
            cells: vec![
                (
                    "variance_quenched_mean level box".into(),
                    cube(nu, rc * max(&r.ladder)),
                ),
                (
                    "collision_sum level box".into(),
                    cube(nu, 2.0 * rc * max(&r.ladder)),
                ),
                (
                    "quenched_mean_series level box".into(),
                    cube(nu, rc * max(&r.decay_ladder)),
                ),
            ],
            work: vec![format!("{} environments", r.environments)],
        },
        Experiment::Corrector => {
            let (k, b) = series_box(r.epsilon);
            let mut cells = vec![(format!("resolvent series box (K = {k})"), b)];
            cells.push((
                "backward field cross-section".into(),
                cube(nu, rc * r.n as f64 + band(r.epsilon)),
            ));
            if let Some(&n) = r.rn_ladder.iter().max() {
                let eps = 1.0 / n as f64;
                cells.push((
                    format!("backward field cross-section at n = {n}"),
                    cube(nu, rc * n as f64 + band(eps)),
                ));
            }
            let smallest = r
                .eps_ladder
                .iter()
                .chain(&r.h_eps_ladder)
                .copied()
                .fold(1.0, f64::min);
            let (k, b) = series_box(smallest);
            cells.push((
                format!("resolvent series box at ε = {smallest} (K = {k})"),
                b,
            ));
            Plan {
                ops: vec![
                    "validate_spec",
                    "ResolventParams",
                    "resolvent_h / h_eps_increment at test sites",
                    "sample_path",
                    "decompose",
                    "cocycle_residual",
                    "chi_along on bridges",
                    "remainder_scaling",
                    "limit_diffusion_matrix per ε",
                    "h_norm_growth",
                    "fit_exponent ×2",
                ],
                cells,
                work: vec![
                    format!(
                        "{} test sites, {} paths, {} bridges",
                        r.sites, r.paths, r.bridges
                    ),
                    format!("{} remainder samples per ladder point", r.samples),
                    format!("{} environments per ε", r.environments),
                ],
            }
        }
        Experiment::MgCheck => {
            let (k, b) = series_box(r.epsilon);
            Plan {
                ops: vec![
                    "validate_spec",
                    "ResolventParams",
                    "limit_diffusion_matrix",
                    "sample_path",
                    "mg_hypotheses",
                ],
                cells: vec![
                    (format!("resolvent series box (K = {k})"), b),
                    (
                        "backward field cross-section".into(),
                        cube(nu, rc * r.n as f64 + band(r.epsilon)),
                    ),
                ],
                work: vec![
                    format!("{} environments for Γ̂", r.environments),
                    format!("{} paths of {} steps", r.samples, r.n),
                ],
            }
        }
        Experiment::Ergodic => Plan {
            ops: vec!["validate_spec", "sample_path", "ergodic_average", "z-tests"],
            cells: vec![],
            work: vec![format!("one path of {} steps", r.n)],
        },
        Experiment::Density => Plan {
            ops: vec!["validate_spec", "density_f per ladder point", "z-tests"],
            cells: vec![(
                "density_f level box".into(),
                cube(nu, rc * max(&r.density_ladder)),
            )],
            work: vec![format!("{} environments per ladder point", r.environments)],
        },
        Experiment::All => unreachable!("expanded by the caller"),
    }
}

/// Renders the plan for `cfg`; performs no computation beyond the cost
/// model.
pub fn describe(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let law = &cfg.law;
    let experiment = cfg.experiment.unwrap_or(Experiment::All);
    let _ = writeln!(s, "experiment: {experiment}");
    let _ = writeln!(
        s,
        "law: ν = {}, {} steps, master_seed = {}, support_cap = {}",
        law.nu(),
        law.support.len(),
        cfg.master_seed,
        cfg.support_cap
    );
    if let Err(e) = cfg.validate() {
        let _ = writeln!(s, "warning: configuration does not validate: {e}");
    }
    for suite in experiment.suites() {
        let r = cfg.resolve(suite);
        let p = plan(suite, law, &r, cfg.tol);
        let _ = writeln!(s, "\n[{suite}]");
        let _ = writeln!(s, "  operations: {}", p.ops.join(" -> "));
        for w in &p.work {
            let _ = writeln!(s, "  work: {w}");
        }
        for (what, cells) in &p.cells {
            let _ = writeln!(s, "  cost: {what} ≈ {cells:.3e} cells");
            if *cells > cfg.support_cap as f64 {
                let _ = writeln!(
                    s,
                    "  warning: {what} exceeds support_cap = {}; a resource error (exit 3) is likely",
                    cfg.support_cap
                );
            }
        }
        let _ = writeln!(
            s,
            "  resolved: {}",
            serde_json::to_string(&r).expect("serializes")
        );
    }
    let nu = law.nu();
    let th = &cfg.thresholds;
    let _ = writeln!(s, "\nthresholds:");
    let _ = writeln!(s, "  {}", serde_json::to_string(th).expect("serializes"));
    let _ = writeln!(
        s,
        "  windows for ν = {nu}: variance {:?}, collisions {:?}, decay {:?}",
        th.variance_window(nu),
        th.collision_window(nu),
        th.decay_window(nu)
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cfg(v: serde_json::Value) -> ExperimentConfig {
        ExperimentConfig::from_value(v).unwrap()
    }

    #[test]
    fn clt_plan_lists_operations() {
        let c = cfg(
            json!({"experiment": "clt", "law": {"kind": "deterministic", "nu": 2,
            "steps": [[1,0],[-1,0],[0,1],[0,-1]], "vector": [0.25,0.25,0.25,0.25]}}),
        );
        let text = describe(&c);
        for op in ["sample_batch", "annealed_params", "ks_normal_test"] {
            assert!(text.contains(op), "{text}");
        }
    }

    #[test]
    fn all_lists_suites_in_order() {
        let c = cfg(
            json!({"experiment": "all", "law": {"kind": "dirichlet", "nu": 1,
            "steps": [[1],[-1]], "alphas": [1.0, 1.0]}}),
        );
        let text = describe(&c);
        let pos: Vec<usize> = Experiment::SUITES
            .iter()
            .map(|e| text.find(&format!("[{e}]")).expect("suite listed"))
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn large_collision_box_warns() {
        let c = cfg(
            json!({"experiment": "collisions", "n": 4096, "law": {"kind": "dirichlet", "nu": 3,
            "steps": [[1,0,0],[-1,0,0],[0,1,0],[0,-1,0],[0,0,1],[0,0,-1]], "alphas": [1,1,1,1,1,1]}}),
        );
        let text = describe(&c);
        assert!(text.contains("warning: collision_sum"), "{text}");
    }
}
