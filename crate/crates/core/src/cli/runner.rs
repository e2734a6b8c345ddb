//! Runs experiment suites and writes their outputs.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{Experiment, ExperimentConfig, Resolved};
use crate::corrector::{
    chi, chi_along, cocycle_residual, decompose, h_eps_increment, h_norm_growth,
    limit_diffusion_matrix, remainder_scaling, resolvent_h, ResolventParams,
};
use crate::dp::{annealed_params, collision_sum, density_f, environment_seed};
use crate::env::{law_moments, EnvironmentView, SiteLaw};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::report::{cell, Csv, TestReport};
use crate::rng::{derive_seed, tag, StreamKey};
use crate::stats::{covariance, frobenius_diff, mean_se, z_score};
use crate::verify::{
    centering_decay, clt_quenched, collision_identity_test, ergodic_average, fit_exponent,
    mg_hypotheses, variance_scaling, CltConfig, CltThresholds, ExponentFit, FitPoint,
};
use crate::walk::{replica_seed, sample_batch, sample_path};

/// Reports and tables of one suite or part of one.
#[derive(Default)]
pub struct SuiteOutput {
    pub reports: Vec<TestReport>,
    pub tables: Vec<(String, Csv)>,
}

/// Everything a run produces, before it touches the file system.
pub struct RunOutput {
    pub experiment: Experiment,
    pub pass: bool,
    pub reports: Vec<TestReport>,
    /// `(file name, contents)`, `summary.json` first; the manifest is added
    /// when writing.
    pub files: Vec<(String, Vec<u8>)>,
}

fn in_window(x: f64, w: [f64; 2]) -> bool {
    x >= w[0] && x <= w[1]
}

fn row_of<T: std::fmt::Display>(xs: &[T]) -> Vec<String> {
    xs.iter().map(cell).collect()
}

fn fit_csv(fit: &ExponentFit) -> Csv {
    let mut c = Csv::new(&["n", "value", "se", "used"]);
    for p in &fit.points {
        let used = p.value > 0.0 && fit.dropped.is_none_or(|d| d.n != p.n) && !fit.degenerate;
        c.row(vec![cell(p.n), cell(p.value), cell(p.se), cell(used)]);
    }
    c
}

fn fit_report(name: &str, seed: u64, fit: &ExponentFit, window: [f64; 2]) -> TestReport {
    let mut r = TestReport::new(name, seed)
        .stat("slope", fit.slope)
        .stat("slope_se", fit.slope_se)
        .stat("intercept", fit.intercept)
        .stat("r_squared", fit.r_squared)
        .stat("points_used", fit.used)
        .threshold("slope_window", window);
    if let Some(d) = fit.dropped {
        r = r.flag(format!("dropped smallest point n = {} (r² below 0.9)", d.n));
    }
    if fit.degenerate {
        r.flag("degenerate: all values vanish, fit skipped")
            .verdict(true)
    } else {
        r.verdict(in_window(fit.slope, window))
    }
}

pub fn simulate(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let env = EnvironmentView::new(law.clone(), cfg.master_seed)?;
    let nu = env.nu();
    let paths = sample_batch(&env, r.n, r.replicas, cfg.master_seed)?;
    let mut header = vec!["replica".to_string(), "k".to_string()];
    header.extend((1..=nu).map(|c| format!("x_{c}")));
    let mut csv = Csv::new(&header);
    for (i, p) in paths.iter().enumerate() {
        for (k, x) in p.positions.iter().enumerate() {
            let mut row = vec![cell(i), cell(k)];
            row.extend(row_of(x.coords(nu)));
            csv.row(row);
        }
    }
    let ends: Vec<Vec<f64>> = paths.iter().map(|p| p.end().as_f64(nu)).collect();
    let mean: Vec<f64> = (0..nu)
        .map(|c| ends.iter().map(|e| e[c]).sum::<f64>() / ends.len() as f64)
        .collect();
    let ap = annealed_params(law);
    let report = TestReport::new("simulate", cfg.master_seed)
        .input("n", r.n)
        .input("N", r.replicas)
        .stat("endpoint_mean", mean)
        .stat("endpoint_covariance", covariance(&ends))
        .stat("v_bar", &ap.v_bar[..nu])
        .stat("d_matrix", &ap.d_matrix);
    Ok(SuiteOutput {
        reports: vec![report],
        tables: vec![("paths".into(), csv)],
    })
}

pub fn clt(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let env = EnvironmentView::new(law.clone(), cfg.master_seed)?;
    let nu = env.nu();
    let th = &cfg.thresholds;
    let thresholds = CltThresholds {
        cov_rel_error: th.cov_rel_error,
        ks_p: th.ks_p,
        increment_corr: th.increment_corr,
    };
    let mut out = SuiteOutput::default();
    let mut ks = Csv::new(&[
        "centering",
        "direction",
        "statistic",
        "p_value",
        "p_corrected",
    ]);
    let mut cov = Csv::new(&["centering", "a", "b", "sample", "reference"]);
    let mut inc = Csv::new(&["centering", "t_mid", "t_next", "max_abs_corr"]);
    for kind in r.centering.kinds() {
        let rep = clt_quenched(
            &env,
            &CltConfig {
                n: r.n,
                samples: r.replicas,
                directions: cfg.directions.clone(),
                t_grid: r.t_grid.clone(),
                centering: kind,
                batch_seed: cfg.master_seed,
                thresholds,
                cap: cfg.support_cap,
            },
        )?;
        let label = serde_json::to_value(kind).expect("serializes");
        let label = label.as_str().expect("string").to_string();
        for k in &rep.ks_results {
            let dir = k
                .direction
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            ks.row(vec![
                label.clone(),
                dir,
                cell(k.statistic),
                cell(k.p_value),
                cell(k.p_corrected),
            ]);
        }
        for a in 0..nu {
            for b in 0..nu {
                cov.row(vec![
                    label.clone(),
                    cell(a),
                    cell(b),
                    cell(rep.covariance[a][b]),
                    cell(rep.reference[a][b]),
                ]);
            }
        }
        for c in &rep.increment_corr {
            inc.row(vec![
                label.clone(),
                cell(c.t_mid),
                cell(c.t_next),
                cell(c.max_abs_corr),
            ]);
        }
        let mut t = TestReport::new(format!("clt_{label}"), cfg.master_seed)
            .input("n", r.n)
            .input("N", r.replicas)
            .input("t_grid", &r.t_grid)
            .input("centering", &label)
            .stat("cov_rel_error", rep.cov_rel_error)
            .stat("covariance", &rep.covariance)
            .stat("reference", &rep.reference)
            .stat("mean", &rep.mean)
            .stat("ks", &rep.ks_results)
            .stat("increment_corr", &rep.increment_corr)
            .threshold("cov_rel_error", th.cov_rel_error)
            .threshold("ks_p_corrected_min", th.ks_p)
            .threshold("increment_corr_max", th.increment_corr)
            .threshold("bonferroni_directions", rep.ks_results.len())
            .verdict(rep.pass);
        if rep.degenerate_grid {
            t = t.flag("degenerate t_grid: every grid time maps to step 0");
        }
        out.reports.push(t);
    }
    out.tables = vec![
        ("ks".into(), ks),
        ("covariance".into(), cov),
        ("increments".into(), inc),
    ];
    Ok(out)
}

pub fn collisions(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let mut rep = collision_identity_test(
        law,
        r.n,
        r.environments,
        r.n_pairs,
        cfg.master_seed,
        cfg.support_cap,
    )?;
    let z = cfg.thresholds.z_max;
    let ok = ["z_exact_dp", "z_exact_mc", "z_dp_mc"]
        .iter()
        .all(|k| rep.statistics[*k].as_f64().is_some_and(|v| v.abs() < z));
    rep = rep.threshold("abs_z_max", z).verdict(ok);
    let series = collision_sum(&annealed_params(law), r.n, cfg.support_cap)?;
    let mut csv = Csv::new(&["k", "return_prob", "partial_sum"]);
    for (k, (p, s)) in series
        .return_probs
        .iter()
        .zip(&series.partial_sums)
        .enumerate()
    {
        csv.row(vec![cell(k), cell(p), cell(s)]);
    }
    Ok(SuiteOutput {
        reports: vec![rep],
        tables: vec![("series".into(), csv)],
    })
}

pub fn scaling(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let nu = law.nu();
    let th = &cfg.thresholds;
    let vs = variance_scaling(
        law,
        &r.ladder,
        r.environments,
        cfg.master_seed,
        cfg.support_cap,
    )?;
    let mut out = SuiteOutput::default();
    out.reports.push(
        fit_report(
            "variance_scaling",
            cfg.master_seed,
            &vs.fit,
            th.variance_window(nu),
        )
        .input("ladder", &r.ladder)
        .input("M", r.environments)
        .stat("points", &vs.points),
    );
    out.reports.push(
        fit_report(
            "collision_sum_scaling",
            cfg.master_seed,
            &vs.collision_fit,
            th.collision_window(nu),
        )
        .input("ladder", &r.ladder)
        .stat("partial_sums", &vs.collision_sums)
        .stat("g_norm_sq", vs.g_norm_sq),
    );
    let mut var = Csv::new(&["n", "v", "se", "collision_sum", "g_norm_sq_times_sum"]);
    for (p, (_, s)) in vs.points.iter().zip(&vs.collision_sums) {
        var.row(vec![
            cell(p.n),
            cell(p.v),
            cell(p.se),
            cell(s),
            cell(vs.g_norm_sq * s),
        ]);
    }
    out.tables.push(("variance".into(), var));
    out.tables.push(("variance_fit".into(), fit_csv(&vs.fit)));
    if !r.decay_ladder.is_empty() {
        let env = EnvironmentView::new(law.clone(), cfg.master_seed)?;
        let d = centering_decay(&env, &r.decay_ladder, cfg.support_cap)?;
        out.reports.push(
            fit_report(
                "centering_decay",
                cfg.master_seed,
                &d.fit,
                th.decay_window(nu),
            )
            .input("decay_ladder", &r.decay_ladder)
            .stat("values", &d.values),
        );
        out.tables.push(("decay".into(), fit_csv(&d.fit)));
    }
    Ok(out)
}

/// Deterministic test sites `(level, x)` with level in `0..64` and
/// coordinates in `-16..=16`.
fn test_sites(seed: u64, nu: usize, count: usize) -> Vec<(i64, Site)> {
    let key = StreamKey::new(derive_seed(seed, tag::SITE_PICK, 0));
    (0..count as u64)
        .map(|i| {
            let k = key.fold(i);
            let mut x = Site::ORIGIN;
            for c in 0..nu {
                x.0[c] = (k.draw(1 + c as u64) % 33) as i64 - 16;
            }
            ((k.draw(0) % 64) as i64, x)
        })
        .collect()
}

/// Two admissible paths with the same endpoint: a random step sequence and
/// a random permutation of it.
fn bridge(law: &SiteLaw, seed: u64, b: u64) -> (Vec<Site>, Vec<Site>) {
    let key = StreamKey::new(derive_seed(seed, tag::PAIR, b));
    let p = law_moments(law).p;
    let usable: Vec<Site> = law
        .support
        .steps()
        .iter()
        .zip(&p)
        .filter(|(_, q)| **q > 0.0)
        .map(|(z, _)| *z)
        .collect();
    let m = 2 + (key.draw(0) % 11) as usize;
    let seq: Vec<Site> = (0..m)
        .map(|j| usable[(key.draw(1 + j as u64) % usable.len() as u64) as usize])
        .collect();
    let mut perm = seq.clone();
    for j in (1..m).rev() {
        let i = (key.draw(100 + j as u64) % (j as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    let walk = |s: &[Site]| {
        let mut out = vec![Site::ORIGIN];
        for z in s {
            let last = *out.last().expect("start");
            out.push(last + *z);
        }
        out
    };
    (walk(&seq), walk(&perm))
}

/// Resolvent equation, martingale property, decomposition identity and
/// cocycle checks: the exactness half of the corrector suite.
pub fn corrector_exactness(
    cfg: &ExperimentConfig,
    law: &SiteLaw,
    r: &Resolved,
) -> Result<SuiteOutput> {
    let nu = law.nu();
    let th = &cfg.thresholds;
    let seed = cfg.master_seed;
    let cap = cfg.support_cap;
    let tol = cfg.tol;
    let params = ResolventParams::new(law, r.epsilon, tol)?;
    let base = EnvironmentView::new(law.clone(), seed)?;
    let mut out = SuiteOutput::default();

    // Resolvent equation and martingale property at test sites.
    let sites = test_sites(seed, nu, r.sites);
    let checks: Vec<(f64, f64)> = sites
        .par_iter()
        .map(|&(level, x)| {
            let view = base.shift(level, x);
            let h0 = resolvent_h(&view, &params, cap)?;
            let pi = view.transition_vector(0, &Site::ORIGIN);
            let g = view.centered_drift_of(&pi);
            let mut pih = vec![0.0; nu];
            let mut mart = vec![0.0; nu];
            for (z, p) in view.support().steps().iter().zip(&pi) {
                let h1 = resolvent_h(&view.shift(1, *z), &params, cap)?;
                let inc = h_eps_increment(&view, 0, &Site::ORIGIN, z, &params, cap)?;
                for c in 0..nu {
                    pih[c] += p * h1[c];
                    mart[c] += p * inc[c];
                }
            }
            let res = (0..nu)
                .map(|c| ((1.0 + params.epsilon) * h0[c] - pih[c] - g[c]).abs())
                .fold(0.0, f64::max);
            let m = mart.iter().map(|v| v.abs()).fold(0.0, f64::max);
            Ok((res, m))
        })
        .collect::<Result<_>>()?;
    let limit = th.resolvent_tol_mult * tol;
    let max_res = checks.iter().map(|c| c.0).fold(0.0, f64::max);
    let max_mart = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let mut sites_csv = Csv::new(&["level", "site", "resolvent_residual", "martingale_mean"]);
    for ((level, x), (a, b)) in sites.iter().zip(&checks) {
        let coords = x
            .coords(nu)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        sites_csv.row(vec![cell(level), coords, cell(a), cell(b)]);
    }
    out.reports.push(
        TestReport::new("resolvent_equation", seed)
            .input("epsilon", params.epsilon)
            .input("tol", tol)
            .input("K", params.depth)
            .input("sites", r.sites)
            .stat("max_residual", max_res)
            .threshold("max_residual", limit)
            .verdict(max_res <= limit),
    );
    out.reports.push(
        TestReport::new("martingale_increments", seed)
            .input("epsilon", params.epsilon)
            .input("sites", r.sites)
            .stat("max_conditional_mean", max_mart)
            .threshold("max_conditional_mean", limit)
            .verdict(max_mart <= limit),
    );
    out.tables.push(("sites".into(), sites_csv));

    // Decomposition identity and cocycle along sampled paths.
    let per_path: Vec<_> = (0..r.paths as u64)
        .into_par_iter()
        .map(|i| {
            let env = base.reseeded(environment_seed(seed, i));
            let path = sample_path(&env, r.n, replica_seed(seed, i))?;
            let rec = decompose(&path, &env, &params, cap)?;
            let co = cocycle_residual(&path, &env, &params, cap)?;
            Ok((rec, co))
        })
        .collect::<Result<_>>()?;
    let max_identity = per_path
        .iter()
        .map(|p| p.0.identity_residual)
        .fold(0.0, f64::max);
    let bound_ok = per_path.iter().all(|p| p.1.r_eps_bound_holds);
    let mut dec_csv = Csv::new(&["sample", "n", "epsilon", "K", "component", "coord", "value"]);
    for (i, (rec, _)) in per_path.iter().enumerate() {
        for (name, v) in [
            ("xbar", &rec.xbar),
            ("m_eps", &rec.m_eps),
            ("s_eps", &rec.s_eps),
            ("r_eps", &rec.r_eps),
            ("r_n", &rec.r_n),
        ] {
            for (c, x) in v.iter().enumerate() {
                dec_csv.row(vec![
                    cell(i),
                    cell(rec.n),
                    cell(rec.epsilon),
                    cell(rec.depth),
                    name.to_string(),
                    cell(c),
                    cell(x),
                ]);
            }
        }
        dec_csv.row(vec![
            cell(i),
            cell(rec.n),
            cell(rec.epsilon),
            cell(rec.depth),
            "identity_residual".into(),
            cell(0),
            cell(rec.identity_residual),
        ]);
    }
    let cocycle = mean_se(&per_path.iter().map(|p| p.1.residual).collect::<Vec<_>>());
    let flagged = per_path.iter().filter(|p| p.1.relative_flagged).count();
    let inexact = per_path.iter().filter(|p| !p.1.drift_point_exact).count();
    let mut t = TestReport::new("decomposition_identity", seed)
        .input("n", r.n)
        .input("paths", r.paths)
        .input("epsilon", params.epsilon)
        .stat("max_identity_residual", max_identity)
        .stat("r_eps_bound_holds", bound_ok)
        .stat("cocycle_residual_mean", cocycle.mean)
        .stat("cocycle_residual_se", cocycle.se)
        .stat(
            "cocycle_split_residual_max",
            per_path
                .iter()
                .map(|p| p.1.split_residual)
                .fold(0.0, f64::max),
        )
        .threshold("max_identity_residual", th.identity_residual)
        .verdict(max_identity <= th.identity_residual && bound_ok);
    if flagged > 0 {
        t = t.flag(format!(
            "{flagged} of {} paths end off the rounded drift point; the relative term uses the telescoped f_ε sum",
            r.paths
        ));
    }
    if inexact > 0 {
        t = t.flag(format!(
            "{inexact} paths used the nearest reachable point for [n v̄]"
        ));
    }
    out.reports.push(t);
    out.tables.push(("decomposition".into(), dec_csv));

    // Path independence on admissible bridges.
    let bridge_res: Vec<f64> = (0..r.bridges as u64)
        .into_par_iter()
        .map(|b| {
            let (p1, p2) = bridge(law, seed, b);
            let a = chi_along(&base, &p1, &params, cap)?;
            let c = chi_along(&base, &p2, &params, cap)?;
            let m = (p1.len() - 1) as i64;
            let direct = chi(&base, m, p1.last().expect("end"), &params, cap)?;
            Ok((0..nu)
                .map(|i| (a[i] - c[i]).abs().max((a[i] - direct[i]).abs()))
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let max_bridge = bridge_res.iter().copied().fold(0.0, f64::max);
    out.reports.push(
        TestReport::new("cocycle_bridges", seed)
            .input("bridges", r.bridges)
            .input("epsilon", params.epsilon)
            .stat("max_path_difference", max_bridge)
            .threshold("max_path_difference", th.cocycle_residual)
            .verdict(max_bridge <= th.cocycle_residual),
    );

    Ok(out)
}

/// Growth exponent of `E|R_n|²` at `ε = 1/n`.
pub fn remainder_growth(
    cfg: &ExperimentConfig,
    law: &SiteLaw,
    r: &Resolved,
) -> Result<SuiteOutput> {
    let th = &cfg.thresholds;
    let (seed, cap, tol) = (cfg.master_seed, cfg.support_cap, cfg.tol);
    let mut out = SuiteOutput::default();
    if !r.rn_ladder.is_empty() {
        let (points, _) = remainder_scaling(law, seed, &r.rn_ladder, r.samples, None, tol, cap)?;
        let fit = fit_exponent(
            points
                .iter()
                .map(|p| FitPoint::new(p.n as f64, p.mean_sq, p.se))
                .collect(),
        );
        let alpha = fit.slope / 2.0;
        let mut csv = Csv::new(&[
            "n",
            "epsilon",
            "K",
            "mean_sq",
            "se",
            "max_identity_residual",
        ]);
        for p in &points {
            csv.row(vec![
                cell(p.n),
                cell(p.epsilon),
                cell(p.depth),
                cell(p.mean_sq),
                cell(p.se),
                cell(p.max_identity_residual),
            ]);
        }
        out.tables.push(("remainder".into(), csv));
        let mut t = TestReport::new("remainder_growth", seed)
            .input("rn_ladder", &r.rn_ladder)
            .input("samples", r.samples)
            .input("epsilon", "1/n")
            .stat("points", &points)
            .stat("slope", fit.slope)
            .stat("slope_se", fit.slope_se)
            .stat("alpha_hat", alpha)
            .threshold("alpha_hat_max", th.remainder_alpha_max);
        t = if fit.degenerate {
            t.flag("degenerate: remainder vanishes identically")
                .verdict(true)
        } else {
            t.verdict(alpha <= th.remainder_alpha_max)
        };
        out.reports.push(t);
    }

    Ok(out)
}

/// Martingale diffusion matrix along the ε ladder against the annealed one.
pub fn diffusion_coincidence(
    cfg: &ExperimentConfig,
    law: &SiteLaw,
    r: &Resolved,
) -> Result<SuiteOutput> {
    let nu = law.nu();
    let th = &cfg.thresholds;
    let (seed, cap, tol) = (cfg.master_seed, cfg.support_cap, cfg.tol);
    let mut out = SuiteOutput::default();
    let d = annealed_params(law).d_matrix;
    let mut dist = Vec::new();
    let mut diff_csv = Csv::new(&["epsilon", "a", "b", "estimate", "se", "annealed"]);
    for &eps in &r.eps_ladder {
        let p = ResolventParams::new(law, eps, tol)?;
        let est = limit_diffusion_matrix(law, &p, seed, r.environments, r.steps_per_sample, cap)?;
        for a in 0..nu {
            for b in 0..nu {
                diff_csv.row(vec![
                    cell(eps),
                    cell(a),
                    cell(b),
                    cell(est.matrix[a][b]),
                    cell(est.se[a][b]),
                    cell(d[a][b]),
                ]);
            }
        }
        let se_f = est.se.iter().flatten().map(|s| s * s).sum::<f64>().sqrt();
        dist.push((eps, frobenius_diff(&est.matrix, &d), se_f));
    }
    let decreasing = dist.windows(2).all(|w| w[1].1 < w[0].1);
    let last = *dist.last().expect("non-empty ladder");
    let limit = th.diffusion_se_mult * last.2 + th.diffusion_abs;
    out.reports.push(
        TestReport::new("diffusion_coincidence", seed)
            .input("eps_ladder", &r.eps_ladder)
            .input("M", r.environments)
            .input("steps_per_sample", r.steps_per_sample)
            .stat(
                "distances",
                dist.iter()
                    .map(|x| json!({"epsilon": x.0, "frobenius": x.1, "se": x.2}))
                    .collect::<Vec<_>>(),
            )
            .stat("decreasing", decreasing)
            .threshold("final_distance_max", limit)
            .threshold("se_mult", th.diffusion_se_mult)
            .threshold("abs", th.diffusion_abs)
            .verdict((decreasing || dist.len() < 2) && last.1 <= limit),
    );
    out.tables.push(("diffusion".into(), diff_csv));

    Ok(out)
}

/// Growth exponent of `‖h_ε‖₂` as `ε ↓ 0`.
pub fn h_norm(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let th = &cfg.thresholds;
    let (seed, cap, tol) = (cfg.master_seed, cfg.support_cap, cfg.tol);
    let mut out = SuiteOutput::default();
    let hn = h_norm_growth(law, &r.h_eps_ladder, tol, seed, r.environments, cap)?;
    let fit = fit_exponent(
        hn.iter()
            .map(|p| FitPoint::new(p.epsilon, p.mean_sq, p.se))
            .collect(),
    );
    let alpha = -fit.slope / 2.0;
    let mut csv = Csv::new(&["epsilon", "mean_sq", "se"]);
    for p in &hn {
        csv.row(vec![cell(p.epsilon), cell(p.mean_sq), cell(p.se)]);
    }
    out.tables.push(("h_norm".into(), csv));
    let t = TestReport::new("h_norm_growth", seed)
        .input("h_eps_ladder", &r.h_eps_ladder)
        .input("M", r.environments)
        .stat("points", &hn)
        .stat("slope", fit.slope)
        .stat("alpha_hat", alpha)
        .threshold("alpha_hat_max", th.h_norm_alpha_max);
    out.reports.push(if fit.degenerate {
        t.flag("degenerate: h_ε vanishes identically").verdict(true)
    } else {
        t.verdict(alpha <= th.h_norm_alpha_max)
    });
    Ok(out)
}

fn corrector(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    for part in [
        corrector_exactness,
        remainder_growth,
        diffusion_coincidence,
        h_norm,
    ] {
        let o = part(cfg, law, r)?;
        out.reports.extend(o.reports);
        out.tables.extend(o.tables);
    }
    Ok(out)
}

pub fn mg_check(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let seed = cfg.master_seed;
    let cap = cfg.support_cap;
    let th = &cfg.thresholds;
    let params = ResolventParams::new(law, r.epsilon, cfg.tol)?;
    let gamma =
        limit_diffusion_matrix(law, &params, seed, r.environments, r.steps_per_sample, cap)?;
    let base = EnvironmentView::new(law.clone(), seed)?;
    let reports: Vec<_> = (0..r.samples as u64)
        .into_par_iter()
        .map(|i| {
            let env = base.reseeded(environment_seed(seed, i));
            let path = sample_path(&env, r.n, replica_seed(seed, i))?;
            mg_hypotheses(
                &env,
                &path,
                &params,
                &gamma.matrix,
                &r.t_grid,
                &[th.lindeberg_delta],
                cap,
            )
        })
        .collect::<Result<_>>()?;
    let devs: Vec<f64> = reports.iter().map(|m| m.max_rel_deviation).collect();
    let dev = mean_se(&devs);
    let lind = reports.iter().map(|m| m.lindeberg[0].1).fold(0.0, f64::max);
    let lind_mean =
        reports.iter().map(|m| m.lindeberg[0].1).sum::<f64>() / reports.len().max(1) as f64;
    let max_inc = reports.iter().map(|m| m.max_increment).fold(0.0, f64::max);
    let mut qv = Csv::new(&["sample", "t", "rel_deviation"]);
    let mut lcsv = Csv::new(&["sample", "delta", "lindeberg_sum", "max_increment"]);
    for (i, m) in reports.iter().enumerate() {
        for q in &m.qv_curve {
            qv.row(vec![cell(i), cell(q.t), cell(q.rel_deviation)]);
        }
        lcsv.row(vec![
            cell(i),
            cell(m.lindeberg[0].0),
            cell(m.lindeberg[0].1),
            cell(m.max_increment),
        ]);
    }
    let report = TestReport::new("martingale_hypotheses", seed)
        .input("n", r.n)
        .input("epsilon", params.epsilon)
        .input("samples", r.samples)
        .input("M", r.environments)
        .input("t_grid", &r.t_grid)
        .stat("gamma_hat", &gamma.matrix)
        .stat("gamma_hat_se", &gamma.se)
        .stat("mean_sup_rel_deviation", dev.mean)
        .stat("mean_sup_rel_deviation_se", dev.se)
        .stat("max_lindeberg_sum", lind)
        .stat("mean_lindeberg_sum", lind_mean)
        .stat("max_increment", max_inc)
        .threshold("mean_sup_rel_deviation_max", th.qv_rel_deviation)
        .threshold("lindeberg_delta", th.lindeberg_delta)
        .threshold("lindeberg_max", th.lindeberg_max)
        .verdict(dev.mean < th.qv_rel_deviation && lind < th.lindeberg_max);
    Ok(SuiteOutput {
        reports: vec![report],
        tables: vec![("qv".into(), qv), ("lindeberg".into(), lcsv)],
    })
}

pub fn ergodic(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let seed = cfg.master_seed;
    let env = EnvironmentView::new(law.clone(), seed)?;
    let path = sample_path(&env, r.n, replica_seed(seed, 0))?;
    let s = ergodic_average(&env, &path, &r.observable, r.n)?;
    let ap = annealed_params(law);
    let exact = match r.observable.parse()? {
        crate::verify::Observable::Pi(i) => law_moments(law).p[i],
        crate::verify::Observable::Drift(c) => ap.v_bar[c],
        crate::verify::Observable::DriftNormSq => ap.g_norm_sq,
    };
    let z_path = z_score(s.path_average.mean, s.path_average.se, exact, 0.0);
    let z_base = z_score(s.baseline.mean, s.baseline.se, exact, 0.0);
    let mult = cfg.thresholds.se_mult;
    let stride = (r.n / 1000).max(1);
    let mut csv = Csv::new(&["m", "running_average"]);
    for (m, v) in s.running.iter().enumerate() {
        if (m + 1) % stride == 0 || m + 1 == s.running.len() {
            csv.row(vec![cell(m + 1), cell(v)]);
        }
    }
    let report = TestReport::new("ergodic_average", seed)
        .input("n", r.n)
        .input("observable", &s.observable)
        .stat("path_average", s.path_average)
        .stat("baseline", s.baseline)
        .stat("annealed_expectation", exact)
        .stat("z_path", z_path)
        .stat("z_baseline", z_base)
        .threshold("abs_z_max", mult)
        .verdict(z_path.abs() <= mult && z_base.abs() <= mult);
    Ok(SuiteOutput {
        reports: vec![report],
        tables: vec![("running".into(), csv)],
    })
}

pub fn density(cfg: &ExperimentConfig, law: &SiteLaw, r: &Resolved) -> Result<SuiteOutput> {
    let seed = cfg.master_seed;
    let base = EnvironmentView::new(law.clone(), seed)?;
    let mult = cfg.thresholds.se_mult;
    let mut csv = Csv::new(&["n", "mean", "se", "z"]);
    let mut points = Vec::new();
    let mut pass = true;
    for &n in &r.density_ladder {
        let xs: Vec<f64> = (0..r.environments as u64)
            .into_par_iter()
            .map(|i| {
                density_f(
                    &base.reseeded(environment_seed(seed, i)),
                    n,
                    cfg.support_cap,
                )
            })
            .collect::<Result<_>>()?;
        let m = mean_se(&xs);
        let z = z_score(m.mean, m.se, 1.0, 0.0);
        let ok = if n == 0 {
            xs.iter().all(|x| *x == 1.0)
        } else {
            z.abs() <= mult
        };
        pass &= ok;
        csv.row(vec![cell(n), cell(m.mean), cell(m.se), cell(z)]);
        points.push(json!({"n": n, "mean": m.mean, "se": m.se, "z": z, "pass": ok}));
    }
    let report = TestReport::new("density_mean", seed)
        .input("density_ladder", &r.density_ladder)
        .input("M", r.environments)
        .stat("points", points)
        .threshold("abs_z_max", mult)
        .threshold("f_0", 1.0)
        .verdict(pass);
    Ok(SuiteOutput {
        reports: vec![report],
        tables: vec![("f".into(), csv)],
    })
}

fn run_suite(suite: Experiment, cfg: &ExperimentConfig, law: &SiteLaw) -> Result<SuiteOutput> {
    let r = cfg.resolve(suite);
    match suite {
        Experiment::Simulate => simulate(cfg, law, &r),
        Experiment::Clt => clt(cfg, law, &r),
        Experiment::Collisions => collisions(cfg, law, &r),
        Experiment::Scaling => scaling(cfg, law, &r),
        Experiment::Corrector => corrector(cfg, law, &r),
        Experiment::MgCheck => mg_check(cfg, law, &r),
        Experiment::Ergodic => ergodic(cfg, law, &r),
        Experiment::Density => density(cfg, law, &r),
        Experiment::All => unreachable!("expanded by the caller"),
    }
}

/// Validates `cfg` and runs its suites in the current thread pool, without
/// writing anything.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let law = cfg.validate()?;
    let experiment = cfg.experiment.expect("validated");
    let mut reports = Vec::new();
    let mut tables = Vec::new();
    let mut resolved = serde_json::Map::new();
    for suite in experiment.suites() {
        resolved.insert(
            suite.name().into(),
            serde_json::to_value(cfg.resolve(suite)).expect("serializes"),
        );
        let out = run_suite(suite, cfg, &law)?;
        reports.extend(out.reports);
        for (name, csv) in out.tables {
            tables.push((format!("{}_{name}.csv", suite.name()), csv));
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    let summary = json!({
        "experiment": experiment.name(),
        "master_seed": cfg.master_seed,
        "pass": pass,
        "resolved": Value::Object(resolved),
        "tests": reports,
    });
    let mut files = vec![(
        "summary.json".to_string(),
        serde_json::to_vec_pretty(&summary).expect("serializes"),
    )];
    for (name, csv) in tables {
        files.push((name, csv.to_string_lossless().into_bytes()));
    }
    Ok(RunOutput {
        experiment,
        pass,
        reports,
        files,
    })
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

/// Writes the outputs and a manifest into `dir`. On failure every file
/// written so far is removed again.
pub fn write_outputs(
    dir: &FsPath,
    cfg: &ExperimentConfig,
    out: &RunOutput,
    runtime_s: f64,
) -> Result<Vec<PathBuf>> {
    let created_dir = !dir.exists();
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        let mut entries = Vec::new();
        for (name, bytes) in &out.files {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            written.push(p);
            entries.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len(),
                sha256: hex::encode(Sha256::digest(bytes)),
            });
        }
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "artifact": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": out.experiment.name(),
            "config": cfg,
            "timestamp_unix": timestamp,
            "runtime_seconds": runtime_s,
            "files": entries,
        });
        let p = dir.join("manifest.json");
        fs::write(
            &p,
            serde_json::to_vec_pretty(&manifest).expect("serializes"),
        )?;
        written.push(p);
        Ok(())
    })();
    if let Err(e) = result {
        remove_all(&written, dir, created_dir);
        return Err(e);
    }
    Ok(written)
}

fn remove_all(files: &[PathBuf], dir: &FsPath, created_dir: bool) {
    for f in files {
        let _ = fs::remove_file(f);
    }
    if created_dir {
        let _ = fs::remove_dir(dir);
    }
}

/// Exit status for an error: 3 for resource caps, 2 for everything else
/// (configuration, validation, I/O).
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Resource { .. } => 3,
        _ => 2,
    }
}

/// Worker count: the `threads` key, else `RWRE_LAB_THREADS`, else every
/// available core.
pub fn thread_count(cfg: &ExperimentConfig) -> usize {
    cfg.threads
        .or_else(|| {
            std::env::var("RWRE_LAB_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|t| *t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `cfg` in its own worker pool and writes the outputs. Returns the
/// exit status: 0 all tests pass, 1 a statistical test failed, 2
/// configuration or validation error, 3 resource cap.
pub fn execute(cfg: &ExperimentConfig) -> (i32, Option<RunOutput>) {
    let start = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return (2, None);
        }
    };
    let out = match pool.install(|| run(cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return (exit_code(&e), None);
        }
    };
    if let Err(e) = write_outputs(&cfg.output_dir, cfg, &out, start.elapsed().as_secs_f64()) {
        eprintln!("error: {e}");
        return (exit_code(&e), None);
    }
    for r in &out.reports {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.name);
    }
    (if out.pass { 0 } else { 1 }, Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridges_share_endpoints() {
        let law = SiteLaw::uniform_dirichlet(2);
        for b in 0..20 {
            let (p, q) = bridge(&law, 7, b);
            assert_eq!(p.len(), q.len());
            assert_eq!(p.last(), q.last());
            assert_eq!(p[0], Site::ORIGIN);
        }
    }

    #[test]
    fn test_sites_in_range() {
        for (level, x) in test_sites(1, 2, 50) {
            assert!((0..64).contains(&level));
            assert!(x.0[..2].iter().all(|c| (-16..=16).contains(c)));
            assert_eq!(x.0[2], 0);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code(&Error::Resource {
                what: "x",
                needed: 2,
                cap: 1
            }),
            3
        );
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }
}
