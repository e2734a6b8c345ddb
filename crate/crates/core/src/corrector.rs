//! Resolvent corrector, martingale decomposition and the corrector function.
//!
//! `h_ε` solves `(1 + ε) h_ε - Π h_ε = g` with `g = D - v̄`. Two independent
//! routes compute it:
//!
//! * [`resolvent_h`] sums the series `Σ_{k≥1} (1+ε)^{-k} Π^{k-1} g` at one
//!   site from a forward occupation recursion of depth `K`;
//! * [`ResolventField`] solves the resolvent equation backwards in time on
//!   a band of sites around a path. Because levels are never revisited, the
//!   equation reads `h(k, x) = (g(k, x) + Σ_z π_z h(k + 1, x + z)) / (1 + ε)`
//!   and one sweep yields `h_ε` at every site the path touches.
//!
//! Both carry a certified absolute error bound per coordinate.

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{
    annealed_params, environment_seed, is_reachable, quenched_mean_series, reachable_sites,
};
use crate::env::{law_moments, EnvironmentView, SiteLaw};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Row, Site, MAX_NU};
use crate::rng::{derive_seed, tag, StreamKey};
use crate::stats::mean_se;
use crate::walk::{pick_step, replica_seed, sample_path, Path};

/// `max_z |z - v̄|`, which bounds `|g|` everywhere.
pub fn drift_bound(law: &SiteLaw) -> f64 {
    if law.is_degenerate() {
        return 0.0;
    }
    let v = law_moments(law).mean_step(&law.support);
    let nu = law.nu();
    law.support
        .steps()
        .iter()
        .map(|z| {
            (0..nu)
                .map(|c| (z.0[c] as f64 - v[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Discount, target accuracy and series depth for `h_ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResolventParams {
    pub epsilon: f64,
    pub tol: f64,
    pub depth: usize,
}

impl ResolventParams {
    /// Smallest depth `K` with `(1 + ε)^K ≥ g_max / (ε tol)`, where
    /// `g_max = 2 max_z |z - v̄|`; the discarded tail is then below `tol / 2`.
    pub fn min_depth(law: &SiteLaw, epsilon: f64, tol: f64) -> usize {
        let g_max = 2.0 * drift_bound(law);
        let ratio = g_max / (epsilon * tol);
        if ratio <= 1.0 {
            return 1;
        }
        (ratio.ln() / epsilon.ln_1p()).ceil().max(1.0) as usize
    }

    pub fn new(law: &SiteLaw, epsilon: f64, tol: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need epsilon > 0 and tol > 0, got {epsilon} and {tol}"
            )));
        }
        Ok(ResolventParams {
            epsilon,
            tol,
            depth: Self::min_depth(law, epsilon, tol),
        })
    }

    pub fn with_depth(law: &SiteLaw, epsilon: f64, tol: f64, depth: usize) -> Result<Self> {
        let p = Self::new(law, epsilon, tol)?;
        if depth < p.depth {
            return Err(Error::InvalidArgument(format!(
                "depth {depth} is below the {} needed for tol {tol}",
                p.depth
            )));
        }
        Ok(ResolventParams { depth, ..p })
    }
}

fn to_vec(nu: usize, a: &[f64; MAX_NU]) -> Vec<f64> {
    a[..nu].to_vec()
}

/// `h_ε` at the origin of `env` by the truncated series.
pub fn resolvent_h(env: &EnvironmentView, params: &ResolventParams, cap: u64) -> Result<Vec<f64>> {
    Ok(to_vec(env.nu(), &resolvent_h_array(env, params, cap)?))
}

fn resolvent_h_array(
    env: &EnvironmentView,
    params: &ResolventParams,
    cap: u64,
) -> Result<[f64; MAX_NU]> {
    let mut h = [0.0; MAX_NU];
    if env.is_degenerate() {
        return Ok(h);
    }
    let series = quenched_mean_series(env, params.depth, cap)?;
    let mut w = 1.0;
    for g in &series.pik_g {
        w /= 1.0 + params.epsilon;
        for c in 0..env.nu() {
            h[c] += w * g[c];
        }
    }
    Ok(h)
}

fn centered_drift_at(env: &EnvironmentView, level: i64, x: &Site) -> [f64; MAX_NU] {
    env.centered_drift_of(&env.transition_vector(level, x))
}

/// Martingale increment `H_ε(T_{(k,a)} ω, T_{(k+1,b)} ω)
/// = h_ε(T_{(k+1,b)} ω) - (1 + ε) h_ε(T_{(k,a)} ω) + g(T_{(k,a)} ω)`.
pub fn h_eps_increment(
    env: &EnvironmentView,
    level: i64,
    from: &Site,
    to: &Site,
    params: &ResolventParams,
    cap: u64,
) -> Result<Vec<f64>> {
    let nu = env.nu();
    let z = *to - *from;
    if env.support().position(&z).is_none() {
        return Err(Error::InvalidStep(z.to_vec(nu)));
    }
    let h1 = resolvent_h_array(&env.shift(level + 1, *to), params, cap)?;
    let h0 = resolvent_h_array(&env.shift(level, *from), params, cap)?;
    let g = centered_drift_at(env, level, from);
    Ok((0..nu)
        .map(|c| h1[c] - (1.0 + params.epsilon) * h0[c] + g[c])
        .collect())
}

/// `h_ε` on every site within a band around a chain of anchor sites, one
/// anchor per level starting at level 0.
#[derive(Clone, Debug)]
pub struct ResolventField {
    nu: usize,
    epsilon: f64,
    zero: bool,
    boxes: Vec<LatticeBox>,
    values: Vec<Vec<f64>>,
    error_bound: f64,
    band: i64,
}

impl ResolventField {
    /// Solves backwards from level `anchors.len() + depth`, retaining levels
    /// `0..=anchors.len()`. The error at a site is at most
    /// `E[(1 + ε)^{-τ}] max|g| / ε`, where `τ` is the time the walk from it
    /// leaves the solved region; that weight is computed alongside `h`, and
    /// the band half-width is widened until the bound at every anchor and at
    /// every one-step successor of an anchor is at most `params.tol`.
    pub fn along(
        env: &EnvironmentView,
        anchors: &[Site],
        params: &ResolventParams,
        cap: u64,
    ) -> Result<Self> {
        let nu = env.nu();
        if anchors.is_empty() {
            return Err(Error::InvalidArgument(
                "field needs at least one anchor".into(),
            ));
        }
        if env.is_degenerate() {
            return Ok(ResolventField {
                nu,
                epsilon: params.epsilon,
                zero: true,
                boxes: Vec::new(),
                values: Vec::new(),
                error_bound: 0.0,
                band: 0,
            });
        }
        let eps = params.epsilon;
        let gsup = drift_bound(env.law());
        let (smin, smax) = env.support().bounds();
        let reach = (0..nu)
            .map(|c| smin[c].abs().max(smax[c].abs()))
            .max()
            .unwrap_or(1)
            .max(1);
        let d = annealed_params(env.law()).d_matrix;
        let sigma = (0..nu)
            .map(|c| d[c][c])
            .fold(0.0, f64::max)
            .sqrt()
            .max(1e-3);
        // Terminal level: K levels past the last successor, so the weight of
        // reaching it is at most half the budget.
        let horizon = anchors.len() + params.depth;
        let terminal = (1.0 + eps).powi(-(params.depth as i32));
        let budget = params.tol * eps / gsup;
        let band_target = budget - terminal;
        // Brownian escape from a slab of half-width W before an independent
        // exponential time of rate ε has weight about 2 exp(-W √(2ε) / σ).
        let rate = (2.0 * eps).sqrt() / sigma;
        let mut band = ((2.0 / band_target).ln().max(1.0) / rate).ceil() as i64 + 2 * reach;
        for _ in 0..16 {
            let field = Self::solve(env, anchors, params, cap, band, horizon)?;
            let escape = field.error_bound;
            if escape <= band_target {
                return Ok(ResolventField {
                    error_bound: (escape + terminal) * gsup / eps,
                    ..field
                });
            }
            if band > horizon as i64 * reach {
                return Err(Error::InvalidArgument(format!(
                    "resolvent error {} above tol {} with an unrestricted band",
                    (escape + terminal) * gsup / eps,
                    params.tol
                )));
            }
            let grow = (1.1 * (escape / band_target).ln() / rate).ceil() as i64;
            band += grow.max(reach);
        }
        Err(Error::InvalidArgument(
            "resolvent band did not converge".into(),
        ))
    }

    fn solve(
        env: &EnvironmentView,
        anchors: &[Site],
        params: &ResolventParams,
        cap: u64,
        band: i64,
        horizon: usize,
    ) -> Result<Self> {
        let nu = env.nu();
        let n = anchors.len() - 1;
        let keep = n + 2;
        let eps = params.epsilon;
        let v_bar = env.mean_step();
        let steps = env.support().steps();
        let (smin, smax) = env.support().bounds();

        // Boxes: forward cone of the anchors intersected with a band around
        // the drift lines through them.
        let mut boxes = Vec::with_capacity(horizon);
        let mut cone_lo = anchors[0].0;
        let mut cone_hi = anchors[0].0;
        let mut line_lo = [f64::INFINITY; MAX_NU];
        let mut line_hi = [f64::NEG_INFINITY; MAX_NU];
        for k in 0..horizon {
            if k > 0 {
                for c in 0..nu {
                    cone_lo[c] += smin[c];
                    cone_hi[c] += smax[c];
                }
            }
            if k <= n {
                for c in 0..nu {
                    let a = anchors[k].0[c];
                    cone_lo[c] = cone_lo[c].min(a);
                    cone_hi[c] = cone_hi[c].max(a);
                    let shifted = a as f64 - v_bar[c] * k as f64;
                    line_lo[c] = line_lo[c].min(shifted);
                    line_hi[c] = line_hi[c].max(shifted);
                }
            }
            let mut lo = [0i64; MAX_NU];
            let mut hi = [0i64; MAX_NU];
            for c in 0..nu {
                let drift = v_bar[c] * k as f64;
                lo[c] = cone_lo[c].max((line_lo[c] + drift).floor() as i64 - band);
                hi[c] = cone_hi[c].min((line_hi[c] + drift).ceil() as i64 + band);
            }
            let cells = LatticeBox::cells(nu, &lo, &hi).unwrap_or(u64::MAX);
            if cells > cap {
                return Err(Error::Resource {
                    what: "resolvent band level",
                    needed: cells,
                    cap,
                });
            }
            boxes.push(LatticeBox::new(nu, lo, hi).expect("anchor lies in its box"));
        }

        // Forward reachability inside the boxes.
        let mut masks: Vec<Vec<bool>> = Vec::with_capacity(horizon);
        let mut targets: Vec<RowTarget> = Vec::with_capacity(steps.len());
        for k in 0..horizon {
            let b = &boxes[k];
            let mut m = vec![false; b.len()];
            if k <= n {
                m[b.index(&anchors[k]).expect("anchor in box")] = true;
            }
            if k > 0 {
                let prev = &boxes[k - 1];
                let pm = &masks[k - 1];
                for row in prev.rows() {
                    row_targets(b, &row, steps, &mut targets);
                    for j in 0..row.len as i64 {
                        if pm[row.start + j as usize] {
                            for t in &targets {
                                if (t.lo..=t.hi).contains(&j) {
                                    m[(t.base + j as isize) as usize] = true;
                                }
                            }
                        }
                    }
                }
            }
            masks.push(m);
        }

        let retained_cells: u64 = boxes[..keep.min(horizon)]
            .iter()
            .map(|b| b.len() as u64)
            .sum();
        if retained_cells > cap {
            return Err(Error::Resource {
                what: "retained resolvent levels",
                needed: retained_cells,
                cap,
            });
        }

        // Backward sweep: values and band-escape weights.
        let v_bar = env.mean_step();
        let step_f: Vec<[f64; MAX_NU]> = steps.iter().map(|z| z.0.map(|c| c as f64)).collect();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); keep.min(horizon)];
        let mut escapes: Vec<Vec<f64>> = vec![Vec::new(); keep.min(horizon)];
        let mut next_h: Vec<f64> = Vec::new();
        let mut next_esc: Vec<f64> = Vec::new();
        let mut pi = vec![0.0; steps.len()];
        let scale = 1.0 / (1.0 + eps);
        for k in (0..horizon).rev() {
            let b = &boxes[k];
            let nb = boxes.get(k + 1);
            let mut h = vec![0.0; b.len() * nu];
            let mut esc = vec![0.0; b.len()];
            let sampler = env.level(k as i64);
            let mask = &masks[k];
            for row in b.rows() {
                match nb {
                    Some(nb) => row_targets(nb, &row, steps, &mut targets),
                    None => targets.clear(),
                }
                for j in 0..row.len {
                    let i = row.start + j;
                    if !mask[i] {
                        continue;
                    }
                    let x = row.site(nu, j);
                    sampler.fill(&x, &mut pi);
                    let mut acc = [0.0; MAX_NU];
                    for c in 0..nu {
                        acc[c] = -v_bar[c];
                    }
                    let mut out = 0.0;
                    for (zf, &p) in step_f.iter().zip(&pi) {
                        for c in 0..nu {
                            acc[c] += p * zf[c];
                        }
                    }
                    if nb.is_some() {
                        let jj = j as i64;
                        for (t, &p) in targets.iter().zip(&pi) {
                            if (t.lo..=t.hi).contains(&jj) {
                                let u = (t.base + jj as isize) as usize;
                                for c in 0..nu {
                                    acc[c] += p * next_h[u * nu + c];
                                }
                                out += p * next_esc[u];
                            } else {
                                out += p;
                            }
                        }
                    }
                    for c in 0..nu {
                        h[i * nu + c] = acc[c] * scale;
                    }
                    esc[i] = out * scale;
                }
            }
            if k < keep {
                values[k] = h.clone();
                escapes[k] = esc.clone();
            }
            next_h = h;
            next_esc = esc;
        }

        let mut worst: f64 = 0.0;
        let escape_at = |lvl: usize, x: &Site| {
            boxes
                .get(lvl)
                .filter(|_| lvl < keep)
                .and_then(|b| b.index(x))
                .map_or(1.0, |i| escapes[lvl][i])
        };
        for (k, a) in anchors.iter().enumerate() {
            worst = worst.max(escape_at(k, a));
            for z in steps {
                worst = worst.max(escape_at(k + 1, &(*a + *z)));
            }
        }
        boxes.truncate(keep);
        // `error_bound` holds the raw escape weight until `along` converts it.
        Ok(ResolventField {
            nu,
            epsilon: eps,
            zero: false,
            boxes,
            values,
            error_bound: worst,
            band,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Certified bound on `|h_field - h_ε|` per coordinate at the anchors
    /// and their one-step successors.
    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    pub fn band(&self) -> i64 {
        self.band
    }

    /// `h_ε(T_{(level, x)} ω)`, or `None` outside the solved band.
    pub fn h(&self, level: usize, x: &Site) -> Option<[f64; MAX_NU]> {
        if self.zero {
            return Some([0.0; MAX_NU]);
        }
        let b = self.boxes.get(level)?;
        let i = b.index(x)?;
        let mut out = [0.0; MAX_NU];
        out[..self.nu].copy_from_slice(&self.values[level][i * self.nu..(i + 1) * self.nu]);
        Some(out)
    }

    fn h_or_err(&self, level: usize, x: &Site) -> Result<[f64; MAX_NU]> {
        self.h(level, x).ok_or(Error::Index {
            index: level,
            len: self.boxes.len(),
        })
    }
}

/// Cells `j ∈ [lo, hi]` of a row whose image under one step lands in the
/// next box, at linear index `base + j` there.
#[derive(Clone, Copy, Debug)]
struct RowTarget {
    lo: i64,
    hi: i64,
    base: isize,
}

/// One target per step, in support order; steps leaving the box in a
/// non-row coordinate get an empty range.
fn row_targets(nb: &LatticeBox, row: &Row, steps: &[Site], out: &mut Vec<RowTarget>) {
    out.clear();
    let nu = nb.nu;
    let last = nu - 1;
    for z in steps {
        let y = row.first + *z;
        let inside = (0..last).all(|c| y.0[c] >= nb.lo[c] && y.0[c] <= nb.hi[c]);
        if !inside {
            out.push(RowTarget {
                lo: 1,
                hi: 0,
                base: 0,
            });
            continue;
        }
        let mut base: isize = 0;
        for c in 0..nu {
            base += (y.0[c] - nb.lo[c]) as isize * nb.stride(c) as isize;
        }
        out.push(RowTarget {
            lo: nb.lo[last] - y.0[last],
            hi: nb.hi[last] - y.0[last],
            base,
        });
    }
}

/// Components of `X_n - n v̄ = X̄_n + M_n^ε + ε S_n^ε + R_n^ε` along one path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionRecord {
    pub n: usize,
    pub epsilon: f64,
    pub depth: usize,
    pub xbar: Vec<f64>,
    pub m_eps: Vec<f64>,
    pub s_eps: Vec<f64>,
    pub r_eps: Vec<f64>,
    /// `X_n - n v̄ - X̄_n - M_n^ε`, the remainder with `M_n` replaced by `M_n^ε`.
    pub r_n: Vec<f64>,
    pub identity_residual: f64,
    /// Largest `|h_ε|` over the visited sites.
    pub max_abs_h: f64,
    pub h_error_bound: f64,
}

/// Decomposition of a path using a field solved along it.
pub fn decompose(
    path: &Path,
    env: &EnvironmentView,
    params: &ResolventParams,
    cap: u64,
) -> Result<DecompositionRecord> {
    let field = ResolventField::along(env, &path.positions, params, cap)?;
    decompose_with(path, env, &field, params)
}

pub fn decompose_with(
    path: &Path,
    env: &EnvironmentView,
    field: &ResolventField,
    params: &ResolventParams,
) -> Result<DecompositionRecord> {
    let nu = env.nu();
    let eps = params.epsilon;
    let n = path.n;
    let v_bar = env.mean_step();
    let mut drift_sum = [0.0; MAX_NU];
    let mut m_eps = [0.0; MAX_NU];
    let mut s_eps = [0.0; MAX_NU];
    let mut max_abs_h: f64 = 0.0;
    let mut h_cur = field.h_or_err(0, &path.positions[0])?;
    let h_start = h_cur;
    for k in 0..n {
        let x = path.positions[k];
        let pi = env.transition_vector(k as i64, &x);
        let d = env.drift_of(&pi);
        let g = env.centered_drift_of(&pi);
        let h_next = field.h_or_err(k + 1, &path.positions[k + 1])?;
        for c in 0..nu {
            drift_sum[c] += d[c];
            m_eps[c] += h_next[c] - (1.0 + eps) * h_cur[c] + g[c];
            s_eps[c] += h_cur[c];
        }
        max_abs_h = max_abs_h.max(h_cur[..nu].iter().map(|v| v * v).sum::<f64>().sqrt());
        h_cur = h_next;
    }
    max_abs_h = max_abs_h.max(h_cur[..nu].iter().map(|v| v * v).sum::<f64>().sqrt());
    let end = path.positions[n];
    let mut xbar = vec![0.0; nu];
    let mut r_eps = vec![0.0; nu];
    let mut r_n = vec![0.0; nu];
    let mut residual_sq = 0.0;
    for c in 0..nu {
        let centered = end.0[c] as f64 - n as f64 * v_bar[c];
        xbar[c] = end.0[c] as f64 - drift_sum[c];
        r_eps[c] = h_start[c] - h_cur[c];
        r_n[c] = centered - xbar[c] - m_eps[c];
        let rhs = xbar[c] + m_eps[c] + eps * s_eps[c] + r_eps[c];
        residual_sq += (centered - rhs).powi(2);
    }
    Ok(DecompositionRecord {
        n,
        epsilon: eps,
        depth: params.depth,
        xbar,
        m_eps: to_vec(nu, &m_eps),
        s_eps: to_vec(nu, &s_eps),
        r_eps,
        r_n,
        identity_residual: residual_sq.sqrt(),
        max_abs_h,
        h_error_bound: field.error_bound(),
    })
}

/// Corrector `χ_ε((m, x), ω) = h_ε(ω) - h_ε(T_{(m,x)} ω)`, the telescoped
/// sum of `f_ε(ω_0, ω_1) = h_ε(ω_0) - h_ε(ω_1)` along any admissible path.
pub fn chi(
    env: &EnvironmentView,
    level: i64,
    x: &Site,
    params: &ResolventParams,
    cap: u64,
) -> Result<Vec<f64>> {
    if level < 0 || !is_reachable(env.support(), level as usize, x, cap)? {
        return Err(Error::Unreachable {
            level,
            site: x.to_vec(env.nu()),
        });
    }
    let h0 = resolvent_h_array(env, params, cap)?;
    let h1 = resolvent_h_array(&env.shift(level, *x), params, cap)?;
    Ok((0..env.nu()).map(|c| h0[c] - h1[c]).collect())
}

/// The same corrector summed term by term along an explicit admissible
/// path `sites[0] = 0, sites[i+1] - sites[i] ∈ S`.
pub fn chi_along(
    env: &EnvironmentView,
    sites: &[Site],
    params: &ResolventParams,
    cap: u64,
) -> Result<Vec<f64>> {
    let nu = env.nu();
    if sites.first() != Some(&Site::ORIGIN) {
        return Err(Error::InvalidArgument(
            "admissible path must start at the origin".into(),
        ));
    }
    for w in sites.windows(2) {
        let z = w[1] - w[0];
        if env.support().position(&z).is_none() {
            return Err(Error::InvalidStep(z.to_vec(nu)));
        }
    }
    let hs: Vec<[f64; MAX_NU]> = sites
        .iter()
        .enumerate()
        .map(|(i, x)| resolvent_h_array(&env.shift(i as i64, *x), params, cap))
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; nu];
    for w in hs.windows(2) {
        for c in 0..nu {
            total[c] += w[0][c] - w[1][c];
        }
    }
    Ok(total)
}

/// Check of `R_n = χ(X_n, ω) = χ([nv], ω) + χ(X_n - [nv], T_{[nv]} ω)` at a
/// fixed `ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleReport {
    pub epsilon: f64,
    /// `|r_n - χ_ε(X_n)|`; equals `ε |S_n^ε|` and vanishes as `ε → 0` only
    /// through the limit.
    pub residual: f64,
    /// The same with `χ_ε(X_n)` split through the rounded drift point.
    pub split_residual: f64,
    /// Site used for `[n v̄]` (componentwise floor, or the nearest reachable
    /// site when the floor is not reachable).
    pub drift_point: Vec<i64>,
    /// False when the floor of `n v̄` was unreachable and replaced.
    pub drift_point_exact: bool,
    /// True when `X_n ≠ [n v̄]`: the relative displacement then has no time
    /// component, so no admissible path realizes it and the telescoped
    /// `f_ε` formula is used for that term.
    pub relative_flagged: bool,
    /// `|R_n^ε| ≤ 2 max |h_ε|` over the visited sites.
    pub r_eps_bound_holds: bool,
}

fn nearest_reachable(
    env: &EnvironmentView,
    n: usize,
    target: Site,
    cap: u64,
) -> Result<(Site, bool)> {
    let (b, r) = reachable_sites(env.support(), n, cap)?;
    if b.index(&target).is_some_and(|i| r[i]) {
        return Ok((target, true));
    }
    let nu = env.nu();
    let best = b
        .sites()
        .zip(&r)
        .filter(|(_, ok)| **ok)
        .map(|(s, _)| {
            let d: i64 = (0..nu).map(|c| (s.0[c] - target.0[c]).abs()).sum();
            (d, s)
        })
        .min()
        .map(|(_, s)| s)
        .ok_or(Error::Unreachable {
            level: n as i64,
            site: target.to_vec(nu),
        })?;
    Ok((best, false))
}

pub fn cocycle_residual(
    path: &Path,
    env: &EnvironmentView,
    params: &ResolventParams,
    cap: u64,
) -> Result<CocycleReport> {
    let nu = env.nu();
    let n = path.n;
    let field = ResolventField::along(env, &path.positions, params, cap)?;
    let rec = decompose_with(path, env, &field, params)?;
    let v_bar = env.mean_step();
    let mut floor = Site::ORIGIN;
    for c in 0..nu {
        floor.0[c] = (n as f64 * v_bar[c]).floor() as i64;
    }
    let (drift_point, exact) = nearest_reachable(env, n, floor, cap)?;
    let h0 = field.h_or_err(0, &Site::ORIGIN)?;
    let h_end = field.h_or_err(n, &path.end())?;
    let h_mid = match field.h(n, &drift_point) {
        Some(h) => h,
        None => resolvent_h_array(&env.shift(n as i64, drift_point), params, cap)?,
    };
    let mut res = 0.0;
    let mut split = 0.0;
    let mut r_eps_norm = 0.0;
    for c in 0..nu {
        let chi_end = h0[c] - h_end[c];
        let chi_split = (h0[c] - h_mid[c]) + (h_mid[c] - h_end[c]);
        res += (rec.r_n[c] - chi_end).powi(2);
        split += (rec.r_n[c] - chi_split).powi(2);
        r_eps_norm += rec.r_eps[c].powi(2);
    }
    Ok(CocycleReport {
        epsilon: params.epsilon,
        residual: res.sqrt(),
        split_residual: split.sqrt(),
        drift_point: drift_point.to_vec(nu),
        drift_point_exact: exact,
        relative_flagged: path.end() != drift_point,
        r_eps_bound_holds: r_eps_norm.sqrt() <= 2.0 * rec.max_abs_h + 1e-12,
    })
}

/// Monte Carlo estimate of `E[(Z - D + H_ε)(Z - D + H_ε)^T]` for one
/// quenched step `Z` from the origin of a fresh environment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionEstimate {
    pub epsilon: f64,
    pub environments: usize,
    pub matrix: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

/// With `steps_per_sample = 0` the step average inside each environment is
/// exact (a sum over the transition vector); otherwise that many steps are
/// drawn.
pub fn limit_diffusion_matrix(
    law: &SiteLaw,
    params: &ResolventParams,
    master_seed: u64,
    m_envs: usize,
    steps_per_sample: usize,
    cap: u64,
) -> Result<DiffusionEstimate> {
    if m_envs < 2 {
        return Err(Error::InvalidArgument(
            "need at least two environments".into(),
        ));
    }
    let base = EnvironmentView::new(law.clone(), master_seed)?;
    let nu = base.nu();
    let eps = params.epsilon;
    let steps = base.support().steps().to_vec();
    let per_env: Vec<Vec<f64>> = (0..m_envs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = environment_seed(master_seed, i);
            let env = base.reseeded(seed);
            let field = ResolventField::along(&env, &[Site::ORIGIN], params, cap)?;
            let h0 = field.h_or_err(0, &Site::ORIGIN)?;
            let pi = env.transition_vector(0, &Site::ORIGIN);
            let d = env.drift_of(&pi);
            let g = env.centered_drift_of(&pi);
            let w: Vec<[f64; MAX_NU]> = steps
                .iter()
                .map(|z| {
                    let h1 = field.h_or_err(1, z)?;
                    let mut w = [0.0; MAX_NU];
                    for c in 0..nu {
                        w[c] = z.0[c] as f64 - d[c] + h1[c] - (1.0 + eps) * h0[c] + g[c];
                    }
                    Ok(w)
                })
                .collect::<Result<_>>()?;
            let mut acc = vec![0.0; nu * nu];
            let mut add = |wz: &[f64; MAX_NU], weight: f64| {
                for a in 0..nu {
                    for b in 0..nu {
                        acc[a * nu + b] += weight * wz[a] * wz[b];
                    }
                }
            };
            if steps_per_sample == 0 {
                for (wz, p) in w.iter().zip(&pi) {
                    add(wz, *p);
                }
            } else {
                let key = StreamKey::new(derive_seed(seed, tag::WALK, 0));
                for s in 0..steps_per_sample as u64 {
                    let i = pick_step(&pi, key.unit(s));
                    add(&w[i], 1.0 / steps_per_sample as f64);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut matrix = vec![vec![0.0; nu]; nu];
    let mut se = vec![vec![0.0; nu]; nu];
    for a in 0..nu {
        for b in 0..nu {
            let xs: Vec<f64> = per_env.iter().map(|r| r[a * nu + b]).collect();
            let m = mean_se(&xs);
            matrix[a][b] = m.mean;
            se[a][b] = m.se;
        }
    }
    Ok(DiffusionEstimate {
        epsilon: eps,
        environments: m_envs,
        matrix,
        se,
    })
}

/// `E|h_ε|²` at the origin over environments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HNormPoint {
    pub epsilon: f64,
    pub mean_sq: f64,
    pub se: f64,
}

pub fn h_norm_growth(
    law: &SiteLaw,
    eps_ladder: &[f64],
    tol: f64,
    master_seed: u64,
    m_envs: usize,
    cap: u64,
) -> Result<Vec<HNormPoint>> {
    let base = EnvironmentView::new(law.clone(), master_seed)?;
    eps_ladder
        .iter()
        .map(|&eps| {
            let params = ResolventParams::new(law, eps, tol)?;
            let xs: Vec<f64> = (0..m_envs as u64)
                .into_par_iter()
                .map(|i| {
                    let env = base.reseeded(environment_seed(master_seed, i));
                    let f = ResolventField::along(&env, &[Site::ORIGIN], &params, cap)?;
                    let h = f.h_or_err(0, &Site::ORIGIN)?;
                    Ok(h.iter().map(|v| v * v).sum())
                })
                .collect::<Result<_>>()?;
            let m = mean_se(&xs);
            Ok(HNormPoint {
                epsilon: eps,
                mean_sq: m.mean,
                se: m.se,
            })
        })
        .collect()
}

/// Mean `|R_n|²` at one horizon, with `ε = 1/n` unless given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemainderPoint {
    pub n: usize,
    pub epsilon: f64,
    pub depth: usize,
    pub mean_sq: f64,
    pub se: f64,
    pub max_identity_residual: f64,
}

/// Sample `i` uses environment `environment_seed(master_seed, i)` and the
/// walk `replica_seed(master_seed, i)` in it.
pub fn remainder_scaling(
    law: &SiteLaw,
    master_seed: u64,
    ladder: &[usize],
    samples: usize,
    epsilon: Option<f64>,
    tol: f64,
    cap: u64,
) -> Result<(Vec<RemainderPoint>, Vec<DecompositionRecord>)> {
    let base = EnvironmentView::new(law.clone(), master_seed)?;
    let mut points = Vec::with_capacity(ladder.len());
    let mut records = Vec::new();
    for &n in ladder {
        let eps = epsilon.unwrap_or(1.0 / n as f64);
        let params = ResolventParams::new(law, eps, tol)?;
        let recs: Vec<DecompositionRecord> = (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let env = base.reseeded(environment_seed(master_seed, i));
                let path = sample_path(&env, n, replica_seed(master_seed, i))?;
                decompose(&path, &env, &params, cap)
            })
            .collect::<Result<_>>()?;
        let sq: Vec<f64> = recs
            .iter()
            .map(|r| r.r_n.iter().map(|v| v * v).sum())
            .collect();
        let m = mean_se(&sq);
        points.push(RemainderPoint {
            n,
            epsilon: eps,
            depth: params.depth,
            mean_sq: m.mean,
            se: m.se,
            max_identity_residual: recs.iter().map(|r| r.identity_residual).fold(0.0, f64::max),
        });
        records.extend(recs);
    }
    Ok((points, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::DEFAULT_SUPPORT_CAP as CAP;

    fn dirichlet_env(seed: u64) -> EnvironmentView {
        EnvironmentView::new(SiteLaw::uniform_dirichlet(1), seed).unwrap()
    }

    #[test]
    fn depth_formula() {
        let law = SiteLaw::uniform_dirichlet(1);
        let p = ResolventParams::new(&law, 1.0 / 16.0, 1e-8).unwrap();
        let expected = ((2.0 / (1e-8 / 16.0)) as f64).ln() / (1.0f64 + 1.0 / 16.0).ln();
        assert_eq!(p.depth, expected.ceil() as usize);
        assert!(ResolventParams::with_depth(&law, 0.1, 1e-6, 3).is_err());
        assert_eq!(
            ResolventParams::new(&SiteLaw::simple_symmetric(1), 0.1, 1e-6)
                .unwrap()
                .depth,
            1
        );
    }

    #[test]
    fn degenerate_corrector_vanishes() {
        let env = EnvironmentView::new(SiteLaw::simple_symmetric(2), 1).unwrap();
        let p = ResolventParams::new(env.law(), 0.1, 1e-6).unwrap();
        assert_eq!(resolvent_h(&env, &p, CAP).unwrap(), vec![0.0, 0.0]);
        let inc = h_eps_increment(&env, 0, &Site::ORIGIN, &Site::at(&[1, 0]), &p, CAP).unwrap();
        assert_eq!(inc, vec![0.0, 0.0]);
    }

    #[test]
    fn one_term_series_is_scaled_drift() {
        let env = dirichlet_env(42);
        let p = ResolventParams {
            epsilon: 0.5,
            tol: 1.0,
            depth: 1,
        };
        let h = resolvent_h(&env, &p, CAP).unwrap();
        let g = env.centered_drift_of(&env.transition_vector(0, &Site::ORIGIN));
        assert!((h[0] - g[0] / 1.5).abs() < 1e-15);
    }

    #[test]
    fn field_matches_series() {
        let env = dirichlet_env(42);
        let p = ResolventParams::new(env.law(), 1.0 / 16.0, 1e-8).unwrap();
        let path = sample_path(&env, 20, 5).unwrap();
        let field = ResolventField::along(&env, &path.positions, &p, CAP).unwrap();
        assert!(field.error_bound() <= p.tol);
        for k in [0usize, 7, 20] {
            let x = path.positions[k];
            let series = resolvent_h(&env.shift(k as i64, x), &p, CAP).unwrap();
            let f = field.h(k, &x).unwrap();
            assert!(
                (series[0] - f[0]).abs() <= 2.0 * p.tol,
                "k={k}: {} vs {}",
                series[0],
                f[0]
            );
        }
    }

    #[test]
    fn increment_rejects_non_steps() {
        let env = dirichlet_env(1);
        let p = ResolventParams::new(env.law(), 0.25, 1e-4).unwrap();
        let err = h_eps_increment(&env, 0, &Site::ORIGIN, &Site::at(&[0]), &p, CAP).unwrap_err();
        assert_eq!(err, Error::InvalidStep(vec![0]));
    }

    #[test]
    fn chi_examples() {
        let env = dirichlet_env(42);
        let p = ResolventParams::new(env.law(), 1.0 / 16.0, 1e-8).unwrap();
        assert_eq!(chi(&env, 0, &Site::ORIGIN, &p, CAP).unwrap(), vec![0.0]);
        let direct = chi(&env, 2, &Site::ORIGIN, &p, CAP).unwrap();
        let s = |x| Site::at(&[x]);
        let up_down = chi_along(&env, &[s(0), s(1), s(0)], &p, CAP).unwrap();
        let down_up = chi_along(&env, &[s(0), s(-1), s(0)], &p, CAP).unwrap();
        assert!((direct[0] - up_down[0]).abs() < 1e-9);
        assert!((up_down[0] - down_up[0]).abs() < 1e-9);
        assert!(matches!(
            chi(&env, 1, &Site::ORIGIN, &p, CAP),
            Err(Error::Unreachable { .. })
        ));
    }

    #[test]
    fn degenerate_decomposition() {
        let env = EnvironmentView::new(SiteLaw::simple_symmetric(2), 3).unwrap();
        let p = ResolventParams::new(env.law(), 0.01, 1e-6).unwrap();
        let path = sample_path(&env, 64, 8).unwrap();
        let rec = decompose(&path, &env, &p, CAP).unwrap();
        let end = path.end();
        assert_eq!(rec.xbar, vec![end.0[0] as f64, end.0[1] as f64]);
        assert_eq!(rec.m_eps, vec![0.0, 0.0]);
        assert_eq!(rec.s_eps, vec![0.0, 0.0]);
        assert_eq!(rec.r_eps, vec![0.0, 0.0]);
        assert_eq!(rec.r_n, vec![0.0, 0.0]);
        assert_eq!(rec.identity_residual, 0.0);
    }
}
