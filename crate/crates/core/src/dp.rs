//! Exact dynamic programs over space-time levels.
//!
//! Every table here is computed without truncation on a dense box that
//! grows by the step range at each level, iterated in lexicographic site
//! order so that floating-point sums are reproducible bit for bit. A table
//! that would exceed the configured number of cells raises
//! [`Error::Resource`] instead of being approximated.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::env::{law_moments, EnvironmentView, SiteLaw, StepSupport};
use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Site, MAX_NU};
use crate::rng::{derive_seed, tag};
use crate::stats::mean_se;
use crate::walk::sample_pair;

/// Default cap on the number of cells of a single table.
pub const DEFAULT_SUPPORT_CAP: u64 = 10_000_000;

/// Seed of environment `i` in an ensemble keyed by `master_seed`.
pub fn environment_seed(master_seed: u64, i: u64) -> u64 {
    derive_seed(master_seed, tag::ENVIRONMENT, i)
}

fn grown_box(
    what: &'static str,
    b: &LatticeBox,
    lo_step: &[i64; MAX_NU],
    hi_step: &[i64; MAX_NU],
    cap: u64,
) -> Result<LatticeBox> {
    let mut lo = b.lo;
    let mut hi = b.hi;
    for c in 0..b.nu {
        lo[c] += lo_step[c];
        hi[c] += hi_step[c];
    }
    let cells = LatticeBox::cells(b.nu, &lo, &hi).unwrap_or(u64::MAX);
    if cells > cap {
        return Err(Error::Resource {
            what,
            needed: cells,
            cap,
        });
    }
    Ok(LatticeBox::new(b.nu, lo, hi).expect("non-empty grown box"))
}

/// Forward recursion `ρ_{k+1}(x + z) = Σ_x ρ_k(x) π_{(k,x)}(z)`.
///
/// `visit(k, box, ρ_k, mean_k, g_k)` is called for `k = 0..=n` with the mean
/// position `Σ ρ_k(x) x` and, for `k < n`, the averaged centered drift
/// `Σ ρ_k(x) g(k, x)` (zero at `k = n`).
fn forward<F>(env: &EnvironmentView, n: usize, cap: u64, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &LatticeBox, &[f64], [f64; MAX_NU], [f64; MAX_NU]),
{
    let nu = env.nu();
    let steps = env.support().steps();
    let (smin, smax) = env.support().bounds();
    let mut cur_box = LatticeBox::point(nu, Site::ORIGIN);
    let mut cur = vec![1.0];
    let mut pi = vec![0.0; steps.len()];
    let step_f: Vec<[f64; MAX_NU]> = steps.iter().map(|z| z.0.map(|c| c as f64)).collect();
    let v_bar = env.mean_step();
    let degenerate = env.is_degenerate();
    for k in 0..=n {
        let mut mean = [0.0; MAX_NU];
        let mut gsum = [0.0; MAX_NU];
        if k == n {
            for row in cur_box.rows() {
                for (j, &r) in cur[row.start..row.start + row.len].iter().enumerate() {
                    if r != 0.0 {
                        let x = row.site(nu, j);
                        for c in 0..nu {
                            mean[c] += r * x.0[c] as f64;
                        }
                    }
                }
            }
            visit(k, &cur_box, &cur, mean, gsum);
            break;
        }
        let next_box = grown_box("occupation level", &cur_box, &smin, &smax, cap)?;
        let offsets: Vec<isize> = steps.iter().map(|z| next_box.offset(z)).collect();
        let mut next = vec![0.0; next_box.len()];
        let level = env.level(k as i64);
        let mut mass = 0.0;
        let mut drift = [0.0; MAX_NU];
        for row in cur_box.rows() {
            let row_base = next_box.index_unchecked(&row.first) as isize;
            for (j, &r) in cur[row.start..row.start + row.len].iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                let x = row.site(nu, j);
                level.fill(&x, &mut pi);
                mass += r;
                for c in 0..nu {
                    mean[c] += r * x.0[c] as f64;
                }
                let base = row_base + j as isize;
                for ((off, p), zf) in offsets.iter().zip(&pi).zip(&step_f) {
                    let w = r * p;
                    next[(base + off) as usize] += w;
                    for c in 0..nu {
                        drift[c] += w * zf[c];
                    }
                }
            }
        }
        if !degenerate {
            for c in 0..nu {
                gsum[c] = drift[c] - mass * v_bar[c];
            }
        }
        visit(k, &cur_box, &cur, mean, gsum);
        cur = next;
        cur_box = next_box;
    }
    Ok(())
}

/// Exact quenched law of `X_k` for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationSlab {
    pub n: usize,
    /// Per level, the sites of positive probability in canonical order.
    pub levels: Vec<Vec<(Site, f64)>>,
}

impl OccupationSlab {
    pub fn prob(&self, k: usize, x: &Site) -> f64 {
        let level = &self.levels[k];
        level
            .binary_search_by(|(s, _)| s.cmp(x))
            .map_or(0.0, |i| level[i].1)
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.levels[k].iter().map(|(_, p)| p).sum()
    }
}

pub fn occupation(env: &EnvironmentView, n: usize, cap: u64) -> Result<OccupationSlab> {
    let mut levels = Vec::with_capacity(n + 1);
    let mut stored: u64 = 0;
    let mut overflow = None;
    forward(env, n, cap, |_, b, rho, _, _| {
        let level: Vec<(Site, f64)> = b
            .sites()
            .zip(rho)
            .filter(|(_, r)| **r > 0.0)
            .map(|(s, r)| (s, *r))
            .collect();
        stored += level.len() as u64;
        if stored > cap && overflow.is_none() {
            overflow = Some(stored);
        }
        levels.push(level);
    })?;
    if let Some(needed) = overflow {
        return Err(Error::Resource {
            what: "occupation slab",
            needed,
            cap,
        });
    }
    Ok(OccupationSlab { n, levels })
}

/// Quenched means `E_0^ω X_k` and the terms `(Π^k g)(ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuenchedMeanSeries {
    pub n: usize,
    pub nu: usize,
    /// `means[k]` for `k = 0..=n`.
    pub means: Vec<[f64; MAX_NU]>,
    /// `pik_g[k]` for `k = 0..n`.
    pub pik_g: Vec<[f64; MAX_NU]>,
}

impl QuenchedMeanSeries {
    /// `|E_0^ω X_k - k v̄|` for each `k`.
    pub fn centered_norms(&self, v_bar: &[f64; MAX_NU]) -> Vec<f64> {
        self.means
            .iter()
            .enumerate()
            .map(|(k, m)| {
                (0..self.nu)
                    .map(|c| (m[c] - k as f64 * v_bar[c]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

pub fn quenched_mean_series(
    env: &EnvironmentView,
    n: usize,
    cap: u64,
) -> Result<QuenchedMeanSeries> {
    let mut means = Vec::with_capacity(n + 1);
    let mut pik_g = Vec::with_capacity(n);
    forward(env, n, cap, |k, _, _, mean, g| {
        means.push(mean);
        if k < n {
            pik_g.push(g);
        }
    })?;
    Ok(QuenchedMeanSeries {
        n,
        nu: env.nu(),
        means,
        pik_g,
    })
}

/// Annealed quantities of a site law.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealedParams {
    pub nu: usize,
    /// Spatial part of the velocity, `Σ z p(z)`.
    pub v_bar: [f64; MAX_NU],
    /// Spatial block of the annealed diffusion matrix.
    pub d_matrix: Vec<Vec<f64>>,
    /// `E|g|² = E|D - v̄|²`.
    pub g_norm_sq: f64,
    /// Kernel of the difference of two walkers sharing a site.
    pub q_origin: BTreeMap<Site, f64>,
    /// Kernel of the difference of two walkers on distinct sites.
    pub q_homog: BTreeMap<Site, f64>,
}

pub fn annealed_params(law: &SiteLaw) -> AnnealedParams {
    let support = &law.support;
    let nu = support.nu();
    let steps = support.steps();
    let mom = law_moments(law);
    let k = steps.len();
    // symmetrize so that both kernels come out exactly even
    let mut m = mom.m.clone();
    for i in 0..k {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    let v_bar = mom.mean_step(support);
    let centered: Vec<Vec<f64>> = steps
        .iter()
        .map(|z| (0..nu).map(|c| z.0[c] as f64 - v_bar[c]).collect())
        .collect();
    let mut d_matrix = vec![vec![0.0; nu]; nu];
    for (w, p) in centered.iter().zip(&mom.p) {
        for a in 0..nu {
            for b in 0..nu {
                d_matrix[a][b] += p * w[a] * w[b];
            }
        }
    }
    let g_norm_sq = if law.is_degenerate() {
        0.0
    } else {
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = (0..nu).map(|c| centered[i][c] * centered[j][c]).sum();
                s += dot * m[i][j];
            }
        }
        s.max(0.0)
    };
    let kernel = |weight: &dyn Fn(usize, usize) -> f64| {
        let mut q: BTreeMap<Site, f64> = BTreeMap::new();
        for i in 0..k {
            for j in 0..k {
                let y = steps[j] - steps[i];
                if y >= -y {
                    *q.entry(y).or_insert(0.0) += weight(i, j);
                }
            }
        }
        let mirrored: Vec<(Site, f64)> = q.iter().map(|(y, v)| (-*y, *v)).collect();
        q.extend(mirrored);
        q
    };
    let q_origin = kernel(&|i, j| m[i][j]);
    let q_homog = kernel(&|i, j| mom.p[i] * mom.p[j]);
    AnnealedParams {
        nu,
        v_bar,
        d_matrix,
        g_norm_sq,
        q_origin,
        q_homog,
    }
}

/// Return probabilities of the two-walker difference chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionSeries {
    /// `P(Y_k = 0)` for `k = 0..n`.
    pub return_probs: Vec<f64>,
    /// `Σ_{j ≤ k} P(Y_j = 0)`.
    pub partial_sums: Vec<f64>,
}

impl CollisionSeries {
    /// `Σ_{k < n} P(Y_k = 0)` for the full horizon.
    pub fn total(&self) -> f64 {
        *self.partial_sums.last().unwrap_or(&0.0)
    }
}

/// Exact distribution of the chain `Y_k = X_k - X̃_k` started at 0, which
/// moves with `q_origin` from 0 and with `q_homog` elsewhere.
pub fn collision_sum(params: &AnnealedParams, n: usize, cap: u64) -> Result<CollisionSeries> {
    if n == 0 {
        return Err(Error::InvalidArgument("collision sum needs n >= 1".into()));
    }
    let nu = params.nu;
    let keys: Vec<Site> = params.q_origin.keys().copied().collect();
    let q0: Vec<f64> = keys.iter().map(|y| params.q_origin[y]).collect();
    let q1: Vec<f64> = keys
        .iter()
        .map(|y| params.q_homog.get(y).copied().unwrap_or(0.0))
        .collect();
    let mut dmin = [0i64; MAX_NU];
    let mut dmax = [0i64; MAX_NU];
    for c in 0..nu {
        dmin[c] = keys.iter().map(|y| y.0[c]).min().unwrap_or(0);
        dmax[c] = keys.iter().map(|y| y.0[c]).max().unwrap_or(0);
    }
    let mut cur_box = LatticeBox::point(nu, Site::ORIGIN);
    let mut cur = vec![1.0];
    let mut return_probs = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in 0..n {
        let p0 = cur_box.index(&Site::ORIGIN).map_or(0.0, |i| cur[i]);
        acc += p0;
        return_probs.push(p0);
        partial_sums.push(acc);
        if k + 1 == n {
            break;
        }
        let next_box = grown_box("collision chain level", &cur_box, &dmin, &dmax, cap)?;
        let offsets: Vec<isize> = keys.iter().map(|y| next_box.offset(y)).collect();
        let mut next = vec![0.0; next_box.len()];
        for (x, r) in cur_box.sites().zip(&cur) {
            if *r == 0.0 {
                continue;
            }
            let q = if x == Site::ORIGIN { &q0 } else { &q1 };
            let base = next_box.index_unchecked(&x) as isize;
            for (off, p) in offsets.iter().zip(q) {
                next[(base + off) as usize] += r * p;
            }
        }
        cur = next;
        cur_box = next_box;
    }
    Ok(CollisionSeries {
        return_probs,
        partial_sums,
    })
}

/// `E|E_0^ω X_n - n v̄|²` at one horizon, estimated over environments.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct VariancePoint {
    pub n: usize,
    pub v: f64,
    pub se: f64,
}

/// Estimates `V(n)` for every `n` in `ladder` from `m_envs` environments,
/// each solved exactly by one forward recursion to the largest horizon.
pub fn variance_quenched_mean(
    law: &SiteLaw,
    master_seed: u64,
    m_envs: usize,
    ladder: &[usize],
    cap: u64,
) -> Result<Vec<VariancePoint>> {
    if m_envs < 2 {
        return Err(Error::InvalidArgument(
            "need at least two environments".into(),
        ));
    }
    let horizon = ladder.iter().copied().max().unwrap_or(0);
    if law.is_degenerate() {
        return Ok(ladder
            .iter()
            .map(|&n| VariancePoint { n, v: 0.0, se: 0.0 })
            .collect());
    }
    let base = EnvironmentView::new(law.clone(), master_seed)?;
    let v_bar = base.mean_step();
    let per_env: Vec<Vec<f64>> = (0..m_envs as u64)
        .into_par_iter()
        .map(|i| {
            let env = base.reseeded(environment_seed(master_seed, i));
            let s = quenched_mean_series(&env, horizon, cap)?;
            let norms = s.centered_norms(&v_bar);
            Ok(ladder.iter().map(|&n| norms[n] * norms[n]).collect())
        })
        .collect::<Result<_>>()?;
    Ok(ladder
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let xs: Vec<f64> = per_env.iter().map(|r| r[j]).collect();
            let m = mean_se(&xs);
            VariancePoint {
                n,
                v: m.mean,
                se: m.se,
            }
        })
        .collect())
}

/// Monte Carlo cross-check of [`variance_quenched_mean`] at one horizon.
///
/// For two walkers run independently in the same environment,
/// `E[(X_n - n v̄)·(X̃_n - n v̄)] = E|E_0^ω X_n - n v̄|²`, so averaging the
/// product over `pairs` pairs in each of `m_envs` environments is unbiased.
/// Slower and noisier than the exact recursion; meant for tests only.
pub fn variance_quenched_mean_mc(
    law: &SiteLaw,
    master_seed: u64,
    m_envs: usize,
    pairs: usize,
    n: usize,
) -> Result<VariancePoint> {
    if m_envs < 2 || pairs == 0 {
        return Err(Error::InvalidArgument(
            "need two environments and one pair each".into(),
        ));
    }
    let base = EnvironmentView::new(law.clone(), master_seed)?;
    let nu = base.nu();
    let v_bar = base.mean_step();
    let per_env: Vec<f64> = (0..m_envs as u64)
        .into_par_iter()
        .map(|i| {
            let env_seed = environment_seed(master_seed, i);
            let env = base.reseeded(env_seed);
            let mut acc = 0.0;
            for j in 0..pairs as u64 {
                let seed = derive_seed(env_seed, tag::PAIR, j);
                let (a, b) = sample_pair(
                    &env,
                    n,
                    derive_seed(seed, tag::WALK, 0),
                    derive_seed(seed, tag::WALK, 1),
                )?;
                let (xa, xb) = (a.end(), b.end());
                acc += (0..nu)
                    .map(|c| {
                        (xa.0[c] as f64 - n as f64 * v_bar[c])
                            * (xb.0[c] as f64 - n as f64 * v_bar[c])
                    })
                    .sum::<f64>();
            }
            Ok(acc / pairs as f64)
        })
        .collect::<Result<_>>()?;
    let m = mean_se(&per_env);
    Ok(VariancePoint {
        n,
        v: m.mean,
        se: m.se,
    })
}

/// `f_n(ω) = Σ_{x} P^ω_{(-n, x)}(X_n = (0, 0))`, by a backward recursion
/// from level 0 down to level `-n`.
pub fn density_f(env: &EnvironmentView, n: usize, cap: u64) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let nu = env.nu();
    let steps = env.support().steps();
    let (smin, smax) = env.support().bounds();
    let neg_max = smax.map(|c| -c);
    let neg_min = smin.map(|c| -c);
    let mut cur_box = LatticeBox::point(nu, Site::ORIGIN);
    let mut cur = vec![1.0];
    let mut pi = vec![0.0; steps.len()];
    for j in 0..n {
        let level = -(j as i64) - 1;
        let new_box = grown_box("density level", &cur_box, &neg_max, &neg_min, cap)?;
        let mut new = vec![0.0; new_box.len()];
        let sampler = env.level(level);
        for (slot, x) in new.iter_mut().zip(new_box.sites()) {
            sampler.fill(&x, &mut pi);
            let mut acc = 0.0;
            for (z, p) in steps.iter().zip(&pi) {
                if let Some(i) = cur_box.index(&(x + *z)) {
                    acc += p * cur[i];
                }
            }
            *slot = acc;
        }
        cur = new;
        cur_box = new_box;
    }
    Ok(cur.iter().sum())
}

/// Sites reachable from the origin in exactly `m` steps.
pub fn reachable_sites(
    support: &StepSupport,
    m: usize,
    cap: u64,
) -> Result<(LatticeBox, Vec<bool>)> {
    let nu = support.nu();
    let (smin, smax) = support.bounds();
    let mut b = LatticeBox::point(nu, Site::ORIGIN);
    let mut cur = vec![true];
    for _ in 0..m {
        let nb = grown_box("reachability level", &b, &smin, &smax, cap)?;
        let offsets: Vec<isize> = support.steps().iter().map(|z| nb.offset(z)).collect();
        let mut next = vec![false; nb.len()];
        for (x, r) in b.sites().zip(&cur) {
            if *r {
                let base = nb.index_unchecked(&x) as isize;
                for off in &offsets {
                    next[(base + off) as usize] = true;
                }
            }
        }
        b = nb;
        cur = next;
    }
    Ok((b, cur))
}

pub fn is_reachable(support: &StepSupport, m: usize, x: &Site, cap: u64) -> Result<bool> {
    let (b, r) = reachable_sites(support, m, cap)?;
    Ok(b.index(x).is_some_and(|i| r[i]))
}
