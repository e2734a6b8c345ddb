//! Quenched, annealed and paired walks, and their diffusive rescaling.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentView, StepSupport};
use crate::error::{Error, Result};
use crate::lattice::{Site, MAX_NU};
use crate::rng::{derive_seed, tag, StreamKey};

/// A walk of `n` steps in spatial coordinates; position `k` sits on level `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub n: usize,
    pub steps: Vec<usize>,
    pub positions: Vec<Site>,
    pub replica_seed: u64,
}

impl Path {
    pub fn end(&self) -> Site {
        self.positions[self.n]
    }
}

/// Inverse-CDF choice of a step index for a uniform `u ∈ [0, 1)`.
#[inline]
pub fn pick_step(pi: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in pi.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

fn walk_key(replica_seed: u64) -> StreamKey {
    StreamKey::new(replica_seed).fold(tag::WALK)
}

fn require_steps(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("a path needs n >= 1 steps".into()));
    }
    Ok(())
}

/// Runs the quenched walk, calling `visit(k, position_k)` for `k = 0..=n`.
fn run_walk(
    env: &EnvironmentView,
    n: usize,
    replica_seed: u64,
    mut visit: impl FnMut(usize, usize, Site),
) {
    let key = walk_key(replica_seed);
    let steps = env.support().steps();
    let mut pi = vec![0.0; steps.len()];
    let mut x = Site::ORIGIN;
    for k in 0..n {
        env.fill_transition(k as i64, &x, &mut pi);
        let i = pick_step(&pi, key.unit(k as u64));
        visit(k, i, x);
        x = x + steps[i];
    }
    visit(n, usize::MAX, x);
}

/// One path of the walk in the fixed environment `env`. Step `k` uses draw
/// `k` of the replica stream, independent of the position.
pub fn sample_path(env: &EnvironmentView, n: usize, replica_seed: u64) -> Result<Path> {
    require_steps(n)?;
    let mut steps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n + 1);
    run_walk(env, n, replica_seed, |_, i, x| {
        positions.push(x);
        if i != usize::MAX {
            steps.push(i);
        }
    });
    Ok(Path {
        n,
        steps,
        positions,
        replica_seed,
    })
}

/// Positions of the same walk as [`sample_path`] at selected times only,
/// without storing the whole path. `times` may be in any order.
pub fn sample_checkpoints(
    env: &EnvironmentView,
    n: usize,
    replica_seed: u64,
    times: &[usize],
) -> Result<Vec<Site>> {
    require_steps(n)?;
    if let Some(&t) = times.iter().find(|&&t| t > n) {
        return Err(Error::Index {
            index: t,
            len: n + 1,
        });
    }
    let mut want = vec![None; n + 1];
    for (slot, &t) in times.iter().enumerate() {
        want[t] = Some(slot);
    }
    let mut out = vec![Site::ORIGIN; times.len()];
    run_walk(env, n, replica_seed, |k, _, x| {
        if want[k].is_some() {
            for (slot, &t) in times.iter().enumerate() {
                if t == k {
                    out[slot] = x;
                }
            }
        }
    });
    Ok(out)
}

/// Two walkers driven by the same environment with their own randomness.
pub fn sample_pair(
    env: &EnvironmentView,
    n: usize,
    seed_a: u64,
    seed_b: u64,
) -> Result<(Path, Path)> {
    if seed_a == seed_b {
        return Err(Error::SeedCollision(seed_a));
    }
    Ok((sample_path(env, n, seed_a)?, sample_path(env, n, seed_b)?))
}

/// Seed of replica `i` in a batch.
pub fn replica_seed(batch_seed: u64, i: u64) -> u64 {
    derive_seed(batch_seed, tag::REPLICA, i)
}

/// `count` independent replicas in one environment, in replica order.
pub fn sample_batch(
    env: &EnvironmentView,
    n: usize,
    count: usize,
    batch_seed: u64,
) -> Result<Vec<Path>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "batch needs at least one replica".into(),
        ));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_path(env, n, replica_seed(batch_seed, i)))
        .collect()
}

/// Homogeneous walk with i.i.d. steps of law `p`, the annealed walk.
pub fn annealed_path(support: &StepSupport, p: &[f64], n: usize, seed: u64) -> Result<Path> {
    require_steps(n)?;
    if p.len() != support.len()
        || p.iter().any(|x| *x < 0.0)
        || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Normalization(
            "annealed step law is not a probability vector".into(),
        ));
    }
    let key = walk_key(seed);
    let mut x = Site::ORIGIN;
    let mut steps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(x);
    for k in 0..n {
        let i = pick_step(p, key.unit(k as u64));
        x = x + support.steps()[i];
        steps.push(i);
        positions.push(x);
    }
    Ok(Path {
        n,
        steps,
        positions,
        replica_seed: seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringKind {
    Deterministic,
    Quenched,
}

/// What is subtracted from `X_k` before scaling.
#[derive(Clone, Debug, PartialEq)]
pub enum Centering {
    /// `k · v̄` with the annealed mean step.
    Deterministic([f64; MAX_NU]),
    /// The quenched means `E_0^ω X_k`, indexed by `k`.
    Quenched(Vec<[f64; MAX_NU]>),
}

impl Centering {
    pub fn kind(&self) -> CenteringKind {
        match self {
            Centering::Deterministic(_) => CenteringKind::Deterministic,
            Centering::Quenched(_) => CenteringKind::Quenched,
        }
    }

    pub fn at(&self, k: usize) -> Result<[f64; MAX_NU]> {
        match self {
            Centering::Deterministic(v) => Ok(v.map(|c| c * k as f64)),
            Centering::Quenched(means) => means.get(k).copied().ok_or(Error::Index {
                index: k,
                len: means.len(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledPath {
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub centering: CenteringKind,
}

/// Index `[n t]` used for time `t`.
pub fn grid_index(n: usize, t: f64) -> usize {
    (n as f64 * t).floor() as usize
}

/// `(X_k - c_k) / √n` for one position.
pub fn scale_value(
    nu: usize,
    n: usize,
    x: &Site,
    k: usize,
    centering: &Centering,
) -> Result<Vec<f64>> {
    let c = centering.at(k)?;
    let s = (n as f64).sqrt();
    Ok((0..nu).map(|i| (x.0[i] as f64 - c[i]) / s).collect())
}

/// The rescaled path `B_n(t)` (or its quenched-centered variant) on `t_grid`.
pub fn scale_path(
    path: &Path,
    nu: usize,
    t_grid: &[f64],
    centering: &Centering,
) -> Result<ScaledPath> {
    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "grid time {t} outside [0, 1]"
            )));
        }
        let k = grid_index(path.n, t);
        let mut v = scale_value(nu, path.n, &path.positions[k], k, centering)?;
        if k == 0 {
            // X_0 = 0 and every centering vanishes at time zero.
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        values.push(v);
    }
    Ok(ScaledPath {
        t_grid: t_grid.to_vec(),
        values,
        centering: centering.kind(),
    })
}

/// CSV dump with columns `replica,k,x_1..x_nu`.
pub fn write_paths_csv<W: Write>(mut w: W, nu: usize, paths: &[Path]) -> io::Result<()> {
    write!(w, "replica,k")?;
    for c in 1..=nu {
        write!(w, ",x_{c}")?;
    }
    writeln!(w)?;
    for (r, p) in paths.iter().enumerate() {
        for (k, x) in p.positions.iter().enumerate() {
            write!(w, "{r},{k}")?;
            for c in 0..nu {
                write!(w, ",{}", x.0[c])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SiteLaw;

    fn fair_coin() -> EnvironmentView {
        let s = StepSupport::new(1, &[vec![1], vec![-1]]).unwrap();
        EnvironmentView::new(SiteLaw::deterministic(s, vec![0.5, 0.5]), 0).unwrap()
    }

    #[test]
    fn pick_step_is_inverse_cdf() {
        let pi = [0.25, 0.0, 0.75];
        assert_eq!(pick_step(&pi, 0.0), 0);
        assert_eq!(pick_step(&pi, 0.2499), 0);
        assert_eq!(pick_step(&pi, 0.25), 2);
        assert_eq!(pick_step(&pi, 0.999_999_999), 2);
        // rounding past the last positive entry never selects a zero entry
        assert_eq!(pick_step(&[0.5, 0.5, 0.0], 1.0), 1);
    }

    #[test]
    fn annealed_point_mass_is_deterministic() {
        let s = StepSupport::new(1, &[vec![1], vec![-1]]).unwrap();
        let p = annealed_path(&s, &[1.0, 0.0], 5, 77).unwrap();
        let xs: Vec<i64> = p.positions.iter().map(|x| x.0[0]).collect();
        assert_eq!(xs, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let env = fair_coin();
        let a = sample_path(&env, 50, 9).unwrap();
        let b = sample_path(&env, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positions.len(), 51);
        for k in 0..50 {
            assert_eq!(
                a.positions[k + 1],
                a.positions[k] + env.support().steps()[a.steps[k]]
            );
        }
    }

    #[test]
    fn checkpoints_agree_with_full_path() {
        let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(2), 5).unwrap();
        let p = sample_path(&env, 40, 123).unwrap();
        let c = sample_checkpoints(&env, 40, 123, &[40, 0, 13]).unwrap();
        assert_eq!(c, vec![p.positions[40], p.positions[0], p.positions[13]]);
    }

    #[test]
    fn batch_of_one_is_a_single_path() {
        let env = fair_coin();
        let b = sample_batch(&env, 10, 1, 4).unwrap();
        assert_eq!(b[0], sample_path(&env, 10, replica_seed(4, 0)).unwrap());
    }

    #[test]
    fn pair_rejects_equal_seeds() {
        let env = fair_coin();
        assert_eq!(sample_pair(&env, 3, 1, 1), Err(Error::SeedCollision(1)));
    }

    #[test]
    fn scaling_examples() {
        let s = StepSupport::nearest_neighbour(1);
        let positions: Vec<Site> = [0, 1, 2, 1, 2].iter().map(|&x| Site::at(&[x])).collect();
        let path = Path {
            n: 4,
            steps: vec![1, 1, 0, 1],
            positions,
            replica_seed: 0,
        };
        let zero = Centering::Deterministic([0.0; MAX_NU]);
        let sp = scale_path(&path, 1, &[0.0, 1.0], &zero).unwrap();
        assert_eq!(sp.values, vec![vec![0.0], vec![1.0]]);
        let short = Centering::Quenched(vec![[0.0; MAX_NU]; 3]);
        assert!(matches!(
            scale_path(&path, 1, &[1.0], &short),
            Err(Error::Index { .. })
        ));
        let _ = s;
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let env = fair_coin();
        let paths = sample_batch(&env, 2, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, 1, &paths).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replica,k,x_1");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("0,0,0"));
    }
}
