//! Site laws and the lazily generated space-time environment.
//!
//! A site of the space-time lattice is a pair `(level, x)` with `x ∈ Z^ν`.
//! The walk always moves from level `k` to level `k + 1`, so only the
//! spatial displacement is stored; the time coordinate is the level index.

use std::sync::Arc;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Site, MAX_NU};
use crate::rng::{tag, StreamKey};

/// Deviations of a probability vector's sum from 1 up to this size are
/// corrected silently.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Entries at or above `1 - ELLIPTIC_MARGIN` count as a sure step.
pub const ELLIPTIC_MARGIN: f64 = 1e-12;

/// The finite set of spatial displacements a step may take.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSupport", into = "RawSupport")]
pub struct StepSupport {
    nu: usize,
    steps: Vec<Site>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSupport {
    nu: usize,
    steps: Vec<Vec<i64>>,
}

impl TryFrom<RawSupport> for StepSupport {
    type Error = Error;
    fn try_from(r: RawSupport) -> Result<Self> {
        StepSupport::new(r.nu, &r.steps)
    }
}

impl From<StepSupport> for RawSupport {
    fn from(s: StepSupport) -> Self {
        RawSupport {
            nu: s.nu,
            steps: s.steps.iter().map(|z| z.to_vec(s.nu)).collect(),
        }
    }
}

impl StepSupport {
    pub fn new(nu: usize, steps: &[Vec<i64>]) -> Result<Self> {
        if nu == 0 || nu > MAX_NU {
            return Err(Error::InvalidSupport(format!(
                "dimension must be in 1..={MAX_NU}, got {nu}"
            )));
        }
        if steps.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut sites = Vec::with_capacity(steps.len());
        for s in steps {
            if s.len() != nu {
                return Err(Error::InvalidSupport(format!(
                    "step {s:?} does not have {nu} coordinates"
                )));
            }
            let site = Site::new(s)?;
            if sites.contains(&site) {
                return Err(Error::InvalidSupport(format!("duplicate step {s:?}")));
            }
            sites.push(site);
        }
        Ok(StepSupport { nu, steps: sites })
    }

    /// `±e_1, …, ±e_ν`, ordered `-e_1, +e_1, -e_2, +e_2, …`.
    pub fn nearest_neighbour(nu: usize) -> Self {
        let steps: Vec<Vec<i64>> = (0..nu)
            .flat_map(|c| {
                [-1i64, 1].into_iter().map(move |sgn| {
                    let mut v = vec![0; nu];
                    v[c] = sgn;
                    v
                })
            })
            .collect();
        StepSupport::new(nu, &steps).expect("nearest-neighbour support")
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Site] {
        &self.steps
    }

    pub fn position(&self, z: &Site) -> Option<usize> {
        self.steps.iter().position(|s| s == z)
    }

    /// Basis of the lattice spanned by the differences `z - z_0` of steps;
    /// after `n` steps the walk sits in `n z_0` plus this lattice.
    pub fn step_lattice(&self) -> Vec<Site> {
        let z0 = self.steps[0];
        let diffs: Vec<Site> = self.steps.iter().map(|&z| z - z0).collect();
        crate::lattice::integer_basis(self.nu, &diffs)
    }

    /// Coordinate-wise minimum and maximum over the steps.
    pub fn bounds(&self) -> ([i64; MAX_NU], [i64; MAX_NU]) {
        let mut lo = [0i64; MAX_NU];
        let mut hi = [0i64; MAX_NU];
        for c in 0..self.nu {
            lo[c] = self.steps.iter().map(|s| s.0[c]).min().unwrap_or(0);
            hi[c] = self.steps.iter().map(|s| s.0[c]).max().unwrap_or(0);
        }
        (lo, hi)
    }
}

/// One component of a finite mixture of fixed transition vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LawKind {
    Dirichlet { alphas: Vec<f64> },
    Mixture { components: Vec<MixtureComponent> },
    Deterministic { vector: Vec<f64> },
}

/// Distribution of the transition vector at a single site.
///
/// Serialized as a flat object, e.g.
/// `{"nu": 1, "steps": [[-1], [1]], "kind": "dirichlet", "alphas": [1, 1]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteLaw {
    #[serde(flatten)]
    pub support: StepSupport,
    #[serde(flatten)]
    pub kind: LawKind,
}

impl SiteLaw {
    pub fn dirichlet(support: StepSupport, alphas: Vec<f64>) -> Self {
        SiteLaw {
            support,
            kind: LawKind::Dirichlet { alphas },
        }
    }

    pub fn deterministic(support: StepSupport, vector: Vec<f64>) -> Self {
        SiteLaw {
            support,
            kind: LawKind::Deterministic { vector },
        }
    }

    pub fn mixture(support: StepSupport, components: Vec<MixtureComponent>) -> Self {
        SiteLaw {
            support,
            kind: LawKind::Mixture { components },
        }
    }

    /// Dirichlet(1, …, 1) on the nearest-neighbour steps.
    pub fn uniform_dirichlet(nu: usize) -> Self {
        let s = StepSupport::nearest_neighbour(nu);
        let k = s.len();
        SiteLaw::dirichlet(s, vec![1.0; k])
    }

    /// The simple symmetric walk as a (non-random) environment.
    pub fn simple_symmetric(nu: usize) -> Self {
        let s = StepSupport::nearest_neighbour(nu);
        let k = s.len();
        SiteLaw::deterministic(s, vec![1.0 / k as f64; k])
    }

    pub fn nu(&self) -> usize {
        self.support.nu()
    }

    /// True when every sampled vector is the same, so the environment carries
    /// no randomness and the centered drift vanishes identically.
    pub fn is_degenerate(&self) -> bool {
        match &self.kind {
            LawKind::Deterministic { .. } => true,
            LawKind::Dirichlet { .. } => false,
            LawKind::Mixture { components } => {
                let mut live = components.iter().filter(|c| c.weight > 0.0);
                match live.next() {
                    None => true,
                    Some(first) => live.all(|c| c.vector == first.vector),
                }
            }
        }
    }
}

fn check_vector(what: &str, v: &[f64], len: usize) -> Result<Vec<f64>> {
    if v.len() != len {
        return Err(Error::Normalization(format!(
            "{what} has {} entries, support has {len}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Normalization(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::Normalization(format!("{what} sums to {s}")));
    }
    Ok(v.iter().map(|x| x / s).collect())
}

fn is_elliptic_vector(v: &[f64]) -> bool {
    v.iter().cloned().fold(0.0, f64::max) < 1.0 - ELLIPTIC_MARGIN
}

/// Checks every invariant of a site law, including ellipticity, and returns
/// it with vectors and weights renormalized to sum to one.
pub fn validate_spec(law: SiteLaw) -> Result<SiteLaw> {
    let k = law.support.len();
    if k == 0 {
        return Err(Error::EmptySupport);
    }
    let kind = match law.kind {
        LawKind::Dirichlet { alphas } => {
            if alphas.len() != k {
                return Err(Error::Normalization(format!(
                    "{} Dirichlet parameters for {k} steps",
                    alphas.len()
                )));
            }
            if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(Error::Normalization(
                    "Dirichlet parameters must be positive".into(),
                ));
            }
            if k == 1 {
                return Err(Error::Ellipticity(
                    "a single allowed step makes every site deterministic".into(),
                ));
            }
            LawKind::Dirichlet { alphas }
        }
        LawKind::Deterministic { vector } => {
            let vector = check_vector("vector", &vector, k)?;
            if !is_elliptic_vector(&vector) {
                return Err(Error::Ellipticity(
                    "the fixed vector puts all mass on one step".into(),
                ));
            }
            LawKind::Deterministic { vector }
        }
        LawKind::Mixture { components } => {
            if components.is_empty() {
                return Err(Error::Normalization("mixture has no components".into()));
            }
            let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
            let weights = check_vector("mixture weights", &weights, components.len())?;
            let mut out = Vec::with_capacity(components.len());
            for (i, (c, w)) in components.iter().zip(weights).enumerate() {
                let vector = check_vector(&format!("component {i}"), &c.vector, k)?;
                out.push(MixtureComponent { weight: w, vector });
            }
            if !out
                .iter()
                .any(|c| c.weight > 0.0 && is_elliptic_vector(&c.vector))
            {
                return Err(Error::Ellipticity(
                    "every positively weighted component is a point mass".into(),
                ));
            }
            LawKind::Mixture { components: out }
        }
    };
    Ok(SiteLaw {
        support: law.support,
        kind,
    })
}

/// First and mixed second moments of the transition vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LawMoments {
    /// `p[z] = E π_z`.
    pub p: Vec<f64>,
    /// `m[z][z'] = E π_z π_z'`.
    pub m: Vec<Vec<f64>>,
}

impl LawMoments {
    /// Mean displacement `Σ z p(z)`.
    pub fn mean_step(&self, support: &StepSupport) -> [f64; MAX_NU] {
        let mut v = [0.0; MAX_NU];
        for (z, pz) in support.steps().iter().zip(&self.p) {
            for c in 0..support.nu() {
                v[c] += *pz * z.0[c] as f64;
            }
        }
        v
    }
}

pub fn law_moments(law: &SiteLaw) -> LawMoments {
    let k = law.support.len();
    let outer = |v: &[f64], w: f64, m: &mut Vec<Vec<f64>>| {
        for i in 0..k {
            for j in 0..k {
                m[i][j] += w * v[i] * v[j];
            }
        }
    };
    let mut m = vec![vec![0.0; k]; k];
    let p = match &law.kind {
        LawKind::Dirichlet { alphas } => {
            let a0: f64 = alphas.iter().sum();
            for i in 0..k {
                for j in 0..k {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    m[i][j] = alphas[i] * (alphas[j] + delta) / (a0 * (a0 + 1.0));
                }
            }
            alphas.iter().map(|a| a / a0).collect()
        }
        LawKind::Deterministic { vector } => {
            outer(vector, 1.0, &mut m);
            vector.clone()
        }
        LawKind::Mixture { components } => {
            let mut p = vec![0.0; k];
            for c in components {
                outer(&c.vector, c.weight, &mut m);
                for (pi, vi) in p.iter_mut().zip(&c.vector) {
                    *pi += c.weight * vi;
                }
            }
            p
        }
    };
    LawMoments { p, m }
}

#[derive(Debug)]
enum Sampler {
    Fixed(Vec<f64>),
    Mixture {
        cumulative: Vec<f64>,
        vectors: Vec<Vec<f64>>,
    },
    /// Dirichlet(1, …, 1): spacings of sorted uniforms.
    UniformSpacings(usize),
    Gamma(Vec<Gamma<f64>>, Vec<f64>),
}

impl Sampler {
    fn new(law: &SiteLaw) -> Sampler {
        match &law.kind {
            LawKind::Deterministic { vector } => Sampler::Fixed(vector.clone()),
            LawKind::Mixture { components } => {
                let mut acc = 0.0;
                let cumulative = components
                    .iter()
                    .map(|c| {
                        acc += c.weight;
                        acc
                    })
                    .collect();
                Sampler::Mixture {
                    cumulative,
                    vectors: components.iter().map(|c| c.vector.clone()).collect(),
                }
            }
            LawKind::Dirichlet { alphas } if alphas.iter().all(|&a| a == 1.0) => {
                Sampler::UniformSpacings(alphas.len())
            }
            LawKind::Dirichlet { alphas } => Sampler::Gamma(
                alphas
                    .iter()
                    .map(|&a| Gamma::new(a, 1.0).expect("validated shape"))
                    .collect(),
                alphas.clone(),
            ),
        }
    }

    #[inline]
    fn fill(&self, key: StreamKey, out: &mut [f64]) {
        match self {
            Sampler::Fixed(v) => out.copy_from_slice(v),
            Sampler::Mixture {
                cumulative,
                vectors,
            } => {
                let u = key.unit(0);
                let i = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(cumulative.len() - 1);
                out.copy_from_slice(&vectors[i]);
            }
            Sampler::UniformSpacings(k) => match *k {
                2 => {
                    let u = key.unit(0);
                    out[0] = u;
                    out[1] = 1.0 - u;
                }
                k => {
                    let mut cuts: Vec<f64> = (0..k as u64 - 1).map(|i| key.unit(i)).collect();
                    cuts.sort_by(f64::total_cmp);
                    let mut prev = 0.0;
                    for (o, c) in out.iter_mut().zip(cuts.iter().chain([1.0].iter())) {
                        *o = c - prev;
                        prev = *c;
                    }
                }
            },
            Sampler::Gamma(gammas, alphas) => {
                let mut stream = key.stream();
                let mut total = 0.0;
                for (o, g) in out.iter_mut().zip(gammas) {
                    *o = g.sample(&mut stream);
                    total += *o;
                }
                if total > 0.0 && total.is_finite() {
                    for o in out.iter_mut() {
                        *o /= total;
                    }
                } else {
                    // Every gamma draw underflowed: the vector is a vertex,
                    // chosen with probability proportional to its parameter.
                    let a0: f64 = alphas.iter().sum();
                    let mut u = key.fold(tag::SITE_PICK).unit(0) * a0;
                    let mut pick = alphas.len() - 1;
                    for (i, a) in alphas.iter().enumerate() {
                        if u < *a {
                            pick = i;
                            break;
                        }
                        u -= a;
                    }
                    out.iter_mut().for_each(|o| *o = 0.0);
                    out[pick] = 1.0;
                }
            }
        }
    }
}

#[derive(Debug)]
struct EnvCore {
    law: SiteLaw,
    sampler: Sampler,
    master_seed: u64,
    key: StreamKey,
    mean_step: [f64; MAX_NU],
    degenerate: bool,
}

/// A space-time environment drawn from the product of a site law, seen from
/// a movable origin.
///
/// Transition vectors are generated on demand from a counter-based stream
/// keyed by `(master_seed, absolute level, absolute site)`, so a view is
/// immutable, cheap to clone and can be read from many threads at once.
#[derive(Clone, Debug)]
pub struct EnvironmentView {
    core: Arc<EnvCore>,
    origin_level: i64,
    origin_site: Site,
}

impl EnvironmentView {
    pub fn new(law: SiteLaw, master_seed: u64) -> Result<Self> {
        let law = validate_spec(law)?;
        let mean_step = law_moments(&law).mean_step(&law.support);
        Ok(EnvironmentView {
            core: Arc::new(EnvCore {
                sampler: Sampler::new(&law),
                key: StreamKey::new(master_seed).fold(tag::SITE),
                degenerate: law.is_degenerate(),
                law,
                master_seed,
                mean_step,
            }),
            origin_level: 0,
            origin_site: Site::ORIGIN,
        })
    }

    /// Same law, independent environment.
    pub fn reseeded(&self, master_seed: u64) -> Self {
        EnvironmentView {
            core: Arc::new(EnvCore {
                law: self.core.law.clone(),
                sampler: Sampler::new(&self.core.law),
                master_seed,
                key: StreamKey::new(master_seed).fold(tag::SITE),
                mean_step: self.core.mean_step,
                degenerate: self.core.degenerate,
            }),
            origin_level: 0,
            origin_site: Site::ORIGIN,
        }
    }

    pub fn law(&self) -> &SiteLaw {
        &self.core.law
    }

    pub fn support(&self) -> &StepSupport {
        &self.core.law.support
    }

    pub fn nu(&self) -> usize {
        self.core.law.nu()
    }

    pub fn master_seed(&self) -> u64 {
        self.core.master_seed
    }

    /// See [`SiteLaw::is_degenerate`].
    pub fn is_degenerate(&self) -> bool {
        self.core.degenerate
    }

    pub fn origin(&self) -> (i64, Site) {
        (self.origin_level, self.origin_site)
    }

    /// Annealed mean step `v̄ = Σ z E π_z`.
    pub fn mean_step(&self) -> [f64; MAX_NU] {
        self.core.mean_step
    }

    #[inline]
    fn site_key(&self, level: i64, site: &Site) -> StreamKey {
        let mut k = self.core.key.fold_signed(self.origin_level + level);
        for c in 0..self.nu() {
            k = k.fold_signed(self.origin_site.0[c] + site.0[c]);
        }
        k
    }

    /// Writes the transition vector at `(level, site)` relative to the origin
    /// into `out` (length = number of steps).
    #[inline]
    pub fn fill_transition(&self, level: i64, site: &Site, out: &mut [f64]) {
        self.core.sampler.fill(self.site_key(level, site), out);
    }

    /// Transition vectors of one level, with the level part of the key
    /// folded once. Yields exactly what [`Self::fill_transition`] does.
    #[inline]
    pub fn level(&self, level: i64) -> LevelSampler<'_> {
        LevelSampler {
            core: &self.core,
            key: self.core.key.fold_signed(self.origin_level + level),
            origin: self.origin_site,
            nu: self.nu(),
        }
    }

    pub fn transition_vector(&self, level: i64, site: &Site) -> Vec<f64> {
        let mut out = vec![0.0; self.support().len()];
        self.fill_transition(level, site, &mut out);
        out
    }

    /// The view of `T_{(m, x)} ω`: querying `(k, y)` on the result equals
    /// querying `(k + m, y + x)` here.
    pub fn shift(&self, m: i64, x: Site) -> EnvironmentView {
        EnvironmentView {
            core: Arc::clone(&self.core),
            origin_level: self.origin_level + m,
            origin_site: self.origin_site + x,
        }
    }

    /// Mean displacement `Σ z π_z` of a given transition vector.
    #[inline]
    pub fn drift_of(&self, pi: &[f64]) -> [f64; MAX_NU] {
        let mut d = [0.0; MAX_NU];
        let nu = self.nu();
        for (z, p) in self.support().steps().iter().zip(pi) {
            for c in 0..nu {
                d[c] += p * z.0[c] as f64;
            }
        }
        d
    }

    /// Local drift `D(T_{(level, site)} ω)`.
    pub fn local_drift(&self, level: i64, site: &Site) -> [f64; MAX_NU] {
        self.drift_of(&self.transition_vector(level, site))
    }

    /// Centered drift `g = D - v̄` for a given transition vector.
    #[inline]
    pub fn centered_drift_of(&self, pi: &[f64]) -> [f64; MAX_NU] {
        if self.core.degenerate {
            return [0.0; MAX_NU];
        }
        let mut d = self.drift_of(pi);
        for (dc, vc) in d.iter_mut().zip(self.core.mean_step) {
            *dc -= vc;
        }
        d
    }
}

/// See [`EnvironmentView::level`].
pub struct LevelSampler<'a> {
    core: &'a EnvCore,
    key: StreamKey,
    origin: Site,
    nu: usize,
}

impl LevelSampler<'_> {
    #[inline]
    pub fn fill(&self, site: &Site, out: &mut [f64]) {
        let mut k = self.key;
        for c in 0..self.nu {
            k = k.fold_signed(self.origin.0[c] + site.0[c]);
        }
        self.core.sampler.fill(k, out);
    }
}

/// Convenience wrapper matching [`EnvironmentView::shift`].
pub fn shift_view(env: &EnvironmentView, m: i64, x: Site) -> EnvironmentView {
    env.shift(m, x)
}

/// Convenience wrapper matching [`EnvironmentView::transition_vector`].
pub fn transition_vector(env: &EnvironmentView, level: i64, site: &Site) -> Vec<f64> {
    env.transition_vector(level, site)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym1() -> StepSupport {
        StepSupport::nearest_neighbour(1)
    }

    #[test]
    fn validate_examples() {
        assert!(validate_spec(SiteLaw::uniform_dirichlet(1)).is_ok());
        assert!(validate_spec(SiteLaw::simple_symmetric(2)).is_ok());
        let sure = SiteLaw::deterministic(StepSupport::new(1, &[vec![1]]).unwrap(), vec![1.0]);
        assert!(matches!(validate_spec(sure), Err(Error::Ellipticity(_))));
    }

    #[test]
    fn validate_rejects_bad_vectors() {
        let bad = SiteLaw::deterministic(sym1(), vec![0.75, 0.75]);
        assert!(matches!(validate_spec(bad), Err(Error::Normalization(_))));
        let neg = SiteLaw::deterministic(sym1(), vec![1.5, -0.5]);
        assert!(matches!(validate_spec(neg), Err(Error::Normalization(_))));
        let short = SiteLaw::dirichlet(sym1(), vec![1.0]);
        assert!(matches!(validate_spec(short), Err(Error::Normalization(_))));
        let zero_alpha = SiteLaw::dirichlet(sym1(), vec![1.0, 0.0]);
        assert!(matches!(
            validate_spec(zero_alpha),
            Err(Error::Normalization(_))
        ));
        assert!(matches!(StepSupport::new(1, &[]), Err(Error::EmptySupport)));
        assert!(matches!(
            StepSupport::new(1, &[vec![1], vec![1]]),
            Err(Error::InvalidSupport(_))
        ));
    }

    #[test]
    fn validate_renormalizes_tiny_errors() {
        let law = SiteLaw::deterministic(sym1(), vec![0.5 + 4e-10, 0.5]);
        let v = validate_spec(law).unwrap();
        match v.kind {
            LawKind::Deterministic { vector } => {
                assert!((vector.iter().sum::<f64>() - 1.0).abs() < 1e-15)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mixture_ellipticity_is_analytic() {
        let s = sym1();
        let point_masses = SiteLaw::mixture(
            s.clone(),
            vec![
                MixtureComponent {
                    weight: 0.5,
                    vector: vec![1.0, 0.0],
                },
                MixtureComponent {
                    weight: 0.5,
                    vector: vec![0.0, 1.0],
                },
            ],
        );
        assert!(matches!(
            validate_spec(point_masses),
            Err(Error::Ellipticity(_))
        ));
        let one_soft = SiteLaw::mixture(
            s.clone(),
            vec![
                MixtureComponent {
                    weight: 0.0,
                    vector: vec![0.5, 0.5],
                },
                MixtureComponent {
                    weight: 1.0,
                    vector: vec![0.0, 1.0],
                },
            ],
        );
        assert!(matches!(
            validate_spec(one_soft),
            Err(Error::Ellipticity(_))
        ));
        let ok = SiteLaw::mixture(
            s,
            vec![
                MixtureComponent {
                    weight: 0.9,
                    vector: vec![1.0, 0.0],
                },
                MixtureComponent {
                    weight: 0.1,
                    vector: vec![0.3, 0.7],
                },
            ],
        );
        assert!(validate_spec(ok).is_ok());
        let heavy = SiteLaw::mixture(
            sym1(),
            vec![MixtureComponent {
                weight: 1.5,
                vector: vec![0.5, 0.5],
            }],
        );
        assert!(matches!(validate_spec(heavy), Err(Error::Normalization(_))));
    }

    #[test]
    fn moments_of_uniform_dirichlet() {
        let m = law_moments(&SiteLaw::uniform_dirichlet(1));
        assert_eq!(m.p, vec![0.5, 0.5]);
        assert!((m.m[1][1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.m[1][0] - 1.0 / 6.0).abs() < 1e-15);
        let total: f64 = m.m.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_of_fixed_vector() {
        let m = law_moments(&SiteLaw::simple_symmetric(2));
        for row in &m.m {
            for x in row {
                assert_eq!(*x, 1.0 / 16.0);
            }
        }
    }

    #[test]
    fn deterministic_env_returns_fixed_vector() {
        let env = EnvironmentView::new(SiteLaw::simple_symmetric(2), 3).unwrap();
        for lvl in [-5i64, 0, 17] {
            let v = env.transition_vector(lvl, &Site::at(&[4, -9]));
            assert_eq!(v, vec![0.25; 4]);
        }
    }

    #[test]
    fn gamma_route_sums_to_one() {
        let law = SiteLaw::dirichlet(StepSupport::nearest_neighbour(2), vec![0.5, 2.0, 1.0, 3.0]);
        let env = EnvironmentView::new(law, 11).unwrap();
        for x in -20..20 {
            let v = env.transition_vector(x, &Site::at(&[x, 2 * x]));
            assert!(v.iter().all(|p| *p >= 0.0));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_examples() {
        let env = EnvironmentView::new(SiteLaw::uniform_dirichlet(1), 42).unwrap();
        let y = Site::at(&[3]);
        assert_eq!(
            env.shift(0, Site::ORIGIN).transition_vector(5, &y),
            env.transition_vector(5, &y)
        );
        let a = env.shift(1, Site::at(&[2])).shift(2, Site::at(&[-7]));
        let b = env.shift(3, Site::at(&[-5]));
        assert_eq!(a.transition_vector(4, &y), b.transition_vector(4, &y));
        assert_eq!(
            env.shift(6, Site::at(&[-2]))
                .transition_vector(0, &Site::ORIGIN),
            env.transition_vector(6, &Site::at(&[-2]))
        );
    }

    #[test]
    fn law_round_trips_through_json() {
        let law = SiteLaw::uniform_dirichlet(2);
        let text = serde_json::to_string(&law).unwrap();
        assert!(text.contains("\"kind\":\"dirichlet\""));
        let back: SiteLaw = serde_json::from_str(&text).unwrap();
        assert_eq!(back, law);
        let mix: SiteLaw = serde_json::from_str(
            r#"{"nu":1,"steps":[[-1],[1]],"kind":"mixture",
                "components":[{"weight":0.5,"vector":[0.2,0.8]},{"weight":0.5,"vector":[0.8,0.2]}]}"#,
        )
        .unwrap();
        assert!(validate_spec(mix).is_ok());
    }
}
