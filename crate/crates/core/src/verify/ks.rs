//! One-sample Kolmogorov–Smirnov test against the standard normal.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// `D_N = sup |F_N - Φ|` and its asymptotic p-value.
///
/// The p-value is `Q(λ)` with Stephens' small-sample correction
/// `λ = (√N + 0.12 + 0.11/√N) D_N`. For `λ ≥ 1` it uses the alternating
/// series `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`; for `λ < 1` it uses
/// the dual form `1 - Q(λ) = (√(2π)/λ) Σ_{k≥1} exp(-(2k-1)²π²/(8λ²))`,
/// which converges fast there. Either sum stops once a term drops below
/// `1e-17` or after 100 terms.
pub fn ks_normal_test(samples: &[f64]) -> Result<KsResult> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("NaN sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let phi = Normal::standard();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = phi.cdf(*x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ok(KsResult {
        n,
        statistic: d,
        p_value: kolmogorov_q(((nf).sqrt() + 0.12 + 0.11 / nf.sqrt()) * d),
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=100 {
            let t = (((2 * k - 1) as f64).powi(2) * c).exp();
            s += t;
            if t < 1e-17 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let t = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += sign * t;
        sign = -sign;
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_forms_agree_near_one() {
        // both branches evaluated at the switch point
        let a = {
            let lambda: f64 = 1.0 - 1e-12;
            kolmogorov_q(lambda)
        };
        let b = kolmogorov_q(1.0);
        assert!((a - b).abs() < 1e-9);
        // tabulated: Q(1.36) ≈ 0.0494, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 3e-4);
    }

    #[test]
    fn perfect_quantiles() {
        let phi = Normal::standard();
        let xs: Vec<f64> = (1..=1000)
            .map(|i| phi.inverse_cdf(i as f64 / 1001.0))
            .collect();
        let r = ks_normal_test(&xs).unwrap();
        assert!(r.statistic < 0.01);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn constant_rejected() {
        let r = ks_normal_test(&[0.3; 100]).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn too_few() {
        assert_eq!(
            ks_normal_test(&[0.0; 19]).unwrap_err(),
            Error::InsufficientSamples {
                needed: 20,
                got: 19
            }
        );
    }

    #[test]
    fn calibration() {
        let mut rejections = 0;
        for rep in 0..100u64 {
            let mut rng = rand::rngs::StdRng::seed_from_u64(rep);
            let xs: Vec<f64> = (0..10_000)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            if ks_normal_test(&xs).unwrap().p_value <= 0.001 {
                rejections += 1;
            }
        }
        assert!(rejections <= 1, "{rejections} rejections");
    }
}
