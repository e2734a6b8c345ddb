//! The statistical building blocks on their own: a Kolmogorov–Smirnov test
//! against N(0, 1) and a log-log exponent fit.

use rand::{rngs::StdRng, SeedableRng};
use rand_distr::{Distribution, Exp, StandardNormal};
use rwre_lab::verify::{fit_exponent, ks_normal_test, FitPoint};

fn main() -> rwre_lab::Result<()> {
    let mut rng = StdRng::seed_from_u64(1);
    let normal: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let skewed: Vec<f64> = (0..5000)
        .map(|_| Exp::new(1.0).unwrap().sample(&mut rng) - 1.0)
        .collect();
    for (name, xs) in [("normal", &normal), ("centred exponential", &skewed)] {
        let k = ks_normal_test(xs)?;
        println!("{name:>20}: D = {:.4}, p = {:.3e}", k.statistic, k.p_value);
    }

    let points = [16.0, 64.0, 256.0, 1024.0]
        .iter()
        .map(|&n: &f64| FitPoint::new(n, 3.0 * n.powf(0.25), 0.0))
        .collect();
    let fit = fit_exponent(points);
    println!(
        "exponent of 3 n^(1/4): {:.6} (r² {:.6})",
        fit.slope, fit.r_squared
    );
    Ok(())
}
