//! Small order-fixed reductions shared by the estimators.

use serde::Serialize;

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

/// Mean and standard error of the mean, summed in slice order.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

/// Sample covariance (divisor `N - 1`) of a list of vectors.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    cov.iter_mut().flatten().for_each(|c| *c /= denom);
    cov
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn frobenius_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// z-score of `a - b` with independent standard errors; 0 when both the
/// difference and the errors vanish.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let d = a - b;
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(d)
        }
    } else {
        d / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basic() {
        let m = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn z_score_degenerate() {
        assert_eq!(z_score(0.0, 0.0, 0.0, 0.0), 0.0);
        assert!(z_score(1.0, 0.0, 0.0, 0.0).is_infinite());
    }

    #[test]
    fn covariance_of_axis_points() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let c = covariance(&rows);
        assert!((c[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[0][1], 0.0);
    }
}
