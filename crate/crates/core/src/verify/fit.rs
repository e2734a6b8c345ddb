//! Least-squares exponent fits on log-log axes.

use serde::Serialize;

/// Fits with `r²` below this lose their smallest-`n` point once.
pub const R_SQUARED_FLOOR: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitPoint {
    pub n: f64,
    pub value: f64,
    pub se: f64,
}

impl FitPoint {
    pub fn new(n: impl Into<f64>, value: f64, se: f64) -> Self {
        FitPoint {
            n: n.into(),
            value,
            se,
        }
    }
}

/// Slope of `log value` against `log n`. Points with `value ≤ 0` are
/// excluded; with fewer than two usable points the fit is `degenerate` and
/// slope, intercept and `r²` are NaN.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub points: Vec<FitPoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    pub dropped: Option<FitPoint>,
    pub degenerate: bool,
}

struct Ols {
    slope: f64,
    slope_se: f64,
    intercept: f64,
    r_squared: f64,
}

fn ols(pts: &[(f64, f64)]) -> Ols {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = if pts.len() > 2 {
        (ssr / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ssr / syy };
    Ols {
        slope,
        slope_se,
        intercept,
        r_squared,
    }
}

pub fn fit_exponent(points: Vec<FitPoint>) -> ExponentFit {
    let mut usable: Vec<FitPoint> = points
        .iter()
        .copied()
        .filter(|p| p.value > 0.0 && p.n > 0.0 && p.value.is_finite())
        .collect();
    usable.sort_by(|a, b| a.n.total_cmp(&b.n));
    let distinct =
        usable.windows(2).filter(|w| w[0].n != w[1].n).count() + usize::from(!usable.is_empty());
    if distinct < 2 {
        return ExponentFit {
            points,
            slope: f64::NAN,
            slope_se: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            used: usable.len(),
            dropped: None,
            degenerate: true,
        };
    }
    let logs = |ps: &[FitPoint]| -> Vec<(f64, f64)> {
        ps.iter().map(|p| (p.n.ln(), p.value.ln())).collect()
    };
    let mut fit = ols(&logs(&usable));
    let mut dropped = None;
    if fit.r_squared < R_SQUARED_FLOOR && usable.len() >= 4 {
        dropped = Some(usable.remove(0));
        fit = ols(&logs(&usable));
    }
    ExponentFit {
        points,
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        used: usable.len(),
        dropped,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts = (4..10).map(|j| {
            let n = (1u64 << j) as f64;
            FitPoint::new(n, 3.0 * n.powf(0.25), 0.0)
        });
        let f = fit_exponent(pts.collect());
        assert!((f.slope - 0.25).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.r_squared > 1.0 - 1e-12);
        assert!(f.dropped.is_none());
    }

    #[test]
    fn zeros_are_degenerate() {
        let f = fit_exponent(vec![
            FitPoint::new(2.0, 0.0, 0.0),
            FitPoint::new(4.0, 0.0, 0.0),
        ]);
        assert!(f.degenerate && f.slope.is_nan());
    }

    #[test]
    fn bad_first_point_dropped() {
        let mut pts: Vec<FitPoint> = (1..6)
            .map(|j| FitPoint::new((1u64 << (2 * j)) as f64, 1.0 + 0.01 * j as f64, 0.0))
            .collect();
        pts[0].value = 1e-6;
        let f = fit_exponent(pts);
        assert_eq!(f.dropped.unwrap().n, 4.0);
        assert_eq!(f.used, 4);
        assert!(f.slope.abs() < 0.05);
    }
}
