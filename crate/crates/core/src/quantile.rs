//! Normal and Student t quantiles, polished to a CDF residual below 1e-8.

use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

/// Inverse CDF of the standard normal.
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    polish(dist.inverse_cdf(p), p, |x| dist.cdf(x), |x| dist.pdf(x))
}

/// Inverse CDF of Student's t with `df` degrees of freedom.
pub fn t_quantile(df: f64, p: f64) -> f64 {
    debug_assert!(df > 0.0 && p > 0.0 && p < 1.0);
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid df");
    polish(dist.inverse_cdf(p), p, |x| dist.cdf(x), |x| dist.pdf(x))
}

// One or two Newton steps on the CDF residual; bails out when the density is
// too small to divide by.
fn polish(mut x: f64, p: f64, cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..2 {
        let resid = cdf(x) - p;
        if resid.abs() < 1e-14 {
            break;
        }
        let d = pdf(x);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        x -= resid / d;
    }
    x
}
