//! Per-study log odds ratios, heterogeneity estimators and pooled intervals.

use crate::datagen::StudyData;
use crate::quantile;
use crate::Error;

/// When to add the 0.5 continuity increment to all four cells of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionPolicy {
    /// Correct a study if and only if one of its cells is zero.
    #[default]
    OnZero,
    Always,
    None,
}

impl CorrectionPolicy {
    pub fn label(self) -> &'static str {
        match self {
            CorrectionPolicy::OnZero => "on-zero",
            CorrectionPolicy::Always => "always",
            CorrectionPolicy::None => "none",
        }
    }
}

impl std::str::FromStr for CorrectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "on-zero" | "on_zero" | "onzero" => Ok(CorrectionPolicy::OnZero),
            "always" => Ok(CorrectionPolicy::Always),
            "none" => Ok(CorrectionPolicy::None),
            _ => Err(format!(
                "unknown correction policy `{s}` (expected on-zero, always or none)"
            )),
        }
    }
}

/// Study-level effect and variance after continuity handling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySummary {
    pub lor: f64,
    pub var: f64,
    pub n_c: u32,
    pub n_t: u32,
    pub corrected: bool,
}

/// Pooled estimate of one method: heterogeneity, midpoint, spread, interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaEstimate {
    pub method: &'static str,
    pub tau2: f64,
    pub theta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetaEstimate {
    pub fn covers(&self, theta: f64) -> bool {
        self.ci_low <= theta && theta <= self.ci_high
    }
}

/// Log odds ratio ln(ad/bc) and its variance 1/a + 1/b + 1/c + 1/d, with
/// a = x_T, b = n_T - x_T, c = x_C, d = n_C - x_C. Studies with zero cells
/// are corrected per policy, never dropped.
pub fn study_lor(study: &StudyData, policy: CorrectionPolicy) -> StudySummary {
    let a = f64::from(study.x_t);
    let b = f64::from(study.n_t - study.x_t);
    let c = f64::from(study.x_c);
    let d = f64::from(study.n_c - study.x_c);
    let any_zero = a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0;
    let add = match policy {
        CorrectionPolicy::Always => 0.5,
        CorrectionPolicy::OnZero if any_zero => 0.5,
        _ => 0.0,
    };
    let (a, b, c, d) = (a + add, b + add, c + add, d + add);
    StudySummary {
        lor: ((a * d) / (b * c)).ln(),
        var: 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d,
        n_c: study.n_c,
        n_t: study.n_t,
        corrected: add > 0.0,
    }
}

fn require_studies(summaries: &[StudySummary], need: usize) -> Result<(), Error> {
    if summaries.len() < need {
        return Err(Error::TooFewStudies { need, got: summaries.len() });
    }
    Ok(())
}

/// Q(tau2) = sum_i w_i (lor_i - pooled)^2 with w_i = 1/(var_i + tau2).
pub fn generalized_q(summaries: &[StudySummary], tau2: f64) -> Result<f64, Error> {
    require_studies(summaries, 2)?;
    let mut w_sum = 0.0;
    let mut wl_sum = 0.0;
    for s in summaries {
        let w = 1.0 / (s.var + tau2);
        w_sum += w;
        wl_sum += w * s.lor;
    }
    let pooled = wl_sum / w_sum;
    let mut q = 0.0;
    for s in summaries {
        let w = 1.0 / (s.var + tau2);
        let d = s.lor - pooled;
        q += w * d * d;
    }
    Ok(q)
}

/// DerSimonian-Laird moment estimator, truncated at zero.
pub fn tau2_dl(summaries: &[StudySummary]) -> Result<f64, Error> {
    let q = generalized_q(summaries, 0.0)?;
    let k = summaries.len() as f64;
    let mut w_sum = 0.0;
    let mut w2_sum = 0.0;
    for s in summaries {
        let w = 1.0 / s.var;
        w_sum += w;
        w2_sum += w * w;
    }
    let denom = w_sum - w2_sum / w_sum;
    Ok(((q - (k - 1.0)) / denom).max(0.0))
}

const MP_TOL: f64 = 1e-8;
const MP_RESIDUAL: f64 = 1e-7;

/// Mandel-Paule estimator: the root of Q(tau2) = K - 1, or 0 when
/// Q(0) <= K - 1. Bisection on a geometrically grown bracket, refined until
/// the bracket is below 1e-8 and the Q residual is below 1e-7.
pub fn tau2_mp(summaries: &[StudySummary]) -> Result<f64, Error> {
    let target = summaries.len() as f64 - 1.0;
    let q0 = generalized_q(summaries, 0.0)?;
    if q0 <= target {
        return Ok(0.0);
    }
    // Q is strictly decreasing here, so the root is unique
    let mut lo = 0.0;
    let mut hi = 1.0;
    while generalized_q(summaries, hi)? >= target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..500 {
        mid = 0.5 * (lo + hi);
        let q = generalized_q(summaries, mid)?;
        if hi - lo < MP_TOL && (q - target).abs() < MP_RESIDUAL {
            break;
        }
        if hi - lo < f64::EPSILON * mid.max(1.0) {
            break;
        }
        if q > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

const REML_MAX_ITER: u32 = 200;
const REML_CONVERGED: f64 = 1e-8;
const REML_REFINE: f64 = 1e-10;

/// REML fixed-point result. `converged` reports whether the step size fell
/// below 1e-8 within the iteration cap; the last iterate is returned either way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemlEstimate {
    pub tau2: f64,
    pub converged: bool,
    pub iterations: u32,
}

/// Restricted maximum likelihood via fixed-point iteration
/// tau2 <- max(0, sum w^2 [(lor - pooled)^2 - var] / sum w^2 + 1 / sum w),
/// started from the DL estimate.
pub fn tau2_reml(summaries: &[StudySummary]) -> Result<RemlEstimate, Error> {
    require_studies(summaries, 2)?;
    let mut tau2 = tau2_dl(summaries)?;
    let mut best_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < REML_MAX_ITER {
        iterations += 1;
        let mut w_sum = 0.0;
        let mut wl_sum = 0.0;
        for s in summaries {
            let w = 1.0 / (s.var + tau2);
            w_sum += w;
            wl_sum += w * s.lor;
        }
        let pooled = wl_sum / w_sum;
        let mut num = 0.0;
        let mut w2_sum = 0.0;
        for s in summaries {
            let w = 1.0 / (s.var + tau2);
            let d = s.lor - pooled;
            num += w * w * (d * d - s.var);
            w2_sum += w * w;
        }
        let next = (num / w2_sum + 1.0 / w_sum).max(0.0);
        let step = (next - tau2).abs();
        tau2 = next;
        best_step = step;
        if step < REML_REFINE {
            break;
        }
    }
    Ok(RemlEstimate { tau2, converged: best_step < REML_CONVERGED, iterations })
}

/// Inverse-variance pooled effect with weights 1/(var_i + tau2); returns the
/// midpoint and its standard error (sum of weights)^(-1/2).
pub fn pooled_theta_iv(summaries: &[StudySummary], tau2: f64) -> Result<(f64, f64), Error> {
    require_studies(summaries, 1)?;
    let mut w_sum = 0.0;
    let mut wl_sum = 0.0;
    for s in summaries {
        let w = 1.0 / (s.var + tau2);
        w_sum += w;
        wl_sum += w * s.lor;
    }
    Ok((wl_sum / w_sum, w_sum.powf(-0.5)))
}

fn ssw_weight(s: &StudySummary) -> f64 {
    let nc = s.n_c as f64;
    let nt = s.n_t as f64;
    nc * nt / (nc + nt)
}

/// Pooled effect weighted by effective sample size n_C n_T / (n_C + n_T);
/// ignores the estimated variances entirely.
pub fn theta_ssw(summaries: &[StudySummary]) -> Result<f64, Error> {
    require_studies(summaries, 1)?;
    let mut w_sum = 0.0;
    let mut wl_sum = 0.0;
    for s in summaries {
        let w = ssw_weight(s);
        w_sum += w;
        wl_sum += w * s.lor;
    }
    Ok(wl_sum / w_sum)
}

/// Wald interval theta +- z * se with a standard normal critical value.
pub fn ci_normal(theta: f64, se: f64, level: f64) -> Result<(f64, f64), Error> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let z = quantile::normal_quantile(0.5 * (1.0 + level));
    Ok((theta - z * se, theta + z * se))
}

/// Sample-size-weighted interval: midpoint theta_SSW, variance
/// sum w_i^2 (var_i + tau2_plugin) / (sum w_i)^2, critical value from
/// Student's t on K - 1 degrees of freedom.
pub fn ci_ssw(
    summaries: &[StudySummary],
    tau2_plugin: f64,
    level: f64,
) -> Result<(f64, f64), Error> {
    require_studies(summaries, 2)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let mid = theta_ssw(summaries)?;
    let se = ssw_se(summaries, tau2_plugin);
    let t = quantile::t_quantile(summaries.len() as f64 - 1.0, 0.5 * (1.0 + level));
    Ok((mid - t * se, mid + t * se))
}

fn ssw_se(summaries: &[StudySummary], tau2_plugin: f64) -> f64 {
    let mut w_sum = 0.0;
    let mut num = 0.0;
    for s in summaries {
        let w = ssw_weight(s);
        w_sum += w;
        num += w * w * (s.var + tau2_plugin);
    }
    (num / (w_sum * w_sum)).sqrt()
}

/// Inverse-variance estimate packaged with its Wald interval.
pub fn meta_estimate_iv(
    summaries: &[StudySummary],
    tau2: f64,
    method: &'static str,
    level: f64,
) -> Result<MetaEstimate, Error> {
    let (theta, se) = pooled_theta_iv(summaries, tau2)?;
    let (ci_low, ci_high) = ci_normal(theta, se, level)?;
    Ok(MetaEstimate { method, tau2, theta, se, ci_low, ci_high })
}

/// Sample-size-weighted estimate with its t interval; `tau2` records the
/// plug-in value used for the interval.
pub fn meta_estimate_ssw(
    summaries: &[StudySummary],
    tau2_plugin: f64,
    level: f64,
) -> Result<MetaEstimate, Error> {
    let theta = theta_ssw(summaries)?;
    let se = ssw_se(summaries, tau2_plugin);
    let (ci_low, ci_high) = ci_ssw(summaries, tau2_plugin, level)?;
    Ok(MetaEstimate { method: "ssw", tau2: tau2_plugin, theta, se, ci_low, ci_high })
}
