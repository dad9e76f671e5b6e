//! Study sample-size generation and moment helpers.
//!
//! Three regimes share one `center` parameter n: a degenerate constant,
//! Normal(n, 1.21 n^2 / 12) rounded and clamped below at 10, and
//! Uniform(0.45 n, 1.55 n) rounded. The two random regimes share the same
//! nominal coefficient of variation sqrt(1.21/12) ~ 0.3175.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::ContinuousCDF;

use crate::Error;

/// Smallest size a draw can produce; smaller values are clamped up.
pub const SIZE_FLOOR: u32 = 10;

/// Var(N) / E(N)^2 for both random kinds, before rounding and clamping.
const VARIANCE_RATIO: f64 = 1.21 / 12.0;

/// Half-width of the uniform kind as a fraction of the center.
const UNIFORM_HALF_SPAN: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeKind {
    Constant,
    TruncatedNormal,
    Uniform,
}

impl SizeKind {
    pub const ALL: [SizeKind; 3] = [SizeKind::Constant, SizeKind::TruncatedNormal, SizeKind::Uniform];

    pub fn label(self) -> &'static str {
        match self {
            SizeKind::Constant => "constant",
            SizeKind::TruncatedNormal => "truncated-normal",
            SizeKind::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for SizeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(SizeKind::Constant),
            "truncated-normal" | "truncated_normal" => Ok(SizeKind::TruncatedNormal),
            "uniform" => Ok(SizeKind::Uniform),
            _ => Err(format!(
                "unknown size kind `{s}` (expected constant, truncated-normal or uniform)"
            )),
        }
    }
}

/// Nominal (pre-rounding, pre-clamping) moments of a size distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeMoments {
    pub mean: f64,
    pub variance: f64,
    pub cv: f64,
}

/// Per-study sample-size distribution. Both arms of a study share one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleSizeSpec {
    kind: SizeKind,
    center: u32,
}

impl SampleSizeSpec {
    /// The center must sit at or above the clamp floor.
    pub fn new(kind: SizeKind, center: u32) -> Result<Self, Error> {
        if center < SIZE_FLOOR {
            return Err(Error::CenterTooSmall { got: center });
        }
        Ok(Self { kind, center })
    }

    pub fn constant(center: u32) -> Result<Self, Error> {
        Self::new(SizeKind::Constant, center)
    }

    pub fn truncated_normal(center: u32) -> Result<Self, Error> {
        Self::new(SizeKind::TruncatedNormal, center)
    }

    pub fn uniform(center: u32) -> Result<Self, Error> {
        Self::new(SizeKind::Uniform, center)
    }

    pub fn kind(&self) -> SizeKind {
        self.kind
    }

    pub fn center(&self) -> u32 {
        self.center
    }

    /// Same distribution shape around a different center.
    pub fn with_kind(&self, kind: SizeKind) -> SampleSizeSpec {
        SampleSizeSpec { kind, center: self.center }
    }

    /// One size draw: real value, rounded half away from zero, clamped at the floor.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self.kind {
            SizeKind::Constant => self.center,
            _ => {
                let rounded = self.draw_raw(rng).round();
                if rounded < SIZE_FLOOR as f64 {
                    SIZE_FLOOR
                } else {
                    rounded as u32
                }
            }
        }
    }

    /// The underlying real draw before rounding and clamping. Constant specs
    /// return the center exactly and consume no randomness.
    pub fn draw_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = self.center as f64;
        match self.kind {
            SizeKind::Constant => c,
            SizeKind::TruncatedNormal => {
                let normal = Normal::new(c, c * VARIANCE_RATIO.sqrt()).expect("positive sd");
                normal.sample(rng)
            }
            SizeKind::Uniform => {
                rng.gen_range(c * (1.0 - UNIFORM_HALF_SPAN)..c * (1.0 + UNIFORM_HALF_SPAN))
            }
        }
    }

    /// Nominal moments; rounding and clamping are not reflected here.
    pub fn moments(&self) -> SizeMoments {
        let c = self.center as f64;
        match self.kind {
            SizeKind::Constant => SizeMoments { mean: c, variance: 0.0, cv: 0.0 },
            SizeKind::TruncatedNormal | SizeKind::Uniform => SizeMoments {
                mean: c,
                variance: VARIANCE_RATIO * c * c,
                cv: VARIANCE_RATIO.sqrt(),
            },
        }
    }

    /// Probability that the un-truncated real draw is negative. Constant and
    /// uniform kinds have no mass below zero and return 0.
    pub fn negative_tail_probability(&self) -> f64 {
        match self.kind {
            SizeKind::TruncatedNormal => standard_normal_cdf(-1.0 / VARIANCE_RATIO.sqrt()),
            _ => 0.0,
        }
    }

    /// Probability that the real draw falls below the clamp floor.
    pub fn truncation_probability(&self) -> f64 {
        let c = self.center as f64;
        let floor = SIZE_FLOOR as f64;
        match self.kind {
            SizeKind::Constant => 0.0,
            SizeKind::TruncatedNormal => {
                standard_normal_cdf((floor - c) / (c * VARIANCE_RATIO.sqrt()))
            }
            SizeKind::Uniform => {
                let lo = c * (1.0 - UNIFORM_HALF_SPAN);
                let hi = c * (1.0 + UNIFORM_HALF_SPAN);
                ((floor - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        }
    }

    /// Second-order approximation of E(1/N): (E N)^-1 (1 + CV^2), from the
    /// nominal moments.
    pub fn inverse_moment_delta(&self) -> f64 {
        let m = self.moments();
        (1.0 + m.cv * m.cv) / m.mean
    }

    /// E(1/N) computed exactly over the rounded-and-clamped integer support.
    pub fn exact_inverse_moment(&self) -> f64 {
        self.integer_pmf()
            .into_iter()
            .map(|(k, p)| p / k as f64)
            .sum()
    }

    /// (E N, Var N) computed exactly over the rounded-and-clamped integer
    /// support. Differs from `moments` by the clamp and rounding effects.
    pub fn exact_moments(&self) -> (f64, f64) {
        let pmf = self.integer_pmf();
        let mass: f64 = pmf.iter().map(|&(_, p)| p).sum();
        let mean: f64 = pmf.iter().map(|&(k, p)| p * k as f64).sum::<f64>() / mass;
        let var: f64 = pmf
            .iter()
            .map(|&(k, p)| {
                let d = k as f64 - mean;
                p * d * d
            })
            .sum::<f64>()
            / mass;
        (mean, var)
    }

    /// Probability mass of each achievable integer size, clamp mass folded
    /// into the floor. Sums to 1 up to normal-tail truncation error.
    fn integer_pmf(&self) -> Vec<(u32, f64)> {
        let c = self.center as f64;
        let floor = SIZE_FLOOR as f64;
        match self.kind {
            SizeKind::Constant => vec![(self.center, 1.0)],
            SizeKind::TruncatedNormal => {
                let sd = c * VARIANCE_RATIO.sqrt();
                let hi = (c + 10.0 * sd).ceil() as u32;
                let mut pmf = Vec::with_capacity((hi - SIZE_FLOOR + 2) as usize);
                // everything below floor + 0.5 lands on the floor
                pmf.push((SIZE_FLOOR, standard_normal_cdf((floor + 0.5 - c) / sd)));
                for k in SIZE_FLOOR + 1..=hi {
                    let p = standard_normal_cdf((k as f64 + 0.5 - c) / sd)
                        - standard_normal_cdf((k as f64 - 0.5 - c) / sd);
                    pmf.push((k, p));
                }
                pmf
            }
            SizeKind::Uniform => {
                let lo = c * (1.0 - UNIFORM_HALF_SPAN);
                let hi = c * (1.0 + UNIFORM_HALF_SPAN);
                let span = hi - lo;
                let first = (lo - 0.5).ceil().max(floor) as u32;
                let last = (hi + 0.5).floor() as u32;
                let mut pmf = Vec::with_capacity((last - first + 1) as usize);
                for k in first..=last {
                    let (a, b) = if k == SIZE_FLOOR {
                        // clamp mass from below
                        (lo, (k as f64 + 0.5).min(hi))
                    } else {
                        ((k as f64 - 0.5).max(lo), (k as f64 + 0.5).min(hi))
                    };
                    let p = ((b - a) / span).max(0.0);
                    if p > 0.0 {
                        pmf.push((k, p));
                    }
                }
                pmf
            }
        }
    }
}

/// Mean and variance of X where X ~ Binomial(N, p) and N follows `spec`,
/// using the nominal size moments: E X = p E N and
/// Var X = p(1-p) E N + p^2 Var N.
pub fn compound_bernoulli_moments(p: f64, spec: &SampleSizeSpec) -> Result<(f64, f64), Error> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let m = spec.moments();
    Ok((p * m.mean, p * (1.0 - p) * m.mean + p * p * m.variance))
}

fn standard_normal_cdf(x: f64) -> f64 {
    use statrs::distribution::Normal as StatNormal;
    StatNormal::new(0.0, 1.0).expect("unit normal").cdf(x)
}
