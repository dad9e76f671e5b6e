//! Dataset generation for the five mechanisms.
//!
//! Every mechanism draws, per study, a size n_i (shared by both arms), a true
//! effect theta_i ~ N(theta, tau2), and a control-arm parameter; event counts
//! then come from exact binomial sampling. Mechanisms differ in how the
//! control parameter varies across studies and in whether the effect loads
//! entirely on the treatment arm or is split across both arms.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::sizes::SampleSizeSpec;
use crate::Error;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable inverse logit.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    /// Fixed intercept, whole effect on the treatment arm.
    Fim1,
    /// Fixed intercept, effect split half and half.
    Fim2,
    /// Normal random intercept on the logit scale, whole effect.
    Rim1,
    /// Normal random intercept, split effect.
    Rim2,
    /// Uniform random control probability, whole effect.
    Urim1,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Fim1,
        Mechanism::Fim2,
        Mechanism::Rim1,
        Mechanism::Rim2,
        Mechanism::Urim1,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mechanism::Fim1 => "FIM1",
            Mechanism::Fim2 => "FIM2",
            Mechanism::Rim1 => "RIM1",
            Mechanism::Rim2 => "RIM2",
            Mechanism::Urim1 => "URIM1",
        }
    }

    /// Fixed-intercept mechanisms ignore sigma2 entirely.
    pub fn uses_sigma2(self) -> bool {
        !matches!(self, Mechanism::Fim1 | Mechanism::Fim2)
    }

    /// Split-effect mechanisms place -theta_i/2 and +theta_i/2 on the two arms.
    pub fn splits_effect(self) -> bool {
        matches!(self, Mechanism::Fim2 | Mechanism::Rim2)
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FIM1" => Ok(Mechanism::Fim1),
            "FIM2" => Ok(Mechanism::Fim2),
            "RIM1" => Ok(Mechanism::Rim1),
            "RIM2" => Ok(Mechanism::Rim2),
            "URIM1" => Ok(Mechanism::Urim1),
            _ => Err(format!(
                "unknown mechanism `{s}` (expected FIM1, FIM2, RIM1, RIM2 or URIM1)"
            )),
        }
    }
}

/// One cell of a simulation sweep.
///
/// `sigma2` is stored as 0 for fixed-intercept mechanisms regardless of the
/// value passed in, so equal cells hash and seed identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub mechanism: Mechanism,
    pub size_spec: SampleSizeSpec,
    pub k: u32,
    pub theta: f64,
    pub tau2: f64,
    pub p_c: f64,
    pub sigma2: f64,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mechanism: Mechanism,
        size_spec: SampleSizeSpec,
        k: u32,
        theta: f64,
        tau2: f64,
        p_c: f64,
        sigma2: f64,
    ) -> Result<Self, Error> {
        if k == 0 {
            return Err(Error::TooFewStudies { need: 1, got: 0 });
        }
        if !(p_c > 0.0 && p_c < 1.0) {
            return Err(Error::InvalidProbability(p_c));
        }
        if !(tau2 >= 0.0) {
            return Err(Error::NegativeVariance(tau2));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::NegativeVariance(sigma2));
        }
        let sigma2 = if mechanism.uses_sigma2() { sigma2 } else { 0.0 };
        let sc = Self { mechanism, size_spec, k, theta, tau2, p_c, sigma2 };
        if mechanism == Mechanism::Urim1 {
            let h = sc.uniform_intercept_half_width();
            let (low, high) = (p_c - h, p_c + h);
            if !(low > 0.0 && high < 1.0) {
                return Err(Error::InterceptBandOutOfRange { low, high });
            }
        }
        Ok(sc)
    }

    /// Half-width sigma * sqrt(3) * p_C (1 - p_C) of the uniform control band;
    /// gives Var(p_iC) = sigma2 * p_C^2 (1 - p_C)^2.
    pub fn uniform_intercept_half_width(&self) -> f64 {
        self.sigma2.sqrt() * 3f64.sqrt() * self.p_c * (1.0 - self.p_c)
    }
}

/// One simulated study: event counts and arm sizes. Arms are equal by design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyData {
    pub x_c: u32,
    pub n_c: u32,
    pub x_t: u32,
    pub n_t: u32,
}

/// K independent true effects theta_i ~ N(theta, tau2). tau2 = 0 consumes no
/// randomness and returns theta repeated.
pub fn draw_true_effects<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<f64> {
    (0..scenario.k).map(|_| draw_true_effect(scenario, rng)).collect()
}

fn draw_true_effect<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> f64 {
    if scenario.tau2 > 0.0 {
        let normal = Normal::new(scenario.theta, scenario.tau2.sqrt()).expect("positive sd");
        normal.sample(rng)
    } else {
        scenario.theta
    }
}

/// Control-arm parameter for one study, on the scale the mechanism draws it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlParameter {
    Logit(f64),
    Probability(f64),
}

impl ControlParameter {
    pub fn as_logit(self) -> f64 {
        match self {
            ControlParameter::Logit(a) => a,
            ControlParameter::Probability(p) => logit(p),
        }
    }

    pub fn as_probability(self) -> f64 {
        match self {
            ControlParameter::Logit(a) => expit(a),
            ControlParameter::Probability(p) => p,
        }
    }
}

/// Fixed mechanisms return logit(p_C) without consuming randomness; RIM draws
/// the intercept on the logit scale, URIM1 draws the probability directly.
pub fn draw_control_parameter<R: Rng + ?Sized>(
    scenario: &Scenario,
    rng: &mut R,
) -> ControlParameter {
    let alpha = logit(scenario.p_c);
    match scenario.mechanism {
        Mechanism::Fim1 | Mechanism::Fim2 => ControlParameter::Logit(alpha),
        Mechanism::Rim1 | Mechanism::Rim2 => {
            if scenario.sigma2 > 0.0 {
                let normal = Normal::new(alpha, scenario.sigma2.sqrt()).expect("positive sd");
                ControlParameter::Logit(normal.sample(rng))
            } else {
                ControlParameter::Logit(alpha)
            }
        }
        Mechanism::Urim1 => {
            let h = scenario.uniform_intercept_half_width();
            if h > 0.0 {
                ControlParameter::Probability(rng.gen_range(scenario.p_c - h..scenario.p_c + h))
            } else {
                ControlParameter::Probability(scenario.p_c)
            }
        }
    }
}

/// Arm probabilities for one study. Both styles keep
/// logit(p_T) - logit(p_C) = theta_i exactly.
pub fn arm_probabilities(mechanism: Mechanism, alpha: f64, theta_i: f64) -> (f64, f64) {
    if mechanism.splits_effect() {
        (expit(alpha - theta_i / 2.0), expit(alpha + theta_i / 2.0))
    } else {
        (expit(alpha), expit(alpha + theta_i))
    }
}

/// One complete K-study dataset.
///
/// Per-study draw order is fixed: size, true effect, control parameter,
/// control events, treatment events. The order is part of the reproducibility
/// contract and must not change.
pub fn generate_meta_sample<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<StudyData> {
    (0..scenario.k)
        .map(|_| {
            let n = scenario.size_spec.draw(rng);
            let theta_i = draw_true_effect(scenario, rng);
            let alpha = draw_control_parameter(scenario, rng).as_logit();
            let (p_c, p_t) = arm_probabilities(scenario.mechanism, alpha, theta_i);
            let x_c = draw_binomial(n, p_c, rng);
            let x_t = draw_binomial(n, p_t, rng);
            StudyData { x_c, n_c: n, x_t, n_t: n }
        })
        .collect()
}

fn draw_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    let b = Binomial::new(u64::from(n), p).expect("probability in [0, 1]");
    b.sample(rng) as u32
}
