//! Replication engine: per-cell Monte Carlo loops, grid sweeps, deterministic
//! parallel accumulation.
//!
//! Replications are split into fixed-size chunks. Workers may compute chunks
//! in any order; chunk partials are merged in index order afterwards, so the
//! output is a pure function of (config, master seed) at any worker count.

use rayon::prelude::*;

use crate::datagen::{generate_meta_sample, Mechanism, Scenario};
use crate::estimators::{
    self, meta_estimate_iv, meta_estimate_ssw, study_lor, CorrectionPolicy, MetaEstimate,
    StudySummary,
};
use crate::sizes::{SampleSizeSpec, SizeKind};
use crate::stream::{replication_rng, CompensatedSum};
use crate::Error;

const LEVEL: f64 = 0.95;
const CHUNK: u64 = 256;

/// Which heterogeneity estimate feeds the sample-size-weighted interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Tau2Plugin {
    Dl,
    #[default]
    Mp,
    Reml,
}

impl Tau2Plugin {
    pub fn label(self) -> &'static str {
        match self {
            Tau2Plugin::Dl => "dl",
            Tau2Plugin::Mp => "mp",
            Tau2Plugin::Reml => "reml",
        }
    }
}

impl std::str::FromStr for Tau2Plugin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dl" => Ok(Tau2Plugin::Dl),
            "mp" => Ok(Tau2Plugin::Mp),
            "reml" => Ok(Tau2Plugin::Reml),
            _ => Err(format!("unknown tau2 plugin `{s}` (expected dl, mp or reml)")),
        }
    }
}

/// Run-wide estimation policies, orthogonal to the scenario grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSettings {
    pub tau2_plugin: Tau2Plugin,
    pub correction: CorrectionPolicy,
}

/// All estimates computed from one replication's dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationEstimates {
    pub dl: MetaEstimate,
    pub mp: MetaEstimate,
    pub reml: MetaEstimate,
    pub ssw: MetaEstimate,
    pub reml_converged: bool,
}

impl ReplicationEstimates {
    /// Fixed method order: dl, mp, reml, ssw.
    pub fn as_array(&self) -> [&MetaEstimate; 4] {
        [&self.dl, &self.mp, &self.reml, &self.ssw]
    }
}

/// Method labels in accumulation order.
pub const THETA_METHODS: [&str; 4] = ["dl", "mp", "reml", "ssw"];
pub const TAU2_METHODS: [&str; 3] = ["dl", "mp", "reml"];

/// One replication: derive the stream, generate a dataset, estimate
/// everything. Pure in (scenario, replication index, master seed, settings).
pub fn run_replication(
    scenario: &Scenario,
    replication: u64,
    master_seed: u64,
    settings: RunSettings,
) -> Result<ReplicationEstimates, Error> {
    let mut rng = replication_rng(master_seed, scenario, replication);
    let sample = generate_meta_sample(scenario, &mut rng);
    let summaries: Vec<StudySummary> =
        sample.iter().map(|s| study_lor(s, settings.correction)).collect();

    let dl = estimators::tau2_dl(&summaries)?;
    let mp = estimators::tau2_mp(&summaries)?;
    let reml = estimators::tau2_reml(&summaries)?;
    let plugin = match settings.tau2_plugin {
        Tau2Plugin::Dl => dl,
        Tau2Plugin::Mp => mp,
        Tau2Plugin::Reml => reml.tau2,
    };

    Ok(ReplicationEstimates {
        dl: meta_estimate_iv(&summaries, dl, "dl", LEVEL)?,
        mp: meta_estimate_iv(&summaries, mp, "mp", LEVEL)?,
        reml: meta_estimate_iv(&summaries, reml.tau2, "reml", LEVEL)?,
        ssw: meta_estimate_ssw(&summaries, plugin, LEVEL)?,
        reml_converged: reml.converged,
    })
}

/// Monte Carlo summary of one scenario cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub mechanism: Mechanism,
    pub size_kind: SizeKind,
    pub k: u32,
    pub center: u32,
    pub theta: f64,
    pub tau2: f64,
    pub p_c: f64,
    /// None for fixed-intercept mechanisms.
    pub sigma2: Option<f64>,
    pub m: u64,
    /// Mean estimates in TAU2_METHODS order.
    pub mean_tau2: [f64; 3],
    /// Mean estimates in THETA_METHODS order.
    pub mean_theta: [f64; 4],
    /// Interval coverage of the true theta, THETA_METHODS order.
    pub coverage: [f64; 4],
    pub reml_nonconv: u64,
}

impl PerformanceRecord {
    pub fn bias_tau2(&self, method: usize) -> f64 {
        self.mean_tau2[method] - self.tau2
    }

    pub fn bias_theta(&self, method: usize) -> f64 {
        self.mean_theta[method] - self.theta
    }
}

#[derive(Clone, Copy, Default)]
struct CellAccumulator {
    tau2: [CompensatedSum; 3],
    theta: [CompensatedSum; 4],
    covered: [u64; 4],
    nonconv: u64,
}

impl CellAccumulator {
    fn record(&mut self, est: &ReplicationEstimates, true_theta: f64) {
        self.tau2[0].add(est.dl.tau2);
        self.tau2[1].add(est.mp.tau2);
        self.tau2[2].add(est.reml.tau2);
        for (i, m) in est.as_array().into_iter().enumerate() {
            self.theta[i].add(m.theta);
            if m.covers(true_theta) {
                self.covered[i] += 1;
            }
        }
        if !est.reml_converged {
            self.nonconv += 1;
        }
    }

    fn merge(&mut self, other: CellAccumulator) {
        for i in 0..3 {
            self.tau2[i].merge(other.tau2[i]);
        }
        for i in 0..4 {
            self.theta[i].merge(other.theta[i]);
            self.covered[i] += other.covered[i];
        }
        self.nonconv += other.nonconv;
    }
}

/// M replications of one cell, chunked and merged in canonical order.
pub fn run_scenario(
    scenario: &Scenario,
    m: u64,
    master_seed: u64,
    settings: RunSettings,
) -> Result<PerformanceRecord, Error> {
    if m < 1 {
        return Err(Error::TooFewReplications { need: 1 });
    }
    let chunk_count = m.div_ceil(CHUNK);
    let partials: Vec<CellAccumulator> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let mut acc = CellAccumulator::default();
            let end = ((c + 1) * CHUNK).min(m);
            for rep in c * CHUNK..end {
                let est = run_replication(scenario, rep, master_seed, settings)?;
                acc.record(&est, scenario.theta);
            }
            Ok(acc)
        })
        .collect::<Result<_, Error>>()?;

    let mut total = CellAccumulator::default();
    for p in partials {
        total.merge(p);
    }

    let mf = m as f64;
    Ok(PerformanceRecord {
        mechanism: scenario.mechanism,
        size_kind: scenario.size_spec.kind(),
        k: scenario.k,
        center: scenario.size_spec.center(),
        theta: scenario.theta,
        tau2: scenario.tau2,
        p_c: scenario.p_c,
        sigma2: scenario.mechanism.uses_sigma2().then_some(scenario.sigma2),
        m,
        mean_tau2: std::array::from_fn(|i| total.tau2[i].value() / mf),
        mean_theta: std::array::from_fn(|i| total.theta[i].value() / mf),
        coverage: std::array::from_fn(|i| total.covered[i] as f64 / mf),
        reml_nonconv: total.nonconv,
    })
}

/// Full parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub k_values: Vec<u32>,
    pub n_values: Vec<u32>,
    pub theta_values: Vec<f64>,
    pub tau2_values: Vec<f64>,
    pub pc_values: Vec<f64>,
    pub sigma2_values: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub size_kinds: Vec<SizeKind>,
    pub reps: u64,
    pub master_seed: u64,
    pub tau2_plugin: Tau2Plugin,
    pub correction: CorrectionPolicy,
}

impl Default for GridConfig {
    /// The standard sweep: K in {5, 10, 30}, n in {40, 100, 250, 1000},
    /// theta 0(0.5)2, tau2 0(0.1)1, p_C in {0.1, 0.4}, sigma2 in {0.1, 0.4},
    /// all five mechanisms, both random size kinds, M = 10,000.
    fn default() -> Self {
        GridConfig {
            k_values: vec![5, 10, 30],
            n_values: vec![40, 100, 250, 1000],
            theta_values: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            tau2_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            pc_values: vec![0.1, 0.4],
            sigma2_values: vec![0.1, 0.4],
            mechanisms: Mechanism::ALL.to_vec(),
            size_kinds: vec![SizeKind::TruncatedNormal, SizeKind::Uniform],
            reps: 10_000,
            master_seed: 42,
            tau2_plugin: Tau2Plugin::default(),
            correction: CorrectionPolicy::default(),
        }
    }
}

impl GridConfig {
    pub fn settings(&self) -> RunSettings {
        RunSettings { tau2_plugin: self.tau2_plugin, correction: self.correction }
    }

    /// Expands the cartesian grid in canonical order: mechanism, size kind,
    /// K, n, theta, tau2, p_C, sigma2. Fixed-intercept mechanisms appear once
    /// per cell instead of once per sigma2 value.
    pub fn scenarios(&self) -> Result<Vec<Scenario>, Error> {
        for (name, empty) in [
            ("K", self.k_values.is_empty()),
            ("n", self.n_values.is_empty()),
            ("theta", self.theta_values.is_empty()),
            ("tau2", self.tau2_values.is_empty()),
            ("pC", self.pc_values.is_empty()),
            ("sigma2", self.sigma2_values.is_empty()),
            ("mechanisms", self.mechanisms.is_empty()),
            ("size_kinds", self.size_kinds.is_empty()),
        ] {
            if empty {
                return Err(Error::EmptyAxis(name));
            }
        }
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            let sigma2_axis: &[f64] =
                if mechanism.uses_sigma2() { &self.sigma2_values } else { &[0.0] };
            for &kind in &self.size_kinds {
                for &k in &self.k_values {
                    for &n in &self.n_values {
                        let size_spec = SampleSizeSpec::new(kind, n)?;
                        for &theta in &self.theta_values {
                            for &tau2 in &self.tau2_values {
                                for &p_c in &self.pc_values {
                                    for &sigma2 in sigma2_axis {
                                        out.push(Scenario::new(
                                            mechanism, size_spec, k, theta, tau2, p_c, sigma2,
                                        )?);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs every cell of the grid; records come back in canonical grid order
/// regardless of scheduling.
pub fn run_grid(config: &GridConfig) -> Result<Vec<PerformanceRecord>, Error> {
    let scenarios = config.scenarios()?;
    let settings = config.settings();
    scenarios
        .par_iter()
        .map(|sc| run_scenario(sc, config.reps, config.master_seed, settings))
        .collect()
}

/// Monte Carlo variance of a single study's log odds ratio under `scenario`
/// with K forced to 1. Sample variance over `m` replications.
pub fn lor_variance_mc(scenario: &Scenario, m: u64, master_seed: u64) -> Result<f64, Error> {
    if m < 2 {
        return Err(Error::TooFewReplications { need: 2 });
    }
    let single = Scenario::new(
        scenario.mechanism,
        scenario.size_spec,
        1,
        scenario.theta,
        scenario.tau2,
        scenario.p_c,
        scenario.sigma2,
    )?;
    let chunk_count = m.div_ceil(CHUNK);
    let partials: Vec<(CompensatedSum, CompensatedSum)> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let mut sum = CompensatedSum::default();
            let mut sum_sq = CompensatedSum::default();
            let end = ((c + 1) * CHUNK).min(m);
            for rep in c * CHUNK..end {
                let mut rng = replication_rng(master_seed, &single, rep);
                let sample = generate_meta_sample(&single, &mut rng);
                let s = study_lor(&sample[0], CorrectionPolicy::OnZero);
                sum.add(s.lor);
                sum_sq.add(s.lor * s.lor);
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = CompensatedSum::default();
    let mut sum_sq = CompensatedSum::default();
    for (s, sq) in partials {
        sum.merge(s);
        sum_sq.merge(sq);
    }
    let mf = m as f64;
    let mean = sum.value() / mf;
    Ok((sum_sq.value() - mf * mean * mean) / (mf - 1.0))
}

/// Var(lor) under the scenario's size distribution divided by Var(lor) with
/// sizes pinned at the center. Near 1 + CV^2 when the delta expansion of
/// E(1/N) holds; heavy small-size tails push it higher.
pub fn variance_inflation_check(
    scenario: &Scenario,
    m: u64,
    master_seed: u64,
) -> Result<f64, Error> {
    let random = lor_variance_mc(scenario, m, master_seed)?;
    let mut constant = *scenario;
    constant.size_spec = scenario.size_spec.with_kind(SizeKind::Constant);
    let baseline = lor_variance_mc(&constant, m, master_seed)?;
    Ok(random / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario(kind: SizeKind, k: u32, n: u32) -> Scenario {
        Scenario::new(
            Mechanism::Fim2,
            SampleSizeSpec::new(kind, n).unwrap(),
            k,
            0.5,
            0.1,
            0.4,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn replication_is_deterministic() {
        let sc = scenario(SizeKind::Uniform, 10, 100);
        let a = run_replication(&sc, 3, 42, RunSettings::default()).unwrap();
        let b = run_replication(&sc, 3, 42, RunSettings::default()).unwrap();
        assert_eq!(a, b);
        let c = run_replication(&sc, 4, 42, RunSettings::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_replication_record_matches() {
        let sc = scenario(SizeKind::Uniform, 10, 100);
        let est = run_replication(&sc, 0, 42, RunSettings::default()).unwrap();
        let rec = run_scenario(&sc, 1, 42, RunSettings::default()).unwrap();
        assert_relative_eq!(rec.mean_theta[0], est.dl.theta, max_relative = 1e-15);
        assert_relative_eq!(rec.mean_tau2[1], est.mp.tau2, max_relative = 1e-15);
        for (i, m) in est.as_array().into_iter().enumerate() {
            assert_eq!(rec.coverage[i], if m.covers(sc.theta) { 1.0 } else { 0.0 });
        }
        assert_eq!(rec.m, 1);
    }

    #[test]
    fn coverage_is_count_over_m() {
        let sc = scenario(SizeKind::Constant, 5, 40);
        let m = 200;
        let rec = run_scenario(&sc, m, 7, RunSettings::default()).unwrap();
        for i in 0..4 {
            let count = rec.coverage[i] * m as f64;
            assert_relative_eq!(count, count.round(), epsilon = 1e-9);
            assert!((0.0..=1.0).contains(&rec.coverage[i]));
        }
    }

    #[test]
    fn default_grid_cell_count() {
        let config = GridConfig::default();
        let cells = config.scenarios().unwrap().len();
        // 2 fixed mechanisms + 3 random mechanisms * 2 sigma2 values = 8
        // mechanism slots, times 2 size kinds, 3 K, 4 n, 5 theta, 11 tau2, 2 pC
        assert_eq!(cells, 8 * 2 * 3 * 4 * 5 * 11 * 2);
        assert_eq!(cells, 21_120);
    }

    #[test]
    fn fixed_mechanisms_not_duplicated_per_sigma2() {
        let mut config = GridConfig::default();
        config.mechanisms = vec![Mechanism::Fim1];
        config.size_kinds = vec![SizeKind::Uniform];
        config.k_values = vec![5];
        config.n_values = vec![40];
        config.theta_values = vec![0.0];
        config.tau2_values = vec![0.0];
        config.pc_values = vec![0.1];
        let scenarios = config.scenarios().unwrap();
        assert_eq!(scenarios.len(), 1);
        assert_eq!(scenarios[0].sigma2, 0.0);
    }

    #[test]
    fn empty_axis_rejected() {
        let mut config = GridConfig::default();
        config.tau2_values.clear();
        assert_eq!(config.scenarios().unwrap_err(), Error::EmptyAxis("tau2"));
    }

    #[test]
    fn canonical_order_is_stable() {
        let mut config = GridConfig::default();
        config.mechanisms = vec![Mechanism::Fim1, Mechanism::Rim1];
        config.size_kinds = vec![SizeKind::Uniform];
        config.k_values = vec![5];
        config.n_values = vec![40];
        config.theta_values = vec![0.0];
        config.tau2_values = vec![0.0, 0.5];
        config.pc_values = vec![0.1];
        config.sigma2_values = vec![0.1, 0.4];
        let scenarios = config.scenarios().unwrap();
        let got: Vec<(Mechanism, f64, f64)> =
            scenarios.iter().map(|s| (s.mechanism, s.tau2, s.sigma2)).collect();
        assert_eq!(
            got,
            vec![
                (Mechanism::Fim1, 0.0, 0.0),
                (Mechanism::Fim1, 0.5, 0.0),
                (Mechanism::Rim1, 0.0, 0.1),
                (Mechanism::Rim1, 0.0, 0.4),
                (Mechanism::Rim1, 0.5, 0.1),
                (Mechanism::Rim1, 0.5, 0.4),
            ]
        );
    }

    #[test]
    fn degenerate_inflation_is_one() {
        let sc = scenario(SizeKind::Constant, 1, 100);
        let ratio = variance_inflation_check(&sc, 20_000, 11).unwrap();
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-12);
    }
}
