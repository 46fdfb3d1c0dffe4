//! Experiment engine: significance and power sweeps over a grid of sample
//! sizes, with per-trial seeded streams and embarrassingly parallel trials.
//!
//! Determinism contract: a config plus master seed fixes every byte of the
//! output. Trial t of grid row r draws from a dedicated stream derived as
//! `(r << 32) | t`, so results do not depend on the worker count or
//! scheduling, and trials are reduced in index order.

pub mod cli;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::ProjectionConfig;
use crate::error::{Error, Result};
use crate::model::{
    gof_alternate_probability, indep_alternate_probability_with_pattern,
    sample_contingency_table, sample_multinomial, CountTable, GofAlternate,
    IndepAlternatePattern, ProbabilityVector,
};
use crate::privacy::{add_noise, Mechanism, PrivacyParams};
use crate::stats::product_probability;
use crate::testing::{
    chi_squared_critical_value, gof_classical_with_critical_value,
    indep_classical_with_critical_value, mc_gof, mc_indep, mc_threshold_index,
    priv_gof_critical_value, priv_gof_with_critical_value, priv_indep, TestOutcome,
};

/// Environment variable supplying the default worker count.
pub const WORKERS_ENV: &str = "DP_CHISQ_WORKERS";
/// The config schema this build reads.
pub const CONFIG_SCHEMA: u32 = 1;

/// The eight test procedures the harness can sweep: the six decision
/// procedures plus the two "classical test applied to noisy counts"
/// compositions they are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    GofClassical,
    GofClassicalNoisy,
    McGof,
    PrivGof,
    IndepClassical,
    IndepClassicalNoisy,
    McIndep,
    PrivIndep,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::GofClassical => "gof_classical",
            TestKind::GofClassicalNoisy => "gof_classical_noisy",
            TestKind::McGof => "mc_gof",
            TestKind::PrivGof => "priv_gof",
            TestKind::IndepClassical => "indep_classical",
            TestKind::IndepClassicalNoisy => "indep_classical_noisy",
            TestKind::McIndep => "mc_indep",
            TestKind::PrivIndep => "priv_indep",
        }
    }

    fn is_gof(&self) -> bool {
        matches!(
            self,
            TestKind::GofClassical | TestKind::GofClassicalNoisy | TestKind::McGof | TestKind::PrivGof
        )
    }

    fn needs_mechanism(&self) -> bool {
        !matches!(self, TestKind::GofClassical | TestKind::IndepClassical)
    }
}

/// Null distribution specification for goodness-of-fit runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P0Spec {
    Uniform { d: usize },
    Explicit { probs: Vec<f64> },
}

impl P0Spec {
    pub fn resolve(&self) -> Result<ProbabilityVector> {
        match self {
            P0Spec::Uniform { d } => {
                if *d < 2 {
                    return Err(Error::invalid("dimension must be at least 2"));
                }
                Ok(ProbabilityVector::uniform(*d))
            }
            P0Spec::Explicit { probs } => ProbabilityVector::new(probs.clone()),
        }
    }
}

/// Alternate hypothesis specification for power runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternateSpec {
    /// Goodness of fit, perturbation shrinking as 1/sqrt(n).
    GofScaled { delta_tilde: f64 },
    /// Goodness of fit, fixed perturbation with an explicit sign pattern.
    GofFixed { delta: f64, signs: Vec<i8> },
    /// 2x2 dependence with covariance `delta` between the indicators.
    IndepCovariance {
        delta: f64,
        /// Use the row-alternating sign layout instead of the
        /// covariance-consistent diagonal one (comparison runs only).
        #[serde(default)]
        row_alternating: bool,
    },
}

/// A full experiment description; JSON-serializable with a schema version.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub test: TestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Mechanism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<P0Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternate: Option<AlternateSpec>,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Monte-Carlo sample count; defaults to 100 for goodness of fit and 50
    /// for independence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Elastic-net mix for the denoiser; defaults by mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub skip_failures: bool,
}

fn default_trials() -> u32 {
    1000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("config parse error: {e}")))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(Error::invalid(format!(
                "unsupported config schema {} (this build reads {CONFIG_SCHEMA})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }
}

/// Whether a sweep reports the fail-to-reject rate under the null
/// (significance) or the rejection rate under the alternative (power).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Significance,
    Power,
}

impl RateKind {
    pub fn column(&self) -> &'static str {
        match self {
            RateKind::Significance => "significance",
            RateKind::Power => "power",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub n: u64,
    pub test: &'static str,
    pub rate: f64,
    pub se: f64,
    pub mean_critical_value: Option<f64>,
    pub trials: u32,
    pub failures: u32,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub kind: RateKind,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// CSV with header `n,test,<rate>,se,mean_critical_value`, plus a
    /// `failures` column when requested.
    pub fn to_csv(&self, include_failures: bool) -> String {
        let mut out = format!("n,test,{},se,mean_critical_value", self.kind.column());
        if include_failures {
            out.push_str(",failures");
        }
        out.push('\n');
        for row in &self.rows {
            let crit = row
                .mean_critical_value
                .map(|c| format!("{c:.6}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}",
                row.n, row.test, row.rate, row.se, crit
            ));
            if include_failures {
                out.push_str(&format!(",{}", row.failures));
            }
            out.push('\n');
        }
        out
    }
}

/// Empirical significance sweep: samples under the null for each n in the
/// grid and reports one minus the rejection rate.
pub fn run_significance(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment(cfg, RateKind::Significance)
}

/// Empirical power sweep: samples under the configured alternative and
/// reports the rejection rate.
pub fn run_power(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment(cfg, RateKind::Power)
}

struct ResolvedExperiment {
    test: TestKind,
    alpha: f64,
    params: Option<PrivacyParams>,
    projection: Option<ProjectionConfig>,
    k: usize,
    p0: Option<ProbabilityVector>,
    pi1: Option<ProbabilityVector>,
    pi2: Option<ProbabilityVector>,
    alternate: Option<AlternateSpec>,
}

impl ResolvedExperiment {
    /// The distribution data is sampled from, at sample size n, along with
    /// the table shape.
    fn sampling_distribution(
        &self,
        mode: RateKind,
        n: u64,
    ) -> Result<(ProbabilityVector, usize, usize)> {
        match (self.test.is_gof(), mode) {
            (true, RateKind::Significance) => {
                let p0 = self.p0.as_ref().expect("validated");
                Ok((p0.clone(), 1, p0.dim()))
            }
            (true, RateKind::Power) => {
                let p0 = self.p0.as_ref().expect("validated");
                let alt = match self.alternate.as_ref().expect("validated") {
                    AlternateSpec::GofScaled { delta_tilde } => GofAlternate::Scaled {
                        delta_tilde: *delta_tilde,
                    },
                    AlternateSpec::GofFixed { delta, signs } => GofAlternate::Fixed {
                        delta: *delta,
                        signs: signs.clone(),
                    },
                    AlternateSpec::IndepCovariance { .. } => {
                        return Err(Error::invalid(
                            "independence alternate given for a goodness-of-fit test",
                        ))
                    }
                };
                let p1 = gof_alternate_probability(p0, &alt, n)?;
                Ok((p1.clone(), 1, p1.dim()))
            }
            (false, RateKind::Significance) => {
                let pi1 = self.pi1.as_ref().expect("validated");
                let pi2 = self.pi2.as_ref().expect("validated");
                Ok((product_probability(pi1, pi2), pi1.dim(), pi2.dim()))
            }
            (false, RateKind::Power) => match self.alternate.as_ref().expect("validated") {
                AlternateSpec::IndepCovariance {
                    delta,
                    row_alternating,
                } => {
                    let pattern = if *row_alternating {
                        IndepAlternatePattern::RowAlternating
                    } else {
                        IndepAlternatePattern::Diagonal
                    };
                    Ok((indep_alternate_probability_with_pattern(*delta, pattern)?, 2, 2))
                }
                _ => Err(Error::invalid(
                    "goodness-of-fit alternate given for an independence test",
                )),
            },
        }
    }

    /// Data-independent critical value for this row, when the test has one.
    fn hoisted_critical_value(&self, n: u64, rows: usize, cols: usize) -> Result<Option<f64>> {
        match self.test {
            TestKind::GofClassical | TestKind::GofClassicalNoisy => {
                let d = self.p0.as_ref().expect("validated").dim();
                Ok(Some(chi_squared_critical_value(d - 1, self.alpha)?))
            }
            TestKind::PrivGof => {
                let p0 = self.p0.as_ref().expect("validated");
                let params = self.params.as_ref().expect("validated");
                Ok(Some(priv_gof_critical_value(p0, n, params, self.alpha)?))
            }
            TestKind::IndepClassical | TestKind::IndepClassicalNoisy => Ok(Some(
                chi_squared_critical_value((rows - 1) * (cols - 1), self.alpha)?,
            )),
            _ => Ok(None),
        }
    }

    fn run_trial<R: rand::Rng + ?Sized>(
        &self,
        x: &CountTable,
        hoisted: Option<f64>,
        rng: &mut R,
    ) -> Result<TestOutcome> {
        match self.test {
            TestKind::GofClassical => gof_classical_with_critical_value(
                x,
                self.p0.as_ref().expect("validated"),
                hoisted.expect("hoisted"),
            ),
            TestKind::GofClassicalNoisy => {
                let w = add_noise(x, self.params.as_ref().expect("validated"), rng)?;
                gof_classical_with_critical_value(
                    &w,
                    self.p0.as_ref().expect("validated"),
                    hoisted.expect("hoisted"),
                )
            }
            TestKind::McGof => mc_gof(
                x,
                self.params.as_ref().expect("validated"),
                self.alpha,
                self.p0.as_ref().expect("validated"),
                self.k,
                rng,
            ),
            TestKind::PrivGof => priv_gof_with_critical_value(
                x,
                self.params.as_ref().expect("validated"),
                self.p0.as_ref().expect("validated"),
                hoisted.expect("hoisted"),
                rng,
            ),
            TestKind::IndepClassical => {
                indep_classical_with_critical_value(x, hoisted.expect("hoisted"))
            }
            TestKind::IndepClassicalNoisy => {
                let w = add_noise(x, self.params.as_ref().expect("validated"), rng)?;
                indep_classical_with_critical_value(&w, hoisted.expect("hoisted"))
            }
            TestKind::McIndep => mc_indep(
                x,
                self.params.as_ref().expect("validated"),
                self.alpha,
                self.k,
                self.projection.as_ref().expect("validated"),
                rng,
            ),
            TestKind::PrivIndep => priv_indep(
                x,
                self.params.as_ref().expect("validated"),
                self.alpha,
                self.projection.as_ref().expect("validated"),
                rng,
            ),
        }
    }
}

fn resolve(cfg: &ExperimentConfig, mode: RateKind) -> Result<ResolvedExperiment> {
    if cfg.schema != CONFIG_SCHEMA {
        return Err(Error::invalid(format!(
            "unsupported config schema {}",
            cfg.schema
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if cfg.n_grid.is_empty() {
        return Err(Error::invalid("n_grid must be non-empty"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0,1)"));
    }

    let params = if cfg.test.needs_mechanism() {
        let mech = cfg
            .mechanism
            .ok_or_else(|| Error::invalid(format!("{} needs a mechanism", cfg.test.name())))?;
        let epsilon = cfg
            .epsilon
            .ok_or_else(|| Error::invalid("mechanism requires epsilon"))?;
        Some(match mech {
            Mechanism::Laplace => PrivacyParams::laplace(epsilon)?,
            Mechanism::Gaussian => {
                let delta = cfg
                    .delta
                    .ok_or_else(|| Error::invalid("the Gaussian mechanism requires delta"))?;
                PrivacyParams::gaussian(epsilon, delta)?
            }
        })
    } else {
        None
    };

    let projection = match (&params, cfg.gamma) {
        (Some(p), None) => Some(ProjectionConfig::for_mechanism(p)),
        (Some(p), Some(g)) => Some(ProjectionConfig::for_mechanism(p).with_gamma(g)?),
        (None, _) => None,
    };

    let k = cfg
        .k
        .unwrap_or(if cfg.test.is_gof() { 100 } else { 50 });
    if matches!(cfg.test, TestKind::McGof | TestKind::McIndep) {
        mc_threshold_index(k, cfg.alpha)?;
    }

    let (p0, pi1, pi2) = if cfg.test.is_gof() {
        let p0 = cfg
            .p0
            .as_ref()
            .ok_or_else(|| Error::invalid("goodness-of-fit runs need p0"))?
            .resolve()?;
        p0.require_strictly_positive("goodness-of-fit null")?;
        (Some(p0), None, None)
    } else {
        match mode {
            RateKind::Significance => {
                let pi1 = ProbabilityVector::new(
                    cfg.pi1
                        .clone()
                        .ok_or_else(|| Error::invalid("independence significance runs need pi1"))?,
                )?;
                let pi2 = ProbabilityVector::new(
                    cfg.pi2
                        .clone()
                        .ok_or_else(|| Error::invalid("independence significance runs need pi2"))?,
                )?;
                if pi1.dim() < 2 || pi2.dim() < 2 {
                    return Err(Error::invalid("marginals need at least two categories"));
                }
                (None, Some(pi1), Some(pi2))
            }
            RateKind::Power => (None, None, None),
        }
    };

    if mode == RateKind::Power && cfg.alternate.is_none() {
        return Err(Error::invalid("power runs need an alternate hypothesis"));
    }

    Ok(ResolvedExperiment {
        test: cfg.test,
        alpha: cfg.alpha,
        params,
        projection,
        k,
        p0,
        pi1,
        pi2,
        alternate: cfg.alternate.clone(),
    })
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    cfg.workers
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

struct TrialSummary {
    rejected: bool,
    critical: Option<f64>,
}

fn run_experiment(cfg: &ExperimentConfig, mode: RateKind) -> Result<ExperimentResult> {
    let resolved = resolve(cfg, mode)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::numeric("worker pool", e.to_string()))?;

    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for (row_index, &n) in cfg.n_grid.iter().enumerate() {
        if n == 0 {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        let (dist, table_rows, table_cols) = resolved.sampling_distribution(mode, n)?;
        let hoisted = resolved.hoisted_critical_value(n, table_rows, table_cols)?;

        let outcomes: Vec<Result<TrialSummary>> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(((row_index as u64) << 32) | trial as u64);
                    let x = sample_table(&dist, table_rows, table_cols, n, &mut rng)?;
                    let outcome = resolved.run_trial(&x, hoisted, &mut rng)?;
                    Ok(TrialSummary {
                        rejected: outcome.rejected(),
                        critical: outcome.critical_value,
                    })
                })
                .collect()
        });

        let mut rejects = 0u32;
        let mut failures = 0u32;
        let mut crit_sum = 0.0;
        let mut crit_count = 0u32;
        for outcome in outcomes {
            match outcome {
                Ok(summary) => {
                    if summary.rejected {
                        rejects += 1;
                    }
                    if let Some(c) = summary.critical {
                        crit_sum += c;
                        crit_count += 1;
                    }
                }
                Err(e) => {
                    if cfg.skip_failures {
                        failures += 1;
                    } else {
                        return Err(e);
                    }
                }
            }
        }
        let ok = cfg.trials - failures;
        if ok == 0 {
            return Err(Error::numeric(
                "experiment",
                format!("all {} trials failed at n = {n}", cfg.trials),
            ));
        }
        let reject_rate = f64::from(rejects) / f64::from(ok);
        let rate = match mode {
            RateKind::Significance => 1.0 - reject_rate,
            RateKind::Power => reject_rate,
        };
        let se = (rate * (1.0 - rate) / f64::from(ok)).sqrt();
        rows.push(ResultRow {
            n,
            test: resolved.test.name(),
            rate,
            se,
            mean_critical_value: (crit_count > 0).then(|| crit_sum / f64::from(crit_count)),
            trials: ok,
            failures,
        });
    }
    Ok(ExperimentResult { kind: mode, rows })
}

fn sample_table<R: rand::Rng + ?Sized>(
    dist: &ProbabilityVector,
    rows: usize,
    cols: usize,
    n: u64,
    rng: &mut R,
) -> Result<CountTable> {
    if rows == 1 {
        sample_multinomial(n, dist, rng)
    } else {
        sample_contingency_table(n, dist, rows, cols, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(test: TestKind) -> ExperimentConfig {
        ExperimentConfig {
            schema: 1,
            test,
            mechanism: Some(Mechanism::Gaussian),
            epsilon: Some(0.1),
            delta: Some(1e-6),
            alpha: 0.05,
            p0: Some(P0Spec::Uniform { d: 4 }),
            pi1: Some(vec![0.5, 0.5]),
            pi2: Some(vec![0.5, 0.5]),
            alternate: None,
            n_grid: vec![1000],
            trials: 50,
            k: None,
            gamma: None,
            seed: 7,
            workers: Some(2),
            skip_failures: false,
        }
    }

    #[test]
    fn significance_sweep_shape_and_se() {
        let cfg = base_config(TestKind::PrivGof);
        let result = run_significance(&cfg).unwrap();
        assert_eq!(result.rows.len(), 1);
        let row = &result.rows[0];
        assert_eq!(row.test, "priv_gof");
        assert_eq!(row.trials, 50);
        assert!(row.rate >= 0.0 && row.rate <= 1.0);
        let expect_se = (row.rate * (1.0 - row.rate) / 50.0).sqrt();
        assert!((row.se - expect_se).abs() < 1e-15);
        assert!(row.mean_critical_value.is_some());
    }

    #[test]
    fn determinism_across_worker_counts() {
        let mut cfg = base_config(TestKind::McGof);
        cfg.mechanism = Some(Mechanism::Laplace);
        cfg.delta = None;
        cfg.trials = 40;
        cfg.workers = Some(1);
        let a = run_significance(&cfg).unwrap().to_csv(false);
        cfg.workers = Some(4);
        let b = run_significance(&cfg).unwrap().to_csv(false);
        assert_eq!(a, b, "output must not depend on parallelism");
    }

    #[test]
    fn doubling_trials_halves_variance() {
        // Accounting check on the SE formula at a fixed rate.
        let rate: f64 = 0.95;
        let se1 = (rate * (1.0 - rate) / 1000.0).sqrt();
        let se2 = (rate * (1.0 - rate) / 2000.0).sqrt();
        assert!((se1 * se1 / (se2 * se2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_run_needs_alternate() {
        let cfg = base_config(TestKind::PrivGof);
        assert!(run_power(&cfg).is_err());

        let mut cfg = base_config(TestKind::PrivGof);
        cfg.alternate = Some(AlternateSpec::GofFixed {
            delta: 0.01,
            signs: vec![1, -1, 1, -1],
        });
        cfg.trials = 30;
        let result = run_power(&cfg).unwrap();
        assert_eq!(result.kind, RateKind::Power);
    }

    #[test]
    fn config_validation_errors() {
        let mut cfg = base_config(TestKind::PrivGof);
        cfg.n_grid.clear();
        assert!(run_significance(&cfg).is_err());

        let mut cfg = base_config(TestKind::PrivGof);
        cfg.trials = 0;
        assert!(run_significance(&cfg).is_err());

        let mut cfg = base_config(TestKind::McGof);
        cfg.k = Some(10);
        assert!(run_significance(&cfg).is_err());

        let mut cfg = base_config(TestKind::GofClassicalNoisy);
        cfg.mechanism = None;
        assert!(run_significance(&cfg).is_err());

        let mut cfg = base_config(TestKind::PrivGof);
        cfg.p0 = None;
        assert!(run_significance(&cfg).is_err());
    }

    #[test]
    fn config_json_round_trip_and_schema_check() {
        let cfg = base_config(TestKind::McIndep);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.test, TestKind::McIndep);

        let bad = text.replace("\"schema\": 1", "\"schema\": 99");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        assert!(ExperimentConfig::from_json("{not json").is_err());
    }

    #[test]
    fn csv_format() {
        let result = ExperimentResult {
            kind: RateKind::Significance,
            rows: vec![ResultRow {
                n: 1000,
                test: "priv_gof",
                rate: 0.951,
                se: 0.0068,
                mean_critical_value: Some(123.456789),
                trials: 1000,
                failures: 0,
            }],
        };
        let csv = result.to_csv(false);
        assert_eq!(
            csv,
            "n,test,significance,se,mean_critical_value\n1000,priv_gof,0.951000,0.006800,123.456789\n"
        );
        let with_failures = result.to_csv(true);
        assert!(with_failures.starts_with("n,test,significance,se,mean_critical_value,failures\n"));
        assert!(with_failures.trim_end().ends_with(",0"));
    }

    #[test]
    fn classical_significance_near_alpha() {
        let mut cfg = base_config(TestKind::GofClassical);
        cfg.mechanism = None;
        cfg.epsilon = None;
        cfg.delta = None;
        cfg.n_grid = vec![10_000];
        cfg.trials = 2000;
        cfg.workers = None;
        let result = run_significance(&cfg).unwrap();
        let sig = result.rows[0].rate;
        assert!((sig - 0.95).abs() < 0.02, "significance {sig}");
    }
}
