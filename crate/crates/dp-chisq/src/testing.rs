//! The decision procedures: classical, Monte-Carlo, and asymptotic tests for
//! goodness of fit and independence.
//!
//! All tests return a [`TestOutcome`] with the statistic, the critical value
//! when one was computed, and the reason for the decision. Ties at the
//! threshold fail to reject: every comparison is strict (`statistic >
//! critical value`).
//!
//! The Monte-Carlo threshold is the `ceil((k+1)(1-alpha))`-th order statistic
//! of k fresh draws of the private statistic under the null, which caps the
//! rejection probability at `alpha` for any sample size; it requires
//! `k > 1/alpha` draws for that order statistic to exist.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{gof_null_distribution, indep_null_distribution};
use crate::denoise::{two_step_mle_with_table, ProjectionConfig};
use crate::error::{Error, Result};
use crate::model::{sample_contingency_table, sample_multinomial, ProbabilityVector, Table};
use crate::privacy::{add_noise, PrivacyParams};
use crate::quadform::QuadFormDistribution;
use crate::stats::{gof_statistic, indep_mle, indep_statistic, product_probability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Reject,
    FailToReject,
}

/// Why the decision came out the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionReason {
    /// Statistic compared against a critical value.
    Threshold,
    /// The two-step MLE withheld its estimate (a denoised cell below 5).
    NullMle,
    /// Cell counts below 5 in a classical independence test.
    RuleOfThumb,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    pub decision: Decision,
    pub statistic: f64,
    /// Absent when the decision short-circuited before a threshold existed.
    pub critical_value: Option<f64>,
    pub reason: DecisionReason,
}

impl TestOutcome {
    fn threshold(statistic: f64, critical_value: f64) -> Self {
        let decision = if statistic > critical_value {
            Decision::Reject
        } else {
            Decision::FailToReject
        };
        TestOutcome {
            decision,
            statistic,
            critical_value: Some(critical_value),
            reason: DecisionReason::Threshold,
        }
    }

    pub fn rejected(&self) -> bool {
        self.decision == Decision::Reject
    }
}

/// Quantile of the chi-squared distribution with `dof` degrees of freedom,
/// computed through the quadratic-form engine with `dof` unit weights.
pub fn chi_squared_critical_value(dof: usize, alpha: f64) -> Result<f64> {
    QuadFormDistribution::chi_squared(dof).critical_value(alpha)
}

/// Classical goodness-of-fit test: reject when the chi-squared statistic
/// exceeds the chi-squared quantile with d-1 degrees of freedom. Applied to a
/// noisy table it ignores the noise, which is exactly the failure mode the
/// private tests fix.
pub fn gof_classical<T: Table + ?Sized>(
    x: &T,
    alpha: f64,
    p0: &ProbabilityVector,
) -> Result<TestOutcome> {
    let critical = chi_squared_critical_value(p0.dim() - 1, alpha)?;
    gof_classical_with_critical_value(x, p0, critical)
}

/// Classical test against a caller-supplied critical value (sweeps hoist the
/// quantile out of the trial loop).
pub fn gof_classical_with_critical_value<T: Table + ?Sized>(
    x: &T,
    p0: &ProbabilityVector,
    critical_value: f64,
) -> Result<TestOutcome> {
    let stat = gof_statistic(x, p0)?;
    Ok(TestOutcome::threshold(stat.value, critical_value))
}

pub(crate) fn mc_threshold_index(k: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    // k > 1/alpha, judged in exact arithmetic: alpha values like 0.05 carry
    // float fuzz that would otherwise admit k = 20.
    if (k as f64) * alpha <= 1.0 + 1e-9 {
        return Err(Error::invalid(format!(
            "Monte-Carlo tests need k > 1/alpha samples, got k = {k} at alpha = {alpha}"
        )));
    }
    let t = ((k as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    debug_assert!(t >= 1 && t <= k);
    Ok(t)
}

/// Monte-Carlo goodness-of-fit test.
///
/// Adds mechanism noise to the data, then samples k independent replicas of
/// the noisy statistic under the null (fresh multinomial draw plus fresh
/// noise: the exact finite-n law) and rejects when the observed statistic
/// exceeds the `ceil((k+1)(1-alpha))`-th smallest replica.
pub fn mc_gof<R: Rng + ?Sized>(
    x: &crate::model::CountTable,
    params: &PrivacyParams,
    alpha: f64,
    p0: &ProbabilityVector,
    k: usize,
    rng: &mut R,
) -> Result<TestOutcome> {
    let t = mc_threshold_index(k, alpha)?;
    let n = x.n();
    let w = add_noise(x, params, rng)?;
    let observed = gof_statistic(&w, p0)?.value;

    let mut replicas = Vec::with_capacity(k);
    for _ in 0..k {
        let data = sample_multinomial(n, p0, rng)?;
        let noisy = add_noise(&data, params, rng)?;
        replicas.push(gof_statistic(&noisy, p0)?.value);
    }
    replicas.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    Ok(TestOutcome::threshold(observed, replicas[t - 1]))
}

/// Critical value used by [`priv_gof`]; data-independent, so sweeps compute
/// it once per configuration.
pub fn priv_gof_critical_value(
    p0: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
    alpha: f64,
) -> Result<f64> {
    gof_null_distribution(p0, n, params)?.critical_value(alpha)
}

/// Asymptotic private goodness-of-fit test (Gaussian mechanism only): the
/// noisy statistic against the quantile of its weighted chi-squared law.
pub fn priv_gof<R: Rng + ?Sized>(
    x: &crate::model::CountTable,
    params: &PrivacyParams,
    alpha: f64,
    p0: &ProbabilityVector,
    rng: &mut R,
) -> Result<TestOutcome> {
    let critical = priv_gof_critical_value(p0, x.n(), params, alpha)?;
    priv_gof_with_critical_value(x, params, p0, critical, rng)
}

pub fn priv_gof_with_critical_value<R: Rng + ?Sized>(
    x: &crate::model::CountTable,
    params: &PrivacyParams,
    p0: &ProbabilityVector,
    critical_value: f64,
    rng: &mut R,
) -> Result<TestOutcome> {
    if params.mechanism() != crate::privacy::Mechanism::Gaussian {
        return Err(Error::UnsupportedMechanism {
            operation: "asymptotic goodness-of-fit test",
            required: "Gaussian",
        });
    }
    let w = add_noise(x, params, rng)?;
    let stat = gof_statistic(&w, p0)?;
    Ok(TestOutcome::threshold(stat.value, critical_value))
}

/// Classical Pearson independence test with the rule of thumb: reject only if
/// the statistic clears the chi-squared quantile with (r-1)(c-1) degrees of
/// freedom AND every cell count is at least 5.
pub fn indep_classical<T: Table + ?Sized>(x: &T, alpha: f64) -> Result<TestOutcome> {
    let dof = indep_dof(x)?;
    let critical = chi_squared_critical_value(dof, alpha)?;
    indep_classical_with_critical_value(x, critical)
}

fn indep_dof<T: Table + ?Sized>(x: &T) -> Result<usize> {
    let (r, c) = (x.rows(), x.cols());
    if r < 2 || c < 2 {
        return Err(Error::invalid(
            "independence testing needs at least 2x2 tables",
        ));
    }
    Ok((r - 1) * (c - 1))
}

pub fn indep_classical_with_critical_value<T: Table + ?Sized>(
    x: &T,
    critical_value: f64,
) -> Result<TestOutcome> {
    indep_dof(x)?;
    let (pi1, pi2) = indep_mle(x)?;
    let p_hat = product_probability(&pi1, &pi2);
    let stat = indep_statistic(x, &p_hat)?;
    let mut outcome = TestOutcome::threshold(stat.value, critical_value);
    if x.min_cell() < 5.0 {
        outcome.decision = Decision::FailToReject;
        outcome.reason = DecisionReason::RuleOfThumb;
    }
    Ok(outcome)
}

/// Monte-Carlo independence test.
///
/// Adds noise, estimates the marginals by the two-step MLE, and compares the
/// noisy statistic at the estimated product probabilities against replicas
/// generated from those estimates (fresh multinomial table, fresh noise,
/// fresh two-step estimate per replica). Any withheld estimate, on the data
/// or on a replica, fails to reject.
pub fn mc_indep<R: Rng + ?Sized>(
    x: &crate::model::CountTable,
    params: &PrivacyParams,
    alpha: f64,
    k: usize,
    cfg: &ProjectionConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    let t = mc_threshold_index(k, alpha)?;
    indep_dof(x)?;
    let n = x.n();
    let (rows, cols) = (x.rows(), x.cols());

    let w = add_noise(x, params, rng)?;
    let (_, estimate) = two_step_mle_with_table(&w, cfg)?;
    let Some((pi1, pi2)) = estimate else {
        return Ok(null_mle_outcome());
    };
    let p_tilde = product_probability(&pi1, &pi2);
    let observed = indep_statistic(&w, &p_tilde)?.value;

    let mut replicas = Vec::with_capacity(k);
    for _ in 0..k {
        let table = sample_contingency_table(n, &p_tilde, rows, cols, rng)?;
        let noisy = add_noise(&table, params, rng)?;
        let (_, replica_estimate) = two_step_mle_with_table(&noisy, cfg)?;
        let Some((r1, r2)) = replica_estimate else {
            return Ok(null_mle_outcome_with_statistic(observed));
        };
        // Each replica is scored at its own re-estimated probabilities.
        let p_rep = product_probability(&r1, &r2);
        replicas.push(indep_statistic(&noisy, &p_rep)?.value);
    }
    replicas.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    Ok(TestOutcome::threshold(observed, replicas[t - 1]))
}

fn null_mle_outcome() -> TestOutcome {
    TestOutcome {
        decision: Decision::FailToReject,
        statistic: f64::NAN,
        critical_value: None,
        reason: DecisionReason::NullMle,
    }
}

fn null_mle_outcome_with_statistic(statistic: f64) -> TestOutcome {
    TestOutcome {
        decision: Decision::FailToReject,
        statistic,
        critical_value: None,
        reason: DecisionReason::NullMle,
    }
}

/// Asymptotic private independence test (Gaussian mechanism only).
///
/// The critical value is data-dependent: it comes from the weighted
/// chi-squared law at the marginals estimated from this very table, so each
/// run recomputes it.
pub fn priv_indep<R: Rng + ?Sized>(
    x: &crate::model::CountTable,
    params: &PrivacyParams,
    alpha: f64,
    cfg: &ProjectionConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    if params.mechanism() != crate::privacy::Mechanism::Gaussian {
        return Err(Error::UnsupportedMechanism {
            operation: "asymptotic independence test",
            required: "Gaussian",
        });
    }
    indep_dof(x)?;
    let w = add_noise(x, params, rng)?;
    let (_, estimate) = two_step_mle_with_table(&w, cfg)?;
    let Some((pi1, pi2)) = estimate else {
        return Ok(null_mle_outcome());
    };
    let p_tilde = product_probability(&pi1, &pi2);
    let observed = indep_statistic(&w, &p_tilde)?.value;
    let critical = indep_null_distribution(&pi1, &pi2, x.n(), params)?.critical_value(alpha)?;
    Ok(TestOutcome::threshold(observed, critical))
}
