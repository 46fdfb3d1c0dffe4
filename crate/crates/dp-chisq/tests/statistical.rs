//! Heavier statistical behavior checks: significance bands and power curves
//! that go beyond the per-module unit tests.

use dp_chisq::asymptotics::{gof_alternate_distribution, gof_null_distribution};
use dp_chisq::harness::{
    run_power, run_significance, AlternateSpec, ExperimentConfig, P0Spec, TestKind,
};
use dp_chisq::model::{GofAlternate, ProbabilityVector};
use dp_chisq::privacy::{Mechanism, PrivacyParams};

fn config(test: TestKind) -> ExperimentConfig {
    ExperimentConfig {
        schema: 1,
        test,
        mechanism: Some(Mechanism::Gaussian),
        epsilon: Some(0.1),
        delta: Some(1e-6),
        alpha: 0.05,
        p0: None,
        pi1: None,
        pi2: None,
        alternate: None,
        n_grid: vec![],
        trials: 0,
        k: None,
        gamma: None,
        seed: 0,
        workers: None,
        skip_failures: false,
    }
}

/// The asymptotic independence test holds its significance near the target at
/// large n, where the per-trial thresholds stabilize.
#[test]
fn priv_indep_significance_band_large_n() {
    let mut cfg = config(TestKind::PrivIndep);
    cfg.pi1 = Some(vec![0.5, 0.5]);
    cfg.pi2 = Some(vec![0.5, 0.5]);
    cfg.n_grid = vec![50_000];
    cfg.trials = 1000;
    cfg.seed = 2001;
    let result = run_significance(&cfg).unwrap();
    let sig = result.rows[0].rate;
    assert!(sig >= 0.93, "significance {sig} below 0.93");
    // The data-dependent critical value should have been computed on
    // essentially every trial at this n.
    assert!(result.rows[0].mean_critical_value.is_some());
}

/// Power of the asymptotic goodness-of-fit test is nondecreasing along the
/// sample-size grid at a fixed perturbation (at most one 2-SE violation).
#[test]
fn priv_gof_power_nondecreasing() {
    let mut cfg = config(TestKind::PrivGof);
    cfg.p0 = Some(P0Spec::Uniform { d: 4 });
    cfg.alternate = Some(AlternateSpec::GofFixed {
        delta: 0.01,
        signs: vec![1, -1, 1, -1],
    });
    cfg.n_grid = vec![1_000, 10_000, 100_000, 1_000_000];
    cfg.trials = 200;
    cfg.seed = 2002;
    let result = run_power(&cfg).unwrap();
    let mut violations = 0;
    for pair in result.rows.windows(2) {
        let slack = 2.0 * (pair[0].se.powi(2) + pair[1].se.powi(2)).sqrt();
        if pair[1].rate < pair[0].rate - slack {
            violations += 1;
        }
    }
    assert!(
        violations <= 1,
        "power decreased more than once: {:?}",
        result.rows.iter().map(|r| r.rate).collect::<Vec<_>>()
    );
    // The far end of the grid must actually have power.
    assert!(result.rows.last().unwrap().rate > 0.9);
}

/// The decomposed alternate law predicts the Monte-Carlo power of the
/// asymptotic test: P(alternate law >= null critical value) matches the
/// empirical rejection rate under the alternative.
#[test]
fn alternate_law_predicts_power() {
    let p0 = ProbabilityVector::uniform(4);
    let params = PrivacyParams::gaussian(0.1, 1e-6).unwrap();
    let n = 100_000;
    let alt = GofAlternate::Fixed {
        delta: 0.01,
        signs: vec![1, -1, -1, 1],
    };

    let tau = gof_null_distribution(&p0, n, &params)
        .unwrap()
        .critical_value(0.05)
        .unwrap();
    let predicted = gof_alternate_distribution(&p0, &alt, n, &params)
        .unwrap()
        .tail_probability(tau)
        .unwrap();

    let mut cfg = config(TestKind::PrivGof);
    cfg.p0 = Some(P0Spec::Uniform { d: 4 });
    cfg.alternate = Some(AlternateSpec::GofFixed {
        delta: 0.01,
        signs: vec![1, -1, -1, 1],
    });
    cfg.n_grid = vec![n];
    cfg.trials = 800;
    cfg.seed = 2003;
    let empirical = run_power(&cfg).unwrap().rows[0].rate;

    let se = (empirical * (1.0 - empirical) / 800.0).sqrt();
    assert!(
        (empirical - predicted).abs() < 3.0 * se + 0.03,
        "empirical power {empirical:.4} vs predicted {predicted:.4}"
    );
}

/// A zero perturbation makes the alternative the null, so the power of a
/// threshold test collapses to its Type I error rate.
#[test]
fn power_at_zero_perturbation_is_alpha() {
    let mut cfg = config(TestKind::PrivGof);
    cfg.p0 = Some(P0Spec::Uniform { d: 4 });
    cfg.alternate = Some(AlternateSpec::GofScaled { delta_tilde: 0.0 });
    cfg.n_grid = vec![10_000];
    cfg.trials = 1000;
    cfg.seed = 2005;
    let result = run_power(&cfg).unwrap();
    let power = result.rows[0].rate;
    assert!(
        (power - 0.05).abs() < 0.03,
        "power at the null {power} should be near alpha"
    );
}

/// Monte-Carlo goodness of fit stays conservative when alpha is not a round
/// number and k sits just above the 1/alpha floor.
#[test]
fn mc_gof_floor_k_significance() {
    let mut cfg = config(TestKind::McGof);
    cfg.mechanism = Some(Mechanism::Laplace);
    cfg.delta = None;
    cfg.p0 = Some(P0Spec::Uniform { d: 4 });
    cfg.alpha = 0.1;
    cfg.k = Some(11);
    cfg.n_grid = vec![2_000];
    cfg.trials = 2_000;
    cfg.seed = 2004;
    let result = run_significance(&cfg).unwrap();
    let reject_rate = 1.0 - result.rows[0].rate;
    let bound = 0.1 + 3.0 * (0.1f64 * 0.9 / 2000.0).sqrt();
    assert!(reject_rate <= bound, "rejection rate {reject_rate}");
}
