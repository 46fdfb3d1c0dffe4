//! Two-step MLE for noisy contingency tables.
//!
//! Step one projects the noisy table onto the feasible polytope
//! `{x : sum x = n, x >= 0}` by minimizing the elastic-net objective
//!
//! ```text
//! (1 - gamma) ||w - x||_1 + gamma ||w - x||_2^2
//! ```
//!
//! with `gamma = 1` for Gaussian noise (plain Euclidean projection) and a
//! small positive `gamma` for Laplace noise, where the quadratic term makes
//! the otherwise non-unique L1 projection unique. Step two applies the
//! closed-form marginal MLE to the projected table, unless any projected cell
//! falls below 5, in which case the estimate is withheld (the chi-squared
//! rule of thumb).

use crate::error::{Error, Result};
use crate::model::{ProbabilityVector, Table};
use crate::privacy::{Mechanism, NoisyTable, PrivacyParams};
use crate::stats::indep_mle;

/// Configuration for the elastic-net projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    gamma: f64,
    tolerance: f64,
    max_iterations: usize,
}

impl ProjectionConfig {
    /// `gamma` must lie in (0, 1]: the quadratic term is what makes the
    /// minimizer unique, so a pure L1 objective is not accepted.
    pub fn new(gamma: f64, tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        if !(tolerance > 0.0) || !tolerance.is_finite() {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(Self {
            gamma,
            tolerance,
            max_iterations,
        })
    }

    /// Defaults per mechanism: `gamma = 1` for Gaussian, `gamma = 0.01` for
    /// Laplace; tolerance 1e-8, at most 50,000 iterations.
    pub fn for_mechanism(params: &PrivacyParams) -> Self {
        let gamma = match params.mechanism() {
            Mechanism::Gaussian => 1.0,
            Mechanism::Laplace => 0.01,
        };
        Self::new(gamma, 1e-8, 50_000).expect("defaults are valid")
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }
}

/// A real-valued table on the feasible polytope: nonnegative cells summing to
/// the public total.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTable {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    n: u64,
}

impl ProjectedTable {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

impl Table for ProjectedTable {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn total(&self) -> u64 {
        self.n
    }
    fn cell(&self, index: usize) -> f64 {
        self.values[index]
    }
}

/// Solver telemetry returned by [`project_table_detailed`].
#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub table: ProjectedTable,
    pub iterations: usize,
    /// Objective value at the feasible iterate, per iteration (empty for the
    /// closed-form gamma = 1 path).
    pub objective_trace: Vec<f64>,
}

/// Projects a noisy table onto `{x >= 0, sum x = n}` under the elastic-net
/// objective. The public total `n` comes with the table.
pub fn project_table(w: &NoisyTable, cfg: &ProjectionConfig) -> Result<ProjectedTable> {
    Ok(project_table_detailed(w, cfg)?.table)
}

/// As [`project_table`], also reporting iteration count and objective trace.
pub fn project_table_detailed(
    w: &NoisyTable,
    cfg: &ProjectionConfig,
) -> Result<ProjectionReport> {
    let n = w.n() as f64;
    let (values, iterations, objective_trace) = if cfg.gamma == 1.0 {
        (simplex_projection(w.values(), n), 0, Vec::new())
    } else {
        elastic_net_projection(w.values(), n, cfg)?
    };
    let mut values = values;
    for v in &mut values {
        if *v < 0.0 {
            if *v < -1e-10 {
                return Err(Error::numeric(
                    "projection",
                    format!("infeasible solution: cell {v} below -1e-10"),
                ));
            }
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - n).abs() > 1e-8 * n.max(1.0) {
        return Err(Error::numeric(
            "projection",
            format!("infeasible solution: cells sum to {sum}, expected {n}"),
        ));
    }
    Ok(ProjectionReport {
        table: ProjectedTable {
            values,
            rows: w.rows(),
            cols: w.cols(),
            n: w.n(),
        },
        iterations,
        objective_trace,
    })
}

/// Exact Euclidean projection onto `{x >= 0, sum x = total}` by the
/// sort-and-threshold algorithm: with entries sorted descending, find the
/// largest k with `v_(k) > (sum of top k - total) / k`, subtract that
/// threshold, clip at zero.
pub fn simplex_projection(values: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("cells are finite"));
    let mut cumsum = 0.0;
    let mut theta = (sorted.iter().sum::<f64>() - total) / sorted.len() as f64;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - total) / (k + 1) as f64;
        if v - candidate <= 0.0 {
            break;
        }
        theta = candidate;
    }
    values.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn elastic_net_objective(w: &[f64], x: &[f64], gamma: f64) -> f64 {
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for (wi, xi) in w.iter().zip(x) {
        let d = wi - xi;
        l1 += d.abs();
        l2 += d * d;
    }
    (1.0 - gamma) * l1 + gamma * l2
}

/// Splitting iteration for the gamma < 1 objective.
///
/// Alternates between the separable proximal step of
/// `(1-gamma)|y|_1 + gamma|y|_2^2` (a soft threshold in `y = x - w`) and the
/// exact Euclidean projection onto the constraint polytope, coupled through a
/// scaled dual variable. Terminates on primal and dual residuals below
/// `tolerance * (sqrt(d) + scale)`; returns the feasible iterate.
fn elastic_net_projection(
    w: &[f64],
    total: f64,
    cfg: &ProjectionConfig,
) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let dim = w.len();
    let gamma = cfg.gamma;
    let rho = 1.0;
    let sqrt_dim = (dim as f64).sqrt();

    let clipped: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
    let mut z = simplex_projection(&clipped, total);
    let mut x = vec![0.0; dim];
    let mut dual = vec![0.0; dim];
    let mut trace = Vec::new();

    for iter in 0..cfg.max_iterations {
        // x-update: prox of the elastic-net distance to w.
        for i in 0..dim {
            let a = rho * (z[i] - dual[i] - w[i]);
            let y = a.signum() * (a.abs() - (1.0 - gamma)).max(0.0) / (2.0 * gamma + rho);
            x[i] = w[i] + y;
        }
        // z-update: projection onto the polytope.
        let target: Vec<f64> = (0..dim).map(|i| x[i] + dual[i]).collect();
        let z_new = simplex_projection(&target, total);
        let mut primal = 0.0;
        let mut dual_res = 0.0;
        let mut x_norm = 0.0;
        let mut z_norm = 0.0;
        for i in 0..dim {
            let pr = x[i] - z_new[i];
            primal += pr * pr;
            let dr = rho * (z_new[i] - z[i]);
            dual_res += dr * dr;
            x_norm += x[i] * x[i];
            z_norm += z_new[i] * z_new[i];
        }
        z = z_new;
        for i in 0..dim {
            dual[i] += x[i] - z[i];
        }
        trace.push(elastic_net_objective(w, &z, gamma));

        let scale = x_norm.max(z_norm).sqrt().max(1.0);
        let eps = cfg.tolerance * (sqrt_dim + scale);
        if primal.sqrt() < eps && dual_res.sqrt() < eps {
            return Ok((z, iter + 1, trace));
        }
    }
    Err(Error::numeric(
        "projection",
        format!(
            "splitting iteration did not converge within {} iterations (objective {:.6e})",
            cfg.max_iterations,
            trace.last().copied().unwrap_or(f64::NAN)
        ),
    ))
}

/// Two-step estimate of the independence marginals from a noisy table:
/// project, then apply the closed-form MLE. Returns `None` when any projected
/// cell is strictly below 5, the regime where the chi-squared approximation
/// is not trusted.
pub fn two_step_mle(
    w: &NoisyTable,
    cfg: &ProjectionConfig,
) -> Result<Option<(ProbabilityVector, ProbabilityVector)>> {
    let projected = project_table(w, cfg)?;
    if projected.min_cell() < 5.0 {
        return Ok(None);
    }
    let (pi1, pi2) = indep_mle(&projected)?;
    Ok(Some((pi1, pi2)))
}

/// Two-step estimate that also returns the projected table (the decision
/// procedures reuse it).
pub fn two_step_mle_with_table(
    w: &NoisyTable,
    cfg: &ProjectionConfig,
) -> Result<(ProjectedTable, Option<(ProbabilityVector, ProbabilityVector)>)> {
    let projected = project_table(w, cfg)?;
    if projected.min_cell() < 5.0 {
        return Ok((projected, None));
    }
    let (pi1, pi2) = indep_mle(&projected)?;
    Ok((projected, Some((pi1, pi2))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CountTable;
    use crate::privacy::add_noise;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy(values: Vec<f64>, n: u64) -> NoisyTable {
        let d = values.len();
        NoisyTable::new(1, d, values, n, PrivacyParams::laplace(1.0).unwrap()).unwrap()
    }

    fn noisy_2x2(values: Vec<f64>, n: u64) -> NoisyTable {
        NoisyTable::new(2, 2, values, n, PrivacyParams::laplace(1.0).unwrap()).unwrap()
    }

    fn gaussian_cfg() -> ProjectionConfig {
        ProjectionConfig::new(1.0, 1e-8, 50_000).unwrap()
    }

    fn laplace_cfg() -> ProjectionConfig {
        ProjectionConfig::new(0.01, 1e-8, 50_000).unwrap()
    }

    /// Independent oracle for the Euclidean projection: bisection on the
    /// water level theta with x(theta) = max(w - theta, 0).
    fn projection_by_bisection(values: &[f64], total: f64) -> Vec<f64> {
        let mut lo = values.iter().cloned().fold(f64::MAX, f64::min) - total - 1.0;
        let mut hi = values.iter().cloned().fold(f64::MIN, f64::max) + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let sum: f64 = values.iter().map(|v| (v - mid).max(0.0)).sum();
            if sum > total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        values.iter().map(|v| (v - theta).max(0.0)).collect()
    }

    /// Exact oracle for the elastic-net projection on small instances:
    /// enumerate, per cell, whether the optimum has x = 0, x > w, x < w, or
    /// x = w; each piece is an equality-constrained quadratic with a
    /// closed-form multiplier. Consistent pieces are compared by objective.
    fn elastic_net_by_enumeration(w: &[f64], total: f64, gamma: f64) -> (Vec<f64>, f64) {
        let d = w.len();
        let mut best: Option<(Vec<f64>, f64)> = None;
        // Per-cell state: 0 -> x=0, 1 -> x>w, 2 -> 0<x<w, 3 -> x=w.
        let states = 4usize.pow(d as u32);
        for code in 0..states {
            let mut state = Vec::with_capacity(d);
            let mut c = code;
            for _ in 0..d {
                state.push(c % 4);
                c /= 4;
            }
            let mut x = vec![0.0; d];
            let mut fixed_sum = 0.0;
            let mut free = Vec::new();
            let mut sign_sum = 0.0;
            let mut w_sum = 0.0;
            let mut consistent = true;
            for i in 0..d {
                match state[i] {
                    0 => {}
                    3 => {
                        if w[i] < 0.0 {
                            consistent = false;
                            break;
                        }
                        fixed_sum += w[i];
                    }
                    s => {
                        free.push(i);
                        let sg = if s == 1 { 1.0 } else { -1.0 };
                        sign_sum += sg;
                        w_sum += w[i];
                    }
                }
            }
            if !consistent {
                continue;
            }
            let budget = total - fixed_sum;
            if free.is_empty() {
                if budget.abs() > 1e-9 {
                    continue;
                }
            } else {
                // Stationarity: (1-gamma) s_i + 2 gamma (x_i - w_i) + mult = 0.
                let f = free.len() as f64;
                let mult = (2.0 * gamma * (w_sum - budget) - (1.0 - gamma) * sign_sum) / f;
                let mut ok = true;
                for &i in &free {
                    let sg = if state[i] == 1 { 1.0 } else { -1.0 };
                    let xi = w[i] - ((1.0 - gamma) * sg + mult) / (2.0 * gamma);
                    if xi < -1e-9 {
                        ok = false;
                        break;
                    }
                    if state[i] == 1 && xi < w[i] - 1e-9 {
                        ok = false;
                        break;
                    }
                    if state[i] == 2 && xi > w[i] + 1e-9 {
                        ok = false;
                        break;
                    }
                    x[i] = xi.max(0.0);
                }
                if !ok {
                    continue;
                }
            }
            for i in 0..d {
                if state[i] == 3 {
                    x[i] = w[i];
                }
            }
            let sum: f64 = x.iter().sum();
            if (sum - total).abs() > 1e-6 * total.max(1.0) {
                continue;
            }
            let obj = elastic_net_objective(w, &x, gamma);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((x, obj));
            }
        }
        best.expect("at least one consistent piece exists")
    }

    #[test]
    fn feasible_point_is_fixed_gamma_one() {
        let w = noisy(vec![10.0, 20.0, 30.0, 40.0], 100);
        let x = project_table(&w, &gaussian_cfg()).unwrap();
        assert_eq!(x.values(), w.values());
    }

    #[test]
    fn euclidean_projection_clamps_negative_cells() {
        let w = noisy(vec![30.0, 30.0, -10.0, -10.0], 40);
        let x = project_table(&w, &gaussian_cfg()).unwrap();
        let expect = [20.0, 20.0, 0.0, 0.0];
        for (a, b) in x.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", x.values());
        }
    }

    #[test]
    fn projection_idempotent_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(10..1000) as f64;
            let d = if rng.random_bool(0.5) { 4 } else { 12 };
            let vals: Vec<f64> = (0..d)
                .map(|_| n / d as f64 + rng.random_range(-3.0 * n..3.0 * n) / d as f64)
                .collect();
            let w = noisy(vals, n as u64);
            let x = project_table(&w, &gaussian_cfg()).unwrap();
            let sum: f64 = x.values().iter().sum();
            assert!((sum - n).abs() <= 1e-8 * n);
            assert!(x.min_cell() >= 0.0);

            let re = simplex_projection(x.values(), n);
            for (a, b) in x.values().iter().zip(&re) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn euclidean_projection_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..1000 {
            let (r, c) = if rng.random_bool(0.5) { (2, 2) } else { (3, 4) };
            let d = r * c;
            let n = rng.random_range(10..5000) as f64;
            let vals: Vec<f64> = (0..d)
                .map(|_| n / d as f64 + rng.random_range(-200.0..200.0))
                .collect();
            let ours = simplex_projection(&vals, n);
            let oracle = projection_by_bisection(&vals, n);
            for (a, b) in ours.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "ours {ours:?} oracle {oracle:?}");
            }
        }
    }

    #[test]
    fn elastic_net_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for trial in 0..100 {
            let d = if trial % 2 == 0 { 4 } else { 6 };
            let n = rng.random_range(20..2000) as f64;
            let vals: Vec<f64> = (0..d)
                .map(|_| n / d as f64 + rng.random_range(-60.0..60.0))
                .collect();
            let w = noisy(vals.clone(), n as u64);
            let x = project_table(&w, &laplace_cfg()).unwrap();
            let ours = elastic_net_objective(&vals, x.values(), 0.01);
            let (_, oracle) = elastic_net_by_enumeration(&vals, n, 0.01);
            assert!(
                (ours - oracle).abs() <= 1e-6 * oracle.max(1.0),
                "objective {ours} vs oracle {oracle} for {vals:?}"
            );
        }
    }

    #[test]
    fn objective_monotone_along_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..50 {
            let n = rng.random_range(20..2000) as f64;
            let vals: Vec<f64> = (0..4)
                .map(|_| n / 4.0 + rng.random_range(-80.0..80.0))
                .collect();
            let w = noisy(vals, n as u64);
            let report = project_table_detailed(&w, &laplace_cfg()).unwrap();
            for pair in report.objective_trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0),
                    "objective increased: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn two_step_mle_on_clean_table() {
        let x = CountTable::new(2, 2, vec![10, 20, 30, 40]).unwrap();
        let params = PrivacyParams::gaussian(0.1, 1e-6).unwrap().with_scale_override(0.0);
        let w = add_noise(&x, &params, &mut ChaCha8Rng::seed_from_u64(35)).unwrap();
        let cfg = ProjectionConfig::for_mechanism(&params);
        let (pi1, pi2) = two_step_mle(&w, &cfg).unwrap().expect("all cells >= 5");
        assert_eq!(pi1.entries(), &[0.3, 0.7]);
        assert_eq!(pi2.entries(), &[0.4, 0.6]);
    }

    #[test]
    fn two_step_mle_null_below_five() {
        // A feasible table whose smallest cell is 4.9 stays fixed under
        // projection and must be withheld.
        let w = noisy_2x2(vec![4.9, 15.1, 40.0, 40.0], 100);
        let out = two_step_mle(&w, &gaussian_cfg()).unwrap();
        assert!(out.is_none());

        let ok = noisy_2x2(vec![5.0, 15.0, 40.0, 40.0], 100);
        assert!(two_step_mle(&ok, &gaussian_cfg()).unwrap().is_some());
    }

    #[test]
    fn config_validation() {
        assert!(ProjectionConfig::new(0.0, 1e-8, 100).is_err());
        assert!(ProjectionConfig::new(1.1, 1e-8, 100).is_err());
        assert!(ProjectionConfig::new(0.5, 0.0, 100).is_err());
        assert!(ProjectionConfig::new(0.5, 1e-8, 0).is_err());
        let params = PrivacyParams::laplace(0.1).unwrap();
        assert_eq!(ProjectionConfig::for_mechanism(&params).gamma(), 0.01);
        let params = PrivacyParams::gaussian(0.1, 1e-6).unwrap();
        assert_eq!(ProjectionConfig::for_mechanism(&params).gamma(), 1.0);
    }

    #[test]
    fn laplace_path_feasible_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for &n in &[100u64, 20_000, 100_000] {
            let base = n as f64 / 4.0;
            let vals: Vec<f64> = (0..4)
                .map(|_| base + rng.random_range(-60.0..60.0))
                .collect();
            let w = noisy(vals, n);
            let x = project_table(&w, &laplace_cfg()).unwrap();
            let sum: f64 = x.values().iter().sum();
            assert!((sum - n as f64).abs() <= 1e-8 * n as f64);
            assert!(x.min_cell() >= 0.0);
        }
    }
}
