//! Chi-squared statistics and the closed-form MLE for the independence null.

use crate::error::{Error, Result};
use crate::model::{ProbabilityVector, Table};

/// A computed chi-squared statistic together with the expected probabilities
/// and sample size that produced it.
#[derive(Debug, Clone)]
pub struct ChiSquaredValue {
    pub value: f64,
    pub expected: ProbabilityVector,
    pub n: u64,
}

/// Goodness-of-fit statistic `sum_i (x_i - n p0_i)^2 / (n p0_i)`.
///
/// Works on raw counts and on noisy tables alike; fed a noisy table this is
/// the private statistic.
pub fn gof_statistic<T: Table + ?Sized>(
    x: &T,
    p0: &ProbabilityVector,
) -> Result<ChiSquaredValue> {
    expected_statistic(x, p0, "goodness-of-fit null")
}

/// Independence statistic `sum_ij (x_ij - n phat_ij)^2 / (n phat_ij)` with an
/// estimated cell-probability vector.
pub fn indep_statistic<T: Table + ?Sized>(
    x: &T,
    p_hat: &ProbabilityVector,
) -> Result<ChiSquaredValue> {
    expected_statistic(x, p_hat, "estimated cell probabilities")
}

fn expected_statistic<T: Table + ?Sized>(
    x: &T,
    p: &ProbabilityVector,
    what: &str,
) -> Result<ChiSquaredValue> {
    if x.num_cells() != p.dim() {
        return Err(Error::invalid(format!(
            "table has {} cells but {what} has {}",
            x.num_cells(),
            p.dim()
        )));
    }
    if x.total() == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    p.require_strictly_positive(what)?;
    let n = x.total() as f64;
    let mut value = 0.0;
    for i in 0..x.num_cells() {
        let expected = n * p.get(i);
        let diff = x.cell(i) - expected;
        value += diff * diff / expected;
    }
    Ok(ChiSquaredValue {
        value,
        expected: p.clone(),
        n: x.total(),
    })
}

/// The product distribution `p_ij = pi1_i * pi2_j`, flattened row-major.
pub fn product_probability(
    pi1: &ProbabilityVector,
    pi2: &ProbabilityVector,
) -> ProbabilityVector {
    let mut entries = Vec::with_capacity(pi1.dim() * pi2.dim());
    for i in 0..pi1.dim() {
        for j in 0..pi2.dim() {
            entries.push(pi1.get(i) * pi2.get(j));
        }
    }
    // The exact sum is (sum pi1)(sum pi2); dividing out the tiny float drift
    // keeps the result inside the probability-vector tolerance.
    let sum: f64 = entries.iter().sum();
    for e in &mut entries {
        *e /= sum;
    }
    ProbabilityVector::new(entries).expect("products of probabilities form a distribution")
}

/// Marginal MLE under independence: `pi1_i = row_i / n`, `pi2_j = col_j / n`.
///
/// The formula is count-agnostic, so real-valued (denoised) tables are
/// accepted; their marginals must still be nonnegative and total `n`.
pub fn indep_mle<T: Table + ?Sized>(
    x: &T,
) -> Result<(ProbabilityVector, ProbabilityVector)> {
    if x.total() == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let (r, c) = (x.rows(), x.cols());
    let n = x.total() as f64;
    let mut rows = vec![0.0; r];
    let mut cols = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            let v = x.cell(i * c + j);
            rows[i] += v;
            cols[j] += v;
        }
    }
    let pi1 = ProbabilityVector::new(rows.iter().map(|v| v / n).collect())?;
    let pi2 = ProbabilityVector::new(cols.iter().map(|v| v / n).collect())?;
    Ok((pi1, pi2))
}
