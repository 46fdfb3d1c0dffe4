//! Covariance and weight-matrix constructions behind the asymptotic tests.
//!
//! Under the null, the standardized count vector `U_i = (X_i - n p_i) / sqrt(n p_i)`
//! is asymptotically `N(0, Sigma)` with `Sigma = I - sqrt(p) sqrt(p)^T`, an
//! idempotent matrix of rank d-1. Stacking `U` with the standardized noise
//! vector `V = Z / sigma` gives `W = (U, V)` with covariance
//! `Sigma' = diag(Sigma, I)`, and the noisy chi-squared statistic is the
//! quadratic form `W^T A W` with
//!
//! ```text
//! A = [ I      Lambda   ]        Lambda = Diag(sigma / sqrt(n p_i))
//!     [ Lambda Lambda^2 ],
//! ```
//!
//! Writing `Sigma' = B B^T` with `B^T B = I_r`, the law of `W^T A W` is the
//! weighted chi-squared combination whose weights are the eigenvalues of
//! `B^T A B`; under a mean shift `mu'` the components pick up noncentralities
//! and a Gaussian remainder from the zero-eigenvalue directions. These laws
//! are returned as [`QuadFormDistribution`] values for the tail machinery.
//!
//! For independence testing the same construction runs with the estimated
//! product probabilities, where the covariance of the standardized table is
//! `I - sqrt(p) sqrt(p)^T - Gamma (Gamma^T Gamma)^{-1} Gamma^T` and `Gamma`
//! rescales the Jacobian of the product map by `Diag(sqrt(p))^{-1}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GofAlternate, ProbabilityVector};
use crate::privacy::{Mechanism, PrivacyParams};
use crate::quadform::QuadFormDistribution;
use crate::stats::product_probability;

/// Eigenvalues of a projector must sit within this distance of {0, 1}.
const PROJECTOR_EIGEN_TOL: f64 = 1e-6;
/// Relative cutoff separating positive weights from numerical zeros.
const WEIGHT_SPLIT_RATIO: f64 = 1e-10;

/// An idempotent covariance matrix together with its rank factor `B`
/// (`B B^T = Sigma`, `B^T B = I_rank`).
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma: DMatrix<f64>,
    rank: usize,
    factor: DMatrix<f64>,
}

impl CovarianceModel {
    /// Factorizes a symmetric idempotent matrix via its eigendecomposition.
    /// Eigenvalues within 1e-6 of 1 are kept, within 1e-6 of 0 are discarded,
    /// and anything else fails loudly: it signals a malformed covariance.
    pub fn from_projector(sigma: DMatrix<f64>) -> Result<Self> {
        let n = sigma.nrows();
        if sigma.ncols() != n {
            return Err(Error::invalid("covariance matrix must be square"));
        }
        let trace = sigma.trace();
        let eig = SymmetricEigen::new(sigma.clone());
        let mut keep = Vec::new();
        for (i, &ev) in eig.eigenvalues.iter().enumerate() {
            if (ev - 1.0).abs() <= PROJECTOR_EIGEN_TOL {
                keep.push(i);
            } else if ev.abs() > PROJECTOR_EIGEN_TOL {
                return Err(Error::numeric(
                    "projector factorization",
                    format!("eigenvalue {ev} is neither 0 nor 1: matrix is not idempotent"),
                ));
            }
        }
        let rank = keep.len();
        if (trace - rank as f64).abs() > 1e-6 {
            return Err(Error::numeric(
                "projector factorization",
                format!("trace {trace} does not match rank {rank}"),
            ));
        }
        let mut factor = DMatrix::zeros(n, rank);
        for (j, &i) in keep.iter().enumerate() {
            factor.set_column(j, &eig.eigenvectors.column(i));
        }
        Ok(Self {
            sigma,
            rank,
            factor,
        })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The `dim x rank` factor `B`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

/// The positive semi-definite block matrix `A` and its diagonal noise block.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    matrix: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl WeightMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The diagonal of `Lambda = Diag(sigma / sqrt(n p_i))`.
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }
}

/// `Sigma = I - sqrt(p0) sqrt(p0)^T`, the rank d-1 projector orthogonal to
/// `sqrt(p0)`.
pub fn build_gof_sigma(p0: &ProbabilityVector) -> Result<CovarianceModel> {
    p0.require_strictly_positive("covariance construction")?;
    CovarianceModel::from_projector(centering_projector(p0.entries()))
}

fn centering_projector(p: &[f64]) -> DMatrix<f64> {
    let d = p.len();
    let sqrt_p = DVector::from_iterator(d, p.iter().map(|v| v.sqrt()));
    DMatrix::identity(d, d) - &sqrt_p * sqrt_p.transpose()
}

/// `A = [I, Lambda; Lambda, Lambda^2]` with `Lambda_ii = sigma / sqrt(n p_i)`.
/// Only defined for the Gaussian mechanism; asymptotic critical values for
/// Laplace noise are out of reach, use the Monte-Carlo tests instead.
pub fn build_weight_matrix(
    p0: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<WeightMatrix> {
    if params.mechanism() != Mechanism::Gaussian {
        return Err(Error::UnsupportedMechanism {
            operation: "asymptotic weight matrix",
            required: "Gaussian",
        });
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    p0.require_strictly_positive("weight matrix")?;
    let sigma = params.gaussian_sigma()?;
    let nf = n as f64;
    let lambda = DVector::from_iterator(
        p0.dim(),
        p0.entries().iter().map(|p| sigma / (nf * p).sqrt()),
    );
    Ok(WeightMatrix {
        matrix: block_weight_matrix(&lambda),
        lambda,
    })
}

fn block_weight_matrix(lambda: &DVector<f64>) -> DMatrix<f64> {
    let d = lambda.len();
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        a[(i, i)] = 1.0;
        a[(i, d + i)] = lambda[i];
        a[(d + i, i)] = lambda[i];
        a[(d + i, d + i)] = lambda[i] * lambda[i];
    }
    a
}

fn block_diag_with_identity(sigma: &DMatrix<f64>, extra: usize) -> DMatrix<f64> {
    let d = sigma.nrows();
    let mut out = DMatrix::zeros(d + extra, d + extra);
    out.view_mut((0, 0), (d, d)).copy_from(sigma);
    for i in 0..extra {
        out[(d + i, d + i)] = 1.0;
    }
    out
}

/// Eigenvalues of a symmetric matrix, descending, with drift symmetrized away.
fn symmetric_eigenvalues_desc(mut m: DMatrix<f64>) -> Vec<f64> {
    let mt = m.transpose();
    m += mt;
    m *= 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
    vals
}

/// Null law of the noisy goodness-of-fit statistic: the central weighted
/// chi-squared combination with weights from `B^T A B`.
pub fn gof_null_distribution(
    p0: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<QuadFormDistribution> {
    let (model, wm) = gof_sigma_prime_and_weights(p0, n, params)?;
    let m = model.factor().transpose() * wm.matrix() * model.factor();
    QuadFormDistribution::central(symmetric_eigenvalues_desc(m))
}

fn gof_sigma_prime_and_weights(
    p0: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<(CovarianceModel, WeightMatrix)> {
    let d = p0.dim();
    let wm = build_weight_matrix(p0, n, params)?;
    let sigma = centering_projector(p0.entries());
    let sigma_prime = block_diag_with_identity(&sigma, d);
    let model = CovarianceModel::from_projector(sigma_prime)?;
    if model.rank() != 2 * d - 1 {
        return Err(Error::numeric(
            "gof covariance",
            format!("expected rank {}, got {}", 2 * d - 1, model.rank()),
        ));
    }
    Ok((model, wm))
}

/// Law of the noisy goodness-of-fit statistic under the local alternative.
///
/// With mean shift `mu'` the quadratic form decomposes along the
/// eigenvectors `H` of `B^T A B`: positive-weight components become
/// noncentral with `nu_j = (b_j / lambda_j)^2` where `b = H^T B^T A mu'`,
/// zero-weight components contribute a mean-zero Gaussian with variance
/// `sum 4 b_j^2`, and the constant is
/// `kappa = mu'^T A mu' - sum_j b_j^2 / lambda_j`.
pub fn gof_alternate_distribution(
    p0: &ProbabilityVector,
    alt: &GofAlternate,
    n: u64,
    params: &PrivacyParams,
) -> Result<QuadFormDistribution> {
    let d = p0.dim();
    let signs = alt.sign_pattern(d)?;
    let delta_tilde = alt.delta_tilde_at(n);
    if !delta_tilde.is_finite() || delta_tilde < 0.0 {
        return Err(Error::invalid("perturbation scale must be nonnegative"));
    }
    let (model, wm) = gof_sigma_prime_and_weights(p0, n, params)?;

    // mu' = (mu, 0) with mu_i = +/- delta_tilde / sqrt(p0_i).
    let mut mu_prime = DVector::zeros(2 * d);
    for i in 0..d {
        mu_prime[i] = delta_tilde * signs[i] / p0.get(i).sqrt();
    }

    let mut m = model.factor().transpose() * wm.matrix() * model.factor();
    let mt = m.transpose();
    m += mt;
    m *= 0.5;
    let eig = SymmetricEigen::new(m);

    let a_mu = wm.matrix() * &mu_prime;
    let b_full = eig.eigenvectors.transpose() * (model.factor().transpose() * &a_mu);
    let mu_a_mu = mu_prime.dot(&a_mu);

    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .copied()
        .zip(b_full.iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("eigenvalues are finite"));
    let (lambdas, bs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (weights, nus, s2, kappa) = noncentral_decomposition(&lambdas, &bs, mu_a_mu);
    QuadFormDistribution::new(weights, nus, s2, kappa)
}

/// Splits eigenvalue/b pairs into noncentral components, Gaussian remainder,
/// and constant offset. Eigenvector sign flips only change the signs of the
/// `b_j`, which enter through squares, so the decomposition is well defined.
pub(crate) fn noncentral_decomposition(
    lambdas_desc: &[f64],
    bs: &[f64],
    mu_a_mu: f64,
) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let max_abs = lambdas_desc.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let threshold = WEIGHT_SPLIT_RATIO * max_abs;
    let mut weights = Vec::new();
    let mut nus = Vec::new();
    let mut s2 = 0.0;
    let mut kappa = mu_a_mu;
    for (&l, &b) in lambdas_desc.iter().zip(bs) {
        if l > threshold {
            weights.push(l);
            nus.push((b / l) * (b / l));
            kappa -= b * b / l;
        } else {
            // A is positive semi-definite, so b vanishes on the null space up
            // to rounding; this keeps the engine honest if it ever does not.
            s2 += 4.0 * b * b;
        }
    }
    (weights, nus, s2, kappa)
}

/// Null law of the noisy independence statistic at estimated marginals.
///
/// The standardized-table covariance is
/// `Sigma_ind = I - sqrt(p) sqrt(p)^T - Gamma (Gamma^T Gamma)^{-1} Gamma^T`
/// with `p` the product probabilities and `Gamma = Diag(sqrt(p))^{-1} grad f`,
/// where `grad f` is the `rc x (r+c-2)` Jacobian of the product map in the
/// free marginal parameters (the last entry of each marginal is one minus the
/// rest). The projector has rank (r-1)(c-1), its extension rank
/// `rc + (r-1)(c-1)`, and the weights come from `B^T A B` as in the
/// goodness-of-fit case.
pub fn indep_null_distribution(
    pi1: &ProbabilityVector,
    pi2: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<QuadFormDistribution> {
    let r = pi1.dim();
    let c = pi2.dim();
    if r < 2 || c < 2 {
        return Err(Error::invalid(
            "independence testing needs at least 2x2 tables",
        ));
    }
    for pi in [pi1, pi2] {
        if !pi.is_strictly_positive() {
            return Err(Error::invalid(
                "marginal probabilities must lie strictly inside (0,1)",
            ));
        }
    }
    if params.mechanism() != Mechanism::Gaussian {
        return Err(Error::UnsupportedMechanism {
            operation: "asymptotic independence law",
            required: "Gaussian",
        });
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }

    let p = product_probability(pi1, pi2);
    let rc = r * c;
    let gamma = scaled_jacobian(pi1, pi2, &p);

    // Gamma^T Gamma is symmetric positive definite for interior marginals;
    // solve through a Cholesky factorization with a condition-number guard.
    let gram = gamma.transpose() * &gamma;
    let gram_eig = SymmetricEigen::new(gram.clone());
    let max_ev = gram_eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min_ev = gram_eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min_ev > 0.0) || max_ev / min_ev > 1e12 {
        return Err(Error::numeric(
            "independence covariance",
            format!(
                "Jacobian Gram matrix is ill-conditioned (eigenvalues {min_ev:.3e}..{max_ev:.3e})"
            ),
        ));
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::numeric(
            "independence covariance",
            "Cholesky factorization failed".to_string(),
        )
    })?;
    let solved = chol.solve(&gamma.transpose());
    let gamma_projector = &gamma * solved;

    let mut sigma_ind = centering_projector(p.entries()) - gamma_projector;
    let st = sigma_ind.transpose();
    sigma_ind += st;
    sigma_ind *= 0.5;

    let sigma_prime = block_diag_with_identity(&sigma_ind, rc);
    let model = CovarianceModel::from_projector(sigma_prime)?;
    let expected_rank = rc + (r - 1) * (c - 1);
    if model.rank() != expected_rank {
        return Err(Error::numeric(
            "independence covariance",
            format!("expected rank {expected_rank}, got {}", model.rank()),
        ));
    }

    let wm = build_weight_matrix(&p, n, params)?;
    let m = model.factor().transpose() * wm.matrix() * model.factor();
    QuadFormDistribution::central(symmetric_eigenvalues_desc(m))
}

/// `Gamma = Diag(sqrt(p))^{-1} grad f` for the product map
/// `f_ij = pi1_i pi2_j` in the free parameters
/// `pi1_1..pi1_{r-1}, pi2_1..pi2_{c-1}`.
fn scaled_jacobian(
    pi1: &ProbabilityVector,
    pi2: &ProbabilityVector,
    p: &ProbabilityVector,
) -> DMatrix<f64> {
    let r = pi1.dim();
    let c = pi2.dim();
    let mut gamma = DMatrix::zeros(r * c, r + c - 2);
    for i in 0..r {
        for j in 0..c {
            let row = i * c + j;
            let scale = 1.0 / p.get(row).sqrt();
            for a in 0..r - 1 {
                let d1 = if i == a {
                    pi2.get(j)
                } else if i == r - 1 {
                    -pi2.get(j)
                } else {
                    0.0
                };
                gamma[(row, a)] = scale * d1;
            }
            for b in 0..c - 1 {
                let d2 = if j == b {
                    pi1.get(i)
                } else if j == c - 1 {
                    -pi1.get(i)
                } else {
                    0.0
                };
                gamma[(row, r - 1 + b)] = scale * d2;
            }
        }
    }
    gamma
}

/// Matrix snapshot for debugging the asymptotic constructions; serialized to
/// JSON behind a CLI flag.
#[derive(Debug, Serialize)]
pub struct AsymptoticDiagnostics {
    pub sigma_prime: Vec<Vec<f64>>,
    pub weight_matrix: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Diagnostics for the goodness-of-fit null construction.
pub fn gof_null_diagnostics(
    p0: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<AsymptoticDiagnostics> {
    let (model, wm) = gof_sigma_prime_and_weights(p0, n, params)?;
    let m = model.factor().transpose() * wm.matrix() * model.factor();
    Ok(AsymptoticDiagnostics {
        sigma_prime: matrix_rows(model.sigma()),
        weight_matrix: matrix_rows(wm.matrix()),
        weights: symmetric_eigenvalues_desc(m),
    })
}

/// Diagnostics for the independence null construction; the covariance here
/// is the extended block matrix `diag(Sigma_ind, I_rc)`.
pub fn indep_null_diagnostics(
    pi1: &ProbabilityVector,
    pi2: &ProbabilityVector,
    n: u64,
    params: &PrivacyParams,
) -> Result<AsymptoticDiagnostics> {
    let dist = indep_null_distribution(pi1, pi2, n, params)?;
    let p = product_probability(pi1, pi2);
    let rc = p.dim();
    let gamma = scaled_jacobian(pi1, pi2, &p);
    let gram = gamma.transpose() * &gamma;
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::numeric(
            "independence covariance",
            "Cholesky factorization failed".to_string(),
        )
    })?;
    let projector = &gamma * chol.solve(&gamma.transpose());
    let sigma_ind = centering_projector(p.entries()) - projector;
    let wm = build_weight_matrix(&p, n, params)?;
    Ok(AsymptoticDiagnostics {
        sigma_prime: matrix_rows(&block_diag_with_identity(&sigma_ind, rc)),
        weight_matrix: matrix_rows(wm.matrix()),
        weights: dist.weights().to_vec(),
    })
}
