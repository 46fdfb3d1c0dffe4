//! Distribution engine for weighted sums of independent chi-squared variables
//! with one degree of freedom, plus an optional additive Gaussian term and a
//! constant offset:
//!
//! ```text
//! Q = sum_j lambda_j * chi2_1(nu_j) + N(0, s^2) + kappa
//! ```
//!
//! Tail probabilities are computed by numerical inversion of the
//! characteristic function (Imhof's method): with
//!
//! ```text
//! theta(u) = 1/2 sum_j [atan(lambda_j u) + nu_j lambda_j u / (1 + lambda_j^2 u^2)] - xu/2
//! rho(u)   = prod_j (1 + lambda_j^2 u^2)^{1/4}
//!            * exp(1/2 sum_j nu_j lambda_j^2 u^2 / (1 + lambda_j^2 u^2) + s^2 u^2 / 8)
//! ```
//!
//! the upper tail is `P(Q >= x + kappa) = 1/2 + (1/pi) * I` where
//! `I = integral_0^inf sin(theta(u)) / (u rho(u)) du`.
//!
//! The integrand oscillates with asymptotic phase speed `|x|/2` and its
//! envelope decays like `u^{-1-k/2}` for k components. The integrator walks
//! the half-wave panels between consecutive zeros of `sin(theta)`, integrates
//! each panel with adaptive Gauss-Kronrod quadrature, and stops when either
//! the rigorous truncation bound
//! `(2 / (pi k)) * U^{-k/2} / prod sqrt(|lambda_j|)` is negligible, the
//! alternating panel series has visibly died out, or an accelerated estimate
//! of the remaining alternating series has stabilized. The acceleration path
//! is what makes one- and two-component distributions (envelope decay as slow
//! as `u^{-3/2}`) tractable.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Relative threshold under which weights are treated as numerical zeros and
/// dropped. Zero eigenvalues of the idempotent factorizations land here.
const WEIGHT_DROP_RATIO: f64 = 1e-10;

/// Law of `sum_j lambda_j chi2_1(nu_j) + N(0, gaussian_variance) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadFormDistribution {
    weights: Vec<f64>,
    noncentralities: Vec<f64>,
    gaussian_variance: f64,
    offset: f64,
}

impl QuadFormDistribution {
    pub fn new(
        weights: Vec<f64>,
        noncentralities: Vec<f64>,
        gaussian_variance: f64,
        offset: f64,
    ) -> Result<Self> {
        if weights.len() != noncentralities.len() {
            return Err(Error::invalid(format!(
                "{} weights but {} noncentralities",
                weights.len(),
                noncentralities.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        if noncentralities.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("noncentralities must be finite and nonnegative"));
        }
        if !gaussian_variance.is_finite() || gaussian_variance < 0.0 {
            return Err(Error::invalid("gaussian_variance must be finite and nonnegative"));
        }
        if !offset.is_finite() {
            return Err(Error::invalid("offset must be finite"));
        }
        let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let threshold = WEIGHT_DROP_RATIO * max_abs;
        let (weights, noncentralities) = weights
            .into_iter()
            .zip(noncentralities)
            .filter(|(w, _)| w.abs() > threshold)
            .unzip();
        Ok(Self {
            weights,
            noncentralities,
            gaussian_variance,
            offset,
        })
    }

    /// Central case: all noncentralities zero, no Gaussian term, no offset.
    pub fn central(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(weights, vec![0.0; n], 0.0, 0.0)
    }

    /// A plain chi-squared with `dof` degrees of freedom (`dof` unit weights).
    pub fn chi_squared(dof: usize) -> Self {
        assert!(dof > 0, "degrees of freedom must be positive");
        Self::central(vec![1.0; dof]).expect("unit weights are valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noncentralities(&self) -> &[f64] {
        &self.noncentralities
    }

    pub fn gaussian_variance(&self) -> f64 {
        self.gaussian_variance
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `E[Q] = sum lambda_j (1 + nu_j) + offset`.
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noncentralities)
            .map(|(l, v)| l * (1.0 + v))
            .sum::<f64>()
            + self.offset
    }

    /// `Var[Q] = sum 2 lambda_j^2 (1 + 2 nu_j) + s^2`.
    pub fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.noncentralities)
            .map(|(l, v)| 2.0 * l * l * (1.0 + 2.0 * v))
            .sum::<f64>()
            + self.gaussian_variance
    }

    /// Upper tail probability `P(Q >= t)`, accurate to well under 1e-6.
    pub fn tail_probability(&self, t: f64) -> Result<f64> {
        let x = t - self.offset;
        if self.weights.is_empty() {
            if self.gaussian_variance == 0.0 {
                return Err(Error::invalid(
                    "degenerate distribution: no weights and no gaussian term",
                ));
            }
            return Ok(0.5 * erfc(x / (2.0 * self.gaussian_variance).sqrt()));
        }
        // Nonnegative support: below it the tail is exactly 1.
        if self.gaussian_variance == 0.0 && self.weights.iter().all(|w| *w >= 0.0) && x <= 0.0 {
            return Ok(1.0);
        }
        let integrand = ImhofIntegrand {
            weights: &self.weights,
            noncentralities: &self.noncentralities,
            gaussian_variance: self.gaussian_variance,
            x,
        };
        let integral = integrate_imhof(&integrand)?;
        Ok((0.5 + integral / std::f64::consts::PI).clamp(0.0, 1.0))
    }

    /// Critical value: the `t` with `tail_probability(t) = alpha`. Unique by
    /// strict monotonicity of the tail over the support.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie strictly between 0 and 1, got {alpha}"
            )));
        }
        let sd = self.variance().sqrt();
        let mut lo = 0.0f64;
        let mut hi = (self.mean() + 20.0 * sd).max(lo + 1.0);
        // Expand geometrically until [lo, hi] brackets the alpha point.
        let mut rounds = 0;
        while self.tail_probability(lo)? < alpha {
            let width = (hi - lo).max(1.0);
            lo -= 2.0 * width;
            rounds += 1;
            if rounds > 80 {
                return Err(Error::numeric(
                    "critical_value",
                    format!("failed to bracket below: tail({lo}) < {alpha}"),
                ));
            }
        }
        rounds = 0;
        while self.tail_probability(hi)? > alpha {
            let width = (hi - lo).max(1.0);
            hi += 2.0 * width;
            rounds += 1;
            if rounds > 80 {
                return Err(Error::numeric(
                    "critical_value",
                    format!("failed to bracket above: tail({hi}) > {alpha}"),
                ));
            }
        }
        // Bisection: robust against the integrator's tiny noise; 1e-8 relative.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-8 * mid.abs().max(1.0) {
                break;
            }
            if self.tail_probability(mid)? > alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// One Monte-Carlo draw: `sum lambda_j (N_j + sqrt(nu_j))^2 + offset + s N_0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut q = self.offset;
        for (l, v) in self.weights.iter().zip(&self.noncentralities) {
            let z: f64 = StandardNormal.sample(rng);
            let shifted = z + v.sqrt();
            q += l * shifted * shifted;
        }
        if self.gaussian_variance > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            q += self.gaussian_variance.sqrt() * z;
        }
        q
    }
}

struct ImhofIntegrand<'a> {
    weights: &'a [f64],
    noncentralities: &'a [f64],
    gaussian_variance: f64,
    x: f64,
}

impl ImhofIntegrand<'_> {
    fn theta(&self, u: f64) -> f64 {
        let mut s = 0.0;
        for (l, v) in self.weights.iter().zip(self.noncentralities) {
            let lu = l * u;
            s += lu.atan() + v * lu / (1.0 + lu * lu);
        }
        0.5 * s - 0.5 * self.x * u
    }

    fn theta_deriv(&self, u: f64) -> f64 {
        let mut s = 0.0;
        for (l, v) in self.weights.iter().zip(self.noncentralities) {
            let lu2 = l * l * u * u;
            let denom = 1.0 + lu2;
            s += l / denom + v * l * (1.0 - lu2) / (denom * denom);
        }
        0.5 * s - 0.5 * self.x
    }

    fn ln_envelope(&self, u: f64) -> f64 {
        let mut s = 0.0;
        for (l, v) in self.weights.iter().zip(self.noncentralities) {
            let lu2 = l * l * u * u;
            s += 0.25 * (1.0 + lu2).ln() + 0.5 * v * lu2 / (1.0 + lu2);
        }
        s + self.gaussian_variance * u * u / 8.0
    }

    fn value(&self, u: f64) -> f64 {
        if u == 0.0 {
            return self.theta_deriv(0.0);
        }
        self.theta(u).sin() * (-self.ln_envelope(u)).exp() / u
    }

    /// Log of a rigorous bound on `(1/pi) * integral_U^inf |f|`, from
    /// `(1 + l^2 u^2)^{1/4} >= sqrt(|l| u)` applied to every component. The
    /// Gaussian and noncentrality envelope factors are nondecreasing in u, so
    /// their value at U bounds them over the whole tail.
    fn ln_tail_bound(&self, u: f64) -> f64 {
        let k = self.weights.len() as f64;
        let mut ln_extra = self.gaussian_variance * u * u / 8.0;
        let mut half_sum_ln = 0.0;
        for (l, v) in self.weights.iter().zip(self.noncentralities) {
            half_sum_ln += 0.5 * l.abs().ln();
            let lu2 = l * l * u * u;
            ln_extra += 0.5 * v * lu2 / (1.0 + lu2);
        }
        (2.0 / (std::f64::consts::PI * k)).ln() - half_sum_ln - 0.5 * k * u.ln() - ln_extra
    }
}

/// Absolute accuracy target for the oscillatory integral.
const INTEGRAL_TOL: f64 = 1e-9;
const MAX_PANELS: usize = 40_000;

fn integrate_imhof(f: &ImhofIntegrand) -> Result<f64> {
    use std::f64::consts::PI;

    // Characteristic phase speed: |theta'| is bounded by this everywhere.
    let phase_speed_cap: f64 = 0.5
        * (f.weights
            .iter()
            .zip(f.noncentralities)
            .map(|(l, v)| l.abs() * (1.0 + v))
            .sum::<f64>()
            + f.x.abs())
        + f64::MIN_POSITIVE;
    let h0 = 1.0 / phase_speed_cap;

    let ln_tol = (INTEGRAL_TOL * 0.1).ln();

    let mut u = 0.0f64;
    // Which half-open phase interval (m*pi, (m+1)*pi] we are in; seeded just
    // off zero since theta(0) = 0 sits exactly on a boundary.
    let mut phase_floor = (f.theta(1e-9 * h0) / PI).floor();

    let mut panels: Vec<f64> = Vec::new();
    let mut prev_accel: Option<f64> = None;
    let mut stable_accel_rounds = 0;

    loop {
        if panels.len() >= MAX_PANELS {
            return Err(Error::numeric(
                "imhof",
                format!(
                    "no convergence after {MAX_PANELS} panels (u = {u:.3e}, last panel = {:.3e}, bound = {:.3e})",
                    panels.last().copied().unwrap_or(f64::NAN),
                    f.ln_tail_bound(u).exp()
                ),
            ));
        }

        // Propose a step sized to move the phase by about pi/2, capped so the
        // walk can grow geometrically through non-oscillatory stretches.
        let local_speed = f.theta_deriv(u).abs();
        let max_h = 2.0 * (u + h0);
        let mut h = ((0.5 * PI) / (local_speed + 0.25 * phase_speed_cap)).min(max_h);
        // Grow the step until the phase crosses a pi boundary; on overshooting
        // more than one boundary, bisect back toward the first crossing.
        // `h_lo` always marks a step with no crossing.
        let mut h_lo = 0.0f64;
        let mut end_floor;
        let single_crossing = loop {
            let end = u + h;
            end_floor = (f.theta(end) / PI).floor();
            let jump = (end_floor - phase_floor).abs();
            if jump == 0.0 {
                if h >= max_h * 0.999 {
                    break false;
                }
                h_lo = h;
                h = (2.0 * h).min(max_h);
            } else if jump == 1.0 {
                break true;
            } else if h - h_lo <= 1e-13 * (u + h) {
                // Crossings too tight to separate (near-tangential phase);
                // accept the clustered boundary, the panel is negligible.
                break false;
            } else {
                h = 0.5 * (h_lo + h);
            }
        };

        let boundary = if single_crossing {
            // Bisect theta to the crossed multiple of pi.
            let target = PI * phase_floor.max(end_floor);
            let mut a = u;
            let mut b = u + h;
            let ga = f.theta(a) - target;
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if b - a <= 1e-13 * (1.0 + b) {
                    break;
                }
                let gm = f.theta(mid) - target;
                if (gm > 0.0) == (ga > 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        } else {
            u + h
        };

        let panel = integrate_panel(f, u, boundary);
        panels.push(panel);
        u = boundary;
        phase_floor = end_floor;

        // Rigorous truncation bound on everything past u.
        if f.ln_tail_bound(u) < ln_tol {
            return Ok(panels.iter().sum());
        }

        // Alternating-series stop: once signs alternate and magnitudes shrink,
        // the remainder is bounded by the last panel.
        let m = panels.len();
        if m >= 4 {
            let tail4 = &panels[m - 4..];
            let alternating = tail4.windows(2).all(|w| w[0] * w[1] < 0.0);
            let shrinking = tail4.windows(2).all(|w| w[1].abs() <= w[0].abs());
            if alternating && shrinking && tail4[3].abs() < INTEGRAL_TOL * 0.1 {
                return Ok(panels.iter().sum());
            }
        }

        // Acceleration of the alternating tail for slow envelopes.
        if m >= 48 && m % 16 == 0 {
            if let Some(est) = accelerated_total(&panels) {
                if let Some(prev) = prev_accel {
                    if (est - prev).abs() < INTEGRAL_TOL * 0.5 {
                        stable_accel_rounds += 1;
                        if stable_accel_rounds >= 2 {
                            return Ok(est);
                        }
                    } else {
                        stable_accel_rounds = 0;
                    }
                }
                prev_accel = Some(est);
            }
        }
    }
}

/// Sums the panel series, replacing its alternating suffix with a
/// convergence-accelerated estimate of the full remaining series.
fn accelerated_total(panels: &[f64]) -> Option<f64> {
    let m = panels.len();
    // Longest strictly alternating suffix.
    let mut start = m - 1;
    while start > 0 && panels[start - 1] * panels[start] < 0.0 {
        start -= 1;
    }
    if m - start < 32 {
        return None;
    }
    let tail = &panels[start..];
    let sign = tail[0].signum();
    let magnitudes: Vec<f64> = tail.iter().map(|p| p.abs()).collect();
    let prefix: f64 = panels[..start].iter().sum();
    Some(prefix + sign * alternating_series_sum(&magnitudes))
}

/// Estimate of `sum_k (-1)^k a_k` from leading terms of a (roughly totally
/// monotone) positive sequence, by Chebyshev-polynomial acceleration. Error
/// decays like (3 + sqrt(8))^{-n}.
fn alternating_series_sum(a: &[f64]) -> f64 {
    let n = a.len().min(60);
    let nf = n as f64;
    let mut d = (3.0 + 8.0f64.sqrt()).powi(n as i32);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut s = 0.0;
    for (k, ak) in a.iter().take(n).enumerate() {
        let kf = k as f64;
        c = b - c;
        s += c * ak;
        b *= (kf + nf) * (kf - nf) / ((kf + 0.5) * (kf + 1.0));
    }
    s / d
}

// 15-point Kronrod extension of 7-point Gauss-Legendre (positive abscissae).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gauss_kronrod(f: &ImhofIntegrand, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        if x == 0.0 {
            let v = f.value(center);
            kronrod += wk * v;
            gauss += WG[3] * v;
        } else {
            let lo = f.value(center - half * x);
            let hi = f.value(center + half * x);
            kronrod += wk * (lo + hi);
            if i % 2 == 1 {
                gauss += WG[i / 2] * (lo + hi);
            }
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive refinement of one panel to an absolute accuracy that keeps panel
/// errors negligible against the whole-integral tolerance.
fn integrate_panel(f: &ImhofIntegrand, a: f64, b: f64) -> f64 {
    fn recurse(f: &ImhofIntegrand, a: f64, b: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= 1e-13 + 1e-10 * value.abs() || depth >= 24 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, depth + 1) + recurse(f, mid, b, depth + 1)
    }
    recurse(f, a, b, 0)
}
