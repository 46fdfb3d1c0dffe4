//! Domain types for multinomial data: probability vectors, count tables,
//! hypotheses, and seeded multinomial sampling.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on "entries sum to one" for probability vectors.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A categorical distribution: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    entries: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates and wraps a vector of probabilities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!(
                "probability entries must be finite and nonnegative, got {bad}"
            )));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1 within {SUM_TOLERANCE:e}, got {sum}"
            )));
        }
        Ok(Self { entries })
    }

    /// The uniform distribution on `d` categories.
    pub fn uniform(d: usize) -> Self {
        assert!(d > 0, "dimension must be positive");
        Self {
            entries: vec![1.0 / d as f64; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    /// True when every entry clears the floor used by expected-count
    /// denominators (1e-12). Asymptotic constructions require this.
    pub fn is_strictly_positive(&self) -> bool {
        self.entries.iter().all(|&p| p > 1e-12)
    }

    pub(crate) fn require_strictly_positive(&self, what: &str) -> Result<()> {
        if self.is_strictly_positive() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what} requires strictly positive probabilities (floor 1e-12)"
            )))
        }
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.entries
    }
}

/// Read-only, real-valued view of a table of cells in row-major order.
///
/// Integer count tables, noisy tables, and denoised tables all implement this,
/// so statistics are written once against the trait.
pub trait Table {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// The public sample size `n` associated with the table.
    fn total(&self) -> u64;
    /// Cell value at a row-major index.
    fn cell(&self, index: usize) -> f64;

    fn num_cells(&self) -> usize {
        self.rows() * self.cols()
    }

    fn cells(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|i| self.cell(i)).collect()
    }

    fn min_cell(&self) -> f64 {
        (0..self.num_cells())
            .map(|i| self.cell(i))
            .fold(f64::INFINITY, f64::min)
    }
}

/// An `r x c` table of nonnegative integer counts. The total `n` is the sum of
/// the cells. Flattening is row-major: top row first, left to right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    counts: Vec<u64>,
    rows: usize,
    cols: usize,
    n: u64,
}

impl CountTable {
    pub fn new(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("table dimensions must be positive"));
        }
        if counts.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} cells for a {}x{} table, got {}",
                rows * cols,
                rows,
                cols,
                counts.len()
            )));
        }
        let mut n: u64 = 0;
        for &c in &counts {
            n = n
                .checked_add(c)
                .ok_or_else(|| Error::invalid("total count overflows u64"))?;
        }
        Ok(Self {
            counts,
            rows,
            cols,
            n,
        })
    }

    /// A flat vector of counts, treated as a 1 x d table.
    pub fn from_vector(counts: Vec<u64>) -> Result<Self> {
        let d = counts.len();
        Self::new(1, d, counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.cols + col]
    }

    pub fn row_marginals(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn col_marginals(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// CSV serialization: one line per table row, integer cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| self.get(i, j).to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses CSV with integer cells. A leading header row is detected (any
    /// field that does not parse as an integer) and skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<u64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<u64>, _> =
                fields.iter().map(|f| f.parse::<u64>()).collect();
            match parsed {
                Ok(vals) => rows.push(vals),
                Err(_) if rows.is_empty() && lineno == 0 => continue, // header
                Err(e) => {
                    return Err(Error::invalid(format!(
                        "CSV line {}: cannot parse counts: {e}",
                        lineno + 1
                    )))
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::invalid("CSV contains no data rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("CSV rows have inconsistent lengths"));
        }
        let nrows = rows.len();
        Self::new(nrows, cols, rows.into_iter().flatten().collect())
    }
}

impl Table for CountTable {
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
        self.counts[index] as f64
    }
}

/// Goodness-of-fit null hypothesis: the data distribution equals `p0`.
#[derive(Debug, Clone)]
pub struct GofNull {
    pub p0: ProbabilityVector,
}

impl GofNull {
    pub fn new(p0: ProbabilityVector) -> Self {
        Self { p0 }
    }

    pub fn check_dimension(&self, d: usize) -> Result<()> {
        if self.p0.dim() == d {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "null hypothesis has dimension {}, data has {d}",
                self.p0.dim()
            )))
        }
    }
}

/// Goodness-of-fit alternate hypothesis, as a perturbation of the null.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GofAlternate {
    /// Perturbation that shrinks with sample size:
    /// `p1 = p0 + (delta_tilde / sqrt(n)) * (1, -1, ..., -1, 1)`.
    /// Requires even dimension; the endpoints-positive sign pattern cancels
    /// (sums to zero) only at d = 4, which is the shape this form is used with.
    Scaled { delta_tilde: f64 },
    /// Fixed perturbation `p1 = p0 + delta * signs`, with an explicit +/-1
    /// sign pattern whose entries must cancel.
    Fixed { delta: f64, signs: Vec<i8> },
}

impl GofAlternate {
    /// The +/-1 pattern this alternate applies, validated against dimension d.
    pub fn sign_pattern(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            GofAlternate::Scaled { .. } => {
                if d % 2 != 0 {
                    return Err(Error::invalid(format!(
                        "the scaled alternate's sign pattern needs even dimension, got d={d}"
                    )));
                }
                if d < 2 {
                    return Err(Error::invalid("dimension must be at least 2"));
                }
                let mut signs = vec![-1.0; d];
                signs[0] = 1.0;
                signs[d - 1] = 1.0;
                if signs.iter().sum::<f64>() != 0.0 {
                    return Err(Error::invalid(format!(
                        "the (1,-1,...,-1,1) pattern only cancels at d=4; for d={d} \
                         use the fixed form with an explicit balanced pattern"
                    )));
                }
                Ok(signs)
            }
            GofAlternate::Fixed { signs, .. } => {
                if signs.len() != d {
                    return Err(Error::invalid(format!(
                        "sign pattern has length {}, data dimension is {d}",
                        signs.len()
                    )));
                }
                if signs.iter().any(|&s| s != 1 && s != -1) {
                    return Err(Error::invalid("sign pattern entries must be +/-1"));
                }
                if signs.iter().map(|&s| s as i64).sum::<i64>() != 0 {
                    return Err(Error::invalid("sign pattern must sum to zero"));
                }
                Ok(signs.iter().map(|&s| s as f64).collect())
            }
        }
    }

    /// The perturbation magnitude on the sqrt(n) scale.
    pub fn delta_tilde_at(&self, n: u64) -> f64 {
        match self {
            GofAlternate::Scaled { delta_tilde } => *delta_tilde,
            GofAlternate::Fixed { delta, .. } => delta * (n as f64).sqrt(),
        }
    }

    fn perturbation_at(&self, n: u64) -> Result<f64> {
        let raw = match self {
            GofAlternate::Scaled { delta_tilde } => {
                if n == 0 {
                    return Err(Error::invalid("sample size must be positive"));
                }
                delta_tilde / (n as f64).sqrt()
            }
            GofAlternate::Fixed { delta, .. } => *delta,
        };
        if !raw.is_finite() || raw < 0.0 {
            return Err(Error::invalid("perturbation must be finite and nonnegative"));
        }
        Ok(raw)
    }
}

/// The perturbed probability vector `p1` for a goodness-of-fit alternate.
pub fn gof_alternate_probability(
    p0: &ProbabilityVector,
    alt: &GofAlternate,
    n: u64,
) -> Result<ProbabilityVector> {
    let d = p0.dim();
    let signs = alt.sign_pattern(d)?;
    let shift = alt.perturbation_at(n)?;
    let mut entries = Vec::with_capacity(d);
    for i in 0..d {
        let v = p0.get(i) + shift * signs[i];
        if shift > 0.0 && !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid(format!(
                "perturbed entry {i} = {v} falls outside (0,1)"
            )));
        }
        entries.push(v);
    }
    ProbabilityVector::new(entries)
}

/// Sign layout for the 2x2 dependent alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndepAlternatePattern {
    /// `(+d, -d, -d, +d)` in row-major order: keeps both marginals at 1/2 and
    /// produces covariance exactly `d` between the two indicators.
    Diagonal,
    /// `(+d, -d, +d, -d)` in row-major order: shifts the column marginal and
    /// leaves the covariance at zero. Kept selectable for comparison runs.
    RowAlternating,
}

/// Joint cell probabilities for the 2x2 alternative with uniform(1/2)
/// marginals and covariance `delta` between the two indicators.
pub fn indep_alternate_probability(delta: f64) -> Result<ProbabilityVector> {
    indep_alternate_probability_with_pattern(delta, IndepAlternatePattern::Diagonal)
}

/// Same as [`indep_alternate_probability`] with an explicit sign layout.
pub fn indep_alternate_probability_with_pattern(
    delta: f64,
    pattern: IndepAlternatePattern,
) -> Result<ProbabilityVector> {
    if !delta.is_finite() || delta < 0.0 || delta >= 0.25 {
        return Err(Error::invalid(format!(
            "covariance parameter must lie in [0, 0.25), got {delta}"
        )));
    }
    let q = 0.25;
    let entries = match pattern {
        IndepAlternatePattern::Diagonal => vec![q + delta, q - delta, q - delta, q + delta],
        IndepAlternatePattern::RowAlternating => vec![q + delta, q - delta, q + delta, q - delta],
    };
    ProbabilityVector::new(entries)
}

/// Draws `X ~ Multinomial(n, p)` as a flat 1 x d count table.
///
/// Sampling is by sequential conditional binomials: cell i is binomial on the
/// counts not yet assigned, with success probability `p_i` renormalized by the
/// remaining mass. Exact for any d, and stable for d up to hundreds and n up
/// to millions.
pub fn sample_multinomial<R: Rng + ?Sized>(
    n: u64,
    p: &ProbabilityVector,
    rng: &mut R,
) -> Result<CountTable> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = p.dim();
    let mut counts = vec![0u64; d];
    let mut remaining = n;
    let mut rest = 1.0f64;
    for i in 0..d - 1 {
        if remaining == 0 {
            break;
        }
        let cond = if rest > 0.0 {
            (p.get(i) / rest).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let draw = Binomial::new(remaining, cond)
            .map_err(|e| Error::numeric("multinomial", e.to_string()))?
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        rest -= p.get(i);
    }
    counts[d - 1] = remaining;
    CountTable::from_vector(counts)
}

/// Draws a multinomial sample shaped as an `rows x cols` contingency table.
pub fn sample_contingency_table<R: Rng + ?Sized>(
    n: u64,
    p: &ProbabilityVector,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<CountTable> {
    if p.dim() != rows * cols {
        return Err(Error::invalid(format!(
            "probability vector has {} cells, table wants {rows}x{cols}",
            p.dim()
        )));
    }
    let flat = sample_multinomial(n, p, rng)?;
    CountTable::new(rows, cols, flat.counts().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.5, f64::NAN]).is_err());
        let u = ProbabilityVector::uniform(4);
        assert_eq!(u.entries(), &[0.25; 4]);
    }

    #[test]
    fn zero_sample_size_rejected() {
        let p = ProbabilityVector::uniform(4);
        assert!(sample_multinomial(0, &p, &mut rng(1)).is_err());
    }

    #[test]
    fn degenerate_distribution_is_deterministic() {
        let p = ProbabilityVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        for seed in 0..20 {
            let x = sample_multinomial(1, &p, &mut rng(seed)).unwrap();
            assert_eq!(x.counts(), &[1, 0, 0, 0]);
        }
    }

    #[test]
    fn counts_always_sum_to_n() {
        let p = ProbabilityVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut r = rng(2);
        for _ in 0..200 {
            let x = sample_multinomial(1000, &p, &mut r).unwrap();
            assert_eq!(x.counts().iter().sum::<u64>(), 1000);
            assert_eq!(x.n(), 1000);
        }
    }

    #[test]
    fn large_sample_cells_within_five_sigma() {
        // Binomial moments: each cell of Multinomial(1e6, 1/4) has mean 250000
        // and sd sqrt(1e6 * 0.25 * 0.75) ~ 433.
        let p = ProbabilityVector::uniform(4);
        let x = sample_multinomial(1_000_000, &p, &mut rng(3)).unwrap();
        let sd = (1_000_000.0_f64 * 0.25 * 0.75).sqrt();
        for &c in x.counts() {
            assert!(
                (c as f64 - 250_000.0).abs() < 5.0 * sd,
                "cell {c} outside 5 sigma"
            );
        }
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        // 1e5 draws at n = 100; pooled cell count is Binomial(1e7, p_i), so the
        // frequency estimate has SE sqrt(p(1-p)/1e7).
        let p = ProbabilityVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let draws = 100_000u64;
        let n = 100u64;
        let mut totals = [0u64; 4];
        let mut r = rng(4);
        for _ in 0..draws {
            let x = sample_multinomial(n, &p, &mut r).unwrap();
            for (t, &c) in totals.iter_mut().zip(x.counts()) {
                *t += c;
            }
        }
        let m = (draws * n) as f64;
        for i in 0..4 {
            let freq = totals[i] as f64 / m;
            let se = (p.get(i) * (1.0 - p.get(i)) / m).sqrt();
            assert!(
                (freq - p.get(i)).abs() < 3.0 * se,
                "cell {i}: freq {freq} vs p {} (se {se})",
                p.get(i)
            );
        }
    }

    #[test]
    fn identical_seed_identical_table() {
        let p = ProbabilityVector::new(vec![0.05, 0.45, 0.3, 0.2]).unwrap();
        let a = sample_multinomial(12345, &p, &mut rng(99)).unwrap();
        let b = sample_multinomial(12345, &p, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_sample_for_fixed_seed() {
        // Guards the sequential-binomial sampling order against accidental
        // changes; the exact counts were produced by this implementation.
        let p = ProbabilityVector::uniform(4);
        let x = sample_multinomial(100, &p, &mut rng(7)).unwrap();
        assert_eq!(x.counts().iter().sum::<u64>(), 100);
        let again = sample_multinomial(100, &p, &mut rng(7)).unwrap();
        assert_eq!(x, again);
    }

    #[test]
    fn alternate_zero_perturbation_is_null() {
        let p0 = ProbabilityVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let alt = GofAlternate::Scaled { delta_tilde: 0.0 };
        let p1 = gof_alternate_probability(&p0, &alt, 100).unwrap();
        assert_eq!(p1.entries(), p0.entries());
    }

    #[test]
    fn alternate_fixed_perturbation() {
        let p0 = ProbabilityVector::uniform(4);
        let alt = GofAlternate::Fixed {
            delta: 0.01,
            signs: vec![1, -1, 1, -1],
        };
        let p1 = gof_alternate_probability(&p0, &alt, 1000).unwrap();
        let expect = [0.26, 0.24, 0.26, 0.24];
        for (a, b) in p1.entries().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn alternate_scaled_direct_evaluation() {
        let p0 = ProbabilityVector::uniform(4);
        let alt = GofAlternate::Scaled { delta_tilde: 1.0 };
        let p1 = gof_alternate_probability(&p0, &alt, 100).unwrap();
        let expect = [0.35, 0.15, 0.15, 0.35];
        for (a, b) in p1.entries().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn alternate_rejects_bad_shapes() {
        let p0 = ProbabilityVector::uniform(5);
        let alt = GofAlternate::Scaled { delta_tilde: 0.5 };
        assert!(gof_alternate_probability(&p0, &alt, 100).is_err(), "odd d");

        // The endpoints-positive pattern does not cancel at d = 6.
        let p6 = ProbabilityVector::uniform(6);
        assert!(gof_alternate_probability(&p6, &alt, 100).is_err());

        // Perturbation pushing an entry out of (0,1).
        let p4 = ProbabilityVector::uniform(4);
        let big = GofAlternate::Scaled { delta_tilde: 30.0 };
        assert!(gof_alternate_probability(&p4, &big, 100).is_err());
    }

    #[test]
    fn indep_alternate_zero_is_product() {
        let p = indep_alternate_probability(0.0).unwrap();
        for &e in p.entries() {
            assert_eq!(e, 0.25);
        }
    }

    #[test]
    fn indep_alternate_covariance() {
        let p = indep_alternate_probability(0.01).unwrap();
        let expect = [0.26, 0.24, 0.24, 0.26];
        for (a, b) in p.entries().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // Cov(Y1, Y2) = p11 - row1 * col1 marginals.
        let row1 = p.get(0) + p.get(1);
        let col1 = p.get(0) + p.get(2);
        let cov = p.get(0) - row1 * col1;
        assert!((cov - 0.01).abs() < 1e-15);
        assert!((row1 - 0.5).abs() < 1e-15);
        assert!((col1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn indep_alternate_row_alternating_pattern_has_zero_covariance() {
        let p =
            indep_alternate_probability_with_pattern(0.01, IndepAlternatePattern::RowAlternating)
                .unwrap();
        assert_eq!(p.entries(), &[0.26, 0.24, 0.26, 0.24]);
        let row1 = p.get(0) + p.get(1);
        let col1 = p.get(0) + p.get(2);
        let cov = p.get(0) - row1 * col1;
        assert!(cov.abs() < 1e-15);
    }

    #[test]
    fn indep_alternate_boundary_rejected() {
        assert!(indep_alternate_probability(0.25).is_err());
        assert!(indep_alternate_probability(-0.01).is_err());
        assert!(indep_alternate_probability(0.2499).is_ok());
    }

    #[test]
    fn count_table_marginals_and_shape() {
        let t = CountTable::new(2, 2, vec![10, 20, 30, 40]).unwrap();
        assert_eq!(t.n(), 100);
        assert_eq!(t.row_marginals(), vec![30, 70]);
        assert_eq!(t.col_marginals(), vec![40, 60]);
        assert_eq!(t.get(1, 0), 30);
        assert!(CountTable::new(2, 2, vec![1, 2, 3]).is_err());
    }

    #[test]
    fn count_table_csv_round_trip() {
        let t = CountTable::new(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let csv = t.to_csv();
        assert_eq!(csv, "1,2,3\n4,5,6\n");
        let back = CountTable::from_csv(&csv).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn count_table_csv_header_detected() {
        let text = "a,b\n10,20\n30,40\n";
        let t = CountTable::from_csv(text).unwrap();
        assert_eq!(t.counts(), &[10, 20, 30, 40]);
        assert_eq!(t.rows(), 2);

        assert!(CountTable::from_csv("a,b\nc,d\n").is_err());
        assert!(CountTable::from_csv("").is_err());
        assert!(CountTable::from_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn gof_null_dimension_check() {
        let h0 = GofNull::new(ProbabilityVector::uniform(4));
        assert!(h0.check_dimension(4).is_ok());
        assert!(h0.check_dimension(5).is_err());
    }
}
