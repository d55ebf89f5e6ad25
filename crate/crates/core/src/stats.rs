//! Distribution oracles and goodness-of-fit machinery.
//!
//! Exact mass functions in log-safe arithmetic, Pearson chi-square fits with
//! pooled tails, a two-sample equivalence test, and the stationary
//! distribution of a rate matrix by two independent routes (large-time
//! squaring and a null-space solve) that must agree.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::num::Real;
use crate::rate::{transition_matrix, RateMatrix, SquareMatrix};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("observed and expected cell counts differ: {observed} vs {expected}")]
    CellMismatch { observed: usize, expected: usize },
    #[error("expected cell probabilities must sum to 1, got {0}")]
    IncompleteExpected(f64),
    #[error("at least {needed} observations required, got {got}")]
    TooFewObservations { needed: u64, got: u64 },
    #[error("expected distribution is degenerate after pooling")]
    DegenerateExpected,
    #[error("generator looks reducible or degenerate: {0}")]
    DegenerateGenerator(String),
}

/// Integer-valued sample tally.
#[derive(Debug, Clone, Default)]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, value: u64) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn max_value(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&v, &c)| (v, c))
    }

    /// Dense cell counts for values `0..=max`, the final cell absorbing
    /// everything at or above `max`.
    pub fn cells_with_tail(&self, max: u64) -> Vec<u64> {
        let mut cells = vec![0u64; max as usize + 1];
        for (&v, &c) in &self.counts {
            cells[v.min(max) as usize] += c;
        }
        cells
    }
}

#[allow(clippy::excessive_precision)]
fn ln_gamma<F: Real>(x: F) -> F {
    // Lanczos approximation, g = 7, 9 coefficients.
    #[allow(clippy::excessive_precision)]
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > F::zero());
    let x = x - F::one();
    let mut acc = F::of(0.99999999999980993);
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += F::of(c) / (x + F::of(i as f64 + 1.0));
    }
    let t = x + F::of(7.5);
    F::of(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + F::of(0.5)) * t.ln() - t + acc.ln()
}

fn ln_factorial<F: Real>(k: u64) -> F {
    ln_gamma(F::of(k as f64 + 1.0))
}

/// Binomial(n, p) mass at k.
pub fn pmf_binomial<F: Real>(n: u64, p: F, k: u64) -> Result<F, StatsError> {
    if !(p >= F::zero() && p <= F::one()) {
        return Err(StatsError::InvalidParameter("p must lie in [0, 1]"));
    }
    if k > n {
        return Ok(F::zero());
    }
    if p == F::zero() {
        return Ok(if k == 0 { F::one() } else { F::zero() });
    }
    if p == F::one() {
        return Ok(if k == n { F::one() } else { F::zero() });
    }
    let ln_choose = ln_factorial::<F>(n) - ln_factorial::<F>(k) - ln_factorial::<F>(n - k);
    let kf = F::of(k as f64);
    let nkf = F::of((n - k) as f64);
    Ok((ln_choose + kf * p.ln() + nkf * (F::one() - p).ln()).exp())
}

/// Poisson(rate) mass at k.
pub fn pmf_poisson<F: Real>(rate: F, k: u64) -> Result<F, StatsError> {
    if rate < F::zero() {
        return Err(StatsError::InvalidParameter("rate must be non-negative"));
    }
    if rate == F::zero() {
        return Ok(if k == 0 { F::one() } else { F::zero() });
    }
    let kf = F::of(k as f64);
    Ok((kf * rate.ln() - rate - ln_factorial::<F>(k)).exp())
}

/// Multinomial mass for `counts` draws over `probs`.
pub fn pmf_multinomial<F: Real>(probs: &[F], counts: &[u64]) -> Result<F, StatsError> {
    if probs.len() != counts.len() {
        return Err(StatsError::CellMismatch {
            observed: counts.len(),
            expected: probs.len(),
        });
    }
    let total: F = probs.iter().copied().sum();
    if (total - F::one()).abs() > F::of(1e-9) {
        return Err(StatsError::IncompleteExpected(total.as_f64()));
    }
    let n: u64 = counts.iter().sum();
    let mut ln = ln_factorial::<F>(n);
    for (&p, &k) in probs.iter().zip(counts) {
        if p == F::zero() {
            if k > 0 {
                return Ok(F::zero());
            }
            continue;
        }
        ln = ln - ln_factorial::<F>(k) + F::of(k as f64) * p.ln();
    }
    Ok(ln.exp())
}

/// Regularized lower incomplete gamma P(a, x).
fn reg_lower_gamma<F: Real>(a: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x < a + F::one() {
        // Series expansion.
        let mut term = F::one() / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..500 {
            n += F::one();
            term = term * x / n;
            sum += term;
            if term.abs() < sum.abs() * F::epsilon() {
                break;
            }
        }
        (sum.ln() + a * x.ln() - x - ln_gamma(a)).exp()
    } else {
        // Continued fraction for the upper tail (modified Lentz).
        let tiny = F::of(1e-300).max(F::min_positive_value());
        let mut b = x + F::one() - a;
        let mut c = F::one() / tiny;
        let mut d = F::one() / b;
        let mut h = d;
        for i in 1..500 {
            let fi = F::of(i as f64);
            let an = -fi * (fi - a);
            b += F::of(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = F::one() / d;
            let delta = d * c;
            h *= delta;
            if (delta - F::one()).abs() < F::epsilon() {
                break;
            }
        }
        let upper = (a * x.ln() - x - ln_gamma(a)).exp() * h;
        F::one() - upper
    }
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chi_square_cdf<F: Real>(df: usize, x: F) -> F {
    reg_lower_gamma(F::of(df as f64 * 0.5), x * F::of(0.5))
}

/// Upper critical value: the x with P(ChiSq(df) <= x) = 1 - alpha.
pub fn chi_square_critical<F: Real>(df: usize, alpha: F) -> Result<F, StatsError> {
    if df == 0 {
        return Err(StatsError::InvalidParameter("df must be positive"));
    }
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(StatsError::InvalidParameter("alpha must lie in (0, 1)"));
    }
    let target = F::one() - alpha;
    let mut hi = F::of(df as f64 + 10.0);
    while chi_square_cdf(df, hi) < target {
        hi *= F::of(2.0);
    }
    let mut lo = F::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * F::of(0.5);
        if chi_square_cdf(df, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= F::of(1e-12) * hi.max(F::one()) {
            break;
        }
    }
    Ok((lo + hi) * F::of(0.5))
}

/// Result of one chi-square comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOutcome<F> {
    pub statistic: F,
    pub critical: F,
    pub df: usize,
    pub pass: bool,
}

/// Pearson chi-square of `observed` cell counts against expected cell
/// probabilities, adjacent cells pooled until every expected count reaches 5.
pub fn goodness_of_fit<F: Real>(
    observed: &[u64],
    expected: &[F],
    alpha: F,
) -> Result<FitOutcome<F>, StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::CellMismatch {
            observed: observed.len(),
            expected: expected.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    if total < 1000 {
        return Err(StatsError::TooFewObservations {
            needed: 1000,
            got: total,
        });
    }
    let psum: F = expected.iter().copied().sum();
    if (psum - F::one()).abs() > F::of(1e-6) {
        return Err(StatsError::IncompleteExpected(psum.as_f64()));
    }
    if expected.iter().any(|&p| p < F::zero()) {
        return Err(StatsError::InvalidParameter(
            "negative expected probability",
        ));
    }
    let n = F::of(total as f64);
    let floor = F::of(5.0);
    let mut pools: Vec<(F, F)> = Vec::new();
    let mut acc_obs = F::zero();
    let mut acc_exp = F::zero();
    for (&o, &p) in observed.iter().zip(expected) {
        acc_obs += F::of(o as f64);
        acc_exp += p * n;
        if acc_exp >= floor {
            pools.push((acc_obs, acc_exp));
            acc_obs = F::zero();
            acc_exp = F::zero();
        }
    }
    if acc_exp > F::zero() || acc_obs > F::zero() {
        match pools.last_mut() {
            Some(last) => {
                last.0 += acc_obs;
                last.1 += acc_exp;
            }
            None => return Err(StatsError::DegenerateExpected),
        }
    }
    if pools.len() < 2 {
        return Err(StatsError::DegenerateExpected);
    }
    let statistic = pools.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum::<F>();
    let df = pools.len() - 1;
    let critical = chi_square_critical(df, alpha)?;
    Ok(FitOutcome {
        statistic,
        critical,
        df,
        pass: statistic <= critical,
    })
}

/// Two-sample chi-square homogeneity test between independent tallies with
/// the same cells; small cells pooled so each combined count reaches 10.
pub fn two_sample_chi_square<F: Real>(
    a: &[u64],
    b: &[u64],
    alpha: F,
) -> Result<FitOutcome<F>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::CellMismatch {
            observed: a.len(),
            expected: b.len(),
        });
    }
    let (na, nb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    if na < 1000 || nb < 1000 {
        return Err(StatsError::TooFewObservations {
            needed: 1000,
            got: na.min(nb),
        });
    }
    let ra = F::of(nb as f64 / na as f64).sqrt();
    let rb = F::one() / ra;
    let mut pools: Vec<(F, F)> = Vec::new();
    let (mut acc_a, mut acc_b) = (0u64, 0u64);
    for (&xa, &xb) in a.iter().zip(b) {
        acc_a += xa;
        acc_b += xb;
        if acc_a + acc_b >= 10 {
            pools.push((F::of(acc_a as f64), F::of(acc_b as f64)));
            acc_a = 0;
            acc_b = 0;
        }
    }
    if acc_a + acc_b > 0 {
        match pools.last_mut() {
            Some(last) => {
                last.0 += F::of(acc_a as f64);
                last.1 += F::of(acc_b as f64);
            }
            None => return Err(StatsError::DegenerateExpected),
        }
    }
    if pools.len() < 2 {
        return Err(StatsError::DegenerateExpected);
    }
    let statistic = pools
        .iter()
        .map(|&(xa, xb)| {
            let d = xa * ra - xb * rb;
            d * d / (xa + xb)
        })
        .sum::<F>();
    let df = pools.len() - 1;
    let critical = chi_square_critical(df, alpha)?;
    Ok(FitOutcome {
        statistic,
        critical,
        df,
        pass: statistic <= critical,
    })
}

/// Stationary distribution by squaring P(t) until all rows agree to 1e-10
/// (widened to the scalar's resolution for f32).
pub fn stationary_by_doubling<F: Real>(q: &RateMatrix<F>) -> Result<Vec<F>, StatsError> {
    let n = q.dim();
    let max_rate = (0..n)
        .map(|i| q.exit_rate(i))
        .fold(F::zero(), |a, b| if b > a { b } else { a });
    if max_rate <= F::zero() {
        return Err(StatsError::DegenerateGenerator("all rates are zero".into()));
    }
    let mut p = transition_matrix(q, F::one() / max_rate)
        .map_err(|e| StatsError::DegenerateGenerator(e.to_string()))?;
    let tol = F::of(1e-10).max(F::epsilon() * F::of(64.0));
    for _ in 0..200 {
        let next = p.matmul(&p);
        let spread = row_spread(&next);
        let moved = next.max_abs_diff(&p);
        p = next;
        if spread < tol && moved < tol {
            let pi: Vec<F> = (0..n)
                .map(|j| (0..n).map(|i| p.get(i, j)).sum::<F>() / F::of(n as f64))
                .collect();
            return Ok(pi);
        }
    }
    Err(StatsError::DegenerateGenerator(
        "rows did not converge to a common limit (reducible or periodic?)".into(),
    ))
}

fn row_spread<F: Real>(p: &SquareMatrix<F>) -> F {
    let n = p.dim();
    (0..n)
        .map(|j| {
            let mut lo = p.get(0, j);
            let mut hi = lo;
            for i in 1..n {
                let x = p.get(i, j);
                if x < lo {
                    lo = x;
                }
                if x > hi {
                    hi = x;
                }
            }
            hi - lo
        })
        .fold(F::zero(), |a, b| if b > a { b } else { a })
}

/// Stationary distribution by solving pi Q = 0 with the normalization
/// replacing one redundant balance equation.
pub fn stationary_by_null_space<F: Real>(q: &RateMatrix<F>) -> Result<Vec<F>, StatsError> {
    let n = q.dim();
    // System: columns of Q give balance equations for pi; Q^T pi = 0.
    let mut a = vec![vec![F::zero(); n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = q.get(j, i);
        }
    }
    for x in a[n - 1].iter_mut() {
        *x = F::one();
    }
    let mut rhs = vec![F::zero(); n];
    rhs[n - 1] = F::one();
    // Gaussian elimination with partial pivoting.
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| {
                a[r1][col]
                    .abs()
                    .partial_cmp(&a[r2][col].abs())
                    .expect("finite")
            })
            .unwrap();
        if a[pivot][col].abs() < F::of(1e-13) {
            return Err(StatsError::DegenerateGenerator(
                "singular balance system (reducible generator?)".into(),
            ));
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == F::zero() {
                continue;
            }
            let (solved, remaining) = a.split_at_mut(row);
            let pivot_row = &solved[col];
            for (x, &p) in remaining[0].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut pi = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for (coeff, solved) in a[row][row + 1..].iter().zip(&pi[row + 1..]) {
            acc -= *coeff * *solved;
        }
        pi[row] = acc / a[row][row];
    }
    let floor = F::of(1e-10).max(F::epsilon() * F::of(64.0));
    if pi.iter().any(|&x| x < -floor) {
        return Err(StatsError::DegenerateGenerator(
            "negative stationary mass (reducible generator?)".into(),
        ));
    }
    Ok(pi)
}

/// Stationary distribution checked by both routes; they must agree to 1e-8
/// (widened to the scalar's resolution for f32).
pub fn stationary_distribution<F: Real>(q: &RateMatrix<F>) -> Result<Vec<F>, StatsError> {
    let doubling = stationary_by_doubling(q)?;
    let null_space = stationary_by_null_space(q)?;
    let diff = doubling
        .iter()
        .zip(&null_space)
        .map(|(&a, &b)| (a - b).abs())
        .fold(F::zero(), |m, d| if d > m { d } else { m });
    if diff > F::of(1e-8).max(F::epsilon() * F::of(256.0)) {
        return Err(StatsError::DegenerateGenerator(format!(
            "stationary routes disagree by {}",
            diff.as_f64()
        )));
    }
    Ok(null_space)
}
