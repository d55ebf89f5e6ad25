//! Transition rate matrices and the matrix exponential.
//!
//! `transition_matrix` turns a conservative rate matrix Q into the
//! stochastic matrix P(t) = exp(Qt); the 2-state case takes a closed-form
//! fast path, everything else goes through scaling-and-squaring with a
//! Taylor series, which also serves as the cross-check for the closed form.

use rand::Rng;
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("rate matrix must be square, got {rows} rows and {cols} entries per row")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative off-diagonal rate at ({row}, {col})")]
    NegativeRate { row: usize, col: usize },
    #[error("row {row} sums to {sum}, expected 0")]
    RowSum { row: usize, sum: f64 },
    #[error("negative parameter: {0}")]
    NegativeParameter(&'static str),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<F> {
    dim: usize,
    data: Vec<F>,
}

impl<F: Real> SquareMatrix<F> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![F::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, F::one());
        }
        m
    }

    pub fn from_rows(rows: &[&[F]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "rows must be square");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: F) {
        self.data[row * self.dim + col] = value;
    }

    pub fn row(&self, row: usize) -> &[F] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn scale(&self, factor: F) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == F::zero() {
                    continue;
                }
                for j in 0..n {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Left multiply a row vector: v Q.
    pub fn row_vec_mul(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![F::zero(); self.dim];
        for (i, &vi) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.get(i, j);
            }
        }
        out
    }

    /// Maximum absolute row sum (infinity norm).
    pub fn inf_norm(&self) -> F {
        (0..self.dim)
            .map(|i| self.row(i).iter().fold(F::zero(), |a, &x| a + x.abs()))
            .fold(F::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), |m, d| if d > m { d } else { m })
    }
}

/// Sample a state from one row of a stochastic matrix.
pub fn sample_row<F: Real, R: Rng + ?Sized>(row: &[F], rng: &mut R) -> usize {
    let u = F::unit_uniform(rng);
    let mut acc = F::zero();
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Conservative CTMC generator: off-diagonals non-negative, rows sum to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix<F> {
    m: SquareMatrix<F>,
}

impl<F: Real> RateMatrix<F> {
    pub fn from_matrix(m: SquareMatrix<F>) -> Result<Self, RateError> {
        let n = m.dim();
        if m.data.len() != n * n {
            return Err(RateError::NotSquare {
                rows: n,
                cols: m.data.len() / n.max(1),
            });
        }
        // Absolute row-sum tolerance of 1e-12, widened only as far as the
        // scalar's epsilon demands (f32 cannot hit 1e-12).
        let tol = F::of(1e-12).max(F::epsilon() * F::of(16.0) * m.inf_norm());
        for i in 0..n {
            let mut sum = F::zero();
            for j in 0..n {
                let q = m.get(i, j);
                if i != j && q < F::zero() {
                    return Err(RateError::NegativeRate { row: i, col: j });
                }
                sum += q;
            }
            if sum.abs() > tol {
                return Err(RateError::RowSum {
                    row: i,
                    sum: sum.as_f64(),
                });
            }
        }
        Ok(Self { m })
    }

    /// Two-state generator with gain (0->1) and loss (1->0) rates.
    pub fn gtr(gain: F, loss: F) -> Result<Self, RateError> {
        if gain < F::zero() {
            return Err(RateError::NegativeParameter("gain rate"));
        }
        if loss < F::zero() {
            return Err(RateError::NegativeParameter("loss rate"));
        }
        let mut m = SquareMatrix::zeros(2);
        m.set(0, 0, -gain);
        m.set(0, 1, gain);
        m.set(1, 0, loss);
        m.set(1, 1, -loss);
        Self::from_matrix(m)
    }

    /// Four-state covarion generator over {0v, 1v, 0i, 1i}: the variant
    /// block mutates at the plain rates, sites switch variant -> invariant
    /// at `switch_rate`, return at `return_factor * switch_rate`, and the
    /// invariant block never mutates.
    pub fn covarion(gain: F, loss: F, switch_rate: F, return_factor: F) -> Result<Self, RateError> {
        for (v, name) in [
            (gain, "gain rate"),
            (loss, "loss rate"),
            (switch_rate, "switch rate"),
            (return_factor, "return factor"),
        ] {
            if v < F::zero() {
                return Err(RateError::NegativeParameter(name));
            }
        }
        let back = return_factor * switch_rate;
        let z = F::zero();
        let m = SquareMatrix::from_rows(&[
            &[-(gain + switch_rate), gain, switch_rate, z],
            &[loss, -(loss + switch_rate), z, switch_rate],
            &[back, z, -back, z],
            &[z, back, z, -back],
        ]);
        Self::from_matrix(m)
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.m.get(row, col)
    }

    pub fn row(&self, row: usize) -> &[F] {
        self.m.row(row)
    }

    pub fn matrix(&self) -> &SquareMatrix<F> {
        &self.m
    }

    /// Total rate of leaving `state`.
    pub fn exit_rate(&self, state: usize) -> F {
        -self.m.get(state, state)
    }

    /// Sample the jump destination from `state` given that a jump occurs.
    pub fn sample_jump<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let exit = self.exit_rate(state);
        debug_assert!(exit > F::zero());
        let u = F::unit_uniform(rng) * exit;
        let mut acc = F::zero();
        let mut last = state;
        for j in 0..self.dim() {
            if j == state {
                continue;
            }
            let q = self.m.get(state, j);
            if q > F::zero() {
                acc += q;
                last = j;
                if u < acc {
                    return j;
                }
            }
        }
        last
    }
}

/// P(t) = exp(Qt): the closed form for two states, scaling-and-squaring
/// otherwise. Entries are clamped of round-off negatives and each row sums
/// to 1 within 1e-9.
pub fn transition_matrix<F: Real>(q: &RateMatrix<F>, t: F) -> Result<SquareMatrix<F>, RateError> {
    if t < F::zero() {
        return Err(RateError::NegativeTime(t.as_f64()));
    }
    if q.dim() == 2 {
        return Ok(two_state_transition(q.get(0, 1), q.get(1, 0), t));
    }
    transition_matrix_series(q, t)
}

/// Closed-form two-state transition probabilities for gain/loss rates.
pub fn two_state_transition<F: Real>(gain: F, loss: F, t: F) -> SquareMatrix<F> {
    let total = gain + loss;
    let mut p = SquareMatrix::zeros(2);
    if total == F::zero() {
        return SquareMatrix::identity(2);
    }
    let decay = (-total * t).exp();
    let p01 = gain / total * (F::one() - decay);
    let p10 = loss / total * (F::one() - decay);
    p.set(0, 0, F::one() - p01);
    p.set(0, 1, p01);
    p.set(1, 0, p10);
    p.set(1, 1, F::one() - p10);
    p
}

/// Scaling-and-squaring Taylor evaluation of exp(Qt), any dimension.
pub fn transition_matrix_series<F: Real>(
    q: &RateMatrix<F>,
    t: F,
) -> Result<SquareMatrix<F>, RateError> {
    if t < F::zero() {
        return Err(RateError::NegativeTime(t.as_f64()));
    }
    let n = q.dim();
    let a = q.matrix().scale(t);
    let norm = a.inf_norm();
    // Halve until the norm is at most 1/2, then square back up.
    let mut squarings = 0u32;
    let mut scale = F::one();
    while norm * scale > F::of(0.5) {
        scale *= F::of(0.5);
        squarings += 1;
    }
    let b = a.scale(scale);
    let mut sum = SquareMatrix::identity(n);
    let mut term = SquareMatrix::identity(n);
    let tol = F::epsilon() * F::of(0.25);
    for k in 1..=64 {
        term = term.matmul(&b).scale(F::one() / F::of(k as f64));
        for (s, &x) in sum.data.iter_mut().zip(&term.data) {
            *s += x;
        }
        if term.inf_norm() <= tol * sum.inf_norm() {
            break;
        }
    }
    let mut p = sum;
    for _ in 0..squarings {
        p = p.matmul(&p);
    }
    // Round-off can leave tiny negatives where entries are structurally 0.
    let clamp = F::of(1e-9);
    for x in &mut p.data {
        if *x < F::zero() {
            debug_assert!(*x > -clamp, "large negative probability {x:?}");
            *x = F::zero();
        }
    }
    Ok(p)
}
