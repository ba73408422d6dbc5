//! Prime-field arithmetic and the dense linear algebra used for encoding,
//! interference decoding and message reconstruction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PirError, Result};

/// Largest modulus accepted. Keeps `a * b` inside a `u64`.
pub const MAX_MODULUS: u64 = u32::MAX as u64;

/// Default field size used throughout the crate.
pub const DEFAULT_MODULUS: u64 = 257;

/// An element of `F_q`, stored as its canonical representative in `[0, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self> {
        if q > MAX_MODULUS || !is_prime(q) {
            return Err(PirError::NotPrime(q));
        }
        Ok(Self { q })
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Reduces an arbitrary integer into the field.
    pub fn element(&self, v: u64) -> FieldElement {
        FieldElement(v % self.q)
    }

    /// Accepts only canonical representatives.
    pub fn checked_element(&self, v: u64) -> Result<FieldElement> {
        if v < self.q {
            Ok(FieldElement(v))
        } else {
            Err(PirError::SymbolOutOfRange { value: v, q: self.q })
        }
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.q { s - self.q } else { s })
    }

    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.q - b.0 })
    }

    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.q - a.0)
        }
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 * b.0 % self.q)
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.is_zero() {
            return Err(PirError::ZeroInverse);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn dot(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(FieldElement::ZERO, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }

    /// Element-wise sum of two vectors.
    pub fn add_vec(&self, a: &[FieldElement], b: &[FieldElement]) -> Vec<FieldElement> {
        a.iter().zip(b).map(|(&x, &y)| self.add(x, y)).collect()
    }

    /// Solves `a · x = b` for square `a`.
    ///
    /// Gauss-Jordan elimination; the pivot in each column is the first row
    /// (top-down) with a nonzero entry, so the result is fully determined by
    /// the inputs.
    pub fn solve(&self, a: &Matrix, b: &[FieldElement]) -> Result<Vec<FieldElement>> {
        let n = a.rows();
        if a.cols() != n || b.len() != n {
            return Err(PirError::DimensionMismatch(format!(
                "solve expects a square system, got {}x{} with rhs of length {}",
                a.rows(),
                a.cols(),
                b.len()
            )));
        }
        // Augmented matrix [A | b], row-major with n + 1 columns.
        let w = n + 1;
        let mut aug = Vec::with_capacity(n * w);
        for r in 0..n {
            aug.extend_from_slice(a.row(r));
            aug.push(b[r]);
        }

        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !aug[r * w + col].is_zero())
                .ok_or(PirError::SingularMatrix)?;
            if pivot != col {
                for c in 0..w {
                    aug.swap(pivot * w + c, col * w + c);
                }
            }
            let inv = self.inv(aug[col * w + col])?;
            for c in col..w {
                aug[col * w + c] = self.mul(aug[col * w + c], inv);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = aug[r * w + col];
                if factor.is_zero() {
                    continue;
                }
                for c in col..w {
                    let t = self.mul(factor, aug[col * w + c]);
                    aug[r * w + c] = self.sub(aug[r * w + c], t);
                }
            }
        }
        Ok((0..n).map(|r| aug[r * w + n]).collect())
    }

    /// Rank by forward elimination. Does not modify `m`.
    pub fn rank(&self, m: &Matrix) -> usize {
        let (rows, cols) = (m.rows(), m.cols());
        let mut a = m.data().to_vec();
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows {
                break;
            }
            let Some(pivot) = (rank..rows).find(|&r| !a[r * cols + col].is_zero()) else {
                continue;
            };
            for c in 0..cols {
                a.swap(pivot * cols + c, rank * cols + c);
            }
            let inv = self.inv(a[rank * cols + col]).expect("pivot is nonzero");
            for r in rank + 1..rows {
                let factor = self.mul(a[r * cols + col], inv);
                if factor.is_zero() {
                    continue;
                }
                for c in col..cols {
                    let t = self.mul(factor, a[rank * cols + c]);
                    a[r * cols + c] = self.sub(a[r * cols + c], t);
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn is_invertible(&self, m: &Matrix) -> bool {
        m.rows() == m.cols() && self.rank(m) == m.rows()
    }

    pub fn mat_vec(&self, m: &Matrix, v: &[FieldElement]) -> Vec<FieldElement> {
        (0..m.rows()).map(|r| self.dot(m.row(r), v)).collect()
    }
}

/// Dense row-major matrix over a prime field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<FieldElement>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PirError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![FieldElement::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, FieldElement::ONE);
        }
        m
    }

    /// Builds a matrix from integer rows, reducing each entry mod q.
    pub fn from_rows(field: &PrimeField, rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PirError::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| field.element(v)).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[FieldElement] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: FieldElement) {
        assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<FieldElement> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// The submatrix formed by the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Self { rows: self.rows, cols: cols.len(), data }
    }
}

/// Deterministic trial division; moduli are at most 32 bits.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}
