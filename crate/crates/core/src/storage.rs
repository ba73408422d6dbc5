//! The `(N, K)` MDS storage code: generator construction, encoding of the
//! message set into per-database contents, and single-node repair.
//!
//! Every message is an `Ñ × K` matrix over `F_q` with `Ñ = N^M`. Database
//! `n` stores, for each message `i` and row `j`, the symbol `h_n^T w_j^[i]`,
//! where `h_n` is column `n` of the `K × N` generator. Contents are laid out
//! message-major, then row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, lex_subsets};
use crate::error::{PirError, Result};
use crate::field::{FieldElement, Matrix, PrimeField, DEFAULT_MODULUS};

/// Exhaustive MDS verification is refused above this many column subsets.
pub const MAX_MDS_SUBSETS: u128 = 100_000;

/// Upper bound on `Ñ = N^M`; keeps message sets addressable in memory.
pub const MAX_ROWS: u64 = 1 << 22;

/// Parameters shared by every stage of a retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeParams {
    /// Number of databases, `N`.
    pub n: usize,
    /// Code dimension, `K`.
    pub k: usize,
    /// Number of messages, `M`.
    pub m: usize,
    /// Field modulus, `q`.
    pub q: u64,
}

impl CodeParams {
    pub fn new(n: usize, k: usize, m: usize, q: u64) -> Result<Self> {
        let p = Self { n, k, m, q };
        p.validate()?;
        Ok(p)
    }

    pub fn with_default_field(n: usize, k: usize, m: usize) -> Result<Self> {
        Self::new(n, k, m, DEFAULT_MODULUS)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(PirError::InvalidParams(format!(
                "need 1 <= K <= N, got N={} K={}",
                self.n, self.k
            )));
        }
        if self.m == 0 {
            return Err(PirError::InvalidParams("need M >= 1".into()));
        }
        PrimeField::new(self.q)?;
        if self.q <= self.n as u64 {
            return Err(PirError::FieldTooSmall { q: self.q, n: self.n });
        }
        match (self.n as u64).checked_pow(self.m as u32) {
            Some(rows) if rows <= MAX_ROWS => Ok(()),
            _ => Err(PirError::InvalidParams(format!(
                "N^M = {}^{} rows per message is too large",
                self.n, self.m
            ))),
        }
    }

    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.q).expect("validated modulus")
    }

    /// Rows per message, `Ñ = N^M`.
    pub fn rows(&self) -> usize {
        self.n.pow(self.m as u32)
    }
}

/// The `K × N` generator matrix `H` with columns `h_1 .. h_N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorMatrix {
    field: PrimeField,
    h: Matrix,
}

impl GeneratorMatrix {
    /// Vandermonde generator with columns `(1, a_n, a_n^2, ..., a_n^{K-1})`.
    ///
    /// The default points are `a_n = n` for `n = 1..N`.
    pub fn vandermonde(params: &CodeParams, points: Option<&[u64]>) -> Result<Self> {
        params.validate()?;
        let field = params.field();
        let points: Vec<u64> = match points {
            Some(p) => p.to_vec(),
            None => (1..=params.n as u64).collect(),
        };
        if points.len() != params.n {
            return Err(PirError::DimensionMismatch(format!(
                "expected {} evaluation points, got {}",
                params.n,
                points.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if points.iter().any(|&a| a == 0 || a >= params.q || !seen.insert(a)) {
            return Err(PirError::DuplicatePoints);
        }
        let mut h = Matrix::zeros(params.k, params.n);
        for (col, &a) in points.iter().enumerate() {
            let a = field.element(a);
            for row in 0..params.k {
                h.set(row, col, field.pow(a, row as u64));
            }
        }
        Ok(Self { field, h })
    }

    /// Systematic MDS generator `[I_K | P]`, obtained by normalising the
    /// default Vandermonde generator by its leading `K × K` block.
    pub fn systematic(params: &CodeParams) -> Result<Self> {
        let v = Self::vandermonde(params, None)?;
        let field = v.field;
        let lead = v.h.select_columns(&(0..params.k).collect::<Vec<_>>());
        let mut h = Matrix::zeros(params.k, params.n);
        for col in 0..params.n {
            let c = field.solve(&lead, &v.h.column(col))?;
            for (row, value) in c.into_iter().enumerate() {
                h.set(row, col, value);
            }
        }
        Self::from_matrix(params, h)
    }

    /// Accepts a user-supplied generator if it passes [`verify_mds`].
    pub fn from_matrix(params: &CodeParams, h: Matrix) -> Result<Self> {
        params.validate()?;
        if h.rows() != params.k || h.cols() != params.n {
            return Err(PirError::DimensionMismatch(format!(
                "generator must be {}x{}, got {}x{}",
                params.k,
                params.n,
                h.rows(),
                h.cols()
            )));
        }
        let g = Self { field: params.field(), h };
        if !verify_mds(&g)? {
            return Err(PirError::NotMds);
        }
        Ok(g)
    }

    /// Wraps a matrix without checking the MDS property.
    pub fn from_matrix_unchecked(field: PrimeField, h: Matrix) -> Self {
        Self { field, h }
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.cols()
    }

    pub fn k(&self) -> usize {
        self.h.rows()
    }

    /// Column `h_n` (0-based).
    pub fn column(&self, n: usize) -> Vec<FieldElement> {
        self.h.column(n)
    }

    /// `H_S^T` for a set of databases: row `t` is `h_{dbs[t]}^T`.
    pub fn projection_matrix(&self, dbs: &[usize]) -> Matrix {
        self.h.select_columns(dbs).transpose()
    }
}

/// True iff every `K`-column submatrix of `H` is invertible.
pub fn verify_mds(g: &GeneratorMatrix) -> Result<bool> {
    let (n, k) = (g.n(), g.k());
    let subsets = binomial(n as u64, k as u64);
    if subsets > MAX_MDS_SUBSETS {
        return Err(PirError::TooLargeToVerify { n, k, subsets });
    }
    let cols: Vec<usize> = (0..n).collect();
    Ok(lex_subsets(&cols, k)
        .iter()
        .all(|s| g.field.is_invertible(&g.h.select_columns(s))))
}

/// `M` messages, each an `Ñ × K` matrix; row `j` of message `i` is `w_j^[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSet {
    messages: Vec<Matrix>,
}

impl MessageSet {
    pub fn new(messages: Vec<Matrix>) -> Result<Self> {
        let Some(first) = messages.first() else {
            return Err(PirError::InvalidParams("message set is empty".into()));
        };
        let (rows, cols) = (first.rows(), first.cols());
        if messages.iter().any(|w| w.rows() != rows || w.cols() != cols) {
            return Err(PirError::DimensionMismatch("messages differ in shape".into()));
        }
        Ok(Self { messages })
    }

    /// I.i.d. uniform symbols, reproducible from `seed`.
    pub fn random(params: &CodeParams, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (rows, k) = (params.rows(), params.k);
        let field = params.field();
        let messages = (0..params.m)
            .map(|_| {
                let data = (0..rows * k)
                    .map(|_| field.element(rng.gen_range(0..params.q)))
                    .collect();
                Matrix::new(rows, k, data).expect("shape")
            })
            .collect();
        Self { messages }
    }

    pub fn zeros(params: &CodeParams) -> Self {
        Self { messages: vec![Matrix::zeros(params.rows(), params.k); params.m] }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.messages[0].rows()
    }

    pub fn k(&self) -> usize {
        self.messages[0].cols()
    }

    pub fn message(&self, i: usize) -> &Matrix {
        &self.messages[i]
    }

    pub fn messages(&self) -> &[Matrix] {
        &self.messages
    }

    /// Checks the shape against `params` and every symbol against `q`.
    pub fn check(&self, params: &CodeParams) -> Result<()> {
        if self.len() != params.m || self.rows() != params.rows() || self.k() != params.k {
            return Err(PirError::DimensionMismatch(format!(
                "message set is {}x{}x{}, parameters need {}x{}x{}",
                self.len(),
                self.rows(),
                self.k(),
                params.m,
                params.rows(),
                params.k
            )));
        }
        for w in &self.messages {
            if let Some(bad) = w.data().iter().find(|s| s.value() >= params.q) {
                return Err(PirError::SymbolOutOfRange { value: bad.value(), q: params.q });
            }
        }
        Ok(())
    }
}

/// What database `index` stores: `M · Ñ` coded symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseContents {
    pub index: usize,
    pub messages: usize,
    pub rows: usize,
    pub symbols: Vec<FieldElement>,
}

impl DatabaseContents {
    /// Stored symbol `h_n^T w_row^[message]`.
    pub fn symbol(&self, message: usize, row: usize) -> Result<FieldElement> {
        if message >= self.messages || row >= self.rows {
            return Err(PirError::IndexOutOfRange(format!(
                "(message {message}, row {row}) outside {}x{}",
                self.messages, self.rows
            )));
        }
        Ok(self.symbols[message * self.rows + row])
    }
}

/// Encodes every message row onto every database.
pub fn encode(msgs: &MessageSet, g: &GeneratorMatrix) -> Result<Vec<DatabaseContents>> {
    if msgs.k() != g.k() {
        return Err(PirError::DimensionMismatch(format!(
            "messages have {} columns, generator has K={}",
            msgs.k(),
            g.k()
        )));
    }
    let field = *g.field();
    let (m, rows) = (msgs.len(), msgs.rows());
    Ok((0..g.n())
        .into_par_iter()
        .map(|n| {
            let h = g.column(n);
            let symbols = msgs
                .messages()
                .iter()
                .flat_map(|w| (0..rows).map(move |j| w.row(j)))
                .map(|row| field.dot(&h, row))
                .collect();
            DatabaseContents { index: n, messages: m, rows, symbols }
        })
        .collect())
}

/// Rebuilds the contents of `failed` from exactly `K` surviving databases.
///
/// Each stored row is recovered from the survivors' projections by solving
/// `H_S^T r = y_S`, then re-projected onto `h_failed`. Because the map is
/// linear, the solve is done once for the coefficient vector
/// `c = H_S^{-1} h_failed` and applied as `c^T y_S`.
pub fn repair(
    surviving: &[&DatabaseContents],
    g: &GeneratorMatrix,
    failed: usize,
) -> Result<DatabaseContents> {
    let (n, k) = (g.n(), g.k());
    if surviving.len() != k {
        return Err(PirError::InvalidFailureSet(format!(
            "repair needs exactly K={k} survivors, got {}",
            surviving.len()
        )));
    }
    if failed >= n {
        return Err(PirError::IndexOutOfRange(format!("database {failed} of {n}")));
    }
    let idx: Vec<usize> = surviving.iter().map(|d| d.index).collect();
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k || idx.iter().any(|&i| i >= n || i == failed) {
        return Err(PirError::InvalidFailureSet(format!(
            "survivors {idx:?} must be {k} distinct databases other than {failed}"
        )));
    }
    let (m, rows) = (surviving[0].messages, surviving[0].rows);
    if surviving.iter().any(|d| d.messages != m || d.rows != rows || d.symbols.len() != m * rows) {
        return Err(PirError::DimensionMismatch("survivor contents differ in shape".into()));
    }

    let field = *g.field();
    // H_S c = h_failed  <=>  h_failed^T r = c^T (H_S^T r).
    let coeffs = field.solve(&g.matrix().select_columns(&idx), &g.column(failed))?;
    let symbols = (0..m * rows)
        .map(|pos| {
            coeffs
                .iter()
                .zip(surviving)
                .fold(FieldElement::ZERO, |acc, (&c, d)| {
                    field.add(acc, field.mul(c, d.symbols[pos]))
                })
        })
        .collect();
    Ok(DatabaseContents { index: failed, messages: m, rows, symbols })
}

/// Recovers the full message set from any `K` databases.
pub fn decode_messages(surviving: &[&DatabaseContents], g: &GeneratorMatrix) -> Result<MessageSet> {
    let k = g.k();
    if surviving.len() != k {
        return Err(PirError::InvalidFailureSet(format!(
            "decoding needs exactly K={k} databases, got {}",
            surviving.len()
        )));
    }
    let field = *g.field();
    let idx: Vec<usize> = surviving.iter().map(|d| d.index).collect();
    let system = g.projection_matrix(&idx);
    let (m, rows) = (surviving[0].messages, surviving[0].rows);
    let mut messages = Vec::with_capacity(m);
    for i in 0..m {
        let mut data = Vec::with_capacity(rows * k);
        for j in 0..rows {
            let y: Vec<_> = surviving.iter().map(|d| d.symbols[i * rows + j]).collect();
            data.extend(field.solve(&system, &y)?);
        }
        messages.push(Matrix::new(rows, k, data)?);
    }
    MessageSet::new(messages)
}
