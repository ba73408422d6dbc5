//! The capacity-achieving retrieval scheme for MDS-coded databases.
//!
//! A plan is built in three passes:
//!
//! 1. A canonical schedule in *logical* row indices. Each of the `K`
//!    repetitions runs `M` rounds; round `i` holds equations that sum `i`
//!    rows, one from each of `i` distinct messages.
//!    * Desired-containing equations: `K^{M-1}` fresh desired singletons per
//!      database in round 1; in round `i + 1`, one fresh desired row plus an
//!      aligned sum decoded in round `i`, placed at each of the `N - K`
//!      databases that did not take part in decoding it.
//!    * Undesired equations: for every `i`-subset `S` of undesired messages,
//!      groups of `K` identical equations on fresh rows, each group spread
//!      over `K` circularly consecutive databases so the aligned sum over `S`
//!      is decodable.
//!    * Desired rows are dealt to per-database slots; repetition `ρ` shifts
//!      the row-to-database assignment circularly by `ρ`, so every desired
//!      row is seen by `K` distinct databases.
//! 2. Logical rows are mapped to storage rows through one private random
//!    permutation per message.
//! 3. Each database's equation list is shuffled uniformly.
//!
//! Only the shuffled, permuted lists are sent to the databases. Everything
//! else stays in [`PrivateState`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::Rational;
use crate::combinatorics::{binomial, colex_subsets};
use crate::error::{PirError, Result};
use crate::field::{FieldElement, Matrix};
use crate::storage::{CodeParams, DatabaseContents, GeneratorMatrix};

/// One summand of an equation: row `row` of message `message` (both 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term {
    pub message: usize,
    pub row: usize,
}

/// An unweighted sum of rows from distinct messages. Terms are kept sorted
/// by message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Equation {
    terms: Vec<Term>,
}

impl Equation {
    pub fn new(mut terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(PirError::InvalidParams("equation has no terms".into()));
        }
        terms.sort_unstable();
        if terms.windows(2).any(|w| w[0].message == w[1].message) {
            return Err(PirError::InvalidParams(
                "equation has two terms from the same message".into(),
            ));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// The message subset this equation touches, ascending.
    pub fn messages(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.message).collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn map_rows(&self, f: impl Fn(&Term) -> usize) -> Self {
        let terms = self.terms.iter().map(|t| Term { message: t.message, row: f(t) }).collect();
        Self { terms }
    }
}

/// What an equation is for, from the user's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    /// Yields a projection of logical desired row `row`, after cancelling the
    /// aligned sum decoded by `side_info` if present.
    Desired { row: usize, side_info: Option<usize> },
    /// One of the `K` members of an interference group.
    Undesired { group: usize },
}

/// An equation in the canonical (pre-shuffle) schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduledEquation {
    pub repetition: usize,
    pub round: usize,
    /// Terms in logical (pre-interleaving) row indices.
    pub logical: Equation,
    pub role: Role,
    /// Index of this equation in the database's shuffled query list.
    pub position: usize,
}

/// `K` databases queried for the same undesired sum; decoding it yields the
/// aligned sum of its rows as a single `K`-vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterferenceGroup {
    pub repetition: usize,
    pub round: usize,
    pub messages: Vec<usize>,
    pub logical_rows: Vec<usize>,
    /// `(database, canonical index)` of each member, in window order.
    pub members: Vec<(usize, usize)>,
}

impl InterferenceGroup {
    pub fn databases(&self) -> Vec<usize> {
        self.members.iter().map(|&(db, _)| db).collect()
    }
}

/// Everything the user keeps to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateState {
    pub desired: usize,
    pub seed: u64,
    /// Per message, logical row to storage row.
    pub interleavers: Vec<Vec<usize>>,
    /// Per database, canonical schedule order.
    pub schedule: Vec<Vec<ScheduledEquation>>,
    pub groups: Vec<InterferenceGroup>,
}

/// Queries for every database plus the user's private state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    params: CodeParams,
    databases: Vec<Vec<Equation>>,
    private: PrivateState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    /// Shuffle each database's query order. Disabling this leaks the desired
    /// index and is only useful as a negative control.
    pub shuffle: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { shuffle: true }
    }
}

impl QueryPlan {
    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    /// The query list database `db` receives.
    pub fn queries(&self, db: usize) -> &[Equation] {
        &self.databases[db]
    }

    pub fn databases(&self) -> &[Vec<Equation>] {
        &self.databases
    }

    pub fn private(&self) -> &PrivateState {
        &self.private
    }

    pub fn desired(&self) -> usize {
        self.private.desired
    }

    pub fn total_queries(&self) -> usize {
        self.databases.iter().map(Vec::len).sum()
    }

    /// Serialisable dump with 1-based indices. The database-visible form
    /// omits the desired index.
    pub fn dump(&self, include_desired: bool) -> PlanDump {
        PlanDump {
            params: self.params,
            desired: include_desired.then_some(self.private.desired + 1),
            databases: self
                .databases
                .iter()
                .map(|eqs| {
                    eqs.iter()
                        .map(|e| EquationDump {
                            terms: e.terms.iter().map(|t| [t.message + 1, t.row + 1]).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    #[cfg(test)]
    pub(crate) fn private_mut(&mut self) -> &mut PrivateState {
        &mut self.private
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationDump {
    pub terms: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDump {
    pub params: CodeParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub desired: Option<usize>,
    pub databases: Vec<Vec<EquationDump>>,
}

impl PlanDump {
    /// Database `db`'s query list, converted back to 0-based equations.
    pub fn equations(&self, db: usize) -> Result<Vec<Equation>> {
        let list = self
            .databases
            .get(db)
            .ok_or_else(|| PirError::IndexOutOfRange(format!("database {}", db + 1)))?;
        list.iter()
            .map(|e| {
                let terms = e
                    .terms
                    .iter()
                    .map(|&[m, r]| {
                        if m == 0 || r == 0 {
                            Err(PirError::Parse("indices in a plan dump are 1-based".into()))
                        } else {
                            Ok(Term { message: m - 1, row: r - 1 })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Equation::new(terms)
            })
            .collect()
    }
}

/// Number of fresh desired singletons per database in round 1, and so on:
/// the per-database, per-repetition counts for `i`-subsets.
fn per_subset_count(p: &CodeParams, i: usize) -> usize {
    p.k.pow((p.m - i) as u32) * (p.n - p.k).pow((i - 1) as u32)
}

/// Seeds the RNG for one purpose. Stream `m` drives the interleaver of
/// message `m`; stream `M + n` drives the shuffle of database `n`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn plan_queries(params: &CodeParams, desired: usize, seed: u64) -> Result<QueryPlan> {
    plan_queries_with(params, desired, seed, PlanOptions::default())
}

pub fn plan_queries_with(
    params: &CodeParams,
    desired: usize,
    seed: u64,
    options: PlanOptions,
) -> Result<QueryPlan> {
    params.validate()?;
    let p = *params;
    if desired >= p.m {
        return Err(PirError::InvalidParams(format!(
            "desired message {} is not in 1..={}",
            desired + 1,
            p.m
        )));
    }
    let (mut schedule, groups) = canonical_schedule(&p, desired);

    let interleavers: Vec<Vec<usize>> = (0..p.m)
        .map(|m| {
            let mut perm: Vec<usize> = (0..p.rows()).collect();
            perm.shuffle(&mut stream_rng(seed, m as u64));
            perm
        })
        .collect();

    let mut databases = Vec::with_capacity(p.n);
    for (db, entries) in schedule.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        if options.shuffle {
            order.shuffle(&mut stream_rng(seed, (p.m + db) as u64));
        }
        // order[pos] = canonical index sent at position pos.
        let mut queries = vec![None; entries.len()];
        for (pos, &canon) in order.iter().enumerate() {
            let entry = &mut entries[canon];
            entry.position = pos;
            queries[pos] = Some(entry.logical.map_rows(|t| interleavers[t.message][t.row]));
        }
        databases.push(queries.into_iter().map(|q| q.expect("permutation")).collect());
    }

    Ok(QueryPlan {
        params: p,
        databases,
        private: PrivateState { desired, seed, interleavers, schedule, groups },
    })
}

/// Builds the deterministic pre-shuffle schedule in logical row indices.
fn canonical_schedule(
    p: &CodeParams,
    desired: usize,
) -> (Vec<Vec<ScheduledEquation>>, Vec<InterferenceGroup>) {
    let (n, k, m) = (p.n, p.k, p.m);
    let rows = p.rows();
    // Desired slots per database per repetition: N^{M-1}.
    let slots_per_db = rows / n;
    let undesired: Vec<usize> = (0..m).filter(|&x| x != desired).collect();

    let mut schedule: Vec<Vec<ScheduledEquation>> = vec![Vec::new(); n];
    let mut groups: Vec<InterferenceGroup> = Vec::new();
    // Next fresh logical row per message; only undesired messages draw from it.
    let mut next_row = vec![0usize; m];

    for rep in 0..k {
        // Per-database desired slot counter; identical structure in every
        // repetition, so slot s at database d maps to the same row block.
        let mut slot = vec![0usize; n];
        let desired_row = |db: usize, slot: &mut [usize]| -> usize {
            let base = (db + n - rep % n) % n;
            let row = base * slots_per_db + slot[db];
            slot[db] += 1;
            row
        };
        // Groups decoded in the previous round of this repetition.
        let mut previous_round_groups: Vec<usize> = Vec::new();

        for round in 1..=m {
            // Desired-containing equations.
            if round == 1 {
                for db in 0..n {
                    for _ in 0..per_subset_count(p, 1) {
                        let row = desired_row(db, &mut slot);
                        schedule[db].push(ScheduledEquation {
                            repetition: rep,
                            round,
                            logical: Equation { terms: vec![Term { message: desired, row }] },
                            role: Role::Desired { row, side_info: None },
                            position: 0,
                        });
                    }
                }
            } else {
                for &g in &previous_round_groups {
                    let group = &groups[g];
                    let window = group.databases();
                    let start = window[0];
                    // The N - K databases after the window, in circular order.
                    for off in k..n {
                        let db = (start + off) % n;
                        let row = desired_row(db, &mut slot);
                        let mut terms: Vec<Term> = group
                            .messages
                            .iter()
                            .zip(&group.logical_rows)
                            .map(|(&message, &row)| Term { message, row })
                            .collect();
                        terms.push(Term { message: desired, row });
                        terms.sort_unstable();
                        schedule[db].push(ScheduledEquation {
                            repetition: rep,
                            round,
                            logical: Equation { terms },
                            role: Role::Desired { row, side_info: Some(g) },
                            position: 0,
                        });
                    }
                }
            }

            // Undesired equations for every `round`-subset of undesired messages.
            previous_round_groups.clear();
            if round < m {
                let groups_per_subset = n * per_subset_count(p, round) / k;
                let mut window_start = 0usize;
                for subset in colex_subsets(&undesired, round) {
                    for _ in 0..groups_per_subset {
                        let logical_rows: Vec<usize> = subset
                            .iter()
                            .map(|&msg| {
                                let r = next_row[msg];
                                next_row[msg] += 1;
                                r
                            })
                            .collect();
                        let terms: Vec<Term> = subset
                            .iter()
                            .zip(&logical_rows)
                            .map(|(&message, &row)| Term { message, row })
                            .collect();
                        let gi = groups.len();
                        let mut members = Vec::with_capacity(k);
                        for off in 0..k {
                            let db = (window_start + off) % n;
                            members.push((db, schedule[db].len()));
                            schedule[db].push(ScheduledEquation {
                                repetition: rep,
                                round,
                                logical: Equation { terms: terms.clone() },
                                role: Role::Undesired { group: gi },
                                position: 0,
                            });
                        }
                        window_start = (window_start + k) % n;
                        groups.push(InterferenceGroup {
                            repetition: rep,
                            round,
                            messages: subset.clone(),
                            logical_rows,
                            members,
                        });
                        previous_round_groups.push(gi);
                    }
                }
            }
        }
        debug_assert!(slot.iter().all(|&s| s == slots_per_db));
    }

    for &msg in &undesired {
        assert!(
            next_row[msg] <= rows,
            "row budget exceeded: message {} needs {} rows, has {}",
            msg + 1,
            next_row[msg],
            rows
        );
    }
    (schedule, groups)
}

/// Undesired rows each interfering message contributes: `K · N^{M-1}`
/// (zero when `M = 1`).
pub fn undesired_rows_per_message(p: &CodeParams) -> usize {
    if p.m == 1 {
        0
    } else {
        p.k * p.rows() / p.n
    }
}

/// Database side: one symbol per equation, the sum of the stored symbols
/// named by its terms.
pub fn answer_queries(
    contents: &DatabaseContents,
    equations: &[Equation],
    field: &crate::field::PrimeField,
) -> Result<Vec<FieldElement>> {
    equations
        .iter()
        .map(|eq| {
            eq.terms.iter().try_fold(FieldElement::ZERO, |acc, t| {
                Ok(field.add(acc, contents.symbol(t.message, t.row)?))
            })
        })
        .collect()
}

/// Per-database answer lists, in the order of the corresponding queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub databases: Vec<Vec<FieldElement>>,
}

impl AnswerSet {
    pub fn total(&self) -> usize {
        self.databases.iter().map(Vec::len).sum()
    }
}

/// Number of `K × K` systems solved during reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SolveCounts {
    /// One per interference group; each yields an aligned sum.
    pub interference: usize,
    /// One per desired row.
    pub desired: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalResult {
    pub message: Matrix,
    pub downloaded_symbols: usize,
    pub desired_symbols: usize,
    pub achieved_rate: Rational,
    pub solves: SolveCounts,
}

/// Decodes interference, cancels side information, solves each desired row
/// from its `K` projections and undoes the interleaver.
pub fn reconstruct(
    plan: &QueryPlan,
    answers: &AnswerSet,
    g: &GeneratorMatrix,
) -> Result<RetrievalResult> {
    let p = plan.params;
    let field = *g.field();
    if g.n() != p.n || g.k() != p.k || field.modulus() != p.q {
        return Err(PirError::DimensionMismatch(format!(
            "generator is {}x{} over F_{}, plan needs {}x{} over F_{}",
            g.k(),
            g.n(),
            field.modulus(),
            p.k,
            p.n,
            p.q
        )));
    }
    if answers.databases.len() != p.n {
        return Err(PirError::InconsistentAnswers(format!(
            "expected answers from {} databases, got {}",
            p.n,
            answers.databases.len()
        )));
    }
    for (db, (a, q)) in answers.databases.iter().zip(&plan.databases).enumerate() {
        if a.len() != q.len() {
            return Err(PirError::InconsistentAnswers(format!(
                "database {} returned {} answers to {} queries",
                db + 1,
                a.len(),
                q.len()
            )));
        }
    }
    let answer = |db: usize, canon: usize| -> FieldElement {
        answers.databases[db][plan.private.schedule[db][canon].position]
    };

    let mut solves = SolveCounts::default();

    // Aligned sums, one K-vector per group. Individual summands are never
    // solved for.
    let mut aligned: Vec<Vec<FieldElement>> = Vec::with_capacity(plan.private.groups.len());
    for group in &plan.private.groups {
        let system = g.projection_matrix(&group.databases());
        let rhs: Vec<FieldElement> = group.members.iter().map(|&(db, c)| answer(db, c)).collect();
        aligned.push(field.solve(&system, &rhs)?);
        solves.interference += 1;
    }

    // Projections of each logical desired row.
    let rows = p.rows();
    let mut projections: Vec<Vec<(usize, FieldElement)>> = vec![Vec::with_capacity(p.k); rows];
    for (db, entries) in plan.private.schedule.iter().enumerate() {
        let h = g.column(db);
        for (canon, entry) in entries.iter().enumerate() {
            if let Role::Desired { row, side_info } = entry.role {
                let mut value = answer(db, canon);
                if let Some(gi) = side_info {
                    value = field.sub(value, field.dot(&h, &aligned[gi]));
                }
                projections[row].push((db, value));
            }
        }
    }

    let desired = plan.private.desired;
    let pi = &plan.private.interleavers[desired];
    let mut message = Matrix::zeros(rows, p.k);
    for (row, proj) in projections.iter().enumerate() {
        if proj.len() != p.k {
            return Err(PirError::InconsistentAnswers(format!(
                "desired row {} has {} projections, need {}",
                row + 1,
                proj.len(),
                p.k
            )));
        }
        let dbs: Vec<usize> = proj.iter().map(|&(db, _)| db).collect();
        let rhs: Vec<FieldElement> = proj.iter().map(|&(_, v)| v).collect();
        let x = field.solve(&g.projection_matrix(&dbs), &rhs)?;
        solves.desired += 1;
        for (c, v) in x.into_iter().enumerate() {
            message.set(pi[row], c, v);
        }
    }

    let downloaded_symbols = answers.total();
    let desired_symbols = p.k * rows;
    Ok(RetrievalResult {
        message,
        downloaded_symbols,
        desired_symbols,
        achieved_rate: Rational::new(desired_symbols, downloaded_symbols),
        solves,
    })
}

/// Per-repetition count of equations for each exact message subset at
/// database `db`. Subsets are 0-based and ascending.
pub fn query_shape_census(plan: &QueryPlan, db: usize) -> Vec<BTreeMap<Vec<usize>, usize>> {
    let mut census = vec![BTreeMap::new(); plan.params.k];
    for entry in &plan.private.schedule[db] {
        *census[entry.repetition].entry(entry.logical.messages()).or_insert(0) += 1;
    }
    census
}

/// Expected census entry for an `i`-subset: `K^{M-i} (N-K)^{i-1}`.
pub fn expected_subset_count(p: &CodeParams, subset_size: usize) -> usize {
    per_subset_count(p, subset_size)
}

/// Number of equations per database per repetition.
pub fn queries_per_db_per_repetition(p: &CodeParams) -> usize {
    (1..=p.m)
        .map(|i| binomial(p.m as u64, i as u64) as usize * per_subset_count(p, i))
        .sum()
}

/// Text rendering of the canonical schedule laid out as repetition × round
/// × database, with logical row indices. `h3(x1[16]+x2[3])` is the
/// projection onto `h_3` of row 16 of message 1 plus row 3 of message 2.
pub fn render_query_table(plan: &QueryPlan) -> String {
    use std::fmt::Write;
    let p = plan.params;
    let mut cells: Vec<Vec<Vec<Vec<String>>>> = vec![vec![vec![Vec::new(); p.n]; p.m]; p.k];
    for (db, entries) in plan.private.schedule.iter().enumerate() {
        for e in entries {
            let sum: Vec<String> = e
                .logical
                .terms
                .iter()
                .map(|t| format!("x{}[{}]", t.message + 1, t.row + 1))
                .collect();
            let cell = if sum.len() == 1 {
                format!("h{}{}", db + 1, sum[0])
            } else {
                format!("h{}({})", db + 1, sum.join("+"))
            };
            cells[e.repetition][e.round - 1][db].push(cell);
        }
    }
    let width = cells
        .iter()
        .flatten()
        .flatten()
        .flatten()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max(4);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "# (N,K,M) = ({},{},{}), desired message {}",
        p.n,
        p.k,
        p.m,
        plan.private.desired + 1
    );
    let header: Vec<String> = (1..=p.n).map(|d| format!("{:<width$}", format!("DB{d}"))).collect();
    for (rep, rounds) in cells.iter().enumerate() {
        let _ = writeln!(out, "repetition {}", rep + 1);
        for (round, dbs) in rounds.iter().enumerate() {
            let height = dbs.iter().map(Vec::len).max().unwrap_or(0);
            if height == 0 {
                continue;
            }
            let _ = writeln!(out, "  round {}", round + 1);
            let _ = writeln!(out, "    {}", header.join(" | ").trim_end());
            for line in 0..height {
                let row: Vec<String> = dbs
                    .iter()
                    .map(|c| format!("{:<width$}", c.get(line).map_or("", String::as_str)))
                    .collect();
                let _ = writeln!(out, "    {}", row.join(" | ").trim_end());
            }
        }
    }
    out
}
