//! Operational checks that a single database's view does not depend on the
//! desired message index.
//!
//! Two checks are offered. [`exact_shape_invariance`] compares the
//! per-repetition census of message subsets at every database for every
//! desired index; it is exact. [`empirical_view_test`] samples fresh plans
//! and compares a coarsened view statistic by total-variation distance:
//!
//! * for each query position, the distribution of the message subset queried
//!   there (averaged over positions);
//! * for each message, the distribution of storage rows referenced.
//!
//! The full joint view is not compared; its support is far too large to
//! sample.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::combinatorics::colex_subsets;
use crate::error::{PirError, Result};
use crate::scheme::{
    expected_subset_count, plan_queries, plan_queries_with, query_shape_census, PlanOptions,
    QueryPlan,
};
use crate::storage::CodeParams;

pub const DEFAULT_TRIALS: usize = 2000;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const MIN_TRIALS: usize = 100;

/// Builds a plan for `(params, desired, seed)`.
pub type Planner = dyn Fn(&CodeParams, usize, u64) -> Result<QueryPlan> + Sync;

/// The planner used in production.
pub fn shuffled_planner(p: &CodeParams, desired: usize, seed: u64) -> Result<QueryPlan> {
    plan_queries(p, desired, seed)
}

/// Negative control: skips the per-database shuffle, so the query order
/// reveals the desired index.
pub fn leaky_planner(p: &CodeParams, desired: usize, seed: u64) -> Result<QueryPlan> {
    plan_queries_with(p, desired, seed, PlanOptions { shuffle: false })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CensusViolation {
    pub desired: usize,
    pub db: usize,
    pub repetition: usize,
    pub subset: Vec<usize>,
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactReport {
    pub pass: bool,
    pub violations: Vec<CensusViolation>,
}

/// Checks every database's census against `K^{M-i}(N-K)^{i-1}` for each
/// `i`-subset, for every desired index.
pub fn exact_shape_invariance(params: &CodeParams) -> Result<ExactReport> {
    exact_shape_invariance_with(params, &shuffled_planner)
}

pub fn exact_shape_invariance_with(params: &CodeParams, planner: &Planner) -> Result<ExactReport> {
    params.validate()?;
    let all: Vec<usize> = (0..params.m).collect();
    let expected: BTreeMap<Vec<usize>, usize> = (1..=params.m)
        .flat_map(|i| {
            let count = expected_subset_count(params, i);
            colex_subsets(&all, i).into_iter().map(move |s| (s, count))
        })
        .collect();

    let mut violations = Vec::new();
    for desired in 0..params.m {
        let plan = planner(params, desired, desired as u64)?;
        for db in 0..params.n {
            for (repetition, census) in query_shape_census(&plan, db).into_iter().enumerate() {
                let keys = expected.keys().chain(census.keys().filter(|k| !expected.contains_key(*k)));
                for subset in keys {
                    let want = expected.get(subset).copied().unwrap_or(0);
                    let got = census.get(subset).copied().unwrap_or(0);
                    if want != got {
                        violations.push(CensusViolation {
                            desired: desired + 1,
                            db: db + 1,
                            repetition: repetition + 1,
                            subset: subset.iter().map(|m| m + 1).collect(),
                            expected: want,
                            found: got,
                        });
                    }
                }
            }
        }
    }
    Ok(ExactReport { pass: violations.is_empty(), violations })
}

/// Histograms of the coarsened view at one database.
#[derive(Debug, Clone)]
struct ViewHistogram {
    /// `[position][subset bitmask]`.
    positions: Vec<Vec<u64>>,
    /// `[message][row]`.
    rows: Vec<Vec<u64>>,
}

impl ViewHistogram {
    fn new(p: &CodeParams, len: usize) -> Self {
        Self {
            positions: vec![vec![0; 1 << p.m]; len],
            rows: vec![vec![0; p.rows()]; p.m],
        }
    }

    fn record(&mut self, plan: &QueryPlan, db: usize) {
        for (pos, eq) in plan.queries(db).iter().enumerate() {
            let mask = eq.terms().iter().fold(0usize, |acc, t| acc | (1 << t.message));
            self.positions[pos][mask] += 1;
            for t in eq.terms() {
                self.rows[t.message][t.row] += 1;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.positions.iter_mut().zip(other.positions) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.rows.iter_mut().zip(other.rows) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

/// Total-variation distance between two histograms, each normalised.
fn tv(a: &[u64], b: &[u64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if sa == 0.0 || sb == 0.0 {
        return if sa == sb { 0.0 } else { 1.0 };
    }
    0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / sa - y as f64 / sb).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub d1: usize,
    pub d2: usize,
    pub db: usize,
    /// Largest of the component distances below.
    pub tv: f64,
    pub tv_positions: f64,
    pub tv_rows: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalReport {
    pub pass: bool,
    pub pairs: Vec<PairDistance>,
    pub trials: usize,
    pub threshold: f64,
    pub statistic: &'static str,
}

pub const VIEW_STATISTIC: &str =
    "per-position message subset (averaged over positions) and per-message row marginals";

/// Trial seed for `(desired, trial)`; distinct streams for every pair.
fn trial_seed(desired: usize, trial: usize) -> u64 {
    // SplitMix64 finaliser over a packed key.
    let mut z = ((desired as u64) << 40 | trial as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn collect_histograms(
    params: &CodeParams,
    dbs: &[usize],
    trials: usize,
    planner: &Planner,
) -> Result<Vec<Vec<ViewHistogram>>> {
    let probe = planner(params, 0, 0)?;
    (0..params.m)
        .map(|desired| {
            let empty: Vec<ViewHistogram> =
                dbs.iter().map(|&db| ViewHistogram::new(params, probe.queries(db).len())).collect();
            (0..trials)
                .into_par_iter()
                .map(|t| -> Result<Vec<ViewHistogram>> {
                    let plan = planner(params, desired, trial_seed(desired, t))?;
                    let mut h = empty.clone();
                    for (slot, &db) in h.iter_mut().zip(dbs) {
                        slot.record(&plan, db);
                    }
                    Ok(h)
                })
                .try_reduce(
                    || empty.clone(),
                    |a, b| Ok(a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()),
                )
        })
        .collect()
}

/// Samples `trials` plans per desired index and compares the coarsened
/// views at each database in `dbs` pairwise.
pub fn empirical_view_test(
    params: &CodeParams,
    dbs: &[usize],
    trials: usize,
    threshold: f64,
) -> Result<EmpiricalReport> {
    empirical_view_test_with(params, dbs, trials, threshold, &shuffled_planner)
}

pub fn empirical_view_test_with(
    params: &CodeParams,
    dbs: &[usize],
    trials: usize,
    threshold: f64,
    planner: &Planner,
) -> Result<EmpiricalReport> {
    params.validate()?;
    if trials < MIN_TRIALS {
        return Err(PirError::InvalidParams(format!("need at least {MIN_TRIALS} trials")));
    }
    if let Some(&bad) = dbs.iter().find(|&&db| db >= params.n) {
        return Err(PirError::IndexOutOfRange(format!("database {}", bad + 1)));
    }
    let hist = collect_histograms(params, dbs, trials, planner)?;

    let mut pairs = Vec::new();
    for d1 in 0..params.m {
        for d2 in d1 + 1..params.m {
            for (slot, &db) in dbs.iter().enumerate() {
                let (a, b) = (&hist[d1][slot], &hist[d2][slot]);
                let tv_positions = a
                    .positions
                    .iter()
                    .zip(&b.positions)
                    .map(|(x, y)| tv(x, y))
                    .sum::<f64>()
                    / a.positions.len().max(1) as f64;
                let tv_rows =
                    a.rows.iter().zip(&b.rows).map(|(x, y)| tv(x, y)).fold(0.0, f64::max);
                pairs.push(PairDistance {
                    d1: d1 + 1,
                    d2: d2 + 1,
                    db: db + 1,
                    tv: tv_positions.max(tv_rows),
                    tv_positions,
                    tv_rows,
                });
            }
        }
    }
    Ok(EmpiricalReport {
        pass: pairs.iter().all(|p| p.tv < threshold),
        pairs,
        trials,
        threshold,
        statistic: VIEW_STATISTIC,
    })
}

/// Pearson chi-square p-values for uniformity of the storage rows a
/// database sees, per `(desired, message)`. Row counts across trials are
/// binomial, so the test is conservative.
pub fn row_uniformity_p_values(
    params: &CodeParams,
    db: usize,
    trials: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    params.validate()?;
    let hist = collect_histograms(params, &[db], trials, &shuffled_planner)?;
    let mut out = Vec::new();
    for (desired, per_db) in hist.iter().enumerate() {
        for (message, counts) in per_db[0].rows.iter().enumerate() {
            let total: u64 = counts.iter().sum();
            let expected = total as f64 / counts.len() as f64;
            let stat: f64 =
                counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
            let dof = (counts.len() - 1) as f64;
            let p = if dof == 0.0 { 1.0 } else { 1.0 - ChiSquared::new(dof).expect("dof > 0").cdf(stat) };
            out.push((desired + 1, message + 1, p));
        }
    }
    Ok(out)
}

/// Combined audit document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub exact: &'static str,
    pub pairs: Vec<PairDistance>,
    pub trials: usize,
    pub threshold: f64,
    pub statistic: &'static str,
    pub violations: Vec<CensusViolation>,
}

impl AuditReport {
    pub fn new(exact: ExactReport, empirical: EmpiricalReport) -> Self {
        Self {
            exact: if exact.pass { "pass" } else { "fail" },
            pairs: empirical.pairs,
            trials: empirical.trials,
            threshold: empirical.threshold,
            statistic: empirical.statistic,
            violations: exact.violations,
        }
    }

    pub fn pass(&self) -> bool {
        self.exact == "pass" && self.pairs.iter().all(|p| p.tv < self.threshold)
    }
}

/// Runs both checks on every database.
pub fn audit(params: &CodeParams, trials: usize, threshold: f64, planner: &Planner) -> Result<AuditReport> {
    let exact = exact_shape_invariance_with(params, planner)?;
    let dbs: Vec<usize> = (0..params.n).collect();
    let empirical = empirical_view_test_with(params, &dbs, trials, threshold, planner)?;
    Ok(AuditReport::new(exact, empirical))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Role;

    fn params(n: usize, k: usize, m: usize) -> CodeParams {
        CodeParams::with_default_field(n, k, m).unwrap()
    }

    #[test]
    fn exact_passes_on_golden_instances() {
        for p in [params(5, 3, 2), params(3, 2, 3), params(2, 1, 2), params(4, 2, 3)] {
            let r = exact_shape_invariance(&p).unwrap();
            assert!(r.pass, "{p:?}: {:?}", r.violations);
        }
    }

    #[test]
    fn exact_catches_perturbed_census() {
        let p = params(5, 3, 2);
        let perturbed = |p: &CodeParams, d: usize, s: u64| -> Result<QueryPlan> {
            let mut plan = plan_queries_with(p, d, s, PlanOptions { shuffle: false })?;
            if d == 1 {
                // Turn one undesired singleton at database 1 into a pair.
                let entries = &mut plan.private_mut().schedule[0];
                let e = entries
                    .iter_mut()
                    .find(|e| matches!(e.role, Role::Undesired { .. }) && e.logical.len() == 1)
                    .unwrap();
                let mut terms = e.logical.terms().to_vec();
                terms.push(crate::scheme::Term { message: d, row: 0 });
                e.logical = crate::scheme::Equation::new(terms)?;
            }
            Ok(plan)
        };
        let r = exact_shape_invariance_with(&p, &perturbed).unwrap();
        assert!(!r.pass);
        assert_eq!(r.violations.len(), 2);
        assert!(r.violations.iter().all(|v| v.desired == 2 && v.db == 1));
    }

    #[test]
    fn tv_basics() {
        assert_eq!(tv(&[1, 1], &[2, 2]), 0.0);
        assert_eq!(tv(&[1, 0], &[0, 1]), 1.0);
        assert!((tv(&[3, 1], &[1, 1]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empirical_passes_small() {
        let r = empirical_view_test(&params(2, 1, 2), &[0, 1], 400, 0.1).unwrap();
        assert!(r.pass, "{:?}", r.pairs);
    }

    #[test]
    fn empirical_detects_leak() {
        let r = empirical_view_test_with(&params(2, 1, 2), &[0], 200, 0.05, &leaky_planner).unwrap();
        assert!(!r.pass);
        assert!(r.pairs[0].tv_positions > 0.5);
    }

    #[test]
    fn empirical_rejects_few_trials() {
        assert!(empirical_view_test(&params(2, 1, 2), &[0], 10, 0.05).is_err());
        assert!(empirical_view_test(&params(2, 1, 2), &[2], 100, 0.05).is_err());
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> =
            (0..3).flat_map(|d| (0..1000).map(move |t| trial_seed(d, t))).collect();
        assert_eq!(seeds.len(), 3000);
    }

    #[test]
    fn report_json_shape() {
        let p = params(2, 1, 2);
        let r = audit(&p, 100, 0.2, &shuffled_planner).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["exact"], "pass");
        assert_eq!(v["trials"], 100);
        assert!(v["pairs"][0].get("d1").is_some());
        assert!(v["pairs"][0].get("tv").is_some());
    }
}
