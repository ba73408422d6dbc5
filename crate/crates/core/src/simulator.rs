//! In-process network of database nodes.
//!
//! A retrieval encodes the message set onto `N` nodes, optionally fails and
//! repairs up to `N - K` of them, plans queries, lets every node answer on
//! its own thread and reconstructs the desired message.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::analysis::{capacity, Rational};
use crate::error::{PirError, Result};
use crate::field::FieldElement;
use crate::scheme::{answer_queries, plan_queries, reconstruct, AnswerSet, Equation, RetrievalResult};
use crate::storage::{encode, repair, CodeParams, DatabaseContents, GeneratorMatrix, MessageSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub params: CodeParams,
    /// Desired message, 0-based.
    pub desired: usize,
    pub seed: u64,
    /// Nodes (0-based) to fail and repair before retrieval.
    pub failures: Vec<usize>,
}

impl SimConfig {
    pub fn new(params: CodeParams, desired: usize, seed: u64) -> Self {
        Self { params, desired, seed, failures: Vec::new() }
    }

    pub fn with_failures(mut self, failures: Vec<usize>) -> Self {
        self.failures = failures;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.desired >= self.params.m {
            return Err(PirError::InvalidParams(format!(
                "desired message {} is not in 1..={}",
                self.desired + 1,
                self.params.m
            )));
        }
        let mut f = self.failures.clone();
        f.sort_unstable();
        f.dedup();
        if f.len() != self.failures.len() {
            return Err(PirError::InvalidFailureSet("duplicate node in failure set".into()));
        }
        if f.len() > self.params.n - self.params.k {
            return Err(PirError::InvalidFailureSet(format!(
                "{} failures exceed the N-K={} the code tolerates",
                f.len(),
                self.params.n - self.params.k
            )));
        }
        if let Some(&bad) = f.iter().find(|&&x| x >= self.params.n) {
            return Err(PirError::InvalidFailureSet(format!("no database {}", bad + 1)));
        }
        Ok(())
    }
}

/// Where the messages come from.
#[derive(Debug, Clone)]
pub enum MessageSource {
    Given(MessageSet),
    Seed(u64),
}

/// I.i.d. uniform messages, reproducible from `seed`.
pub fn generate_messages(params: &CodeParams, seed: u64) -> MessageSet {
    MessageSet::random(params, seed)
}

/// One storage node. A failed node has lost its contents.
#[derive(Debug, Clone)]
pub struct DatabaseNode {
    index: usize,
    contents: Option<DatabaseContents>,
}

impl DatabaseNode {
    pub fn new(contents: DatabaseContents) -> Self {
        Self { index: contents.index, contents: Some(contents) }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_failed(&self) -> bool {
        self.contents.is_none()
    }

    pub fn contents(&self) -> Option<&DatabaseContents> {
        self.contents.as_ref()
    }

    pub fn fail(&mut self) {
        self.contents = None;
    }

    pub fn answer(&self, queries: &[Equation], field: &crate::field::PrimeField) -> Result<Vec<FieldElement>> {
        let contents = self.contents.as_ref().ok_or_else(|| {
            PirError::InvalidFailureSet(format!("database {} is down", self.index + 1))
        })?;
        answer_queries(contents, queries, field)
    }
}

/// The `N` nodes of a coded store.
#[derive(Debug, Clone)]
pub struct Network {
    generator: GeneratorMatrix,
    nodes: Vec<DatabaseNode>,
}

impl Network {
    pub fn new(msgs: &MessageSet, generator: GeneratorMatrix) -> Result<Self> {
        let nodes = encode(msgs, &generator)?.into_iter().map(DatabaseNode::new).collect();
        Ok(Self { generator, nodes })
    }

    /// Nodes loaded from storage; `None` marks a node whose contents are lost.
    pub fn from_contents(contents: Vec<Option<DatabaseContents>>, generator: GeneratorMatrix) -> Result<Self> {
        if contents.len() != generator.n() {
            return Err(PirError::DimensionMismatch(format!(
                "{} nodes for a generator with N={}",
                contents.len(),
                generator.n()
            )));
        }
        let nodes = contents
            .into_iter()
            .enumerate()
            .map(|(index, c)| match c {
                Some(c) if c.index == index => Ok(DatabaseNode::new(c)),
                Some(c) => Err(PirError::IndexOutOfRange(format!(
                    "contents of database {} in slot {}",
                    c.index + 1,
                    index + 1
                ))),
                None => Ok(DatabaseNode { index, contents: None }),
            })
            .collect::<Result<_>>()?;
        Ok(Self { generator, nodes })
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn nodes(&self) -> &[DatabaseNode] {
        &self.nodes
    }

    pub fn fail(&mut self, node: usize) {
        self.nodes[node].fail();
    }

    /// Rebuilds every failed node from the `K` lowest-indexed live nodes.
    /// Returns the repaired indices, ascending.
    pub fn repair_failed(&mut self) -> Result<Vec<usize>> {
        let failed: Vec<usize> =
            self.nodes.iter().filter(|n| n.is_failed()).map(|n| n.index).collect();
        if failed.is_empty() {
            return Ok(failed);
        }
        let k = self.generator.k();
        let survivors: Vec<&DatabaseContents> =
            self.nodes.iter().filter_map(DatabaseNode::contents).take(k).collect();
        if survivors.len() < k {
            return Err(PirError::InvalidFailureSet(format!(
                "only {} live nodes, repair needs K={k}",
                survivors.len()
            )));
        }
        let rebuilt = failed
            .iter()
            .map(|&f| repair(&survivors, &self.generator, f))
            .collect::<Result<Vec<_>>>()?;
        for contents in rebuilt {
            let i = contents.index;
            self.nodes[i] = DatabaseNode::new(contents);
        }
        Ok(failed)
    }

    /// Every node answers its own query list on its own thread.
    pub fn answer_all(&self, queries: &[Vec<Equation>]) -> Result<AnswerSet> {
        if queries.len() != self.nodes.len() {
            return Err(PirError::DimensionMismatch(format!(
                "{} query lists for {} nodes",
                queries.len(),
                self.nodes.len()
            )));
        }
        let field = *self.generator.field();
        let databases = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .nodes
                .iter()
                .zip(queries)
                .map(|(node, q)| s.spawn(move || node.answer(q, &field)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("database thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(AnswerSet { databases })
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalReport {
    pub params: CodeParams,
    pub desired: usize,
    pub result: RetrievalResult,
    /// Answers returned by each database.
    pub per_db: Vec<usize>,
    pub repaired: Vec<usize>,
    /// Whether the reconstruction equals the source message, when the
    /// source is known.
    pub matches_source: Option<bool>,
    pub duration: Duration,
}

impl RetrievalReport {
    pub fn capacity(&self) -> Rational {
        capacity(self.params.n, self.params.k, self.params.m).expect("validated parameters")
    }

    pub fn meets_capacity(&self) -> bool {
        self.result.achieved_rate == self.capacity()
    }

    /// JSON-ready summary with 1-based indices. Timing is left out so that
    /// identical runs serialise identically.
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            params: self.params,
            desired: self.desired + 1,
            downloaded_symbols: self.result.downloaded_symbols,
            desired_symbols: self.result.desired_symbols,
            rate: self.result.achieved_rate.clone(),
            capacity: self.capacity(),
            per_db: self.per_db.clone(),
            repaired: self.repaired.iter().map(|r| r + 1).collect(),
            verified: self.matches_source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportSummary {
    pub params: CodeParams,
    pub desired: usize,
    pub downloaded_symbols: usize,
    pub desired_symbols: usize,
    pub rate: Rational,
    pub capacity: Rational,
    pub per_db: Vec<usize>,
    pub repaired: Vec<usize>,
    pub verified: Option<bool>,
}

pub fn run_retrieval(cfg: &SimConfig, source: MessageSource) -> Result<RetrievalReport> {
    let g = GeneratorMatrix::vandermonde(&cfg.params, None)?;
    run_retrieval_with(cfg, source, g)
}

/// encode → fail + repair → plan → answer → reconstruct.
pub fn run_retrieval_with(
    cfg: &SimConfig,
    source: MessageSource,
    generator: GeneratorMatrix,
) -> Result<RetrievalReport> {
    let start = Instant::now();
    cfg.validate()?;
    let msgs = match source {
        MessageSource::Given(m) => m,
        MessageSource::Seed(s) => generate_messages(&cfg.params, s),
    };
    msgs.check(&cfg.params)?;
    let network = Network::new(&msgs, generator)?;
    let mut report = retrieve(cfg, network, Some(&msgs))?;
    report.duration = start.elapsed();
    Ok(report)
}

/// Retrieval against an existing network. Nodes listed in `cfg.failures`
/// are failed first; every failed node is repaired before querying.
pub fn retrieve(cfg: &SimConfig, mut network: Network, source: Option<&MessageSet>) -> Result<RetrievalReport> {
    let start = Instant::now();
    cfg.validate()?;
    for &f in &cfg.failures {
        network.fail(f);
    }
    let down = network.nodes().iter().filter(|n| n.is_failed()).count();
    if down > cfg.params.n - cfg.params.k {
        return Err(PirError::InvalidFailureSet(format!(
            "{down} nodes down, the code tolerates N-K={}",
            cfg.params.n - cfg.params.k
        )));
    }
    let repaired = network.repair_failed()?;

    let plan = plan_queries(&cfg.params, cfg.desired, cfg.seed)?;
    let answers = network.answer_all(plan.databases())?;
    let per_db = answers.databases.iter().map(Vec::len).collect();
    let result = reconstruct(&plan, &answers, network.generator())?;
    let matches_source = source.map(|msgs| &result.message == msgs.message(cfg.desired));

    Ok(RetrievalReport {
        params: cfg.params,
        desired: cfg.desired,
        result,
        per_db,
        repaired,
        matches_source,
        duration: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn params(n: usize, k: usize, m: usize) -> CodeParams {
        CodeParams::with_default_field(n, k, m).unwrap()
    }

    #[test]
    fn golden_runs() {
        let r = run_retrieval(&SimConfig::new(params(5, 3, 2), 0, 3), MessageSource::Seed(1)).unwrap();
        assert_eq!(r.per_db, vec![24; 5]);
        assert_eq!(r.result.downloaded_symbols, 120);
        assert!(r.matches_source == Some(true) && r.meets_capacity());

        let r = run_retrieval(&SimConfig::new(params(3, 2, 3), 0, 3), MessageSource::Seed(1)).unwrap();
        assert_eq!(r.per_db, vec![38; 3]);
        assert_eq!(r.result.downloaded_symbols, 114);
        assert!(r.matches_source == Some(true) && r.meets_capacity());
    }

    #[test]
    fn failure_and_repair_is_transparent() {
        let p = params(5, 3, 2);
        let clean = run_retrieval(&SimConfig::new(p, 1, 8), MessageSource::Seed(2)).unwrap();
        let cfg = SimConfig::new(p, 1, 8).with_failures(vec![3, 4]);
        let repaired = run_retrieval(&cfg, MessageSource::Seed(2)).unwrap();
        assert_eq!(repaired.repaired, vec![3, 4]);
        assert_eq!(repaired.result, clean.result);
        let (mut a, b) = (repaired.summary(), clean.summary());
        assert_eq!(a.repaired, vec![4, 5]);
        a.repaired.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        let p = params(5, 3, 2);
        let bad = [
            SimConfig::new(p, 2, 0),
            SimConfig::new(p, 0, 0).with_failures(vec![0, 1, 2]),
            SimConfig::new(p, 0, 0).with_failures(vec![1, 1]),
            SimConfig::new(p, 0, 0).with_failures(vec![5]),
        ];
        for cfg in bad {
            assert!(run_retrieval(&cfg, MessageSource::Seed(0)).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn given_messages_are_checked() {
        let cfg = SimConfig::new(params(3, 2, 2), 0, 0);
        let wrong = generate_messages(&params(3, 2, 3), 0);
        assert!(matches!(
            run_retrieval(&cfg, MessageSource::Given(wrong)),
            Err(PirError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn generated_message_shape() {
        let p = params(3, 2, 3);
        let msgs = generate_messages(&p, 5);
        assert_eq!((msgs.len(), msgs.rows(), msgs.k()), (3, 27, 2));
        assert_eq!(msgs, generate_messages(&p, 5));
    }

    #[test]
    fn generated_symbols_are_uniform() {
        // 4 messages of 3^4 x 2 symbols per seed; enough seeds for >= 10^5 draws.
        let p = CodeParams::new(3, 2, 4, 13).unwrap();
        let mut hist = [0u64; 13];
        let mut draws = 0u64;
        let mut seed = 0;
        while draws < 100_000 {
            for w in generate_messages(&p, seed).messages() {
                for s in w.data() {
                    hist[s.value() as usize] += 1;
                    draws += 1;
                }
            }
            seed += 1;
        }
        let expected = draws as f64 / 13.0;
        let stat: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let p_value = 1.0 - ChiSquared::new(12.0).unwrap().cdf(stat);
        assert!(p_value > 0.01, "chi-square p = {p_value}");
    }

    #[test]
    fn lost_contents_are_repaired_before_retrieval() {
        let p = params(4, 2, 2);
        let msgs = generate_messages(&p, 6);
        let g = GeneratorMatrix::vandermonde(&p, None).unwrap();
        let mut contents: Vec<Option<DatabaseContents>> =
            encode(&msgs, &g).unwrap().into_iter().map(Some).collect();
        contents[0] = None;
        let net = Network::from_contents(contents.clone(), g.clone()).unwrap();
        let r = retrieve(&SimConfig::new(p, 1, 2), net, None).unwrap();
        assert_eq!(r.repaired, vec![0]);
        assert_eq!(&r.result.message, msgs.message(1));
        assert_eq!(r.matches_source, None);

        // A further failure would exceed N-K.
        let net = Network::from_contents(contents, g).unwrap();
        let cfg = SimConfig::new(p, 1, 2).with_failures(vec![1, 2]);
        assert!(retrieve(&cfg, net, None).is_err());
    }

    #[test]
    fn failed_node_refuses_queries() {
        let p = params(3, 2, 2);
        let msgs = generate_messages(&p, 0);
        let mut net = Network::new(&msgs, GeneratorMatrix::vandermonde(&p, None).unwrap()).unwrap();
        net.fail(1);
        let plan = plan_queries(&p, 0, 0).unwrap();
        assert!(net.answer_all(plan.databases()).is_err());
        assert_eq!(net.repair_failed().unwrap(), vec![1]);
        assert!(net.answer_all(plan.databases()).is_ok());
    }

    #[test]
    fn systematic_generator_works_too() {
        let p = params(5, 3, 2);
        let g = GeneratorMatrix::systematic(&p).unwrap();
        let r = run_retrieval_with(&SimConfig::new(p, 1, 4), MessageSource::Seed(9), g).unwrap();
        assert!(r.matches_source == Some(true) && r.meets_capacity());
    }
}
