//! Private information retrieval from MDS-coded, non-colluding databases at
//! the capacity `(1 - K/N) / (1 - (K/N)^M)`.

pub mod analysis;
pub mod audit;
mod combinatorics;
pub mod error;
pub mod field;
pub mod io;
pub mod scheme;
pub mod simulator;
pub mod storage;

pub use analysis::{capacity, scheme_counts, Rational};
pub use error::{PirError, Result};
pub use field::{FieldElement, Matrix, PrimeField};
pub use scheme::{
    answer_queries, plan_queries, query_shape_census, reconstruct, AnswerSet, Equation, QueryPlan,
    RetrievalResult, Term,
};
pub use simulator::{run_retrieval, MessageSource, RetrievalReport, SimConfig};
pub use storage::{encode, repair, verify_mds, CodeParams, DatabaseContents, GeneratorMatrix, MessageSet};
