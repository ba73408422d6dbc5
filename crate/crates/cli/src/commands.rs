use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use coded_pir::analysis::{capacity_curve, write_curve_csv};
use coded_pir::audit::{self, leaky_planner, shuffled_planner};
use coded_pir::scheme::{plan_queries, render_query_table};
use coded_pir::simulator::{retrieve as run_on_network, Network};
use coded_pir::{io, CodeParams, GeneratorMatrix, MessageSet, PirError, SimConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Params(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("privacy audit failed")]
    AuditFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Params(_) => 2,
            CliError::Io(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::AuditFailed => 5,
        }
    }
}

impl From<PirError> for CliError {
    fn from(e: PirError) -> Self {
        match e {
            PirError::Io(_) | PirError::Json(_) | PirError::Parse(_) => CliError::Io(e.to_string()),
            PirError::SingularMatrix | PirError::InconsistentAnswers(_) => {
                CliError::Mismatch(e.to_string())
            }
            other => CliError::Params(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Code parameters as given on the command line; any may be absent when a
/// file supplies them.
#[derive(Debug, Clone, Copy)]
pub struct Code {
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub q: u64,
}

impl Code {
    fn given(&self) -> bool {
        self.n.is_some() || self.k.is_some() || self.m.is_some()
    }

    fn params(&self) -> Result<CodeParams, CliError> {
        match (self.n, self.k, self.m) {
            (Some(n), Some(k), Some(m)) => Ok(CodeParams::new(n, k, m, self.q)?),
            _ => Err(CliError::Params("--N, --K and --M are required".into())),
        }
    }

    /// Checks command-line parameters, if any, against ones read from a file.
    fn agrees_with(&self, from_file: &CodeParams) -> Result<(), CliError> {
        if self.given() && self.params()? != *from_file {
            return Err(CliError::Params(format!(
                "command-line parameters disagree with file (N={} K={} M={} q={})",
                from_file.n, from_file.k, from_file.m, from_file.q
            )));
        }
        Ok(())
    }
}

fn read_messages(path: &Path) -> Result<(CodeParams, MessageSet), CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(io::read_messages(BufReader::new(f))?)
}

/// Writes `body` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(body.as_bytes())?;
            f.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn one_based(index: usize, len: usize, what: &str) -> Result<usize, CliError> {
    if index == 0 || index > len {
        return Err(CliError::Params(format!("{what} {index} is not in 1..={len}")));
    }
    Ok(index - 1)
}

pub fn encode(
    code: Code,
    seed: u64,
    messages: Option<PathBuf>,
    messages_out: Option<PathBuf>,
    out: PathBuf,
) -> Result<(), CliError> {
    let (params, msgs) = match messages {
        Some(path) => {
            let (p, m) = read_messages(&path)?;
            code.agrees_with(&p)?;
            (p, m)
        }
        None => {
            let p = code.params()?;
            (p, MessageSet::random(&p, seed))
        }
    };
    let g = GeneratorMatrix::vandermonde(&params, None)?;
    let dbs = coded_pir::encode(&msgs, &g)?;
    let paths = io::write_store(&out, &params, &dbs)?;
    if let Some(path) = messages_out {
        let mut body = Vec::new();
        io::write_messages(&mut body, &params, &msgs)?;
        emit(Some(&path), &String::from_utf8(body).expect("ascii"))?;
    }
    eprintln!("wrote {} database files to {}", paths.len(), out.display());
    Ok(())
}

pub struct RetrieveArgs {
    pub code: Code,
    pub store: Option<PathBuf>,
    pub messages: Option<PathBuf>,
    pub desired: usize,
    pub seed: u64,
    pub fail: Vec<usize>,
    pub out: Option<PathBuf>,
}

pub fn retrieve(args: RetrieveArgs) -> Result<(), CliError> {
    let source = args.messages.as_deref().map(read_messages).transpose()?;

    let (params, network, source) = match &args.store {
        Some(dir) => {
            let (params, slots) = io::read_store(dir)?;
            args.code.agrees_with(&params)?;
            if let Some((p, _)) = &source {
                if *p != params {
                    return Err(CliError::Params("message file does not match the store".into()));
                }
            }
            let g = GeneratorMatrix::vandermonde(&params, None)?;
            (params, Network::from_contents(slots, g)?, source.map(|(_, m)| m))
        }
        None => {
            let (params, msgs) = match source {
                Some((p, m)) => {
                    args.code.agrees_with(&p)?;
                    (p, m)
                }
                None => {
                    let p = args.code.params()?;
                    (p, MessageSet::random(&p, args.seed))
                }
            };
            let g = GeneratorMatrix::vandermonde(&params, None)?;
            (params, Network::new(&msgs, g)?, Some(msgs))
        }
    };

    let desired = one_based(args.desired, params.m, "desired message")?;
    let failures = args
        .fail
        .iter()
        .map(|&f| one_based(f, params.n, "database"))
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SimConfig::new(params, desired, args.seed).with_failures(failures);
    let report = run_on_network(&cfg, network, source.as_ref())?;

    let res = &report.result;
    let meets = report.meets_capacity();
    println!(
        "rate {}/{} = {} (= capacity: {})",
        res.desired_symbols,
        res.downloaded_symbols,
        res.achieved_rate,
        if meets { "yes" } else { "no" }
    );
    if !report.repaired.is_empty() {
        let list: Vec<String> = report.repaired.iter().map(|r| (r + 1).to_string()).collect();
        println!("repaired: [{}]", list.join(","));
    }
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report.summary()).map_err(PirError::from)?;
        emit(Some(path), &(json + "\n"))?;
    }

    if report.matches_source == Some(false) {
        return Err(CliError::Mismatch("reconstructed message differs from the source".into()));
    }
    if !meets {
        return Err(CliError::Mismatch(format!(
            "achieved rate {} differs from capacity {}",
            res.achieved_rate,
            report.capacity()
        )));
    }
    Ok(())
}

pub fn dump_queries(
    code: Code,
    desired: usize,
    seed: u64,
    json: bool,
    public: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let params = code.params()?;
    let desired = one_based(desired, params.m, "desired message")?;
    let plan = plan_queries(&params, desired, seed)?;
    let body = if json {
        serde_json::to_string(&plan.dump(!public)).map_err(PirError::from)? + "\n"
    } else {
        render_query_table(&plan)
    };
    emit(out.as_deref(), &body)
}

pub fn capacity(m: &[usize], n: usize, k: &[usize], out: Option<PathBuf>) -> Result<(), CliError> {
    let k: Vec<usize> = if k.is_empty() { (1..=n).collect() } else { k.to_vec() };
    let points = capacity_curve(m, n, &k)?;
    let mut body = Vec::new();
    write_curve_csv(&mut body, &points)?;
    emit(out.as_deref(), &String::from_utf8(body).expect("ascii"))
}

pub fn audit(
    code: Code,
    trials: usize,
    threshold: f64,
    leak: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let params = code.params()?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Params(format!("threshold {threshold} is not in (0, 1]")));
    }
    let report = if leak {
        audit::audit(&params, trials, threshold, &leaky_planner)?
    } else {
        audit::audit(&params, trials, threshold, &shuffled_planner)?
    };
    let json = serde_json::to_string_pretty(&report).map_err(PirError::from)? + "\n";
    emit(out.as_deref(), &json)?;
    if report.pass() {
        Ok(())
    } else {
        Err(CliError::AuditFailed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CliError::from(PirError::NotPrime(9)).exit_code(), 2);
        assert_eq!(CliError::from(PirError::Parse("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(PirError::SingularMatrix).exit_code(), 4);
        assert_eq!(CliError::AuditFailed.exit_code(), 5);
    }

    #[test]
    fn one_based_bounds() {
        assert_eq!(one_based(1, 3, "x").unwrap(), 0);
        assert_eq!(one_based(3, 3, "x").unwrap(), 2);
        assert!(one_based(0, 3, "x").is_err());
        assert!(one_based(4, 3, "x").is_err());
    }

    #[test]
    fn partial_code_args() {
        let none = Code { n: None, k: None, m: None, q: 257 };
        let p = CodeParams::new(3, 2, 2, 257).unwrap();
        assert!(none.agrees_with(&p).is_ok());
        assert!(none.params().is_err());
        let full = Code { n: Some(3), k: Some(2), m: Some(2), q: 257 };
        assert!(full.agrees_with(&p).is_ok());
        let other = Code { n: Some(4), ..full };
        assert_eq!(other.agrees_with(&p).unwrap_err().exit_code(), 2);
    }
}
