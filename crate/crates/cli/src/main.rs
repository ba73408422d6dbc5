use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::CliError;

/// Private retrieval from MDS-coded databases.
#[derive(Debug, Parser)]
#[command(name = "coded-pir", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct CodeArgs {
    /// Number of databases.
    #[arg(long = "N")]
    n: usize,
    /// Code dimension.
    #[arg(long = "K")]
    k: usize,
    /// Number of messages.
    #[arg(long = "M")]
    m: usize,
    /// Prime field modulus.
    #[arg(long = "q", default_value_t = 257)]
    q: u64,
}

#[derive(Debug, Args, Clone)]
struct OptionalCodeArgs {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long = "q", default_value_t = 257)]
    q: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpFormat {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode messages into one contents file per database.
    Encode {
        #[command(flatten)]
        code: OptionalCodeArgs,
        /// Seed for generated messages (ignored with --messages).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Message CSV to encode instead of generating messages.
        #[arg(long)]
        messages: Option<PathBuf>,
        /// Also write the source messages here.
        #[arg(long = "messages-out")]
        messages_out: Option<PathBuf>,
        /// Output directory for db<n>.csv files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one private retrieval and report the achieved rate.
    Retrieve {
        #[command(flatten)]
        code: OptionalCodeArgs,
        /// Directory written by `encode`; missing files count as failed nodes.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Source messages, used as input or for the self-check.
        #[arg(long)]
        messages: Option<PathBuf>,
        /// Desired message, 1-based.
        #[arg(long, default_value_t = 1)]
        desired: usize,
        /// Seed for the query plan (and generated messages).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated 1-based nodes to fail and repair first.
        #[arg(long, value_delimiter = ',')]
        fail: Vec<usize>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the query structure of one plan.
    DumpQueries {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 1)]
        desired: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DumpFormat::Table)]
        format: DumpFormat,
        /// JSON only: leave out the desired index, as a database would see it.
        #[arg(long)]
        public: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Capacity against code rate as CSV.
    Capacity {
        /// Comma-separated message counts.
        #[arg(long = "M", value_delimiter = ',', default_values_t = [1usize, 2, 3, 5, 10])]
        m: Vec<usize>,
        #[arg(long = "N", default_value_t = 10)]
        n: usize,
        /// Comma-separated code dimensions; defaults to 1..=N.
        #[arg(long = "K", value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that no single database can tell which message is retrieved.
    Audit {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Audit the unshuffled planner, which leaks the desired index.
        #[arg(long)]
        leak: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode { code, seed, messages, messages_out, out } => {
            commands::encode(code.into(), seed, messages, messages_out, out)
        }
        Command::Retrieve { code, store, messages, desired, seed, fail, out } => {
            commands::retrieve(commands::RetrieveArgs {
                code: code.into(),
                store,
                messages,
                desired,
                seed,
                fail,
                out,
            })
        }
        Command::DumpQueries { code, desired, seed, format, public, out } => {
            let json = matches!(format, DumpFormat::Json);
            commands::dump_queries(code.into(), desired, seed, json, public, out)
        }
        Command::Capacity { m, n, k, out } => commands::capacity(&m, n, &k, out),
        Command::Audit { code, trials, threshold, leak, out } => {
            commands::audit(code.into(), trials, threshold, leak, out)
        }
    }
}

impl From<CodeArgs> for commands::Code {
    fn from(a: CodeArgs) -> Self {
        commands::Code { n: Some(a.n), k: Some(a.k), m: Some(a.m), q: a.q }
    }
}

impl From<OptionalCodeArgs> for commands::Code {
    fn from(a: OptionalCodeArgs) -> Self {
        commands::Code { n: a.n, k: a.k, m: a.m, q: a.q }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::AuditFailed) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
