//! Benchmark and file CLI for ZOR filters.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zor::{AuxMode, FilterParams, Policy};

/// Exit codes: 0 ok, 1 usage, 2 I/O, 3 malformed filter data.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(std::io::Error),
    Filter(zor::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Filter(zor::Error::InvalidConfig(_)) => 1,
            CliError::Filter(zor::Error::ConstructionExhausted { .. }) => 2,
            CliError::Filter(zor::Error::Format { .. }) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Filter(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<zor::Error> for CliError {
    fn from(e: zor::Error) -> Self {
        CliError::Filter(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn parse_policy(s: &str) -> Result<Policy, zor::Error> {
    s.parse()
}

fn parse_aux_mode(s: &str) -> Result<AuxMode, zor::Error> {
    s.parse()
}

/// Single-arity selector for the non-sweep commands; the arity sweeps
/// carry their own `--arity` list instead.
#[derive(Args, Debug, Clone)]
pub struct ArityArg {
    /// Hash locations per key (2..=8)
    #[arg(long, default_value_t = 5)]
    pub arity: usize,
}

/// Build-time filter knobs shared by all commands.
#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    /// Main fingerprint bits (1..=32)
    #[arg(long = "bits", default_value_t = 16)]
    pub bits: u32,
    /// Auxiliary fingerprint bits (default: bits + 8)
    #[arg(long = "aux-bits")]
    pub aux_bits: Option<u32>,
    /// Final-stage bits for cascades (default: aux bits + 8)
    #[arg(long = "cascade-bits")]
    pub cascade_bits: Option<u32>,
    /// Segment length in cells, a power of two (default: sized from n)
    #[arg(long = "segment-len")]
    pub segment_len: Option<usize>,
    /// Intervention policy: random | lightest | heaviest | most-deg2 | min-max-degree
    #[arg(long, default_value = "most-deg2", value_parser = parse_policy)]
    pub policy: Policy,
    /// Minimal-degree cells examined per blocking event
    #[arg(long = "scan-budget", default_value_t = 8)]
    pub scan_budget: u32,
    /// Auxiliary mode: none | fuse | cascade
    #[arg(long = "aux", default_value = "fuse", value_parser = parse_aux_mode)]
    pub aux: AuxMode,
    /// Filter seed (locations and fingerprints)
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
    /// Key seed (digesting and partition routing)
    #[arg(long = "key-seed", default_value_t = 0)]
    pub key_seed: u64,
}

impl FilterArgs {
    pub fn to_params(&self, arity: usize) -> FilterParams {
        FilterParams {
            fingerprint_bits: self.bits,
            arity,
            segment_len: self.segment_len,
            filter_seed: self.seed,
            key_seed: self.key_seed,
            policy: self.policy,
            scan_budget: self.scan_budget,
            aux_mode: self.aux,
            aux_bits: self.aux_bits,
            cascade_bits: self.cascade_bits,
            partitions: 1,
        }
    }
}

/// Output selection shared by the reporting commands.
#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Emit one JSON document instead of CSV
    #[arg(long)]
    pub json: bool,
    /// Write the report to FILE instead of standard output
    #[arg(long = "out", value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(name = "zor", version, about = "ZOR filter construction, querying and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a filter from a key file (or synthetic keys) and write it out
    Build {
        /// Newline-delimited key file; omit when using --synthetic
        keys: Option<PathBuf>,
        /// Generate N synthetic keys instead of reading a file
        #[arg(long, value_name = "N", conflicts_with = "keys")]
        synthetic: Option<u64>,
        /// Output filter file
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
        /// Must stay 1: the file format holds a single partition
        #[arg(long, default_value_t = 1)]
        partitions: usize,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Query a filter file: one probe per input line, "1" or "0" per output line
    Query {
        /// Serialized filter file
        filter: PathBuf,
        /// Newline-delimited probe file (default: standard input)
        probes: Option<PathBuf>,
    },
    /// Abandoned fraction across set sizes and arities
    AbandonSweep {
        /// Key counts, comma-separated
        #[arg(long = "n", value_delimiter = ',', default_value = "1000000")]
        n: Vec<u64>,
        /// Arities, comma-separated
        #[arg(long = "arity", value_delimiter = ',', default_value = "3,4,5,6,7,8")]
        arities: Vec<usize>,
        /// Run sweep cells concurrently
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Abandoned fraction across segment lengths
    SegmentSweep {
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
        /// Segment lengths, comma-separated powers of two
        #[arg(
            long = "segment-lens",
            value_delimiter = ',',
            default_value = "64,128,256,512,1024,2048,4096"
        )]
        segment_lens: Vec<usize>,
        #[arg(long = "arity", value_delimiter = ',', default_value = "4,8")]
        arities: Vec<usize>,
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Abandoned fraction and build time across intervention policies
    PolicySweep {
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
        /// Policies, comma-separated (default: all)
        #[arg(
            long = "policies",
            value_delimiter = ',',
            default_value = "random,lightest,heaviest,most-deg2,min-max-degree",
            value_parser = parse_policy
        )]
        policies: Vec<Policy>,
        /// Scan budgets, comma-separated
        #[arg(long = "scan-budgets", value_delimiter = ',', default_value = "1,8,32")]
        scan_budgets: Vec<u32>,
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Measured false-positive rate against the analytic composition
    Fpr {
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
        /// Negative probes (at least 100000)
        #[arg(long, default_value_t = 1_000_000)]
        queries: u64,
        /// Independent partitions
        #[arg(long, default_value_t = 1)]
        partitions: usize,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Positive/negative query latency, optionally with segment-ordered probes
    QueryBench {
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
        #[arg(long, default_value_t = 1_000_000)]
        queries: u64,
        /// Sort probes by (partition, start segment) before timing
        #[arg(long)]
        ordered: bool,
        /// Independent partitions
        #[arg(long, default_value_t = 1)]
        partitions: usize,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build throughput and partition scaling
    BuildBench {
        #[arg(long = "n", value_delimiter = ',', default_value = "1000000")]
        n: Vec<u64>,
        /// Partition counts, comma-separated
        #[arg(long = "partitions", value_delimiter = ',', default_value = "1,2,4,8")]
        partition_counts: Vec<usize>,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bits per key and overhead against analytic baselines
    SizeReport {
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
        #[command(flatten)]
        arity: ArityArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Build { keys, synthetic, out, partitions, arity, filter } => {
            commands::build(keys.as_deref(), synthetic, &out, partitions, arity.arity, &filter)
        }
        Command::Query { filter, probes } => commands::query(&filter, probes.as_deref()),
        Command::AbandonSweep { n, arities, parallel, filter, output } => {
            commands::abandon_sweep(&n, &arities, parallel, &filter, &output)
        }
        Command::SegmentSweep { n, segment_lens, arities, parallel, filter, output } => {
            commands::segment_sweep(n, &segment_lens, &arities, parallel, &filter, &output)
        }
        Command::PolicySweep { n, policies, scan_budgets, parallel, arity, filter, output } => {
            commands::policy_sweep(n, &policies, &scan_budgets, parallel, arity.arity, &filter, &output)
        }
        Command::Fpr { n, queries, partitions, arity, filter, output } => {
            commands::fpr(n, queries, partitions, arity.arity, &filter, &output)
        }
        Command::QueryBench { n, queries, ordered, partitions, arity, filter, output } => {
            commands::query_bench(n, queries, ordered, partitions, arity.arity, &filter, &output)
        }
        Command::BuildBench { n, partition_counts, arity, filter, output } => {
            commands::build_bench(&n, &partition_counts, arity.arity, &filter, &output)
        }
        Command::SizeReport { n, arity, filter, output } => {
            commands::size_report(n, arity.arity, &filter, &output)
        }
    }
}
