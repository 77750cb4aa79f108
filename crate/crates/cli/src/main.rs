//! `petition`: create, sign, inspect, decrypt and expire petitions, or replay scenarios.
//!
//! All parties run in this one process; each rabbit's secrets live in their own
//! file next to the chain. Exit codes: 0 success, 2 bad parameters, 3 protocol
//! rejection, 4 verification failure, 1 anything else.

mod commands;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use petition_core::Error;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "petition", version, about = "Threshold secret petitions")]
pub struct Cli {
    /// Chain file to operate on.
    #[arg(long, global = true, default_value = "petition.chain")]
    pub chain: PathBuf,
    /// Group backend for `new` and `simulate`; other commands read it from the chain.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Makes every command deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Toy,
    Prod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    JsonLines,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the key ceremony and write a new chain.
    New(NewArgs),
    /// Sign as `identity`, driving validators and rabbits to completion.
    Sign(SignArgs),
    /// Signature counts, released fragments and trigger state.
    Status,
    /// Replay every record and public check.
    Verify,
    /// Print signers and testimonies once the petition has triggered.
    Decrypt,
    /// Close the petition and delete rabbit secrets.
    Expire(TimeArgs),
    /// Run a scenario script.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct NewArgs {
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub k: u32,
    #[arg(long)]
    pub t: u32,
    #[arg(long)]
    pub v: u32,
    /// Comma-separated increasing thresholds for a multi-threshold petition.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<u32>>,
    /// Time after which the author may expire the petition, compared against `--now`.
    #[arg(long)]
    pub expiry: Option<u64>,
    /// Validator ids; defaults to `1..=v`.
    #[arg(long, value_delimiter = ',')]
    pub validators: Option<Vec<u32>>,
    /// Beaver triples to deal; defaults to `max(4n, 32)`.
    #[arg(long)]
    pub triples: Option<usize>,
    /// Overwrite an existing chain file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SignArgs {
    /// Identity evidence; validators derive the identifier from it.
    #[arg(long)]
    pub identity: String,
    /// Empty testimony is replaced by random bytes.
    #[arg(long, default_value = "")]
    pub testimony: String,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Validators to ask; defaults to the first `v` in the header.
    #[arg(long, value_delimiter = ',')]
    pub validators: Option<Vec<u32>>,
    /// Upper bound of the random publication delay, in ticks.
    #[arg(long, default_value_t = 0)]
    pub delay: u64,
    #[command(flatten)]
    pub time: TimeArgs,
}

#[derive(Args, Debug)]
pub struct TimeArgs {
    /// Current time; defaults to unix seconds.
    #[arg(long)]
    pub now: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub script: PathBuf,
    /// Write the resulting chain to `--chain`.
    #[arg(long)]
    pub write_chain: bool,
    /// Write the JSON lines event log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the full outcome as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn params(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    pub fn rejected(message: impl Into<String>) -> Self {
        Self::new(3, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(1, format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::ChainVerification { .. } => 4,
            Error::InvalidParameters(_) | Error::MalformedEvidence(_) => 2,
            Error::CeremonyAborted { .. } | Error::NotTriggered | Error::InsufficientTriples => 3,
            e if e.is_protocol_rejection() => 3,
            _ => 1,
        };
        Self::new(code, e.to_string())
    }
}

impl From<petition_simnet::SimError> for CliError {
    fn from(e: petition_simnet::SimError) -> Self {
        match e {
            petition_simnet::SimError::Core(e) => e.into(),
            petition_simnet::SimError::Script(m) => Self::params(m),
        }
    }
}

/// Prints either human lines or one JSON object per line.
pub struct Output {
    pub format: Format,
}

impl Output {
    pub fn emit(&self, text: impl AsRef<str>, record: Value) {
        match self.format {
            Format::Text => println!("{}", text.as_ref()),
            Format::JsonLines => println!("{record}"),
        }
    }

    fn error(&self, e: &CliError) {
        eprintln!("error: {}", e.message);
        if self.format == Format::JsonLines {
            println!("{}", json!({"kind": "error", "code": e.code, "message": e.message}));
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out = Output { format: cli.format };
    match commands::run(&cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.error(&e);
            ExitCode::from(e.code)
        }
    }
}
