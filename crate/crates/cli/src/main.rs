use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use memop_cli::{
    cmd_bench, cmd_exec, cmd_init, cmd_repl, cmd_validate, parse_clock, parse_score_weights,
    read_input, CliConfig, CliError, Exit, Format,
};
use memop_core::store::ScoreWeights;

#[derive(Parser)]
#[command(
    name = "memop",
    version,
    about = "Validate, execute and benchmark memory-operation schemas"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

#[derive(Args)]
struct GlobalArgs {
    /// SQLite store file.
    #[arg(long, env = "MEMOP_DB", global = true)]
    db: Option<PathBuf>,
    /// Fixed execution clock (RFC 3339); defaults to the wall clock.
    #[arg(long, env = "MEMOP_CLOCK", global = true, value_parser = parse_clock)]
    clock: Option<DateTime<Utc>>,
    /// Force meta.dry_run on every executed instance.
    #[arg(long, env = "MEMOP_DRY_RUN", global = true)]
    dry_run: bool,
    #[arg(
        long,
        env = "MEMOP_FORMAT",
        global = true,
        value_enum,
        default_value = "json"
    )]
    format: FormatArg,
    /// Summary similarity threshold for bench assertions without their own.
    #[arg(long, env = "MEMOP_TAU", global = true, default_value_t = memop_bench::DEFAULT_TAU)]
    tau: f64,
    /// Base URL of a remote model server; the built-in stubs are used otherwise.
    #[arg(long, env = "MEMOP_SERVICES_URL", global = true)]
    services_url: Option<String>,
    /// Search score weights as embedding,lexical,weight.
    #[arg(long, env = "MEMOP_SCORE_WEIGHTS", global = true, value_parser = parse_score_weights)]
    score_weights: Option<ScoreWeights>,
    #[arg(long, env = "MEMOP_EMBEDDING_DIM", global = true, default_value_t = 64)]
    embedding_dim: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty store at --db.
    Init,
    /// Validate one JSON instance or a JSONL stream.
    Validate { input: Option<PathBuf> },
    /// Execute instances against the store at --db, printing one result per line.
    Exec { input: Option<PathBuf> },
    /// Score a case file, against its gold lists or a candidate file.
    Bench {
        cases: PathBuf,
        /// JSONL of {"case_id", "schema_list"} rows.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interactive session against the store at --db.
    Repl,
}

impl GlobalArgs {
    fn config(&self) -> CliConfig {
        CliConfig {
            db_path: self.db.clone(),
            clock: self.clock,
            services_url: self.services_url.clone(),
            format: match self.format {
                FormatArg::Json => Format::Json,
                FormatArg::Table => Format::Table,
            },
            dry_run: self.dry_run,
            tau: self.tau,
            score_weights: self.score_weights.unwrap_or_default(),
            embedding_dim: self.embedding_dim,
        }
    }
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    let cfg = cli.global.config();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Init => cmd_init(&cfg, &mut out),
        Command::Validate { input } => cmd_validate(&cfg, &read_input(input.as_deref())?, &mut out),
        Command::Exec { input } => {
            // Fail on a missing store before blocking on stdin.
            cfg.open_store()?;
            cmd_exec(&cfg, &read_input(input.as_deref())?, &mut out)
        }
        Command::Bench {
            cases,
            candidates,
            report,
        } => cmd_bench(
            &cfg,
            &cases,
            candidates.as_deref(),
            report.as_deref(),
            &mut out,
        )
        .map(|(_, e)| e),
        Command::Repl => {
            let stdin = std::io::stdin();
            let prompt = stdin.is_terminal();
            cmd_repl(&cfg, &mut stdin.lock(), &mut out, prompt)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(Exit::Infra as u8)
        }
    }
}
