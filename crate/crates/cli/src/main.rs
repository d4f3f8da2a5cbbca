use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use ccn_core::harness::atomicity::{enumerate, EnumConfig};
use ccn_core::harness::cost::{cost_table, scaling_holds, CostRow};
use ccn_core::harness::unlink::{run_game, AdversaryKind, GameConfig};
use ccn_core::harness::{run_config, MetricsReport, ScenarioConfig};
use ccn_core::orchestrator::Protocol;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_CONFIG: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "ccn", version, about = "Cross-chain payment simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Directory for trace.jsonl, metrics.csv and report.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and emit its trace and metrics.
    Run {
        /// Scenario TOML; the built-in two-chain walkthrough when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        protocol: Option<Protocol>,
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustively enumerate fault schedules and refund strategies.
    Atomicity {
        #[arg(long, default_value_t = 2)]
        max_hops: usize,
        #[arg(long, default_value_t = 64)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        watchers: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate an adversary's advantage in the unlinkability game.
    Unlink {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value = "combined")]
        adversary: AdversaryKind,
        #[arg(long, default_value = "ccn")]
        protocol: Protocol,
        /// Corrupted intermediaries, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "m2")]
        corrupt: Vec<String>,
        /// Background receipts per chain.
        #[arg(long, default_value_t = 8)]
        background: u32,
        /// Largest advantage accepted for the channel protocol.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Count on-chain transactions for N off-chain interactions.
    Cost {
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        interactions: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

/// Returns whether the checked property held.
fn dispatch(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Run { config, protocol, common } => cmd_run(config.as_deref(), protocol, &common),
        Command::Atomicity { max_hops, horizon, watchers, common } => {
            if !(1..=2).contains(&max_hops) {
                return Err(config_err(anyhow::anyhow!("--max-hops must be 1 or 2")));
            }
            let cfg = EnumConfig { max_hops, horizon, watchers, ..EnumConfig::default() };
            let report = enumerate(&cfg);
            let mut rows = vec![];
            for (n, count) in &report.leaves {
                rows.push(metric("leaves", &n.to_string(), "", count));
            }
            rows.push(metric("counterexamples", "", "", report.counterexamples.len()));
            rows.push(metric("case3_pairs", "", "", report.case3.len()));
            rows.push(metric("case3_held", "", "", report.case3.iter().filter(|p| p.holds()).count()));
            rows.push(metric("conservation_failures", "", "", report.conservation_failures));
            emit(&common, &report, &rows)?;
            Ok(report.passed())
        }
        Command::Unlink { trials, adversary, protocol, corrupt, background, tolerance, common } => {
            let mut cfg = GameConfig { trials, adversary, protocol, corrupted: corrupt, ..GameConfig::default() };
            cfg.traffic.receipts = background;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let report = run_game(&cfg).map_err(config_err)?;
            let rows = vec![
                metric("trials", "", "", report.trials),
                metric("wins", "", "", report.wins),
                metric("success", "", "", report.success),
                metric("advantage", "", "", report.advantage),
                metric("ci_low", "", "", report.ci_low),
                metric("ci_high", "", "", report.ci_high),
            ];
            emit(&common, &report, &rows)?;
            Ok(protocol != Protocol::Ccn || report.advantage <= tolerance)
        }
        Command::Cost { interactions, common } => {
            if interactions.iter().any(|n| *n == 0) {
                return Err(config_err(anyhow::anyhow!("interaction counts must be at least 1")));
            }
            let rows: Vec<CostRow> = cost_table(&interactions, common.seed.unwrap_or(0));
            let table: Vec<Metric> = rows
                .iter()
                .flat_map(|r| {
                    let n = r.interactions.to_string();
                    [metric("txs", "ccn", &n, r.ccn_txs), metric("txs", "htlc", &n, r.htlc_txs)]
                })
                .collect();
            emit(&common, &rows, &table)?;
            Ok(scaling_holds(&rows))
        }
    }
}

fn cmd_run(config: Option<&Path>, protocol: Option<Protocol>, common: &Common) -> Result<bool, Failure> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Config)?;
            ScenarioConfig::from_toml(&text).map_err(config_err)?
        }
        None => ScenarioConfig::walkthrough(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = protocol {
        cfg.protocol = p;
    }
    let out = run_config(&cfg).map_err(config_err)?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("trace.jsonl"), &out.trace)?;
    emit(common, &out.report, &run_metrics(&out.report))?;
    Ok(out.report.clean())
}

#[derive(Serialize)]
struct Metric {
    metric: String,
    scope: String,
    key: String,
    value: String,
}

fn metric(metric: &str, scope: &str, key: &str, value: impl ToString) -> Metric {
    Metric { metric: metric.into(), scope: scope.into(), key: key.into(), value: value.to_string() }
}

fn run_metrics(r: &MetricsReport) -> Vec<Metric> {
    let mut rows = vec![metric("trace_hash", "", "", &r.trace_hash), metric("final_height", "", "", r.final_height)];
    for (chain, parties) in &r.balances {
        for (party, v) in parties {
            rows.push(metric("balance", chain, party, v));
        }
    }
    for (chain, kinds) in &r.summary.tx_counts {
        for (kind, count) in kinds {
            let kind = serde_json::to_value(kind).expect("kind serializes");
            rows.push(metric("txs", chain, kind.as_str().unwrap_or_default(), count));
        }
    }
    for o in &r.summary.outcomes {
        rows.push(metric("outcome", &o.chain_id, &o.escrow.to_string(), &o.outcome));
    }
    for (party, series) in &r.availability {
        for (h, v) in series {
            rows.push(metric("accessible", party, &h.to_string(), v));
        }
    }
    rows
}

fn emit<T: Serialize>(common: &Common, report: &T, rows: &[Metric]) -> Result<(), Failure> {
    fs::create_dir_all(&common.out)?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(common.out.join("report.json"), format!("{json}\n"))?;
    let mut w = csv::Writer::from_path(common.out.join("metrics.csv"))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    match common.format {
        Format::Json => println!("{json}"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
