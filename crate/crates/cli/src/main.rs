//! `zerebro`: one binary for the collapse lab, self-dialogue runs, the agent
//! loop, memory inspection, the simulated chain and merged reports.
//!
//! Every run resolves its settings as defaults < `--config` file < flags and
//! writes a manifest into `--out`; `zerebro rerun` replays a manifest.

mod commands;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use zerebro_core::config::{ConfigError, ConfigMap};

use crate::manifest::RunManifest;
use crate::run::UsageError;

#[derive(Debug, Parser)]
#[command(name = "zerebro", version, about = "Memory, agent and model-collapse experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Settings file of key=value lines; flags win over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for the command's random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact and the run manifest.
    #[arg(long, global = true, env = "ZEREBRO_OUT", default_value = "zerebro-out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recursive refitting of a toy generative model.
    Collapse(CollapseArgs),
    /// Self-dialogue with optional human-corpus injection.
    Backrooms(BackroomsArgs),
    /// Run the agent loop for a number of turns.
    Agent(AgentArgs),
    /// Inspect or modify a memory snapshot.
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Mint, deploy or verify on the simulated ledger.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Merge a collapse report and a backrooms transcript into one summary.
    Report(ReportArgs),
    /// Re-execute the run described by a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct CollapseArgs {
    #[arg(long, value_parser = ["gaussian", "categorical"])]
    model: Option<String>,
    /// Samples per generation.
    #[arg(long)]
    m: Option<usize>,
    /// Generations after the origin.
    #[arg(long = "G", visible_alias = "generations", value_name = "G")]
    generations: Option<usize>,
    /// Fraction of each generation drawn from the origin.
    #[arg(long)]
    rho: Option<f64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// Alphabet size of the categorical origin.
    #[arg(long)]
    symbols: Option<u32>,
    /// Also compare these rhos on matched seeds.
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BackroomsArgs {
    #[arg(long)]
    turns: Option<usize>,
    /// Probability that a turn observes a human-corpus line.
    #[arg(long)]
    injection_rate: Option<f64>,
    /// Diversity window, in turns.
    #[arg(long)]
    window: Option<usize>,
    /// Store injected human lines in memory as well.
    #[arg(long)]
    store_injected: bool,
    #[arg(long)]
    prompt: Option<String>,
}

#[derive(Debug, Args)]
struct AgentArgs {
    #[arg(long)]
    turns: Option<usize>,
    /// File with one observation per line; defaults to the bundled human corpus.
    #[arg(long, value_name = "FILE")]
    observations: Option<PathBuf>,
    /// Give the agent a wallet on a fresh simulated ledger.
    #[arg(long)]
    chain: bool,
}

#[derive(Debug, Subcommand)]
enum MemoryCommand {
    /// Insert or replace one record.
    Upsert {
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        id: Option<String>,
        /// human, agent or platform-feedback.
        #[arg(long)]
        source: Option<String>,
    },
    /// Nearest records to a query text.
    Query {
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Record count, sources and dispersion.
    Stats,
}

#[derive(Debug, Subcommand)]
enum ChainCommand {
    /// Generate art for a theme and mint it.
    Mint {
        #[arg(long)]
        theme: Option<String>,
    },
    /// Deploy a fungible token.
    Deploy {
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        symbol: Option<String>,
        #[arg(long)]
        supply: Option<u64>,
        /// Unit price, for the implied market cap.
        #[arg(long)]
        price: Option<String>,
    },
    /// Replay the hash chain and conservation checks.
    Verify,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Collapse report file or the directory holding it.
    #[arg(long, value_name = "PATH")]
    collapse: Option<PathBuf>,
    /// Backrooms transcript file or the directory holding it.
    #[arg(long, value_name = "PATH")]
    backrooms: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RerunArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

type Overrides = Vec<(&'static str, String)>;

fn push<T: ToString>(o: &mut Overrides, key: &'static str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key, v.to_string()));
    }
}

fn path_str(p: PathBuf) -> String {
    p.display().to_string()
}

impl Command {
    /// Command name and the config keys its flags set.
    fn into_overrides(self) -> (&'static str, Overrides) {
        let mut o = Overrides::new();
        let name = match self {
            Command::Collapse(a) => {
                push(&mut o, "collapse.model", a.model);
                push(&mut o, "collapse.m", a.m);
                push(&mut o, "collapse.generations", a.generations);
                push(&mut o, "collapse.rho", a.rho);
                push(&mut o, "collapse.seeds", a.seeds);
                push(&mut o, "collapse.symbols", a.symbols);
                let rhos = a
                    .rhos
                    .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
                push(&mut o, "collapse.rhos", rhos);
                "collapse"
            }
            Command::Backrooms(a) => {
                push(&mut o, "backrooms.turns", a.turns);
                push(&mut o, "backrooms.injection_rate", a.injection_rate);
                push(&mut o, "backrooms.window", a.window);
                push(&mut o, "backrooms.store_injected", a.store_injected.then_some(true));
                push(&mut o, "backrooms.opening_prompt", a.prompt);
                "backrooms"
            }
            Command::Agent(a) => {
                push(&mut o, "agent.turns", a.turns);
                push(&mut o, "agent.observations", a.observations.map(path_str));
                push(&mut o, "agent.chain", a.chain.then_some(true));
                "agent"
            }
            Command::Memory(MemoryCommand::Upsert { text, id, source }) => {
                push(&mut o, "memory.text", text);
                push(&mut o, "memory.id", id);
                push(&mut o, "memory.source", source);
                "memory upsert"
            }
            Command::Memory(MemoryCommand::Query { text, k }) => {
                push(&mut o, "memory.text", text);
                push(&mut o, "memory.k", k);
                "memory query"
            }
            Command::Memory(MemoryCommand::Stats) => "memory stats",
            Command::Chain(ChainCommand::Mint { theme }) => {
                push(&mut o, "chain.theme", theme);
                "chain mint"
            }
            Command::Chain(ChainCommand::Deploy {
                name,
                symbol,
                supply,
                price,
            }) => {
                push(&mut o, "chain.name", name);
                push(&mut o, "chain.symbol", symbol);
                push(&mut o, "chain.supply", supply);
                push(&mut o, "chain.price", price);
                "chain deploy"
            }
            Command::Chain(ChainCommand::Verify) => "chain verify",
            Command::Report(a) => {
                push(&mut o, "report.collapse", a.collapse.map(path_str));
                push(&mut o, "report.backrooms", a.backrooms.map(path_str));
                "report"
            }
            Command::Rerun(_) => unreachable!("rerun is dispatched separately"),
        };
        (name, o)
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<RunManifest> {
    let GlobalArgs { config, seed, out } = cli.global;
    if let Command::Rerun(args) = cli.command {
        let manifest = RunManifest::load(&args.manifest)?;
        return commands::execute(&manifest.command, manifest.config_map(), &out);
    }
    let (name, overrides) = cli.command.into_overrides();
    let mut settings = match &config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::new(),
    };
    for (k, v) in overrides {
        settings.set(k, v);
    }
    if let Some(seed) = seed {
        settings.set(format!("{}.seed", run::section(name)), seed);
    }
    commands::execute(name, settings, &out)
}

fn usage_for(command: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    for part in command.split_whitespace() {
        match cmd.find_subcommand(part).cloned() {
            Some(sub) => cmd = sub,
            None => break,
        }
    }
    cmd.render_usage().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("error: {}\n\n{}", u.message, usage_for(&u.command));
                ExitCode::from(2)
            } else if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}
