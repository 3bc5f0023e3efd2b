use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use restograph_cli::{generate_fixture, rerun, run_pipeline, run_stage, CliError, FixtureSpec, PipelineConfig, Stage, StageRecord};
use restograph_server::ServerConfig;

/// Predicts street restoration quality from street-view structure and
/// spatially dependent road graphs.
#[derive(Parser)]
#[command(name = "restograph", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segmentation rasters to one entity graph per road.
    BuildEntityGraphs,
    /// Entity graphs to 5-d street structure vectors.
    EmbedStreets,
    /// Roads, feature points and street vectors to the city graph bundle.
    BuildCityGraph,
    /// Trains every configured architecture for every run seed.
    Train,
    /// Scores a checkpoint on the train, validation and test masks.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Trains the primary model on feature-group subsets.
    Ablate,
    /// Serves the pairwise rating workflow over HTTP.
    RateServe {
        #[arg(long)]
        addr: Option<String>,
    },
    /// Turns the rating ledger into road labels.
    Label,
    /// Clusters the roads predicted in one class.
    Cluster,
    /// Entity structure summaries per predicted class and cluster.
    Report,
    /// Writes a synthetic dataset with planted labels.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        roads: usize,
        /// Strength of the class signal in the perception features.
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        /// Share of roads whose scenes follow their class template.
        #[arg(long, default_value_t = 0.8)]
        structure_signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent labels instead of spatially smooth ones.
        #[arg(long)]
        no_autocorrelation: bool,
    },
    /// Runs every stage in order.
    Run,
    /// Runs a stage again from a provenance record.
    Rerun { provenance: PathBuf },
}

fn print_records(records: &[StageRecord]) {
    for r in records {
        println!("{} ({:.2} s)", r.stage.name(), r.seconds);
        if !r.summary.is_empty() {
            println!("{}", r.summary.trim_end());
        }
    }
}

fn stage(cfg: &PipelineConfig, stage: Stage) -> Result<(), CliError> {
    print_records(&[run_stage(cfg, stage)?]);
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set;
    let load = |overrides: &[String]| PipelineConfig::load(cli.config.as_deref(), overrides);
    match cli.command {
        Command::Fixture { out, roads, signal, structure_signal, seed, no_autocorrelation } => {
            let spec = FixtureSpec {
                roads,
                signal,
                structure_signal,
                autocorrelated: !no_autocorrelation,
                seed,
                ..FixtureSpec::default()
            };
            let fixture = generate_fixture(&spec, &out)?;
            println!("fixture with {} roads written; config {}", fixture.roads.len(), fixture.config.display());
            Ok(())
        }
        Command::Rerun { provenance } => {
            print_records(&[rerun(&provenance)?]);
            Ok(())
        }
        Command::BuildEntityGraphs => stage(&load(&overrides)?, Stage::BuildEntityGraphs),
        Command::EmbedStreets => stage(&load(&overrides)?, Stage::EmbedStreets),
        Command::BuildCityGraph => stage(&load(&overrides)?, Stage::BuildCityGraph),
        Command::Train => stage(&load(&overrides)?, Stage::Train),
        Command::Evaluate { checkpoint } => {
            if let Some(c) = checkpoint {
                overrides.push(format!("paths.checkpoint={}", c.display()));
            }
            stage(&load(&overrides)?, Stage::Evaluate)
        }
        Command::Ablate => stage(&load(&overrides)?, Stage::Ablate),
        Command::Label => stage(&load(&overrides)?, Stage::Label),
        Command::Cluster => stage(&load(&overrides)?, Stage::Cluster),
        Command::Report => stage(&load(&overrides)?, Stage::Report),
        Command::Run => {
            print_records(&run_pipeline(&load(&overrides)?)?);
            Ok(())
        }
        Command::RateServe { addr } => {
            if let Some(a) = addr {
                overrides.push(format!("server.addr={a}"));
            }
            let cfg = load(&overrides)?;
            let need = |p: &Option<PathBuf>, key: &str| p.clone().ok_or_else(|| CliError::Usage(format!("{key} is not set")));
            let mut server = ServerConfig::new(need(&cfg.paths.images, "paths.images")?, need(&cfg.paths.ledger, "paths.ledger")?);
            server.static_dir = cfg.paths.static_dir.clone();
            server.params = cfg.trueskill.clone();
            server.seed = cfg.labeling_seed;
            server.questions = cfg.questions.clone();
            let addr: SocketAddr = cfg
                .server_addr
                .parse()
                .map_err(|e| CliError::Usage(format!("server.addr = {}: {e}", cfg.server_addr)))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(restograph_server::serve(server, addr))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RESTOGRAPH_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
