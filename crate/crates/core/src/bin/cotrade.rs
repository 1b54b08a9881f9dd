use clap::{Parser, Subcommand};
use cotrade::config::RunConfig;
use cotrade::pipeline::{run_pipeline, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

/// Co-trading network analysis and cluster-aware portfolio aggregation.
///
/// The pipeline runs as file-based stages; each one reads the previous
/// stage's artifacts from the configured output directory.
#[derive(Parser)]
#[command(name = "cotrade", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the market generator seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic trade ledger.
    Simulate(CommonArgs),
    /// Discretise trades into state series and net positions.
    States(CommonArgs),
    /// Build per-window statistically validated networks.
    Svn(CommonArgs),
    /// Partition traders into clusters per window.
    Cluster(CommonArgs),
    /// Fit the cluster-size distribution per window.
    #[command(name = "ewens-fit")]
    EwensFit(CommonArgs),
    /// Track cluster identities across windows.
    Track(CommonArgs),
    /// Run the portfolio strategies over the sliding windows.
    Backtest(CommonArgs),
    /// Summarise risk measures per strategy.
    Report(CommonArgs),
    /// Run several stages in order.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated stage subset; defaults to the full pipeline.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
    },
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, i32> {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return Err(1);
        }
    };
    let mut config = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(1);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn execute(config: &RunConfig, stages: &[Stage]) -> i32 {
    match run_pipeline(config, stages) {
        Ok(manifest) => {
            for stage in &manifest.stages {
                println!("{stage}: ok");
            }
            println!(
                "manifest: {} (config {})",
                cotrade::pipeline::Artifacts::new(config).manifest().display(),
                &manifest.config_hash[..12]
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the error path too.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let (args, stages): (&CommonArgs, Vec<Stage>) = match &cli.command {
        Command::Simulate(a) => (a, vec![Stage::Simulate]),
        Command::States(a) => (a, vec![Stage::States]),
        Command::Svn(a) => (a, vec![Stage::Svn]),
        Command::Cluster(a) => (a, vec![Stage::Cluster]),
        Command::EwensFit(a) => (a, vec![Stage::EwensFit]),
        Command::Track(a) => (a, vec![Stage::Track]),
        Command::Backtest(a) => (a, vec![Stage::Backtest]),
        Command::Report(a) => (a, vec![Stage::Report]),
        Command::Run { common, stages } => {
            let mut parsed = Vec::new();
            for name in stages {
                match Stage::parse(name) {
                    Some(s) => parsed.push(s),
                    None => {
                        eprintln!(
                            "error: unknown stage `{name}`; expected one of {}",
                            Stage::all().map(|s| s.as_str()).join(", ")
                        );
                        return ExitCode::from(1);
                    }
                }
            }
            if parsed.is_empty() {
                parsed = Stage::all().to_vec();
            }
            (common, parsed)
        }
    };

    let config = match load_config(args) {
        Ok(c) => c,
        Err(code) => return ExitCode::from(code as u8),
    };
    ExitCode::from(execute(&config, &stages) as u8)
}
