use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rgg_edge::experiments::{self, write_outputs, ExperimentConfig, Mode};
use rgg_edge::graph::build_hard_affinity;
use rgg_edge::sampling::sample_gaussian_rep;

#[derive(Parser)]
#[command(name = "rgg-edge", version, about = "Edge eigenvalues of Gaussian random geometric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuum eigenvalues with multiplicities and generating tuples.
    Theory(Common),
    /// Edge eigenvalues over repetitions at one radius.
    Converge(Common),
    /// Mean relative error against the radius.
    SweepR(Common),
    /// Detection statistic for clean signals under growing noise.
    Detect(Common),
    /// Bias of the deterministic operator against the radius.
    Bias(Common),
    /// Print a preset as TOML.
    Preset {
        #[arg(default_value = "fig1")]
        name: String,
        #[arg(long, default_value = "converge")]
        mode: String,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults to the fig1 preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Evaluate pass/fail checks; exit nonzero if any fails.
    #[arg(long)]
    check: bool,
    /// Skip the SVG siblings.
    #[arg(long)]
    no_svg: bool,
    /// Also write the affinity matrix of repetition 0 in MatrixMarket format.
    #[arg(long)]
    export_mtx: bool,
}

fn parse_mode(s: &str) -> Result<Mode> {
    Ok(match s {
        "theory" => Mode::Theory,
        "converge" => Mode::Converge,
        "sweep-r" => Mode::SweepR,
        "detect" => Mode::Detect,
        "bias" => Mode::Bias,
        other => anyhow::bail!("unknown mode {other:?}"),
    })
}

fn load_config(common: &Common, mode: Mode) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::preset("fig1", mode)?,
    };
    config.mode = mode;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(r) = common.reps {
        config.repetitions = r;
    }
    config.validate()?;
    Ok(config)
}

fn export_mtx(config: &ExperimentConfig, out: &std::path::Path) -> Result<()> {
    let sigma = config.sigma_diag()?;
    let cloud = sample_gaussian_rep(config.n, &sigma, config.seed, 0)?;
    let aff = build_hard_affinity(&cloud, &config.graph_spec(config.r_n.values()[0]))?;
    let path = out.join("affinity_rep0.mtx");
    aff.write_matrix_market(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(common: Common, mode: Mode) -> Result<bool> {
    let config = load_config(&common, mode)?;
    let record = experiments::run(&config)?;
    for path in write_outputs(&config, &record, &common.out, !common.no_svg)? {
        println!("wrote {}", path.display());
    }
    if common.export_mtx && mode != Mode::Theory && mode != Mode::Bias && mode != Mode::Detect {
        export_mtx(&config, &common.out)?;
    }
    println!("wall time {:.2}s", record.wall_time_s);
    if common.check {
        for c in &record.checks {
            println!("{c}");
        }
        return Ok(record.checks.iter().all(|c| c.passed));
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Theory(c) => execute(c, Mode::Theory),
        Command::Converge(c) => execute(c, Mode::Converge),
        Command::SweepR(c) => execute(c, Mode::SweepR),
        Command::Detect(c) => execute(c, Mode::Detect),
        Command::Bias(c) => execute(c, Mode::Bias),
        Command::Preset { name, mode } => parse_mode(&mode)
            .and_then(|m| Ok(ExperimentConfig::preset(&name, m)?))
            .and_then(|c| Ok(c.to_toml_string()?))
            .map(|s| {
                print!("{s}");
                true
            }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
