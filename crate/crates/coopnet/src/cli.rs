//! Command-line front end: argument parsing and subcommand dispatch.
//! Every run writes a manifest JSON with the fully resolved config before
//! any computation starts; re-running with `--config manifest.json`
//! reproduces the outputs byte-for-byte.

use crate::config::{parse_config, parse_override, Manifest, ParsedConfig};
use crate::error::{Error, Result};
use crate::experiments::{run_scenario, run_sweep, tragedy_regression, ScenarioConfig, SweepSpec};
use crate::io;
use crate::model::{build_connectivity_matrix, realize_edges, sample_deployment, BinaryGraph};
use crate::metrics;
use crate::seed::{derive_seed, STREAM_DEPLOYMENT, STREAM_EDGES};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "coopnet",
    version,
    about = "Simulate cooperation dynamics on random geometric wireless networks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a deployment and write its connectivity matrix and one
    /// realized graph.
    Generate(RunArgs),
    /// Evolve the cooperation state and write the trajectory and
    /// equilibrium.
    Evolve(RunArgs),
    /// Run a parameter sweep grid and write the result table.
    Sweep(RunArgs),
    /// Compute degree statistics and assortativity for a graph JSON.
    Metrics(MetricsArgs),
    /// Check the m = 0 decay regression and write a pass/fail report.
    Tragedy(TragedyArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file: flat KEY=VALUE lines, or a manifest JSON from a
    /// previous run. Missing keys take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Root seed; shorthand for --set seed=N.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Input graph JSON ({"n": ..., "edges": [[i, j], ...]}).
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args, Debug)]
struct TragedyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Force the incentive level to 0 instead of refusing a nonzero
    /// configured m.
    #[arg(long)]
    force_m0: bool,
}

pub fn run() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "error": err.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate(args) => {
            let (cfg, out) = prepare_scenario(&args, "generate", GENERATE_OUTPUTS)?;
            cmd_generate(&cfg, &out)
        }
        Command::Evolve(args) => {
            let (cfg, out) = prepare_scenario(&args, "evolve", EVOLVE_OUTPUTS)?;
            cmd_evolve(&cfg, &out)
        }
        Command::Sweep(args) => {
            let (parsed, out) = prepare(&args, "sweep", SWEEP_OUTPUTS)?;
            let spec = match parsed {
                ParsedConfig::Sweep(s) => s,
                ParsedConfig::Scenario(_) => {
                    return Err(Error::config(
                        "sweep.axis1.param",
                        "sweep requires sweep.axis1.* keys in the config",
                    ))
                }
            };
            cmd_sweep(&spec, &out)
        }
        Command::Metrics(args) => {
            let (_, out) = prepare(&args.run, "metrics", METRICS_OUTPUTS)?;
            cmd_metrics(&args.graph, &out)
        }
        Command::Tragedy(args) => {
            let mut overrides = collect_overrides(&args.run)?;
            if args.force_m0 {
                overrides.push(("game.m".to_string(), "0".to_string()));
            }
            let parsed = parse_config(args.run.config.as_deref(), &overrides)?;
            let cfg = expect_scenario(parsed, "tragedy")?;
            if cfg.game.m() != 0.0 {
                return Err(Error::config(
                    "game.m",
                    format!(
                        "tragedy requires m = 0, got {} (pass --force-m0 to override)",
                        cfg.game.m()
                    ),
                ));
            }
            let out = prepare_out_dir(
                &args.run.out,
                "tragedy",
                &ParsedConfig::Scenario(cfg),
                TRAGEDY_OUTPUTS,
            )?;
            cmd_tragedy(&cfg, &out)
        }
    }
}

const GENERATE_OUTPUTS: &[&str] = &["deployment.json", "connectivity.json", "graph.json"];
const EVOLVE_OUTPUTS: &[&str] = &["trajectory.csv", "equilibrium.json"];
const SWEEP_OUTPUTS: &[&str] = &["sweep.csv"];
const METRICS_OUTPUTS: &[&str] = &["metrics.json"];
const TRAGEDY_OUTPUTS: &[&str] = &["tragedy_report.json"];

fn collect_overrides(args: &RunArgs) -> Result<Vec<(String, String)>> {
    let mut overrides = args
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    Ok(overrides)
}

fn prepare(args: &RunArgs, command: &str, outputs: &[&str]) -> Result<(ParsedConfig, PathBuf)> {
    let overrides = collect_overrides(args)?;
    let parsed = parse_config(args.config.as_deref(), &overrides)?;
    let out = prepare_out_dir(&args.out, command, &parsed, outputs)?;
    Ok((parsed, out))
}

fn prepare_scenario(
    args: &RunArgs,
    command: &str,
    outputs: &[&str],
) -> Result<(ScenarioConfig, PathBuf)> {
    let (parsed, out) = prepare(args, command, outputs)?;
    Ok((expect_scenario(parsed, command)?, out))
}

fn expect_scenario(parsed: ParsedConfig, command: &str) -> Result<ScenarioConfig> {
    match parsed {
        ParsedConfig::Scenario(c) => Ok(c),
        ParsedConfig::Sweep(_) => Err(Error::invalid(format!(
            "`{command}` expects a scenario config without sweep.* keys"
        ))),
    }
}

/// Creates the output directory and writes the manifest before any
/// computation; an unwritable directory fails here.
fn prepare_out_dir(
    out: &Path,
    command: &str,
    parsed: &ParsedConfig,
    outputs: &[&str],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let manifest = Manifest::new(command, parsed, outputs);
    write_json(out, "manifest.json", &manifest)?;
    Ok(out.to_path_buf())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    io::write_json_file(&dir.join(name), value)
}

fn cmd_generate(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    cfg.validate()?;
    let dep = sample_deployment(cfg.n, cfg.domain()?, derive_seed(cfg.seed, STREAM_DEPLOYMENT))?;
    let h = build_connectivity_matrix(&dep, &cfg.channel);
    let graph = realize_edges(&h, derive_seed(cfg.seed, STREAM_EDGES));
    write_json(out, "deployment.json", &dep)?;
    write_json(out, "connectivity.json", &h)?;
    write_json(out, "graph.json", &graph)?;
    Ok(0)
}

fn cmd_evolve(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    let (record, outcome) = run_scenario(cfg)?;
    std::fs::write(out.join("trajectory.csv"), io::trajectory_to_csv(&record))?;
    write_json(out, "equilibrium.json", &outcome)?;
    Ok(0)
}

fn cmd_sweep(spec: &SweepSpec, out: &Path) -> Result<u8> {
    let rows = run_sweep(spec)?;
    std::fs::write(out.join("sweep.csv"), io::sweep_rows_to_csv(&rows))?;
    Ok(0)
}

fn cmd_metrics(graph_path: &Path, out: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(graph_path)?;
    let graph: BinaryGraph = serde_json::from_str(&text)?;

    #[derive(Serialize)]
    struct MetricsOut {
        degree_stats: metrics::DegreeStats,
        assortativity: metrics::Assortativity,
    }
    let result = MetricsOut {
        degree_stats: metrics::degree_stats(&graph),
        assortativity: metrics::assortativity(&graph),
    };
    write_json(out, "metrics.json", &result)?;
    Ok(0)
}

fn cmd_tragedy(cfg: &ScenarioConfig, out: &Path) -> Result<u8> {
    let report = tragedy_regression(cfg)?;
    write_json(out, "tragedy_report.json", &report)?;
    if report.pass {
        Ok(0)
    } else {
        log::warn!("tragedy regression failed: {report:?}");
        Ok(2)
    }
}
