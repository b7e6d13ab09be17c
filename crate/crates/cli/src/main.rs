use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gnep_core::harness::{self, Algorithm, ExperimentConfig, Sidecar, StepSpec, SweepParam};

#[derive(Parser)]
#[command(name = "gnep", version, about = "Penalized stochastic learning for networked GNEPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print constants, step-size bounds and bias bounds as JSON.
    Analyze(Common),
    /// Run a Monte-Carlo experiment and write its learning curve.
    Run(Common),
    /// Sweep `mu` or `rho` and write steady-state MSD and bias per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        /// Comma-separated values, e.g. `0.001,0.002,0.004`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    /// Uniform step-size.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV and JSON files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Draws used to estimate the noise constants.
    #[arg(long, default_value_t = 10_000)]
    noise_samples: usize,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: gnep_core::GnepError| e.to_string())
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: gnep_core::GnepError| e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::cournot(Algorithm::Atp, 0.002),
        };
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if let Some(mu) = self.mu {
            cfg.mu = StepSpec::Uniform(mu);
        }
        if let Some(rho) = self.rho {
            cfg.rho = rho;
        }
        if let Some(runs) = self.runs {
            cfg.num_runs = runs;
        }
        if let Some(iters) = self.iters {
            cfg.num_iters = iters;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn stem(cfg: &ExperimentConfig) -> String {
    match &cfg.mu {
        StepSpec::Uniform(mu) => format!("{}_mu{mu}_rho{}", cfg.algorithm.name().to_lowercase(), cfg.rho),
        StepSpec::PerAgent(_) => format!("{}_mumax{}_rho{}", cfg.algorithm.name().to_lowercase(), cfg.mu.max(), cfg.rho),
    }
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze(common) => {
            let cfg = common.config()?;
            let report = harness::analyze(&cfg, common.noise_samples)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run(common) => {
            let cfg = common.config()?;
            prepare(&common.out)?;
            let analysis = harness::analyze(&cfg, common.noise_samples)?;
            let result = harness::run_experiment(&cfg)?;
            let name = stem(&cfg);
            let csv = common.out.join(format!("{name}.csv"));
            harness::write_curve_csv(&csv, &result)?;
            harness::write_sidecar(
                &common.out.join(format!("{name}.json")),
                &Sidecar {
                    config: cfg,
                    analysis,
                    steady_state_msd: Some(result.steady_state_msd),
                    bias: result.bias,
                    flags: result.flags.clone(),
                    sweep: None,
                },
            )?;
            for flag in &result.flags {
                eprintln!("warning: {flag}");
            }
            println!("steady-state MSD {:.6e} -> {}", result.steady_state_msd, csv.display());
        }
        Command::Sweep { common, param, values } => {
            let cfg = common.config()?;
            prepare(&common.out)?;
            let analysis = harness::analyze(&cfg, common.noise_samples)?;
            let table = harness::sweep(&cfg, param, &values)?;
            let name = format!("sweep_{}_{}", param.name(), cfg.algorithm.name().to_lowercase());
            let csv = common.out.join(format!("{name}.csv"));
            harness::write_sweep_csv(&csv, &table)?;
            let flags = table
                .rows
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| format!("{} = {}: {e}", param.name(), r.param)))
                .collect();
            harness::write_sidecar(
                &common.out.join(format!("{name}.json")),
                &Sidecar {
                    config: cfg,
                    analysis,
                    steady_state_msd: None,
                    bias: None,
                    flags,
                    sweep: Some(table),
                },
            )?;
            println!("{} rows -> {}", values.len(), csv.display());
        }
    }
    Ok(())
}
