use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sqe::experiments::{self, ExperimentConfig};
use sqe::validation::{validate, Injection};

#[derive(Parser, Debug)]
#[command(name = "sqe", version, about = "Sampling, quantization and coding for timely OU estimation")]
struct Cli {
    /// JSON experiment configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal n per ℓ and the overall optimal (ℓ, n) for IIR and FR.
    SweepLn,
    /// IIR vs FR over the processing time β, with the crossover β_sw.
    SweepBeta,
    /// Enhancement ratio of both schemes over β.
    EnhanceRatio,
    /// Lloyd codebook plus tracking of one OU path and a multi-seed summary.
    Track,
    /// Runs the invariant suite; exits nonzero if any check fails.
    Validate {
        /// Injects a fault to exercise a negative control.
        #[arg(long, value_enum)]
        inject: Option<InjectArg>,
    },
    /// Prints the effective configuration as JSON.
    Config,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InjectArg {
    TailDroppedPmf,
    NonMonotonePenalty,
}

impl From<InjectArg> for Injection {
    fn from(v: InjectArg) -> Self {
        match v {
            InjectArg::TailDroppedPmf => Injection::TailDroppedPmf,
            InjectArg::NonMonotonePenalty => Injection::NonMonotonePenalty,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn fmt_opt(o: Option<experiments::Optimum>) -> String {
    match o {
        Some(o) => format!("(ℓ, n) = ({}, {}), mmse = {:.6}", o.ell, o.n, o.mmse),
        None => "none".into(),
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(k) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    let config = load_config(cli)?;
    let out: &Path = &config.output_dir;
    match &cli.command {
        Command::SweepLn => {
            let results = experiments::sweep_ln(&config)?;
            for r in &results {
                println!("eps = {}: IIR {}; FR {}", r.epsilon, fmt_opt(r.best_iir), fmt_opt(r.best_fr));
                for p in r.grid.iter().filter(|p| !p.note.is_empty()) {
                    println!("  note (ℓ={}, n={}): {}", p.ell, p.n, p.note);
                }
            }
            report_files(&experiments::write_sweep_ln(&results, out)?);
        }
        Command::SweepBeta => {
            let results = experiments::sweep_beta(&config)?;
            for r in &results {
                match r.beta_sw {
                    Some(b) => println!("eps = {}: beta_sw = {b}", r.epsilon),
                    None => println!("eps = {}: no crossover in the swept range", r.epsilon),
                }
            }
            report_files(&experiments::write_sweep_beta(&results, out)?);
        }
        Command::EnhanceRatio => {
            let results = experiments::enhancement_ratio(&config)?;
            for r in &results {
                let peak = |p: Option<(f64, f64)>| match p {
                    Some((b, v)) => format!("{:.2}% at beta = {b}", 100.0 * v),
                    None => "none".into(),
                };
                println!("eps = {}: IIR peak {}; FR peak {}", r.epsilon, peak(r.peak_iir), peak(r.peak_fr));
            }
            report_files(&experiments::write_enhancement(&results, out)?);
        }
        Command::Track => {
            let report = experiments::track(&config)?;
            for s in &report.schemes {
                println!(
                    "{}: path mse = {:.4} (seed {}); {} seeds: mean {:.4} ± {:.4} [{:.4}, {:.4}]; analytic {:.4}",
                    s.scheme.label(),
                    s.single.empirical_mse,
                    config.seed,
                    s.seeds.count,
                    s.seeds.mean,
                    s.seeds.std_dev,
                    s.seeds.min,
                    s.seeds.max,
                    s.analytic_mmse
                );
            }
            report_files(&experiments::write_tracking(&report, config.seed, out)?);
        }
        Command::Validate { inject } => {
            let report = validate(&config, inject.map(Injection::from))?;
            println!("{report}");
            std::fs::create_dir_all(out)?;
            let path = out.join("validation.csv");
            report.write_csv(BufWriter::new(File::create(&path)?))?;
            println!("wrote {}", path.display());
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Config => println!("{}", config.to_json()?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
