use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levylab::experiment::{emit_plotdata, run, Experiment, ExperimentConfig, ExperimentReport};
use levylab::stable::EnsembleParams;
use levylab::LabError;

#[derive(Parser)]
#[command(name = "levylab", version, about = "Heavy-tailed random matrix experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest singular value distribution.
    Lsv(RunArgs),
    /// Bottom-k singular values.
    Bottomk(RunArgs),
    /// Eigenvector sup-norms near zero energy.
    Deloc(RunArgs),
    /// Stieltjes transform of the big part against the limit law.
    Locallaw(RunArgs),
    /// Isotropic residuals of the perturbed big part.
    Isotropic(RunArgs),
    /// Gap probabilities and the smoothed-count bracket.
    Gap(RunArgs),
    /// Tabulated limiting density.
    Density(RunArgs),
    /// Entry tails against the exact tail function.
    Tailcheck(RunArgs),
    /// Reload a report and recompute its aggregates.
    Audit {
        report: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; its experiment kind must match the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "LEVYLAB_WORKERS")]
    workers: Option<usize>,
    /// Directory for report.json and plot-data CSVs; the report goes to
    /// stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dimension used when no config file is given.
    #[arg(long, default_value_t = 128)]
    n: usize,
    /// Stability index used when no config file is given.
    #[arg(long, default_value_t = 1.5)]
    a: f64,
}

fn build_config(kind: &str, args: &RunArgs) -> Result<ExperimentConfig, LabError> {
    let mut config = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment.kind() != kind {
                return Err(LabError::Config(format!(
                    "{} holds a {} experiment, not {kind}",
                    path.display(),
                    cfg.experiment.kind()
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(EnsembleParams::feasible(args.n, args.a)?, Experiment::default_for(kind)?),
    };
    if let Some(seed) = args.seed {
        config.params.seed = seed;
    }
    if let Some(w) = args.workers {
        config.workers = Some(w);
    }
    if let Some(out) = &args.out {
        config.output.report = Some(out.join("report.json"));
        config.output.plotdata = Some(out.clone());
    }
    Ok(config)
}

fn execute(kind: &str, args: &RunArgs) -> Result<(), LabError> {
    let config = build_config(kind, args)?;
    let report = run(&config)?;
    match &config.output.report {
        Some(path) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
            }
            report.save(path)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{}", report.to_json()),
    }
    if let Some(dir) = &config.output.plotdata {
        for p in emit_plotdata(&report, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    for (k, v) in &report.aggregates {
        eprintln!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Audit { report } => ExperimentReport::load(report).map(|_| eprintln!("{}: aggregates reproduce", report.display())),
        Command::Lsv(a) => execute("lsv", a),
        Command::Bottomk(a) => execute("bottomk", a),
        Command::Deloc(a) => execute("deloc", a),
        Command::Locallaw(a) => execute("locallaw", a),
        Command::Isotropic(a) => execute("isotropic", a),
        Command::Gap(a) => execute("gap", a),
        Command::Density(a) => execute("density", a),
        Command::Tailcheck(a) => execute("tailcheck", a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
