use std::path::PathBuf;
use std::process::ExitCode;

use bosonkernel_cli::cache::CACHE_ENV;
use bosonkernel_cli::commands::{self, Context};
use bosonkernel_cli::config::{DatasetKind, ExperimentConfig};
use bosonkernel_cli::error::{CliError, CliResult};
use bosonkernel_cli::fetch;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bosonkernel", version, about = "Boson-sampling kernel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only these seeds instead of the config's list.
    #[arg(long, num_args = 1..)]
    seed: Vec<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Kernel cache directory. Overrides the environment and the config.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: encoder, SVM, readout curve, histograms, baselines.
    Run(Common),
    /// Accuracy against photon number.
    SweepPhotons(Common),
    /// Accuracy over a (modes, layers, photons) grid.
    SweepDimension(Common),
    /// Accuracy against readout subset size.
    SweepReadout(Common),
    /// Kernel-value histograms, divergences and readout bounds.
    Histograms(Common),
    /// Classical baselines only.
    Baselines(Common),
    /// Download a dataset.
    FetchData {
        #[arg(value_enum)]
        dataset: FetchTarget,
        /// Destination directory.
        #[arg(long, default_value = "data")]
        dest: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FetchTarget {
    Ionosphere,
    Spambase,
    Mnist,
    FashionMnist,
}

impl From<FetchTarget> for DatasetKind {
    fn from(t: FetchTarget) -> Self {
        match t {
            FetchTarget::Ionosphere => DatasetKind::Ionosphere,
            FetchTarget::Spambase => DatasetKind::Spambase,
            FetchTarget::Mnist => DatasetKind::Mnist,
            FetchTarget::FashionMnist => DatasetKind::FashionMnist,
        }
    }
}

fn setup(common: &Common) -> CliResult<(Context, Vec<String>)> {
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::config("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if !common.seed.is_empty() {
        cfg.seeds = common.seed.clone();
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    let env_cache = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    if let Some(dir) = common.cache_dir.clone().or(env_cache) {
        cfg.cache_dir = Some(dir);
    }
    let warnings = cfg.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok((Context::new(cfg)?, warnings))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(c) => {
            let (ctx, warnings) = setup(&c)?;
            let report = commands::run(&ctx, warnings)?;
            let s = &report.summary;
            eprintln!("quantum accuracy {:.4} ± {:.4} over {} seeds", s.quantum.mean, s.quantum.std, report.per_seed.len());
            for (name, stat) in [("linear", s.linear), ("sigmoid", s.sigmoid), ("neural network", s.neural_network)] {
                if let Some(stat) = stat {
                    eprintln!("{name} accuracy {:.4} ± {:.4}", stat.mean, stat.std);
                }
            }
        }
        Command::SweepPhotons(c) => {
            commands::sweep_photons(&setup(&c)?.0)?;
        }
        Command::SweepDimension(c) => {
            commands::sweep_dimension(&setup(&c)?.0)?;
        }
        Command::SweepReadout(c) => {
            commands::sweep_readout(&setup(&c)?.0)?;
        }
        Command::Histograms(c) => {
            commands::histograms_cmd(&setup(&c)?.0)?;
        }
        Command::Baselines(c) => {
            commands::baselines(&setup(&c)?.0)?;
        }
        Command::FetchData { dataset, dest } => {
            for p in fetch::fetch(dataset.into(), &dest)? {
                eprintln!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
