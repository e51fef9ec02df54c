use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use irs_rsrp::channel::generate_realization;
use irs_rsrp::estimator::{train, EstimatorModel, TrainingHyper};
use irs_rsrp::harness::{emit_report, run_experiment, write_atomic, ExperimentSpec, ReportFormat};
use irs_rsrp::linalg::quadratic_form;
use irs_rsrp::measurement::{build_dataset_for, MeasurementDataset};
use irs_rsrp::optimizer::{
    csm_select, design_reflection, exhaustive_oracle, rms_select, DesignSettings, Method, OptimizationResult,
    ReflectionReport,
};
use irs_rsrp::rng::substream;
use irs_rsrp::{Error, Result, SystemConfig};

#[derive(Parser)]
#[command(version, about = "RSRP-based IRS channel estimation and reflection design")]
struct Cli {
    /// JSON config: system parameters, or an experiment spec for `experiment`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a channel and write an RSRP dataset CSV.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        len: usize,
    },
    /// Fit the autocorrelation model to a dataset CSV.
    Estimate {
        #[arg(long)]
        dataset: PathBuf,
        /// Model rank; defaults to the configured number of delay taps.
        #[arg(long)]
        rank: Option<usize>,
        /// JSON file with training hyperparameters.
        #[arg(long)]
        hyper: Option<PathBuf>,
    },
    /// Choose a reflection from a fitted model (or a dataset for csm/rms).
    Optimize {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OptimizeMethod::Proposed)]
        method: OptimizeMethod,
    },
    /// Run a Monte Carlo experiment and write report.csv and report.json.
    Experiment,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizeMethod {
    Proposed,
    Exhaustive,
    Csm,
    Rms,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| match e.classify() {
            // well-formed JSON with bad contents
            serde_json::error::Category::Data => Error::InvalidArgument(e.to_string()),
            _ => Error::Json(e),
        }),
        None => Ok(T::default()),
    }
}

fn system_config(cli: &Cli) -> Result<SystemConfig> {
    let mut config: SystemConfig = read_json(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, fallback: &Path) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| fallback.to_path_buf());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_dataset(path: &Path, config: &SystemConfig, split_ratio: f64) -> Result<MeasurementDataset> {
    MeasurementDataset::read_csv(fs::File::open(path)?, config.alphabet(), config.noise_power, split_ratio)
}

fn missing(flag: &str) -> Error {
    Error::InvalidArgument(format!("--{flag} is required for this method"))
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate { len } => {
            let config = system_config(cli)?;
            let realization = generate_realization(&config, &mut substream(config.seed, &[0]))?;
            let split = TrainingHyper::default().split_ratio;
            let dataset = build_dataset_for(&realization, &config, *len, split, &mut substream(config.seed, &[1]))?;
            let mut buf = Vec::new();
            dataset.write_csv(&mut buf)?;
            let path = out_dir(cli, Path::new("."))?.join("dataset.csv");
            write_atomic(&path, &buf)?;
            Ok(vec![path])
        }
        Command::Estimate { dataset, rank, hyper } => {
            let config = system_config(cli)?;
            let hyper: TrainingHyper = read_json(hyper.as_deref())?;
            let data = load_dataset(dataset, &config, hyper.split_ratio)?;
            let rank = rank.unwrap_or(config.max_taps());
            let model = train(&data, rank, &hyper, &mut substream(config.seed, &[2]))?;
            let path = out_dir(cli, Path::new("."))?.join("model.json");
            write_atomic(&path, model.to_json()?.as_bytes())?;
            Ok(vec![path])
        }
        Command::Optimize { model, dataset, method } => {
            let config = system_config(cli)?;
            let alphabet = config.alphabet();
            let estimate = match model {
                Some(p) => Some(EstimatorModel::from_json(&fs::read_to_string(p)?)?.reconstruct()),
                None => None,
            };
            let result = match method {
                OptimizeMethod::Proposed => {
                    let r = estimate.as_ref().ok_or_else(|| missing("model"))?;
                    let mut rng = substream(config.seed, &[3]);
                    design_reflection(r, alphabet, &DesignSettings::default(), Method::Proposed, &mut rng)?
                }
                OptimizeMethod::Exhaustive => {
                    let r = estimate.as_ref().ok_or_else(|| missing("model"))?;
                    exhaustive_oracle(r, alphabet, r.nrows() - 1)?
                }
                OptimizeMethod::Csm | OptimizeMethod::Rms => {
                    let path = dataset.as_deref().ok_or_else(|| missing("dataset"))?;
                    let data = load_dataset(path, &config, TrainingHyper::default().split_ratio)?;
                    let (reflection, method) = match method {
                        OptimizeMethod::Csm => (csm_select(&data)?, Method::Csm),
                        _ => (rms_select(&data)?, Method::Rms),
                    };
                    let objective = match (&estimate, method) {
                        (Some(r), _) => quadratic_form(r, reflection.extended())?,
                        // the selected pattern was measured; report its power above the noise
                        (None, Method::Rms) => {
                            data.entries.iter().map(|e| e.rsrp).fold(f64::NEG_INFINITY, f64::max) - data.noise_power
                        }
                        (None, _) => {
                            return Err(Error::InvalidArgument("--model is required to score a csm selection".into()))
                        }
                    };
                    OptimizationResult { reflection, objective, method }
                }
            };
            let report = ReflectionReport::new(&result, config.noise_power)?;
            let path = out_dir(cli, Path::new("."))?.join("reflection.json");
            write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            Ok(vec![path])
        }
        Command::Experiment => {
            let mut spec: ExperimentSpec = read_json(cli.config.as_deref())?;
            if let Some(seed) = cli.seed {
                spec.base.seed = seed;
            }
            let report = run_experiment(&spec)?;
            let dir = out_dir(cli, &spec.output_dir)?;
            Ok(vec![emit_report(&report, &dir, ReportFormat::Csv)?, emit_report(&report, &dir, ReportFormat::Json)?])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={:?}", e.kind(), message);
            ExitCode::FAILURE
        }
    }
}
