//! Command-line experiments over the `dgsp` toolkit.
//!
//! Every subcommand reads one JSON config (see [`config`] for the override
//! order), writes its CSV and JSON results into the output directory and
//! always leaves a `manifest.json` there, also when the run fails.
//! `--dry-run` validates the config, prints the resolved JSON and writes
//! nothing. Exit codes: 0 success, 2 configuration error, 3 numerical
//! failure.

pub mod cmd;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use config::{config_err, layered_value, parse, resolve_out_dir, CliError, Layers};
use output::{Manifest, Output, MANIFEST};

#[derive(Debug, Parser)]
#[command(
    name = "dgsp",
    version,
    about = "Signal processing on directed graphs: experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config field; dotted keys reach nested fields and the
    /// value is read as JSON when it parses.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [env: DGSP_OUT_DIR, default: ./dgsp-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Validate the config and print it resolved; write nothing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate synthetic graphs, signals and datasets.
    Synth,
    /// Eigenvector graph Fourier transform.
    Gft,
    /// Learn an orthonormal directed graph Fourier basis.
    DgftLearn,
    /// Apply a polynomial graph filter.
    Filter,
    /// Low-pass denoising of a bandlimited signal over a bandwidth grid.
    Denoise,
    /// Greedy sampling and reconstruction of a piecewise-constant signal.
    Sample,
    /// Sparse source recovery through a known filter.
    Deconvolve,
    /// Blind deconvolution through the lifted convex program.
    Blind,
    /// Stationary process covariance estimation and tap fitting.
    Stationary,
    /// Topology inference: SEM, SVARM, CGP or commutativity.
    Topoid,
    /// Train a graph neural network on source localisation.
    GnnTrain,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Gft => "gft",
            Command::DgftLearn => "dgft-learn",
            Command::Filter => "filter",
            Command::Denoise => "denoise",
            Command::Sample => "sample",
            Command::Deconvolve => "deconvolve",
            Command::Blind => "blind",
            Command::Stationary => "stationary",
            Command::Topoid => "topoid",
            Command::GnnTrain => "gnn-train",
        }
    }
}

/// Config fields every experiment carries.
pub trait RunFields {
    fn seed(&self) -> Option<u64>;
    fn out_dir(&self) -> Option<&Path>;
}

macro_rules! run_fields {
    ($($t:ty),* $(,)?) => {
        $(impl $crate::RunFields for $t {
            fn seed(&self) -> Option<u64> {
                self.seed
            }
            fn out_dir(&self) -> Option<&std::path::Path> {
                self.out_dir.as_deref()
            }
        })*
    };
}
pub(crate) use run_fields;

pub trait Experiment: RunFields + Serialize + DeserializeOwned + Default {
    /// Whether the run draws random numbers and so needs a seed.
    fn stochastic(&self) -> bool;
    /// Files the config refers to; each must exist.
    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }
    fn validate(&self) -> Result<(), CliError> {
        Ok(())
    }
    fn run(&self, seed: u64, out: &mut Output) -> Result<(), CliError>;
}

fn checked<E: Experiment>(value: &serde_json::Value) -> Result<E, CliError> {
    let cfg: E = parse(value)?;
    if cfg.stochastic() && cfg.seed().is_none() {
        return Err(config_err(
            "this experiment is stochastic: set \"seed\" in the config or pass --seed",
        ));
    }
    for p in cfg.inputs() {
        if !p.is_file() {
            return Err(config_err(format!(
                "input file {} does not exist",
                p.display()
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one experiment end to end and returns the process exit code.
pub fn execute<E: Experiment>(name: &str, common: &CommonArgs) -> i32 {
    let start = Instant::now();
    let layers = Layers {
        config: common.config.clone(),
        overrides: common.overrides.clone(),
        seed: common.seed,
        out_dir: common.out_dir.clone(),
    };
    let value = layered_value::<E>(&layers);
    let cfg = value.as_ref().map_err(clone_err).and_then(checked::<E>);

    if common.dry_run {
        return match (&value, &cfg) {
            (Ok(v), Ok(_)) => {
                println!("{}", serde_json::to_string_pretty(v).expect("json value"));
                0
            }
            (_, Err(e)) => {
                eprintln!("dgsp {name}: {e}");
                e.exit_code()
            }
            (Err(_), Ok(_)) => unreachable!("config parsed from a failed layer"),
        };
    }

    let configured = match (&cfg, &value) {
        (Ok(c), _) => c.out_dir().map(Path::to_path_buf),
        (Err(_), Ok(v)) => v.get("out_dir").and_then(|d| d.as_str()).map(PathBuf::from),
        _ => common.out_dir.clone(),
    };
    let mut out = Output::new(resolve_out_dir(configured.as_deref()));
    let seed = cfg.as_ref().ok().and_then(|c| c.seed());
    let result = cfg.and_then(|c| c.run(c.seed().unwrap_or(0), &mut out));

    let code = match &result {
        Ok(()) => 0,
        Err(e) => e.exit_code(),
    };
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        status: match &result {
            Ok(()) => "ok",
            Err(e) => e.kind(),
        },
        exit_code: code,
        error: result.as_ref().err().map(|e| e.to_string()),
        seed,
        threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: value.unwrap_or(serde_json::Value::Null),
        outputs: out.files().to_vec(),
    };
    let written = std::fs::create_dir_all(out.dir())
        .map_err(|e| e.to_string())
        .and_then(|_| {
            dgsp::io::save_json(out.dir().join(MANIFEST), &manifest).map_err(|e| e.to_string())
        });
    if let Err(e) = written {
        eprintln!("dgsp {name}: could not write manifest: {e}");
    }
    match &result {
        Ok(()) => println!(
            "dgsp {name}: wrote {} files to {}",
            out.files().len(),
            out.dir().display()
        ),
        Err(e) => eprintln!("dgsp {name}: {e}"),
    }
    code
}

fn clone_err(e: &CliError) -> CliError {
    config_err(match e {
        CliError::Config(m) => m.clone(),
        other => other.to_string(),
    })
}

pub fn run(cli: &Cli) -> i32 {
    let c = &cli.common;
    let name = cli.command.name();
    match cli.command {
        Command::Synth => execute::<cmd::synth::SynthConfig>(name, c),
        Command::Gft => execute::<cmd::spectral::GftConfig>(name, c),
        Command::DgftLearn => execute::<cmd::spectral::DgftConfig>(name, c),
        Command::Filter => execute::<cmd::filter::FilterConfig>(name, c),
        Command::Denoise => execute::<cmd::spectral::DenoiseConfig>(name, c),
        Command::Sample => execute::<cmd::sample::SampleConfig>(name, c),
        Command::Deconvolve => execute::<cmd::inverse::DeconvolveConfig>(name, c),
        Command::Blind => execute::<cmd::inverse::BlindConfig>(name, c),
        Command::Stationary => execute::<cmd::stationary::StationaryConfig>(name, c),
        Command::Topoid => execute::<cmd::topoid::TopoidConfig>(name, c),
        Command::GnnTrain => execute::<cmd::gnn::GnnConfig>(name, c),
    }
}
