use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gotu_core::experiment::{self, ExperimentSpec, RunOutput, PRESETS};
use gotu_core::Error;

/// Random-feature experiments on unseen parts of the input domain.
#[derive(Parser)]
#[command(name = "gotu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key-value config or a spec.json export.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a named preset with the published parameters.
    Preset {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of random features.
        #[arg(long)]
        width: Option<usize>,
        /// Override the number of training points.
        #[arg(long)]
        samples: Option<usize>,
        /// Override the iteration cap of gradient descent.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Train explicit features even where the preset defaults to the limit predictor.
        #[arg(long)]
        train: bool,
    },
    /// Covariance scaling of Fourier coefficients on roots of unity.
    UnityCheck {
        #[arg(long, default_value_t = 4)]
        n: u32,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        d: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        degree: u32,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/unity-check")]
        out: PathBuf,
    },
    /// List the preset names.
    ListPresets,
}

fn finish(output: &RunOutput, out: &Path) -> Result<(), Error> {
    output.write_to(out)?;
    print!("{}", output.table.render());
    eprintln!("wrote {} ({:.1}s, spec {})", out.display(), output.table.wall_seconds, &output.table.spec_hash[..12]);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let spec = ExperimentSpec::load(&config)?;
            finish(&experiment::run_experiment(&spec)?, &out)
        }
        Command::Preset { name, seed, reps, out, width, samples, max_iters, train } => {
            let mut spec = experiment::preset(&name)?;
            spec.seed = seed.unwrap_or(spec.seed);
            spec.repetitions = reps.unwrap_or(spec.repetitions);
            spec.width = width.unwrap_or(spec.width);
            spec.samples = samples.unwrap_or(spec.samples);
            spec.max_iters = max_iters.unwrap_or(spec.max_iters);
            if train {
                spec.method = experiment::Method::TrainGd;
            }
            spec.validate()?;
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&name));
            finish(&experiment::run_experiment(&spec)?, &out)
        }
        Command::UnityCheck { n, d, degree, samples, seed, out } => {
            let report = experiment::unity_check(n, &d, degree, samples, seed)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("unity_check.csv"), report.to_csv())?;
            for (label, deg, slope) in report.slopes() {
                println!("slope {label} (|j|={deg}): {slope:.4}");
            }
            println!("max off-diagonal z: {:.3}", report.max_off_diagonal_z());
            Ok(())
        }
        Command::ListPresets => {
            for name in PRESETS {
                let spec = experiment::preset(name)?;
                println!("{name:22} {}", experiment::describe(&spec));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
