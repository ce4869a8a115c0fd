use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jepa_score::commands::{self, CorrelateArgs, SampleArgs, ScoreArgs, TrainArgs};
use jepa_score::io::json_line;
use jepa_score::{CliError, Result};
use jepa_score_core::score::LangevinInit;

#[derive(Parser)]
#[command(name = "jepa-score", version, about = "Density scores from encoder Jacobians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Gaussian,
    Data,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder; writes checkpoint.json, loss.csv and world.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the rows of a headerless CSV.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "scores.csv")]
        output: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma_t: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a score histogram with this many bins.
        #[arg(long, requires = "histogram_output")]
        histogram_bins: Option<usize>,
        #[arg(long)]
        histogram_output: Option<PathBuf>,
    },
    /// Correlation grid between scores and the true log-density.
    Correlate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sample_counts: Option<Vec<usize>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Also score each dimension with the exact density map.
        #[arg(long)]
        oracle: bool,
    },
    /// Langevin chains driven by the score gradient.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "samples.csv")]
        output: PathBuf,
        #[arg(long, default_value_t = 512)]
        chains: usize,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Init::Gaussian)]
        init: Init,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Norm concentration of normalized Gaussians; prints one JSON object.
    CheckSphere {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            output_dir,
            steps,
            seed,
        } => {
            let s = commands::cmd_train(&TrainArgs {
                config,
                output_dir,
                steps,
                seed,
            })?;
            match s.final_loss {
                Some(l) => eprintln!("wrote {} (final loss {l:.6})", s.checkpoint.display()),
                None => eprintln!("wrote {}", s.checkpoint.display()),
            }
        }
        Command::Score {
            checkpoint,
            input,
            output,
            eps,
            mc_samples,
            sigma_t,
            seed,
            histogram_bins,
            histogram_output,
        } => {
            let args = ScoreArgs {
                eps,
                mc_samples,
                sigma_t,
                seed,
                histogram_bins: histogram_bins.zip(histogram_output),
                ..ScoreArgs::new(checkpoint, input, output)
            };
            let report = commands::cmd_score(&args)?;
            eprintln!("scored {} rows into {}", report.len(), args.output.display());
        }
        Command::Correlate {
            config,
            dims,
            sample_counts,
            output_dir,
            oracle,
        } => {
            let s = commands::cmd_correlate(&CorrelateArgs {
                config,
                dims,
                sample_counts,
                output_dir,
                oracle,
            })?;
            for c in &s.cells {
                eprintln!("dim {:>4}  n {:>6}  pearson {:.4}", c.dim, c.n_samples, c.pearson);
            }
            for o in &s.oracle {
                eprintln!("dim {:>4}  oracle   pearson {:.6}", o.dim, o.pearson);
            }
        }
        Command::Sample {
            checkpoint,
            output,
            chains,
            steps,
            eta,
            seed,
            init,
            data,
            eps,
        } => {
            let args = SampleArgs {
                chains,
                steps,
                eta,
                seed,
                init: match init {
                    Init::Gaussian => LangevinInit::FromGaussian,
                    Init::Data => LangevinInit::FromData,
                },
                data,
                eps,
                ..SampleArgs::new(checkpoint, output)
            };
            let points = commands::cmd_sample(&args)?;
            eprintln!("wrote {} chains to {}", points.len(), args.output.display());
        }
        Command::CheckSphere { dim, n, seed } => {
            print!("{}", json_line(&commands::cmd_check_sphere(dim, n, seed)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
