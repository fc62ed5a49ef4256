//! Experiment CLI: thin argument handling over the library's harness.
//!
//! Each subcommand reads a `key = value` config file; flags override the
//! file. Exit codes: 0 success, 2 config error, 3 i/o error, 4 numerical
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qmap::config::KvFile;
use qmap::harness::{
    mmse_sibling, run_denoise_image, run_id, run_sweep_iid, run_sweep_markov, run_train,
    DenoiseImageConfig, HarnessError, IdConfig, SweepIidConfig, SweepMarkovConfig, TrainConfig,
};
use qmap::metrics::records_to_csv;

#[derive(Parser)]
#[command(name = "qmap", version, about = "Quantized-MAP denoising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; every result is a pure function of (config, seed).
    #[arg(long)]
    seed: u64,
    /// Override or add `key=value` pairs from the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar-denoiser Monte-Carlo sweep with matched MMSE-oracle rows.
    SweepIid {
        #[command(flatten)]
        common: Common,
        /// Override the sigma list, e.g. "0.1 0.05 0.02 0.01".
        #[arg(long)]
        sigma: Option<String>,
        /// Override the bit-depth list, e.g. "12" or "6..12".
        #[arg(long)]
        b: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall-clock seconds (makes CSV non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Pairwise-DP sweep over piecewise-structured Markov sources.
    SweepMarkov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        b: Option<String>,
        /// Sequence length per trial.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Quantized-entropy profile and information-dimension slope.
    Id {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        b: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// "samples" (plug-in) or "analytic".
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the patch prior from a directory of PGM images.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        patches: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Denoise a PGM image with a trained prior plus the threshold baseline.
    DenoiseImage {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<String>,
        /// "grid" or a fixed value.
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        threshold: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<KvFile, HarnessError> {
    let mut kv = KvFile::from_path(&common.config)?;
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set needs KEY=VALUE, got `{pair}`")))?;
        kv.push(k.trim(), v.trim());
    }
    Ok(kv)
}

fn override_kv(kv: &mut KvFile, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        kv.push(key, v.to_string());
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::SweepIid { common, sigma, b, trials, out, timing } => {
            let mut kv = load_config(&common)?;
            override_kv(&mut kv, "sigma", sigma);
            override_kv(&mut kv, "b", b);
            override_kv(&mut kv, "trials", trials);
            override_kv(&mut kv, "out", out.map(|p| p.display().to_string()));
            if timing {
                kv.push("timing", "true");
            }
            let cfg = SweepIidConfig::from_kv(&kv)?;
            let result = run_sweep_iid(&cfg, common.seed)?;
            match &cfg.out {
                Some(path) => {
                    eprintln!("wrote {} and {}", path.display(), mmse_sibling(path).display());
                }
                None => {
                    print!("{}", result.qmap_csv);
                    eprint!("{}", result.mmse_csv);
                }
            }
            Ok(())
        }
        Command::SweepMarkov { common, sigma, b, n, trials, out, timing } => {
            let mut kv = load_config(&common)?;
            override_kv(&mut kv, "sigma", sigma);
            override_kv(&mut kv, "b", b);
            override_kv(&mut kv, "n", n);
            override_kv(&mut kv, "trials", trials);
            override_kv(&mut kv, "out", out.map(|p| p.display().to_string()));
            if timing {
                kv.push("timing", "true");
            }
            let cfg = SweepMarkovConfig::from_kv(&kv)?;
            let rows = run_sweep_markov(&cfg, common.seed)?;
            match &cfg.out {
                Some(path) => eprintln!("wrote {}", path.display()),
                None => print!("{}", records_to_csv(&rows)),
            }
            Ok(())
        }
        Command::Id { common, b, n, mode, out } => {
            let mut kv = load_config(&common)?;
            override_kv(&mut kv, "b", b);
            override_kv(&mut kv, "n", n);
            override_kv(&mut kv, "mode", mode);
            override_kv(&mut kv, "out", out.map(|p| p.display().to_string()));
            let cfg = IdConfig::from_kv(&kv)?;
            let report = run_id(&cfg, common.seed)?;
            println!("{report}");
            Ok(())
        }
        Command::Train { common, corpus, patches, out } => {
            let mut kv = load_config(&common)?;
            override_kv(&mut kv, "corpus", corpus.map(|p| p.display().to_string()));
            override_kv(&mut kv, "patches", patches);
            override_kv(&mut kv, "out", out.map(|p| p.display().to_string()));
            let cfg = TrainConfig::from_kv(&kv)?;
            let (_, report) = run_train(&cfg, common.seed)?;
            println!("{report}");
            eprintln!("wrote {}", cfg.out.display());
            Ok(())
        }
        Command::DenoiseImage { common, prior, input, sigma, lambda, stride, threshold, out } => {
            let mut kv = load_config(&common)?;
            override_kv(&mut kv, "prior", prior.map(|p| p.display().to_string()));
            override_kv(&mut kv, "input", input.map(|p| p.display().to_string()));
            override_kv(&mut kv, "sigma", sigma);
            override_kv(&mut kv, "lambda", lambda);
            override_kv(&mut kv, "stride", stride);
            override_kv(&mut kv, "threshold", threshold);
            override_kv(&mut kv, "out", out.map(|p| p.display().to_string()));
            let cfg = DenoiseImageConfig::from_kv(&kv)?;
            let report = run_denoise_image(&cfg, common.seed)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
