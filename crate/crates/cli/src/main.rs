use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tomo_core::binning::{build_histograms_anchored, estimate_mean_photon, mean_width, BinAnchor, WidthStrategy};
use tomo_core::experiment::{emit_report, raw_model, run_sweep, ExperimentConfig, Mode};
use tomo_core::mle::{reconstruct, MleConfig};
use tomo_core::povm::{build_bin_operator_set, DEFAULT_EFFICIENCY};
use tomo_core::sampler::{generate_dataset, PhaseSchedule, QuadratureDataset};
use tomo_core::states::{StateKind, StateSpec, DEFAULT_TRANSMISSIVITY};

const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "tomo", version, about = "Simulated homodyne tomography with binned maximum-likelihood reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory (default: the config's output_path, else `results`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a quadrature dataset and write it as CSV.
    Sample {
        /// `cat:ALPHA`, `squeezed:RATIO` or `fock:N`.
        #[arg(long)]
        state: String,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_EFFICIENCY)]
        eta: f64,
        #[arg(long, default_value_t = DEFAULT_TRANSMISSIVITY)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a density matrix from a quadrature CSV.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "center")]
        mode: Mode,
        /// `fixed:H`, `scott`, `leonhardt:t` or `leonhardt:mean`; unused in raw mode.
        #[arg(long, default_value = "scott")]
        strategy: WidthStrategy,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = DEFAULT_EFFICIENCY)]
        eta: f64,
        #[arg(long)]
        stop_gap: Option<f64>,
        /// Center bins on the lattice `(k + 1/2) h` instead of the sample minimum.
        #[arg(long)]
        centered: bool,
        /// Directory for `rho.csv` and `rho.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the mean photon number of a quadrature CSV.
    EstimateNbar {
        #[arg(long)]
        data: PathBuf,
    },
}

fn parse_state(s: &str) -> Result<StateKind> {
    let (kind, value) = s.split_once(':').with_context(|| format!("state `{s}` must look like cat:1.0, squeezed:0.75 or fock:4"))?;
    Ok(match kind {
        "cat" => StateKind::Cat { alpha: value.parse()? },
        "squeezed" | "squeezed_vacuum" => StateKind::SqueezedVacuum { variance_ratio: value.parse()?, angle: 0.0 },
        "fock" => StateKind::Fock { n: value.parse()? },
        other => bail!("unknown state kind `{other}`"),
    })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, seed, reps, out } => {
            let mut cfg = ExperimentConfig::from_json_file(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(r) = reps {
                cfg.repetitions = r;
            }
            cfg.validate()?;
            let dir = out.or_else(|| cfg.output_path.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let report = run_sweep(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit_report(&report, &dir)?;
            println!("{:<18} {:<9} {:>8} {:>10} {:>10} {:>10}", "strategy", "mode", "width", "fidelity", "std", "time_s");
            for s in &report.summaries {
                let width = s.width.map(|w| format!("{w:.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:<18} {:<9} {:>8} {:>10.6} {:>10.6} {:>10.4}",
                    s.strategy, s.mode, width, s.mean_fidelity, s.std_fidelity, s.mean_time_s
                );
            }
            println!("wrote {}", dir.display());
            if report.failed() > 0 {
                bail!("{} runs failed; see runs.csv", report.failed());
            }
            if report.non_converged() > 0 {
                eprintln!("{} runs did not converge", report.non_converged());
                return Ok(EXIT_NOT_CONVERGED);
            }
            Ok(0)
        }
        Command::Sample { state, t, m, samples, eta, tau, seed, out } => {
            let spec = StateSpec { kind: parse_state(&state)?, truncation: t, loss_transmissivity: tau };
            if let Some(w) = spec.prepare()?.warning {
                eprintln!("warning: {w}");
            }
            let ds = generate_dataset(&spec, &PhaseSchedule::new(m, samples)?, eta, seed)?;
            ds.write_csv(&out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(0)
        }
        Command::Reconstruct { data, mode, strategy, t, eta, stop_gap, centered, out } => {
            let ds = QuadratureDataset::read_csv(&data).with_context(|| format!("reading {}", data.display()))?;
            let mut config = MleConfig::default();
            if let Some(g) = stop_gap {
                config.stop_gap = g;
            }
            let anchor = if centered { BinAnchor::Centered } else { BinAnchor::SampleMin };
            let model = match mode.bin_mode() {
                None => raw_model(&ds, t, eta)?,
                Some(bin_mode) => {
                    let hists = build_histograms_anchored(&ds, &strategy, t, anchor)?;
                    println!("mean bin width {:.6}", mean_width(&hists));
                    build_bin_operator_set(&hists, bin_mode, t, eta)?.likelihood_model()?
                }
            };
            let result = reconstruct(&model, &config)?;
            println!("{}", serde_json::to_string_pretty(&result.metadata())?);
            println!("mean photon number {:.6}", result.rho_hat.mean_photon());
            if let Some(dir) = out {
                result.write(&dir, "rho")?;
                println!("wrote {}", dir.display());
            }
            Ok(if result.converged { 0 } else { EXIT_NOT_CONVERGED })
        }
        Command::EstimateNbar { data } => {
            let ds = QuadratureDataset::read_csv(&data).with_context(|| format!("reading {}", data.display()))?;
            println!("{:.6}", estimate_mean_photon(&ds)?);
            Ok(0)
        }
    }
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
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
