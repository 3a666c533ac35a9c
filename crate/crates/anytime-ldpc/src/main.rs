use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use anytime_ldpc::harness::{
    emit_control, emit_petd, load_meta, run_control, run_petd, ExperimentConfig, Scenario,
};
use anytime_ldpc::jfun::JTable;
use anytime_ldpc::pexit::{self, EvolutionOptions};
use anytime_ldpc::plant::PlantConfig;
use anytime_ldpc::protograph::ProtographSpec;

#[derive(Parser)]
#[command(name = "anytime-ldpc", about = "Anytime LDPC convolutional codes for control over noisy channels", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControlChannel {
    Awgn,
    Fading,
}

#[derive(Subcommand)]
enum Command {
    /// Lift the rate-1/2 coupled protograph and export the parity-check
    /// matrix as sparse triplets.
    Codegen {
        /// Lifting order.
        #[arg(long, default_value_t = 12)]
        r: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of coupled time steps in the exported matrix.
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SNR-evolution analysis: anytime exponents, delay-error bounds, and
    /// the stabilization threshold for the reference plant.
    Analyze {
        /// SNR points in dB.
        #[arg(long, value_delimiter = ',', default_value = "4.5,10,20")]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        /// Output directory.
        #[arg(long, default_value = "out/analyze")]
        out: PathBuf,
    },
    /// Monte Carlo delay-error profile of the streaming decoder on AWGN.
    Petd {
        /// JSON experiment config; defaults are used if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out/petd")]
        out: PathBuf,
    },
    /// Monte Carlo closed-loop control failure rates.
    Control {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ControlChannel::Awgn)]
        channel: ControlChannel,
        #[arg(long)]
        n_sensors: Option<usize>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        snr_db: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Emit per-step traces for this many trials.
        #[arg(long)]
        trace_trials: Option<u64>,
        #[arg(long, default_value = "out/control")]
        out: PathBuf,
    },
    /// Re-run an experiment exactly from an emitted meta.json.
    Replay {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long, default_value = "out/replay")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Codegen { r, seed, horizon, out } => {
            let code = ProtographSpec::coupled_rate_half().expand(horizon)?.lift(r, seed);
            match out {
                Some(path) => {
                    if let Some(dir) = path.parent() {
                        fs::create_dir_all(dir)?;
                    }
                    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
                    code.export_triplets(horizon, &mut f)?;
                    eprintln!(
                        "wrote {} ({} x {} parity-check matrix, rate {:.3})",
                        path.display(),
                        code.n() - code.k(),
                        code.n(),
                        code.rate()
                    );
                }
                None => {
                    let stdout = std::io::stdout();
                    code.export_triplets(horizon, &mut stdout.lock())?;
                }
            }
        }
        Command::Analyze { snr_db, horizon, out } => {
            analyze(&snr_db, horizon, &out)?;
        }
        Command::Petd { config, trials, snr_db, seed, out } => {
            let mut cfg = match config {
                Some(path) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
                None => ExperimentConfig::petd_default(),
            };
            if let Some(v) = trials {
                cfg.trials = v;
            }
            if let Some(v) = snr_db {
                cfg.snr_db = v;
            }
            if let Some(v) = seed {
                cfg.base_seed = v;
            }
            let estimates = run_petd(&cfg)?;
            emit_petd(&cfg, &estimates, &out)?;
            for est in &estimates {
                println!(
                    "snr {:.2} dB: beta_hat {:.4} +/- {:.4} (bound slope {:.4}, exponent {:.4})",
                    est.snr_db, est.beta_hat, est.beta_hat_se, est.theory_slope, est.beta_bar
                );
            }
            eprintln!("results in {}", out.display());
        }
        Command::Control {
            config,
            channel,
            n_sensors,
            trials,
            snr_db,
            seed,
            trace_trials,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
                None => match channel {
                    ControlChannel::Awgn => ExperimentConfig::control_awgn_default(),
                    ControlChannel::Fading => {
                        ExperimentConfig::control_fading_default(n_sensors.unwrap_or(1))
                    }
                },
            };
            if let Some(v) = n_sensors {
                cfg.n_sensors = v;
            }
            if let Some(v) = trials {
                cfg.trials = v;
            }
            if let Some(v) = snr_db {
                cfg.snr_db = v;
            }
            if let Some(v) = seed {
                cfg.base_seed = v;
            }
            if let Some(v) = trace_trials {
                cfg.trace_trials = v;
            }
            let results = run_control(&cfg)?;
            emit_control(&cfg, &results, &out)?;
            for p in &results.points {
                println!(
                    "snr {:.2} dB, {} sensor(s): p100 {:.4} [{:.4}, {:.4}] ({}/{} failures)",
                    p.snr_db, p.n_sensors, p.p100, p.wilson_lo, p.wilson_hi, p.failures, p.trials
                );
            }
            eprintln!("results in {}", out.display());
        }
        Command::Replay { meta, out } => {
            let cfg = load_meta(&meta)?;
            match cfg.scenario {
                Scenario::PetdAwgn => {
                    let estimates = run_petd(&cfg)?;
                    emit_petd(&cfg, &estimates, &out)?;
                }
                Scenario::ControlAwgn | Scenario::ControlFading => {
                    let results = run_control(&cfg)?;
                    emit_control(&cfg, &results, &out)?;
                }
            }
            eprintln!("replayed into {}", out.display());
        }
    }
    Ok(())
}

fn analyze(snr_db: &[f64], horizon: usize, out: &std::path::Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProtographSpec::coupled_rate_half();
    let proto = spec.expand(horizon)?;
    spec.validate()?;
    let gamma = proto.systematic_degree_profile().gamma;
    let plant = PlantConfig::reference();
    let threshold = pexit::stabilization_threshold(gamma, &plant.a)?;
    fs::create_dir_all(out)?;

    let mut summary = fs::File::create(out.join("analysis.csv"))?;
    writeln!(summary, "snr_db,beta_bar,beta_bar_closed_form,rho_star_db")?;
    let mut delays = fs::File::create(out.join("delays.csv"))?;
    writeln!(delays, "snr_db,d,min_output_snr,pe_bound")?;
    for &db in snr_db {
        let rho = anytime_ldpc::channel::db_to_linear(db);
        let profile = vec![rho; spec.n0 * horizon];
        let state = pexit::evolve(&proto, &profile, EvolutionOptions::default(), JTable::shared())?;
        let mins = state.min_systematic_output();
        let beta = pexit::beta_lower_bound(&mins);
        let closed_form = gamma * rho / 2.0;
        writeln!(summary, "{db},{},{closed_form},{}", beta.beta_bar, threshold.rho_star_db)?;
        for (d, bound) in pexit::pe_upper_bound(&mins, spec.k0, 1..=horizon) {
            writeln!(delays, "{db},{d},{},{bound:e}", mins[d - 1])?;
        }
    }
    println!(
        "stabilization threshold: instability measure {:.5}, required exponent {:.4}, {:.4} dB",
        threshold.rho_abs, threshold.beta_required, threshold.rho_star_db
    );
    eprintln!("results in {}", out.display());
    Ok(())
}
