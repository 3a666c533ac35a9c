//! Monte Carlo orchestration: seeded trial streams, the delay-error
//! estimator, closed-loop failure-rate estimation, slope fitting, and
//! CSV/JSON emission with enough metadata for exact replay.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    db_to_linear, demodulate_llr, draw_realization, modulate, ChannelConfig, ChannelError,
    ChannelMode,
};
use crate::codec::{CodecError, Decoder, Encoder};
use crate::jfun::JTable;
use crate::pexit::{self, EvolutionOptions, PexitError};
use crate::plant::{
    control_command, filter_chain, measure, step_plant, PlantConfig, PlantError,
};
use crate::protograph::{LiftedCode, ProtographError, ProtographSpec};
use crate::stats::{weighted_linear_fit, wilson_interval};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error("only {got} usable points for the slope fit (need {need}); widen trials or the delay range")]
    InsufficientEvents { got: usize, need: usize },
    #[error(transparent)]
    Protograph(#[from] ProtographError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Pexit(#[from] PexitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PetdAwgn,
    ControlAwgn,
    ControlFading,
}

fn default_protograph() -> ProtographSpec {
    ProtographSpec::coupled_rate_half()
}

fn default_trace_trials() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_protograph")]
    pub protograph: ProtographSpec,
    /// Lifting order; for control scenarios `r * k0` must equal the bits
    /// per quantized measurement.
    pub r: usize,
    pub code_seed: u64,
    pub snr_db: Vec<f64>,
    pub n_sensors: usize,
    /// Horizon T: steps per trial and decoder graph cap.
    pub horizon: usize,
    pub trials: u64,
    /// BP iteration budget per time step.
    pub bp_iterations: usize,
    pub base_seed: u64,
    /// Closed-loop failure threshold on the final estimate error norm.
    pub failure_threshold: f64,
    /// Delay range for the empirical slope fit.
    pub fit_d_min: usize,
    pub fit_d_max: usize,
    /// Minimum event count for a delay to enter the slope fit.
    pub min_fit_events: u64,
    #[serde(default = "PlantConfig::reference")]
    pub plant: PlantConfig,
    /// Emit a full trace CSV for this many initial trials.
    #[serde(default = "default_trace_trials")]
    pub trace_trials: u64,
}

impl ExperimentConfig {
    pub fn petd_default() -> Self {
        ExperimentConfig {
            scenario: Scenario::PetdAwgn,
            protograph: default_protograph(),
            r: 12,
            code_seed: 7,
            snr_db: vec![4.5],
            n_sensors: 1,
            horizon: 60,
            trials: 2000,
            bp_iterations: 50,
            base_seed: 2024,
            failure_threshold: 1e3,
            fit_d_min: 10,
            fit_d_max: 40,
            min_fit_events: 20,
            plant: PlantConfig::reference(),
            trace_trials: 0,
        }
    }

    pub fn control_awgn_default() -> Self {
        ExperimentConfig {
            scenario: Scenario::ControlAwgn,
            r: 18,
            snr_db: vec![4.5],
            horizon: 100,
            trials: 400,
            ..ExperimentConfig::petd_default()
        }
    }

    /// Fading operating point: a lighter code (r = 15, 5-bit quantizer,
    /// half the range) than the AWGN loop, placing closed-loop failures
    /// in the measurable range across 8-12 dB for one and two sensors.
    pub fn control_fading_default(n_sensors: usize) -> Self {
        let mut plant = PlantConfig::reference();
        plant.quantizer = crate::plant::Quantizer {
            bits_per_coord: 5,
            range: 16.0,
        };
        ExperimentConfig {
            scenario: Scenario::ControlFading,
            r: 15,
            snr_db: vec![8.0, 10.0, 12.0],
            n_sensors,
            horizon: 100,
            trials: 1000,
            plant,
            ..ExperimentConfig::petd_default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.protograph.validate()?;
        let bad = |msg: &str| Err(HarnessError::BadConfig(msg.into()));
        if self.trials == 0 {
            return bad("need at least one trial");
        }
        if self.horizon < 2 {
            return bad("horizon must be at least 2");
        }
        if self.snr_db.is_empty() {
            return bad("need at least one SNR point");
        }
        if self.r == 0 {
            return bad("lifting order must be positive");
        }
        match self.scenario {
            Scenario::PetdAwgn | Scenario::ControlAwgn => {
                if self.n_sensors != 1 {
                    return bad("AWGN scenarios are single-sensor");
                }
            }
            Scenario::ControlFading => {
                if self.n_sensors == 0 {
                    return bad("need at least one sensor");
                }
            }
        }
        if self.scenario != Scenario::PetdAwgn {
            self.plant.validate()?;
            let k = self.r * self.protograph.k0;
            if k != self.plant.bits_per_measurement() {
                return Err(HarnessError::BadConfig(format!(
                    "code carries {k} bits per step but a quantized measurement needs {}",
                    self.plant.bits_per_measurement()
                )));
            }
        }
        for &db in &self.snr_db {
            if !db.is_finite() {
                return bad("SNR must be finite");
            }
        }
        Ok(())
    }

    fn channel_config(&self, snr_db: f64) -> ChannelConfig {
        ChannelConfig {
            mode: match self.scenario {
                Scenario::ControlFading => ChannelMode::Rayleigh,
                _ => ChannelMode::Awgn,
            },
            snr: db_to_linear(snr_db),
            n_sensors: self.n_sensors,
        }
    }

    fn lift_code(&self) -> Result<LiftedCode, HarnessError> {
        Ok(self
            .protograph
            .expand(self.horizon)?
            .lift(self.r, self.code_seed))
    }
}

/// Per-trial RNG stream, independent of worker scheduling: one base seed,
/// one stream per (SNR point, trial) pair.
pub fn trial_rng(base_seed: u64, snr_index: usize, trial: u64) -> ChaCha12Rng {
    let mut rng =
        ChaCha12Rng::seed_from_u64(base_seed ^ (snr_index as u64).wrapping_mul(0x9E3779B97F4A7C15));
    rng.set_stream(trial.wrapping_add(1));
    rng
}

/// Pooled delay-error estimate at one SNR.
#[derive(Debug, Clone, Serialize)]
pub struct PetdEstimate {
    pub snr_db: f64,
    /// Pooling window over time steps, inclusive.
    pub t_window: (usize, usize),
    /// (trial, t) pairs pooled per delay.
    pub pooled_pairs: u64,
    /// `events[d-1]` counts oldest-error events at delay d.
    pub events: Vec<u64>,
    pub pe: Vec<f64>,
    /// Delay-error upper bound from the SNR-evolution analysis, aligned
    /// with `pe`.
    pub pe_bound: Vec<f64>,
    /// Negative log-slope of the empirical curve over the fitted delays;
    /// NaN when too few delays had enough events (see `require_fit`).
    pub beta_hat: f64,
    pub beta_hat_se: f64,
    pub fit_delays: Vec<usize>,
    /// Negative log-slope of the theoretical bound over the same window.
    pub theory_slope: f64,
    /// Exponent lower bound from the converged evolution state.
    pub beta_bar: f64,
}

impl PetdEstimate {
    /// The slope fit, or an error when fewer than three delays in the fit
    /// range accumulated enough events.
    pub fn require_fit(&self) -> Result<(f64, f64), HarnessError> {
        if self.fit_delays.len() >= 3 {
            Ok((self.beta_hat, self.beta_hat_se))
        } else {
            Err(HarnessError::InsufficientEvents {
                got: self.fit_delays.len(),
                need: 3,
            })
        }
    }
}

/// Encode/transmit/decode trials and bin the oldest-error delay at every
/// step in the tail window.
pub fn run_petd(cfg: &ExperimentConfig) -> Result<Vec<PetdEstimate>, HarnessError> {
    cfg.validate()?;
    if cfg.scenario != Scenario::PetdAwgn {
        return Err(HarnessError::BadConfig(
            "delay-error estimation runs on the AWGN scenario".into(),
        ));
    }
    let code = cfg.lift_code()?;
    let t_lo = cfg.horizon / 2;
    let t_hi = cfg.horizon;
    let mut out = Vec::new();
    for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
        let ch = cfg.channel_config(snr_db);
        let per_trial: Vec<Vec<u64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                petd_trial(cfg, &code, &ch, trial_rng(cfg.base_seed, snr_idx, trial), t_lo)
                    .expect("trial failed")
            })
            .collect();
        let mut events = vec![0u64; cfg.horizon];
        for tr in &per_trial {
            for (e, t) in events.iter_mut().zip(tr) {
                *e += t;
            }
        }
        let pooled_pairs = cfg.trials * (t_hi - t_lo + 1) as u64;
        let pe: Vec<f64> = events.iter().map(|&e| e as f64 / pooled_pairs as f64).collect();

        // theoretical bound and exponent at this SNR
        let proto = cfg.protograph.expand(cfg.horizon)?;
        let profile = vec![ch.snr; cfg.protograph.n0 * cfg.horizon];
        let state = pexit::evolve(&proto, &profile, EvolutionOptions::default(), JTable::shared())?;
        let mins = state.min_systematic_output();
        let beta = pexit::beta_lower_bound(&mins);
        let bound_curve = pexit::pe_upper_bound(&mins, cfg.protograph.k0, 1..=cfg.horizon);
        let pe_bound: Vec<f64> = bound_curve.iter().map(|&(_, b)| b).collect();
        let theory_pts: Vec<(f64, f64, f64)> = (cfg.fit_d_min..=cfg.fit_d_max.min(cfg.horizon))
            .map(|d| (d as f64, -mins[d - 1] / 2.0, 1.0))
            .collect();
        let theory_slope = -weighted_linear_fit(&theory_pts).slope;

        // empirical slope over delays with enough events
        let fit_delays: Vec<usize> = (cfg.fit_d_min..=cfg.fit_d_max.min(cfg.horizon))
            .filter(|&d| events[d - 1] >= cfg.min_fit_events)
            .collect();
        let (beta_hat, beta_hat_se) = if fit_delays.len() >= 3 {
            let pts: Vec<(f64, f64, f64)> = fit_delays
                .iter()
                .map(|&d| (d as f64, pe[d - 1].ln(), events[d - 1] as f64))
                .collect();
            let fit = weighted_linear_fit(&pts);
            (-fit.slope, fit.slope_se)
        } else {
            (f64::NAN, f64::NAN)
        };
        out.push(PetdEstimate {
            snr_db,
            t_window: (t_lo, t_hi),
            pooled_pairs,
            events,
            pe,
            pe_bound,
            beta_hat,
            beta_hat_se,
            fit_delays,
            theory_slope,
            beta_bar: beta.beta_bar,
        });
    }
    Ok(out)
}

fn petd_trial(
    cfg: &ExperimentConfig,
    code: &LiftedCode,
    ch: &ChannelConfig,
    mut rng: ChaCha12Rng,
    t_lo: usize,
) -> Result<Vec<u64>, HarnessError> {
    let mut enc = Encoder::new(code)?;
    let mut dec = Decoder::new(code);
    let mut truth: Vec<Vec<u8>> = Vec::with_capacity(cfg.horizon);
    let mut events = vec![0u64; cfg.horizon];
    let amp = ch.amplitude();
    for t in 1..=cfg.horizon {
        let q: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        let cw = enc.encode_step(&q)?;
        truth.push(q);
        let syms = modulate(&cw, amp);
        let real = draw_realization(ch, syms.len(), &mut rng);
        let received = crate::channel::transmit(&[syms], &real)?;
        let llrs = demodulate_llr(&received, &real, ch)?;
        dec.push(&llrs[0])?;
        let decoded = dec.iterate(cfg.bp_iterations);
        if t >= t_lo {
            let d = decoded.oldest_error_delay(&truth)?;
            if d >= 1 {
                events[d - 1] += 1;
            }
        }
    }
    Ok(events)
}

/// Closed-loop failure estimate at one SNR point.
#[derive(Debug, Clone, Serialize)]
pub struct P100Point {
    pub snr_db: f64,
    pub n_sensors: usize,
    pub trials: u64,
    pub failures: u64,
    pub p100: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub total_saturations: u64,
    pub total_empty_skips: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub err_norm: f64,
    pub saturations: u64,
    pub empty_skips: u64,
}

#[derive(Debug, Clone)]
pub struct ControlResults {
    pub points: Vec<P100Point>,
    /// Traces of the first `trace_trials` trials at the first SNR point.
    pub traces: Vec<Vec<TraceRow>>,
}

struct ControlTrialOutcome {
    failed: bool,
    saturations: u64,
    empty_skips: u64,
    trace: Option<Vec<TraceRow>>,
}

/// Full measure -> quantize -> encode -> channel -> decode -> filter ->
/// command loop, one failure verdict per trial.
pub fn run_control(cfg: &ExperimentConfig) -> Result<ControlResults, HarnessError> {
    cfg.validate()?;
    if cfg.scenario == Scenario::PetdAwgn {
        return Err(HarnessError::BadConfig(
            "control estimation needs a control scenario".into(),
        ));
    }
    let code = cfg.lift_code()?;
    let mut points = Vec::new();
    let mut traces = Vec::new();
    for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
        let ch = cfg.channel_config(snr_db);
        let outcomes: Vec<ControlTrialOutcome> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let with_trace = snr_idx == 0 && trial < cfg.trace_trials;
                control_trial(
                    cfg,
                    &code,
                    &ch,
                    trial_rng(cfg.base_seed, snr_idx, trial),
                    with_trace,
                )
                .expect("trial failed")
            })
            .collect();
        let failures = outcomes.iter().filter(|o| o.failed).count() as u64;
        let (lo, hi) = wilson_interval(failures, cfg.trials, 1.96);
        points.push(P100Point {
            snr_db,
            n_sensors: cfg.n_sensors,
            trials: cfg.trials,
            failures,
            p100: failures as f64 / cfg.trials as f64,
            wilson_lo: lo,
            wilson_hi: hi,
            total_saturations: outcomes.iter().map(|o| o.saturations).sum(),
            total_empty_skips: outcomes.iter().map(|o| o.empty_skips).sum(),
        });
        if snr_idx == 0 {
            traces = outcomes.into_iter().filter_map(|o| o.trace).collect();
        }
    }
    Ok(ControlResults { points, traces })
}

fn control_trial(
    cfg: &ExperimentConfig,
    code: &LiftedCode,
    ch: &ChannelConfig,
    mut rng: ChaCha12Rng,
    with_trace: bool,
) -> Result<ControlTrialOutcome, HarnessError> {
    let plant = &cfg.plant;
    let n_sensors = cfg.n_sensors;
    let amp = ch.amplitude();
    let mut encoders: Vec<Encoder> = (0..n_sensors)
        .map(|_| Encoder::new(code))
        .collect::<Result<_, _>>()?;
    let mut decoders: Vec<Decoder> = (0..n_sensors).map(|_| Decoder::new(code)).collect();
    let mut y_hats: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_sensors];
    let mut u_hist: Vec<Vec<f64>> = Vec::new();
    let mut x: Vec<f64> = plant
        .initial_box
        .lo
        .iter()
        .zip(&plant.initial_box.hi)
        .map(|(&l, &h)| rng.random_range(l..=h))
        .collect();
    let mut saturations = 0u64;
    let mut empty_skips = 0u64;
    let mut trace = with_trace.then(Vec::new);
    let mut last_err = f64::INFINITY;
    for t in 1..=cfg.horizon {
        // every sensor measures, quantizes, encodes
        let mut codewords = Vec::with_capacity(n_sensors);
        for enc in encoders.iter_mut() {
            let v: Vec<f64> = (0..plant.n_y())
                .map(|_| rng.random_range(-plant.delta..=plant.delta))
                .collect();
            let y = measure(plant, &x, &v);
            let (bits, sat) = plant.quantizer.quantize(&y);
            saturations += sat as u64;
            codewords.push(enc.encode_step(&bits)?);
        }
        // joint transmission and demodulation
        let symbols: Vec<Vec<f64>> = codewords.iter().map(|cw| modulate(cw, amp)).collect();
        let real = draw_realization(ch, code.n(), &mut rng);
        let received = crate::channel::transmit(&symbols, &real)?;
        let llrs = demodulate_llr(&received, &real, ch)?;
        // each sensor's decoder re-estimates all past measurements
        for (i, dec) in decoders.iter_mut().enumerate() {
            dec.push(&llrs[i])?;
            let decoded = dec.iterate(cfg.bp_iterations);
            y_hats[i] = decoded
                .blocks
                .iter()
                .map(|b| plant.quantizer.dequantize(b))
                .collect();
        }
        let filter = filter_chain(plant, &y_hats, &u_hist)?;
        empty_skips += filter.empty_skips as u64;
        let err_norm = x
            .iter()
            .zip(&filter.x_hat)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        last_err = err_norm;
        if let Some(trace) = trace.as_mut() {
            trace.push(TraceRow {
                t,
                x: x.clone(),
                x_hat: filter.x_hat.clone(),
                err_norm,
                saturations,
                empty_skips,
            });
        }
        if t < cfg.horizon {
            let u = control_command(plant, &filter.x_hat);
            let w: Vec<f64> = (0..plant.n_x())
                .map(|_| rng.random_range(-plant.omega..=plant.omega))
                .collect();
            let (nx, diverged) = step_plant(plant, &x, &u, &w);
            if diverged {
                return Ok(ControlTrialOutcome {
                    failed: true,
                    saturations,
                    empty_skips,
                    trace,
                });
            }
            x = nx;
            u_hist.push(u);
        }
    }
    Ok(ControlTrialOutcome {
        failed: !(last_err <= cfg.failure_threshold),
        saturations,
        empty_skips,
        trace,
    })
}

/// Write `petd.csv` plus `meta.json` for replay.
pub fn emit_petd(
    cfg: &ExperimentConfig,
    estimates: &[PetdEstimate],
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("petd.csv"))?;
    writeln!(f, "snr_db,t_window,d,events,trials,pe,pe_bound")?;
    for est in estimates {
        for d in 1..=est.events.len() {
            writeln!(
                f,
                "{},{}-{},{},{},{},{:e},{:e}",
                est.snr_db,
                est.t_window.0,
                est.t_window.1,
                d,
                est.events[d - 1],
                est.pooled_pairs,
                est.pe[d - 1],
                est.pe_bound[d - 1],
            )?;
        }
    }
    let mut f = fs::File::create(dir.join("slopes.csv"))?;
    writeln!(f, "snr_db,beta_hat,beta_hat_se,theory_slope,beta_bar")?;
    for est in estimates {
        writeln!(
            f,
            "{},{},{},{},{}",
            est.snr_db, est.beta_hat, est.beta_hat_se, est.theory_slope, est.beta_bar
        )?;
    }
    write_meta(cfg, dir)
}

/// Write `p100.csv`, any trial traces, and `meta.json`.
pub fn emit_control(
    cfg: &ExperimentConfig,
    results: &ControlResults,
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("p100.csv"))?;
    writeln!(
        f,
        "snr_db,n_sensors,trials,failures,p100,wilson_lo,wilson_hi,saturations,empty_skips"
    )?;
    for p in &results.points {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            p.snr_db,
            p.n_sensors,
            p.trials,
            p.failures,
            p.p100,
            p.wilson_lo,
            p.wilson_hi,
            p.total_saturations,
            p.total_empty_skips
        )?;
    }
    for (trial, trace) in results.traces.iter().enumerate() {
        let mut f = fs::File::create(dir.join(format!("trace_{trial}.csv")))?;
        let n_x = cfg.plant.n_x();
        let xs: Vec<String> = (1..=n_x).map(|i| format!("x{i}")).collect();
        let xh: Vec<String> = (1..=n_x).map(|i| format!("xhat{i}")).collect();
        writeln!(
            f,
            "t,{},{},err_norm,saturations,empty_skips",
            xs.join(","),
            xh.join(",")
        )?;
        for row in trace {
            let xs: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
            let xh: Vec<String> = row.x_hat.iter().map(|v| v.to_string()).collect();
            writeln!(
                f,
                "{},{},{},{},{},{}",
                row.t,
                xs.join(","),
                xh.join(","),
                row.err_norm,
                row.saturations,
                row.empty_skips
            )?;
        }
    }
    write_meta(cfg, dir)
}

fn write_meta(cfg: &ExperimentConfig, dir: &Path) -> Result<(), HarnessError> {
    let meta = serde_json::json!({
        "config": cfg,
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::BadConfig(e.to_string())
    }
}

/// Load the config back out of a `meta.json` written by `write_meta`.
pub fn load_meta(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = value
        .get("config")
        .ok_or_else(|| HarnessError::BadConfig("meta.json has no config field".into()))?;
    Ok(serde_json::from_value(cfg.clone())?)
}
