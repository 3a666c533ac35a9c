//! BPSK modulation, AWGN and per-symbol Rayleigh fading with N sensors
//! transmitting simultaneously to N receive antennas, and exact soft
//! demodulation (matched filter for one sensor, joint marginalization over
//! all transmit hypotheses otherwise).
//!
//! Conventions: symbols are real antipodal with per-sensor amplitude
//! `sqrt(snr/N)`, so total transmit power is `snr` regardless of N. Noise
//! is complex Gaussian with unit variance per real dimension. Only the real
//! part carries signal, so a single-sensor AWGN link yields channel LLRs
//! with mean `2*snr` and variance `4*snr` — the Gaussian LLR model the
//! SNR-evolution analysis assumes.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Joint demodulation enumerates `2^N` hypotheses per symbol; refuse
/// configurations where that table stops being small.
pub const MAX_SENSORS: usize = 6;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel config: {0}")]
    BadConfig(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{0} sensors exceed the joint-demodulation limit of {MAX_SENSORS}")]
    HypothesisOverflow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Awgn,
    Rayleigh,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    /// Linear SNR: exact for AWGN, mean of the per-symbol exponential SNR
    /// for Rayleigh.
    pub snr: f64,
    pub n_sensors: usize,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

impl ChannelConfig {
    pub fn awgn_db(snr_db: f64) -> Self {
        ChannelConfig {
            mode: ChannelMode::Awgn,
            snr: db_to_linear(snr_db),
            n_sensors: 1,
        }
    }

    pub fn rayleigh_db(snr_db: f64, n_sensors: usize) -> Self {
        ChannelConfig {
            mode: ChannelMode::Rayleigh,
            snr: db_to_linear(snr_db),
            n_sensors,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.snr > 0.0) {
            return Err(ChannelError::BadConfig(format!(
                "SNR must be positive, got {}",
                self.snr
            )));
        }
        if self.n_sensors == 0 {
            return Err(ChannelError::BadConfig("need at least one sensor".into()));
        }
        if self.mode == ChannelMode::Awgn && self.n_sensors != 1 {
            return Err(ChannelError::BadConfig(
                "AWGN mode is single-sensor only".into(),
            ));
        }
        if self.n_sensors > MAX_SENSORS {
            return Err(ChannelError::HypothesisOverflow(self.n_sensors));
        }
        Ok(())
    }

    /// Per-sensor symbol amplitude, folding the 1/N power split.
    pub fn amplitude(&self) -> f64 {
        (self.snr / self.n_sensors as f64).sqrt()
    }
}

/// One drawn channel use: gains for every (antenna, sensor, symbol) triple
/// and noise for every (antenna, symbol) pair.
#[derive(Debug, Clone)]
pub struct Realization {
    pub n_sensors: usize,
    pub m: usize,
    /// `gains[(j*n + i)*m + s]`: antenna j, sensor i, symbol s.
    pub gains: Vec<Complex64>,
    /// `noise[j*m + s]`: antenna j, symbol s.
    pub noise: Vec<Complex64>,
}

impl Realization {
    pub fn gain(&self, antenna: usize, sensor: usize, sym: usize) -> Complex64 {
        self.gains[(antenna * self.n_sensors + sensor) * self.m + sym]
    }
}

/// Draw gains and noise for `m` symbol slots. AWGN gains are unity;
/// Rayleigh gains are i.i.d. complex Gaussian with unit mean power. Noise
/// is complex with unit variance per real dimension.
pub fn draw_realization<R: Rng>(cfg: &ChannelConfig, m: usize, rng: &mut R) -> Realization {
    let n = cfg.n_sensors;
    let gains = match cfg.mode {
        ChannelMode::Awgn => vec![Complex64::new(1.0, 0.0); n * n * m],
        ChannelMode::Rayleigh => {
            let scale = 0.5f64.sqrt(); // per-dimension std for E|h|^2 = 1
            (0..n * n * m)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * scale, im * scale)
                })
                .collect()
        }
    };
    let noise = (0..n * m)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    Realization {
        n_sensors: n,
        m,
        gains,
        noise,
    }
}

/// Antipodal mapping: bit 0 -> +amplitude, bit 1 -> -amplitude.
pub fn modulate(bits: &[u8], amplitude: f64) -> Vec<f64> {
    bits.iter()
        .map(|&b| if b & 1 == 0 { amplitude } else { -amplitude })
        .collect()
}

/// Superimpose all sensors' symbols through the channel and add noise:
/// `r_j = sum_i h_{ji} s_i + z_j` per symbol slot.
pub fn transmit(
    symbols: &[Vec<f64>],
    real: &Realization,
) -> Result<Vec<Vec<Complex64>>, ChannelError> {
    let n = real.n_sensors;
    if symbols.len() != n {
        return Err(ChannelError::LengthMismatch {
            expected: n,
            got: symbols.len(),
        });
    }
    for s in symbols {
        if s.len() != real.m {
            return Err(ChannelError::LengthMismatch {
                expected: real.m,
                got: s.len(),
            });
        }
    }
    Ok((0..n)
        .map(|j| {
            (0..real.m)
                .map(|sym| {
                    let mut r = real.noise[j * real.m + sym];
                    for (i, s) in symbols.iter().enumerate() {
                        r += real.gain(j, i, sym) * s[sym];
                    }
                    r
                })
                .collect()
        })
        .collect())
}

/// Exact per-bit LLRs, one vector per sensor, positive favoring bit 0.
///
/// One sensor: matched filter `2a * Re(conj(h) r)`. Several sensors: per
/// symbol slot, marginalize over all `2^N` joint sign hypotheses with the
/// Gaussian metric `-|r - H s|^2 / 2`, in log-sum-exp form.
pub fn demodulate_llr(
    received: &[Vec<Complex64>],
    real: &Realization,
    cfg: &ChannelConfig,
) -> Result<Vec<Vec<f64>>, ChannelError> {
    cfg.validate()?;
    let n = cfg.n_sensors;
    if received.len() != n {
        return Err(ChannelError::LengthMismatch {
            expected: n,
            got: received.len(),
        });
    }
    for r in received {
        if r.len() != real.m {
            return Err(ChannelError::LengthMismatch {
                expected: real.m,
                got: r.len(),
            });
        }
    }
    let a = cfg.amplitude();
    if n == 1 {
        let llrs = (0..real.m)
            .map(|sym| 2.0 * a * (real.gain(0, 0, sym).conj() * received[0][sym]).re)
            .collect();
        return Ok(vec![llrs]);
    }
    let mut out = vec![vec![0.0; real.m]; n];
    let mut metrics = vec![0.0f64; 1 << n];
    for sym in 0..real.m {
        for (hyp, metric) in metrics.iter_mut().enumerate() {
            let mut m2 = 0.0;
            for j in 0..n {
                let mut pred = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    // hypothesis bit 0 -> symbol +a
                    let sign = if hyp >> i & 1 == 0 { a } else { -a };
                    pred += real.gain(j, i, sym) * sign;
                }
                m2 += (received[j][sym] - pred).norm_sqr();
            }
            *metric = -m2 / 2.0;
        }
        for i in 0..n {
            let plus = logsumexp(metrics.iter().enumerate().filter_map(|(h, &m)| {
                (h >> i & 1 == 0).then_some(m)
            }));
            let minus = logsumexp(metrics.iter().enumerate().filter_map(|(h, &m)| {
                (h >> i & 1 == 1).then_some(m)
            }));
            out[i][sym] = plus - minus;
        }
    }
    Ok(out)
}

fn logsumexp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}
