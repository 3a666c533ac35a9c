//! Causal systematic encoding and streaming sum-product decoding on the
//! lifted code graph. The decoder keeps its per-edge messages across time
//! steps (warm start) and re-estimates every past block after each step.

use thiserror::Error;

use crate::protograph::LiftedCode;

/// Saturation bound for all LLR values (channel, messages, posteriors).
pub const LLR_MAX: f64 = 30.0;

/// Message change below which an iteration sweep counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;

/// A check node re-runs its tanh products only when some input moved at
/// least this much since its last recompute. Coarser than
/// `CONVERGENCE_TOL` on purpose: LLRs live on a ±30 scale and decisions
/// are insensitive to 1e-4 staleness, while graph-wide sub-1e-4 churn
/// (typical on fading channels) would otherwise force full sweeps.
pub const SKIP_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("tail of Z0 is not invertible")]
    TailNotInvertible,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("code horizon {0} exhausted")]
    HorizonExceeded(usize),
}

/// Causal encoder: at step t it emits `[q_t | p_t]` where the parity block
/// cancels the syndrome accumulated from all earlier codeword blocks.
pub struct Encoder<'a> {
    code: &'a LiftedCode,
    /// Inverse of the lifted `Z0` tail permutation: parity column -> row.
    tail: Vec<usize>,
    /// Codeword blocks emitted so far, each n bits.
    history: Vec<Vec<u8>>,
}

impl<'a> Encoder<'a> {
    pub fn new(code: &'a LiftedCode) -> Result<Self, CodecError> {
        let tail = code.tail_permutation().ok_or(CodecError::TailNotInvertible)?;
        Ok(Encoder {
            code,
            tail,
            history: Vec::new(),
        })
    }

    /// Number of steps already encoded.
    pub fn t(&self) -> usize {
        self.history.len()
    }

    pub fn encode_step(&mut self, q: &[u8]) -> Result<Vec<u8>, CodecError> {
        let k = self.code.k();
        let n = self.code.n();
        let kbar = self.code.kbar();
        if q.len() != k {
            return Err(CodecError::LengthMismatch {
                expected: k,
                got: q.len(),
            });
        }
        let idx = self.history.len();
        if idx >= self.code.t {
            return Err(CodecError::HorizonExceeded(self.code.t));
        }
        // syndrome of block-row `idx` from past blocks and the new
        // systematic bits; parity columns of Z0 are excluded
        let mut s = vec![0u8; kbar];
        for (bj, block) in self.history.iter().enumerate() {
            let z = &self.code.blocks[idx - bj];
            for (lr, cols) in z.rows.iter().enumerate() {
                for &c in cols {
                    s[lr] ^= block[c as usize];
                }
            }
        }
        for (lr, cols) in self.code.blocks[0].rows.iter().enumerate() {
            for &c in cols {
                if (c as usize) < k {
                    s[lr] ^= q[c as usize];
                }
            }
        }
        // p[c] must equal the syndrome of the row holding the tail 1
        let mut cw = vec![0u8; n];
        cw[..k].copy_from_slice(q);
        for c in 0..kbar {
            cw[k + c] = s[self.tail[c]];
        }
        self.history.push(cw.clone());
        Ok(cw)
    }
}

/// Hard estimates of every systematic block at the current horizon.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub k: usize,
    /// `blocks[i]` estimates the step-`i+1` systematic block.
    pub blocks: Vec<Vec<u8>>,
    /// Flooding iterations actually spent (early stop on convergence).
    pub iterations: usize,
}

impl DecodeOutput {
    pub fn correctness_flags(&self, truth: &[Vec<u8>]) -> Result<Vec<bool>, CodecError> {
        if truth.len() != self.blocks.len() {
            return Err(CodecError::LengthMismatch {
                expected: self.blocks.len(),
                got: truth.len(),
            });
        }
        Ok(self
            .blocks
            .iter()
            .zip(truth)
            .map(|(a, b)| a == b)
            .collect())
    }

    /// Largest d such that the step t-d+1 block is wrong and every older
    /// block is correct; 0 when everything is correct.
    pub fn oldest_error_delay(&self, truth: &[Vec<u8>]) -> Result<usize, CodecError> {
        let flags = self.correctness_flags(truth)?;
        let t = flags.len();
        Ok(match flags.iter().position(|&ok| !ok) {
            Some(i) => t - i,
            None => 0,
        })
    }
}

/// Streaming flooding sum-product decoder. Edges are stored check-node
/// major, so CN updates sweep contiguous ranges; VN updates go through the
/// posterior (accumulate, then subtract the own edge).
pub struct Decoder<'a> {
    code: &'a LiftedCode,
    t: usize,
    /// Per-VN channel LLR, positive favoring bit 0.
    ch: Vec<f64>,
    post: Vec<f64>,
    /// Per-edge messages; `edge_vn[e]` is the VN of edge `e`.
    c2v: Vec<f64>,
    v2c: Vec<f64>,
    /// VN-to-CN values each CN last recomputed with; lets a CN whose
    /// inputs moved less than the convergence tolerance keep its cached
    /// outputs instead of redoing the tanh products.
    v2c_used: Vec<f64>,
    edge_vn: Vec<u32>,
    /// Edge range of CN i is `cn_start[i]..cn_start[i+1]`.
    cn_start: Vec<usize>,
    scratch: Vec<f64>,
    tanh_scratch: Vec<f64>,
}

impl<'a> Decoder<'a> {
    pub fn new(code: &'a LiftedCode) -> Self {
        Decoder {
            code,
            t: 0,
            ch: Vec::new(),
            post: Vec::new(),
            c2v: Vec::new(),
            v2c: Vec::new(),
            v2c_used: Vec::new(),
            edge_vn: Vec::new(),
            cn_start: vec![0],
            scratch: Vec::new(),
            tanh_scratch: Vec::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn num_cns(&self) -> usize {
        self.code.kbar() * self.t
    }

    pub fn num_vns(&self) -> usize {
        self.code.n() * self.t
    }

    pub fn posteriors(&self) -> &[f64] {
        &self.post
    }

    /// Extend the graph by one time step and record its channel LLRs.
    /// The new block-row's edges start with zero CN-to-VN messages; all
    /// existing messages are kept (warm start).
    pub fn push(&mut self, llr: &[f64]) -> Result<(), CodecError> {
        let n = self.code.n();
        if llr.len() != n {
            return Err(CodecError::LengthMismatch {
                expected: n,
                got: llr.len(),
            });
        }
        if self.t >= self.code.t {
            return Err(CodecError::HorizonExceeded(self.code.t));
        }
        let bi = self.t;
        self.ch.extend(llr.iter().map(|&v| v.clamp(-LLR_MAX, LLR_MAX)));
        self.post.resize(self.ch.len(), 0.0);
        for lr in 0..self.code.kbar() {
            for bj in 0..=bi {
                for &c in &self.code.blocks[bi - bj].rows[lr] {
                    self.edge_vn.push((bj * n + c as usize) as u32);
                    self.c2v.push(0.0);
                    self.v2c.push(0.0);
                    self.v2c_used.push(f64::INFINITY);
                }
            }
            self.cn_start.push(self.edge_vn.len());
        }
        self.t += 1;
        Ok(())
    }

    /// Run up to `budget` flooding iterations, stopping early once the
    /// largest CN-to-VN message change drops below `CONVERGENCE_TOL` or
    /// the hard decisions satisfy every parity check (further sweeps only
    /// reinforce a codeword-consistent state).
    pub fn iterate(&mut self, budget: usize) -> DecodeOutput {
        let mut used = 0;
        for _ in 0..budget {
            used += 1;
            if self.sweep() < CONVERGENCE_TOL {
                break;
            }
            if self.syndrome_clear() {
                break;
            }
        }
        self.refresh_posteriors();
        DecodeOutput {
            k: self.code.k(),
            blocks: self.hard_blocks(),
            iterations: used,
        }
    }

    /// One flooding iteration; returns the max CN-to-VN message change.
    fn sweep(&mut self) -> f64 {
        self.refresh_posteriors();
        for (e, &vn) in self.edge_vn.iter().enumerate() {
            self.v2c[e] = (self.post[vn as usize] - self.c2v[e]).clamp(-LLR_MAX, LLR_MAX);
        }
        let mut max_delta = 0.0f64;
        for cn in 0..self.num_cns() {
            let (lo, hi) = (self.cn_start[cn], self.cn_start[cn + 1]);
            let deg = hi - lo;
            if deg == 0 {
                continue;
            }
            if deg == 1 {
                let delta = self.c2v[lo].abs();
                self.c2v[lo] = 0.0;
                max_delta = max_delta.max(delta);
                continue;
            }
            // skip the tanh work when no input moved materially; the
            // cached outputs are then within the convergence tolerance
            let mut stale = false;
            for i in lo..hi {
                if (self.v2c[i] - self.v2c_used[i]).abs() >= SKIP_TOL {
                    stale = true;
                    break;
                }
            }
            if !stale {
                continue;
            }
            self.v2c_used[lo..hi].copy_from_slice(&self.v2c[lo..hi]);
            // leave-one-out tanh products via a suffix pass then a running
            // prefix; scratch[i] = product of tanh(v2c/2) over edges > i
            self.scratch.clear();
            self.scratch.resize(deg, 1.0);
            self.tanh_scratch.clear();
            self.tanh_scratch
                .extend((lo..hi).map(|i| (self.v2c[i] / 2.0).tanh()));
            let mut acc = 1.0;
            for i in (1..deg).rev() {
                acc *= self.tanh_scratch[i];
                self.scratch[i - 1] = acc;
            }
            let mut prefix = 1.0;
            for i in 0..deg {
                let others = prefix * self.scratch[i];
                let msg = (2.0 * others.atanh()).clamp(-LLR_MAX, LLR_MAX);
                let delta = (msg - self.c2v[lo + i]).abs();
                if delta > max_delta {
                    max_delta = delta;
                }
                self.c2v[lo + i] = msg;
                prefix *= self.tanh_scratch[i];
            }
        }
        max_delta
    }

    /// Whether the current hard decisions satisfy every check.
    fn syndrome_clear(&mut self) -> bool {
        self.refresh_posteriors();
        for cn in 0..self.num_cns() {
            let (lo, hi) = (self.cn_start[cn], self.cn_start[cn + 1]);
            let mut parity = 0u8;
            for e in lo..hi {
                parity ^= (self.post[self.edge_vn[e] as usize] < 0.0) as u8;
            }
            if parity != 0 {
                return false;
            }
        }
        true
    }

    fn refresh_posteriors(&mut self) {
        self.post.copy_from_slice(&self.ch);
        for (e, &vn) in self.edge_vn.iter().enumerate() {
            self.post[vn as usize] += self.c2v[e];
        }
        for p in &mut self.post {
            *p = p.clamp(-LLR_MAX, LLR_MAX);
        }
    }

    /// Hard decisions for the systematic part of every block.
    /// LLR >= 0 decides bit 0.
    fn hard_blocks(&self) -> Vec<Vec<u8>> {
        let n = self.code.n();
        let k = self.code.k();
        (0..self.t)
            .map(|b| {
                (0..k)
                    .map(|i| u8::from(self.post[b * n + i] < 0.0))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protograph::ProtographSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn code(t: usize, r: usize, seed: u64) -> LiftedCode {
        ProtographSpec::coupled_rate_half()
            .expand(t)
            .unwrap()
            .lift(r, seed)
    }

    /// Channel LLRs for a noiseless transmission: saturated, correct sign.
    fn noiseless_llrs(cw: &[u8]) -> Vec<f64> {
        cw.iter()
            .map(|&b| if b == 0 { LLR_MAX } else { -LLR_MAX })
            .collect()
    }

    /// Gaussian-model channel LLRs at linear SNR rho: mean 2*rho*sign,
    /// variance 4*rho, matching a matched-filter BPSK receiver.
    fn awgn_llrs(cw: &[u8], rho: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
        cw.iter()
            .map(|&b| {
                let sign = if b == 0 { 1.0 } else { -1.0 };
                let g: f64 = rng.sample(StandardNormal);
                2.0 * rho * sign + (4.0 * rho).sqrt() * g
            })
            .collect()
    }

    #[test]
    fn unit_lift_parities_are_cumulative_xor() {
        let code = code(3, 1, 0);
        let mut enc = Encoder::new(&code).unwrap();
        let mut out = Vec::new();
        for q in [1u8, 0, 1] {
            out.push(enc.encode_step(&[q]).unwrap());
        }
        assert_eq!(out, vec![vec![1, 1], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn all_zero_input_encodes_to_all_zero() {
        let code = code(5, 6, 1);
        let mut enc = Encoder::new(&code).unwrap();
        for _ in 0..5 {
            let cw = enc.encode_step(&vec![0u8; code.k()]).unwrap();
            assert!(cw.iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn random_streams_satisfy_the_parity_checks() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for seed in 0..5 {
            let code = code(20, 4, seed);
            let mut enc = Encoder::new(&code).unwrap();
            let mut stream = Vec::new();
            for _ in 0..20 {
                let q: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
                stream.extend(enc.encode_step(&q).unwrap());
            }
            // independent dense GF(2) oracle
            let syndrome = code.full_matrix(20).mul_vec(&stream);
            assert!(syndrome.iter().all(|&s| s == 0), "seed {seed}");
        }
    }

    #[test]
    fn encoder_rejects_bad_lengths_and_exhausted_horizon() {
        let code = code(2, 3, 0);
        let mut enc = Encoder::new(&code).unwrap();
        assert!(matches!(
            enc.encode_step(&[0]),
            Err(CodecError::LengthMismatch { .. })
        ));
        for _ in 0..2 {
            enc.encode_step(&vec![0u8; code.k()]).unwrap();
        }
        assert!(matches!(
            enc.encode_step(&vec![0u8; code.k()]),
            Err(CodecError::HorizonExceeded(2))
        ));
    }

    #[test]
    fn graph_dimensions_after_first_push() {
        let code = code(3, 12, 2);
        let mut dec = Decoder::new(&code);
        dec.push(&vec![0.0; code.n()]).unwrap();
        assert_eq!(dec.num_cns(), 12); // kbar0 * r
        assert_eq!(dec.num_vns(), 24); // n0 * r
    }

    #[test]
    fn noiseless_stream_decodes_exactly_at_every_step() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let code = code(10, 8, 7);
        let mut enc = Encoder::new(&code).unwrap();
        let mut dec = Decoder::new(&code);
        let mut truth = Vec::new();
        for _ in 0..10 {
            let q: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
            let cw = enc.encode_step(&q).unwrap();
            truth.push(q);
            dec.push(&noiseless_llrs(&cw)).unwrap();
            let out = dec.iterate(1);
            assert_eq!(out.oldest_error_delay(&truth).unwrap(), 0);
        }
    }

    #[test]
    fn decoding_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let code = code(6, 6, 9);
        let mut enc = Encoder::new(&code).unwrap();
        let llrs: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let q: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
                let cw = enc.encode_step(&q).unwrap();
                awgn_llrs(&cw, 1.5, &mut rng)
            })
            .collect();
        let run = || {
            let mut dec = Decoder::new(&code);
            let mut last = None;
            for l in &llrs {
                dec.push(l).unwrap();
                last = Some(dec.iterate(30));
            }
            (last.unwrap().blocks, dec.posteriors().to_vec())
        };
        let (b1, p1) = run();
        let (b2, p2) = run();
        assert_eq!(b1, b2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn single_flipped_bit_is_corrected() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for trial in 0..10 {
            let code = code(20, 12, 100 + trial);
            let mut enc = Encoder::new(&code).unwrap();
            let mut dec = Decoder::new(&code);
            let mut truth = Vec::new();
            let flip_step = rng.random_range(0..20usize);
            let flip_pos = rng.random_range(0..code.n());
            for step in 0..20 {
                let q: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
                let cw = enc.encode_step(&q).unwrap();
                truth.push(q);
                let mut llr = noiseless_llrs(&cw);
                if step == flip_step {
                    // wrong sign, moderate confidence
                    llr[flip_pos] = -llr[flip_pos].signum() * 10.0;
                }
                dec.push(&llr).unwrap();
                dec.iterate(20);
            }
            let out = dec.iterate(20);
            assert_eq!(out.oldest_error_delay(&truth).unwrap(), 0, "trial {trial}");
        }
    }

    #[test]
    fn oldest_error_delay_examples() {
        let out = DecodeOutput {
            k: 1,
            blocks: (0..10).map(|i| vec![u8::from(i == 2 || i == 6)]).collect(),
            iterations: 0,
        };
        let zeros: Vec<Vec<u8>> = vec![vec![0]; 10];
        // blocks 3 and 7 (1-based) wrong at t=10 -> oldest is 3, d = 8
        assert_eq!(out.oldest_error_delay(&zeros).unwrap(), 8);

        let all_ok = DecodeOutput {
            k: 1,
            blocks: zeros.clone(),
            iterations: 0,
        };
        assert_eq!(all_ok.oldest_error_delay(&zeros).unwrap(), 0);

        let last_wrong = DecodeOutput {
            k: 1,
            blocks: (0..10).map(|i| vec![u8::from(i == 9)]).collect(),
            iterations: 0,
        };
        assert_eq!(last_wrong.oldest_error_delay(&zeros).unwrap(), 1);
    }

    #[test]
    fn warm_start_matches_batch_decoding_at_convergence() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let code = code(6, 4, 17);
        let mut agree = 0;
        let trials = 100;
        for _ in 0..trials {
            let mut enc = Encoder::new(&code).unwrap();
            let llrs: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    let q: Vec<u8> =
                        (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
                    let cw = enc.encode_step(&q).unwrap();
                    awgn_llrs(&cw, 2.0, &mut rng)
                })
                .collect();
            let mut warm = Decoder::new(&code);
            let mut warm_out = None;
            for l in &llrs {
                warm.push(l).unwrap();
                warm_out = Some(warm.iterate(500));
            }
            let mut batch = Decoder::new(&code);
            for l in &llrs {
                batch.push(l).unwrap();
            }
            let batch_out = batch.iterate(3000);
            if warm_out.unwrap().blocks == batch_out.blocks {
                agree += 1;
            }
        }
        // both schedules reach the same fixed point on almost all trials
        assert!(agree >= 98, "only {agree}/{trials} agreed");
    }

    #[test]
    fn decoder_rejects_bad_push_lengths() {
        let code = code(2, 3, 0);
        let mut dec = Decoder::new(&code);
        assert!(matches!(
            dec.push(&[0.0]),
            Err(CodecError::LengthMismatch { .. })
        ));
    }
}
