//! Protograph definition, time expansion into the block-Toeplitz
//! lower-triangular adjacency, lifting to a sparse binary parity-check
//! matrix, and extraction of the systematic degree-growth rate.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::BitMatrix;
use crate::stats::linear_fit;

#[derive(Debug, Error)]
pub enum ProtographError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("protograph is not in systematic form: {0}")]
    NotSystematicForm(String),
    #[error("P0 is rank deficient over GF(2)")]
    RankDeficient,
    #[error("horizon must be at least 1")]
    HorizonZero,
}

/// Small dense nonnegative-integer matrix, row major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u32>>", into = "Vec<Vec<u32>>")]
pub struct IntMat {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl IntMat {
    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self, ProtographError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(ProtographError::DimensionMismatch("empty matrix".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ProtographError::DimensionMismatch(
                "ragged rows in matrix".into(),
            ));
        }
        Ok(IntMat {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMat {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v;
    }
}

impl TryFrom<Vec<Vec<u32>>> for IntMat {
    type Error = ProtographError;
    fn try_from(rows: Vec<Vec<u32>>) -> Result<Self, Self::Error> {
        IntMat::from_rows(rows)
    }
}

impl From<IntMat> for Vec<Vec<u32>> {
    fn from(m: IntMat) -> Self {
        (0..m.rows)
            .map(|r| m.data[r * m.cols..(r + 1) * m.cols].to_vec())
            .collect()
    }
}

/// How blocks beyond the explicit list are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// `P_tau` repeats the last explicit block for all later `tau`.
    RepeatLast,
    /// `P_tau` is all-zero beyond the explicit list (finite memory).
    Zero,
}

/// A systematic convolutional protograph: `P_0 = [P_{0,p} | I]`,
/// `P_tau = [P_{tau,p} | 0]` for `tau >= 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtographSpec {
    pub n0: usize,
    pub k0: usize,
    /// Explicit blocks `P_0, P_1, ...`; each is `(n0-k0) x n0`.
    pub blocks: Vec<IntMat>,
    pub tail: TailRule,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub kbar0: usize,
    pub rate: f64,
    pub p0_rank: usize,
    /// True when no coupling block touches the systematic columns, so the
    /// minimum systematic degree cannot grow with delay.
    pub zero_systematic_growth: bool,
}

impl ProtographSpec {
    /// The rate-1/2 code with `P_0 = [1 | 1]` and `P_tau = [1 | 0]` for all
    /// later steps, which has unit degree growth.
    pub fn coupled_rate_half() -> Self {
        ProtographSpec {
            n0: 2,
            k0: 1,
            blocks: vec![
                IntMat::from_rows(vec![vec![1, 1]]).unwrap(),
                IntMat::from_rows(vec![vec![1, 0]]).unwrap(),
            ],
            tail: TailRule::RepeatLast,
        }
    }

    pub fn kbar0(&self) -> usize {
        self.n0 - self.k0
    }

    pub fn rate(&self) -> f64 {
        self.k0 as f64 / self.n0 as f64
    }

    /// Block `P_tau`, applying the tail rule beyond the explicit list.
    pub fn block(&self, tau: usize) -> IntMat {
        if tau < self.blocks.len() {
            return self.blocks[tau].clone();
        }
        match self.tail {
            TailRule::RepeatLast => self.blocks.last().unwrap().clone(),
            TailRule::Zero => IntMat::zeros(self.kbar0(), self.n0),
        }
    }

    pub fn validate(&self) -> Result<ValidationReport, ProtographError> {
        if self.k0 == 0 || self.n0 <= self.k0 {
            return Err(ProtographError::DimensionMismatch(format!(
                "need 0 < k0 < n0, got k0={} n0={}",
                self.k0, self.n0
            )));
        }
        if self.blocks.is_empty() {
            return Err(ProtographError::DimensionMismatch("no blocks".into()));
        }
        let kbar0 = self.kbar0();
        for (tau, b) in self.blocks.iter().enumerate() {
            if b.rows() != kbar0 || b.cols() != self.n0 {
                return Err(ProtographError::DimensionMismatch(format!(
                    "block {tau} is {}x{}, expected {kbar0}x{}",
                    b.rows(),
                    b.cols(),
                    self.n0
                )));
            }
        }
        // tail sub-blocks: identity in P0, zero afterwards
        let p0 = &self.blocks[0];
        for r in 0..kbar0 {
            for c in 0..kbar0 {
                let want = u32::from(r == c);
                if p0.get(r, self.k0 + c) != want {
                    return Err(ProtographError::NotSystematicForm(format!(
                        "P0 tail entry ({r},{c}) is {}, expected {want}",
                        p0.get(r, self.k0 + c)
                    )));
                }
            }
        }
        for (tau, b) in self.blocks.iter().enumerate().skip(1) {
            for r in 0..kbar0 {
                for c in 0..kbar0 {
                    if b.get(r, self.k0 + c) != 0 {
                        return Err(ProtographError::NotSystematicForm(format!(
                            "P{tau} tail entry ({r},{c}) is nonzero"
                        )));
                    }
                }
            }
        }
        // full rank of P0 over GF(2); the identity tail guarantees it, but a
        // hand-edited spec file can violate the invariant
        let mut m = BitMatrix::zeros(kbar0, self.n0);
        for r in 0..kbar0 {
            for c in 0..self.n0 {
                m.set(r, c, p0.get(r, c) % 2 == 1);
            }
        }
        let p0_rank = m.rank();
        if p0_rank < kbar0 {
            return Err(ProtographError::RankDeficient);
        }
        let zero_systematic_growth = match self.tail {
            TailRule::Zero if self.blocks.len() == 1 => true,
            _ => {
                let coupled = |b: &IntMat| (0..self.kbar0()).any(|r| (0..self.k0).any(|c| b.get(r, c) > 0));
                !self.blocks.iter().skip(1).any(coupled)
                    && !(self.tail == TailRule::RepeatLast
                        && self.blocks.len() > 1
                        && coupled(self.blocks.last().unwrap()))
            }
        };
        Ok(ValidationReport {
            kbar0,
            rate: self.rate(),
            p0_rank,
            zero_systematic_growth,
        })
    }

    /// Time-expand to horizon `t` (block-Toeplitz, lower triangular).
    pub fn expand(&self, t: usize) -> Result<TimeExpandedProtograph, ProtographError> {
        if t == 0 {
            return Err(ProtographError::HorizonZero);
        }
        self.validate()?;
        let kbar0 = self.kbar0();
        let n_cn = kbar0 * t;
        let n_vn = self.n0 * t;
        let mut adjacency = IntMat::zeros(n_cn, n_vn);
        let blocks: Vec<IntMat> = (0..t).map(|tau| self.block(tau)).collect();
        for bi in 0..t {
            for bj in 0..=bi {
                let p = &blocks[bi - bj];
                for r in 0..kbar0 {
                    for c in 0..self.n0 {
                        let v = p.get(r, c);
                        if v > 0 {
                            adjacency.set(bi * kbar0 + r, bj * self.n0 + c, v);
                        }
                    }
                }
            }
        }
        let mut cn_neighbors = vec![Vec::new(); n_cn];
        let mut vn_neighbors = vec![Vec::new(); n_vn];
        for i in 0..n_cn {
            for j in 0..n_vn {
                let m = adjacency.get(i, j);
                if m > 0 {
                    cn_neighbors[i].push((j, m));
                    vn_neighbors[j].push((i, m));
                }
            }
        }
        Ok(TimeExpandedProtograph {
            n0: self.n0,
            k0: self.k0,
            t,
            adjacency,
            cn_neighbors,
            vn_neighbors,
        })
    }
}

/// Adjacency of the protograph expanded to horizon `t`, with neighbor
/// lists carrying edge multiplicities.
#[derive(Debug, Clone)]
pub struct TimeExpandedProtograph {
    pub n0: usize,
    pub k0: usize,
    pub t: usize,
    pub adjacency: IntMat,
    /// Per CN: `(vn, multiplicity)` pairs in column order.
    pub cn_neighbors: Vec<Vec<(usize, u32)>>,
    /// Per VN: `(cn, multiplicity)` pairs in row order.
    pub vn_neighbors: Vec<Vec<(usize, u32)>>,
}

#[derive(Debug, Clone)]
pub struct DegreeProfile {
    /// `min_degree[d-1]` is the minimum systematic VN degree at delay `d`.
    pub min_degree: Vec<u32>,
    /// Least-squares slope of the minimum degree over the tail half of delays.
    pub gamma: f64,
    pub r_squared: f64,
    /// True when the tail-half fit is close enough to linear (R^2 >= 0.99).
    pub linear_growth: bool,
}

impl TimeExpandedProtograph {
    pub fn kbar0(&self) -> usize {
        self.n0 - self.k0
    }

    /// Total VN degree counting multiplicity.
    pub fn vn_degree(&self, j: usize) -> u32 {
        self.vn_neighbors[j].iter().map(|&(_, m)| m).sum()
    }

    /// Whether protograph column `j` is a systematic position.
    pub fn is_systematic(&self, j: usize) -> bool {
        j % self.n0 < self.k0
    }

    /// Minimum systematic VN degree per delay and the fitted growth rate.
    ///
    /// Delay `d` looks at the `k0` systematic VNs of time step `t-d+1`. The
    /// growth rate is the least-squares slope over delays in `[t/2, t-1]`,
    /// which suppresses the `o(d)` transients near both ends.
    pub fn systematic_degree_profile(&self) -> DegreeProfile {
        assert!(self.t >= 2, "degree profile needs horizon >= 2");
        let min_degree: Vec<u32> = (1..=self.t)
            .map(|d| {
                let block = self.t - d;
                (0..self.k0)
                    .map(|i| self.vn_degree(block * self.n0 + i))
                    .min()
                    .unwrap()
            })
            .collect();
        let lo = (self.t / 2).max(1);
        let hi = (self.t - 1).max(lo);
        let pts: Vec<(f64, f64)> = (lo..=hi)
            .map(|d| (d as f64, min_degree[d - 1] as f64))
            .collect();
        let fit = linear_fit(&pts);
        DegreeProfile {
            min_degree,
            gamma: fit.slope,
            r_squared: fit.r_squared,
            linear_growth: fit.r_squared >= 0.99 || fit.slope.abs() < 1e-12,
        }
    }

    /// Lift to order `r`: every entry `b` becomes the mod-2 sum of `b`
    /// independent uniformly random `r x r` permutation matrices, drawn once
    /// per distinct `P_tau` block so the lifted matrix stays block-Toeplitz.
    pub fn lift(&self, r: usize, seed: u64) -> LiftedCode {
        assert!(r >= 1, "lifting order must be at least 1");
        let kbar0 = self.kbar0();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..r).collect();
        let mut blocks = Vec::with_capacity(self.t);
        for tau in 0..self.t {
            // P_tau sits in block-row tau of the first block-column
            let mut rows: Vec<Vec<u32>> = vec![Vec::new(); kbar0 * r];
            for pr in 0..kbar0 {
                for pc in 0..self.n0 {
                    let b = self.adjacency.get(tau * kbar0 + pr, pc);
                    if b == 0 {
                        continue;
                    }
                    // XOR of b permutations, as a dense r x r toggle grid
                    let mut cell = vec![false; r * r];
                    for _ in 0..b {
                        perm.shuffle(&mut rng);
                        for (i, &p) in perm.iter().enumerate() {
                            cell[i * r + p] ^= true;
                        }
                    }
                    for i in 0..r {
                        for p in 0..r {
                            if cell[i * r + p] {
                                rows[pr * r + i].push((pc * r + p) as u32);
                            }
                        }
                    }
                }
            }
            for row in &mut rows {
                row.sort_unstable();
            }
            blocks.push(LiftedBlock { rows });
        }
        LiftedCode {
            r,
            t: self.t,
            n0: self.n0,
            k0: self.k0,
            seed,
            blocks,
        }
    }
}

/// One lifted `(n-k) x n` block `Z_tau`, rows as sorted column lists.
#[derive(Debug, Clone)]
pub struct LiftedBlock {
    pub rows: Vec<Vec<u32>>,
}

/// The lifted sparse binary parity-check matrix, stored as its Toeplitz
/// generator blocks `Z_0 .. Z_{t-1}`.
#[derive(Debug, Clone)]
pub struct LiftedCode {
    pub r: usize,
    pub t: usize,
    pub n0: usize,
    pub k0: usize,
    pub seed: u64,
    pub blocks: Vec<LiftedBlock>,
}

impl LiftedCode {
    pub fn n(&self) -> usize {
        self.r * self.n0
    }

    pub fn k(&self) -> usize {
        self.r * self.k0
    }

    pub fn kbar(&self) -> usize {
        self.n() - self.k()
    }

    pub fn rate(&self) -> f64 {
        self.k0 as f64 / self.n0 as f64
    }

    pub fn is_systematic_col(&self, global_col: usize) -> bool {
        global_col % self.n() < self.k()
    }

    /// For each tail column of `Z_0` (offset within the parity part), the
    /// row holding its single 1. `None` if the tail is not a permutation,
    /// which cannot happen for a validated systematic spec.
    pub fn tail_permutation(&self) -> Option<Vec<usize>> {
        let k = self.k();
        let kbar = self.kbar();
        let mut row_of_col = vec![usize::MAX; kbar];
        for (row, cols) in self.blocks[0].rows.iter().enumerate() {
            for &c in cols {
                let c = c as usize;
                if c >= k {
                    if row_of_col[c - k] != usize::MAX {
                        return None;
                    }
                    row_of_col[c - k] = row;
                }
            }
        }
        row_of_col
            .iter()
            .all(|&r| r != usize::MAX)
            .then_some(row_of_col)
    }

    /// Assemble the dense bit-packed `Z_{[1:horizon]}` for rank checks and
    /// syndrome oracles. `horizon <= t`.
    pub fn full_matrix(&self, horizon: usize) -> BitMatrix {
        assert!(horizon >= 1 && horizon <= self.t);
        let kbar = self.kbar();
        let n = self.n();
        let mut m = BitMatrix::zeros(kbar * horizon, n * horizon);
        for bi in 0..horizon {
            for bj in 0..=bi {
                let z = &self.blocks[bi - bj];
                for (lr, cols) in z.rows.iter().enumerate() {
                    for &c in cols {
                        m.flip(bi * kbar + lr, bj * n + c as usize);
                    }
                }
            }
        }
        m
    }

    /// Sparse triplet export: a header `rows cols` then one `row col` pair
    /// per nonzero, in row order.
    pub fn export_triplets<W: Write>(&self, horizon: usize, w: &mut W) -> std::io::Result<()> {
        assert!(horizon >= 1 && horizon <= self.t);
        let kbar = self.kbar();
        let n = self.n();
        writeln!(w, "{} {}", kbar * horizon, n * horizon)?;
        for bi in 0..horizon {
            for lr in 0..kbar {
                let mut cols: Vec<usize> = (0..=bi)
                    .flat_map(|bj| {
                        self.blocks[bi - bj].rows[lr]
                            .iter()
                            .map(move |&c| bj * n + c as usize)
                    })
                    .collect();
                cols.sort_unstable();
                for c in cols {
                    writeln!(w, "{} {}", bi * kbar + lr, c)?;
                }
            }
        }
        Ok(())
    }
}
