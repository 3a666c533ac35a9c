//! Unstable linear plant, uniform lattice quantizer, interval (axis-
//! aligned box) filter chain, and state-feedback control. The filter is
//! re-run from scratch at every time step because decoded measurements of
//! the past can change as decoding improves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("closed loop A+BK is not stable")]
    UnstableGain,
    #[error("power iteration did not converge")]
    NoConvergence,
}

/// State magnitude past which a trajectory is declared diverged.
pub const DIVERGENCE_SENTINEL: f64 = 1e15;

/// Small dense real matrix, row major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Mat {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat {
            rows: n,
            cols: n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn mul_mat(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat {
            rows: self.rows,
            cols: other.cols,
            data: vec![0.0; self.rows * other.cols],
        };
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err("empty matrix".into());
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged rows".into());
        }
        Ok(Mat::from_rows(rows))
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        (0..m.rows)
            .map(|r| m.row(r).to_vec())
            .collect()
    }
}

/// Spectral radius of the elementwise-absolute-value matrix, by power
/// iteration (the matrix is nonnegative, so this converges to the Perron
/// root). `None` if 1e5 iterations do not reach 1e-6 relative accuracy.
pub fn spectral_radius_abs(a: &Mat) -> Option<f64> {
    assert_eq!(a.rows, a.cols, "need a square matrix");
    let n = a.rows;
    let abs_row = |r: usize| a.row(r).iter().map(|v| v.abs());
    let mut v = vec![1.0; n];
    let mut lambda = 0.0f64;
    for _ in 0..100_000 {
        let mut next: Vec<f64> = (0..n)
            .map(|r| abs_row(r).zip(&v).map(|(x, y)| x * y).sum())
            .collect();
        let norm = next.iter().fold(0.0f64, |m, &x| m.max(x));
        if norm == 0.0 {
            return Some(0.0);
        }
        next.iter_mut().for_each(|x| *x /= norm);
        if (norm - lambda).abs() <= 1e-6 * norm.max(1e-300) {
            return Some(norm);
        }
        lambda = norm;
        v = next;
    }
    None
}

/// Uniform mid-rise lattice on [-range, range] with `2^bits_per_coord`
/// cells per component; out-of-range values saturate to the end cells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Quantizer {
    pub bits_per_coord: u32,
    pub range: f64,
}

impl Quantizer {
    pub fn levels(&self) -> u64 {
        1u64 << self.bits_per_coord
    }

    pub fn step(&self) -> f64 {
        2.0 * self.range / self.levels() as f64
    }

    /// Largest error of an unsaturated sample.
    pub fn half_step(&self) -> f64 {
        self.step() / 2.0
    }

    /// Bits (MSB first per component, components concatenated) and the
    /// number of saturated components.
    pub fn quantize(&self, y: &[f64]) -> (Vec<u8>, usize) {
        let mut bits = Vec::with_capacity(y.len() * self.bits_per_coord as usize);
        let mut saturated = 0;
        for &v in y {
            let raw = ((v + self.range) / self.step()).floor();
            if raw < 0.0 || raw >= self.levels() as f64 {
                saturated += 1;
            }
            let idx = (raw.max(0.0) as u64).min(self.levels() - 1);
            for b in (0..self.bits_per_coord).rev() {
                bits.push((idx >> b & 1) as u8);
            }
        }
        (bits, saturated)
    }

    /// Cell centers from concatenated per-component bit groups.
    pub fn dequantize(&self, bits: &[u8]) -> Vec<f64> {
        let per = self.bits_per_coord as usize;
        assert_eq!(bits.len() % per, 0, "bit count not a multiple of {per}");
        bits.chunks(per)
            .map(|chunk| {
                let idx = chunk.iter().fold(0u64, |acc, &b| acc << 1 | u64::from(b & 1));
                -self.range + (idx as f64 + 0.5) * self.step()
            })
            .collect()
    }
}

/// Axis-aligned box, the filter's state estimate set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypercuboid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Hypercuboid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        Hypercuboid { lo, hi }
    }

    pub fn symmetric(radius: f64, dim: usize) -> Self {
        Hypercuboid {
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (l + h) / 2.0).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    /// Feedback gain: u = k_gain * x_hat.
    pub k_gain: Mat,
    /// Process-noise amplitude bound (uniform on [-omega, omega]).
    pub omega: f64,
    /// Measurement-noise amplitude bound.
    pub delta: f64,
    pub initial_box: Hypercuboid,
    pub quantizer: Quantizer,
}

impl PlantConfig {
    /// Shipped defaults: the unstable 3-state example plant with full state
    /// measurement, a dead-beat-ish gain placing the closed-loop poles at
    /// {0.5, 0.4, 0.3}, and a 6-bit-per-coordinate quantizer on [-32, 32].
    pub fn reference() -> Self {
        PlantConfig {
            a: Mat::from_rows(vec![
                vec![1.285, 0.127, 0.0],
                vec![4.0, 1.285, 0.002],
                vec![-3.94, -0.280, 0.979],
            ]),
            b: Mat::from_rows(vec![vec![0.0], vec![1.0], vec![0.0]]),
            c: Mat::identity(3),
            k_gain: Mat::from_rows(vec![vec![-15.76168105, -2.349, 0.45209824]]),
            omega: 0.05,
            delta: 0.05,
            initial_box: Hypercuboid::symmetric(1.0, 3),
            quantizer: Quantizer {
                bits_per_coord: 6,
                range: 32.0,
            },
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_y(&self) -> usize {
        self.c.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }

    /// Bits per measurement after quantization.
    pub fn bits_per_measurement(&self) -> usize {
        self.n_y() * self.quantizer.bits_per_coord as usize
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let n = self.n_x();
        let checks = [
            (self.a.cols() == n, "A must be square"),
            (self.b.rows() == n, "B row count"),
            (self.c.cols() == n, "C column count"),
            (self.k_gain.rows() == self.n_u(), "K row count"),
            (self.k_gain.cols() == n, "K column count"),
            (self.initial_box.dim() == n, "initial box dimension"),
            (self.omega >= 0.0 && self.delta >= 0.0, "noise bounds"),
            (self.quantizer.range > 0.0, "quantizer range"),
            (self.quantizer.bits_per_coord >= 1, "quantizer bits"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(PlantError::DimensionMismatch(what.into()));
            }
        }
        // stability of A+BK via repeated squaring: entries of (A+BK)^128
        // collapse to ~0 iff the spectral radius is below 1
        let mut cl = self.a.clone();
        for i in 0..n {
            for j in 0..n {
                let add: f64 = (0..self.n_u())
                    .map(|u| self.b.get(i, u) * self.k_gain.get(u, j))
                    .sum();
                cl.data[i * n + j] += add;
            }
        }
        for _ in 0..7 {
            cl = cl.mul_mat(&cl);
        }
        if cl.data.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(PlantError::UnstableGain);
        }
        Ok(())
    }
}

/// `x_next = A x + B u + w`; returns the new state and whether it crossed
/// the divergence sentinel.
pub fn step_plant(cfg: &PlantConfig, x: &[f64], u: &[f64], w: &[f64]) -> (Vec<f64>, bool) {
    let mut next = cfg.a.mul_vec(x);
    let bu = cfg.b.mul_vec(u);
    for i in 0..next.len() {
        next[i] += bu[i] + w[i];
    }
    let diverged = next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_SENTINEL);
    (next, diverged)
}

/// `y = C x + v`.
pub fn measure(cfg: &PlantConfig, x: &[f64], v: &[f64]) -> Vec<f64> {
    let mut y = cfg.c.mul_vec(x);
    for (yi, vi) in y.iter_mut().zip(v) {
        *yi += vi;
    }
    y
}

/// `u = K x_hat`.
pub fn control_command(cfg: &PlantConfig, x_hat: &[f64]) -> Vec<f64> {
    cfg.k_gain.mul_vec(x_hat)
}

/// Forward image of a box through `x -> A x + B u + [-omega, omega]^n`.
pub fn predict_box(cfg: &PlantConfig, box_: &Hypercuboid, u: &[f64]) -> Hypercuboid {
    let n = cfg.n_x();
    let mid = box_.center();
    let rad: Vec<f64> = box_.widths().iter().map(|w| w / 2.0).collect();
    let mut center = cfg.a.mul_vec(&mid);
    let bu = cfg.b.mul_vec(u);
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        center[i] += bu[i];
        let spread: f64 = cfg
            .a
            .row(i)
            .iter()
            .zip(&rad)
            .map(|(a, r)| a.abs() * r)
            .sum::<f64>()
            + cfg.omega;
        lo[i] = center[i] - spread;
        hi[i] = center[i] + spread;
    }
    Hypercuboid { lo, hi }
}

/// Tighten a box with one decoded measurement: every row of C defines the
/// slab `|C_r x - y_r| <= half-step + delta`, back-projected onto each
/// coordinate with a nonzero coefficient (one pass). `None` if any
/// coordinate's interval becomes empty — the caller skips the correction.
pub fn correct_box(cfg: &PlantConfig, box_: &Hypercuboid, y_hat: &[f64]) -> Option<Hypercuboid> {
    let slack = cfg.quantizer.half_step() + cfg.delta;
    let n = cfg.n_x();
    let mut lo = box_.lo.clone();
    let mut hi = box_.hi.clone();
    for (r, &y) in y_hat.iter().enumerate() {
        let row = cfg.c.row(r);
        for j in 0..n {
            let cj = row[j];
            if cj.abs() < 1e-12 {
                continue;
            }
            // interval of the other terms of C_r . x over the current box
            let (mut rest_lo, mut rest_hi) = (0.0f64, 0.0f64);
            for (jj, &cc) in row.iter().enumerate() {
                if jj == j || cc == 0.0 {
                    continue;
                }
                if cc > 0.0 {
                    rest_lo += cc * lo[jj];
                    rest_hi += cc * hi[jj];
                } else {
                    rest_lo += cc * hi[jj];
                    rest_hi += cc * lo[jj];
                }
            }
            let (a, b) = (y - slack - rest_hi, y + slack - rest_lo);
            let (xl, xh) = if cj > 0.0 {
                (a / cj, b / cj)
            } else {
                (b / cj, a / cj)
            };
            lo[j] = lo[j].max(xl);
            hi[j] = hi[j].min(xh);
            if lo[j] > hi[j] {
                return None;
            }
        }
    }
    Some(Hypercuboid { lo, hi })
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Box after each step's correction (index tau-1 for step tau).
    pub boxes: Vec<Hypercuboid>,
    pub x_hat: Vec<f64>,
    /// Corrections skipped because a decoded measurement was inconsistent
    /// with the predicted box.
    pub empty_skips: usize,
}

/// Run the whole filter chain from scratch over `t` steps of decoded
/// measurements. `y_hats[i][tau]` is sensor i's dequantized measurement of
/// step tau+1; `u_hist` holds the commands applied between steps
/// (length t-1). Sensors are fused by sequential intersection; an
/// inconsistent sensor is skipped and counted, never fatal.
pub fn filter_chain(
    cfg: &PlantConfig,
    y_hats: &[Vec<Vec<f64>>],
    u_hist: &[Vec<f64>],
) -> Result<FilterOutcome, PlantError> {
    if y_hats.is_empty() {
        return Err(PlantError::DimensionMismatch("no sensors".into()));
    }
    let t = y_hats[0].len();
    if t == 0 || y_hats.iter().any(|s| s.len() != t) {
        return Err(PlantError::DimensionMismatch(
            "sensors disagree on horizon".into(),
        ));
    }
    if u_hist.len() + 1 != t {
        return Err(PlantError::DimensionMismatch(format!(
            "need {} commands for horizon {t}, got {}",
            t - 1,
            u_hist.len()
        )));
    }
    let mut box_ = cfg.initial_box.clone();
    let mut boxes = Vec::with_capacity(t);
    let mut empty_skips = 0;
    for tau in 0..t {
        if tau > 0 {
            box_ = predict_box(cfg, &box_, &u_hist[tau - 1]);
        }
        for sensor in y_hats {
            match correct_box(cfg, &box_, &sensor[tau]) {
                Some(b) => box_ = b,
                None => empty_skips += 1,
            }
        }
        boxes.push(box_.clone());
    }
    let x_hat = box_.center();
    Ok(FilterOutcome {
        boxes,
        x_hat,
        empty_skips,
    })
}
