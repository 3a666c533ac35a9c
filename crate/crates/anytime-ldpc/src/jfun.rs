//! Mutual information of the binary-input AWGN channel as a function of
//! SNR (the J function), its complement, inverses, and the dual map
//! M(rho) = Jinv(1 - J(rho)) used by check-node SNR updates.
//!
//! Numerical strategy: J(rho) and Jc(rho) = 1 - J(rho) are computed by
//! *separate* integrals so neither suffers cancellation — Jc(100) is about
//! 3.4e-23 and must survive. High-accuracy values come from composite
//! Gauss-Legendre panels placed around both the Gaussian bulk and y = 0
//! (where the deep-tail mass of Jc lives). The hot path uses log-domain
//! tables whose inverses invert the interpolant *exactly*, which makes
//! M an involution to floating precision rather than to table accuracy.
//! Beyond the table, Jc follows its asymptotic expansion
//! `pi * exp(-rho/2) / (ln2 * sqrt(2*pi*rho)) * (1 - 2.206/rho)`,
//! inverted by Newton in the log domain.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Clamp bounds for message SNRs. The floor is deliberately far below any
/// physical SNR: M of a large message is about `2*ln2*Jc` and reaches
/// 1e-250 territory at channel SNRs near 20 dB; flooring higher would let
/// the clamp dominate check-node sums and bias high-SNR fixed points.
pub const RHO_MIN: f64 = 1e-300;
pub const RHO_MAX: f64 = 1e6;

const LN2: f64 = std::f64::consts::LN_2;

/// `log2(1 + e^{-y})`, stable for both signs of y.
fn g_bits(y: f64) -> f64 {
    if y >= 0.0 {
        (-y).exp().ln_1p() / LN2
    } else {
        (-y + y.exp().ln_1p()) / LN2
    }
}

/// `1 - log2(1 + e^{-y}) = log2(1 + tanh(y/2))`, stable for both signs.
fn h_bits(y: f64) -> f64 {
    if y >= 0.0 {
        (y / 2.0).tanh().ln_1p() / LN2
    } else {
        (y + LN2 - y.exp().ln_1p()) / LN2
    }
}

/// Nodes and weights of n-point Gauss-Legendre quadrature on [-1, 1],
/// by Newton iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // p = P_n(x), dp = P_n'(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        // recompute dp at the converged node for the weight
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let k = k as f64;
            let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Panel breakpoints for integrating a smooth function against the LLR
/// density N(2*rho, 4*rho): the Gaussian bulk in 1-sigma slices plus fixed
/// panels bracketing y = 0, where the integrand of Jc concentrates when
/// the bulk sits far to the right.
fn panel_breaks(rho: f64) -> Vec<f64> {
    let mu = 2.0 * rho;
    let sigma = (4.0 * rho).sqrt();
    let mut pts: Vec<f64> = (-10..=10).map(|k| mu + k as f64 * sigma).collect();
    pts.extend(
        [
            -60.0, -50.0, -40.0, -30.0, -20.0, -15.0, -10.0, -5.0, -2.5, 0.0, 2.5, 5.0, 10.0,
            15.0, 20.0, 30.0, 40.0, 50.0, 60.0,
        ]
        .iter()
        .copied(),
    );
    let lo = (mu - 10.0 * sigma).min(-60.0);
    let hi = mu + 10.0 * sigma;
    pts.retain(|&y| y >= lo && y <= hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    pts
}

fn integrate_against_llr_density(rho: f64, f: impl Fn(f64) -> f64) -> f64 {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = GL.get_or_init(|| gauss_legendre(20));
    let mu = 2.0 * rho;
    let inv_var = 1.0 / (8.0 * rho);
    let norm = 1.0 / (8.0 * PI * rho).sqrt();
    let breaks = panel_breaks(rho);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = (b - a) / 2.0;
        let mid = (a + b) / 2.0;
        let mut acc = 0.0;
        for (&x, &wt) in nodes.iter().zip(weights) {
            let y = mid + half * x;
            let d = y - mu;
            acc += wt * (-d * d * inv_var).exp() * f(y);
        }
        total += acc * half * norm;
    }
    total
}

/// J(rho) by direct quadrature; absolute error well below 1e-9.
pub fn j_quadrature(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    if rho < 1e-12 {
        return rho / (2.0 * LN2);
    }
    integrate_against_llr_density(rho, h_bits)
}

/// 1 - J(rho) by direct quadrature of the complementary integrand;
/// relative error around 1e-10 even when the value is 1e-80.
pub fn jc_quadrature(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    if rho < 1e-12 {
        return 1.0 - rho / (2.0 * LN2);
    }
    integrate_against_llr_density(rho, g_bits)
}

/// ln(1 - J(rho)) from the large-rho asymptotic expansion; relative error
/// of the value is below 1e-3 at rho = 360 and shrinks as 1/rho^2.
fn ln_jc_asymptotic(rho: f64) -> f64 {
    -rho / 2.0 + (PI / LN2).ln() - 0.5 * (2.0 * PI * rho).ln() + (-2.206 / rho).ln_1p()
}

/// Invert `ln_jc_asymptotic` by Newton; `ln_v` must be very negative
/// (deep-tail targets only).
fn jc_asymptotic_inverse(ln_v: f64) -> f64 {
    let mut rho = (-2.0 * ln_v).max(10.0);
    for _ in 0..60 {
        let f = ln_jc_asymptotic(rho) - ln_v;
        let df = -0.5 - 0.5 / rho + 2.206 / (rho * rho) / (1.0 - 2.206 / rho);
        let step = f / df;
        rho -= step;
        if step.abs() < 1e-12 * rho.max(1.0) {
            break;
        }
    }
    rho
}

/// Log-domain tabulation of J and 1-J with exact interpolant inverses.
///
/// `ln J` is interpolated linearly in `ln rho` (power-law-like at both
/// ends); `ln(1-J)` is interpolated linearly in `rho` itself, because the
/// complement decays like `exp(-rho/2)` and would bend hard against a log
/// abscissa.
pub struct JTable {
    x0: f64,
    h: f64,
    rho: Vec<f64>,
    ln_j: Vec<f64>,
    ln_jc: Vec<f64>,
    rho_sd: f64,
}

const TABLE_LO: f64 = 1e-9;
const TABLE_HI: f64 = 700.0;
const TABLE_N: usize = 16384;

impl JTable {
    /// Process-wide table, built on first use.
    pub fn shared() -> &'static JTable {
        static TABLE: OnceLock<JTable> = OnceLock::new();
        TABLE.get_or_init(JTable::build)
    }

    pub fn build() -> JTable {
        let x0 = TABLE_LO.ln();
        let x1 = TABLE_HI.ln();
        let h = (x1 - x0) / (TABLE_N - 1) as f64;
        let mut rho = Vec::with_capacity(TABLE_N);
        let mut ln_j = Vec::with_capacity(TABLE_N);
        let mut ln_jc = Vec::with_capacity(TABLE_N);
        for i in 0..TABLE_N {
            let r = (x0 + h * i as f64).exp();
            let jc = jc_quadrature(r);
            // take the log of whichever side is small; derive the other
            // via ln1p so neither ever collapses to ln(1) = 0
            let (lj, ljc) = if jc < 0.5 {
                ((-jc).ln_1p(), jc.ln())
            } else {
                let j = j_quadrature(r);
                (j.ln(), (-j).ln_1p())
            };
            rho.push(r);
            ln_j.push(lj);
            ln_jc.push(ljc);
        }
        for i in 1..TABLE_N {
            assert!(
                ln_j[i] > ln_j[i - 1] && ln_jc[i] < ln_jc[i - 1],
                "J tabulation lost strict monotonicity at index {i}"
            );
        }
        let mut table = JTable {
            x0,
            h,
            rho,
            ln_j,
            ln_jc,
            rho_sd: 0.0,
        };
        table.rho_sd = table.j_inv(0.5);
        table
    }

    /// Self-dual SNR where J = 1/2 (so M has it as fixed point).
    pub fn rho_sd(&self) -> f64 {
        self.rho_sd
    }

    pub fn j(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if rho < TABLE_LO {
            return rho / (2.0 * LN2);
        }
        if rho > TABLE_HI {
            return 1.0 - ln_jc_asymptotic(rho).exp();
        }
        let x = rho.ln();
        let (i, f) = self.locate_x(x);
        (self.ln_j[i] + f * (self.ln_j[i + 1] - self.ln_j[i])).exp()
    }

    pub fn jc(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 1.0;
        }
        if rho < TABLE_LO {
            return 1.0 - rho / (2.0 * LN2);
        }
        if rho > TABLE_HI {
            return ln_jc_asymptotic(rho).exp();
        }
        let (i, _) = self.locate_x(rho.ln());
        let fr = (rho - self.rho[i]) / (self.rho[i + 1] - self.rho[i]);
        (self.ln_jc[i] + fr.clamp(0.0, 1.0) * (self.ln_jc[i + 1] - self.ln_jc[i]))
            .exp()
            .min(1.0)
    }

    fn locate_x(&self, x: f64) -> (usize, f64) {
        let pos = ((x - self.x0) / self.h).clamp(0.0, (TABLE_N - 1) as f64);
        let i = (pos as usize).min(TABLE_N - 2);
        (i, pos - i as f64)
    }

    /// Inverse of `j`; exact on the interpolant.
    pub fn j_inv(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return RHO_MAX;
        }
        let z = v.ln();
        if z <= self.ln_j[0] {
            return 2.0 * LN2 * v;
        }
        if z >= self.ln_j[TABLE_N - 1] {
            // complement below jc at the table top: asymptotic branch
            let jc = 1.0 - v;
            if jc <= 0.0 {
                return RHO_MAX;
            }
            return jc_asymptotic_inverse(jc.ln()).min(RHO_MAX);
        }
        let i = self.ln_j.partition_point(|&y| y < z) - 1;
        let f = (z - self.ln_j[i]) / (self.ln_j[i + 1] - self.ln_j[i]);
        (self.x0 + self.h * (i as f64 + f)).exp()
    }

    /// Inverse of `jc`; exact on the interpolant.
    pub fn jc_inv(&self, v: f64) -> f64 {
        if v >= 1.0 {
            return 0.0;
        }
        if v <= 0.0 {
            return RHO_MAX;
        }
        let z = v.ln();
        if z >= self.ln_jc[0] {
            return 2.0 * LN2 * (1.0 - v);
        }
        if z <= self.ln_jc[TABLE_N - 1] {
            return jc_asymptotic_inverse(z).min(RHO_MAX);
        }
        let i = self.ln_jc.partition_point(|&y| y >= z) - 1;
        let f = (z - self.ln_jc[i]) / (self.ln_jc[i + 1] - self.ln_jc[i]);
        self.rho[i] + f * (self.rho[i + 1] - self.rho[i])
    }

    /// M(rho) = Jinv(1 - J(rho)), self-inverse, strictly decreasing.
    /// Inputs and outputs clamped to [RHO_MIN, RHO_MAX].
    pub fn m(&self, rho: f64) -> f64 {
        let r = rho.clamp(RHO_MIN, RHO_MAX);
        let out = if r >= self.rho_sd {
            self.j_inv(self.jc(r))
        } else {
            self.jc_inv(self.j(r))
        };
        out.clamp(RHO_MIN, RHO_MAX)
    }
}
