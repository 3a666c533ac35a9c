//! Small statistics helpers shared across modules: ordinary and weighted
//! least-squares lines, and Wilson score intervals for binomial counts.

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope. For the unweighted fit this comes from
    /// the residual variance; for the weighted fit the weights are assumed
    /// to be inverse variances of the y-values.
    pub slope_se: f64,
}

/// Ordinary least squares through `(x, y)` points. Needs at least 2 points
/// with distinct x. A perfectly flat sequence reports `r_squared = 1`.
pub fn linear_fit(pts: &[(f64, f64)]) -> LinearFit {
    assert!(pts.len() >= 2, "linear fit needs at least two points");
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    assert!(sxx > 0.0, "linear fit needs distinct x values");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let dof = (pts.len() as f64 - 2.0).max(1.0);
    let slope_se = (ss_res / dof / sxx).sqrt();
    LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se,
    }
}

/// Weighted least squares with weights `w` taken as inverse variances of
/// the corresponding `y`. The slope standard error is then exact under the
/// independent-Gaussian model, `1/sqrt(sum w (x - xbar_w)^2)`.
pub fn weighted_linear_fit(pts: &[(f64, f64, f64)]) -> LinearFit {
    assert!(pts.len() >= 2, "weighted fit needs at least two points");
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    assert!(sw > 0.0, "weights must not all vanish");
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    assert!(sxx > 0.0, "weighted fit needs distinct x values");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r_squared,
        slope_se: 1.0 / sxx.sqrt(),
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`
/// (1.96 for a two-sided 95% interval).
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    assert!(successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let fit = linear_fit(&pts);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.slope_se < 1e-9);
    }

    #[test]
    fn symmetric_noise_keeps_slope_centered() {
        // y = x plus an alternating +-1 perturbation: slope stays near 1
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| (i as f64, i as f64 + if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let fit = linear_fit(&pts);
        assert!((fit.slope - 1.0).abs() < 0.02);
        assert!(fit.slope_se > 0.0);
    }

    #[test]
    fn weighted_fit_ignores_zero_weight_outlier() {
        let mut pts: Vec<(f64, f64, f64)> =
            (0..10).map(|i| (i as f64, 2.0 * i as f64, 1.0)).collect();
        pts.push((100.0, -500.0, 0.0));
        let fit = weighted_linear_fit(&pts);
        assert!((fit.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_se_matches_closed_form() {
        // two points, unit weights: sxx = 0.25 + 0.25 -> se = 1/sqrt(0.5)
        let fit = weighted_linear_fit(&[(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)]);
        assert!((fit.slope_se - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wilson_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(8, 100, 1.96);
        assert!(lo < 0.08 && 0.08 < hi);
        assert!(lo > 0.03 && hi < 0.16);
    }

    #[test]
    fn wilson_handles_zero_and_full_counts() {
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson_interval(50, 50, 1.96);
        assert!(lo > 0.9 && lo < 1.0);
        assert_eq!(hi, 1.0);
    }
}
