//! Leave-one-out kernel estimation of the unconditional variance path from
//! squared residuals, with cross-validation and rule-of-thumb bandwidths.
//!
//! For a bandwidth `b` the estimate at `t` is `ĥ_t² = Σ_i w_ti û_i²` with
//! `w_ti = K_ti / Σ_j K_tj`, `K_ti = K((t − i)/(n b))` for `i ≠ t` and
//! `K_tt = 0`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

/// Relative floor applied to every `ĥ_t²`, as a fraction of the mean
/// squared residual.
pub const VARIANCE_FLOOR: f64 = 1e-6;

pub const DEFAULT_CV_C_MIN: f64 = 0.05;
pub const DEFAULT_CV_C_MAX: f64 = 2.0;
pub const DEFAULT_CV_GRID: usize = 20;

static PATH_ESTIMATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of variance-path estimations performed by this process so far.
pub fn path_estimation_count() -> usize {
    PATH_ESTIMATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    #[default]
    Gaussian,
    Triangular,
}

impl KernelSpec {
    /// Kernel density `K(x)`.
    #[inline]
    pub fn density<F: Scalar>(self, x: F) -> F {
        match self {
            KernelSpec::Gaussian => (-(x * x) * F::lit(0.5)).exp() / F::TAU().sqrt(),
            KernelSpec::Triangular => (F::one() - x.abs()).max(F::zero()),
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelSpec::Gaussian),
            "triangular" => Ok(KernelSpec::Triangular),
            other => Err(Error::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
#[serde(bound = "F: Scalar")]
pub enum BandwidthRule<F> {
    Fixed {
        b: F,
    },
    /// Grid search over `[c_min n^{-1/5}, c_max n^{-1/5}]`.
    CrossValidation {
        c_min: F,
        c_max: F,
        grid_size: usize,
    },
    /// `b = γ (σ̂²/n)^{1/5}` with `σ̂²` the variance of the squared residuals.
    RuleOfThumb {
        gamma: F,
    },
}

impl<F: Scalar> Default for BandwidthRule<F> {
    fn default() -> Self {
        Self::cross_validation()
    }
}

impl<F: Scalar> BandwidthRule<F> {
    pub fn cross_validation() -> Self {
        BandwidthRule::CrossValidation {
            c_min: F::lit(DEFAULT_CV_C_MIN),
            c_max: F::lit(DEFAULT_CV_C_MAX),
            grid_size: DEFAULT_CV_GRID,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Fixed { b } if b > F::zero() && b < F::one() => Ok(()),
            BandwidthRule::Fixed { b } => Err(Error::Config(format!("fixed bandwidth must lie in (0, 1), got {b}"))),
            BandwidthRule::CrossValidation { c_min, c_max, grid_size } => {
                if !(c_min > F::zero() && c_min < c_max && c_max.is_finite()) {
                    return Err(Error::Config(format!("need 0 < c_min < c_max, got [{c_min}, {c_max}]")));
                }
                if grid_size < 5 {
                    return Err(Error::Config(format!("CV grid needs at least 5 points, got {grid_size}")));
                }
                Ok(())
            }
            BandwidthRule::RuleOfThumb { gamma } if gamma > F::zero() && gamma.is_finite() => Ok(()),
            BandwidthRule::RuleOfThumb { gamma } => Err(Error::Config(format!("gamma must be positive, got {gamma}"))),
        }
    }
}

/// Estimated variance path with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct VariancePathEstimate<F> {
    pub h2: Vec<F>,
    pub bandwidth: F,
    pub kernel: KernelSpec,
    pub rule: BandwidthRule<F>,
    pub floor_applied: bool,
}

/// Precomputed kernel weights for one `(n, b, kernel)` triple. Weights only
/// depend on `|t − i|`, so the lag profile and row normalizers take O(n).
#[derive(Debug, Clone)]
pub struct KernelSmoother<F> {
    bandwidth: F,
    kernel: KernelSpec,
    /// `K(d / nb)` for `d = 0..n`, with the `d = 0` entry zeroed.
    lag: Vec<F>,
    /// `Σ_{j ≠ t} K_tj` per row.
    denom: Vec<F>,
}

impl<F: Scalar> KernelSmoother<F> {
    pub fn new(n: usize, bandwidth: F, kernel: KernelSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("kernel smoothing needs n >= 2, got {n}")));
        }
        if !(bandwidth > F::zero() && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let nb = F::from_usize_lossy(n) * bandwidth;
        let mut lag: Vec<F> = (0..n).map(|d| kernel.density(F::from_usize_lossy(d) / nb)).collect();
        lag[0] = F::zero();
        // cumulative[d] = Σ_{k=1..d} lag[k]
        let mut cumulative = vec![F::zero(); n];
        for d in 1..n {
            cumulative[d] = cumulative[d - 1] + lag[d];
        }
        let denom: Vec<F> = (0..n).map(|t| cumulative[t] + cumulative[n - 1 - t]).collect();
        if let Some(t) = denom.iter().position(|d| !(*d > F::zero())) {
            return Err(Error::DegenerateWindow { t: t + 1, bandwidth: bandwidth.as_f64() });
        }
        Ok(KernelSmoother { bandwidth, kernel, lag, denom })
    }

    pub fn n(&self) -> usize {
        self.lag.len()
    }

    pub fn bandwidth(&self) -> F {
        self.bandwidth
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    /// Row `t` (1-based) of the weight matrix.
    pub fn weights(&self, t: usize) -> Vec<F> {
        let n = self.n();
        let t0 = t - 1;
        (0..n).map(|i| self.lag[t0.abs_diff(i)] / self.denom[t0]).collect()
    }

    /// Unfloored smoothed values `Σ_i w_ti y_i`.
    pub fn smooth(&self, y: &[F]) -> Vec<F> {
        let n = self.n();
        assert_eq!(y.len(), n, "series length does not match smoother");
        (0..n)
            .map(|t| {
                // i < t uses lag[t - i]; i > t uses lag[i - t].
                let left: F = y[..t].iter().rev().zip(&self.lag[1..=t]).map(|(a, b)| *a * *b).sum();
                let right: F = y[t + 1..].iter().zip(&self.lag[1..n - t]).map(|(a, b)| *a * *b).sum();
                (left + right) / self.denom[t]
            })
            .collect()
    }

    /// Smoothed and floored variance path.
    pub fn estimate(&self, squared_resid: &[F], rule: BandwidthRule<F>) -> Result<VariancePathEstimate<F>> {
        let floor = variance_floor(squared_resid)?;
        PATH_ESTIMATIONS.fetch_add(1, Ordering::Relaxed);
        let mut floor_applied = false;
        let h2 = self
            .smooth(squared_resid)
            .into_iter()
            .map(|v| {
                if v < floor {
                    floor_applied = true;
                    floor
                } else {
                    v
                }
            })
            .collect();
        Ok(VariancePathEstimate { h2, bandwidth: self.bandwidth, kernel: self.kernel, rule, floor_applied })
    }
}

fn variance_floor<F: Scalar>(squared_resid: &[F]) -> Result<F> {
    if let Some(i) = squared_resid.iter().position(|v| !(*v >= F::zero() && v.is_finite())) {
        return Err(Error::Domain(format!(
            "squared residual {} at index {} is negative or non-finite",
            squared_resid[i],
            i + 1
        )));
    }
    let m = mean(squared_resid);
    if !(m > F::zero()) {
        return Err(Error::DegenerateInput("all squared residuals are zero".into()));
    }
    Ok(m * F::lit(VARIANCE_FLOOR))
}

/// Weight row `w_t·` for observation `t ∈ 1..=n`.
pub fn smoothing_weights<F: Scalar>(n: usize, t: usize, b: F, kernel: KernelSpec) -> Result<Vec<F>> {
    if !(1..=n).contains(&t) {
        return Err(Error::Domain(format!("index t = {t} outside 1..={n}")));
    }
    Ok(KernelSmoother::new(n, b, kernel)?.weights(t))
}

/// Leave-one-out kernel estimate of the variance path at bandwidth `b`.
pub fn estimate_variance_path<F: Scalar>(
    squared_resid: &[F],
    b: F,
    kernel: KernelSpec,
) -> Result<VariancePathEstimate<F>> {
    let n = squared_resid.len();
    if n < 3 {
        return Err(Error::Domain(format!("variance path estimation needs n >= 3, got {n}")));
    }
    KernelSmoother::new(n, b, kernel)?.estimate(squared_resid, BandwidthRule::Fixed { b })
}

/// Log-spaced bandwidth grid `[c_min n^{-1/5}, c_max n^{-1/5}]`.
pub fn cv_grid<F: Scalar>(n: usize, c_min: F, c_max: F, grid_size: usize) -> Vec<F> {
    let base = F::from_usize_lossy(n).powf(F::lit(-0.2));
    let (lo, hi) = ((c_min * base).ln(), (c_max * base).ln());
    let last = F::from_usize_lossy(grid_size - 1);
    (0..grid_size)
        .map(|k| {
            if k == 0 {
                c_min * base
            } else if k == grid_size - 1 {
                c_max * base
            } else {
                (lo + (hi - lo) * F::from_usize_lossy(k) / last).exp()
            }
        })
        .collect()
}

/// Cross-validation criterion `Σ_t (ĥ_t² − û_t²)²` at bandwidth `b`.
pub fn cv_criterion<F: Scalar>(squared_resid: &[F], b: F, kernel: KernelSpec) -> Result<F> {
    let path = estimate_variance_path(squared_resid, b, kernel)?;
    Ok(path.h2.iter().zip(squared_resid).map(|(h, y)| (*h - *y) * (*h - *y)).sum())
}

/// Bandwidth minimizing the leave-one-out criterion over the log-spaced
/// grid; ties go to the smaller bandwidth. Grid points with a degenerate
/// window are skipped.
pub fn cv_bandwidth<F: Scalar>(
    squared_resid: &[F],
    kernel: KernelSpec,
    c_min: F,
    c_max: F,
    grid_size: usize,
) -> Result<F> {
    BandwidthRule::CrossValidation { c_min, c_max, grid_size }.validate()?;
    let mut best: Option<(F, F)> = None;
    for b in cv_grid(squared_resid.len(), c_min, c_max, grid_size) {
        let crit = match cv_criterion(squared_resid, b, kernel) {
            Ok(c) if c.is_finite() => c,
            Ok(_) | Err(Error::DegenerateWindow { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, c)| crit < c) {
            best = Some((b, crit));
        }
    }
    best.map(|(b, _)| b)
        .ok_or_else(|| Error::SelectionFailed("every grid bandwidth gives a degenerate kernel window".into()))
}

/// `γ (σ̂²/n)^{1/5}` with `σ̂²` the 1/n-normalized variance of `squared_resid`.
pub fn rot_bandwidth<F: Scalar>(squared_resid: &[F], gamma: F) -> Result<F> {
    let n = squared_resid.len();
    if n < 2 {
        return Err(Error::Domain(format!("rule-of-thumb bandwidth needs n >= 2, got {n}")));
    }
    let m = mean(squared_resid);
    let var = squared_resid.iter().map(|v| (*v - m) * (*v - m)).sum::<F>() / F::from_usize_lossy(n);
    if !(var > F::zero()) {
        return Err(Error::DegenerateInput("squared residuals have zero variance".into()));
    }
    Ok(gamma * (var / F::from_usize_lossy(n)).powf(F::lit(0.2)))
}

/// Resolves a bandwidth rule on the given squared residuals.
pub fn select_bandwidth<F: Scalar>(squared_resid: &[F], kernel: KernelSpec, rule: &BandwidthRule<F>) -> Result<F> {
    rule.validate()?;
    match *rule {
        BandwidthRule::Fixed { b } => Ok(b),
        BandwidthRule::CrossValidation { c_min, c_max, grid_size } => {
            cv_bandwidth(squared_resid, kernel, c_min, c_max, grid_size)
        }
        BandwidthRule::RuleOfThumb { gamma } => rot_bandwidth(squared_resid, gamma),
    }
}

/// Selects the bandwidth by `rule` and estimates the path with it.
pub fn estimate_with_rule<F: Scalar>(
    squared_resid: &[F],
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
) -> Result<VariancePathEstimate<F>> {
    let n = squared_resid.len();
    if n < 3 {
        return Err(Error::Domain(format!("variance path estimation needs n >= 3, got {n}")));
    }
    let b = select_bandwidth(squared_resid, kernel, rule)?;
    KernelSmoother::new(n, b, kernel)?.estimate(squared_resid, *rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_detailed, DgpSpec, VarianceProfile};
    use proptest::prelude::*;

    /// Direct evaluation of the weight definition, independent of the
    /// lag-profile shortcut.
    fn brute_weights(n: usize, t: usize, b: f64, kernel: KernelSpec) -> Vec<f64> {
        let k: Vec<f64> = (1..=n)
            .map(|i| if i == t { 0.0 } else { kernel.density((t as f64 - i as f64) / (n as f64 * b)) })
            .collect();
        let s: f64 = k.iter().sum();
        k.iter().map(|v| v / s).collect()
    }

    #[test]
    fn kernels_are_densities() {
        for kernel in [KernelSpec::Gaussian, KernelSpec::Triangular] {
            let v = crate::quadrature::adaptive_simpson(&|x: f64| kernel.density(x), -12.0, 12.0, 1e-10);
            assert!((v - 1.0).abs() < 1e-6, "{kernel:?} integrates to {v}");
            let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.02).collect();
            for w in xs.windows(2) {
                assert!(kernel.density(w[1]) <= kernel.density(w[0]));
                assert!(kernel.density(-w[1]) <= kernel.density(-w[0]));
            }
        }
    }

    #[test]
    fn two_point_window() {
        assert_eq!(smoothing_weights(2, 1, 0.3_f64, KernelSpec::Gaussian).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn symmetric_neighbours_share_weight() {
        let w = smoothing_weights(3, 2, 1e6_f64, KernelSpec::Gaussian).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9 && w[1] == 0.0 && (w[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn weights_decay_away_from_t() {
        let w = smoothing_weights(5, 1, 0.2_f64, KernelSpec::Gaussian).unwrap();
        let oracle = brute_weights(5, 1, 0.2, KernelSpec::Gaussian);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(w[0], 0.0);
        assert!(w[1] > w[2] && w[2] > w[3] && w[3] > w[4]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_window_detected() {
        let err = smoothing_weights(10, 3, 1e-4_f64, KernelSpec::Triangular).unwrap_err();
        assert!(matches!(err, Error::DegenerateWindow { .. }));
        assert!(matches!(
            smoothing_weights(50, 3, 1e-5_f64, KernelSpec::Gaussian),
            Err(Error::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn constant_input_is_reproduced() {
        let y = vec![2.5_f64; 40];
        let path = estimate_variance_path(&y, 0.1, KernelSpec::Gaussian).unwrap();
        assert!(path.h2.iter().all(|h| (h - 2.5).abs() < 1e-12));
        assert!(!path.floor_applied);
    }

    #[test]
    fn spike_is_left_out_at_its_own_index() {
        let mut y = vec![0.0_f64; 21];
        y[10] = 1.0;
        let path = estimate_variance_path(&y, 0.05, KernelSpec::Gaussian).unwrap();
        let floor = VARIANCE_FLOOR / 21.0;
        assert!((path.h2[10] - floor).abs() < 1e-18, "own value leaked: {}", path.h2[10]);
        assert!(path.floor_applied);
        assert!(path.h2[9] > 0.1);
    }

    #[test]
    fn huge_bandwidth_gives_leave_one_out_mean() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64 + 0.5).collect();
        let total: f64 = y.iter().sum();
        let path = estimate_variance_path(&y, 1e8, KernelSpec::Gaussian).unwrap();
        for (t, h) in path.h2.iter().enumerate() {
            let loo = (total - y[t]) / 29.0;
            assert!((h - loo).abs() < 1e-9);
        }
    }

    #[test]
    fn rule_of_thumb_formula() {
        // Alternating 0/2 has mean 1 and variance exactly 1.
        let y: Vec<f64> = (0..100_000).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let b = rot_bandwidth(&y, 1.0).unwrap();
        assert!((b - 0.1).abs() < 1e-12, "{b}");
        let small = rot_bandwidth(&y, 0.12).unwrap();
        let large = rot_bandwidth(&y, 0.2).unwrap();
        assert!((small / large - 0.6).abs() < 1e-12);
        assert!(matches!(rot_bandwidth(&[3.0_f64; 10], 0.2), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn cv_returns_a_grid_value() {
        let sim = simulate_detailed(&DgpSpec::null(VarianceProfile::<f64>::benchmark_sinusoid(), 200, 4)).unwrap();
        let y: Vec<f64> = sim.u.iter().map(|u| u * u).collect();
        let b = cv_bandwidth(&y, KernelSpec::Gaussian, 0.1, 1.0, 5).unwrap();
        let grid = cv_grid(200, 0.1, 1.0, 5);
        assert!(grid.contains(&b));
        // The returned point is the grid argmin.
        let crits: Vec<f64> = grid.iter().map(|g| cv_criterion(&y, *g, KernelSpec::Gaussian).unwrap()).collect();
        let best = crits.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(crits[grid.iter().position(|g| *g == b).unwrap()], best);
    }

    #[test]
    fn cv_rejects_bad_grid() {
        let y = vec![1.0_f64, 2.0, 3.0, 4.0];
        assert!(cv_bandwidth(&y, KernelSpec::Gaussian, 0.1, 1.0, 4).is_err());
        assert!(cv_bandwidth(&y, KernelSpec::Gaussian, 1.0, 0.1, 10).is_err());
        assert!(matches!(
            cv_bandwidth(&[1.0_f64; 400], KernelSpec::Triangular, 1e-6, 2e-6, 5),
            Err(Error::SelectionFailed(_))
        ));
    }

    #[test]
    fn cv_prefers_small_bandwidth_on_sharp_profile() {
        // Fast oscillation in the variance forces a short window.
        let profile = VarianceProfile::Sinusoidal { c0: 10.0, c1: 4.0, freq: 12.0 * std::f64::consts::PI, phase: 0.0 };
        let n = 500;
        let c_max = DEFAULT_CV_C_MAX;
        let hi = c_max * (n as f64).powf(-0.2);
        let mut below = 0;
        for seed in 0..10 {
            let sim = simulate_detailed(&DgpSpec::null(profile.clone(), n, seed)).unwrap();
            let y: Vec<f64> = sim.u.iter().map(|u| u * u).collect();
            let b = cv_bandwidth(&y, KernelSpec::Gaussian, DEFAULT_CV_C_MIN, c_max, DEFAULT_CV_GRID).unwrap();
            if b < hi {
                below += 1;
            }
        }
        assert_eq!(below, 10);
    }

    #[test]
    fn cv_prefers_large_bandwidth_on_constant_variance() {
        let n = 500;
        let grid = cv_grid(n, DEFAULT_CV_C_MIN, DEFAULT_CV_C_MAX, DEFAULT_CV_GRID);
        let top = grid[grid.len() - 3];
        let mut large = 0;
        for seed in 0..20 {
            let sim =
                simulate_detailed(&DgpSpec::null(VarianceProfile::Constant { level: 1.0 }, n, 100 + seed)).unwrap();
            let y: Vec<f64> = sim.u.iter().map(|u| u * u).collect();
            let b =
                cv_bandwidth(&y, KernelSpec::Gaussian, DEFAULT_CV_C_MIN, DEFAULT_CV_C_MAX, DEFAULT_CV_GRID).unwrap();
            if b >= top {
                large += 1;
            }
        }
        assert!(large >= 11, "only {large}/20 replications chose a large bandwidth");
    }

    fn max_error(n: usize, seed: u64) -> f64 {
        let profile = VarianceProfile::Constant { level: 4.0 };
        let sim = simulate_detailed(&DgpSpec::null(profile, n, seed)).unwrap();
        let y: Vec<f64> = sim.u.iter().map(|u| u * u).collect();
        let b = (n as f64).powf(-0.2);
        let path = estimate_variance_path(&y, b, KernelSpec::Gaussian).unwrap();
        path.h2.iter().map(|h| (h - 16.0).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn uniform_consistency_on_constant_profile() {
        let e1: Vec<f64> = (0..5).map(|s| max_error(10_000, s)).collect();
        let e4: Vec<f64> = (0..5).map(|s| max_error(40_000, 50 + s)).collect();
        assert!(e1.iter().all(|e| *e < 2.0), "{e1:?}");
        let m1 = e1.iter().sum::<f64>() / 5.0;
        let m4 = e4.iter().sum::<f64>() / 5.0;
        assert!(m4 < m1, "{m1} -> {m4}");
    }

    #[test]
    fn doubling_n_shrinks_max_error_on_smooth_profile() {
        let profile = VarianceProfile::<f64>::benchmark_sinusoid();
        let run = |n: usize, seed: u64| {
            let sim = simulate_detailed(&DgpSpec::null(profile.clone(), n, seed)).unwrap();
            let y: Vec<f64> = sim.u.iter().map(|u| u * u).collect();
            let path = estimate_variance_path(&y, (n as f64).powf(-0.2) * 0.15, KernelSpec::Gaussian).unwrap();
            let truth = profile.variance_path(n);
            path.h2.iter().zip(&truth).map(|(h, g)| (h - g).abs() / g).fold(0.0, f64::max)
        };
        let reps = 50;
        let small: f64 = (0..reps).map(|s| run(1000, s)).sum::<f64>() / reps as f64;
        let large: f64 = (0..reps).map(|s| run(2000, 1000 + s)).sum::<f64>() / reps as f64;
        assert!(large <= 0.8 * small, "mean max relative error {small} -> {large}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn weights_normalize(n in 2usize..300, tfrac in 0.0f64..1.0, b in 0.005f64..5.0, tri in any::<bool>()) {
            let kernel = if tri { KernelSpec::Triangular } else { KernelSpec::Gaussian };
            let t = 1 + ((n - 1) as f64 * tfrac) as usize;
            match smoothing_weights(n, t, b, kernel) {
                Ok(w) => {
                    prop_assert_eq!(w[t - 1], 0.0);
                    prop_assert!(w.iter().all(|v| *v >= 0.0));
                    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                Err(Error::DegenerateWindow { .. }) => prop_assert!(tri),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
