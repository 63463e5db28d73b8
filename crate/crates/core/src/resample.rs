//! Finite-sample p-values for the modified adaptive statistics: a residual
//! bootstrap that regenerates the series, a wild Monte Carlo scheme that
//! perturbs the statistic's summands with Mammen multipliers, and
//! calibration of the rule-of-thumb constant γ.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{als_fit, als_fit_with_smoother, ols_fit, ArFit};
use crate::kernelvar::{select_bandwidth, BandwidthRule, KernelSmoother, KernelSpec, VariancePathEstimate};
use crate::model::SeriesSample;
use crate::rng::{derive_seed, rng_from_seed, StreamRng};
use crate::scalar::Scalar;
use crate::stats::{
    autocorr_of, lb_statistic, report_with_pvalue, weighted_family_statistic, PvalueSource, TestFamily, TestReport,
};

pub const MIN_REPLICATIONS: usize = 99;
pub const DEFAULT_REPLICATIONS: usize = 499;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    Bootstrap,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub method: ResampleMethod,
    pub replications: usize,
    pub seed: u64,
}

impl ResampleSpec {
    pub fn validate(&self) -> Result<()> {
        check_replications(self.replications)
    }

    pub fn run<F: Scalar>(
        &self,
        sample: &SeriesSample<F>,
        family: TestFamily,
        m: usize,
        kernel: KernelSpec,
        rule: &BandwidthRule<F>,
    ) -> Result<TestReport<F>> {
        match self.method {
            ResampleMethod::Bootstrap => {
                bootstrap_pvalue(sample, family, m, kernel, rule, self.replications, self.seed)
            }
            ResampleMethod::MonteCarlo => mc_pvalue(sample, family, m, kernel, rule, self.replications, self.seed),
        }
    }
}

fn check_replications(r: usize) -> Result<()> {
    if r < MIN_REPLICATIONS {
        return Err(Error::Config(format!("need at least {MIN_REPLICATIONS} replications, got {r}")));
    }
    Ok(())
}

fn check_family(family: TestFamily) -> Result<()> {
    if !family.is_modified() {
        return Err(Error::Config(format!("resampling corrections apply to modified families only, got {family}")));
    }
    Ok(())
}

/// Two-point values `(−(√5−1)/2, (√5+1)/2)` and the probability of the
/// negative one, `(√5+1)/(2√5)`.
pub fn mammen_support() -> (f64, f64, f64) {
    let s5 = 5f64.sqrt();
    (-(s5 - 1.0) / 2.0, (s5 + 1.0) / 2.0, (s5 + 1.0) / (2.0 * s5))
}

pub(crate) fn fill_mammen<F: Scalar>(rng: &mut StreamRng, out: &mut [F]) {
    let (lo, hi, p_lo) = mammen_support();
    let (lo, hi) = (F::lit(lo), F::lit(hi));
    for v in out.iter_mut() {
        *v = if rng.random::<f64>() < p_lo { lo } else { hi };
    }
}

/// `count` iid Mammen multipliers (mean 0, variance 1).
pub fn mammen_draw<F: Scalar>(count: usize, seed: u64) -> Vec<F> {
    let mut out = vec![F::zero(); count];
    fill_mammen(&mut rng_from_seed(seed), &mut out);
    out
}

/// `(1 + #{T ≥ T₀}) / (B_eff + 1)` over the replicates that succeeded.
pub fn counting_pvalue<F: Scalar>(observed: F, replicates: &[F]) -> F {
    let exceed = replicates.iter().filter(|t| **t >= observed).count();
    F::from_usize_lossy(1 + exceed) / F::from_usize_lossy(replicates.len() + 1)
}

/// Original-sample quantities shared by every replicate.
struct Baseline<F> {
    fit: ArFit<F>,
    path: VariancePathEstimate<F>,
    smoother: KernelSmoother<F>,
    statistic: F,
}

fn baseline<F: Scalar>(
    sample: &SeriesSample<F>,
    family: TestFamily,
    m: usize,
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
) -> Result<Baseline<F>> {
    check_family(family)?;
    let ols = ols_fit(sample)?;
    let b = select_bandwidth(&ols.squared_residuals(), kernel, rule)?;
    let smoother = KernelSmoother::new(sample.n(), b, kernel)?;
    let (fit, path) = als_fit_with_smoother(sample, &smoother, *rule)?;
    let statistic = weighted_family_statistic(family, &fit.residuals, &path.h2, m)?;
    Ok(Baseline { fit, path, smoother, statistic })
}

/// Splits replicate outcomes into statistics and a drop count.
fn collect<F: Scalar>(outcomes: Vec<Option<F>>) -> (Vec<F>, usize) {
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    (outcomes.into_iter().flatten().collect(), dropped)
}

/// Rebuilds `x*` from bootstrap innovations with the AR coefficients,
/// starting from the original presample values.
fn regenerate<F: Scalar>(sample: &SeriesSample<F>, coeffs: &[F], u: &[F]) -> Result<SeriesSample<F>> {
    let p = sample.p();
    let mut values = Vec::with_capacity(p + u.len());
    values.extend_from_slice(sample.presample());
    for (t, ut) in u.iter().enumerate() {
        let mut x = *ut;
        for (i, a) in coeffs.iter().enumerate() {
            x = x + *a * values[p + t - 1 - i];
        }
        values.push(x);
    }
    SeriesSample::new(values, p).map_err(|_| Error::SimulationDiverged { index: 0 })
}

/// Residual-bootstrap p-value for a modified adaptive family.
///
/// Each replicate resamples `ε̂_t = u_t(θ̃)/ĥ_t` with replacement, rebuilds
/// the series with `θ̃` and re-runs OLS, kernel smoothing at the original
/// numeric bandwidth and ALS.
pub fn bootstrap_pvalue<F: Scalar>(
    sample: &SeriesSample<F>,
    family: TestFamily,
    m: usize,
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
    replications: usize,
    seed: u64,
) -> Result<TestReport<F>> {
    check_replications(replications)?;
    let base = baseline(sample, family, m, kernel, rule)?;
    let n = sample.n();
    let h: Vec<F> = base.path.h2.iter().map(|v| v.sqrt()).collect();
    let pool: Vec<F> = base.fit.residuals.iter().zip(&h).map(|(u, s)| *u / *s).collect();

    let outcomes: Vec<Option<F>> = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, b as u64));
            let u: Vec<F> = h.iter().map(|s| pool[rng.random_range(0..n)] * *s).collect();
            let star = regenerate(sample, &base.fit.coeffs, &u).ok()?;
            let (fit, path) = als_fit_with_smoother(&star, &base.smoother, *rule).ok()?;
            weighted_family_statistic(family, &fit.residuals, &path.h2, m).ok().filter(|t| t.is_finite())
        })
        .collect();
    let (stats, dropped) = collect(outcomes);
    let pvalue = counting_pvalue(base.statistic, &stats);
    Ok(report_with_pvalue(
        family,
        m,
        base.statistic,
        pvalue,
        PvalueSource::Bootstrap(replications),
        base.path.bandwidth,
        dropped,
        replications,
    ))
}

/// Multipliers used by the Monte Carlo scheme; `Ones` is a test hook that
/// turns every perturbation off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multipliers {
    #[default]
    Mammen,
    Ones,
}

/// Wild Monte Carlo p-value for a modified adaptive family. `θ̃` and `ĥ`
/// are computed once; replicates only redraw the multipliers `η_t`.
pub fn mc_pvalue<F: Scalar>(
    sample: &SeriesSample<F>,
    family: TestFamily,
    m: usize,
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
    replications: usize,
    seed: u64,
) -> Result<TestReport<F>> {
    mc_pvalue_with(sample, family, m, kernel, rule, replications, seed, Multipliers::Mammen)
}

#[allow(clippy::too_many_arguments)]
pub fn mc_pvalue_with<F: Scalar>(
    sample: &SeriesSample<F>,
    family: TestFamily,
    m: usize,
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
    replications: usize,
    seed: u64,
    multipliers: Multipliers,
) -> Result<TestReport<F>> {
    check_replications(replications)?;
    let base = baseline(sample, family, m, kernel, rule)?;
    let u = &base.fit.residuals;
    let h2 = &base.path.h2;
    let n = u.len();
    if m >= n {
        return Err(Error::Domain(format!("need m < n, got m = {m}, n = {n}")));
    }
    let sq: Vec<F> = u.iter().map(|v| *v * *v).collect();
    let a: Vec<F> = sq.iter().zip(h2).map(|(s, h)| *s / *h - F::one()).collect();
    let d: Vec<F> = sq.iter().zip(h2).map(|(s, h)| *s - *h).collect();
    let scale = F::one() / (F::lit(2.0) * F::from_usize_lossy(n).sqrt());

    let outcomes: Vec<Option<F>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut eta = vec![F::one(); n];
            if multipliers == Multipliers::Mammen {
                fill_mammen(&mut rng_from_seed(derive_seed(seed, r as u64)), &mut eta);
            }
            let t = match family {
                TestFamily::LmAlsModified => {
                    // ξ_t component j: η_t a_t {η_{t−j}(u²_{t−j}/ĥ_t² − 1) + 1};
                    // lags before the sample start contribute nothing.
                    let mut s = vec![F::zero(); m];
                    for t in 0..n {
                        let lead = eta[t] * a[t];
                        for (j, sj) in s.iter_mut().enumerate().take(m.min(t)) {
                            let k = t - j - 1;
                            *sj = *sj + lead * (eta[k] * (sq[k] / h2[t] - F::one()) + F::one());
                        }
                    }
                    s.iter().map(|v| *v * scale * *v * scale).sum()
                }
                _ => {
                    let e: Vec<F> = eta.iter().zip(&d).map(|(x, y)| *x * *y).collect();
                    let (r, _) = autocorr_of(&e, m).ok()?;
                    lb_statistic(&r, n, m, F::one()).ok()?
                }
            };
            Some(t).filter(|v: &F| v.is_finite())
        })
        .collect();
    let (stats, dropped) = collect(outcomes);
    let pvalue = counting_pvalue(base.statistic, &stats);
    Ok(report_with_pvalue(
        family,
        m,
        base.statistic,
        pvalue,
        PvalueSource::MonteCarlo(replications),
        base.path.bandwidth,
        dropped,
        replications,
    ))
}

pub const DEFAULT_KNOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CalibrationSpec<F> {
    pub gamma_grid: Vec<F>,
    #[serde(default = "default_knots")]
    pub knots: usize,
    pub replications_per_gamma: usize,
    /// B or R used by each corrected test inside the calibration.
    #[serde(default = "default_resample_replications")]
    pub resample_replications: usize,
    pub target_level: F,
    pub test_family: TestFamily,
    pub m: usize,
}

fn default_knots() -> usize {
    DEFAULT_KNOTS
}

fn default_resample_replications() -> usize {
    199
}

impl<F: Scalar> CalibrationSpec<F> {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() {
            return Err(Error::Config("gamma grid is empty".into()));
        }
        if self.gamma_grid.iter().any(|g| !(*g > F::zero() && g.is_finite())) {
            return Err(Error::Config("gamma grid values must be positive".into()));
        }
        if self.gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("gamma grid must be strictly ascending".into()));
        }
        if self.knots < 4 {
            return Err(Error::Config(format!("need at least 4 interpolation knots, got {}", self.knots)));
        }
        if self.replications_per_gamma == 0 {
            return Err(Error::Config("replications_per_gamma must be positive".into()));
        }
        check_replications(self.resample_replications)?;
        if !(self.target_level > F::zero() && self.target_level <= F::one()) {
            return Err(Error::Config(format!("target level must lie in (0, 1], got {}", self.target_level)));
        }
        check_family(self.test_family)?;
        if self.m == 0 {
            return Err(Error::Config("lag count m must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CalibrationRow<F> {
    pub gamma: F,
    pub rejection_rate: F,
    /// Replications that produced a p-value.
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CalibrationResult<F> {
    pub gamma_star: F,
    pub table: Vec<CalibrationRow<F>>,
}

/// Piecewise-linear interpolation of `path` through `knots` equispaced
/// indices (first and last included).
pub fn knot_surrogate<F: Scalar>(path: &[F], knots: usize) -> Vec<F> {
    let n = path.len();
    let knots = knots.min(n).max(2);
    let idx: Vec<usize> = (0..knots).map(|k| (k * (n - 1) + (knots - 1) / 2) / (knots - 1)).collect();
    let mut out = Vec::with_capacity(n);
    for seg in idx.windows(2) {
        let (i0, i1) = (seg[0], seg[1]);
        let (v0, v1) = (path[i0], path[i1]);
        let span = F::from_usize_lossy(i1 - i0);
        for t in i0..i1 {
            let w = F::from_usize_lossy(t - i0) / span;
            out.push(v0 * (F::one() - w) + v1 * w);
        }
    }
    out.push(path[n - 1]);
    out
}

/// Picks `γ` whose corrected test rejects closest to `target_level` on null
/// series simulated from a smoothed version of the sample's variance path.
///
/// Replication `k` uses the same simulated series for every `γ`, so the
/// rate curve is free of between-γ simulation noise.
pub fn calibrate_gamma<F: Scalar>(
    sample: &SeriesSample<F>,
    cal: &CalibrationSpec<F>,
    kernel: KernelSpec,
    seed: u64,
) -> Result<CalibrationResult<F>> {
    cal.validate()?;
    let (fit, path) = als_fit(sample, kernel, &BandwidthRule::cross_validation())?;
    let surrogate = knot_surrogate(&path.h2, cal.knots);
    let h: Vec<F> = surrogate.iter().map(|v| v.sqrt()).collect();
    let pool: Vec<F> = fit.residuals.iter().zip(&h).map(|(u, s)| *u / *s).collect();
    let n = pool.len();

    let series: Vec<SeriesSample<F>> = (0..cal.replications_per_gamma)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, k as u64));
            let u: Vec<F> = h.iter().map(|s| pool[rng.random_range(0..n)] * *s).collect();
            SeriesSample::new(u, 0)
        })
        .collect::<Result<_>>()?;

    let method = if cal.test_family == TestFamily::LmAlsModified {
        ResampleMethod::Bootstrap
    } else {
        ResampleMethod::MonteCarlo
    };
    let mut table = Vec::with_capacity(cal.gamma_grid.len());
    for &gamma in &cal.gamma_grid {
        let rule = BandwidthRule::RuleOfThumb { gamma };
        let decisions: Vec<Option<bool>> = series
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                let spec = ResampleSpec {
                    method,
                    replications: cal.resample_replications,
                    seed: derive_seed(seed ^ 0x5EED, k as u64),
                };
                spec.run(s, cal.test_family, cal.m, kernel, &rule).ok().map(|r| r.rejects(cal.target_level))
            })
            .collect();
        let used = decisions.iter().flatten().count();
        if used == 0 {
            continue;
        }
        let rejected = decisions.iter().flatten().filter(|d| **d).count();
        table.push(CalibrationRow {
            gamma,
            rejection_rate: F::from_usize_lossy(rejected) / F::from_usize_lossy(used),
            replications: used,
        });
    }
    let best = table
        .iter()
        .fold(None::<&CalibrationRow<F>>, |best, row| match best {
            Some(b) if (b.rejection_rate - cal.target_level).abs() <= (row.rejection_rate - cal.target_level).abs() => {
                Some(b)
            }
            _ => Some(row),
        })
        .ok_or_else(|| Error::CalibrationFailed("no γ in the grid produced a usable rejection rate".into()))?;
    Ok(CalibrationResult { gamma_star: best.gamma, table })
}
