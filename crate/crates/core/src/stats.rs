//! Test statistics for second-order dynamics: the score (LM) and
//! portmanteau (LB) families in their standard, GLS, adaptive and modified
//! forms, with their ingredients and χ² p-values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::{als_fit, gls_fit, ols_fit};
use crate::kernelvar::{BandwidthRule, KernelSpec};
use crate::linalg::{inverse_quadratic_form, solve_spd, symmetric_eigenvalues};
use crate::model::{SeriesSample, VarianceProfile};
use crate::scalar::{mean, Scalar};

/// Floor on `Ê(ε⁴)` keeping Σ invertible.
pub const E_EPS4_FLOOR: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MomentEstimates<F> {
    /// Centered `Var(ε²)`.
    pub var_eps2: F,
    pub e_eps4: F,
    pub e_eps8: F,
    pub omega4: F,
    pub omega8: F,
}

impl<F: Scalar> MomentEstimates<F> {
    /// `ω₄²/ω₈`, the portmanteau correction factor.
    pub fn lb_correction(&self) -> F {
        self.omega4 * self.omega4 / self.omega8
    }
}

fn check_lengths<F>(residuals: &[F], h2: &[F]) -> Result<()> {
    if residuals.len() != h2.len() || residuals.is_empty() {
        return Err(Error::Domain(format!(
            "residuals ({}) and variance path ({}) must have the same nonzero length",
            residuals.len(),
            h2.len()
        )));
    }
    Ok(())
}

fn check_positive<F: Scalar>(h2: &[F]) -> Result<()> {
    match h2.iter().position(|h| !(*h > F::zero())) {
        Some(i) => Err(Error::Domain(format!("variance path entry at t = {} is not positive", i + 1))),
        None => Ok(()),
    }
}

pub fn moment_estimates<F: Scalar>(residuals: &[F], h2: &[F]) -> Result<MomentEstimates<F>> {
    check_lengths(residuals, h2)?;
    check_positive(h2)?;
    let nf = F::from_usize_lossy(residuals.len());
    let (mut s2, mut s4, mut s8, mut u4, mut u8) = (F::zero(), F::zero(), F::zero(), F::zero(), F::zero());
    for (u, h) in residuals.iter().zip(h2) {
        let e2 = *u * *u / *h;
        let e4 = e2 * e2;
        s2 = s2 + e2;
        s4 = s4 + e4;
        s8 = s8 + e4 * e4;
        let q = (*u * *u) * (*u * *u);
        u4 = u4 + q;
        u8 = u8 + q * q;
    }
    let (m2, m4, m8) = (s2 / nf, s4 / nf, s8 / nf);
    let var_eps2 = (m4 - m2 * m2).max(F::zero());
    let e_eps4 = m4.max(F::lit(E_EPS4_FLOOR));
    // Jensen: E ε⁸ ≥ (E ε⁴)², which also keeps it positive.
    let e_eps8 = m8.max(e_eps4 * e_eps4);
    Ok(MomentEstimates { var_eps2, e_eps4, e_eps8, omega4: (u4 / nf) / e_eps4, omega8: (u8 / nf) / e_eps8 })
}

/// `Σ = (V/4)[(κ − 1) I + J]` with `V = Var(ε²)` and `κ = E ε⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SigmaMatrix<F> {
    pub m: usize,
    /// Row-major `m × m`.
    pub matrix: Vec<F>,
    /// Set when `κ ≤ 1` (before flooring) or `V = 0`.
    pub near_singular: bool,
    var_eps2: F,
    kappa: F,
}

impl<F: Scalar> SigmaMatrix<F> {
    pub fn new(mom: &MomentEstimates<F>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("lag count m must be at least 1".into()));
        }
        let quarter = mom.var_eps2 / F::lit(4.0);
        let mut matrix = vec![quarter; m * m];
        for i in 0..m {
            matrix[i * m + i] = quarter * mom.e_eps4;
        }
        let near_singular = mom.e_eps4 <= F::lit(E_EPS4_FLOOR) || !(mom.var_eps2 > F::zero());
        Ok(SigmaMatrix { m, matrix, near_singular, var_eps2: mom.var_eps2, kappa: mom.e_eps4 })
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.matrix[i * self.m + j]
    }

    /// Eigenvalues by Jacobi iteration, decreasing.
    pub fn eigenvalues(&self) -> Vec<F> {
        symmetric_eigenvalues(&self.matrix, self.m)
    }

    /// `(V/4)(κ − 1 + m)` once, then `(V/4)(κ − 1)` repeated `m − 1` times.
    pub fn closed_form_eigenvalues(&self) -> Vec<F> {
        let q = self.var_eps2 / F::lit(4.0);
        let mut out = vec![q * (self.kappa - F::one()); self.m];
        out[0] = q * (self.kappa - F::one() + F::from_usize_lossy(self.m));
        out
    }
}

pub fn sigma_matrix<F: Scalar>(mom: &MomentEstimates<F>, m: usize) -> Result<SigmaMatrix<F>> {
    SigmaMatrix::new(mom, m)
}

/// Normalized score at the no-ARCH constraint,
/// `S_j = (1/2√n) Σ_t (u_t²/h_t² − 1)(u²_{t−j}/h_t²)`, with `u_s = 0` for `s ≤ 0`.
///
/// The lagged squares are divided by `h_t²`, the variance at the current
/// index, not by `h²_{t−j}`.
pub fn score_vector<F: Scalar>(residuals: &[F], h2: &[F], m: usize) -> Result<Vec<F>> {
    check_lengths(residuals, h2)?;
    check_positive(h2)?;
    let n = residuals.len();
    let mut s = vec![F::zero(); m];
    for t in 0..n {
        let a = residuals[t] * residuals[t] / h2[t] - F::one();
        for (j, sj) in s.iter_mut().enumerate().take(m.min(t)) {
            let lag = residuals[t - j - 1];
            *sj = *sj + a * (lag * lag / h2[t]);
        }
    }
    let scale = F::one() / (F::lit(2.0) * F::from_usize_lossy(n).sqrt());
    Ok(s.into_iter().map(|v| v * scale).collect())
}

/// `S' Σ⁻¹ S`.
pub fn lm_statistic<F: Scalar>(residuals: &[F], h2: &[F], m: usize, sigma: &SigmaMatrix<F>) -> Result<F> {
    if sigma.m != m {
        return Err(Error::Domain(format!("Σ is {0}x{0} but m = {m}", sigma.m)));
    }
    let s = score_vector(residuals, h2, m)?;
    inverse_quadratic_form(&sigma.matrix, &s, m)
}

/// `S'S`, the modified LM statistic without the weight matrix.
pub fn modified_lm_statistic<F: Scalar>(residuals: &[F], h2: &[F], m: usize) -> Result<F> {
    Ok(score_vector(residuals, h2, m)?.iter().map(|v| *v * *v).sum())
}

/// Autocorrelations `r(i) = γ(i)/γ(0)`, `i = 1..m`, of `u_t² − center_t`.
/// `γ(0)` sums over all `t`; `γ(i)` over `t = 1+i..n`.
pub fn squared_resid_autocorr<F: Scalar>(residuals: &[F], center: &[F], m: usize) -> Result<(Vec<F>, F)> {
    check_lengths(residuals, center)?;
    let d: Vec<F> = residuals.iter().zip(center).map(|(u, c)| *u * *u - *c).collect();
    autocorr_of(&d, m)
}

pub(crate) fn autocorr_of<F: Scalar>(d: &[F], m: usize) -> Result<(Vec<F>, F)> {
    let n = d.len();
    if m >= n {
        return Err(Error::Domain(format!("need m < n, got m = {m}, n = {n}")));
    }
    let nf = F::from_usize_lossy(n);
    let gamma0 = d.iter().map(|v| *v * *v).sum::<F>() / nf;
    if !(gamma0 > F::zero()) {
        return Err(Error::DegenerateInput("squared residuals coincide with their centering (γ(0) = 0)".into()));
    }
    let r = (1..=m).map(|i| d[i..].iter().zip(d).map(|(a, b)| *a * *b).sum::<F>() / nf / gamma0).collect();
    Ok((r, gamma0))
}

/// `n(n+2) Σᵢ r(i)²/(n−i) × correction`.
pub fn lb_statistic<F: Scalar>(r: &[F], n: usize, m: usize, correction: F) -> Result<F> {
    if n <= m || r.len() != m {
        return Err(Error::Domain(format!(
            "need n > m and m autocorrelations, got n = {n}, m = {m}, {} values",
            r.len()
        )));
    }
    if !(correction > F::zero()) {
        return Err(Error::Domain(format!("correction must be positive, got {correction}")));
    }
    let nf = F::from_usize_lossy(n);
    let sum: F = r.iter().enumerate().map(|(k, v)| *v * *v / (nf - F::from_usize_lossy(k + 1))).sum();
    Ok(nf * (nf + F::lit(2.0)) * sum * correction)
}

/// Engle's `(n − m) R²` from regressing `u_t²` on a constant and
/// `u²_{t−1}, …, u²_{t−m}` over `t = m+1..n`.
pub fn engle_lm_statistic<F: Scalar>(residuals: &[F], m: usize) -> Result<F> {
    let n = residuals.len();
    if m == 0 || n < m + m + 3 {
        return Err(Error::Domain(format!("need m >= 1 and n >= 2m + 3, got m = {m}, n = {n}")));
    }
    let sq: Vec<F> = residuals.iter().map(|u| *u * *u).collect();
    let rows = n - m;
    let rf = F::from_usize_lossy(rows);
    // Centering every column absorbs the intercept and improves conditioning.
    let y_mean = sq[m..].iter().copied().sum::<F>() / rf;
    let x_mean: Vec<F> = (1..=m).map(|j| sq[m - j..n - j].iter().copied().sum::<F>() / rf).collect();
    let mut gram = vec![F::zero(); m * m];
    let mut rhs = vec![F::zero(); m];
    let mut sst = F::zero();
    let mut x = vec![F::zero(); m];
    for t in m..n {
        let y = sq[t] - y_mean;
        sst = sst + y * y;
        for j in 0..m {
            x[j] = sq[t - j - 1] - x_mean[j];
        }
        for i in 0..m {
            rhs[i] = rhs[i] + x[i] * y;
            for j in 0..=i {
                gram[i * m + j] = gram[i * m + j] + x[i] * x[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            gram[j * m + i] = gram[i * m + j];
        }
    }
    if !(sst > F::zero()) {
        return Err(Error::DegenerateInput("squared residuals are constant".into()));
    }
    let beta = solve_spd(&gram, &rhs, m)?;
    // Explained sum of squares of the centered regression.
    let ess: F = beta.iter().zip(&rhs).map(|(b, r)| *b * *r).sum();
    let r2 = (ess / sst).max(F::zero()).min(F::one());
    Ok(rf * r2)
}

/// `∫g⁴ − (∫g²)²`, the per-observation drift of the standard portmanteau
/// statistic under a non-constant variance profile. The quadrature
/// tolerance is `1e-10` relative to `max g⁴`.
pub fn divergence_constant<F: Scalar>(profile: &VarianceProfile<F>) -> Result<F> {
    profile.validate()?;
    let scale =
        (1..=1000).map(|k| profile.value(F::from_usize_lossy(k) / F::lit(1000.0)).powi(4)).fold(F::zero(), F::max);
    let tol = (F::lit(1e-10) * scale).max(F::min_positive_value());
    let i4 = profile.moment_integral(4, tol);
    let i2 = profile.moment_integral(2, tol);
    let d = i4 - i2 * i2;
    // Rounding can leave a tiny negative for constant profiles.
    Ok(if d.abs() <= F::lit(1e-12) * scale { F::zero() } else { d.max(F::zero()) })
}

/// Upper tail `P(χ²_m > statistic)`.
pub fn chisq_pvalue<F: Scalar>(statistic: F, m: usize) -> Result<F> {
    if m == 0 {
        return Err(Error::Domain("χ² degrees of freedom must be positive".into()));
    }
    let x = statistic.as_f64();
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("statistic must be nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(F::one());
    }
    let dist = ChiSquared::new(m as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(F::lit(dist.sf(x).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    LmStandard,
    LbStandard,
    LmGls,
    LbGls,
    LmAls,
    LbAls,
    LmAlsModified,
    LbAlsModified,
}

impl TestFamily {
    pub const ALL: [TestFamily; 8] = [
        TestFamily::LmStandard,
        TestFamily::LbStandard,
        TestFamily::LmGls,
        TestFamily::LbGls,
        TestFamily::LmAls,
        TestFamily::LbAls,
        TestFamily::LmAlsModified,
        TestFamily::LbAlsModified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestFamily::LmStandard => "lm_standard",
            TestFamily::LbStandard => "lb_standard",
            TestFamily::LmGls => "lm_gls",
            TestFamily::LbGls => "lb_gls",
            TestFamily::LmAls => "lm_als",
            TestFamily::LbAls => "lb_als",
            TestFamily::LmAlsModified => "lm_als_modified",
            TestFamily::LbAlsModified => "lb_als_modified",
        }
    }

    pub fn is_lm(self) -> bool {
        matches!(self, TestFamily::LmStandard | TestFamily::LmGls | TestFamily::LmAls | TestFamily::LmAlsModified)
    }

    pub fn is_modified(self) -> bool {
        matches!(self, TestFamily::LmAlsModified | TestFamily::LbAlsModified)
    }

    pub fn needs_kernel(self) -> bool {
        matches!(self, TestFamily::LmAls | TestFamily::LbAls | TestFamily::LmAlsModified | TestFamily::LbAlsModified)
    }

    pub fn needs_known_variance(self) -> bool {
        matches!(self, TestFamily::LmGls | TestFamily::LbGls)
    }
}

impl fmt::Display for TestFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TestFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown test family '{s}'")))
    }
}

/// Where a p-value came from. Serialized as `chisq_asymptotic`,
/// `bootstrap(B)`, `monte_carlo(R)` or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PvalueSource {
    ChisqAsymptotic,
    Bootstrap(usize),
    MonteCarlo(usize),
    None,
}

impl fmt::Display for PvalueSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PvalueSource::ChisqAsymptotic => f.write_str("chisq_asymptotic"),
            PvalueSource::Bootstrap(b) => write!(f, "bootstrap({b})"),
            PvalueSource::MonteCarlo(r) => write!(f, "monte_carlo({r})"),
            PvalueSource::None => f.write_str("none"),
        }
    }
}

impl From<PvalueSource> for String {
    fn from(p: PvalueSource) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PvalueSource {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for PvalueSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let count =
            |inner: &str| inner.parse::<usize>().map_err(|_| Error::Config(format!("bad replication count in '{s}'")));
        match s {
            "chisq_asymptotic" => Ok(PvalueSource::ChisqAsymptotic),
            "none" => Ok(PvalueSource::None),
            _ => {
                if let Some(inner) = s.strip_prefix("bootstrap(").and_then(|r| r.strip_suffix(')')) {
                    Ok(PvalueSource::Bootstrap(count(inner)?))
                } else if let Some(inner) = s.strip_prefix("monte_carlo(").and_then(|r| r.strip_suffix(')')) {
                    Ok(PvalueSource::MonteCarlo(count(inner)?))
                } else {
                    Err(Error::Config(format!("unknown p-value source '{s}'")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TestReport<F> {
    pub family: TestFamily,
    pub m: usize,
    pub statistic: F,
    /// Absent for modified families until a resampling correction runs.
    pub pvalue: Option<F>,
    pub pvalue_source: PvalueSource,
    /// Bandwidth used by adaptive families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<F>,
    /// Resampling replicates that failed and were dropped.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped_replicates: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl<F: Scalar> TestReport<F> {
    fn new(family: TestFamily, m: usize, statistic: F, pvalue: Option<F>, pvalue_source: PvalueSource) -> Self {
        TestReport {
            family,
            m,
            statistic,
            pvalue,
            pvalue_source,
            bandwidth: None,
            dropped_replicates: 0,
            warnings: Vec::new(),
        }
    }

    /// True if the p-value is available and at most `level`.
    pub fn rejects(&self, level: F) -> bool {
        self.pvalue.is_some_and(|p| p <= level)
    }
}

/// Variance information a test family needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
#[serde(bound = "F: Scalar")]
pub enum VarianceSource<F> {
    None,
    Known { h2: Vec<F> },
    Kernel { kernel: KernelSpec, rule: BandwidthRule<F> },
}

/// Statistic of a family that uses a variance path (`h2` known or
/// estimated) on residuals from the matching fit.
pub fn weighted_family_statistic<F: Scalar>(family: TestFamily, residuals: &[F], h2: &[F], m: usize) -> Result<F> {
    let n = residuals.len();
    match family {
        TestFamily::LmGls | TestFamily::LmAls => {
            let mom = moment_estimates(residuals, h2)?;
            let sigma = sigma_matrix(&mom, m)?;
            lm_statistic(residuals, h2, m, &sigma)
        }
        TestFamily::LbGls | TestFamily::LbAls => {
            let mom = moment_estimates(residuals, h2)?;
            let (r, _) = squared_resid_autocorr(residuals, h2, m)?;
            lb_statistic(&r, n, m, mom.lb_correction())
        }
        TestFamily::LmAlsModified => modified_lm_statistic(residuals, h2, m),
        TestFamily::LbAlsModified => {
            let (r, _) = squared_resid_autocorr(residuals, h2, m)?;
            lb_statistic(&r, n, m, F::one())
        }
        TestFamily::LmStandard | TestFamily::LbStandard => {
            Err(Error::Config(format!("{family} does not use a variance path")))
        }
    }
}

/// Standard statistics on OLS residuals: Engle's `TR²` for the LM test and
/// the Ljung–Box form centered at `ω̄₂ = mean(u²)` for the portmanteau.
pub fn standard_statistic<F: Scalar>(family: TestFamily, residuals: &[F], m: usize) -> Result<F> {
    match family {
        TestFamily::LmStandard => engle_lm_statistic(residuals, m),
        TestFamily::LbStandard => {
            let sq: Vec<F> = residuals.iter().map(|u| *u * *u).collect();
            let omega2 = mean(&sq);
            let d: Vec<F> = sq.iter().map(|v| *v - omega2).collect();
            let (r, _) = autocorr_of(&d, m)?;
            lb_statistic(&r, residuals.len(), m, F::one())
        }
        other => Err(Error::Config(format!("{other} is not a standard test"))),
    }
}

/// Fits the estimator matching `family`, computes the statistic and, for
/// unmodified families, its asymptotic χ²_m p-value. Modified families
/// return `pvalue = None`; see the `resample` module for their p-values.
pub fn run_test<F: Scalar>(
    sample: &SeriesSample<F>,
    family: TestFamily,
    m: usize,
    variance: &VarianceSource<F>,
) -> Result<TestReport<F>> {
    if m == 0 {
        return Err(Error::Config("lag count m must be at least 1".into()));
    }
    let (statistic, bandwidth) = match (family, variance) {
        (TestFamily::LmStandard | TestFamily::LbStandard, VarianceSource::None) => {
            let fit = ols_fit(sample)?;
            (standard_statistic(family, &fit.residuals, m)?, None)
        }
        (TestFamily::LmGls | TestFamily::LbGls, VarianceSource::Known { h2 }) => {
            let fit = gls_fit(sample, h2)?;
            (weighted_family_statistic(family, &fit.residuals, h2, m)?, None)
        }
        (f, VarianceSource::Kernel { kernel, rule }) if f.needs_kernel() => {
            let (fit, path) = als_fit(sample, *kernel, rule)?;
            (weighted_family_statistic(family, &fit.residuals, &path.h2, m)?, Some(path.bandwidth))
        }
        (f, v) => {
            let wanted = if f.needs_kernel() {
                "kernel"
            } else if f.needs_known_variance() {
                "known"
            } else {
                "none"
            };
            let got = match v {
                VarianceSource::None => "none",
                VarianceSource::Known { .. } => "known",
                VarianceSource::Kernel { .. } => "kernel",
            };
            return Err(Error::Config(format!("{f} needs a '{wanted}' variance source, got '{got}'")));
        }
    };
    let mut report = if family.is_modified() {
        TestReport::new(family, m, statistic, None, PvalueSource::None)
    } else {
        TestReport::new(family, m, statistic, Some(chisq_pvalue(statistic, m)?), PvalueSource::ChisqAsymptotic)
    };
    report.bandwidth = bandwidth;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn report_with_pvalue<F: Scalar>(
    family: TestFamily,
    m: usize,
    statistic: F,
    pvalue: F,
    source: PvalueSource,
    bandwidth: F,
    dropped: usize,
    replications: usize,
) -> TestReport<F> {
    let mut r = TestReport::new(family, m, statistic, Some(pvalue), source);
    r.bandwidth = Some(bandwidth);
    r.dropped_replicates = dropped;
    if dropped * 20 > replications {
        r.warnings.push(format!("{dropped} of {replications} replicates failed; p-value may be unreliable"));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_detailed, DgpSpec};
    use crate::rng::rng_from_seed;
    use rand::RngExt;

    /// Quasi log-likelihood `−½ Σ (log h̃_t² + u_t²/h̃_t²)` with
    /// `h̃_t² = h_t² + Σ α_j u²_{t−j}`.
    fn loglik(u: &[f64], h2: &[f64], alpha: &[f64]) -> f64 {
        let mut l = 0.0;
        for t in 0..u.len() {
            let mut ht = h2[t];
            for (j, a) in alpha.iter().enumerate() {
                if t > j {
                    ht += a * u[t - j - 1] * u[t - j - 1];
                }
            }
            l += ht.ln() + u[t] * u[t] / ht;
        }
        -0.5 * l
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let n = 30;
            let m = 3;
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h2: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let s = score_vector(&u, &h2, m).unwrap();
            for j in 0..m {
                let eps = 1e-6;
                let mut up = vec![0.0; m];
                let mut dn = vec![0.0; m];
                up[j] = eps;
                dn[j] = -eps;
                let g = (loglik(&u, &h2, &up) - loglik(&u, &h2, &dn)) / (2.0 * eps) / (n as f64).sqrt();
                assert!((s[j] - g).abs() <= 1e-6 * g.abs().max(1e-3), "{} vs {g}", s[j]);
            }
        }
    }

    #[test]
    fn score_examples() {
        let s = score_vector(&[1.0, 2.0, 1.0], &[1.0, 1.0, 1.0], 1).unwrap();
        assert!((s[0] - 3.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
        let h2 = [1.0, 4.0, 9.0, 2.0];
        let u: Vec<f64> = h2.iter().map(|h: &f64| h.sqrt()).collect();
        assert!(score_vector(&u, &h2, 2).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn sigma_examples() {
        let mom: MomentEstimates<f64> =
            MomentEstimates { var_eps2: 2.0, e_eps4: 3.0, e_eps8: 105.0, omega4: 1.0, omega8: 1.0 };
        let s1 = sigma_matrix(&mom, 1).unwrap();
        assert_eq!(s1.matrix, vec![1.5]);
        let s2 = sigma_matrix(&mom, 2).unwrap();
        assert_eq!(s2.matrix, vec![1.5, 0.5, 0.5, 1.5]);
        let e = s2.eigenvalues();
        assert!((e[0] - 2.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        assert!(!s2.near_singular);
    }

    #[test]
    fn sigma_eigenvalues_match_closed_form() {
        let mut rng = rng_from_seed(8);
        for m in 1..=8 {
            let mom: MomentEstimates<f64> = MomentEstimates {
                var_eps2: rng.random_range(0.1..5.0),
                e_eps4: rng.random_range(1.01..9.0),
                e_eps8: 1.0,
                omega4: 1.0,
                omega8: 1.0,
            };
            let s = sigma_matrix(&mom, m).unwrap();
            for (a, b) in s.eigenvalues().iter().zip(s.closed_form_eigenvalues()) {
                assert!((a - b).abs() < 1e-9, "m = {m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn degenerate_innovations_floor_kappa() {
        let h2 = vec![1.0, 4.0, 9.0, 16.0];
        let u: Vec<f64> = h2.iter().map(|h: &f64| h.sqrt()).collect();
        let mom = moment_estimates(&u, &h2).unwrap();
        assert_eq!(mom.var_eps2, 0.0);
        assert_eq!(mom.e_eps4, E_EPS4_FLOOR);
        let s = sigma_matrix(&mom, 2).unwrap();
        assert!(s.near_singular);
        // κ → 1 leaves the rank-one matrix (V/4)J.
        let mom = MomentEstimates { var_eps2: 2.0, e_eps4: E_EPS4_FLOOR, e_eps8: 2.0, omega4: 1.0, omega8: 1.0 };
        let e = sigma_matrix(&mom, 3).unwrap().eigenvalues();
        assert!((e[0] - 1.5).abs() < 1e-9 && e[1].abs() < 1e-9 && e[2].abs() < 1e-9);
    }

    #[test]
    fn gaussian_moments() {
        let eps: Vec<f64> =
            crate::model::draw_innovations(crate::model::InnovationSpec::StandardGaussian, 1_000_000, 21);
        let mom = moment_estimates(&eps, &vec![1.0; eps.len()]).unwrap();
        assert!((mom.e_eps4 - 3.0).abs() < 0.05);
        assert!((mom.var_eps2 - 2.0).abs() < 0.05);
    }

    #[test]
    fn omegas_approach_powers_of_constant_level() {
        let c: f64 = 3.0;
        let sim = simulate_detailed(&DgpSpec::null(VarianceProfile::Constant { level: c }, 200_000, 17)).unwrap();
        let mom = moment_estimates(&sim.u, &vec![c * c; 200_000]).unwrap();
        assert!((mom.omega4 / c.powi(4) - 1.0).abs() < 1e-9);
        assert!((mom.omega8 / c.powi(8) - 1.0).abs() < 1e-9);
        assert!((mom.lb_correction() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lm_statistic_scalar_case() {
        let u = [0.3, -1.2, 2.0, 0.7, -0.4, 1.1];
        let h2 = [1.0, 1.5, 2.0, 1.2, 0.8, 1.0];
        let s = score_vector(&u, &h2, 1).unwrap()[0];
        let mom: MomentEstimates<f64> =
            MomentEstimates { var_eps2: 2.0, e_eps4: 3.0, e_eps8: 1.0, omega4: 1.0, omega8: 1.0 };
        let sigma = sigma_matrix(&mom, 1).unwrap();
        let lm = lm_statistic(&u, &h2, 1, &sigma).unwrap();
        assert!((lm - s * s / 1.5).abs() < 1e-14);
        let modified = modified_lm_statistic(&u, &h2, 1).unwrap();
        assert!((modified - lm * 1.5).abs() < 1e-14);
    }

    #[test]
    fn autocorr_examples() {
        let h2 = [1.0, 4.0, 9.0];
        let u = [1.0, -2.0, 3.0];
        assert!(matches!(squared_resid_autocorr(&u, &h2, 1), Err(Error::DegenerateInput(_))));
        // d = (1, -1, 2): γ0 = 6/3, γ1 = (-1 - 2)/3.
        let (r, g0) = squared_resid_autocorr::<f64>(&[1.0, 0.0, 2.0], &[0.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(g0, 2.0);
        assert!((r[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn iid_autocorrelations_are_small() {
        let eps: Vec<f64> = crate::model::draw_innovations(crate::model::InnovationSpec::StandardGaussian, 100_000, 5);
        let sq: Vec<f64> = eps.iter().map(|e| e * e).collect();
        let c = vec![mean(&sq); sq.len()];
        let (r, _) = squared_resid_autocorr(&eps, &c, 5).unwrap();
        assert!(r.iter().all(|v| v.abs() < 0.01), "{r:?}");
    }

    #[test]
    fn arch_autocorrelation_is_positive() {
        let mut spec = DgpSpec::null(VarianceProfile::Constant { level: 1.0 }, 100_000, 6);
        spec.arch_alpha = vec![0.4];
        let sim = simulate_detailed(&spec).unwrap();
        let sq: Vec<f64> = sim.u.iter().map(|e| e * e).collect();
        let c = vec![mean(&sq); sq.len()];
        let (r, _) = squared_resid_autocorr(&sim.u, &c, 1).unwrap();
        assert!(r[0] > 0.15, "{}", r[0]);
    }

    #[test]
    fn lb_examples() {
        assert_eq!(lb_statistic(&[0.0, 0.0], 50, 2, 1.0).unwrap(), 0.0);
        let q = lb_statistic(&[0.1_f64], 100, 1, 1.0).unwrap();
        assert!((q - 100.0 * 102.0 * 0.01 / 99.0).abs() < 1e-12);
        assert!((q - 1.0303).abs() < 1e-4);
        assert!(lb_statistic(&[0.1], 1, 1, 1.0).is_err());
    }

    #[test]
    fn engle_statistic_detects_arch_and_is_scale_free() {
        let mut spec = DgpSpec::null(VarianceProfile::Constant { level: 1.0 }, 2000, 31);
        spec.arch_alpha = vec![0.5];
        let sim = simulate_detailed(&spec).unwrap();
        let lm = engle_lm_statistic(&sim.u, 1).unwrap();
        assert!(lm > 20.0, "{lm}");
        let scaled: Vec<f64> = sim.u.iter().map(|u| u * 8.0).collect();
        assert!((engle_lm_statistic(&scaled, 1).unwrap() / lm - 1.0).abs() < 1e-10);
        assert!(matches!(engle_lm_statistic(&[1.0; 20], 2), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence_constant(&VarianceProfile::Constant { level: 20.0 }).unwrap(), 0.0);
        let step: VarianceProfile<f64> =
            VarianceProfile::PiecewiseConstant { breakpoints: vec![0.5], levels: vec![1.0, 2.0] };
        assert!((divergence_constant(&step).unwrap() - 2.25).abs() < 1e-8);
        let sin = VarianceProfile::<f64>::benchmark_sinusoid();
        let d = divergence_constant(&sin).unwrap();
        // Independent midpoint rule on a fine grid.
        let k = 400_000;
        let (mut i2, mut i4) = (0.0, 0.0);
        for j in 0..k {
            let g = sin.eval((j as f64 + 0.5) / k as f64).unwrap();
            i2 += g * g / k as f64;
            i4 += g.powi(4) / k as f64;
        }
        let oracle = i4 - i2 * i2;
        assert!(d > 0.0);
        assert!(((d - oracle) / oracle).abs() < 1e-8, "{d} vs {oracle}");
    }

    #[test]
    fn chisq_pvalues() {
        assert_eq!(chisq_pvalue(0.0_f64, 3).unwrap(), 1.0);
        assert!((chisq_pvalue(3.8415_f64, 1).unwrap() - 0.05).abs() < 1e-4);
        assert!((chisq_pvalue(12.592_f64, 6).unwrap() - 0.05).abs() < 1e-4);
        for x in [0.1, 1.0, 5.0, 20.0, 60.0] {
            assert!((chisq_pvalue(x, 2).unwrap() - (-x / 2.0_f64).exp()).abs() < 1e-12);
            let four = (-x / 2.0_f64).exp() * (1.0 + x / 2.0);
            assert!((chisq_pvalue(x, 4).unwrap() - four).abs() < 1e-12);
        }
        assert!(chisq_pvalue(-1.0_f64, 1).is_err());
    }

    #[test]
    fn chisq_pvalue_matches_density_integral() {
        // χ²₁ density integrated by substitution x = s² to remove the pole.
        let tail = |x: f64| {
            let f = |s: f64| 2.0 * (-s * s / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            1.0 - crate::quadrature::adaptive_simpson(&f, 0.0, x.sqrt(), 1e-14)
        };
        for x in [0.5, 3.8415, 9.0] {
            assert!((chisq_pvalue(x, 1).unwrap() - tail(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn pvalue_source_strings() {
        for (src, s) in [
            (PvalueSource::ChisqAsymptotic, "\"chisq_asymptotic\""),
            (PvalueSource::Bootstrap(199), "\"bootstrap(199)\""),
            (PvalueSource::MonteCarlo(499), "\"monte_carlo(499)\""),
            (PvalueSource::None, "\"none\""),
        ] {
            assert_eq!(serde_json::to_string(&src).unwrap(), s);
            assert_eq!(serde_json::from_str::<PvalueSource>(s).unwrap(), src);
        }
        assert!("bootstrap(x)".parse::<PvalueSource>().is_err());
    }

    #[test]
    fn report_json_schema() {
        let r = TestReport::new(TestFamily::LbGls, 1, 2.5_f64, Some(0.11), PvalueSource::ChisqAsymptotic);
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["family"], "lb_gls");
        assert_eq!(v["pvalue_source"], "chisq_asymptotic");
        let back: TestReport<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn run_test_checks_variance_source() {
        let sim = simulate_detailed(&DgpSpec::null(VarianceProfile::Constant { level: 1.0 }, 100, 1)).unwrap();
        let known = VarianceSource::Known { h2: vec![1.0; 100] };
        let kernel = VarianceSource::Kernel { kernel: KernelSpec::Gaussian, rule: BandwidthRule::cross_validation() };
        assert!(matches!(run_test(&sim.sample, TestFamily::LmStandard, 1, &known), Err(Error::Config(_))));
        assert!(matches!(run_test(&sim.sample, TestFamily::LbGls, 1, &VarianceSource::None), Err(Error::Config(_))));
        assert!(matches!(run_test(&sim.sample, TestFamily::LmAls, 1, &known), Err(Error::Config(_))));
        let r = run_test(&sim.sample, TestFamily::LbAlsModified, 2, &kernel).unwrap();
        assert_eq!(r.pvalue, None);
        assert_eq!(r.pvalue_source, PvalueSource::None);
        let r = run_test(&sim.sample, TestFamily::LbAls, 2, &kernel).unwrap();
        assert!(r.pvalue.unwrap() > 0.0 && r.statistic >= 0.0);
    }

    #[test]
    fn statistics_are_scale_invariant() {
        let mut spec = DgpSpec::null(VarianceProfile::<f64>::benchmark_sinusoid(), 300, 14);
        spec.ar_coeffs = vec![0.4];
        let sim = simulate_detailed(&spec).unwrap();
        let c = 3.0;
        let big = sim.sample.scaled(c);
        let h2: Vec<f64> = sim.h.iter().map(|h| h * h).collect();
        let h2c: Vec<f64> = h2.iter().map(|h| h * c * c).collect();
        let kernel = VarianceSource::Kernel { kernel: KernelSpec::Gaussian, rule: BandwidthRule::Fixed { b: 0.2 } };
        for m in [1, 3] {
            let cases = [
                (TestFamily::LbStandard, VarianceSource::None, VarianceSource::None),
                (TestFamily::LmStandard, VarianceSource::None, VarianceSource::None),
                (
                    TestFamily::LmGls,
                    VarianceSource::Known { h2: h2.clone() },
                    VarianceSource::Known { h2: h2c.clone() },
                ),
                (
                    TestFamily::LbGls,
                    VarianceSource::Known { h2: h2.clone() },
                    VarianceSource::Known { h2: h2c.clone() },
                ),
                (TestFamily::LmAls, kernel.clone(), kernel.clone()),
                (TestFamily::LbAls, kernel.clone(), kernel.clone()),
                (TestFamily::LbAlsModified, kernel.clone(), kernel.clone()),
                (TestFamily::LmAlsModified, kernel.clone(), kernel.clone()),
            ];
            for (family, a, b) in cases {
                let x = run_test(&sim.sample, family, m, &a).unwrap().statistic;
                let y = run_test(&big, family, m, &b).unwrap().statistic;
                assert!(((x - y) / x).abs() < 1e-8, "{family} m={m}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn f32_pipeline_runs() {
        let spec: DgpSpec<f32> = DgpSpec::null(VarianceProfile::benchmark_sinusoid(), 200, 3);
        let sim = simulate_detailed(&spec).unwrap();
        let r = run_test(&sim.sample, TestFamily::LbStandard, 1, &VarianceSource::None).unwrap();
        assert!(r.statistic.is_finite() && r.pvalue.unwrap() <= 1.0);
    }
}
