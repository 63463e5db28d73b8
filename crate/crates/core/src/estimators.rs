//! AR(p) coefficient estimation: OLS, GLS with a known variance path, and
//! adaptive least squares (ALS) with a kernel-estimated path.
//!
//! All three solve the weighted normal equations
//! `{Σ w_t x̲_{t−1} x̲_{t−1}'} θ = Σ w_t x̲_{t−1} x_t` for `t = 1..n`, using the
//! presample values as regressors so no observation is dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelvar::{estimate_with_rule, BandwidthRule, KernelSmoother, KernelSpec, VariancePathEstimate};
use crate::linalg::solve_spd;
use crate::model::SeriesSample;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Ols,
    Gls,
    Als,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ArFit<F> {
    pub coeffs: Vec<F>,
    pub kind: FitKind,
    /// `u_t(θ)` for `t = 1..n`.
    pub residuals: Vec<F>,
    /// Variance path behind the weights; `None` for OLS.
    pub variance_path_used: Option<Vec<F>>,
}

/// Summary written by [`ArFit::summary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ArFitSummary<F> {
    pub kind: FitKind,
    pub coeffs: Vec<F>,
    pub n: usize,
    pub p: usize,
}

impl<F: Scalar> ArFit<F> {
    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn squared_residuals(&self) -> Vec<F> {
        self.residuals.iter().map(|u| *u * *u).collect()
    }

    pub fn summary(&self) -> ArFitSummary<F> {
        ArFitSummary { kind: self.kind, coeffs: self.coeffs.clone(), n: self.n(), p: self.p() }
    }
}

/// `u_t = x_t − Σᵢ θᵢ x_{t−i}` for `t = 1..n`.
pub fn residuals<F: Scalar>(sample: &SeriesSample<F>, coeffs: &[F]) -> Vec<F> {
    assert!(coeffs.len() <= sample.p(), "more coefficients than presample values");
    let p = coeffs.len();
    let off = sample.p() - p;
    let v = &sample.values()[off..];
    (0..sample.n())
        .map(|t| {
            let mut u = v[t + p];
            for (i, a) in coeffs.iter().enumerate() {
                u = u - *a * v[t + p - 1 - i];
            }
            u
        })
        .collect()
}

fn weighted_coeffs<F: Scalar>(sample: &SeriesSample<F>, weights: Option<&[F]>) -> Result<Vec<F>> {
    let p = sample.p();
    let n = sample.n();
    if n <= p {
        return Err(Error::Domain(format!("need n > p, got n = {n}, p = {p}")));
    }
    if p == 0 {
        return Ok(Vec::new());
    }
    let v = sample.values();
    let mut gram = vec![F::zero(); p * p];
    let mut rhs = vec![F::zero(); p];
    for t in 0..n {
        let w = weights.map_or(F::one(), |w| w[t]);
        let y = v[t + p];
        // Regressor i is x_{t-i}, stored at v[t + p - 1 - i].
        for i in 0..p {
            let xi = w * v[t + p - 1 - i];
            rhs[i] = rhs[i] + xi * y;
            for j in 0..=i {
                gram[i * p + j] = gram[i * p + j] + xi * v[t + p - 1 - j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j * p + i] = gram[i * p + j];
        }
    }
    solve_spd(&gram, &rhs, p).map_err(|e| match e {
        Error::Singular(msg) => Error::RankDeficient(format!("Gram matrix: {msg}")),
        other => other,
    })
}

fn finish<F: Scalar>(
    sample: &SeriesSample<F>,
    coeffs: Vec<F>,
    kind: FitKind,
    path: Option<Vec<F>>,
) -> Result<ArFit<F>> {
    let residuals = residuals(sample, &coeffs);
    if !coeffs.is_empty() {
        // An exact fit (e.g. a constant series with p = 1) leaves nothing to
        // test and makes every variance estimate zero.
        let ssr: F = residuals.iter().map(|u| *u * *u).sum();
        let sxx: F = sample.observed().iter().map(|x| *x * *x).sum();
        let tol = F::epsilon() * F::lit(64.0);
        if ssr <= tol * tol * sxx {
            return Err(Error::RankDeficient("the autoregression fits the series exactly".into()));
        }
    }
    Ok(ArFit { coeffs, kind, residuals, variance_path_used: path })
}

pub fn ols_fit<F: Scalar>(sample: &SeriesSample<F>) -> Result<ArFit<F>> {
    let coeffs = weighted_coeffs(sample, None)?;
    finish(sample, coeffs, FitKind::Ols, None)
}

/// Weights `1/h2_t`, normalized by their maximum so a constant path gives
/// unit weights and reproduces OLS exactly.
fn gls_weights<F: Scalar>(h2: &[F]) -> Result<Vec<F>> {
    if let Some(i) = h2.iter().position(|h| !(*h > F::zero() && h.is_finite())) {
        return Err(Error::Domain(format!("variance path entry {} at t = {} is not positive", h2[i], i + 1)));
    }
    let min = h2.iter().copied().fold(F::infinity(), F::min);
    Ok(h2.iter().map(|h| min / *h).collect())
}

fn weighted_fit<F: Scalar>(sample: &SeriesSample<F>, h2: &[F], kind: FitKind) -> Result<ArFit<F>> {
    if h2.len() != sample.n() {
        return Err(Error::Domain(format!("variance path has length {}, sample has n = {}", h2.len(), sample.n())));
    }
    let w = gls_weights(h2)?;
    let coeffs = weighted_coeffs(sample, Some(&w))?;
    finish(sample, coeffs, kind, Some(h2.to_vec()))
}

/// Infeasible GLS with the true variance path `h2`.
pub fn gls_fit<F: Scalar>(sample: &SeriesSample<F>, h2: &[F]) -> Result<ArFit<F>> {
    weighted_fit(sample, h2, FitKind::Gls)
}

/// Weighted fit using an already estimated variance path.
pub fn als_fit_with_path<F: Scalar>(sample: &SeriesSample<F>, path: &VariancePathEstimate<F>) -> Result<ArFit<F>> {
    weighted_fit(sample, &path.h2, FitKind::Als)
}

/// OLS, then kernel smoothing of the squared OLS residuals, then the
/// weighted fit with `ĥ_t^{-2}`.
pub fn als_fit<F: Scalar>(
    sample: &SeriesSample<F>,
    kernel: KernelSpec,
    rule: &BandwidthRule<F>,
) -> Result<(ArFit<F>, VariancePathEstimate<F>)> {
    let ols = ols_fit(sample)?;
    let path = estimate_with_rule(&ols.squared_residuals(), kernel, rule)?;
    let fit = als_fit_with_path(sample, &path)?;
    Ok((fit, path))
}

/// ALS with a prebuilt smoother (fixed numeric bandwidth). The bandwidth
/// need not lie in `(0, 1)`; rule-of-thumb values can exceed it.
pub fn als_fit_with_smoother<F: Scalar>(
    sample: &SeriesSample<F>,
    smoother: &KernelSmoother<F>,
    rule: BandwidthRule<F>,
) -> Result<(ArFit<F>, VariancePathEstimate<F>)> {
    let ols = ols_fit(sample)?;
    let path = smoother.estimate(&ols.squared_residuals(), rule)?;
    let fit = als_fit_with_path(sample, &path)?;
    Ok((fit, path))
}
