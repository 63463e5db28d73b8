//! Seeded, parallel Monte Carlo experiments: empirical size, power against
//! ARCH(1) alternatives, and the growth of the standard portmanteau
//! statistic under a time-varying variance.
//!
//! Replication `r` at sample size `n` always uses the seed
//! `derive_seed_path(seed, [n, r])`, whatever the number of threads and
//! whatever the ARCH coefficient, so tables are reproducible and power
//! curves share their innovations across `α₀`.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelvar::{BandwidthRule, KernelSpec};
use crate::model::{simulate, DgpSpec, VarianceProfile};
use crate::resample::{bootstrap_pvalue, mc_pvalue, DEFAULT_REPLICATIONS};
use crate::rng::{derive_seed, derive_seed_path};
use crate::scalar::Scalar;
use crate::stats::{divergence_constant, run_test, standard_statistic, TestFamily, VarianceSource};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "TVARCH_THREADS";

/// Maximum fraction of failed replications tolerated per configuration.
pub const MAX_FAILURE_RATE: f64 = 0.02;

/// Runs `f` on a pool with `threads` workers, or on the global pool when
/// `threads` is `None` and `TVARCH_THREADS` is unset.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()));
    match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// p-value correction applied to a test inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    Bootstrap,
    MonteCarlo,
}

impl std::str::FromStr for Correction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Correction::None),
            "bootstrap" | "b" => Ok(Correction::Bootstrap),
            "mc" | "monte_carlo" => Ok(Correction::MonteCarlo),
            other => Err(Error::Config(format!("unknown correction '{other}' (none, bootstrap, mc)"))),
        }
    }
}

/// Variance information for a test inside an experiment. `Known` uses the
/// DGP's true variance path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
#[serde(bound = "F: Scalar")]
pub enum VarianceChoice<F> {
    None,
    Known,
    Kernel { kernel: KernelSpec, rule: BandwidthRule<F> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TestConfig<F> {
    pub family: TestFamily,
    pub m: usize,
    pub variance: VarianceChoice<F>,
    #[serde(default)]
    pub correction: Correction,
    /// B or R for corrected tests.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Row label; derived from the other fields when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl<F: Scalar> TestConfig<F> {
    pub fn standard(family: TestFamily, m: usize) -> Self {
        TestConfig {
            family,
            m,
            variance: VarianceChoice::None,
            correction: Correction::None,
            replications: DEFAULT_REPLICATIONS,
            name: None,
        }
    }

    pub fn known(family: TestFamily, m: usize) -> Self {
        TestConfig { variance: VarianceChoice::Known, ..Self::standard(family, m) }
    }

    pub fn adaptive(
        family: TestFamily,
        m: usize,
        rule: BandwidthRule<F>,
        correction: Correction,
        replications: usize,
    ) -> Self {
        TestConfig {
            family,
            m,
            variance: VarianceChoice::Kernel { kernel: KernelSpec::Gaussian, rule },
            correction,
            replications,
            name: None,
        }
    }

    /// e.g. `lm_standard`, `lb_gls`, `lb_als_modified_cv_mc`, `lm_als_modified_rot0.2_b`.
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mut s = self.family.as_str().to_string();
        if let VarianceChoice::Kernel { rule, .. } = &self.variance {
            match rule {
                BandwidthRule::CrossValidation { .. } => s.push_str("_cv"),
                BandwidthRule::RuleOfThumb { gamma } => s.push_str(&format!("_rot{gamma}")),
                BandwidthRule::Fixed { b } => s.push_str(&format!("_fixed{b}")),
            }
        }
        match self.correction {
            Correction::None => {}
            Correction::Bootstrap => s.push_str("_b"),
            Correction::MonteCarlo => s.push_str("_mc"),
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config(format!("{}: m must be at least 1", self.label())));
        }
        let ok = match self.variance {
            VarianceChoice::None => matches!(self.family, TestFamily::LmStandard | TestFamily::LbStandard),
            VarianceChoice::Known => self.family.needs_known_variance(),
            VarianceChoice::Kernel { rule, .. } => {
                rule.validate()?;
                self.family.needs_kernel()
            }
        };
        if !ok {
            return Err(Error::Config(format!("{}: variance source does not match the family", self.label())));
        }
        if self.family.is_modified() == (self.correction == Correction::None) {
            return Err(Error::Config(format!(
                "{}: modified families need a bootstrap or mc correction, other families none",
                self.label()
            )));
        }
        Ok(())
    }

    /// Runs the test on one series; returns the p-value.
    fn pvalue(&self, sample: &crate::model::SeriesSample<F>, true_h2: &[F], seed: u64) -> Result<F> {
        let report = match (&self.variance, self.correction) {
            (VarianceChoice::None, _) => run_test(sample, self.family, self.m, &VarianceSource::None)?,
            (VarianceChoice::Known, _) => {
                run_test(sample, self.family, self.m, &VarianceSource::Known { h2: true_h2.to_vec() })?
            }
            (VarianceChoice::Kernel { kernel, rule }, Correction::None) => {
                run_test(sample, self.family, self.m, &VarianceSource::Kernel { kernel: *kernel, rule: *rule })?
            }
            (VarianceChoice::Kernel { kernel, rule }, Correction::Bootstrap) => {
                bootstrap_pvalue(sample, self.family, self.m, *kernel, rule, self.replications, seed)?
            }
            (VarianceChoice::Kernel { kernel, rule }, Correction::MonteCarlo) => {
                mc_pvalue(sample, self.family, self.m, *kernel, rule, self.replications, seed)?
            }
        };
        report.pvalue.ok_or_else(|| Error::Config(format!("{} produced no p-value", self.label())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ExperimentSpec<F> {
    /// Template; `n`, `seed` and (for power runs) `arch_alpha` are replaced.
    pub dgp: DgpSpec<F>,
    pub n_grid: Vec<usize>,
    pub test_configs: Vec<TestConfig<F>>,
    pub outer_replications: usize,
    pub nominal_level: F,
    pub seed: u64,
    /// Worker count; not part of the result and excluded from the spec hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl<F: Scalar> ExperimentSpec<F> {
    /// `N = 500` replications at the 5% level on a zero-mean (p = 0) series.
    pub fn desk(profile: VarianceProfile<F>, n_grid: Vec<usize>, test_configs: Vec<TestConfig<F>>, seed: u64) -> Self {
        ExperimentSpec {
            dgp: DgpSpec::null(profile, n_grid.first().copied().unwrap_or(500), seed),
            n_grid,
            test_configs,
            outer_replications: 500,
            nominal_level: F::lit(0.05),
            seed,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_replications < 100 {
            return Err(Error::Config(format!(
                "need at least 100 outer replications, got {}",
                self.outer_replications
            )));
        }
        if !(self.nominal_level > F::zero() && self.nominal_level <= F::one()) {
            return Err(Error::Config(format!("nominal level must lie in (0, 1], got {}", self.nominal_level)));
        }
        if self.n_grid.is_empty() || self.test_configs.is_empty() {
            return Err(Error::Config("need at least one sample size and one test".into()));
        }
        for c in &self.test_configs {
            c.validate()?;
        }
        for &n in &self.n_grid {
            let mut d = self.dgp.clone();
            d.n = n;
            d.validate()?;
        }
        Ok(())
    }

    /// FNV-1a of the JSON encoding, ignoring `threads`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.threads = None;
        let bytes = serde_json::to_vec(&canonical).unwrap_or_default();
        let h = bytes
            .iter()
            .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3));
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub test_name: String,
    pub n: usize,
    pub m: usize,
    pub alpha0: f64,
    pub rejection_rate: f64,
    /// `sqrt(r(1 − r)/N)`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub spec_hash: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub outer_replications: usize,
    pub nominal_level: f64,
    /// Replications that errored, summed over rows.
    pub failed_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: TableMetadata,
}

impl ResultTable {
    pub fn row(&self, test_name: &str, n: usize, alpha0: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.test_name == test_name && r.n == n && r.alpha0 == alpha0)
    }

    /// Header `test_name,n,m,alpha0,rejection_rate,std_error`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }
}

/// Simulates `N` series per `n` and records, per test, the fraction whose
/// p-value is at most the nominal level.
fn run_grid<F: Scalar>(spec: &ExperimentSpec<F>, alphas: &[F]) -> Result<ResultTable> {
    spec.validate()?;
    let start = Instant::now();
    let nrep = spec.outer_replications;
    let level = spec.nominal_level;
    let mut rows = Vec::new();
    let mut failed_total = 0;
    for &alpha in alphas {
        for &n in &spec.n_grid {
            let mut dgp = spec.dgp.clone();
            dgp.n = n;
            dgp.arch_alpha = if alpha > F::zero() { vec![alpha] } else { Vec::new() };
            let true_h2 = dgp.variance_path();
            let outcomes: Vec<Vec<Result<bool>>> = with_threads(spec.threads, || {
                (0..nrep)
                    .into_par_iter()
                    .map(|r| {
                        let rep_seed = derive_seed_path(spec.seed, &[n as u64, r as u64]);
                        let mut d = dgp.clone();
                        d.seed = rep_seed;
                        match simulate(&d) {
                            Ok(sample) => spec
                                .test_configs
                                .iter()
                                .enumerate()
                                .map(|(k, c)| {
                                    c.pvalue(&sample, &true_h2, derive_seed(rep_seed, 1 + k as u64)).map(|p| p <= level)
                                })
                                .collect(),
                            Err(e) => {
                                let msg = e.to_string();
                                spec.test_configs.iter().map(|_| Err(Error::DegenerateInput(msg.clone()))).collect()
                            }
                        }
                    })
                    .collect()
            })?;
            for (k, config) in spec.test_configs.iter().enumerate() {
                let mut rejected = 0usize;
                let mut ok = 0usize;
                let mut first_err: Option<String> = None;
                for rep in &outcomes {
                    match &rep[k] {
                        Ok(d) => {
                            ok += 1;
                            rejected += usize::from(*d);
                        }
                        Err(e) => {
                            first_err.get_or_insert_with(|| e.to_string());
                        }
                    }
                }
                let failures = nrep - ok;
                if failures as f64 > MAX_FAILURE_RATE * nrep as f64 {
                    return Err(Error::ExperimentFailed {
                        failures,
                        total: nrep,
                        first: format!("{} at n = {n}: {}", config.label(), first_err.unwrap_or_default()),
                    });
                }
                failed_total += failures;
                let rate = rejected as f64 / ok as f64;
                rows.push(ResultRow {
                    test_name: config.label(),
                    n,
                    m: config.m,
                    alpha0: alpha.as_f64(),
                    rejection_rate: rate,
                    std_error: (rate * (1.0 - rate) / ok as f64).sqrt(),
                });
            }
        }
    }
    Ok(ResultTable {
        rows,
        metadata: TableMetadata {
            spec_hash: spec.hash(),
            seed: spec.seed,
            wall_time_secs: start.elapsed().as_secs_f64(),
            outer_replications: nrep,
            nominal_level: level.as_f64(),
            failed_replications: failed_total,
        },
    })
}

/// Empirical size under the null (no ARCH effects).
pub fn run_size_experiment<F: Scalar>(spec: &ExperimentSpec<F>) -> Result<ResultTable> {
    if !spec.dgp.arch_alpha.is_empty() {
        return Err(Error::Config("size experiments need a DGP without ARCH effects".into()));
    }
    run_grid(spec, &[F::zero()])
}

/// Rejection rates under ARCH(1) alternatives `α₀ ∈ alpha_grid`; `α₀ = 0`
/// reproduces the size experiment.
pub fn run_power_experiment<F: Scalar>(spec: &ExperimentSpec<F>, alpha_grid: &[F]) -> Result<ResultTable> {
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(*a >= F::zero() && a.is_finite())) {
        return Err(Error::Config("alpha grid must be nonempty and nonnegative".into()));
    }
    run_grid(spec, alpha_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub n: usize,
    pub median_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTable {
    pub m: usize,
    pub rows: Vec<DivergenceRow>,
    /// Least-squares slope of the median against `n`.
    pub fitted_slope: f64,
    /// `m (D / (κ∫g⁴ − (∫g²)²))²` with `D` the divergence constant and
    /// `κ = 3` (Gaussian innovations).
    pub predicted_slope: f64,
    pub divergence_constant: f64,
}

/// Medians of the standard portmanteau statistic under the null for each
/// `n`, with the fitted and predicted linear growth rates.
pub fn run_divergence_experiment<F: Scalar>(
    profile: &VarianceProfile<F>,
    n_grid: &[usize],
    replications: usize,
    m: usize,
    seed: u64,
) -> Result<DivergenceTable> {
    profile.validate()?;
    if n_grid.is_empty() || replications == 0 || m == 0 {
        return Err(Error::Config("need a nonempty n grid, replications > 0 and m > 0".into()));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let mut stats: Vec<f64> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let sample =
                    simulate(&DgpSpec::null(profile.clone(), n, derive_seed_path(seed, &[n as u64, r as u64])))?;
                standard_statistic(TestFamily::LbStandard, sample.observed(), m).map(|v| v.as_f64())
            })
            .collect::<Result<_>>()?;
        stats.sort_by(f64::total_cmp);
        let k = stats.len();
        let median = if k % 2 == 1 { stats[k / 2] } else { 0.5 * (stats[k / 2 - 1] + stats[k / 2]) };
        rows.push(DivergenceRow { n, median_statistic: median });
    }
    let fitted_slope = if rows.len() >= 2 {
        let k = rows.len() as f64;
        let mx = rows.iter().map(|r| r.n as f64).sum::<f64>() / k;
        let my = rows.iter().map(|r| r.median_statistic).sum::<f64>() / k;
        let sxy: f64 = rows.iter().map(|r| (r.n as f64 - mx) * (r.median_statistic - my)).sum();
        let sxx: f64 = rows.iter().map(|r| (r.n as f64 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let d = divergence_constant(profile)?.as_f64();
    let tol = F::lit(1e-10);
    let i4 = profile.moment_integral(4, tol).as_f64();
    let i2 = profile.moment_integral(2, tol).as_f64();
    let rho = d / (3.0 * i4 - i2 * i2);
    Ok(DivergenceTable { m, rows, fitted_slope, predicted_slope: m as f64 * rho * rho, divergence_constant: d })
}
