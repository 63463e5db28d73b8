//! `tvarch`: simulate series, fit AR models, run the ARCH tests on a CSV
//! series, calibrate the rule-of-thumb bandwidth and run Monte Carlo
//! experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure. `TVARCH_THREADS` caps the worker count.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tvarch_core::estimators::{als_fit, ols_fit};
use tvarch_core::harness::{
    run_divergence_experiment, run_power_experiment, run_size_experiment, with_threads, Correction, ExperimentSpec,
};
use tvarch_core::io::{self, Column};
use tvarch_core::model::InnovationSpec;
use tvarch_core::resample::{bootstrap_pvalue, calibrate_gamma, mc_pvalue, CalibrationSpec, DEFAULT_KNOTS};
use tvarch_core::{
    run_test, simulate, BandwidthRule, DgpSpec64, Error, KernelSpec, ProfileScale, SeriesSample64, TestFamily,
    VarianceProfile64, VarianceSource,
};

#[derive(Parser)]
#[command(name = "tvarch", version, about = "ARCH tests for autoregressions with time-varying variance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series and write it as a one-column CSV.
    Simulate(SimulateArgs),
    /// Fit an AR(p) model by OLS or adaptive least squares.
    Estimate(EstimateArgs),
    /// Run one ARCH test on a series and print the JSON report.
    Test(TestArgs),
    /// Calibrate the rule-of-thumb bandwidth constant on a series.
    Calibrate(CalibrateArgs),
    /// Run a size, power or divergence Monte Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    Sinusoidal,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleKind {
    /// The profile is the standard deviation h_t.
    Sd,
    /// The profile is the variance h_t².
    Variance,
}

#[derive(Clone, Copy, ValueEnum)]
enum BandwidthKind {
    Cv,
    Rot,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ols,
    Als,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Size,
    Power,
    Divergence,
}

#[derive(Args)]
struct Common {
    /// Output file; stdout when omitted.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct InputArgs {
    /// CSV file holding the series.
    #[arg(short = 'i', long = "input")]
    input: PathBuf,
    /// Column name or zero-based index (default: first column).
    #[arg(long)]
    column: Option<Column>,
    /// Rounds of first differencing applied after reading.
    #[arg(long, default_value_t = 0)]
    difference: usize,
    /// AR order; the first p values serve as presample.
    #[arg(long)]
    p: usize,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long, value_enum, default_value = "cv")]
    bandwidth: BandwidthKind,
    /// Constant of the rule of thumb `b = γ (σ̂²/n)^{1/5}`.
    #[arg(long)]
    gamma: Option<f64>,
    /// Bandwidth for `--bandwidth fixed`.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelSpec,
}

impl BandwidthArgs {
    fn rule(&self) -> Result<BandwidthRule<f64>, Error> {
        let rule = match self.bandwidth {
            BandwidthKind::Cv => BandwidthRule::cross_validation(),
            BandwidthKind::Rot => BandwidthRule::RuleOfThumb {
                gamma: self.gamma.ok_or_else(|| Error::Config("--bandwidth rot needs --gamma".into()))?,
            },
            BandwidthKind::Fixed => {
                BandwidthRule::Fixed { b: self.b.ok_or_else(|| Error::Config("--bandwidth fixed needs --b".into()))? }
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "sinusoidal")]
    profile: ProfileKind,
    /// Value of the constant profile.
    #[arg(long, default_value_t = 20.0)]
    level: f64,
    #[arg(long, value_enum, default_value = "sd")]
    profile_scale: ScaleKind,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// AR coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ar: Vec<f64>,
    /// ARCH coefficients, comma separated.
    #[arg(long, value_delimiter = ',')]
    arch: Vec<f64>,
    /// Degrees of freedom for unit-variance Student-t innovations.
    #[arg(long)]
    df: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "als")]
    method: Method,
    #[command(flatten)]
    bandwidth: BandwidthArgs,
    /// Also write the estimated variance path (`t,h2`) and a JSON sidecar.
    #[arg(long)]
    variance_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    family: TestFamily,
    /// p-value correction: mc, bootstrap or none. Defaults to mc for the
    /// modified families and none otherwise.
    #[arg(long)]
    correction: Option<Correction>,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[command(flatten)]
    bandwidth: BandwidthArgs,
    /// Known variance path for the GLS families (`h2` column, or first column).
    #[arg(long)]
    variance_file: Option<PathBuf>,
    /// Bootstrap or Monte Carlo replications.
    #[arg(long, default_value_t = 499)]
    replications: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "lb_als_modified")]
    family: TestFamily,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.08,0.12,0.2,0.3")]
    gammas: Vec<f64>,
    /// Simulated null series per γ.
    #[arg(long, default_value_t = 200)]
    calibration_reps: usize,
    /// Replications of each corrected test inside the calibration.
    #[arg(long, default_value_t = 199)]
    replications: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = DEFAULT_KNOTS)]
    knots: usize,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelSpec,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "size")]
    kind: ExperimentKind,
    /// Experiment spec as JSON (size and power runs).
    #[arg(long)]
    config: Option<PathBuf>,
    /// ARCH coefficients for power runs.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6")]
    alphas: Vec<f64>,
    /// Divergence runs: variance profile.
    #[arg(long, value_enum, default_value = "sinusoidal")]
    profile: ProfileKind,
    #[arg(long, default_value_t = 20.0)]
    level: f64,
    /// Divergence runs: sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,200,500,1000")]
    n: Vec<usize>,
    /// Divergence runs: replications per sample size.
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; the JSON metadata goes next to it with a `.json` suffix.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

fn profile(kind: ProfileKind, level: f64) -> VarianceProfile64 {
    match kind {
        ProfileKind::Sinusoidal => VarianceProfile64::benchmark_sinusoid(),
        ProfileKind::Constant => VarianceProfile64::Constant { level },
    }
}

fn load(input: &InputArgs) -> Result<SeriesSample64, Error> {
    io::ingest_csv(&input.input, input.column.as_ref(), input.difference)?.with_order(input.p)
}

/// Writes through `f` to `path`, or to stdout.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Result<(), Error> {
    match path {
        Some(p) => io::with_file(p, |w| f(w)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn simulate_cmd(a: SimulateArgs) -> Result<(), Error> {
    let mut spec: DgpSpec64 = DgpSpec64::null(profile(a.profile, a.level), a.n, a.common.seed);
    spec.ar_coeffs = a.ar;
    spec.arch_alpha = a.arch;
    spec.profile_scale = match a.profile_scale {
        ScaleKind::Sd => ProfileScale::StdDev,
        ScaleKind::Variance => ProfileScale::Variance,
    };
    if let Some(df) = a.df {
        spec.innovations = InnovationSpec::StudentT { df };
    }
    let sample = simulate(&spec)?;
    emit(a.common.output.as_deref(), |w| io::write_series_csv(w, &sample))
}

fn estimate_cmd(a: EstimateArgs) -> Result<(), Error> {
    let sample = load(&a.input)?;
    let (fit, path) = match a.method {
        Method::Ols => (ols_fit(&sample)?, None),
        Method::Als => {
            let (fit, path) = with_threads(None, || als_fit(&sample, a.bandwidth.kernel, &a.bandwidth.rule()?))??;
            (fit, Some(path))
        }
    };
    emit(a.common.output.as_deref(), |w| io::write_residuals_csv(w, &fit))?;
    if let Some(out) = &a.variance_out {
        let path = path.as_ref().ok_or_else(|| Error::Config("--variance-out needs --method als".into()))?;
        io::with_file(out, |w| io::write_variance_path_csv(w, path))?;
        let sidecar = io::variance_path_sidecar(path)?;
        io::with_file(with_suffix(out, ".json"), |w| Ok(writeln!(w, "{sidecar}")?))?;
    }
    let mut summary = serde_json::to_value(fit.summary())?;
    if let Some(p) = &path {
        summary["bandwidth"] = serde_json::json!(p.bandwidth);
    }
    eprintln!("{summary}");
    Ok(())
}

fn known_variance(path: &Path, n: usize) -> Result<Vec<f64>, Error> {
    let h2 = match io::ingest_csv_min(path, Some(&Column::Name("h2".into())), 0, 1) {
        Ok(s) => s,
        Err(_) => io::ingest_csv_min(path, None, 0, 1)?,
    };
    let h2 = h2.values().to_vec();
    if h2.len() != n {
        return Err(Error::Data(format!("variance file has {} values, the series has {n} observations", h2.len())));
    }
    Ok(h2)
}

fn test_cmd(a: TestArgs) -> Result<(), Error> {
    let sample = load(&a.input)?;
    let family = a.family;
    let correction =
        a.correction.unwrap_or(if family.is_modified() { Correction::MonteCarlo } else { Correction::None });
    if correction != Correction::None && !family.is_modified() {
        return Err(Error::Config(format!("--correction applies to modified families only, got {family}")));
    }
    let kernel = a.bandwidth.kernel;
    let report = with_threads(None, || -> Result<_, Error> {
        if family.needs_known_variance() {
            let path =
                a.variance_file.as_ref().ok_or_else(|| Error::Config(format!("{family} needs --variance-file")))?;
            return run_test(&sample, family, a.m, &VarianceSource::Known { h2: known_variance(path, sample.n())? });
        }
        if !family.needs_kernel() {
            return run_test(&sample, family, a.m, &VarianceSource::None);
        }
        let rule = a.bandwidth.rule()?;
        match correction {
            Correction::None => run_test(&sample, family, a.m, &VarianceSource::Kernel { kernel, rule }),
            Correction::Bootstrap => {
                bootstrap_pvalue(&sample, family, a.m, kernel, &rule, a.replications, a.common.seed)
            }
            Correction::MonteCarlo => mc_pvalue(&sample, family, a.m, kernel, &rule, a.replications, a.common.seed),
        }
    })??;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let json = serde_json::to_string_pretty(&report)?;
    emit(a.common.output.as_deref(), |w| Ok(writeln!(w, "{json}")?))
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<(), Error> {
    let sample = load(&a.input)?;
    let cal = CalibrationSpec {
        gamma_grid: a.gammas,
        knots: a.knots,
        replications_per_gamma: a.calibration_reps,
        resample_replications: a.replications,
        target_level: a.level,
        test_family: a.family,
        m: a.m,
    };
    let result = with_threads(None, || calibrate_gamma(&sample, &cal, a.kernel, a.common.seed))??;
    emit(a.common.output.as_deref(), |w| io::write_calibration_csv(w, &result))?;
    eprintln!("{}", serde_json::json!({ "gamma_star": result.gamma_star }));
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<(), Error> {
    if let ExperimentKind::Divergence = a.kind {
        let seed = a.seed.unwrap_or(42);
        let table = run_divergence_experiment(&profile(a.profile, a.level), &a.n, a.replications, a.m, seed)?;
        let json = serde_json::to_string_pretty(&table)?;
        return emit(a.output.as_deref(), |w| Ok(writeln!(w, "{json}")?));
    }
    let path = a.config.as_ref().ok_or_else(|| Error::Config("size and power experiments need --config".into()))?;
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut spec: ExperimentSpec<f64> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let table = match a.kind {
        ExperimentKind::Size => run_size_experiment(&spec)?,
        _ => run_power_experiment(&spec, &a.alphas)?,
    };
    emit(a.output.as_deref(), |w| table.write_csv(w))?;
    let meta = table.metadata_json()?;
    match &a.output {
        Some(out) => io::with_file(with_suffix(out, ".json"), |w| Ok(writeln!(w, "{meta}")?)),
        None => {
            eprintln!("{meta}");
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_data() {
        2
    } else if e.is_numeric() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Test(a) => test_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
