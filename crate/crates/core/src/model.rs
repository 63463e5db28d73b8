//! Data-generating process: AR(p) levels driven by innovations whose
//! unconditional standard deviation follows a deterministic profile of
//! rescaled time `r = t/n`, optionally contaminated by ARCH effects.
//!
//! Under the null the innovations are `u_t = g(t/n) ε_t`; under the
//! alternative `u_t = h̃_t ε_t` with `h̃_t² = g(t/n)² + Σ α_i u_{t-i}²`.
//! With [`ProfileScale::Variance`] the profile gives `h_t²` instead of `h_t`.
//!
//! ARCH coefficients up to 0.6 are accepted even though with Gaussian ε the
//! fourth moment of `u_t` only exists for `α₁ < 0.57`.

use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, StreamRng};
use crate::scalar::Scalar;

/// Burn-in discarded before the observed sample.
pub const DEFAULT_BURN_IN: usize = 200;

/// Grid size used to check that a profile is bounded.
const SUP_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
}

/// Deterministic volatility function `g` on `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "F: Scalar")]
pub enum VarianceProfile<F> {
    Constant {
        level: F,
    },
    /// `g(r) = c0 − c1 · sin(freq · r + phase) · (1 + r)`.
    Sinusoidal {
        c0: F,
        c1: F,
        freq: F,
        phase: F,
    },
    /// Step function; level `k` applies on `(breakpoints[k-1], breakpoints[k]]`.
    PiecewiseConstant {
        breakpoints: Vec<F>,
        levels: Vec<F>,
    },
    /// Interpolated table, clamped to the end values outside the knot range.
    Table {
        knots: Vec<F>,
        values: Vec<F>,
        #[serde(default)]
        interpolation: Interpolation,
    },
}

impl<F: Scalar> VarianceProfile<F> {
    /// The sinusoidal profile used for the heteroscedastic simulations:
    /// `g(r) = 30 − 10 sin(1.5πr + π/6)(1 + r)`.
    pub fn benchmark_sinusoid() -> Self {
        VarianceProfile::Sinusoidal {
            c0: F::lit(30.0),
            c1: F::lit(10.0),
            freq: F::lit(1.5 * std::f64::consts::PI),
            phase: F::lit(std::f64::consts::PI / 6.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self {
            VarianceProfile::Constant { level } => {
                if !(*level > F::zero() && level.is_finite()) {
                    return bad(format!("constant level must be positive, got {level}"));
                }
            }
            VarianceProfile::Sinusoidal { c0, c1, freq, phase } => {
                if ![*c0, *c1, *freq, *phase].iter().all(|v| v.is_finite()) {
                    return bad("sinusoidal parameters must be finite".into());
                }
            }
            VarianceProfile::PiecewiseConstant { breakpoints, levels } => {
                if levels.len() != breakpoints.len() + 1 {
                    return bad(format!(
                        "piecewise_constant needs levels.len() == breakpoints.len() + 1 ({} vs {})",
                        levels.len(),
                        breakpoints.len()
                    ));
                }
                if breakpoints.iter().any(|b| !(*b > F::zero() && *b < F::one())) {
                    return bad("breakpoints must lie in (0, 1)".into());
                }
                if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("breakpoints must be strictly ascending".into());
                }
                if levels.iter().any(|l| !(*l > F::zero() && l.is_finite())) {
                    return bad("levels must be positive".into());
                }
            }
            VarianceProfile::Table { knots, values, .. } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return bad("table needs equally many (>= 1) knots and values".into());
                }
                if knots.iter().any(|k| !(*k > F::zero() && *k <= F::one())) {
                    return bad("table knots must lie in (0, 1]".into());
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("table knots must be strictly ascending".into());
                }
                if values.iter().any(|v| !(*v > F::zero() && v.is_finite())) {
                    return bad("table values must be positive".into());
                }
            }
        }
        // Positivity and boundedness on a fine grid (catches sinusoids that
        // dip below zero).
        for k in 1..=SUP_GRID {
            let r = F::from_usize_lossy(k) / F::from_usize_lossy(SUP_GRID);
            let g = self.value(r);
            if !(g > F::zero() && g.is_finite()) {
                return bad(format!("profile is not strictly positive and finite at r = {r}"));
            }
        }
        Ok(())
    }

    /// `g(r)` for `r ∈ (0, 1]`.
    pub fn eval(&self, r: F) -> Result<F> {
        if !(r > F::zero() && r <= F::one()) {
            return Err(Error::Domain(format!("profile evaluated at r = {r}, outside (0, 1]")));
        }
        Ok(self.value(r))
    }

    /// Unchecked evaluation; also used for the right limit at 0.
    pub(crate) fn value(&self, r: F) -> F {
        match self {
            VarianceProfile::Constant { level } => *level,
            VarianceProfile::Sinusoidal { c0, c1, freq, phase } => {
                *c0 - *c1 * (*freq * r + *phase).sin() * (F::one() + r)
            }
            VarianceProfile::PiecewiseConstant { breakpoints, levels } => {
                let k = breakpoints.iter().take_while(|b| **b < r).count();
                levels[k]
            }
            VarianceProfile::Table { knots, values, .. } => {
                if r <= knots[0] {
                    return values[0];
                }
                let last = knots.len() - 1;
                if r >= knots[last] {
                    return values[last];
                }
                let k = knots.partition_point(|x| *x <= r);
                let (x0, x1) = (knots[k - 1], knots[k]);
                let w = (r - x0) / (x1 - x0);
                values[k - 1] * (F::one() - w) + values[k] * w
            }
        }
    }

    /// Points in `(0, 1)` where `g` may be discontinuous or non-smooth.
    pub fn kinks(&self) -> Vec<F> {
        match self {
            VarianceProfile::PiecewiseConstant { breakpoints, .. } => breakpoints.clone(),
            VarianceProfile::Table { knots, .. } => knots.iter().copied().filter(|k| *k < F::one()).collect(),
            _ => Vec::new(),
        }
    }

    /// True variance path `h_t² = g(t/n)²`, `t = 1..n`.
    pub fn variance_path(&self, n: usize) -> Vec<F> {
        let nf = F::from_usize_lossy(n);
        (1..=n)
            .map(|t| {
                let g = self.value(F::from_usize_lossy(t) / nf);
                g * g
            })
            .collect()
    }

    /// `∫₀¹ g(r)^power dr`, integrating each smooth piece separately.
    pub fn moment_integral(&self, power: i32, tol: F) -> F {
        let mut edges = vec![F::zero()];
        edges.extend(self.kinks());
        edges.push(F::one());
        let f = |r: F| {
            // Right-continuous at the left edge of each piece.
            self.value(r).powi(power)
        };
        edges
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                // Nudge the endpoints inward so step pieces see one level.
                let eps = (b - a) * F::lit(1e-12);
                crate::quadrature::adaptive_simpson(&f, a + eps, b - eps, tol) + (f(a + eps) + f(b - eps)) * eps
            })
            .sum()
    }
}

/// Distribution of the iid unit-variance innovations `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum InnovationSpec {
    #[default]
    StandardGaussian,
    /// Student t rescaled to unit variance; `df ≥ 9` so moments beyond the
    /// eighth exist.
    StudentT { df: u32 },
}

impl InnovationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InnovationSpec::StandardGaussian => Ok(()),
            InnovationSpec::StudentT { df } if *df >= 9 => Ok(()),
            InnovationSpec::StudentT { df } => Err(Error::InvalidSpec(format!(
                "student_t innovations need df >= 9 for finite moments beyond order 8, got {df}"
            ))),
        }
    }

    /// Fills `out` with iid draws of mean 0 and variance 1.
    pub fn fill<F: Scalar>(&self, rng: &mut StreamRng, out: &mut [F]) {
        match *self {
            InnovationSpec::StandardGaussian => {
                for e in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *e = F::lit(z);
                }
            }
            InnovationSpec::StudentT { df } => {
                let dist = StudentT::new(df as f64).expect("df validated");
                let scale = ((df as f64 - 2.0) / df as f64).sqrt();
                for e in out.iter_mut() {
                    *e = F::lit(dist.sample(rng) * scale);
                }
            }
        }
    }
}

/// How the profile value `g(t/n)` sets the innovation scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileScale {
    /// `h_t = g(t/n)`: the profile is the standard deviation.
    #[default]
    StdDev,
    /// `h_t² = g(t/n)`: the profile is the variance. Rule-of-thumb constants
    /// such as `γ = 0.12` and `γ = 0.2` are tuned for the sinusoid on this
    /// scale, since `b = γ(σ̂²/n)^{1/5}` is not scale free.
    Variance,
}

/// Everything needed to simulate one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DgpSpec<F> {
    #[serde(default)]
    pub ar_coeffs: Vec<F>,
    pub profile: VarianceProfile<F>,
    #[serde(default)]
    pub profile_scale: ProfileScale,
    #[serde(default)]
    pub arch_alpha: Vec<F>,
    #[serde(default)]
    pub innovations: InnovationSpec,
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl<F: Scalar> DgpSpec<F> {
    /// Null DGP with no AR part and Gaussian innovations.
    pub fn null(profile: VarianceProfile<F>, n: usize, seed: u64) -> Self {
        DgpSpec {
            ar_coeffs: Vec::new(),
            profile,
            profile_scale: ProfileScale::StdDev,
            arch_alpha: Vec::new(),
            innovations: InnovationSpec::StandardGaussian,
            n,
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }

    /// `h` at rescaled time `r`.
    fn h_at(&self, r: F) -> F {
        let g = self.profile.value(r);
        match self.profile_scale {
            ProfileScale::StdDev => g,
            ProfileScale::Variance => g.sqrt(),
        }
    }

    /// True variance path `h_t²`, `t = 1..n`.
    pub fn variance_path(&self) -> Vec<F> {
        match self.profile_scale {
            ProfileScale::StdDev => self.profile.variance_path(self.n),
            ProfileScale::Variance => {
                let nf = F::from_usize_lossy(self.n);
                (1..=self.n).map(|t| self.profile.value(F::from_usize_lossy(t) / nf)).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.innovations.validate()?;
        if !is_stationary(&self.ar_coeffs) {
            return Err(Error::InvalidSpec(
                "AR polynomial has a root on or inside the unit circle (companion spectral radius >= 1)".into(),
            ));
        }
        if self.arch_alpha.iter().any(|a| !(*a >= F::zero() && a.is_finite())) {
            return Err(Error::InvalidSpec("ARCH coefficients must be nonnegative".into()));
        }
        let min_n = 2 * (self.ar_coeffs.len() + self.arch_alpha.len() + 1);
        if self.n < min_n {
            return Err(Error::InvalidSpec(format!("n = {} is below the minimum {min_n}", self.n)));
        }
        Ok(())
    }
}

/// Stability of `x_t = Σ a_i x_{t-i} + u_t`, decided by the Schur–Cohn
/// step-down recursion: the companion matrix has spectral radius below one
/// iff every reflection coefficient lies strictly inside (−1, 1).
pub fn is_stationary<F: Scalar>(coeffs: &[F]) -> bool {
    let mut phi: Vec<F> = coeffs.to_vec();
    while let Some(&k) = phi.last() {
        if !k.is_finite() || k.abs() >= F::one() {
            return false;
        }
        let p = phi.len();
        let denom = F::one() - k * k;
        let next: Vec<F> = (0..p - 1).map(|j| (phi[j] + k * phi[p - 2 - j]) / denom).collect();
        phi = next;
    }
    true
}

/// Observed series `x_{-p+1}, …, x_0, x_1, …, x_n` plus the AR order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SeriesSample<F> {
    values: Vec<F>,
    p: usize,
}

impl<F: Scalar> SeriesSample<F> {
    /// `values` holds the `p` presample observations followed by the sample.
    pub fn new(values: Vec<F>, p: usize) -> Result<Self> {
        if values.len() <= p {
            return Err(Error::Data(format!(
                "series of length {} leaves no observations after {p} presample values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at position {i}")));
        }
        Ok(SeriesSample { values, p })
    }

    /// Reinterprets the same observations with a different AR order.
    pub fn with_order(self, p: usize) -> Result<Self> {
        Self::new(self.values, p)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Effective sample length.
    pub fn n(&self) -> usize {
        self.values.len() - self.p
    }

    /// `x_t` for `t = 1..n` (also `t` down to `1 - p`).
    #[inline]
    pub fn x(&self, t: isize) -> F {
        self.values[(t + self.p as isize - 1) as usize]
    }

    /// The observations `x_1..x_n`.
    pub fn observed(&self) -> &[F] {
        &self.values[self.p..]
    }

    pub fn presample(&self) -> &[F] {
        &self.values[..self.p]
    }

    /// Multiplies every observation by `c`.
    pub fn scaled(&self, c: F) -> Self {
        SeriesSample { values: self.values.iter().map(|v| *v * c).collect(), p: self.p }
    }
}

/// A simulated series together with its latent paths.
#[derive(Debug, Clone)]
pub struct Simulation<F> {
    pub sample: SeriesSample<F>,
    /// Deterministic `h_t`, `t = 1..n`.
    pub h: Vec<F>,
    /// Innovations `u_t`, `t = 1..n`.
    pub u: Vec<F>,
}

pub fn simulate<F: Scalar>(spec: &DgpSpec<F>) -> Result<SeriesSample<F>> {
    simulate_detailed(spec).map(|s| s.sample)
}

/// Runs the recursion with `burn_in` extra steps, holding `h` at `g(1/n)`
/// during burn-in, and keeps the last `n + p` levels.
pub fn simulate_detailed<F: Scalar>(spec: &DgpSpec<F>) -> Result<Simulation<F>> {
    spec.validate()?;
    let p = spec.ar_coeffs.len();
    let n = spec.n;
    let total = spec.burn_in + n;
    let nf = F::from_usize_lossy(n);

    let mut rng = rng_from_seed(spec.seed);
    let mut eps = vec![F::zero(); total];
    spec.innovations.fill(&mut rng, &mut eps);

    let h_pre = spec.h_at(F::one() / nf);
    let mut x = vec![F::zero(); p + total];
    let mut u = vec![F::zero(); total];
    let mut h_obs = Vec::with_capacity(n);
    for s in 0..total {
        let h = if s < spec.burn_in {
            h_pre
        } else {
            let t = s - spec.burn_in + 1;
            let h = spec.h_at(F::from_usize_lossy(t) / nf);
            h_obs.push(h);
            h
        };
        let mut h2 = h * h;
        for (i, a) in spec.arch_alpha.iter().enumerate() {
            if s > i {
                let ul = u[s - i - 1];
                h2 = h2 + *a * ul * ul;
            }
        }
        let ut = h2.sqrt() * eps[s];
        let mut xt = ut;
        for (j, a) in spec.ar_coeffs.iter().enumerate() {
            xt = xt + *a * x[p + s - j - 1];
        }
        if !(ut.is_finite() && xt.is_finite()) {
            return Err(Error::SimulationDiverged { index: s });
        }
        u[s] = ut;
        x[p + s] = xt;
    }
    let keep = x[x.len() - (n + p)..].to_vec();
    Ok(Simulation { sample: SeriesSample::new(keep, p)?, h: h_obs, u: u[spec.burn_in..].to_vec() })
}

/// Draws `count` iid unit-variance innovations (handy for tests and tools).
pub fn draw_innovations<F: Scalar>(spec: InnovationSpec, count: usize, seed: u64) -> Vec<F> {
    let mut rng = rng_from_seed(seed);
    let mut out = vec![F::zero(); count];
    spec.fill(&mut rng, &mut out);
    out
}
