//! INAR(s*) processes: `X_t = alpha ∘ X_{t-s} + eps_t`.
//!
//! `alpha ∘ X` is binomial thinning (the sum of `X` independent
//! Bernoulli(`alpha`) indicators) and `eps_t` is an i.i.d. innovation with
//! mean `lambda` and variance `phi * lambda`. The conditional law of `X_t`
//! given `X_{t-s}` is the convolution of a binomial and the innovation pmf.
//!
//! All likelihood arithmetic is carried out in the log domain.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::panel::CountSeries;

/// Innovation tails below this probability are treated as zero.
pub const TAIL_EPSILON: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationFamily {
    Poisson,
    NegativeBinomial,
}

impl InnovationFamily {
    /// Free parameters per component: `(alpha, lambda)` plus `phi` for NB.
    pub fn params_per_component(self) -> usize {
        match self {
            Self::Poisson => 2,
            Self::NegativeBinomial => 3,
        }
    }

    /// Dispersion used when a component has to be created from scratch.
    pub fn default_phi(self) -> f64 {
        match self {
            Self::Poisson => 1.0,
            Self::NegativeBinomial => 2.0,
        }
    }
}

impl fmt::Display for InnovationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Poisson => "poisson",
            Self::NegativeBinomial => "nb",
        })
    }
}

impl FromStr for InnovationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "pois" => Ok(Self::Poisson),
            "nb" | "negbin" | "negative-binomial" | "negative_binomial" => Ok(Self::NegativeBinomial),
            other => Err(Error::InvalidInput(format!("unknown innovation family `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
struct RawInnovation {
    family: InnovationFamily,
    lambda: f64,
    #[serde(default = "one")]
    phi: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawInnovation> for InnovationModel {
    type Error = Error;

    fn try_from(raw: RawInnovation) -> Result<Self> {
        Self::new(raw.family, raw.lambda, raw.phi)
    }
}

/// Innovation law with mean `lambda` and variance-to-mean ratio `phi`.
///
/// The negative binomial is parameterised by size `r = lambda / (phi - 1)`
/// and success probability `p = 1 / phi`, so `phi -> 1` recovers the Poisson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInnovation")]
pub struct InnovationModel {
    family: InnovationFamily,
    lambda: f64,
    phi: f64,
}

impl InnovationModel {
    pub fn new(family: InnovationFamily, lambda: f64, phi: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::ParameterDomain(format!("lambda must be positive, got {lambda}")));
        }
        match family {
            InnovationFamily::Poisson if phi != 1.0 => Err(Error::ParameterDomain(format!(
                "Poisson innovations have phi = 1, got {phi}"
            ))),
            InnovationFamily::NegativeBinomial if !(phi.is_finite() && phi > 1.0) => Err(Error::ParameterDomain(
                format!("negative-binomial innovations need phi > 1, got {phi}"),
            )),
            _ => Ok(Self { family, lambda, phi }),
        }
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(InnovationFamily::Poisson, lambda, 1.0)
    }

    pub fn negative_binomial(lambda: f64, phi: f64) -> Result<Self> {
        Self::new(InnovationFamily::NegativeBinomial, lambda, phi)
    }

    pub fn family(&self) -> InnovationFamily {
        self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn variance(&self) -> f64 {
        self.phi * self.lambda
    }

    /// NB `(size, success probability)`; `None` for Poisson.
    pub fn nb_size_prob(&self) -> Option<(f64, f64)> {
        match self.family {
            InnovationFamily::Poisson => None,
            InnovationFamily::NegativeBinomial => Some((self.lambda / (self.phi - 1.0), 1.0 / self.phi)),
        }
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self.nb_size_prob() {
            None => kf * self.lambda.ln() - self.lambda - ln_gamma(kf + 1.0),
            Some((r, p)) => ln_gamma(kf + r) - ln_gamma(r) - ln_gamma(kf + 1.0) + r * p.ln() + kf * (-p).ln_1p(),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `ln pmf(k)` for `k = 0..=max`, by the ratio recursion of each family.
    pub fn ln_pmf_table(&self, max: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(max as usize + 1);
        match self.nb_size_prob() {
            None => {
                let ln_lambda = self.lambda.ln();
                let mut cur = -self.lambda;
                out.push(cur);
                for k in 1..=max {
                    cur += ln_lambda - (k as f64).ln();
                    out.push(cur);
                }
            }
            Some((r, p)) => {
                let ln_q = (-p).ln_1p();
                let mut cur = r * p.ln();
                out.push(cur);
                for k in 1..=max {
                    let kf = k as f64;
                    cur += ((kf - 1.0 + r) / kf).ln() + ln_q;
                    out.push(cur);
                }
            }
        }
        out
    }

    /// Smallest count `K` beyond which the innovation pmf is negligible.
    ///
    /// Starts from `lambda + 12 sqrt(phi lambda)` and extends past the mode
    /// until the pmf drops below [`TAIL_EPSILON`]; heavy NB tails need more
    /// than twelve standard deviations.
    pub fn support_bound(&self) -> u64 {
        let mut k = (self.lambda + 12.0 * self.variance().sqrt()).ceil() as u64;
        let mode = self.lambda.ceil() as u64;
        while k <= mode || self.pmf(k) > TAIL_EPSILON {
            k += 1 + k / 8;
        }
        k
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        InnovationSampler::new(self).sample(rng)
    }
}

/// Pre-built sampler for repeated innovation draws.
#[derive(Debug, Clone)]
pub enum InnovationSampler {
    Poisson(Poisson<f64>),
    /// Gamma-Poisson mixture: `mu ~ Gamma(r, phi - 1)`, `eps ~ Poisson(mu)`.
    NegativeBinomial(Gamma<f64>),
}

impl InnovationSampler {
    pub fn new(model: &InnovationModel) -> Self {
        match model.nb_size_prob() {
            None => Self::Poisson(Poisson::new(model.lambda).expect("lambda validated positive")),
            Some((r, _)) => {
                Self::NegativeBinomial(Gamma::new(r, model.phi - 1.0).expect("NB size and scale validated positive"))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Poisson(d) => d.sample(rng) as u64,
            Self::NegativeBinomial(g) => {
                let mu = g.sample(rng);
                if mu > 0.0 && mu.is_finite() {
                    Poisson::new(mu).map(|d| d.sample(rng) as u64).unwrap_or(0)
                } else {
                    0
                }
            }
        }
    }
}

/// The single active lag of an INAR(s*) component and its innovation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub lag: usize,
    pub family: InnovationFamily,
}

impl ComponentSpec {
    pub fn new(lag: usize, family: InnovationFamily) -> Result<Self> {
        if lag == 0 {
            return Err(Error::ParameterDomain("lag must be at least 1".into()));
        }
        Ok(Self { lag, family })
    }
}

impl fmt::Display for ComponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lag == 1 {
            write!(f, "INAR(1)")
        } else {
            write!(f, "INAR({}*)", self.lag)
        }
    }
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    innovation: InnovationModel,
}

impl TryFrom<RawParams> for ComponentParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(raw.alpha, raw.innovation)
    }
}

/// `(alpha, lambda, phi)` of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ComponentParams {
    alpha: f64,
    innovation: InnovationModel,
}

impl ComponentParams {
    pub fn new(alpha: f64, innovation: InnovationModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::ParameterDomain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha, innovation })
    }

    pub fn poisson(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(alpha, InnovationModel::poisson(lambda)?)
    }

    pub fn negative_binomial(alpha: f64, lambda: f64, phi: f64) -> Result<Self> {
        Self::new(alpha, InnovationModel::negative_binomial(lambda, phi)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    pub fn lambda(&self) -> f64 {
        self.innovation.lambda
    }

    pub fn phi(&self) -> f64 {
        self.innovation.phi
    }

    pub fn family(&self) -> InnovationFamily {
        self.innovation.family
    }

    /// Stationary mean `lambda / (1 - alpha)` (infinite at `alpha = 1`).
    pub fn stationary_mean(&self) -> f64 {
        self.lambda() / (1.0 - self.alpha)
    }
}

/// Draw of `alpha ∘ x`.
///
/// Panics if `alpha` is outside `[0, 1]`.
pub fn binomial_thin<R: Rng + ?Sized>(x: u64, alpha: f64, rng: &mut R) -> u64 {
    assert!(
        (0.0..=1.0).contains(&alpha),
        "thinning probability {alpha} outside [0, 1]"
    );
    if x == 0 || alpha == 0.0 {
        return 0;
    }
    if alpha == 1.0 {
        return x;
    }
    Binomial::new(x, alpha).expect("valid binomial").sample(rng)
}

fn ln_factorials(max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `k * ln_p`, with `0 * ln 0 = 0`.
#[inline]
fn xlny(k: u64, ln_p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_p
    }
}

/// Transition log-probabilities of one component for counts up to `max`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    ln_alpha: f64,
    ln_one_minus_alpha: f64,
    ln_innovation: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(params: &ComponentParams, max_count: u64) -> Self {
        Self {
            ln_alpha: params.alpha.ln(),
            ln_one_minus_alpha: (-params.alpha).ln_1p(),
            ln_innovation: params.innovation.ln_pmf_table(max_count),
            ln_fact: ln_factorials(max_count),
        }
    }

    pub fn max_count(&self) -> u64 {
        self.ln_innovation.len() as u64 - 1
    }

    #[inline]
    pub fn ln_innovation(&self, k: u64) -> f64 {
        self.ln_innovation[k as usize]
    }

    /// `ln P(X_t = x_t | X_{t-s} = x_lag)`; both counts must be `<= max_count`.
    pub fn ln_transition(&self, x_t: u64, x_lag: u64) -> f64 {
        let n = x_lag as usize;
        let top = x_t.min(x_lag);
        let ln_fact_n = self.ln_fact[n];
        // online log-sum-exp over the number of survivors k
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for k in 0..=top {
            let ku = k as usize;
            let term = ln_fact_n - self.ln_fact[ku] - self.ln_fact[n - ku]
                + xlny(k, self.ln_alpha)
                + xlny(x_lag - k, self.ln_one_minus_alpha)
                + self.ln_innovation[(x_t - k) as usize];
            if term == f64::NEG_INFINITY {
                continue;
            }
            if term > max {
                acc = acc * (max - term).exp() + 1.0;
                max = term;
            } else {
                acc += (term - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            max + acc.ln()
        }
    }
}

/// `P(X_t = x_t | X_{t-s} = x_lag)` under `params`.
pub fn conditional_pmf(x_t: u64, x_lag: u64, params: &ComponentParams) -> f64 {
    TransitionKernel::new(params, x_t.max(x_lag))
        .ln_transition(x_t, x_lag)
        .exp()
}

/// Log conditional likelihood of one series under an INAR(s*) component.
///
/// The first `s` observations contribute innovation log-pmfs, the rest
/// transition log-pmfs given the value `s` steps back. Returns `-inf` when
/// some factor is zero.
pub fn series_loglik(series: &CountSeries, spec: &ComponentSpec, params: &ComponentParams) -> f64 {
    let kernel = TransitionKernel::new(params, series.max());
    let v = series.values();
    let head = spec.lag.min(v.len());
    let initial: f64 = v[..head].iter().map(|&x| kernel.ln_innovation(x)).sum();
    let transitions: f64 = (head..v.len())
        .map(|t| kernel.ln_transition(v[t], v[t - spec.lag]))
        .sum();
    initial + transitions
}

/// Simulates `len` steps of the INAR(s*) recursion; the first `s` values are
/// pure innovations.
pub fn simulate_inar<R: Rng + ?Sized>(
    spec: &ComponentSpec,
    params: &ComponentParams,
    len: usize,
    rng: &mut R,
) -> Result<CountSeries> {
    if len == 0 {
        return Err(Error::InvalidInput("series length must be positive".into()));
    }
    let sampler = InnovationSampler::new(&params.innovation);
    let mut values = Vec::with_capacity(len);
    for t in 0..len {
        let survivors = if t >= spec.lag {
            binomial_thin(values[t - spec.lag], params.alpha, rng)
        } else {
            0
        };
        values.push(survivors + sampler.sample(rng));
    }
    CountSeries::new(values)
}
