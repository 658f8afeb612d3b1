//! Information-criterion model choice and the panel diagnostics used to pick
//! the candidate lag pair and the innovation family.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inar::{ComponentSpec, InnovationFamily};
use crate::init::{augment_model, InitConfig, Initializer};
use crate::mixture::{fit_em, structure_label, EmConfig, FitResult, MixtureModel};
use crate::panel::PanelData;

/// Free parameters of a `g`-component mixture: per-component parameters plus
/// `g - 1` mixing proportions.
pub fn free_parameters(g: usize, family: InnovationFamily) -> usize {
    (family.params_per_component() + 1) * g - 1
}

/// `2 loglik - rho ln(n_obs)`; larger is better. `n_obs` is the total number
/// of time points in the panel.
pub fn bic(loglik: f64, g: usize, family: InnovationFamily, n_obs: usize) -> f64 {
    2.0 * loglik - free_parameters(g, family) as f64 * (n_obs.max(1) as f64).ln()
}

/// Which numbers of second-lag components are tried for each `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HRule {
    /// `h` in {0, 1}.
    #[default]
    ZeroOne,
    /// `h` in 0..=g.
    Full,
}

impl HRule {
    pub fn allowed(self, g: usize) -> Vec<usize> {
        match self {
            HRule::ZeroOne => (0..=g.min(1)).collect(),
            HRule::Full => (0..=g).collect(),
        }
    }
}

impl fmt::Display for HRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HRule::ZeroOne => "zero-one",
            HRule::Full => "full",
        })
    }
}

impl std::str::FromStr for HRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero-one" | "01" | "0,1" => Ok(HRule::ZeroOne),
            "full" | "all" => Ok(HRule::Full),
            other => Err(Error::InvalidInput(format!("unknown H rule `{other}`"))),
        }
    }
}

/// Candidate mixtures of `(g - h)` components at lag `i` and `h` at lag `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub lag_pair: (usize, usize),
    pub g_min: usize,
    pub g_max: usize,
    pub h_rule: HRule,
    pub family: InnovationFamily,
}

impl ModelGrid {
    pub fn new(
        lag_pair: (usize, usize),
        g_min: usize,
        g_max: usize,
        h_rule: HRule,
        family: InnovationFamily,
    ) -> Result<Self> {
        let grid = Self {
            lag_pair,
            g_min,
            g_max,
            h_rule,
            family,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, j) = self.lag_pair;
        if !(1 <= i && i < j) {
            return Err(Error::InvalidInput(format!(
                "lag pair must satisfy 1 <= i < j, got ({i}, {j})"
            )));
        }
        if self.g_min == 0 || self.g_min > self.g_max {
            return Err(Error::InvalidInput(format!(
                "component range {}..={} is empty or starts at zero",
                self.g_min, self.g_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateStructure {
    pub g: usize,
    pub h: usize,
    pub specs: Vec<ComponentSpec>,
}

impl CandidateStructure {
    pub fn label(&self) -> String {
        structure_label(&self.specs)
    }
}

/// Every candidate, ascending in `g` and then `h`.
pub fn enumerate_models(grid: &ModelGrid) -> Result<Vec<CandidateStructure>> {
    grid.validate()?;
    let (i, j) = grid.lag_pair;
    let at_i = ComponentSpec::new(i, grid.family)?;
    let at_j = ComponentSpec::new(j, grid.family)?;
    let mut out = Vec::new();
    for g in grid.g_min..=grid.g_max {
        for h in grid.h_rule.allowed(g) {
            let mut specs = vec![at_i; g - h];
            specs.extend(std::iter::repeat_n(at_j, h));
            out.push(CandidateStructure { g, h, specs });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub em: EmConfig,
    pub init: InitConfig,
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub g: usize,
    pub h: usize,
    pub structure: String,
    pub free_parameters: usize,
    /// `None` when the candidate failed.
    pub loglik: Option<f64>,
    /// `2 loglik - rho ln n` (larger is better).
    pub bic: Option<f64>,
    /// `-2 loglik + rho ln n` (smaller is better).
    pub bic_neg: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// The kept fit came from the previous `(g - 1, h)` fit rather than k-means.
    pub warm_start: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: FitResult,
    pub best_index: usize,
    pub table: Vec<CandidateRow>,
    /// Fits parallel to `table`; `None` for failed candidates.
    pub fits: Vec<Option<FitResult>>,
}

/// EM from every start; the fit with the largest final log-likelihood wins,
/// the earliest start on ties. Returns the fit and the index of its start.
fn best_of(panel: &PanelData, starts: &[MixtureModel], cfg: &EmConfig) -> Result<(FitResult, usize)> {
    let mut best: Option<(FitResult, usize)> = None;
    let mut first_err = None;
    for (idx, start) in starts.iter().enumerate() {
        match fit_em(panel, start, cfg) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|(b, _)| fit.final_loglik > b.final_loglik) {
                    best = Some((fit, idx));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or_else(|| Error::InvalidInput("no starting models".into())))
}

/// Fits every candidate of `grid` and returns the one with the largest BIC.
///
/// A candidate with `g` components and `h` second-lag components runs EM from
/// the `(g - 1, h)` fit plus one new first-lag component when that fit
/// exists, and from k-means seeding once per distinct assignment of the
/// candidate's lags to the k-means clusters when `g` does not exceed the
/// number of series. The start reaching the largest log-likelihood is kept.
/// Failed candidates are recorded and skipped. Ties on BIC go to fewer free parameters, then to the earlier
/// candidate.
pub fn model_search<R: Rng + ?Sized>(
    panel: &PanelData,
    grid: &ModelGrid,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<SearchResult> {
    cfg.init.validate()?;
    let candidates = enumerate_models(grid)?;
    let mut initializers: BTreeMap<usize, Initializer> = BTreeMap::new();
    let mut by_gh: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut table = Vec::with_capacity(candidates.len());
    let mut fits: Vec<Option<FitResult>> = Vec::with_capacity(candidates.len());

    for cand in &candidates {
        let prev = cand
            .g
            .checked_sub(1)
            .filter(|&g| g >= 1)
            .and_then(|g| by_gh.get(&(g, cand.h)))
            .and_then(|&idx| fits[idx].as_ref());
        let mut starts = Vec::new();
        let mut first_err = None;
        if let Some(prev) = prev {
            match augment_model(prev, panel, &cand.specs[0], &cfg.init) {
                Ok(m) => starts.push(m),
                Err(e) => first_err = Some(e),
            }
        }
        let n_warm = starts.len();
        if cand.g <= panel.len() {
            let init = match initializers.entry(cand.g) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(Initializer::new(panel, cand.g, &cfg.init, rng)?)
                }
            };
            match init.arrangements(&cand.specs) {
                Ok(cold) => starts.extend(cold),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        } else if first_err.is_none() && starts.is_empty() {
            first_err = Some(Error::InvalidInput(format!(
                "{} components requested for {} series",
                cand.g,
                panel.len()
            )));
        }
        let (outcome, warm_start) = match (starts.is_empty(), first_err) {
            (true, Some(e)) => (Err(e), false),
            _ => match best_of(panel, &starts, &cfg.em) {
                Ok((fit, idx)) => (Ok(fit), idx < n_warm),
                Err(e) => (Err(e), false),
            },
        };
        let rho = free_parameters(cand.g, grid.family);
        let row = match &outcome {
            Ok(fit) => CandidateRow {
                g: cand.g,
                h: cand.h,
                structure: cand.label(),
                free_parameters: rho,
                loglik: Some(fit.final_loglik),
                bic: Some(fit.bic),
                bic_neg: Some(-fit.bic),
                iterations: Some(fit.iterations),
                converged: Some(fit.converged),
                warm_start,
                error: None,
            },
            Err(e) => {
                log::warn!("candidate {} failed: {e}", cand.label());
                CandidateRow {
                    g: cand.g,
                    h: cand.h,
                    structure: cand.label(),
                    free_parameters: rho,
                    loglik: None,
                    bic: None,
                    bic_neg: None,
                    iterations: None,
                    converged: None,
                    warm_start,
                    error: Some(e.to_string()),
                }
            }
        };
        by_gh.insert((cand.g, cand.h), fits.len());
        table.push(row);
        fits.push(outcome.ok());
    }

    let mut best_index: Option<usize> = None;
    for (idx, row) in table.iter().enumerate() {
        let Some(b) = row.bic else { continue };
        let better = match best_index {
            None => true,
            Some(cur) => {
                let cb = table[cur].bic.expect("best has a BIC");
                b > cb || (b == cb && row.free_parameters < table[cur].free_parameters)
            }
        };
        if better {
            best_index = Some(idx);
        }
    }
    let Some(best_index) = best_index else {
        return Err(Error::AllCandidatesFailed {
            count: table.len(),
            first: table.first().and_then(|r| r.error.clone()).unwrap_or_default(),
        });
    };
    Ok(SearchResult {
        best: fits[best_index].clone().expect("best fit exists"),
        best_index,
        table,
        fits,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Biased sample autocorrelations at lags `1..=max_lag`; `None` for a
/// constant series. Lags at or beyond the series length give 0.
pub fn series_acf(x: &[u64], max_lag: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<u64>() as f64 / n as f64;
    let dev: Vec<f64> = x.iter().map(|&v| v as f64 - mean).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    if c0 == 0.0 {
        return None;
    }
    Some(
        (1..=max_lag)
            .map(|k| {
                if k >= n {
                    0.0
                } else {
                    dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfReport {
    pub max_lag: usize,
    /// `acf_by_lag[k - 1][i]` is the lag-`k` autocorrelation of series `i`.
    pub acf_by_lag: Vec<Vec<f64>>,
    pub median_abs: Vec<f64>,
    /// Series with zero variance (autocorrelations recorded as 0).
    pub constant_series: Vec<usize>,
    /// The two lags with the largest median absolute autocorrelation, ascending.
    pub suggested_lags: (usize, usize),
}

/// Per-series autocorrelations and the suggested lag pair.
pub fn acf_panel(panel: &PanelData, max_lag: usize) -> Result<AcfReport> {
    if max_lag < 2 {
        return Err(Error::InvalidInput(
            "max lag must be at least 2 to suggest a lag pair".into(),
        ));
    }
    if max_lag >= panel.min_len() {
        log::warn!(
            "max lag {max_lag} is not below the shortest series length {}; missing lags recorded as 0",
            panel.min_len()
        );
    }
    let mut acf_by_lag = vec![Vec::with_capacity(panel.len()); max_lag];
    let mut constant_series = Vec::new();
    for (i, s) in panel.series().iter().enumerate() {
        let acf = series_acf(s.values(), max_lag).unwrap_or_else(|| {
            constant_series.push(i);
            vec![0.0; max_lag]
        });
        for (k, v) in acf.into_iter().enumerate() {
            acf_by_lag[k].push(v);
        }
    }
    let median_abs: Vec<f64> = acf_by_lag
        .iter()
        .map(|vals| median(&mut vals.iter().map(|v| v.abs()).collect::<Vec<_>>()))
        .collect();
    let mut order: Vec<usize> = (0..max_lag).collect();
    // stable: equal medians keep the smaller lag first
    order.sort_by(|&a, &b| median_abs[b].total_cmp(&median_abs[a]));
    let (a, b) = (order[0] + 1, order[1] + 1);
    Ok(AcfReport {
        max_lag,
        acf_by_lag,
        median_abs,
        constant_series,
        suggested_lags: (a.min(b), a.max(b)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionVerdict {
    Equi,
    Over,
}

impl DispersionVerdict {
    /// Innovation family suggested by the verdict.
    pub fn family(self) -> InnovationFamily {
        match self {
            DispersionVerdict::Equi => InnovationFamily::Poisson,
            DispersionVerdict::Over => InnovationFamily::NegativeBinomial,
        }
    }
}

impl fmt::Display for DispersionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DispersionVerdict::Equi => "equi",
            DispersionVerdict::Over => "over",
        })
    }
}

/// Median variance-to-mean ratio above which a panel is called overdispersed.
pub const DEFAULT_DISPERSION_THRESHOLD: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    /// Per-series `(mean, unbiased variance)`.
    pub points: Vec<(f64, f64)>,
    /// Per-series variance-to-mean ratio (0 when either is 0).
    pub ratios: Vec<f64>,
    pub median_ratio: f64,
    pub threshold: f64,
    pub verdict: DispersionVerdict,
}

pub fn dispersion_diagnostic(panel: &PanelData, threshold: f64) -> DispersionReport {
    let points: Vec<(f64, f64)> = panel.series().iter().map(|s| (s.mean(), s.variance())).collect();
    let ratios: Vec<f64> = points
        .iter()
        .map(|&(m, v)| if m > 0.0 && v > 0.0 { v / m } else { 0.0 })
        .collect();
    let median_ratio = median(&mut ratios.clone());
    let verdict = if median_ratio > threshold {
        DispersionVerdict::Over
    } else {
        DispersionVerdict::Equi
    };
    DispersionReport {
        points,
        ratios,
        median_ratio,
        threshold,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub acf: AcfReport,
    pub dispersion: DispersionReport,
}

impl DiagnosticsReport {
    pub fn suggested_lags(&self) -> (usize, usize) {
        self.acf.suggested_lags
    }

    pub fn verdict(&self) -> DispersionVerdict {
        self.dispersion.verdict
    }
}

pub fn diagnose(panel: &PanelData, max_lag: usize, threshold: f64) -> Result<DiagnosticsReport> {
    Ok(DiagnosticsReport {
        acf: acf_panel(panel, max_lag)?,
        dispersion: dispersion_diagnostic(panel, threshold),
    })
}
