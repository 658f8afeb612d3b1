//! Finite mixtures of INAR(s*) likelihoods fitted by EM.
//!
//! The E-step computes posterior component memberships in the log domain.
//! The M-step updates mixing proportions in closed form and each component's
//! `(alpha, lambda, phi)` by maximising the responsibility-weighted
//! log-likelihood with a Nelder-Mead search in an unconstrained
//! parameterisation. Iteration stops on an Aitken-accelerated criterion.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::map_classify;
use crate::inar::{ComponentParams, ComponentSpec, InnovationFamily, InnovationModel, TransitionKernel};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::panel::PanelData;
use crate::selection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub spec: ComponentSpec,
    pub params: ComponentParams,
}

impl MixtureComponent {
    pub fn new(spec: ComponentSpec, params: ComponentParams) -> Result<Self> {
        if spec.family != params.family() {
            return Err(Error::InvalidInput(format!(
                "component spec family {} does not match parameter family {}",
                spec.family,
                params.family()
            )));
        }
        Ok(Self { spec, params })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<MixtureComponent>,
    weights: Vec<f64>,
}

impl MixtureModel {
    /// Weights must be positive and sum to one (to 1e-9); they are
    /// renormalised exactly.
    pub fn new(components: Vec<MixtureComponent>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("a mixture needs at least one component".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::ParameterDomain(format!("mixing proportion {w} is not positive")));
        }
        let total = stable_sum(&weights);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::ParameterDomain(format!("mixing proportions sum to {total}")));
        }
        let family = components[0].spec.family;
        if components.iter().any(|c| c.spec.family != family) {
            return Err(Error::InvalidInput(
                "mixture components must share one innovation family".into(),
            ));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { components, weights })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn family(&self) -> InnovationFamily {
        self.components[0].spec.family
    }

    pub fn specs(&self) -> Vec<ComponentSpec> {
        self.components.iter().map(|c| c.spec).collect()
    }

    /// Number of free parameters `rho`.
    pub fn free_parameters(&self) -> usize {
        selection::free_parameters(self.n_components(), self.family())
    }

    /// Same model with components reordered so that new position `k` holds
    /// old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_components()];
        if perm.len() != seen.len()
            || perm
                .iter()
                .any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation")));
        }
        Ok(Self {
            components: perm.iter().map(|&p| self.components[p]).collect(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
        })
    }

    /// Structure label such as `1xINAR(2*)+1xINAR(4*)`.
    pub fn structure(&self) -> String {
        structure_label(&self.specs())
    }
}

/// Human-readable label of a list of component specs, grouped by lag.
pub fn structure_label(specs: &[ComponentSpec]) -> String {
    let mut lags: Vec<usize> = specs.iter().map(|s| s.lag).collect();
    lags.sort_unstable();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < lags.len() {
        let j = lags[i..].iter().take_while(|&&l| l == lags[i]).count();
        let name = if lags[i] == 1 {
            "INAR(1)".to_string()
        } else {
            format!("INAR({}*)", lags[i])
        };
        parts.push(format!("{j}x{name}"));
        i += j;
    }
    parts.join("+")
}

/// Sum that does not depend on the order of its terms.
pub(crate) fn stable_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Row-stochastic `n x G` matrix of posterior memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n: usize,
    g: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let g = rows.first().map_or(0, Vec::len);
        if n == 0 || g == 0 {
            return Err(Error::InvalidInput(
                "responsibilities need at least one row and column".into(),
            ));
        }
        let mut values = Vec::with_capacity(n * g);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != g {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {g}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!("row {i} is not a probability vector")));
            }
            values.extend(row);
        }
        Ok(Self { n, g, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.g..(i + 1) * self.g]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.g)
    }

    pub fn column(&self, g: usize) -> Vec<f64> {
        self.rows().map(|r| r[g]).collect()
    }
}

/// `log L_ig` for every series `i` under one component.
pub fn component_logliks(panel: &PanelData, component: &MixtureComponent) -> Vec<f64> {
    let index = panel.lag_index(component.spec.lag);
    let kernel = TransitionKernel::new(&component.params, panel.max_count());
    let ln_pairs: Vec<f64> = index
        .pairs()
        .iter()
        .map(|&(x_lag, x_t)| kernel.ln_transition(x_t, x_lag))
        .collect();
    (0..panel.len())
        .map(|i| {
            let init: f64 = index
                .series_initial(i)
                .iter()
                .map(|&(v, c)| c as f64 * kernel.ln_innovation(v))
                .sum();
            let trans: f64 = index
                .series_pairs(i)
                .iter()
                .map(|&(k, c)| c as f64 * ln_pairs[k as usize])
                .sum();
            init + trans
        })
        .collect()
}

/// E-step: responsibilities and the observed-data log-likelihood
/// `sum_i log sum_g pi_g L_ig`.
pub fn e_step(panel: &PanelData, model: &MixtureModel) -> Result<(Responsibilities, f64)> {
    let g = model.n_components();
    let n = panel.len();
    let per_component: Vec<Vec<f64>> = model.components().iter().map(|c| component_logliks(panel, c)).collect();
    let ln_weights: Vec<f64> = model.weights().iter().map(|w| w.ln()).collect();

    let mut values = Vec::with_capacity(n * g);
    let mut total = 0.0;
    let mut terms = vec![0.0; g];
    for i in 0..n {
        for ((t, lw), comp) in terms.iter_mut().zip(&ln_weights).zip(&per_component) {
            *t = lw + comp[i];
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(Error::DegenerateFit {
                series: i,
                iteration: None,
            });
        }
        let scaled: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
        let lse = max + stable_sum(&scaled).ln();
        values.extend(terms.iter().map(|t| (t - lse).exp()));
        total += lse;
    }
    Ok((Responsibilities { n, g, values }, total))
}

/// `pi_g = n_g / n`, floored at `floor` and renormalised.
pub fn m_step_weights(resp: &Responsibilities, floor: f64) -> Vec<f64> {
    let n = resp.n_rows() as f64;
    let raw: Vec<f64> = (0..resp.n_components())
        .map(|g| resp.rows().map(|r| r[g]).sum::<f64>() / n)
        .collect();
    apply_weight_floor(&raw, floor)
}

/// Clips proportions below `floor` to exactly `floor` and rescales the rest
/// so the vector sums to one.
pub fn apply_weight_floor(raw: &[f64], floor: f64) -> Vec<f64> {
    let low = raw.iter().filter(|&&w| w < floor).count();
    if low == 0 {
        let total = stable_sum(raw);
        return raw.iter().map(|w| w / total).collect();
    }
    let high: Vec<f64> = raw.iter().copied().filter(|&w| w >= floor).collect();
    let high_total = stable_sum(&high);
    let budget = 1.0 - floor * low as f64;
    raw.iter()
        .map(|&w| if w < floor { floor } else { w / high_total * budget })
        .collect()
}

/// Responsibility-weighted log-likelihood of one component.
#[derive(Debug, Clone)]
pub struct WeightedObjective {
    max_count: u64,
    transitions: Vec<(u64, u64, f64)>,
    initial: Vec<(u64, f64)>,
    total_weight: f64,
}

impl WeightedObjective {
    pub fn new(panel: &PanelData, weights: &[f64], lag: usize) -> Self {
        assert_eq!(weights.len(), panel.len(), "one weight per series");
        let index = panel.lag_index(lag);
        let mut pair_w = vec![0.0; index.pairs().len()];
        let mut init_w = vec![0.0; panel.max_count() as usize + 1];
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for &(k, c) in index.series_pairs(i) {
                pair_w[k as usize] += w * c as f64;
            }
            for &(v, c) in index.series_initial(i) {
                init_w[v as usize] += w * c as f64;
            }
        }
        let transitions: Vec<(u64, u64, f64)> = index
            .pairs()
            .iter()
            .zip(&pair_w)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&(x_lag, x_t), &w)| (x_lag, x_t, w))
            .collect();
        let initial: Vec<(u64, f64)> = init_w
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(v, &w)| (v as u64, w))
            .collect();
        let max_count = transitions
            .iter()
            .map(|&(a, b, _)| a.max(b))
            .chain(initial.iter().map(|&(v, _)| v))
            .max()
            .unwrap_or(0);
        Self {
            max_count,
            transitions,
            initial,
            total_weight: weights.iter().filter(|w| **w > 0.0).sum(),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn value(&self, params: &ComponentParams) -> f64 {
        let kernel = TransitionKernel::new(params, self.max_count);
        let init: f64 = self.initial.iter().map(|&(v, w)| w * kernel.ln_innovation(v)).sum();
        let trans: f64 = self
            .transitions
            .iter()
            .map(|&(x_lag, x_t, w)| w * kernel.ln_transition(x_t, x_lag))
            .sum();
        init + trans
    }
}

const ALPHA_CLAMP: f64 = 1e-8;

fn logit(p: f64) -> f64 {
    let p = p.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `(logit alpha, log lambda[, log(phi - 1)])`.
pub fn to_unconstrained(params: &ComponentParams) -> Vec<f64> {
    let mut z = vec![logit(params.alpha()), params.lambda().ln()];
    if params.family() == InnovationFamily::NegativeBinomial {
        z.push((params.phi() - 1.0).ln());
    }
    z
}

pub fn from_unconstrained(z: &[f64], family: InnovationFamily) -> Result<ComponentParams> {
    let alpha = sigmoid(z[0]);
    let lambda = z[1].exp();
    let innovation = match family {
        InnovationFamily::Poisson => InnovationModel::poisson(lambda)?,
        InnovationFamily::NegativeBinomial => InnovationModel::negative_binomial(lambda, 1.0 + z[2].exp())?,
    };
    ComponentParams::new(alpha, innovation)
}

/// Outcome of one component M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentUpdate {
    pub params: ComponentParams,
    pub objective_start: f64,
    pub objective: f64,
    /// Set when the maximiser could not improve on the start after restarts.
    pub warning: Option<String>,
}

fn m_step_optimizer() -> NelderMeadConfig {
    NelderMeadConfig {
        step: 0.2,
        ftol_abs: 1e-6,
        ftol_rel: 1e-12,
        xtol: 1e-4,
        max_evals: 600,
    }
}

/// Offsets (in unconstrained space) for restarts after a non-improving run.
const RESTART_JITTER: [f64; 2] = [0.5, -0.5];

/// Maximises the weighted log-likelihood `sum_i w_i log L_i(theta)` of one
/// component, starting from `start`. The result is never worse than `start`.
pub fn m_step_component(
    panel: &PanelData,
    weights: &[f64],
    spec: &ComponentSpec,
    start: &ComponentParams,
) -> Result<ComponentUpdate> {
    if spec.family != start.family() {
        return Err(Error::InvalidInput(format!(
            "start parameters are {} but the component is {}",
            start.family(),
            spec.family
        )));
    }
    let objective = WeightedObjective::new(panel, weights, spec.lag);
    if objective.total_weight() <= f64::MIN_POSITIVE {
        return Ok(ComponentUpdate {
            params: *start,
            objective_start: 0.0,
            objective: 0.0,
            warning: None,
        });
    }
    let q_start = objective.value(start);
    let neg_q = |z: &[f64]| match from_unconstrained(z, spec.family) {
        Ok(p) => -objective.value(&p),
        Err(_) => f64::INFINITY,
    };
    let z0 = to_unconstrained(start);
    let cfg = m_step_optimizer();

    let attempt = |z_init: &[f64]| -> Option<(ComponentParams, f64)> {
        let m = nelder_mead(neg_q, z_init, &cfg);
        let q = -m.value;
        if q > q_start || (q_start == f64::NEG_INFINITY && q.is_finite()) {
            let params = from_unconstrained(&m.x, spec.family).ok()?;
            // re-evaluate so the reported value matches the returned parameters exactly
            let q = objective.value(&params);
            (q >= q_start).then_some((params, q))
        } else {
            None
        }
    };

    if let Some((params, q)) = attempt(&z0) {
        return Ok(ComponentUpdate {
            params,
            objective_start: q_start,
            objective: q,
            warning: None,
        });
    }
    for jitter in RESTART_JITTER {
        let z: Vec<f64> = z0.iter().map(|v| v + jitter).collect();
        if let Some((params, q)) = attempt(&z) {
            return Ok(ComponentUpdate {
                params,
                objective_start: q_start,
                objective: q,
                warning: None,
            });
        }
    }
    Ok(ComponentUpdate {
        params: *start,
        objective_start: q_start,
        objective: q_start,
        warning: Some(format!(
            "no improvement for {} component after {} restarts",
            spec,
            RESTART_JITTER.len()
        )),
    })
}

/// Aitken-based stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// `l_inf^(k+1) - l^(k+1) < eps`.
    Lindsay,
    /// `l_inf^(k+1) - l^(k) in (0, eps)`; at least as strict as `Lindsay`.
    #[default]
    McNicholas,
}

/// Aitken acceleration `a^(k)` and asymptotic estimate `l_inf^(k+1)` from
/// three consecutive log-likelihoods. `None` when `l^(k) = l^(k-1)`.
pub fn aitken_estimate(l_prev: f64, l_cur: f64, l_next: f64) -> Option<(f64, f64)> {
    let denom = l_cur - l_prev;
    if denom == 0.0 {
        return None;
    }
    let a = (l_next - l_cur) / denom;
    let linf = l_cur + (l_next - l_cur) / (1.0 - a);
    Some((a, linf))
}

/// Evaluates `rule` on the window `(l^(k-1), l^(k), l^(k+1))`. Zero progress
/// (`l^(k) = l^(k-1)`) counts as converged.
pub fn stopping_rule_met(rule: StoppingRule, l_prev: f64, l_cur: f64, l_next: f64, epsilon: f64) -> bool {
    let Some((_, linf)) = aitken_estimate(l_prev, l_cur, l_next) else {
        return true;
    };
    match rule {
        StoppingRule::Lindsay => linf - l_next < epsilon,
        StoppingRule::McNicholas => {
            let gap = linf - l_cur;
            gap > 0.0 && gap < epsilon
        }
    }
}

/// Log-likelihood trace plus the latest Aitken quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMonitor {
    pub loglik_trace: Vec<f64>,
    pub aitken_a: Option<f64>,
    pub linf_estimate: Option<f64>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub rule: StoppingRule,
}

impl ConvergenceMonitor {
    pub fn new(epsilon: f64, max_iters: usize, rule: StoppingRule) -> Self {
        Self {
            loglik_trace: Vec::new(),
            aitken_a: None,
            linf_estimate: None,
            epsilon,
            max_iters,
            rule,
        }
    }

    pub fn push(&mut self, loglik: f64) {
        self.loglik_trace.push(loglik);
        if let [.., p, c, n] = self.loglik_trace[..] {
            match aitken_estimate(p, c, n) {
                Some((a, linf)) => {
                    self.aitken_a = Some(a);
                    self.linf_estimate = Some(linf);
                }
                None => {
                    self.aitken_a = None;
                    self.linf_estimate = None;
                }
            }
        }
    }
}

/// Whether the last three recorded log-likelihoods satisfy the monitor's rule.
pub fn aitken_converged(monitor: &ConvergenceMonitor) -> bool {
    match monitor.loglik_trace[..] {
        [.., p, c, n] => stopping_rule_met(monitor.rule, p, c, n, monitor.epsilon),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub rule: StoppingRule,
    pub weight_floor: f64,
}

impl EmConfig {
    /// Tolerance used for the simulation studies.
    pub const SIMULATION_EPSILON: f64 = 1e-1;
    /// Tolerance used for real-data analyses.
    pub const REAL_DATA_EPSILON: f64 = 1e-2;
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epsilon: Self::SIMULATION_EPSILON,
            max_iters: 500,
            rule: StoppingRule::McNicholas,
            weight_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MixtureModel,
    pub responsibilities: Responsibilities,
    pub final_loglik: f64,
    pub bic: f64,
    pub map_labels: Vec<usize>,
    pub converged: bool,
    /// Number of completed M-steps.
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn free_parameters(&self) -> usize {
        self.model.free_parameters()
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} loglik={:.3} BIC={:.3} iterations={} converged={}",
            self.model.structure(),
            self.final_loglik,
            self.bic,
            self.iterations,
            self.converged
        )?;
        for (c, w) in self.model.components().iter().zip(self.model.weights()) {
            writeln!(
                f,
                "  {:<10} pi={:.3} alpha={:.3} lambda={:.3} phi={:.3}",
                c.spec.to_string(),
                w,
                c.params.alpha(),
                c.params.lambda(),
                c.params.phi()
            )?;
        }
        Ok(())
    }
}

/// Runs EM from `init` until the stopping rule holds or `max_iters` M-steps
/// have been taken (then `converged = false`).
pub fn fit_em(panel: &PanelData, init: &MixtureModel, cfg: &EmConfig) -> Result<FitResult> {
    let mut model = init.clone();
    let mut monitor = ConvergenceMonitor::new(cfg.epsilon, cfg.max_iters, cfg.rule);
    let mut warnings = Vec::new();
    let mut iterations = 0;

    let (resp, loglik, converged) = loop {
        let (resp, loglik) = e_step(panel, &model).map_err(|e| match e {
            Error::DegenerateFit { series, .. } => Error::DegenerateFit {
                series,
                iteration: Some(iterations),
            },
            other => other,
        })?;
        monitor.push(loglik);
        if aitken_converged(&monitor) {
            break (resp, loglik, true);
        }
        if iterations >= cfg.max_iters {
            break (resp, loglik, false);
        }
        iterations += 1;

        let weights = m_step_weights(&resp, cfg.weight_floor);
        let mut components = Vec::with_capacity(model.n_components());
        for (g, comp) in model.components().iter().enumerate() {
            let update = m_step_component(panel, &resp.column(g), &comp.spec, &comp.params)?;
            if let Some(w) = update.warning {
                log::debug!("EM iteration {iterations}, component {g}: {w}");
                warnings.push(format!("iteration {iterations}, component {g}: {w}"));
            }
            components.push(MixtureComponent {
                spec: comp.spec,
                params: update.params,
            });
        }
        model = MixtureModel::new(components, weights)?;
    };

    let bic = selection::bic(loglik, model.n_components(), model.family(), panel.n_obs());
    Ok(FitResult {
        map_labels: map_classify(&resp),
        model,
        responsibilities: resp,
        final_loglik: loglik,
        bic,
        converged,
        iterations,
        loglik_trace: monitor.loglik_trace,
        n_obs: panel.n_obs(),
        warnings,
    })
}
