//! Simulation studies: labelled mixture panels, repeated model search and
//! summary tables over replications.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{fcmdd_select, DistanceMatrix, FcmddConfig};
use crate::error::{Error, Result};
use crate::eval::{adjusted_rand_index, CrossTab};
use crate::inar::{simulate_inar, ComponentParams, ComponentSpec, InnovationFamily, InnovationModel};
use crate::panel::{CountSeries, PanelData};
use crate::rng::{derive_seed, seeded};
use crate::selection::{model_search, HRule, ModelGrid, SearchConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentTruth {
    pub alpha: f64,
    pub pi: f64,
    pub lambda: f64,
    pub phi: f64,
    pub lag: usize,
}

impl ComponentTruth {
    pub fn params(&self, family: InnovationFamily) -> Result<ComponentParams> {
        ComponentParams::new(self.alpha, InnovationModel::new(family, self.lambda, self.phi)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub family: InnovationFamily,
    pub truths: Vec<ComponentTruth>,
    pub n_individuals: usize,
    pub series_len: usize,
    pub replications: usize,
    pub grid: ModelGrid,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.truths.is_empty() {
            return Err(Error::InvalidInput(format!(
                "scenario `{}` has no components",
                self.name
            )));
        }
        let total: f64 = self.truths.iter().map(|t| t.pi).sum();
        if (total - 1.0).abs() > 1e-9 || self.truths.iter().any(|t| t.pi.is_nan() || t.pi <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "mixing proportions of `{}` must be positive and sum to 1",
                self.name
            )));
        }
        for t in &self.truths {
            t.params(self.family)?;
            ComponentSpec::new(t.lag, self.family)?;
        }
        if self.n_individuals < 2 || self.series_len == 0 {
            return Err(Error::InvalidInput(
                "need at least two individuals and one time point".into(),
            ));
        }
        if self.grid.family != self.family {
            return Err(Error::InvalidInput(
                "model grid family differs from the scenario family".into(),
            ));
        }
        self.grid.validate()
    }
}

fn truth(alpha: f64, pi: f64, lambda: f64, phi: f64, lag: usize) -> ComponentTruth {
    ComponentTruth {
        alpha,
        pi,
        lambda,
        phi,
        lag,
    }
}

pub const DIFFICULTIES: [&str; 5] = ["very-easy", "easy", "moderate", "difficult", "very-difficult"];

/// The ten reference scenarios: five Poisson mixtures of two lag-5
/// components (200 series of length 50) and five NB mixtures of a lag-2 and
/// a lag-4 component (250 series of length 30), with 10 replications each.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    let p = InnovationFamily::Poisson;
    let nb = InnovationFamily::NegativeBinomial;
    let poisson = [
        [(0.20, 0.375, 7.0), (0.70, 0.625, 0.5)],
        [(0.40, 0.375, 6.0), (0.70, 0.625, 0.5)],
        [(0.40, 0.375, 6.0), (0.50, 0.625, 2.0)],
        [(0.45, 0.375, 4.0), (0.50, 0.625, 2.0)],
        [(0.45, 0.375, 4.0), (0.50, 0.625, 3.0)],
    ];
    let negbin = [
        [(0.80, 0.60, 1.0, 4.0), (0.20, 0.40, 9.0, 2.0)],
        [(0.70, 0.60, 3.0, 4.0), (0.20, 0.40, 9.0, 2.0)],
        [(0.70, 0.60, 3.0, 4.0), (0.35, 0.40, 7.0, 2.0)],
        [(0.50, 0.60, 4.0, 4.0), (0.35, 0.40, 7.0, 2.0)],
        [(0.50, 0.60, 4.0, 4.0), (0.40, 0.40, 6.0, 2.0)],
    ];
    let mut out = Vec::with_capacity(10);
    for (k, rows) in poisson.iter().enumerate() {
        out.push(ScenarioSpec {
            name: format!("poisson-{}", DIFFICULTIES[k]),
            family: p,
            truths: rows.iter().map(|&(a, w, l)| truth(a, w, l, 1.0, 5)).collect(),
            n_individuals: 200,
            series_len: 50,
            replications: 10,
            grid: ModelGrid::new((5, 10), 2, 3, HRule::ZeroOne, p).expect("valid grid"),
            seed: 1000 + k as u64,
        });
    }
    for (k, rows) in negbin.iter().enumerate() {
        let lags = [2, 4];
        out.push(ScenarioSpec {
            name: format!("nb-{}", DIFFICULTIES[k]),
            family: nb,
            truths: rows
                .iter()
                .zip(lags)
                .map(|(&(a, w, l, f), lag)| truth(a, w, l, f, lag))
                .collect(),
            n_individuals: 250,
            series_len: 30,
            replications: 10,
            grid: ModelGrid::new((2, 4), 2, 3, HRule::ZeroOne, nb).expect("valid grid"),
            seed: 2000 + k as u64,
        });
    }
    out
}

pub fn builtin_scenario(name: &str) -> Option<ScenarioSpec> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

/// Panel whose individuals draw their component i.i.d. from the mixing
/// proportions. Returns the panel and the true component labels.
pub fn simulate_labeled_panel<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(PanelData, Vec<usize>)> {
    spec.validate()?;
    let comps: Vec<(ComponentSpec, ComponentParams)> = spec
        .truths
        .iter()
        .map(|t| Ok((ComponentSpec::new(t.lag, spec.family)?, t.params(spec.family)?)))
        .collect::<Result<_>>()?;
    let mut labels = Vec::with_capacity(spec.n_individuals);
    let mut series: Vec<CountSeries> = Vec::with_capacity(spec.n_individuals);
    for _ in 0..spec.n_individuals {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut g = spec.truths.len() - 1;
        for (k, t) in spec.truths.iter().enumerate() {
            acc += t.pi;
            if u < acc {
                g = k;
                break;
            }
        }
        labels.push(g);
        series.push(simulate_inar(&comps[g].0, &comps[g].1, spec.series_len, rng)?);
    }
    Ok((PanelData::new(series)?, labels))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub search: SearchConfig,
    /// Run the DTW + FCMdd comparison on every replication.
    pub baseline: Option<FcmddConfig>,
}

/// Fitted component, ranked by descending innovation mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedComponent {
    pub alpha: f64,
    pub pi: f64,
    pub lambda: f64,
    pub phi: f64,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub selected_g: usize,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub ari: f64,
    pub structure: String,
    pub selected_g: usize,
    pub components: Vec<FittedComponent>,
    pub crosstab: CrossTab,
    pub loglik: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub baseline: Option<BaselineOutcome>,
}

/// Runs one replication: simulate, search, score.
pub fn run_replication(spec: &ScenarioSpec, replication: usize, opts: &StudyOptions) -> Result<ReplicationOutcome> {
    let seed = derive_seed(spec.seed, replication as u64);
    let mut rng = seeded(seed);
    let (panel, truth) = simulate_labeled_panel(spec, &mut rng)?;
    let search = model_search(&panel, &spec.grid, &opts.search, &mut rng)?;
    let fit = &search.best;

    let mut order: Vec<usize> = (0..fit.model.n_components()).collect();
    let comps = fit.model.components();
    order.sort_by(|&a, &b| comps[b].params.lambda().total_cmp(&comps[a].params.lambda()));
    let mut rank = vec![0; order.len()];
    for (r, &g) in order.iter().enumerate() {
        rank[g] = r;
    }
    let aligned: Vec<usize> = fit.map_labels.iter().map(|&g| rank[g]).collect();
    let components = order
        .iter()
        .map(|&g| FittedComponent {
            alpha: comps[g].params.alpha(),
            pi: fit.model.weights()[g],
            lambda: comps[g].params.lambda(),
            phi: comps[g].params.phi(),
            lag: comps[g].spec.lag,
        })
        .collect();

    let baseline = match &opts.baseline {
        None => None,
        Some(cfg) => {
            let dist = DistanceMatrix::dtw(&panel);
            let cfg = FcmddConfig {
                seed: derive_seed(seed, u64::MAX),
                ..cfg.clone()
            };
            let sel = fcmdd_select(&dist, &cfg)?;
            Some(BaselineOutcome {
                selected_g: sel.best_g,
                ari: adjusted_rand_index(&truth, &sel.labels)?,
            })
        }
    };

    Ok(ReplicationOutcome {
        replication,
        seed,
        ari: adjusted_rand_index(&truth, &fit.map_labels)?,
        structure: fit.model.structure(),
        selected_g: fit.model.n_components(),
        components,
        crosstab: CrossTab::from_labels(&truth, &aligned)?,
        loglik: fit.final_loglik,
        bic: fit.bic,
        iterations: fit.iterations,
        converged: fit.converged,
        baseline,
    })
}

/// Mean fitted parameters of the component at a given rank, over the
/// replications that selected at least `rank + 1` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    pub count: usize,
    pub alpha: f64,
    pub pi: f64,
    pub lambda: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub ari_mean: f64,
    pub ari_sd: f64,
    pub selected_g_counts: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub completed: usize,
    pub failures: Vec<(usize, String)>,
    pub ari_mean: f64,
    pub ari_sd: f64,
    pub selection_counts: BTreeMap<String, usize>,
    pub mean_components: Vec<RankSummary>,
    pub crosstab: CrossTab,
    pub baseline: Option<BaselineSummary>,
    pub replications: Vec<ReplicationOutcome>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// All replications of `spec`, in parallel, each with its own derived seed.
pub fn run_scenario(spec: &ScenarioSpec, opts: &StudyOptions) -> Result<ScenarioReport> {
    spec.validate()?;
    let results: Vec<Result<ReplicationOutcome>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, r, opts))
        .collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => replications.push(o),
            Err(e) => {
                log::warn!("{} replication {r} failed: {e}", spec.name);
                failures.push((r, e.to_string()));
            }
        }
    }
    Ok(summarize(spec, opts, replications, failures))
}

fn summarize(
    spec: &ScenarioSpec,
    opts: &StudyOptions,
    replications: Vec<ReplicationOutcome>,
    failures: Vec<(usize, String)>,
) -> ScenarioReport {
    let aris: Vec<f64> = replications.iter().map(|r| r.ari).collect();
    let (ari_mean, ari_sd) = mean_sd(&aris);
    let mut selection_counts = BTreeMap::new();
    let mut crosstab = CrossTab::default();
    let max_rank = replications.iter().map(|r| r.components.len()).max().unwrap_or(0);
    let mut sums = vec![(0usize, 0.0, 0.0, 0.0, 0.0); max_rank];
    for rep in &replications {
        *selection_counts.entry(rep.structure.clone()).or_insert(0) += 1;
        crosstab.accumulate(&rep.crosstab);
        for (k, c) in rep.components.iter().enumerate() {
            let s = &mut sums[k];
            s.0 += 1;
            s.1 += c.alpha;
            s.2 += c.pi;
            s.3 += c.lambda;
            s.4 += c.phi;
        }
    }
    let mean_components = sums
        .iter()
        .enumerate()
        .map(|(rank, &(n, a, p, l, f))| {
            let n_f = n as f64;
            RankSummary {
                rank,
                count: n,
                alpha: a / n_f,
                pi: p / n_f,
                lambda: l / n_f,
                phi: f / n_f,
            }
        })
        .collect();
    let baseline = opts.baseline.as_ref().map(|_| {
        let vals: Vec<f64> = replications
            .iter()
            .filter_map(|r| r.baseline.as_ref().map(|b| b.ari))
            .collect();
        let (ari_mean, ari_sd) = mean_sd(&vals);
        let mut selected_g_counts = BTreeMap::new();
        for b in replications.iter().filter_map(|r| r.baseline.as_ref()) {
            *selected_g_counts.entry(b.selected_g).or_insert(0) += 1;
        }
        BaselineSummary {
            ari_mean,
            ari_sd,
            selected_g_counts,
        }
    });
    ScenarioReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: spec.clone(),
        completed: replications.len(),
        failures,
        ari_mean,
        ari_sd,
        selection_counts,
        mean_components,
        crosstab,
        baseline,
        replications,
    }
}

fn fmt_tuple(alpha: f64, pi: f64, lambda: f64, phi: f64) -> String {
    format!("({alpha:.3}, {pi:.3}, {lambda:.2}, {phi:.2})")
}

fn fmt_mean_sd(mean: f64, sd: f64) -> String {
    if mean.is_nan() {
        "-".to_string()
    } else {
        format!("{mean:.3} ({sd:.2})")
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Parameter table: true and mean estimated `(alpha, pi, lambda, phi)` per
/// component with the ARI of each scenario.
pub fn parameter_table(reports: &[ScenarioReport]) -> String {
    let mut rows = vec![vec![
        "Scenario".to_string(),
        "Component".to_string(),
        "True (alpha, pi, lambda, phi)".to_string(),
        "Mean estimate".to_string(),
        "Cases".to_string(),
        "ARI mean (sd)".to_string(),
    ]];
    for rep in reports {
        let mut truths = rep.scenario.truths.clone();
        truths.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
        let n = truths.len().max(rep.mean_components.len());
        for k in 0..n {
            let t = truths
                .get(k)
                .map_or("-".to_string(), |t| fmt_tuple(t.alpha, t.pi, t.lambda, t.phi));
            let (e, cases) = rep
                .mean_components
                .get(k)
                .map_or(("-".to_string(), "0".to_string()), |m| {
                    (fmt_tuple(m.alpha, m.pi, m.lambda, m.phi), m.count.to_string())
                });
            let (name, ari) = if k == 0 {
                (rep.scenario.name.clone(), fmt_mean_sd(rep.ari_mean, rep.ari_sd))
            } else {
                (String::new(), String::new())
            };
            rows.push(vec![name, (k + 1).to_string(), t, e, cases, ari]);
        }
    }
    align(&rows)
}

/// Comparison table: selected structures and ARI of the mixture fit against
/// the DTW + FCMdd baseline.
pub fn comparison_table(reports: &[ScenarioReport]) -> String {
    let mut rows = vec![vec![
        "Scenario".to_string(),
        "Selected structures".to_string(),
        "INAR ARI".to_string(),
        "FCMdd G".to_string(),
        "FCMdd ARI".to_string(),
    ]];
    for rep in reports {
        let selected: Vec<String> = rep.selection_counts.iter().map(|(s, c)| format!("{s}: {c}")).collect();
        let (g, ari) = match &rep.baseline {
            Some(b) => (
                b.selected_g_counts
                    .iter()
                    .map(|(g, c)| format!("G={g}: {c}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                fmt_mean_sd(b.ari_mean, b.ari_sd),
            ),
            None => ("-".to_string(), "-".to_string()),
        };
        rows.push(vec![
            rep.scenario.name.clone(),
            selected.join(", "),
            fmt_mean_sd(rep.ari_mean, rep.ari_sd),
            g,
            ari,
        ]);
    }
    align(&rows)
}

/// Classification table accumulated over replications (rows: true
/// component, columns: fitted component by descending innovation mean).
pub fn crosstab_text(report: &ScenarioReport) -> String {
    let tab = &report.crosstab;
    let mut out = String::new();
    let _ = writeln!(out, "{} ({} replications)", report.scenario.name, report.completed);
    let mut rows = vec![std::iter::once("true\\fitted".to_string())
        .chain(tab.col_labels.iter().map(|c| (c + 1).to_string()))
        .collect::<Vec<_>>()];
    for (i, &r) in tab.row_labels.iter().enumerate() {
        rows.push(
            std::iter::once((r + 1).to_string())
                .chain(tab.counts[i].iter().map(u64::to_string))
                .collect(),
        );
    }
    out.push_str(&align(&rows));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_truths() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 10);
        let pvd = builtin_scenario("poisson-very-difficult").unwrap();
        assert_eq!(pvd.truths[0], truth(0.45, 0.375, 4.0, 1.0, 5));
        assert_eq!(pvd.truths[1], truth(0.50, 0.625, 3.0, 1.0, 5));
        let nbve = builtin_scenario("nb-very-easy").unwrap();
        assert_eq!(nbve.truths[0], truth(0.80, 0.60, 1.0, 4.0, 2));
        assert_eq!(nbve.truths[1], truth(0.20, 0.40, 9.0, 2.0, 4));
        assert_eq!((nbve.n_individuals, nbve.series_len), (250, 30));
        for s in &all {
            s.validate().unwrap();
        }
    }

    #[test]
    fn zero_replications_is_empty_report() {
        let mut s = builtin_scenario("poisson-easy").unwrap();
        s.replications = 0;
        let r = run_scenario(&s, &StudyOptions::default()).unwrap();
        assert_eq!(r.completed, 0);
        assert!(r.replications.is_empty() && r.failures.is_empty());
        assert!(r.ari_mean.is_nan());
    }

    #[test]
    fn mean_sd_small_samples() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
