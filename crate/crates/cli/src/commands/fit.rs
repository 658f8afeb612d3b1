use std::path::PathBuf;

use clap::{Args, ValueEnum};
use inarmix::mixture::StoppingRule;
use inarmix::rng::seeded;
use inarmix::selection::{acf_panel, dispersion_diagnostic, model_search, HRule, ModelGrid, SearchConfig};
use inarmix::selection::{CandidateRow, DEFAULT_DISPERSION_THRESHOLD};
use inarmix::{EmConfig, FitResult, InnovationFamily, PanelData};
use serde::Serialize;

use super::diagnose::DEFAULT_MAX_LAG;
use super::{membership_header, one_based, OutDir};
use crate::config::{parse_pair, FileConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, num};
use crate::svg;

pub const DEFAULT_G_RANGE: (usize, usize) = (1, 4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyChoice {
    /// Chosen by the dispersion diagnostic.
    Auto,
    Poisson,
    Nb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleChoice {
    Lindsay,
    Mcnicholas,
}

impl From<RuleChoice> for StoppingRule {
    fn from(r: RuleChoice) -> Self {
        match r {
            RuleChoice::Lindsay => StoppingRule::Lindsay,
            RuleChoice::Mcnicholas => StoppingRule::McNicholas,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel CSV: id followed by counts.
    pub panel: PathBuf,
    /// Candidate lag pair `i,j` (i < j); defaults to the autocorrelation suggestion.
    #[arg(long, value_parser = parse_pair)]
    pub lags: Option<(usize, usize)>,
    /// Inclusive range of component counts `gmin,gmax`.
    #[arg(long, value_parser = parse_pair)]
    pub g_range: Option<(usize, usize)>,
    /// Numbers of second-lag components tried: `zero-one` or `full`.
    #[arg(long)]
    pub h_rule: Option<HRule>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyChoice>,
    /// Aitken stopping tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleChoice>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop series shorter than the longest one.
    #[arg(long)]
    pub complete_only: bool,
    /// Also write a cluster-profile SVG.
    #[arg(long)]
    pub svg: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ComponentOut {
    cluster: usize,
    lag: usize,
    weight: f64,
    alpha: f64,
    lambda: f64,
    phi: f64,
    size: usize,
}

#[derive(Debug, Serialize)]
struct ModelOut<'a> {
    schema_version: u32,
    structure: String,
    family: InnovationFamily,
    lags: (usize, usize),
    components: Vec<ComponentOut>,
    loglik: f64,
    bic: f64,
    free_parameters: usize,
    n_obs: usize,
    iterations: usize,
    converged: bool,
    warnings: &'a [String],
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SearchOut<'a> {
    schema_version: u32,
    grid: &'a ModelGrid,
    em: &'a EmConfig,
    best_index: usize,
    candidates: &'a [CandidateRow],
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn resolve_family(choice: Option<FamilyChoice>, file: &FileConfig, panel: &PanelData) -> CliResult<InnovationFamily> {
    let choice = match (choice, &file.search.family) {
        (Some(c), _) => c,
        (None, Some(s)) if s.eq_ignore_ascii_case("auto") => FamilyChoice::Auto,
        (None, Some(s)) => return Ok(s.parse()?),
        (None, None) => FamilyChoice::Auto,
    };
    Ok(match choice {
        FamilyChoice::Poisson => InnovationFamily::Poisson,
        FamilyChoice::Nb => InnovationFamily::NegativeBinomial,
        FamilyChoice::Auto => {
            let threshold = file
                .diagnose
                .dispersion_threshold
                .unwrap_or(DEFAULT_DISPERSION_THRESHOLD);
            let d = dispersion_diagnostic(panel, threshold);
            log::info!(
                "median variance/mean {:.3}: {} family",
                d.median_ratio,
                d.verdict.family()
            );
            d.verdict.family()
        }
    })
}

/// Mean count at each time point over the series assigned to each cluster.
fn profiles(panel: &PanelData, labels: &[usize], g: usize) -> Vec<Vec<(f64, usize)>> {
    let t = panel.max_len();
    let mut sums = vec![vec![(0.0, 0usize); t]; g];
    for (s, &l) in panel.series().iter().zip(labels) {
        for (k, &v) in s.values().iter().enumerate() {
            sums[l][k].0 += v as f64;
            sums[l][k].1 += 1;
        }
    }
    for row in &mut sums {
        for cell in row.iter_mut() {
            cell.0 = if cell.1 > 0 { cell.0 / cell.1 as f64 } else { f64::NAN };
        }
    }
    sums
}

pub fn run(args: &FitArgs, file: &FileConfig) -> CliResult<()> {
    let panel = io::read_panel(&args.panel, args.complete_only)?;
    let seed = file.resolve_seed(args.seed)?;
    let family = resolve_family(args.family, file, &panel)?;
    let lags = match args.lags.or(file.search.lags) {
        Some(l) => l,
        None => {
            let max_lag = file.diagnose.max_lag.unwrap_or(DEFAULT_MAX_LAG);
            let l = acf_panel(&panel, max_lag)?.suggested_lags;
            log::info!("using suggested lags {},{}", l.0, l.1);
            l
        }
    };
    let (g_min, g_max) = args.g_range.or(file.search.g_range).unwrap_or(DEFAULT_G_RANGE);
    let h_rule = match (args.h_rule, &file.search.h_rule) {
        (Some(r), _) => r,
        (None, Some(s)) => s.parse()?,
        (None, None) => HRule::default(),
    };
    let grid = ModelGrid::new(lags, g_min, g_max, h_rule, family)?;
    let em = EmConfig {
        epsilon: args.epsilon.or(file.em.epsilon).unwrap_or(EmConfig::REAL_DATA_EPSILON),
        max_iters: args
            .max_iters
            .or(file.em.max_iters)
            .unwrap_or(EmConfig::default().max_iters),
        rule: args.rule.map(Into::into).or(file.em.rule).unwrap_or_default(),
        ..EmConfig::default()
    };
    if em.epsilon.is_nan() || em.epsilon <= 0.0 || em.max_iters == 0 {
        return Err(CliError::Config("epsilon and max-iters must be positive".into()));
    }
    let init = file.init_config();
    init.validate()?;
    let cfg = SearchConfig { em, init };
    let result = model_search(&panel, &grid, &cfg, &mut seeded(seed))?;
    let fit: &FitResult = &result.best;
    let g = fit.model.n_components();
    let ids = panel.ids();
    let labels = &fit.map_labels;

    let mut out = OutDir::create(&args.out)?;
    out.csv(
        "bic_table.csv",
        &[
            "g",
            "h",
            "structure",
            "free_parameters",
            "loglik",
            "bic",
            "bic_neg",
            "iterations",
            "converged",
            "warm_start",
            "error",
        ],
        result.table.iter().map(|r| {
            vec![
                r.g.to_string(),
                r.h.to_string(),
                r.structure.clone(),
                r.free_parameters.to_string(),
                opt(r.loglik),
                opt(r.bic),
                opt(r.bic_neg),
                opt(r.iterations),
                opt(r.converged),
                r.warm_start.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    let sizes: Vec<usize> = (0..g).map(|k| labels.iter().filter(|&&l| l == k).count()).collect();
    let model = ModelOut {
        schema_version: io::SCHEMA_VERSION,
        structure: fit.model.structure(),
        family,
        lags,
        components: fit
            .model
            .components()
            .iter()
            .zip(fit.model.weights())
            .enumerate()
            .map(|(k, (c, &w))| ComponentOut {
                cluster: k + 1,
                lag: c.spec.lag,
                weight: w,
                alpha: c.params.alpha(),
                lambda: c.params.lambda(),
                phi: c.params.phi(),
                size: sizes[k],
            })
            .collect(),
        loglik: fit.final_loglik,
        bic: fit.bic,
        free_parameters: fit.free_parameters(),
        n_obs: fit.n_obs,
        iterations: fit.iterations,
        converged: fit.converged,
        warnings: &fit.warnings,
        seed,
    };
    out.json("model.json", &model)?;
    out.json(
        "search.json",
        &SearchOut {
            schema_version: io::SCHEMA_VERSION,
            grid: &grid,
            em: &cfg.em,
            best_index: result.best_index,
            candidates: &result.table,
        },
    )?;
    let header = membership_header("tau_", g);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "responsibilities.csv",
        &header,
        ids.iter()
            .zip(fit.responsibilities.rows())
            .zip(labels)
            .map(|((id, row), l)| {
                std::iter::once(id.clone())
                    .chain(row.iter().map(|&v| num(v)))
                    .chain(std::iter::once((l + 1).to_string()))
                    .collect()
            }),
    )?;
    out.labels("labels.csv", ids, &one_based(labels))?;
    let prof = profiles(&panel, labels, g);
    out.csv(
        "profiles.csv",
        &["cluster", "t", "mean", "n"],
        prof.iter().enumerate().flat_map(|(k, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| c.1 > 0)
                .map(move |(t, c)| vec![(k + 1).to_string(), (t + 1).to_string(), num(c.0), c.1.to_string()])
        }),
    )?;
    if args.svg {
        let curves: Vec<Vec<f64>> = prof.iter().map(|r| r.iter().map(|c| c.0).collect()).collect();
        out.text("profiles.svg", &svg::profiles(&curves))?;
    }
    println!(
        "selected {} ({} family, lags {},{}): loglik {:.3}, BIC {:.3}, {} iterations{}",
        model.structure,
        family,
        lags.0,
        lags.1,
        fit.final_loglik,
        fit.bic,
        fit.iterations,
        if fit.converged { "" } else { " (not converged)" }
    );
    for c in &model.components {
        println!(
            "  cluster {}: lag {}, weight {:.3}, alpha {:.3}, lambda {:.3}, phi {:.3}, {} series",
            c.cluster, c.lag, c.weight, c.alpha, c.lambda, c.phi, c.size
        );
    }
    out.finish("fit", Some(seed))
}
