use std::path::PathBuf;

use clap::Args;
use inarmix::selection::{diagnose, DispersionVerdict, DEFAULT_DISPERSION_THRESHOLD};
use inarmix::InnovationFamily;
use serde::Serialize;

use super::OutDir;
use crate::config::FileConfig;
use crate::error::CliResult;
use crate::io::{self, num};
use crate::svg;

pub const DEFAULT_MAX_LAG: usize = 10;

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Panel CSV: id followed by counts.
    pub panel: PathBuf,
    /// Largest autocorrelation lag examined.
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Median variance/mean ratio above which the panel is called overdispersed.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write SVG charts.
    #[arg(long)]
    pub svg: bool,
    /// Drop series shorter than the longest one.
    #[arg(long)]
    pub complete_only: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    n_series: usize,
    max_lag: usize,
    median_abs_acf: &'a [f64],
    suggested_lags: (usize, usize),
    constant_series: Vec<&'a str>,
    median_ratio: f64,
    threshold: f64,
    verdict: DispersionVerdict,
    suggested_family: InnovationFamily,
}

pub fn run(args: &DiagnoseArgs, file: &FileConfig) -> CliResult<()> {
    let panel = io::read_panel(&args.panel, args.complete_only)?;
    let max_lag = args.max_lag.or(file.diagnose.max_lag).unwrap_or(DEFAULT_MAX_LAG);
    let threshold = args
        .threshold
        .or(file.diagnose.dispersion_threshold)
        .unwrap_or(DEFAULT_DISPERSION_THRESHOLD);
    let report = diagnose(&panel, max_lag, threshold)?;
    let ids = panel.ids();
    let mut out = OutDir::create(&args.out)?;

    out.csv(
        "acf.csv",
        &["lag", "id", "acf"],
        report.acf.acf_by_lag.iter().enumerate().flat_map(|(k, vals)| {
            vals.iter()
                .zip(ids)
                .map(move |(v, id)| vec![(k + 1).to_string(), id.clone(), num(*v)])
        }),
    )?;
    let d = &report.dispersion;
    out.csv(
        "dispersion.csv",
        &["id", "mean", "variance", "ratio"],
        ids.iter()
            .zip(&d.points)
            .zip(&d.ratios)
            .map(|((id, &(m, v)), r)| vec![id.clone(), num(m), num(v), num(*r)]),
    )?;
    let max_mean = d.points.iter().map(|p| p.0).fold(0.0, f64::max);
    out.csv(
        "dispersion_line.csv",
        &["mean", "variance"],
        [vec![num(0.0), num(0.0)], vec![num(max_mean), num(max_mean)]],
    )?;
    let summary = Summary {
        schema_version: io::SCHEMA_VERSION,
        n_series: panel.len(),
        max_lag,
        median_abs_acf: &report.acf.median_abs,
        suggested_lags: report.suggested_lags(),
        constant_series: report.acf.constant_series.iter().map(|&i| ids[i].as_str()).collect(),
        median_ratio: d.median_ratio,
        threshold,
        verdict: report.verdict(),
        suggested_family: report.verdict().family(),
    };
    out.json("diagnostics.json", &summary)?;
    if args.svg {
        out.text("acf.svg", &svg::acf_boxplots(&report.acf.acf_by_lag))?;
        out.text("dispersion.svg", &svg::dispersion_scatter(&d.points))?;
    }
    let (i, j) = summary.suggested_lags;
    println!(
        "{} series; suggested lags {i},{j}; median variance/mean {:.3} ({}dispersed, family {})",
        panel.len(),
        d.median_ratio,
        summary.verdict,
        summary.suggested_family
    );
    out.finish("diagnose", None)
}
