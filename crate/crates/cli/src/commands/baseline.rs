use std::path::PathBuf;

use clap::Args;
use inarmix::baseline::{fcmdd_select, DistanceMatrix, FcmddCandidate, FcmddConfig};
use serde::Serialize;

use super::{membership_header, one_based, OutDir};
use crate::config::{parse_pair, FileConfig};
use crate::error::CliResult;
use crate::io::{self, num};

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Panel CSV: id followed by counts.
    pub panel: PathBuf,
    /// Inclusive range of cluster counts `gmin,gmax`.
    #[arg(long, value_parser = parse_pair)]
    pub g_range: Option<(usize, usize)>,
    /// Random medoid initialisations per cluster count.
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub fuzziness: Option<f64>,
    /// Stop when the objective improves by less than this.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub complete_only: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct BaselineOut<'a> {
    schema_version: u32,
    config: &'a FcmddConfig,
    best_g: usize,
    medoids: Vec<&'a str>,
    objective: f64,
    iterations: usize,
    candidates: &'a [FcmddCandidate],
}

pub fn config_from(args: &BaselineArgs, file: &FileConfig, seed: u64) -> FcmddConfig {
    let d = FcmddConfig::default();
    let f = &file.baseline;
    let (g_min, g_max) = args.g_range.or(f.g_range).unwrap_or((d.g_min, d.g_max));
    FcmddConfig {
        fuzziness: args.fuzziness.or(f.fuzziness).unwrap_or(d.fuzziness),
        random_starts: args.starts.or(f.starts).unwrap_or(d.random_starts),
        tolerance: args.tol.or(f.tolerance).unwrap_or(d.tolerance),
        max_iters: args.max_iters.or(f.max_iters).unwrap_or(d.max_iters),
        seed,
        g_min,
        g_max,
    }
}

pub fn run(args: &BaselineArgs, file: &FileConfig) -> CliResult<()> {
    let panel = io::read_panel(&args.panel, args.complete_only)?;
    let seed = file.resolve_seed(args.seed)?;
    let cfg = config_from(args, file, seed);
    cfg.validate()?;
    let dist = DistanceMatrix::dtw(&panel);
    let sel = fcmdd_select(&dist, &cfg)?;
    let ids = panel.ids();

    let mut out = OutDir::create(&args.out)?;
    out.json(
        "fcmdd.json",
        &BaselineOut {
            schema_version: io::SCHEMA_VERSION,
            config: &cfg,
            best_g: sel.best_g,
            medoids: sel.best.medoids.iter().map(|&m| ids[m].as_str()).collect(),
            objective: sel.best.objective,
            iterations: sel.best.iterations,
            candidates: &sel.candidates,
        },
    )?;
    let header = membership_header("u_", sel.best_g);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        "membership.csv",
        &header,
        ids.iter()
            .zip(&sel.best.membership)
            .zip(&sel.labels)
            .map(|((id, row), l)| {
                std::iter::once(id.clone())
                    .chain(row.iter().map(|&v| num(v)))
                    .chain(std::iter::once((l + 1).to_string()))
                    .collect()
            }),
    )?;
    out.labels("labels.csv", ids, &one_based(&sel.labels))?;
    println!("FCMdd selected {} clusters (Xie-Beni)", sel.best_g);
    for c in &sel.candidates {
        println!("  g={}: objective {:.3}, Xie-Beni {:.4}", c.g, c.objective, c.xie_beni);
    }
    out.finish("baseline", Some(seed))
}
