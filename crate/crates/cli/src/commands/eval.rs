use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;
use inarmix::eval::CrossTab;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `id,label` CSV of reference labels.
    #[arg(long)]
    pub truth: PathBuf,
    /// `id,label` CSV of predicted labels; every id must appear in `--truth`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the JSON result here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvalOut {
    pub schema_version: u32,
    pub n: usize,
    pub ari: f64,
    pub rand_index: f64,
    pub truth_labels: Vec<String>,
    pub pred_labels: Vec<String>,
    /// `crosstab[r][c]` counts items with truth label `r` and predicted label `c`.
    pub crosstab: Vec<Vec<u64>>,
}

/// Maps labels to dense indices in sorted order.
fn intern(labels: &[&str]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    names.sort();
    names.dedup();
    let idx: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let codes = labels.iter().map(|l| idx[l]).collect();
    (names, codes)
}

pub fn evaluate(truth: &[(String, String)], pred: &[(String, String)], pred_path: &PathBuf) -> CliResult<EvalOut> {
    let by_id: HashMap<&str, &str> = truth.iter().map(|(i, l)| (i.as_str(), l.as_str())).collect();
    let mut t = Vec::with_capacity(pred.len());
    let mut p = Vec::with_capacity(pred.len());
    for (id, l) in pred {
        let truth_label = by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::parse(pred_path, 0, format!("id `{id}` has no reference label")))?;
        t.push(*truth_label);
        p.push(l.as_str());
    }
    if t.len() < 2 {
        return Err(CliError::Config("at least two labelled items are needed".into()));
    }
    let (truth_labels, tc) = intern(&t);
    let (pred_labels, pc) = intern(&p);
    let tab = CrossTab::from_labels(&tc, &pc)?;
    Ok(EvalOut {
        schema_version: io::SCHEMA_VERSION,
        n: t.len(),
        ari: tab.adjusted_rand_index(),
        rand_index: tab.rand_index(),
        truth_labels,
        pred_labels,
        crosstab: tab.counts,
    })
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let truth = io::read_labels(&args.truth)?;
    let pred = io::read_labels(&args.pred)?;
    if pred.len() < truth.len() {
        log::warn!(
            "{} of {} reference ids have no prediction",
            truth.len() - pred.len(),
            truth.len()
        );
    }
    let result = evaluate(&truth, &pred, &args.pred)?;
    match &args.out {
        Some(path) => {
            io::write_json(path, &result)?;
            println!("ARI {:.6} over {} items", result.ari, result.n);
        }
        None => {
            // a closed pipe downstream is not an error worth reporting
            let text = serde_json::to_string_pretty(&result).expect("serialisable output");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(())
}
