use std::path::PathBuf;

use clap::Args;
use inarmix::baseline::FcmddConfig;
use inarmix::rng::derive_seed;
use inarmix::selection::SearchConfig;
use inarmix::simstudy::{
    builtin_scenario, builtin_scenarios, comparison_table, crosstab_text, parameter_table, run_scenario,
    ScenarioReport, ScenarioSpec, StudyOptions,
};
use inarmix::EmConfig;

use super::OutDir;
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// `all` or a comma-separated list of built-in scenario names.
    #[arg(long, default_value = "all")]
    pub scenarios: String,
    /// Replications per scenario; defaults to each scenario's own count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also run the DTW + FCMdd baseline on every replication.
    #[arg(long)]
    pub baseline: bool,
    /// Base seed; scenario `k` then uses a seed derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Aitken stopping tolerance.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn select(list: &str) -> CliResult<Vec<ScenarioSpec>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(builtin_scenarios());
    }
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| builtin_scenario(name).ok_or_else(|| CliError::Config(format!("unknown scenario `{name}`"))))
        .collect()
}

pub fn run(args: &StudyArgs, file: &FileConfig) -> CliResult<()> {
    let mut specs = select(&args.scenarios)?;
    if specs.is_empty() {
        return Err(CliError::Config("no scenarios selected".into()));
    }
    let base_seed = file.explicit_seed(args.seed)?;
    let all = builtin_scenarios();
    for spec in &mut specs {
        if let Some(seed) = base_seed {
            let k = all.iter().position(|s| s.name == spec.name).unwrap_or(0);
            spec.seed = derive_seed(seed, k as u64);
        }
        if let Some(r) = args.reps {
            spec.replications = r;
        }
    }
    let em = EmConfig {
        epsilon: args.epsilon.or(file.em.epsilon).unwrap_or(EmConfig::SIMULATION_EPSILON),
        max_iters: file.em.max_iters.unwrap_or(EmConfig::default().max_iters),
        rule: file.em.rule.unwrap_or_default(),
        ..EmConfig::default()
    };
    let init = file.init_config();
    init.validate()?;
    let opts = StudyOptions {
        search: SearchConfig { em, init },
        baseline: args.baseline.then(FcmddConfig::default),
    };

    let mut out = OutDir::create(&args.out)?;
    let mut reports: Vec<ScenarioReport> = Vec::with_capacity(specs.len());
    for spec in &specs {
        log::info!("running `{}` ({} replications)", spec.name, spec.replications);
        let report = run_scenario(spec, &opts)?;
        for (r, msg) in &report.failures {
            log::warn!("{} replication {r} failed: {msg}", spec.name);
        }
        out.json(&format!("report_{}.json", spec.name), &report)?;
        reports.push(report);
    }
    let mut tables = String::new();
    tables.push_str(&parameter_table(&reports));
    tables.push('\n');
    tables.push_str(&comparison_table(&reports));
    for r in &reports {
        tables.push('\n');
        tables.push_str(&crosstab_text(r));
    }
    out.text("tables.txt", &tables)?;
    print!("{tables}");
    out.finish("study", base_seed)
}
