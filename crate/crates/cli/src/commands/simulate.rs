use std::path::PathBuf;

use clap::Args;
use inarmix::rng::{derive_seed, seeded};
use inarmix::simstudy::{builtin_scenario, builtin_scenarios, simulate_labeled_panel, ScenarioSpec};

use super::{one_based, OutDir};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario name, e.g. `poisson-easy` or `nb-very-difficult`.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub scenario: Option<String>,
    /// JSON scenario file (same layout as the written `truth.json`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of panels to draw; defaults to the scenario's replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn load_scenario(name: Option<&str>, spec: Option<&PathBuf>) -> CliResult<ScenarioSpec> {
    let s = match (name, spec) {
        (Some(name), _) => builtin_scenario(name).ok_or_else(|| {
            let known: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
            CliError::Config(format!("unknown scenario `{name}`; known: {}", known.join(", ")))
        })?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Unreadable {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))?
        }
        (None, None) => return Err(CliError::Config("either --scenario or --spec is required".into())),
    };
    s.validate()?;
    Ok(s)
}

pub fn run(args: &SimulateArgs, file: &FileConfig) -> CliResult<()> {
    let mut spec = load_scenario(args.scenario.as_deref(), args.spec.as_ref())?;
    if let Some(seed) = file.explicit_seed(args.seed)? {
        spec.seed = seed;
    }
    if let Some(r) = args.reps {
        spec.replications = r;
    }
    let mut out = OutDir::create(&args.out)?;
    for rep in 0..spec.replications {
        let (panel, labels) = simulate_labeled_panel(&spec, &mut seeded(derive_seed(spec.seed, rep as u64)))?;
        out.panel(&format!("panel_{rep}.csv"), &panel)?;
        out.labels(&format!("labels_{rep}.csv"), panel.ids(), &one_based(&labels))?;
    }
    out.json("truth.json", &spec)?;
    println!(
        "wrote {} panel(s) of {} x {} for `{}` to {}",
        spec.replications,
        spec.n_individuals,
        spec.series_len,
        spec.name,
        args.out.display()
    );
    out.finish("simulate", Some(spec.seed))
}
