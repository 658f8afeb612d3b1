use inarmix::rng::{derive_seed, seeded};
use inarmix::simstudy::{
    builtin_scenario, builtin_scenarios, comparison_table, crosstab_text, parameter_table, run_scenario,
    simulate_labeled_panel, StudyOptions,
};

#[test]
fn label_proportions_match_mixing_weights() {
    for spec in builtin_scenarios() {
        let (panel, labels) = simulate_labeled_panel(&spec, &mut seeded(derive_seed(spec.seed, 77))).unwrap();
        assert_eq!(panel.len(), spec.n_individuals);
        assert_eq!(panel.min_len(), spec.series_len);
        let n = spec.n_individuals as f64;
        for (g, t) in spec.truths.iter().enumerate() {
            let share = labels.iter().filter(|&&l| l == g).count() as f64 / n;
            let band = 3.0 * (t.pi * (1.0 - t.pi) / n).sqrt();
            assert!(
                (share - t.pi).abs() <= band,
                "{}: component {g} share {share}",
                spec.name
            );
        }
    }
}

#[test]
fn small_study_is_reproducible_and_consistent() {
    let mut spec = builtin_scenario("poisson-very-easy").unwrap();
    spec.n_individuals = 60;
    spec.series_len = 30;
    spec.replications = 3;
    let opts = StudyOptions {
        baseline: Some(Default::default()),
        ..Default::default()
    };
    let a = run_scenario(&spec, &opts).unwrap();
    let b = run_scenario(&spec, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.completed + a.failures.len(), 3);
    assert_eq!(a.crosstab.total(), (a.completed * spec.n_individuals) as u64);
    let per_rep: u64 = a.replications.iter().map(|r| r.crosstab.total()).sum();
    assert_eq!(per_rep, a.crosstab.total());
    let counted: usize = a.selection_counts.values().sum();
    assert_eq!(counted, a.completed);
    assert!(a.baseline.is_some());

    let text = parameter_table(std::slice::from_ref(&a));
    assert!(text.contains("poisson-very-easy"));
    assert!(comparison_table(std::slice::from_ref(&a)).contains("FCMdd"));
    assert!(crosstab_text(&a).contains("true\\fitted"));
}
