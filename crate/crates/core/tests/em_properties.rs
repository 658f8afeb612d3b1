use inarmix::inar::{simulate_inar, ComponentParams, ComponentSpec, InnovationFamily};
use inarmix::init::random_model;
use inarmix::mixture::{
    e_step, fit_em, m_step_component, stopping_rule_met, EmConfig, FitResult, MixtureComponent, MixtureModel,
    StoppingRule,
};
use inarmix::rng::seeded;
use inarmix::{CountSeries, PanelData};
use proptest::prelude::*;

fn spec(lag: usize, family: InnovationFamily) -> ComponentSpec {
    ComponentSpec::new(lag, family).unwrap()
}

/// Two-group panel: `n` series alternating between a low and a high process.
fn two_group_panel(n: usize, len: usize, lag: usize, seed: u64) -> PanelData {
    let s = spec(lag, InnovationFamily::Poisson);
    let low = ComponentParams::poisson(0.3, 1.0).unwrap();
    let high = ComponentParams::poisson(0.6, 4.0).unwrap();
    let mut rng = seeded(seed);
    let rows: Vec<CountSeries> = (0..n)
        .map(|i| simulate_inar(&s, if i % 2 == 0 { &low } else { &high }, len, &mut rng).unwrap())
        .collect();
    PanelData::new(rows).unwrap()
}

fn check_trace(fit: &FitResult) -> Result<(), TestCaseError> {
    for w in fit.loglik_trace.windows(2) {
        prop_assert!(w[1] >= w[0] - 1e-6, "log-likelihood decreased: {} -> {}", w[0], w[1]);
    }
    for row in fit.responsibilities.rows() {
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    for eps in [1e-1, 1e-2, 1e-3] {
        for w in fit.loglik_trace.windows(3) {
            if stopping_rule_met(StoppingRule::McNicholas, w[0], w[1], w[2], eps) {
                prop_assert!(stopping_rule_met(StoppingRule::Lindsay, w[0], w[1], w[2], eps));
            }
        }
    }
    Ok(())
}

fn tight() -> EmConfig {
    EmConfig {
        epsilon: 1e-4,
        max_iters: 60,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_is_monotone_from_random_starts(
        seed in any::<u64>(),
        g in 1usize..=3,
        lag in 1usize..=3,
        nb in any::<bool>(),
    ) {
        let family = if nb { InnovationFamily::NegativeBinomial } else { InnovationFamily::Poisson };
        let panel = two_group_panel(12, 15, lag, seed);
        let init = random_model(&panel, &vec![spec(lag, family); g], &mut seeded(seed ^ 1)).unwrap();
        let fit = fit_em(&panel, &init, &tight()).unwrap();
        check_trace(&fit)?;
    }

    #[test]
    fn relabelling_the_start_relabels_the_fit(seed in any::<u64>(), g in 2usize..=3) {
        let panel = two_group_panel(10, 12, 1, seed);
        let init = random_model(&panel, &vec![spec(1, InnovationFamily::Poisson); g], &mut seeded(seed)).unwrap();
        let perm: Vec<usize> = (0..g).rev().collect();
        let a = fit_em(&panel, &init, &tight()).unwrap();
        let b = fit_em(&panel, &init.permuted(&perm).unwrap(), &tight()).unwrap();
        prop_assert!((a.final_loglik - b.final_loglik).abs() < 1e-8);
        for (k, &src) in perm.iter().enumerate() {
            prop_assert_eq!(b.model.components()[k], a.model.components()[src]);
            prop_assert_eq!(b.model.weights()[k], a.model.weights()[src]);
        }
    }

    #[test]
    fn mcnicholas_implies_lindsay(
        trace in prop::collection::vec(-1e4f64..0.0, 3..40),
        eps in prop_oneof![Just(1e-1), Just(1e-2), 1e-6f64..1.0],
    ) {
        let mut sorted = trace.clone();
        sorted.sort_by(f64::total_cmp);
        for t in [&trace, &sorted] {
            for w in t.windows(3) {
                if stopping_rule_met(StoppingRule::McNicholas, w[0], w[1], w[2], eps) {
                    prop_assert!(stopping_rule_met(StoppingRule::Lindsay, w[0], w[1], w[2], eps));
                }
            }
        }
    }
}

#[test]
fn responsibilities_sum_to_one_at_extremes() {
    let panel = PanelData::from_vecs(vec![vec![0, 0, 0, 0], vec![40, 38, 41, 39], vec![3, 2, 4, 1]]).unwrap();
    let s = spec(1, InnovationFamily::Poisson);
    let model = MixtureModel::new(
        vec![
            MixtureComponent::new(s, ComponentParams::poisson(0.9, 0.001).unwrap()).unwrap(),
            MixtureComponent::new(s, ComponentParams::poisson(0.1, 35.0).unwrap()).unwrap(),
        ],
        vec![1e-6, 1.0 - 1e-6],
    )
    .unwrap();
    let (resp, ll) = e_step(&panel, &model).unwrap();
    assert!(ll.is_finite());
    for row in resp.rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn negative_binomial_m_step_recovers_parameters() {
    let s = spec(2, InnovationFamily::NegativeBinomial);
    let truth = ComponentParams::negative_binomial(0.5, 4.0, 3.0).unwrap();
    let mut rng = seeded(11);
    let rows: Vec<CountSeries> = (0..400)
        .map(|_| simulate_inar(&s, &truth, 30, &mut rng).unwrap())
        .collect();
    let panel = PanelData::new(rows).unwrap();
    let start = ComponentParams::negative_binomial(0.2, 1.5, 1.5).unwrap();
    let up = m_step_component(&panel, &vec![1.0; panel.len()], &s, &start).unwrap();
    assert!(up.objective >= up.objective_start);
    let p = up.params;
    assert!((p.alpha() - 0.5).abs() < 0.05, "{p:?}");
    assert!((p.lambda() - 4.0).abs() < 0.4, "{p:?}");
    assert!((p.phi() - 3.0).abs() < 0.4, "{p:?}");
}

#[test]
fn em_stops_at_the_iteration_cap() {
    let panel = two_group_panel(10, 12, 1, 3);
    let init = random_model(&panel, &[spec(1, InnovationFamily::Poisson); 2], &mut seeded(3)).unwrap();
    let cfg = EmConfig {
        epsilon: 1e-12,
        max_iters: 2,
        ..Default::default()
    };
    let fit = fit_em(&panel, &init, &cfg).unwrap();
    assert_eq!(fit.iterations, 2);
    assert_eq!(fit.loglik_trace.len(), 3);
    assert!(!fit.converged);
}
