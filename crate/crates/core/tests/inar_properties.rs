use inarmix::inar::{
    binomial_thin, conditional_pmf, series_loglik, simulate_inar, ComponentParams, ComponentSpec, InnovationFamily,
    InnovationModel,
};
use inarmix::rng::{derive_seed, seeded};
use inarmix::{CountSeries, PanelData};
use proptest::prelude::*;
use statrs::distribution::{Binomial, Discrete, NegativeBinomial, Poisson};

/// Innovation pmf from statrs, independent of the crate's own evaluation.
fn oracle_innovation(lambda: f64, phi: f64, k: u64) -> f64 {
    if phi == 1.0 {
        Poisson::new(lambda).unwrap().pmf(k)
    } else {
        NegativeBinomial::new(lambda / (phi - 1.0), 1.0 / phi).unwrap().pmf(k)
    }
}

fn oracle_transition(x_t: u64, x_lag: u64, alpha: f64, lambda: f64, phi: f64) -> f64 {
    let thin = Binomial::new(alpha, x_lag).unwrap();
    (0..=x_t.min(x_lag))
        .map(|k| thin.pmf(k) * oracle_innovation(lambda, phi, x_t - k))
        .sum()
}

fn oracle_likelihood(x: &[u64], lag: usize, alpha: f64, lambda: f64, phi: f64) -> f64 {
    (0..x.len())
        .map(|t| {
            if t < lag {
                oracle_innovation(lambda, phi, x[t])
            } else {
                oracle_transition(x[t], x[t - lag], alpha, lambda, phi)
            }
        })
        .product()
}

fn params(alpha: f64, lambda: f64, phi: f64) -> ComponentParams {
    let family = if phi == 1.0 {
        InnovationFamily::Poisson
    } else {
        InnovationFamily::NegativeBinomial
    };
    ComponentParams::new(alpha, InnovationModel::new(family, lambda, phi).unwrap()).unwrap()
}

#[test]
fn thinning_moments_over_many_draws() {
    let n_draws = 100_000;
    for &(x, alpha) in &[(20u64, 0.3), (7, 0.85), (50, 0.5)] {
        let mut rng = seeded(x);
        let draws: Vec<f64> = (0..n_draws).map(|_| binomial_thin(x, alpha, &mut rng) as f64).collect();
        let n = n_draws as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let (xf, q) = (x as f64, alpha * (1.0 - alpha));
        let true_var = xf * q;
        // binomial fourth central moment
        let mu4 = xf * q * (1.0 + 3.0 * (xf - 2.0) * q);
        assert!((mean - alpha * xf).abs() < 3.0 * (true_var / n).sqrt(), "mean {mean}");
        assert!(
            (var - true_var).abs() < 3.0 * ((mu4 - true_var * true_var) / n).sqrt(),
            "variance {var} vs {true_var}"
        );
    }
}

#[test]
fn conditional_pmf_normalises_over_grid() {
    for phi in [1.0, 2.0, 4.0] {
        for lambda in [0.3, 1.0, 2.5, 5.0, 10.0] {
            let innovation = InnovationModel::new(
                if phi == 1.0 {
                    InnovationFamily::Poisson
                } else {
                    InnovationFamily::NegativeBinomial
                },
                lambda,
                phi,
            )
            .unwrap();
            let bound = innovation.support_bound();
            for a in 0..=10 {
                let p = params(a as f64 / 10.0, lambda, phi);
                for x_lag in 0..=30u64 {
                    let total: f64 = (0..=x_lag + bound).map(|x_t| conditional_pmf(x_t, x_lag, &p)).sum();
                    assert!(
                        (total - 1.0).abs() < 1e-8,
                        "alpha={} lambda={lambda} phi={phi} x_lag={x_lag}: {total}",
                        a as f64 / 10.0
                    );
                }
            }
        }
    }
}

#[test]
fn true_parameters_beat_perturbed_alpha() {
    let spec = ComponentSpec::new(2, InnovationFamily::Poisson).unwrap();
    let truth = params(0.4, 3.0, 1.0);
    let lower = params(0.2, 3.0, 1.0);
    let upper = params(0.6, 3.0, 1.0);
    let mut wins = 0;
    for trial in 0..100 {
        let mut rng = seeded(derive_seed(42, trial));
        let series: Vec<CountSeries> = (0..10)
            .map(|_| simulate_inar(&spec, &truth, 50, &mut rng).unwrap())
            .collect();
        let ll = |p: &ComponentParams| series.iter().map(|s| series_loglik(s, &spec, p)).sum::<f64>();
        let base = ll(&truth);
        if base > ll(&lower) && base > ll(&upper) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "true parameters won {wins}/100 trials");
}

#[test]
fn simulated_panel_has_requested_shape() {
    let spec = ComponentSpec::new(5, InnovationFamily::NegativeBinomial).unwrap();
    let p = params(0.5, 2.0, 3.0);
    let mut rng = seeded(1);
    let rows: Vec<CountSeries> = (0..7)
        .map(|_| simulate_inar(&spec, &p, 13, &mut rng).unwrap())
        .collect();
    let panel = PanelData::new(rows).unwrap();
    assert_eq!((panel.len(), panel.min_len(), panel.max_len()), (7, 13, 13));
}

fn phi_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), 1.05f64..6.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn likelihood_matches_enumerated_product(
        x in prop::collection::vec(0u64..=4, 1..=5),
        lag in 1usize..=3,
        alpha in 0.0f64..=1.0,
        lambda in 0.05f64..8.0,
        phi in phi_strategy(),
    ) {
        let spec = ComponentSpec::new(lag, if phi == 1.0 { InnovationFamily::Poisson } else { InnovationFamily::NegativeBinomial }).unwrap();
        let p = params(alpha, lambda, phi);
        let series = CountSeries::new(x.clone()).unwrap();
        let ours = series_loglik(&series, &spec, &p).exp();
        let oracle = oracle_likelihood(&x, lag, alpha, lambda, phi);
        prop_assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
    }

    #[test]
    fn conditional_pmf_matches_oracle(
        x_t in 0u64..25,
        x_lag in 0u64..25,
        alpha in 0.0f64..=1.0,
        lambda in 0.05f64..10.0,
        phi in phi_strategy(),
    ) {
        let ours = conditional_pmf(x_t, x_lag, &params(alpha, lambda, phi));
        let oracle = oracle_transition(x_t, x_lag, alpha, lambda, phi);
        prop_assert!((ours - oracle).abs() <= 1e-12 + 1e-9 * oracle, "{ours} vs {oracle}");
    }

    #[test]
    fn thinning_never_exceeds_input(x in 0u64..1000, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let y = binomial_thin(x, alpha, &mut seeded(seed));
        prop_assert!(y <= x);
    }
}
