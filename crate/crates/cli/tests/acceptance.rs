//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs the built-in simulation scenarios at desk scale, small property
//! checks against independent oracles, and the `study` binary twice.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use inarmix::baseline::{dtw_distance, FcmddConfig};
use inarmix::eval::adjusted_rand_index;
use inarmix::inar::{conditional_pmf, series_loglik, simulate_inar};
use inarmix::init::random_model;
use inarmix::mixture::{e_step, fit_em, stopping_rule_met, StoppingRule};
use inarmix::rng::{derive_seed, seeded};
use inarmix::simstudy::{builtin_scenario, run_scenario, ScenarioReport, StudyOptions};
use inarmix::{ComponentParams, ComponentSpec, CountSeries, EmConfig, InnovationFamily, PanelData};
use rand::Rng;

struct Ledger {
    failed: usize,
}

impl Ledger {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} [{id}] {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn scenario(name: &str, reps: usize, baseline: bool) -> ScenarioReport {
    let mut spec = builtin_scenario(name).expect("built-in scenario");
    spec.replications = reps;
    let opts = StudyOptions {
        baseline: baseline.then(FcmddConfig::default),
        ..StudyOptions::default()
    };
    let start = Instant::now();
    let report = run_scenario(&spec, &opts).expect("scenario runs");
    eprintln!("  {name}: {reps} replications in {:.1}s", start.elapsed().as_secs_f64());
    report
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn modal(report: &ScenarioReport) -> (String, usize) {
    report
        .selection_counts
        .iter()
        .max_by_key(|(_, &c)| c)
        .map(|(s, &c)| (s.clone(), c))
        .unwrap_or_default()
}

/// Mean ARI of the mixture and of the baseline over the first `n` replications.
fn inar_vs_fcmdd(report: &ScenarioReport, n: usize) -> (f64, f64) {
    let reps = &report.replications[..n.min(report.replications.len())];
    (
        mean(reps.iter().map(|r| r.ari)),
        mean(reps.iter().map(|r| r.baseline.as_ref().expect("baseline ran").ari)),
    )
}

/// Parameter recovery against truths ordered by descending innovation mean.
fn recovery(report: &ScenarioReport, tol: [f64; 4]) -> (bool, String) {
    let mut truths = report.scenario.truths.clone();
    truths.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let mut ok = report.mean_components.len() >= truths.len();
    let mut parts = Vec::new();
    for (t, m) in truths.iter().zip(&report.mean_components) {
        let diffs = [m.alpha - t.alpha, m.pi - t.pi, m.lambda - t.lambda, m.phi - t.phi];
        ok &= diffs.iter().zip(tol).all(|(d, tol)| d.abs() <= tol);
        parts.push(format!(
            "(a {:.3}/{:.2}, pi {:.3}/{:.2}, l {:.3}/{:.2}, phi {:.2}/{:.2}; n={})",
            m.alpha, t.alpha, m.pi, t.pi, m.lambda, t.lambda, m.phi, t.phi, m.count
        ));
    }
    (ok, parts.join(" "))
}

// ---- independent oracles ----

fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    let mut p = (-lambda).exp();
    for i in 1..=k {
        p *= lambda / i as f64;
    }
    p
}

/// NB with mean `lambda` and variance `phi * lambda`, by the ratio recursion.
fn nb_pmf(k: u64, lambda: f64, phi: f64) -> f64 {
    let r = lambda / (phi - 1.0);
    let p = 1.0 / phi;
    let mut v = p.powf(r);
    for i in 1..=k {
        v *= (i as f64 - 1.0 + r) / i as f64 * (1.0 - p);
    }
    v
}

fn innov(k: u64, family: InnovationFamily, lambda: f64, phi: f64) -> f64 {
    match family {
        InnovationFamily::Poisson => poisson_pmf(k, lambda),
        InnovationFamily::NegativeBinomial => nb_pmf(k, lambda, phi),
    }
}

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn cond_oracle(x_t: u64, x_lag: u64, alpha: f64, family: InnovationFamily, lambda: f64, phi: f64) -> f64 {
    (0..=x_t.min(x_lag))
        .map(|j| {
            choose(x_lag, j)
                * alpha.powi(j as i32)
                * (1.0 - alpha).powi((x_lag - j) as i32)
                * innov(x_t - j, family, lambda, phi)
        })
        .sum()
}

fn lik_oracle(x: &[u64], lag: usize, alpha: f64, family: InnovationFamily, lambda: f64, phi: f64) -> f64 {
    x.iter()
        .enumerate()
        .map(|(t, &v)| {
            if t < lag {
                innov(v, family, lambda, phi)
            } else {
                cond_oracle(v, x[t - lag], alpha, family, lambda, phi)
            }
        })
        .product()
}

fn pair_count_ari(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0.0 {
        return if same_partition(a, b) { 1.0 } else { 0.0 };
    }
    2.0 * (ss * dd - sd * ds) / den
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Every set partition of `n` items as a restricted growth string.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[i] = v;
            rec(i + 1, max.max(v), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

fn property_checks(l: &mut Ledger) {
    use InnovationFamily::{NegativeBinomial as Nb, Poisson};

    // conditional pmf sums to one
    let mut worst: f64 = 0.0;
    for &alpha in &[0.05, 0.3, 0.5, 0.8, 0.95] {
        for &lambda in &[0.5, 3.0, 9.0] {
            for &phi in &[1.0, 1.5, 4.0] {
                let params = if phi == 1.0 {
                    ComponentParams::poisson(alpha, lambda).unwrap()
                } else {
                    ComponentParams::negative_binomial(alpha, lambda, phi).unwrap()
                };
                for x_lag in [0u64, 1, 5, 20] {
                    let total: f64 = (0..400).map(|x| conditional_pmf(x, x_lag, &params)).sum();
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
    }
    l.check(
        "7a",
        worst <= 1e-8,
        format!("conditional pmf normalisation: max |sum - 1| = {worst:.2e} (<= 1e-8)"),
    );

    // likelihood vs brute-force product on short series
    let mut rng = seeded(71);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let len = rng.random_range(1..=5);
        let x: Vec<u64> = (0..len).map(|_| rng.random_range(0..8)).collect();
        let lag = rng.random_range(1..=3);
        let alpha = rng.random_range(0.01..0.99);
        let lambda = rng.random_range(0.2..6.0);
        let (family, phi) = if rng.random::<bool>() {
            (Poisson, 1.0)
        } else {
            (Nb, rng.random_range(1.1..5.0))
        };
        let params = match family {
            Poisson => ComponentParams::poisson(alpha, lambda).unwrap(),
            Nb => ComponentParams::negative_binomial(alpha, lambda, phi).unwrap(),
        };
        let spec = ComponentSpec::new(lag, family).unwrap();
        let got = series_loglik(&CountSeries::new(x.clone()).unwrap(), &spec, &params).exp();
        let want = lik_oracle(&x, lag, alpha, family, lambda, phi);
        worst = worst.max((got - want).abs());
    }
    l.check(
        "7b",
        worst <= 1e-12,
        format!("likelihood vs enumerated oracle: max abs diff {worst:.2e} (<= 1e-12)"),
    );

    // EM monotonicity, row sums and stopping-rule nesting on recorded traces
    let (mut drop, mut row_err, mut triples, mut nest_fail) = (0.0f64, 0.0f64, 0usize, 0usize);
    for run in 0..6u64 {
        let family = if run % 2 == 0 { Poisson } else { Nb };
        let spec = ComponentSpec::new(1 + run as usize % 3, family).unwrap();
        let truth = [
            ComponentParams::new(
                0.6,
                inarmix::InnovationModel::new(family, 1.0, family.default_phi()).unwrap(),
            )
            .unwrap(),
            ComponentParams::new(
                0.2,
                inarmix::InnovationModel::new(family, 6.0, family.default_phi()).unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = seeded(derive_seed(500, run));
        let rows: Vec<CountSeries> = (0..60)
            .map(|i| simulate_inar(&spec, &truth[i % 2], 25, &mut rng).unwrap())
            .collect();
        let panel = PanelData::new(rows).unwrap();
        let init = random_model(&panel, &[spec, spec], &mut rng).unwrap();
        let cfg = EmConfig {
            epsilon: 1e-10,
            max_iters: 200,
            ..EmConfig::default()
        };
        let fit = fit_em(&panel, &init, &cfg).unwrap();
        for w in fit.loglik_trace.windows(2) {
            drop = drop.max(w[0] - w[1]);
        }
        for w in fit.loglik_trace.windows(3) {
            triples += 1;
            for eps in [1e-1, 1e-2, 1e-4] {
                if stopping_rule_met(StoppingRule::McNicholas, w[0], w[1], w[2], eps)
                    && !stopping_rule_met(StoppingRule::Lindsay, w[0], w[1], w[2], eps)
                {
                    nest_fail += 1;
                }
            }
        }
        let (resp, _) = e_step(&panel, &fit.model).unwrap();
        for row in resp.rows() {
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    l.check(
        "7c",
        drop <= 1e-6,
        format!("EM log-likelihood monotone: max decrease {drop:.2e} (<= 1e-6)"),
    );
    l.check(
        "7d",
        row_err <= 1e-10,
        format!("responsibility rows sum to 1: max error {row_err:.2e} (<= 1e-10)"),
    );
    l.check(
        "7e",
        nest_fail == 0 && triples > 0,
        format!("McNicholas stop implies Lindsay stop: {nest_fail} violations over {triples} trace triples"),
    );

    // ARI vs pair counting on all partition pairs
    let (mut worst, mut pairs) = (0.0f64, 0usize);
    for n in 2..=7 {
        let parts = partitions(n);
        for a in &parts {
            for b in &parts {
                let got = adjusted_rand_index(a, b).unwrap();
                worst = worst.max((got - pair_count_ari(a, b)).abs());
                pairs += 1;
            }
        }
    }
    l.check(
        "7f",
        worst <= 1e-12,
        format!("ARI vs pair counting on {pairs} partition pairs (n <= 7): max diff {worst:.2e}"),
    );

    // DTW symmetry, identity and L1 bound
    let mut rng = seeded(72);
    let mut bad = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=30);
        let a: Vec<u64> = (0..len).map(|_| rng.random_range(0..20)).collect();
        let b: Vec<u64> = (0..len).map(|_| rng.random_range(0..20)).collect();
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y) as f64).sum();
        let d = dtw_distance(&a, &b);
        if d != dtw_distance(&b, &a) || dtw_distance(&a, &a) != 0.0 || d > l1 || d < 0.0 {
            bad += 1;
        }
    }
    l.check(
        "7g",
        bad == 0,
        format!("DTW symmetry / identity / L1 bound on 1000 pairs: {bad} violations"),
    );
}

fn study_twice(l: &mut Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &std::path::Path| {
        Command::new(env!("CARGO_BIN_EXE_inarmix"))
            .env_remove("INARMIX_SEED")
            .args([
                "study",
                "--scenarios",
                "poisson-very-easy,nb-very-easy",
                "--reps",
                "1",
                "--baseline",
            ])
            .args(["--seed", "20240601", "--out"])
            .arg(out)
            .output()
            .expect("binary runs")
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ra, rb) = (run(&a), run(&b));
    let mut same = ra.status.success() && rb.status.success();
    let files = [
        "report_poisson-very-easy.json",
        "report_nb-very-easy.json",
        "tables.txt",
        "manifest.json",
    ];
    for f in files {
        same &= matches!((fs::read(a.join(f)), fs::read(b.join(f))), (Ok(x), Ok(y)) if x == y);
    }
    same &= ra.stdout == rb.stdout;
    l.check(
        "8",
        same,
        format!("`study --seed 20240601` twice: {} files byte-identical", files.len()),
    );
}

fn main() -> ExitCode {
    let mut l = Ledger { failed: 0 };
    let start = Instant::now();

    property_checks(&mut l);
    study_twice(&mut l);

    let p_ve = scenario("poisson-very-easy", 10, false);
    let p_e = scenario("poisson-easy", 10, false);
    for r in [&p_ve, &p_e] {
        l.check(
            "1",
            r.completed == 10 && r.ari_mean >= 0.98,
            format!(
                "{}: mean ARI {:.4} over {} reps (>= 0.98)",
                r.scenario.name, r.ari_mean, r.completed
            ),
        );
    }
    let (ok, detail) = recovery(&p_ve, [0.05, 0.05, 0.05, f64::INFINITY]);
    l.check(
        "1s",
        ok,
        format!("poisson-very-easy recovery of (alpha, pi, lambda) within 0.05: {detail}"),
    );

    let p_vd = scenario("poisson-very-difficult", 20, true);
    l.check(
        "2",
        p_vd.completed == 20 && (0.40..=0.75).contains(&p_vd.ari_mean),
        format!(
            "poisson-very-difficult: mean ARI {:.4} over {} reps (in [0.40, 0.75])",
            p_vd.ari_mean, p_vd.completed
        ),
    );

    let mut nb = Vec::new();
    for d in inarmix::simstudy::DIFFICULTIES {
        let r = scenario(&format!("nb-{d}"), 10, true);
        let min = if matches!(d, "difficult" | "very-difficult") {
            0.90
        } else {
            0.95
        };
        l.check(
            "3",
            r.completed == 10 && r.ari_mean >= min,
            format!(
                "{}: mean ARI {:.4} over {} reps (>= {min:.2})",
                r.scenario.name, r.ari_mean, r.completed
            ),
        );
        nb.push(r);
    }

    let (ok, detail) = recovery(&nb[0], [0.05, 0.05, 0.15, 0.75]);
    l.check(
        "4",
        ok,
        format!("nb-very-easy recovery (alpha/pi 0.05, lambda 0.15, phi 0.75): {detail}"),
    );

    let nb_vd = &nb[4];
    let hits = nb_vd
        .selection_counts
        .get("1xINAR(2*)+1xINAR(4*)")
        .copied()
        .unwrap_or(0);
    l.check(
        "5",
        hits >= 9,
        format!(
            "nb-very-difficult selects 1xINAR(2*)+1xINAR(4*) in {hits}/10 (>= 9): {:?}",
            nb_vd.selection_counts
        ),
    );
    for name in ["poisson-moderate", "poisson-difficult"] {
        let r = scenario(name, 10, false);
        let (structure, count) = modal(&r);
        l.check(
            "5",
            structure == "2xINAR(5*)",
            format!(
                "{name}: modal structure {structure} ({count}/{}) (2xINAR(5*))",
                r.completed
            ),
        );
    }

    for r in nb.iter().chain(std::iter::once(&p_vd)) {
        let (inar, fcmdd) = inar_vs_fcmdd(r, 10);
        l.check(
            "6",
            inar > fcmdd,
            format!(
                "{}: INAR ARI {inar:.4} > FCMdd ARI {fcmdd:.4} (first 10 reps)",
                r.scenario.name
            ),
        );
    }

    println!(
        "acceptance: {} failed, total time {:.0}s",
        l.failed,
        start.elapsed().as_secs_f64()
    );
    if l.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
