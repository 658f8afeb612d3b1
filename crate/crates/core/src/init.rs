//! Starting values for EM.
//!
//! One-dimensional k-means on per-series means gives the innovation means
//! and mixing proportions; thinning probabilities (and NB dispersions) are
//! then picked from a grid by simulating panels and matching the observed
//! distribution of per-series totals. Larger mixtures are warm-started from
//! the fit with one component fewer.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inar::{
    binomial_thin, ComponentParams, ComponentSpec, InnovationFamily, InnovationModel, InnovationSampler,
};
use crate::mixture::{apply_weight_floor, e_step, FitResult, MixtureComponent, MixtureModel};
use crate::panel::PanelData;
use crate::rng::{derive_seed, seeded};

/// Innovation means are never initialised below this value.
pub const LAMBDA_FLOOR: f64 = 1e-3;
/// Fallback thinning probability for degenerate clusters and new components.
pub const FALLBACK_ALPHA: f64 = 0.5;
/// Initial proportions of collapsed (empty) k-means clusters.
const INITIAL_WEIGHT_FLOOR: f64 = 1e-6;
/// Cap on the lag arrangements returned by [`Initializer::arrangements`].
pub const MAX_ARRANGEMENTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub alpha_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    /// Simulated panels per grid candidate.
    pub match_replicates: usize,
    /// Mixing proportion given to a component added by warm start.
    pub new_component_weight: f64,
    pub kmeans_restarts: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            alpha_grid: (1..=19).map(|k| k as f64 * 0.05).collect(),
            phi_grid: vec![1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
            match_replicates: 20,
            new_component_weight: 0.05,
            kmeans_restarts: 10,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidInput(
                "alpha grid must be a non-empty subset of [0, 1]".into(),
            ));
        }
        if self.phi_grid.is_empty() || self.phi_grid.iter().any(|p| !(p.is_finite() && *p > 1.0)) {
            return Err(Error::InvalidInput("phi grid must be non-empty with values > 1".into()));
        }
        if !(self.new_component_weight > 0.0 && self.new_component_weight <= 0.2) {
            return Err(Error::InvalidInput("new component weight must lie in (0, 0.2]".into()));
        }
        if self.match_replicates == 0 || self.kmeans_restarts == 0 {
            return Err(Error::InvalidInput(
                "replicate and restart counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of k-means on per-series means; centers sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansSeed {
    pub centers: Vec<f64>,
    pub sizes: Vec<usize>,
    pub assignment: Vec<usize>,
    pub warning: Option<String>,
}

fn nearest(x: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    for (k, c) in centers.iter().enumerate().skip(1) {
        if (x - c).abs() < (x - centers[best]).abs() {
            best = k;
        }
    }
    best
}

/// One Lloyd run from k-means++ seeds; returns (centers, assignment, sse).
fn lloyd_1d<R: Rng + ?Sized>(x: &[f64], k: usize, rng: &mut R) -> (Vec<f64>, Vec<usize>, f64) {
    let n = x.len();
    let mut centers = vec![x[rng.random_range(0..n)]];
    while centers.len() < k {
        let d2: Vec<f64> = x.iter().map(|&v| (v - centers[nearest(v, &centers)]).powi(2)).collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(x[pick]);
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..200 {
        let mut changed = false;
        for (i, &v) in x.iter().enumerate() {
            let a = nearest(v, &centers);
            if a != assignment[i] {
                assignment[i] = a;
                changed = true;
            }
        }
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &a) in assignment.iter().enumerate() {
            sums[a] += x[i];
            counts[a] += 1;
        }
        for c in 0..centers.len() {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            } else {
                // move an empty center onto the worst-fitted point
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = (x[a] - centers[assignment[a]]).abs();
                        let db = (x[b] - centers[assignment[b]]).abs();
                        da.total_cmp(&db)
                    })
                    .expect("non-empty");
                centers[c] = x[far];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let sse = x.iter().zip(&assignment).map(|(v, &a)| (v - centers[a]).powi(2)).sum();
    (centers, assignment, sse)
}

/// k-means with `restarts` k-means++ restarts on the per-series means.
///
/// When the panel has fewer distinct means than `g`, the surplus clusters
/// collapse onto the smallest center with size zero and a warning is set.
pub fn kmeans_seed<R: Rng + ?Sized>(panel: &PanelData, g: usize, restarts: usize, rng: &mut R) -> Result<KmeansSeed> {
    if g == 0 || g > panel.len() {
        return Err(Error::InvalidInput(format!(
            "cannot form {g} clusters from {} series",
            panel.len()
        )));
    }
    let x = panel.series_means();
    let mut distinct = x.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = g.min(distinct.len());

    let mut best: Option<(Vec<f64>, Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd_1d(&x, k, rng);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (centers, assignment, _) = best.expect("at least one restart");

    // relabel by descending center
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[b].total_cmp(&centers[a]));
    let mut rank = vec![0; centers.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let mut sorted_centers: Vec<f64> = order.iter().map(|&c| centers[c]).collect();
    let assignment: Vec<usize> = assignment.iter().map(|&a| rank[a]).collect();
    let mut sizes = vec![0; g];
    for &a in &assignment {
        sizes[a] += 1;
    }

    let mut warning = None;
    let used = sizes.iter().filter(|&&s| s > 0).count();
    if used < g {
        warning = Some(format!(
            "only {used} distinct cluster(s) for {g} requested; surplus centers collapsed"
        ));
        log::warn!("{}", warning.as_deref().unwrap_or_default());
    }
    let last = *sorted_centers.last().expect("at least one center");
    sorted_centers.resize(g, last);
    Ok(KmeansSeed {
        centers: sorted_centers,
        sizes,
        assignment,
        warning,
    })
}

/// Grid search for `(alpha, phi)` given a fixed innovation mean.
///
/// Each candidate is scored by the mean absolute difference between the
/// sorted per-series totals of the cluster and those of a simulated panel
/// with the same series lengths, averaged over `match_replicates`
/// simulations. All candidates share the same replicate seeds. Poisson
/// components keep `phi = 1`.
pub fn match_alpha_phi<R: Rng + ?Sized>(
    cluster: &PanelData,
    lambda_init: f64,
    spec: &ComponentSpec,
    cfg: &InitConfig,
    rng: &mut R,
) -> (f64, f64) {
    let family = spec.family;
    let fallback = (FALLBACK_ALPHA, family.default_phi());
    if cluster.max_count() == 0 {
        return fallback;
    }
    let lambda = lambda_init.max(LAMBDA_FLOOR);
    let mut observed: Vec<f64> = cluster.series().iter().map(|s| s.sum() as f64).collect();
    observed.sort_by(f64::total_cmp);
    let lengths: Vec<usize> = cluster.series().iter().map(|s| s.len()).collect();
    let replicate_seeds: Vec<u64> = (0..cfg.match_replicates).map(|_| rng.next_u64()).collect();

    let phis: Vec<f64> = match family {
        InnovationFamily::Poisson => vec![1.0],
        InnovationFamily::NegativeBinomial => cfg.phi_grid.clone(),
    };
    let mut best: Option<(f64, f64, f64)> = None;
    let mut sims = vec![0.0; lengths.len()];
    let mut buf = Vec::new();
    for &phi in &phis {
        let Ok(innovation) = InnovationModel::new(family, lambda, phi) else {
            continue;
        };
        let sampler = InnovationSampler::new(&innovation);
        for &alpha in &cfg.alpha_grid {
            let mut score = 0.0;
            for &seed in &replicate_seeds {
                let mut r = seeded(seed);
                for (slot, &len) in sims.iter_mut().zip(&lengths) {
                    *slot = simulated_total(spec.lag, alpha, &sampler, len, &mut buf, &mut r) as f64;
                }
                sims.sort_by(f64::total_cmp);
                score += sims.iter().zip(&observed).map(|(a, b)| (a - b).abs()).sum::<f64>() / sims.len() as f64;
            }
            score /= replicate_seeds.len() as f64;
            if best.is_none_or(|b| score < b.0) {
                best = Some((score, alpha, phi));
            }
        }
    }
    best.map_or(fallback, |(_, a, p)| (a, p))
}

fn simulated_total<R: Rng + ?Sized>(
    lag: usize,
    alpha: f64,
    sampler: &InnovationSampler,
    len: usize,
    buf: &mut Vec<u64>,
    rng: &mut R,
) -> u64 {
    buf.clear();
    for t in 0..len {
        let survivors = if t >= lag {
            binomial_thin(buf[t - lag], alpha, rng)
        } else {
            0
        };
        buf.push(survivors + sampler.sample(rng));
    }
    buf.iter().sum()
}

/// Shared k-means seeding for every lag arrangement with `g` components.
///
/// Grid matches are cached per (cluster, lag) and each uses its own derived
/// seed, so results do not depend on the order arrangements are tried in.
#[derive(Debug)]
pub struct Initializer<'a> {
    panel: &'a PanelData,
    cfg: &'a InitConfig,
    seed: KmeansSeed,
    clusters: Vec<Option<PanelData>>,
    match_seed: u64,
    matches: BTreeMap<(usize, ComponentSpec), (f64, f64)>,
}

impl<'a> Initializer<'a> {
    pub fn new<R: Rng + ?Sized>(panel: &'a PanelData, g: usize, cfg: &'a InitConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let seed = kmeans_seed(panel, g, cfg.kmeans_restarts, rng)?;
        let clusters = (0..g)
            .map(|k| {
                let members: Vec<usize> = (0..panel.len()).filter(|&i| seed.assignment[i] == k).collect();
                if members.is_empty() {
                    Ok(None)
                } else {
                    panel.subset(&members).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            panel,
            cfg,
            seed,
            clusters,
            match_seed: rng.next_u64(),
            matches: BTreeMap::new(),
        })
    }

    pub fn kmeans(&self) -> &KmeansSeed {
        &self.seed
    }

    fn alpha_phi(&mut self, cluster: usize, spec: &ComponentSpec) -> (f64, f64) {
        if let Some(&v) = self.matches.get(&(cluster, *spec)) {
            return v;
        }
        let v = match &self.clusters[cluster] {
            None => (FALLBACK_ALPHA, spec.family.default_phi()),
            Some(members) => {
                let stream = (cluster as u64) << 32 | spec.lag as u64;
                let mut rng = seeded(derive_seed(self.match_seed, stream));
                match_alpha_phi(members, self.seed.centers[cluster], spec, self.cfg, &mut rng)
            }
        };
        self.matches.insert((cluster, *spec), v);
        v
    }

    /// Mixture whose `k`-th component uses `specs[k]` and the `k`-th cluster.
    pub fn model_for(&mut self, specs: &[ComponentSpec]) -> Result<MixtureModel> {
        let g = self.seed.centers.len();
        if specs.len() != g {
            return Err(Error::InvalidInput(format!("{} specs for {g} clusters", specs.len())));
        }
        let n = self.panel.len() as f64;
        let raw: Vec<f64> = self.seed.sizes.iter().map(|&s| s as f64 / n).collect();
        let weights = apply_weight_floor(&raw, INITIAL_WEIGHT_FLOOR);
        let mut components = Vec::with_capacity(g);
        for (k, spec) in specs.iter().enumerate() {
            let (alpha, phi) = self.alpha_phi(k, spec);
            let lambda = self.seed.centers[k].max(LAMBDA_FLOOR);
            let params = ComponentParams::new(alpha, InnovationModel::new(spec.family, lambda, phi)?)?;
            components.push(MixtureComponent::new(*spec, params)?);
        }
        MixtureModel::new(components, weights)
    }

    /// One starting model per distinct assignment of `specs` to clusters, in
    /// lexicographic order of the assignment (at most [`MAX_ARRANGEMENTS`]).
    pub fn arrangements(&mut self, specs: &[ComponentSpec]) -> Result<Vec<MixtureModel>> {
        distinct_permutations(specs, MAX_ARRANGEMENTS)
            .iter()
            .map(|a| self.model_for(a))
            .collect()
    }

    /// The arrangement whose starting model has the highest log-likelihood
    /// (first one on ties).
    pub fn best_arrangement(&mut self, specs: &[ComponentSpec]) -> Result<MixtureModel> {
        let mut best: Option<(f64, MixtureModel)> = None;
        let mut first_err = None;
        for model in self.arrangements(specs)? {
            match e_step(self.panel, &model) {
                Ok((_, ll)) => {
                    if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                        best = Some((ll, model));
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match (best, first_err) {
            (Some((_, m)), _) => Ok(m),
            (None, Some(e)) => Err(e),
            (None, None) => Err(Error::InvalidInput("no component specs given".into())),
        }
    }
}

/// Distinct orderings of `items` in lexicographic order, at most `cap`.
fn distinct_permutations<T: Ord + Clone>(items: &[T], cap: usize) -> Vec<Vec<T>> {
    let mut cur = items.to_vec();
    cur.sort();
    let mut out = vec![cur.clone()];
    while out.len() < cap {
        // next lexicographic permutation
        let Some(i) = (0..cur.len().saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..cur.len())
            .rev()
            .find(|&j| cur[j] > cur[i])
            .expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.push(cur.clone());
    }
    out
}

/// Starting model for the given per-component specs.
pub fn initial_model<R: Rng + ?Sized>(
    panel: &PanelData,
    specs: &[ComponentSpec],
    cfg: &InitConfig,
    rng: &mut R,
) -> Result<MixtureModel> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("at least one component is required".into()));
    }
    Initializer::new(panel, specs.len(), cfg, rng)?.model_for(specs)
}

/// Previous fit plus one new component centred at the grand mean.
pub fn augment_model(
    prev: &FitResult,
    panel: &PanelData,
    new_spec: &ComponentSpec,
    cfg: &InitConfig,
) -> Result<MixtureModel> {
    if new_spec.family != prev.model.family() {
        return Err(Error::InvalidInput("new component must use the fitted family".into()));
    }
    let w = cfg.new_component_weight;
    let lambda = panel.grand_mean().max(LAMBDA_FLOOR);
    let params = ComponentParams::new(
        FALLBACK_ALPHA,
        InnovationModel::new(new_spec.family, lambda, new_spec.family.default_phi())?,
    )?;
    let mut components = prev.model.components().to_vec();
    components.push(MixtureComponent::new(*new_spec, params)?);
    let mut weights: Vec<f64> = prev.model.weights().iter().map(|p| p * (1.0 - w)).collect();
    weights.push(w);
    MixtureModel::new(components, weights)
}

/// Random starting model: Dirichlet(1) proportions, uniform `alpha`, `lambda`
/// uniform over `(0, max series mean]` and, for NB, `phi` uniform in (1, 5).
pub fn random_model<R: Rng + ?Sized>(panel: &PanelData, specs: &[ComponentSpec], rng: &mut R) -> Result<MixtureModel> {
    let max_mean = panel.series_means().into_iter().fold(LAMBDA_FLOOR, f64::max);
    let raw: Vec<f64> = specs.iter().map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = raw.iter().sum();
    let weights = apply_weight_floor(&raw.iter().map(|r| r / total).collect::<Vec<_>>(), INITIAL_WEIGHT_FLOOR);
    let mut components = Vec::with_capacity(specs.len());
    for spec in specs {
        let alpha = rng.random_range(0.02..0.98);
        let lambda = rng.random_range(LAMBDA_FLOOR..=max_mean);
        let phi = match spec.family {
            InnovationFamily::Poisson => 1.0,
            InnovationFamily::NegativeBinomial => rng.random_range(1.05..5.0),
        };
        let params = ComponentParams::new(alpha, InnovationModel::new(spec.family, lambda, phi)?)?;
        components.push(MixtureComponent::new(*spec, params)?);
    }
    MixtureModel::new(components, weights)
}

/// `k` distinct series indices chosen uniformly.
pub(crate) fn random_distinct<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    sample_indices(rng, n, k).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inar::simulate_inar;
    use crate::mixture::{fit_em, EmConfig};

    fn pspec(lag: usize) -> ComponentSpec {
        ComponentSpec::new(lag, InnovationFamily::Poisson).unwrap()
    }

    fn constant_panel(levels: &[(u64, usize)]) -> PanelData {
        let rows = levels
            .iter()
            .flat_map(|&(v, n)| std::iter::repeat_n(vec![v; 10], n))
            .collect();
        PanelData::from_vecs(rows).unwrap()
    }

    #[test]
    fn kmeans_two_constant_groups() {
        let p = constant_panel(&[(0, 4), (10, 6)]);
        let s = kmeans_seed(&p, 2, 10, &mut seeded(1)).unwrap();
        assert_eq!(s.centers, vec![10.0, 0.0]);
        assert_eq!(s.sizes, vec![6, 4]);
        assert_eq!(s.assignment, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        assert!(s.warning.is_none());
    }

    #[test]
    fn kmeans_identical_series_collapse() {
        let p = constant_panel(&[(3, 5)]);
        let s = kmeans_seed(&p, 3, 10, &mut seeded(1)).unwrap();
        assert_eq!(s.centers, vec![3.0, 3.0, 3.0]);
        assert_eq!(s.sizes, vec![5, 0, 0]);
        assert!(s.warning.is_some());
        assert!(kmeans_seed(&p, 6, 10, &mut seeded(1)).is_err());
    }

    #[test]
    fn alpha_phi_fallback_and_pinning() {
        let cfg = InitConfig::default();
        let zeros = constant_panel(&[(0, 3)]);
        assert_eq!(
            match_alpha_phi(&zeros, 0.0, &pspec(1), &cfg, &mut seeded(0)),
            (0.5, 1.0)
        );
        let nb = ComponentSpec::new(1, InnovationFamily::NegativeBinomial).unwrap();
        assert_eq!(match_alpha_phi(&zeros, 0.0, &nb, &cfg, &mut seeded(0)), (0.5, 2.0));
        let p = constant_panel(&[(2, 3)]);
        let (_, phi) = match_alpha_phi(&p, 1.0, &pspec(1), &cfg, &mut seeded(0));
        assert_eq!(phi, 1.0);
    }

    #[test]
    fn single_component_initial_model() {
        let p = constant_panel(&[(1, 3), (5, 2)]);
        let m = initial_model(&p, &[pspec(1)], &InitConfig::default(), &mut seeded(2)).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert!((m.components()[0].params.lambda() - p.grand_mean()).abs() < 1e-12);
    }

    #[test]
    fn two_group_initial_model_uses_group_means() {
        let p = constant_panel(&[(2, 3), (9, 7)]);
        let m = initial_model(&p, &[pspec(1), pspec(1)], &InitConfig::default(), &mut seeded(2)).unwrap();
        assert_eq!(m.components()[0].params.lambda(), 9.0);
        assert_eq!(m.components()[1].params.lambda(), 2.0);
        assert!((m.weights()[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn initial_model_valid_for_every_g() {
        let spec = pspec(1);
        let params = ComponentParams::poisson(0.3, 2.0).unwrap();
        let mut rng = seeded(9);
        let rows = (0..8)
            .map(|_| simulate_inar(&spec, &params, 12, &mut rng).unwrap())
            .collect();
        let p = PanelData::new(rows).unwrap();
        for g in 1..=p.len() {
            let m = initial_model(&p, &vec![spec; g], &InitConfig::default(), &mut seeded(g as u64)).unwrap();
            assert_eq!(m.n_components(), g);
            assert!(m.weights().iter().all(|&w| w > 0.0));
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn initialisation_is_deterministic() {
        let spec = pspec(2);
        let params = ComponentParams::poisson(0.5, 2.0).unwrap();
        let mut rng = seeded(4);
        let rows = (0..30)
            .map(|_| simulate_inar(&spec, &params, 20, &mut rng).unwrap())
            .collect();
        let p = PanelData::new(rows).unwrap();
        let cfg = InitConfig::default();
        let a = initial_model(&p, &[spec, spec], &cfg, &mut seeded(77)).unwrap();
        let b = initial_model(&p, &[spec, spec], &cfg, &mut seeded(77)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn augment_weights_and_new_component() {
        let spec = pspec(1);
        let params = ComponentParams::poisson(0.3, 2.0).unwrap();
        let mut rng = seeded(5);
        let rows = (0..10)
            .map(|_| simulate_inar(&spec, &params, 15, &mut rng).unwrap())
            .collect();
        let p = PanelData::new(rows).unwrap();
        let init = MixtureModel::new(vec![MixtureComponent::new(spec, params).unwrap()], vec![1.0]).unwrap();
        let fit = fit_em(&p, &init, &EmConfig::default()).unwrap();
        let aug = augment_model(&fit, &p, &pspec(3), &InitConfig::default()).unwrap();
        assert_eq!(aug.weights(), &[0.95, 0.05]);
        let new = aug.components()[1];
        assert_eq!(new.spec.lag, 3);
        assert_eq!(new.params.alpha(), 0.5);
        assert!((new.params.lambda() - p.grand_mean()).abs() < 1e-12);
    }

    #[test]
    fn permutations_of_multiset() {
        let perms = distinct_permutations(&[2, 1, 1], 64);
        assert_eq!(perms, vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]);
        assert_eq!(distinct_permutations(&[1, 2, 3, 4], 5).len(), 5);
    }

    #[test]
    fn config_validation() {
        let bad = InitConfig {
            new_component_weight: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(InitConfig::default().validate().is_ok());
    }
}
