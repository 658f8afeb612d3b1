//! Comparison clusterer: dynamic time warping distances with fuzzy
//! C-medoids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::random_distinct;
use crate::panel::PanelData;
use crate::rng::{derive_seed, seeded};

/// DTW distance with local cost `|a_i - b_j|`, steps {match, insert, delete}
/// and no window.
pub fn dtw_distance(a: &[u64], b: &[u64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "DTW needs non-empty series");
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = x.abs_diff(b[j - 1]) as f64;
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Symmetric matrix of pairwise DTW distances, computed once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn dtw(panel: &PanelData) -> Self {
        let n = panel.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = panel.get(i).values();
                (i + 1..n).map(|j| dtw_distance(a, panel.get(j).values())).collect()
            })
            .collect();
        let mut data = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    /// Wraps a precomputed symmetric matrix given as rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidInput("distances must be finite and non-negative".into()));
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmddConfig {
    pub fuzziness: f64,
    pub random_starts: usize,
    /// Stop once the objective changes by less than this.
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub g_min: usize,
    pub g_max: usize,
}

impl Default for FcmddConfig {
    fn default() -> Self {
        Self {
            fuzziness: 2.0,
            random_starts: 5,
            tolerance: 1e-2,
            max_iters: 100,
            seed: 0,
            g_min: 2,
            g_max: 3,
        }
    }
}

impl FcmddConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fuzziness > 1.0 && self.fuzziness.is_finite()) {
            return Err(Error::InvalidInput("fuzziness must be > 1".into()));
        }
        if self.random_starts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidInput(
                "random starts and iterations must be positive".into(),
            ));
        }
        if self.g_min == 0 || self.g_min > self.g_max {
            return Err(Error::InvalidInput("invalid component range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmddFit {
    pub medoids: Vec<usize>,
    /// `n x g` memberships; rows sum to 1.
    pub membership: Vec<Vec<f64>>,
    pub objective: f64,
    /// Objective after each membership update of the winning start.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl FcmddFit {
    /// Arg-max membership per series, ties to the lowest cluster.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.membership
            .iter()
            .map(|row| {
                let mut best = 0;
                for (k, &u) in row.iter().enumerate().skip(1) {
                    if u > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

fn memberships(dist: &DistanceMatrix, medoids: &[usize], m: f64) -> Vec<Vec<f64>> {
    let exponent = 1.0 / (m - 1.0);
    (0..dist.len())
        .map(|i| {
            let d: Vec<f64> = medoids.iter().map(|&c| dist.get(i, c)).collect();
            let mut row = vec![0.0; medoids.len()];
            if let Some(k) = d.iter().position(|&v| v == 0.0) {
                row[k] = 1.0;
                return row;
            }
            for (u, &v) in row.iter_mut().zip(&d) {
                *u = (1.0 / v).powf(exponent);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|u| *u /= s);
            row
        })
        .collect()
}

fn objective(dist: &DistanceMatrix, medoids: &[usize], u: &[Vec<f64>], m: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .zip(medoids)
                .map(|(&uik, &c)| if uik > 0.0 { uik.powf(m) * dist.get(i, c) } else { 0.0 })
                .sum::<f64>()
        })
        .sum()
}

/// One start: alternate membership and medoid updates. A cluster's medoid is
/// never moved onto another cluster's medoid, so medoids stay distinct.
fn fcmdd_single(dist: &DistanceMatrix, mut medoids: Vec<usize>, cfg: &FcmddConfig) -> FcmddFit {
    let m = cfg.fuzziness;
    let n = dist.len();
    let mut u = memberships(dist, &medoids, m);
    let mut obj = objective(dist, &medoids, &u, m);
    let mut trace = vec![obj];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut moved = false;
        for k in 0..medoids.len() {
            let w: Vec<f64> = u
                .iter()
                .map(|row| if row[k] > 0.0 { row[k].powf(m) } else { 0.0 })
                .collect();
            let cost = |c: usize| -> f64 { (0..n).map(|i| w[i] * dist.get(i, c)).sum() };
            let mut best = medoids[k];
            let mut best_cost = cost(best);
            for c in 0..n {
                if c == best || medoids.contains(&c) {
                    continue;
                }
                let v = cost(c);
                if v < best_cost {
                    best = c;
                    best_cost = v;
                }
            }
            if best != medoids[k] {
                medoids[k] = best;
                moved = true;
            }
        }
        u = memberships(dist, &medoids, m);
        let next = objective(dist, &medoids, &u, m);
        trace.push(next);
        let change = (obj - next).abs();
        obj = next;
        if !moved || change < cfg.tolerance {
            break;
        }
    }
    FcmddFit {
        medoids,
        membership: u,
        objective: obj,
        objective_trace: trace,
        iterations,
    }
}

/// Best of `cfg.random_starts` FCMdd runs with `g` clusters.
pub fn fcmdd_fit(dist: &DistanceMatrix, g: usize, cfg: &FcmddConfig) -> Result<FcmddFit> {
    cfg.validate()?;
    let n = dist.len();
    if g == 0 || g > n {
        return Err(Error::InvalidInput(format!("cannot form {g} medoids from {n} series")));
    }
    let starts: Vec<Vec<usize>> = (0..cfg.random_starts)
        .map(|s| {
            let mut rng = seeded(derive_seed(cfg.seed, (g as u64) << 32 | s as u64));
            random_distinct(n, g, &mut rng)
        })
        .collect();
    let fits: Vec<FcmddFit> = starts.into_par_iter().map(|m| fcmdd_single(dist, m, cfg)).collect();
    let mut best = 0;
    for (s, fit) in fits.iter().enumerate() {
        if fit.objective < fits[best].objective {
            best = s;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one start"))
}

/// Compactness over separation; smaller is better. Infinite when two
/// medoids are at distance zero or there is a single cluster.
pub fn xie_beni(dist: &DistanceMatrix, fit: &FcmddFit, m: f64) -> f64 {
    let g = fit.medoids.len();
    let mut sep = f64::INFINITY;
    for a in 0..g {
        for b in a + 1..g {
            sep = sep.min(dist.get(fit.medoids[a], fit.medoids[b]));
        }
    }
    if g < 2 || sep == 0.0 {
        return f64::INFINITY;
    }
    objective(dist, &fit.medoids, &fit.membership, m) / (dist.len() as f64 * sep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmddCandidate {
    pub g: usize,
    pub objective: f64,
    pub xie_beni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmddSelection {
    pub best_g: usize,
    pub labels: Vec<usize>,
    pub best: FcmddFit,
    pub candidates: Vec<FcmddCandidate>,
}

/// Fits every `g` in the configured range (capped at `n - 1`) and keeps the
/// smallest Xie-Beni index; ties go to the smaller `g`.
pub fn fcmdd_select(dist: &DistanceMatrix, cfg: &FcmddConfig) -> Result<FcmddSelection> {
    cfg.validate()?;
    let n = dist.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two series".into()));
    }
    let g_max = cfg.g_max.min(n - 1);
    let g_min = cfg.g_min.min(g_max);
    let mut best: Option<(f64, FcmddFit)> = None;
    let mut candidates = Vec::new();
    for g in g_min..=g_max {
        let fit = fcmdd_fit(dist, g, cfg)?;
        let xb = xie_beni(dist, &fit, cfg.fuzziness);
        candidates.push(FcmddCandidate {
            g,
            objective: fit.objective,
            xie_beni: xb,
        });
        if best.as_ref().is_none_or(|(b, _)| xb < *b) {
            best = Some((xb, fit));
        }
    }
    let (_, fit) = best.expect("non-empty range");
    Ok(FcmddSelection {
        best_g: fit.medoids.len(),
        labels: fit.hard_labels(),
        best: fit,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(dtw_distance(&[0], &[3]), 3.0);
        assert_eq!(dtw_distance(&[1, 2, 3], &[1, 1, 2, 2, 3]), 0.0);
        assert_eq!(dtw_distance(&[0, 0], &[1]), 2.0);
    }

    #[test]
    fn every_series_its_own_medoid() {
        let p = PanelData::from_vecs(vec![vec![0, 1], vec![5, 5], vec![9, 2]]).unwrap();
        let d = DistanceMatrix::dtw(&p);
        let fit = fcmdd_fit(&d, 3, &FcmddConfig::default()).unwrap();
        assert_eq!(fit.objective, 0.0);
        let mut meds = fit.medoids.clone();
        meds.sort();
        assert_eq!(meds, vec![0, 1, 2]);
    }

    #[test]
    fn separated_groups() {
        let rows: Vec<Vec<u64>> = (0..10)
            .map(|i| {
                if i < 5 {
                    vec![1 + i % 2, 1, 0, 1]
                } else {
                    vec![20, 21 + i % 2, 19, 20]
                }
            })
            .collect();
        let p = PanelData::from_vecs(rows).unwrap();
        let d = DistanceMatrix::dtw(&p);
        let sel = fcmdd_select(&d, &FcmddConfig::default()).unwrap();
        assert_eq!(sel.best_g, 2);
        let l = &sel.labels;
        assert!(l[..5].iter().all(|&x| x == l[0]) && l[5..].iter().all(|&x| x == l[5]) && l[0] != l[5]);
        for row in &sel.best.membership {
            assert!(row.iter().any(|&u| u > 0.95));
        }
    }

    #[test]
    fn selection_caps_g_below_n() {
        let p = PanelData::from_vecs(vec![vec![0, 1], vec![5, 5], vec![9, 2]]).unwrap();
        let d = DistanceMatrix::dtw(&p);
        let cfg = FcmddConfig {
            g_min: 2,
            g_max: 5,
            ..Default::default()
        };
        let sel = fcmdd_select(&d, &cfg).unwrap();
        assert!(sel.candidates.iter().all(|c| c.g <= 2));
    }
}
