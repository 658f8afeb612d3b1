//! Panels of count series and the per-lag transition tables the likelihood
//! code runs on.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};

/// One individual's observed counts, `T >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountSeries(Vec<u64>);

impl CountSeries {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("a count series needs at least one value".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> u64 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn sum(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() as f64 / self.0.len() as f64
    }

    /// Unbiased sample variance; zero for a single observation.
    pub fn variance(&self) -> f64 {
        let n = self.0.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.0.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }
}

impl TryFrom<Vec<u64>> for CountSeries {
    type Error = Error;

    fn try_from(values: Vec<u64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Sufficient statistics of a panel for an INAR(s*) likelihood at one lag.
///
/// The first `s` observations of every series only enter through the
/// innovation pmf; the remainder enter through the transition pmf of the pair
/// `(x_{t-s}, x_t)`. Distinct pairs are stored once for the whole panel so a
/// component's transition log-probabilities are evaluated once per parameter
/// value, then combined per series.
#[derive(Debug)]
pub struct LagIndex {
    lag: usize,
    /// Distinct `(x_lag, x_t)` pairs in ascending order.
    pairs: Vec<(u64, u64)>,
    /// Per series: `(pair index, multiplicity)`, sorted by pair index.
    series_pairs: Vec<Vec<(u32, u32)>>,
    /// Per series: `(initial value, multiplicity)`, sorted by value.
    series_initial: Vec<Vec<(u64, u32)>>,
}

impl LagIndex {
    fn build(series: &[CountSeries], lag: usize) -> Self {
        let mut distinct: BTreeMap<(u64, u64), u32> = BTreeMap::new();
        let mut raw_pairs = Vec::with_capacity(series.len());
        let mut series_initial = Vec::with_capacity(series.len());
        for s in series {
            let v = s.values();
            let head = lag.min(v.len());
            let mut init: BTreeMap<u64, u32> = BTreeMap::new();
            for &x in &v[..head] {
                *init.entry(x).or_default() += 1;
            }
            series_initial.push(init.into_iter().collect());

            let mut counts: HashMap<(u64, u64), u32> = HashMap::new();
            for t in head..v.len() {
                let key = (v[t - lag], v[t]);
                *counts.entry(key).or_default() += 1;
                distinct.entry(key).or_default();
            }
            raw_pairs.push(counts);
        }
        for (i, slot) in distinct.values_mut().enumerate() {
            *slot = i as u32;
        }
        let series_pairs = raw_pairs
            .into_iter()
            .map(|counts| {
                let mut entries: Vec<(u32, u32)> = counts.into_iter().map(|(k, c)| (distinct[&k], c)).collect();
                entries.sort_unstable();
                entries
            })
            .collect();
        Self {
            lag,
            pairs: distinct.into_keys().collect(),
            series_pairs,
            series_initial,
        }
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.pairs
    }

    pub fn series_pairs(&self, i: usize) -> &[(u32, u32)] {
        &self.series_pairs[i]
    }

    pub fn series_initial(&self, i: usize) -> &[(u64, u32)] {
        &self.series_initial[i]
    }
}

/// `n` count series of possibly unequal length, with optional identifiers.
#[derive(Debug)]
pub struct PanelData {
    ids: Vec<String>,
    series: Vec<CountSeries>,
    max_count: u64,
    lag_cache: RwLock<BTreeMap<usize, Arc<LagIndex>>>,
}

impl Clone for PanelData {
    fn clone(&self) -> Self {
        Self {
            ids: self.ids.clone(),
            series: self.series.clone(),
            max_count: self.max_count,
            lag_cache: RwLock::new(BTreeMap::new()),
        }
    }
}

impl PartialEq for PanelData {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.series == other.series
    }
}

impl PanelData {
    /// Panel with ids `"1"`, `"2"`, ...
    pub fn new(series: Vec<CountSeries>) -> Result<Self> {
        let ids = (1..=series.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, series)
    }

    pub fn with_ids(ids: Vec<String>, series: Vec<CountSeries>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if ids.len() != series.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} series",
                ids.len(),
                series.len()
            )));
        }
        let max_count = series.iter().map(CountSeries::max).max().unwrap_or(0);
        Ok(Self {
            ids,
            series,
            max_count,
            lag_cache: RwLock::new(BTreeMap::new()),
        })
    }

    /// Convenience constructor from raw vectors; every vector must be non-empty.
    pub fn from_vecs(rows: Vec<Vec<u64>>) -> Result<Self> {
        let series = rows.into_iter().map(CountSeries::new).collect::<Result<Vec<_>>>()?;
        Self::new(series)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn series(&self) -> &[CountSeries] {
        &self.series
    }

    pub fn get(&self, i: usize) -> &CountSeries {
        &self.series[i]
    }

    pub fn max_count(&self) -> u64 {
        self.max_count
    }

    /// Total number of time points, `sum_i T_i`.
    pub fn n_obs(&self) -> usize {
        self.series.iter().map(CountSeries::len).sum()
    }

    pub fn min_len(&self) -> usize {
        self.series.iter().map(CountSeries::len).min().unwrap_or(0)
    }

    pub fn max_len(&self) -> usize {
        self.series.iter().map(CountSeries::len).max().unwrap_or(0)
    }

    /// Mean count over all series and time points.
    pub fn grand_mean(&self) -> f64 {
        let total: u64 = self.series.iter().map(CountSeries::sum).sum();
        total as f64 / self.n_obs() as f64
    }

    pub fn series_means(&self) -> Vec<f64> {
        self.series.iter().map(CountSeries::mean).collect()
    }

    /// Sub-panel made of the listed series, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let series = indices.iter().map(|&i| self.series[i].clone()).collect();
        Self::with_ids(ids, series)
    }

    /// Transition table for lag `lag`, built on first use and cached.
    pub fn lag_index(&self, lag: usize) -> Arc<LagIndex> {
        assert!(lag >= 1, "lag must be positive");
        if let Some(idx) = self.lag_cache.read().expect("lag cache poisoned").get(&lag) {
            return Arc::clone(idx);
        }
        let built = Arc::new(LagIndex::build(&self.series, lag));
        let mut cache = self.lag_cache.write().expect("lag cache poisoned");
        Arc::clone(cache.entry(lag).or_insert(built))
    }
}
