//! Hard classification and partition agreement scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Responsibilities;

/// Arg-max of every row; ties go to the lowest component index.
pub fn map_classify(resp: &Responsibilities) -> Vec<usize> {
    resp.rows()
        .map(|row| {
            let mut best = 0;
            for (g, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = g;
                }
            }
            best
        })
        .collect()
}

/// Contingency table: rows are true classes, columns predicted classes.
///
/// Row and column labels are kept sorted so tables from different runs line
/// up and can be accumulated.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CrossTab {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl CrossTab {
    pub fn from_labels(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        check_lengths(truth, predicted, 0)?;
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (&t, &p) in truth.iter().zip(predicted) {
            *cells.entry((t, p)).or_default() += 1;
        }
        let mut tab = Self::default();
        for ((t, p), c) in cells {
            tab.add(t, p, c);
        }
        Ok(tab)
    }

    /// Empty table with fixed row and column labels.
    pub fn with_labels(row_labels: Vec<usize>, col_labels: Vec<usize>) -> Self {
        let counts = vec![vec![0; col_labels.len()]; row_labels.len()];
        Self {
            row_labels,
            col_labels,
            counts,
        }
    }

    fn row_slot(&mut self, label: usize) -> usize {
        match self.row_labels.binary_search(&label) {
            Ok(i) => i,
            Err(i) => {
                self.row_labels.insert(i, label);
                self.counts.insert(i, vec![0; self.col_labels.len()]);
                i
            }
        }
    }

    fn col_slot(&mut self, label: usize) -> usize {
        match self.col_labels.binary_search(&label) {
            Ok(j) => j,
            Err(j) => {
                self.col_labels.insert(j, label);
                for row in &mut self.counts {
                    row.insert(j, 0);
                }
                j
            }
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize, count: u64) {
        let i = self.row_slot(truth);
        let j = self.col_slot(predicted);
        self.counts[i][j] += count;
    }

    /// Adds every cell of `other` into `self`.
    pub fn accumulate(&mut self, other: &CrossTab) {
        for (i, &t) in other.row_labels.iter().enumerate() {
            for (j, &p) in other.col_labels.iter().enumerate() {
                if other.counts[i][j] > 0 {
                    self.add(t, p, other.counts[i][j]);
                }
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Adjusted Rand index of the two partitions summarised by the table.
    pub fn adjusted_rand_index(&self) -> f64 {
        let sum_cells: f64 = self.counts.iter().flatten().map(|&c| comb2(c)).sum();
        let sum_rows: f64 = self.row_sums().into_iter().map(comb2).sum();
        let sum_cols: f64 = self.col_sums().into_iter().map(comb2).sum();
        let total = comb2(self.total());
        if total == 0.0 {
            return 1.0;
        }
        let expected = sum_rows * sum_cols / total;
        let max_index = 0.5 * (sum_rows + sum_cols);
        let denom = max_index - expected;
        if denom == 0.0 {
            // both partitions trivial; agree only if they are the same partition
            return if sum_cells == sum_rows && sum_cells == sum_cols {
                1.0
            } else {
                0.0
            };
        }
        (sum_cells - expected) / denom
    }

    /// Rand index: fraction of item pairs on which the partitions agree.
    pub fn rand_index(&self) -> f64 {
        let n = self.total();
        let pairs = comb2(n);
        if pairs == 0.0 {
            return 1.0;
        }
        let sum_cells: f64 = self.counts.iter().flatten().map(|&c| comb2(c)).sum();
        let sum_rows: f64 = self.row_sums().into_iter().map(comb2).sum();
        let sum_cols: f64 = self.col_sums().into_iter().map(comb2).sum();
        // agreements = pairs together in both + pairs apart in both
        let apart_both = pairs - sum_rows - sum_cols + sum_cells;
        (sum_cells + apart_both) / pairs
    }
}

fn comb2(c: u64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

fn check_lengths(truth: &[usize], predicted: &[usize], min: usize) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "label length mismatch: {} true vs {} predicted",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.len() < min {
        return Err(Error::InvalidInput(format!(
            "need at least {min} labels, got {}",
            truth.len()
        )));
    }
    Ok(())
}

/// Hubert-Arabie adjusted Rand index. Needs at least two items.
pub fn adjusted_rand_index(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(truth, predicted, 2)?;
    Ok(CrossTab::from_labels(truth, predicted)?.adjusted_rand_index())
}

pub fn rand_index(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(truth, predicted, 2)?;
    Ok(CrossTab::from_labels(truth, predicted)?.rand_index())
}
