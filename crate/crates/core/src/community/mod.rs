//! Cluster detection on trader networks and position correlations, plus
//! partition quality measures.

mod hierarchy;
mod mapeq;

pub use hierarchy::{correlation_distance_matrix, hierarchical_partition, DistanceMatrix};
pub use mapeq::{infomap_partition, map_equation_codelength, modularity};

use crate::trade::TraderId;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("partition does not cover node {0}")]
    UncoveredNode(TraderId),
    #[error("network is empty")]
    EmptyNetwork,
    #[error("network has no edges")]
    NoEdges,
    #[error("need at least {min} series, got {got}")]
    TooFewSeries { got: usize, min: usize },
    #[error("position series must share a length >= 3, got {0}")]
    BadSeriesLength(usize),
    #[error("distance threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("partitions cover different trader sets")]
    MismatchedPartitions,
}

/// Assignment of traders to dense cluster labels `0..num_clusters`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: BTreeMap<TraderId, usize>,
    num_clusters: usize,
}

impl Partition {
    /// Normalises arbitrary labels to dense ones, ordered by each cluster's
    /// first member in trader-id order.
    pub fn new(raw: BTreeMap<TraderId, usize>) -> Self {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut assignment = BTreeMap::new();
        for (id, label) in raw {
            let next = relabel.len();
            let dense = *relabel.entry(label).or_insert(next);
            assignment.insert(id, dense);
        }
        let num_clusters = relabel.len();
        Partition {
            assignment,
            num_clusters,
        }
    }

    pub fn singletons(ids: impl IntoIterator<Item = TraderId>) -> Self {
        let assignment: BTreeMap<TraderId, usize> =
            ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        // enumerate before collect: duplicates collapse, so re-normalise
        Partition::new(assignment)
    }

    pub fn assignment(&self) -> &BTreeMap<TraderId, usize> {
        &self.assignment
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn label_of(&self, id: &TraderId) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Member sets per cluster label.
    pub fn clusters(&self) -> Vec<Vec<&TraderId>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (id, &label) in &self.assignment {
            out[label].push(id);
        }
        out
    }

    /// Cluster sizes indexed by label.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_clusters];
        for &label in self.assignment.values() {
            sizes[label] += 1;
        }
        sizes
    }
}

/// Adjusted Rand index between two partitions of the same trader set.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64, CommunityError> {
    if a.len() != b.len() || !a.assignment.keys().eq(b.assignment.keys()) {
        return Err(CommunityError::MismatchedPartitions);
    }
    let n = a.len();
    let mut table = vec![vec![0u64; b.num_clusters()]; a.num_clusters()];
    for (id, &la) in a.assignment() {
        let lb = b.label_of(id).expect("same key set");
        table[la][lb] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut sum_cells = 0.0;
    for row in &table {
        for &cell in row {
            sum_cells += choose2(cell);
        }
    }
    let sum_a: f64 = table
        .iter()
        .map(|row| choose2(row.iter().sum::<u64>()))
        .sum();
    let sum_b: f64 = (0..b.num_clusters())
        .map(|j| choose2(table.iter().map(|row| row[j]).sum::<u64>()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        // Degenerate agreement structure (e.g. both all-singletons).
        return Ok(if (sum_cells - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((sum_cells - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(pairs: &[(&str, usize)]) -> Partition {
        Partition::new(
            pairs
                .iter()
                .map(|(id, label)| (TraderId::from(*id), *label))
                .collect(),
        )
    }

    #[test]
    fn labels_are_dense_and_deterministic() {
        let p = partition(&[("a", 7), ("b", 3), ("c", 7), ("d", 9)]);
        assert_eq!(p.num_clusters(), 3);
        assert_eq!(p.label_of(&TraderId::from("a")), Some(0));
        assert_eq!(p.label_of(&TraderId::from("b")), Some(1));
        assert_eq!(p.label_of(&TraderId::from("c")), Some(0));
        assert_eq!(p.label_of(&TraderId::from("d")), Some(2));
        assert_eq!(p.cluster_sizes(), vec![2, 1, 1]);
    }

    #[test]
    fn ari_perfect_and_independent() {
        let a = partition(&[("a", 0), ("b", 0), ("c", 1), ("d", 1), ("e", 2), ("f", 2)]);
        // Same grouping, different labels.
        let b = partition(&[("a", 5), ("b", 5), ("c", 9), ("d", 9), ("e", 0), ("f", 0)]);
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-12);

        // A clearly different grouping scores well below 1.
        let c = partition(&[("a", 0), ("b", 1), ("c", 0), ("d", 2), ("e", 1), ("f", 2)]);
        assert!(adjusted_rand_index(&a, &c).unwrap() < 0.3);

        let d = partition(&[("a", 0), ("b", 0)]);
        assert!(adjusted_rand_index(&a, &d).is_err());
    }
}
