use super::{CommunityError, Partition};
use crate::trade::{PositionSeries, TraderId};
use std::collections::BTreeMap;

/// Symmetric matrix of `1 - |correlation|` dissimilarities between traders'
/// net-position series. Constant series cannot be correlated and are listed
/// in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<TraderId>,
    values: Vec<f64>,
    excluded: Vec<TraderId>,
}

impl DistanceMatrix {
    pub fn ids(&self) -> &[TraderId] {
        &self.ids
    }

    pub fn excluded(&self) -> &[TraderId] {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn from_values(ids: Vec<TraderId>, values: Vec<f64>) -> Result<Self, CommunityError> {
        let n = ids.len();
        assert_eq!(values.len(), n * n, "distance matrix must be square");
        if n < 2 {
            return Err(CommunityError::TooFewSeries { got: n, min: 2 });
        }
        Ok(DistanceMatrix {
            ids,
            values,
            excluded: Vec::new(),
        })
    }
}

/// Pairwise `1 - |Pearson correlation|` over aligned position series.
///
/// Series must share a common length of at least three epochs. Zero-variance
/// series are excluded and reported rather than failing the whole matrix.
pub fn correlation_distance_matrix(
    series: &[PositionSeries],
) -> Result<DistanceMatrix, CommunityError> {
    if series.len() < 2 {
        return Err(CommunityError::TooFewSeries {
            got: series.len(),
            min: 2,
        });
    }
    let len = series[0].values.len();
    if len < 3 || series.iter().any(|s| s.values.len() != len) {
        return Err(CommunityError::BadSeriesLength(
            series.iter().map(|s| s.values.len()).min().unwrap_or(0),
        ));
    }

    let mut kept: Vec<&PositionSeries> = Vec::new();
    let mut excluded = Vec::new();
    let mut centred: Vec<Vec<f64>> = Vec::new();
    for s in series {
        let mean = s.values.iter().sum::<f64>() / len as f64;
        let dev: Vec<f64> = s.values.iter().map(|v| v - mean).collect();
        let norm = dev.iter().map(|d| d * d).sum::<f64>().sqrt();
        if norm == 0.0 {
            excluded.push(s.trader.clone());
        } else {
            centred.push(dev.iter().map(|d| d / norm).collect());
            kept.push(s);
        }
    }
    if kept.len() < 2 {
        return Err(CommunityError::TooFewSeries {
            got: kept.len(),
            min: 2,
        });
    }

    let n = kept.len();
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let corr: f64 = centred[i]
                .iter()
                .zip(&centred[j])
                .map(|(a, b)| a * b)
                .sum();
            let d = (1.0 - corr.abs()).clamp(0.0, 1.0);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix {
        ids: kept.iter().map(|s| s.trader.clone()).collect(),
        values,
        excluded,
    })
}

/// Average-linkage agglomeration cut at `threshold`: clusters merge while
/// their linkage distance is strictly below the threshold. Equal-distance
/// candidates resolve to the smallest pair of cluster ids.
pub fn hierarchical_partition(
    distances: &DistanceMatrix,
    threshold: f64,
) -> Result<Partition, CommunityError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CommunityError::BadThreshold(threshold));
    }
    let n = distances.len();
    let mut dist: Vec<f64> = (0..n * n).map(|k| distances.values[k]).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut member_of: Vec<usize> = (0..n).collect(); // leaf -> cluster id (smallest member index)

    for _ in 1..n {
        // Global minimum over active pairs; ties resolve to smallest (i, j).
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((d, i, j)) = best else { break };
        if d >= threshold {
            break;
        }
        // Lance-Williams update for average linkage; cluster j folds into i.
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let merged = (si * dist[i * n + k] + sj * dist[j * n + k]) / (si + sj);
            dist[i * n + k] = merged;
            dist[k * n + i] = merged;
        }
        size[i] += size[j];
        active[j] = false;
        for m in member_of.iter_mut() {
            if *m == j {
                *m = i;
            }
        }
    }

    let assignment: BTreeMap<TraderId, usize> = distances
        .ids
        .iter()
        .enumerate()
        .map(|(leaf, id)| (id.clone(), member_of[leaf]))
        .collect();
    Ok(Partition::new(assignment))
}
