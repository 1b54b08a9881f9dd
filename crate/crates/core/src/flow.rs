//! Consistent cluster identities across sliding windows: Jaccard matching of
//! consecutive partitions, persist/split/merge/birth/death events, label
//! propagation and the alluvial export.

use crate::community::Partition;
use crate::trade::TraderId;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("min_jaccard must lie in (0, 1], got {0}")]
    BadMinJaccard(f64),
    #[error("flow maps are not consecutive: window {prev} is followed by {next}")]
    NonConsecutive { prev: usize, next: usize },
    #[error("cluster weight map is missing cluster {0} referenced by the flow")]
    DanglingCluster(usize),
}

/// `|a intersect b| / |a union b|`; zero when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowEvent {
    Persist,
    Split,
    Merge,
    Birth,
    Death,
}

impl FlowEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowEvent::Persist => "persist",
            FlowEvent::Split => "split",
            FlowEvent::Merge => "merge",
            FlowEvent::Birth => "birth",
            FlowEvent::Death => "death",
        }
    }
}

/// A retained correspondence between a cluster at `t` and one at `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatch {
    pub from: usize,
    pub to: usize,
    pub jaccard: f64,
    /// Intersection cardinality, the ribbon size of the alluvial plot.
    pub overlap: usize,
}

/// Cluster correspondences between two consecutive windows.
///
/// Event tags are per cluster and per side. On the `t` side: `death` with no
/// outgoing match, `split` with two or more, otherwise `persist` when its
/// single target is singly fed and `merge` when the target absorbs several
/// parents. Mirrored on the `t+1` side, so swapping the two partitions
/// exchanges split with merge and birth with death.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub window_from: usize,
    pub window_to: usize,
    pub matches: Vec<FlowMatch>,
    pub events_from: BTreeMap<usize, FlowEvent>,
    pub events_to: BTreeMap<usize, FlowEvent>,
    pub sizes_from: Vec<usize>,
    pub sizes_to: Vec<usize>,
    pub min_jaccard: f64,
}

impl FlowMap {
    pub fn outgoing(&self, from: usize) -> impl Iterator<Item = &FlowMatch> {
        self.matches.iter().filter(move |m| m.from == from)
    }

    pub fn incoming(&self, to: usize) -> impl Iterator<Item = &FlowMatch> {
        self.matches.iter().filter(move |m| m.to == to)
    }
}

fn cluster_sets(p: &Partition) -> Vec<BTreeSet<&TraderId>> {
    let mut sets = vec![BTreeSet::new(); p.num_clusters()];
    for (id, &label) in p.assignment() {
        sets[label].insert(id);
    }
    sets
}

/// Matches clusters of two consecutive partitions: all cluster pairs with
/// Jaccard score at least `min_jaccard` become correspondences, and each
/// cluster is tagged with its flow event.
pub fn match_flows(
    p_t: &Partition,
    p_next: &Partition,
    min_jaccard: f64,
    window_from: usize,
) -> Result<FlowMap, FlowError> {
    if !(min_jaccard > 0.0 && min_jaccard <= 1.0) {
        return Err(FlowError::BadMinJaccard(min_jaccard));
    }
    let from_sets = cluster_sets(p_t);
    let to_sets = cluster_sets(p_next);

    let mut matches = Vec::new();
    for (i, a) in from_sets.iter().enumerate() {
        for (j, b) in to_sets.iter().enumerate() {
            let score = jaccard(a, b);
            if score >= min_jaccard {
                matches.push(FlowMatch {
                    from: i,
                    to: j,
                    jaccard: score,
                    overlap: a.intersection(b).count(),
                });
            }
        }
    }

    let mut out_deg = vec![0usize; from_sets.len()];
    let mut in_deg = vec![0usize; to_sets.len()];
    for m in &matches {
        out_deg[m.from] += 1;
        in_deg[m.to] += 1;
    }

    let mut events_from = BTreeMap::new();
    for (i, &deg) in out_deg.iter().enumerate() {
        let event = match deg {
            0 => FlowEvent::Death,
            1 => {
                let target = matches.iter().find(|m| m.from == i).expect("deg 1").to;
                if in_deg[target] >= 2 {
                    FlowEvent::Merge
                } else {
                    FlowEvent::Persist
                }
            }
            _ => FlowEvent::Split,
        };
        events_from.insert(i, event);
    }
    let mut events_to = BTreeMap::new();
    for (j, &deg) in in_deg.iter().enumerate() {
        let event = match deg {
            0 => FlowEvent::Birth,
            1 => {
                let source = matches.iter().find(|m| m.to == j).expect("deg 1").from;
                if out_deg[source] >= 2 {
                    FlowEvent::Split
                } else {
                    FlowEvent::Persist
                }
            }
            _ => FlowEvent::Merge,
        };
        events_to.insert(j, event);
    }

    Ok(FlowMap {
        window_from,
        window_to: window_from + 1,
        matches,
        events_from,
        events_to,
        sizes_from: from_sets.iter().map(|s| s.len()).collect(),
        sizes_to: to_sets.iter().map(|s| s.len()).collect(),
        min_jaccard,
    })
}

/// Persistent labels carried across a window sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFlows {
    /// Per window: raw cluster label -> persistent label.
    pub labels: Vec<BTreeMap<usize, u64>>,
    pub flows: Vec<FlowMap>,
    /// Per window: cluster sizes by raw label.
    pub sizes: Vec<Vec<usize>>,
    next_label: u64,
}

impl TrackedFlows {
    pub fn num_windows(&self) -> usize {
        self.labels.len()
    }
}

/// Propagates persistent cluster labels across consecutive partitions.
///
/// For each cluster at `t+1` the best-overlapping parent is its inheritance
/// candidate; among the children that elected a given parent, the one with
/// the highest Jaccard (ties to the smaller raw id) inherits the parent's
/// label and the rest get fresh labels. Deterministic, so re-running a
/// sequence reproduces identical labellings.
pub fn track_labels(partitions: &[Partition], min_jaccard: f64) -> Result<TrackedFlows, FlowError> {
    let mut labels: Vec<BTreeMap<usize, u64>> = Vec::new();
    let mut flows = Vec::new();
    let mut sizes = Vec::new();
    let mut next_label = 0u64;

    for (w, partition) in partitions.iter().enumerate() {
        sizes.push(partition.cluster_sizes());
        if w == 0 {
            let initial: BTreeMap<usize, u64> = (0..partition.num_clusters())
                .map(|raw| (raw, raw as u64))
                .collect();
            next_label = partition.num_clusters() as u64;
            labels.push(initial);
            continue;
        }
        let flow = match_flows(&partitions[w - 1], partition, min_jaccard, w - 1)?;
        let prev_labels = labels.last().expect("window 0 seeded").clone();

        // Each child elects its best parent.
        let mut elected: BTreeMap<usize, usize> = BTreeMap::new(); // child -> parent
        for j in 0..partition.num_clusters() {
            let best = flow
                .incoming(j)
                .min_by(|a, b| {
                    b.jaccard
                        .partial_cmp(&a.jaccard)
                        .unwrap()
                        .then(a.from.cmp(&b.from))
                })
                .map(|m| m.from);
            if let Some(parent) = best {
                elected.insert(j, parent);
            }
        }
        // Each parent passes its label to its best-elected child.
        let mut inherited: BTreeMap<usize, u64> = BTreeMap::new(); // child -> label
        let mut by_parent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&child, &parent) in &elected {
            by_parent.entry(parent).or_default().push(child);
        }
        for (&parent, children) in &by_parent {
            let heir = children
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let ja = flow
                        .matches
                        .iter()
                        .find(|m| m.from == parent && m.to == a)
                        .map(|m| m.jaccard)
                        .unwrap_or(0.0);
                    let jb = flow
                        .matches
                        .iter()
                        .find(|m| m.from == parent && m.to == b)
                        .map(|m| m.jaccard)
                        .unwrap_or(0.0);
                    jb.partial_cmp(&ja).unwrap().then(a.cmp(&b))
                })
                .expect("nonempty");
            inherited.insert(heir, prev_labels[&parent]);
        }
        let mut window_labels = BTreeMap::new();
        for j in 0..partition.num_clusters() {
            let label = inherited.get(&j).copied().unwrap_or_else(|| {
                let fresh = next_label;
                next_label += 1;
                fresh
            });
            window_labels.insert(j, label);
        }
        labels.push(window_labels);
        flows.push(flow);
    }

    Ok(TrackedFlows {
        labels,
        flows,
        sizes,
        next_label,
    })
}

#[derive(Debug, Serialize)]
struct AlluvialNode {
    label: u64,
    size: usize,
}

#[derive(Debug, Serialize)]
struct AlluvialWindow {
    index: usize,
    nodes: Vec<AlluvialNode>,
}

#[derive(Debug, Serialize)]
struct AlluvialRibbon {
    window_from: usize,
    source: u64,
    target: u64,
    flow: usize,
}

/// One-step-history alluvial data: per-window nodes `(label, size)` and
/// ribbons `(source, target, intersection size)`, serialisable as JSON for
/// any plotting frontend.
pub fn export_alluvial(tracked: &TrackedFlows) -> Result<serde_json::Value, FlowError> {
    for pair in tracked.flows.windows(2) {
        if pair[0].window_to != pair[1].window_from {
            return Err(FlowError::NonConsecutive {
                prev: pair[0].window_to,
                next: pair[1].window_from,
            });
        }
    }
    let windows: Vec<AlluvialWindow> = tracked
        .labels
        .iter()
        .zip(&tracked.sizes)
        .enumerate()
        .map(|(index, (labels, sizes))| AlluvialWindow {
            index,
            nodes: labels
                .iter()
                .map(|(&raw, &label)| AlluvialNode {
                    label,
                    size: sizes[raw],
                })
                .collect(),
        })
        .collect();
    let ribbons: Vec<AlluvialRibbon> = tracked
        .flows
        .iter()
        .flat_map(|flow| {
            let from_labels = &tracked.labels[flow.window_from];
            let to_labels = &tracked.labels[flow.window_to];
            flow.matches.iter().map(move |m| AlluvialRibbon {
                window_from: flow.window_from,
                source: from_labels[&m.from],
                target: to_labels[&m.to],
                flow: m.overlap,
            })
        })
        .collect();
    Ok(serde_json::json!({
        "windows": windows,
        "ribbons": ribbons,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> BTreeSet<TraderId> {
        names.iter().map(|n| TraderId::from(*n)).collect()
    }

    fn partition(groups: &[&[&str]]) -> Partition {
        let mut map = BTreeMap::new();
        for (label, group) in groups.iter().enumerate() {
            for id in *group {
                map.insert(TraderId::from(*id), label);
            }
        }
        Partition::new(map)
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard(&ids(&["a", "b"]), &ids(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&ids(&["a"]), &ids(&["b"])), 0.0);
        assert_eq!(jaccard(&ids(&["1", "2", "3"]), &ids(&["2", "3", "4"])), 0.5);
        assert_eq!(jaccard::<TraderId>(&BTreeSet::new(), &BTreeSet::new()), 0.0);
    }

    #[test]
    fn identical_partitions_all_persist() {
        let p = partition(&[&["a", "b"], &["c", "d", "e"]]);
        let flow = match_flows(&p, &p, 0.3, 0).unwrap();
        assert_eq!(flow.matches.len(), 2);
        assert!(flow.events_from.values().all(|e| *e == FlowEvent::Persist));
        assert!(flow.events_to.values().all(|e| *e == FlowEvent::Persist));
    }

    #[test]
    fn split_produces_two_half_matches() {
        let before = partition(&[&["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]]);
        let after = partition(&[
            &["1", "2", "3", "4", "5"],
            &["6", "7", "8", "9", "10"],
        ]);
        let flow = match_flows(&before, &after, 0.3, 0).unwrap();
        assert_eq!(flow.matches.len(), 2);
        for m in &flow.matches {
            assert!((m.jaccard - 0.5).abs() < 1e-12);
            assert_eq!(m.overlap, 5);
        }
        assert_eq!(flow.events_from[&0], FlowEvent::Split);
        assert_eq!(flow.events_to[&0], FlowEvent::Split);
        assert_eq!(flow.events_to[&1], FlowEvent::Split);
    }

    #[test]
    fn merge_collects_both_parents() {
        let before = partition(&[&["1", "2", "3"], &["4", "5", "6"]]);
        let after = partition(&[&["1", "2", "3", "4", "5", "6"]]);
        let flow = match_flows(&before, &after, 0.3, 0).unwrap();
        assert_eq!(flow.matches.len(), 2);
        assert_eq!(flow.events_to[&0], FlowEvent::Merge);
        assert_eq!(flow.events_from[&0], FlowEvent::Merge);
        assert_eq!(flow.events_from[&1], FlowEvent::Merge);
    }

    #[test]
    fn birth_and_death_tags() {
        let before = partition(&[&["1", "2", "3"], &["7", "8"]]);
        let after = partition(&[&["1", "2", "3"], &["x", "y", "z"]]);
        let flow = match_flows(&before, &after, 0.3, 0).unwrap();
        assert_eq!(flow.events_from[&0], FlowEvent::Persist);
        assert_eq!(flow.events_from[&1], FlowEvent::Death);
        assert_eq!(flow.events_to[&0], FlowEvent::Persist);
        assert_eq!(flow.events_to[&1], FlowEvent::Birth);
    }

    #[test]
    fn swapping_windows_exchanges_split_merge_and_birth_death() {
        let a = partition(&[&["1", "2", "3", "4"], &["9", "10"]]);
        let b = partition(&[&["1", "2"], &["3", "4"], &["x", "y"]]);
        let fwd = match_flows(&a, &b, 0.3, 0).unwrap();
        let bwd = match_flows(&b, &a, 0.3, 0).unwrap();
        let swap = |e: FlowEvent| match e {
            FlowEvent::Split => FlowEvent::Merge,
            FlowEvent::Merge => FlowEvent::Split,
            FlowEvent::Birth => FlowEvent::Death,
            FlowEvent::Death => FlowEvent::Birth,
            FlowEvent::Persist => FlowEvent::Persist,
        };
        for (cluster, event) in &fwd.events_from {
            assert_eq!(bwd.events_to[cluster], swap(*event));
        }
        for (cluster, event) in &fwd.events_to {
            assert_eq!(bwd.events_from[cluster], swap(*event));
        }
    }

    #[test]
    fn min_jaccard_domain() {
        let p = partition(&[&["a"]]);
        assert!(match_flows(&p, &p, 0.0, 0).is_err());
        assert!(match_flows(&p, &p, 1.1, 0).is_err());
    }

    #[test]
    fn ribbon_flow_into_a_cluster_is_bounded_by_its_size() {
        let before = partition(&[&["1", "2"], &["3", "4"], &["5", "6"]]);
        let after = partition(&[&["1", "2", "3", "4"], &["5", "6"]]);
        let flow = match_flows(&before, &after, 0.3, 0).unwrap();
        for j in 0..after.num_clusters() {
            let total: usize = flow.incoming(j).map(|m| m.overlap).sum();
            assert!(total <= after.cluster_sizes()[j]);
        }
    }

    #[test]
    fn labels_persist_and_splits_inherit_best_child() {
        let w0 = partition(&[&["1", "2", "3", "4", "5", "6"], &["a", "b"]]);
        let w1 = partition(&[
            &["1", "2", "3", "4"],
            &["5", "6"],
            &["a", "b"],
        ]);
        let tracked = track_labels(&[w0, w1], 0.2).unwrap();
        // Cluster {a,b} persists with its original label.
        assert_eq!(tracked.labels[1][&2], tracked.labels[0][&1]);
        // The larger split child inherits, the smaller gets a fresh label.
        assert_eq!(tracked.labels[1][&0], tracked.labels[0][&0]);
        assert!(tracked.labels[1][&1] >= 2);

        // Determinism.
        let again = track_labels(
            &[
                partition(&[&["1", "2", "3", "4", "5", "6"], &["a", "b"]]),
                partition(&[&["1", "2", "3", "4"], &["5", "6"], &["a", "b"]]),
            ],
            0.2,
        )
        .unwrap();
        assert_eq!(tracked, again);
    }

    #[test]
    fn alluvial_layout() {
        let w0 = partition(&[&["1", "2", "3"], &["4", "5"]]);
        let w1 = partition(&[&["1", "2", "3"], &["4", "5"]]);
        let tracked = track_labels(&[w0, w1], 0.3).unwrap();
        let json = export_alluvial(&tracked).unwrap();
        let ribbons = json["ribbons"].as_array().unwrap();
        assert_eq!(ribbons.len(), 2);
        let windows = json["windows"].as_array().unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0]["nodes"].as_array().unwrap().len(), 2);

        // Single window: nodes only.
        let solo = track_labels(&[partition(&[&["1", "2"]])], 0.3).unwrap();
        let json = export_alluvial(&solo).unwrap();
        assert!(json["ribbons"].as_array().unwrap().is_empty());
        assert_eq!(json["windows"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn non_consecutive_flows_are_rejected() {
        let w0 = partition(&[&["1", "2", "3"]]);
        let flow02 = match_flows(&w0, &w0, 0.3, 0).unwrap();
        let mut flow_late = match_flows(&w0, &w0, 0.3, 0).unwrap();
        flow_late.window_from = 2;
        flow_late.window_to = 3;
        let broken = TrackedFlows {
            labels: vec![BTreeMap::from([(0usize, 0u64)]); 4],
            flows: vec![flow02, flow_late],
            sizes: vec![vec![3]; 4],
            next_label: 1,
        };
        assert!(matches!(
            export_alluvial(&broken),
            Err(FlowError::NonConsecutive { prev: 1, next: 2 })
        ));
    }

    #[test]
    fn split_then_merge_fixture_ribbons() {
        let w0 = partition(&[&["1", "2", "3", "4"], &["x", "y"]]);
        let w1 = partition(&[&["1", "2"], &["3", "4"], &["x", "y"]]);
        let w2 = partition(&[&["1", "2", "3", "4"], &["x", "y"]]);
        let tracked = track_labels(&[w0, w1, w2], 0.2).unwrap();
        let json = export_alluvial(&tracked).unwrap();
        let ribbons = json["ribbons"].as_array().unwrap();
        // window 0 -> 1: split into two plus the persisting pair = 3 ribbons;
        // window 1 -> 2: merge of two plus the pair = 3 ribbons.
        assert_eq!(ribbons.len(), 6);
        let mut flows: Vec<u64> = ribbons
            .iter()
            .map(|r| r["flow"].as_u64().unwrap())
            .collect();
        flows.sort_unstable();
        assert_eq!(flows, vec![2, 2, 2, 2, 2, 2]);
    }
}
