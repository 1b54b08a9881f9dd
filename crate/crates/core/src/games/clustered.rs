use super::{aa_sleeping_step, GameError, LossKind, WeightState};
use crate::flow::FlowMap;
use std::collections::BTreeMap;

/// How the clusterised learner folds cluster structure into its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionRule {
    /// Cluster weight mass times the mean of its awake members' decisions.
    Mean,
    /// Each decision divided by its cluster's (awake) cardinality.
    Pen,
    /// PEN with the penalty normalised across clusters,
    /// `(1/n_i) / sum_k (1/n_k)`, the partially-awake-expert reading.
    PenNormalized,
}

impl DecisionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionRule::Mean => "mean",
            DecisionRule::Pen => "pen",
            DecisionRule::PenNormalized => "pen-normalized",
        }
    }
}

/// Expert-to-cluster assignment over a fixed expert indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    clusters: Vec<usize>,
    num_clusters: usize,
}

impl ClusterAssignment {
    pub fn new(clusters: Vec<usize>) -> Self {
        let num_clusters = clusters.iter().max().map_or(0, |m| m + 1);
        ClusterAssignment {
            clusters,
            num_clusters,
        }
    }

    pub fn singletons(n: usize) -> Self {
        ClusterAssignment {
            clusters: (0..n).collect(),
            num_clusters: n,
        }
    }

    pub fn cluster_of(&self, expert: usize) -> usize {
        self.clusters[expert]
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

struct ClusterStats {
    /// Normalised weight mass of each cluster's awake members.
    weight_mass: Vec<f64>,
    decision_sum: Vec<f64>,
    awake_count: Vec<usize>,
    /// Raw (unnormalised) total weight over awake experts.
    awake_weight: f64,
}

fn cluster_stats(
    clusters: &ClusterAssignment,
    state: &WeightState,
    decisions: &[Option<f64>],
) -> Result<ClusterStats, GameError> {
    if clusters.len() != decisions.len() {
        return Err(GameError::DecisionArity {
            got: decisions.len(),
            expected: clusters.len(),
        });
    }
    state.check_arity(decisions.len())?;
    let m = clusters.num_clusters();
    let awake_weight: f64 = state
        .weights
        .iter()
        .zip(decisions)
        .filter_map(|(w, d)| d.map(|_| *w))
        .sum();
    if !(awake_weight > 0.0) {
        return Err(GameError::NoLiveExpert);
    }
    let mut stats = ClusterStats {
        weight_mass: vec![0.0; m],
        decision_sum: vec![0.0; m],
        awake_count: vec![0; m],
        awake_weight,
    };
    for (expert, (w, d)) in state.weights.iter().zip(decisions).enumerate() {
        if let Some(gamma) = d {
            let c = clusters.cluster_of(expert);
            stats.weight_mass[c] += w / awake_weight;
            stats.decision_sum[c] += gamma;
            stats.awake_count[c] += 1;
        }
    }
    Ok(stats)
}

/// Clusterised prediction under the chosen decision rule. Cluster statistics
/// (weight mass, mean decision, cardinality) run over awake members only;
/// clusters left empty by sleep contribute nothing.
pub fn caa_prediction(
    rule: DecisionRule,
    clusters: &ClusterAssignment,
    state: &WeightState,
    decisions: &[Option<f64>],
) -> Result<f64, GameError> {
    let stats = cluster_stats(clusters, state, decisions)?;
    let m = clusters.num_clusters();
    let prediction = match rule {
        DecisionRule::Mean => (0..m)
            .map(|c| {
                if stats.awake_count[c] == 0 {
                    0.0
                } else {
                    stats.weight_mass[c] * stats.decision_sum[c] / stats.awake_count[c] as f64
                }
            })
            .sum(),
        DecisionRule::Pen | DecisionRule::PenNormalized => {
            let norm = if rule == DecisionRule::PenNormalized {
                (0..m)
                    .filter(|&c| stats.awake_count[c] > 0)
                    .map(|c| 1.0 / stats.awake_count[c] as f64)
                    .sum()
            } else {
                1.0
            };
            let mut acc = 0.0;
            for (expert, (w, d)) in state.weights.iter().zip(decisions).enumerate() {
                if let Some(gamma) = d {
                    let c = clusters.cluster_of(expert);
                    let p = w / stats.awake_weight;
                    acc += p * gamma / stats.awake_count[c] as f64 / norm;
                }
            }
            acc
        }
    };
    Ok(prediction)
}

/// One CAA step: clusterised prediction, then the usual sleeping-experts
/// weight update (awake experts charged their own loss, sleepers the
/// learner's).
pub fn caa_step(
    state: &mut WeightState,
    clusters: &ClusterAssignment,
    rule: DecisionRule,
    decisions: &[Option<f64>],
    outcome: f64,
    kind: LossKind,
) -> Result<f64, GameError> {
    if decisions.iter().all(|d| d.is_none()) {
        return Ok(0.0);
    }
    let prediction = caa_prediction(rule, clusters, state, decisions)?;
    let prediction = prediction.clamp(-1.0, 1.0);
    let learner_loss = super::loss(kind, state.rho, prediction, outcome);
    for (w, d) in state.weights.iter_mut().zip(decisions) {
        let l = match d {
            Some(gamma) => super::loss(kind, state.rho, *gamma, outcome),
            None => learner_loss,
        };
        *w *= (-state.eta * l).exp();
    }
    state.guard_underflow();
    Ok(prediction)
}

/// Mean decision of each cluster's awake members; a cluster sleeps when all
/// its members do.
pub fn cluster_mean_decisions(
    clusters: &ClusterAssignment,
    decisions: &[Option<f64>],
) -> Vec<Option<f64>> {
    let m = clusters.num_clusters();
    let mut sum = vec![0.0f64; m];
    let mut count = vec![0usize; m];
    for (expert, d) in decisions.iter().enumerate() {
        if let Some(gamma) = d {
            let c = clusters.cluster_of(expert);
            sum[c] += gamma;
            count[c] += 1;
        }
    }
    (0..m)
        .map(|c| (count[c] > 0).then(|| sum[c] / count[c] as f64))
        .collect()
}

/// Flows cluster weights through one window transition.
///
/// Weight travels along each retained match, split equally over a parent's
/// outgoing matches; a cluster's new weight is the sum of its incoming
/// flows. Unmatched new clusters are born with `birth_weight`; unmatched old
/// clusters die and their weight lapses.
pub fn ecaa_evolve(
    weights: &BTreeMap<usize, f64>,
    flow: &FlowMap,
    birth_weight: f64,
) -> Result<BTreeMap<usize, f64>, GameError> {
    for m in &flow.matches {
        if !weights.contains_key(&m.from) {
            return Err(GameError::Invalid(format!(
                "flow references source cluster {} with no weight entry",
                m.from
            )));
        }
    }
    let mut out_deg: BTreeMap<usize, usize> = BTreeMap::new();
    for m in &flow.matches {
        *out_deg.entry(m.from).or_insert(0) += 1;
    }
    let mut next: BTreeMap<usize, f64> = BTreeMap::new();
    for to in 0..flow.sizes_to.len() {
        next.insert(to, 0.0);
    }
    for m in &flow.matches {
        let share = weights[&m.from] / out_deg[&m.from] as f64;
        *next.get_mut(&m.to).expect("initialised") += share;
    }
    for (to, w) in next.iter_mut() {
        let born = !flow.matches.iter().any(|m| m.to == *to);
        if born {
            *w = birth_weight;
        }
    }
    Ok(next)
}

/// One step of the cluster-meta-expert learner: the clusters themselves play
/// the role of experts (decision = mean of awake members, awake when any
/// member is), run through the sleeping-experts update.
pub fn ecaa_step(
    weights: &mut BTreeMap<usize, f64>,
    eta: f64,
    rho: f64,
    cluster_decisions: &BTreeMap<usize, Option<f64>>,
    outcome: f64,
    kind: LossKind,
) -> Result<f64, GameError> {
    let keys: Vec<usize> = weights.keys().copied().collect();
    let w: Vec<f64> = keys.iter().map(|k| weights[k]).collect();
    let d: Vec<Option<f64>> = keys
        .iter()
        .map(|k| cluster_decisions.get(k).copied().flatten())
        .collect();
    let mut state = WeightState::with_weights(w, eta, rho);
    let prediction = aa_sleeping_step(&mut state, &d, outcome, kind)?;
    for (k, w) in keys.iter().zip(state.weights) {
        weights.insert(*k, w);
    }
    Ok(prediction)
}
