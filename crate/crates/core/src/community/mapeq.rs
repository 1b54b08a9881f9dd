use super::{CommunityError, Partition};
use crate::svn::ValidatedNetwork;
use crate::trade::TraderId;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Undirected weighted graph in index space. Self-loops carry the full loop
/// weight and count twice in the degree.
#[derive(Debug, Clone)]
struct IndexedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    total_weight: f64,
}

impl IndexedGraph {
    fn len(&self) -> usize {
        self.adj.len()
    }

    fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        let mut self_loops = vec![0.0; n];
        let mut total_weight = 0.0;
        let mut pair_weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, w) in edges {
            total_weight += w;
            if a == b {
                self_loops[a] += w;
            } else {
                let key = (a.min(b), a.max(b));
                *pair_weights.entry(key).or_insert(0.0) += w;
            }
        }
        for ((a, b), w) in pair_weights {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for row in &mut adj {
            row.sort_by(|x, y| x.0.cmp(&y.0));
        }
        let degree = (0..n)
            .map(|v| 2.0 * self_loops[v] + adj[v].iter().map(|(_, w)| w).sum::<f64>())
            .collect();
        IndexedGraph {
            adj,
            self_loops,
            degree,
            total_weight,
        }
    }

    /// Collapses modules into super-nodes; intra-module weight becomes a
    /// self-loop. Returns the graph and the module ids in super-node order.
    fn aggregate(&self, labels: &[usize]) -> (IndexedGraph, Vec<usize>) {
        let mut module_ids: Vec<usize> = labels.to_vec();
        module_ids.sort_unstable();
        module_ids.dedup();
        let index_of: BTreeMap<usize, usize> =
            module_ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();

        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        for v in 0..self.len() {
            let sv = index_of[&labels[v]];
            if self.self_loops[v] > 0.0 {
                edges.push((sv, sv, self.self_loops[v]));
            }
            for &(u, w) in &self.adj[v] {
                if u > v {
                    let su = index_of[&labels[u]];
                    edges.push((sv.min(su), sv.max(su), w));
                }
            }
        }
        (IndexedGraph::from_edges(module_ids.len(), &edges), module_ids)
    }
}

/// Two-level map-equation codelength (bits per step) of a labelling.
fn codelength(graph: &IndexedGraph, labels: &[usize]) -> f64 {
    let w2 = 2.0 * graph.total_weight;
    if w2 == 0.0 {
        return 0.0;
    }
    let num_modules = labels.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0f64; num_modules];
    let mut psum = vec![0.0f64; num_modules];
    for v in 0..graph.len() {
        psum[labels[v]] += graph.degree[v] / w2;
        for &(u, w) in &graph.adj[v] {
            if u > v && labels[u] != labels[v] {
                cut[labels[v]] += w;
                cut[labels[u]] += w;
            }
        }
    }
    let q_total: f64 = cut.iter().map(|c| c / w2).sum();
    let mut len = plogp(q_total);
    for m in 0..num_modules {
        let q = cut[m] / w2;
        len -= 2.0 * plogp(q);
        len += plogp(q + psum[m]);
    }
    for v in 0..graph.len() {
        len -= plogp(graph.degree[v] / w2);
    }
    len
}

/// One sweep of single-node moves in shuffled order. Returns whether any
/// move improved the codelength.
fn local_move_pass(
    graph: &IndexedGraph,
    labels: &mut Vec<usize>,
    cut: &mut Vec<f64>,
    psum: &mut Vec<f64>,
    order: &[usize],
) -> bool {
    const EPS: f64 = 1e-10;
    let w2 = 2.0 * graph.total_weight;
    let mut improved = false;

    const FRESH: usize = usize::MAX;

    for &v in order {
        let a = labels[v];
        let p_v = graph.degree[v] / w2;
        let ext_v: f64 = graph.adj[v].iter().map(|(_, w)| w).sum();
        if ext_v == 0.0 {
            continue;
        }
        // Weight from v into each adjacent module.
        let mut module_w: BTreeMap<usize, f64> = BTreeMap::new();
        for &(u, w) in &graph.adj[v] {
            *module_w.entry(labels[u]).or_insert(0.0) += w;
        }
        let w_va = module_w.get(&a).copied().unwrap_or(0.0);

        let q_total: f64 = cut.iter().sum::<f64>() / w2;
        let cut_a_old = cut[a];
        let qa = cut_a_old / w2;
        let pa = psum[a];
        // Terms of the current labelling touched by any move of v.
        let base_a = -2.0 * plogp(qa) + plogp(qa + pa);

        let new_cut_a = cut_a_old - ext_v + 2.0 * w_va;
        let qa_new = new_cut_a / w2;
        let pa_new = pa - p_v;

        let mut best: Option<(f64, usize, f64)> = None; // (delta, module, w_vb)
        let mut consider = |b: usize, w_vb: f64, cut_b: f64, psum_b: f64| {
            let new_cut_b = cut_b + ext_v - 2.0 * w_vb;
            let qb = cut_b / w2;
            let qb_new = new_cut_b / w2;
            let q_total_new = q_total + (new_cut_a - cut_a_old + new_cut_b - cut_b) / w2;
            let delta = plogp(q_total_new) - plogp(q_total)
                - 2.0 * (plogp(qa_new) + plogp(qb_new))
                + plogp(qa_new + pa_new)
                + plogp(qb_new + psum_b + p_v)
                - (base_a - 2.0 * plogp(qb) + plogp(qb + psum_b));
            if delta < -EPS {
                let better = match best {
                    None => true,
                    Some((bd, bb, _)) => delta < bd - EPS || (delta <= bd + EPS && b < bb),
                };
                if better {
                    best = Some((delta, b, w_vb));
                }
            }
        };

        for (&b, &w_vb) in &module_w {
            if b != a {
                consider(b, w_vb, cut[b], psum[b]);
            }
        }
        // Detaching into a fresh module can also improve the codelength.
        if pa_new > 0.0 {
            consider(FRESH, 0.0, 0.0, 0.0);
        }

        if let Some((_, b, w_vb)) = best {
            let b = if b == FRESH {
                cut.push(0.0);
                psum.push(0.0);
                cut.len() - 1
            } else {
                b
            };
            cut[a] = new_cut_a;
            psum[a] = pa_new;
            cut[b] += ext_v - 2.0 * w_vb;
            psum[b] += p_v;
            labels[v] = b;
            improved = true;
        }
    }
    improved
}

fn optimise(graph: &IndexedGraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = graph.len();
    let mut flat: Vec<usize> = (0..n).collect();
    loop {
        let (g, _) = {
            let normalised = normalise_labels(&flat);
            let g_and_ids = graphify(graph, &normalised);
            flat = normalised;
            g_and_ids
        };
        let mut labels: Vec<usize> = (0..g.len()).collect();
        let w2 = 2.0 * g.total_weight;
        if w2 == 0.0 {
            break;
        }
        let mut cut: Vec<f64> = (0..g.len())
            .map(|v| g.adj[v].iter().map(|(_, w)| w).sum())
            .collect();
        let mut psum: Vec<f64> = (0..g.len()).map(|v| g.degree[v] / w2).collect();

        let mut order: Vec<usize> = (0..g.len()).collect();
        let mut improved_any = false;
        loop {
            order.shuffle(rng);
            if !local_move_pass(&g, &mut labels, &mut cut, &mut psum, &order) {
                break;
            }
            improved_any = true;
        }
        if !improved_any {
            break;
        }
        for f in &mut flat {
            *f = labels[*f];
        }
    }
    normalise_labels(&flat)
}

fn normalise_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn graphify(graph: &IndexedGraph, flat: &[usize]) -> (IndexedGraph, Vec<usize>) {
    graph.aggregate(flat)
}

fn indexed(network: &ValidatedNetwork) -> (IndexedGraph, Vec<&TraderId>) {
    let nodes: Vec<&TraderId> = network.nodes().iter().collect();
    let index: BTreeMap<&TraderId, usize> =
        nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let edges: Vec<(usize, usize, f64)> = network
        .edges()
        .iter()
        .map(|e| (index[&e.a], index[&e.b], 1.0))
        .collect();
    (IndexedGraph::from_edges(nodes.len(), &edges), nodes)
}

fn partition_labels(
    network: &ValidatedNetwork,
    nodes: &[&TraderId],
    partition: &Partition,
) -> Result<Vec<usize>, CommunityError> {
    let _ = network;
    nodes
        .iter()
        .map(|id| {
            partition
                .label_of(id)
                .ok_or_else(|| CommunityError::UncoveredNode((*id).clone()))
        })
        .collect()
}

/// Map-equation codelength, in bits, of a partition of the network under the
/// degree-proportional random walk with uniform link weights.
pub fn map_equation_codelength(
    network: &ValidatedNetwork,
    partition: &Partition,
) -> Result<f64, CommunityError> {
    let (graph, nodes) = indexed(network);
    let labels = partition_labels(network, &nodes, partition)?;
    Ok(codelength(&graph, &labels))
}

/// Greedy agglomerative minimisation of the map equation: repeated sweeps of
/// single-node moves followed by module aggregation, until no sweep improves
/// the codelength. Deterministic for a fixed seed; equal-gain moves resolve
/// to the smallest module id.
pub fn infomap_partition(
    network: &ValidatedNetwork,
    seed: u64,
) -> Result<Partition, CommunityError> {
    if network.is_empty() {
        return Err(CommunityError::EmptyNetwork);
    }
    let (graph, nodes) = indexed(network);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = optimise(&graph, &mut rng);
    let assignment: BTreeMap<TraderId, usize> = nodes
        .iter()
        .zip(&labels)
        .map(|(id, &l)| ((*id).clone(), l))
        .collect();
    Ok(Partition::new(assignment))
}

/// Newman modularity `Q = sum_c [e_c/m - (d_c/2m)^2]` of a partition.
pub fn modularity(network: &ValidatedNetwork, partition: &Partition) -> Result<f64, CommunityError> {
    if network.num_edges() == 0 {
        return Err(CommunityError::NoEdges);
    }
    let (graph, nodes) = indexed(network);
    let labels = partition_labels(network, &nodes, partition)?;
    let num_modules = labels.iter().max().map_or(0, |m| m + 1);
    let m = graph.total_weight;
    let mut intra = vec![0.0f64; num_modules];
    let mut deg = vec![0.0f64; num_modules];
    for v in 0..graph.len() {
        deg[labels[v]] += graph.degree[v];
        intra[labels[v]] += graph.self_loops[v];
        for &(u, w) in &graph.adj[v] {
            if u > v && labels[u] == labels[v] {
                intra[labels[v]] += w;
            }
        }
    }
    Ok((0..num_modules)
        .map(|c| intra[c] / m - (deg[c] / (2.0 * m)).powi(2))
        .sum())
}
