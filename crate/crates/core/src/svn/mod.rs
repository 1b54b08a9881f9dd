//! Statistically validated co-trading network.
//!
//! Pairs of traders are tested for synchronised buying and synchronised
//! selling with the hypergeometric law; links surviving a Bonferroni-corrected
//! threshold form the validated network.

mod hypergeom;

pub use hypergeom::hypergeom_pvalue;

use crate::states::{StateSeries, StateSymbol};
use crate::trade::TraderId;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvnError {
    #[error("co-occurrence counts violate 0 <= n_pq <= min(n_p, n_q) <= n: n={n}, n_p={n_p}, n_q={n_q}, n_pq={n_pq}")]
    BadCounts { n: u64, n_p: u64, n_q: u64, n_pq: u64 },
    #[error("state series are misaligned: {0}")]
    Misaligned(String),
    #[error("significance level must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("duplicate trader id in input series: {0}")]
    DuplicateTrader(TraderId),
}

/// Joint occurrence counts of a state pair over two aligned series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    /// Series length (number of aligned slices, including jointly inactive ones).
    pub n: u64,
    /// Slices where trader A is in state `p`.
    pub n_p: u64,
    /// Slices where trader B is in state `q`.
    pub n_q: u64,
    /// Slices where both hold simultaneously.
    pub n_pq: u64,
}

impl CooccurrenceCounts {
    pub fn new(n: u64, n_p: u64, n_q: u64, n_pq: u64) -> Result<Self, SvnError> {
        let c = CooccurrenceCounts { n, n_p, n_q, n_pq };
        c.check()?;
        Ok(c)
    }

    pub(crate) fn check(&self) -> Result<(), SvnError> {
        let ok = self.n_pq <= self.n_p.min(self.n_q) && self.n_p.max(self.n_q) <= self.n;
        if ok {
            Ok(())
        } else {
            Err(SvnError::BadCounts {
                n: self.n,
                n_p: self.n_p,
                n_q: self.n_q,
                n_pq: self.n_pq,
            })
        }
    }
}

/// Counts occurrences of `p` in `a`, `q` in `b` and their joint slices.
pub fn cooccurrence_counts(
    a: &StateSeries,
    b: &StateSeries,
    p: StateSymbol,
    q: StateSymbol,
) -> Result<CooccurrenceCounts, SvnError> {
    if a.len() != b.len() {
        return Err(SvnError::Misaligned(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut n_p = 0u64;
    let mut n_q = 0u64;
    let mut n_pq = 0u64;
    for (x, y) in a.states.iter().zip(&b.states) {
        let hit_p = *x == p;
        let hit_q = *y == q;
        n_p += hit_p as u64;
        n_q += hit_q as u64;
        n_pq += (hit_p && hit_q) as u64;
    }
    Ok(CooccurrenceCounts {
        n: a.len() as u64,
        n_p,
        n_q,
        n_pq,
    })
}

/// Kind of a validated link. Only same-action pairs are ever tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    BuyBuy,
    SellSell,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::BuyBuy => "buy-buy",
            LinkKind::SellSell => "sell-sell",
        }
    }

    pub fn parse(s: &str) -> Option<LinkKind> {
        match s {
            "buy-buy" => Some(LinkKind::BuyBuy),
            "sell-sell" => Some(LinkKind::SellSell),
            _ => None,
        }
    }

    fn symbol(self) -> StateSymbol {
        match self {
            LinkKind::BuyBuy => StateSymbol::Buying,
            LinkKind::SellSell => StateSymbol::Selling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedEdge {
    pub a: TraderId,
    pub b: TraderId,
    pub kind: LinkKind,
    pub p_value: f64,
}

/// Test-family bookkeeping emitted alongside the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvnMetadata {
    pub alpha: f64,
    /// Bonferroni denominator: 2 * C(N, 2) over the input series.
    pub num_tests: u64,
    pub corrected_threshold: f64,
    pub series_len: usize,
    pub num_series: usize,
}

/// Undirected network of traders with Bonferroni-validated links. Traders
/// without any validated link are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedNetwork {
    nodes: Vec<TraderId>,
    edges: Vec<ValidatedEdge>,
    pub meta: SvnMetadata,
}

impl ValidatedNetwork {
    /// Nodes sorted by id; every node has degree >= 1.
    pub fn nodes(&self) -> &[TraderId] {
        &self.nodes
    }

    /// Edges sorted by `(a, b, kind)` with `a < b`.
    pub fn edges(&self) -> &[ValidatedEdge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn from_parts(edges: Vec<ValidatedEdge>, meta: SvnMetadata) -> Self {
        let mut edges = edges;
        edges.sort_by(|x, y| (&x.a, &x.b, x.kind).cmp(&(&y.a, &y.b, y.kind)));
        let mut nodes: Vec<TraderId> = edges
            .iter()
            .flat_map(|e| [e.a.clone(), e.b.clone()])
            .collect();
        nodes.sort();
        nodes.dedup();
        ValidatedNetwork { nodes, edges, meta }
    }
}

/// Builds the validated network from aligned state series.
///
/// For each unordered trader pair the buy-buy and sell-sell co-occurrences
/// are tested, so the Bonferroni family size is `2 * C(N, 2)`. A link is
/// validated when its p-value is strictly below `alpha / num_tests`.
pub fn build_svn(series: &[StateSeries], alpha: f64) -> Result<ValidatedNetwork, SvnError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SvnError::BadAlpha(alpha));
    }
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.sort_by(|&i, &j| series[i].trader.cmp(&series[j].trader));
    for w in order.windows(2) {
        if series[w[0]].trader == series[w[1]].trader {
            return Err(SvnError::DuplicateTrader(series[w[0]].trader.clone()));
        }
    }
    let len = series.first().map_or(0, |s| s.len());
    for s in series {
        if s.len() != len {
            return Err(SvnError::Misaligned(format!(
                "series for {} has length {}, expected {}",
                s.trader,
                s.len(),
                len
            )));
        }
    }

    let n = series.len() as u64;
    let num_tests = n.saturating_sub(1) * n; // 2 * C(N, 2)
    let meta = SvnMetadata {
        alpha,
        num_tests,
        corrected_threshold: if num_tests > 0 { alpha / num_tests as f64 } else { 0.0 },
        series_len: len,
        num_series: series.len(),
    };
    if series.len() < 2 {
        return Ok(ValidatedNetwork::from_parts(Vec::new(), meta));
    }
    let threshold = meta.corrected_threshold;

    let pairs: Vec<(usize, usize)> = (0..order.len())
        .flat_map(|i| ((i + 1)..order.len()).map(move |j| (i, j)))
        .collect();
    let edges: Vec<ValidatedEdge> = pairs
        .par_iter()
        .flat_map_iter(|&(oi, oj)| {
            let sa = &series[order[oi]];
            let sb = &series[order[oj]];
            [LinkKind::BuyBuy, LinkKind::SellSell]
                .into_iter()
                .filter_map(move |kind| {
                    let sym = kind.symbol();
                    let counts = cooccurrence_counts(sa, sb, sym, sym).expect("aligned");
                    let p = hypergeom_pvalue(&counts).expect("counts valid by construction");
                    (p < threshold).then(|| ValidatedEdge {
                        a: sa.trader.clone(),
                        b: sb.trader.clone(),
                        kind,
                        p_value: p,
                    })
                })
        })
        .collect();

    Ok(ValidatedNetwork::from_parts(edges, meta))
}
