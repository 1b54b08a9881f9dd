//! File-based pipeline stages. Each stage reads the previous stage's
//! artifacts from the configured output directory, writes its own, and the
//! whole run is reproducible byte for byte from `(config, seeds)`.

use crate::backtest::{
    risk_report, run_backtest, BacktestParams, ClusterSource, Strategy, WindowSpan,
};
use crate::community::{
    correlation_distance_matrix, hierarchical_partition, infomap_partition,
    map_equation_codelength, modularity, Partition,
};
use crate::config::{ClusteringMethod, RunConfig};
use crate::ewens::{chi_square_gof, estimate_theta, EwensError, PartitionVector};
use crate::flow::{export_alluvial, track_labels, FlowEvent};
use crate::states::{SliceGrid, StateSeries, StateSymbol};
use crate::svn::{build_svn, ValidatedNetwork};
use crate::trade::{
    filter_active, generate_synthetic_market, parse_trades, resample_positions, write_positions,
    write_trades, EpochGrid, MarketConfig, PositionSeries, TradeTable, TraderId,
};
use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("stage `{stage}` requires `{path}`; run `{producer}` first")]
    MissingInput {
        stage: Stage,
        path: PathBuf,
        producer: Stage,
    },
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("trade data: {0}")]
    Trade(#[from] crate::trade::TradeError),
    #[error("states: {0}")]
    States(#[from] crate::states::StatesError),
    #[error("svn: {0}")]
    Svn(#[from] crate::svn::SvnError),
    #[error("community: {0}")]
    Community(#[from] crate::community::CommunityError),
    #[error("ewens: {0}")]
    Ewens(#[from] crate::ewens::EwensError),
    #[error("flow: {0}")]
    Flow(#[from] crate::flow::FlowError),
    #[error("backtest: {0}")]
    Backtest(#[from] crate::backtest::BacktestError),
}

impl PipelineError {
    /// CLI exit code: 1 for usage/config errors, 2 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    States,
    Svn,
    Cluster,
    EwensFit,
    Track,
    Backtest,
    Report,
}

impl Stage {
    pub fn all() -> [Stage; 8] {
        [
            Stage::Simulate,
            Stage::States,
            Stage::Svn,
            Stage::Cluster,
            Stage::EwensFit,
            Stage::Track,
            Stage::Backtest,
            Stage::Report,
        ]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::States => "states",
            Stage::Svn => "svn",
            Stage::Cluster => "cluster",
            Stage::EwensFit => "ewens-fit",
            Stage::Track => "track",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::all().into_iter().find(|st| st.as_str() == s)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub infomap_seed: u64,
    pub returns_seed: u64,
    pub stages: Vec<String>,
    pub artifacts: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Paths of every artifact, derived from the configured output directory.
pub struct Artifacts<'a> {
    out: &'a Path,
}

impl<'a> Artifacts<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Artifacts {
            out: &config.out_dir,
        }
    }

    pub fn trades(&self) -> PathBuf {
        self.out.join("trades.csv")
    }

    pub fn positions(&self) -> PathBuf {
        self.out.join("positions.csv")
    }

    pub fn states(&self, delta: i64) -> PathBuf {
        self.out.join(format!("states_d{delta}m.csv"))
    }

    pub fn svn_edges(&self, delta: i64) -> PathBuf {
        self.out.join(format!("svn_d{delta}m.csv"))
    }

    pub fn svn_meta(&self, delta: i64) -> PathBuf {
        self.out.join(format!("svn_d{delta}m_meta.json"))
    }

    pub fn clusters(&self, delta: i64) -> PathBuf {
        self.out.join(format!("clusters_d{delta}m.csv"))
    }

    pub fn cluster_stats(&self, delta: i64) -> PathBuf {
        self.out.join(format!("cluster_stats_d{delta}m.csv"))
    }

    pub fn ewens_fit(&self, delta: i64) -> PathBuf {
        self.out.join(format!("ewens_fit_d{delta}m.csv"))
    }

    pub fn flow_events(&self, delta: i64) -> PathBuf {
        self.out.join(format!("flow_events_d{delta}m.csv"))
    }

    pub fn alluvial(&self, delta: i64) -> PathBuf {
        self.out.join(format!("alluvial_d{delta}m.json"))
    }

    pub fn returns(&self) -> PathBuf {
        self.out.join("returns.csv")
    }

    pub fn equity(&self, strategy: Strategy, rho: f64) -> PathBuf {
        self.out
            .join(format!("equity_{}_rho{rho}.csv", strategy.as_str()))
    }

    pub fn run_log(&self, strategy: Strategy, rho: f64) -> PathBuf {
        self.out
            .join(format!("run_log_{}_rho{rho}.csv", strategy.as_str()))
    }

    pub fn report(&self) -> PathBuf {
        self.out.join("report.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.to_owned(),
            source,
        })?;
    }
    let mut f = fs::File::create(path).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_file(stage: Stage, producer: Stage, path: &Path) -> Result<String, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingInput {
            stage,
            path: path.to_owned(),
            producer,
        });
    }
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })
}

fn market_config(config: &RunConfig) -> MarketConfig {
    MarketConfig {
        traders: config.traders,
        groups: config.groups,
        group_size: config.group_size,
        p_sync: config.p_sync,
        signal_rate: config.signal_rate,
        noise_rate: config.noise_rate,
        hold_slices_max: config.hold_slices_max,
        lot_sigma: config.lot_sigma,
        start: config.start,
        horizon_days: config.horizon_days,
        slice_minutes: config.gen_slice_minutes,
        symbol: config.symbol.clone(),
        calendar: Some(config.calendar()),
    }
}

fn slice_grid(config: &RunConfig, delta: i64) -> Result<SliceGrid, PipelineError> {
    Ok(SliceGrid::new(
        (config.start, config.end()),
        Duration::minutes(delta),
        Some(config.calendar()),
    )?)
}

fn position_grid(config: &RunConfig) -> Result<EpochGrid, PipelineError> {
    Ok(EpochGrid::new(
        config.start,
        config.end(),
        Duration::minutes(config.position_step_minutes),
        Some(config.calendar()),
    )?)
}

fn window_spans(config: &RunConfig) -> Result<Vec<WindowSpan>, PipelineError> {
    Ok(crate::backtest::sliding_windows(
        (config.start, config.end()),
        Duration::days(config.window_days),
        Duration::days(config.step_days),
    )?)
}

fn load_trades(stage: Stage, config: &RunConfig) -> Result<TradeTable, PipelineError> {
    let artifacts = Artifacts::new(config);
    let path = config.trades_path.clone().unwrap_or_else(|| artifacts.trades());
    let text = read_file(stage, Stage::Simulate, &path)?;
    Ok(parse_trades(text.as_bytes())?.with_symbol(&config.symbol))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn run_simulate(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let table = generate_synthetic_market(&market_config(config), config.seed)?;
    let mut buf = Vec::new();
    write_trades(&table, &mut buf)?;
    let path = Artifacts::new(config).trades();
    write_file(&path, &buf)?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// states
// ---------------------------------------------------------------------------

fn states_csv(grid: &SliceGrid, series: &[StateSeries]) -> String {
    let mut out = String::from("slice_start,trader_id,state\n");
    for s in series {
        for (start, state) in grid.starts().iter().zip(&s.states) {
            if *state != StateSymbol::Inactive {
                out.push_str(&format!(
                    "{},{},{}\n",
                    start.to_rfc3339_opts(SecondsFormat::Secs, true),
                    s.trader.as_str(),
                    state.letter()
                ));
            }
        }
    }
    out
}

fn run_states(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let table = load_trades(Stage::States, config)?;
    let artifacts = Artifacts::new(config);
    let mut written = Vec::new();

    let traders: Vec<TraderId> = table.trader_ids().into_iter().collect();
    for &delta in &config.deltas_minutes {
        let grid = slice_grid(config, delta)?;
        let series = crate::states::state_series_all(&table, &traders, &grid, config.state_threshold)?;
        let path = artifacts.states(delta);
        write_file(&path, states_csv(&grid, &series).as_bytes())?;
        written.push(path);
    }

    let grid = position_grid(config)?;
    let positions = resample_positions(&table, &grid);
    let mut buf = Vec::new();
    write_positions(&positions, &grid, &mut buf)?;
    let path = artifacts.positions();
    write_file(&path, &buf)?;
    written.push(path);
    Ok(written)
}

/// Reads the sparse state CSV back into dense aligned series for the given
/// traders (sorted).
fn load_states(
    stage: Stage,
    config: &RunConfig,
    delta: i64,
) -> Result<(SliceGrid, Vec<StateSeries>), PipelineError> {
    let path = Artifacts::new(config).states(delta);
    let text = read_file(stage, Stage::States, &path)?;
    let grid = slice_grid(config, delta)?;
    let index: BTreeMap<DateTime<Utc>, usize> = grid
        .starts()
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, i))
        .collect();

    let mut per_trader: BTreeMap<TraderId, Vec<StateSymbol>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(ts), Some(id), Some(state)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: expected 3 fields", lineno + 1),
            });
        };
        let ts: DateTime<Utc> = ts.parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad timestamp: {e}", lineno + 1),
        })?;
        let Some(&slice) = index.get(&ts) else {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: slice {ts} not on the grid", lineno + 1),
            });
        };
        let symbol = state
            .chars()
            .next()
            .and_then(StateSymbol::from_letter)
            .ok_or_else(|| PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: unknown state `{state}`", lineno + 1),
            })?;
        per_trader
            .entry(TraderId::from(id))
            .or_insert_with(|| vec![StateSymbol::Inactive; grid.len()])[slice] = symbol;
    }

    let series = per_trader
        .into_iter()
        .map(|(trader, states)| StateSeries {
            trader,
            delta: grid.delta(),
            threshold: config.state_threshold,
            states,
        })
        .collect();
    Ok((grid, series))
}

// ---------------------------------------------------------------------------
// svn
// ---------------------------------------------------------------------------

struct WindowNetwork {
    window: usize,
    span: WindowSpan,
    network: ValidatedNetwork,
    active: usize,
}

fn build_window_networks(
    config: &RunConfig,
    table: &TradeTable,
    grid: &SliceGrid,
    series: &[StateSeries],
) -> Result<Vec<WindowNetwork>, PipelineError> {
    let windows = window_spans(config)?;
    let nets: Vec<Result<WindowNetwork, PipelineError>> = windows
        .par_iter()
        .enumerate()
        .map(|(w, span)| {
            let active = filter_active(table, span.in_sample, config.cutoff);
            let (lo, hi) = {
                let starts = grid.starts();
                let lo = starts.partition_point(|t| *t < span.in_sample.0);
                let hi = starts.partition_point(|t| *t < span.in_sample.1);
                (lo, hi)
            };
            let window_series: Vec<StateSeries> = series
                .iter()
                .filter(|s| active.contains(&s.trader))
                .map(|s| StateSeries {
                    trader: s.trader.clone(),
                    delta: s.delta,
                    threshold: s.threshold,
                    states: s.states[lo..hi].to_vec(),
                })
                .collect();
            let network = build_svn(&window_series, config.alpha)?;
            Ok(WindowNetwork {
                window: w,
                span: *span,
                network,
                active: active.len(),
            })
        })
        .collect();
    nets.into_iter().collect()
}

fn run_svn(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let table = load_trades(Stage::Svn, config)?;
    let artifacts = Artifacts::new(config);
    let mut written = Vec::new();
    for &delta in &config.deltas_minutes {
        let (grid, series) = load_states(Stage::Svn, config, delta)?;
        let nets = build_window_networks(config, &table, &grid, &series)?;

        let mut csv = String::from("window_index,trader_a,trader_b,kind,p_value\n");
        let mut meta = Vec::new();
        for wn in &nets {
            for e in wn.network.edges() {
                csv.push_str(&format!(
                    "{},{},{},{},{:e}\n",
                    wn.window,
                    e.a.as_str(),
                    e.b.as_str(),
                    e.kind.as_str(),
                    e.p_value
                ));
            }
            meta.push(serde_json::json!({
                "window_index": wn.window,
                "window_start": wn.span.in_sample.0.to_rfc3339_opts(SecondsFormat::Secs, true),
                "window_end": wn.span.in_sample.1.to_rfc3339_opts(SecondsFormat::Secs, true),
                "delta_minutes": delta,
                "alpha": wn.network.meta.alpha,
                "num_tests": wn.network.meta.num_tests,
                "corrected_threshold": wn.network.meta.corrected_threshold,
                "series_len": wn.network.meta.series_len,
                "active_traders": wn.active,
                "nodes": wn.network.num_nodes(),
                "edges": wn.network.num_edges(),
            }));
        }
        let edges_path = artifacts.svn_edges(delta);
        write_file(&edges_path, csv.as_bytes())?;
        let meta_path = artifacts.svn_meta(delta);
        write_file(
            &meta_path,
            (serde_json::to_string_pretty(&meta).expect("json") + "\n").as_bytes(),
        )?;
        written.push(edges_path);
        written.push(meta_path);
    }
    Ok(written)
}

type EdgeRecord = (TraderId, TraderId, crate::svn::LinkKind, f64);

/// Reads per-window validated networks back from the edge-list artifact.
fn load_networks(
    stage: Stage,
    config: &RunConfig,
    delta: i64,
) -> Result<BTreeMap<usize, Vec<EdgeRecord>>, PipelineError> {
    let path = Artifacts::new(config).svn_edges(delta);
    let text = read_file(stage, Stage::Svn, &path)?;
    let mut by_window: BTreeMap<usize, Vec<EdgeRecord>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: expected 5 fields", lineno + 1),
            });
        }
        let window: usize = parts[0].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad window index: {e}", lineno + 1),
        })?;
        let kind = crate::svn::LinkKind::parse(parts[3]).ok_or_else(|| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: unknown link kind `{}`", lineno + 1, parts[3]),
        })?;
        let p: f64 = parts[4].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad p-value: {e}", lineno + 1),
        })?;
        by_window.entry(window).or_default().push((
            TraderId::from(parts[1]),
            TraderId::from(parts[2]),
            kind,
            p,
        ));
    }
    Ok(by_window)
}

fn network_from_edges(edges: &[EdgeRecord]) -> ValidatedNetwork {
    let edges: Vec<crate::svn::ValidatedEdge> = edges
        .iter()
        .map(|(a, b, kind, p)| crate::svn::ValidatedEdge {
            a: a.clone(),
            b: b.clone(),
            kind: *kind,
            p_value: *p,
        })
        .collect();
    ValidatedNetwork::from_parts(
        edges,
        crate::svn::SvnMetadata {
            alpha: 0.0,
            num_tests: 0,
            corrected_threshold: 0.0,
            series_len: 0,
            num_series: 0,
        },
    )
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

fn load_positions(
    stage: Stage,
    config: &RunConfig,
) -> Result<(EpochGrid, Vec<PositionSeries>), PipelineError> {
    let path = Artifacts::new(config).positions();
    let text = read_file(stage, Stage::States, &path)?;
    let grid = position_grid(config)?;
    let index: BTreeMap<DateTime<Utc>, usize> = grid
        .epochs()
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, i))
        .collect();
    let mut per_trader: BTreeMap<TraderId, Vec<f64>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: expected 3 fields", lineno + 1),
            });
        }
        let ts: DateTime<Utc> = parts[0].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad epoch: {e}", lineno + 1),
        })?;
        let Some(&i) = index.get(&ts) else {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: epoch {ts} not on the grid", lineno + 1),
            });
        };
        let value: f64 = parts[2].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad position: {e}", lineno + 1),
        })?;
        per_trader
            .entry(TraderId::from(parts[1]))
            .or_insert_with(|| vec![0.0; grid.len()])[i] = value;
    }
    let series = per_trader
        .into_iter()
        .map(|(trader, values)| PositionSeries { trader, values })
        .collect();
    Ok((grid, series))
}

fn run_cluster(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let artifacts = Artifacts::new(config);
    let windows = window_spans(config)?;
    let mut written = Vec::new();

    for &delta in &config.deltas_minutes {
        let mut clusters_csv = String::from("window_index,trader_id,cluster\n");
        let mut stats_csv = String::from(
            "window_index,window_start,active_traders,nodes,links,clusters,mean_cluster_size,modularity,codelength,in_cluster_ratio,clusters_per_trader\n",
        );

        match config.clustering {
            ClusteringMethod::SvnInfomap => {
                let by_window = load_networks(Stage::Cluster, config, delta)?;
                let meta_text =
                    read_file(Stage::Cluster, Stage::Svn, &artifacts.svn_meta(delta))?;
                let meta: serde_json::Value =
                    serde_json::from_str(&meta_text).map_err(|e| PipelineError::Artifact {
                        path: artifacts.svn_meta(delta),
                        message: e.to_string(),
                    })?;

                // Deterministic per-window infomap, parallel over windows.
                let results: Vec<Result<(usize, Option<(Partition, f64, f64, usize)>), PipelineError>> =
                    windows
                        .par_iter()
                        .enumerate()
                        .map(|(w, _span)| {
                            let Some(edges) = by_window.get(&w) else {
                                return Ok((w, None));
                            };
                            let network = network_from_edges(edges);
                            if network.is_empty() {
                                return Ok((w, None));
                            }
                            let partition =
                                infomap_partition(&network, config.infomap_seed ^ w as u64)?;
                            let q = modularity(&network, &partition)?;
                            let codelength = map_equation_codelength(&network, &partition)?;
                            Ok((w, Some((partition, q, codelength, network.num_edges()))))
                        })
                        .collect();

                for result in results {
                    let (w, payload) = result?;
                    let active = meta
                        .get(w)
                        .and_then(|m| m.get("active_traders"))
                        .and_then(|v| v.as_u64())
                        .unwrap_or(0) as usize;
                    let window_start = windows[w].in_sample.0;
                    match payload {
                        None => {
                            stats_csv.push_str(&format!(
                                "{w},{},{active},0,0,0,nan,nan,nan,0,nan\n",
                                window_start.to_rfc3339_opts(SecondsFormat::Secs, true)
                            ));
                        }
                        Some((partition, q, codelength, links)) => {
                            for (id, label) in partition.assignment() {
                                clusters_csv
                                    .push_str(&format!("{w},{},{label}\n", id.as_str()));
                            }
                            let nodes = partition.len();
                            let k = partition.num_clusters();
                            let mean_size = nodes as f64 / k as f64;
                            let in_cluster_ratio = if active > 0 {
                                nodes as f64 / active as f64
                            } else {
                                f64::NAN
                            };
                            let clusters_per_trader = if nodes > 0 {
                                k as f64 / nodes as f64
                            } else {
                                f64::NAN
                            };
                            stats_csv.push_str(&format!(
                                "{w},{},{active},{nodes},{links},{k},{mean_size},{q},{codelength},{in_cluster_ratio},{clusters_per_trader}\n",
                                window_start.to_rfc3339_opts(SecondsFormat::Secs, true)
                            ));
                        }
                    }
                }
            }
            ClusteringMethod::Hierarchical => {
                let (grid, positions) = load_positions(Stage::Cluster, config)?;
                let threshold = config.hier_threshold();
                let results: Vec<Result<(usize, Option<Partition>), PipelineError>> = windows
                    .par_iter()
                    .enumerate()
                    .map(|(w, span)| {
                        let (lo, hi) = grid.index_range(span.in_sample.0, span.in_sample.1);
                        let slices: Vec<PositionSeries> = positions
                            .iter()
                            .map(|s| PositionSeries {
                                trader: s.trader.clone(),
                                values: s.values[lo..hi].to_vec(),
                            })
                            .collect();
                        match correlation_distance_matrix(&slices) {
                            Ok(d) => Ok((w, Some(hierarchical_partition(&d, threshold)?))),
                            Err(crate::community::CommunityError::TooFewSeries { .. }) => {
                                Ok((w, None))
                            }
                            Err(e) => Err(e.into()),
                        }
                    })
                    .collect();
                for result in results {
                    let (w, payload) = result?;
                    let window_start = windows[w].in_sample.0;
                    match payload {
                        None => stats_csv.push_str(&format!(
                            "{w},{},0,0,nan,0,nan,nan,nan,nan,nan\n",
                            window_start.to_rfc3339_opts(SecondsFormat::Secs, true)
                        )),
                        Some(partition) => {
                            for (id, label) in partition.assignment() {
                                clusters_csv
                                    .push_str(&format!("{w},{},{label}\n", id.as_str()));
                            }
                            let nodes = partition.len();
                            let k = partition.num_clusters();
                            stats_csv.push_str(&format!(
                                "{w},{},{nodes},{nodes},nan,{k},{},nan,nan,1,{}\n",
                                window_start.to_rfc3339_opts(SecondsFormat::Secs, true),
                                nodes as f64 / k as f64,
                                k as f64 / nodes as f64
                            ));
                        }
                    }
                }
            }
        }

        let clusters_path = artifacts.clusters(delta);
        write_file(&clusters_path, clusters_csv.as_bytes())?;
        let stats_path = artifacts.cluster_stats(delta);
        write_file(&stats_path, stats_csv.as_bytes())?;
        written.push(clusters_path);
        written.push(stats_path);
    }
    Ok(written)
}

/// Reads per-window partitions from the cluster artifact. Windows without
/// any row yield empty partitions.
fn load_partitions(
    stage: Stage,
    config: &RunConfig,
    delta: i64,
    num_windows: usize,
) -> Result<Vec<Partition>, PipelineError> {
    let path = Artifacts::new(config).clusters(delta);
    let text = read_file(stage, Stage::Cluster, &path)?;
    let mut raw: Vec<BTreeMap<TraderId, usize>> = vec![BTreeMap::new(); num_windows];
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: expected 3 fields", lineno + 1),
            });
        }
        let w: usize = parts[0].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad window index: {e}", lineno + 1),
        })?;
        let label: usize = parts[2].parse().map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: format!("line {}: bad cluster label: {e}", lineno + 1),
        })?;
        if w >= num_windows {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: window {w} out of range", lineno + 1),
            });
        }
        raw[w].insert(TraderId::from(parts[1]), label);
    }
    Ok(raw.into_iter().map(Partition::new).collect())
}

// ---------------------------------------------------------------------------
// ewens-fit
// ---------------------------------------------------------------------------

fn run_ewens_fit(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let artifacts = Artifacts::new(config);
    let windows = window_spans(config)?;
    let mut written = Vec::new();
    for &delta in &config.deltas_minutes {
        let partitions = load_partitions(Stage::EwensFit, config, delta, windows.len())?;
        let mut csv = String::from("window_start,n,K,theta_hat,chi2,dof,p_value,pass\n");
        for (w, partition) in partitions.iter().enumerate() {
            let window_start = windows[w]
                .in_sample
                .0
                .to_rfc3339_opts(SecondsFormat::Secs, true);
            if partition.is_empty() {
                csv.push_str(&format!("{window_start},0,0,nan,nan,0,nan,undefined\n"));
                continue;
            }
            let vector = PartitionVector::from_partition(partition);
            let n = vector.n();
            let k = vector.num_clusters();
            let max_k = if config.conditional { n / 2 } else { n };
            if k as usize > max_k || n < 2 {
                csv.push_str(&format!("{window_start},{n},{k},nan,nan,0,nan,undefined\n"));
                continue;
            }
            let theta = estimate_theta(k as f64, n, config.conditional)?;
            match chi_square_gof(&vector, theta, config.conditional, config.gof_alpha) {
                Ok(report) => csv.push_str(&format!(
                    "{window_start},{n},{k},{theta},{},{},{},{}\n",
                    report.statistic, report.dof, report.p_value, report.pass
                )),
                Err(EwensError::GofUndefined { .. }) => csv.push_str(&format!(
                    "{window_start},{n},{k},{theta},nan,0,nan,undefined\n"
                )),
                Err(e) => return Err(e.into()),
            }
        }
        let path = artifacts.ewens_fit(delta);
        write_file(&path, csv.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

fn run_track(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let artifacts = Artifacts::new(config);
    let windows = window_spans(config)?;
    let mut written = Vec::new();
    for &delta in &config.deltas_minutes {
        let partitions = load_partitions(Stage::Track, config, delta, windows.len())?;
        // Tracking runs over the contiguous prefix of nonempty partitions;
        // windows without clusters would break consecutiveness.
        let nonempty: Vec<Partition> = partitions
            .iter()
            .take_while(|p| !p.is_empty())
            .cloned()
            .collect();
        let tracked = track_labels(&nonempty, config.min_jaccard)?;

        let mut events_csv = String::from("window,cluster,event,inherited_label\n");
        for (raw, label) in tracked.labels.first().into_iter().flatten() {
            events_csv.push_str(&format!("0,{raw},{},{label}\n", FlowEvent::Birth.as_str()));
        }
        for flow in &tracked.flows {
            let w = flow.window_to;
            for (cluster, event) in &flow.events_to {
                let label = tracked.labels[w][cluster];
                events_csv.push_str(&format!("{w},{cluster},{},{label}\n", event.as_str()));
            }
            for (cluster, event) in &flow.events_from {
                if *event == FlowEvent::Death {
                    let label = tracked.labels[flow.window_from][cluster];
                    events_csv.push_str(&format!(
                        "{},{cluster},{},{label}\n",
                        flow.window_from,
                        event.as_str()
                    ));
                }
            }
        }
        let events_path = artifacts.flow_events(delta);
        write_file(&events_path, events_csv.as_bytes())?;

        let alluvial = export_alluvial(&tracked)?;
        let alluvial_path = artifacts.alluvial(delta);
        write_file(
            &alluvial_path,
            (serde_json::to_string_pretty(&alluvial).expect("json") + "\n").as_bytes(),
        )?;
        written.push(events_path);
        written.push(alluvial_path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

fn load_or_generate_returns(
    config: &RunConfig,
    grid: &EpochGrid,
) -> Result<(Vec<f64>, Option<Vec<u8>>), PipelineError> {
    if let Some(path) = &config.returns_path {
        let text = read_file(Stage::Backtest, Stage::Backtest, path)?;
        let mut returns = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 2 {
                return Err(PipelineError::Artifact {
                    path: path.clone(),
                    message: format!("line {}: expected `epoch,return`", lineno + 1),
                });
            }
            returns.push(parts[1].parse().map_err(|e| PipelineError::Artifact {
                path: path.clone(),
                message: format!("line {}: bad return: {e}", lineno + 1),
            })?);
        }
        if returns.len() != grid.len() {
            return Err(PipelineError::Artifact {
                path: path.clone(),
                message: format!(
                    "returns series has {} rows, position grid has {} epochs",
                    returns.len(),
                    grid.len()
                ),
            });
        }
        return Ok((returns, None));
    }
    // Synthetic zero-drift gaussian returns.
    let mut rng = ChaCha8Rng::seed_from_u64(config.returns_seed);
    let dist = rand_distr::Normal::new(0.0, config.returns_vol).expect("vol validated");
    let returns: Vec<f64> = grid
        .epochs()
        .iter()
        .map(|_| rand_distr::Distribution::sample(&dist, &mut rng))
        .collect();
    let mut csv = String::from("epoch,return\n");
    for (t, r) in grid.epochs().iter().zip(&returns) {
        csv.push_str(&format!(
            "{},{}\n",
            t.to_rfc3339_opts(SecondsFormat::Secs, true),
            r
        ));
    }
    Ok((returns, Some(csv.into_bytes())))
}

fn run_backtest_stage(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let artifacts = Artifacts::new(config);
    let (grid, positions) = load_positions(Stage::Backtest, config)?;
    let windows = window_spans(config)?;
    let (returns, generated_csv) = load_or_generate_returns(config, &grid)?;
    let mut written = Vec::new();
    if let Some(csv) = generated_csv {
        let path = artifacts.returns();
        write_file(&path, &csv)?;
        written.push(path);
    }

    let needs_precomputed = config.clustering == ClusteringMethod::SvnInfomap
        && config.strategies.iter().any(|s| s.needs_clusters());
    let precomputed: Option<Vec<Partition>> = if needs_precomputed {
        let delta = config.deltas_minutes[0];
        Some(load_partitions(Stage::Backtest, config, delta, windows.len())?)
    } else {
        None
    };

    for &strategy in &config.strategies {
        for &rho in &config.rhos {
            let clusters = if !strategy.needs_clusters() {
                ClusterSource::None
            } else {
                match config.clustering {
                    ClusteringMethod::Hierarchical => ClusterSource::Hierarchical {
                        threshold: config.hier_threshold(),
                    },
                    ClusteringMethod::SvnInfomap => {
                        ClusterSource::Precomputed(precomputed.clone().expect("loaded above"))
                    }
                }
            };
            let params = BacktestParams {
                strategy,
                rho,
                eta: config.eta,
                loss: config.loss,
                clusters,
                min_jaccard: config.min_jaccard,
                window_length: Duration::days(config.window_days),
                step: Duration::days(config.step_days),
            };
            let run = run_backtest(&positions, &grid, &returns, &params)?;

            let mut equity_csv = String::from("epoch,equity,return,drawdown\n");
            let mut peak = f64::NEG_INFINITY;
            for ((epoch, equity), ret) in run
                .curve
                .epochs
                .iter()
                .zip(&run.curve.equity)
                .zip(&run.curve.returns)
            {
                if *equity > peak {
                    peak = *equity;
                }
                equity_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    epoch.to_rfc3339_opts(SecondsFormat::Secs, true),
                    equity,
                    ret,
                    (peak - equity) / peak
                ));
            }
            let equity_path = artifacts.equity(strategy, rho);
            write_file(&equity_path, equity_csv.as_bytes())?;
            written.push(equity_path);

            let mut log_csv = String::from(
                "epoch,prediction,outcome,learner_loss,active_experts,bankrupt_count\n",
            );
            for row in &run.log {
                log_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.epoch.to_rfc3339_opts(SecondsFormat::Secs, true),
                    row.prediction,
                    row.outcome,
                    row.learner_loss,
                    row.active_experts,
                    row.bankrupt_count
                ));
            }
            let log_path = artifacts.run_log(strategy, rho);
            write_file(&log_path, log_csv.as_bytes())?;
            written.push(log_path);
        }
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn strategy_type(config: &RunConfig, strategy: Strategy) -> String {
    match strategy {
        Strategy::EqualWeight => "benchmark".to_owned(),
        Strategy::Aa => "sleeping-experts".to_owned(),
        Strategy::CaaMean => format!("mean/{}", clustering_label(config)),
        Strategy::CaaPen => format!("pen/{}", clustering_label(config)),
        Strategy::Ecaa => format!("meta-experts/{}", clustering_label(config)),
    }
}

fn clustering_label(config: &RunConfig) -> String {
    match config.clustering {
        ClusteringMethod::SvnInfomap => "svn-infomap".to_owned(),
        ClusteringMethod::Hierarchical => {
            format!("hierarchical-{}", config.hier_threshold_pct)
        }
    }
}

fn run_report(config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let artifacts = Artifacts::new(config);
    let mut csv = String::from("strategy,type,scaling_factor,return,sharpe,max_drawdown,calmar\n");
    for &strategy in &config.strategies {
        for &rho in &config.rhos {
            let path = artifacts.equity(strategy, rho);
            let text = read_file(Stage::Report, Stage::Backtest, &path)?;
            let mut epochs = Vec::new();
            let mut equity = Vec::new();
            let mut returns = Vec::new();
            for line in text.lines().skip(1) {
                if line.is_empty() {
                    continue;
                }
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() != 4 {
                    return Err(PipelineError::Artifact {
                        path: path.clone(),
                        message: "expected `epoch,equity,return,drawdown` rows".to_owned(),
                    });
                }
                let ts: DateTime<Utc> = parts[0].parse().map_err(|e| PipelineError::Artifact {
                    path: path.clone(),
                    message: format!("bad epoch: {e}"),
                })?;
                epochs.push(ts);
                equity.push(parts[1].parse().map_err(|e| PipelineError::Artifact {
                    path: path.clone(),
                    message: format!("bad equity: {e}"),
                })?);
                returns.push(parts[2].parse().map_err(|e| PipelineError::Artifact {
                    path: path.clone(),
                    message: format!("bad return: {e}"),
                })?);
            }
            let grid = position_grid(config)?;
            let curve = crate::backtest::EquityCurve {
                epochs,
                equity,
                returns,
                bankrupted: false,
                periods_per_year: grid.periods_per_year(),
            };
            let row = match risk_report(&curve) {
                Ok(r) => format!(
                    "{},{},{},{},{},{},{}\n",
                    strategy.as_str(),
                    strategy_type(config, strategy),
                    rho,
                    r.total_return,
                    r.sharpe_ratio,
                    r.max_drawdown,
                    r.calmar_ratio
                ),
                Err(crate::backtest::BacktestError::CurveTooShort(_)) => format!(
                    "{},{},{},nan,nan,nan,nan\n",
                    strategy.as_str(),
                    strategy_type(config, strategy),
                    rho
                ),
                Err(e) => return Err(e.into()),
            };
            csv.push_str(&row);
        }
    }
    let path = artifacts.report();
    write_file(&path, csv.as_bytes())?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

/// Runs the requested stages in canonical order and writes the manifest.
pub fn run_pipeline(config: &RunConfig, stages: &[Stage]) -> Result<Manifest, PipelineError> {
    let mut requested: Vec<Stage> = Stage::all()
        .into_iter()
        .filter(|s| stages.contains(s))
        .collect();
    if requested.is_empty() {
        requested = Stage::all().to_vec();
    }

    let mut artifacts_written: Vec<PathBuf> = Vec::new();
    for stage in &requested {
        let written = match stage {
            Stage::Simulate => run_simulate(config)?,
            Stage::States => run_states(config)?,
            Stage::Svn => run_svn(config)?,
            Stage::Cluster => run_cluster(config)?,
            Stage::EwensFit => run_ewens_fit(config)?,
            Stage::Track => run_track(config)?,
            Stage::Backtest => run_backtest_stage(config)?,
            Stage::Report => run_report(config)?,
        };
        artifacts_written.extend(written);
    }

    let mut artifact_hashes = BTreeMap::new();
    for path in &artifacts_written {
        let bytes = fs::read(path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        artifact_hashes.insert(name, sha256_hex(&bytes));
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: sha256_hex(config.canonical().as_bytes()),
        seed: config.seed,
        infomap_seed: config.infomap_seed,
        returns_seed: config.returns_seed,
        stages: requested.iter().map(|s| s.as_str().to_owned()).collect(),
        artifacts: artifact_hashes,
    };
    let path = Artifacts::new(config).manifest();
    write_file(
        &path,
        (serde_json::to_string_pretty(&manifest).expect("json") + "\n").as_bytes(),
    )?;
    Ok(manifest)
}
