//! Sliding-window protocol driving the expert games over position data, and
//! the portfolio risk measures used to score strategies.

use crate::community::{correlation_distance_matrix, hierarchical_partition, Partition};
use crate::flow::match_flows;
use crate::games::{
    aa_sleeping_step, caa_step, cluster_mean_decisions, ecaa_evolve, ecaa_step, loss,
    ClusterAssignment, DecisionRule, LossKind, WeightState,
};
use crate::trade::{EpochGrid, PositionSeries, TraderId};
use chrono::{DateTime, Duration, Utc};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("window length must exceed the step and both must be positive")]
    BadWindowSpec,
    #[error("horizon {horizon}s is shorter than one window of {window}s")]
    HorizonTooShort { horizon: i64, window: i64 },
    #[error("series for {trader} has {got} values, grid has {expected} epochs")]
    Misaligned {
        trader: TraderId,
        got: usize,
        expected: usize,
    },
    #[error("returns series has {got} values, grid has {expected} epochs")]
    MisalignedReturns { got: usize, expected: usize },
    #[error("precomputed clustering provides {got} partitions for {expected} windows")]
    PartitionCount { got: usize, expected: usize },
    #[error("equity curve needs >= 2 epochs, got {0}")]
    CurveTooShort(usize),
    #[error("game error: {0}")]
    Game(#[from] crate::games::GameError),
    #[error("clustering error: {0}")]
    Community(#[from] crate::community::CommunityError),
    #[error("flow error: {0}")]
    Flow(#[from] crate::flow::FlowError),
}

/// One in-sample window and the out-of-sample interval it governs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpan {
    pub in_sample: (DateTime<Utc>, DateTime<Utc>),
    pub evaluation: (DateTime<Utc>, DateTime<Utc>),
}

/// Half-open sliding windows over `[start, end)`: window `k` covers
/// `[start + k*step, start + k*step + length)` and its evaluation interval
/// runs to the next window's end (clipped to the horizon).
pub fn sliding_windows(
    span: (DateTime<Utc>, DateTime<Utc>),
    length: Duration,
    step: Duration,
) -> Result<Vec<WindowSpan>, BacktestError> {
    if !(step > Duration::zero() && length > step) {
        return Err(BacktestError::BadWindowSpec);
    }
    let (start, end) = span;
    if start + length > end {
        return Err(BacktestError::HorizonTooShort {
            horizon: (end - start).num_seconds(),
            window: length.num_seconds(),
        });
    }
    let mut windows = Vec::new();
    let mut k = 0i32;
    loop {
        let ws = start + step * k;
        let we = ws + length;
        if we > end {
            break;
        }
        windows.push(WindowSpan {
            in_sample: (ws, we),
            evaluation: (we, (we + step).min(end)),
        });
        k += 1;
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Equal-weight average of awake experts; weights never move.
    EqualWeight,
    /// Aggregating Algorithm with sleeping experts.
    Aa,
    /// Clusterised AA, cluster-mean decision rule.
    CaaMean,
    /// Clusterised AA, cardinality-penalised decision rule.
    CaaPen,
    /// Clusters as meta-experts with weight flow across windows.
    Ecaa,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EqualWeight => "ew",
            Strategy::Aa => "aa",
            Strategy::CaaMean => "caa-mean",
            Strategy::CaaPen => "caa-pen",
            Strategy::Ecaa => "ecaa",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "ew" => Some(Strategy::EqualWeight),
            "aa" => Some(Strategy::Aa),
            "caa-mean" => Some(Strategy::CaaMean),
            "caa-pen" => Some(Strategy::CaaPen),
            "ecaa" => Some(Strategy::Ecaa),
            _ => None,
        }
    }

    pub fn needs_clusters(self) -> bool {
        matches!(self, Strategy::CaaMean | Strategy::CaaPen | Strategy::Ecaa)
    }
}

/// Where per-window cluster assignments come from.
#[derive(Debug, Clone)]
pub enum ClusterSource {
    /// No clustering (EW / AA).
    None,
    /// Average-linkage clustering on in-sample net-position correlations,
    /// cut at the given dissimilarity threshold.
    Hierarchical { threshold: f64 },
    /// One partition per window, e.g. from the validated-network stage.
    Precomputed(Vec<Partition>),
}

#[derive(Debug, Clone)]
pub struct BacktestParams {
    pub strategy: Strategy,
    pub rho: f64,
    pub eta: f64,
    pub loss: LossKind,
    pub clusters: ClusterSource,
    pub min_jaccard: f64,
    pub window_length: Duration,
    pub step: Duration,
}

/// Compounded learner wealth over the evaluation epochs, starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub epochs: Vec<DateTime<Utc>>,
    pub equity: Vec<f64>,
    pub returns: Vec<f64>,
    /// Set when the learner's wealth hit zero and the curve was truncated.
    pub bankrupted: bool,
    pub periods_per_year: f64,
}

/// Per-epoch game log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: DateTime<Utc>,
    pub prediction: f64,
    pub outcome: f64,
    pub learner_loss: f64,
    pub active_experts: usize,
    pub bankrupt_count: usize,
}

#[derive(Debug, Clone)]
pub struct BacktestRun {
    pub curve: EquityCurve,
    pub log: Vec<EpochLog>,
    pub windows: Vec<WindowSpan>,
}

/// Decisions at one epoch: net position scaled by the trader's running
/// maximum absolute position, clipped to `[-1, 1]`; a trader with a flat
/// position is asleep.
fn decisions_at(
    positions: &[PositionSeries],
    running_max: &mut [f64],
    bankrupt: &[bool],
    t: usize,
) -> Vec<Option<f64>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, series)| {
            let pos = series.values[t];
            let abs = pos.abs();
            if abs > running_max[i] {
                running_max[i] = abs;
            }
            if pos == 0.0 || bankrupt[i] || running_max[i] == 0.0 {
                None
            } else {
                Some((pos / running_max[i]).clamp(-1.0, 1.0))
            }
        })
        .collect()
}

fn window_partition(
    params: &BacktestParams,
    positions: &[PositionSeries],
    grid: &EpochGrid,
    windows: &[WindowSpan],
    w: usize,
) -> Result<Option<Partition>, BacktestError> {
    match &params.clusters {
        ClusterSource::None => Ok(None),
        ClusterSource::Precomputed(parts) => {
            if parts.len() != windows.len() {
                return Err(BacktestError::PartitionCount {
                    got: parts.len(),
                    expected: windows.len(),
                });
            }
            Ok(Some(parts[w].clone()))
        }
        ClusterSource::Hierarchical { threshold } => {
            let (lo, hi) = grid.index_range(windows[w].in_sample.0, windows[w].in_sample.1);
            let slices: Vec<PositionSeries> = positions
                .iter()
                .map(|s| PositionSeries {
                    trader: s.trader.clone(),
                    values: s.values[lo..hi].to_vec(),
                })
                .collect();
            match correlation_distance_matrix(&slices) {
                Ok(d) => Ok(Some(hierarchical_partition(&d, *threshold)?)),
                // Too few active traders to correlate: fall back to
                // singleton clusters for the window.
                Err(crate::community::CommunityError::TooFewSeries { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// Cluster assignment over expert indices for one window. Experts the
/// partition does not mention become their own singleton clusters.
fn assignment_for(partition: Option<&Partition>, positions: &[PositionSeries]) -> ClusterAssignment {
    match partition {
        None => ClusterAssignment::singletons(positions.len()),
        Some(p) => {
            let mut labels = Vec::with_capacity(positions.len());
            let mut next = p.num_clusters();
            for series in positions {
                match p.label_of(&series.trader) {
                    Some(l) => labels.push(l),
                    None => {
                        labels.push(next);
                        next += 1;
                    }
                }
            }
            ClusterAssignment::new(labels)
        }
    }
}

/// Runs one strategy over the sliding-window protocol.
///
/// Per evaluation epoch: expert decisions are derived from positions, the
/// strategy merges them into a prediction, expert wealth paths absorb the
/// rho-scaled return (bankrupt experts drop out permanently), and the
/// learner's wealth compounds by `1 + rho * gamma_t * r_t`. Cluster-aware
/// strategies rebuild clusters from each in-sample window.
pub fn run_backtest(
    positions: &[PositionSeries],
    grid: &EpochGrid,
    market_returns: &[f64],
    params: &BacktestParams,
) -> Result<BacktestRun, BacktestError> {
    for s in positions {
        if s.values.len() != grid.len() {
            return Err(BacktestError::Misaligned {
                trader: s.trader.clone(),
                got: s.values.len(),
                expected: grid.len(),
            });
        }
    }
    if market_returns.len() != grid.len() {
        return Err(BacktestError::MisalignedReturns {
            got: market_returns.len(),
            expected: grid.len(),
        });
    }
    let windows = sliding_windows((grid.start(), grid.end()), params.window_length, params.step)?;

    let n = positions.len();
    let mut running_max = vec![0.0f64; n];
    let mut expert_wealth = vec![1.0f64; n];
    let mut bankrupt = vec![false; n];
    let mut state = WeightState::uniform(n, params.eta, params.rho);

    // ECAA bookkeeping.
    let mut cluster_weights: BTreeMap<usize, f64> = BTreeMap::new();
    let mut prev_partition: Option<Partition> = None;
    let mut initial_cluster_count = 0usize;

    let mut curve = EquityCurve {
        epochs: Vec::new(),
        equity: Vec::new(),
        returns: Vec::new(),
        bankrupted: false,
        periods_per_year: grid.periods_per_year(),
    };
    // Baseline point: unit capital committed when the first evaluation
    // interval opens.
    if let Some(first) = windows.first() {
        curve.epochs.push(first.evaluation.0);
        curve.equity.push(1.0);
        curve.returns.push(0.0);
    }
    let mut log = Vec::new();
    let mut wealth = 1.0f64;

    // Warm the running maxima over the pre-evaluation prefix so early
    // decisions are scaled like later ones.
    if let Some(first) = windows.first() {
        let (_, warm_hi) = grid.index_range(grid.start(), first.evaluation.0);
        for t in 0..warm_hi {
            for (i, series) in positions.iter().enumerate() {
                let abs = series.values[t].abs();
                if abs > running_max[i] {
                    running_max[i] = abs;
                }
            }
        }
    }

    'windows: for (w, window) in windows.iter().enumerate() {
        let partition = if params.strategy.needs_clusters() {
            window_partition(params, positions, grid, &windows, w)?
        } else {
            None
        };
        let clusters = assignment_for(partition.as_ref(), positions);

        if params.strategy == Strategy::Ecaa {
            match (&prev_partition, &partition) {
                (Some(prev), Some(curr)) => {
                    let flow = match_flows(prev, curr, params.min_jaccard, w - 1)?;
                    let birth = 1.0 / initial_cluster_count.max(1) as f64;
                    cluster_weights = ecaa_evolve(&cluster_weights, &flow, birth)?;
                }
                _ => {
                    let m = clusters.num_clusters();
                    initial_cluster_count = m;
                    cluster_weights = (0..m).map(|c| (c, 1.0 / m as f64)).collect();
                }
            }
            prev_partition = partition.clone();
        }

        let (lo, hi) = grid.index_range(window.evaluation.0, window.evaluation.1);
        for t in lo..hi {
            let epoch = grid.epochs()[t];
            let outcome = market_returns[t];
            let decisions = decisions_at(positions, &mut running_max, &bankrupt, t);
            let active = decisions.iter().filter(|d| d.is_some()).count();

            let prediction = match params.strategy {
                Strategy::EqualWeight => {
                    if active == 0 {
                        0.0
                    } else {
                        decisions.iter().flatten().sum::<f64>() / active as f64
                    }
                }
                Strategy::Aa => aa_sleeping_step(&mut state, &decisions, outcome, params.loss)?,
                Strategy::CaaMean => caa_step(
                    &mut state,
                    &clusters,
                    DecisionRule::Mean,
                    &decisions,
                    outcome,
                    params.loss,
                )?,
                Strategy::CaaPen => caa_step(
                    &mut state,
                    &clusters,
                    DecisionRule::Pen,
                    &decisions,
                    outcome,
                    params.loss,
                )?,
                Strategy::Ecaa => {
                    let meta: BTreeMap<usize, Option<f64>> =
                        cluster_mean_decisions(&clusters, &decisions)
                            .into_iter()
                            .enumerate()
                            .collect();
                    ecaa_step(
                        &mut cluster_weights,
                        params.eta,
                        params.rho,
                        &meta,
                        outcome,
                        params.loss,
                    )?
                }
            };

            // Expert wealth paths under the rho-scaled return; bankrupt
            // experts lose their weight permanently.
            for (i, d) in decisions.iter().enumerate() {
                if let Some(gamma) = d {
                    expert_wealth[i] *= 1.0 + params.rho * gamma * outcome;
                    if expert_wealth[i] <= 0.0 && !bankrupt[i] {
                        bankrupt[i] = true;
                        if i < state.weights.len() {
                            state.weights[i] = 0.0;
                        }
                    }
                }
            }

            let learner_loss = loss(params.loss, params.rho, prediction, outcome);
            let epoch_return = params.rho * prediction * outcome;
            wealth *= 1.0 + epoch_return;
            log.push(EpochLog {
                epoch,
                prediction,
                outcome,
                learner_loss,
                active_experts: active,
                bankrupt_count: bankrupt.iter().filter(|b| **b).count(),
            });
            if wealth <= 0.0 {
                curve.bankrupted = true;
                break 'windows;
            }
            curve.epochs.push(epoch);
            curve.equity.push(wealth);
            curve.returns.push(epoch_return);
        }
    }

    Ok(BacktestRun {
        curve,
        log,
        windows,
    })
}

/// The four headline risk measures of an equity curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub total_return: f64,
    /// Annualised mean/stddev of per-epoch returns; NaN flags a
    /// zero-variance (undefined) ratio.
    pub sharpe_ratio: f64,
    pub max_drawdown: f64,
    /// `total_return / max_drawdown`; +inf flags a drawdown-free curve.
    pub calmar_ratio: f64,
}

/// Scores an equity curve. The Sharpe ratio is annualised by
/// `sqrt(periods_per_year)` with a zero risk-free rate; drawdown is the
/// largest peak-to-trough relative decline.
pub fn risk_report(curve: &EquityCurve) -> Result<RiskReport, BacktestError> {
    if curve.equity.len() < 2 {
        return Err(BacktestError::CurveTooShort(curve.equity.len()));
    }
    let total_return = curve.equity.last().unwrap() / curve.equity.first().unwrap() - 1.0;
    let max_drawdown = max_drawdown(&curve.equity);

    let rets = &curve.returns[1..];
    let mean = rets.iter().sum::<f64>() / rets.len() as f64;
    let var = rets.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
        / (rets.len() as f64 - 1.0).max(1.0);
    let sd = var.sqrt();
    let sharpe_ratio = if sd == 0.0 {
        f64::NAN
    } else {
        mean / sd * curve.periods_per_year.sqrt()
    };
    let calmar_ratio = if max_drawdown == 0.0 {
        f64::INFINITY
    } else {
        total_return / max_drawdown
    };
    Ok(RiskReport {
        total_return,
        sharpe_ratio,
        max_drawdown,
        calmar_ratio,
    })
}

/// Single-pass peak-tracking maximum drawdown.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &e in equity {
        if e > peak {
            peak = e;
        }
        let dd = (peak - e) / peak;
        if dd > worst {
            worst = dd;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use chrono::TimeZone;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(day: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2015, 1, day, h, 0, 0).unwrap()
    }

    #[test]
    fn fourteen_windows_over_a_year() {
        let start = Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
        let end = start + Duration::days(364);
        let windows =
            sliding_windows((start, end), Duration::days(182), Duration::days(14)).unwrap();
        assert_eq!(windows.len(), 14);
        // Evaluation interval is the gap between consecutive window ends.
        for pair in windows.windows(2) {
            assert_eq!(pair[0].evaluation.1, pair[1].in_sample.1.min(end));
            assert_eq!(pair[0].evaluation.0, pair[0].in_sample.1);
        }
    }

    #[test]
    fn window_boundaries() {
        let start = ts(1, 0);
        // window == horizon: exactly one window, empty evaluation.
        let windows =
            sliding_windows((start, start + Duration::days(10)), Duration::days(10), Duration::days(3))
                .unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].evaluation.0, windows[0].evaluation.1);
        // horizon shorter than the window errors.
        assert!(matches!(
            sliding_windows((start, start + Duration::days(5)), Duration::days(10), Duration::days(2)),
            Err(BacktestError::HorizonTooShort { .. })
        ));
        // partial trailing step is dropped.
        let windows = sliding_windows(
            (start, start + Duration::days(12)),
            Duration::days(7),
            Duration::days(4),
        )
        .unwrap();
        assert_eq!(windows.len(), 2);
        assert!(sliding_windows((start, start + Duration::days(12)), Duration::days(2), Duration::days(2)).is_err());
    }

    fn flat_grid(days: i64) -> EpochGrid {
        EpochGrid::new(ts(1, 0), ts(1, 0) + Duration::days(days), Duration::hours(12), None).unwrap()
    }

    fn constant_series(trader: &str, value: f64, len: usize) -> PositionSeries {
        PositionSeries {
            trader: TraderId::from(trader),
            values: vec![value; len],
        }
    }

    fn base_params(strategy: Strategy) -> BacktestParams {
        BacktestParams {
            strategy,
            rho: 1.0,
            eta: 1.0,
            loss: LossKind::LongShort,
            clusters: ClusterSource::None,
            min_jaccard: 0.3,
            window_length: Duration::days(4),
            step: Duration::days(2),
        }
    }

    #[test]
    fn all_zero_decisions_hold_equity_flat() {
        let grid = flat_grid(10);
        let positions = vec![constant_series("a", 0.0, grid.len())];
        let returns = vec![0.01; grid.len()];
        let run = run_backtest(&positions, &grid, &returns, &base_params(Strategy::Aa)).unwrap();
        assert!(run.curve.equity.iter().all(|e| *e == 1.0));
    }

    #[test]
    fn single_full_long_compounds_returns() {
        let grid = flat_grid(10);
        let positions = vec![constant_series("a", 3.0, grid.len())];
        let returns = vec![0.01; grid.len()];
        let run = run_backtest(&positions, &grid, &returns, &base_params(Strategy::Aa)).unwrap();
        assert_eq!(run.curve.equity[0], 1.0);
        let t = run.curve.equity.len() as i32 - 1;
        assert!(t > 0);
        assert_relative_eq!(
            *run.curve.equity.last().unwrap(),
            1.01f64.powi(t),
            max_relative = 1e-12
        );
    }

    #[test]
    fn opposite_experts_cancel_under_equal_weights() {
        let grid = flat_grid(10);
        let len = grid.len();
        let positions = vec![
            constant_series("a", 2.0, len),
            constant_series("b", -2.0, len),
        ];
        let returns = vec![0.02; len];
        let run =
            run_backtest(&positions, &grid, &returns, &base_params(Strategy::EqualWeight)).unwrap();
        assert!(run.curve.equity.iter().all(|e| *e == 1.0));
    }

    #[test]
    fn ew_equals_aa_with_zero_eta() {
        let grid = flat_grid(14);
        let len = grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let positions: Vec<PositionSeries> = (0..4)
            .map(|i| PositionSeries {
                trader: TraderId::new(format!("t{i}")),
                values: (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            })
            .collect();
        let returns: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.01..0.01)).collect();
        let ew = run_backtest(&positions, &grid, &returns, &base_params(Strategy::EqualWeight))
            .unwrap();
        let mut frozen = base_params(Strategy::Aa);
        frozen.eta = 0.0;
        let aa = run_backtest(&positions, &grid, &returns, &frozen).unwrap();
        for (a, b) in ew.curve.equity.iter().zip(&aa.curve.equity) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn misalignment_errors() {
        let grid = flat_grid(10);
        let positions = vec![constant_series("a", 1.0, grid.len() - 1)];
        let returns = vec![0.0; grid.len()];
        assert!(matches!(
            run_backtest(&positions, &grid, &returns, &base_params(Strategy::Aa)),
            Err(BacktestError::Misaligned { .. })
        ));
        let positions = vec![constant_series("a", 1.0, grid.len())];
        let returns = vec![0.0; grid.len() + 3];
        assert!(matches!(
            run_backtest(&positions, &grid, &returns, &base_params(Strategy::Aa)),
            Err(BacktestError::MisalignedReturns { .. })
        ));
    }

    #[test]
    fn learner_bankruptcy_truncates_with_flag() {
        let grid = flat_grid(10);
        let len = grid.len();
        let positions = vec![constant_series("a", 5.0, len)];
        let mut returns = vec![0.001; len];
        let (lo, _) = grid.index_range(ts(5, 0), ts(6, 0));
        returns[lo] = -1.0; // wipes out a fully-long learner at rho = 1
        let run = run_backtest(&positions, &grid, &returns, &base_params(Strategy::Aa)).unwrap();
        assert!(run.curve.bankrupted);
        assert!(run.curve.equity.len() < len);
    }

    #[test]
    fn drawdown_fixtures() {
        assert_eq!(max_drawdown(&[1.0, 1.2, 1.5]), 0.0);
        assert_relative_eq!(
            max_drawdown(&[1.0, 1.1, 0.99, 1.2]),
            0.1,
            max_relative = 1e-12
        );
    }

    #[test]
    fn drawdown_matches_quadratic_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let len = rng.gen_range(2..40);
            let mut equity = vec![1.0f64];
            for _ in 1..len {
                let r: f64 = rng.gen_range(-0.05..0.05);
                let next = equity.last().unwrap() * (1.0 + r);
                equity.push(next);
            }
            let fast = max_drawdown(&equity);
            let mut brute = 0.0f64;
            for i in 0..equity.len() {
                for j in i..equity.len() {
                    let dd = (equity[i] - equity[j]) / equity[i];
                    if dd > brute {
                        brute = dd;
                    }
                }
            }
            assert_eq!(fast, brute);
        }
    }

    #[test]
    fn risk_report_fixtures() {
        let curve = EquityCurve {
            epochs: vec![ts(1, 0); 4],
            equity: vec![1.0, 1.1, 0.99, 1.2],
            returns: vec![0.0, 0.1, -0.1, 0.2121212121212121],
            bankrupted: false,
            periods_per_year: 252.0,
        };
        let report = risk_report(&curve).unwrap();
        assert_relative_eq!(report.total_return, 0.2, max_relative = 1e-12);
        assert_relative_eq!(report.max_drawdown, 0.1, max_relative = 1e-12);
        assert!(report.sharpe_ratio.is_finite());
        assert_relative_eq!(report.calmar_ratio, 2.0, max_relative = 1e-12);

        // Monotone curve: zero drawdown, infinite calmar.
        let curve = EquityCurve {
            epochs: vec![ts(1, 0); 3],
            equity: vec![1.0, 1.01, 1.0201],
            returns: vec![0.0, 0.01, 0.01],
            bankrupted: false,
            periods_per_year: 252.0,
        };
        let report = risk_report(&curve).unwrap();
        assert_eq!(report.max_drawdown, 0.0);
        assert!(report.calmar_ratio.is_infinite());
        // Constant returns: flagged sharpe.
        assert!(report.sharpe_ratio.is_nan());
    }

    #[test]
    fn risk_report_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut equity = vec![1.0f64];
        let mut returns = vec![0.0f64];
        for _ in 0..30 {
            let r = rng.gen_range(-0.03..0.03);
            returns.push(r);
            let next = equity.last().unwrap() * (1.0 + r);
            equity.push(next);
        }
        let base = EquityCurve {
            epochs: vec![ts(1, 0); equity.len()],
            equity: equity.clone(),
            returns: returns.clone(),
            bankrupted: false,
            periods_per_year: 1000.0,
        };
        let scaled = EquityCurve {
            equity: equity.iter().map(|e| e * 7.5).collect(),
            ..base.clone()
        };
        let a = risk_report(&base).unwrap();
        let b = risk_report(&scaled).unwrap();
        assert_relative_eq!(a.total_return, b.total_return, max_relative = 1e-12);
        assert_relative_eq!(a.max_drawdown, b.max_drawdown, max_relative = 1e-12);
        assert_relative_eq!(a.sharpe_ratio, b.sharpe_ratio, max_relative = 1e-12);
        assert_relative_eq!(a.calmar_ratio, b.calmar_ratio, max_relative = 1e-12);
    }

    #[test]
    fn caa_and_ecaa_run_with_hierarchical_clusters() {
        let grid = flat_grid(14);
        let len = grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let positions: Vec<PositionSeries> = (0..6)
            .map(|i| PositionSeries {
                trader: TraderId::new(format!("t{i}")),
                values: (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            })
            .collect();
        let returns: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.01..0.01)).collect();
        for strategy in [Strategy::CaaMean, Strategy::CaaPen, Strategy::Ecaa] {
            let mut params = base_params(strategy);
            params.clusters = ClusterSource::Hierarchical { threshold: 0.7 };
            let run = run_backtest(&positions, &grid, &returns, &params).unwrap();
            assert!(!run.curve.equity.is_empty());
            assert!(run.curve.equity.iter().all(|e| e.is_finite()));
        }
    }
}
