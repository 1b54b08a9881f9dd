//! Trade ledger model: ingestion, validation, filtering, resampling and
//! synthetic data generation.

mod csv_io;
mod grid;
mod position;
mod synth;

pub use csv_io::{parse_trades, write_positions, write_trades};
pub(crate) use grid::progression as grid_progression;
pub use grid::{BusinessCalendar, EpochGrid};
pub use position::{resample_positions, PositionSeries};
pub use synth::{generate_synthetic_market, MarketConfig};

use chrono::{DateTime, Utc};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TradeError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArity { line: u64, expected: usize, found: usize },
    #[error("line {line}: field `{field}`: {message}")]
    RowField { line: u64, field: &'static str, message: String },
    #[error("line {line}: close_time {close} is not after open_time {open}")]
    CloseNotAfterOpen { line: u64, open: String, close: String },
    #[error("line {line}: lots must be positive, got {lots}")]
    NonPositiveLots { line: u64, lots: f64 },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("invalid epoch grid: {0}")]
    Grid(String),
    #[error("invalid generator config: {0}")]
    Generator(String),
    #[error("csv: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Opaque trader identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraderId(String);

impl TraderId {
    pub fn new(id: impl Into<String>) -> Self {
        TraderId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TraderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TraderId {
    fn from(s: &str) -> Self {
        TraderId(s.to_owned())
    }
}

/// Direction of a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Long,
    Short,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Long => 1.0,
            Side::Short => -1.0,
        }
    }

    pub fn flipped(self) -> Side {
        match self {
            Side::Long => Side::Short,
            Side::Short => Side::Long,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Long => "long",
            Side::Short => "short",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "long" => Some(Side::Long),
            "short" => Some(Side::Short),
            _ => None,
        }
    }
}

/// A single client order with its full lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub trader: TraderId,
    pub open_time: DateTime<Utc>,
    pub close_time: DateTime<Utc>,
    pub symbol: String,
    pub side: Side,
    pub lots: f64,
}

impl Trade {
    /// Builds a trade, enforcing `close_time > open_time` and `lots > 0`.
    pub fn new(
        trader: TraderId,
        open_time: DateTime<Utc>,
        close_time: DateTime<Utc>,
        symbol: impl Into<String>,
        side: Side,
        lots: f64,
    ) -> Result<Self, TradeError> {
        if close_time <= open_time {
            return Err(TradeError::CloseNotAfterOpen {
                line: 0,
                open: open_time.to_rfc3339(),
                close: close_time.to_rfc3339(),
            });
        }
        if !(lots > 0.0) {
            return Err(TradeError::NonPositiveLots { line: 0, lots });
        }
        Ok(Trade {
            trader,
            open_time,
            close_time,
            symbol: symbol.into(),
            side,
            lots,
        })
    }

    /// True when the trade is open at `t` under the `[open, close)` convention.
    pub fn is_open_at(&self, t: DateTime<Utc>) -> bool {
        self.open_time <= t && t < self.close_time
    }
}

/// Canonical ledger of trades, sorted by `(open_time, trader, close_time)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradeTable {
    trades: Vec<Trade>,
    symbol_filter: Option<String>,
}

impl TradeTable {
    pub fn from_trades(mut trades: Vec<Trade>) -> Self {
        trades.sort_by(|a, b| {
            (a.open_time, &a.trader, a.close_time).cmp(&(b.open_time, &b.trader, b.close_time))
        });
        TradeTable {
            trades,
            symbol_filter: None,
        }
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    pub fn symbol_filter(&self) -> Option<&str> {
        self.symbol_filter.as_deref()
    }

    /// Restricts the table to a single instrument. Runs are single-symbol.
    pub fn with_symbol(self, symbol: &str) -> Self {
        let trades = self
            .trades
            .into_iter()
            .filter(|t| t.symbol == symbol)
            .collect();
        TradeTable {
            trades,
            symbol_filter: Some(symbol.to_owned()),
        }
    }

    pub fn trader_ids(&self) -> BTreeSet<TraderId> {
        self.trades.iter().map(|t| t.trader.clone()).collect()
    }

    /// Maps every trade's side to its opposite, for symmetry checks.
    pub fn flipped_sides(&self) -> Self {
        let trades = self
            .trades
            .iter()
            .map(|t| Trade {
                side: t.side.flipped(),
                ..t.clone()
            })
            .collect();
        TradeTable {
            trades,
            symbol_filter: self.symbol_filter.clone(),
        }
    }
}

/// Traders with at least `cutoff` trades opened inside `[window.0, window.1)`.
///
/// Counting is by `open_time`; a trade closed inside the window but opened
/// before it does not count.
pub fn filter_active(
    table: &TradeTable,
    window: (DateTime<Utc>, DateTime<Utc>),
    cutoff: usize,
) -> BTreeSet<TraderId> {
    let mut counts: std::collections::BTreeMap<&TraderId, usize> = std::collections::BTreeMap::new();
    for trade in table.trades() {
        if trade.open_time >= window.0 && trade.open_time < window.1 {
            *counts.entry(&trade.trader).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, c)| *c >= cutoff)
        .map(|(id, _)| id.clone())
        .collect()
}
