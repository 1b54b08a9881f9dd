//! Discrete trader states on a fixed time partition.
//!
//! Each trader's activity inside a slice `[t, t+delta)` is condensed into the
//! imbalance ratio of bought versus sold volume, then thresholded into one of
//! four states: buying, selling, neutral or inactive.

use crate::trade::{BusinessCalendar, TradeTable, TraderId};
use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatesError {
    #[error("volumes must be nonnegative: bought={bought}, sold={sold}")]
    NegativeVolume { bought: f64, sold: f64 },
    #[error("state threshold must lie in [0, 1), got {0}")]
    BadThreshold(f64),
    #[error("invalid slice grid: {0}")]
    Grid(String),
}

/// Standard slice-resolution menu, in minutes.
pub const DELTA_MENU_MINUTES: [i64; 8] = [10, 15, 30, 60, 120, 180, 360, 1440];

/// One of the four per-slice trader states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateSymbol {
    Buying,
    Selling,
    Neutral,
    Inactive,
}

impl StateSymbol {
    pub fn letter(self) -> char {
        match self {
            StateSymbol::Buying => 'B',
            StateSymbol::Selling => 'S',
            StateSymbol::Neutral => 'N',
            StateSymbol::Inactive => 'I',
        }
    }

    pub fn from_letter(c: char) -> Option<StateSymbol> {
        match c {
            'B' => Some(StateSymbol::Buying),
            'S' => Some(StateSymbol::Selling),
            'N' => Some(StateSymbol::Neutral),
            'I' => Some(StateSymbol::Inactive),
            _ => None,
        }
    }
}

/// Scaled volume imbalance of a slice, or the inactive marker when no volume
/// traded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Imbalance {
    Ratio(f64),
    Inactive,
}

/// `(bought - sold) / (bought + sold)`, or [`Imbalance::Inactive`] when both
/// volumes are zero.
pub fn imbalance_ratio(bought: f64, sold: f64) -> Result<Imbalance, StatesError> {
    if bought < 0.0 || sold < 0.0 || bought.is_nan() || sold.is_nan() {
        return Err(StatesError::NegativeVolume { bought, sold });
    }
    let total = bought + sold;
    if total == 0.0 {
        Ok(Imbalance::Inactive)
    } else {
        Ok(Imbalance::Ratio((bought - sold) / total))
    }
}

/// Classifies an imbalance against the threshold `a`.
pub fn classify(imbalance: Imbalance, threshold: f64) -> StateSymbol {
    match imbalance {
        Imbalance::Inactive => StateSymbol::Inactive,
        Imbalance::Ratio(r) => {
            if r > threshold {
                StateSymbol::Buying
            } else if r < -threshold {
                StateSymbol::Selling
            } else {
                StateSymbol::Neutral
            }
        }
    }
}

/// The shared slice partition `[t, t+delta)` of a window, clipped to business
/// time. A trailing slice that does not fit wholly inside the window is
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    starts: Vec<DateTime<Utc>>,
    delta: Duration,
}

impl SliceGrid {
    pub fn new(
        window: (DateTime<Utc>, DateTime<Utc>),
        delta: Duration,
        calendar: Option<BusinessCalendar>,
    ) -> Result<Self, StatesError> {
        if delta <= Duration::zero() {
            return Err(StatesError::Grid(format!("delta must be positive, got {delta}")));
        }
        if window.0 >= window.1 {
            return Err(StatesError::Grid(format!(
                "window start {} must precede end {}",
                window.0, window.1
            )));
        }
        let starts =
            crate::trade::grid_progression(window.0, window.1, delta, calendar.as_ref(), true);
        Ok(SliceGrid { starts, delta })
    }

    pub fn starts(&self) -> &[DateTime<Utc>] {
        &self.starts
    }

    pub fn delta(&self) -> Duration {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Index of the slice containing `t`, if any.
    pub fn slice_of(&self, t: DateTime<Utc>) -> Option<usize> {
        let idx = self.starts.partition_point(|s| *s <= t);
        if idx == 0 {
            return None;
        }
        let i = idx - 1;
        (t < self.starts[i] + self.delta).then_some(i)
    }
}

/// A trader's state sequence aligned to a [`SliceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub trader: TraderId,
    pub delta: Duration,
    pub threshold: f64,
    pub states: Vec<StateSymbol>,
}

impl StateSeries {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn count(&self, symbol: StateSymbol) -> usize {
        self.states.iter().filter(|s| **s == symbol).count()
    }
}

/// Builds the state series of one trader over the grid.
///
/// A trade contributes its full lots to the slice containing its `open_time`.
/// An unknown trader yields an all-inactive series.
pub fn state_series(
    table: &TradeTable,
    trader: &TraderId,
    grid: &SliceGrid,
    threshold: f64,
) -> Result<StateSeries, StatesError> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(StatesError::BadThreshold(threshold));
    }
    let mut bought = vec![0.0f64; grid.len()];
    let mut sold = vec![0.0f64; grid.len()];
    for trade in table.trades() {
        if &trade.trader != trader {
            continue;
        }
        if let Some(slice) = grid.slice_of(trade.open_time) {
            match trade.side {
                crate::trade::Side::Long => bought[slice] += trade.lots,
                crate::trade::Side::Short => sold[slice] += trade.lots,
            }
        }
    }
    let states = bought
        .iter()
        .zip(&sold)
        .map(|(&b, &s)| imbalance_ratio(b, s).map(|im| classify(im, threshold)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StateSeries {
        trader: trader.clone(),
        delta: grid.delta(),
        threshold,
        states,
    })
}

/// State series for every trader in `traders`, in the given order.
pub fn state_series_all(
    table: &TradeTable,
    traders: &[TraderId],
    grid: &SliceGrid,
    threshold: f64,
) -> Result<Vec<StateSeries>, StatesError> {
    traders
        .iter()
        .map(|t| state_series(table, t, grid, threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade::{Side, Trade, TradeTable};
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2015, 1, 5, h, m, 0).unwrap()
    }

    fn trade(trader: &str, open_h: u32, open_m: u32, side: Side, lots: f64) -> Trade {
        Trade::new(
            TraderId::from(trader),
            ts(open_h, open_m),
            ts(open_h + 2, open_m),
            "EURUSD",
            side,
            lots,
        )
        .unwrap()
    }

    fn hour_grid() -> SliceGrid {
        SliceGrid::new((ts(9, 0), ts(13, 0)), Duration::hours(1), None).unwrap()
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance_ratio(1.0, 1.0).unwrap(), Imbalance::Ratio(0.0));
        assert_eq!(imbalance_ratio(3.0, 1.0).unwrap(), Imbalance::Ratio(0.5));
        assert_eq!(imbalance_ratio(0.0, 0.0).unwrap(), Imbalance::Inactive);
        assert!(imbalance_ratio(-1.0, 0.0).is_err());
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify(Imbalance::Ratio(0.5), 0.25), StateSymbol::Buying);
        assert_eq!(classify(Imbalance::Ratio(-0.5), 0.25), StateSymbol::Selling);
        assert_eq!(classify(Imbalance::Ratio(0.1), 0.25), StateSymbol::Neutral);
        assert_eq!(classify(Imbalance::Ratio(0.25), 0.25), StateSymbol::Neutral);
        assert_eq!(classify(Imbalance::Inactive, 0.25), StateSymbol::Inactive);
    }

    #[test]
    fn series_from_trades() {
        // 09:xx slice: 3 bought vs 1 sold -> r = 0.5 -> buying at a = 0.25.
        // 10:xx slice: 1 bought vs 3 sold -> selling. 11:xx: 1 vs 1 -> neutral.
        // 12:xx: nothing -> inactive.
        let table = TradeTable::from_trades(vec![
            trade("T1", 9, 10, Side::Long, 3.0),
            trade("T1", 9, 40, Side::Short, 1.0),
            trade("T1", 10, 10, Side::Long, 1.0),
            trade("T1", 10, 40, Side::Short, 3.0),
            trade("T1", 11, 10, Side::Long, 1.0),
            trade("T1", 11, 40, Side::Short, 1.0),
        ]);
        let s = state_series(&table, &TraderId::from("T1"), &hour_grid(), 0.25).unwrap();
        assert_eq!(
            s.states,
            vec![
                StateSymbol::Buying,
                StateSymbol::Selling,
                StateSymbol::Neutral,
                StateSymbol::Inactive
            ]
        );
    }

    #[test]
    fn unknown_trader_is_all_inactive() {
        let table = TradeTable::from_trades(vec![trade("T1", 9, 10, Side::Long, 1.0)]);
        let s = state_series(&table, &TraderId::from("nobody"), &hour_grid(), 0.25).unwrap();
        assert!(s.states.iter().all(|x| *x == StateSymbol::Inactive));
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn threshold_domain_is_enforced() {
        let table = TradeTable::from_trades(vec![]);
        let g = hour_grid();
        assert!(state_series(&table, &TraderId::from("T1"), &g, 1.0).is_err());
        assert!(state_series(&table, &TraderId::from("T1"), &g, -0.1).is_err());
        assert!(state_series(&table, &TraderId::from("T1"), &g, 0.0).is_ok());
    }

    #[test]
    fn trailing_partial_slice_is_dropped() {
        let g = SliceGrid::new((ts(9, 0), ts(10, 30)), Duration::hours(1), None).unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn zero_threshold_neutral_needs_exact_balance() {
        // At a = 0 the neutral state requires b = s > 0 exactly.
        assert_eq!(classify(imbalance_ratio(2.0, 2.0).unwrap(), 0.0), StateSymbol::Neutral);
        assert_eq!(classify(imbalance_ratio(2.0, 1.9).unwrap(), 0.0), StateSymbol::Buying);
        assert_eq!(classify(imbalance_ratio(1.9, 2.0).unwrap(), 0.0), StateSymbol::Selling);
        assert_eq!(classify(imbalance_ratio(0.0, 0.0).unwrap(), 0.0), StateSymbol::Inactive);
    }

    proptest! {
        #[test]
        fn side_flip_swaps_buying_and_selling(lots in proptest::collection::vec(0.1f64..10.0, 1..20),
                                              sides in proptest::collection::vec(any::<bool>(), 1..20)) {
            let n = lots.len().min(sides.len());
            let trades: Vec<Trade> = (0..n)
                .map(|i| {
                    let side = if sides[i] { Side::Long } else { Side::Short };
                    trade("T1", 9 + (i as u32) % 4, (i as u32 * 7) % 60, side, lots[i])
                })
                .collect();
            let table = TradeTable::from_trades(trades);
            let flipped = table.flipped_sides();
            let g = hour_grid();
            let id = TraderId::from("T1");
            let a = state_series(&table, &id, &g, 0.25).unwrap();
            let b = state_series(&flipped, &id, &g, 0.25).unwrap();
            for (x, y) in a.states.iter().zip(&b.states) {
                let expected = match x {
                    StateSymbol::Buying => StateSymbol::Selling,
                    StateSymbol::Selling => StateSymbol::Buying,
                    other => *other,
                };
                prop_assert_eq!(expected, *y);
            }
        }

        #[test]
        fn states_are_scale_free(scale in 0.001f64..1000.0) {
            let trades = vec![
                trade("T1", 9, 10, Side::Long, 3.0),
                trade("T1", 9, 40, Side::Short, 1.0),
                trade("T1", 10, 10, Side::Short, 2.5),
            ];
            let scaled: Vec<Trade> = trades
                .iter()
                .map(|t| Trade { lots: t.lots * scale, ..t.clone() })
                .collect();
            let g = hour_grid();
            let id = TraderId::from("T1");
            let a = state_series(&TradeTable::from_trades(trades), &id, &g, 0.25).unwrap();
            let b = state_series(&TradeTable::from_trades(scaled), &id, &g, 0.25).unwrap();
            prop_assert_eq!(a.states, b.states);
        }
    }
}
