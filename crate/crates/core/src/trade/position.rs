use super::{EpochGrid, TradeTable, TraderId};
use std::collections::BTreeMap;

/// Net position of one trader sampled on an [`EpochGrid`].
///
/// Value at epoch `t` is the sum of `lots * side_sign` over trades open at
/// `t`, where a trade is open on `[open_time, close_time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSeries {
    pub trader: TraderId,
    pub values: Vec<f64>,
}

/// Samples every trader's net position at each grid epoch.
///
/// Output is sorted by trader id, one series per trader present in the table,
/// each of the grid's length.
pub fn resample_positions(table: &TradeTable, grid: &EpochGrid) -> Vec<PositionSeries> {
    // Signed volume deltas per trader: +lots at open, -lots at close.
    let mut events: BTreeMap<&TraderId, Vec<(chrono::DateTime<chrono::Utc>, f64)>> =
        BTreeMap::new();
    for trade in table.trades() {
        let signed = trade.lots * trade.side.sign();
        let ev = events.entry(&trade.trader).or_default();
        ev.push((trade.open_time, signed));
        ev.push((trade.close_time, -signed));
    }

    let epochs = grid.epochs();
    events
        .into_iter()
        .map(|(trader, mut ev)| {
            ev.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap().reverse()));
            let mut values = Vec::with_capacity(epochs.len());
            let mut cursor = 0usize;
            let mut net = 0.0;
            for &t in epochs {
                while cursor < ev.len() && ev[cursor].0 <= t {
                    net += ev[cursor].1;
                    cursor += 1;
                }
                values.push(net);
            }
            PositionSeries {
                trader: trader.clone(),
                values,
            }
        })
        .collect()
}
