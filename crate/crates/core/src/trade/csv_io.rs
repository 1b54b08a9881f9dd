use super::{EpochGrid, PositionSeries, Side, Trade, TradeError, TradeTable, TraderId};
use chrono::{DateTime, SecondsFormat, Utc};
use std::io::{Read, Write};

pub const TRADE_HEADER: &str = "trader_id,open_time,close_time,symbol,side,lots";

/// Parses the trade CSV format: `trader_id,open_time,close_time,symbol,side,lots`
/// with ISO-8601 UTC timestamps. The first malformed row aborts the parse with
/// its line number.
pub fn parse_trades<R: Read>(reader: R) -> Result<TradeTable, TradeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    {
        let headers = rdr.headers()?;
        let found = headers.iter().collect::<Vec<_>>().join(",");
        if found != TRADE_HEADER {
            return Err(TradeError::Header {
                expected: TRADE_HEADER.to_owned(),
                found,
            });
        }
    }

    let mut trades = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 6 {
            return Err(TradeError::RowArity {
                line,
                expected: 6,
                found: record.len(),
            });
        }
        let trader = TraderId::new(&record[0]);
        let open_time = parse_time(&record[1], line, "open_time")?;
        let close_time = parse_time(&record[2], line, "close_time")?;
        let symbol = record[3].to_owned();
        let side = Side::parse(&record[4]).ok_or_else(|| TradeError::RowField {
            line,
            field: "side",
            message: format!("expected `long` or `short`, got `{}`", &record[4]),
        })?;
        let lots: f64 = record[5].parse().map_err(|e| TradeError::RowField {
            line,
            field: "lots",
            message: format!("{e}"),
        })?;
        if close_time <= open_time {
            return Err(TradeError::CloseNotAfterOpen {
                line,
                open: record[1].to_owned(),
                close: record[2].to_owned(),
            });
        }
        if !(lots > 0.0) {
            return Err(TradeError::NonPositiveLots { line, lots });
        }
        trades.push(Trade {
            trader,
            open_time,
            close_time,
            symbol,
            side,
            lots,
        });
    }
    Ok(TradeTable::from_trades(trades))
}

fn parse_time(s: &str, line: u64, field: &'static str) -> Result<DateTime<Utc>, TradeError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| TradeError::RowField {
            line,
            field,
            message: format!("{e}"),
        })
}

/// Writes a table back out in the same CSV schema `parse_trades` reads.
pub fn write_trades<W: Write>(table: &TradeTable, writer: W) -> Result<(), TradeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRADE_HEADER.split(','))?;
    for t in table.trades() {
        w.write_record(&[
            t.trader.as_str().to_owned(),
            t.open_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            t.close_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            t.symbol.clone(),
            t.side.as_str().to_owned(),
            format!("{}", t.lots),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exports position series as `epoch,trader_id,net_position` rows. Flat
/// (exactly zero) positions are omitted; readers treat missing pairs as
/// zero.
pub fn write_positions<W: Write>(
    series: &[PositionSeries],
    grid: &EpochGrid,
    writer: W,
) -> Result<(), TradeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "trader_id", "net_position"])?;
    for s in series {
        for (t, v) in grid.epochs().iter().zip(&s.values) {
            if *v != 0.0 {
                w.write_record(&[
                    t.to_rfc3339_opts(SecondsFormat::Secs, true),
                    s.trader.as_str().to_owned(),
                    format!("{v}"),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
