use super::{BusinessCalendar, Side, Trade, TradeError, TradeTable, TraderId};
use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

/// Planted-group market generator.
///
/// The first `groups * group_size` traders are split into groups that react
/// to per-group direction signals: at each business slice a group fires a
/// signal with probability `signal_rate`, and each member follows it with
/// probability `p_sync`. All traders additionally place independent
/// random-direction trades at `noise_rate` per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub traders: usize,
    pub groups: usize,
    pub group_size: usize,
    pub p_sync: f64,
    pub signal_rate: f64,
    pub noise_rate: f64,
    /// Trade lifetime drawn uniformly from `1..=hold_slices_max` slices.
    pub hold_slices_max: usize,
    /// Lots are LogNormal(0, lot_sigma).
    pub lot_sigma: f64,
    pub start: DateTime<Utc>,
    pub horizon_days: i64,
    pub slice_minutes: i64,
    pub symbol: String,
    pub calendar: Option<BusinessCalendar>,
}

impl MarketConfig {
    fn validate(&self) -> Result<(), TradeError> {
        let mut problems = Vec::new();
        if self.traders == 0 {
            problems.push("traders must be >= 1".to_owned());
        }
        if !(self.p_sync > 0.0 && self.p_sync <= 1.0) {
            problems.push(format!("p_sync must lie in (0, 1], got {}", self.p_sync));
        }
        if self.groups * self.group_size > self.traders {
            problems.push(format!(
                "groups * group_size = {} exceeds traders = {}",
                self.groups * self.group_size,
                self.traders
            ));
        }
        for (name, rate) in [("signal_rate", self.signal_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                problems.push(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        if self.hold_slices_max == 0 {
            problems.push("hold_slices_max must be >= 1".to_owned());
        }
        if self.horizon_days <= 0 {
            problems.push("horizon_days must be >= 1".to_owned());
        }
        if self.slice_minutes <= 0 {
            problems.push("slice_minutes must be >= 1".to_owned());
        }
        if !(self.lot_sigma >= 0.0 && self.lot_sigma.is_finite()) {
            problems.push(format!("lot_sigma must be finite and >= 0, got {}", self.lot_sigma));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TradeError::Generator(problems.join("; ")))
        }
    }

    /// Group index of a trader, if it belongs to a planted group.
    pub fn group_of(&self, trader_index: usize) -> Option<usize> {
        if trader_index < self.groups * self.group_size {
            Some(trader_index / self.group_size)
        } else {
            None
        }
    }

    pub fn trader_id(&self, trader_index: usize) -> TraderId {
        TraderId::new(format!("T{trader_index:05}"))
    }
}

/// Deterministically generates a trade table from `(config, seed)`.
pub fn generate_synthetic_market(
    config: &MarketConfig,
    seed: u64,
) -> Result<TradeTable, TradeError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lots_dist = LogNormal::new(0.0, config.lot_sigma)
        .map_err(|e| TradeError::Generator(format!("lot distribution: {e}")))?;

    let end = config.start + Duration::days(config.horizon_days);
    let step = Duration::minutes(config.slice_minutes);
    let slices = super::grid::progression(config.start, end, step, config.calendar.as_ref(), true);

    let mut trades = Vec::new();
    let open = |rng: &mut ChaCha8Rng,
                    trades: &mut Vec<Trade>,
                    trader: usize,
                    slice_start: DateTime<Utc>,
                    side: Side| {
        let hold = rng.gen_range(1..=config.hold_slices_max) as i64;
        let lots = lots_dist.sample(rng).max(0.01);
        trades.push(Trade {
            trader: config.trader_id(trader),
            open_time: slice_start,
            close_time: slice_start + step * hold as i32,
            symbol: config.symbol.clone(),
            side,
            lots,
        });
    };

    for &slice_start in &slices {
        for group in 0..config.groups {
            if rng.gen::<f64>() < config.signal_rate {
                let side = if rng.gen::<bool>() { Side::Long } else { Side::Short };
                for member in 0..config.group_size {
                    let trader = group * config.group_size + member;
                    if rng.gen::<f64>() < config.p_sync {
                        open(&mut rng, &mut trades, trader, slice_start, side);
                    }
                }
            }
        }
        if config.noise_rate > 0.0 {
            for trader in 0..config.traders {
                if rng.gen::<f64>() < config.noise_rate {
                    let side = if rng.gen::<bool>() { Side::Long } else { Side::Short };
                    open(&mut rng, &mut trades, trader, slice_start, side);
                }
            }
        }
    }

    Ok(TradeTable::from_trades(trades))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade::write_trades;
    use chrono::TimeZone;

    fn base_config() -> MarketConfig {
        MarketConfig {
            traders: 10,
            groups: 2,
            group_size: 3,
            p_sync: 0.9,
            signal_rate: 0.3,
            noise_rate: 0.05,
            hold_slices_max: 2,
            lot_sigma: 0.4,
            start: Utc.with_ymd_and_hms(2015, 1, 5, 6, 0, 0).unwrap(),
            horizon_days: 10,
            slice_minutes: 60,
            symbol: "EURUSD".to_owned(),
            calendar: Some(BusinessCalendar::default_active_hours()),
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = base_config();
        let a = generate_synthetic_market(&cfg, 7).unwrap();
        let b = generate_synthetic_market(&cfg, 7).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_trades(&a, &mut ba).unwrap();
        write_trades(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let c = generate_synthetic_market(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn p_sync_one_makes_group_members_identical() {
        let mut cfg = base_config();
        cfg.p_sync = 1.0;
        cfg.noise_rate = 0.0;
        cfg.traders = 6;
        let table = generate_synthetic_market(&cfg, 3).unwrap();
        // Members of group 0 open the same-direction trade at every signal
        // slice; lots and holding times are member-specific.
        let sig = |idx: usize| -> Vec<_> {
            table
                .trades()
                .iter()
                .filter(|t| t.trader == cfg.trader_id(idx))
                .map(|t| (t.open_time, t.side))
                .collect::<Vec<_>>()
        };
        assert!(!sig(0).is_empty());
        assert_eq!(sig(0), sig(1));
        assert_eq!(sig(0), sig(2));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = base_config();
        cfg.traders = 0;
        assert!(matches!(
            generate_synthetic_market(&cfg, 1),
            Err(TradeError::Generator(_))
        ));
        let mut cfg = base_config();
        cfg.p_sync = 0.0;
        assert!(generate_synthetic_market(&cfg, 1).is_err());
        let mut cfg = base_config();
        cfg.p_sync = 1.5;
        assert!(generate_synthetic_market(&cfg, 1).is_err());
    }

    #[test]
    fn trades_satisfy_table_invariants() {
        let table = generate_synthetic_market(&base_config(), 11).unwrap();
        assert!(!table.is_empty());
        for t in table.trades() {
            assert!(t.close_time > t.open_time);
            assert!(t.lots > 0.0);
        }
        for pair in table.trades().windows(2) {
            assert!(pair[0].open_time <= pair[1].open_time);
        }
    }
}
