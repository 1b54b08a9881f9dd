//! Flat `key = value` run configuration shared by every pipeline stage.
//!
//! Unknown keys, unparsable values and domain violations are collected and
//! reported together rather than one at a time.

use crate::backtest::Strategy;
use crate::games::LossKind;
use chrono::{DateTime, NaiveTime, Utc};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid configuration:\n{}", violations.join("\n"))]
pub struct ConfigError {
    pub violations: Vec<String>,
}

/// How the cluster stage groups traders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusteringMethod {
    SvnInfomap,
    Hierarchical,
}

impl ClusteringMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusteringMethod::SvnInfomap => "svn-infomap",
            ClusteringMethod::Hierarchical => "hierarchical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "svn-infomap" => Some(ClusteringMethod::SvnInfomap),
            "hierarchical" => Some(ClusteringMethod::Hierarchical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // io
    pub out_dir: PathBuf,
    pub trades_path: Option<PathBuf>,
    pub returns_path: Option<PathBuf>,
    // synthetic market
    pub seed: u64,
    pub traders: usize,
    pub groups: usize,
    pub group_size: usize,
    pub p_sync: f64,
    pub signal_rate: f64,
    pub noise_rate: f64,
    pub hold_slices_max: usize,
    pub lot_sigma: f64,
    pub start: DateTime<Utc>,
    pub horizon_days: i64,
    pub gen_slice_minutes: i64,
    pub symbol: String,
    // calendar
    pub business_start: NaiveTime,
    pub business_end: NaiveTime,
    pub business_days_only: bool,
    // states
    pub deltas_minutes: Vec<i64>,
    pub state_threshold: f64,
    // svn
    pub cutoff: usize,
    pub alpha: f64,
    // sliding windows
    pub window_days: i64,
    pub step_days: i64,
    // clustering
    pub clustering: ClusteringMethod,
    pub hier_threshold_pct: f64,
    pub infomap_seed: u64,
    // ewens fit
    pub conditional: bool,
    pub gof_alpha: f64,
    // flow tracking
    pub min_jaccard: f64,
    // backtest
    pub strategies: Vec<Strategy>,
    pub rhos: Vec<f64>,
    pub eta: f64,
    pub loss: LossKind,
    pub position_step_minutes: i64,
    pub returns_vol: f64,
    pub returns_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            trades_path: None,
            returns_path: None,
            seed: 42,
            traders: 100,
            groups: 3,
            group_size: 20,
            p_sync: 0.9,
            signal_rate: 0.25,
            noise_rate: 0.02,
            hold_slices_max: 4,
            lot_sigma: 0.5,
            start: "2015-01-05T06:00:00Z".parse().unwrap(),
            horizon_days: 120,
            gen_slice_minutes: 60,
            symbol: "EURUSD".to_owned(),
            business_start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            business_end: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            business_days_only: true,
            deltas_minutes: crate::states::DELTA_MENU_MINUTES.to_vec(),
            state_threshold: 0.25,
            cutoff: 100,
            alpha: 0.05,
            window_days: 56,
            step_days: 7,
            clustering: ClusteringMethod::SvnInfomap,
            hier_threshold_pct: 70.0,
            infomap_seed: 7,
            conditional: true,
            gof_alpha: 0.05,
            min_jaccard: 0.3,
            strategies: vec![Strategy::EqualWeight, Strategy::Aa],
            rhos: vec![1.0],
            eta: 1.0,
            loss: LossKind::Downside,
            position_step_minutes: 60,
            returns_vol: 0.001,
            returns_seed: 9,
        }
    }
}

impl RunConfig {
    /// Parses the flat `key = value` format. Lines starting with `#` and
    /// blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let mut violations = Vec::new();

        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                violations.push(format!("line {}: expected `key = value`, got `{line}`", lineno + 1));
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key, value).is_some() {
                violations.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }

        for (key, value) in seen {
            if let Err(msg) = config.apply(key, value) {
                violations.push(msg);
            }
        }
        config.validate(&mut violations);
        if violations.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError { violations })
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| format!("key `{key}`: cannot parse `{value}`: {e}"))
        }
        fn time(key: &str, value: &str) -> Result<NaiveTime, String> {
            NaiveTime::parse_from_str(value, "%H:%M")
                .or_else(|_| NaiveTime::parse_from_str(value, "%H:%M:%S"))
                .map_err(|e| format!("key `{key}`: cannot parse `{value}` as HH:MM: {e}"))
        }

        match key {
            "out_dir" => self.out_dir = PathBuf::from(value),
            "trades_path" => self.trades_path = Some(PathBuf::from(value)),
            "returns_path" => self.returns_path = Some(PathBuf::from(value)),
            "seed" => self.seed = num(key, value)?,
            "traders" => self.traders = num(key, value)?,
            "groups" => self.groups = num(key, value)?,
            "group_size" => self.group_size = num(key, value)?,
            "p_sync" => self.p_sync = num(key, value)?,
            "signal_rate" => self.signal_rate = num(key, value)?,
            "noise_rate" => self.noise_rate = num(key, value)?,
            "hold_slices_max" => self.hold_slices_max = num(key, value)?,
            "lot_sigma" => self.lot_sigma = num(key, value)?,
            "start" => {
                self.start = value
                    .parse()
                    .map_err(|e| format!("key `start`: cannot parse `{value}` as RFC3339: {e}"))?
            }
            "horizon_days" => self.horizon_days = num(key, value)?,
            "gen_slice_minutes" => self.gen_slice_minutes = num(key, value)?,
            "symbol" => self.symbol = value.to_owned(),
            "business_start" => self.business_start = time(key, value)?,
            "business_end" => self.business_end = time(key, value)?,
            "business_days_only" => self.business_days_only = num(key, value)?,
            "deltas_minutes" => {
                self.deltas_minutes = value
                    .split(',')
                    .map(|v| num("deltas_minutes", v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "state_threshold" => self.state_threshold = num(key, value)?,
            "cutoff" => self.cutoff = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "window_days" => self.window_days = num(key, value)?,
            "step_days" => self.step_days = num(key, value)?,
            "clustering" => {
                self.clustering = ClusteringMethod::parse(value)
                    .ok_or_else(|| format!("key `clustering`: expected svn-infomap or hierarchical, got `{value}`"))?
            }
            "hier_threshold_pct" => self.hier_threshold_pct = num(key, value)?,
            "infomap_seed" => self.infomap_seed = num(key, value)?,
            "conditional" => self.conditional = num(key, value)?,
            "gof_alpha" => self.gof_alpha = num(key, value)?,
            "min_jaccard" => self.min_jaccard = num(key, value)?,
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .map(|v| {
                        Strategy::parse(v.trim()).ok_or_else(|| {
                            format!("key `strategies`: unknown strategy `{}`", v.trim())
                        })
                    })
                    .collect::<Result<_, _>>()?
            }
            "rhos" => {
                self.rhos = value
                    .split(',')
                    .map(|v| num("rhos", v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "eta" => self.eta = num(key, value)?,
            "loss" => {
                self.loss = LossKind::parse(value)
                    .ok_or_else(|| format!("key `loss`: expected long-short or downside, got `{value}`"))?
            }
            "position_step_minutes" => self.position_step_minutes = num(key, value)?,
            "returns_vol" => self.returns_vol = num(key, value)?,
            "returns_seed" => self.returns_seed = num(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn validate(&self, violations: &mut Vec<String>) {
        if self.traders == 0 {
            violations.push("traders must be >= 1".into());
        }
        if !(self.p_sync > 0.0 && self.p_sync <= 1.0) {
            violations.push(format!("p_sync must lie in (0, 1], got {}", self.p_sync));
        }
        if self.groups * self.group_size > self.traders {
            violations.push(format!(
                "groups * group_size = {} exceeds traders = {}",
                self.groups * self.group_size,
                self.traders
            ));
        }
        for (name, rate) in [("signal_rate", self.signal_rate), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                violations.push(format!("{name} must lie in [0, 1], got {rate}"));
            }
        }
        if !(0.0..1.0).contains(&self.state_threshold) {
            violations.push(format!(
                "state_threshold must lie in [0, 1), got {}",
                self.state_threshold
            ));
        }
        for (name, alpha) in [("alpha", self.alpha), ("gof_alpha", self.gof_alpha)] {
            if !(alpha > 0.0 && alpha < 1.0) {
                violations.push(format!("{name} must lie in (0, 1), got {alpha}"));
            }
        }
        if self.cutoff == 0 {
            violations.push("cutoff must be >= 1".into());
        }
        if self.deltas_minutes.is_empty() || self.deltas_minutes.iter().any(|d| *d <= 0) {
            violations.push("deltas_minutes must be a nonempty list of positive minutes".into());
        }
        if !(self.step_days > 0 && self.window_days > self.step_days) {
            violations.push(format!(
                "need window_days > step_days > 0, got {} and {}",
                self.window_days, self.step_days
            ));
        }
        if self.horizon_days < self.window_days {
            violations.push(format!(
                "horizon_days {} shorter than window_days {}",
                self.horizon_days, self.window_days
            ));
        }
        if !(0.0..=100.0).contains(&self.hier_threshold_pct) {
            violations.push(format!(
                "hier_threshold_pct must lie in [0, 100], got {}",
                self.hier_threshold_pct
            ));
        }
        if !(self.min_jaccard > 0.0 && self.min_jaccard <= 1.0) {
            violations.push(format!(
                "min_jaccard must lie in (0, 1], got {}",
                self.min_jaccard
            ));
        }
        if self.strategies.is_empty() {
            violations.push("strategies must be nonempty".into());
        }
        if self.rhos.is_empty() || self.rhos.iter().any(|r| !(*r > 0.0)) {
            violations.push("rhos must be a nonempty list of positive reals".into());
        }
        if self.eta < 0.0 {
            violations.push(format!("eta must be >= 0, got {}", self.eta));
        }
        if self.gen_slice_minutes <= 0 || self.position_step_minutes <= 0 {
            violations.push("gen_slice_minutes and position_step_minutes must be positive".into());
        }
        if self.hold_slices_max == 0 {
            violations.push("hold_slices_max must be >= 1".into());
        }
        if !(self.returns_vol > 0.0) {
            violations.push(format!("returns_vol must be positive, got {}", self.returns_vol));
        }
        if self.business_start >= self.business_end {
            violations.push("business_start must precede business_end".into());
        }
    }

    /// Canonical rendering used for the manifest hash: every field, sorted.
    pub fn canonical(&self) -> String {
        let mut lines = vec![
            format!("alpha = {}", self.alpha),
            format!("business_days_only = {}", self.business_days_only),
            format!("business_end = {}", self.business_end.format("%H:%M")),
            format!("business_start = {}", self.business_start.format("%H:%M")),
            format!("clustering = {}", self.clustering.as_str()),
            format!("conditional = {}", self.conditional),
            format!("cutoff = {}", self.cutoff),
            format!(
                "deltas_minutes = {}",
                self.deltas_minutes.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("eta = {}", self.eta),
            format!("gen_slice_minutes = {}", self.gen_slice_minutes),
            format!("gof_alpha = {}", self.gof_alpha),
            format!("group_size = {}", self.group_size),
            format!("groups = {}", self.groups),
            format!("hier_threshold_pct = {}", self.hier_threshold_pct),
            format!("hold_slices_max = {}", self.hold_slices_max),
            format!("horizon_days = {}", self.horizon_days),
            format!("infomap_seed = {}", self.infomap_seed),
            format!("loss = {}", self.loss.as_str()),
            format!("lot_sigma = {}", self.lot_sigma),
            format!("min_jaccard = {}", self.min_jaccard),
            format!("noise_rate = {}", self.noise_rate),
            format!("p_sync = {}", self.p_sync),
            format!("position_step_minutes = {}", self.position_step_minutes),
            format!(
                "rhos = {}",
                self.rhos.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("returns_seed = {}", self.returns_seed),
            format!("returns_vol = {}", self.returns_vol),
            format!("seed = {}", self.seed),
            format!("signal_rate = {}", self.signal_rate),
            format!("start = {}", self.start.to_rfc3339()),
            format!("state_threshold = {}", self.state_threshold),
            format!("step_days = {}", self.step_days),
            format!(
                "strategies = {}",
                self.strategies.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
            ),
            format!("symbol = {}", self.symbol),
            format!("traders = {}", self.traders),
            format!("window_days = {}", self.window_days),
        ];
        if let Some(p) = &self.trades_path {
            lines.push(format!("trades_path = {}", p.display()));
        }
        if let Some(p) = &self.returns_path {
            lines.push(format!("returns_path = {}", p.display()));
        }
        lines.sort();
        lines.join("\n")
    }

    pub fn calendar(&self) -> crate::trade::BusinessCalendar {
        crate::trade::BusinessCalendar::new(
            self.business_start,
            self.business_end,
            self.business_days_only,
        )
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + chrono::Duration::days(self.horizon_days)
    }

    pub fn hier_threshold(&self) -> f64 {
        self.hier_threshold_pct / 100.0
    }
}
