//! Co-trading network analysis and cluster-aware online portfolio
//! aggregation.
//!
//! The crate turns a ledger of client trades into:
//!
//! - discrete per-trader state series on a configurable time partition,
//! - statistically validated synchronisation networks (hypergeometric test
//!   with Bonferroni correction),
//! - flat cluster partitions via map-equation search or average-linkage
//!   clustering on net-position correlations,
//! - Ewens-distribution fits of cluster-size histograms over sliding windows,
//! - temporal cluster flows (persist / split / merge / birth / death), and
//! - portfolio backtests driven by the Aggregating Algorithm and its
//!   cluster-aware variants.
//!
//! Everything is deterministic given explicit seeds, so full pipeline runs
//! are reproducible byte for byte. The `cotrade` binary exposes the pipeline
//! stages as subcommands; see the repository README for the file formats.

pub mod backtest;
pub mod community;
pub mod config;
pub mod ewens;
pub mod flow;
pub mod games;
pub mod pipeline;
pub mod states;
pub mod svn;
pub mod trade;
