//! Capacity planner for multi-model LLM serving.
//!
//! Given per-prompt quality scores for each model, latency profiles for each
//! (model, tensor parallelism, compute fraction) and a GPU budget, it picks
//! a system setup and routing fractions that maximize average score while
//! keeping traffic-weighted latency under a target.

pub mod cli;
pub mod error;
pub mod latency;
pub mod routing_opt;
pub mod score_dual;
pub mod setup_search;
pub mod workload;

pub use error::{Error, Result};
pub use latency::{Metric, ProfileLibrary};
pub use routing_opt::{optimize_beta, optimize_fractions, BetaParams, PgaParams, RoutingContext, RoutingFractions};
pub use score_dual::{solve_dual, DualPrices, SubgradientParams, TargetCounts};
pub use setup_search::{select_setup, MemoryTable, Rho, SearchContext, SetupSpace, SystemSetup};
pub use workload::ScoreMatrix;
