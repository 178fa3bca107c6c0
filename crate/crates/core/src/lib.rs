//! Outage, diversity and throughput analysis of cooperative HARQ with
//! incremental redundancy over time-correlated Nakagami-m fading.
//!
//! The analytical path approximates the distribution of the accumulated
//! product `Y = ∏(1 + γ_l)` by matching inverse moments `E[Y^{-n}]` against a
//! Lognormal base density with an orthonormal correction series. A Monte
//! Carlo sampler of the same fading model serves as the reference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod diversity;
pub mod error;
pub mod lauricella;
pub mod matcher;
pub mod moments;
pub mod monte_carlo;
pub mod outage;
mod par;
pub mod quadrature;
pub mod special;
pub mod throughput;

pub use channel::{joint_pdf, LinkKind, LinkModel, SystemConfig};
pub use diversity::{estimate_diversity, DiversityEstimate};
pub use error::{Error, Result};
pub use matcher::{build_matched_cdf, select_degree, LognormalBase, MatchedCdf};
pub use moments::{LogStats, MomentMethod, ProductRvSpec};
pub use monte_carlo::{empirical_cdf, simulate_protocol, SimResult};
pub use outage::{outage_bounds, DegreeRule, OutageEngine, OutageReport, OutageSettings, ProductKey};
pub use throughput::{ltat, optimal_rate, RateSolution};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
