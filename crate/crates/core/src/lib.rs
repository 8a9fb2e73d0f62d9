//! Precoder optimization for multi-antenna non-orthogonal unicast and
//! multicast (NOUM) downlink transmission.
//!
//! The toolkit covers five transmission strategies — multi-user linear
//! precoding, 1-layer rate splitting, generalized rate splitting, SC-SIC and
//! SC-SIC per group — plus an orthogonal baseline, and two iterative precoder
//! designs: a WMMSE alternating optimization for weighted sum rate and a
//! successive convex approximation for energy efficiency, both under QoS rate
//! constraints and a sum power budget, with optional sample-averaged imperfect
//! CSIT.
//!
//! Module map:
//! - [`model`]: shared domain types, stream layouts, power accounting
//! - [`rates`]: the ground-truth SINR/rate/feasibility oracle
//! - [`conic`]: conic-program modeling layer and interior-point backend
//! - [`wmmse`]: rate-WMMSE transformation and alternating optimization
//! - [`sca_ee`]: energy-efficiency maximization via successive convex
//!   approximation
//! - [`scenarios`]: channel generation, CSIT sampling, scheduling,
//!   order/grouping enumeration

pub mod conic;
pub mod model;
pub mod rates;
pub mod sca_ee;
pub mod scenarios;
pub mod wmmse;

pub use model::{
    stream_layout, total_power, AlgorithmConfig, ChannelSet, CommonRateAllocation, ConfigError,
    PowerModel, PrecoderSet, QosSpec, RateReport, StrategyConfig, StrategyKind, StreamId,
    StreamLayout, SystemConfig, WeightVector,
};
