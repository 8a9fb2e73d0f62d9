//! SINRs, decode rates, stream rate caps, allocation feasibility, weighted
//! sum rate and energy efficiency — the single ground-truth rate oracle used
//! by every solver and experiment.
//!
//! For user `k` decoding stream `s`, every stream not yet cancelled (and not
//! `s` itself) contributes interference:
//!
//! ```text
//! sinr = |h_k^H p_s|^2 / (sum_{j in I} |h_k^H p_j|^2 + sigma_k^2)
//! ```
//!
//! where `I` contains all streams except those strictly earlier in `k`'s
//! decode chain and except `s`. Streams the user never decodes always remain
//! in `I`. Rates are `log2(1 + sinr)` in bit/s/Hz. A shared stream's rate cap
//! is the minimum decode rate over the users that must decode it (the
//! weakest-receiver rule); a private stream's cap is its own rate.
//!
//! Under imperfect CSIT the per-(stream, user) rates are averaged over the
//! channel samples first and the weakest-receiver minimum is applied to the
//! averaged rates.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{
    total_power, ChannelSet, CommonRateAllocation, PowerModel, PrecoderSet, QosSpec, RateReport,
    StreamId, StreamLayout, SystemConfig, WeightVector,
};

/// Contract violations when querying rates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("user {user} does not decode stream {stream}")]
    StreamNotInChain { user: usize, stream: String },
    #[error("channel set carries no samples")]
    NoSamples,
}

fn received_power(h: &DVector<Complex64>, p: &DVector<Complex64>) -> f64 {
    h.dotc(p).norm_sqr()
}

/// SINR of `user` decoding `stream` at one channel realization.
pub fn sinr(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    user: usize,
    stream: &StreamId,
) -> Result<f64, RateError> {
    let pos = layout
        .chain_position(user, stream)
        .ok_or_else(|| RateError::StreamNotInChain {
            user,
            stream: stream.to_string(),
        })?;
    let h = &sample[user];
    let chain = layout.chain(user);
    let cancelled = &chain[..pos];
    let mut interference = sys.noise_variance(user);
    for s in layout.streams() {
        if s == stream || cancelled.contains(s) {
            continue;
        }
        if let Some(p) = precoders.get(s) {
            interference += received_power(h, p);
        }
    }
    let signal = precoders.get(stream).map_or(0.0, |p| received_power(h, p));
    Ok(signal / interference)
}

/// Decode rate `log2(1 + sinr)` of every (stream, decoder) pair at one
/// channel realization.
pub fn decode_rates(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
) -> BTreeMap<StreamId, BTreeMap<usize, f64>> {
    let mut rates: BTreeMap<StreamId, BTreeMap<usize, f64>> = BTreeMap::new();
    for stream in layout.streams() {
        let mut per_user = BTreeMap::new();
        for user in layout.decoders(stream) {
            let g = sinr(sample, sys, precoders, layout, user, stream)
                .expect("decoders() only returns chain members");
            per_user.insert(user, (1.0 + g).log2());
        }
        rates.insert(stream.clone(), per_user);
    }
    rates
}

/// Rate caps from a decode-rate table: the minimum over each stream's
/// decoders.
pub fn caps_from_rates(
    rates: &BTreeMap<StreamId, BTreeMap<usize, f64>>,
) -> BTreeMap<StreamId, f64> {
    rates
        .iter()
        .map(|(s, per_user)| {
            let cap = per_user.values().copied().fold(f64::INFINITY, f64::min);
            (s.clone(), if cap.is_finite() { cap } else { 0.0 })
        })
        .collect()
}

/// Per-stream rate caps at one channel realization.
pub fn stream_rate_caps(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
) -> BTreeMap<StreamId, f64> {
    caps_from_rates(&decode_rates(sample, sys, precoders, layout))
}

/// Outcome of checking an allocation against caps and QoS thresholds.
///
/// Each entry pairs a constraint label with its slack (nonnegative means
/// satisfied). Infeasibility is reported, never thrown.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub entries: Vec<(String, f64)>,
}

impl FeasibilityReport {
    pub fn feasible(&self, tolerance: f64) -> bool {
        self.entries.iter().all(|(_, slack)| *slack >= -tolerance)
    }

    pub fn worst_slack(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn slack(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| *s)
    }
}

/// Checks that (a) every stream's portions fit under its cap, (b) the
/// multicast portion meets its threshold, (c) every user's total unicast rate
/// meets its threshold, and (d) all portions are nonnegative.
pub fn validate_allocation(
    alloc: &CommonRateAllocation,
    caps: &BTreeMap<StreamId, f64>,
    qos: &QosSpec,
    layout: &StreamLayout,
) -> FeasibilityReport {
    let mut entries = Vec::new();
    let mc = layout.multicast_stream();

    entries.push((
        "multicast_portion >= 0".to_string(),
        alloc.multicast_portion(),
    ));
    for stream in layout.splittable_streams() {
        for &user in layout.portion_users(stream) {
            entries.push((
                format!("portion {stream} user {} >= 0", user + 1),
                alloc.portion(stream, user),
            ));
        }
    }

    // (a) sharing constraints: whatever rides on a stream fits under its cap.
    for stream in layout.streams() {
        let load = alloc.stream_total(stream);
        if stream == mc || load > 0.0 {
            let cap = caps.get(stream).copied().unwrap_or(0.0);
            entries.push((format!("cap {stream}"), cap - load));
        }
    }

    // (b) multicast QoS.
    entries.push((
        "multicast_threshold".to_string(),
        alloc.multicast_portion() - qos.multicast_threshold(),
    ));

    // (c) per-user unicast QoS on R_{k,tot}.
    for user in 0..layout.num_users() {
        let private = layout
            .private_stream_of(user)
            .and_then(|s| caps.get(s))
            .copied()
            .unwrap_or(0.0);
        let total = alloc.user_common_total(user) + private;
        entries.push((
            format!("unicast_threshold user {}", user + 1),
            total - qos.unicast_threshold(user),
        ));
    }

    FeasibilityReport { entries }
}

fn report_from_rate_table(
    rates: BTreeMap<StreamId, BTreeMap<usize, f64>>,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    alloc: &CommonRateAllocation,
    weights: &WeightVector,
    pm: &PowerModel,
    sys: &SystemConfig,
) -> RateReport {
    let caps = caps_from_rates(&rates);
    let user_totals: Vec<f64> = (0..layout.num_users())
        .map(|user| {
            let private = layout
                .private_stream_of(user)
                .and_then(|s| caps.get(s))
                .copied()
                .unwrap_or(0.0);
            alloc.user_common_total(user) + private
        })
        .collect();
    let wsr: f64 = user_totals
        .iter()
        .enumerate()
        .map(|(u, r)| weights.unicast_weight(u) * r)
        .sum();
    let power = total_power(precoders, pm, sys);
    let numerator = weights.multicast_weight() * alloc.multicast_portion() + wsr;
    RateReport {
        decode_rates: rates,
        stream_caps: caps,
        allocation: alloc.clone(),
        user_totals,
        wsr,
        total_power: power,
        ee: numerator / power,
    }
}

/// Full rate report at one channel realization.
pub fn report(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    alloc: &CommonRateAllocation,
    weights: &WeightVector,
    pm: &PowerModel,
) -> RateReport {
    let rates = decode_rates(sample, sys, precoders, layout);
    report_from_rate_table(rates, precoders, layout, alloc, weights, pm, sys)
}

/// Rate report averaged over the channel samples of `channels`: per-stream
/// per-user decode rates are sample means; caps and everything downstream are
/// computed from the averaged rates.
pub fn average_report(
    channels: &ChannelSet,
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    alloc: &CommonRateAllocation,
    weights: &WeightVector,
    pm: &PowerModel,
) -> Result<RateReport, RateError> {
    let m = channels.sample_count();
    if m == 0 {
        return Err(RateError::NoSamples);
    }
    let mut averaged: BTreeMap<StreamId, BTreeMap<usize, f64>> = BTreeMap::new();
    for i in 0..m {
        let rates = decode_rates(channels.sample(i), sys, precoders, layout);
        for (stream, per_user) in rates {
            let entry = averaged.entry(stream).or_default();
            for (user, rate) in per_user {
                *entry.entry(user).or_insert(0.0) += rate / m as f64;
            }
        }
    }
    Ok(report_from_rate_table(
        averaged, precoders, layout, alloc, weights, pm, sys,
    ))
}
