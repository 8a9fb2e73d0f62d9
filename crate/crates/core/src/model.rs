//! Domain types shared across the toolkit and the transmit-power accounting.
//!
//! The downlink under study superimposes one multicast stream on a set of
//! unicast streams sent from an `Nt`-antenna base station to `K` single-antenna
//! users. Every transmission strategy is described by a [`StreamLayout`]: the
//! set of streams on air, and for each user the ordered chain of streams it
//! decodes via successive interference cancellation. All types here are
//! immutable value objects after construction and safe to share across
//! threads.
//!
//! Total consumed power is `(1/eta) * tr(P P^H) + Nt * P_dyn + P_sta`: the
//! radiated power scaled by the amplifier efficiency plus the circuit power of
//! the active RF chains and the static overhead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

/// Errors produced when constructing or validating configuration objects.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("decoding order {order:?} is not a permutation of {expected:?}")]
    BadPermutation { order: Vec<usize>, expected: Vec<usize> },
    #[error("grouping {groups:?} is not a partition of 0..{num_users}")]
    BadPartition { groups: Vec<Vec<usize>>, num_users: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

// ---------------------------------------------------------------------------
// System and power model
// ---------------------------------------------------------------------------

/// Static description of the downlink: antennas, users, noise and the sum
/// power budget.
///
/// Noise variances default to one so that the transmit SNR equals the
/// transmit power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    num_tx_antennas: usize,
    num_users: usize,
    noise_variances: Vec<f64>,
    power_budget: f64,
}

impl SystemConfig {
    /// Creates a configuration with unit noise variance for every user.
    pub fn new(num_tx_antennas: usize, num_users: usize, power_budget: f64) -> Result<Self, ConfigError> {
        if num_tx_antennas == 0 || num_users == 0 {
            return invalid("need at least one antenna and one user");
        }
        if power_budget <= 0.0 || power_budget.is_nan() {
            return invalid("power budget must be positive");
        }
        Ok(Self {
            num_tx_antennas,
            num_users,
            noise_variances: vec![1.0; num_users],
            power_budget,
        })
    }

    /// Replaces the per-user noise variances (all must be strictly positive).
    pub fn with_noise_variances(mut self, variances: Vec<f64>) -> Result<Self, ConfigError> {
        if variances.len() != self.num_users {
            return Err(ConfigError::Dimension(format!(
                "expected {} noise variances, got {}",
                self.num_users,
                variances.len()
            )));
        }
        if variances.iter().any(|v| *v <= 0.0 || v.is_nan()) {
            return invalid("noise variances must be strictly positive");
        }
        self.noise_variances = variances;
        Ok(self)
    }

    pub fn num_tx_antennas(&self) -> usize {
        self.num_tx_antennas
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn noise_variance(&self, user: usize) -> f64 {
        self.noise_variances[user]
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    /// Sum transmit power budget `Pt` in watts.
    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }
}

/// Parametric power consumption model of the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    amplifier_efficiency: f64,
    dynamic_power_per_chain: f64,
    static_power: f64,
}

impl PowerModel {
    /// `amplifier_efficiency` in (0, 1]; dynamic and static power in watts.
    pub fn new(
        amplifier_efficiency: f64,
        dynamic_power_per_chain: f64,
        static_power: f64,
    ) -> Result<Self, ConfigError> {
        if amplifier_efficiency <= 0.0 || amplifier_efficiency > 1.0 || amplifier_efficiency.is_nan() {
            return invalid("amplifier efficiency must lie in (0, 1]");
        }
        if dynamic_power_per_chain < 0.0 || static_power < 0.0 {
            return invalid("circuit power terms must be nonnegative");
        }
        Ok(Self {
            amplifier_efficiency,
            dynamic_power_per_chain,
            static_power,
        })
    }

    /// Ideal amplifier with no circuit power; total power reduces to the
    /// radiated power.
    pub fn transmit_only() -> Self {
        Self {
            amplifier_efficiency: 1.0,
            dynamic_power_per_chain: 0.0,
            static_power: 0.0,
        }
    }

    pub fn amplifier_efficiency(&self) -> f64 {
        self.amplifier_efficiency
    }

    pub fn dynamic_power_per_chain(&self) -> f64 {
        self.dynamic_power_per_chain
    }

    pub fn static_power(&self) -> f64 {
        self.static_power
    }

    /// Circuit power `Nt * P_dyn + P_sta` for `num_tx_antennas` active chains.
    pub fn circuit_power(&self, num_tx_antennas: usize) -> f64 {
        num_tx_antennas as f64 * self.dynamic_power_per_chain + self.static_power
    }
}

/// Total consumed power `(1/eta) * tr(P P^H) + Nt * P_dyn + P_sta` in watts.
pub fn total_power(precoders: &PrecoderSet, power_model: &PowerModel, sys: &SystemConfig) -> f64 {
    precoders.transmit_power() / power_model.amplifier_efficiency()
        + power_model.circuit_power(sys.num_tx_antennas())
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Channel knowledge at the transmitter: the estimate used for optimization
/// and, under imperfect CSIT, a set of sampled realizations around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    estimated: Vec<DVector<Complex64>>,
    true_samples: Option<Vec<Vec<DVector<Complex64>>>>,
    error_covariances: Vec<f64>,
    csit_exponent: Option<f64>,
}

impl ChannelSet {
    /// Perfect CSIT: the estimate is the true channel, error covariance zero.
    pub fn perfect(channels: Vec<DVector<Complex64>>) -> Result<Self, ConfigError> {
        if channels.is_empty() {
            return invalid("channel set needs at least one user");
        }
        let nt = channels[0].len();
        if nt == 0 || channels.iter().any(|h| h.len() != nt) {
            return Err(ConfigError::Dimension(
                "all channel vectors must share a nonzero length".into(),
            ));
        }
        let k = channels.len();
        Ok(Self {
            estimated: channels,
            true_samples: None,
            error_covariances: vec![0.0; k],
            csit_exponent: None,
        })
    }

    /// Imperfect CSIT: `samples[m]` holds the `m`-th realization of all `K`
    /// true channels around the estimate.
    pub fn with_samples(
        estimated: Vec<DVector<Complex64>>,
        samples: Vec<Vec<DVector<Complex64>>>,
        error_covariances: Vec<f64>,
        csit_exponent: Option<f64>,
    ) -> Result<Self, ConfigError> {
        let base = Self::perfect(estimated)?;
        let (k, nt) = (base.num_users(), base.num_tx_antennas());
        if samples.is_empty() {
            return invalid("need at least one channel sample");
        }
        for sample in &samples {
            if sample.len() != k || sample.iter().any(|h| h.len() != nt) {
                return Err(ConfigError::Dimension(
                    "every sample must hold K vectors of length Nt".into(),
                ));
            }
        }
        if error_covariances.len() != k || error_covariances.iter().any(|v| *v < 0.0) {
            return invalid("need K nonnegative error covariances");
        }
        Ok(Self {
            true_samples: Some(samples),
            error_covariances,
            csit_exponent,
            ..base
        })
    }

    pub fn num_users(&self) -> usize {
        self.estimated.len()
    }

    pub fn num_tx_antennas(&self) -> usize {
        self.estimated[0].len()
    }

    /// The channel estimate available to the transmitter.
    pub fn estimated(&self) -> &[DVector<Complex64>] {
        &self.estimated
    }

    pub fn error_covariances(&self) -> &[f64] {
        &self.error_covariances
    }

    pub fn csit_exponent(&self) -> Option<f64> {
        self.csit_exponent
    }

    /// Number of realizations the optimizer averages over (one for perfect
    /// CSIT).
    pub fn sample_count(&self) -> usize {
        self.true_samples.as_ref().map_or(1, Vec::len)
    }

    /// The `m`-th channel realization; with perfect CSIT this is the estimate
    /// itself.
    pub fn sample(&self, m: usize) -> &[DVector<Complex64>] {
        match &self.true_samples {
            Some(samples) => &samples[m],
            None => &self.estimated,
        }
    }

    pub fn has_samples(&self) -> bool {
        self.true_samples.is_some()
    }
}

// ---------------------------------------------------------------------------
// Streams and strategies
// ---------------------------------------------------------------------------

/// Identity of one transmitted stream: the users it is intended for and
/// whether it carries the multicast message.
///
/// Ordering sorts the multicast-carrying stream first, then streams intended
/// for more users, matching decode priority. User indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamId {
    users: Vec<usize>,
    carries_multicast: bool,
}

impl StreamId {
    /// The multicast-carrying stream decoded by every listed user.
    pub fn multicast(users: impl IntoIterator<Item = usize>) -> Self {
        Self::build(users, true)
    }

    /// A common stream shared by a user subset (no multicast content).
    pub fn common(users: impl IntoIterator<Item = usize>) -> Self {
        Self::build(users, false)
    }

    /// The private unicast stream of a single user.
    pub fn unicast(user: usize) -> Self {
        Self::build([user], false)
    }

    fn build(users: impl IntoIterator<Item = usize>, carries_multicast: bool) -> Self {
        let set: BTreeSet<usize> = users.into_iter().collect();
        assert!(!set.is_empty(), "a stream needs a nonempty intended set");
        Self {
            users: set.into_iter().collect(),
            carries_multicast,
        }
    }

    /// Intended users, sorted ascending.
    pub fn intended_users(&self) -> &[usize] {
        &self.users
    }

    pub fn carries_multicast(&self) -> bool {
        self.carries_multicast
    }

    pub fn contains(&self, user: usize) -> bool {
        self.users.binary_search(&user).is_ok()
    }

    pub fn is_private(&self) -> bool {
        self.users.len() == 1 && !self.carries_multicast
    }
}

impl Ord for StreamId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .carries_multicast
            .cmp(&self.carries_multicast)
            .then(other.users.len().cmp(&self.users.len()))
            .then(self.users.cmp(&other.users))
    }
}

impl PartialOrd for StreamId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.carries_multicast {
            return write!(f, "s0");
        }
        write!(f, "s")?;
        for u in &self.users {
            write!(f, "{}", u + 1)?;
        }
        Ok(())
    }
}

/// The transmission strategy kinds supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    MuLp,
    OneLayerRs,
    GeneralizedRs,
    ScSic,
    ScSicPerGroup,
    Oma,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            StrategyKind::MuLp => "mu_lp",
            StrategyKind::OneLayerRs => "rs_1layer",
            StrategyKind::GeneralizedRs => "rs_generalized",
            StrategyKind::ScSic => "sc_sic",
            StrategyKind::ScSicPerGroup => "sc_sic_group",
            StrategyKind::Oma => "oma",
        };
        f.write_str(name)
    }
}

/// A fully specified strategy instance, including any decoding order,
/// grouping or target-user choice the kind requires.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StrategyConfig {
    /// Multi-user linear precoding; residual unicast interference treated as
    /// noise.
    MuLp,
    /// One super-common stream carrying the multicast message plus the common
    /// parts of every unicast message.
    OneLayerRs,
    /// Rate splitting over all user subsets. `mid_order` lists every subset of
    /// size between 2 and K-1 in decode order (sizes nonincreasing); it is
    /// empty for K = 2.
    GeneralizedRs { mid_order: Vec<Vec<usize>> },
    /// Superposition coding with full decode-and-cancel ordering. The
    /// multicast message rides jointly with the first-decoded user's unicast
    /// message.
    ScSic { order: Vec<usize> },
    /// Superposition coding inside each group, linear precoding across groups,
    /// and a standalone multicast stream decoded first by everyone. Each group
    /// lists its users in decode order.
    ScSicPerGroup { groups: Vec<Vec<usize>> },
    /// Orthogonal baseline: one multicast stream plus a single unicast stream
    /// for `target_user`.
    Oma { target_user: usize },
}

impl StrategyConfig {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyConfig::MuLp => StrategyKind::MuLp,
            StrategyConfig::OneLayerRs => StrategyKind::OneLayerRs,
            StrategyConfig::GeneralizedRs { .. } => StrategyKind::GeneralizedRs,
            StrategyConfig::ScSic { .. } => StrategyKind::ScSic,
            StrategyConfig::ScSicPerGroup { .. } => StrategyKind::ScSicPerGroup,
            StrategyConfig::Oma { .. } => StrategyKind::Oma,
        }
    }

    /// Generalized RS with the default (lexicographic, sizes descending)
    /// order of the mid-size subsets.
    pub fn generalized_rs_default(num_users: usize) -> Self {
        let mut mid_order = Vec::new();
        for size in (2..num_users).rev() {
            mid_order.extend(subsets_of_size(num_users, size));
        }
        StrategyConfig::GeneralizedRs { mid_order }
    }

    /// Short label for result tables, e.g. `sc_sic[2>1>3]`.
    pub fn label(&self) -> String {
        match self {
            StrategyConfig::MuLp => "mu_lp".into(),
            StrategyConfig::OneLayerRs => "rs_1layer".into(),
            StrategyConfig::GeneralizedRs { mid_order } => {
                let order: Vec<String> = mid_order
                    .iter()
                    .map(|s| s.iter().map(|u| (u + 1).to_string()).collect::<String>())
                    .collect();
                if order.is_empty() {
                    "rs_generalized".into()
                } else {
                    format!("rs_generalized[{}]", order.join(">"))
                }
            }
            StrategyConfig::ScSic { order } => {
                let o: Vec<String> = order.iter().map(|u| (u + 1).to_string()).collect();
                format!("sc_sic[{}]", o.join(">"))
            }
            StrategyConfig::ScSicPerGroup { groups } => {
                let gs: Vec<String> = groups
                    .iter()
                    .map(|g| g.iter().map(|u| (u + 1).to_string()).collect::<String>())
                    .collect();
                format!("sc_sic_group[{}]", gs.join("|"))
            }
            StrategyConfig::Oma { target_user } => format!("oma[{}]", target_user + 1),
        }
    }

    /// Checks orders, partitions and indices against the system size.
    pub fn validate(&self, num_users: usize) -> Result<(), ConfigError> {
        match self {
            StrategyConfig::MuLp | StrategyConfig::OneLayerRs => Ok(()),
            StrategyConfig::GeneralizedRs { mid_order } => {
                let mut expected: BTreeSet<Vec<usize>> = BTreeSet::new();
                for size in 2..num_users {
                    expected.extend(subsets_of_size(num_users, size));
                }
                let got: BTreeSet<Vec<usize>> = mid_order.iter().cloned().collect();
                if got != expected || mid_order.len() != expected.len() {
                    return invalid(format!(
                        "mid_order must list every subset of size 2..{} exactly once",
                        num_users.saturating_sub(1)
                    ));
                }
                if mid_order.windows(2).any(|w| w[0].len() < w[1].len()) {
                    return invalid("mid_order sizes must be nonincreasing (larger subsets decode first)");
                }
                Ok(())
            }
            StrategyConfig::ScSic { order } => check_permutation(order, num_users),
            StrategyConfig::ScSicPerGroup { groups } => {
                let mut seen = BTreeSet::new();
                for group in groups {
                    if group.is_empty() {
                        return Err(ConfigError::BadPartition {
                            groups: groups.clone(),
                            num_users,
                        });
                    }
                    for &u in group {
                        if u >= num_users || !seen.insert(u) {
                            return Err(ConfigError::BadPartition {
                                groups: groups.clone(),
                                num_users,
                            });
                        }
                    }
                }
                if seen.len() != num_users {
                    return Err(ConfigError::BadPartition {
                        groups: groups.clone(),
                        num_users,
                    });
                }
                Ok(())
            }
            StrategyConfig::Oma { target_user } => {
                if *target_user >= num_users {
                    return invalid(format!("OMA target user {target_user} out of range"));
                }
                Ok(())
            }
        }
    }
}

fn check_permutation(order: &[usize], num_users: usize) -> Result<(), ConfigError> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..num_users).collect::<Vec<_>>() {
        return Err(ConfigError::BadPermutation {
            order: order.to_vec(),
            expected: (0..num_users).collect(),
        });
    }
    Ok(())
}

pub(crate) fn subsets_of_size(num_users: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn recurse(start: usize, n: usize, size: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for u in start..n {
            current.push(u);
            recurse(u + 1, n, size, current, out);
            current.pop();
        }
    }
    recurse(0, num_users, size, &mut current, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Stream layout
// ---------------------------------------------------------------------------

/// The streams a strategy transmits and every user's ordered decode chain.
///
/// A chain always begins with the multicast-carrying stream. `portion_users`
/// records, for each stream whose rate is split into per-user unicast
/// portions, which users may receive a portion; streams absent from the map
/// deliver the multicast message only (or a single unicast message, for
/// private streams).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamLayout {
    num_users: usize,
    streams: Vec<StreamId>,
    chains: Vec<Vec<StreamId>>,
    portion_users: BTreeMap<StreamId, Vec<usize>>,
}

impl StreamLayout {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// All streams in deterministic decode-priority order.
    pub fn streams(&self) -> &[StreamId] {
        &self.streams
    }

    /// The ordered decode chain of `user`.
    pub fn chain(&self, user: usize) -> &[StreamId] {
        &self.chains[user]
    }

    /// Users whose chain contains `stream`, ascending.
    pub fn decoders(&self, stream: &StreamId) -> Vec<usize> {
        (0..self.num_users)
            .filter(|&u| self.chains[u].contains(stream))
            .collect()
    }

    /// The multicast-carrying stream.
    pub fn multicast_stream(&self) -> &StreamId {
        self.streams
            .iter()
            .find(|s| s.carries_multicast())
            .expect("every layout carries a multicast stream")
    }

    /// The private stream owned by `user`, when the strategy gives it one.
    pub fn private_stream_of(&self, user: usize) -> Option<&StreamId> {
        let id = StreamId::unicast(user);
        self.streams.iter().find(|s| **s == id)
    }

    /// Users eligible for a unicast portion of `stream`'s rate.
    pub fn portion_users(&self, stream: &StreamId) -> &[usize] {
        self.portion_users.get(stream).map_or(&[], Vec::as_slice)
    }

    /// Streams with at least one unicast portion, in layout order.
    pub fn splittable_streams(&self) -> impl Iterator<Item = &StreamId> {
        self.streams.iter().filter(|s| self.portion_users.contains_key(s))
    }

    /// Position of `stream` in `user`'s chain, if decoded.
    pub fn chain_position(&self, user: usize, stream: &StreamId) -> Option<usize> {
        self.chains[user].iter().position(|s| s == stream)
    }

    /// The intended (owning) user of a private-role stream, i.e. a stream
    /// carrying exactly one user's unicast message and no multicast.
    pub fn owner(&self, stream: &StreamId) -> Option<usize> {
        if stream.is_private() {
            Some(stream.intended_users()[0])
        } else {
            None
        }
    }
}

/// Builds the stream set and per-user decode chains for a strategy.
///
/// Decode priority follows the rule that a stream intended for more users is
/// decoded earlier; every chain therefore starts with the multicast-carrying
/// stream. For the SC-SIC family a user additionally decodes (and cancels)
/// the streams of users ordered before it.
pub fn stream_layout(strategy: &StrategyConfig, sys: &SystemConfig) -> Result<StreamLayout, ConfigError> {
    let k = sys.num_users();
    strategy.validate(k)?;
    let all_users: Vec<usize> = (0..k).collect();
    let mc = StreamId::multicast(all_users.clone());

    let (streams, chains, portion_users) = match strategy {
        StrategyConfig::MuLp => {
            let mut streams = vec![mc.clone()];
            streams.extend((0..k).map(StreamId::unicast));
            let chains = (0..k)
                .map(|u| vec![mc.clone(), StreamId::unicast(u)])
                .collect();
            (streams, chains, BTreeMap::new())
        }
        StrategyConfig::OneLayerRs => {
            let mut streams = vec![mc.clone()];
            streams.extend((0..k).map(StreamId::unicast));
            let chains = (0..k)
                .map(|u| vec![mc.clone(), StreamId::unicast(u)])
                .collect();
            let portions = BTreeMap::from([(mc.clone(), all_users.clone())]);
            (streams, chains, portions)
        }
        StrategyConfig::GeneralizedRs { mid_order } => {
            let mut streams = vec![mc.clone()];
            let mids: Vec<StreamId> = mid_order
                .iter()
                .map(|s| StreamId::common(s.iter().copied()))
                .collect();
            streams.extend(mids.iter().cloned());
            streams.extend((0..k).map(StreamId::unicast));
            let chains: Vec<Vec<StreamId>> = (0..k)
                .map(|u| {
                    let mut chain = vec![mc.clone()];
                    chain.extend(mids.iter().filter(|s| s.contains(u)).cloned());
                    chain.push(StreamId::unicast(u));
                    chain
                })
                .collect();
            let mut portions = BTreeMap::from([(mc.clone(), all_users.clone())]);
            for mid in &mids {
                portions.insert(mid.clone(), mid.intended_users().to_vec());
            }
            (streams, chains, portions)
        }
        StrategyConfig::ScSic { order } => {
            // The first-ordered user's unicast message rides in the joint
            // stream; later users get private streams decoded by everyone
            // ordered at or after them.
            let mut streams = vec![mc.clone()];
            streams.extend(order[1..].iter().map(|&u| StreamId::unicast(u)));
            let mut chains = vec![Vec::new(); k];
            for (i, &u) in order.iter().enumerate() {
                let mut chain = vec![mc.clone()];
                chain.extend(order[1..=i].iter().map(|&v| StreamId::unicast(v)));
                chains[u] = chain;
            }
            let portions = BTreeMap::from([(mc.clone(), vec![order[0]])]);
            (streams, chains, portions)
        }
        StrategyConfig::ScSicPerGroup { groups } => {
            let mut streams = vec![mc.clone()];
            streams.extend((0..k).map(StreamId::unicast));
            let mut chains = vec![Vec::new(); k];
            for group in groups {
                for (i, &u) in group.iter().enumerate() {
                    let mut chain = vec![mc.clone()];
                    chain.extend(group[..=i].iter().map(|&v| StreamId::unicast(v)));
                    chains[u] = chain;
                }
            }
            (streams, chains, BTreeMap::new())
        }
        StrategyConfig::Oma { target_user } => {
            let streams = vec![mc.clone(), StreamId::unicast(*target_user)];
            let chains = (0..k)
                .map(|u| {
                    if u == *target_user {
                        vec![mc.clone(), StreamId::unicast(u)]
                    } else {
                        vec![mc.clone()]
                    }
                })
                .collect();
            (streams, chains, BTreeMap::new())
        }
    };

    let mut sorted = streams.clone();
    sorted.sort();
    Ok(StreamLayout {
        num_users: k,
        streams: sorted,
        chains,
        portion_users,
    })
}

// ---------------------------------------------------------------------------
// Precoders, QoS, weights, allocations
// ---------------------------------------------------------------------------

/// One complex precoding vector per stream; the optimization variable `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    columns: BTreeMap<StreamId, DVector<Complex64>>,
}

impl PrecoderSet {
    pub fn new(columns: BTreeMap<StreamId, DVector<Complex64>>) -> Self {
        Self { columns }
    }

    /// All-zero precoders for every stream of `layout`.
    pub fn zeros(layout: &StreamLayout, num_tx_antennas: usize) -> Self {
        let columns = layout
            .streams()
            .iter()
            .map(|s| (s.clone(), DVector::zeros(num_tx_antennas)))
            .collect();
        Self { columns }
    }

    pub fn get(&self, stream: &StreamId) -> Option<&DVector<Complex64>> {
        self.columns.get(stream)
    }

    pub fn set(&mut self, stream: StreamId, column: DVector<Complex64>) {
        self.columns.insert(stream, column);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StreamId, &DVector<Complex64>)> {
        self.columns.iter()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Radiated power `tr(P P^H)`.
    pub fn transmit_power(&self) -> f64 {
        self.columns.values().map(|p| p.norm_squared()).sum()
    }

    /// Checks the key set matches the layout's stream set.
    pub fn matches_layout(&self, layout: &StreamLayout) -> bool {
        self.columns.len() == layout.streams().len()
            && layout.streams().iter().all(|s| self.columns.contains_key(s))
    }

    /// Re-keys the precoders onto `to`'s stream set, mapping each stream of
    /// `from` to the stream of `to` whose intended set equals its decoder
    /// set (the multicast stream maps to the multicast stream). Streams with
    /// no counterpart are dropped; missing targets stay zero.
    ///
    /// This embeds a converged lower-strategy solution into a richer strategy
    /// at identical rates, e.g. MU-LP into 1-layer RS, or SC-SIC into the
    /// generalized RS.
    pub fn embed_into(&self, from: &StreamLayout, to: &StreamLayout) -> Self {
        let nt = self
            .columns
            .values()
            .next()
            .map_or(0, nalgebra::DVector::len);
        let mut out = PrecoderSet::zeros(to, nt);
        for (stream, column) in &self.columns {
            let target = if stream.carries_multicast() {
                to.multicast_stream().clone()
            } else {
                let decoders = from.decoders(stream);
                if decoders.len() == 1 {
                    StreamId::unicast(decoders[0])
                } else {
                    StreamId::common(decoders)
                }
            };
            if out.columns.contains_key(&target) {
                out.set(target, column.clone());
            }
        }
        out
    }
}

/// QoS rate thresholds in bit/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    unicast_thresholds: Vec<f64>,
    multicast_threshold: f64,
}

impl QosSpec {
    pub fn new(unicast_thresholds: Vec<f64>, multicast_threshold: f64) -> Result<Self, ConfigError> {
        if unicast_thresholds.iter().any(|t| *t < 0.0) || multicast_threshold < 0.0 {
            return invalid("QoS thresholds must be nonnegative");
        }
        Ok(Self {
            unicast_thresholds,
            multicast_threshold,
        })
    }

    /// All thresholds zero.
    pub fn none(num_users: usize) -> Self {
        Self {
            unicast_thresholds: vec![0.0; num_users],
            multicast_threshold: 0.0,
        }
    }

    /// The same threshold for the multicast message and every unicast message.
    pub fn uniform(num_users: usize, threshold: f64) -> Result<Self, ConfigError> {
        Self::new(vec![threshold; num_users], threshold)
    }

    pub fn unicast_threshold(&self, user: usize) -> f64 {
        self.unicast_thresholds[user]
    }

    pub fn unicast_thresholds(&self) -> &[f64] {
        &self.unicast_thresholds
    }

    pub fn multicast_threshold(&self) -> f64 {
        self.multicast_threshold
    }
}

/// Objective weights: `u_0` for the multicast message, `u_k` per unicast
/// message.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    multicast_weight: f64,
    unicast_weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(multicast_weight: f64, unicast_weights: Vec<f64>) -> Result<Self, ConfigError> {
        if multicast_weight < 0.0 || unicast_weights.iter().any(|u| *u < 0.0) {
            return invalid("weights must be nonnegative");
        }
        if multicast_weight == 0.0 && unicast_weights.iter().all(|u| *u == 0.0) {
            return invalid("at least one weight must be strictly positive");
        }
        Ok(Self {
            multicast_weight,
            unicast_weights,
        })
    }

    /// Unit weight on every message.
    pub fn uniform(num_users: usize) -> Self {
        Self {
            multicast_weight: 1.0,
            unicast_weights: vec![1.0; num_users],
        }
    }

    pub fn multicast_weight(&self) -> f64 {
        self.multicast_weight
    }

    pub fn unicast_weight(&self, user: usize) -> f64 {
        self.unicast_weights[user]
    }

    pub fn unicast_weights(&self) -> &[f64] {
        &self.unicast_weights
    }
}

/// The split of each shared stream's rate: the multicast portion `C_0` and,
/// per splittable stream, a nonnegative unicast portion per eligible user.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonRateAllocation {
    multicast_portion: f64,
    portions: BTreeMap<StreamId, BTreeMap<usize, f64>>,
}

impl CommonRateAllocation {
    /// Zero multicast portion and zero for every eligible (stream, user) pair
    /// of the layout.
    pub fn zeros(layout: &StreamLayout) -> Self {
        let portions = layout
            .splittable_streams()
            .map(|s| {
                let per_user = layout.portion_users(s).iter().map(|&u| (u, 0.0)).collect();
                (s.clone(), per_user)
            })
            .collect();
        Self {
            multicast_portion: 0.0,
            portions,
        }
    }

    pub fn multicast_portion(&self) -> f64 {
        self.multicast_portion
    }

    pub fn set_multicast_portion(&mut self, c0: f64) {
        self.multicast_portion = c0;
    }

    /// The portion of `stream`'s rate delivered to `user` (zero if not
    /// eligible).
    pub fn portion(&self, stream: &StreamId, user: usize) -> f64 {
        self.portions
            .get(stream)
            .and_then(|m| m.get(&user))
            .copied()
            .unwrap_or(0.0)
    }

    /// Sets a portion; the (stream, user) pair must be eligible in the layout
    /// this allocation was built from.
    pub fn set_portion(&mut self, stream: &StreamId, user: usize, value: f64) {
        let per_user = self
            .portions
            .get_mut(stream)
            .unwrap_or_else(|| panic!("stream {stream} has no unicast portions"));
        assert!(
            per_user.contains_key(&user),
            "user {user} holds no portion of stream {stream}"
        );
        per_user.insert(user, value);
    }

    /// Sum of all portions riding on `stream`, including `C_0` when the
    /// stream carries the multicast message.
    pub fn stream_total(&self, stream: &StreamId) -> f64 {
        let unicast: f64 = self
            .portions
            .get(stream)
            .map_or(0.0, |m| m.values().sum());
        if stream.carries_multicast() {
            self.multicast_portion + unicast
        } else {
            unicast
        }
    }

    /// Total common rate delivered to `user` across all shared streams.
    pub fn user_common_total(&self, user: usize) -> f64 {
        self.portions
            .values()
            .filter_map(|m| m.get(&user))
            .sum()
    }

    pub fn streams(&self) -> impl Iterator<Item = &StreamId> {
        self.portions.keys()
    }
}

// ---------------------------------------------------------------------------
// Reports and algorithm configuration
// ---------------------------------------------------------------------------

/// Everything the rate oracle knows about one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Achievable decode rate of each stream at each of its decoders,
    /// `log2(1 + sinr)`.
    pub decode_rates: BTreeMap<StreamId, BTreeMap<usize, f64>>,
    /// Per-stream rate cap: the minimum decode rate over the stream's
    /// decoders.
    pub stream_caps: BTreeMap<StreamId, f64>,
    /// The common-rate split in force.
    pub allocation: CommonRateAllocation,
    /// Per-user unicast totals `R_{k,tot}` (common portions plus the own
    /// private rate).
    pub user_totals: Vec<f64>,
    /// Weighted sum rate of the unicast messages.
    pub wsr: f64,
    /// Total consumed power in watts.
    pub total_power: f64,
    /// Energy efficiency: `(u_0 C_0 + sum_k u_k R_{k,tot}) / total_power`.
    pub ee: f64,
}

/// Iterative-solver knobs shared by both algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    /// Stop when the objective changes by no more than this between
    /// iterations.
    pub convergence_tolerance: f64,
    pub max_iterations: usize,
    /// Number of CSIT error samples drawn when a scenario requests sampling.
    pub csit_sample_count: usize,
    pub rng_seed: u64,
}

impl AlgorithmConfig {
    pub fn new(convergence_tolerance: f64, max_iterations: usize) -> Result<Self, ConfigError> {
        if convergence_tolerance <= 0.0 || convergence_tolerance.is_nan() {
            return invalid("convergence tolerance must be positive");
        }
        if max_iterations == 0 {
            return invalid("max_iterations must be positive");
        }
        Ok(Self {
            convergence_tolerance,
            max_iterations,
            ..Self::default()
        })
    }
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            convergence_tolerance: 1e-4,
            max_iterations: 200,
            csit_sample_count: 100,
            rng_seed: 1,
        }
    }
}
