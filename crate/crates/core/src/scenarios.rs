//! Channel generation, CSIT sampling, precoder initialization, user
//! scheduling and enumeration of decoding orders and groupings.
//!
//! All randomness flows through a seeded ChaCha8 generator. Stream splitting
//! is deterministic: the draw for user `k` uses substream `k + 1`, and the
//! CSIT error draw for user `k` in sample `m` uses substream
//! `(k + 1) * 2^32 + m + 1`. Runs are therefore bit-reproducible across
//! platforms, including when samples are generated in parallel.

use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{
    ChannelSet, ConfigError, PrecoderSet, StrategyConfig, StrategyKind, StreamLayout, SystemConfig,
};

/// CSIT quality of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Csit {
    Perfect,
    /// Error covariance scales as `Pt^-tau`; `samples` realizations are drawn.
    Sampled { tau: f64, samples: usize },
}

/// Channel realization recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// `h1 = [1, ..., 1]^H`, `h2 = gamma * [1, e^{j theta}, e^{j 2 theta}, ...]^H`.
    SpecificTwoUser { gamma: f64, theta: f64 },
    /// Adds `h3 = gamma2 * [1, e^{j theta2}, ...]^H`; the paper couples the
    /// angles as `theta2 = 2 theta1`.
    SpecificThreeUser {
        gamma1: f64,
        theta1: f64,
        gamma2: f64,
        theta2: f64,
    },
    /// i.i.d. circularly-symmetric complex Gaussian entries, one variance per
    /// user.
    RandomGaussian { variances: Vec<f64> },
}

/// Full channel-generation specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub num_tx_antennas: usize,
    pub seed: u64,
    pub csit: Csit,
}

impl ScenarioSpec {
    pub fn num_users(&self) -> usize {
        match &self.kind {
            ScenarioKind::SpecificTwoUser { .. } => 2,
            ScenarioKind::SpecificThreeUser { .. } => 3,
            ScenarioKind::RandomGaussian { variances } => variances.len(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.into()));
        if self.num_tx_antennas == 0 {
            return bad("need at least one antenna");
        }
        let angle_ok = |theta: f64| theta > 0.0 && theta < std::f64::consts::FRAC_PI_2;
        let gamma_ok = |gamma: f64| gamma > 0.0 && gamma <= 1.0;
        match &self.kind {
            ScenarioKind::SpecificTwoUser { gamma, theta } => {
                if !gamma_ok(*gamma) {
                    return bad("gamma must lie in (0, 1]");
                }
                if !angle_ok(*theta) {
                    return bad("theta must lie in (0, pi/2)");
                }
            }
            ScenarioKind::SpecificThreeUser { gamma1, theta1, gamma2, theta2 } => {
                if !gamma_ok(*gamma1) || !gamma_ok(*gamma2) {
                    return bad("gammas must lie in (0, 1]");
                }
                if !angle_ok(*theta1) || !(*theta2 > 0.0 && *theta2 < std::f64::consts::PI) {
                    return bad("angles out of range");
                }
            }
            ScenarioKind::RandomGaussian { variances } => {
                if variances.is_empty() || variances.iter().any(|v| *v <= 0.0 || v.is_nan()) {
                    return bad("need positive per-user variances");
                }
            }
        }
        if let Csit::Sampled { samples, .. } = self.csit {
            if samples == 0 {
                return bad("need at least one CSIT sample");
            }
        }
        Ok(())
    }
}

fn phased_channel(scale: f64, theta: f64, nt: usize) -> DVector<Complex64> {
    DVector::from_iterator(
        nt,
        (0..nt).map(|i| Complex64::from_polar(scale, theta * i as f64)),
    )
}

/// The deterministic channel realizations used to probe specific user
/// geometries.
///
/// Two users: `h1 = [1,...,1]^H`, `h2 = gamma * [1, e^{j theta}, ...]^H`.
/// Three users add `h3 = gamma2 * [1, e^{j theta2}, ...]^H`. Smaller antenna
/// counts truncate the phase progression.
pub fn specific_channels(spec: &ScenarioSpec) -> Result<ChannelSet, ConfigError> {
    spec.validate()?;
    let nt = spec.num_tx_antennas;
    let channels = match &spec.kind {
        ScenarioKind::SpecificTwoUser { gamma, theta } => vec![
            phased_channel(1.0, 0.0, nt),
            phased_channel(*gamma, *theta, nt),
        ],
        ScenarioKind::SpecificThreeUser { gamma1, theta1, gamma2, theta2 } => vec![
            phased_channel(1.0, 0.0, nt),
            phased_channel(*gamma1, *theta1, nt),
            phased_channel(*gamma2, *theta2, nt),
        ],
        ScenarioKind::RandomGaussian { .. } => {
            return Err(ConfigError::Invalid(
                "specific_channels requires a specific_* scenario kind".into(),
            ))
        }
    };
    ChannelSet::perfect(channels)
}

fn complex_gaussian_vector(rng: &mut ChaCha8Rng, nt: usize, variance: f64) -> DVector<Complex64> {
    let scale = (variance / 2.0).sqrt();
    DVector::from_iterator(
        nt,
        (0..nt).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * scale, im * scale)
        }),
    )
}

fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64 + 1);
    rng
}

fn sample_rng(seed: u64, user: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((user as u64 + 1) << 32) + sample as u64 + 1);
    rng
}

/// Seed-deterministic i.i.d. complex Gaussian channels.
pub fn random_channels(spec: &ScenarioSpec) -> Result<ChannelSet, ConfigError> {
    spec.validate()?;
    let variances = match &spec.kind {
        ScenarioKind::RandomGaussian { variances } => variances.clone(),
        _ => {
            return Err(ConfigError::Invalid(
                "random_channels requires the random_gaussian kind".into(),
            ))
        }
    };
    let channels = variances
        .iter()
        .enumerate()
        .map(|(k, &v)| complex_gaussian_vector(&mut user_rng(spec.seed, k), spec.num_tx_antennas, v))
        .collect();
    ChannelSet::perfect(channels)
}

/// Draws `m` true-channel realizations `h = h_est + error` around the
/// estimate, with per-user error covariance `scale_k * Pt^-tau`.
pub fn csit_samples(
    estimated: &[DVector<Complex64>],
    tau: f64,
    power_budget: f64,
    scales: &[f64],
    m: usize,
    seed: u64,
) -> Result<ChannelSet, ConfigError> {
    if m == 0 {
        return Err(ConfigError::Invalid("need at least one sample".into()));
    }
    if scales.len() != estimated.len() {
        return Err(ConfigError::Dimension("one scale per user required".into()));
    }
    let nt = estimated[0].len();
    let covariances: Vec<f64> = scales.iter().map(|s| s * power_budget.powf(-tau)).collect();
    let samples: Vec<Vec<DVector<Complex64>>> = (0..m)
        .map(|i| {
            estimated
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    if covariances[k] == 0.0 {
                        h.clone()
                    } else {
                        h + complex_gaussian_vector(&mut sample_rng(seed, k, i), nt, covariances[k])
                    }
                })
                .collect()
        })
        .collect();
    ChannelSet::with_samples(estimated.to_vec(), samples, covariances, Some(tau))
}

/// Builds the channel set a scenario describes, including CSIT sampling when
/// requested.
pub fn build_channels(spec: &ScenarioSpec, power_budget: f64) -> Result<ChannelSet, ConfigError> {
    let base = match &spec.kind {
        ScenarioKind::RandomGaussian { .. } => random_channels(spec)?,
        _ => specific_channels(spec)?,
    };
    match spec.csit {
        Csit::Perfect => Ok(base),
        Csit::Sampled { tau, samples } => {
            // Error strength follows the channel strength: the weaker user's
            // estimate errs proportionally less.
            let scales: Vec<f64> = match &spec.kind {
                ScenarioKind::SpecificTwoUser { gamma, .. } => vec![1.0, *gamma],
                ScenarioKind::SpecificThreeUser { gamma1, gamma2, .. } => {
                    vec![1.0, *gamma1, *gamma2]
                }
                ScenarioKind::RandomGaussian { variances } => vec![1.0; variances.len()],
            };
            csit_samples(base.estimated(), tau, power_budget, &scales, samples, spec.seed)
        }
    }
}

// ---------------------------------------------------------------------------
// Precoder initialization
// ---------------------------------------------------------------------------

/// Deterministic initial precoders built from the channel estimate.
///
/// Private streams take maximum-ratio-transmission directions; every shared
/// stream takes the dominant left singular vector of its users' stacked
/// channels. Rate-splitting strategies and SC-SIC put half the budget on the
/// multicast-carrying stream and split the rest equally over the remaining
/// streams; strategies without a boosted common stream spread power equally
/// over all streams.
pub fn initial_precoders(
    layout: &StreamLayout,
    kind: StrategyKind,
    channels: &ChannelSet,
    sys: &SystemConfig,
) -> PrecoderSet {
    let nt = sys.num_tx_antennas();
    let pt = sys.power_budget();
    let estimated = channels.estimated();
    let n_streams = layout.streams().len();

    let boosted_common = matches!(
        kind,
        StrategyKind::OneLayerRs | StrategyKind::GeneralizedRs | StrategyKind::ScSic
    ) && n_streams > 1;
    let (q_common, q_other) = if boosted_common {
        (pt / 2.0, pt / 2.0 / (n_streams - 1) as f64)
    } else {
        (pt / n_streams as f64, pt / n_streams as f64)
    };

    let mut precoders = PrecoderSet::zeros(layout, nt);
    for stream in layout.streams() {
        let users = stream.intended_users();
        let direction = if users.len() == 1 {
            let h = &estimated[users[0]];
            let norm = h.norm();
            if norm > 0.0 {
                h / Complex64::new(norm, 0.0)
            } else {
                DVector::zeros(nt)
            }
        } else {
            dominant_direction(estimated, users, nt)
        };
        let power = if stream.carries_multicast() { q_common } else { q_other };
        precoders.set(stream.clone(), direction * Complex64::new(power.sqrt(), 0.0));
    }
    precoders
}

/// Dominant left singular vector of the Nt x |users| matrix of stacked
/// channels.
fn dominant_direction(
    channels: &[DVector<Complex64>],
    users: &[usize],
    nt: usize,
) -> DVector<Complex64> {
    let stacked =
        DMatrix::from_columns(&users.iter().map(|&u| channels[u].clone()).collect::<Vec<_>>());
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    DVector::from_iterator(nt, (0..nt).map(|i| u[(i, 0)]))
}

// ---------------------------------------------------------------------------
// User scheduling
// ---------------------------------------------------------------------------

/// Candidate-selection rule for picking `K` active users from a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMethod {
    /// Greedy semi-orthogonal selection: start from the strongest candidate,
    /// then repeatedly add the candidate maximizing
    /// `||h||^2 * (1 - max normalized correlation to the picked set)`.
    Correlation,
    /// The K strongest candidates by channel norm.
    BestStrength,
    /// Seeded shuffle, first K.
    None,
}

/// Selects `k` users from the candidate pool; ties break toward the lowest
/// index. Returned indices are sorted ascending.
pub fn schedule_users(
    pool: &ChannelSet,
    k: usize,
    method: ScheduleMethod,
    seed: u64,
) -> Result<Vec<usize>, ConfigError> {
    let n = pool.num_users();
    if n < k {
        return Err(ConfigError::Invalid(format!(
            "pool of {n} candidates cannot fill {k} slots"
        )));
    }
    let channels = pool.estimated();
    let mut picked = match method {
        ScheduleMethod::BestStrength => {
            let mut by_norm: Vec<usize> = (0..n).collect();
            by_norm.sort_by(|&a, &b| {
                channels[b]
                    .norm_squared()
                    .partial_cmp(&channels[a].norm_squared())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            by_norm[..k].to_vec()
        }
        ScheduleMethod::Correlation => {
            let mut picked: Vec<usize> = Vec::with_capacity(k);
            while picked.len() < k {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..n {
                    if picked.contains(&c) {
                        continue;
                    }
                    let strength = channels[c].norm_squared();
                    let max_corr = picked
                        .iter()
                        .map(|&s| {
                            let num = channels[c].dotc(&channels[s]).norm_sqr();
                            let den = channels[c].norm_squared() * channels[s].norm_squared();
                            if den > 0.0 { num / den } else { 0.0 }
                        })
                        .fold(0.0f64, f64::max);
                    let metric = strength * (1.0 - max_corr);
                    if best.is_none_or(|(_, m)| metric > m) {
                        best = Some((c, metric));
                    }
                }
                picked.push(best.expect("pool nonempty").0);
            }
            picked
        }
        ScheduleMethod::None => {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = user_rng(seed, 0);
            for i in (1..n).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
            order[..k].to_vec()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

// ---------------------------------------------------------------------------
// Enumeration of orders and groupings
// ---------------------------------------------------------------------------

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Stirling set number S(n, k): partitions of an n-set into k nonempty blocks,
/// computed from the alternating-sum closed form.
pub fn stirling2(n: usize, k: usize) -> usize {
    let mut total: i64 = 0;
    for i in 0..=k {
        let sign = if i % 2 == 0 { 1 } else { -1 };
        total += sign * binomial(k, i) as i64 * ((k - i) as i64).pow(n as u32);
    }
    (total / factorial(k) as i64) as usize
}

/// Number of grouping methods for SC-SIC per group: `sum_k S(K, k)`.
pub fn partition_count(num_users: usize) -> usize {
    (1..=num_users).map(|k| stirling2(num_users, k)).sum()
}

/// Number of generalized-RS decoding orders: `prod_{k=2}^{K-1} C(K, k)!`.
pub fn generalized_rs_order_count(num_users: usize) -> usize {
    (2..num_users).map(|k| factorial(binomial(num_users, k))).product()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

/// All set partitions of `0..n` in a canonical order (element 0 always sits
/// in the first block).
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn recurse(next: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if next == n {
            out.push(blocks.clone());
            return;
        }
        for i in 0..blocks.len() {
            blocks[i].push(next);
            recurse(next + 1, n, blocks, out);
            blocks[i].pop();
        }
        blocks.push(vec![next]);
        recurse(next + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    recurse(0, n, &mut Vec::new(), &mut out);
    out
}

/// Enumerates every decoding order / grouping a strategy kind requires
/// (guarded to K <= 4).
///
/// SC-SIC yields all `K!` user orders; generalized RS all orderings of the
/// mid-size subsets (per size level); SC-SIC per group every set partition
/// crossed with every per-group order. MU-LP and 1-layer RS have a single
/// configuration; OMA yields one configuration per target user.
pub fn enumerate_orders(
    kind: StrategyKind,
    num_users: usize,
) -> Result<Vec<StrategyConfig>, ConfigError> {
    if num_users > 4 {
        return Err(ConfigError::Invalid(
            "order enumeration is guarded to K <= 4".into(),
        ));
    }
    let users: Vec<usize> = (0..num_users).collect();
    let configs = match kind {
        StrategyKind::MuLp => vec![StrategyConfig::MuLp],
        StrategyKind::OneLayerRs => vec![StrategyConfig::OneLayerRs],
        StrategyKind::Oma => users
            .iter()
            .map(|&u| StrategyConfig::Oma { target_user: u })
            .collect(),
        StrategyKind::ScSic => permutations(&users)
            .into_iter()
            .map(|order| StrategyConfig::ScSic { order })
            .collect(),
        StrategyKind::GeneralizedRs => {
            // Cartesian product of the orderings of each subset-size level.
            let mut combos: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
            for size in (2..num_users).rev() {
                let subsets = crate::model::subsets_of_size(num_users, size);
                let indices: Vec<usize> = (0..subsets.len()).collect();
                let mut next = Vec::new();
                for combo in &combos {
                    for perm in permutations(&indices) {
                        let mut grown = combo.clone();
                        grown.extend(perm.into_iter().map(|i| subsets[i].clone()));
                        next.push(grown);
                    }
                }
                combos = next;
            }
            combos
                .into_iter()
                .map(|mid_order| StrategyConfig::GeneralizedRs { mid_order })
                .collect()
        }
        StrategyKind::ScSicPerGroup => {
            let mut configs = Vec::new();
            for partition in set_partitions(num_users) {
                let mut group_orders: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
                for group in &partition {
                    let perms = permutations(group);
                    let mut next = Vec::with_capacity(group_orders.len() * perms.len());
                    for base in &group_orders {
                        for perm in &perms {
                            let mut grown = base.clone();
                            grown.push(perm.clone());
                            next.push(grown);
                        }
                    }
                    group_orders = next;
                }
                configs.extend(
                    group_orders
                        .into_iter()
                        .map(|groups| StrategyConfig::ScSicPerGroup { groups }),
                );
            }
            configs
        }
    };
    Ok(configs)
}

/// Distinct groupings (ignoring decode order inside groups) among enumerated
/// SC-SIC-per-group configurations.
pub fn distinct_partitions(configs: &[StrategyConfig]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for config in configs {
        if let StrategyConfig::ScSicPerGroup { groups } = config {
            let mut canonical: Vec<Vec<usize>> = groups
                .iter()
                .map(|g| {
                    let mut s = g.clone();
                    s.sort_unstable();
                    s
                })
                .collect();
            canonical.sort();
            seen.insert(canonical);
        }
    }
    seen.len()
}

// ---------------------------------------------------------------------------
// Plain-text channel serialization
// ---------------------------------------------------------------------------

/// Writes channels as text: a header line `K=<k> Nt=<nt> seed=<seed>`, then
/// one row per user of `re,im` pairs.
pub fn write_channels(
    w: &mut impl Write,
    channels: &[DVector<Complex64>],
    seed: u64,
) -> io::Result<()> {
    let k = channels.len();
    let nt = channels.first().map_or(0, DVector::len);
    writeln!(w, "K={k} Nt={nt} seed={seed}")?;
    for h in channels {
        let row: Vec<String> = h.iter().map(|z| format!("{},{}", z.re, z.im)).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads the format produced by [`write_channels`].
pub fn read_channels(r: &mut impl BufRead) -> io::Result<(Vec<DVector<Complex64>>, u64)> {
    fn bad(msg: &str) -> io::Error {
        io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
    }
    let mut header = String::new();
    r.read_line(&mut header)?;
    let (mut k, mut nt, mut seed) = (0usize, 0usize, 0u64);
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| bad("malformed header"))?;
        match key {
            "K" => k = value.parse().map_err(|_| bad("bad K"))?,
            "Nt" => nt = value.parse().map_err(|_| bad("bad Nt"))?,
            "seed" => seed = value.parse().map_err(|_| bad("bad seed"))?,
            _ => return Err(bad("unknown header field")),
        }
    }
    let mut channels = Vec::with_capacity(k);
    for _ in 0..k {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let entries: Result<Vec<Complex64>, io::Error> = line
            .split_whitespace()
            .map(|pair| {
                let (re, im) = pair.split_once(',').ok_or_else(|| bad("malformed entry"))?;
                Ok(Complex64::new(
                    re.parse().map_err(|_| bad("bad real part"))?,
                    im.parse().map_err(|_| bad("bad imaginary part"))?,
                ))
            })
            .collect();
        let entries = entries?;
        if entries.len() != nt {
            return Err(bad("row length does not match Nt"));
        }
        channels.push(DVector::from_vec(entries));
    }
    Ok((channels, seed))
}
