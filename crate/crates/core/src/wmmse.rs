//! Weighted-sum-rate maximization via the rate-WMMSE equivalence and
//! alternating optimization.
//!
//! For user `k` decoding stream `s` at chain position `l`, let `T` be the
//! received power of the signal plus every not-yet-cancelled stream plus
//! noise. With equalizer `g` the mean square error is
//! `eps = |g|^2 T - 2 Re{g h^H p_s} + 1`, minimized by the MMSE equalizer
//! `g = p_s^H h / T`, giving `eps_mmse = (T - |h^H p_s|^2) / T`. The weighted
//! MSE `xi = w eps - log2(w)` satisfies `min_{w,g} xi = 1 - R` at
//! `w = 1/eps_mmse`, which ties rates to weighted MSEs and makes the problem
//! convex in the precoders and common-rate variables once `(w, g)` are held
//! fixed.
//!
//! The alternating loop updates `(w, g)` in closed form, then re-solves the
//! precoder/common-rate subproblem as a second-order cone program (the
//! quadratic WMSE terms are lowered to cone epigraphs). The weighted sum rate
//! of the iterates is nondecreasing and bounded, so the loop converges. QoS
//! thresholds enter as linear rows on the transformed variables `x = -c`.
//!
//! Under imperfect CSIT the WMSEs are averaged over the channel samples
//! (sample-average approximation); weights and equalizers are tracked per
//! sample and the averaged WMSE stays a convex quadratic in the precoders.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::conic::{ComplexVecVar, ConicError, ConicProgram, ConicSolution, LinExpr, ProgramBuilder, SolveStatus, VarId};
use crate::model::{
    AlgorithmConfig, ChannelSet, CommonRateAllocation, ConfigError, PowerModel, PrecoderSet,
    QosSpec, RateReport, StrategyConfig, StrategyKind, StreamId, StreamLayout, SystemConfig,
    WeightVector,
};
use crate::rates;

/// Weight clip guarding against ill-conditioning as the MMSE tends to zero.
const WEIGHT_CLIP: f64 = 1e12;
/// Interior-point tolerance for each subproblem solve.
const SUBPROBLEM_TOL: f64 = 1e-9;

/// Errors from the iterative solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("instance is QoS-infeasible at the given power budget")]
    QosInfeasible,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

/// Closed-form quantities of one (sample, user, chain position).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStat {
    /// MMSE equalizer `g = p_s^H h / T`.
    pub equalizer: Complex64,
    /// MMSE weight `w = 1/eps_mmse`, clipped at 1e12.
    pub weight: f64,
    /// Received power `T` at this chain position (signal included).
    pub received_power: f64,
    /// Minimum mean square error.
    pub mmse: f64,
    /// Achievable rate `-log2(eps_mmse)`.
    pub rate: f64,
}

/// Per-sample, per-user, per-chain-position closed-form state of the
/// alternating optimization.
#[derive(Debug, Clone)]
pub struct WmmseState {
    /// `stats[sample][user][chain position]`
    stats: Vec<Vec<Vec<ChainStat>>>,
}

impl WmmseState {
    pub fn stat(&self, sample: usize, user: usize, position: usize) -> &ChainStat {
        &self.stats[sample][user][position]
    }

    pub fn sample_count(&self) -> usize {
        self.stats.len()
    }
}

/// MMSE equalizer and received power for `user` decoding the stream at
/// `position` in its chain: `g = p_s^H h / T` with
/// `T = sum_{not yet cancelled} |h^H p|^2 + noise`.
pub fn mmse_equalizer(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    user: usize,
    position: usize,
) -> (Complex64, f64) {
    let h = &sample[user];
    let chain = layout.chain(user);
    let cancelled = &chain[..position];
    let mut t = sys.noise_variance(user);
    for stream in layout.streams() {
        if cancelled.contains(stream) {
            continue;
        }
        if let Some(p) = precoders.get(stream) {
            t += h.dotc(p).norm_sqr();
        }
    }
    let inner = precoders
        .get(&chain[position])
        .map_or(Complex64::new(0.0, 0.0), |p| h.dotc(p));
    (inner.conj() / t, t)
}

/// MSE of an arbitrary equalizer and the MMSE weight at this position:
/// `eps = |g|^2 T - 2 Re{g h^H p} + 1`; at the MMSE equalizer
/// `eps = (T - |h^H p|^2)/T` and `w = 1/eps`.
pub fn mse_and_weight(
    sample: &[DVector<Complex64>],
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    user: usize,
    position: usize,
    equalizer: Complex64,
) -> (f64, f64) {
    let h = &sample[user];
    let (_, t) = mmse_equalizer(sample, sys, precoders, layout, user, position);
    let inner = precoders
        .get(&layout.chain(user)[position])
        .map_or(Complex64::new(0.0, 0.0), |p| h.dotc(p));
    let eps = equalizer.norm_sqr() * t - 2.0 * (equalizer * inner).re + 1.0;
    let eps_mmse = (t - inner.norm_sqr()) / t;
    (eps, (1.0 / eps_mmse).min(WEIGHT_CLIP))
}

/// Builds the full closed-form state (equalizers, weights, rates) for the
/// current precoders, one entry per channel sample.
pub fn build_state(
    channels: &ChannelSet,
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
) -> WmmseState {
    let m = channels.sample_count();
    let stats = (0..m)
        .map(|i| {
            let sample = channels.sample(i);
            (0..layout.num_users())
                .map(|user| {
                    let chain = layout.chain(user);
                    let h = &sample[user];
                    // Walk the chain once, peeling cancelled streams off T.
                    let powers: BTreeMap<&StreamId, f64> = layout
                        .streams()
                        .iter()
                        .map(|s| {
                            let pw = precoders.get(s).map_or(0.0, |p| h.dotc(p).norm_sqr());
                            (s, pw)
                        })
                        .collect();
                    let mut t: f64 = sys.noise_variance(user) + powers.values().sum::<f64>();
                    chain
                        .iter()
                        .map(|stream| {
                            let inner = precoders
                                .get(stream)
                                .map_or(Complex64::new(0.0, 0.0), |p| h.dotc(p));
                            let signal = inner.norm_sqr();
                            let equalizer = inner.conj() / t;
                            let mmse = (t - signal) / t;
                            let stat = ChainStat {
                                equalizer,
                                weight: (1.0 / mmse).min(WEIGHT_CLIP),
                                received_power: t,
                                mmse,
                                rate: -mmse.log2(),
                            };
                            t -= signal;
                            stat
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    WmmseState { stats }
}

/// Maximum violation of the rate-WMMSE identity `xi_mmse = 1 - R` over all
/// samples, users and chain positions; at machine precision on well-scaled
/// inputs.
pub fn rate_wmmse_identity_check(
    channels: &ChannelSet,
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
) -> f64 {
    let state = build_state(channels, sys, precoders, layout);
    let mut worst = 0.0f64;
    for sample in &state.stats {
        for per_user in sample {
            for stat in per_user {
                let xi = stat.weight * stat.mmse - stat.weight.log2();
                worst = worst.max((xi - (1.0 - stat.rate)).abs());
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Subproblem assembly
// ---------------------------------------------------------------------------

/// Key of one entry of the transformed common-rate vector `x = -c`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PortionKey {
    /// `X_0`, the (negated) multicast portion.
    MulticastRate,
    /// `X_k^i`, the (negated) portion of stream `i` delivered to user `k`.
    Portion(StreamId, usize),
}

/// Optional variable pinning used for reduction tests and degenerate oracles.
#[derive(Debug, Clone, Default)]
pub struct AoOptions {
    /// Streams whose precoders are held at zero (their decode rows are
    /// dropped; pinning the multicast stream requires a zero multicast
    /// threshold).
    pub pin_zero_precoders: BTreeSet<StreamId>,
    /// Streams whose unicast portions are held at zero.
    pub pin_zero_portions: BTreeSet<StreamId>,
}

/// An assembled WSR subproblem with handles into its variables.
pub struct WsrSubproblem {
    pub program: ConicProgram,
    p_vars: BTreeMap<StreamId, ComplexVecVar>,
    x_vars: BTreeMap<PortionKey, VarId>,
    /// WSR implied by the solver objective is `bound_constant + objective`.
    bound_constant: f64,
}

impl WsrSubproblem {
    /// Recovers `(P, c = -x)` from a solution; tiny negative portions are
    /// clamped to zero.
    pub fn extract(
        &self,
        sol: &ConicSolution,
        layout: &StreamLayout,
        num_tx_antennas: usize,
    ) -> (PrecoderSet, CommonRateAllocation) {
        let mut precoders = PrecoderSet::zeros(layout, num_tx_antennas);
        for (stream, var) in &self.p_vars {
            precoders.set(stream.clone(), sol.complex_vector(var));
        }
        let mut alloc = CommonRateAllocation::zeros(layout);
        for (key, var) in &self.x_vars {
            let value = (-sol.value(*var)).max(0.0);
            match key {
                PortionKey::MulticastRate => alloc.set_multicast_portion(value),
                PortionKey::Portion(stream, user) => alloc.set_portion(stream, *user, value),
            }
        }
        (precoders, alloc)
    }

    /// WSR implied by the transformed objective at a solution.
    pub fn implied_wsr(&self, sol: &ConicSolution) -> f64 {
        self.bound_constant + sol.objective
    }
}

/// Averaged WMSE of (user, chain position) as a function of the precoders:
/// a sum of squared terms plus an affine part.
struct XiBar {
    quad: Vec<LinExpr>,
    affine: LinExpr,
}

/// The subproblem uses the bit-scaled natural-log WMSE
/// `xi = 1 + (w eps - ln w - 1) / ln 2`, for which `w = 1/eps_mmse` is the
/// exact weight minimizer. It equals `1 - R` at the MMSE point and globally
/// under-estimates the rate (`w eps - 1 >= ln(w eps)`), which is what makes
/// every iterate feasible for the next subproblem and the weighted sum rate
/// nondecreasing.
fn xi_bar(
    channels: &ChannelSet,
    sys: &SystemConfig,
    layout: &StreamLayout,
    state: &WmmseState,
    p_vars: &BTreeMap<StreamId, ComplexVecVar>,
    user: usize,
    position: usize,
) -> XiBar {
    let m = channels.sample_count();
    let inv_m = 1.0 / m as f64;
    let ln2 = std::f64::consts::LN_2;
    let chain = layout.chain(user);
    let cancelled = &chain[..position];
    let signal_stream = &chain[position];
    let mut quad = Vec::new();
    let mut affine = LinExpr::zero();
    for i in 0..m {
        let stat = state.stat(i, user, position);
        let h = &channels.sample(i)[user];
        let (w, g) = (stat.weight, stat.equalizer);
        let w_scaled = w / ln2;
        let quad_scale = (w_scaled * inv_m).sqrt() * g.norm();
        if quad_scale > 0.0 {
            for stream in layout.streams() {
                if cancelled.contains(stream) {
                    continue;
                }
                if let Some(var) = p_vars.get(stream) {
                    let (re, im) = var.conjugate_inner(h);
                    quad.push(re.scale(quad_scale));
                    quad.push(im.scale(quad_scale));
                }
            }
        }
        // (w/ln2) * (-2 Re{g h^H p_s} + |g|^2 sigma^2 + 1) + 1 - (ln w + 1)/ln2
        if let Some(var) = p_vars.get(signal_stream) {
            let (re, im) = var.conjugate_inner(h);
            affine = affine
                .plus(&re.scale(-2.0 * w_scaled * inv_m * g.re))
                .plus(&im.scale(2.0 * w_scaled * inv_m * g.im));
        }
        affine.add_constant(
            inv_m
                * (w_scaled * (g.norm_sqr() * sys.noise_variance(user) + 1.0) + 1.0
                    - (w.ln() + 1.0) / ln2),
        );
    }
    XiBar { quad, affine }
}

/// Builds the convex WSR subproblem for fixed equalizers and weights.
///
/// Variables are the precoders plus the transformed common-rate entries
/// (model variables), and one epigraph auxiliary per private-role stream.
/// Constraints mirror the transformed problem: QoS rows, decodability rows
/// for every shared stream at every decoder, sign constraints on `x`, and
/// the sum power cone.
pub fn assemble_wsr_subproblem(
    layout: &StreamLayout,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    state: &WmmseState,
    options: &AoOptions,
) -> Result<WsrSubproblem, SolveError> {
    let mc = layout.multicast_stream().clone();
    if options.pin_zero_precoders.contains(&mc) && qos.multicast_threshold() > 0.0 {
        return Err(SolveError::Config(ConfigError::Invalid(
            "cannot pin the multicast precoder under a positive multicast threshold".into(),
        )));
    }

    let mut pb = ProgramBuilder::new();

    let mut p_vars: BTreeMap<StreamId, ComplexVecVar> = BTreeMap::new();
    for stream in layout.streams() {
        if options.pin_zero_precoders.contains(stream) {
            continue;
        }
        p_vars.insert(
            stream.clone(),
            pb.complex_vector(stream.to_string(), sys.num_tx_antennas()),
        );
    }

    let mut x_vars: BTreeMap<PortionKey, VarId> = BTreeMap::new();
    let splittable: Vec<StreamId> = layout
        .splittable_streams()
        .filter(|s| {
            !options.pin_zero_portions.contains(*s) && !options.pin_zero_precoders.contains(*s)
        })
        .cloned()
        .collect();
    if splittable.contains(&mc) {
        x_vars.insert(PortionKey::MulticastRate, pb.scalar("X_0"));
    }
    for stream in &splittable {
        for &user in layout.portion_users(stream) {
            x_vars.insert(
                PortionKey::Portion(stream.clone(), user),
                pb.scalar(format!("X_{}^{stream}", user + 1)),
            );
        }
    }

    // x-sum delivered to one user across shared streams
    let user_x_sum = |user: usize, x_vars: &BTreeMap<PortionKey, VarId>| {
        let mut expr = LinExpr::zero();
        for stream in &splittable {
            if let Some(var) = x_vars.get(&PortionKey::Portion(stream.clone(), user)) {
                expr.push(*var, 1.0);
            }
        }
        expr
    };

    // One epigraph auxiliary per private-role stream (a stream carrying a
    // single user's message, possibly decoded by several users in the SC-SIC
    // family).
    let mut epigraphs: BTreeMap<StreamId, VarId> = BTreeMap::new();
    for stream in layout.streams() {
        if options.pin_zero_precoders.contains(stream) || *stream == mc || splittable.contains(stream)
        {
            continue;
        }
        epigraphs.insert(stream.clone(), pb.aux_scalar(format!("xi_{stream}")));
    }

    let mut objective_min = LinExpr::zero();
    let mut bound_constant = 0.0;

    for stream in layout.streams() {
        if options.pin_zero_precoders.contains(stream) {
            continue;
        }
        let decoders = layout.decoders(stream);
        if splittable.contains(stream) {
            // X_0 [mc] + sum_u X_u^s + 1 >= xi_bar at every decoder
            let mut budget = LinExpr::constant(1.0);
            if *stream == mc {
                budget.push(x_vars[&PortionKey::MulticastRate], 1.0);
            }
            for &user in layout.portion_users(stream) {
                budget.push(x_vars[&PortionKey::Portion(stream.clone(), user)], 1.0);
            }
            for &user in &decoders {
                let position = layout.chain_position(user, stream).expect("decoder");
                let xi = xi_bar(channels, sys, layout, state, &p_vars, user, position);
                pb.quad_le(xi.quad, budget.clone().minus(&xi.affine));
            }
        } else if *stream == mc {
            // Multicast-only stream: surrogate rate at least the threshold.
            // At a zero threshold the rows are vacuous for the true problem
            // (rates are nonnegative) but pin the iterate to a degenerate
            // cone apex once the stream drains, so they are dropped.
            if qos.multicast_threshold() > 0.0 {
                let bound = LinExpr::constant(1.0 - qos.multicast_threshold());
                for &user in &decoders {
                    let position = layout.chain_position(user, stream).expect("decoder");
                    let xi = xi_bar(channels, sys, layout, state, &p_vars, user, position);
                    pb.quad_le(xi.quad, bound.clone().minus(&xi.affine));
                }
            }
        } else {
            // private-role stream: epigraph over all decoders
            let owner = layout
                .owner(stream)
                .expect("non-multicast unsplit stream has an owner");
            let epi = epigraphs[stream];
            for &user in &decoders {
                let position = layout.chain_position(user, stream).expect("decoder");
                let xi = xi_bar(channels, sys, layout, state, &p_vars, user, position);
                pb.quad_le(xi.quad, LinExpr::term(epi, 1.0).minus(&xi.affine));
            }
            objective_min = objective_min.plus(&LinExpr::term(epi, weights.unicast_weight(owner)));
            bound_constant += weights.unicast_weight(owner);
        }
    }

    // Per-user QoS rows and the x-part of the objective.
    for user in 0..layout.num_users() {
        let x_sum = user_x_sum(user, &x_vars);
        objective_min = objective_min.plus(&x_sum.clone().scale(weights.unicast_weight(user)));
        let threshold = qos.unicast_threshold(user);
        let own_epi = layout
            .private_stream_of(user)
            .filter(|s| !options.pin_zero_precoders.contains(*s))
            .and_then(|s| epigraphs.get(s));
        match own_epi {
            Some(&epi) => {
                // x-sum + xi_own <= 1 - R_th; the epigraph stands in for xi.
                pb.le(
                    x_sum.plus(&LinExpr::term(epi, 1.0)),
                    LinExpr::constant(1.0 - threshold),
                );
            }
            None => {
                // The whole unicast rate rides on common-stream portions.
                if x_sum.is_constant() {
                    if threshold > 0.0 {
                        return Err(SolveError::QosInfeasible);
                    }
                } else {
                    pb.le(x_sum, LinExpr::constant(-threshold));
                }
            }
        }
    }

    // Sign constraints on x (portions nonnegative, C_0 >= threshold).
    if let Some(&x0) = x_vars.get(&PortionKey::MulticastRate) {
        pb.le(x0.into(), LinExpr::constant(-qos.multicast_threshold()));
    }
    for (key, &var) in &x_vars {
        if matches!(key, PortionKey::Portion(..)) {
            pb.le(var.into(), LinExpr::constant(0.0));
        }
    }

    // Sum power cone over all precoder entries.
    let mut power_args = Vec::new();
    for var in p_vars.values() {
        for &id in var.scalars() {
            power_args.push(LinExpr::from(id));
        }
    }
    pb.soc(power_args, LinExpr::constant(sys.power_budget().sqrt()));

    pb.maximize(objective_min.scale(-1.0));
    let program = pb.build()?;
    Ok(WsrSubproblem {
        program,
        p_vars,
        x_vars,
        bound_constant,
    })
}

// ---------------------------------------------------------------------------
// Alternating optimization
// ---------------------------------------------------------------------------

/// Result of one alternating-optimization run.
#[derive(Debug, Clone)]
pub struct WsrOutcome {
    pub strategy: StrategyConfig,
    pub precoders: PrecoderSet,
    pub allocation: CommonRateAllocation,
    /// Final report computed by the rate oracle from `(P, c)`.
    pub report: RateReport,
    /// WSR after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// WSR implied by the last subproblem objective (agrees with the report
    /// at convergence).
    pub solver_bound: f64,
}

fn wsr_report(
    channels: &ChannelSet,
    sys: &SystemConfig,
    precoders: &PrecoderSet,
    layout: &StreamLayout,
    alloc: &CommonRateAllocation,
    weights: &WeightVector,
    pm: &PowerModel,
) -> RateReport {
    rates::average_report(channels, sys, precoders, layout, alloc, weights, pm)
        .expect("channel set always has at least one sample")
}

/// One accepted point of the alternating optimization.
struct Iterate {
    precoders: PrecoderSet,
    allocation: CommonRateAllocation,
    wsr: f64,
}

fn scale_precoders(precoders: &PrecoderSet, factor: f64) -> PrecoderSet {
    let scale = Complex64::new(factor, 0.0);
    let mut out = precoders.clone();
    let scaled: Vec<(StreamId, DVector<Complex64>)> =
        out.iter().map(|(s, p)| (s.clone(), p * scale)).collect();
    for (stream, column) in scaled {
        out.set(stream, column);
    }
    out
}

/// `base + kappa * (base - prev)` on precoders and allocation, with the
/// allocation clamped back into its sign constraints.
fn extrapolate(
    base_p: &PrecoderSet,
    base_c: &CommonRateAllocation,
    prev_p: &PrecoderSet,
    prev_c: &CommonRateAllocation,
    kappa: f64,
    qos: &QosSpec,
    layout: &StreamLayout,
) -> (PrecoderSet, CommonRateAllocation) {
    let mut p = base_p.clone();
    for (stream, column) in base_p.iter() {
        if let Some(prev_col) = prev_p.get(stream) {
            let step = column - prev_col;
            p.set(stream.clone(), column + step * Complex64::new(kappa, 0.0));
        }
    }
    let mut c = base_c.clone();
    let c0 = base_c.multicast_portion()
        + kappa * (base_c.multicast_portion() - prev_c.multicast_portion());
    c.set_multicast_portion(c0.max(qos.multicast_threshold()).max(0.0));
    for stream in layout.splittable_streams() {
        for &user in layout.portion_users(stream) {
            let value = base_c.portion(stream, user)
                + kappa * (base_c.portion(stream, user) - prev_c.portion(stream, user));
            c.set_portion(stream, user, value.max(0.0));
        }
    }
    (p, c)
}

/// Clips a candidate into the power budget, completes the multicast portion
/// when the subproblem carries no variable for it, and keeps the candidate
/// only when the true rates accept the allocation and thresholds.
#[allow(clippy::too_many_arguments)]
fn evaluate_candidate(
    mut precoders: PrecoderSet,
    mut allocation: CommonRateAllocation,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    layout: &StreamLayout,
    complete_multicast: bool,
) -> Option<Iterate> {
    let budget = sys.power_budget();
    let power = precoders.transmit_power();
    if power > budget {
        precoders = scale_precoders(&precoders, (budget / power).sqrt());
    }
    let report = wsr_report(channels, sys, &precoders, layout, &allocation, weights, pm);
    if complete_multicast {
        allocation.set_multicast_portion(report.stream_caps[layout.multicast_stream()]);
    }
    let feasibility = rates::validate_allocation(&allocation, &report.stream_caps, qos, layout);
    if !feasibility.feasible(1e-7) {
        return None;
    }
    Some(Iterate {
        wsr: report.wsr,
        precoders,
        allocation,
    })
}

/// WMMSE-based alternating optimization for the weighted sum rate of one
/// strategy configuration, from a given power-feasible initial precoder set.
///
/// Alternates closed-form `(w, g)` updates with conic `(P, x)` solves until
/// the WSR changes by at most the configured tolerance. The first subproblem
/// being infeasible means the QoS thresholds cannot be met and is reported as
/// [`SolveError::QosInfeasible`]; later infeasibility cannot occur for
/// feasible iterates and surfaces as a numerical error.
#[allow(clippy::too_many_arguments)]
pub fn ao_solve(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    init: &PrecoderSet,
) -> Result<WsrOutcome, SolveError> {
    ao_solve_with(strategy, channels, weights, qos, sys, pm, cfg, init, &AoOptions::default())
}

/// [`ao_solve`] with explicit pinning options.
#[allow(clippy::too_many_arguments)]
pub fn ao_solve_with(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    init: &PrecoderSet,
    options: &AoOptions,
) -> Result<WsrOutcome, SolveError> {
    let layout = crate::model::stream_layout(strategy, sys)?;
    let budget = sys.power_budget();
    if init.transmit_power() > budget * (1.0 + 1e-6) {
        return Err(SolveError::Config(ConfigError::Invalid(
            "initial precoders exceed the power budget".into(),
        )));
    }

    let mut precoders = init.clone();
    if !options.pin_zero_precoders.is_empty() {
        // Zero the pinned columns and give their power back to the rest so
        // the starting point still uses the caller's budget.
        let before = precoders.transmit_power();
        for stream in &options.pin_zero_precoders {
            precoders.set(stream.clone(), DVector::zeros(sys.num_tx_antennas()));
        }
        let after = precoders.transmit_power();
        if after > 0.0 && after < before {
            let grow = Complex64::new((before / after).sqrt(), 0.0);
            let scaled: Vec<(StreamId, DVector<Complex64>)> =
                precoders.iter().map(|(s, p)| (s.clone(), p * grow)).collect();
            for (stream, column) in scaled {
                precoders.set(stream, column);
            }
        }
    }
    let mut allocation = CommonRateAllocation::zeros(&layout);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut solver_bound = f64::NAN;
    let mut incumbent: Option<Iterate> = None;

    for iteration in 1..=cfg.max_iterations {
        let state = build_state(channels, sys, &precoders, &layout);
        let subproblem =
            assemble_wsr_subproblem(&layout, channels, weights, qos, sys, &state, options)?;
        let sol = subproblem.program.solve_robust(SUBPROBLEM_TOL)?;
        if sol.status == SolveStatus::Infeasible {
            return if iteration == 1 {
                Err(SolveError::QosInfeasible)
            } else {
                Err(SolveError::Numerical(
                    "subproblem lost feasibility mid-run".into(),
                ))
            };
        }
        // Candidate steps, all validated against the true rate oracle and
        // accepted only when QoS-feasible and improving: the subproblem
        // iterate, its full-power rescale (a WSR optimum always uses the
        // whole budget), and extrapolations along the last step, which jump
        // over the slow power-migration phases of the surrogate's trust
        // region.
        let (p_raw, alloc_raw) = subproblem.extract(&sol, &layout, sys.num_tx_antennas());
        let mut candidates = vec![(p_raw.clone(), alloc_raw.clone())];
        let power = p_raw.transmit_power();
        if power > 0.0 && power < budget * (1.0 - 1e-9) {
            candidates.push((scale_precoders(&p_raw, (budget / power).sqrt()), alloc_raw.clone()));
        }
        if let Some(prev) = &incumbent {
            for kappa in [1.0, 3.0, 7.0, 15.0] {
                candidates.push(extrapolate(
                    &p_raw,
                    &alloc_raw,
                    &prev.precoders,
                    &prev.allocation,
                    kappa,
                    qos,
                    &layout,
                ));
            }
        }
        let floor = incumbent.as_ref().map_or(f64::NEG_INFINITY, |it| it.wsr - 1e-9);
        let mc = layout.multicast_stream();
        let complete_multicast = x_free_multicast(&layout)
            || options.pin_zero_portions.contains(mc)
            || options.pin_zero_precoders.contains(mc);
        let mut best_step: Option<Iterate> = None;
        for (p_cand, alloc_cand) in candidates {
            if let Some(step) = evaluate_candidate(
                p_cand,
                alloc_cand,
                channels,
                weights,
                qos,
                sys,
                pm,
                &layout,
                complete_multicast,
            ) {
                if step.wsr > floor
                    && best_step.as_ref().is_none_or(|b| step.wsr > b.wsr)
                {
                    best_step = Some(step);
                }
            }
        }
        let Some(step) = best_step else {
            if iteration == 1 {
                return Err(SolveError::Numerical(format!(
                    "first subproblem produced no usable iterate ({:?}, r_prim {:.2e})",
                    sol.status, sol.primal_residual
                )));
            }
            // No improving feasible step: an exactly solved subproblem that
            // cannot improve the incumbent means a fixed point; a degraded
            // solve only counts as converged if the last step was already
            // below tolerance.
            converged = sol.status == SolveStatus::Optimal
                || trace
                    .windows(2)
                    .last()
                    .is_some_and(|w| (w[1] - w[0]).abs() <= cfg.convergence_tolerance);
            break;
        };

        let wsr = step.wsr;
        precoders = step.precoders;
        allocation = step.allocation;
        solver_bound = subproblem.implied_wsr(&sol);
        incumbent = Some(Iterate {
            precoders: precoders.clone(),
            allocation: allocation.clone(),
            wsr,
        });
        let delta = trace.last().map_or(f64::INFINITY, |prev| (wsr - prev).abs());
        trace.push(wsr);
        if delta <= cfg.convergence_tolerance {
            converged = true;
            break;
        }
    }

    let report = wsr_report(channels, sys, &precoders, &layout, &allocation, weights, pm);
    let iterations = trace.len();
    Ok(WsrOutcome {
        strategy: strategy.clone(),
        precoders,
        allocation,
        report,
        trace,
        iterations,
        converged,
        solver_bound,
    })
}

fn x_free_multicast(layout: &StreamLayout) -> bool {
    layout.portion_users(layout.multicast_stream()).is_empty()
}

/// Runs [`ao_solve`] from the default initialization and from every provided
/// warm start (each re-keyed onto this strategy's layout), keeping the best
/// final WSR. Warm starts let a richer strategy take over a converged point
/// of a strategy it contains, which makes the nesting relations hold despite
/// the nonconvexity.
#[allow(clippy::too_many_arguments)]
pub fn ao_solve_seeded(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    seeds: &[(StrategyConfig, PrecoderSet)],
) -> Result<WsrOutcome, SolveError> {
    let layout = crate::model::stream_layout(strategy, sys)?;
    let default_init =
        crate::scenarios::initial_precoders(&layout, strategy.kind(), channels, sys);
    let mut inits = vec![default_init];
    for (from_strategy, precoders) in seeds {
        let from_layout = crate::model::stream_layout(from_strategy, sys)?;
        inits.push(precoders.embed_into(&from_layout, &layout));
    }

    let mut best: Option<WsrOutcome> = None;
    let mut first_error: Option<SolveError> = None;
    for init in &inits {
        match ao_solve(strategy, channels, weights, qos, sys, pm, cfg, init) {
            Ok(outcome) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| outcome.report.wsr > b.report.wsr + 1e-6);
                if better {
                    best = Some(outcome);
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one init attempted"))
}

/// Best result over all enumerated decoding orders / groupings of a strategy
/// kind (guarded to K <= 4), with the full per-order table. WSR ties within
/// 1e-6 keep the lexicographically earlier order.
#[allow(clippy::too_many_arguments)]
pub fn ao_solve_best(
    kind: StrategyKind,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    seeds: &[(StrategyConfig, PrecoderSet)],
) -> Result<BestOverOrders, SolveError> {
    let configs = crate::scenarios::enumerate_orders(kind, sys.num_users())?;
    let mut table: Vec<(String, Result<WsrOutcome, SolveError>)> =
        Vec::with_capacity(configs.len());
    let mut best: Option<usize> = None;
    for config in configs {
        let result = ao_solve_seeded(&config, channels, weights, qos, sys, pm, cfg, seeds);
        if let Ok(outcome) = &result {
            let better = match best {
                None => true,
                Some(i) => match &table[i] {
                    (_, Ok(b)) => outcome.report.wsr > b.report.wsr + 1e-6,
                    _ => true,
                },
            };
            if better {
                best = Some(table.len());
            }
        }
        let label = match &result {
            Ok(o) => o.strategy.label(),
            Err(_) => config.label(),
        };
        table.push((label, result));
    }
    match best {
        Some(i) => Ok(BestOverOrders { best_index: i, table }),
        None => Err(table
            .into_iter()
            .find_map(|(_, r)| r.err())
            .unwrap_or(SolveError::QosInfeasible)),
    }
}

/// Per-order table of an enumerated solve.
pub struct BestOverOrders {
    pub best_index: usize,
    pub table: Vec<(String, Result<WsrOutcome, SolveError>)>,
}

impl BestOverOrders {
    pub fn best(&self) -> &WsrOutcome {
        match &self.table[self.best_index].1 {
            Ok(outcome) => outcome,
            Err(_) => unreachable!("best_index always points at an Ok row"),
        }
    }
}

/// Model-variable count of the per-strategy WSR subproblem (complex precoder
/// entries count once, plus the common-rate entries), as used in the
/// complexity accounting:
///
/// - MU-LP and SC-SIC per group: `K Nt + Nt`
/// - 1-layer RS: `K Nt + Nt + K + 1`
/// - SC-SIC: `K Nt + 2`
/// - generalized RS: `2^K Nt + 2^{K-1} K + 1 - K`
/// - OMA baseline: `2 Nt`
///
/// The generalized-RS figure follows the published accounting, which counts
/// `2^K` precoding vectors; the assembled subproblem carries `2^K - 1`
/// streams (see the module tests).
pub fn socp_model_variable_count(kind: StrategyKind, num_users: usize, num_tx_antennas: usize) -> usize {
    let (k, nt) = (num_users, num_tx_antennas);
    match kind {
        StrategyKind::MuLp | StrategyKind::ScSicPerGroup => k * nt + nt,
        StrategyKind::OneLayerRs => k * nt + nt + k + 1,
        StrategyKind::ScSic => k * nt + 2,
        StrategyKind::GeneralizedRs => (1 << k) * nt + (1 << (k - 1)) * k + 1 - k,
        StrategyKind::Oma => 2 * nt,
    }
}
