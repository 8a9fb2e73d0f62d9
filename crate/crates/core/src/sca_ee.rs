//! Energy-efficiency maximization via successive convex approximation.
//!
//! The fractional objective is lifted with scalars `omega` (square root of
//! the weighted rate), `z` (total consumed power) and `t` (the EE epigraph):
//! maximize `t` subject to `omega^2 / z >= t`, the weighted rate at least
//! `omega^2`, and `z` at least the consumed power. Per-stream rate lower
//! bounds `alpha`, SINR bounds `theta >= 2^alpha` (an exponential cone) and
//! interference upper bounds `beta` turn the QoS and decodability rows into
//! convex constraints except for two quotient terms, which are linearized at
//! the current iterate:
//!
//! ```text
//! omega^2 / z      >=  (2 omega_n / z_n) omega - (omega_n / z_n)^2 z
//! |h^H p|^2 / beta >=  2 Re{p_n^H h h^H p} / beta_n - (|h^H p_n| / beta_n)^2 beta
//! ```
//!
//! Both right-hand sides are affine, globally under-estimate the left-hand
//! sides and touch them at the expansion point, so each iterate stays
//! feasible for the next subproblem and the EE objective is nondecreasing
//! and bounded: the loop converges. Energy efficiency runs under perfect
//! CSIT, on the channel estimate.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::conic::{ComplexVecVar, LinExpr, ProgramBuilder, SolveStatus, VarId};
use crate::model::{
    total_power, AlgorithmConfig, ChannelSet, CommonRateAllocation, ConfigError, PowerModel,
    PrecoderSet, QosSpec, RateReport, StrategyConfig, StreamId, StreamLayout, SystemConfig,
    WeightVector,
};
use crate::rates;
use crate::wmmse::SolveError;

const SUBPROBLEM_TOL: f64 = 1e-9;
/// Expansion-point floors keeping the linearizations well defined.
const OMEGA_FLOOR: f64 = 1e-9;

/// Tangent of `omega^2 / z` at `(omega_n, z_n)`:
/// `Omega(omega, z) = omega_coeff * omega + z_coeff * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioTangent {
    pub omega_coeff: f64,
    pub z_coeff: f64,
}

impl RatioTangent {
    pub fn eval(&self, omega: f64, z: f64) -> f64 {
        self.omega_coeff * omega + self.z_coeff * z
    }
}

/// First-order under-estimator of `omega^2 / z` at `(omega_n, z_n)`; exact
/// at the expansion point, below everywhere else on `z > 0`.
pub fn linearize_ratio(omega_n: f64, z_n: f64) -> Result<RatioTangent, SolveError> {
    if z_n <= 0.0 || z_n.is_nan() {
        return Err(SolveError::Numerical(
            "ratio linearization needs a positive power expansion point".into(),
        ));
    }
    let slope = omega_n / z_n;
    Ok(RatioTangent {
        omega_coeff: 2.0 * slope,
        z_coeff: -slope * slope,
    })
}

/// Tangent of `|h^H p|^2 / beta` at `(p_n, beta_n)`:
/// `Psi(p, beta) = 2 Re{conj(inner_n) h^H p} / beta_n - beta_coeff * beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct QolTangent {
    /// `h^H p_n`
    inner_n: Complex64,
    beta_n: f64,
    pub beta_coeff: f64,
}

impl QolTangent {
    pub fn eval(&self, h: &DVector<Complex64>, p: &DVector<Complex64>, beta: f64) -> f64 {
        let inner = h.dotc(p);
        2.0 * (self.inner_n.conj() * inner).re / self.beta_n - self.beta_coeff * beta
    }

    /// Affine expression in the precoder variable and `beta`.
    fn expr(&self, h: &DVector<Complex64>, p_var: &ComplexVecVar, beta: VarId) -> LinExpr {
        let (re, im) = p_var.conjugate_inner(h);
        let scale = 2.0 / self.beta_n;
        re.scale(scale * self.inner_n.re)
            .plus(&im.scale(scale * self.inner_n.im))
            .plus(&LinExpr::term(beta, -self.beta_coeff))
    }
}

/// First-order under-estimator of the quadratic-over-linear SINR numerator,
/// exact at the expansion point.
pub fn linearize_quadratic_over_linear(
    h: &DVector<Complex64>,
    p_n: &DVector<Complex64>,
    beta_n: f64,
) -> Result<QolTangent, SolveError> {
    if beta_n <= 0.0 || beta_n.is_nan() {
        return Err(SolveError::Numerical(
            "quotient linearization needs a positive interference expansion point".into(),
        ));
    }
    let inner_n = h.dotc(p_n);
    let ratio = inner_n.norm() / beta_n;
    Ok(QolTangent {
        inner_n,
        beta_n,
        beta_coeff: ratio * ratio,
    })
}

/// Expansion point and bookkeeping of the successive approximation.
#[derive(Debug, Clone)]
pub struct ScaState {
    pub precoders: PrecoderSet,
    pub omega: f64,
    pub z: f64,
    pub t: f64,
    /// Interference-plus-noise upper bounds per (user, decoded stream).
    pub beta: BTreeMap<(usize, StreamId), f64>,
    /// Rate lower bounds per (user, decoded stream).
    pub alpha: BTreeMap<(usize, StreamId), f64>,
    /// 1 + SINR lower bounds per (user, decoded stream).
    pub theta: BTreeMap<(usize, StreamId), f64>,
    pub iteration: usize,
    pub trace: Vec<f64>,
}

/// Required decode rate a stream must support at initialization, where all
/// splittable portions are zero except those of users with no private stream
/// (whose whole QoS must ride on the shared stream).
fn init_required_rate(layout: &StreamLayout, stream: &StreamId, qos: &QosSpec) -> f64 {
    if stream.carries_multicast() {
        let carried: f64 = layout
            .portion_users(stream)
            .iter()
            .filter(|&&u| layout.private_stream_of(u).is_none())
            .map(|&u| qos.unicast_threshold(u))
            .sum();
        qos.multicast_threshold() + carried
    } else if let Some(owner) = layout.owner(stream) {
        qos.unicast_threshold(owner)
    } else {
        0.0
    }
}

/// Finds a QoS-feasible precoder set: the default initialization when it
/// already satisfies the thresholds, otherwise a slack-maximizing
/// second-order-cone restriction of the SINR constraints (each row demands
/// `Re{h^H p} >= sqrt(gamma_req) ||[interference; sigma]||`).
pub fn init_feasible(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    qos: &QosSpec,
    sys: &SystemConfig,
) -> Result<PrecoderSet, SolveError> {
    let layout = crate::model::stream_layout(strategy, sys)?;
    for user in 0..layout.num_users() {
        let covered = layout.private_stream_of(user).is_some()
            || layout
                .splittable_streams()
                .any(|s| layout.portion_users(s).contains(&user));
        if !covered && qos.unicast_threshold(user) > 0.0 {
            return Err(SolveError::QosInfeasible);
        }
    }

    let default = crate::scenarios::initial_precoders(&layout, strategy.kind(), channels, sys);
    let estimate = channels.estimated();
    let caps = rates::stream_rate_caps(estimate, sys, &default, &layout);
    let default_ok = layout
        .streams()
        .iter()
        .all(|s| caps[s] >= init_required_rate(&layout, s, qos) - 1e-12);
    if default_ok {
        return Ok(default);
    }

    // Restricted feasibility program: maximize the worst SINR-row slack.
    let mut pb = ProgramBuilder::new();
    let slack = pb.scalar("slack");
    let mut p_vars: BTreeMap<StreamId, ComplexVecVar> = BTreeMap::new();
    for stream in layout.streams() {
        p_vars.insert(
            stream.clone(),
            pb.complex_vector(stream.to_string(), sys.num_tx_antennas()),
        );
    }
    pb.maximize(slack.into());
    for stream in layout.streams() {
        let required = init_required_rate(&layout, stream, qos);
        if required <= 0.0 {
            continue;
        }
        let gamma_req = 2f64.powf(required) - 1.0;
        for user in layout.decoders(stream) {
            let h = &estimate[user];
            let position = layout.chain_position(user, stream).expect("decoder");
            let cancelled = &layout.chain(user)[..position];
            let mut stack = Vec::new();
            for other in layout.streams() {
                if other == stream || cancelled.contains(other) {
                    continue;
                }
                let (re, im) = p_vars[other].conjugate_inner(h);
                stack.push(re);
                stack.push(im);
            }
            stack.push(LinExpr::constant(sys.noise_variance(user).sqrt()));
            let (re, _) = p_vars[stream].conjugate_inner(h);
            let bound = re
                .plus(&LinExpr::term(slack, -1.0))
                .scale(1.0 / gamma_req.sqrt());
            pb.soc(stack, bound);
        }
    }
    let mut power_args = Vec::new();
    for var in p_vars.values() {
        for &id in var.scalars() {
            power_args.push(LinExpr::from(id));
        }
    }
    pb.soc(power_args, LinExpr::constant(sys.power_budget().sqrt()));

    let sol = pb.build()?.solve_robust(SUBPROBLEM_TOL)?;
    if sol.status != SolveStatus::Optimal || sol.value(slack) < -1e-9 {
        return Err(SolveError::QosInfeasible);
    }
    let mut precoders = PrecoderSet::zeros(&layout, sys.num_tx_antennas());
    for (stream, var) in &p_vars {
        precoders.set(stream.clone(), sol.complex_vector(var));
    }
    Ok(precoders)
}

/// Initial common-rate allocation: the multicast portion takes the whole
/// shared-stream cap except what users without a private stream need for
/// their QoS.
fn init_allocation(
    layout: &StreamLayout,
    caps: &BTreeMap<StreamId, f64>,
    qos: &QosSpec,
) -> CommonRateAllocation {
    let mut alloc = CommonRateAllocation::zeros(layout);
    let mc = layout.multicast_stream().clone();
    let mut c0 = caps.get(&mc).copied().unwrap_or(0.0);
    for &user in layout.portion_users(&mc) {
        if layout.private_stream_of(user).is_none() {
            let portion = qos.unicast_threshold(user);
            alloc.set_portion(&mc, user, portion);
            c0 -= portion;
        }
    }
    alloc.set_multicast_portion(c0.max(0.0));
    alloc
}

/// Builds the expansion point from a power-feasible precoder set by replacing
/// the lifted inequalities with equalities: `beta` as the realized
/// interference-plus-noise, `alpha`/`theta` from the realized SINRs, `omega`
/// from the realized weighted rate, `z` as the consumed power.
pub fn init_auxiliaries(
    precoders: &PrecoderSet,
    channels: &ChannelSet,
    layout: &StreamLayout,
    weights: &WeightVector,
    qos: &QosSpec,
    pm: &PowerModel,
    sys: &SystemConfig,
) -> ScaState {
    let estimate = channels.estimated();
    let mut beta = BTreeMap::new();
    let mut alpha = BTreeMap::new();
    let mut theta = BTreeMap::new();
    for user in 0..layout.num_users() {
        for stream in layout.chain(user) {
            let gamma = rates::sinr(estimate, sys, precoders, layout, user, stream)
                .expect("chain member");
            let signal = {
                let h = &estimate[user];
                precoders.get(stream).map_or(0.0, |p| h.dotc(p).norm_sqr())
            };
            let interference = if gamma > 0.0 {
                signal / gamma
            } else {
                // No signal: the denominator is everything not yet cancelled.
                let h = &estimate[user];
                let position = layout.chain_position(user, stream).expect("chain member");
                let cancelled = &layout.chain(user)[..position];
                let mut denom = sys.noise_variance(user);
                for other in layout.streams() {
                    if other == stream || cancelled.contains(other) {
                        continue;
                    }
                    denom += precoders.get(other).map_or(0.0, |p| h.dotc(p).norm_sqr());
                }
                denom
            };
            let key = (user, stream.clone());
            beta.insert(key.clone(), interference.max(sys.noise_variance(user)));
            alpha.insert(key.clone(), (1.0 + gamma).log2());
            theta.insert(key, 1.0 + gamma);
        }
    }
    let caps = rates::stream_rate_caps(estimate, sys, precoders, layout);
    let alloc = init_allocation(layout, &caps, qos);
    let mut numerator = weights.multicast_weight() * alloc.multicast_portion();
    for user in 0..layout.num_users() {
        let private = layout
            .private_stream_of(user)
            .and_then(|s| caps.get(s))
            .copied()
            .unwrap_or(0.0);
        numerator += weights.unicast_weight(user) * (alloc.user_common_total(user) + private);
    }
    let omega = numerator.max(0.0).sqrt().max(OMEGA_FLOOR);
    let z = total_power(precoders, pm, sys);
    ScaState {
        precoders: precoders.clone(),
        omega,
        z,
        t: omega * omega / z,
        beta,
        alpha,
        theta,
        iteration: 0,
        trace: Vec::new(),
    }
}

/// Handles into an assembled EE subproblem.
pub struct EeSubproblem {
    pub program: crate::conic::ConicProgram,
    p_vars: BTreeMap<StreamId, ComplexVecVar>,
    c0: VarId,
    portions: BTreeMap<(StreamId, usize), VarId>,
    omega: VarId,
    z: VarId,
    t: VarId,
    beta: BTreeMap<(usize, StreamId), VarId>,
    alpha: BTreeMap<(usize, StreamId), VarId>,
    theta: BTreeMap<(usize, StreamId), VarId>,
    rate_numerator: LinExpr,
}

/// Builds the convexified EE subproblem around `state`.
///
/// `pin_multicast_rate` fixes `C_0` to the multicast threshold (the
/// individual-EE-region protocol); otherwise `C_0` only has to reach it.
#[allow(clippy::too_many_arguments)]
pub fn assemble_ee_subproblem(
    layout: &StreamLayout,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    pm: &PowerModel,
    sys: &SystemConfig,
    state: &ScaState,
    pin_multicast_rate: bool,
) -> Result<EeSubproblem, SolveError> {
    let estimate = channels.estimated();
    let mc = layout.multicast_stream().clone();
    let mut pb = ProgramBuilder::new();

    let mut p_vars: BTreeMap<StreamId, ComplexVecVar> = BTreeMap::new();
    for stream in layout.streams() {
        p_vars.insert(
            stream.clone(),
            pb.complex_vector(stream.to_string(), sys.num_tx_antennas()),
        );
    }
    let c0 = pb.scalar("C_0");
    let mut portions: BTreeMap<(StreamId, usize), VarId> = BTreeMap::new();
    for stream in layout.splittable_streams() {
        for &user in layout.portion_users(stream) {
            portions.insert(
                (stream.clone(), user),
                pb.scalar(format!("C_{}^{stream}", user + 1)),
            );
        }
    }
    let omega = pb.aux_scalar("omega");
    let z = pb.aux_scalar("z");
    let t = pb.aux_scalar("t");

    let mut beta = BTreeMap::new();
    let mut alpha = BTreeMap::new();
    let mut theta = BTreeMap::new();
    for user in 0..layout.num_users() {
        for stream in layout.chain(user) {
            let key = (user, stream.clone());
            beta.insert(key.clone(), pb.aux_scalar(format!("beta_{}_{stream}", user + 1)));
            alpha.insert(key.clone(), pb.aux_scalar(format!("alpha_{}_{stream}", user + 1)));
            theta.insert(key, pb.aux_scalar(format!("theta_{}_{stream}", user + 1)));
        }
    }

    // Per-user unicast rate: portion sum plus the own-stream rate bound. A
    // multi-decoder private stream (SC-SIC family) gets a dedicated rate
    // variable capped by every decoder's alpha.
    let mut user_rate: Vec<LinExpr> = Vec::with_capacity(layout.num_users());
    for user in 0..layout.num_users() {
        let mut expr = LinExpr::zero();
        for ((stream, u), var) in &portions {
            if *u == user {
                let _ = stream;
                expr.push(*var, 1.0);
            }
        }
        if let Some(own) = layout.private_stream_of(user) {
            let decoders = layout.decoders(own);
            if decoders.len() == 1 {
                expr.push(alpha[&(user, own.clone())], 1.0);
            } else {
                let rho = pb.aux_scalar(format!("rate_{}", user + 1));
                for decoder in decoders {
                    pb.le(rho.into(), alpha[&(decoder, own.clone())].into());
                }
                pb.ge(rho.into(), LinExpr::constant(0.0));
                expr.push(rho, 1.0);
            }
        }
        user_rate.push(expr);
    }

    // EE epigraph: Omega^n(omega, z) >= t.
    let ratio = linearize_ratio(state.omega, state.z)?;
    pb.ge(
        LinExpr::term(omega, ratio.omega_coeff).plus(&LinExpr::term(z, ratio.z_coeff)),
        t.into(),
    );

    // Weighted rate at least omega^2.
    let mut numerator = LinExpr::term(c0, weights.multicast_weight());
    for (user, rate) in user_rate.iter().enumerate() {
        numerator = numerator.plus(&rate.clone().scale(weights.unicast_weight(user)));
    }
    pb.quad_le(vec![omega.into()], numerator.clone());

    // Consumed power under z.
    let amp = 1.0 / pm.amplifier_efficiency();
    let mut power_terms = Vec::new();
    for var in p_vars.values() {
        for &id in var.scalars() {
            power_terms.push(LinExpr::term(id, amp.sqrt()));
        }
    }
    pb.quad_le(
        power_terms,
        LinExpr::term(z, 1.0)
            .plus(&LinExpr::constant(-pm.circuit_power(sys.num_tx_antennas()))),
    );

    // Sum power budget.
    let mut budget_args = Vec::new();
    for var in p_vars.values() {
        for &id in var.scalars() {
            budget_args.push(LinExpr::from(id));
        }
    }
    pb.soc(budget_args, LinExpr::constant(sys.power_budget().sqrt()));

    // QoS rows.
    if pin_multicast_rate {
        pb.eq(c0.into(), LinExpr::constant(qos.multicast_threshold()));
    } else {
        pb.ge(c0.into(), LinExpr::constant(qos.multicast_threshold()));
    }
    for (user, rate) in user_rate.iter().enumerate() {
        let threshold = qos.unicast_threshold(user);
        if rate.is_constant() {
            if threshold > 0.0 {
                return Err(SolveError::QosInfeasible);
            }
            continue;
        }
        pb.ge(rate.clone(), LinExpr::constant(threshold));
    }
    for var in portions.values() {
        pb.ge((*var).into(), LinExpr::constant(0.0));
    }

    // Decodability rows per (decoder, stream).
    for stream in layout.streams() {
        let is_splittable = !layout.portion_users(stream).is_empty();
        for user in layout.decoders(stream) {
            let key = (user, stream.clone());
            let (a, th, b) = (alpha[&key], theta[&key], beta[&key]);

            // Shared-stream load fits under every decoder's rate bound.
            if *stream == mc {
                let mut load = LinExpr::term(c0, 1.0);
                for &pu in layout.portion_users(stream) {
                    load.push(portions[&(stream.clone(), pu)], 1.0);
                }
                pb.le(load, a.into());
            } else if is_splittable {
                let mut load = LinExpr::zero();
                for &pu in layout.portion_users(stream) {
                    load.push(portions[&(stream.clone(), pu)], 1.0);
                }
                pb.le(load, a.into());
            }

            // theta >= 2^alpha (exponential cone).
            pb.pow2_le(a.into(), th.into());

            // Psi^n(p, beta) >= theta - 1.
            let h = &estimate[user];
            let p_n = state
                .precoders
                .get(stream)
                .expect("state covers every stream");
            let beta_n = state.beta[&key].max(sys.noise_variance(user));
            let tangent = linearize_quadratic_over_linear(h, p_n, beta_n)?;
            pb.ge(
                tangent.expr(h, &p_vars[stream], b),
                LinExpr::term(th, 1.0).plus(&LinExpr::constant(-1.0)),
            );

            // beta at least the interference plus noise.
            let position = layout.chain_position(user, stream).expect("decoder");
            let cancelled = &layout.chain(user)[..position];
            let mut interference = Vec::new();
            for other in layout.streams() {
                if other == stream || cancelled.contains(other) {
                    continue;
                }
                let (re, im) = p_vars[other].conjugate_inner(h);
                interference.push(re);
                interference.push(im);
            }
            pb.quad_le(
                interference,
                LinExpr::term(b, 1.0)
                    .plus(&LinExpr::constant(-sys.noise_variance(user))),
            );
        }
    }

    pb.maximize(t.into());
    Ok(EeSubproblem {
        program: pb.build()?,
        p_vars,
        c0,
        portions,
        omega,
        z,
        t,
        beta,
        alpha,
        theta,
        rate_numerator: numerator,
    })
}

/// Result of one SCA run.
#[derive(Debug, Clone)]
pub struct EeOutcome {
    pub strategy: StrategyConfig,
    pub precoders: PrecoderSet,
    pub allocation: CommonRateAllocation,
    /// Report computed by the rate oracle from `(P, c)`.
    pub report: RateReport,
    /// EE epigraph value after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final lifted variables, for checking the equalities at the optimum.
    pub omega: f64,
    pub z: f64,
    pub t: f64,
    /// Weighted rate achieved inside the final subproblem.
    pub solver_numerator: f64,
}

impl EeOutcome {
    /// Gaps of the three lifting inequalities at the returned point:
    /// `|omega^2/z - t|`, `|weighted rate - omega^2|` (with the oracle's
    /// rates) and `|z - total power|`. All vanish at the optimum.
    pub fn equality_gaps(&self, weights: &WeightVector) -> (f64, f64, f64) {
        let ratio = (self.omega * self.omega / self.z - self.t).abs();
        let numerator =
            weights.multicast_weight() * self.allocation.multicast_portion() + self.report.wsr;
        let rate = (numerator - self.omega * self.omega).abs();
        let power = (self.z - self.report.total_power).abs();
        (ratio, rate, power)
    }
}

/// Successive convex approximation for the energy efficiency of one strategy
/// configuration.
///
/// Starts from `init` when given (it must be QoS-feasible), otherwise from
/// [`init_feasible`]. Iterates assemble/solve/re-expand until the epigraph
/// value changes by at most the configured tolerance.
#[allow(clippy::too_many_arguments)]
pub fn sca_solve(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    init: Option<&PrecoderSet>,
) -> Result<EeOutcome, SolveError> {
    sca_solve_with(strategy, channels, weights, qos, sys, pm, cfg, init, false)
}

/// [`sca_solve`] with the multicast rate optionally pinned to its threshold.
#[allow(clippy::too_many_arguments)]
pub fn sca_solve_with(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    init: Option<&PrecoderSet>,
    pin_multicast_rate: bool,
) -> Result<EeOutcome, SolveError> {
    let layout = crate::model::stream_layout(strategy, sys)?;
    let start = match init {
        Some(p) => {
            if p.transmit_power() > sys.power_budget() * (1.0 + 1e-6) {
                return Err(SolveError::Config(ConfigError::Invalid(
                    "initial precoders exceed the power budget".into(),
                )));
            }
            p.clone()
        }
        None => init_feasible(strategy, channels, qos, sys)?,
    };
    let mut state = init_auxiliaries(&start, channels, &layout, weights, qos, pm, sys);

    let mut best: Option<(PrecoderSet, CommonRateAllocation, f64, f64, f64, f64, f64)> = None;
    let mut converged = false;
    for iteration in 1..=cfg.max_iterations {
        let subproblem = assemble_ee_subproblem(
            &layout,
            channels,
            weights,
            qos,
            pm,
            sys,
            &state,
            pin_multicast_rate,
        )?;
        let sol = subproblem.program.solve_robust(SUBPROBLEM_TOL)?;
        let usable = match sol.status {
            SolveStatus::Optimal => true,
            SolveStatus::Infeasible => {
                return if iteration == 1 {
                    Err(SolveError::QosInfeasible)
                } else {
                    Err(SolveError::Numerical(
                        "EE subproblem lost feasibility mid-run".into(),
                    ))
                };
            }
            _ => sol.primal_residual <= 1e-6 && sol.dual_residual <= 1e-6,
        };
        if !usable {
            if iteration == 1 {
                return Err(SolveError::Numerical(format!(
                    "first EE subproblem terminated with {:?}",
                    sol.status
                )));
            }
            converged = state
                .trace
                .windows(2)
                .last()
                .is_some_and(|w| (w[1] - w[0]).abs() < cfg.convergence_tolerance);
            break;
        }

        let t_new = sol.value(subproblem.t);
        let prev_t = state.trace.last().copied();
        if prev_t.is_some_and(|prev| t_new < prev - 1e-9) {
            converged = prev_t.unwrap() - t_new <= cfg.convergence_tolerance;
            break;
        }

        // Re-expand at the solution.
        let mut precoders = PrecoderSet::zeros(&layout, sys.num_tx_antennas());
        for (stream, var) in &subproblem.p_vars {
            precoders.set(stream.clone(), sol.complex_vector(var));
        }
        let budget = sys.power_budget();
        let power = precoders.transmit_power();
        if power > budget {
            let shrink = Complex64::new((budget / power).sqrt(), 0.0);
            let scaled: Vec<(StreamId, DVector<Complex64>)> =
                precoders.iter().map(|(s, p)| (s.clone(), p * shrink)).collect();
            for (stream, column) in scaled {
                precoders.set(stream, column);
            }
        }
        let mut alloc = CommonRateAllocation::zeros(&layout);
        alloc.set_multicast_portion(sol.value(subproblem.c0).max(0.0));
        for ((stream, user), var) in &subproblem.portions {
            alloc.set_portion(stream, *user, sol.value(*var).max(0.0));
        }

        state.precoders = precoders.clone();
        state.omega = sol.value(subproblem.omega).max(OMEGA_FLOOR);
        state.z = sol.value(subproblem.z).max(pm.circuit_power(sys.num_tx_antennas()).max(1e-12));
        state.t = t_new;
        for (key, var) in &subproblem.beta {
            state
                .beta
                .insert(key.clone(), sol.value(*var).max(sys.noise_variance(key.0)));
        }
        for (key, var) in &subproblem.alpha {
            state.alpha.insert(key.clone(), sol.value(*var));
        }
        for (key, var) in &subproblem.theta {
            state.theta.insert(key.clone(), sol.value(*var).max(1.0));
        }
        state.iteration = iteration;
        state.trace.push(t_new);
        best = Some((
            precoders,
            alloc,
            state.omega,
            state.z,
            t_new,
            sol.eval(&subproblem.rate_numerator),
            t_new,
        ));

        if let Some(prev) = prev_t {
            if (t_new - prev).abs() < cfg.convergence_tolerance {
                converged = true;
                break;
            }
        }
    }

    let (precoders, allocation, omega, z, t, solver_numerator, _) =
        best.ok_or_else(|| SolveError::Numerical("no EE iterate produced".into()))?;
    let report = rates::report(
        channels.estimated(),
        sys,
        &precoders,
        &layout,
        &allocation,
        weights,
        pm,
    );
    Ok(EeOutcome {
        strategy: strategy.clone(),
        precoders,
        allocation,
        report,
        trace: state.trace.clone(),
        iterations: state.trace.len(),
        converged,
        omega,
        z,
        t,
        solver_numerator,
    })
}

/// Runs [`sca_solve`] from the feasibility initialization and from every
/// provided warm start (re-keyed onto this layout), keeping the best final
/// EE.
#[allow(clippy::too_many_arguments)]
pub fn sca_solve_seeded(
    strategy: &StrategyConfig,
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    seeds: &[(StrategyConfig, PrecoderSet)],
) -> Result<EeOutcome, SolveError> {
    let layout = crate::model::stream_layout(strategy, sys)?;
    let mut runs: Vec<Option<PrecoderSet>> = vec![None];
    for (from_strategy, precoders) in seeds {
        let from_layout = crate::model::stream_layout(from_strategy, sys)?;
        runs.push(Some(precoders.embed_into(&from_layout, &layout)));
    }
    let mut best: Option<EeOutcome> = None;
    let mut first_error: Option<SolveError> = None;
    for init in &runs {
        match sca_solve(strategy, channels, weights, qos, sys, pm, cfg, init.as_ref()) {
            Ok(outcome) => {
                if best
                    .as_ref()
                    .is_none_or(|b| outcome.report.ee > b.report.ee + 1e-6)
                {
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
    best.ok_or_else(|| first_error.expect("at least one run attempted"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{stream_layout, StrategyKind};
    use crate::scenarios::{self, Csit, ScenarioKind, ScenarioSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cvec(entries: &[(f64, f64)]) -> DVector<Complex64> {
        DVector::from_vec(entries.iter().map(|&(re, im)| Complex64::new(re, im)).collect())
    }

    #[test]
    fn ratio_tangent_hand_example() {
        let tangent = linearize_ratio(2.0, 1.0).unwrap();
        assert_relative_eq!(tangent.omega_coeff, 4.0, epsilon = 1e-15);
        assert_relative_eq!(tangent.z_coeff, -4.0, epsilon = 1e-15);
        // tangency: Omega(2, 1) = 4 = omega^2 / z
        assert_relative_eq!(tangent.eval(2.0, 1.0), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn ratio_tangent_zero_expansion() {
        let tangent = linearize_ratio(0.0, 3.0).unwrap();
        assert_eq!(tangent.eval(5.0, 1.0), 0.0);
        assert!(linearize_ratio(1.0, 0.0).is_err());
    }

    #[test]
    fn qol_tangent_hand_example() {
        let h = cvec(&[(1.0, 0.0)]);
        let p_n = cvec(&[(1.0, 0.0)]);
        let tangent = linearize_quadratic_over_linear(&h, &p_n, 1.0).unwrap();
        // Psi = 2 Re{p} - beta; tangency Psi(1, 1) = 1 = |p|^2 / beta
        assert_relative_eq!(tangent.eval(&h, &p_n, 1.0), 1.0, epsilon = 1e-15);
        let p = cvec(&[(2.0, 0.0)]);
        assert_relative_eq!(tangent.eval(&h, &p, 1.5), 4.0 - 1.5, epsilon = 1e-15);
    }

    #[test]
    fn qol_tangent_zero_expansion_point() {
        let h = cvec(&[(1.0, 0.0), (0.5, 0.5)]);
        let p_n = cvec(&[(0.0, 0.0), (0.0, 0.0)]);
        let tangent = linearize_quadratic_over_linear(&h, &p_n, 2.0).unwrap();
        let p = cvec(&[(1.0, -1.0), (0.3, 0.0)]);
        assert_eq!(tangent.eval(&h, &p, 5.0), 0.0);
        assert!(linearize_quadratic_over_linear(&h, &p_n, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn ratio_tangent_underestimates(
            omega_n in 0.0..4.0f64, z_n in 0.1..5.0f64,
            omega in 0.0..4.0f64, z in 0.1..5.0f64,
        ) {
            let tangent = linearize_ratio(omega_n, z_n).unwrap();
            prop_assert!(tangent.eval(omega, z) <= omega * omega / z + 1e-12);
        }

        #[test]
        fn qol_tangent_underestimates(
            a in -2.0..2.0f64, b in -2.0..2.0f64,
            c in -2.0..2.0f64, d in -2.0..2.0f64,
            beta_n in 0.1..4.0f64, beta in 0.1..4.0f64,
        ) {
            let h = cvec(&[(1.0, 0.4), (-0.3, 0.8)]);
            let p_n = cvec(&[(a, b), (b, a)]);
            let p = cvec(&[(c, d), (d, c)]);
            let tangent = linearize_quadratic_over_linear(&h, &p_n, beta_n).unwrap();
            let direct = h.dotc(&p).norm_sqr() / beta;
            prop_assert!(tangent.eval(&h, &p, beta) <= direct + 1e-10);
        }
    }

    fn two_user_channels(gamma: f64, theta: f64, nt: usize) -> ChannelSet {
        let spec = ScenarioSpec {
            kind: ScenarioKind::SpecificTwoUser { gamma, theta },
            num_tx_antennas: nt,
            seed: 1,
            csit: Csit::Perfect,
        };
        scenarios::specific_channels(&spec).unwrap()
    }

    fn paper_power_model() -> PowerModel {
        let dbm = |x: f64| 10f64.powf(x / 10.0) / 1000.0;
        PowerModel::new(0.35, dbm(27.0), dbm(30.0)).unwrap()
    }

    #[test]
    fn init_feasible_returns_default_for_zero_qos() {
        let sys = SystemConfig::new(4, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, std::f64::consts::PI / 3.0, 4);
        let p = init_feasible(&StrategyConfig::OneLayerRs, &channels, &QosSpec::none(2), &sys)
            .unwrap();
        let layout = stream_layout(&StrategyConfig::OneLayerRs, &sys).unwrap();
        let expected =
            scenarios::initial_precoders(&layout, StrategyKind::OneLayerRs, &channels, &sys);
        assert_eq!(p, expected);
    }

    #[test]
    fn init_feasible_single_user_capacity_boundary() {
        let sys = SystemConfig::new(1, 1, 10.0).unwrap();
        let channels = ChannelSet::perfect(vec![cvec(&[(1.0, 0.0)])]).unwrap();
        let capacity = 11f64.log2();
        let ok = QosSpec::new(vec![capacity - 0.2], 0.0).unwrap();
        assert!(init_feasible(&StrategyConfig::MuLp, &channels, &ok, &sys).is_ok());
        let too_much = QosSpec::new(vec![capacity + 0.2], 0.0).unwrap();
        assert!(matches!(
            init_feasible(&StrategyConfig::MuLp, &channels, &too_much, &sys),
            Err(SolveError::QosInfeasible)
        ));
    }

    #[test]
    fn init_feasible_multicast_bound() {
        // R_0 above the single-user multicast capacity bound is infeasible.
        let sys = SystemConfig::new(2, 2, 10.0).unwrap();
        let channels = two_user_channels(0.3, std::f64::consts::PI / 9.0, 2);
        let best_norm = channels
            .estimated()
            .iter()
            .map(nalgebra::DVector::norm_squared)
            .fold(0.0f64, f64::max);
        let bound = (1.0 + 10.0 * best_norm).log2();
        let qos = QosSpec::new(vec![0.0, 0.0], bound + 0.5).unwrap();
        assert!(matches!(
            init_feasible(&StrategyConfig::OneLayerRs, &channels, &qos, &sys),
            Err(SolveError::QosInfeasible)
        ));
    }

    #[test]
    fn init_auxiliaries_zero_precoders() {
        let sys = SystemConfig::new(2, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, std::f64::consts::PI / 3.0, 2);
        let layout = stream_layout(&StrategyConfig::OneLayerRs, &sys).unwrap();
        let p = PrecoderSet::zeros(&layout, 2);
        let pm = PowerModel::new(0.5, 1.0, 2.0).unwrap();
        let state = init_auxiliaries(
            &p,
            &channels,
            &layout,
            &WeightVector::uniform(2),
            &QosSpec::none(2),
            &pm,
            &sys,
        );
        assert_relative_eq!(state.z, pm.circuit_power(2), epsilon = 1e-12);
        // all rates zero and thresholds zero: omega collapses to its floor
        assert_relative_eq!(state.omega, OMEGA_FLOOR, epsilon = 1e-15);
    }

    #[test]
    fn init_auxiliaries_single_user_hand_values() {
        let sys = SystemConfig::new(1, 1, 10.0).unwrap();
        let channels = ChannelSet::perfect(vec![cvec(&[(1.0, 0.0)])]).unwrap();
        let layout = stream_layout(&StrategyConfig::MuLp, &sys).unwrap();
        let mut p = PrecoderSet::zeros(&layout, 1);
        p.set(StreamId::unicast(0), cvec(&[(1.0, 0.0)]));
        let pm = PowerModel::new(1.0, 1.0, 0.0).unwrap();
        let state = init_auxiliaries(
            &p,
            &channels,
            &layout,
            &WeightVector::uniform(1),
            &QosSpec::none(1),
            &pm,
            &sys,
        );
        // z = |p|^2 / 1 + P_cir = 1 + 1 = 2; private beta = noise only
        assert_relative_eq!(state.z, 2.0, epsilon = 1e-12);
        assert_relative_eq!(state.beta[&(0, StreamId::unicast(0))], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn init_auxiliaries_symmetric_users() {
        let sys = SystemConfig::new(2, 2, 10.0).unwrap();
        let h = vec![cvec(&[(1.0, 0.0), (0.5, 0.0)]), cvec(&[(1.0, 0.0), (0.5, 0.0)])];
        let channels = ChannelSet::perfect(h).unwrap();
        let layout = stream_layout(&StrategyConfig::MuLp, &sys).unwrap();
        let mut p = PrecoderSet::zeros(&layout, 2);
        p.set(layout.multicast_stream().clone(), cvec(&[(1.0, 0.0), (1.0, 0.0)]));
        let state = init_auxiliaries(
            &p,
            &channels,
            &layout,
            &WeightVector::uniform(2),
            &QosSpec::none(2),
            &PowerModel::transmit_only(),
            &sys,
        );
        let mc = layout.multicast_stream().clone();
        assert_relative_eq!(state.beta[&(0, mc.clone())], state.beta[&(1, mc)], epsilon = 1e-14);
    }

    #[test]
    fn subproblem_variable_inventory_one_layer_rs() {
        // 1-layer RS, K = 2, Nt = 2: 3 complex precoders (12 reals), 3
        // common-rate entries, omega/z/t, and (alpha, theta, beta) per
        // (user, chain stream) = 3 * 4.
        let sys = SystemConfig::new(2, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, std::f64::consts::PI / 3.0, 2);
        let layout = stream_layout(&StrategyConfig::OneLayerRs, &sys).unwrap();
        let p = scenarios::initial_precoders(&layout, StrategyKind::OneLayerRs, &channels, &sys);
        let weights = WeightVector::uniform(2);
        let qos = QosSpec::none(2);
        let pm = paper_power_model();
        let state = init_auxiliaries(&p, &channels, &layout, &weights, &qos, &pm, &sys);
        let sub = assemble_ee_subproblem(&layout, &channels, &weights, &qos, &pm, &sys, &state, false)
            .unwrap();
        assert_eq!(sub.program.model_variable_count(), 6 + 3);
        assert_eq!(sub.program.variable_count(), 12 + 3 + 3 + 12);
    }

    #[test]
    fn subproblem_feasible_at_expansion_point() {
        let sys = SystemConfig::new(4, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, 2.0 * std::f64::consts::PI / 9.0, 4);
        let layout = stream_layout(&StrategyConfig::OneLayerRs, &sys).unwrap();
        let weights = WeightVector::uniform(2);
        let qos = QosSpec::uniform(2, 0.1).unwrap();
        let pm = paper_power_model();
        let p = init_feasible(&StrategyConfig::OneLayerRs, &channels, &qos, &sys).unwrap();
        let state = init_auxiliaries(&p, &channels, &layout, &weights, &qos, &pm, &sys);
        let sub = assemble_ee_subproblem(&layout, &channels, &weights, &qos, &pm, &sys, &state, false)
            .unwrap();
        let sol = sub.program.solve(1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        // The expansion point itself is feasible, so the optimum cannot fall
        // below its epigraph value.
        assert!(sol.objective >= state.t - 1e-7, "{} vs {}", sol.objective, state.t);
    }

    #[test]
    fn multicast_only_weights_drain_private_streams() {
        // Only the multicast message matters: private power is pure waste.
        let sys = SystemConfig::new(2, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, std::f64::consts::PI / 3.0, 2);
        let weights = WeightVector::new(1.0, vec![0.0, 0.0]).unwrap();
        let qos = QosSpec::none(2);
        let pm = paper_power_model();
        let cfg = AlgorithmConfig { convergence_tolerance: 1e-7, max_iterations: 100, ..Default::default() };
        let outcome = sca_solve(
            &StrategyConfig::MuLp,
            &channels,
            &weights,
            &qos,
            &sys,
            &pm,
            &cfg,
            None,
        )
        .unwrap();
        for user in 0..2 {
            let private = outcome
                .precoders
                .get(&StreamId::unicast(user))
                .unwrap()
                .norm_squared();
            assert!(private < 1e-6, "user {user} kept {private}");
        }
        // 1-D power sweep along the final multicast direction cannot beat
        // the solver by more than the tolerance.
        let mc = outcome.precoders.get(
            stream_layout(&StrategyConfig::MuLp, &sys).unwrap().multicast_stream(),
        ).unwrap().clone();
        let direction = &mc / Complex64::new(mc.norm().max(1e-12), 0.0);
        let layout = stream_layout(&StrategyConfig::MuLp, &sys).unwrap();
        let mut best_sweep = 0.0f64;
        for i in 1..=400 {
            let q = sys.power_budget() * i as f64 / 400.0;
            let mut p = PrecoderSet::zeros(&layout, 2);
            p.set(layout.multicast_stream().clone(), &direction * Complex64::new(q.sqrt(), 0.0));
            let caps = rates::stream_rate_caps(channels.estimated(), &sys, &p, &layout);
            let ee = caps[layout.multicast_stream()] / total_power(&p, &pm, &sys);
            best_sweep = best_sweep.max(ee);
        }
        assert!(
            outcome.report.ee >= best_sweep - 1e-3,
            "solver {} vs sweep {}",
            outcome.report.ee,
            best_sweep
        );
    }

    #[test]
    fn sca_trace_monotone_feasible_and_tight() {
        let sys = SystemConfig::new(4, 2, 10.0).unwrap();
        let channels = two_user_channels(1.0, 2.0 * std::f64::consts::PI / 9.0, 4);
        let weights = WeightVector::uniform(2);
        let qos = QosSpec::uniform(2, 0.5).unwrap();
        let pm = paper_power_model();
        let cfg = AlgorithmConfig { convergence_tolerance: 1e-7, max_iterations: 200, ..Default::default() };
        let outcome = sca_solve(
            &StrategyConfig::OneLayerRs,
            &channels,
            &weights,
            &qos,
            &sys,
            &pm,
            &cfg,
            None,
        )
        .unwrap();
        assert!(outcome.converged);
        for pair in outcome.trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8, "trace dipped: {pair:?}");
        }
        let layout = stream_layout(&StrategyConfig::OneLayerRs, &sys).unwrap();
        let feas = rates::validate_allocation(
            &outcome.allocation,
            &outcome.report.stream_caps,
            &qos,
            &layout,
        );
        assert!(feas.feasible(1e-6), "worst slack {}", feas.worst_slack());
        let (ratio, rate, power) = outcome.equality_gaps(&weights);
        assert!(ratio < 1e-6, "ratio gap {ratio}");
        assert!(rate < 1e-6, "rate gap {rate}");
        assert!(power < 1e-6, "power gap {power}");
        // The oracle's EE and the epigraph agree at convergence.
        assert!((outcome.report.ee - outcome.t).abs() < 1e-6);
    }

    #[test]
    fn rs_warm_started_from_mulp_dominates() {
        let sys = SystemConfig::new(4, 2, 10.0).unwrap();
        let channels = two_user_channels(0.3, std::f64::consts::PI / 9.0, 4);
        let weights = WeightVector::uniform(2);
        let qos = QosSpec::uniform(2, 0.1).unwrap();
        let pm = paper_power_model();
        let cfg = AlgorithmConfig { convergence_tolerance: 1e-6, max_iterations: 150, ..Default::default() };
        let mulp = sca_solve(&StrategyConfig::MuLp, &channels, &weights, &qos, &sys, &pm, &cfg, None)
            .unwrap();
        let rs = sca_solve_seeded(
            &StrategyConfig::OneLayerRs,
            &channels,
            &weights,
            &qos,
            &sys,
            &pm,
            &cfg,
            &[(StrategyConfig::MuLp, mulp.precoders.clone())],
        )
        .unwrap();
        assert!(
            rs.report.ee >= mulp.report.ee - 1e-6,
            "RS {} vs MU-LP {}",
            rs.report.ee,
            mulp.report.ee
        );
    }
}
