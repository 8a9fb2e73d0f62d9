//! Python bindings exposing the main types and operations of the toolkit:
//! channel generation, the weighted-sum-rate and energy-efficiency solvers,
//! rate reports and the enumeration helpers.
//!
//! Build with `cargo build -p noum-py`, rename the produced
//! `libnoum_py.so` to `noum_py.so` (or `.pyd` on Windows) on the Python
//! path, and `import noum_py`. See `python/smoke_test.py` for a worked
//! example.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use noum_core::model::{
    stream_layout, AlgorithmConfig, ChannelSet, PowerModel, QosSpec, StrategyConfig, StrategyKind,
    SystemConfig, WeightVector,
};
use noum_core::scenarios::{self, Csit, ScenarioKind, ScenarioSpec};
use noum_core::sca_ee;
use noum_core::wmmse;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(name: &str) -> PyResult<StrategyKind> {
    match name {
        "mu_lp" => Ok(StrategyKind::MuLp),
        "rs_1layer" => Ok(StrategyKind::OneLayerRs),
        "rs_generalized" => Ok(StrategyKind::GeneralizedRs),
        "sc_sic" => Ok(StrategyKind::ScSic),
        "sc_sic_group" => Ok(StrategyKind::ScSicPerGroup),
        "oma" => Ok(StrategyKind::Oma),
        other => Err(value_err(format!("unknown strategy kind: {other}"))),
    }
}

/// System dimensions and power budget (SNR in dB; unit noise).
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct System {
    inner: SystemConfig,
}

#[pymethods]
impl System {
    #[new]
    fn new(nt: usize, users: usize, snr_db: f64) -> PyResult<Self> {
        let inner =
            SystemConfig::new(nt, users, 10f64.powf(snr_db / 10.0)).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn power_budget(&self) -> f64 {
        self.inner.power_budget()
    }

    #[getter]
    fn nt(&self) -> usize {
        self.inner.num_tx_antennas()
    }

    #[getter]
    fn users(&self) -> usize {
        self.inner.num_users()
    }
}

/// A channel set (estimate plus optional CSIT samples).
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Channels {
    inner: ChannelSet,
}

#[pymethods]
impl Channels {
    #[getter]
    fn users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn nt(&self) -> usize {
        self.inner.num_tx_antennas()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.sample_count()
    }

    /// Channel estimate as nested `[user][antenna] -> (re, im)` lists.
    fn estimate(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner
            .estimated()
            .iter()
            .map(|h| h.iter().map(|z| (z.re, z.im)).collect())
            .collect()
    }
}

/// Outcome of a solver run.
#[pyclass(frozen)]
struct Solution {
    #[pyo3(get)]
    strategy: String,
    #[pyo3(get)]
    wsr: f64,
    #[pyo3(get)]
    ee: f64,
    #[pyo3(get)]
    total_power: f64,
    #[pyo3(get)]
    user_rates: Vec<f64>,
    #[pyo3(get)]
    multicast_rate: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    trace: Vec<f64>,
}

/// Deterministic two-user channels `h1 = [1,..]`, `h2 = gamma e^{j k theta}`.
#[pyfunction]
fn specific_two_user(gamma: f64, theta: f64, nt: usize) -> PyResult<Channels> {
    let spec = ScenarioSpec {
        kind: ScenarioKind::SpecificTwoUser { gamma, theta },
        num_tx_antennas: nt,
        seed: 0,
        csit: Csit::Perfect,
    };
    Ok(Channels { inner: scenarios::specific_channels(&spec).map_err(value_err)? })
}

/// Deterministic three-user channels with a 10 dB strength gap by default.
#[pyfunction]
#[pyo3(signature = (theta1, nt, gamma1 = 1.0, gamma2 = 0.3, theta2 = None))]
fn specific_three_user(
    theta1: f64,
    nt: usize,
    gamma1: f64,
    gamma2: f64,
    theta2: Option<f64>,
) -> PyResult<Channels> {
    let spec = ScenarioSpec {
        kind: ScenarioKind::SpecificThreeUser {
            gamma1,
            theta1,
            gamma2,
            theta2: theta2.unwrap_or(2.0 * theta1),
        },
        num_tx_antennas: nt,
        seed: 0,
        csit: Csit::Perfect,
    };
    Ok(Channels { inner: scenarios::specific_channels(&spec).map_err(value_err)? })
}

/// Seeded i.i.d. complex Gaussian channels, one variance per user.
#[pyfunction]
fn random_channels(variances: Vec<f64>, nt: usize, seed: u64) -> PyResult<Channels> {
    let spec = ScenarioSpec {
        kind: ScenarioKind::RandomGaussian { variances },
        num_tx_antennas: nt,
        seed,
        csit: Csit::Perfect,
    };
    Ok(Channels { inner: scenarios::random_channels(&spec).map_err(value_err)? })
}

/// Draws `samples` true-channel realizations around the estimate with error
/// covariance `Pt^-tau` per user.
#[pyfunction]
fn with_csit_samples(
    channels: &Channels,
    tau: f64,
    power_budget: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Channels> {
    let scales = vec![1.0; channels.inner.num_users()];
    let inner = scenarios::csit_samples(
        channels.inner.estimated(),
        tau,
        power_budget,
        &scales,
        samples,
        seed,
    )
    .map_err(value_err)?;
    Ok(Channels { inner })
}

fn build_inputs(
    sys: &System,
    weights: Option<Vec<f64>>,
    multicast_weight: f64,
    qos_unicast: Option<Vec<f64>>,
    qos_multicast: f64,
) -> PyResult<(WeightVector, QosSpec)> {
    let k = sys.inner.num_users();
    let weights = WeightVector::new(multicast_weight, weights.unwrap_or_else(|| vec![1.0; k]))
        .map_err(value_err)?;
    let qos = QosSpec::new(qos_unicast.unwrap_or_else(|| vec![0.0; k]), qos_multicast)
        .map_err(value_err)?;
    Ok((weights, qos))
}

/// Weighted-sum-rate maximization of one strategy kind (best over decoding
/// orders, with the containment warm-start chain).
#[pyfunction]
#[pyo3(signature = (kind, channels, sys, weights = None, multicast_weight = 1.0,
    qos_unicast = None, qos_multicast = 0.0, tolerance = 1e-4, max_iterations = 200))]
#[allow(clippy::too_many_arguments)]
fn solve_wsr(
    kind: &str,
    channels: &Channels,
    sys: &System,
    weights: Option<Vec<f64>>,
    multicast_weight: f64,
    qos_unicast: Option<Vec<f64>>,
    qos_multicast: f64,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<Solution> {
    let kind = parse_kind(kind)?;
    let (weights, qos) = build_inputs(sys, weights, multicast_weight, qos_unicast, qos_multicast)?;
    let cfg = AlgorithmConfig::new(tolerance, max_iterations).map_err(value_err)?;
    let pm = PowerModel::transmit_only();
    let solve_kind = |kind: StrategyKind,
                      seeds: &[(StrategyConfig, noum_core::model::PrecoderSet)]| {
        wmmse::ao_solve_best(kind, &channels.inner, &weights, &qos, &sys.inner, &pm, &cfg, seeds)
            .map(|best| best.best().clone())
    };
    let outcome = match kind {
        StrategyKind::OneLayerRs => {
            let mulp = solve_kind(StrategyKind::MuLp, &[]).map_err(value_err)?;
            solve_kind(kind, &[(mulp.strategy, mulp.precoders)])
        }
        StrategyKind::GeneralizedRs => {
            let mulp = solve_kind(StrategyKind::MuLp, &[]).map_err(value_err)?;
            let rs1 = solve_kind(StrategyKind::OneLayerRs, &[(mulp.strategy, mulp.precoders)])
                .map_err(value_err)?;
            let scsic = solve_kind(StrategyKind::ScSic, &[]).map_err(value_err)?;
            solve_kind(
                kind,
                &[(rs1.strategy, rs1.precoders), (scsic.strategy, scsic.precoders)],
            )
        }
        _ => solve_kind(kind, &[]),
    }
    .map_err(value_err)?;
    Ok(Solution {
        strategy: outcome.strategy.label(),
        wsr: outcome.report.wsr,
        ee: outcome.report.ee,
        total_power: outcome.report.total_power,
        user_rates: outcome.report.user_totals.clone(),
        multicast_rate: outcome.report.allocation.multicast_portion(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        trace: outcome.trace.clone(),
    })
}

/// Energy-efficiency maximization of one strategy kind. Powers in dBm.
#[pyfunction]
#[pyo3(signature = (kind, channels, sys, amplifier_efficiency = 0.35, dynamic_dbm = 27.0,
    static_dbm = 30.0, weights = None, multicast_weight = 1.0, qos_unicast = None,
    qos_multicast = 0.0, tolerance = 1e-5, max_iterations = 100))]
#[allow(clippy::too_many_arguments)]
fn solve_ee(
    kind: &str,
    channels: &Channels,
    sys: &System,
    amplifier_efficiency: f64,
    dynamic_dbm: f64,
    static_dbm: f64,
    weights: Option<Vec<f64>>,
    multicast_weight: f64,
    qos_unicast: Option<Vec<f64>>,
    qos_multicast: f64,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<Solution> {
    let kind = parse_kind(kind)?;
    let (weights, qos) = build_inputs(sys, weights, multicast_weight, qos_unicast, qos_multicast)?;
    let cfg = AlgorithmConfig::new(tolerance, max_iterations).map_err(value_err)?;
    let dbm = |x: f64| 10f64.powf(x / 10.0) / 1000.0;
    let pm = PowerModel::new(amplifier_efficiency, dbm(dynamic_dbm), dbm(static_dbm))
        .map_err(value_err)?;
    let best_of = |kind: StrategyKind,
                   seeds: &[(StrategyConfig, noum_core::model::PrecoderSet)]|
     -> Result<sca_ee::EeOutcome, wmmse::SolveError> {
        let configs = scenarios::enumerate_orders(kind, sys.inner.num_users())?;
        let mut best: Option<sca_ee::EeOutcome> = None;
        for config in configs {
            if let Ok(outcome) = sca_ee::sca_solve_seeded(
                &config,
                &channels.inner,
                &weights,
                &qos,
                &sys.inner,
                &pm,
                &cfg,
                seeds,
            ) {
                if best.as_ref().is_none_or(|b| outcome.report.ee > b.report.ee + 1e-6) {
                    best = Some(outcome);
                }
            }
        }
        best.ok_or(wmmse::SolveError::QosInfeasible)
    };
    let outcome = match kind {
        StrategyKind::OneLayerRs => {
            let mulp = best_of(StrategyKind::MuLp, &[]).map_err(value_err)?;
            best_of(kind, &[(mulp.strategy, mulp.precoders)])
        }
        StrategyKind::GeneralizedRs => {
            let mulp = best_of(StrategyKind::MuLp, &[]).map_err(value_err)?;
            let rs1 = best_of(StrategyKind::OneLayerRs, &[(mulp.strategy, mulp.precoders)])
                .map_err(value_err)?;
            best_of(kind, &[(rs1.strategy, rs1.precoders)])
        }
        _ => best_of(kind, &[]),
    }
    .map_err(value_err)?;
    Ok(Solution {
        strategy: outcome.strategy.label(),
        wsr: outcome.report.wsr,
        ee: outcome.report.ee,
        total_power: outcome.report.total_power,
        user_rates: outcome.report.user_totals.clone(),
        multicast_rate: outcome.report.allocation.multicast_portion(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        trace: outcome.trace.clone(),
    })
}

/// Labels of every decoding order / grouping of a strategy kind (K <= 4).
#[pyfunction]
fn enumerate_orders(kind: &str, users: usize) -> PyResult<Vec<String>> {
    let kind = parse_kind(kind)?;
    Ok(scenarios::enumerate_orders(kind, users)
        .map_err(value_err)?
        .iter()
        .map(StrategyConfig::label)
        .collect())
}

/// Model-variable count of the per-strategy WSR subproblem (complexity
/// accounting).
#[pyfunction]
fn socp_variable_count(kind: &str, users: usize, nt: usize) -> PyResult<usize> {
    Ok(wmmse::socp_model_variable_count(parse_kind(kind)?, users, nt))
}

/// Stream count of a strategy's layout.
#[pyfunction]
fn stream_count(kind: &str, users: usize, nt: usize) -> PyResult<usize> {
    let sys = SystemConfig::new(nt, users, 1.0).map_err(value_err)?;
    let config = match parse_kind(kind)? {
        StrategyKind::MuLp => StrategyConfig::MuLp,
        StrategyKind::OneLayerRs => StrategyConfig::OneLayerRs,
        StrategyKind::GeneralizedRs => StrategyConfig::generalized_rs_default(users),
        StrategyKind::ScSic => StrategyConfig::ScSic { order: (0..users).collect() },
        StrategyKind::ScSicPerGroup => StrategyConfig::ScSicPerGroup {
            groups: (0..users).map(|u| vec![u]).collect(),
        },
        StrategyKind::Oma => StrategyConfig::Oma { target_user: 0 },
    };
    Ok(stream_layout(&config, &sys).map_err(value_err)?.streams().len())
}

#[pymodule]
fn noum_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_class::<Channels>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(specific_two_user, m)?)?;
    m.add_function(wrap_pyfunction!(specific_three_user, m)?)?;
    m.add_function(wrap_pyfunction!(random_channels, m)?)?;
    m.add_function(wrap_pyfunction!(with_csit_samples, m)?)?;
    m.add_function(wrap_pyfunction!(solve_wsr, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ee, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_orders, m)?)?;
    m.add_function(wrap_pyfunction!(socp_variable_count, m)?)?;
    m.add_function(wrap_pyfunction!(stream_count, m)?)?;
    Ok(())
}
