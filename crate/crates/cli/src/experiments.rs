//! Experiment runners reproducing the evaluation protocols at desk scale.
//!
//! Every runner follows the same contract: expand the configured grid,
//! dispatch independent grid points to the worker pool, and emit one CSV row
//! per (grid point, strategy) in a deterministic order (sorted by grid key,
//! never by completion time). Rate-splitting strategies are warm-started
//! from the converged solutions of the strategies they contain, so the
//! reported points inherit the nesting relations.

use std::path::Path;

use rayon::prelude::*;

use noum_core::model::{
    AlgorithmConfig, ChannelSet, PowerModel, QosSpec, StrategyConfig, StrategyKind, SystemConfig,
    WeightVector,
};
use noum_core::scenarios::{self, Csit, ScenarioKind, ScenarioSpec, ScheduleMethod};
use noum_core::sca_ee::{self, EeOutcome};
use noum_core::wmmse::{self, SolveError, WsrOutcome};

use crate::config::{dbm_to_watts, weight_grid_exponents, Experiment, ExperimentConfig};
use crate::output::{fmt_f64, write_outputs, Table};

/// Runner failure surfaced to the process exit code.
#[derive(Debug)]
pub enum RunError {
    Infeasible(String),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Infeasible(msg) => write!(f, "infeasible instance: {msg}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Resolved invocation: config plus command-line overrides.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_hash: u64,
    pub seed: u64,
    pub strategies: Vec<StrategyKind>,
    pub paper_scale: bool,
    pub strict: bool,
}

impl RunContext {
    fn realizations(&self) -> usize {
        if self.paper_scale { 100 } else { self.config.realizations }
    }

    fn scenario_for(&self, seed: u64) -> ScenarioSpec {
        let mut spec = self
            .config
            .scenario_spec(seed)
            .expect("validated at parse time");
        if self.paper_scale {
            if let Csit::Sampled { tau, .. } = spec.csit {
                spec.csit = Csit::Sampled { tau, samples: 1000 };
            }
        }
        spec
    }

    fn algorithm(&self) -> AlgorithmConfig {
        AlgorithmConfig {
            convergence_tolerance: self.config.algorithm.tolerance,
            max_iterations: self.config.algorithm.max_iterations,
            rng_seed: self.seed,
            ..Default::default()
        }
    }
}

fn status_label<T>(result: &Result<T, SolveError>, converged: impl Fn(&T) -> bool) -> &'static str {
    match result {
        Ok(outcome) if converged(outcome) => "converged",
        Ok(_) => "max_iter",
        Err(SolveError::QosInfeasible) => "infeasible",
        Err(_) => "error",
    }
}

/// One strategy's solved point within a suite.
struct SuiteRow {
    kind: StrategyKind,
    label: String,
    result: Result<WsrOutcome, SolveError>,
}

/// Solves the requested strategy kinds for one channel instance, passing
/// converged solutions down the containment chain (MU-LP into 1-layer RS,
/// 1-layer RS and the best SC-SIC order into the generalized RS).
fn wsr_suite(
    kinds: &[StrategyKind],
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
) -> Vec<SuiteRow> {
    let wants = |kind: StrategyKind| kinds.contains(&kind);
    let needs_mulp = wants(StrategyKind::MuLp)
        || wants(StrategyKind::OneLayerRs)
        || wants(StrategyKind::GeneralizedRs);
    let needs_scsic = wants(StrategyKind::ScSic) || wants(StrategyKind::GeneralizedRs);
    let needs_rs1 = wants(StrategyKind::OneLayerRs) || wants(StrategyKind::GeneralizedRs);

    let mulp = needs_mulp.then(|| {
        wmmse::ao_solve_best(StrategyKind::MuLp, channels, weights, qos, sys, pm, cfg, &[])
            .map(|best| best.best().clone())
    });
    let rs1 = needs_rs1.then(|| {
        let seeds = seed_list(&[mulp.as_ref()]);
        wmmse::ao_solve_seeded(
            &StrategyConfig::OneLayerRs,
            channels,
            weights,
            qos,
            sys,
            pm,
            cfg,
            &seeds,
        )
    });
    let scsic = needs_scsic.then(|| {
        wmmse::ao_solve_best(StrategyKind::ScSic, channels, weights, qos, sys, pm, cfg, &[])
            .map(|best| best.best().clone())
    });

    let mut rows = Vec::new();
    for &kind in kinds {
        let result = match kind {
            StrategyKind::MuLp => mulp.clone().expect("computed above"),
            StrategyKind::OneLayerRs => rs1.clone().expect("computed above"),
            StrategyKind::ScSic => scsic.clone().expect("computed above"),
            StrategyKind::GeneralizedRs => {
                let seeds = seed_list(&[rs1.as_ref(), scsic.as_ref()]);
                wmmse::ao_solve_best(
                    StrategyKind::GeneralizedRs,
                    channels,
                    weights,
                    qos,
                    sys,
                    pm,
                    cfg,
                    &seeds,
                )
                .map(|best| best.best().clone())
            }
            StrategyKind::ScSicPerGroup | StrategyKind::Oma => {
                wmmse::ao_solve_best(kind, channels, weights, qos, sys, pm, cfg, &[])
                    .map(|best| best.best().clone())
            }
        };
        let label = result
            .as_ref()
            .map_or_else(|_| kind.to_string(), |o| o.strategy.label());
        rows.push(SuiteRow { kind, label, result });
    }
    rows
}

fn seed_list(
    sources: &[Option<&Result<WsrOutcome, SolveError>>],
) -> Vec<(StrategyConfig, noum_core::model::PrecoderSet)> {
    sources
        .iter()
        .flatten()
        .filter_map(|r| r.as_ref().ok())
        .map(|o| (o.strategy.clone(), o.precoders.clone()))
        .collect()
}

/// EE counterpart of [`wsr_suite`], using the SCA solver.
#[allow(clippy::too_many_arguments)]
fn ee_suite(
    kinds: &[StrategyKind],
    channels: &ChannelSet,
    weights: &WeightVector,
    qos: &QosSpec,
    sys: &SystemConfig,
    pm: &PowerModel,
    cfg: &AlgorithmConfig,
    pin_multicast_rate: bool,
) -> Vec<(StrategyKind, String, Result<EeOutcome, SolveError>)> {
    let ee_best = |kind: StrategyKind,
                   seeds: &[(StrategyConfig, noum_core::model::PrecoderSet)]|
     -> Result<EeOutcome, SolveError> {
        let configs = scenarios::enumerate_orders(kind, sys.num_users())?;
        let mut best: Option<EeOutcome> = None;
        let mut first_error = None;
        for config in configs {
            let run = if pin_multicast_rate {
                sca_ee::sca_solve_with(
                    &config, channels, weights, qos, sys, pm, cfg, None, true,
                )
            } else {
                sca_ee::sca_solve_seeded(&config, channels, weights, qos, sys, pm, cfg, seeds)
            };
            match run {
                Ok(outcome) => {
                    if best.as_ref().is_none_or(|b| outcome.report.ee > b.report.ee + 1e-6) {
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
        best.ok_or_else(|| first_error.unwrap_or(SolveError::QosInfeasible))
    };

    let wants = |kind: StrategyKind| kinds.contains(&kind);
    let needs_mulp = wants(StrategyKind::MuLp)
        || wants(StrategyKind::OneLayerRs)
        || wants(StrategyKind::GeneralizedRs);
    let needs_scsic = wants(StrategyKind::ScSic) || wants(StrategyKind::GeneralizedRs);
    let needs_rs1 = wants(StrategyKind::OneLayerRs) || wants(StrategyKind::GeneralizedRs);

    let mulp = needs_mulp.then(|| ee_best(StrategyKind::MuLp, &[]));
    let rs1 = needs_rs1.then(|| {
        let seeds = ee_seed_list(&[mulp.as_ref()]);
        ee_best(StrategyKind::OneLayerRs, &seeds)
    });
    let scsic = needs_scsic.then(|| ee_best(StrategyKind::ScSic, &[]));

    kinds
        .iter()
        .map(|&kind| {
            let result = match kind {
                StrategyKind::MuLp => mulp.clone().expect("computed above"),
                StrategyKind::OneLayerRs => rs1.clone().expect("computed above"),
                StrategyKind::ScSic => scsic.clone().expect("computed above"),
                StrategyKind::GeneralizedRs => {
                    let seeds = ee_seed_list(&[rs1.as_ref(), scsic.as_ref()]);
                    ee_best(StrategyKind::GeneralizedRs, &seeds)
                }
                StrategyKind::ScSicPerGroup | StrategyKind::Oma => ee_best(kind, &[]),
            };
            let label = result
                .as_ref()
                .map_or_else(|_| kind.to_string(), |o| o.strategy.label());
            (kind, label, result)
        })
        .collect()
}

fn ee_seed_list(
    sources: &[Option<&Result<EeOutcome, SolveError>>],
) -> Vec<(StrategyConfig, noum_core::model::PrecoderSet)> {
    sources
        .iter()
        .flatten()
        .filter_map(|r| r.as_ref().ok())
        .map(|o| (o.strategy.clone(), o.precoders.clone()))
        .collect()
}

fn check_strict(strict: bool, table: &Table, status_col: usize) -> Result<(), RunError> {
    if !strict {
        return Ok(());
    }
    for row in &table.rows {
        if row[status_col] == "infeasible" {
            return Err(RunError::Infeasible(row.join(",")));
        }
    }
    Ok(())
}

/// Dispatches the configured experiment and writes its CSV and sidecar.
pub fn run(ctx: &RunContext, out_dir: &Path) -> Result<(), RunError> {
    let started = std::time::Instant::now();
    let (table, status_col) = match ctx.config.experiment {
        Experiment::RateRegion => (run_rate_region(ctx), 4),
        Experiment::WsrVsSnr => (run_wsr_vs_snr(ctx), 4),
        Experiment::EeVsMulticastThreshold | Experiment::EeVsDynamicPower => {
            (run_ee_sweeps(ctx), 4)
        }
        Experiment::ConvergenceTrace => (run_convergence_trace(ctx), usize::MAX),
        Experiment::SchedulingCompare => (run_scheduling_compare(ctx), 5),
    };
    if status_col != usize::MAX {
        check_strict(ctx.strict, &table, status_col)?;
    }
    let metadata = vec![
        ("experiment".to_string(), ctx.config.experiment.name().to_string()),
        ("toolkit_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("config_hash".to_string(), format!("{:016x}", ctx.config_hash)),
        ("seed".to_string(), ctx.seed.to_string()),
        (
            "scale".to_string(),
            if ctx.paper_scale { "paper".into() } else { "desk".to_string() },
        ),
        (
            "strategies".to_string(),
            ctx.strategies
                .iter()
                .map(StrategyKind::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        ),
        ("rows".to_string(), table.rows.len().to_string()),
        ("wall_time_ms".to_string(), started.elapsed().as_millis().to_string()),
    ];
    write_outputs(out_dir, ctx.config.experiment.name(), &table, &metadata)?;
    Ok(())
}

fn scenario_hash(ctx: &RunContext) -> String {
    format!("{:016x}", ctx.config_hash)
}

/// Rate-region boundary: for each grid weight `u2 = 10^x` solve every
/// strategy and emit the unicast totals; the OMA baseline contributes its two
/// extremity points with the time-sharing flag set.
fn run_rate_region(ctx: &RunContext) -> Table {
    let mut table = Table::new(vec![
        "seed", "config", "strategy", "order", "status", "iterations", "snr_db", "u2_exponent",
        "r1_tot", "r2_tot", "wsr", "time_share",
    ]);
    let snr_db = ctx.config.snr_list()[0];
    let sys = ctx.config.system(snr_db).expect("validated");
    let qos = ctx.config.qos().expect("validated");
    let pm = ctx.config.power_model().expect("validated");
    let cfg = ctx.algorithm();
    let solver_kinds: Vec<StrategyKind> = ctx
        .strategies
        .iter()
        .copied()
        .filter(|k| *k != StrategyKind::Oma)
        .collect();
    let exponents = weight_grid_exponents(ctx.config.grid.weight_step);

    let realized = channel_realizations(ctx, sys.power_budget());

    let grid_rows: Vec<Vec<Vec<String>>> = exponents
        .par_iter()
        .map(|&x| {
            let weights = WeightVector::new(0.0, vec![1.0, 10f64.powf(x)]).expect("valid");
            let mut rows = Vec::new();
            let averaged = average_over_realizations(&realized, |channels| {
                wsr_suite(&solver_kinds, channels, &weights, &qos, &sys, &pm, &cfg)
                    .into_iter()
                    .map(|row| {
                        let metrics = row.result.as_ref().ok().map(|o| {
                            vec![o.report.user_totals[0], o.report.user_totals[1], o.report.wsr]
                        });
                        (row.kind, row.label, status_label(&row.result, |o| o.converged), metrics,
                         row.result.as_ref().map_or(0, |o| o.iterations))
                    })
                    .collect()
            });
            for entry in averaged {
                rows.push(vec![
                    ctx.seed.to_string(),
                    scenario_hash(ctx),
                    entry.kind.to_string(),
                    entry.label,
                    entry.status.to_string(),
                    entry.iterations.to_string(),
                    fmt_f64(snr_db),
                    fmt_f64(x),
                    entry.metrics.first().map_or_else(String::new, |v| fmt_f64(*v)),
                    entry.metrics.get(1).map_or_else(String::new, |v| fmt_f64(*v)),
                    entry.metrics.get(2).map_or_else(String::new, |v| fmt_f64(*v)),
                    "0".to_string(),
                ]);
            }
            rows
        })
        .collect();
    for rows in grid_rows {
        for row in rows {
            table.push(row);
        }
    }

    // OMA extremities: all rate to one user, time sharing in between.
    if ctx.strategies.contains(&StrategyKind::Oma) {
        for target in 0..2usize {
            let mut unicast = vec![0.0, 0.0];
            unicast[target] = 1.0;
            let weights = WeightVector::new(0.0, unicast).expect("valid");
            let averaged = average_over_realizations(&realized, |channels| {
                let config = StrategyConfig::Oma { target_user: target };
                let layout = noum_core::model::stream_layout(&config, &sys).expect("valid");
                let init = scenarios::initial_precoders(&layout, StrategyKind::Oma, channels, &sys);
                let result = wmmse::ao_solve(&config, channels, &weights, &qos, &sys, &pm, &cfg, &init);
                let metrics = result.as_ref().ok().map(|o| {
                    vec![o.report.user_totals[0], o.report.user_totals[1], o.report.wsr]
                });
                vec![(
                    StrategyKind::Oma,
                    config.label(),
                    status_label(&result, |o| o.converged),
                    metrics,
                    result.as_ref().map_or(0, |o| o.iterations),
                )]
            });
            for entry in averaged {
                table.push(vec![
                    ctx.seed.to_string(),
                    scenario_hash(ctx),
                    entry.kind.to_string(),
                    entry.label,
                    entry.status.to_string(),
                    entry.iterations.to_string(),
                    fmt_f64(snr_db),
                    format!("ext{}", target + 1),
                    entry.metrics.first().map_or_else(String::new, |v| fmt_f64(*v)),
                    entry.metrics.get(1).map_or_else(String::new, |v| fmt_f64(*v)),
                    entry.metrics.get(2).map_or_else(String::new, |v| fmt_f64(*v)),
                    "1".to_string(),
                ]);
            }
        }
    }
    table
}

/// One averaged suite entry.
struct Averaged {
    kind: StrategyKind,
    label: String,
    status: &'static str,
    iterations: usize,
    metrics: Vec<f64>,
}

/// The channel sets an experiment runs over: one for specific scenarios,
/// `realizations` seeded draws for random ones.
fn channel_realizations(ctx: &RunContext, power_budget: f64) -> Vec<ChannelSet> {
    let base = ctx.scenario_for(ctx.seed);
    match base.kind {
        ScenarioKind::RandomGaussian { .. } => (0..ctx.realizations() as u64)
            .map(|r| {
                let spec = ctx.scenario_for(ctx.seed.wrapping_add(r));
                scenarios::build_channels(&spec, power_budget).expect("validated")
            })
            .collect(),
        _ => vec![scenarios::build_channels(&base, power_budget).expect("validated")],
    }
}

/// Averages per-strategy metrics across channel realizations. Status is the
/// worst observed; iteration counts take the maximum.
type SolvedRow = (StrategyKind, String, &'static str, Option<Vec<f64>>, usize);

fn average_over_realizations<F>(realized: &[ChannelSet], solve: F) -> Vec<Averaged>
where
    F: Fn(&ChannelSet) -> Vec<SolvedRow> + Sync,
{
    let per_real: Vec<Vec<SolvedRow>> = realized.par_iter().map(solve).collect();
    let n_strategies = per_real[0].len();
    let mut out = Vec::with_capacity(n_strategies);
    for s in 0..n_strategies {
        let kind = per_real[0][s].0;
        let label = per_real[0][s].1.clone();
        let mut status = "converged";
        let mut iterations = 0usize;
        let mut sums: Option<Vec<f64>> = None;
        let mut count = 0usize;
        for row in &per_real {
            let (_, _, st, metrics, iters) = &row[s];
            iterations = iterations.max(*iters);
            match *st {
                "converged" => {}
                "max_iter" if status == "converged" => status = "max_iter",
                "infeasible" | "error" => status = st,
                _ => {}
            }
            if let Some(values) = metrics {
                match &mut sums {
                    None => sums = Some(values.clone()),
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(values) {
                            *a += v;
                        }
                    }
                }
                count += 1;
            }
        }
        let metrics = sums
            .map(|acc| acc.into_iter().map(|v| v / count as f64).collect())
            .unwrap_or_default();
        out.push(Averaged { kind, label, status, iterations, metrics });
    }
    out
}

/// WSR versus SNR with the per-SNR uniform threshold vector applied to all
/// messages; best over decoding orders per strategy.
fn run_wsr_vs_snr(ctx: &RunContext) -> Table {
    let mut table = Table::new(vec![
        "seed", "config", "strategy", "order", "status", "iterations", "snr_db", "threshold",
        "wsr",
    ]);
    let snrs = ctx.config.snr_list();
    let thresholds = ctx.config.per_snr_thresholds();
    let weights = ctx.config.weights().expect("validated");
    let pm = ctx.config.power_model().expect("validated");
    let cfg = ctx.algorithm();
    let kinds = ctx.strategies.clone();

    let all_rows: Vec<Vec<Vec<String>>> = snrs
        .par_iter()
        .zip(thresholds.par_iter())
        .map(|(&snr_db, &threshold)| {
            let sys = ctx.config.system(snr_db).expect("validated");
            let k = sys.num_users();
            let qos = QosSpec::uniform(k, threshold).expect("valid");
            let realized = channel_realizations(ctx, sys.power_budget());
            let averaged = average_over_realizations(&realized, |channels| {
                wsr_suite(&kinds, channels, &weights, &qos, &sys, &pm, &cfg)
                    .into_iter()
                    .map(|row| {
                        let metrics = row.result.as_ref().ok().map(|o| vec![o.report.wsr]);
                        (row.kind, row.label, status_label(&row.result, |o| o.converged), metrics,
                         row.result.as_ref().map_or(0, |o| o.iterations))
                    })
                    .collect()
            });
            averaged
                .into_iter()
                .map(|entry| {
                    vec![
                        ctx.seed.to_string(),
                        scenario_hash(ctx),
                        entry.kind.to_string(),
                        entry.label,
                        entry.status.to_string(),
                        entry.iterations.to_string(),
                        fmt_f64(snr_db),
                        fmt_f64(threshold),
                        entry.metrics.first().map_or_else(String::new, |v| fmt_f64(*v)),
                    ]
                })
                .collect()
        })
        .collect();
    for rows in all_rows {
        for row in rows {
            table.push(row);
        }
    }
    table
}

/// EE sweeps: multicast-threshold sweep (two-user protocol), dynamic-power
/// sweep (three-user protocol), or the individual-EE region (fixed `C_0`,
/// weight grid). Per-user EEs `R_{k,tot} / total power` fill the ee1..ee3
/// columns.
fn run_ee_sweeps(ctx: &RunContext) -> Table {
    let mut table = Table::new(vec![
        "seed", "config", "strategy", "order", "status", "iterations", "snr_db", "r0_threshold",
        "p_dyn_dbm", "u2_exponent", "ee", "ee1", "ee2", "ee3",
    ]);
    let snr_db = ctx.config.snr_list()[0];
    let pm = ctx.config.power_model().expect("validated");
    let cfg = ctx.algorithm();
    let kinds = ctx.strategies.clone();
    let base_qos = ctx.config.qos().expect("validated");
    let weights = ctx.config.weights().expect("validated");
    let sys = ctx.config.system(snr_db).expect("validated");
    let k = sys.num_users();
    let realized = channel_realizations(ctx, sys.power_budget());

    // (r0_threshold, p_dyn_dbm override, u2 exponent override)
    let points: Vec<(f64, Option<f64>, Option<f64>)> = match ctx.config.experiment {
        Experiment::EeVsMulticastThreshold if ctx.config.ee.individual_region => {
            let r0 = base_qos.multicast_threshold();
            weight_grid_exponents(ctx.config.grid.weight_step)
                .into_iter()
                .map(|x| (r0, None, Some(x)))
                .collect()
        }
        Experiment::EeVsMulticastThreshold => ctx
            .config
            .ee
            .multicast_thresholds
            .clone()
            .unwrap_or_else(|| (0..8).map(|i| 0.1 + 0.2 * i as f64).collect())
            .into_iter()
            .map(|r0| (r0, None, None))
            .collect(),
        _ => ctx
            .config
            .ee
            .dynamic_dbm
            .clone()
            .unwrap_or_else(|| vec![20.0, 27.0, 34.0])
            .into_iter()
            .map(|dbm| (base_qos.multicast_threshold(), Some(dbm), None))
            .collect(),
    };

    let all_rows: Vec<Vec<Vec<String>>> = points
        .par_iter()
        .map(|&(r0, p_dyn_dbm, u2_exp)| {
            let qos = QosSpec::new(base_qos.unicast_thresholds().to_vec(), r0).expect("valid");
            let pm_point = match p_dyn_dbm {
                Some(dbm) => PowerModel::new(
                    pm.amplifier_efficiency(),
                    dbm_to_watts(dbm),
                    pm.static_power(),
                )
                .expect("valid"),
                None => pm,
            };
            let weights_point = match u2_exp {
                Some(x) => WeightVector::new(
                    weights.multicast_weight(),
                    vec![1.0, 10f64.powf(x)],
                )
                .expect("valid"),
                None => weights.clone(),
            };
            let pin = ctx.config.ee.individual_region;
            let averaged = average_over_realizations(&realized, |channels| {
                ee_suite(&kinds, channels, &weights_point, &qos, &sys, &pm_point, &cfg, pin)
                    .into_iter()
                    .map(|(kind, label, result)| {
                        let metrics = result.as_ref().ok().map(|o| {
                            let mut values = vec![o.report.ee];
                            for user in 0..3 {
                                values.push(if user < k {
                                    o.report.user_totals[user] / o.report.total_power
                                } else {
                                    f64::NAN
                                });
                            }
                            values
                        });
                        let status = status_label(&result, |o| o.converged);
                        (kind, label, status, metrics, result.as_ref().map_or(0, |o| o.iterations))
                    })
                    .collect()
            });
            averaged
                .into_iter()
                .map(|entry| {
                    let metric = |i: usize| {
                        entry
                            .metrics
                            .get(i)
                            .filter(|v| v.is_finite())
                            .map_or_else(String::new, |v| fmt_f64(*v))
                    };
                    vec![
                        ctx.seed.to_string(),
                        scenario_hash(ctx),
                        entry.kind.to_string(),
                        entry.label,
                        entry.status.to_string(),
                        entry.iterations.to_string(),
                        fmt_f64(snr_db),
                        fmt_f64(r0),
                        p_dyn_dbm.map_or_else(String::new, fmt_f64),
                        u2_exp.map_or_else(String::new, fmt_f64),
                        metric(0),
                        metric(1),
                        metric(2),
                        metric(3),
                    ]
                })
                .collect()
        })
        .collect();
    for rows in all_rows {
        for row in rows {
            table.push(row);
        }
    }
    table
}

/// Per-iteration objective traces for every enumerated order of every
/// requested strategy.
fn run_convergence_trace(ctx: &RunContext) -> Table {
    let mut table = Table::new(vec![
        "seed", "config", "strategy", "order", "objective", "iteration", "value",
    ]);
    let snr_db = ctx.config.snr_list()[0];
    let sys = ctx.config.system(snr_db).expect("validated");
    let qos = ctx.config.qos().expect("validated");
    let weights = ctx.config.weights().expect("validated");
    let pm = ctx.config.power_model().expect("validated");
    let cfg = ctx.algorithm();
    let channels = channel_realizations(ctx, sys.power_budget()).remove(0);
    let objective = ctx.config.trace.objective.clone();

    let mut jobs: Vec<StrategyConfig> = Vec::new();
    for &kind in &ctx.strategies {
        jobs.extend(scenarios::enumerate_orders(kind, sys.num_users()).expect("guarded"));
    }

    let traces: Vec<(String, String, Vec<f64>)> = jobs
        .par_iter()
        .map(|config| {
            let trace = if objective == "ee" {
                sca_ee::sca_solve(config, &channels, &weights, &qos, &sys, &pm, &cfg, None)
                    .map(|o| o.trace)
            } else {
                let layout = noum_core::model::stream_layout(config, &sys).expect("valid");
                let init =
                    scenarios::initial_precoders(&layout, config.kind(), &channels, &sys);
                wmmse::ao_solve(config, &channels, &weights, &qos, &sys, &pm, &cfg, &init)
                    .map(|o| o.trace)
            };
            (config.kind().to_string(), config.label(), trace.unwrap_or_default())
        })
        .collect();
    for (kind, label, trace) in traces {
        for (iteration, value) in trace.iter().enumerate() {
            table.push(vec![
                ctx.seed.to_string(),
                scenario_hash(ctx),
                kind.clone(),
                label.clone(),
                objective.clone(),
                (iteration + 1).to_string(),
                fmt_f64(*value),
            ]);
        }
    }
    table
}

/// User-scheduling comparison: select K active users from a candidate pool by
/// each configured method, then compare strategies under sampled CSIT across
/// a grid of error exponents.
fn run_scheduling_compare(ctx: &RunContext) -> Table {
    let mut table = Table::new(vec![
        "seed", "config", "method", "strategy", "order", "status", "iterations", "tau", "wsr",
    ]);
    let snr_db = ctx.config.snr_list()[0];
    let sys = ctx.config.system(snr_db).expect("validated");
    let k = sys.num_users();
    let qos = ctx.config.qos().expect("validated");
    let weights = ctx.config.weights().expect("validated");
    let pm = ctx.config.power_model().expect("validated");
    let cfg = ctx.algorithm();
    let taus = ctx.config.scheduling.taus.clone().unwrap_or_else(|| vec![0.0, 0.3, 0.6, 0.9]);
    let methods: Vec<(String, ScheduleMethod)> = ctx
        .config
        .scheduling
        .methods
        .clone()
        .unwrap_or_else(|| vec!["correlation".into(), "best_strength".into(), "none".into()])
        .into_iter()
        .map(|name| {
            let method = match name.as_str() {
                "correlation" => ScheduleMethod::Correlation,
                "best_strength" => ScheduleMethod::BestStrength,
                _ => ScheduleMethod::None,
            };
            (name, method)
        })
        .collect();
    let samples = match ctx.config.scenario.csit.as_ref().and_then(|c| c.samples) {
        Some(m) if !ctx.paper_scale => m,
        _ if ctx.paper_scale => 1000,
        _ => 100,
    };
    let pool_spec = ScenarioSpec {
        kind: ScenarioKind::RandomGaussian {
            variances: vec![1.0; ctx.config.scheduling.pool],
        },
        num_tx_antennas: sys.num_tx_antennas(),
        seed: ctx.seed,
        csit: Csit::Perfect,
    };
    let pool = scenarios::random_channels(&pool_spec).expect("validated");

    let grid: Vec<(usize, usize)> = (0..taus.len())
        .flat_map(|t| (0..methods.len()).map(move |m| (t, m)))
        .collect();
    let all_rows: Vec<Vec<Vec<String>>> = grid
        .par_iter()
        .map(|&(ti, mi)| {
            let tau = taus[ti];
            let (method_name, method) = &methods[mi];
            let picked = scenarios::schedule_users(&pool, k, *method, ctx.seed).expect("pool");
            let estimates: Vec<_> = picked.iter().map(|&u| pool.estimated()[u].clone()).collect();
            let channels = scenarios::csit_samples(
                &estimates,
                tau,
                sys.power_budget(),
                &vec![1.0; k],
                samples,
                ctx.seed,
            )
            .expect("valid");
            wsr_suite(&ctx.strategies, &channels, &weights, &qos, &sys, &pm, &cfg)
                .into_iter()
                .map(|row| {
                    vec![
                        ctx.seed.to_string(),
                        scenario_hash(ctx),
                        method_name.clone(),
                        row.kind.to_string(),
                        row.label.clone(),
                        status_label(&row.result, |o| o.converged).to_string(),
                        row.result.as_ref().map_or(0, |o| o.iterations).to_string(),
                        fmt_f64(tau),
                        row.result
                            .as_ref()
                            .ok()
                            .map_or_else(String::new, |o| fmt_f64(o.report.wsr)),
                    ]
                })
                .collect()
        })
        .collect();
    for rows in all_rows {
        for row in rows {
            table.push(row);
        }
    }
    table
}
