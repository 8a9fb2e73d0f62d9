//! Experiment configuration: a single TOML file with nested sections.
//!
//! Unknown keys are rejected (fail fast). The full schema with defaults is
//! documented in `docs/config.md`; every field of the structs below maps to
//! one key. Powers are given in dBm and SNRs in dB at this boundary only —
//! the library works in watts throughout.

use serde::Deserialize;

use noum_core::model::{PowerModel, QosSpec, StrategyKind, SystemConfig, WeightVector};
use noum_core::scenarios::{Csit, ScenarioKind, ScenarioSpec};

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub strategies: Option<Vec<String>>,
    #[serde(default)]
    pub snr_db: Option<Vec<f64>>,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub qos: QosSection,
    #[serde(default)]
    pub weights: Option<WeightSection>,
    #[serde(default)]
    pub power: Option<PowerSection>,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub ee: EeSection,
    #[serde(default)]
    pub trace: TraceSection,
    #[serde(default)]
    pub scheduling: SchedulingSection,
    /// Random-channel realizations to average over (desk scale).
    #[serde(default = "default_realizations")]
    pub realizations: usize,
}

fn default_seed() -> u64 {
    1
}

fn default_realizations() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    RateRegion,
    WsrVsSnr,
    EeVsMulticastThreshold,
    EeVsDynamicPower,
    ConvergenceTrace,
    SchedulingCompare,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::RateRegion => "rate_region",
            Experiment::WsrVsSnr => "wsr_vs_snr",
            Experiment::EeVsMulticastThreshold => "ee_vs_multicast_threshold",
            Experiment::EeVsDynamicPower => "ee_vs_dynamic_power",
            Experiment::ConvergenceTrace => "convergence_trace",
            Experiment::SchedulingCompare => "scheduling_compare",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: String,
    pub nt: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub gamma1: Option<f64>,
    #[serde(default)]
    pub theta1: Option<f64>,
    #[serde(default)]
    pub gamma2: Option<f64>,
    #[serde(default)]
    pub theta2: Option<f64>,
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
    #[serde(default)]
    pub csit: Option<CsitSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsitSection {
    pub kind: String,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosSection {
    #[serde(default)]
    pub unicast: Option<Vec<f64>>,
    #[serde(default)]
    pub multicast: Option<f64>,
    /// One threshold per SNR point, applied to every message (WSR-vs-SNR
    /// protocol).
    #[serde(default)]
    pub per_snr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    #[serde(default)]
    pub multicast: Option<f64>,
    pub unicast: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub amplifier_efficiency: f64,
    pub dynamic_dbm: f64,
    pub static_dbm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    200
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Exponent step of the weight grid `u2 = 10^x`,
    /// `x in {-3} U {-1 : step : 1} U {3}`.
    #[serde(default = "default_weight_step")]
    pub weight_step: f64,
}

fn default_weight_step() -> f64 {
    0.05
}

impl Default for GridSection {
    fn default() -> Self {
        Self { weight_step: default_weight_step() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeSection {
    /// Multicast-threshold sweep (two-user protocol).
    #[serde(default)]
    pub multicast_thresholds: Option<Vec<f64>>,
    /// Dynamic-power sweep in dBm (three-user protocol).
    #[serde(default)]
    pub dynamic_dbm: Option<Vec<f64>>,
    /// Fix `C_0` at the multicast threshold and sweep weights, emitting
    /// per-user EE points.
    #[serde(default)]
    pub individual_region: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    #[serde(default = "default_objective")]
    pub objective: String,
}

fn default_objective() -> String {
    "wsr".into()
}

impl Default for TraceSection {
    fn default() -> Self {
        Self { objective: default_objective() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulingSection {
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default)]
    pub taus: Option<Vec<f64>>,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
}

fn default_pool() -> usize {
    20
}

impl Default for SchedulingSection {
    fn default() -> Self {
        Self { pool: default_pool(), taus: None, methods: None }
    }
}

/// A parse or semantic error in the configuration; the CLI exits with code 2.
#[derive(Debug)]
pub struct ConfigFileError(pub String);

impl std::fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigFileError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigFileError> {
    Err(ConfigFileError(msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigFileError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigFileError> {
        self.scenario_spec(self.seed)?;
        self.strategy_kinds()?;
        if let Some(snr) = &self.snr_db {
            if snr.is_empty() {
                return bad("snr_db must not be empty");
            }
        }
        if let Some(per_snr) = &self.qos.per_snr {
            let n = self.snr_list().len();
            if per_snr.len() != n {
                return bad(format!(
                    "qos.per_snr has {} entries but there are {n} SNR points",
                    per_snr.len()
                ));
            }
        }
        if self.experiment == Experiment::RateRegion && self.num_users() != 2 {
            return bad("rate_region requires a two-user scenario");
        }
        if self.algorithm.tolerance <= 0.0 || self.algorithm.max_iterations == 0 {
            return bad("algorithm tolerance and max_iterations must be positive");
        }
        if self.grid.weight_step <= 0.0 {
            return bad("grid.weight_step must be positive");
        }
        match self.trace.objective.as_str() {
            "wsr" | "ee" => {}
            other => return bad(format!("trace.objective must be wsr or ee, got {other}")),
        }
        if self.realizations == 0 {
            return bad("realizations must be positive");
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        match self.scenario.kind.as_str() {
            "specific_two_user" => 2,
            "specific_three_user" => 3,
            _ => self.scenario.variances.as_ref().map_or(0, Vec::len),
        }
    }

    /// SNR points in dB (experiment defaults apply when omitted).
    pub fn snr_list(&self) -> Vec<f64> {
        match &self.snr_db {
            Some(list) => list.clone(),
            None => match self.experiment {
                Experiment::WsrVsSnr => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                Experiment::RateRegion => vec![20.0],
                _ => vec![10.0],
            },
        }
    }

    /// Per-SNR uniform thresholds for the WSR-vs-SNR protocol.
    pub fn per_snr_thresholds(&self) -> Vec<f64> {
        match &self.qos.per_snr {
            Some(t) => t.clone(),
            None => {
                let defaults = [0.005, 0.01, 0.05, 0.15, 0.3, 0.4, 0.4];
                self.snr_list()
                    .iter()
                    .enumerate()
                    .map(|(i, _)| defaults[i.min(defaults.len() - 1)])
                    .collect()
            }
        }
    }

    pub fn scenario_spec(&self, seed: u64) -> Result<ScenarioSpec, ConfigFileError> {
        let csit = match &self.scenario.csit {
            None => Csit::Perfect,
            Some(section) => match section.kind.as_str() {
                "perfect" => Csit::Perfect,
                "sampled" => Csit::Sampled {
                    tau: section
                        .tau
                        .ok_or_else(|| ConfigFileError("sampled csit needs tau".into()))?,
                    samples: section
                        .samples
                        .ok_or_else(|| ConfigFileError("sampled csit needs samples".into()))?,
                },
                other => return bad(format!("unknown csit kind {other}")),
            },
        };
        let kind = match self.scenario.kind.as_str() {
            "specific_two_user" => ScenarioKind::SpecificTwoUser {
                gamma: self
                    .scenario
                    .gamma
                    .ok_or_else(|| ConfigFileError("specific_two_user needs gamma".into()))?,
                theta: self
                    .scenario
                    .theta
                    .ok_or_else(|| ConfigFileError("specific_two_user needs theta".into()))?,
            },
            "specific_three_user" => {
                let theta1 = self
                    .scenario
                    .theta1
                    .ok_or_else(|| ConfigFileError("specific_three_user needs theta1".into()))?;
                ScenarioKind::SpecificThreeUser {
                    gamma1: self.scenario.gamma1.unwrap_or(1.0),
                    theta1,
                    gamma2: self.scenario.gamma2.unwrap_or(0.3),
                    theta2: self.scenario.theta2.unwrap_or(2.0 * theta1),
                }
            }
            "random_gaussian" => ScenarioKind::RandomGaussian {
                variances: self
                    .scenario
                    .variances
                    .clone()
                    .ok_or_else(|| ConfigFileError("random_gaussian needs variances".into()))?,
            },
            other => return bad(format!("unknown scenario kind {other}")),
        };
        let spec = ScenarioSpec {
            kind,
            num_tx_antennas: self.scenario.nt,
            seed,
            csit,
        };
        spec.validate()
            .map_err(|e| ConfigFileError(e.to_string()))?;
        Ok(spec)
    }

    pub fn strategy_kinds(&self) -> Result<Vec<StrategyKind>, ConfigFileError> {
        let names = self.strategies.clone().unwrap_or_else(|| {
            vec!["mu_lp".into(), "rs_1layer".into(), "sc_sic".into()]
        });
        names
            .iter()
            .map(|name| match name.as_str() {
                "mu_lp" => Ok(StrategyKind::MuLp),
                "rs_1layer" => Ok(StrategyKind::OneLayerRs),
                "rs_generalized" => Ok(StrategyKind::GeneralizedRs),
                "sc_sic" => Ok(StrategyKind::ScSic),
                "sc_sic_group" => Ok(StrategyKind::ScSicPerGroup),
                "oma" => Ok(StrategyKind::Oma),
                other => bad(format!("unknown strategy {other}")),
            })
            .collect()
    }

    pub fn system(&self, snr_db: f64) -> Result<SystemConfig, ConfigFileError> {
        SystemConfig::new(self.scenario.nt, self.num_users(), db_to_linear(snr_db))
            .map_err(|e| ConfigFileError(e.to_string()))
    }

    pub fn qos(&self) -> Result<QosSpec, ConfigFileError> {
        let k = self.num_users();
        let unicast = self.qos.unicast.clone().unwrap_or_else(|| vec![0.0; k]);
        if unicast.len() != k {
            return bad(format!("qos.unicast needs {k} entries"));
        }
        QosSpec::new(unicast, self.qos.multicast.unwrap_or(0.0))
            .map_err(|e| ConfigFileError(e.to_string()))
    }

    pub fn weights(&self) -> Result<WeightVector, ConfigFileError> {
        let k = self.num_users();
        match &self.weights {
            None => Ok(WeightVector::uniform(k)),
            Some(section) => {
                if section.unicast.len() != k {
                    return bad(format!("weights.unicast needs {k} entries"));
                }
                WeightVector::new(section.multicast.unwrap_or(1.0), section.unicast.clone())
                    .map_err(|e| ConfigFileError(e.to_string()))
            }
        }
    }

    pub fn power_model(&self) -> Result<PowerModel, ConfigFileError> {
        match &self.power {
            None => Ok(PowerModel::transmit_only()),
            Some(section) => PowerModel::new(
                section.amplifier_efficiency,
                dbm_to_watts(section.dynamic_dbm),
                dbm_to_watts(section.static_dbm),
            )
            .map_err(|e| ConfigFileError(e.to_string())),
        }
    }
}

/// Exponents of the two-user weight grid `u2 = 10^x`:
/// `{-3} U {-1, -1+step, ..., 1} U {3}` (43 points at the default step).
pub fn weight_grid_exponents(step: f64) -> Vec<f64> {
    let mut exponents = vec![-3.0];
    let n = (2.0 / step).round() as i64;
    for i in 0..=n {
        exponents.push(-1.0 + i as f64 * step);
    }
    exponents.push(3.0);
    exponents
}
