//! Configuration, presets, experiment execution and artifact output.

pub mod config;
pub mod dataset;
pub mod output;
pub mod presets;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    self, check_aux_decay, check_consensus, check_inexact_aux, certify, AnalysisError, ConsensusReport,
    ConvergenceCertificate,
};
use crate::graph::GraphError;
use crate::objectives::{local_optimize, AverageObjective, LogisticObjective, Objective, ObjectiveError};
use crate::protocol::{
    global_minimizer, metrics, regular_objective, run_rounds, MetricsSeries, ProtocolError, SimulationConfig,
    StepSize, Trajectory,
};
use crate::vecops::{max_pairwise_dist, mean};

pub use config::{parse_config, ConfigFile, Scenario};
pub use presets::{preset, ExperimentPreset, PRESET_NAMES};

/// Final consensus diameter allowed, as a fraction of the initial one.
pub const CONSENSUS_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<HarnessError>,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Baseline {
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

/// Minimizer of the average of `objectives`.
pub fn centralized_baseline(objectives: &[Arc<dyn Objective>], tol: f64) -> Result<Baseline> {
    let avg = AverageObjective::new(objectives.to_vec())?;
    let x_star = local_optimize(&avg, tol)?;
    let f_star = avg.value(&x_star);
    Ok(Baseline { x_star, f_star })
}

/// Accuracy of one model on each data split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Accuracy {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticReport {
    pub reg: f64,
    pub reg_scan: Vec<(f64, f64)>,
    /// Selected step-size exponent, when swept.
    pub eta_exponent: Option<i32>,
    /// `(exponent, validation accuracy of the regular mean)`.
    pub eta_scan: Vec<(i32, f64)>,
    pub centralized: Accuracy,
    /// At the final regular mean.
    pub distributed: Accuracy,
    /// Worst regular agent at its own final state.
    pub minimum: Accuracy,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub index: usize,
    pub config: SimulationConfig,
    pub trajectory: Trajectory,
    pub metrics: MetricsSeries,
    pub certificate: std::result::Result<ConvergenceCertificate, String>,
    pub consensus: Option<ConsensusReport>,
    pub aux: Option<analysis::AuxDecayReport>,
    pub inexact_violations: usize,
    pub logistic: Option<LogisticReport>,
    pub warnings: Vec<String>,
}

/// Serializable digest of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub adversaries: Vec<usize>,
    pub rounds: usize,
    pub final_gap_x: f64,
    pub final_gap_y: f64,
    pub final_dist_x: f64,
    pub final_dist_y: f64,
    pub runtime_checks_passed: bool,
    pub runtime_violations: usize,
    pub attack_messages: usize,
    pub promised_survivals: usize,
    pub promised_failures: usize,
    pub consensus_verdict: Option<bool>,
    pub aux_decay_passed: Option<bool>,
    pub inexact_violations: usize,
    pub certificate_error: Option<String>,
    pub s_star_min: Option<f64>,
    pub minimizer_inside: Option<bool>,
    pub final_contained: Option<bool>,
    pub logistic: Option<LogisticReport>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    /// Runtime invariants plus attack retention.
    pub fn hard_checks_passed(&self) -> bool {
        self.trajectory.checks.passed() && self.trajectory.audit.promised_failures.is_empty()
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.metrics.last().cloned().unwrap_or_default();
        let cert = self.certificate.as_ref().ok();
        RunSummary {
            run: self.index,
            seed: self.config.seed,
            adversaries: self.config.adversaries.members().iter().copied().collect(),
            rounds: self.trajectory.rounds(),
            final_gap_x: last.gap_x,
            final_gap_y: last.gap_y,
            final_dist_x: last.dist_x,
            final_dist_y: last.dist_y,
            runtime_checks_passed: self.trajectory.checks.passed(),
            runtime_violations: self.trajectory.checks.violations.len(),
            attack_messages: self.trajectory.audit.messages,
            promised_survivals: self.trajectory.audit.promised,
            promised_failures: self.trajectory.audit.promised_failures.len(),
            consensus_verdict: self.consensus.as_ref().map(|c| c.verdict),
            aux_decay_passed: self.aux.as_ref().map(|a| a.passed()),
            inexact_violations: self.inexact_violations,
            certificate_error: self.certificate.as_ref().err().cloned(),
            s_star_min: cert.map(|c| c.s_star_min),
            minimizer_inside: cert.map(|c| c.minimizer_inside),
            final_contained: cert.map(|c| c.final_contained),
            logistic: self.logistic.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

fn accuracy(w: &[f64], split: &dataset::DataSplit) -> Accuracy {
    let acc = |d: &dataset::Dataset| LogisticObjective::accuracy(w, &d.features, &d.labels);
    Accuracy {
        train: acc(&split.train),
        validation: acc(&split.validation),
        test: acc(&split.test),
    }
}

fn final_regular_mean(traj: &Trajectory) -> Vec<f64> {
    mean(&traj.regular_x(traj.rounds())).expect("regular agents exist")
}

/// Runs a scenario; with `eta_exponents`, runs one simulation per step size
/// `10^-e / (k + 1)` and keeps the one with the best validation accuracy.
pub fn run_scenario(scenario: &Scenario, index: usize, eta_exponents: Option<&[i32]>) -> Result<RunOutcome> {
    let mut config = scenario.config.clone();
    let mut eta_scan = Vec::new();
    let mut eta_exponent = None;
    let trajectory = match (eta_exponents, &scenario.logistic) {
        (Some(exps), Some(setup)) if !exps.is_empty() => {
            let runs = exps
                .par_iter()
                .map(|&e| {
                    let mut c = config.clone();
                    c.step = StepSize {
                        c1: 10f64.powi(-e),
                        c2: 1.0,
                    };
                    let t = run_rounds(&c)?;
                    let w = final_regular_mean(&t);
                    let val = &setup.split.validation;
                    let acc = LogisticObjective::accuracy(&w, &val.features, &val.labels);
                    let loss = LogisticObjective::mean_log_loss(&w, &val.features, &val.labels);
                    Ok((e, acc, loss, c, t))
                })
                .collect::<Result<Vec<_>>>()?;
            eta_scan = runs.iter().map(|r| (r.0, r.1)).collect();
            // Accuracy ties go to the lower validation loss, then to the larger step.
            let best = runs
                .into_iter()
                .reduce(|best, r| if r.1 > best.1 || (r.1 == best.1 && r.2 < best.2) { r } else { best })
                .expect("nonempty sweep");
            eta_exponent = Some(best.0);
            config = best.3;
            best.4
        }
        _ => run_rounds(&config)?,
    };

    let avg = regular_objective(&config)?;
    let metrics = metrics(&trajectory, &avg);
    let certificate = certify(&trajectory, &config, None).map_err(|e| e.to_string());
    let consensus = if trajectory.regular.len() >= 2 {
        let initial = max_pairwise_dist(&trajectory.regular_x(0));
        Some(check_consensus(&trajectory, CONSENSUS_FRACTION * initial)?)
    } else {
        None
    };
    let aux = check_aux_decay(&trajectory, config.omega).ok();
    let inexact_violations = check_inexact_aux(&trajectory, &config).len();

    let logistic = match &scenario.logistic {
        Some(setup) => {
            let regular: Vec<Arc<dyn Objective>> =
                trajectory.regular.iter().map(|&i| config.objectives[i].clone()).collect();
            let baseline = centralized_baseline(&regular, config.optimize_tol)?;
            let k = trajectory.rounds();
            let per_agent: Vec<Accuracy> = trajectory
                .regular
                .iter()
                .map(|&i| accuracy(&trajectory.states[k][i].x, &setup.split))
                .collect();
            let min = |f: fn(&Accuracy) -> f64| per_agent.iter().map(f).fold(f64::INFINITY, f64::min);
            Some(LogisticReport {
                reg: setup.reg,
                reg_scan: setup.reg_scan.clone(),
                eta_exponent,
                eta_scan,
                centralized: accuracy(&baseline.x_star, &setup.split),
                distributed: accuracy(&final_regular_mean(&trajectory), &setup.split),
                minimum: Accuracy {
                    train: min(|a| a.train),
                    validation: min(|a| a.validation),
                    test: min(|a| a.test),
                },
            })
        }
        None => None,
    };

    let mut warnings = scenario.warnings.clone();
    warnings.extend(trajectory.warnings.iter().filter(|w| !warnings.contains(w)).cloned().collect::<Vec<_>>());
    Ok(RunOutcome {
        index,
        config,
        trajectory,
        metrics,
        certificate,
        consensus,
        aux,
        inexact_violations,
        logistic,
        warnings,
    })
}

/// Runs `runs` seeded realizations of a preset in parallel, in run order.
pub fn run_preset(preset: &ExperimentPreset, runs: usize, seed: u64) -> Result<Vec<RunOutcome>> {
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let wrap = |e: HarnessError| HarnessError::Run {
                run: i,
                source: Box::new(e),
            };
            let scenario = preset.config_for_run(seed, i).build(Path::new(".")).map_err(wrap)?;
            run_scenario(&scenario, i, preset.eta_exponents.as_deref()).map_err(wrap)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub preset: String,
    pub runs: usize,
    pub seed: u64,
    pub all_hard_checks_passed: bool,
    /// Runs whose final `f(x_bar) - f*` is below `f(y_bar) - f*`.
    pub gap_x_below_gap_y: usize,
    pub consensus_verdicts: usize,
    pub minimizer_inside: usize,
    pub final_contained: usize,
    pub per_run: Vec<RunSummary>,
}

pub fn summarize(preset: &str, seed: u64, outcomes: &[RunOutcome]) -> ExperimentSummary {
    let per_run: Vec<RunSummary> = outcomes.iter().map(|o| o.summary()).collect();
    ExperimentSummary {
        preset: preset.into(),
        runs: outcomes.len(),
        seed,
        all_hard_checks_passed: outcomes.iter().all(|o| o.hard_checks_passed()),
        gap_x_below_gap_y: per_run.iter().filter(|r| r.final_gap_x < r.final_gap_y).count(),
        consensus_verdicts: per_run.iter().filter(|r| r.consensus_verdict == Some(true)).count(),
        minimizer_inside: per_run.iter().filter(|r| r.minimizer_inside == Some(true)).count(),
        final_contained: per_run.iter().filter(|r| r.final_contained == Some(true)).count(),
        per_run,
    }
}

/// Writes `metrics_run_<i>.csv`, `certificate_run_<i>.json`, `aggregate.csv` and `summary.json`.
pub fn write_experiment(out_dir: &Path, summary: &ExperimentSummary, outcomes: &[RunOutcome]) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    for o in outcomes {
        output::write_metrics_csv(&out_dir.join(format!("metrics_run_{}.csv", o.index)), &o.metrics)?;
        if let Ok(cert) = &o.certificate {
            output::write_json(&out_dir.join(format!("certificate_run_{}.json", o.index)), cert)?;
        }
    }
    let series: Vec<&[crate::protocol::MetricsRow]> = outcomes.iter().map(|o| o.metrics.as_slice()).collect();
    output::write_aggregate_csv(&out_dir.join("aggregate.csv"), &output::aggregate(&series))?;
    output::write_json(&out_dir.join("summary.json"), summary)?;
    Ok(())
}

/// Runs a preset and optionally writes its artifacts.
pub fn run_experiment(
    preset: &ExperimentPreset,
    runs: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(ExperimentSummary, Vec<RunOutcome>)> {
    let outcomes = run_preset(preset, runs, seed)?;
    let summary = summarize(&preset.name, seed, &outcomes);
    if let Some(dir) = out_dir {
        write_experiment(dir, &summary, &outcomes)?;
    }
    Ok((summary, outcomes))
}

/// Certificate report for a stored trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub certificate: ConvergenceCertificate,
    pub proof_constants: Option<analysis::ProofConstants>,
    pub proof_constants_error: Option<String>,
    pub consensus: Option<ConsensusReport>,
    pub aux: Option<analysis::AuxDecayReport>,
    pub inexact_violations: usize,
}

/// Rebuilds a trajectory from stored states and the config that produced them.
pub fn trajectory_from_states(
    config: &SimulationConfig,
    states: Vec<Vec<crate::protocol::AgentState>>,
) -> Result<Trajectory> {
    if states.iter().any(|s| s.len() != config.topology.n()) {
        return Err(HarnessError::Trajectory("agent count differs from the config".into()));
    }
    let local_minimizers = config
        .objectives
        .iter()
        .map(|o| local_optimize(o.as_ref(), config.optimize_tol))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let (x_star, f_star) = global_minimizer(config)?;
    let rounds = states.len().saturating_sub(1);
    Ok(Trajectory {
        regular: config.regular_agents(),
        states,
        z: Vec::new(),
        g: Vec::new(),
        etas: (0..rounds).map(|k| config.step.at(k)).collect(),
        local_minimizers,
        x_star,
        f_star,
        checks: Default::default(),
        audit: Default::default(),
        warnings: Vec::new(),
    })
}

pub fn certify_report(config: &SimulationConfig, traj: &Trajectory) -> Result<CertifyReport> {
    let certificate = certify(traj, config, None)?;
    let xi = 1e-3 * certificate.s_star_min.max(f64::MIN_POSITIVE);
    let (proof_constants, proof_constants_error) =
        match analysis::proof_constants(certificate.best(), xi, config.step, config.grad_bound) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let consensus = if traj.regular.len() >= 2 {
        let initial = max_pairwise_dist(&traj.regular_x(0));
        Some(check_consensus(traj, CONSENSUS_FRACTION * initial)?)
    } else {
        None
    };
    Ok(CertifyReport {
        proof_constants,
        proof_constants_error,
        consensus,
        aux: check_aux_decay(traj, config.omega).ok(),
        inexact_violations: if traj.z.is_empty() { 0 } else { check_inexact_aux(traj, config).len() },
        certificate,
    })
}
