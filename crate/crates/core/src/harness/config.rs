//! Run configuration files (TOML, or JSON by extension) and scenario building.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DataSplit, Dataset, SYNTHETIC_COUNT, TRAIN_COUNT, VALIDATION_COUNT};
use super::{centralized_baseline, HarnessError, Result};
use crate::adversary::AdversaryStrategy;
use crate::filters::WeightPolicy;
use crate::graph::{generate_robust_graph, select_f_local_adversaries, AdversarySet, Topology};
use crate::objectives::{LogisticObjective, Objective, QuadraticObjective};
use crate::protocol::{Algorithm, SimulationConfig, StepSize};

pub const DEFAULT_GRAD_BOUND: f64 = 1e5;
pub const DEFAULT_OPTIMIZE_TOL: f64 = 1e-8;
/// Candidate regularization strengths `10^-4 .. 10^5`.
pub const REG_GRID_EXPONENTS: std::ops::RangeInclusive<i32> = -4..=5;

fn default_grad_bound() -> f64 {
    DEFAULT_GRAD_BOUND
}

fn default_optimize_tol() -> f64 {
    DEFAULT_OPTIMIZE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Complete graph on `2r - 1` nodes grown to `n` nodes.
    Robust {
        n: usize,
        r: usize,
        #[serde(default)]
        seed: u64,
    },
    Complete { n: usize },
    /// Edge-list file, relative to the config file.
    File { path: PathBuf },
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTerm {
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `Q = M^T M + 0.1 I`, `M` and `b` standard normal, one draw per agent.
    RandomQuadratic {
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// One term per agent.
    Quadratic { terms: Vec<QuadraticTerm> },
    /// Regularized logistic regression on an equal share of the training rows per agent.
    Logistic {
        /// Headerless CSV; synthetic clusters when absent.
        #[serde(default)]
        dataset: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
        /// Chosen by validation accuracy of the centralized model when absent.
        #[serde(default)]
        reg: Option<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarySpec {
    #[default]
    None,
    /// Uniform `F`-local placement by rejection sampling.
    Random {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Fixed { members: Vec<usize> },
}

/// Everything that determines one run, seeds included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub graph: GraphSpec,
    pub objectives: ObjectiveSpec,
    pub algorithm: Algorithm,
    pub f: usize,
    #[serde(default)]
    pub step: StepSize,
    #[serde(default = "default_grad_bound")]
    pub grad_bound: f64,
    /// Defaults to `1 / (2 (max in-degree + 1))`.
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub weight_policy: WeightPolicy,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adversaries: AdversarySpec,
    #[serde(default)]
    pub strategy: AdversaryStrategy,
    #[serde(default = "default_optimize_tol")]
    pub optimize_tol: f64,
}

/// Data kept alongside a logistic scenario for accuracy reporting.
#[derive(Debug, Clone)]
pub struct LogisticSetup {
    pub split: DataSplit,
    pub reg: f64,
    /// `(reg, validation accuracy)` of the centralized model, when selected.
    pub reg_scan: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SimulationConfig,
    pub warnings: Vec<String>,
    pub logistic: Option<LogisticSetup>,
}

pub fn default_omega(topology: &Topology) -> f64 {
    0.5 / (topology.max_in_degree() + 1) as f64
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    fn topology(&self, base_dir: &Path) -> Result<Topology> {
        Ok(match &self.graph {
            GraphSpec::Robust { n, r, seed } => generate_robust_graph(*n, *r, *seed)?,
            GraphSpec::Complete { n } => Topology::complete(*n)?,
            GraphSpec::File { path } => Topology::read(&base_dir.join(path))?,
            GraphSpec::Edges { n, edges } => Topology::from_edges(*n, edges.iter().copied())?,
        })
    }

    fn adversary_set(&self, topology: &Topology) -> Result<AdversarySet> {
        Ok(match &self.adversaries {
            AdversarySpec::None => AdversarySet::none(self.f),
            AdversarySpec::Random { count, seed } => select_f_local_adversaries(topology, self.f, *count, *seed)?,
            AdversarySpec::Fixed { members } => AdversarySet::new(topology, members.iter().copied(), self.f)?,
        })
    }

    /// Builds and validates the simulation; `base_dir` resolves relative paths.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario> {
        let topology = self.topology(base_dir)?;
        let n = topology.n();
        let adversaries = self.adversary_set(&topology)?;
        let regular_count = n - adversaries.len();
        let mut logistic = None;
        let objectives: Vec<Arc<dyn Objective>> = match &self.objectives {
            ObjectiveSpec::RandomQuadratic { dim, seed } => {
                if *dim == 0 {
                    return Err(HarnessError::Config("objectives.dim must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n)
                    .map(|_| Arc::new(QuadraticObjective::random(*dim, &mut rng)) as Arc<dyn Objective>)
                    .collect()
            }
            ObjectiveSpec::Quadratic { terms } => {
                if terms.len() != n {
                    return Err(HarnessError::Config(format!(
                        "objectives.terms has {} entries for {n} agents",
                        terms.len()
                    )));
                }
                terms
                    .iter()
                    .map(|t| Ok(Arc::new(QuadraticObjective::from_rows(&t.q, t.b.clone())?) as Arc<dyn Objective>))
                    .collect::<Result<_>>()?
            }
            ObjectiveSpec::Logistic { dataset, seed, reg } => {
                let data = match dataset {
                    Some(p) => Dataset::load_csv(&base_dir.join(p))?,
                    None => Dataset::synthetic(SYNTHETIC_COUNT, *seed),
                };
                let train = TRAIN_COUNT.min(data.len() * 1000 / SYNTHETIC_COUNT);
                let validation = VALIDATION_COUNT.min(data.len() * 186 / SYNTHETIC_COUNT);
                let split = data.split(train, validation, seed.wrapping_add(1))?;
                let parts = split.train.partition(n);
                let scale = regular_count as f64;
                let build = |reg: f64| -> Result<Vec<Arc<dyn Objective>>> {
                    parts
                        .iter()
                        .map(|p| {
                            Ok(Arc::new(LogisticObjective::new(&p.features, &p.labels, reg, scale)?)
                                as Arc<dyn Objective>)
                        })
                        .collect()
                };
                let (reg, reg_scan) = match reg {
                    Some(r) => (*r, Vec::new()),
                    None => {
                        let regular = adversaries.regular_agents(&topology);
                        select_regularization(&split, |reg| {
                            let all = build(reg)?;
                            Ok(regular.iter().map(|&i| all[i].clone()).collect())
                        }, self.optimize_tol)?
                    }
                };
                let objs = build(reg)?;
                logistic = Some(LogisticSetup { split, reg, reg_scan });
                objs
            }
        };
        let omega = self.omega.unwrap_or_else(|| default_omega(&topology));
        let config = SimulationConfig {
            topology,
            algorithm: self.algorithm,
            f: self.f,
            step: self.step,
            grad_bound: self.grad_bound,
            omega,
            weight_policy: self.weight_policy,
            horizon: self.horizon,
            seed: self.seed,
            objectives,
            adversaries,
            strategy: self.strategy.clone(),
            optimize_tol: self.optimize_tol,
            initial_states: None,
        };
        let warnings = config.validate()?;
        Ok(Scenario {
            config,
            warnings,
            logistic,
        })
    }
}

/// Loads, builds and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let file = ConfigFile::load(path)?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}

/// Best validation accuracy of the centralized model over the regularization grid.
/// Ties go to the lower validation log-loss, then to the stronger regularization.
fn select_regularization(
    split: &DataSplit,
    regular_objectives: impl Fn(f64) -> Result<Vec<Arc<dyn Objective>>>,
    tol: f64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let val = &split.validation;
    let mut scan = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for e in REG_GRID_EXPONENTS {
        let reg = 10f64.powi(e);
        let baseline = centralized_baseline(&regular_objectives(reg)?, tol)?;
        let acc = LogisticObjective::accuracy(&baseline.x_star, &val.features, &val.labels);
        let loss = LogisticObjective::mean_log_loss(&baseline.x_star, &val.features, &val.labels);
        scan.push((reg, acc));
        if best.is_none_or(|(_, a, l)| acc > a || (acc == a && loss <= l)) {
            best = Some((reg, acc, loss));
        }
    }
    Ok((best.expect("nonempty grid").0, scan))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
algorithm = "dist_min_max"
f = 1
horizon = 5
seed = 3

[graph]
kind = "robust"
n = 9
r = 4
seed = 1

[objectives]
kind = "random_quadratic"
dim = 1
seed = 2

[adversaries]
kind = "random"
count = 1

[strategy]
kind = "safe_region"
"#;

    #[test]
    fn toml_sample_builds() {
        let file: ConfigFile = toml::from_str(SAMPLE).unwrap();
        assert_eq!(file.step, StepSize { c1: 1.0, c2: 1.0 });
        assert_eq!(file.grad_bound, DEFAULT_GRAD_BOUND);
        let s = file.build(Path::new(".")).unwrap();
        assert_eq!(s.config.topology.n(), 9);
        assert_eq!(s.config.adversaries.len(), 1);
        assert_eq!(s.config.omega, 0.5 / 9.0);
        let back: ConfigFile = toml::from_str(&file.to_toml().unwrap()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = SAMPLE.replace("horizon = 5", "horizon = 5\nbogus = 1");
        assert!(toml::from_str::<ConfigFile>(&bad).is_err());
        let mut file: ConfigFile = toml::from_str(SAMPLE).unwrap();
        file.step.c2 = 0.0;
        assert!(file.build(Path::new(".")).is_err());
    }
}
