//! Named experiment presets.

use serde::{Deserialize, Serialize};

use super::config::{AdversarySpec, ConfigFile, GraphSpec, ObjectiveSpec, DEFAULT_GRAD_BOUND, DEFAULT_OPTIMIZE_TOL};
use crate::adversary::AdversaryStrategy;
use crate::filters::WeightPolicy;
use crate::protocol::{Algorithm, StepSize};
use crate::seeding::derive_seed;

// Seed stream labels for per-run configs.
const GRAPH: u64 = 10;
const OBJECTIVES: u64 = 11;
const PLACEMENT: u64 = 12;
const SIMULATION: u64 = 13;

/// What changes between the runs of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVariation {
    /// Graph, objectives and adversary placement fixed; weights and attack randomness vary.
    Simulation,
    /// Every random ingredient varies.
    Everything,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub description: String,
    pub base: ConfigFile,
    pub runs: usize,
    pub variation: RunVariation,
    /// Step sizes `10^-e / (k + 1)` swept per run, picked by validation accuracy.
    pub eta_exponents: Option<Vec<i32>>,
}

pub const PRESET_NAMES: [&str; 3] = ["quadratic", "quadratic-dist-only", "logistic"];

fn quadratic_base(algorithm: Algorithm, f: usize, count: usize) -> ConfigFile {
    ConfigFile {
        graph: GraphSpec::Robust { n: 25, r: 11, seed: 0 },
        objectives: ObjectiveSpec::RandomQuadratic { dim: 2, seed: 0 },
        algorithm,
        f,
        step: StepSize { c1: 1.0, c2: 1.0 },
        grad_bound: DEFAULT_GRAD_BOUND,
        omega: None,
        weight_policy: WeightPolicy::Random,
        horizon: 300,
        seed: 0,
        adversaries: AdversarySpec::Random { count, seed: 0 },
        strategy: AdversaryStrategy::default(),
        optimize_tol: DEFAULT_OPTIMIZE_TOL,
    }
}

pub fn preset(name: &str) -> Option<ExperimentPreset> {
    let p = match name {
        "quadratic" => ExperimentPreset {
            name: name.into(),
            description: "25 agents, 11-robust graph, random 2-d quadratics, min-max filtering, F = 2".into(),
            base: quadratic_base(Algorithm::DistMinMax, 2, 2),
            runs: 10,
            variation: RunVariation::Simulation,
            eta_exponents: None,
        },
        "quadratic-dist-only" => ExperimentPreset {
            name: name.into(),
            description: "as `quadratic` with the distance filter only, F = 5 and 5 adversaries".into(),
            base: quadratic_base(Algorithm::DistOnly, 5, 5),
            runs: 10,
            variation: RunVariation::Simulation,
            eta_exponents: None,
        },
        "logistic" => ExperimentPreset {
            name: name.into(),
            description: "50 agents, 23-robust graph, regularized logistic regression on 5 parameters, F = 2".into(),
            base: ConfigFile {
                graph: GraphSpec::Robust { n: 50, r: 23, seed: 0 },
                objectives: ObjectiveSpec::Logistic {
                    dataset: None,
                    seed: 0,
                    reg: None,
                },
                horizon: 200,
                ..quadratic_base(Algorithm::DistMinMax, 2, 2)
            },
            runs: 5,
            variation: RunVariation::Everything,
            eta_exponents: Some((-2..=4).collect()),
        },
        _ => return None,
    };
    Some(p)
}

impl ExperimentPreset {
    /// Config of run `run` under master seed `master`.
    pub fn config_for_run(&self, master: u64, run: usize) -> ConfigFile {
        let run = run as u64;
        let fixed = |label: u64| match self.variation {
            RunVariation::Simulation => derive_seed(master, &[label]),
            RunVariation::Everything => derive_seed(master, &[label, run]),
        };
        let mut c = self.base.clone();
        match &mut c.graph {
            GraphSpec::Robust { seed, .. } => *seed = fixed(GRAPH),
            GraphSpec::Complete { .. } | GraphSpec::File { .. } | GraphSpec::Edges { .. } => {}
        }
        match &mut c.objectives {
            ObjectiveSpec::RandomQuadratic { seed, .. } | ObjectiveSpec::Logistic { seed, .. } => {
                *seed = fixed(OBJECTIVES)
            }
            ObjectiveSpec::Quadratic { .. } => {}
        }
        if let AdversarySpec::Random { seed, .. } = &mut c.adversaries {
            *seed = fixed(PLACEMENT);
        }
        c.seed = derive_seed(master, &[SIMULATION, run]);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_exist() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn variation_controls_seeds() {
        let q = preset("quadratic").unwrap();
        let (a, b) = (q.config_for_run(1, 0), q.config_for_run(1, 1));
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.objectives, b.objectives);
        assert_ne!(a.seed, b.seed);
        let l = preset("logistic").unwrap();
        assert_ne!(l.config_for_run(1, 0).graph, l.config_for_run(1, 1).graph);
    }
}
