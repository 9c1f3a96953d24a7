//! Synchronous round engine for the distance / min-max filtering dynamics.
//!
//! Each round reads a snapshot of round `k`, lets the adversary fill Byzantine
//! messages against the regular ones, steps every regular agent from the
//! snapshot, and commits round `k + 1`. Byzantine agents keep their initial
//! state; only their messages matter.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{self, AdversaryContext, AdversaryError, AdversaryStrategy};
use crate::filters::{
    self, distance_filter, minmax_filter_x, minmax_filter_y, weighted_average_x, weighted_average_y, FilterError,
    LabeledScalar, LabeledVector, WeightAssignment, WeightPolicy,
};
use crate::graph::{AdversarySet, Topology};
use crate::objectives::{clip_gradient, local_optimize, AverageObjective, Objective, ObjectiveError};
use crate::seeding;
use crate::vecops::{add_scaled, all_finite, dist, max_pairwise_dist, mean, norm};
use crate::AgentId;

/// Absolute slack on runtime inequality checks.
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("agent {agent}: {source}")]
    Objective {
        agent: AgentId,
        #[source]
        source: ObjectiveError,
    },
    #[error("round {round}, agent {agent}: message from {sender} has dimension {got}, expected {expected}")]
    Dimension {
        round: usize,
        agent: AgentId,
        sender: AgentId,
        expected: usize,
        got: usize,
    },
    #[error("round {round}, agent {agent}: {source}")]
    Filter {
        round: usize,
        agent: AgentId,
        #[source]
        source: FilterError,
    },
    #[error("round {round}: {source}")]
    Adversary {
        round: usize,
        #[source]
        source: AdversaryError,
    },
    #[error("round {round}, agent {agent}: non-finite state")]
    NonFinite { round: usize, agent: AgentId },
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Distance filter followed by the whole-vector min-max filter.
    DistMinMax,
    /// Distance filter only.
    DistOnly,
}

impl Algorithm {
    /// Robustness the convergence guarantees ask of the graph.
    pub fn required_robustness(self, d: usize, f: usize) -> usize {
        match self {
            Algorithm::DistMinMax => (2 * d + 1) * f + 1,
            Algorithm::DistOnly => 2 * f + 1,
        }
    }
}

/// `eta[k] = c1 / (k + c2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSize {
    pub c1: f64,
    pub c2: f64,
}

impl StepSize {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        let s = Self { c1, c2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite() && self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(ProtocolError::Config(format!(
                "step size needs c1 > 0 and c2 > 0, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        step_size(k, self.c1, self.c2)
    }
}

impl Default for StepSize {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0 }
    }
}

pub fn step_size(k: usize, c1: f64, c2: f64) -> f64 {
    c1 / (k as f64 + c2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AgentState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    /// `x = y = p`.
    pub fn at(p: Vec<f64>) -> Self {
        Self { x: p.clone(), y: p }
    }
}

/// Messages of one round keyed by `(sender, receiver)`.
///
/// Regular senders put the same pair on every out-edge; Byzantine senders may
/// use a different pair per receiver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundMessages {
    map: BTreeMap<(AgentId, AgentId), AgentState>,
}

impl RoundMessages {
    pub fn new() -> Self {
        Self::default()
    }

    /// Regular senders broadcast their snapshot state on every out-edge.
    pub fn from_regular(topology: &Topology, states: &[AgentState], adversaries: &AdversarySet) -> Self {
        let mut m = Self::new();
        for i in (0..topology.n()).filter(|&i| !adversaries.contains(i)) {
            for &j in topology.out_neighbors(i) {
                m.insert(i, j, states[i].clone());
            }
        }
        m
    }

    pub fn insert(&mut self, sender: AgentId, receiver: AgentId, msg: AgentState) {
        self.map.insert((sender, receiver), msg);
    }

    pub fn get(&self, sender: AgentId, receiver: AgentId) -> Option<&AgentState> {
        self.map.get(&(sender, receiver))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(AgentId, AgentId), &AgentState)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Receiver's `x` and `y` inboxes: its own state first, then in-neighbors ascending.
    /// In-neighbors without a message are skipped.
    pub fn inbox(
        &self,
        topology: &Topology,
        receiver: AgentId,
        own: &AgentState,
    ) -> (Vec<LabeledVector>, Vec<LabeledVector>) {
        let mut xs = vec![LabeledVector::new(receiver, own.x.clone())];
        let mut ys = vec![LabeledVector::new(receiver, own.y.clone())];
        for &j in topology.in_neighbors(receiver) {
            if let Some(m) = self.get(j, receiver) {
                xs.push(LabeledVector::new(j, m.x.clone()));
                ys.push(LabeledVector::new(j, m.y.clone()));
            }
        }
        (xs, ys)
    }
}

/// Source of the averaging weights a regular agent applies in a round.
pub trait WeightProvider: Sync {
    fn x_weights(&self, agent: AgentId, round: usize, owners: Vec<AgentId>) -> filters::Result<WeightAssignment>;

    fn y_weights(
        &self,
        agent: AgentId,
        round: usize,
        coord: usize,
        owners: Vec<AgentId>,
    ) -> filters::Result<WeightAssignment>;
}

/// Draws weights from a [`WeightPolicy`] with a seed-derived stream per
/// `(round, agent, slot)`.
#[derive(Debug, Clone, Copy)]
pub struct PolicyWeights {
    pub policy: WeightPolicy,
    pub omega: f64,
    pub seed: u64,
}

impl PolicyWeights {
    fn draw(&self, agent: AgentId, round: usize, slot: u64, owners: Vec<AgentId>) -> filters::Result<WeightAssignment> {
        let mut rng = seeding::stream(self.seed, &[seeding::WEIGHTS, round as u64, agent as u64, slot]);
        filters::make_weights(self.policy, owners, self.omega, &mut rng)
    }
}

impl WeightProvider for PolicyWeights {
    fn x_weights(&self, agent: AgentId, round: usize, owners: Vec<AgentId>) -> filters::Result<WeightAssignment> {
        self.draw(agent, round, 0, owners)
    }

    fn y_weights(
        &self,
        agent: AgentId,
        round: usize,
        coord: usize,
        owners: Vec<AgentId>,
    ) -> filters::Result<WeightAssignment> {
        self.draw(agent, round, 1 + coord as u64, owners)
    }
}

/// Per-round parameters shared by all regular agents.
#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub algorithm: Algorithm,
    pub f: usize,
    pub eta: f64,
    pub grad_bound: f64,
}

/// Result of one agent's round, with the intermediate sets kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    pub z: Vec<f64>,
    /// Clipped subgradient at `z`.
    pub g: Vec<f64>,
    pub x_dist: Vec<LabeledVector>,
    /// Vectors averaged into `z`: the min-max survivors, or `x_dist` without that filter.
    pub x_kept: Vec<LabeledVector>,
    pub y_kept: Vec<Vec<LabeledScalar>>,
}

/// One regular-agent round. Both inboxes must contain the agent's own entry.
pub fn step_regular_agent(
    params: &StepParams,
    agent: AgentId,
    round: usize,
    objective: &dyn Objective,
    x_inbox: &[LabeledVector],
    y_inbox: &[LabeledVector],
    weights: &dyn WeightProvider,
) -> Result<StepOutcome> {
    let d = objective.dim();
    for e in x_inbox.iter().chain(y_inbox) {
        if e.value.len() != d {
            return Err(ProtocolError::Dimension {
                round,
                agent,
                sender: e.owner,
                expected: d,
                got: e.value.len(),
            });
        }
    }
    let ferr = |source| ProtocolError::Filter { round, agent, source };
    let y_own = &y_inbox
        .iter()
        .find(|e| e.owner == agent)
        .ok_or(ferr(FilterError::MissingOwn(agent)))?
        .value;

    let x_dist = distance_filter(params.f, agent, y_own, x_inbox).map_err(ferr)?;
    let x_kept = match params.algorithm {
        Algorithm::DistMinMax => minmax_filter_x(params.f, agent, &x_dist).map_err(ferr)?,
        Algorithm::DistOnly => x_dist.clone(),
    };
    let wx = weights
        .x_weights(agent, round, x_kept.iter().map(|e| e.owner).collect())
        .map_err(ferr)?;
    let z = weighted_average_x(&x_kept, &wx).map_err(ferr)?;
    let g = clip_gradient(&objective.subgradient(&z), params.grad_bound);
    let x = add_scaled(&z, -params.eta, &g);

    let y_kept = minmax_filter_y(params.f, agent, y_inbox).map_err(ferr)?;
    let wy = y_kept
        .iter()
        .enumerate()
        .map(|(l, coord)| weights.y_weights(agent, round, l, coord.iter().map(|s| s.owner).collect()))
        .collect::<filters::Result<Vec<_>>>()
        .map_err(ferr)?;
    let y = weighted_average_y(&y_kept, &wy).map_err(ferr)?;

    if !all_finite(&x) || !all_finite(&y) {
        return Err(ProtocolError::NonFinite { round, agent });
    }
    Ok(StepOutcome {
        state: AgentState { x, y },
        z,
        g,
        x_dist,
        x_kept,
        y_kept,
    })
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub topology: Topology,
    pub algorithm: Algorithm,
    /// Filter parameter `F`.
    pub f: usize,
    pub step: StepSize,
    /// Gradient clipping bound `L`.
    pub grad_bound: f64,
    /// Lower bound on every nonzero weight.
    pub omega: f64,
    pub weight_policy: WeightPolicy,
    /// Number of rounds `K`.
    pub horizon: usize,
    pub seed: u64,
    /// One oracle per agent; Byzantine agents' oracles only seed their initial state.
    pub objectives: Vec<Arc<dyn Objective>>,
    pub adversaries: AdversarySet,
    pub strategy: AdversaryStrategy,
    /// Accuracy of the local minimizers used as initial states.
    pub optimize_tol: f64,
    /// Overrides the local-minimizer initialization when set.
    pub initial_states: Option<Vec<AgentState>>,
}

impl SimulationConfig {
    pub fn dim(&self) -> usize {
        self.objectives.first().map(|o| o.dim()).unwrap_or(0)
    }

    pub fn regular_agents(&self) -> Vec<AgentId> {
        self.adversaries.regular_agents(&self.topology)
    }

    /// Hard validation; returns soft warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.topology.n();
        let cfg = |m: String| Err(ProtocolError::Config(m));
        self.step.validate()?;
        if !(self.grad_bound > 0.0) {
            return cfg(format!("gradient bound must be positive, got {}", self.grad_bound));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return cfg(format!("omega must lie in (0, 1), got {}", self.omega));
        }
        if self.objectives.len() != n {
            return cfg(format!("expected {n} objectives, got {}", self.objectives.len()));
        }
        let d = self.dim();
        if d == 0 || self.objectives.iter().any(|o| o.dim() != d) {
            return cfg("objectives must share a positive dimension".into());
        }
        if self.adversaries.members().iter().any(|&a| a >= n) {
            return cfg("adversary id out of range".into());
        }
        if !crate::graph::is_f_local(&self.topology, &self.adversaries.members().iter().copied().collect::<Vec<_>>(), self.f) {
            return cfg(format!("adversary set is not {}-local", self.f));
        }
        if self.regular_agents().is_empty() {
            return cfg("no regular agents".into());
        }
        if let Some(init) = &self.initial_states {
            if init.len() != n || init.iter().any(|s| s.x.len() != d || s.y.len() != d) {
                return cfg("initial states must cover every agent with dimension d".into());
            }
        }
        self.strategy
            .validate(d)
            .map_err(|e| ProtocolError::Config(e.to_string()))?;

        let mut warnings = Vec::new();
        let need = self.algorithm.required_robustness(d, self.f);
        if n <= crate::graph::EXHAUSTIVE_ROBUSTNESS_CAP {
            if !self.topology.is_r_robust(need).unwrap_or(false) {
                warnings.push(format!("graph is not {need}-robust; convergence guarantees do not apply"));
            }
        } else {
            warnings.push(format!(
                "cannot verify {need}-robustness exhaustively for n = {n}; relying on the construction"
            ));
        }
        let widest = self.topology.max_in_degree() + 1;
        if self.omega * widest as f64 > 1.0 {
            warnings.push(format!(
                "omega = {} exceeds 1/{widest}; rounds where all {widest} entries survive will fail",
                self.omega
            ));
        }
        Ok(warnings)
    }
}

/// A runtime inequality that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub round: usize,
    pub agent: Option<AgentId>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Hard checks evaluated every round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeChecks {
    pub radius_checked: usize,
    pub hull_checked: usize,
    pub consistency_checked: usize,
    pub violations: Vec<Violation>,
}

impl RuntimeChecks {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Whether Byzantine messages survived their targets' filters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackAudit {
    /// Byzantine messages delivered to regular agents.
    pub messages: usize,
    pub x_retained: usize,
    /// Retained `y` coordinates out of `messages * d`.
    pub y_coords_retained: usize,
    pub y_coords: usize,
    /// Messages the strategy promised would survive but did not.
    pub promised_failures: Vec<(usize, AgentId, AgentId)>,
    pub promised: usize,
}

/// Full record of a run; `states[k]` holds all agents after `k` rounds.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub regular: Vec<AgentId>,
    pub states: Vec<Vec<AgentState>>,
    /// `z[k][r]` for the `r`-th regular agent in round `k`.
    pub z: Vec<Vec<Vec<f64>>>,
    pub g: Vec<Vec<Vec<f64>>>,
    pub etas: Vec<f64>,
    /// Approximate local minimizers of every agent.
    pub local_minimizers: Vec<Vec<f64>>,
    /// Minimizer of the regular average objective.
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub checks: RuntimeChecks,
    pub audit: AttackAudit,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn rounds(&self) -> usize {
        self.etas.len()
    }

    pub fn regular_x(&self, k: usize) -> Vec<Vec<f64>> {
        self.regular.iter().map(|&i| self.states[k][i].x.clone()).collect()
    }

    pub fn regular_y(&self, k: usize) -> Vec<Vec<f64>> {
        self.regular.iter().map(|&i| self.states[k][i].y.clone()).collect()
    }
}

/// Average objective of the regular agents.
pub fn regular_objective(config: &SimulationConfig) -> Result<AverageObjective> {
    let parts = config
        .regular_agents()
        .into_iter()
        .map(|i| config.objectives[i].clone())
        .collect();
    AverageObjective::new(parts).map_err(|source| ProtocolError::Objective { agent: 0, source })
}

/// Minimizer and optimal value of the regular average objective.
pub fn global_minimizer(config: &SimulationConfig) -> Result<(Vec<f64>, f64)> {
    let avg = regular_objective(config)?;
    let x = local_optimize(&avg, config.optimize_tol.min(1e-10))
        .map_err(|source| ProtocolError::Objective { agent: 0, source })?;
    let f = avg.value(&x);
    Ok((x, f))
}

fn y_bounds(states: &[AgentState], regular: &[AgentId], d: usize) -> Vec<(f64, f64)> {
    (0..d)
        .map(|l| {
            regular.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(states[i].y[l]), hi.max(states[i].y[l]))
            })
        })
        .collect()
}

/// Runs `config.horizon` rounds with weights from the configured policy.
pub fn run_rounds(config: &SimulationConfig) -> Result<Trajectory> {
    let weights = PolicyWeights {
        policy: config.weight_policy,
        omega: config.omega,
        seed: config.seed,
    };
    run_rounds_with(config, &weights)
}

pub fn run_rounds_with(config: &SimulationConfig, weights: &dyn WeightProvider) -> Result<Trajectory> {
    let warnings = config.validate()?;
    for w in &warnings {
        log::debug!("{w}");
    }
    let topo = &config.topology;
    let n = topo.n();
    let d = config.dim();
    let regular = config.regular_agents();

    let local_minimizers = (0..n)
        .map(|i| {
            local_optimize(config.objectives[i].as_ref(), config.optimize_tol)
                .map_err(|source| ProtocolError::Objective { agent: i, source })
        })
        .collect::<Result<Vec<_>>>()?;
    let (x_star, f_star) = global_minimizer(config)?;
    let mut states: Vec<AgentState> = match &config.initial_states {
        Some(init) => init.clone(),
        None => local_minimizers.iter().cloned().map(AgentState::at).collect(),
    };

    let mut traj = Trajectory {
        regular: regular.clone(),
        states: vec![states.clone()],
        z: Vec::with_capacity(config.horizon),
        g: Vec::with_capacity(config.horizon),
        etas: Vec::with_capacity(config.horizon),
        local_minimizers,
        x_star,
        f_star,
        checks: RuntimeChecks::default(),
        audit: AttackAudit::default(),
        warnings,
    };

    for k in 0..config.horizon {
        let eta = config.step.at(k);
        let params = StepParams {
            algorithm: config.algorithm,
            f: config.f,
            eta,
            grad_bound: config.grad_bound,
        };
        let mut messages = RoundMessages::from_regular(topo, &states, &config.adversaries);
        let mut promised = std::collections::BTreeSet::new();
        if !config.adversaries.is_empty() {
            let ctx = AdversaryContext {
                round: k,
                states: &states,
                topology: topo,
                f: config.f,
                algorithm: config.algorithm,
                adversaries: &config.adversaries,
                x_star: &traj.x_star,
                seed: config.seed,
            };
            let crafted = adversary::craft_messages(&config.strategy, &ctx, &messages)
                .map_err(|source| ProtocolError::Adversary { round: k, source })?;
            for c in &crafted {
                messages.insert(c.sender, c.receiver, c.message.clone());
            }
            traj.audit.messages += crafted.len();
            promised.extend(crafted.iter().filter(|c| c.promised_survival).map(|c| (c.sender, c.receiver)));
        }

        check_consistency(&mut traj.checks, k, topo, &states, &messages, &config.adversaries);

        let mut next = states.clone();
        let mut zs = Vec::with_capacity(regular.len());
        let mut gs = Vec::with_capacity(regular.len());
        for &i in &regular {
            let (xs, ys) = messages.inbox(topo, i, &states[i]);
            let out = step_regular_agent(&params, i, k, config.objectives[i].as_ref(), &xs, &ys, weights)?;

            let reach = topo
                .in_neighbors(i)
                .iter()
                .copied()
                .filter(|&j| !config.adversaries.contains(j))
                .chain(std::iter::once(i))
                .map(|j| dist(&states[j].x, &states[i].y))
                .fold(0.0f64, f64::max);
            let lhs = dist(&out.z, &states[i].y);
            traj.checks.radius_checked += 1;
            if lhs > reach + CHECK_TOL {
                traj.checks.violations.push(Violation {
                    check: "z_within_regular_radius".into(),
                    round: k,
                    agent: Some(i),
                    lhs,
                    rhs: reach,
                });
            }
            audit_retention(&mut traj.audit, k, i, &out, &xs, &config.adversaries, &promised, d);

            next[i] = out.state;
            zs.push(out.z);
            gs.push(out.g);
        }

        let before = y_bounds(&states, &regular, d);
        let after = y_bounds(&next, &regular, d);
        traj.checks.hull_checked += 1;
        for (l, ((lo0, hi0), (lo1, hi1))) in before.iter().zip(&after).enumerate() {
            let slack = CHECK_TOL * (1.0 + lo0.abs().max(hi0.abs()));
            if *lo1 < lo0 - slack || *hi1 > hi0 + slack {
                traj.checks.violations.push(Violation {
                    check: format!("y_hull_contraction[{l}]"),
                    round: k,
                    agent: None,
                    lhs: (lo1 - lo0).min(hi0 - hi1),
                    rhs: -slack,
                });
            }
        }

        states = next;
        traj.states.push(states.clone());
        traj.z.push(zs);
        traj.g.push(gs);
        traj.etas.push(eta);
    }
    Ok(traj)
}

fn check_consistency(
    checks: &mut RuntimeChecks,
    round: usize,
    topo: &Topology,
    states: &[AgentState],
    messages: &RoundMessages,
    adversaries: &AdversarySet,
) {
    for i in (0..topo.n()).filter(|&i| !adversaries.contains(i)) {
        checks.consistency_checked += 1;
        let consistent = topo
            .out_neighbors(i)
            .iter()
            .all(|&j| messages.get(i, j) == Some(&states[i]));
        if !consistent {
            checks.violations.push(Violation {
                check: "regular_sender_consistency".into(),
                round,
                agent: Some(i),
                lhs: 1.0,
                rhs: 0.0,
            });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn audit_retention(
    audit: &mut AttackAudit,
    round: usize,
    agent: AgentId,
    out: &StepOutcome,
    x_inbox: &[LabeledVector],
    adversaries: &AdversarySet,
    promised: &std::collections::BTreeSet<(AgentId, AgentId)>,
    d: usize,
) {
    for e in x_inbox.iter().filter(|e| adversaries.contains(e.owner)) {
        let x_ok = out.x_kept.iter().any(|k| k.owner == e.owner);
        let y_ok = out
            .y_kept
            .iter()
            .filter(|coord| coord.iter().any(|s| s.owner == e.owner))
            .count();
        if x_ok {
            audit.x_retained += 1;
        }
        audit.y_coords_retained += y_ok;
        audit.y_coords += d;
        if promised.contains(&(e.owner, agent)) {
            audit.promised += 1;
        }
        if promised.contains(&(e.owner, agent)) && (!x_ok || y_ok < d) {
            audit.promised_failures.push((round, e.owner, agent));
        }
    }
}

/// Per-round diagnostics of a finished run; row `k - 1` describes the states after round `k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    /// `f(x_bar) - f*` for the regular mean `x_bar`.
    pub gap_x: f64,
    pub gap_y: f64,
    pub dist_x: f64,
    pub dist_y: f64,
    /// Max pairwise distance between regular `x`.
    pub x_diameter: f64,
    /// Norm of the per-coordinate range of regular `y`.
    pub y_diameter: f64,
    /// `max_i |x_i - y_inf|` with `y_inf` the final regular `y` mean.
    pub containment: f64,
}

pub type MetricsSeries = Vec<MetricsRow>;

/// Final-round mean of the regular auxiliary points.
pub fn y_inf_estimate(traj: &Trajectory) -> Vec<f64> {
    mean(&traj.regular_y(traj.rounds())).expect("trajectory has regular agents")
}

/// One row per round; `objective` is the regular average objective.
pub fn metrics(traj: &Trajectory, objective: &dyn Objective) -> MetricsSeries {
    let y_inf = y_inf_estimate(traj);
    (1..=traj.rounds())
        .map(|k| {
            let xs = traj.regular_x(k);
            let ys = traj.regular_y(k);
            let x_bar = mean(&xs).expect("nonempty");
            let y_bar = mean(&ys).expect("nonempty");
            MetricsRow {
                round: k,
                gap_x: objective.value(&x_bar) - traj.f_star,
                gap_y: objective.value(&y_bar) - traj.f_star,
                dist_x: dist(&x_bar, &traj.x_star),
                dist_y: dist(&y_bar, &traj.x_star),
                x_diameter: max_pairwise_dist(&xs),
                y_diameter: norm(&y_range(&ys)),
                containment: xs.iter().map(|x| dist(x, &y_inf)).fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Per-coordinate `max - min`.
pub fn y_range(ys: &[Vec<f64>]) -> Vec<f64> {
    let d = ys.first().map(|y| y.len()).unwrap_or(0);
    (0..d)
        .map(|l| {
            let (lo, hi) = ys
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y[l]), hi.max(y[l])));
            hi - lo
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_size_schedule() {
        assert_eq!(step_size(0, 1.0, 1.0), 1.0);
        assert_eq!(step_size(9, 1.0, 1.0), 0.1);
        for k in 0..1000 {
            assert!(step_size(k + 1, 1.0, 1.0) < step_size(k, 1.0, 1.0));
        }
        assert!(StepSize::new(1.0, 0.0).is_err());
        assert!(StepSize::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn required_robustness() {
        assert_eq!(Algorithm::DistMinMax.required_robustness(2, 2), 11);
        assert_eq!(Algorithm::DistOnly.required_robustness(2, 5), 11);
    }
}
