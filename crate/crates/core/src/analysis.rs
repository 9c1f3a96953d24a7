//! Certificate quantities computed from finished trajectories.
//!
//! The limit `y_inf` of the auxiliary points is estimated by the final-round
//! regular mean; the remaining regular `y` spread is carried as slack in every
//! check relative to it.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{sublevel_radius, Objective, ObjectiveError};
use crate::protocol::{step_size, y_inf_estimate, y_range, Algorithm, SimulationConfig, StepSize, Trajectory};
use crate::vecops::{dist, dist_sq, max_pairwise_dist, norm};
use crate::AgentId;

/// Absolute slack added to the estimation slack in `y_inf`-relative checks.
pub const ANALYSIS_TOL: f64 = 1e-9;
/// Extra slack on the containment verdicts.
pub const CONTAINMENT_TOL: f64 = 1e-6;
pub const EPSILON_GRID_POINTS: usize = 12;
pub const EPSILON_GRID_LOW: f64 = 1e-3;
pub const EPSILON_GRID_HIGH: f64 = 1e2;
/// Rounds scanned when searching for the last threshold round.
pub const DOMINANCE_SCAN_LIMIT: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty set of regular agents")]
    Empty,
    #[error("need at least two regular agents, got {0}")]
    TooFewAgents(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("epsilon = {epsilon} exceeds L * delta = {limit}")]
    InfeasibleEpsilon { epsilon: f64, limit: f64 },
    #[error("angle {theta} is not below pi/2")]
    InfeasibleAngle { theta: f64 },
    #[error("no feasible epsilon in the grid; try larger values")]
    InfeasibleGrid,
    #[error("nonpositive step-size bound {0}")]
    NonpositiveBound(f64),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Per-coordinate range of `ys` and its Euclidean norm.
pub fn consensus_diameter(ys: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    if ys.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let d = y_range(ys);
    let n = norm(&d);
    Ok((d, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxConsensusConstants {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl AuxConsensusConstants {
    /// `beta * exp(-alpha * k)`.
    pub fn bound(&self, k: usize) -> f64 {
        self.beta * (-self.alpha * k as f64).exp()
    }
}

pub fn aux_consensus_constants(omega: f64, regular_count: usize, d0_norm: f64) -> Result<AuxConsensusConstants> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(AnalysisError::Argument(format!("omega must lie in (0, 1), got {omega}")));
    }
    if regular_count < 2 {
        return Err(AnalysisError::TooFewAgents(regular_count));
    }
    if !(d0_norm >= 0.0) {
        return Err(AnalysisError::Argument(format!("diameter must be >= 0, got {d0_norm}")));
    }
    let m = (regular_count - 1) as f64;
    let gamma = 1.0 - omega.powf(m) / 2.0;
    Ok(AuxConsensusConstants {
        gamma,
        alpha: (1.0 / gamma).ln() / m,
        beta: d0_norm / gamma,
    })
}

/// `arccos(eps / (L * delta))`.
pub fn theta_bound(epsilon: f64, grad_bound: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && grad_bound > 0.0 && delta >= 0.0) {
        return Err(AnalysisError::Argument(format!(
            "need eps > 0, L > 0, delta >= 0; got {epsilon}, {grad_bound}, {delta}"
        )));
    }
    let limit = grad_bound * delta;
    if epsilon > limit {
        return Err(AnalysisError::InfeasibleEpsilon { epsilon, limit });
    }
    Ok((epsilon / limit).min(1.0).acos())
}

/// Per-agent inputs of the convergence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRadius {
    pub r_tilde: f64,
    pub theta: f64,
    pub delta: f64,
}

/// `max_i max{R_i sec(theta_i), R_i + delta_i} + xi`.
pub fn convergence_radius(xi: f64, agents: &[AgentRadius]) -> Result<f64> {
    if agents.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut s = 0.0f64;
    for a in agents {
        if !(a.theta >= 0.0 && a.theta < FRAC_PI_2) {
            return Err(AnalysisError::InfeasibleAngle { theta: a.theta });
        }
        s = s.max((a.r_tilde / a.theta.cos()).max(a.r_tilde + a.delta));
    }
    Ok(s + xi)
}

/// `2 l (sqrt(p^2 - R^2) cos(theta) - R sin(theta)) - l^2`.
pub fn delta_decrease(r_tilde: f64, theta: f64, p: f64, l: f64) -> Result<f64> {
    if p < r_tilde {
        return Err(AnalysisError::Argument(format!("need p >= R, got p = {p}, R = {r_tilde}")));
    }
    Ok(2.0 * l * ((p * p - r_tilde * r_tilde).sqrt() * theta.cos() - r_tilde * theta.sin()) - l * l)
}

/// Largest `F` the robustness requirement admits on `n` nodes.
pub fn max_tolerance(n: usize, d: usize, algorithm: Algorithm) -> usize {
    let m = n.saturating_sub(1);
    match algorithm {
        Algorithm::DistMinMax => m / (2 * (2 * d + 1)),
        Algorithm::DistOnly => m / 4,
    }
}

/// Largest `F` with `required_robustness(d, F) <= r`.
pub fn max_f_for_robustness(r: usize, d: usize, algorithm: Algorithm) -> usize {
    match algorithm {
        Algorithm::DistMinMax => r.saturating_sub(1) / (2 * d + 1),
        Algorithm::DistOnly => r.saturating_sub(1) / 2,
    }
}

/// Smallest `k >= 0` with `c1 / (k + c2) <= bound`.
pub fn threshold_round(bound: f64, step: StepSize) -> Result<usize> {
    if !(bound > 0.0) {
        return Err(AnalysisError::NonpositiveBound(bound));
    }
    let guess = (step.c1 / bound - step.c2).ceil().max(0.0);
    let mut k = guess as usize;
    while step_size(k, step.c1, step.c2) > bound {
        k += 1;
    }
    while k > 0 && step_size(k - 1, step.c1, step.c2) <= bound {
        k -= 1;
    }
    Ok(k)
}

/// First `k` with `eta[k] >= (4 beta / nu)(phi_bar e^{-alpha k} + beta e^{-2 alpha k})`,
/// scanning up to [`DOMINANCE_SCAN_LIMIT`].
pub fn dominance_round(phi_bar: f64, consts: &AuxConsensusConstants, nu: f64, step: StepSize) -> Option<usize> {
    if !(nu > 0.0) {
        return None;
    }
    let (a, b) = (consts.alpha, consts.beta);
    (0..DOMINANCE_SCAN_LIMIT).find(|&k| {
        let e = (-a * k as f64).exp();
        step.at(k) >= 4.0 * b / nu * (phi_bar * e + b * e * e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCertificate {
    pub agent: AgentId,
    /// Distance from the local minimizer to `y_inf`.
    pub r_tilde: f64,
    pub delta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub epsilon: f64,
    /// `None` when some agent has no angle bound below pi/2 at this epsilon.
    pub s_star: Option<f64>,
    pub agents: Vec<AgentCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub y_inf_hat: Vec<f64>,
    /// Final regular `y` diameter plus [`CONTAINMENT_TOL`].
    pub tol_est: f64,
    pub x_star: Vec<f64>,
    pub epsilon_grid: Vec<GridPoint>,
    pub best_epsilon: f64,
    pub s_star_min: f64,
    /// `|x* - y_inf|`.
    pub minimizer_distance: f64,
    pub minimizer_inside: bool,
    /// `max_i |x_i[k] - y_inf|` for `k = 0..=K`.
    pub containment: Vec<f64>,
    pub final_contained: bool,
    /// First round from which every later containment value is within `s_star_min + tol_est`.
    pub settling_round: Option<usize>,
}

impl ConvergenceCertificate {
    pub fn best(&self) -> &GridPoint {
        self.epsilon_grid
            .iter()
            .find(|g| g.epsilon == self.best_epsilon)
            .expect("best epsilon is a grid point")
    }
}

/// `count` log-spaced values over `[low, high] * scale`.
pub fn log_grid(low: f64, high: f64, count: usize, scale: f64) -> Vec<f64> {
    if count == 1 {
        return vec![low * scale];
    }
    let (a, b) = (low.ln(), high.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp() * scale)
        .collect()
}

/// Default grid scaled by the median suboptimality of `y_inf` for the regular agents.
pub fn default_epsilon_grid(traj: &Trajectory, config: &SimulationConfig) -> Vec<f64> {
    let y_inf = y_inf_estimate(traj);
    let mut gaps: Vec<f64> = traj
        .regular
        .iter()
        .map(|&i| {
            let o = &config.objectives[i];
            o.value(&y_inf) - o.value(&traj.local_minimizers[i])
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let scale = if median > 1e-12 { median } else { 1.0 };
    log_grid(EPSILON_GRID_LOW, EPSILON_GRID_HIGH, EPSILON_GRID_POINTS, scale)
}

/// Angle bound for one agent: the sublevel bound, tightened by the
/// objective's global angle bound when one is known. Every convex function
/// on the line has angle zero.
fn agent_theta(obj: &dyn Objective, epsilon: f64, grad_bound: f64, delta: f64) -> Option<f64> {
    let structural = if obj.dim() == 1 { Some(0.0) } else { obj.gradient_angle_bound() };
    let from_sublevel = theta_bound(epsilon, grad_bound, delta).ok();
    match (from_sublevel, structural) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
    .filter(|t| *t < FRAC_PI_2)
}

fn grid_point(
    epsilon: f64,
    traj: &Trajectory,
    config: &SimulationConfig,
    y_inf: &[f64],
) -> Result<GridPoint> {
    let mut agents = Vec::with_capacity(traj.regular.len());
    let mut radii = Vec::with_capacity(traj.regular.len());
    let mut feasible = true;
    for &i in &traj.regular {
        let obj = config.objectives[i].as_ref();
        let x_i = &traj.local_minimizers[i];
        let delta = sublevel_radius(obj, x_i, epsilon)?;
        let r_tilde = dist(x_i, y_inf);
        let theta = agent_theta(obj, epsilon, config.grad_bound, delta);
        feasible &= theta.is_some();
        let theta = theta.unwrap_or(FRAC_PI_2);
        agents.push(AgentCertificate {
            agent: i,
            r_tilde,
            delta,
            theta,
        });
        radii.push(AgentRadius { r_tilde, theta, delta });
    }
    let s_star = if feasible { Some(convergence_radius(0.0, &radii)?) } else { None };
    Ok(GridPoint { epsilon, s_star, agents })
}

/// Certificate over `grid` (the default grid when `None`).
pub fn certify(traj: &Trajectory, config: &SimulationConfig, grid: Option<&[f64]>) -> Result<ConvergenceCertificate> {
    if traj.regular.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let y_inf = y_inf_estimate(traj);
    let k_final = traj.rounds();
    let (_, final_diam) = consensus_diameter(&traj.regular_y(k_final))?;
    let tol_est = final_diam + CONTAINMENT_TOL;

    let grid: Vec<f64> = match grid {
        Some(g) => g.to_vec(),
        None => default_epsilon_grid(traj, config),
    };
    let points = grid
        .iter()
        .map(|&e| grid_point(e, traj, config, &y_inf))
        .collect::<Result<Vec<_>>>()?;
    let (best_epsilon, s_star_min) = points
        .iter()
        .filter_map(|p| p.s_star.map(|s| (p.epsilon, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(AnalysisError::InfeasibleGrid)?;

    let containment: Vec<f64> = (0..=k_final)
        .map(|k| {
            traj.regular_x(k)
                .iter()
                .map(|x| dist(x, &y_inf))
                .fold(0.0, f64::max)
        })
        .collect();
    let limit = s_star_min + tol_est;
    let settling_round = match containment.iter().rposition(|&c| c > limit) {
        None => Some(0),
        Some(k) if k < k_final => Some(k + 1),
        Some(_) => None,
    };
    let minimizer_distance = dist(&traj.x_star, &y_inf);
    Ok(ConvergenceCertificate {
        tol_est,
        x_star: traj.x_star.clone(),
        epsilon_grid: points,
        best_epsilon,
        s_star_min,
        minimizer_distance,
        minimizer_inside: minimizer_distance <= limit,
        final_contained: containment[k_final] <= limit,
        containment,
        settling_round,
        y_inf_hat: y_inf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofAgent {
    pub agent: AgentId,
    pub a_plus: f64,
    pub a_minus: f64,
    pub b: f64,
    pub l_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofConstants {
    pub epsilon: f64,
    pub xi: f64,
    /// `s*(xi, epsilon)`.
    pub s_star: f64,
    pub agents: Vec<ProofAgent>,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    /// `0.5 * min_i b_i * l_lower_i`.
    pub nu: f64,
}

/// Per-agent constants and step-size thresholds at one feasible grid point.
pub fn proof_constants(point: &GridPoint, xi: f64, step: StepSize, grad_bound: f64) -> Result<ProofConstants> {
    if !(xi > 0.0) {
        return Err(AnalysisError::Argument(format!("xi must be positive, got {xi}")));
    }
    let radii: Vec<AgentRadius> = point
        .agents
        .iter()
        .map(|a| AgentRadius {
            r_tilde: a.r_tilde,
            theta: a.theta,
            delta: a.delta,
        })
        .collect();
    let s = convergence_radius(xi, &radii)?;
    let mut agents = Vec::with_capacity(radii.len());
    for a in &point.agents {
        let (r, t) = (a.r_tilde, a.theta);
        let root = (s * s - r * r * t.cos().powi(2)).sqrt();
        let b = 2.0 * ((s * s - r * r).sqrt() * t.cos() - r * t.sin());
        if !(b > 0.0) {
            return Err(AnalysisError::NonpositiveBound(b));
        }
        if !(a.delta > 0.0) {
            return Err(AnalysisError::Argument(format!("agent {} has zero sublevel radius", a.agent)));
        }
        agents.push(ProofAgent {
            agent: a.agent,
            a_plus: -r * t.sin() + root,
            a_minus: -r * t.sin() - root,
            b,
            l_lower: point.epsilon / a.delta,
        });
    }
    let min_ab = agents.iter().map(|a| a.a_plus.min(a.b)).fold(f64::INFINITY, f64::min);
    let min_b = agents.iter().map(|a| a.b).fold(f64::INFINITY, f64::min);
    let nu = 0.5 * agents.iter().map(|a| a.b * a.l_lower).fold(f64::INFINITY, f64::min);
    Ok(ProofConstants {
        epsilon: point.epsilon,
        xi,
        s_star: s,
        k1: threshold_round(xi / grad_bound, step)?,
        k2: threshold_round(min_ab / grad_bound, step)?,
        k3: threshold_round(min_b / (2.0 * grad_bound), step)?,
        agents,
        nu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    /// Max pairwise regular `x` distance for `k = 0..=K`.
    pub series: Vec<f64>,
    pub threshold: f64,
    pub verdict: bool,
}

pub fn check_consensus(traj: &Trajectory, threshold: f64) -> Result<ConsensusReport> {
    if traj.regular.len() < 2 {
        return Err(AnalysisError::TooFewAgents(traj.regular.len()));
    }
    let series: Vec<f64> = (0..=traj.rounds())
        .map(|k| max_pairwise_dist(&traj.regular_x(k)))
        .collect();
    let verdict = *series.last().expect("at least one snapshot") <= threshold;
    Ok(ConsensusReport {
        series,
        threshold,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxDecayReport {
    pub constants: AuxConsensusConstants,
    /// `D[k]` per round.
    pub diameters: Vec<Vec<f64>>,
    /// `(k, l)` where `D_l[k + |R| - 1] > gamma * D_l[k] + tol`.
    pub contraction_violations: Vec<(usize, usize)>,
    /// `(k, i)` where `|y_i[k] - y_inf| >= beta e^{-alpha k} + slack`.
    pub decay_violations: Vec<(usize, AgentId)>,
    /// `(l, k)` where `y_inf` leaves `[m_l[k], M_l[k]]` by more than the slack.
    pub hull_violations: Vec<(usize, usize)>,
    pub slack: f64,
}

impl AuxDecayReport {
    pub fn passed(&self) -> bool {
        self.contraction_violations.is_empty() && self.decay_violations.is_empty() && self.hull_violations.is_empty()
    }
}

/// Exponential consensus checks for the auxiliary points.
pub fn check_aux_decay(traj: &Trajectory, omega: f64) -> Result<AuxDecayReport> {
    let r = traj.regular.len();
    let diameters = (0..=traj.rounds())
        .map(|k| y_range(&traj.regular_y(k)))
        .collect::<Vec<_>>();
    let constants = aux_consensus_constants(omega, r, norm(&diameters[0]))?;
    let y_inf = y_inf_estimate(traj);
    let slack = norm(diameters.last().expect("nonempty")) + ANALYSIS_TOL;
    let lag = r - 1;

    let mut contraction_violations = Vec::new();
    for k in 0..diameters.len().saturating_sub(lag) {
        for (l, (&later, &now)) in diameters[k + lag].iter().zip(&diameters[k]).enumerate() {
            if later > constants.gamma * now + ANALYSIS_TOL {
                contraction_violations.push((k, l));
            }
        }
    }
    let mut decay_violations = Vec::new();
    let mut hull_violations = Vec::new();
    for k in 0..=traj.rounds() {
        let bound = constants.bound(k) + slack;
        for &i in &traj.regular {
            if dist(&traj.states[k][i].y, &y_inf) >= bound && bound > slack {
                decay_violations.push((k, i));
            }
        }
        let ys = traj.regular_y(k);
        for (l, &v) in y_inf.iter().enumerate() {
            let lo = ys.iter().map(|y| y[l]).fold(f64::INFINITY, f64::min);
            let hi = ys.iter().map(|y| y[l]).fold(f64::NEG_INFINITY, f64::max);
            if v < lo - slack || v > hi + slack {
                hull_violations.push((l, k));
            }
        }
    }
    Ok(AuxDecayReport {
        constants,
        diameters,
        contraction_violations,
        decay_violations,
        hull_violations,
        slack,
    })
}

/// `|z_i - y_inf| <= max_j |x_j - y_inf| + 2 |y_i - y_inf| + slack`, with `j`
/// over regular in-neighbors and `i` itself. Returns the failing `(k, i)`.
pub fn check_inexact_aux(traj: &Trajectory, config: &SimulationConfig) -> Vec<(usize, AgentId)> {
    let y_inf = y_inf_estimate(traj);
    let slack = norm(&y_range(&traj.regular_y(traj.rounds()))) + ANALYSIS_TOL;
    let mut out = Vec::new();
    for k in 0..traj.rounds() {
        let st = &traj.states[k];
        for (r, &i) in traj.regular.iter().enumerate() {
            let reach = config
                .topology
                .in_neighbors(i)
                .iter()
                .copied()
                .filter(|&j| !config.adversaries.contains(j))
                .chain(std::iter::once(i))
                .map(|j| dist(&st[j].x, &y_inf))
                .fold(0.0, f64::max);
            if dist(&traj.z[k][r], &y_inf) > reach + 2.0 * dist(&st[i].y, &y_inf) + slack {
                out.push((k, i));
            }
        }
    }
    out
}

/// Rounds `k >= k3` where the squared-distance decrease far from `y_inf`
/// exceeds its predicted bound. Diagnostic only, since `y_inf` is estimated.
pub fn decrease_diagnostic(traj: &Trajectory, cert: &ConvergenceCertificate, proof: &ProofConstants) -> Vec<(usize, AgentId)> {
    let y_inf = &cert.y_inf_hat;
    let point = cert.best();
    let mut out = Vec::new();
    for k in proof.k3..traj.rounds() {
        for (r, &i) in traj.regular.iter().enumerate() {
            let a = &point.agents[r];
            let z = &traj.z[k][r];
            let p = dist(z, y_inf);
            if p <= a.r_tilde + a.delta {
                continue;
            }
            let step = traj.etas[k] * norm(&traj.g[k][r]);
            let Ok(drop) = delta_decrease(a.r_tilde, a.theta, p, step) else {
                continue;
            };
            let lhs = dist_sq(&traj.states[k + 1][i].x, y_inf);
            if lhs > p * p - drop + cert.tol_est {
                out.push((k, i));
            }
        }
    }
    out
}
