//! Byzantine message strategies.
//!
//! Adversaries see the whole round snapshot, the topology, the filter
//! parameter and the minimizer of the regular objective. They may send a
//! different pair to every receiver.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{distance_filter, minmax_filter_x, minmax_filter_y, LabeledVector};
use crate::graph::{AdversarySet, Topology};
use crate::protocol::{AgentState, Algorithm, RoundMessages};
use crate::seeding;
use crate::vecops::{add_scaled, dist_sq, norm, scale, sub};
use crate::AgentId;

/// Bisection steps along the safe-region ray.
pub const SAFE_REGION_BISECTIONS: usize = 32;
/// Fraction of the way from the receiver's value to a safe-interval end.
pub const CORNER_NUDGE: f64 = 0.999;
pub const DEFAULT_MAX_MAGNITUDE: f64 = 1e3;

fn default_max_magnitude() -> f64 {
    DEFAULT_MAX_MAGNITUDE
}

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("constant message has dimension {got}, simulation has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid strategy parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Same pair to every receiver in every round.
    Constant { x: Vec<f64>, y: Vec<f64> },
    /// Own state plus independent Gaussian noise per receiver.
    GaussianNoise { sigma: f64 },
    /// Farthest filter-surviving `x` away from the minimizer, and a random
    /// corner of the surviving `y` box.
    SafeRegion {
        #[serde(default = "default_max_magnitude")]
        max_magnitude: f64,
    },
    /// Fair coin per round and adversary between `SafeRegion` and `GaussianNoise`.
    Mixed {
        sigma: f64,
        #[serde(default = "default_max_magnitude")]
        max_magnitude: f64,
    },
}

impl Default for AdversaryStrategy {
    fn default() -> Self {
        AdversaryStrategy::SafeRegion {
            max_magnitude: DEFAULT_MAX_MAGNITUDE,
        }
    }
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryStrategy::Constant { .. } => "constant",
            AdversaryStrategy::GaussianNoise { .. } => "gaussian_noise",
            AdversaryStrategy::SafeRegion { .. } => "safe_region",
            AdversaryStrategy::Mixed { .. } => "mixed",
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), AdversaryError> {
        let sigma_ok = |s: f64| {
            if s >= 0.0 && s.is_finite() {
                Ok(())
            } else {
                Err(AdversaryError::Parameter(format!("sigma must be finite and >= 0, got {s}")))
            }
        };
        let mag_ok = |m: f64| {
            if m > 0.0 && m.is_finite() {
                Ok(())
            } else {
                Err(AdversaryError::Parameter(format!("max_magnitude must be finite and > 0, got {m}")))
            }
        };
        match self {
            AdversaryStrategy::Constant { x, y } => {
                for v in [x, y] {
                    if v.len() != d {
                        return Err(AdversaryError::Dimension {
                            expected: d,
                            got: v.len(),
                        });
                    }
                    if v.iter().any(|c| !c.is_finite()) {
                        return Err(AdversaryError::Parameter("constant message must be finite".into()));
                    }
                }
                Ok(())
            }
            AdversaryStrategy::GaussianNoise { sigma } => sigma_ok(*sigma),
            AdversaryStrategy::SafeRegion { max_magnitude } => mag_ok(*max_magnitude),
            AdversaryStrategy::Mixed { sigma, max_magnitude } => {
                sigma_ok(*sigma)?;
                mag_ok(*max_magnitude)
            }
        }
    }
}

/// Read-only view handed to the strategies.
#[derive(Debug, Clone, Copy)]
pub struct AdversaryContext<'a> {
    pub round: usize,
    /// Round-`k` states of all agents.
    pub states: &'a [AgentState],
    pub topology: &'a Topology,
    pub f: usize,
    pub algorithm: Algorithm,
    pub adversaries: &'a AdversarySet,
    /// Minimizer of the regular average objective.
    pub x_star: &'a [f64],
    pub seed: u64,
}

impl AdversaryContext<'_> {
    fn message_rng(&self, adversary: AgentId, receiver: AgentId) -> ChaCha8Rng {
        seeding::stream(
            self.seed,
            &[seeding::ADVERSARY, self.round as u64, adversary as u64, receiver as u64],
        )
    }

    fn coin_rng(&self, adversary: AgentId) -> ChaCha8Rng {
        seeding::stream(
            self.seed,
            &[seeding::ADVERSARY, self.round as u64, adversary as u64, u64::MAX],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftedMessage {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub message: AgentState,
    /// Whether the strategy verified the message survives the receiver's filters.
    pub promised_survival: bool,
}

/// Receiver's inbox as seen by `adversary`: own state first, then every other
/// in-neighbor with a message already fixed, ascending.
pub fn target_inbox(
    ctx: &AdversaryContext<'_>,
    messages: &RoundMessages,
    target: AgentId,
    adversary: AgentId,
) -> (Vec<LabeledVector>, Vec<LabeledVector>) {
    let own = &ctx.states[target];
    let mut xs = vec![LabeledVector::new(target, own.x.clone())];
    let mut ys = vec![LabeledVector::new(target, own.y.clone())];
    for &j in ctx.topology.in_neighbors(target) {
        if j == adversary {
            continue;
        }
        if let Some(m) = messages.get(j, target) {
            xs.push(LabeledVector::new(j, m.x.clone()));
            ys.push(LabeledVector::new(j, m.y.clone()));
        }
    }
    (xs, ys)
}

/// Fixed pair regardless of context.
pub fn attack_constant(x: &[f64], y: &[f64]) -> AgentState {
    AgentState::new(x.to_vec(), y.to_vec())
}

/// Adversary's own state plus independent `N(0, sigma^2)` noise per coordinate.
pub fn attack_gaussian<R: Rng + ?Sized>(own: &AgentState, sigma: f64, rng: &mut R) -> AgentState {
    let mut noisy = |v: &[f64]| -> Vec<f64> {
        if sigma == 0.0 {
            return v.to_vec();
        }
        let normal = Normal::new(0.0, sigma).expect("sigma validated finite and nonnegative");
        v.iter().map(|c| c + normal.sample(rng)).collect()
    };
    let x = noisy(&own.x);
    let y = noisy(&own.y);
    AgentState::new(x, y)
}

/// Whether `candidate` from `sender` survives the receiver's `x` filtering.
pub fn x_survives(
    f: usize,
    algorithm: Algorithm,
    target: AgentId,
    y_target: &[f64],
    x_inbox: &[LabeledVector],
    sender: AgentId,
    candidate: &[f64],
) -> bool {
    let mut inbox = x_inbox.to_vec();
    inbox.push(LabeledVector::new(sender, candidate.to_vec()));
    let Ok(kept) = distance_filter(f, target, y_target, &inbox) else {
        return false;
    };
    if !kept.iter().any(|e| e.owner == sender) {
        return false;
    }
    match algorithm {
        Algorithm::DistOnly => true,
        Algorithm::DistMinMax => minmax_filter_x(f, target, &kept)
            .map(|k| k.iter().any(|e| e.owner == sender))
            .unwrap_or(false),
    }
}

/// Per-coordinate survival of `candidate` in the receiver's `y` filter.
pub fn y_survives(f: usize, target: AgentId, y_inbox: &[LabeledVector], sender: AgentId, candidate: &[f64]) -> Vec<bool> {
    let mut inbox = y_inbox.to_vec();
    inbox.push(LabeledVector::new(sender, candidate.to_vec()));
    match minmax_filter_y(f, target, &inbox) {
        Ok(kept) => kept
            .iter()
            .map(|coord| coord.iter().any(|s| s.owner == sender))
            .collect(),
        Err(_) => vec![false; candidate.len()],
    }
}

/// Survival test for one sender's `x` against a fixed inbox, equivalent to
/// [`x_survives`] without rebuilding the filtered sets per candidate.
///
/// A kept candidate never changes which other entries the distance filter
/// drops, so the min-max stage always sees the same other survivors.
#[derive(Debug)]
pub struct XSurvival<'a> {
    f: usize,
    algorithm: Algorithm,
    sender: AgentId,
    y_target: &'a [f64],
    own_x: &'a [f64],
    own_d: f64,
    /// Squared distances of other entries strictly farther than the receiver's own.
    farther: Vec<(f64, AgentId)>,
    /// Other entries that survive the distance filter without the candidate.
    kept: Vec<&'a LabeledVector>,
}

impl<'a> XSurvival<'a> {
    /// `x_inbox` holds the receiver's own entry and must not contain `sender`.
    pub fn new(
        f: usize,
        algorithm: Algorithm,
        target: AgentId,
        y_target: &'a [f64],
        x_inbox: &'a [LabeledVector],
        sender: AgentId,
    ) -> Option<Self> {
        let own_x = &x_inbox.iter().find(|e| e.owner == target)?.value;
        let own_d = dist_sq(own_x, y_target);
        let others = || x_inbox.iter().filter(|e| e.owner != target && e.owner != sender);
        let mut farther: Vec<(f64, AgentId)> = others()
            .map(|e| (dist_sq(&e.value, y_target), e.owner))
            .filter(|&(d, _)| d > own_d)
            .collect();
        farther.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        let dropped: Vec<AgentId> = farther.iter().take(f).map(|&(_, o)| o).collect();
        let kept = others().filter(|e| !dropped.contains(&e.owner)).collect();
        Some(Self {
            f,
            algorithm,
            sender,
            y_target,
            own_x,
            own_d,
            farther,
            kept,
        })
    }

    pub fn survives(&self, candidate: &[f64]) -> bool {
        let s = self.sender;
        let dc = dist_sq(candidate, self.y_target);
        if dc > self.own_d {
            let ahead = self
                .farther
                .iter()
                .filter(|&&(d, o)| d > dc || (d == dc && o > s))
                .count();
            if ahead < self.f {
                return false;
            }
        }
        if self.algorithm == Algorithm::DistOnly {
            return true;
        }
        candidate.iter().zip(self.own_x).enumerate().all(|(l, (&c, &own))| {
            let ahead = if c > own {
                self.kept
                    .iter()
                    .filter(|e| e.value[l] > c || (e.value[l] == c && e.owner > s))
                    .count()
            } else if c < own {
                self.kept
                    .iter()
                    .filter(|e| e.value[l] < c || (e.value[l] == c && e.owner > s))
                    .count()
            } else {
                return true;
            };
            ahead >= self.f
        })
    }
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return scale(&v, 1.0 / n);
        }
    }
}

/// Farthest point along a ray away from `x_star` that the receiver keeps.
///
/// The ray starts at the receiver's `y` when that point survives, else at its
/// `x`. The receiver's own `x` always survives, so the result always does.
#[allow(clippy::too_many_arguments)]
pub fn attack_safe_region_x<R: Rng + ?Sized>(
    ctx: &AdversaryContext<'_>,
    adversary: AgentId,
    target: AgentId,
    x_inbox: &[LabeledVector],
    max_magnitude: f64,
    rng: &mut R,
) -> Vec<f64> {
    let own = &ctx.states[target];
    let Some(oracle) = XSurvival::new(ctx.f, ctx.algorithm, target, &own.y, x_inbox, adversary) else {
        return own.x.clone();
    };
    let survives = |p: &[f64]| oracle.survives(p);
    let anchor = if survives(&own.y) { &own.y } else { &own.x };
    if !survives(anchor) {
        return own.x.clone();
    }
    let away = sub(anchor, ctx.x_star);
    let len = norm(&away);
    let dir = if len > 1e-12 {
        scale(&away, 1.0 / len)
    } else {
        random_unit(anchor.len(), rng)
    };
    let at = |t: f64| add_scaled(anchor, t, &dir);
    if survives(&at(max_magnitude)) {
        return at(max_magnitude);
    }
    let (mut lo, mut hi) = (0.0, max_magnitude);
    for _ in 0..SAFE_REGION_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if survives(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Interval of values for one coordinate that survive the receiver's trim.
///
/// `others` excludes the receiver's own value and the sender's candidate.
pub fn safe_interval(f: usize, own: f64, others: &[f64], max_magnitude: f64) -> (f64, f64) {
    if f == 0 {
        return (own - max_magnitude, own + max_magnitude);
    }
    let mut above: Vec<f64> = others.iter().copied().filter(|&v| v > own).collect();
    let mut below: Vec<f64> = others.iter().copied().filter(|&v| v < own).collect();
    above.sort_by(|a, b| b.total_cmp(a));
    below.sort_by(|a, b| a.total_cmp(b));
    let hi = if above.len() >= f { above[f - 1] } else { own };
    let lo = if below.len() >= f { below[f - 1] } else { own };
    (lo, hi)
}

/// Random corner of the surviving `y` box, nudged toward the receiver's value.
/// Coordinates that fail the replay fall back to the receiver's own value.
pub fn attack_corner_y<R: Rng + ?Sized>(
    ctx: &AdversaryContext<'_>,
    adversary: AgentId,
    target: AgentId,
    y_inbox: &[LabeledVector],
    max_magnitude: f64,
    rng: &mut R,
) -> Vec<f64> {
    let own = &ctx.states[target].y;
    let mut msg: Vec<f64> = own
        .iter()
        .enumerate()
        .map(|(l, &own_l)| {
            let others: Vec<f64> = y_inbox
                .iter()
                .filter(|e| e.owner != target)
                .map(|e| e.value[l])
                .collect();
            let (lo, hi) = safe_interval(ctx.f, own_l, &others, max_magnitude);
            let corner = if rng.random_bool(0.5) { hi } else { lo };
            own_l + CORNER_NUDGE * (corner - own_l)
        })
        .collect();
    let kept = y_survives(ctx.f, target, y_inbox, adversary, &msg);
    for (l, ok) in kept.into_iter().enumerate() {
        if !ok {
            msg[l] = own[l];
        }
    }
    msg
}

/// Byzantine messages for every adversarial out-edge to a regular agent.
///
/// Receivers are handled in ascending order and, per receiver, adversaries in
/// ascending order; each sees the messages fixed before it. A kept message
/// stays kept when a later kept message joins the inbox, so every verified
/// message survives the full inbox.
pub fn craft_messages(
    strategy: &AdversaryStrategy,
    ctx: &AdversaryContext<'_>,
    regular: &RoundMessages,
) -> Result<Vec<CraftedMessage>, AdversaryError> {
    let d = ctx.x_star.len();
    strategy.validate(d)?;
    let mut messages = regular.clone();
    let mut out = Vec::new();
    let use_safe: Vec<(AgentId, bool)> = ctx
        .adversaries
        .members()
        .iter()
        .map(|&a| {
            let safe = match strategy {
                AdversaryStrategy::SafeRegion { .. } => true,
                AdversaryStrategy::Mixed { .. } => ctx.coin_rng(a).random_bool(0.5),
                _ => false,
            };
            (a, safe)
        })
        .collect();
    for target in (0..ctx.topology.n()).filter(|&i| !ctx.adversaries.contains(i)) {
        for &a in ctx.topology.in_neighbors(target) {
            let Some(&(_, safe)) = use_safe.iter().find(|(id, _)| *id == a) else {
                continue;
            };
            let mut rng = ctx.message_rng(a, target);
            let message = match strategy {
                AdversaryStrategy::Constant { x, y } => attack_constant(x, y),
                AdversaryStrategy::GaussianNoise { sigma } => attack_gaussian(&ctx.states[a], *sigma, &mut rng),
                AdversaryStrategy::SafeRegion { max_magnitude } | AdversaryStrategy::Mixed { max_magnitude, .. }
                    if safe =>
                {
                    let (xs, ys) = target_inbox(ctx, &messages, target, a);
                    let x = attack_safe_region_x(ctx, a, target, &xs, *max_magnitude, &mut rng);
                    let y = attack_corner_y(ctx, a, target, &ys, *max_magnitude, &mut rng);
                    AgentState::new(x, y)
                }
                AdversaryStrategy::Mixed { sigma, .. } => attack_gaussian(&ctx.states[a], *sigma, &mut rng),
                AdversaryStrategy::SafeRegion { .. } => unreachable!("safe flag is always set for SafeRegion"),
            };
            messages.insert(a, target, message.clone());
            out.push(CraftedMessage {
                sender: a,
                receiver: target,
                message,
                promised_survival: safe,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safe_interval_order_statistics() {
        assert_eq!(safe_interval(1, 0.0, &[1.0, 2.0, -3.0], 10.0), (-3.0, 2.0));
        assert_eq!(safe_interval(2, 0.0, &[1.0, 2.0, -3.0], 10.0), (0.0, 1.0));
        assert_eq!(safe_interval(0, 0.5, &[], 10.0), (-9.5, 10.5));
        assert_eq!(safe_interval(1, 3.0, &[3.0, 3.0], 10.0), (3.0, 3.0));
    }

    #[test]
    fn strategy_serde_tags() {
        let s: AdversaryStrategy = serde_json::from_str(r#"{"kind":"safe_region"}"#).unwrap();
        assert_eq!(
            s,
            AdversaryStrategy::SafeRegion {
                max_magnitude: DEFAULT_MAX_MAGNITUDE
            }
        );
        let c: AdversaryStrategy = serde_json::from_str(r#"{"kind":"constant","x":[0,5],"y":[2,2]}"#).unwrap();
        assert_eq!(c.validate(2), Ok(()));
        assert!(matches!(c.validate(3), Err(AdversaryError::Dimension { .. })));
    }
}
