//! Resilient filters and the weighted averages applied to their survivors.
//!
//! Every filter removes only entries strictly beyond the receiver's own value,
//! at most `f` per side, extremes first. Among equal values the higher owner id
//! is removed first, so the lower id survives. The receiver's own entry is
//! never removed. Survivors keep their input order.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecops::dist_sq;
use crate::AgentId;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("inputs have no entry owned by the receiver {0}")]
    MissingOwn(AgentId),
    #[error("owner {0} appears more than once")]
    DuplicateOwner(AgentId),
    #[error("entry from {owner} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        owner: AgentId,
        expected: usize,
        got: usize,
    },
    #[error("weights cover owners {weights:?} but retained owners are {retained:?}")]
    OwnerMismatch {
        weights: Vec<AgentId>,
        retained: Vec<AgentId>,
    },
    #[error("expected {expected} per-coordinate weight sets, got {got}")]
    CoordinateCount { expected: usize, got: usize },
    #[error("cannot weight an empty set")]
    Empty,
    #[error("omega {omega} is infeasible for {count} retained entries")]
    InfeasibleOmega { omega: f64, count: usize },
    #[error("weights must be positive and sum to 1 (sum {sum}, min {min})")]
    InvalidWeights { sum: f64, min: f64 },
}

pub type Result<T> = std::result::Result<T, FilterError>;

/// A received vector tagged with its sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub owner: AgentId,
    pub value: Vec<f64>,
}

impl LabeledVector {
    pub fn new(owner: AgentId, value: Vec<f64>) -> Self {
        Self { owner, value }
    }
}

/// One coordinate of a received vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScalar {
    pub owner: AgentId,
    pub value: f64,
}

/// Validates ownership and dimensions; returns the index of the own entry.
fn validate(own_id: AgentId, inputs: &[LabeledVector]) -> Result<usize> {
    let mut seen = BTreeSet::new();
    let d = inputs.first().map(|e| e.value.len()).unwrap_or(0);
    for e in inputs {
        if !seen.insert(e.owner) {
            return Err(FilterError::DuplicateOwner(e.owner));
        }
        if e.value.len() != d {
            return Err(FilterError::DimensionMismatch {
                owner: e.owner,
                expected: d,
                got: e.value.len(),
            });
        }
    }
    inputs
        .iter()
        .position(|e| e.owner == own_id)
        .ok_or(FilterError::MissingOwn(own_id))
}

/// Removal order for entries on one side of the own value: most extreme first,
/// higher owner first among equal values.
fn removal_order(side: &mut [(f64, AgentId)], descending: bool) {
    side.sort_by(|a, b| {
        let by_value = if descending {
            b.0.partial_cmp(&a.0)
        } else {
            a.0.partial_cmp(&b.0)
        }
        .unwrap_or(Ordering::Equal);
        by_value.then(b.1.cmp(&a.1))
    });
}

/// Owners removed by a one-dimensional two-sided trim around `own`.
fn trimmed_owners(f: usize, own_id: AgentId, own: f64, values: impl Iterator<Item = (f64, AgentId)>) -> Vec<AgentId> {
    let mut above = Vec::new();
    let mut below = Vec::new();
    for (v, owner) in values {
        if owner == own_id {
            continue;
        }
        if v > own {
            above.push((v, owner));
        } else if v < own {
            below.push((v, owner));
        }
    }
    removal_order(&mut above, true);
    removal_order(&mut below, false);
    above
        .iter()
        .take(f)
        .chain(below.iter().take(f))
        .map(|&(_, o)| o)
        .collect()
}

/// Drops up to `f` entries whose distance to `y_own` strictly exceeds the
/// receiver's own distance, farthest first.
pub fn distance_filter(f: usize, own_id: AgentId, y_own: &[f64], inputs: &[LabeledVector]) -> Result<Vec<LabeledVector>> {
    let own_idx = validate(own_id, inputs)?;
    if y_own.len() != inputs[own_idx].value.len() {
        return Err(FilterError::DimensionMismatch {
            owner: own_id,
            expected: inputs[own_idx].value.len(),
            got: y_own.len(),
        });
    }
    let own_d = dist_sq(&inputs[own_idx].value, y_own);
    let mut farther: Vec<(f64, AgentId)> = inputs
        .iter()
        .filter(|e| e.owner != own_id)
        .map(|e| (dist_sq(&e.value, y_own), e.owner))
        .filter(|&(d, _)| d > own_d)
        .collect();
    removal_order(&mut farther, true);
    let removed: BTreeSet<AgentId> = farther.iter().take(f).map(|&(_, o)| o).collect();
    Ok(inputs.iter().filter(|e| !removed.contains(&e.owner)).cloned().collect())
}

/// Drops every vector that is among the `f` most extreme on either side of
/// the receiver's value in any coordinate.
pub fn minmax_filter_x(f: usize, own_id: AgentId, inputs: &[LabeledVector]) -> Result<Vec<LabeledVector>> {
    let own_idx = validate(own_id, inputs)?;
    let own = &inputs[own_idx].value;
    let mut removed = BTreeSet::new();
    for (l, &own_l) in own.iter().enumerate() {
        removed.extend(trimmed_owners(
            f,
            own_id,
            own_l,
            inputs.iter().map(|e| (e.value[l], e.owner)),
        ));
    }
    Ok(inputs.iter().filter(|e| !removed.contains(&e.owner)).cloned().collect())
}

/// Per-coordinate two-sided trim; returns the surviving scalars of each coordinate.
pub fn minmax_filter_y(f: usize, own_id: AgentId, inputs: &[LabeledVector]) -> Result<Vec<Vec<LabeledScalar>>> {
    let own_idx = validate(own_id, inputs)?;
    let own = &inputs[own_idx].value;
    Ok(own
        .iter()
        .enumerate()
        .map(|(l, &own_l)| {
            let removed: BTreeSet<AgentId> =
                trimmed_owners(f, own_id, own_l, inputs.iter().map(|e| (e.value[l], e.owner)))
                    .into_iter()
                    .collect();
            inputs
                .iter()
                .filter(|e| !removed.contains(&e.owner))
                .map(|e| LabeledScalar {
                    owner: e.owner,
                    value: e.value[l],
                })
                .collect()
        })
        .collect())
}

/// How a receiver weights its surviving entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    #[default]
    Uniform,
    Random,
}

/// Positive weights over an ordered list of owners, summing to 1.
///
/// Uniform assignments average by summing and dividing once, so equal weights
/// reproduce the arithmetic mean exactly where it is representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment {
    owners: Vec<AgentId>,
    weights: Vec<f64>,
    uniform: bool,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl WeightAssignment {
    pub fn uniform(owners: Vec<AgentId>) -> Result<Self> {
        if owners.is_empty() {
            return Err(FilterError::Empty);
        }
        let w = 1.0 / owners.len() as f64;
        Ok(Self {
            weights: vec![w; owners.len()],
            owners,
            uniform: true,
        })
    }

    pub fn explicit(owners: Vec<AgentId>, weights: Vec<f64>) -> Result<Self> {
        if owners.is_empty() {
            return Err(FilterError::Empty);
        }
        if owners.len() != weights.len() {
            return Err(FilterError::OwnerMismatch {
                weights: owners,
                retained: Vec::new(),
            });
        }
        let sum: f64 = weights.iter().sum();
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(FilterError::InvalidWeights { sum, min });
        }
        Ok(Self {
            owners,
            weights,
            uniform: false,
        })
    }

    pub fn owners(&self) -> &[AgentId] {
        &self.owners
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_owners(&self, retained: impl Iterator<Item = AgentId>) -> Result<()> {
        let retained: Vec<AgentId> = retained.collect();
        if retained == self.owners {
            Ok(())
        } else {
            Err(FilterError::OwnerMismatch {
                weights: self.owners.clone(),
                retained,
            })
        }
    }

    fn combine(&self, values: impl Iterator<Item = f64>) -> f64 {
        if self.uniform {
            values.sum::<f64>() / self.owners.len() as f64
        } else {
            values.zip(&self.weights).map(|(v, w)| w * v).sum()
        }
    }
}

/// Draws a weight assignment over `owners` with every weight at least `omega`.
///
/// The random policy normalizes uniform draws, then mixes with the uniform
/// vector just enough to lift the smallest weight to `omega`.
pub fn make_weights<R: Rng + ?Sized>(
    policy: WeightPolicy,
    owners: Vec<AgentId>,
    omega: f64,
    rng: &mut R,
) -> Result<WeightAssignment> {
    let m = owners.len();
    if m == 0 {
        return Err(FilterError::Empty);
    }
    if omega * m as f64 > 1.0 + WEIGHT_SUM_TOL {
        return Err(FilterError::InfeasibleOmega { omega, count: m });
    }
    match policy {
        WeightPolicy::Uniform => WeightAssignment::uniform(owners),
        WeightPolicy::Random if m == 1 => WeightAssignment::uniform(owners),
        WeightPolicy::Random => {
            let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + f64::EPSILON).collect();
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
            let u = 1.0 / m as f64;
            let lambda = if p_min >= omega || u - p_min <= 0.0 {
                0.0
            } else {
                ((omega - p_min) / (u - p_min)).min(1.0)
            };
            let weights = p
                .iter()
                .map(|&pj| ((1.0 - lambda) * pj + lambda * u).max(omega))
                .collect();
            Ok(WeightAssignment {
                owners,
                weights,
                uniform: false,
            })
        }
    }
}

/// `sum_j w_j x_j` with one weight per surviving vector.
pub fn weighted_average_x(retained: &[LabeledVector], weights: &WeightAssignment) -> Result<Vec<f64>> {
    weights.check_owners(retained.iter().map(|e| e.owner))?;
    let d = retained[0].value.len();
    Ok((0..d).map(|l| weights.combine(retained.iter().map(|e| e.value[l]))).collect())
}

/// Per-coordinate `sum_j w_j^(l) y_j^(l)` with an independent weight set per coordinate.
pub fn weighted_average_y(retained: &[Vec<LabeledScalar>], weights: &[WeightAssignment]) -> Result<Vec<f64>> {
    if retained.len() != weights.len() {
        return Err(FilterError::CoordinateCount {
            expected: retained.len(),
            got: weights.len(),
        });
    }
    retained
        .iter()
        .zip(weights)
        .map(|(coord, w)| {
            w.check_owners(coord.iter().map(|s| s.owner))?;
            Ok(w.combine(coord.iter().map(|s| s.value)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lv(owner: AgentId, v: &[f64]) -> LabeledVector {
        LabeledVector::new(owner, v.to_vec())
    }

    fn owners(v: &[LabeledVector]) -> Vec<AgentId> {
        v.iter().map(|e| e.owner).collect()
    }

    #[test]
    fn distance_filter_edge_cases() {
        let inputs = vec![lv(0, &[1.0]), lv(1, &[5.0]), lv(2, &[-7.0])];
        assert_eq!(distance_filter(0, 0, &[0.0], &inputs).unwrap(), inputs);
        let equal = vec![lv(0, &[1.0]), lv(1, &[-1.0]), lv(2, &[1.0])];
        assert_eq!(distance_filter(2, 0, &[0.0], &equal).unwrap(), equal);
        assert_eq!(owners(&distance_filter(1, 0, &[0.0], &inputs).unwrap()), vec![0, 1]);
        assert_eq!(
            distance_filter(1, 9, &[0.0], &inputs),
            Err(FilterError::MissingOwn(9))
        );
        // Equidistant pair beyond own: the higher id goes first.
        let tie = vec![lv(0, &[0.5]), lv(1, &[2.0]), lv(2, &[-2.0])];
        assert_eq!(owners(&distance_filter(1, 0, &[0.0], &tie).unwrap()), vec![0, 1]);
    }

    #[test]
    fn minmax_x_median_receiver() {
        let inputs: Vec<_> = [3.0, -1.0, 0.0, 7.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| lv(i, &[v]))
            .collect();
        // owner 4 holds the median of {-1, 0, 1, 3, 7}
        let kept = minmax_filter_x(1, 4, &inputs).unwrap();
        assert_eq!(owners(&kept), vec![0, 2, 4]);
        assert_eq!(minmax_filter_x(0, 4, &inputs).unwrap(), inputs);
    }

    #[test]
    fn minmax_y_keeps_everything_at_f_zero() {
        let inputs = vec![lv(0, &[1.0, 2.0]), lv(1, &[5.0, -3.0])];
        let kept = minmax_filter_y(0, 0, &inputs).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn validation_errors() {
        let dup = vec![lv(0, &[1.0]), lv(0, &[2.0])];
        assert_eq!(minmax_filter_x(1, 0, &dup), Err(FilterError::DuplicateOwner(0)));
        let ragged = vec![lv(0, &[1.0]), lv(1, &[2.0, 3.0])];
        assert!(matches!(
            minmax_filter_y(1, 0, &ragged),
            Err(FilterError::DimensionMismatch { owner: 1, .. })
        ));
    }

    #[test]
    fn averages() {
        let v = vec![lv(3, &[1.0, -2.0])];
        let w = WeightAssignment::uniform(vec![3]).unwrap();
        assert_eq!(weighted_average_x(&v, &w).unwrap(), vec![1.0, -2.0]);
        let v = vec![lv(0, &[0.0, 0.0]), lv(1, &[2.0, 4.0])];
        let w = WeightAssignment::explicit(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_average_x(&v, &w).unwrap(), vec![1.0, 2.0]);
        let wrong = WeightAssignment::uniform(vec![0, 2]).unwrap();
        assert!(matches!(weighted_average_x(&v, &wrong), Err(FilterError::OwnerMismatch { .. })));

        let coords = vec![vec![LabeledScalar { owner: 0, value: 4.0 }, LabeledScalar { owner: 1, value: 4.0 }]];
        let w = vec![WeightAssignment::explicit(vec![0, 1], vec![0.3, 0.7]).unwrap()];
        assert_eq!(weighted_average_y(&coords, &w).unwrap(), vec![4.0]);
        assert!(matches!(
            weighted_average_y(&coords, &[]),
            Err(FilterError::CoordinateCount { .. })
        ));
    }

    #[test]
    fn weight_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = make_weights(WeightPolicy::Uniform, vec![0, 1, 2, 3], 0.1, &mut rng).unwrap();
        assert_eq!(w.weights(), &[0.25; 4]);
        let w = make_weights(WeightPolicy::Random, vec![5], 0.5, &mut rng).unwrap();
        assert_eq!(w.weights(), &[1.0]);
        for _ in 0..200 {
            let w = make_weights(WeightPolicy::Random, vec![0, 1, 2], 0.1, &mut rng).unwrap();
            assert!(w.weights().iter().all(|&x| x >= 0.1));
            assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            make_weights(WeightPolicy::Uniform, vec![0, 1, 2], 0.5, &mut rng),
            Err(FilterError::InfeasibleOmega { .. })
        ));
        let a = make_weights(WeightPolicy::Random, vec![0, 1, 2], 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_weights(WeightPolicy::Random, vec![0, 1, 2], 0.2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_weights_are_validated() {
        assert!(matches!(
            WeightAssignment::explicit(vec![0, 1], vec![0.5, 0.6]),
            Err(FilterError::InvalidWeights { .. })
        ));
        assert!(matches!(
            WeightAssignment::explicit(vec![0, 1], vec![1.0, 0.0]),
            Err(FilterError::InvalidWeights { .. })
        ));
    }
}
