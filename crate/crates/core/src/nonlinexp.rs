//! The sublinear expectation `E[xi] = sup_Q E^Q[xi]` over drift-tilted
//! measures with `|lambda| <= L`.
//!
//! The one-step objective `p(lambda) v_up + (1 - p(lambda)) v_down` is affine
//! in `lambda`, so the supremum is attained at `+L` or `-L` and the
//! backward recursion is exact. Ties (equal children) resolve to `+L`.

use crate::error::{LabError, Result};
use crate::lattice::{tilted_up_probability, DriftControl, NodeRef, PathLattice};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::ENUMERATION_NODES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dp,
    BruteForce,
}

#[derive(Debug, Clone)]
pub struct SupExpectationResult {
    pub value: f64,
    pub optimal_control: DriftControl,
    pub method: Method,
}

/// Checks `L >= 0` and `L sqrt(dt) < 1`.
pub fn check_drift_bound(bound: f64, lattice: &PathLattice) -> Result<()> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(LabError::InvalidParameter(format!("drift bound {bound}")));
    }
    tilted_up_probability(bound, lattice.grid().sqrt_dt()).map(|_| ())
}

/// Maximizing drift and resulting value for one step.
#[inline]
pub(crate) fn sup_step(up: f64, down: f64, bound: f64, sqrt_dt: f64) -> (f64, f64) {
    let lambda = if up >= down { bound } else { -bound };
    let p = 0.5 * (1.0 + lambda * sqrt_dt);
    (p * up + (1.0 - p) * down, lambda)
}

fn check_leaves(claim: &[f64], lattice: &PathLattice) -> Result<()> {
    if claim.len() != lattice.leaf_count() {
        return Err(LabError::ShapeMismatch(format!(
            "claim has {} values, lattice has {} leaves",
            claim.len(),
            lattice.leaf_count()
        )));
    }
    Ok(())
}

/// Node-wise conditional sublinear expectation and its maximizing control.
pub fn sup_conditional(
    claim: &[f64],
    bound: f64,
    lattice: &PathLattice,
) -> Result<(NodeProcess, DriftControl)> {
    check_drift_bound(bound, lattice)?;
    check_leaves(claim, lattice)?;
    let n = lattice.steps();
    let sq = lattice.grid().sqrt_dt();
    let mut values = vec![Vec::new(); n + 1];
    let mut lambda = vec![Vec::new(); n];
    values[n] = claim.to_vec();
    for t in (0..n).rev() {
        let next = &values[t + 1];
        let pairs = map_indices(1 << t, |i| sup_step(next[2 * i], next[2 * i + 1], bound, sq));
        values[t] = pairs.iter().map(|p| p.0).collect();
        lambda[t] = pairs.iter().map(|p| p.1).collect();
    }
    Ok((
        NodeProcess::from_slices(values, 2, ProcessKind::Adapted)?,
        DriftControl::new(lambda, bound)?,
    ))
}

pub fn sup_expectation(claim: &[f64], bound: f64, lattice: &PathLattice) -> Result<SupExpectationResult> {
    let (values, control) = sup_conditional(claim, bound, lattice)?;
    Ok(SupExpectationResult { value: values.get(0, 0), optimal_control: control, method: Method::Dp })
}

/// Exhaustive maximum over all bang-bang adapted controls, evaluated through
/// leaf densities. Independent of the backward recursion.
pub fn brute_force_sup_expectation(
    claim: &[f64],
    bound: f64,
    lattice: &PathLattice,
) -> Result<SupExpectationResult> {
    check_drift_bound(bound, lattice)?;
    check_leaves(claim, lattice)?;
    let n = lattice.steps();
    let decisions = (1usize << n) - 1;
    if decisions > ENUMERATION_NODES {
        return Err(LabError::InstanceTooLarge { size: decisions, cap: ENUMERATION_NODES });
    }
    let sq = lattice.grid().sqrt_dt();
    let p_plus = 0.5 * (1.0 + bound * sq);
    let p_minus = 0.5 * (1.0 - bound * sq);
    // node (t, i) is decision bit (2^t - 1 + i)
    let leaves = lattice.leaf_count();
    let mut best: Option<(f64, usize)> = None;
    for mask in 0usize..1 << decisions {
        let mut total = 0.0;
        for (leaf, &x) in claim.iter().enumerate() {
            let node = NodeRef { step: n, index: leaf };
            let mut density = 1.0;
            for t in 0..n {
                let a = node.ancestor(t);
                let plus = mask >> ((1 << t) - 1 + a.index) & 1 == 1;
                let p = if plus { p_plus } else { p_minus };
                let went_up = node.ancestor(t + 1).index.is_multiple_of(2);
                density *= 2.0 * if went_up { p } else { 1.0 - p };
            }
            total += density * x;
        }
        let value = total / leaves as f64;
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, mask));
        }
    }
    let (value, mask) = best.expect("at least one control");
    let control = DriftControl::from_fn(n, bound, |node| {
        if mask >> ((1 << node.step) - 1 + node.index) & 1 == 1 { bound } else { -bound }
    })?;
    Ok(SupExpectationResult { value, optimal_control: control, method: Method::BruteForce })
}

/// `E[|xi| 1{|xi| >= n}]` per level.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    /// Values are nonincreasing and have decayed over the tested range.
    pub satisfied: bool,
    pub top_value: f64,
}

impl TailReport {
    pub(crate) fn from_values(levels: Vec<f64>, values: Vec<f64>) -> Self {
        let monotone = values.windows(2).all(|w| w[1] <= w[0]);
        let top_value = values.last().copied().unwrap_or(0.0);
        let decayed = top_value == 0.0 || values.first().is_none_or(|&v| top_value < v);
        Self { levels, values, satisfied: monotone && decayed, top_value }
    }
}

pub(crate) fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|&l| !(l >= 0.0 && l.is_finite())) || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidParameter(format!(
            "levels must be nonnegative and strictly increasing: {levels:?}"
        )));
    }
    Ok(())
}

pub fn tail_functional(claim: &[f64], bound: f64, lattice: &PathLattice, levels: &[f64]) -> Result<TailReport> {
    check_levels(levels)?;
    let values = levels
        .iter()
        .map(|&n| {
            let tail: Vec<f64> = claim.iter().map(|x| if x.abs() >= n { x.abs() } else { 0.0 }).collect();
            sup_expectation(&tail, bound, lattice).map(|r| r.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TailReport::from_values(levels.to_vec(), values))
}

pub const DEFAULT_DELTA_GRID: [f64; 5] = [0.1, 0.03, 0.01, 0.003, 0.001];

#[derive(Debug, Clone, PartialEq)]
pub struct UiPoint {
    pub delta: f64,
    /// Worst `E[|X| 1_A]` over the family with `sup_Q Q[A] <= delta`.
    pub epsilon: f64,
    /// Number of leaves in the worst event.
    pub event_leaves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformIntegrabilityReport {
    /// Condition (a): `sup_X sup_tau E[|X_tau|]`.
    pub sup_norm: f64,
    /// Condition (b): the `(delta, epsilon)` profile.
    pub profile: Vec<UiPoint>,
}

/// Extends an `F_t`-measurable slice to the leaves.
fn lift_to_leaves(slice: &[f64], step: usize, steps: usize) -> Vec<f64> {
    (0..1usize << steps).map(|leaf| slice[leaf >> (steps - step)]).collect()
}

/// Checks both conditions of the uniform-integrability characterization on a
/// finite family. Each process contributes every fixed-time value `X_t` as a
/// family member; events are unions of leaves taken in decreasing `|X|`.
pub fn check_uniform_integrability(
    family: &[NodeProcess],
    bound: f64,
    lattice: &PathLattice,
    deltas: &[f64],
) -> Result<UniformIntegrabilityReport> {
    check_drift_bound(bound, lattice)?;
    let n = lattice.steps();
    let mut sup_norm: f64 = 0.0;
    let mut members = Vec::new();
    for x in family {
        lattice.check_process(x)?;
        sup_norm = sup_norm.max(crate::norms::d_norm(x, bound, lattice)?);
        for t in 0..=n {
            members.push(lift_to_leaves(x.slice(t), t, n));
        }
    }
    let profile = deltas
        .iter()
        .map(|&delta| {
            let mut worst = UiPoint { delta, epsilon: 0.0, event_leaves: 0 };
            for m in &members {
                let (eps, k) = worst_event(m, bound, lattice, delta)?;
                if eps > worst.epsilon {
                    worst = UiPoint { delta, epsilon: eps, event_leaves: k };
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UniformIntegrabilityReport { sup_norm, profile })
}

/// Largest prefix of leaves sorted by `|x|` with capacity at most `delta`,
/// and the sublinear expectation of `|x|` on it.
fn worst_event(x: &[f64], bound: f64, lattice: &PathLattice, delta: f64) -> Result<(f64, usize)> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let capacity = |k: usize| -> Result<f64> {
        let mut ind = vec![0.0; x.len()];
        for &i in &order[..k] {
            ind[i] = 1.0;
        }
        Ok(sup_expectation(&ind, bound, lattice)?.value)
    };
    // capacity is nondecreasing in k
    let (mut lo, mut hi) = (0usize, x.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if capacity(mid)? <= delta { lo = mid } else { hi = mid - 1 }
    }
    let mut masked = vec![0.0; x.len()];
    for &i in &order[..lo] {
        masked[i] = x[i].abs();
    }
    Ok((sup_expectation(&masked, bound, lattice)?.value, lo))
}
