//! Supersolution, minimality, representation, dynamic programming,
//! comparison, integrability and regime-set checks for the 2BSDE value.

use crate::bsde::{ComparisonReport, PROBE_GRID};
use crate::check::Verdict;
use crate::claim::TerminalClaim;
use crate::driver::{linearize, Driver};
use crate::error::Result;
use crate::lattice::tilted_up_probability;
use crate::nonlinexp::{check_levels, sup_step, TailReport};
use crate::parallel::map_indices;
use crate::process::NodeProcess;
use crate::tolerance::{BOUND, EXACT, MINIMALITY};

use super::enumerate::{controlled_pairs, enumeration_size, ENUMERATION_CAP};
use super::{
    cumulate, push_increments, regime_step, solve_controlled, solve_window, RegimeControl, RegimeTree,
    TwoBsdeSolution,
};

/// Number of seeded random controls added to the candidate set.
const RANDOM_CANDIDATES: u64 = 4;

#[derive(Debug, Clone)]
pub struct SupersolutionReport {
    pub verdict: Verdict,
    /// Largest scaled defect of `V_t = V_next + dt F - Z dB + dK` over both
    /// children of the chosen regime.
    pub max_defect: f64,
    pub min_increment: f64,
    pub k: NodeProcess,
    pub dk: NodeProcess,
}

/// `V` is a supersolution under control `P` with nondecreasing `K^P`.
pub fn supersolution_check(
    driver: &(impl Driver + ?Sized),
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    control: &RegimeControl,
) -> SupersolutionReport {
    let dt = tree.grid().dt();
    let dk = push_increments(driver, solution, tree, control);
    let mut max_defect: f64 = 0.0;
    let mut min_increment = f64::INFINITY;
    for t in 0..tree.steps() {
        let (vt, next, bt, bn) = (solution.v.slice(t), solution.v.slice(t + 1), tree.b_slice(t), tree.b_slice(t + 1));
        for i in 0..tree.slice_len(t) {
            let r = control.at(t, i);
            let (_, z) = regime_step(tree, next, t, i, r);
            let f = driver.eval(&tree.ctx(t, i, r), vt[i], z);
            let (u, d) = tree.children(i, r);
            for c in [u, d] {
                let rhs = next[c] + dt * f - z * (bn[c] - bt[i]) + dk.get(t, i);
                max_defect = max_defect.max((vt[i] - rhs).abs() / (1.0 + vt[i].abs()));
            }
            min_increment = min_increment.min(dk.get(t, i));
        }
    }
    let k = cumulate(&dk);
    let ok = max_defect <= EXACT && min_increment >= -EXACT && k.get(0, 0) == 0.0;
    SupersolutionReport { verdict: Verdict::from_bool(ok), max_defect, min_increment, k, dk }
}

/// Controls tried when the subtree is too large to enumerate: the base
/// control and, from `step` on, the maximizer, each constant level and a
/// few seeded random controls.
fn candidate_controls(
    tree: &RegimeTree,
    solution: &TwoBsdeSolution,
    base: &RegimeControl,
    step: usize,
    seed: u64,
) -> Result<Vec<RegimeControl>> {
    let mut tails = vec![solution.control.clone(), base.clone()];
    for r in 0..tree.regimes() {
        tails.push(RegimeControl::constant(tree, r)?);
    }
    for j in 0..RANDOM_CANDIDATES {
        tails.push(RegimeControl::random(tree, seed.wrapping_add(j)));
    }
    tails.iter().map(|c| base.paste(c, step)).collect()
}

/// `E^{Q^P}[K^P_T - K^P_t | node]` on every node at `step`, where `Q^P`
/// tilts by the linearization of `F(V, Z) - F(Y^P, Z^P)`.
fn tilted_remaining_push(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    control: &RegimeControl,
    step: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let controlled = solve_controlled(driver, claim, tree, control)?;
    let dk = push_increments(driver, solution, tree, control);
    let sq = tree.grid().sqrt_dt();
    let mut acc = vec![0.0; tree.leaf_count()];
    for t in (step..tree.steps()).rev() {
        let next_acc = acc;
        let (vt, vn) = (solution.v.slice(t), solution.v.slice(t + 1));
        acc = map_indices(tree.slice_len(t), |i| {
            let r = control.at(t, i);
            let (_, zv) = regime_step(tree, vn, t, i, r);
            let lin = linearize(
                driver,
                &tree.ctx(t, i, r),
                (vt[i], zv),
                (controlled.y.get(t, i), controlled.z.get(t, i)),
            );
            let p = 0.5 * (1.0 + lin.b * sq);
            let (u, d) = tree.children(i, r);
            dk.get(t, i) + p * next_acc[u] + (1.0 - p) * next_acc[d]
        });
    }
    Ok((acc, controlled.y.slice(step).to_vec()))
}

/// Per node at `step`: smallest remaining push and largest controlled value
/// over the admissible continuations of `base`.
fn continuation_extremes(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    base: &RegimeControl,
    step: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    tilted_up_probability(driver.lipschitz_z(), tree.grid().sqrt_dt())?;
    let exhaustive = enumeration_size(tree.regimes(), tree.steps() - step) <= ENUMERATION_CAP;
    let len = tree.slice_len(step);
    if exhaustive {
        let rows = map_indices(len, |i| -> Result<(f64, f64)> {
            let pairs = controlled_pairs(driver, claim.values(), solution, tree, step, i)?;
            Ok(pairs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(k, y), p| (k.min(p.1), y.max(p.0))))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        return Ok((rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect(), true));
    }
    let mut inf = vec![f64::INFINITY; len];
    let mut sup = vec![f64::NEG_INFINITY; len];
    for c in candidate_controls(tree, solution, base, step, seed)? {
        let (acc, y) = tilted_remaining_push(driver, claim, solution, tree, &c, step)?;
        for i in 0..len {
            inf[i] = inf[i].min(acc[i]);
            sup[i] = sup[i].max(y[i]);
        }
    }
    Ok((inf, sup, false))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityCertificate {
    pub step: usize,
    /// Infimum of the tilted remaining push per node at `step`.
    pub node_infimum: Vec<f64>,
    pub max_infimum: f64,
    pub min_infimum: f64,
    /// All continuations enumerated (otherwise a candidate set).
    pub exhaustive: bool,
    pub verdict: Verdict,
}

impl MinimalityCertificate {
    fn new(step: usize, node_infimum: Vec<f64>, exhaustive: bool) -> Self {
        let max_infimum = node_infimum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_infimum = node_infimum.iter().cloned().fold(f64::INFINITY, f64::min);
        let verdict = Verdict::from_bool(max_infimum <= MINIMALITY && min_infimum >= -EXACT);
        MinimalityCertificate { step, node_infimum, max_infimum, min_infimum, exhaustive, verdict }
    }
}

/// The push of `base` after `step` can be made negligible: the infimum over
/// controls agreeing with `base` before `step` of the tilted remaining push
/// vanishes at every node.
pub fn check_minimality(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    step: usize,
    base: &RegimeControl,
    seed: u64,
) -> Result<MinimalityCertificate> {
    let (node_infimum, _, exhaustive) = continuation_extremes(driver, claim, solution, tree, base, step, seed)?;
    Ok(MinimalityCertificate::new(step, node_infimum, exhaustive))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationReport {
    pub step: usize,
    /// Largest `|V - max_P Y^P| / (1 + |V|)` over nodes at `step`.
    pub max_gap: f64,
    pub exhaustive: bool,
    pub verdict: Verdict,
}

impl RepresentationReport {
    fn new(step: usize, values: &[f64], best: &[f64], exhaustive: bool) -> Self {
        let max_gap = values.iter().zip(best).map(|(&v, &y)| (v - y).abs() / (1.0 + v.abs())).fold(0.0, f64::max);
        RepresentationReport { step, max_gap, exhaustive, verdict: Verdict::from_bool(max_gap <= BOUND) }
    }
}

/// `V` at every node of `step` is the largest controlled BSDE value over
/// continuations of `base`.
pub fn representation_check(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    step: usize,
    base: &RegimeControl,
    seed: u64,
) -> Result<RepresentationReport> {
    let (_, best, exhaustive) = continuation_extremes(driver, claim, solution, tree, base, step, seed)?;
    Ok(RepresentationReport::new(step, solution.v.slice(step), &best, exhaustive))
}

/// Both checks from one pass over the continuations.
pub fn representation_and_minimality(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    step: usize,
    base: &RegimeControl,
    seed: u64,
) -> Result<(RepresentationReport, MinimalityCertificate)> {
    let (inf, best, exhaustive) = continuation_extremes(driver, claim, solution, tree, base, step, seed)?;
    Ok((
        RepresentationReport::new(step, solution.v.slice(step), &best, exhaustive),
        MinimalityCertificate::new(step, inf, exhaustive),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppReport {
    pub step: usize,
    pub max_diff: f64,
    pub verdict: Verdict,
}

/// Solving on `[0, k]` with `V_k` as terminal data reproduces `V`.
pub fn dpp_check(
    driver: &(impl Driver + ?Sized),
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    k: usize,
) -> Result<DppReport> {
    if k > tree.steps() {
        return Err(crate::error::LabError::InvalidParameter(format!("step {k} beyond horizon {}", tree.steps())));
    }
    let staged = solve_window(driver, solution.v.slice(k), tree, k)?;
    let mut max_diff: f64 = 0.0;
    for t in 0..=k {
        for (a, b) in staged.v.slice(t).iter().zip(solution.v.slice(t)) {
            max_diff = max_diff.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    Ok(DppReport { step: k, max_diff, verdict: Verdict::from_bool(max_diff <= EXACT) })
}

/// Ordered data give ordered values.
pub fn comparison_2bsde(
    first: (&(impl Driver + ?Sized), &TerminalClaim),
    second: (&(impl Driver + ?Sized), &TerminalClaim),
    tree: &RegimeTree,
) -> Result<ComparisonReport> {
    let (d1, xi1) = first;
    let (d2, xi2) = second;
    let s1 = super::solve_2bsde(d1, xi1, tree)?;
    let claims = xi1.values().iter().zip(xi2.values()).all(|(a, b)| a <= b);
    let k = tree.regimes();
    let drivers = (0..tree.steps()).all(|t| {
        (0..tree.slice_len(t)).all(|i| {
            (0..k).all(|r| {
                let at = tree.ctx(t, i, r);
                let ok = |y: f64, z: f64| {
                    let h = d2.eval(&at, y, z);
                    d1.eval(&at, y, z) <= h + EXACT * (1.0 + h.abs())
                };
                ok(s1.v.get(t, i), s1.z_at(t, i, r, k)) && PROBE_GRID.iter().all(|&y| PROBE_GRID.iter().all(|&z| ok(y, z)))
            })
        })
    });
    if !(claims && drivers) {
        return Ok(ComparisonReport::inapplicable());
    }
    let s2 = super::solve_2bsde(d2, xi2, tree)?;
    Ok(ComparisonReport::from_ordering(&s1.v, &s2.v))
}

/// `sup E[|V_tau| 1{|V_tau| >= n}]` over stopping rules, regimes and drift
/// kernels bounded by `bound`, per level.
pub fn v_integrability_check(
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    bound: f64,
    levels: &[f64],
) -> Result<TailReport> {
    check_levels(levels)?;
    let sq = tree.grid().sqrt_dt();
    tilted_up_probability(bound, sq)?;
    let n = tree.steps();
    let values = levels
        .iter()
        .map(|&c| {
            let tail = |x: f64| if x.abs() >= c { x.abs() } else { 0.0 };
            let mut w: Vec<f64> = solution.v.slice(n).iter().map(|&x| tail(x)).collect();
            for t in (0..n).rev() {
                let vt = solution.v.slice(t);
                w = map_indices(tree.slice_len(t), |i| {
                    let cont = (0..tree.regimes())
                        .map(|r| {
                            let (u, d) = tree.children(i, r);
                            sup_step(w[u], w[d], bound, sq).0
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    tail(vt[i]).max(cont)
                });
            }
            w[0]
        })
        .collect();
    Ok(TailReport::from_values(levels.to_vec(), values))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeMonotonicityReport {
    /// Largest `V_U - V_{U'}` over matching nodes; nonpositive when ordered.
    pub max_violation: f64,
    pub verdict: Verdict,
}

/// A larger level set gives a larger value at every shared history.
pub fn regime_monotonicity_check(
    small: (&TwoBsdeSolution, &RegimeTree),
    large: (&TwoBsdeSolution, &RegimeTree),
) -> Result<RegimeMonotonicityReport> {
    let (s, ts) = small;
    let (l, tl) = large;
    if !ts.uncertainty().is_subset_of(tl.uncertainty()) || ts.steps() != tl.steps() {
        return Ok(RegimeMonotonicityReport { max_violation: 0.0, verdict: Verdict::Inapplicable });
    }
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for t in 0..=ts.steps() {
        for i in 0..ts.slice_len(t) {
            let j = ts.embed_index(t, i, tl)?;
            let (a, b) = (s.v.get(t, i), l.v.get(t, j));
            worst = worst.max(a - b);
            ok &= a <= b + EXACT * (1.0 + b.abs());
        }
    }
    Ok(RegimeMonotonicityReport { max_violation: worst, verdict: Verdict::from_bool(ok) })
}
