//! Reflected BSDE: the solution is kept above an obstacle `S` by a
//! nondecreasing push `K` that only acts on contact.
//!
//! One step: `y~` solves `y = E[Y_next] + dt f(y, Z)`, then `Y = max(y~, S)`
//! and `dK = Y - E[Y_next] - dt f(Y, Z)`. Since `y - dt f(y, z)` is
//! increasing under the contraction condition, `dK >= 0` and `dK > 0` only
//! when `Y = S`.

use std::fmt;
use std::str::FromStr;

use crate::bsde::{
    check_contraction, check_terminal, comparison_feasible, driver_gap_integral, estimate_constant, frozen_integral, implicit_y,
    lattice_ctx, mean_and_z, ordering_violation, ComparisonReport, ConvergenceReport, Problem, DEFAULT_BETA,
    PROBE_GRID,
};
use crate::check::Verdict;
use crate::claim::{ClaimSpec, TerminalClaim};
use crate::driver::{Driver, NodeCtx};
use crate::error::{LabError, Result};
use crate::lattice::{NodeRef, PathLattice};
use crate::nonlinexp::{check_levels, sup_expectation};
use crate::norms::{check_beta, d_norm, h_beta_norm, s_beta_norm};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::{BOUND, ENUMERATION_NODES, EXACT};

/// Recipe for an obstacle: nothing, or a payoff evaluated on each path prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleSpec {
    None,
    Payoff(ClaimSpec),
}

impl fmt::Display for ObstacleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObstacleSpec::None => write!(f, "none"),
            ObstacleSpec::Payoff(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for ObstacleSpec {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "" => Ok(ObstacleSpec::None),
            other => Ok(ObstacleSpec::Payoff(other.parse()?)),
        }
    }
}

/// Obstacle values on every node. `-inf` means no constraint; values on
/// the leaves are only used for tail reports, since `Y_T = xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePath {
    values: NodeProcess,
}

impl ObstaclePath {
    pub fn none(lattice: &PathLattice) -> Self {
        Self::constant(lattice, f64::NEG_INFINITY)
    }

    pub fn constant(lattice: &PathLattice, c: f64) -> Self {
        ObstaclePath { values: NodeProcess::from_fn(lattice.steps(), 2, ProcessKind::Adapted, |_, _| c) }
    }

    pub fn from_process(values: NodeProcess, lattice: &PathLattice) -> Result<Self> {
        lattice.check_process(&values)?;
        if values.slices().iter().flatten().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(LabError::InvalidParameter("obstacle must be finite or -inf".into()));
        }
        Ok(ObstaclePath { values })
    }

    pub fn from_spec(lattice: &PathLattice, spec: &ObstacleSpec) -> Result<Self> {
        let claim = match spec {
            ObstacleSpec::None => return Ok(Self::none(lattice)),
            ObstacleSpec::Payoff(c) => c,
        };
        let slices = (0..=lattice.steps())
            .map(|t| {
                claim.eval_slice((0..1 << t).map(|i| {
                    let node = NodeRef { step: t, index: i };
                    (lattice.b_path(node), lattice.w_path(node))
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_process(NodeProcess::from_slices(slices, 2, ProcessKind::Adapted)?, lattice)
    }

    pub fn values(&self) -> &NodeProcess {
        &self.values
    }

    pub fn get(&self, step: usize, index: usize) -> f64 {
        self.values.get(step, index)
    }

    /// `S ^ n`.
    pub fn truncated(&self, level: f64) -> Self {
        ObstaclePath { values: self.values.map(|s| s.min(level)) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ObstaclePath { values: self.values.map(f) }
    }

    /// `S^+ 1{S^+ >= level}` before the horizon, zero at the leaves.
    pub fn positive_tail(&self, level: f64) -> NodeProcess {
        let n = self.values.steps();
        let mut tail = self.values.map(|s| if s.max(0.0) >= level { s.max(0.0) } else { 0.0 });
        tail.slice_mut(n).iter_mut().for_each(|v| *v = 0.0);
        tail
    }

    /// `sup_tau E[S^+_tau 1{S^+_tau >= level}]` over stopping times before the horizon.
    pub fn tail_bound(&self, bound: f64, lattice: &PathLattice, level: f64) -> Result<f64> {
        d_norm(&self.positive_tail(level), bound, lattice)
    }

    fn ordered_below(&self, other: &ObstaclePath) -> bool {
        let n = self.values.steps();
        (0..n).all(|t| self.values.slice(t).iter().zip(other.values.slice(t)).all(|(a, b)| a <= b))
    }
}

#[derive(Debug, Clone)]
pub struct RbsdeSolution {
    pub y: NodeProcess,
    pub z: NodeProcess,
    /// Cumulative push, `K_0 = 0`, `K_{t+1} = K_t + dK_t`.
    pub k: NodeProcess,
    /// Push applied at each non-terminal node.
    pub dk: NodeProcess,
    /// Unreflected one-step values `y~`.
    pub continuation: NodeProcess,
    /// `sum |(Y - S) dK|` over nodes.
    pub skorokhod_defect: f64,
    pub residual: f64,
}

pub fn solve_rbsde(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    obstacle: &ObstaclePath,
    lattice: &PathLattice,
) -> Result<RbsdeSolution> {
    let n = lattice.steps();
    check_terminal(claim.values(), lattice, n)?;
    lattice.check_process(obstacle.values())?;
    driver.validate(n, 2)?;
    let dt = lattice.grid().dt();
    check_contraction(driver.lipschitz_y(), dt)?;
    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n + 1];
    let mut dk = vec![Vec::new(); n + 1];
    let mut cont = vec![Vec::new(); n + 1];
    y[n] = claim.values().to_vec();
    z[n] = vec![0.0; 1 << n];
    dk[n] = vec![0.0; 1 << n];
    cont[n] = y[n].clone();
    let mut residual: f64 = 0.0;
    let mut defect = 0.0;
    for t in (0..n).rev() {
        let next = &y[t + 1];
        let rows = map_indices(1 << t, |i| -> Result<[f64; 5]> {
            let (mean, zi) = mean_and_z(lattice, next, t, i);
            let at = lattice_ctx(lattice, t, i);
            let free = implicit_y(driver, &at, mean, zi, dt)?;
            let s = obstacle.get(t, i);
            let yi = free.max(s);
            let push = if yi > free { (yi - mean - dt * driver.eval(&at, yi, zi)).max(0.0) } else { 0.0 };
            let res = (yi - mean - dt * driver.eval(&at, yi, zi) - push).abs() / (1.0 + yi.abs());
            Ok([yi, zi, push, free, res])
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        y[t] = rows.iter().map(|r| r[0]).collect();
        z[t] = rows.iter().map(|r| r[1]).collect();
        dk[t] = rows.iter().map(|r| r[2]).collect();
        cont[t] = rows.iter().map(|r| r[3]).collect();
        residual = rows.iter().fold(residual, |m, r| m.max(r[4]));
        for (i, r) in rows.iter().enumerate() {
            let s = obstacle.get(t, i);
            if s != f64::NEG_INFINITY {
                defect += ((r[0] - s) * r[2]).abs();
            }
        }
    }
    let mut k = vec![vec![0.0]];
    for t in 0..n {
        let row: Vec<f64> = (0..2 << t).map(|i| k[t][i / 2] + dk[t][i / 2]).collect();
        k.push(row);
    }
    Ok(RbsdeSolution {
        y: NodeProcess::from_slices(y, 2, ProcessKind::Adapted)?,
        z: NodeProcess::from_slices(z, 2, ProcessKind::PredictableIncrement)?,
        k: NodeProcess::from_slices(k, 2, ProcessKind::Adapted)?,
        dk: NodeProcess::from_slices(dk, 2, ProcessKind::PredictableIncrement)?,
        continuation: NodeProcess::from_slices(cont, 2, ProcessKind::Adapted)?,
        skorokhod_defect: defect,
        residual,
    })
}

impl RbsdeSolution {
    /// Largest shortfall `S - Y` before the horizon (nonpositive when `Y >= S`).
    pub fn obstacle_violation(&self, obstacle: &ObstaclePath) -> f64 {
        let n = self.y.steps();
        let mut worst = f64::NEG_INFINITY;
        for t in 0..n {
            for (y, s) in self.y.slice(t).iter().zip(obstacle.values().slice(t)) {
                worst = worst.max(s - y);
            }
        }
        worst
    }
}

/// Optimal stopping of `S` before the horizon and `xi` at it, under the
/// base measure, by backward induction.
pub fn snell_oracle(claim: &TerminalClaim, obstacle: &ObstaclePath, lattice: &PathLattice) -> Result<NodeProcess> {
    let n = lattice.steps();
    check_terminal(claim.values(), lattice, n)?;
    lattice.check_process(obstacle.values())?;
    let mut v = vec![Vec::new(); n + 1];
    v[n] = claim.values().to_vec();
    for t in (0..n).rev() {
        let next = &v[t + 1];
        v[t] = (0..1 << t).map(|i| obstacle.get(t, i).max(0.5 * (next[2 * i] + next[2 * i + 1]))).collect();
    }
    NodeProcess::from_slices(v, 2, ProcessKind::Adapted)
}

/// Same value by enumerating every adapted stopping rule (a stop/continue
/// flag per non-terminal node).
pub fn snell_oracle_exhaustive(claim: &TerminalClaim, obstacle: &ObstaclePath, lattice: &PathLattice) -> Result<f64> {
    let n = lattice.steps();
    check_terminal(claim.values(), lattice, n)?;
    lattice.check_process(obstacle.values())?;
    let inner = (1usize << n) - 1;
    if inner > ENUMERATION_NODES {
        return Err(LabError::InstanceTooLarge { size: inner, cap: ENUMERATION_NODES });
    }
    let leaves = lattice.leaf_count() as f64;
    let mut best = f64::NEG_INFINITY;
    for mask in 0usize..1 << inner {
        let mut total = 0.0;
        for leaf in 0..lattice.leaf_count() {
            let leaf_node = NodeRef { step: n, index: leaf };
            let stop = (0..n).map(|t| leaf_node.ancestor(t)).find(|a| mask >> ((1 << a.step) - 1 + a.index) & 1 == 1);
            total += match stop {
                Some(a) => obstacle.get(a.step, a.index),
                None => claim.values()[leaf],
            };
        }
        best = best.max(total / leaves);
    }
    Ok(best)
}

fn within(measured: f64, bound: f64) -> bool {
    measured <= bound + BOUND * (1.0 + bound.abs())
}

/// Truncated obstacles `S ^ n`: consecutive solutions are ordered and
/// their distance is controlled by the obstacle tail above the lower level.
pub fn obstacle_truncation_scheme(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    obstacle: &ObstaclePath,
    lattice: &PathLattice,
    levels: &[f64],
) -> Result<ConvergenceReport> {
    check_levels(levels)?;
    let bound = driver.lipschitz_z();
    let full = solve_rbsde(driver, claim, obstacle, lattice)?;
    let sols = levels
        .iter()
        .map(|&n| solve_rbsde(driver, claim, &obstacle.truncated(n), lattice))
        .collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::new();
    let mut s_beta_distances = Vec::new();
    let mut bounds = Vec::new();
    for (sol, &n) in sols.iter().zip(levels) {
        let diff = full.y.zip_with(&sol.y, |a, b| a - b)?;
        distances.push(d_norm(&diff, bound, lattice)?);
        s_beta_distances.push(s_beta_norm(&diff, DEFAULT_BETA, bound, lattice)?);
        bounds.push(obstacle.tail_bound(bound, lattice, n)?);
    }
    let mut pair_distances = Vec::new();
    let mut monotone = true;
    for k in 0..sols.len().saturating_sub(1) {
        let diff = sols[k + 1].y.zip_with(&sols[k].y, |a, b| a - b)?;
        monotone &= ordering_violation(&sols[k].y, &sols[k + 1].y).1 <= EXACT;
        pair_distances.push((levels[k], levels[k + 1], d_norm(&diff, bound, lattice)?));
    }
    let verdict = if driver.nonincreasing_in_y() {
        let limit_ok = distances.iter().zip(&bounds).all(|(&d, &b)| within(d, b));
        let pairs_ok = pair_distances.iter().zip(&bounds).all(|(&(_, _, d), &b)| within(d, b));
        Verdict::from_bool(limit_ok && pairs_ok && monotone)
    } else {
        Verdict::from_bool(monotone).and(Verdict::Inapplicable)
    };
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        distances,
        s_beta_distances,
        pair_distances,
        bounds,
        beta: DEFAULT_BETA,
        verdict,
    })
}

/// A reflected problem: generator, terminal claim and obstacle.
pub struct ReflectedProblem<'a, D: Driver + ?Sized> {
    pub driver: &'a D,
    pub claim: &'a TerminalClaim,
    pub obstacle: &'a ObstaclePath,
}

impl<D: Driver + ?Sized> Clone for ReflectedProblem<'_, D> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<D: Driver + ?Sized> Copy for ReflectedProblem<'_, D> {}

impl<'a, D: Driver + ?Sized> ReflectedProblem<'a, D> {
    fn plain(&self) -> Problem<'a, D> {
        Problem { driver: self.driver, claim: self.claim }
    }
}

fn drivers_ordered(
    lo: &(impl Driver + ?Sized),
    hi: &(impl Driver + ?Sized),
    lattice: &PathLattice,
    at_solution: &RbsdeSolution,
) -> bool {
    let ok = |at: &NodeCtx, y: f64, z: f64| {
        let h = hi.eval(at, y, z);
        lo.eval(at, y, z) <= h + EXACT * (1.0 + h.abs())
    };
    (0..lattice.steps()).all(|t| {
        (0..1 << t).all(|i| {
            let at = lattice_ctx(lattice, t, i);
            let (y, c, z) = (at_solution.y.get(t, i), at_solution.continuation.get(t, i), at_solution.z.get(t, i));
            ok(&at, y, z) && ok(&at, c, z) && PROBE_GRID.iter().all(|&p| PROBE_GRID.iter().all(|&q| ok(&at, p, q)))
        })
    })
}

/// Ordered data (`xi <= xi'`, `f <= f'`, `S <= S'`) give ordered solutions.
pub fn rbsde_comparison_check(
    first: ReflectedProblem<'_, impl Driver + ?Sized>,
    second: ReflectedProblem<'_, impl Driver + ?Sized>,
    lattice: &PathLattice,
) -> Result<ComparisonReport> {
    let s1 = solve_rbsde(first.driver, first.claim, first.obstacle, lattice)?;
    let lz = first.driver.lipschitz_z().max(second.driver.lipschitz_z());
    if !comparison_feasible(lz, lattice.grid().sqrt_dt()) {
        return Ok(ComparisonReport::inapplicable());
    }
    let claims = first.claim.values().iter().zip(second.claim.values()).all(|(a, b)| a <= b);
    if !(claims && first.obstacle.ordered_below(second.obstacle) && drivers_ordered(first.driver, second.driver, lattice, &s1)) {
        return Ok(ComparisonReport::inapplicable());
    }
    let s2 = solve_rbsde(second.driver, second.claim, second.obstacle, lattice)?;
    Ok(ComparisonReport::from_ordering(&s1.y, &s2.y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbsdeStabilityReport {
    /// Verdict on `||dY||_D <= E[|d xi| + int |df|]` (common obstacle).
    pub verdict: Verdict,
    pub d_norm: f64,
    pub d_bound: f64,
    pub s_beta_dy: f64,
    pub h_beta_dz: f64,
    /// `||dK||_{S^beta}`, reported only.
    pub s_beta_dk: f64,
    pub constant: f64,
}

/// Stability between two reflected problems sharing an obstacle. The
/// generator gap is taken at the first solution's reflected and
/// unreflected values, whichever is larger.
pub fn rbsde_stability_check(
    first: ReflectedProblem<'_, impl Driver + ?Sized>,
    second: ReflectedProblem<'_, impl Driver + ?Sized>,
    beta: f64,
    lattice: &PathLattice,
) -> Result<RbsdeStabilityReport> {
    check_beta(beta)?;
    if first.obstacle != second.obstacle {
        return Err(LabError::InvalidParameter("stability needs a common obstacle".into()));
    }
    let (p1, p2) = (first.plain(), second.plain());
    let bound = p1.driver.lipschitz_z().max(p2.driver.lipschitz_z());
    let s1 = solve_rbsde(p1.driver, p1.claim, first.obstacle, lattice)?;
    let s2 = solve_rbsde(p2.driver, p2.claim, second.obstacle, lattice)?;
    let dy = s2.y.zip_with(&s1.y, |a, b| a - b)?;
    let dz = s2.z.zip_with(&s1.z, |a, b| a - b)?;
    let dk = s2.k.zip_with(&s1.k, |a, b| a - b)?;
    let g_reflected = driver_gap_integral(p1.driver, p2.driver, &s1.y, &s1.z, lattice);
    let g_free = driver_gap_integral(p1.driver, p2.driver, &s1.continuation, &s1.z, lattice);
    let total: Vec<f64> = p1
        .claim
        .values()
        .iter()
        .zip(p2.claim.values())
        .zip(g_reflected.iter().zip(&g_free))
        .map(|((a, b), (g, h))| (b - a).abs() + g.max(*h))
        .collect();
    let d_norm_v = d_norm(&dy, bound, lattice)?;
    let d_bound = sup_expectation(&total, bound, lattice)?.value;
    let verdict = if p2.driver.nonincreasing_in_y() {
        Verdict::from_bool(within(d_norm_v, d_bound))
    } else {
        Verdict::Inapplicable
    };
    let lipschitz = bound.max(p1.driver.lipschitz_y()).max(p2.driver.lipschitz_y());
    Ok(RbsdeStabilityReport {
        verdict,
        d_norm: d_norm_v,
        d_bound,
        s_beta_dy: s_beta_norm(&dy, beta, bound, lattice)?,
        h_beta_dz: h_beta_norm(&dz, beta, bound, lattice)?,
        s_beta_dk: s_beta_norm(&dk, beta, bound, lattice)?,
        constant: estimate_constant(beta, lipschitz, lattice.grid().horizon()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZkReport {
    /// `||Z||_{H^beta} + ||K||_{S^beta}`.
    pub lhs: f64,
    /// `||Y||_{S^beta} + ||Y||_D^beta + E[int |f^0|]^beta`.
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    pub finite: bool,
}

/// `(Z, K)` controlled by `Y` and the frozen generator.
pub fn zk_estimate_check(
    driver: &(impl Driver + ?Sized),
    solution: &RbsdeSolution,
    beta: f64,
    lattice: &PathLattice,
) -> Result<ZkReport> {
    check_beta(beta)?;
    let bound = driver.lipschitz_z();
    let lhs = h_beta_norm(&solution.z, beta, bound, lattice)? + s_beta_norm(&solution.k, beta, bound, lattice)?;
    let f0 = frozen_integral(driver, lattice, f64::abs);
    let rhs = s_beta_norm(&solution.y, beta, bound, lattice)?
        + d_norm(&solution.y, bound, lattice)?.powf(beta)
        + sup_expectation(&f0, bound, lattice)?.value.powf(beta);
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(ZkReport { lhs, rhs, ratio, finite: ratio.is_finite() })
}

/// Largest ratio across refinements divided by the smallest; the estimate
/// is stable when this stays within `max_growth`.
pub fn refinement_stable(ratios: &[f64], max_growth: f64) -> Verdict {
    if ratios.iter().any(|r| !r.is_finite()) {
        return Verdict::Violated;
    }
    let positive: Vec<f64> = ratios.iter().copied().filter(|&r| r > 0.0).collect();
    if positive.is_empty() {
        return Verdict::Holds;
    }
    let hi = positive.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    Verdict::from_bool(positive.len() == ratios.len() && hi <= max_growth * lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::solve_bsde;
    use crate::claim::claim_from_spec;
    use crate::driver::{FrozenTerm, LipschitzDriver};
    use crate::lattice::{build_lattice, RegimeSpec, TimeGrid};

    fn lat(n: usize) -> PathLattice {
        build_lattice(TimeGrid::new(1.0, n).unwrap(), &RegimeSpec::Constant(1.0)).unwrap()
    }

    fn put() -> ClaimSpec {
        ClaimSpec::Put { spot: 1.0, strike: 1.1 }
    }

    fn generic() -> LipschitzDriver {
        LipschitzDriver { f0: FrozenTerm::Affine { c0: 0.1, cb: -0.2, ct: 0.0 }, y_lin: -0.4, y_sin: 0.2, z_lin: 0.3, z_abs: 0.4 }
    }

    #[test]
    fn no_obstacle_is_plain_bsde() {
        let l = lat(7);
        let xi = claim_from_spec(&l, &ClaimSpec::Square).unwrap();
        let d = generic();
        let r = solve_rbsde(&d, &xi, &ObstaclePath::none(&l), &l).unwrap();
        let b = solve_bsde(&d, &xi, &l).unwrap();
        assert_eq!(r.y, b.y);
        assert_eq!(r.k.max_abs(), 0.0);
        assert_eq!(r.skorokhod_defect, 0.0);
    }

    #[test]
    fn american_put_matches_enumeration() {
        let l = lat(3);
        let xi = claim_from_spec(&l, &put()).unwrap();
        let s = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(put())).unwrap();
        let dp = snell_oracle(&xi, &s, &l).unwrap();
        let brute = snell_oracle_exhaustive(&xi, &s, &l).unwrap();
        assert!((dp.get(0, 0) - brute).abs() < 1e-14);
        let r = solve_rbsde(&LipschitzDriver::zero(), &xi, &s, &l).unwrap();
        assert!(r.y.max_abs_diff(&dp).unwrap() <= 1e-12);
        assert!(r.skorokhod_defect <= 1e-12 && r.residual <= 1e-12);
        assert!(r.obstacle_violation(&s) <= 1e-12);
        // early exercise is worth something here
        assert!(r.k.terminal().iter().any(|&k| k > 0.0));
    }

    #[test]
    fn constant_obstacle_hand_recursion() {
        // N = 2: leaves |B| in {sqrt 2, 0, 0, sqrt 2}, both step-1 continuations 1/sqrt 2
        let l = lat(2);
        let xi = claim_from_spec(&l, &ClaimSpec::Abs).unwrap();
        let c = 0.5f64.sqrt();
        let r = solve_rbsde(&LipschitzDriver::zero(), &xi, &ObstaclePath::constant(&l, 1.0), &l).unwrap();
        for i in 0..2 {
            assert!((r.y.get(1, i) - 1.0).abs() < 1e-15);
            assert!((r.dk.get(1, i) - (1.0 - c)).abs() < 1e-15);
        }
        assert!((r.y.get(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(r.dk.get(0, 0), 0.0);
        assert!((r.k.get(2, 3) - (1.0 - c)).abs() < 1e-15);
        let r = solve_rbsde(&LipschitzDriver::zero(), &xi, &ObstaclePath::constant(&l, 0.5), &l).unwrap();
        assert!((r.y.get(0, 0) - c).abs() < 1e-15);
        assert_eq!(r.k.max_abs(), 0.0);
    }

    #[test]
    fn dominant_obstacle_stops_immediately() {
        let l = lat(3);
        let xi = claim_from_spec(&l, &ClaimSpec::Abs).unwrap();
        let mut v = NodeProcess::from_fn(3, 2, ProcessKind::Adapted, |_, _| f64::NEG_INFINITY);
        v.slice_mut(1).iter_mut().for_each(|s| *s = 1e6);
        let s = ObstaclePath::from_process(v, &l).unwrap();
        assert_eq!(snell_oracle(&xi, &s, &l).unwrap().get(0, 0), 1e6);
        assert_eq!(snell_oracle_exhaustive(&xi, &s, &l).unwrap(), 1e6);
        let low = ObstaclePath::constant(&l, -100.0);
        let mean = xi.values().iter().sum::<f64>() / 8.0;
        assert!((snell_oracle(&xi, &low, &l).unwrap().get(0, 0) - mean).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_cap() {
        let l = lat(4);
        let xi = claim_from_spec(&l, &ClaimSpec::Abs).unwrap();
        assert!(matches!(
            snell_oracle_exhaustive(&xi, &ObstaclePath::none(&l), &l),
            Err(LabError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn dominates_plain_bsde() {
        let l = lat(6);
        let xi = claim_from_spec(&l, &put()).unwrap();
        let s = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(put())).unwrap();
        let d = generic();
        let r = solve_rbsde(&d, &xi, &s, &l).unwrap();
        let b = solve_bsde(&d, &xi, &l).unwrap();
        assert!(ordering_violation(&b.y, &r.y).1 <= EXACT);
        assert!(r.residual <= 1e-12 && r.skorokhod_defect <= 1e-12);
        assert!(r.dk.slices().iter().flatten().all(|&k| k >= 0.0));
    }

    #[test]
    fn obstacle_raised_by_eps() {
        let l = lat(6);
        let xi = claim_from_spec(&l, &ClaimSpec::Call { strike: 0.0 }).unwrap();
        let s = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(ClaimSpec::Abs)).unwrap();
        let eps = 0.05;
        let up = s.map(|x| x + eps);
        let d = LipschitzDriver { f0: FrozenTerm::Constant(0.2), y_lin: 0.0, y_sin: 0.0, z_lin: 0.5, z_abs: 0.0 };
        let r1 = solve_rbsde(&d, &xi, &s, &l).unwrap();
        let r2 = solve_rbsde(&d, &xi, &up, &l).unwrap();
        for (a, b) in r1.y.slices().iter().flatten().zip(r2.y.slices().iter().flatten()) {
            assert!(b >= a && b - a <= eps + 1e-14);
        }
        let c = rbsde_comparison_check(
            ReflectedProblem { driver: &d, claim: &xi, obstacle: &s },
            ReflectedProblem { driver: &d, claim: &xi, obstacle: &up },
            &l,
        )
        .unwrap();
        assert!(c.verdict.holds());
    }

    #[test]
    fn truncation_levels() {
        let l = lat(6);
        let xi = claim_from_spec(&l, &ClaimSpec::Abs).unwrap();
        let bounded = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(ClaimSpec::Abs)).unwrap();
        let d = generic();
        let r = obstacle_truncation_scheme(&d, &xi, &bounded, &l, &[10.0, 20.0]).unwrap();
        assert!(r.distances.iter().all(|&x| x == 0.0));
        assert!(r.verdict.holds());
        let r = obstacle_truncation_scheme(&d, &xi, &ObstaclePath::none(&l), &l, &[1.0, 2.0]).unwrap();
        assert!(r.distances.iter().all(|&x| x == 0.0));

        let l = lat(10);
        let xi = claim_from_spec(&l, &ClaimSpec::Constant(0.0)).unwrap();
        let heavy =
            ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(ClaimSpec::Pareto { alpha: 1.5, scale: 1.0 })).unwrap();
        let r = obstacle_truncation_scheme(&d, &xi, &heavy, &l, &[2.0, 4.0, 8.0, 16.0]).unwrap();
        assert!(r.verdict.holds(), "{r:?}");
        assert!(r.strictly_decreasing(), "{:?}", r.distances);
    }

    #[test]
    fn stability_identity_and_shift() {
        let l = lat(6);
        let xi = claim_from_spec(&l, &put()).unwrap();
        let s = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(put())).unwrap();
        let d = generic();
        let p = ReflectedProblem { driver: &d, claim: &xi, obstacle: &s };
        let r = rbsde_stability_check(p, p, 0.5, &l).unwrap();
        assert_eq!((r.d_norm, r.s_beta_dk), (0.0, 0.0));
        assert!(r.verdict.holds());
        let d2 = LipschitzDriver { y_sin: -0.1, ..generic() };
        let xi2 = xi.map(|x| x * 1.1);
        let r = rbsde_stability_check(p, ReflectedProblem { driver: &d2, claim: &xi2, obstacle: &s }, 0.5, &l).unwrap();
        assert!(r.verdict.holds(), "{r:?}");
        let other = s.map(|x| x + 1.0);
        assert!(rbsde_stability_check(p, ReflectedProblem { obstacle: &other, ..p }, 0.5, &l).is_err());
    }

    #[test]
    fn zk_estimate_cases() {
        let l = lat(5);
        let zero = TerminalClaim::new(vec![0.0; 32]).unwrap();
        let r = solve_rbsde(&LipschitzDriver::zero(), &zero, &ObstaclePath::none(&l), &l).unwrap();
        let z = zk_estimate_check(&LipschitzDriver::zero(), &r, 0.5, &l).unwrap();
        assert_eq!((z.lhs, z.rhs, z.ratio), (0.0, 0.0, 0.0));

        let mut ratios = Vec::new();
        for n in [4, 8, 16] {
            let l = lat(n);
            let xi = claim_from_spec(&l, &put()).unwrap();
            let s = ObstaclePath::from_spec(&l, &ObstacleSpec::Payoff(put())).unwrap();
            let r = solve_rbsde(&generic(), &xi, &s, &l).unwrap();
            let z = zk_estimate_check(&generic(), &r, 0.5, &l).unwrap();
            assert!(z.finite && z.ratio > 0.0);
            ratios.push(z.ratio);
        }
        assert!(refinement_stable(&ratios, 10.0).holds(), "{ratios:?}");
    }

    #[test]
    fn spec_round_trip() {
        for s in ["none", "put(1,1.1)", "abs"] {
            let spec: ObstacleSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }
}
