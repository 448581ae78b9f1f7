//! BSDE `Y_t = xi + int_t^T f(Y, Z) ds - int_t^T Z dB` on the lattice.
//!
//! Backward scheme, implicit in `y` and explicit in `z`:
//! `Z = (Y_up - Y_down) / (B_up - B_down)` (exact martingale representation
//! on a binary tree), then `y = E[Y_next] + dt f(y, Z)` by fixed point.

use crate::check::Verdict;
use crate::claim::TerminalClaim;
use crate::driver::{Driver, MonotoneReduction, NodeCtx, TruncatedDriver};
use crate::error::{LabError, Result};
use crate::lattice::{NodeRef, PathLattice};
use crate::nonlinexp::sup_expectation;
use crate::norms::{check_beta, d_norm, h_beta_norm, s_beta_norm};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::{BOUND, EXACT, PICARD_MAX_ITER, PICARD_TOL};

/// Default exponent for `S^beta` / `H^beta` reports.
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub y: NodeProcess,
    pub z: NodeProcess,
    /// Largest one-step defect `|Y - E[Y_next] - dt f(Y, Z)| / (1 + |Y|)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Solve through the exponential change of variable that makes the
    /// generator nonincreasing in `y`, then map back.
    pub monotone_reduction: bool,
}

pub(crate) fn check_contraction(lipschitz_y: f64, dt: f64) -> Result<()> {
    if lipschitz_y * dt < 1.0 {
        Ok(())
    } else {
        Err(LabError::ContractionViolated { lipschitz_y, dt })
    }
}

/// Solves `y = mean + dt f(y, z)` by Picard iteration.
pub(crate) fn implicit_y(
    driver: &(impl Driver + ?Sized),
    at: &NodeCtx,
    mean: f64,
    z: f64,
    dt: f64,
) -> Result<f64> {
    let mut y = mean;
    for _ in 0..PICARD_MAX_ITER {
        let next = mean + dt * driver.eval(at, y, z);
        if !next.is_finite() {
            break;
        }
        if (next - y).abs() <= PICARD_TOL * (1.0 + next.abs()) {
            return Ok(next);
        }
        y = next;
    }
    Err(LabError::PicardDiverged { step: at.step, index: at.index })
}

pub(crate) fn lattice_ctx(lattice: &PathLattice, step: usize, index: usize) -> NodeCtx {
    let node = NodeRef { step, index };
    NodeCtx {
        step,
        index,
        time: lattice.grid().time(step),
        b: lattice.b_value(node),
        sigma: lattice.sigma(node),
    }
}

/// `(mean, z)` of the next-step values seen from `(step, index)`.
#[inline]
pub(crate) fn mean_and_z(lattice: &PathLattice, next: &[f64], step: usize, index: usize) -> (f64, f64) {
    let (up, down) = (next[2 * index], next[2 * index + 1]);
    let bs = lattice.b_slice(step + 1);
    (0.5 * (up + down), (up - down) / (bs[2 * index] - bs[2 * index + 1]))
}

pub(crate) fn check_terminal(terminal: &[f64], lattice: &PathLattice, end: usize) -> Result<()> {
    if end > lattice.steps() || terminal.len() != lattice.slice_len(end) {
        return Err(LabError::ShapeMismatch(format!(
            "terminal data of length {} at step {end}",
            terminal.len()
        )));
    }
    Ok(())
}

/// Solves on steps `0..=end` with terminal values given at step `end`.
pub fn solve_bsde_window(
    driver: &(impl Driver + ?Sized),
    terminal: &[f64],
    lattice: &PathLattice,
    end: usize,
) -> Result<BsdeSolution> {
    check_terminal(terminal, lattice, end)?;
    driver.validate(lattice.steps(), 2)?;
    let dt = lattice.grid().dt();
    check_contraction(driver.lipschitz_y(), dt)?;
    let mut y = vec![Vec::new(); end + 1];
    let mut z = vec![Vec::new(); end + 1];
    y[end] = terminal.to_vec();
    z[end] = vec![0.0; terminal.len()];
    let mut residual: f64 = 0.0;
    for t in (0..end).rev() {
        let next = &y[t + 1];
        let rows = map_indices(1 << t, |i| -> Result<(f64, f64, f64)> {
            let (mean, zi) = mean_and_z(lattice, next, t, i);
            let at = lattice_ctx(lattice, t, i);
            let yi = implicit_y(driver, &at, mean, zi, dt)?;
            let defect = (yi - mean - dt * driver.eval(&at, yi, zi)).abs() / (1.0 + yi.abs());
            Ok((yi, zi, defect))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        y[t] = rows.iter().map(|r| r.0).collect();
        z[t] = rows.iter().map(|r| r.1).collect();
        residual = rows.iter().fold(residual, |m, r| m.max(r.2));
    }
    Ok(BsdeSolution {
        y: NodeProcess::from_slices(y, 2, ProcessKind::Adapted)?,
        z: NodeProcess::from_slices(z, 2, ProcessKind::PredictableIncrement)?,
        residual,
    })
}

pub fn solve_bsde(driver: &(impl Driver + ?Sized), claim: &TerminalClaim, lattice: &PathLattice) -> Result<BsdeSolution> {
    solve_bsde_with(driver, claim, lattice, SolveOptions::default())
}

pub fn solve_bsde_with(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    lattice: &PathLattice,
    options: SolveOptions,
) -> Result<BsdeSolution> {
    let n = lattice.steps();
    if !options.monotone_reduction {
        return solve_bsde_window(driver, claim.values(), lattice, n);
    }
    let reduced = MonotoneReduction::new(driver, lattice.grid().dt());
    let cn = reduced.factor(n);
    let terminal: Vec<f64> = claim.values().iter().map(|x| cn * x).collect();
    let sol = solve_bsde_window(&reduced, &terminal, lattice, n)?;
    let mut y = sol.y;
    let mut z = sol.z;
    for t in 0..=n {
        let (c, c_next) = (reduced.factor(t), reduced.factor(t + 1));
        y.slice_mut(t).iter_mut().for_each(|v| *v /= c);
        if t < n {
            z.slice_mut(t).iter_mut().for_each(|v| *v /= c_next);
        }
    }
    let residual = equation_residual(driver, &y, &z, lattice);
    Ok(BsdeSolution { y, z, residual })
}

/// Largest scaled one-step defect of `(y, z)` for generator `driver`.
pub fn equation_residual(driver: &(impl Driver + ?Sized), y: &NodeProcess, z: &NodeProcess, lattice: &PathLattice) -> f64 {
    let dt = lattice.grid().dt();
    let mut worst: f64 = 0.0;
    for t in 0..y.steps() {
        for i in 0..1 << t {
            let (mean, _) = mean_and_z(lattice, y.slice(t + 1), t, i);
            let at = lattice_ctx(lattice, t, i);
            let (yi, zi) = (y.get(t, i), z.get(t, i));
            worst = worst.max((yi - mean - dt * driver.eval(&at, yi, zi)).abs() / (1.0 + yi.abs()));
        }
    }
    worst
}

/// Leaf-indexed `sum_t g(f^0_t) dt` along each path.
pub fn frozen_integral(
    driver: &(impl Driver + ?Sized),
    lattice: &PathLattice,
    g: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let dt = lattice.grid().dt();
    let mut acc = vec![0.0];
    for t in 0..lattice.steps() {
        let inc: Vec<f64> = (0..1 << t).map(|i| g(driver.frozen(&lattice_ctx(lattice, t, i))) * dt).collect();
        acc = (0..2 << t).map(|i| acc[i / 2] + inc[i / 2]).collect();
    }
    acc
}

/// `E[|xi| 1{|xi| >= n} + sum_t |f0_t| 1{|f0_t| >= n} dt]`.
pub fn truncation_tail_bound(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    lattice: &PathLattice,
    bound: f64,
    level: f64,
) -> Result<f64> {
    let tail = |x: f64| if x.abs() >= level { x.abs() } else { 0.0 };
    let f0 = frozen_integral(driver, lattice, tail);
    let leaves: Vec<f64> = claim.values().iter().zip(&f0).map(|(&x, &f)| tail(x) + f).collect();
    Ok(sup_expectation(&leaves, bound, lattice)?.value)
}

fn within(measured: f64, bound: f64) -> bool {
    measured <= bound + BOUND * (1.0 + bound.abs())
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub levels: Vec<f64>,
    /// `||Y - Y^n||_D` per level.
    pub distances: Vec<f64>,
    /// `||Y - Y^n||_{S^beta}` per level.
    pub s_beta_distances: Vec<f64>,
    /// `(n_k, n_{k+1}, ||Y^{n_{k+1}} - Y^{n_k}||_D)` for consecutive levels.
    pub pair_distances: Vec<(f64, f64, f64)>,
    /// Tail bound per level.
    pub bounds: Vec<f64>,
    pub beta: f64,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// Truncation scheme: solve with `(q_n(xi), f - f^0 + q_n(f^0))` per level
/// and compare with the untruncated solution and with the tail bounds.
pub fn truncation_scheme(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    lattice: &PathLattice,
    levels: &[f64],
) -> Result<ConvergenceReport> {
    crate::nonlinexp::check_levels(levels)?;
    let bound = driver.lipschitz_z();
    let full = solve_bsde(driver, claim, lattice)?;
    let mut truncated = Vec::with_capacity(levels.len());
    for &n in levels {
        let d = TruncatedDriver { inner: driver, level: n };
        truncated.push(solve_bsde(&d, &claim.truncated(n), lattice)?);
    }
    let mut distances = Vec::new();
    let mut s_beta_distances = Vec::new();
    let mut bounds = Vec::new();
    for (sol, &n) in truncated.iter().zip(levels) {
        let diff = full.y.zip_with(&sol.y, |a, b| a - b)?;
        distances.push(d_norm(&diff, bound, lattice)?);
        s_beta_distances.push(s_beta_norm(&diff, DEFAULT_BETA, bound, lattice)?);
        bounds.push(truncation_tail_bound(driver, claim, lattice, bound, n)?);
    }
    let mut pair_distances = Vec::new();
    for k in 0..truncated.len().saturating_sub(1) {
        let diff = truncated[k + 1].y.zip_with(&truncated[k].y, |a, b| a - b)?;
        pair_distances.push((levels[k], levels[k + 1], d_norm(&diff, bound, lattice)?));
    }
    let ok = if driver.nonincreasing_in_y() {
        let limit_ok = distances.iter().zip(&bounds).all(|(&d, &b)| within(d, b));
        let pairs_ok = pair_distances.iter().zip(&bounds).all(|(&(_, _, d), &b)| within(d, b));
        Verdict::from_bool(limit_ok && pairs_ok)
    } else {
        Verdict::Inapplicable
    };
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        distances,
        s_beta_distances,
        pair_distances,
        bounds,
        beta: DEFAULT_BETA,
        verdict: ok,
    })
}

/// Node-wise ordering report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub verdict: Verdict,
    /// `max (Y1 - Y2)` over nodes; nonpositive when the ordering holds.
    pub max_violation: f64,
    /// `max (Y1 - Y2) / (1 + |Y2|)`, the quantity held to `EXACT`.
    pub scaled_violation: f64,
}

impl ComparisonReport {
    pub(crate) fn inapplicable() -> Self {
        ComparisonReport { verdict: Verdict::Inapplicable, max_violation: 0.0, scaled_violation: 0.0 }
    }

    pub(crate) fn from_ordering(a: &NodeProcess, b: &NodeProcess) -> Self {
        let (max_violation, scaled_violation) = ordering_violation(a, b);
        ComparisonReport { verdict: Verdict::from_bool(scaled_violation <= EXACT), max_violation, scaled_violation }
    }
}

/// Probe grid for generator ordering checks.
pub(crate) const PROBE_GRID: [f64; 7] = [-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0];

fn drivers_ordered_at(
    lo: &(impl Driver + ?Sized),
    hi: &(impl Driver + ?Sized),
    at: &NodeCtx,
    extra: (f64, f64),
) -> bool {
    let ok = |y: f64, z: f64| lo.eval(at, y, z) <= hi.eval(at, y, z) + EXACT * (1.0 + hi.eval(at, y, z).abs());
    ok(extra.0, extra.1) && PROBE_GRID.iter().all(|&y| PROBE_GRID.iter().all(|&z| ok(y, z)))
}

/// Ordering propagates backwards only when the `z`-coefficient is a
/// feasible tilt, `L_z sqrt(dt) < 1`.
pub(crate) fn comparison_feasible(lipschitz_z: f64, sqrt_dt: f64) -> bool {
    lipschitz_z * sqrt_dt < 1.0
}

/// `max (a - b)` and `max (a - b) / (1 + |b|)` over nodes.
pub(crate) fn ordering_violation(a: &NodeProcess, b: &NodeProcess) -> (f64, f64) {
    let mut worst = f64::NEG_INFINITY;
    let mut scaled = f64::NEG_INFINITY;
    for (sa, sb) in a.slices().iter().zip(b.slices()) {
        for (&x, &y) in sa.iter().zip(sb) {
            worst = worst.max(x - y);
            scaled = scaled.max((x - y) / (1.0 + y.abs()));
        }
    }
    (worst, scaled)
}

/// If `xi1 <= xi2` and `f1 <= f2` (on probes and at the first solution) then
/// `Y1 <= Y2` at every node.
pub fn comparison_check(
    driver1: &(impl Driver + ?Sized),
    claim1: &TerminalClaim,
    driver2: &(impl Driver + ?Sized),
    claim2: &TerminalClaim,
    lattice: &PathLattice,
) -> Result<ComparisonReport> {
    let s1 = solve_bsde(driver1, claim1, lattice)?;
    if !comparison_feasible(driver1.lipschitz_z().max(driver2.lipschitz_z()), lattice.grid().sqrt_dt()) {
        return Ok(ComparisonReport::inapplicable());
    }
    let claims_ordered = claim1.values().iter().zip(claim2.values()).all(|(a, b)| a <= b);
    let drivers_ordered = (0..lattice.steps()).all(|t| {
        (0..1 << t).all(|i| {
            drivers_ordered_at(driver1, driver2, &lattice_ctx(lattice, t, i), (s1.y.get(t, i), s1.z.get(t, i)))
        })
    });
    if !(claims_ordered && drivers_ordered) {
        return Ok(ComparisonReport::inapplicable());
    }
    let s2 = solve_bsde(driver2, claim2, lattice)?;
    Ok(ComparisonReport::from_ordering(&s1.y, &s2.y))
}

/// Implementation constant reported for the `S^beta`/`H^beta` estimates.
pub fn estimate_constant(beta: f64, lipschitz: f64, horizon: f64) -> f64 {
    (3.0 * lipschitz * lipschitz * horizon).exp() / (1.0 - beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Verdict on the parameter-free `D`-norm bound.
    pub verdict: Verdict,
    pub d_norm: f64,
    pub d_bound: f64,
    /// `||dY||_{S^beta} + ||dZ||_{H^beta}`.
    pub sh_norm: f64,
    /// `E[|d xi|]^beta + E[int |df(Y, Z)|]^beta`.
    pub sh_data: f64,
    /// `sh_norm / sh_data` (0 when both vanish).
    pub ratio: f64,
    pub constant: f64,
}

/// A generator together with its terminal claim.
pub struct Problem<'a, D: Driver + ?Sized> {
    pub driver: &'a D,
    pub claim: &'a TerminalClaim,
}

impl<D: Driver + ?Sized> Clone for Problem<'_, D> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<D: Driver + ?Sized> Copy for Problem<'_, D> {}

/// Leaf-indexed `sum_t |f2 - f1|(Y, Z) dt` along each path.
pub(crate) fn driver_gap_integral(
    d1: &(impl Driver + ?Sized),
    d2: &(impl Driver + ?Sized),
    y: &NodeProcess,
    z: &NodeProcess,
    lattice: &PathLattice,
) -> Vec<f64> {
    let dt = lattice.grid().dt();
    let mut acc = vec![0.0];
    for t in 0..lattice.steps() {
        let inc: Vec<f64> = (0..1 << t)
            .map(|i| {
                let at = lattice_ctx(lattice, t, i);
                let (yi, zi) = (y.get(t, i), z.get(t, i));
                (d2.eval(&at, yi, zi) - d1.eval(&at, yi, zi)).abs() * dt
            })
            .collect();
        acc = (0..2 << t).map(|i| acc[i / 2] + inc[i / 2]).collect();
    }
    acc
}

/// Stability of the solution map between `(f, xi)` and `(f', xi')`.
pub fn stability_check(
    first: Problem<'_, impl Driver + ?Sized>,
    second: Problem<'_, impl Driver + ?Sized>,
    beta: f64,
    lattice: &PathLattice,
) -> Result<StabilityReport> {
    check_beta(beta)?;
    let bound = first.driver.lipschitz_z().max(second.driver.lipschitz_z());
    let s1 = solve_bsde(first.driver, first.claim, lattice)?;
    let s2 = solve_bsde(second.driver, second.claim, lattice)?;
    let dy = s2.y.zip_with(&s1.y, |a, b| a - b)?;
    let dz = s2.z.zip_with(&s1.z, |a, b| a - b)?;
    let dxi: Vec<f64> = first.claim.values().iter().zip(second.claim.values()).map(|(a, b)| (b - a).abs()).collect();
    let gap = driver_gap_integral(first.driver, second.driver, &s1.y, &s1.z, lattice);
    let total: Vec<f64> = dxi.iter().zip(&gap).map(|(a, b)| a + b).collect();
    let d_norm_v = d_norm(&dy, bound, lattice)?;
    let d_bound = sup_expectation(&total, bound, lattice)?.value;
    let sh_norm = s_beta_norm(&dy, beta, bound, lattice)? + h_beta_norm(&dz, beta, bound, lattice)?;
    let sh_data = sup_expectation(&dxi, bound, lattice)?.value.powf(beta)
        + sup_expectation(&gap, bound, lattice)?.value.powf(beta);
    let lipschitz = bound.max(first.driver.lipschitz_y()).max(second.driver.lipschitz_y());
    let verdict = if second.driver.nonincreasing_in_y() {
        Verdict::from_bool(within(d_norm_v, d_bound))
    } else {
        Verdict::Inapplicable
    };
    Ok(StabilityReport {
        verdict,
        d_norm: d_norm_v,
        d_bound,
        sh_norm,
        sh_data,
        ratio: if sh_data > 0.0 { sh_norm / sh_data } else { 0.0 },
        constant: estimate_constant(beta, lipschitz, lattice.grid().horizon()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriReport {
    /// Verdict on `||Y||_D <= E[|xi| + int |f^0|]`.
    pub verdict: Verdict,
    pub d_norm: f64,
    pub d_bound: f64,
    /// `||Y||_{S^beta} + ||Z||_{H^beta}`.
    pub sh_norm: f64,
    /// `E[|xi|]^beta + E[int |f^0|]^beta`.
    pub sh_data: f64,
    pub ratio: f64,
    pub constant: f64,
}

pub fn apriori_estimate_check(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    solution: &BsdeSolution,
    beta: f64,
    lattice: &PathLattice,
) -> Result<AprioriReport> {
    check_beta(beta)?;
    let bound = driver.lipschitz_z();
    let abs_xi: Vec<f64> = claim.values().iter().map(|x| x.abs()).collect();
    let f0 = frozen_integral(driver, lattice, f64::abs);
    let total: Vec<f64> = abs_xi.iter().zip(&f0).map(|(a, b)| a + b).collect();
    let d_norm_v = d_norm(&solution.y, bound, lattice)?;
    let d_bound = sup_expectation(&total, bound, lattice)?.value;
    let sh_norm = s_beta_norm(&solution.y, beta, bound, lattice)? + h_beta_norm(&solution.z, beta, bound, lattice)?;
    let sh_data = sup_expectation(&abs_xi, bound, lattice)?.value.powf(beta)
        + sup_expectation(&f0, bound, lattice)?.value.powf(beta);
    let verdict = if driver.nonincreasing_in_y() {
        Verdict::from_bool(within(d_norm_v, d_bound))
    } else {
        Verdict::Inapplicable
    };
    Ok(AprioriReport {
        verdict,
        d_norm: d_norm_v,
        d_bound,
        sh_norm,
        sh_data,
        ratio: if sh_data > 0.0 { sh_norm / sh_data } else { 0.0 },
        constant: estimate_constant(beta, bound.max(driver.lipschitz_y()), lattice.grid().horizon()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TowerReport {
    pub verdict: Verdict,
    pub max_diff: f64,
}

/// Solving on `[k, N]` and then on `[0, k]` with `Y_k` as terminal data
/// reproduces the one-shot solution on `[0, k]`.
pub fn tower_property_check(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    lattice: &PathLattice,
    k: usize,
) -> Result<TowerReport> {
    if k > lattice.steps() {
        return Err(LabError::InvalidParameter(format!("tower step {k} beyond horizon {}", lattice.steps())));
    }
    let full = solve_bsde(driver, claim, lattice)?;
    let staged = solve_bsde_window(driver, full.y.slice(k), lattice, k)?;
    let mut max_diff: f64 = 0.0;
    for t in 0..=k {
        for (a, b) in staged.y.slice(t).iter().zip(full.y.slice(t)) {
            max_diff = max_diff.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    Ok(TowerReport { verdict: Verdict::from_bool(max_diff <= EXACT), max_diff })
}
