//! Exhaustive enumeration of regime controls on a subtree.
//!
//! Only nodes reachable under the control matter, so a control on a
//! subtree of depth `d` is a regime at its root plus one control on each of
//! the two children it selects: `c(d) = |U| c(d - 1)^2` controls.

use crate::bsde::implicit_y;
use crate::claim::TerminalClaim;
use crate::driver::{linearize, Driver};
use crate::error::{LabError, Result};

use super::{regime_step, RegimeTree, TwoBsdeSolution};

/// Largest number of controls enumerated below one node.
pub const ENUMERATION_CAP: usize = 1 << 16;

/// Number of controls on a subtree of the given depth (saturating).
pub fn enumeration_size(regimes: usize, depth: usize) -> usize {
    let mut c: usize = 1;
    for _ in 0..depth {
        c = regimes.saturating_mul(c.saturating_mul(c));
    }
    c
}

fn check_size(tree: &RegimeTree, step: usize) -> Result<()> {
    let size = enumeration_size(tree.regimes(), tree.steps() - step);
    if size > ENUMERATION_CAP {
        return Err(LabError::InstanceTooLarge { size, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// Largest controlled value at the root over every regime control.
pub fn brute_force_2bsde(driver: &(impl Driver + ?Sized), claim: &TerminalClaim, tree: &RegimeTree) -> Result<f64> {
    if claim.len() != tree.leaf_count() {
        return Err(LabError::ShapeMismatch("claim does not match joint tree".into()));
    }
    check_size(tree, 0)?;
    let values = controlled_values(driver, claim.values(), tree, 0, 0)?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

fn controlled_values(
    driver: &(impl Driver + ?Sized),
    terminal: &[f64],
    tree: &RegimeTree,
    step: usize,
    index: usize,
) -> Result<Vec<f64>> {
    if step == tree.steps() {
        return Ok(vec![terminal[index]]);
    }
    let dt = tree.grid().dt();
    let spread = 2.0 * tree.grid().sqrt_dt();
    let mut out = Vec::new();
    for r in 0..tree.regimes() {
        let (u, d) = tree.children(index, r);
        let ups = controlled_values(driver, terminal, tree, step + 1, u)?;
        let downs = controlled_values(driver, terminal, tree, step + 1, d)?;
        let at = tree.ctx(step, index, r);
        let db = spread * at.sigma;
        for &a in &ups {
            for &b in &downs {
                out.push(implicit_y(driver, &at, 0.5 * (a + b), (a - b) / db, dt)?);
            }
        }
    }
    Ok(out)
}

/// `(Y^P, E^{Q^P}[K^P_T - K^P_node])` at `(step, index)` for every control on
/// its subtree, with `K^P` and the tilt measured against the solution `V`.
pub(crate) fn controlled_pairs(
    driver: &(impl Driver + ?Sized),
    terminal: &[f64],
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    step: usize,
    index: usize,
) -> Result<Vec<(f64, f64)>> {
    check_size(tree, step)?;
    pairs(driver, terminal, solution, tree, step, index)
}

fn pairs(
    driver: &(impl Driver + ?Sized),
    terminal: &[f64],
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    step: usize,
    index: usize,
) -> Result<Vec<(f64, f64)>> {
    if step == tree.steps() {
        return Ok(vec![(terminal[index], 0.0)]);
    }
    let dt = tree.grid().dt();
    let sq = tree.grid().sqrt_dt();
    let k = tree.regimes();
    let v = solution.v.get(step, index);
    let mut out = Vec::new();
    for r in 0..k {
        let (u, d) = tree.children(index, r);
        let ups = pairs(driver, terminal, solution, tree, step + 1, u)?;
        let downs = pairs(driver, terminal, solution, tree, step + 1, d)?;
        let at = tree.ctx(step, index, r);
        let db = 2.0 * sq * at.sigma;
        let (mean, zv) = regime_step(tree, solution.v.slice(step + 1), step, index, r);
        let push = v - mean - dt * driver.eval(&at, v, zv);
        for &(ya, ka) in &ups {
            for &(yb, kb) in &downs {
                let z = (ya - yb) / db;
                let y = implicit_y(driver, &at, 0.5 * (ya + yb), z, dt)?;
                let lin = linearize(driver, &at, (v, zv), (y, z));
                let p = 0.5 * (1.0 + lin.b * sq);
                out.push((y, push + p * ka + (1.0 - p) * kb));
            }
        }
    }
    Ok(out)
}
