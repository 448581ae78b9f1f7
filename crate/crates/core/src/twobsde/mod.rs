//! Second-order BSDE over a finite set of volatility levels.
//!
//! The state space is the joint tree of (regime choice, increment sign):
//! from a node, regime `r` leads to children `i * 2|U| + 2r` (up) and
//! `i * 2|U| + 2r + 1` (down), with `B` moving by `+-sigma_r sqrt(dt)`.
//! A regime control picks `r` at every node; it induces one measure of the
//! family, and the family is closed under pasting by construction.
//!
//! The value `V` is the node-wise maximum over regimes of the one-step
//! BSDE operator. For each control `P` the push `K^P` is what makes `V` a
//! supersolution of the BSDE driven by `P`'s volatility.

mod checks;
mod enumerate;

pub use checks::{
    check_minimality, comparison_2bsde, dpp_check, regime_monotonicity_check, representation_and_minimality,
    representation_check,
    supersolution_check, v_integrability_check, DppReport, MinimalityCertificate, RegimeMonotonicityReport,
    RepresentationReport, SupersolutionReport,
};
pub use enumerate::{brute_force_2bsde, enumeration_size, ENUMERATION_CAP};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bsde::{check_contraction, implicit_y};
use crate::claim::{ClaimSpec, TerminalClaim};
use crate::driver::{Driver, NodeCtx};
use crate::error::{LabError, Result};
use crate::lattice::{tilted_up_probability, TimeGrid};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::{depth_cap_or, DEFAULT_DEPTH_CAP, EXACT, SIGMA_FLOOR};

/// Largest number of leaves the joint tree may hold.
pub const JOINT_LEAF_BUDGET: usize = 1 << 24;

/// Finite set of volatility levels.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    levels: Vec<f64>,
}

impl UncertaintySet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(LabError::InvalidParameter("empty volatility set".into()));
        }
        for (step, &value) in levels.iter().enumerate() {
            if !(value.is_finite() && value >= SIGMA_FLOOR) {
                return Err(LabError::NonPositiveVolatility { value, step, floor: SIGMA_FLOOR });
            }
        }
        for i in 0..levels.len() {
            if levels[..i].contains(&levels[i]) {
                return Err(LabError::InvalidParameter(format!("repeated volatility level {}", levels[i])));
            }
        }
        Ok(UncertaintySet { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Every node may switch to any level, so pasting two controls at any
    /// node gives another admissible control.
    pub fn pasting_closed(&self) -> bool {
        true
    }

    pub fn is_subset_of(&self, other: &UncertaintySet) -> bool {
        self.levels.iter().all(|l| other.levels.contains(l))
    }

    /// Depth cap for this number of levels.
    pub fn depth_cap(&self) -> usize {
        match self.levels.len() {
            1 => depth_cap_or(DEFAULT_DEPTH_CAP),
            2 => depth_cap_or(14),
            3 => depth_cap_or(9),
            k => depth_cap_or((24.0 / ((2 * k) as f64).log2()).floor() as usize),
        }
    }
}

/// Explicit joint tree of increments and regime choices.
#[derive(Debug, Clone)]
pub struct RegimeTree {
    grid: TimeGrid,
    set: UncertaintySet,
    b: Vec<Vec<f64>>,
}

impl RegimeTree {
    pub fn new(grid: TimeGrid, set: UncertaintySet) -> Result<Self> {
        let n = grid.steps();
        let cap = set.depth_cap();
        if n > cap {
            return Err(LabError::DepthCapExceeded { steps: n, cap });
        }
        let width = 2 * set.len();
        let leaves = (width as f64).powi(n as i32);
        if leaves > JOINT_LEAF_BUDGET as f64 {
            return Err(LabError::InstanceTooLarge { size: leaves as usize, cap: JOINT_LEAF_BUDGET });
        }
        let sq = grid.sqrt_dt();
        let mut b = vec![vec![0.0]];
        for t in 0..n {
            let prev = &b[t];
            let levels = set.levels();
            let next = map_indices(prev.len() * width, |c| {
                let r = (c % width) / 2;
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                prev[c / width] + sign * levels[r] * sq
            });
            b.push(next);
        }
        Ok(RegimeTree { grid, set, b })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn uncertainty(&self) -> &UncertaintySet {
        &self.set
    }

    pub fn regimes(&self) -> usize {
        self.set.len()
    }

    /// Children per node, `2 |U|`.
    pub fn width(&self) -> usize {
        2 * self.set.len()
    }

    pub fn slice_len(&self, step: usize) -> usize {
        self.b[step].len()
    }

    pub fn leaf_count(&self) -> usize {
        self.b[self.steps()].len()
    }

    pub fn b_value(&self, step: usize, index: usize) -> f64 {
        self.b[step][index]
    }

    pub fn b_slice(&self, step: usize) -> &[f64] {
        &self.b[step]
    }

    /// `(up, down)` children of `index` under regime `r`.
    #[inline]
    pub fn children(&self, index: usize, r: usize) -> (usize, usize) {
        let c = index * self.width() + 2 * r;
        (c, c + 1)
    }

    pub fn ctx(&self, step: usize, index: usize, r: usize) -> NodeCtx {
        NodeCtx { step, index, time: self.grid.time(step), b: self.b[step][index], sigma: self.set.levels()[r] }
    }

    /// Ancestor indices from the root down to `(step, index)`.
    pub fn path_indices(&self, step: usize, index: usize) -> Vec<usize> {
        let mut out = vec![0; step + 1];
        let mut i = index;
        for t in (0..=step).rev() {
            out[t] = i;
            i /= self.width();
        }
        out
    }

    pub fn b_path(&self, step: usize, index: usize) -> Vec<f64> {
        self.path_indices(step, index).iter().enumerate().map(|(t, &i)| self.b[t][i]).collect()
    }

    /// Driving Brownian path: unit-volatility increments with the same signs.
    pub fn w_path(&self, step: usize, index: usize) -> Vec<f64> {
        let idx = self.path_indices(step, index);
        let sq = self.grid.sqrt_dt();
        let mut w = vec![0.0; step + 1];
        for t in 1..=step {
            w[t] = w[t - 1] + if idx[t].is_multiple_of(2) { sq } else { -sq };
        }
        w
    }

    pub fn claim(&self, spec: &ClaimSpec) -> Result<TerminalClaim> {
        let n = self.steps();
        let paths = (0..self.leaf_count()).map(|i| (self.b_path(n, i), self.w_path(n, i)));
        TerminalClaim::new(spec.eval_slice(paths)?)
    }

    /// Index of the same history in a tree over a larger level set.
    pub fn embed_index(&self, step: usize, index: usize, into: &RegimeTree) -> Result<usize> {
        let map: Vec<usize> = self
            .set
            .levels()
            .iter()
            .map(|l| into.set.levels().iter().position(|m| m == l))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| LabError::InvalidParameter("level set is not a subset".into()))?;
        let idx = self.path_indices(step, index);
        let mut out = 0;
        for t in 1..=step {
            let digit = idx[t] % self.width();
            out = out * into.width() + 2 * map[digit / 2] + digit % 2;
        }
        Ok(out)
    }

    fn check_terminal(&self, claim: &TerminalClaim) -> Result<()> {
        if claim.len() != self.leaf_count() {
            return Err(LabError::ShapeMismatch(format!(
                "claim has {} values, joint tree has {} leaves",
                claim.len(),
                self.leaf_count()
            )));
        }
        Ok(())
    }
}

/// Regime choice at every non-terminal node of the joint tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeControl {
    choice: Vec<Vec<u8>>,
}

impl RegimeControl {
    pub fn constant(tree: &RegimeTree, r: usize) -> Result<Self> {
        Self::from_fn(tree, |_, _| r)
    }

    pub fn from_fn(tree: &RegimeTree, mut f: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let mut choice = Vec::with_capacity(tree.steps());
        for t in 0..tree.steps() {
            let mut row = Vec::with_capacity(tree.slice_len(t));
            for i in 0..tree.slice_len(t) {
                let r = f(t, i);
                if r >= tree.regimes() {
                    return Err(LabError::InvalidParameter(format!("regime {r} at ({t}, {i})")));
                }
                row.push(r as u8);
            }
            choice.push(row);
        }
        Ok(RegimeControl { choice })
    }

    /// Independent uniform choice at every node.
    pub fn random(tree: &RegimeTree, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = tree.regimes();
        Self::from_fn(tree, |_, _| rng.gen_range(0..k)).expect("choices in range")
    }

    pub fn steps(&self) -> usize {
        self.choice.len()
    }

    #[inline]
    pub fn at(&self, step: usize, index: usize) -> usize {
        self.choice[step][index] as usize
    }

    /// `self` before `step`, `other` from `step` on.
    pub fn paste(&self, other: &RegimeControl, step: usize) -> Result<RegimeControl> {
        if self.steps() != other.steps() || step > self.steps() {
            return Err(LabError::ShapeMismatch(format!("paste at {step}")));
        }
        let mut choice = self.choice[..step].to_vec();
        choice.extend_from_slice(&other.choice[step..]);
        Ok(RegimeControl { choice })
    }

    /// Whether the control is the same level everywhere.
    pub fn constant_level(&self) -> Option<usize> {
        let first = *self.choice.first()?.first()?;
        self.choice.iter().flatten().all(|&c| c == first).then_some(first as usize)
    }
}

#[derive(Debug, Clone)]
pub struct TwoBsdeSolution {
    /// Value process on the joint tree.
    pub v: NodeProcess,
    /// `Z` under the maximizing regime.
    pub z: NodeProcess,
    /// `Z_r` for every regime, flattened as `index * |U| + r`.
    pub z_by_regime: Vec<Vec<f64>>,
    /// Maximizing regime per node (lowest index on ties).
    pub control: RegimeControl,
    pub residual: f64,
}

impl TwoBsdeSolution {
    pub fn value(&self) -> f64 {
        self.v.get(0, 0)
    }

    #[inline]
    pub fn z_at(&self, step: usize, index: usize, r: usize, regimes: usize) -> f64 {
        self.z_by_regime[step][index * regimes + r]
    }
}

/// `(mean, z)` of `next` over the regime-`r` children of `index`.
#[inline]
pub(crate) fn regime_step(tree: &RegimeTree, next: &[f64], step: usize, index: usize, r: usize) -> (f64, f64) {
    let (u, d) = tree.children(index, r);
    let bs = tree.b_slice(step + 1);
    (0.5 * (next[u] + next[d]), (next[u] - next[d]) / (bs[u] - bs[d]))
}

/// Besides the contraction condition, the `z`-Lipschitz constant must give
/// a feasible tilt: otherwise the one-step operator is not monotone and the
/// node-wise maximum is not the value over controls.
fn validate(driver: &(impl Driver + ?Sized), tree: &RegimeTree, claim: &TerminalClaim) -> Result<()> {
    tree.check_terminal(claim)?;
    driver.validate(tree.steps(), tree.width())?;
    check_contraction(driver.lipschitz_y(), tree.grid().dt())?;
    tilted_up_probability(driver.lipschitz_z(), tree.grid().sqrt_dt()).map(|_| ())
}

pub fn solve_2bsde(driver: &(impl Driver + ?Sized), claim: &TerminalClaim, tree: &RegimeTree) -> Result<TwoBsdeSolution> {
    validate(driver, tree, claim)?;
    solve_window(driver, claim.values(), tree, tree.steps())
}

/// Dynamic programming on steps `0..=end` from terminal data at `end`.
pub(crate) fn solve_window(
    driver: &(impl Driver + ?Sized),
    terminal: &[f64],
    tree: &RegimeTree,
    end: usize,
) -> Result<TwoBsdeSolution> {
    let n = end;
    let k = tree.regimes();
    let dt = tree.grid().dt();
    let mut v = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n + 1];
    let mut zr = vec![Vec::new(); n + 1];
    let mut choice = vec![Vec::new(); tree.steps()];
    v[n] = terminal.to_vec();
    z[n] = vec![0.0; terminal.len()];
    zr[n] = vec![0.0; terminal.len() * k];
    let mut residual: f64 = 0.0;
    for t in (0..n).rev() {
        let next = &v[t + 1];
        let rows = map_indices(tree.slice_len(t), |i| -> Result<(f64, usize, Vec<f64>, f64)> {
            let mut best = (f64::NEG_INFINITY, 0);
            let mut zs = Vec::with_capacity(k);
            for r in 0..k {
                let (mean, zi) = regime_step(tree, next, t, i, r);
                let y = implicit_y(driver, &tree.ctx(t, i, r), mean, zi, dt)?;
                zs.push(zi);
                if y > best.0 {
                    best = (y, r);
                }
            }
            let (vi, r) = best;
            let (mean, zi) = regime_step(tree, next, t, i, r);
            let defect = (vi - mean - dt * driver.eval(&tree.ctx(t, i, r), vi, zi)).abs() / (1.0 + vi.abs());
            Ok((vi, r, zs, defect))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        v[t] = rows.iter().map(|r| r.0).collect();
        choice[t] = rows.iter().map(|r| r.1 as u8).collect();
        z[t] = rows.iter().map(|r| r.2[r.1]).collect();
        zr[t] = rows.iter().flat_map(|r| r.2.iter().copied()).collect();
        residual = rows.iter().fold(residual, |m, r| m.max(r.3));
    }
    for (t, row) in choice.iter_mut().enumerate().skip(n) {
        *row = vec![0; tree.slice_len(t)];
    }
    Ok(TwoBsdeSolution {
        v: NodeProcess::from_slices(v, tree.width(), ProcessKind::Adapted)?,
        z: NodeProcess::from_slices(z, tree.width(), ProcessKind::PredictableIncrement)?,
        z_by_regime: zr,
        control: RegimeControl { choice },
        residual,
    })
}

/// Plain BSDE under the volatility of control `P`, on every joint node.
#[derive(Debug, Clone)]
pub struct ControlledSolution {
    pub y: NodeProcess,
    pub z: NodeProcess,
}

pub fn solve_controlled(
    driver: &(impl Driver + ?Sized),
    claim: &TerminalClaim,
    tree: &RegimeTree,
    control: &RegimeControl,
) -> Result<ControlledSolution> {
    validate(driver, tree, claim)?;
    if control.steps() != tree.steps() {
        return Err(LabError::ShapeMismatch("control depth differs from tree".into()));
    }
    let n = tree.steps();
    let dt = tree.grid().dt();
    let mut y = vec![Vec::new(); n + 1];
    let mut z = vec![Vec::new(); n + 1];
    y[n] = claim.values().to_vec();
    z[n] = vec![0.0; y[n].len()];
    for t in (0..n).rev() {
        let next = &y[t + 1];
        let rows = map_indices(tree.slice_len(t), |i| -> Result<(f64, f64)> {
            let r = control.at(t, i);
            let (mean, zi) = regime_step(tree, next, t, i, r);
            Ok((implicit_y(driver, &tree.ctx(t, i, r), mean, zi, dt)?, zi))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        y[t] = rows.iter().map(|r| r.0).collect();
        z[t] = rows.iter().map(|r| r.1).collect();
    }
    Ok(ControlledSolution {
        y: NodeProcess::from_slices(y, tree.width(), ProcessKind::Adapted)?,
        z: NodeProcess::from_slices(z, tree.width(), ProcessKind::PredictableIncrement)?,
    })
}

/// Push `dK^P = V - E_r[V_next] - dt F(V, Z_r, sigma_r)` at every node, with
/// `r` the control's choice there.
pub fn push_increments(
    driver: &(impl Driver + ?Sized),
    solution: &TwoBsdeSolution,
    tree: &RegimeTree,
    control: &RegimeControl,
) -> NodeProcess {
    let n = tree.steps();
    let dt = tree.grid().dt();
    let mut dk = vec![Vec::new(); n + 1];
    for t in 0..n {
        let next = solution.v.slice(t + 1);
        let vt = solution.v.slice(t);
        dk[t] = map_indices(tree.slice_len(t), |i| {
            let r = control.at(t, i);
            let (mean, zi) = regime_step(tree, next, t, i, r);
            vt[i] - mean - dt * driver.eval(&tree.ctx(t, i, r), vt[i], zi)
        });
    }
    dk[n] = vec![0.0; tree.leaf_count()];
    NodeProcess::from_slices(dk, tree.width(), ProcessKind::PredictableIncrement).expect("tree shape")
}

/// Cumulative `K^P` from its increments, `K_0 = 0`.
pub fn cumulate(dk: &NodeProcess) -> NodeProcess {
    let w = dk.branching();
    let mut k = vec![vec![0.0]];
    for t in 0..dk.steps() {
        let prev = &k[t];
        let row: Vec<f64> = (0..prev.len() * w).map(|c| prev[c / w] + dk.get(t, c / w)).collect();
        k.push(row);
    }
    NodeProcess::from_slices(k, w, ProcessKind::Adapted).expect("tree shape")
}

/// Whether `V` is at least the controlled value at every node.
pub fn dominates_controlled(solution: &TwoBsdeSolution, controlled: &ControlledSolution) -> bool {
    solution
        .v
        .slices()
        .iter()
        .zip(controlled.y.slices())
        .all(|(a, b)| a.iter().zip(b).all(|(v, y)| *y <= v + EXACT * (1.0 + v.abs())))
}

#[cfg(test)]
mod tests;
