//! The discrete canonical space: a full binary tree of Brownian increments
//! carrying the canonical process `B` with `dB = sigma * dW`, plus drift
//! controls and the tilted measures they induce.

use crate::error::{LabError, Result};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::{depth_cap_or, DEFAULT_DEPTH_CAP, SIGMA_FLOOR};

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::InvalidGrid { steps, horizon });
        }
        Ok(Self { horizon, steps, dt: horizon / steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt.sqrt()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Location of a node: time index and path index within that slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub step: usize,
    pub index: usize,
}

impl NodeRef {
    pub fn root() -> Self {
        Self { step: 0, index: 0 }
    }

    pub fn up(self) -> Self {
        Self { step: self.step + 1, index: 2 * self.index }
    }

    pub fn down(self) -> Self {
        Self { step: self.step + 1, index: 2 * self.index + 1 }
    }

    /// Ancestor at `step`, which must not exceed `self.step`.
    pub fn ancestor(self, step: usize) -> Self {
        Self { step, index: self.index >> (self.step - step) }
    }
}

/// How volatility is assigned while the tree is grown.
pub enum RegimeSpec<'a> {
    Constant(f64),
    /// `sigma(node, b, w)` evaluated on every node, root first.
    NodeFn(&'a (dyn Fn(NodeRef, f64, f64) -> f64 + Sync)),
    /// A finite level set and an adapted choice of level per node.
    Control {
        levels: Vec<f64>,
        choice: &'a (dyn Fn(NodeRef, f64, f64) -> usize + Sync),
    },
}

/// Node-wise volatility `sigma_hat` of the canonical process.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityRegime {
    pub values: NodeProcess,
    pub label: String,
}

/// Full binary tree on a time grid, with `W` and `B` at every node.
#[derive(Debug, Clone)]
pub struct PathLattice {
    grid: TimeGrid,
    regime: VolatilityRegime,
    b: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

/// Builds the lattice with the default depth cap (overridable through the
/// environment).
pub fn build_lattice(grid: TimeGrid, spec: &RegimeSpec<'_>) -> Result<PathLattice> {
    build_lattice_with_cap(grid, spec, depth_cap_or(DEFAULT_DEPTH_CAP))
}

pub fn build_lattice_with_cap(
    grid: TimeGrid,
    spec: &RegimeSpec<'_>,
    cap: usize,
) -> Result<PathLattice> {
    let n = grid.steps();
    if n > cap {
        return Err(LabError::DepthCapExceeded { steps: n, cap });
    }
    let sq = grid.sqrt_dt();
    let sigma_at = |node: NodeRef, b: f64, w: f64| -> Result<f64> {
        let s = match spec {
            RegimeSpec::Constant(s) => *s,
            RegimeSpec::NodeFn(f) => f(node, b, w),
            RegimeSpec::Control { levels, choice } => {
                let k = choice(node, b, w);
                *levels.get(k).ok_or_else(|| {
                    LabError::InvalidParameter(format!("regime choice {k} out of range"))
                })?
            }
        };
        if !(s.is_finite() && s >= SIGMA_FLOOR) {
            return Err(LabError::NonPositiveVolatility { value: s, step: node.step, floor: SIGMA_FLOOR });
        }
        Ok(s)
    };

    let mut b = vec![vec![0.0]];
    let mut w = vec![vec![0.0]];
    let mut sigma = vec![vec![sigma_at(NodeRef::root(), 0.0, 0.0)?]];
    for t in 0..n {
        let (bp, wp, sp) = (&b[t], &w[t], &sigma[t]);
        let len = 2 * bp.len();
        let bn: Vec<f64> = map_indices(len, |i| {
            let step = sp[i / 2] * sq;
            if i % 2 == 0 { bp[i / 2] + step } else { bp[i / 2] - step }
        });
        let wn: Vec<f64> =
            map_indices(len, |i| if i % 2 == 0 { wp[i / 2] + sq } else { wp[i / 2] - sq });
        let sn = map_indices(len, |i| sigma_at(NodeRef { step: t + 1, index: i }, bn[i], wn[i]))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        b.push(bn);
        w.push(wn);
        sigma.push(sn);
    }
    let label = match spec {
        RegimeSpec::Constant(s) => format!("constant({s})"),
        RegimeSpec::NodeFn(_) => "node-fn".to_string(),
        RegimeSpec::Control { levels, .. } => format!("control{levels:?}"),
    };
    let values = NodeProcess::from_slices(sigma, 2, ProcessKind::Adapted)?;
    Ok(PathLattice { grid, regime: VolatilityRegime { values, label }, b, w })
}

impl PathLattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn regime(&self) -> &VolatilityRegime {
        &self.regime
    }

    pub fn sigma(&self, node: NodeRef) -> f64 {
        self.regime.values.get(node.step, node.index)
    }

    pub fn b_value(&self, node: NodeRef) -> f64 {
        self.b[node.step][node.index]
    }

    pub fn w_value(&self, node: NodeRef) -> f64 {
        self.w[node.step][node.index]
    }

    pub fn b_slice(&self, step: usize) -> &[f64] {
        &self.b[step]
    }

    pub fn w_slice(&self, step: usize) -> &[f64] {
        &self.w[step]
    }

    pub fn slice_len(&self, step: usize) -> usize {
        1 << step
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.steps()
    }

    pub fn node_count(&self) -> usize {
        (1 << (self.steps() + 1)) - 1
    }

    /// Increment of `W` from `node` to its child (`up` = +sqrt(dt)).
    pub fn increment(&self, up: bool) -> f64 {
        if up { self.grid.sqrt_dt() } else { -self.grid.sqrt_dt() }
    }

    /// `B` values along the path from the root to `node`.
    pub fn b_path(&self, node: NodeRef) -> Vec<f64> {
        (0..=node.step).map(|t| self.b_value(node.ancestor(t))).collect()
    }

    pub fn w_path(&self, node: NodeRef) -> Vec<f64> {
        (0..=node.step).map(|t| self.w_value(node.ancestor(t))).collect()
    }

    /// A zero process of the given kind shaped like this lattice.
    pub fn zero_process(&self, kind: ProcessKind) -> NodeProcess {
        NodeProcess::zeros(self.steps(), 2, kind)
    }

    pub fn check_process(&self, p: &NodeProcess) -> Result<()> {
        if p.branching() != 2 || p.steps() != self.steps() {
            return Err(LabError::ShapeMismatch(format!(
                "process of depth {} (branching {}) on lattice of depth {}",
                p.steps(),
                p.branching(),
                self.steps()
            )));
        }
        Ok(())
    }
}

/// Per-node drift `lambda` with `|lambda| <= L`, defined on non-terminal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftControl {
    lambda: Vec<Vec<f64>>,
    bound: f64,
}

impl DriftControl {
    pub fn new(lambda: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(LabError::InvalidParameter(format!("drift bound {bound}")));
        }
        for (t, s) in lambda.iter().enumerate() {
            if s.len() != 1 << t {
                return Err(LabError::ShapeMismatch(format!("drift slice {t} has {} entries", s.len())));
            }
            if let Some(&bad) = s.iter().find(|l| !(l.abs() <= bound)) {
                return Err(LabError::InvalidParameter(format!("drift {bad} exceeds bound {bound}")));
            }
        }
        Ok(Self { lambda, bound })
    }

    pub fn constant(steps: usize, value: f64, bound: f64) -> Result<Self> {
        Self::new((0..steps).map(|t| vec![value; 1 << t]).collect(), bound)
    }

    pub fn from_fn(steps: usize, bound: f64, mut f: impl FnMut(NodeRef) -> f64) -> Result<Self> {
        let lambda = (0..steps)
            .map(|t| (0..1 << t).map(|i| f(NodeRef { step: t, index: i })).collect())
            .collect();
        Self::new(lambda, bound)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn steps(&self) -> usize {
        self.lambda.len()
    }

    pub fn at(&self, node: NodeRef) -> f64 {
        self.lambda[node.step][node.index]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    /// `self` before step `k`, `other` from step `k` on.
    pub fn paste(&self, other: &DriftControl, k: usize) -> Result<DriftControl> {
        if self.steps() != other.steps() {
            return Err(LabError::ShapeMismatch("pasting controls of different depth".into()));
        }
        let lambda = self
            .lambda
            .iter()
            .zip(&other.lambda)
            .enumerate()
            .map(|(t, (a, b))| if t < k { a.clone() } else { b.clone() })
            .collect();
        DriftControl::new(lambda, self.bound.max(other.bound))
    }
}

/// Probability measure on the leaves induced by a drift control.
#[derive(Debug, Clone)]
pub struct TiltedMeasure {
    control: DriftControl,
    up_prob: Vec<Vec<f64>>,
}

/// Up-probability of a single tilted step.
pub fn tilted_up_probability(lambda: f64, sqrt_dt: f64) -> Result<f64> {
    if !(lambda.abs() * sqrt_dt < 1.0) {
        return Err(LabError::InfeasibleTilt { lambda, sqrt_dt });
    }
    Ok(0.5 * (1.0 + lambda * sqrt_dt))
}

pub fn tilt(lattice: &PathLattice, control: &DriftControl) -> Result<TiltedMeasure> {
    if control.steps() != lattice.steps() {
        return Err(LabError::ShapeMismatch(format!(
            "control of depth {} on lattice of depth {}",
            control.steps(),
            lattice.steps()
        )));
    }
    let sq = lattice.grid().sqrt_dt();
    let up_prob = control
        .lambda
        .iter()
        .map(|s| s.iter().map(|&l| tilted_up_probability(l, sq)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(TiltedMeasure { control: control.clone(), up_prob })
}

impl TiltedMeasure {
    pub fn control(&self) -> &DriftControl {
        &self.control
    }

    pub fn steps(&self) -> usize {
        self.up_prob.len()
    }

    pub fn up_probability(&self, node: NodeRef) -> f64 {
        self.up_prob[node.step][node.index]
    }

    /// Probability of the path from the root to `node`.
    pub fn path_probability(&self, node: NodeRef) -> f64 {
        (0..node.step).fold(1.0, |acc, t| {
            let p = self.up_prob[t][node.ancestor(t).index];
            let went_up = node.ancestor(t + 1).index.is_multiple_of(2);
            acc * if went_up { p } else { 1.0 - p }
        })
    }

    /// Density against the uniform measure: product of `2 p` along the path.
    pub fn density(&self, leaf: usize) -> f64 {
        let n = self.steps();
        let node = NodeRef { step: n, index: leaf };
        (0..n).fold(1.0, |acc, t| {
            let p = self.up_prob[t][node.ancestor(t).index];
            let went_up = node.ancestor(t + 1).index.is_multiple_of(2);
            acc * 2.0 * if went_up { p } else { 1.0 - p }
        })
    }

    pub fn leaf_densities(&self) -> Vec<f64> {
        (0..1usize << self.steps()).map(|i| self.density(i)).collect()
    }

    /// Conditional expectation process of a terminal variable.
    pub fn conditional(&self, terminal: &[f64]) -> NodeProcess {
        let n = self.steps();
        let mut slices = vec![Vec::new(); n + 1];
        slices[n] = terminal.to_vec();
        for t in (0..n).rev() {
            let next = &slices[t + 1];
            let p = &self.up_prob[t];
            slices[t] = (0..1 << t).map(|i| p[i] * next[2 * i] + (1.0 - p[i]) * next[2 * i + 1]).collect();
        }
        NodeProcess::from_slices(slices, 2, ProcessKind::Adapted).expect("shape")
    }

    /// Expectation of a leaf-indexed variable.
    pub fn expectation(&self, terminal: &[f64]) -> f64 {
        self.conditional(terminal).get(0, 0)
    }
}
