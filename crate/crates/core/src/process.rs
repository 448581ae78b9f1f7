use crate::error::{LabError, Result};

/// Whether a process is read at nodes (adapted) or on the step leaving a node
/// (predictable increment, e.g. `Z` and `dK`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Adapted,
    PredictableIncrement,
}

/// Real values attached to every node of a tree, stored slice by slice.
///
/// Slice `t` holds `branching^t` values. Predictable-increment processes keep
/// a terminal slice of zeros so that both kinds share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProcess {
    slices: Vec<Vec<f64>>,
    branching: usize,
    kind: ProcessKind,
}

impl NodeProcess {
    pub fn zeros(steps: usize, branching: usize, kind: ProcessKind) -> Self {
        let slices = (0..=steps).map(|t| vec![0.0; branching.pow(t as u32)]).collect();
        Self { slices, branching, kind }
    }

    pub fn from_slices(slices: Vec<Vec<f64>>, branching: usize, kind: ProcessKind) -> Result<Self> {
        if slices.is_empty() {
            return Err(LabError::ShapeMismatch("process needs at least one slice".into()));
        }
        for (t, s) in slices.iter().enumerate() {
            if s.len() != branching.pow(t as u32) {
                return Err(LabError::ShapeMismatch(format!(
                    "slice {t} has {} values, expected {}",
                    s.len(),
                    branching.pow(t as u32)
                )));
            }
        }
        Ok(Self { slices, branching, kind })
    }

    /// Builds a process by evaluating `f(step, index)` on every node.
    pub fn from_fn(
        steps: usize,
        branching: usize,
        kind: ProcessKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let slices = (0..=steps)
            .map(|t| (0..branching.pow(t as u32)).map(|i| f(t, i)).collect())
            .collect();
        Self { slices, branching, kind }
    }

    pub fn steps(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn get(&self, step: usize, index: usize) -> f64 {
        self.slices[step][index]
    }

    pub fn set(&mut self, step: usize, index: usize, value: f64) {
        self.slices[step][index] = value;
    }

    pub fn slice(&self, step: usize) -> &[f64] {
        &self.slices[step]
    }

    pub fn slice_mut(&mut self, step: usize) -> &mut Vec<f64> {
        &mut self.slices[step]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn terminal(&self) -> &[f64] {
        self.slices.last().expect("non-empty")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            slices: self.slices.iter().map(|s| s.iter().map(|&x| f(x)).collect()).collect(),
            branching: self.branching,
            kind: self.kind,
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let slices = self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Ok(Self { slices, branching: self.branching, kind: self.kind })
    }

    /// Largest `|value|` over all nodes.
    pub fn max_abs(&self) -> f64 {
        self.slices.iter().flatten().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Largest `|self - other|` over all nodes.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .slices
            .iter()
            .flatten()
            .zip(other.slices.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.branching != other.branching || self.slices.len() != other.slices.len() {
            return Err(LabError::ShapeMismatch(format!(
                "processes differ: {}x{} vs {}x{}",
                self.steps(),
                self.branching,
                other.steps(),
                other.branching
            )));
        }
        Ok(())
    }
}
