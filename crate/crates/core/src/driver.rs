//! Generators `f_t(y, z) = F_t(y, z, sigma_hat_t)` of the backward equations.

use crate::error::{LabError, Result};
use crate::tolerance::QUOTIENT_GUARD;

/// Where a generator is evaluated: node position, canonical value `B`, and
/// the volatility in force on the step leaving the node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCtx {
    pub step: usize,
    pub index: usize,
    pub time: f64,
    pub b: f64,
    pub sigma: f64,
}

/// A generator Lipschitz in `(y, z)`:
/// `|f(y1, z1) - f(y2, z2)| <= L_y |y1 - y2| + L_z |sigma (z1 - z2)|`.
pub trait Driver: Sync + Send {
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64;

    fn lipschitz_y(&self) -> f64;

    fn lipschitz_z(&self) -> f64;

    /// `f^0 = f(0, 0)`.
    fn frozen(&self, at: &NodeCtx) -> f64 {
        self.eval(at, 0.0, 0.0)
    }

    /// Whether `f` is known to be nonincreasing in `y`; the parameter-free
    /// `D`-norm estimates are stated under this normalization.
    fn nonincreasing_in_y(&self) -> bool {
        false
    }

    /// Rejects trees the generator cannot be evaluated on.
    fn validate(&self, _steps: usize, _branching: usize) -> Result<()> {
        Ok(())
    }
}

/// The `(y, z)`-independent part of a [`LipschitzDriver`].
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenTerm {
    Zero,
    Constant(f64),
    /// `c0 + cb * B + ct * t`.
    Affine { c0: f64, cb: f64, ct: f64 },
    /// `k * sigma^2`, a volatility-dependent term.
    SigmaSquare(f64),
    /// Explicit node table `[step][index]`; only valid on a tree of matching shape.
    Table(Vec<Vec<f64>>),
}

impl FrozenTerm {
    fn eval(&self, at: &NodeCtx) -> f64 {
        match self {
            FrozenTerm::Zero => 0.0,
            FrozenTerm::Constant(c) => *c,
            FrozenTerm::Affine { c0, cb, ct } => c0 + cb * at.b + ct * at.time,
            FrozenTerm::SigmaSquare(k) => k * at.sigma * at.sigma,
            FrozenTerm::Table(t) => t[at.step][at.index],
        }
    }
}

/// `f = f0 + a y + s sin(y) + c sigma z + k |sigma z|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzDriver {
    pub f0: FrozenTerm,
    pub y_lin: f64,
    pub y_sin: f64,
    pub z_lin: f64,
    pub z_abs: f64,
}

impl LipschitzDriver {
    pub fn zero() -> Self {
        Self::frozen_only(FrozenTerm::Zero)
    }

    pub fn constant(c: f64) -> Self {
        Self::frozen_only(FrozenTerm::Constant(c))
    }

    pub fn frozen_only(f0: FrozenTerm) -> Self {
        Self { f0, y_lin: 0.0, y_sin: 0.0, z_lin: 0.0, z_abs: 0.0 }
    }

    pub fn linear(f0: FrozenTerm, y_lin: f64, z_lin: f64) -> Self {
        Self { f0, y_lin, y_sin: 0.0, z_lin, z_abs: 0.0 }
    }

    /// True when `f` is nonincreasing in `y`.
    pub fn is_nonincreasing_in_y(&self) -> bool {
        self.y_lin + self.y_sin.abs() <= 0.0
    }

    /// Same generator shifted by `shift` in its frozen part.
    pub fn shifted(&self, shift: f64) -> ShiftedDriver<'_, Self> {
        ShiftedDriver { inner: self, shift }
    }
}

impl Driver for LipschitzDriver {
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64 {
        let sz = at.sigma * z;
        self.f0.eval(at) + self.y_lin * y + self.y_sin * y.sin() + self.z_lin * sz + self.z_abs * sz.abs()
    }

    fn lipschitz_y(&self) -> f64 {
        self.y_lin.abs() + self.y_sin.abs()
    }

    fn lipschitz_z(&self) -> f64 {
        self.z_lin.abs() + self.z_abs.abs()
    }

    fn nonincreasing_in_y(&self) -> bool {
        self.is_nonincreasing_in_y()
    }

    fn validate(&self, steps: usize, branching: usize) -> Result<()> {
        if let FrozenTerm::Table(t) = &self.f0 {
            let ok = t.len() >= steps && t.iter().enumerate().take(steps).all(|(s, row)| row.len() == branching.pow(s as u32));
            if !ok {
                return Err(LabError::ShapeMismatch("frozen-term table does not match the tree".into()));
            }
        }
        Ok(())
    }
}

/// `f + shift`.
pub struct ShiftedDriver<'a, D: Driver + ?Sized> {
    pub inner: &'a D,
    pub shift: f64,
}

impl<D: Driver + ?Sized> Driver for ShiftedDriver<'_, D> {
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64 {
        self.inner.eval(at, y, z) + self.shift
    }
    fn lipschitz_y(&self) -> f64 {
        self.inner.lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        self.inner.lipschitz_z()
    }
    fn nonincreasing_in_y(&self) -> bool {
        self.inner.nonincreasing_in_y()
    }
    fn validate(&self, steps: usize, branching: usize) -> Result<()> {
        self.inner.validate(steps, branching)
    }
}

/// Generator from a closure with declared Lipschitz constants.
pub struct FnDriver<F> {
    pub f: F,
    pub lipschitz_y: f64,
    pub lipschitz_z: f64,
}

impl<F> Driver for FnDriver<F>
where
    F: Fn(&NodeCtx, f64, f64) -> f64 + Sync + Send,
{
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64 {
        (self.f)(at, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        self.lipschitz_y
    }
    fn lipschitz_z(&self) -> f64 {
        self.lipschitz_z
    }
}

/// Truncated generator `f - f^0 + q_n(f^0)`.
pub struct TruncatedDriver<'a, D: Driver + ?Sized> {
    pub inner: &'a D,
    pub level: f64,
}

impl<D: Driver + ?Sized> Driver for TruncatedDriver<'_, D> {
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64 {
        let f0 = self.inner.frozen(at);
        self.inner.eval(at, y, z) - f0 + crate::claim::truncate(f0, self.level)
    }
    fn lipschitz_y(&self) -> f64 {
        self.inner.lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        self.inner.lipschitz_z()
    }
    fn nonincreasing_in_y(&self) -> bool {
        self.inner.nonincreasing_in_y()
    }
    fn validate(&self, steps: usize, branching: usize) -> Result<()> {
        self.inner.validate(steps, branching)
    }
}

/// Exact discrete change of variable `(Y~_t, Z~_t) = (c_t Y_t, c_{t+1} Z_t)`
/// with `c_t = (1 + a dt)^t`, under which the implicit one-step scheme keeps
/// its form with generator
/// `f~(y, z) = (1 + a dt) c_t f(y / c_t, z / c_{t+1}) - a y`.
///
/// For `a >= L_y / (1 - L_y dt)` the new generator is nonincreasing in `y`;
/// its `z`-Lipschitz constant is unchanged.
pub struct MonotoneReduction<'a, D: Driver + ?Sized> {
    pub inner: &'a D,
    pub rate: f64,
    pub dt: f64,
}

impl<'a, D: Driver + ?Sized> MonotoneReduction<'a, D> {
    pub fn new(inner: &'a D, dt: f64) -> Self {
        let ly = inner.lipschitz_y();
        Self { inner, rate: ly / (1.0 - ly * dt), dt }
    }

    pub fn factor(&self, step: usize) -> f64 {
        (1.0 + self.rate * self.dt).powi(step as i32)
    }
}

impl<D: Driver + ?Sized> Driver for MonotoneReduction<'_, D> {
    fn eval(&self, at: &NodeCtx, y: f64, z: f64) -> f64 {
        let g = 1.0 + self.rate * self.dt;
        let c = self.factor(at.step);
        g * c * self.inner.eval(at, y / c, z / (c * g)) - self.rate * y
    }
    fn lipschitz_y(&self) -> f64 {
        (1.0 + self.rate * self.dt) * self.inner.lipschitz_y() + self.rate
    }
    fn lipschitz_z(&self) -> f64 {
        self.inner.lipschitz_z()
    }
    fn nonincreasing_in_y(&self) -> bool {
        let ly = self.inner.lipschitz_y();
        self.rate * (1.0 - ly * self.dt) >= ly
    }
    fn validate(&self, steps: usize, branching: usize) -> Result<()> {
        self.inner.validate(steps, branching)
    }
}

/// Coefficients with `f(y, z) - f(y', z') = a (y - y') + b sigma (z - z')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationCoefficients {
    pub a: f64,
    pub b: f64,
}

/// Difference-quotient linearization of `f` between `(y, z)` and `(y', z')`.
///
/// A denominator below the guard is treated as 0/0 and gives 0. Quotients
/// are clamped to the Lipschitz bounds, which only removes rounding noise.
pub fn linearize(
    driver: &(impl Driver + ?Sized),
    at: &NodeCtx,
    (y, z): (f64, f64),
    (y_ref, z_ref): (f64, f64),
) -> LinearizationCoefficients {
    let dy = y - y_ref;
    let dz = at.sigma * (z - z_ref);
    let ly = driver.lipschitz_y();
    let lz = driver.lipschitz_z();
    let a = if dy.abs() < QUOTIENT_GUARD {
        0.0
    } else {
        ((driver.eval(at, y, z) - driver.eval(at, y_ref, z)) / dy).clamp(-ly, ly)
    };
    let b = if dz.abs() < QUOTIENT_GUARD {
        0.0
    } else {
        ((driver.eval(at, y_ref, z) - driver.eval(at, y_ref, z_ref)) / dz).clamp(-lz, lz)
    };
    LinearizationCoefficients { a, b }
}

/// Largest violation of the Lipschitz inequality over the probe points
/// `(y1, z1, y2, z2)` at each context; nonpositive means the bound holds.
pub fn lipschitz_violation(
    driver: &(impl Driver + ?Sized),
    contexts: &[NodeCtx],
    probes: &[(f64, f64, f64, f64)],
) -> f64 {
    let (ly, lz) = (driver.lipschitz_y(), driver.lipschitz_z());
    let mut worst = f64::NEG_INFINITY;
    for at in contexts {
        for &(y1, z1, y2, z2) in probes {
            let lhs = (driver.eval(at, y1, z1) - driver.eval(at, y2, z2)).abs();
            let rhs = ly * (y1 - y2).abs() + lz * (at.sigma * (z1 - z2)).abs();
            worst = worst.max(lhs - rhs - 1e-12 * (1.0 + rhs));
        }
    }
    worst
}
