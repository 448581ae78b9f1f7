//! Seeded random instances. Seeds only drive data generation; the solvers
//! are deterministic.

use l1bsde::{FrozenTerm, LipschitzDriver, NodeProcess, PathLattice, ProcessKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stream per instance under one experiment seed.
pub fn instance_rng(seed: u64, instance: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance as u64);
    rng
}

/// Generator nonincreasing in `y`, with `L_y dt <= 0.5` (so the fixed-point
/// iteration reaches its tolerance well within its budget) and
/// `L_z sqrt(dt) <= 0.9` (a feasible tilt).
pub fn random_driver(rng: &mut impl Rng, dt: f64) -> LipschitzDriver {
    let ly_cap = (0.5 / dt).min(1.5);
    let lz_cap = (0.9 / dt.sqrt()).min(1.0);
    let ly = rng.gen_range(0.0..ly_cap);
    let sin_share = rng.gen_range(0.0..0.5);
    let y_sin = ly * sin_share * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let y_lin = -ly * (1.0 - sin_share);
    let lz = rng.gen_range(0.0..lz_cap);
    let lin_share = rng.gen_range(0.0..1.0);
    let z_lin = lz * lin_share * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let z_abs = lz * (1.0 - lin_share) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    LipschitzDriver {
        f0: FrozenTerm::Affine { c0: rng.gen_range(-1.0..1.0), cb: rng.gen_range(-0.5..0.5), ct: rng.gen_range(-0.5..0.5) },
        y_lin,
        y_sin,
        z_lin,
        z_abs,
    }
}

/// Same generator with its frozen part raised by `shift >= 0`.
pub fn raised(driver: &LipschitzDriver, shift: f64) -> LipschitzDriver {
    let f0 = match driver.f0 {
        FrozenTerm::Zero => FrozenTerm::Constant(shift),
        FrozenTerm::Constant(c) => FrozenTerm::Constant(c + shift),
        FrozenTerm::Affine { c0, cb, ct } => FrozenTerm::Affine { c0: c0 + shift, cb, ct },
        ref other => panic!("cannot raise frozen term {other:?}"),
    };
    LipschitzDriver { f0, ..driver.clone() }
}

/// Leaf values: uniform on `[-3, 3]`, or with a Pareto(1.5) tail in a
/// quarter of the calls.
pub fn random_values(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let heavy = rng.gen_bool(0.25);
    (0..n)
        .map(|_| {
            if heavy {
                let u: f64 = rng.gen_range(0.0..1.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * (1.0 - u).powf(-1.0 / 1.5)
            } else {
                rng.gen_range(-3.0..3.0)
            }
        })
        .collect()
}

/// Nonnegative bump on a random subset of entries.
pub fn bumped(rng: &mut impl Rng, values: &[f64]) -> Vec<f64> {
    values.iter().map(|&x| if rng.gen_bool(0.5) { x + rng.gen_range(0.0..1.0) } else { x }).collect()
}

/// Adapted process with entries uniform on `[lo, hi)`.
pub fn random_process(rng: &mut impl Rng, lattice: &PathLattice, lo: f64, hi: f64) -> NodeProcess {
    let slices = (0..=lattice.steps()).map(|t| (0..1usize << t).map(|_| rng.gen_range(lo..hi)).collect()).collect();
    NodeProcess::from_slices(slices, 2, ProcessKind::Adapted).expect("binary shape")
}

/// Nonnegative process that is a submartingale under a random tilt with
/// `|lambda| <= bound`: `M_t = max(0, E^lambda[M_next] - d)` with `d >= 0`
/// on some nodes, so the inequality is strict there.
pub fn submartingale(rng: &mut impl Rng, lattice: &PathLattice, bound: f64) -> NodeProcess {
    let n = lattice.steps();
    let sq = lattice.grid().sqrt_dt();
    let mut slices = vec![Vec::new(); n + 1];
    slices[n] = random_values(rng, 1 << n).into_iter().map(f64::abs).collect();
    for t in (0..n).rev() {
        let next = &slices[t + 1];
        let row = (0..1usize << t)
            .map(|i| {
                let lambda = if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
                let p = 0.5 * (1.0 + lambda * sq);
                let d = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.2) };
                (p * next[2 * i] + (1.0 - p) * next[2 * i + 1] - d).max(0.0)
            })
            .collect();
        slices[t] = row;
    }
    NodeProcess::from_slices(slices, 2, ProcessKind::Adapted).expect("binary shape")
}
