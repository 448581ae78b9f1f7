//! Norms under the sublinear expectation: the `D` norm
//! `sup_tau E[|Y_tau|]`, `S^beta`, `H^beta`, and the running-supremum
//! inequalities they satisfy.

use crate::check::Verdict;
use crate::error::{LabError, Result};
use crate::lattice::{tilt, DriftControl, NodeRef, PathLattice, TiltedMeasure};
use crate::nonlinexp::{check_drift_bound, sup_expectation, sup_step};
use crate::parallel::map_indices;
use crate::process::{NodeProcess, ProcessKind};
use crate::tolerance::{EXACT, ENUMERATION_NODES};

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(LabError::InvalidBeta(beta))
    }
}

/// Joint optimal stopping and drift control of `|Y|`:
/// `v = max(|Y|, sup_lambda E^lambda[v_next])`.
pub fn d_norm(process: &NodeProcess, bound: f64, lattice: &PathLattice) -> Result<f64> {
    Ok(d_norm_process(process, bound, lattice)?.get(0, 0))
}

/// Value process of the `D`-norm recursion (the sublinear Snell envelope of `|Y|`).
pub fn d_norm_process(process: &NodeProcess, bound: f64, lattice: &PathLattice) -> Result<NodeProcess> {
    check_drift_bound(bound, lattice)?;
    lattice.check_process(process)?;
    let n = lattice.steps();
    let sq = lattice.grid().sqrt_dt();
    let mut v = vec![Vec::new(); n + 1];
    v[n] = process.terminal().iter().map(|x| x.abs()).collect();
    for t in (0..n).rev() {
        let next = &v[t + 1];
        let y = process.slice(t);
        v[t] = map_indices(1 << t, |i| y[i].abs().max(sup_step(next[2 * i], next[2 * i + 1], bound, sq).0));
    }
    NodeProcess::from_slices(v, 2, ProcessKind::Adapted)
}

/// Exhaustive `D` norm: every adapted stop/continue map times every
/// bang-bang control, evaluated forward through path densities.
pub fn brute_force_d_norm(process: &NodeProcess, bound: f64, lattice: &PathLattice) -> Result<f64> {
    check_drift_bound(bound, lattice)?;
    lattice.check_process(process)?;
    let n = lattice.steps();
    let inner = (1usize << n) - 1;
    if 2 * inner > ENUMERATION_NODES {
        return Err(LabError::InstanceTooLarge { size: 2 * inner, cap: ENUMERATION_NODES });
    }
    let sq = lattice.grid().sqrt_dt();
    let bit = |mask: usize, node: NodeRef| mask >> ((1 << node.step) - 1 + node.index) & 1 == 1;
    let mut best = f64::NEG_INFINITY;
    for stop in 0usize..1 << inner {
        for ctrl in 0usize..1 << inner {
            let mut total = 0.0;
            for leaf in 0..lattice.leaf_count() {
                let node = NodeRef { step: n, index: leaf };
                let mut density = 1.0;
                let mut stopped_at = node;
                for t in 0..n {
                    let a = node.ancestor(t);
                    if bit(stop, a) {
                        stopped_at = a;
                        break;
                    }
                    let lambda = if bit(ctrl, a) { bound } else { -bound };
                    let p = 0.5 * (1.0 + lambda * sq);
                    let went_up = node.ancestor(t + 1).index.is_multiple_of(2);
                    density *= 2.0 * if went_up { p } else { 1.0 - p };
                }
                total += density * process.get(stopped_at.step, stopped_at.index).abs();
            }
            best = best.max(total / lattice.leaf_count() as f64);
        }
    }
    Ok(best)
}

/// Leaf-indexed running maximum of `|Y|` along each path.
pub fn running_max_abs(process: &NodeProcess) -> Vec<f64> {
    let mut cur = vec![process.get(0, 0).abs()];
    for t in 1..=process.steps() {
        let s = process.slice(t);
        cur = (0..s.len()).map(|i| cur[i / 2].max(s[i].abs())).collect();
    }
    cur
}

/// `E[(max_t |Y_t|)^beta]`.
pub fn s_beta_norm(process: &NodeProcess, beta: f64, bound: f64, lattice: &PathLattice) -> Result<f64> {
    check_beta(beta)?;
    lattice.check_process(process)?;
    let leaves: Vec<f64> = running_max_abs(process).into_iter().map(|m| m.powf(beta)).collect();
    Ok(sup_expectation(&leaves, bound, lattice)?.value)
}

/// Leaf-indexed `sum_t |sigma_t Z_t|^2 dt` with left-endpoint `Z`.
pub fn quadratic_integral(z: &NodeProcess, lattice: &PathLattice) -> Result<Vec<f64>> {
    lattice.check_process(z)?;
    let dt = lattice.grid().dt();
    let sigma = &lattice.regime().values;
    let mut acc = vec![0.0];
    for t in 0..lattice.steps() {
        let inc: Vec<f64> = (0..1 << t)
            .map(|i| {
                let sz = sigma.get(t, i) * z.get(t, i);
                sz * sz * dt
            })
            .collect();
        acc = (0..2 << t).map(|i| acc[i / 2] + inc[i / 2]).collect();
    }
    Ok(acc)
}

/// `E[(sum_t |sigma_t Z_t|^2 dt)^(beta/2)]`.
pub fn h_beta_norm(z: &NodeProcess, beta: f64, bound: f64, lattice: &PathLattice) -> Result<f64> {
    check_beta(beta)?;
    let leaves: Vec<f64> = quadratic_integral(z, lattice)?.into_iter().map(|q| q.powf(beta / 2.0)).collect();
    Ok(sup_expectation(&leaves, bound, lattice)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub d_norm: f64,
    pub s_beta: f64,
    pub h_beta: f64,
    pub beta: f64,
}

impl NormReport {
    /// `S^beta <= d^beta / (1 - beta)`.
    pub fn running_sup_bound(&self) -> f64 {
        self.d_norm.powf(self.beta) / (1.0 - self.beta)
    }
}

pub fn norm_report(
    y: &NodeProcess,
    z: &NodeProcess,
    beta: f64,
    bound: f64,
    lattice: &PathLattice,
) -> Result<NormReport> {
    Ok(NormReport {
        d_norm: d_norm(y, bound, lattice)?,
        s_beta: s_beta_norm(y, beta, bound, lattice)?,
        h_beta: h_beta_norm(z, beta, bound, lattice)?,
        beta,
    })
}

#[derive(Debug, Clone)]
pub struct DoobReport {
    pub verdict: Verdict,
    /// `||M||_{S^beta}`.
    pub lhs: f64,
    /// `E[M_T]^beta / (1 - beta)`.
    pub rhs: f64,
    pub slack: f64,
    /// A tilt under which `M` is a submartingale, when one exists.
    pub certificate: Option<DriftControl>,
}

/// Drift under which `m` is a submartingale, if any.
///
/// At each node the best achievable one-step mean is attained at `+L` or
/// `-L`, so a tilt exists iff the bang-bang choice works everywhere.
pub fn submartingale_certificate(
    m: &NodeProcess,
    bound: f64,
    lattice: &PathLattice,
) -> Result<Option<DriftControl>> {
    check_drift_bound(bound, lattice)?;
    lattice.check_process(m)?;
    let sq = lattice.grid().sqrt_dt();
    let mut ok = true;
    let control = DriftControl::from_fn(lattice.steps(), bound, |node| {
        let (up, down) = (m.get(node.step + 1, 2 * node.index), m.get(node.step + 1, 2 * node.index + 1));
        let (mean, lambda) = sup_step(up, down, bound, sq);
        let here = m.get(node.step, node.index);
        if here > mean + EXACT * (1.0 + here.abs()) {
            ok = false;
        }
        lambda
    })?;
    Ok(ok.then_some(control))
}

/// Doob-type inequality for a nonnegative process that is a submartingale
/// under some tilt: `||M||_{S^beta} <= E[M_T]^beta / (1 - beta)`.
pub fn doob_inequality_check(m: &NodeProcess, beta: f64, bound: f64, lattice: &PathLattice) -> Result<DoobReport> {
    check_beta(beta)?;
    let lhs = s_beta_norm(m, beta, bound, lattice)?;
    let rhs = sup_expectation(m.terminal(), bound, lattice)?.value.powf(beta) / (1.0 - beta);
    let nonnegative = m.slices().iter().flatten().all(|&x| x >= 0.0);
    let certificate = if nonnegative { submartingale_certificate(m, bound, lattice)? } else { None };
    let verdict = match certificate {
        None => Verdict::Inapplicable,
        Some(_) => Verdict::from_bool(lhs <= rhs + EXACT * (1.0 + rhs)),
    };
    Ok(DoobReport { verdict, lhs, rhs, slack: rhs - lhs, certificate })
}

/// `sup_tau E^Q[X_tau]` under one fixed measure.
pub fn stopping_value_under(x: &NodeProcess, measure: &TiltedMeasure) -> f64 {
    let n = measure.steps();
    let mut v = x.terminal().to_vec();
    for t in (0..n).rev() {
        v = (0..1 << t)
            .map(|i| {
                let p = measure.up_probability(NodeRef { step: t, index: i });
                x.get(t, i).max(p * v[2 * i] + (1.0 - p) * v[2 * i + 1])
            })
            .collect();
    }
    v[0]
}

#[derive(Debug, Clone)]
pub struct RunningSupReport {
    pub verdict: Verdict,
    /// `(E^Q[(X*)^beta], sup_tau E^Q[X_tau]^beta / (1 - beta))` per tested measure.
    pub per_measure: Vec<(f64, f64)>,
    pub worst_slack: f64,
}

/// Per-measure running-supremum bound
/// `E^Q[(max X)^beta] <= (sup_tau E^Q[X_tau])^beta / (1 - beta)`.
///
/// The tested measures are `lambda = 0, +L, -L`, a sign-alternating drift,
/// the maximizer of the left side, and any `extra` controls.
pub fn running_sup_bound_check(
    x: &NodeProcess,
    beta: f64,
    bound: f64,
    lattice: &PathLattice,
    extra: &[DriftControl],
) -> Result<RunningSupReport> {
    check_beta(beta)?;
    lattice.check_process(x)?;
    if x.slices().iter().flatten().any(|&v| v < 0.0) {
        return Ok(RunningSupReport { verdict: Verdict::Inapplicable, per_measure: Vec::new(), worst_slack: 0.0 });
    }
    let n = lattice.steps();
    let star: Vec<f64> = running_max_abs(x).into_iter().map(|m| m.powf(beta)).collect();
    let mut controls = vec![
        DriftControl::constant(n, 0.0, bound)?,
        DriftControl::constant(n, bound, bound)?,
        DriftControl::constant(n, -bound, bound)?,
        DriftControl::from_fn(n, bound, |node| if node.index % 2 == 0 { bound } else { -bound })?,
        sup_expectation(&star, bound, lattice)?.optimal_control,
    ];
    controls.extend_from_slice(extra);
    let mut per_measure = Vec::with_capacity(controls.len());
    let mut worst = f64::INFINITY;
    for c in &controls {
        let q = tilt(lattice, c)?;
        let lhs = q.expectation(&star);
        let rhs = stopping_value_under(x, &q).powf(beta) / (1.0 - beta);
        worst = worst.min(rhs - lhs);
        per_measure.push((lhs, rhs));
    }
    let ok = per_measure.iter().all(|&(l, r)| l <= r + EXACT * (1.0 + r));
    Ok(RunningSupReport { verdict: Verdict::from_bool(ok), per_measure, worst_slack: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, RegimeSpec, TimeGrid};

    fn lat(n: usize, t: f64) -> PathLattice {
        build_lattice(TimeGrid::new(t, n).unwrap(), &RegimeSpec::Constant(1.0)).unwrap()
    }

    fn w_process(l: &PathLattice) -> NodeProcess {
        NodeProcess::from_fn(l.steps(), 2, ProcessKind::Adapted, |t, i| l.w_slice(t)[i])
    }

    #[test]
    fn constant_process_norms() {
        let l = lat(4, 1.0);
        let c = NodeProcess::from_fn(4, 2, ProcessKind::Adapted, |_, _| -3.0);
        assert_eq!(d_norm(&c, 0.5, &l).unwrap(), 3.0);
        assert!((s_beta_norm(&c, 0.5, 0.5, &l).unwrap() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_increasing_process() {
        let l = lat(5, 1.0);
        let y = NodeProcess::from_fn(5, 2, ProcessKind::Adapted, |t, _| t as f64);
        assert!((s_beta_norm(&y, 0.25, 0.3, &l).unwrap() - 5f64.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn s_beta_of_brownian_two_steps() {
        let l = lat(2, 1.0);
        let h = 0.5f64.sqrt();
        // running max of |W| on paths uu, ud, du, dd: 2h, h, h, 2h
        let expect = (2.0 * (2.0 * h).sqrt() + 2.0 * h.sqrt()) / 4.0;
        assert!((s_beta_norm(&w_process(&l), 0.5, 0.0, &l).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn d_norm_matches_brute_force_on_brownian() {
        let l = lat(2, 1.0);
        let y = w_process(&l);
        let dp = d_norm(&y, 0.0, &l).unwrap();
        let bf = brute_force_d_norm(&y, 0.0, &l).unwrap();
        assert!((dp - bf).abs() < 1e-15);
        // |W| is a submartingale under the uniform measure: never stop early
        assert!((dp - 0.5 * 2.0 * 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn d_norm_of_submartingale_is_terminal_expectation() {
        let l = lat(6, 1.0);
        let m = NodeProcess::from_fn(6, 2, ProcessKind::Adapted, |t, i| {
            let w = l.w_slice(t)[i];
            w * w
        });
        let dn = d_norm(&m, 0.4, &l).unwrap();
        let e = sup_expectation(m.terminal(), 0.4, &l).unwrap().value;
        assert!((dn - e).abs() < 1e-13);
    }

    #[test]
    fn h_beta_cases() {
        let l = lat(8, 1.0);
        let zero = l.zero_process(ProcessKind::PredictableIncrement);
        assert_eq!(h_beta_norm(&zero, 0.5, 0.2, &l).unwrap(), 0.0);
        let one = NodeProcess::from_fn(8, 2, ProcessKind::PredictableIncrement, |_, _| 1.0);
        assert!((h_beta_norm(&one, 0.3, 0.2, &l).unwrap() - 1.0).abs() < 1e-14);
        let two = NodeProcess::from_fn(8, 2, ProcessKind::PredictableIncrement, |_, _| 2.0);
        assert!((h_beta_norm(&two, 0.5, 0.0, &l).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn beta_validated() {
        let l = lat(2, 1.0);
        let c = l.zero_process(ProcessKind::Adapted);
        assert_eq!(s_beta_norm(&c, 1.0, 0.0, &l), Err(LabError::InvalidBeta(1.0)));
        assert_eq!(h_beta_norm(&c, 0.0, 0.0, &l), Err(LabError::InvalidBeta(0.0)));
    }

    #[test]
    fn doob_constant_and_abs_brownian() {
        let l = lat(10, 1.0);
        let c = NodeProcess::from_fn(10, 2, ProcessKind::Adapted, |_, _| 4.0);
        let r = doob_inequality_check(&c, 0.5, 0.5, &l).unwrap();
        assert!(r.verdict.holds());
        assert!((r.lhs - 2.0).abs() < 1e-14 && (r.rhs - 4.0).abs() < 1e-14);

        let m = w_process(&l).map(f64::abs);
        let r = doob_inequality_check(&m, 0.5, 0.0, &l).unwrap();
        assert!(r.verdict.holds());
        assert!(r.slack > 0.0);
    }

    #[test]
    fn doob_inapplicable_for_supermartingale() {
        let l = lat(4, 1.0);
        let m = NodeProcess::from_fn(4, 2, ProcessKind::Adapted, |t, _| 5.0 - t as f64);
        let r = doob_inequality_check(&m, 0.5, 0.3, &l).unwrap();
        assert_eq!(r.verdict, Verdict::Inapplicable);
    }

    #[test]
    fn running_sup_cases() {
        let l = lat(4, 1.0);
        let c = NodeProcess::from_fn(4, 2, ProcessKind::Adapted, |_, _| 2.0);
        let r = running_sup_bound_check(&c, 0.5, 0.3, &l, &[]).unwrap();
        assert!(r.verdict.holds());
        let trivial = 2f64.sqrt() * 0.5 / 0.5;
        assert!((r.worst_slack - trivial).abs() < 1e-14);

        let x = w_process(&l).map(f64::abs);
        assert!(running_sup_bound_check(&x, 0.5, 0.0, &l, &[]).unwrap().verdict.holds());

        // a spike at t = 1 on the up node only
        let l2 = lat(2, 1.0);
        let spike = NodeProcess::from_fn(2, 2, ProcessKind::Adapted, |t, i| if t == 1 && i == 0 { 8.0 } else { 0.0 });
        let r = running_sup_bound_check(&spike, 0.5, 0.0, &l2, &[]).unwrap();
        let (lhs, rhs) = r.per_measure[0];
        // E[(X*)^0.5] = 0.5 * sqrt(8); sup_tau E[X_tau] = 4
        assert!((lhs - 0.5 * 8f64.sqrt()).abs() < 1e-14);
        assert!((rhs - 2.0 * 2.0).abs() < 1e-14);
    }
}
