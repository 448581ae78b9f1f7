use l1bsde::bsde::{comparison_check, solve_bsde, tower_property_check};
use l1bsde::driver::{FrozenTerm, LipschitzDriver};
use l1bsde::lattice::tilted_up_probability;
use l1bsde::nonlinexp::{brute_force_sup_expectation, sup_expectation};
use l1bsde::norms::{brute_force_d_norm, d_norm, norm_report, running_sup_bound_check, s_beta_norm};
use l1bsde::rbsde::{solve_rbsde, snell_oracle, ObstaclePath};
use l1bsde::twobsde::{brute_force_2bsde, solve_2bsde, RegimeTree, UncertaintySet};
use l1bsde::{build_lattice, tilt, DriftControl, NodeProcess, NodeRef, PathLattice, ProcessKind, RegimeSpec, TerminalClaim, TimeGrid};
use proptest::prelude::*;

fn lat(n: usize, sigma: f64) -> PathLattice {
    build_lattice(TimeGrid::new(1.0, n).unwrap(), &RegimeSpec::Constant(sigma)).unwrap()
}

fn leaves(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1 << n)
}

fn process(n: usize) -> impl Strategy<Value = NodeProcess> {
    prop::collection::vec(-5.0f64..5.0, (2 << n) - 1).prop_map(move |flat| {
        NodeProcess::from_fn(n, 2, ProcessKind::Adapted, |t, i| flat[(1 << t) - 1 + i])
    })
}

fn nonincreasing_driver() -> impl Strategy<Value = LipschitzDriver> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -0.5f64..0.5).prop_map(
        |(c0, cb, y_neg, z_lin, z_abs, y_sin)| LipschitzDriver {
            f0: FrozenTerm::Affine { c0, cb, ct: 0.0 },
            y_lin: -y_neg - y_sin.abs(),
            y_sin,
            z_lin,
            z_abs,
        },
    )
}

const L: f64 = 0.8;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sublinear_expectation_axioms(x in leaves(5), y in leaves(5), c in -3.0f64..3.0, k in 0.0f64..4.0) {
        let l = lat(5, 1.0);
        let e = |v: &[f64]| sup_expectation(v, L, &l).unwrap().value;
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        prop_assert!(e(&sum) <= e(&x) + e(&y) + 1e-12);
        let scaled: Vec<f64> = x.iter().map(|a| k * a).collect();
        prop_assert!((e(&scaled) - k * e(&x)).abs() <= 1e-12 * (1.0 + e(&x).abs() * k));
        let shifted: Vec<f64> = x.iter().map(|a| a + c).collect();
        prop_assert!((e(&shifted) - e(&x) - c).abs() <= 1e-12);
        prop_assert!((e(&vec![c; 32]) - c).abs() <= 1e-14);
        let larger: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect();
        prop_assert!(e(&x) <= e(&larger) + 1e-14);
        let neg: Vec<f64> = x.iter().map(|a| -a).collect();
        prop_assert!(-e(&neg) <= e(&x) + 1e-14);
    }

    #[test]
    fn dp_matches_enumeration(x in leaves(3), bound in 0.0f64..1.5) {
        let l = lat(3, 1.3);
        let dp = sup_expectation(&x, bound, &l).unwrap().value;
        let bf = brute_force_sup_expectation(&x, bound, &l).unwrap().value;
        prop_assert!((dp - bf).abs() <= 1e-12);
    }

    #[test]
    fn pasted_density_factorizes(k in 0usize..=5, a in -0.9f64..0.9, b in -0.9f64..0.9, leaf in 0usize..32) {
        let l = lat(5, 1.0);
        let p = DriftControl::constant(5, a, 1.0).unwrap();
        let q = DriftControl::constant(5, b, 1.0).unwrap();
        let pasted = tilt(&l, &p.paste(&q, k).unwrap()).unwrap();
        let sq = l.grid().sqrt_dt();
        let node = NodeRef { step: 5, index: leaf };
        let mut expected = 1.0;
        for t in 0..5 {
            let up = node.ancestor(t + 1).index.is_multiple_of(2);
            let lambda = if t < k { a } else { b };
            let pu = tilted_up_probability(lambda, sq).unwrap();
            expected *= 2.0 * if up { pu } else { 1.0 - pu };
        }
        prop_assert!((pasted.density(leaf) - expected).abs() <= 1e-13 * expected);
    }

    #[test]
    fn d_norm_matches_enumeration_and_scales(y in process(2), c in -3.0f64..3.0) {
        let l = lat(2, 1.0);
        let d = d_norm(&y, L, &l).unwrap();
        prop_assert!((d - brute_force_d_norm(&y, L, &l).unwrap()).abs() <= 1e-12);
        let scaled = y.map(|v| c * v);
        prop_assert!((d_norm(&scaled, L, &l).unwrap() - c.abs() * d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn d_norm_triangle(y in process(4), z in process(4)) {
        let l = lat(4, 1.0);
        let sum = y.zip_with(&z, |a, b| a + b).unwrap();
        let lhs = d_norm(&sum, L, &l).unwrap();
        prop_assert!(lhs <= d_norm(&y, L, &l).unwrap() + d_norm(&z, L, &l).unwrap() + 1e-12);
    }

    #[test]
    fn running_sup_bounded_by_d_norm(y in process(5), beta in 0.05f64..0.95) {
        let l = lat(5, 1.0);
        let z = l.zero_process(ProcessKind::PredictableIncrement);
        let r = norm_report(&y, &z, beta, L, &l).unwrap();
        prop_assert!(r.s_beta <= r.running_sup_bound() + 1e-12 * (1.0 + r.running_sup_bound()));
        let abs = y.map(f64::abs);
        prop_assert!(running_sup_bound_check(&abs, beta, L, &l, &[]).unwrap().verdict.holds());
        prop_assert!((s_beta_norm(&y, beta, L, &l).unwrap() - r.s_beta).abs() == 0.0);
    }

    #[test]
    fn bsde_comparison_random(d in nonincreasing_driver(), x in leaves(6), bump in prop::collection::vec(0.0f64..1.0, 64), shift in 0.0f64..0.5) {
        let l = lat(6, 1.0);
        let xi = TerminalClaim::new(x).unwrap();
        let hi_xi = TerminalClaim::new(xi.values().iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let hi = LipschitzDriver { f0: FrozenTerm::Affine { c0: match d.f0 { FrozenTerm::Affine { c0, .. } => c0 + shift, _ => unreachable!() }, cb: match d.f0 { FrozenTerm::Affine { cb, .. } => cb, _ => unreachable!() }, ct: 0.0 }, ..d.clone() };
        let r = comparison_check(&d, &xi, &hi, &hi_xi, &l).unwrap();
        prop_assert!(r.verdict.holds(), "{:?}", r);
    }

    #[test]
    fn bsde_tower(d in nonincreasing_driver(), x in leaves(6), k in 0usize..=6) {
        let l = lat(6, 0.7);
        let xi = TerminalClaim::new(x).unwrap();
        prop_assert!(tower_property_check(&d, &xi, &l, k).unwrap().verdict.holds());
    }

    #[test]
    fn bsde_residual_and_terminal(d in nonincreasing_driver(), x in leaves(7)) {
        let l = lat(7, 1.2);
        let xi = TerminalClaim::new(x).unwrap();
        let s = solve_bsde(&d, &xi, &l).unwrap();
        prop_assert!(s.residual <= 1e-12);
        prop_assert_eq!(s.y.terminal(), xi.values());
    }

    #[test]
    fn rbsde_invariants(d in nonincreasing_driver(), x in leaves(6), s in process(6)) {
        let l = lat(6, 1.0);
        let xi = TerminalClaim::new(x).unwrap();
        let obstacle = ObstaclePath::from_process(s, &l).unwrap();
        let r = solve_rbsde(&d, &xi, &obstacle, &l).unwrap();
        prop_assert!(r.skorokhod_defect <= 1e-12 && r.residual <= 1e-12);
        prop_assert!(r.obstacle_violation(&obstacle) <= 1e-12);
        prop_assert!(r.dk.slices().iter().flatten().all(|&k| k >= 0.0));
        let plain = solve_bsde(&d, &xi, &l).unwrap();
        for (a, b) in plain.y.slices().iter().flatten().zip(r.y.slices().iter().flatten()) {
            prop_assert!(*a <= b + 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn rbsde_zero_driver_is_snell(x in leaves(6), s in process(6)) {
        let l = lat(6, 1.0);
        let xi = TerminalClaim::new(x).unwrap();
        let obstacle = ObstaclePath::from_process(s, &l).unwrap();
        let r = solve_rbsde(&LipschitzDriver::zero(), &xi, &obstacle, &l).unwrap();
        prop_assert!(r.y.max_abs_diff(&snell_oracle(&xi, &obstacle, &l).unwrap()).unwrap() <= 1e-12);
    }

    #[test]
    fn twobsde_dp_matches_enumeration(d in nonincreasing_driver().prop_map(|d| LipschitzDriver { z_lin: 0.8 * d.z_lin, z_abs: 0.8 * d.z_abs, ..d }), lo in 0.2f64..1.0, gap in 0.1f64..1.0, x in prop::collection::vec(-3.0f64..3.0, 64)) {
        let tree = RegimeTree::new(TimeGrid::new(1.0, 3).unwrap(), UncertaintySet::new(vec![lo, lo + gap]).unwrap()).unwrap();
        let xi = TerminalClaim::new(x).unwrap();
        let v = solve_2bsde(&d, &xi, &tree).unwrap().value();
        let bf = brute_force_2bsde(&d, &xi, &tree).unwrap();
        prop_assert!((v - bf).abs() <= 1e-12 * (1.0 + bf.abs()));
    }
}

#[test]
fn infeasible_tilt_rejected_for_2bsde() {
    let tree = RegimeTree::new(TimeGrid::new(1.0, 3).unwrap(), UncertaintySet::new(vec![0.5, 1.0]).unwrap()).unwrap();
    let xi = TerminalClaim::new(vec![0.0; 64]).unwrap();
    let d = LipschitzDriver { z_lin: 1.0, z_abs: -0.9, ..LipschitzDriver::zero() };
    assert!(matches!(solve_2bsde(&d, &xi, &tree), Err(l1bsde::LabError::InfeasibleTilt { .. })));
}
