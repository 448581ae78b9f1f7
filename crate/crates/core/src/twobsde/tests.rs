use super::*;
use crate::bsde::solve_bsde;
use crate::check::Verdict;
use crate::claim::ClaimSpec;
use crate::driver::{FrozenTerm, LipschitzDriver};
use crate::lattice::{build_lattice, RegimeSpec};

fn tree(n: usize, levels: &[f64]) -> RegimeTree {
    RegimeTree::new(TimeGrid::new(1.0, n).unwrap(), UncertaintySet::new(levels.to_vec()).unwrap()).unwrap()
}

fn generic() -> LipschitzDriver {
    LipschitzDriver { f0: FrozenTerm::Affine { c0: 0.2, cb: -0.3, ct: 0.1 }, y_lin: -0.5, y_sin: 0.2, z_lin: 0.3, z_abs: 0.4 }
}

#[test]
fn set_validation() {
    assert!(UncertaintySet::new(vec![]).is_err());
    assert!(UncertaintySet::new(vec![0.5, 0.5]).is_err());
    assert!(matches!(UncertaintySet::new(vec![0.0]), Err(LabError::NonPositiveVolatility { .. })));
    let u = UncertaintySet::new(vec![0.5, 1.0]).unwrap();
    assert!(u.pasting_closed());
    assert!(UncertaintySet::new(vec![1.0]).unwrap().is_subset_of(&u));
}

#[test]
fn depth_caps() {
    let g = TimeGrid::new(1.0, 10).unwrap();
    let e = RegimeTree::new(g, UncertaintySet::new(vec![0.5, 1.0, 2.0]).unwrap());
    assert!(matches!(e, Err(LabError::DepthCapExceeded { steps: 10, cap: 9 })));
    let g = TimeGrid::new(1.0, 15).unwrap();
    let e = RegimeTree::new(g, UncertaintySet::new(vec![0.5, 1.0]).unwrap());
    assert!(matches!(e, Err(LabError::DepthCapExceeded { steps: 15, cap: 14 })));
}

#[test]
fn single_level_is_plain_bsde() {
    let t = tree(6, &[0.8]);
    let l = build_lattice(TimeGrid::new(1.0, 6).unwrap(), &RegimeSpec::Constant(0.8)).unwrap();
    let spec = ClaimSpec::Put { spot: 1.0, strike: 1.0 };
    let xi = t.claim(&spec).unwrap();
    let d = generic();
    let s = solve_2bsde(&d, &xi, &t).unwrap();
    let b = solve_bsde(&d, &crate::claim::claim_from_spec(&l, &spec).unwrap(), &l).unwrap();
    assert_eq!(s.v.slices(), b.y.slices());
    let sup = supersolution_check(&d, &s, &t, &s.control);
    assert!(sup.verdict.holds());
    // K is recomputed from V, so only Picard rounding remains
    assert!(sup.k.max_abs() < 1e-13);
    let m = check_minimality(&d, &xi, &s, &t, 2, &s.control, 7).unwrap();
    assert!(m.node_infimum.iter().all(|&x| x.abs() < 1e-13));
}

#[test]
fn convex_payoff_takes_high_volatility() {
    for n in [3, 8] {
        let t = tree(n, &[0.5, 1.0]);
        let xi = t.claim(&ClaimSpec::Square).unwrap();
        let s = solve_2bsde(&LipschitzDriver::zero(), &xi, &t).unwrap();
        assert!((s.value() - 1.0).abs() < 1e-10, "{}", s.value());
        assert_eq!(s.control, RegimeControl::constant(&t, 1).unwrap());
        if n == 3 {
            let bf = brute_force_2bsde(&LipschitzDriver::zero(), &xi, &t).unwrap();
            assert!((bf - s.value()).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_payoff_has_no_push() {
    let t = tree(4, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Identity).unwrap();
    let s = solve_2bsde(&LipschitzDriver::zero(), &xi, &t).unwrap();
    assert!(s.value().abs() < 1e-15);
    for r in 0..2 {
        let c = RegimeControl::constant(&t, r).unwrap();
        let sup = supersolution_check(&LipschitzDriver::zero(), &s, &t, &c);
        assert!(sup.k.max_abs() < 1e-15);
    }
}

#[test]
fn suboptimal_control_pushes() {
    let t = tree(3, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Square).unwrap();
    let z = LipschitzDriver::zero();
    let s = solve_2bsde(&z, &xi, &t).unwrap();
    let low = RegimeControl::constant(&t, 0).unwrap();
    let sup = supersolution_check(&z, &s, &t, &low);
    assert!(sup.verdict.holds());
    // one-step push is (1 - 0.25) dt at every node
    assert!(sup.dk.slices()[..3].iter().flatten().all(|&k| (k - 0.75 / 3.0).abs() < 1e-14));
    let opt = supersolution_check(&z, &s, &t, &s.control);
    assert!(opt.k.max_abs() < 1e-15);
    for step in 0..=3 {
        let m = check_minimality(&z, &xi, &s, &t, step, &low, 1).unwrap();
        assert!(m.exhaustive && m.verdict.holds(), "{m:?}");
        assert!(m.min_infimum.abs() < 1e-14);
    }
}

#[test]
fn brute_force_agrees_with_dp() {
    let d = generic();
    for levels in [&[0.5, 1.0][..], &[0.7, 1.3][..]] {
        for n in 1..=4 {
            let t = tree(n, levels);
            for spec in [ClaimSpec::Put { spot: 1.0, strike: 1.1 }, ClaimSpec::Abs, ClaimSpec::RunningMax] {
                let xi = t.claim(&spec).unwrap();
                let s = solve_2bsde(&d, &xi, &t).unwrap();
                let bf = brute_force_2bsde(&d, &xi, &t).unwrap();
                assert!((bf - s.value()).abs() <= 1e-12 * (1.0 + bf.abs()), "{n} {spec}: {bf} vs {}", s.value());
            }
        }
    }
    let t = tree(5, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Abs).unwrap();
    assert!(matches!(brute_force_2bsde(&d, &xi, &t), Err(LabError::InstanceTooLarge { .. })));
}

#[test]
fn representation_and_minimality_every_step() {
    let t = tree(6, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Put { spot: 1.0, strike: 1.0 }).unwrap();
    let d = generic();
    let s = solve_2bsde(&d, &xi, &t).unwrap();
    let base = RegimeControl::random(&t, 11);
    for step in 0..=6 {
        let r = representation_check(&d, &xi, &s, &t, step, &base, 3).unwrap();
        assert!(r.verdict.holds(), "{r:?}");
        let m = check_minimality(&d, &xi, &s, &t, step, &base, 3).unwrap();
        assert!(m.verdict.holds(), "{m:?}");
    }
}

#[test]
fn value_dominates_controls() {
    let t = tree(5, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Call { strike: 0.2 }).unwrap();
    let d = generic();
    let s = solve_2bsde(&d, &xi, &t).unwrap();
    for c in [RegimeControl::constant(&t, 0).unwrap(), RegimeControl::constant(&t, 1).unwrap(), RegimeControl::random(&t, 5)] {
        assert!(dominates_controlled(&s, &solve_controlled(&d, &xi, &t, &c).unwrap()));
    }
    let opt = solve_controlled(&d, &xi, &t, &s.control).unwrap();
    assert!(opt.y.max_abs_diff(&s.v).unwrap() < 1e-13);
}

#[test]
fn dpp_and_comparison() {
    let t = tree(6, &[0.5, 1.0]);
    let xi = t.claim(&ClaimSpec::Abs).unwrap();
    let d = generic();
    let s = solve_2bsde(&d, &xi, &t).unwrap();
    for k in [0, 3, 6] {
        assert!(dpp_check(&d, &s, &t, k).unwrap().verdict.holds());
    }
    assert!(dpp_check(&d, &s, &t, 7).is_err());
    let up = xi.map(|x| x + 0.3);
    let r = comparison_2bsde((&d, &xi), (&d, &up), &t).unwrap();
    assert!(r.verdict.holds() && r.max_violation < 0.0);
    let r = comparison_2bsde((&d, &up), (&d, &xi), &t).unwrap();
    assert_eq!(r.verdict, Verdict::Inapplicable);
}

#[test]
fn integrability_tails() {
    let t = tree(6, &[0.5, 1.0]);
    let bounded = t.claim(&ClaimSpec::Constant(1.0)).unwrap();
    let s = solve_2bsde(&LipschitzDriver::zero(), &bounded, &t).unwrap();
    let r = v_integrability_check(&s, &t, 0.5, &[2.0, 4.0]).unwrap();
    assert_eq!(r.values, vec![0.0, 0.0]);
    let heavy = t.claim(&ClaimSpec::Pareto { alpha: 1.5, scale: 1.0 }).unwrap();
    let s = solve_2bsde(&LipschitzDriver::zero(), &heavy, &t).unwrap();
    let r = v_integrability_check(&s, &t, 0.5, &[2.0, 4.0, 8.0, 16.0]).unwrap();
    assert!(r.satisfied && r.values[0] > 0.0, "{r:?}");
}

#[test]
fn larger_level_set_dominates() {
    let small = tree(4, &[1.0]);
    let large = tree(4, &[0.5, 1.0, 1.5]);
    let d = generic();
    let spec = ClaimSpec::Put { spot: 1.0, strike: 1.0 };
    let s1 = solve_2bsde(&d, &small.claim(&spec).unwrap(), &small).unwrap();
    let s2 = solve_2bsde(&d, &large.claim(&spec).unwrap(), &large).unwrap();
    let r = regime_monotonicity_check((&s1, &small), (&s2, &large)).unwrap();
    assert!(r.verdict.holds(), "{r:?}");
    let r = regime_monotonicity_check((&s2, &large), (&s1, &small)).unwrap();
    assert_eq!(r.verdict, Verdict::Inapplicable);
}

#[test]
fn embedding_preserves_paths() {
    let small = tree(3, &[1.0, 0.5]);
    let large = tree(3, &[0.5, 2.0, 1.0]);
    for i in 0..small.leaf_count() {
        let j = small.embed_index(3, i, &large).unwrap();
        assert_eq!(small.b_path(3, i), large.b_path(3, j));
    }
}
