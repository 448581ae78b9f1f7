//! Registered experiment suites. Each suite turns one seeded instance into
//! report rows; every suite emits at least one asserted row per instance.

use l1bsde::bsde::{
    apriori_estimate_check, comparison_check, solve_bsde, stability_check, tower_property_check, truncation_scheme,
    ConvergenceReport, Problem,
};
use l1bsde::nonlinexp::{brute_force_sup_expectation, check_uniform_integrability, sup_expectation, DEFAULT_DELTA_GRID};
use l1bsde::norms::{brute_force_d_norm, d_norm, doob_inequality_check, running_sup_bound_check};
use l1bsde::rbsde::{
    obstacle_truncation_scheme, rbsde_comparison_check, rbsde_stability_check, refinement_stable, snell_oracle,
    snell_oracle_exhaustive, solve_rbsde, zk_estimate_check, ObstaclePath, ObstacleSpec, ReflectedProblem,
};
use l1bsde::tolerance::{BOUND, ENUMERATION_NODES, EXACT, MINIMALITY};
use l1bsde::twobsde::{
    brute_force_2bsde, comparison_2bsde, dpp_check, enumeration_size, regime_monotonicity_check,
    representation_and_minimality, solve_2bsde, supersolution_check, RegimeControl, RegimeTree, UncertaintySet,
    ENUMERATION_CAP,
};
use l1bsde::{
    build_lattice, claim_from_spec, tilt, ClaimSpec, LabError, LipschitzDriver, PathLattice, RegimeSpec, Result,
    TerminalClaim, TimeGrid,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ClaimChoice, DriverSpec, ExperimentConfig, ObstacleChoice};
use crate::generate::{bumped, random_driver, random_process, random_values, raised, submartingale};
use crate::report::Row;

type Suite = fn(&mut Instance<'_>) -> Result<Vec<Row>>;

const REGISTRY: [(&str, Suite); 12] = [
    ("oracle", oracle),
    ("doob", doob),
    ("apriori", apriori),
    ("comparison", comparison),
    ("truncation", truncation),
    ("stability", stability),
    ("rbsde", rbsde),
    ("obstacle_truncation", obstacle_truncation),
    ("zk_estimate", zk_estimate),
    ("twobsde", twobsde),
    ("uniform_integrability", uniform_integrability),
    ("tower", tower),
];

/// Largest ratio spread tolerated across refinements in the Z-K estimate.
const ZK_MAX_GROWTH: f64 = 10.0;

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

/// Suites whose depth is limited by the joint regime tree.
pub fn uses_regime_tree(name: &str) -> bool {
    name == "twobsde"
}

pub fn lookup(name: &str) -> Option<Suite> {
    REGISTRY.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// One seeded instance of an experiment.
pub struct Instance<'a> {
    pub cfg: &'a ExperimentConfig,
    pub id: usize,
    pub rng: ChaCha8Rng,
}

impl Instance<'_> {
    fn steps(&self) -> usize {
        self.cfg.steps_for(self.id)
    }

    fn grid(&self, n: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.cfg.horizon, n)
    }

    fn lattice(&self, n: usize) -> Result<PathLattice> {
        build_lattice(self.grid(n)?, &RegimeSpec::Constant(1.0))
    }

    fn driver(&mut self, dt: f64) -> LipschitzDriver {
        match &self.cfg.driver {
            DriverSpec::Fixed(d) => d.clone(),
            DriverSpec::Random => random_driver(&mut self.rng, dt),
        }
    }

    fn claim(&mut self, lattice: &PathLattice) -> Result<TerminalClaim> {
        match &self.cfg.claim {
            ClaimChoice::Spec(s) => claim_from_spec(lattice, s),
            ClaimChoice::Random => TerminalClaim::new(random_values(&mut self.rng, lattice.leaf_count())),
        }
    }

    fn tree_claim(&mut self, tree: &RegimeTree) -> Result<TerminalClaim> {
        match &self.cfg.claim {
            ClaimChoice::Spec(s) => tree.claim(s),
            ClaimChoice::Random => TerminalClaim::new(random_values(&mut self.rng, tree.leaf_count())),
        }
    }

    fn obstacle(&mut self, lattice: &PathLattice) -> Result<ObstaclePath> {
        match &self.cfg.obstacle {
            ObstacleChoice::Spec(s) => ObstaclePath::from_spec(lattice, s),
            ObstacleChoice::Random => ObstaclePath::from_process(random_process(&mut self.rng, lattice, -1.0, 2.0), lattice),
        }
    }

    /// Random drift bound in `[0, min(L, 0.9 / sqrt(dt))]`.
    fn drift_bound(&mut self, lattice: &PathLattice) -> f64 {
        let cap = self.cfg.bound.min(0.9 / lattice.grid().sqrt_dt());
        if cap > 0.0 { self.rng.gen_range(0.0..=cap) } else { 0.0 }
    }
}

pub fn run_instance(suite: Suite, inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let mut rows = suite(inst)?;
    for r in &mut rows {
        r.experiment = inst.cfg.name.clone();
        r.instance = inst.id;
    }
    Ok(rows)
}

fn levels_param(set: &UncertaintySet) -> String {
    set.levels().iter().map(|l| l.to_string()).collect::<Vec<_>>().join("/")
}

fn max_scaled_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / (1.0 + y.abs())).fold(0.0, f64::max)
}

fn within(value: f64, bound: f64) -> bool {
    value <= bound + BOUND * (1.0 + bound.abs())
}

fn oracle(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let bound = inst.drift_bound(&lattice);
    let param = format!("N={n};L={bound}");
    let claim = inst.claim(&lattice)?;
    let dp = sup_expectation(claim.values(), bound, &lattice)?;
    let bf = brute_force_sup_expectation(claim.values(), bound, &lattice)?;
    let mut rows = vec![
        Row::within("sup_expectation_gap", &param, (dp.value - bf.value).abs(), EXACT, 0.0),
        Row::within(
            "tilt_value_gap",
            &param,
            (tilt(&lattice, &dp.optimal_control)?.expectation(claim.values()) - dp.value).abs(),
            EXACT,
            0.0,
        ),
    ];
    if 2 * ((1usize << n) - 1) <= ENUMERATION_NODES {
        let x = random_process(&mut inst.rng, &lattice, -2.0, 2.0);
        let gap = (d_norm(&x, bound, &lattice)? - brute_force_d_norm(&x, bound, &lattice)?).abs();
        rows.push(Row::within("d_norm_gap", &param, gap, EXACT, 0.0));
    }
    Ok(rows)
}

fn doob(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let bound = inst.drift_bound(&lattice);
    let m = submartingale(&mut inst.rng, &lattice, bound);
    let mut rows = Vec::new();
    for &beta in &inst.cfg.betas {
        let param = format!("N={n};L={bound};beta={beta}");
        let r = doob_inequality_check(&m, beta, bound, &lattice)?;
        rows.push(Row::verdict("s_beta_norm", &param, r.lhs, r.rhs, r.verdict));
        let s = running_sup_bound_check(&m, beta, bound, &lattice, &[])?;
        let worst = s.per_measure.iter().copied().min_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)));
        match worst {
            Some((lhs, rhs)) => rows.push(Row::verdict("running_sup", &param, lhs, rhs, s.verdict)),
            None => rows.push(Row::verdict("running_sup", &param, 0.0, 0.0, s.verdict)),
        }
    }
    Ok(rows)
}

fn apriori(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let driver = inst.driver(lattice.grid().dt());
    let claim = inst.claim(&lattice)?;
    let beta = inst.cfg.beta_for(inst.id);
    let sol = solve_bsde(&driver, &claim, &lattice)?;
    let r = apriori_estimate_check(&driver, &claim, &sol, beta, &lattice)?;
    let param = format!("N={n};L={};beta={beta}", driver_l(&driver));
    Ok(vec![
        Row::verdict("d_norm", &param, r.d_norm, r.d_bound, r.verdict),
        Row::within("residual", &param, sol.residual, EXACT, 0.0),
        Row::report("sh_ratio", &format!("{param};constant={}", r.constant), r.ratio),
    ])
}

fn driver_l(d: &LipschitzDriver) -> f64 {
    use l1bsde::Driver;
    d.lipschitz_z()
}

fn comparison(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let shift = inst.rng.gen_range(0.0..0.5);
    match inst.id % 3 {
        0 => {
            let lattice = inst.lattice(n)?;
            let d1 = inst.driver(lattice.grid().dt());
            let d2 = raised(&d1, shift);
            let xi1 = inst.claim(&lattice)?;
            let xi2 = TerminalClaim::new(bumped(&mut inst.rng, xi1.values()))?;
            let r = comparison_check(&d1, &xi1, &d2, &xi2, &lattice)?;
            Ok(vec![Row::verdict("bsde_violation", &format!("N={n}"), r.scaled_violation, EXACT, r.verdict)])
        }
        1 => {
            let n = n.min(8);
            let lattice = inst.lattice(n)?;
            let d1 = inst.driver(lattice.grid().dt());
            let d2 = raised(&d1, shift);
            let xi1 = inst.claim(&lattice)?;
            let xi2 = TerminalClaim::new(bumped(&mut inst.rng, xi1.values()))?;
            let s1 = ObstaclePath::from_process(random_process(&mut inst.rng, &lattice, -1.0, 2.0), &lattice)?;
            let mut s2 = s1.values().clone();
            for t in 0..=n {
                *s2.slice_mut(t) = bumped(&mut inst.rng, s1.values().slice(t));
            }
            let s2 = ObstaclePath::from_process(s2, &lattice)?;
            let r = rbsde_comparison_check(
                ReflectedProblem { driver: &d1, claim: &xi1, obstacle: &s1 },
                ReflectedProblem { driver: &d2, claim: &xi2, obstacle: &s2 },
                &lattice,
            )?;
            Ok(vec![Row::verdict("rbsde_violation", &format!("N={n}"), r.scaled_violation, EXACT, r.verdict)])
        }
        _ => {
            let n = n.min(5);
            let tree = RegimeTree::new(inst.grid(n)?, inst.cfg.uncertainty.clone())?;
            let d1 = inst.driver(tree.grid().dt());
            let d2 = raised(&d1, shift);
            let xi1 = inst.tree_claim(&tree)?;
            let xi2 = TerminalClaim::new(bumped(&mut inst.rng, xi1.values()))?;
            let r = comparison_2bsde((&d1, &xi1), (&d2, &xi2), &tree)?;
            let param = format!("N={n};U={}", levels_param(&inst.cfg.uncertainty));
            Ok(vec![Row::verdict("twobsde_violation", &param, r.scaled_violation, EXACT, r.verdict)])
        }
    }
}

/// Rows shared by the two truncation schemes.
fn convergence_rows(report: &ConvergenceReport, param: &str, strict: bool) -> Vec<Row> {
    let applicable = report.verdict != l1bsde::Verdict::Inapplicable;
    let bounded = |q: &str, p: String, d: f64, b: f64| {
        if applicable {
            Row::within(q, &p, d, b, BOUND * (1.0 + b.abs()))
        } else {
            Row::verdict(q, &p, d, b, l1bsde::Verdict::Inapplicable)
        }
    };
    let mut rows = Vec::new();
    for (k, &level) in report.levels.iter().enumerate() {
        rows.push(bounded("distance", format!("{param};n={level}"), report.distances[k], report.bounds[k]));
        let p = format!("{param};n={level};beta={}", report.beta);
        rows.push(Row::report("s_beta_distance", &p, report.s_beta_distances[k]));
    }
    for (&(lo, hi, d), &b) in report.pair_distances.iter().zip(&report.bounds) {
        rows.push(bounded("pair_distance", format!("{param};n={lo};m={hi}"), d, b));
    }
    for (w, l) in report.distances.windows(2).zip(report.levels.windows(2)) {
        let p = format!("{param};n={};m={}", l[0], l[1]);
        let change = w[1] - w[0];
        rows.push(if strict {
            Row::verdict("distance_change", &p, change, 0.0, l1bsde::Verdict::from_bool(change < 0.0))
        } else {
            Row::within("distance_change", &p, change, 0.0, EXACT * (1.0 + w[0].abs()))
        });
    }
    rows
}

fn truncation(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let driver = inst.driver(lattice.grid().dt());
    let claim = inst.claim(&lattice)?;
    let report = truncation_scheme(&driver, &claim, &lattice, &inst.cfg.levels)?;
    Ok(convergence_rows(&report, &format!("N={n};L={}", driver_l(&driver)), true))
}

fn stability(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let dt = lattice.grid().dt();
    let beta = inst.cfg.beta_for(inst.id);
    let d1 = inst.driver(dt);
    let xi1 = inst.claim(&lattice)?;
    let (d2, xi2) = if inst.cfg.pair == "identical" {
        (d1.clone(), xi1.clone())
    } else {
        let d2 = random_driver(&mut inst.rng, dt);
        let xi2 = TerminalClaim::new(random_values(&mut inst.rng, lattice.leaf_count()))?;
        (d2, xi2)
    };
    let param = format!("N={n};pair={};beta={beta}", inst.cfg.pair);
    let r = stability_check(Problem { driver: &d1, claim: &xi1 }, Problem { driver: &d2, claim: &xi2 }, beta, &lattice)?;
    let mut rows = vec![
        Row::verdict("d_norm", &param, r.d_norm, r.d_bound, r.verdict),
        Row::report("sh_ratio", &format!("{param};constant={}", r.constant), r.ratio),
    ];
    if inst.cfg.obstacle != ObstacleChoice::Spec(ObstacleSpec::None) {
        let s = inst.obstacle(&lattice)?;
        let r = rbsde_stability_check(
            ReflectedProblem { driver: &d1, claim: &xi1, obstacle: &s },
            ReflectedProblem { driver: &d2, claim: &xi2, obstacle: &s },
            beta,
            &lattice,
        )?;
        rows.push(Row::verdict("rbsde_d_norm", &param, r.d_norm, r.d_bound, r.verdict));
        rows.push(Row::report("rbsde_s_beta_dk", &format!("{param};constant={}", r.constant), r.s_beta_dk));
    }
    Ok(rows)
}

fn rbsde(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let param = format!("N={n}");
    let claim = inst.claim(&lattice)?;
    let obstacle = inst.obstacle(&lattice)?;
    let zero = LipschitzDriver::zero();
    let sol = solve_rbsde(&zero, &claim, &obstacle, &lattice)?;
    let snell = snell_oracle(&claim, &obstacle, &lattice)?;
    let gap = (0..=n).map(|t| max_scaled_gap(sol.y.slice(t), snell.slice(t))).fold(0.0, f64::max);
    let mut rows = vec![
        Row::within("snell_gap", &param, gap, EXACT, 0.0),
        Row::within("skorokhod_defect", &param, sol.skorokhod_defect, EXACT, 0.0),
        Row::within("residual", &param, sol.residual, EXACT, 0.0),
        Row::within("obstacle_violation", &param, sol.obstacle_violation(&obstacle), 0.0, 0.0),
    ];
    let driver = inst.driver(lattice.grid().dt());
    let driven = solve_rbsde(&driver, &claim, &obstacle, &lattice)?;
    rows.push(Row::within("driven_skorokhod_defect", &param, driven.skorokhod_defect, EXACT, 0.0));
    rows.push(Row::within("driven_residual", &param, driven.residual, EXACT, 0.0));
    rows.push(Row::within("driven_obstacle_violation", &param, driven.obstacle_violation(&obstacle), 0.0, 0.0));
    if (1usize << n) - 1 <= ENUMERATION_NODES {
        let y0 = sol.y.get(0, 0);
        let best = snell_oracle_exhaustive(&claim, &obstacle, &lattice)?;
        rows.push(Row::within("snell_exhaustive_gap", &param, (y0 - best).abs() / (1.0 + best.abs()), EXACT, 0.0));
        let put = ClaimSpec::Put { spot: 1.0, strike: 1.0 };
        let put_claim = claim_from_spec(&lattice, &put)?;
        let put_obstacle = ObstaclePath::from_spec(&lattice, &ObstacleSpec::Payoff(put))?;
        let american = solve_rbsde(&zero, &put_claim, &put_obstacle, &lattice)?.y.get(0, 0);
        let best = snell_oracle_exhaustive(&put_claim, &put_obstacle, &lattice)?;
        rows.push(Row::within("american_put_gap", &param, (american - best).abs() / (1.0 + best.abs()), EXACT, 0.0));
    }
    Ok(rows)
}

fn obstacle_truncation(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let driver = inst.driver(lattice.grid().dt());
    let claim = inst.claim(&lattice)?;
    let obstacle = inst.obstacle(&lattice)?;
    let param = format!("N={n};L={}", driver_l(&driver));
    let report = obstacle_truncation_scheme(&driver, &claim, &obstacle, &lattice, &inst.cfg.levels)?;
    let mut rows = convergence_rows(&report, &param, false);
    // consecutive truncated solutions increase with the level
    let sols = inst
        .cfg
        .levels
        .iter()
        .map(|&l| solve_rbsde(&driver, &claim, &obstacle.truncated(l), &lattice))
        .collect::<Result<Vec<_>>>()?;
    for (w, l) in sols.windows(2).zip(inst.cfg.levels.windows(2)) {
        let v = (0..=n)
            .flat_map(|t| w[0].y.slice(t).iter().zip(w[1].y.slice(t)).map(|(a, b)| (a - b) / (1.0 + b.abs())).collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(Row::within("order_violation", &format!("{param};n={};m={}", l[0], l[1]), v, EXACT, 0.0));
    }
    Ok(rows)
}

fn zk_estimate(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let beta = inst.cfg.beta_for(inst.id);
    let mut ratios = Vec::new();
    let mut rows = Vec::new();
    let dt_min = inst.cfg.horizon / *inst.cfg.steps.iter().max().expect("nonempty") as f64;
    let driver = inst.driver(dt_min);
    for &n in &inst.cfg.steps.clone() {
        let lattice = inst.lattice(n)?;
        let claim = inst.claim(&lattice)?;
        let obstacle = inst.obstacle(&lattice)?;
        let sol = solve_rbsde(&driver, &claim, &obstacle, &lattice)?;
        let r = zk_estimate_check(&driver, &sol, beta, &lattice)?;
        rows.push(Row::report("zk_ratio", &format!("N={n};beta={beta}"), r.ratio));
        ratios.push(r.ratio);
    }
    let positive: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0).collect();
    let spread = if positive.is_empty() {
        1.0
    } else {
        positive.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / positive.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let spread = if ratios.iter().all(|r| r.is_finite()) { spread } else { f64::INFINITY };
    let verdict = refinement_stable(&ratios, ZK_MAX_GROWTH);
    rows.push(Row::verdict("zk_refinement_spread", &format!("beta={beta}"), spread, ZK_MAX_GROWTH, verdict));
    Ok(rows)
}

fn twobsde(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let set = inst.cfg.uncertainty.clone();
    let tree = RegimeTree::new(inst.grid(n)?, set.clone())?;
    let driver = inst.driver(tree.grid().dt());
    let claim = inst.tree_claim(&tree)?;
    let sol = solve_2bsde(&driver, &claim, &tree)?;
    let param = format!("N={n};U={}", levels_param(&set));
    let mut rows = vec![Row::within("residual", &param, sol.residual, EXACT, 0.0)];

    let mut controls = vec![("argmax".to_string(), sol.control.clone())];
    for r in 0..tree.regimes() {
        controls.push((format!("constant{r}"), RegimeControl::constant(&tree, r)?));
    }
    for (label, c) in &controls {
        let s = supersolution_check(&driver, &sol, &tree, c);
        rows.push(Row::verdict("supersolution_defect", &format!("{param};P={label}"), s.max_defect, EXACT, s.verdict));
        rows.push(Row::within("push_negativity", &format!("{param};P={label}"), -s.min_increment, EXACT, 0.0));
    }

    let seed: u64 = inst.rng.gen();
    let base = RegimeControl::random(&tree, seed);
    for tau in 0..=n {
        let (rep, min) = representation_and_minimality(&driver, &claim, &sol, &tree, tau, &base, seed)?;
        let p = format!("{param};tau={tau};exhaustive={}", rep.exhaustive);
        rows.push(Row::verdict("representation_gap", &p, rep.max_gap, BOUND, rep.verdict));
        rows.push(Row::within("minimality_max", &p, min.max_infimum, MINIMALITY, 0.0));
        rows.push(Row::within("minimality_min", &p, -min.min_infimum, EXACT, 0.0));
    }

    let dpp = dpp_check(&driver, &sol, &tree, n / 2)?;
    rows.push(Row::verdict("dpp_gap", &format!("{param};k={}", n / 2), dpp.max_diff, EXACT, dpp.verdict));

    let v0 = sol.value();
    if enumeration_size(tree.regimes(), n) <= ENUMERATION_CAP {
        let bf = brute_force_2bsde(&driver, &claim, &tree)?;
        rows.push(Row::within("brute_force_gap", &param, (v0 - bf).abs() / (1.0 + bf.abs()), BOUND, 0.0));
    }
    let convex = inst.cfg.claim == ClaimChoice::Spec(ClaimSpec::Square)
        && inst.cfg.driver == DriverSpec::Fixed(LipschitzDriver::zero());
    if convex {
        let top = set.levels().iter().cloned().fold(0.0, f64::max);
        let exact = top * top * inst.cfg.horizon;
        rows.push(Row::within("convex_value_gap", &format!("{param};exact={exact}"), (v0 - exact).abs(), BOUND, 0.0));
    }
    rows.push(Row::report("value", &param, v0));

    if set.len() >= 2 {
        let small_set = UncertaintySet::new(vec![set.levels()[0]])?;
        let small = RegimeTree::new(inst.grid(n)?, small_set)?;
        let small_claim = match &inst.cfg.claim {
            ClaimChoice::Spec(s) => small.claim(s)?,
            // restrict the random claim to histories that only use the first level
            ClaimChoice::Random => {
                let vals = (0..small.leaf_count()).map(|i| small.embed_index(n, i, &tree).map(|j| claim.values()[j]));
                TerminalClaim::new(vals.collect::<Result<Vec<_>>>()?)?
            }
        };
        let small_sol = solve_2bsde(&driver, &small_claim, &small)?;
        let m = regime_monotonicity_check((&small_sol, &small), (&sol, &tree))?;
        rows.push(Row::verdict("regime_order_violation", &param, m.max_violation, 0.0, m.verdict));
    }
    Ok(rows)
}

fn uniform_integrability(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let driver = inst.driver(lattice.grid().dt());
    let claim = inst.claim(&lattice)?;
    let bound = driver_l(&driver);
    let full = solve_bsde(&driver, &claim, &lattice)?;
    let mut family = vec![full.y.clone()];
    for &level in &inst.cfg.levels {
        family.push(solve_bsde(&driver, &claim.truncated(level), &lattice)?.y);
    }
    let ui = check_uniform_integrability(&family, bound, &lattice, &DEFAULT_DELTA_GRID)?;
    let apriori = apriori_estimate_check(&driver, &claim, &full, inst.cfg.beta_for(inst.id), &lattice)?;
    let param = format!("N={n};L={bound}");
    let mut rows = vec![Row::verdict(
        "ui_sup_norm",
        &param,
        ui.sup_norm,
        apriori.d_bound,
        apriori.verdict.and(l1bsde::Verdict::from_bool(within(ui.sup_norm, apriori.d_bound))),
    )];
    for p in &ui.profile {
        rows.push(Row::report("ui_epsilon", &format!("{param};delta={};leaves={}", p.delta, p.event_leaves), p.epsilon));
    }
    for w in ui.profile.windows(2) {
        let p = format!("{param};delta={};next={}", w[0].delta, w[1].delta);
        rows.push(Row::within("ui_profile_increase", &p, w[1].epsilon - w[0].epsilon, 0.0, 0.0));
    }
    Ok(rows)
}

fn tower(inst: &mut Instance<'_>) -> Result<Vec<Row>> {
    let n = inst.steps();
    let lattice = inst.lattice(n)?;
    let driver = inst.driver(lattice.grid().dt());
    let claim = inst.claim(&lattice)?;
    let mut rows = Vec::new();
    for k in 0..=n {
        let r = tower_property_check(&driver, &claim, &lattice, k)?;
        rows.push(Row::verdict("tower_gap", &format!("N={n};k={k}"), r.max_diff, EXACT, r.verdict));
    }
    if n <= inst.cfg.uncertainty.depth_cap().min(6) {
        let tree = RegimeTree::new(inst.grid(n)?, inst.cfg.uncertainty.clone())?;
        let xi = inst.tree_claim(&tree)?;
        let sol = solve_2bsde(&driver, &xi, &tree)?;
        for k in 0..=n {
            let r = dpp_check(&driver, &sol, &tree, k)?;
            rows.push(Row::verdict("dpp_gap", &format!("N={n};k={k}"), r.max_diff, EXACT, r.verdict));
        }
    }
    Ok(rows)
}

/// Whether an error is a cap violation rather than a solver failure.
pub fn is_cap_error(e: &LabError) -> bool {
    matches!(e, LabError::DepthCapExceeded { .. } | LabError::InstanceTooLarge { .. })
}
