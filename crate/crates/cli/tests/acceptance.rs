//! Acceptance suite: twelve end-to-end criteria covering the full engine.
//!
//! Each test prints exactly one `ACCEPTANCE <nn> <name>: PASS|FAIL` line
//! (visible with `cargo test --test acceptance -- --nocapture`) and then
//! asserts, so a red run pinpoints the violated criterion and the first
//! failing checks.

use gooddeal::algebra::{concave_majorant, convolve, majorant_measure, max_risk};
use gooddeal::estimation::est_alpha_var;
use gooddeal::pricing::{
    liquidity_curve, nsao_check, price_interval, superreplication_split, Aggregation, MarketModel,
    NsaoCertificate, NsaoOutcome, Side, ValuationGroup,
};
use gooddeal::scenario::{RandomVariable, ScenarioSpace};
use gooddeal::spectral::WeightingMeasure;
use gooddeal::testkit;
use gooddeal::transforms::extreme_measure;
use rand::Rng;

// The pricing module exports `dual_price_bound`; imported separately so the
// primal/dual cross-check reads clearly at the call site.
use gooddeal::pricing::dual_price_bound;
use gooddeal::sensitivity::{call_delta_payoff, delta_interval};

/// Accumulates check failures for one criterion, then emits the verdict
/// line and asserts.
struct Criterion {
    number: usize,
    name: &'static str,
    failures: Vec<String>,
    checks: usize,
}

impl Criterion {
    fn new(number: usize, name: &'static str) -> Self {
        Criterion {
            number,
            name,
            failures: Vec::new(),
            checks: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    /// |got - want| <= tol.
    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, || format!("{what}: got {got}, want {want} (tol {tol})"));
    }

    /// lhs <= rhs + slack.
    fn at_most(&mut self, lhs: f64, rhs: f64, slack: f64, what: &str) {
        let ok = lhs <= rhs + slack;
        self.check(ok, || format!("{what}: {lhs} > {rhs} + {slack}"));
    }

    fn finish(self) {
        let ok = self.failures.is_empty();
        let status = if ok { "PASS" } else { "FAIL" };
        println!(
            "ACCEPTANCE {:02} {}: {} ({} checks{})",
            self.number,
            self.name,
            status,
            self.checks,
            if ok {
                String::new()
            } else {
                format!(", {} failed", self.failures.len())
            }
        );
        if !ok {
            let shown: Vec<&String> = self.failures.iter().take(5).collect();
            panic!(
                "criterion {:02} {} failed {} of {} checks; first failures: {:#?}",
                self.number,
                self.name,
                self.failures.len(),
                self.checks,
                shown
            );
        }
    }
}

/// The worked measure pair used throughout: a two-atom weighting measure
/// and a pure tail measure whose distortions cross at 1/2.
fn worked_pair() -> (WeightingMeasure<f64>, WeightingMeasure<f64>) {
    let mu1 = WeightingMeasure::new(vec![(1.0 / 3.0, 0.5), (1.0, 0.5)]).unwrap();
    let mu2 = WeightingMeasure::tail_var(2.0 / 3.0).unwrap();
    (mu1, mu2)
}

fn spectral(measures: &[WeightingMeasure<f64>]) -> Vec<ValuationGroup<f64>> {
    measures
        .iter()
        .cloned()
        .map(ValuationGroup::Spectral)
        .collect()
}

/// Two-point balanced market: stock (1, -1) on a fair coin, claim (1, 0).
fn two_point_market() -> (MarketModel<f64>, RandomVariable<f64>) {
    let space = ScenarioSpace::uniform(2).unwrap();
    let stock = RandomVariable::new(vec![1.0, -1.0]).unwrap();
    let market = MarketModel::new(space, vec![("stock".to_string(), stock)]).unwrap();
    let claim = RandomVariable::new(vec![1.0, 0.0]).unwrap();
    (market, claim)
}

#[test]
fn acceptance_01_distortion_majorant_reconstruction() {
    let mut c = Criterion::new(1, "distortion-majorant-reconstruction");
    let (mu1, mu2) = worked_pair();
    let d1 = mu1.distortion();
    let d2 = mu2.distortion();
    let hull = concave_majorant(&[d1.clone(), d2.clone()]).unwrap();

    let probes: [f64; 5] = [0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0];
    for &x in &probes {
        let psi1 = 0.5 * (3.0 * x).min(1.0) + 0.5 * x;
        let psi2 = (1.5 * x).min(1.0);
        c.close(d1.value(x), psi1, 1e-12, &format!("first distortion at {x}"));
        c.close(d2.value(x), psi2, 1e-12, &format!("second distortion at {x}"));
    }
    let hull_want = [0.0, 2.0 / 3.0, 5.0 / 6.0, 1.0, 1.0];
    for (&x, &want) in probes.iter().zip(&hull_want) {
        c.close(hull.value(x), want, 1e-12, &format!("majorant at {x}"));
    }

    let reconstructed = majorant_measure(&[mu1, mu2]).unwrap();
    let atoms = reconstructed.atoms();
    c.check(atoms.len() == 2, || {
        format!("majorant measure has {} atoms, want 2", atoms.len())
    });
    if atoms.len() == 2 {
        c.close(atoms[0].0, 1.0 / 3.0, 1e-12, "first atom level");
        c.close(atoms[0].1, 1.0 / 3.0, 1e-12, "first atom weight");
        c.close(atoms[1].0, 2.0 / 3.0, 1e-12, "second atom level");
        c.close(atoms[1].1, 2.0 / 3.0, 1e-12, "second atom weight");
    }
    c.finish();
}

#[test]
fn acceptance_02_max_aggregation_vs_majorant_gap() {
    let mut c = Criterion::new(2, "max-aggregation-vs-majorant-gap");
    let (mu1, mu2) = worked_pair();
    let space = ScenarioSpace::uniform(3).unwrap();
    let x = RandomVariable::new(vec![-1.0, 0.0, 1000.0]).unwrap();

    let rho_max = max_risk(&[mu1.clone(), mu2.clone()], &space, &x).unwrap();
    c.close(rho_max, 0.5, 1e-12, "largest component risk");

    let hull_measure = majorant_measure(&[mu1, mu2]).unwrap();
    let rho_hull = hull_measure.risk(&space, &x).unwrap();
    c.close(rho_hull, 2.0 / 3.0, 1e-12, "majorant-measure risk");

    c.check(rho_hull - rho_max >= 0.16, || {
        format!(
            "gap {} below 0.16: the maximum of risks is strictly cheaper \
             than any single dominating measure",
            rho_hull - rho_max
        )
    });
    c.finish();
}

#[test]
fn acceptance_03_convolution_identity_and_round_trip() {
    let mut c = Criterion::new(3, "convolution-identity-and-round-trip");
    let (mu1, mu2) = worked_pair();
    let conv = convolve(&[mu1, mu2]).unwrap();
    let atoms = conv.atoms();
    c.check(atoms.len() == 2, || {
        format!("convolution has {} atoms, want 2", atoms.len())
    });
    if atoms.len() == 2 {
        c.close(atoms[0].0, 0.5, 1e-12, "first atom level");
        c.close(atoms[0].1, 0.5, 1e-12, "first atom weight");
        c.close(atoms[1].0, 1.0, 1e-12, "second atom level");
        c.close(atoms[1].1, 0.5, 1e-12, "second atom weight");
    }
    let mass: f64 = atoms.iter().map(|&(_, w)| w).sum();
    c.close(mass, 1.0, 1e-12, "total mass");

    let mut rng = testkit::rng(30_001);
    for trial in 0..500 {
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 6);
        let back = mu.distortion().to_weighting().unwrap();
        c.check(back.len() == mu.len(), || {
            format!(
                "trial {trial}: round trip changed the atom count {} -> {}",
                mu.len(),
                back.len()
            )
        });
        if back.len() == mu.len() {
            for (orig, rec) in mu.atoms().iter().zip(back.atoms()) {
                c.check(
                    (orig.0 - rec.0).abs() <= 1e-10 && (orig.1 - rec.1).abs() <= 1e-10,
                    || format!("trial {trial}: atom {orig:?} came back as {rec:?}"),
                );
            }
        }
    }
    c.finish();
}

#[test]
fn acceptance_04_primal_dual_agreement() {
    let mut c = Criterion::new(4, "primal-dual-agreement");
    let started = std::time::Instant::now();
    let mut rng = testkit::rng(40_001);
    for trial in 0..50 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 10);
        let n = space.len();
        let asset_count = rng.gen_range(1..=3usize);
        let assets: Vec<(String, RandomVariable<f64>)> = (0..asset_count)
            .map(|i| {
                (
                    format!("a{i}"),
                    testkit::random_centered_rv(&mut rng, &space, 2.0),
                )
            })
            .collect();
        let market = MarketModel::new(space, assets).unwrap();
        let f = testkit::random_rv(&mut rng, n, 2.0);
        let group_count = rng.gen_range(1..=2usize);
        let measures: Vec<WeightingMeasure<f64>> = (0..group_count)
            .map(|_| testkit::random_weighting(&mut rng, 4))
            .collect();
        let groups = spectral(&measures);

        let primal = price_interval(&market, &groups, &f, Aggregation::Convolution).unwrap();
        let dual_upper = dual_price_bound(&market, &groups, &f, Side::Upper).unwrap();
        let dual_lower = dual_price_bound(&market, &groups, &f, Side::Lower).unwrap();
        c.close(primal.upper, dual_upper, 1e-7, &format!("trial {trial} upper"));
        c.close(primal.lower, dual_lower, 1e-7, &format!("trial {trial} lower"));
    }
    let elapsed = started.elapsed();
    c.check(elapsed.as_secs_f64() < 60.0, || {
        format!("50 instances took {elapsed:?}, budget is 60s")
    });
    c.finish();
}

#[test]
fn acceptance_05_coherence_axioms() {
    let mut c = Criterion::new(5, "coherence-axioms");
    let tol = 1e-9;

    let mut rng = testkit::rng(50_001);
    for trial in 0..1000 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let x = testkit::random_rv(&mut rng, n, 5.0);
        let y = testkit::random_rv(&mut rng, n, 5.0);
        let rx = mu.risk(&space, &x).unwrap();
        let rsum = mu.risk(&space, &x.add(&y).unwrap()).unwrap();
        let ry = mu.risk(&space, &y).unwrap();
        c.at_most(rsum, rx + ry, tol, &format!("subadditivity trial {trial}"));
    }

    let mut rng = testkit::rng(50_002);
    for trial in 0..1000 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let x = testkit::random_rv(&mut rng, n, 5.0);
        let bump = testkit::random_rv(&mut rng, n, 2.0)
            .map(|v: f64| v.abs())
            .unwrap();
        let better = x.add(&bump).unwrap();
        let rx = mu.risk(&space, &x).unwrap();
        let rb = mu.risk(&space, &better).unwrap();
        c.at_most(rb, rx, tol, &format!("monotonicity trial {trial}"));
    }

    let mut rng = testkit::rng(50_003);
    for trial in 0..1000 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let x = testkit::random_rv(&mut rng, n, 5.0);
        let scale = rng.gen_range(0.01..3.0);
        let rx = mu.risk(&space, &x).unwrap();
        let rs = mu.risk(&space, &x.affine(scale, 0.0).unwrap()).unwrap();
        c.close(
            rs,
            scale * rx,
            tol,
            &format!("positive homogeneity trial {trial}"),
        );
    }

    let mut rng = testkit::rng(50_004);
    for trial in 0..1000 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let x = testkit::random_rv(&mut rng, n, 5.0);
        let cash = rng.gen_range(-3.0..3.0);
        let rx = mu.risk(&space, &x).unwrap();
        let rshift = mu.risk(&space, &x.affine(1.0, cash).unwrap()).unwrap();
        c.close(
            rshift,
            rx - cash,
            tol,
            &format!("translation invariance trial {trial}"),
        );
    }
    c.finish();
}

#[test]
fn acceptance_06_extreme_measures() {
    let mut c = Criterion::new(6, "extreme-measures");
    let mut rng = testkit::rng(60_001);
    for trial in 0..200 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 10);
        let n = space.len();
        let mu: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let w = testkit::random_rv_distinct(&mut rng, n, 5.0, 0.05);

        let extreme = extreme_measure(&mu, &space, &w).unwrap();
        let q = extreme.measure;

        // Attainment: the risk equals the negated expectation under the
        // extreme measure.
        let rho = mu.risk(&space, &w).unwrap();
        c.close(
            rho,
            -q.expectation(&w).unwrap(),
            1e-10,
            &format!("trial {trial} attainment"),
        );

        // Membership: every event satisfies the distortion bound.
        let d = mu.distortion();
        let masses = q.masses();
        let probs = space.probs();
        for mask in 1u32..((1u32 << n) - 1) {
            let mut qa = 0.0;
            let mut pa = 0.0;
            for (j, (&qj, &pj)) in masses.iter().zip(probs).enumerate() {
                if mask & (1 << j) != 0 {
                    qa += qj;
                    pa += pj;
                }
            }
            c.check(qa <= d.value(pa) + 1e-10, || {
                format!(
                    "trial {trial} mask {mask:b}: Q(A)={qa} exceeds bound {}",
                    d.value(pa)
                )
            });
        }

        // Directional derivative: perturbing the portfolio by a small
        // multiple of any trade moves the risk by the negated expectation
        // of the trade under the extreme measure.
        let x = testkit::random_rv(&mut rng, n, 1.0);
        let eps = 1e-3;
        let bumped = w.add(&x.affine(eps, 0.0).unwrap()).unwrap();
        let deriv = (mu.risk(&space, &bumped).unwrap() - rho) / eps;
        c.close(
            deriv,
            -q.expectation(&x).unwrap(),
            1e-8,
            &format!("trial {trial} directional derivative"),
        );
    }
    c.finish();
}

#[test]
fn acceptance_07_tranche_plan() {
    let mut c = Criterion::new(7, "tranche-plan");
    let (mu1, mu2) = worked_pair();

    // Worked fixture: liability L = (-1, 0, 1, 2) on four fair scenarios;
    // pricing the claim -L makes the residual exactly L.
    let space = ScenarioSpace::uniform(4).unwrap();
    let liability = [-1.0, 0.0, 1.0, 2.0];
    let f = RandomVariable::new(liability.iter().map(|&v| -v).collect()).unwrap();
    let market = MarketModel::new(space.clone(), vec![]).unwrap();
    let groups = spectral(&[mu1.clone(), mu2.clone()]);
    let plan = superreplication_split(&market, &groups, &f).unwrap();

    for (j, (&got, &want)) in plan.residual.values().iter().zip(&liability).enumerate() {
        c.close(got, want, 1e-9, &format!("residual scenario {j}"));
    }
    c.check(plan.groups.len() == 2, || {
        format!("{} tranche groups, want 2", plan.groups.len())
    });

    // First group keeps the upper tail (L-1)^+ and pays for it with a
    // negative shift; the second gets the capped part min(L, 1).
    let senior: Vec<f64> = liability.iter().map(|&v| (v - 1.0).max(0.0)).collect();
    let junior: Vec<f64> = liability.iter().map(|&v| v.min(1.0)).collect();
    c.close(plan.groups[0].shift, -0.125, 1e-9, "first group shift");
    c.close(plan.groups[1].shift, 0.125, 1e-9, "second group shift");
    for j in 0..4 {
        let raw0 = plan.groups[0].payoff.values()[j] - plan.groups[0].shift;
        let raw1 = plan.groups[1].payoff.values()[j] - plan.groups[1].shift;
        c.close(raw0, senior[j], 1e-9, &format!("upper tranche scenario {j}"));
        c.close(raw1, junior[j], 1e-9, &format!("capped tranche scenario {j}"));
    }
    c.close(
        mu1.risk(&space, &plan.groups[0].payoff).unwrap(),
        0.0,
        1e-9,
        "first group final risk",
    );
    c.close(
        mu2.risk(&space, &plan.groups[1].payoff).unwrap(),
        0.0,
        1e-9,
        "second group final risk",
    );

    // Generic invariants on random instances: the carving maps sum to the
    // identity, the tranches sum to the residual, the shifts sum to zero,
    // and every tranche is costless for its group.
    let mut rng = testkit::rng(70_001);
    for trial in 0..100 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let asset_count = rng.gen_range(0..=2usize);
        let assets: Vec<(String, RandomVariable<f64>)> = (0..asset_count)
            .map(|i| {
                (
                    format!("a{i}"),
                    testkit::random_centered_rv(&mut rng, &space, 2.0),
                )
            })
            .collect();
        let market = MarketModel::new(space.clone(), assets).unwrap();
        let f = testkit::random_rv(&mut rng, n, 2.0);
        let group_count = rng.gen_range(1..=3usize);
        let measures: Vec<WeightingMeasure<f64>> = (0..group_count)
            .map(|_| testkit::random_weighting(&mut rng, 4))
            .collect();
        let plan = superreplication_split(&market, &spectral(&measures), &f).unwrap();

        let shift_sum: f64 = plan.groups.iter().map(|g| g.shift).sum();
        c.close(shift_sum, 0.0, 1e-9, &format!("trial {trial} shift sum"));

        for j in 0..n {
            let total: f64 = plan.groups.iter().map(|g| g.payoff.values()[j]).sum();
            c.close(
                total,
                plan.residual.values()[j],
                1e-9,
                &format!("trial {trial} tranche sum scenario {j}"),
            );
        }

        // Identity of the carving maps at residual values and midpoints.
        let mut probes: Vec<f64> = plan.residual.values().to_vec();
        probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mids: Vec<f64> = probes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        probes.extend(mids);
        probes.push(probes[0] - 1.0);
        probes.push(probes[probes.len() - 1] + 1.0);
        for &x in &probes {
            let total: f64 = plan.groups.iter().map(|g| g.payoff_map.value(x)).sum();
            c.close(total, x, 1e-9, &format!("trial {trial} map identity at {x}"));
        }

        for (k, (g, mu)) in plan.groups.iter().zip(&measures).enumerate() {
            c.close(
                mu.risk(&space, &g.payoff).unwrap(),
                0.0,
                1e-9,
                &format!("trial {trial} group {k} final risk"),
            );
        }
    }
    c.finish();
}

#[test]
fn acceptance_08_complete_market_collapse() {
    let mut c = Criterion::new(8, "complete-market-collapse");
    let (market, claim) = two_point_market();
    let groups = spectral(&[WeightingMeasure::tail_var(0.5).unwrap()]);
    let p = price_interval(&market, &groups, &claim, Aggregation::Convolution).unwrap();
    c.close(p.lower, 0.5, 1e-9, "replicable claim lower price");
    c.close(p.upper, 0.5, 1e-9, "replicable claim upper price");

    // A constant payoff derivative prices to a single point under any
    // valuation groups: there is nothing left to disagree about.
    let space = ScenarioSpace::uniform(4).unwrap();
    let flat = RandomVariable::constant(4, 1.0).unwrap();
    let deriv = call_delta_payoff(1.0, 0.5, 0.0, 1.0, &flat).unwrap();
    let no_assets = MarketModel::new(space, vec![]).unwrap();
    let groups = spectral(&[WeightingMeasure::tail_var(0.7).unwrap()]);
    let d = delta_interval(&no_assets, &groups, &deriv, Aggregation::Convolution).unwrap();
    c.close(d.upper - d.lower, 0.0, 1e-9, "constant-payoff delta width");
    c.finish();
}

#[test]
fn acceptance_09_interval_monotonicity() {
    let mut c = Criterion::new(9, "interval-monotonicity");
    let slack = 1e-9;
    let mut rng = testkit::rng(90_001);
    for trial in 0..100 {
        let space: ScenarioSpace<f64> = testkit::random_space(&mut rng, 8);
        let n = space.len();
        let asset_count = rng.gen_range(0..=2usize);
        let assets: Vec<(String, RandomVariable<f64>)> = (0..asset_count)
            .map(|i| {
                (
                    format!("a{i}"),
                    testkit::random_centered_rv(&mut rng, &space, 2.0),
                )
            })
            .collect();
        let market = MarketModel::new(space, assets).unwrap();
        let f = testkit::random_rv(&mut rng, n, 2.0);
        let g1: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);
        let g2: WeightingMeasure<f64> = testkit::random_weighting(&mut rng, 4);

        let one = price_interval(
            &market,
            &spectral(std::slice::from_ref(&g1)),
            &f,
            Aggregation::Convolution,
        )
        .unwrap();
        let both = price_interval(
            &market,
            &spectral(&[g1.clone(), g2.clone()]),
            &f,
            Aggregation::Convolution,
        )
        .unwrap();
        let both_max =
            price_interval(&market, &spectral(&[g1, g2]), &f, Aggregation::Maximum).unwrap();

        c.at_most(one.lower, both.lower, slack, &format!("trial {trial} lower grows"));
        c.at_most(both.upper, one.upper, slack, &format!("trial {trial} upper shrinks"));
        c.at_most(
            both_max.lower,
            both.lower,
            slack,
            &format!("trial {trial} conv lower within max"),
        );
        c.at_most(
            both.upper,
            both_max.upper,
            slack,
            &format!("trial {trial} conv upper within max"),
        );
    }
    c.finish();
}

#[test]
fn acceptance_10_liquidity_closed_form() {
    let mut c = Criterion::new(10, "liquidity-closed-form");
    let (mut market, claim) = two_point_market();
    market.set_bounds(0, Some(-1.0), Some(1.0)).unwrap();
    let groups = spectral(&[WeightingMeasure::tail_var(0.5).unwrap()]);

    let volumes = [1e-6, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0, 16.0];
    let curve = liquidity_curve(&market, &groups, &claim, &volumes).unwrap();
    for point in &curve {
        let want = if point.volume <= 2.0 {
            0.5
        } else {
            1.0 - 1.0 / point.volume
        };
        c.close(
            point.upper,
            want,
            1e-8,
            &format!("upper price at volume {}", point.volume),
        );
    }
    for pair in curve.windows(2) {
        c.at_most(
            pair[0].upper,
            pair[1].upper,
            1e-12,
            &format!(
                "upper price nondecreasing from v={} to v={}",
                pair[0].volume, pair[1].volume
            ),
        );
    }

    // The small-volume endpoint agrees with the frictionless cone price.
    let (cone_market, _) = two_point_market();
    let cone = price_interval(&cone_market, &groups, &claim, Aggregation::Convolution).unwrap();
    c.close(curve[0].upper, cone.upper, 1e-8, "v -> 0 endpoint");
    c.finish();
}

#[test]
fn acceptance_11_monte_carlo_accuracy() {
    let mut c = Criterion::new(11, "monte-carlo-accuracy");
    let mut rng = testkit::rng(110_001);
    let samples: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();

    for (alpha, want) in [(2usize, -1.0 / 3.0), (3usize, -0.25)] {
        let est = est_alpha_var(&samples, alpha, 100_000, 99).unwrap();
        c.check(est.std_error > 0.0, || {
            format!("alpha {alpha}: standard error {} not positive", est.std_error)
        });
        c.check((est.value - want).abs() <= 3.0 * est.std_error, || {
            format!(
                "alpha {alpha}: estimate {} misses {} by more than 3 x {}",
                est.value, want, est.std_error
            )
        });

        let again = est_alpha_var(&samples, alpha, 100_000, 99).unwrap();
        c.check(
            est.value.to_bits() == again.value.to_bits()
                && est.std_error.to_bits() == again.std_error.to_bits(),
            || format!("alpha {alpha}: seeded rerun is not bitwise identical"),
        );
    }
    c.finish();
}

#[test]
fn acceptance_12_opportunity_detection() {
    let mut c = Criterion::new(12, "opportunity-detection");

    // Library level: the free-money market is flagged with a usable trade,
    // the balanced market passes.
    let space = ScenarioSpace::uniform(2).unwrap();
    let free = MarketModel::new(
        space,
        vec![(
            "stock".to_string(),
            RandomVariable::new(vec![1.0, 1.0]).unwrap(),
        )],
    )
    .unwrap();
    let groups = spectral(&[WeightingMeasure::tail_var(0.5).unwrap()]);
    match nsao_check(&free, &groups, Aggregation::Convolution).unwrap() {
        NsaoOutcome::Violated(NsaoCertificate::AcceptableTrade { hedge }) => {
            c.check(hedge[0] > 0.0, || {
                format!("certificate trade {hedge:?} is not a long position")
            });
        }
        other => c.check(false, || format!("free money not flagged: {other:?}")),
    }
    let (balanced, _) = two_point_market();
    c.check(
        nsao_check(&balanced, &groups, Aggregation::Convolution).unwrap() == NsaoOutcome::Holds,
        || "balanced market flagged as violated".to_string(),
    );

    // CLI level: exit codes 4 (violated, with certificate on stdout) and 0.
    let dir = tempfile::TempDir::new().unwrap();
    let free_path = dir.path().join("free.json");
    std::fs::write(
        &free_path,
        r#"{"labels": ["a", "b"], "probs": [0.5, 0.5], "columns": {"stock": [1.0, 1.0]}}"#,
    )
    .unwrap();
    let two_path = dir.path().join("two.json");
    std::fs::write(
        &two_path,
        r#"{"labels": ["up", "down"], "probs": [0.5, 0.5],
           "columns": {"stock": [1.0, -1.0], "claim": [1.0, 0.0]}}"#,
    )
    .unwrap();

    let run = |scenarios: &std::path::Path| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = gooddeal_cli::run_with(
            [
                "gooddeal",
                "ftap",
                "--scenarios",
                scenarios.to_str().unwrap(),
                "--asset",
                "stock",
                "--group",
                "tailvar:0.5",
            ],
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap())
    };

    let (code, out) = run(&free_path);
    c.check(code == 4, || format!("free-money exit code {code}, want 4"));
    let doc: gooddeal_cli::FtapJson = serde_json::from_str(out.trim()).unwrap();
    c.check(!doc.holds && doc.certificate.is_some(), || {
        format!("free-money report lacks a certificate: {out}")
    });

    let (code, out) = run(&two_path);
    c.check(code == 0, || format!("balanced exit code {code}, want 0"));
    let doc: gooddeal_cli::FtapJson = serde_json::from_str(out.trim()).unwrap();
    c.check(doc.holds && doc.certificate.is_none(), || {
        format!("balanced market misreported: {out}")
    });
    c.finish();
}
