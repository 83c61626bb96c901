//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line; the
//! binary exits non-zero if any criterion fails.

use std::time::Instant;

use formsym::dynamics::{bifurcation_sweep, linearize_at, locus_check, CurvePair, SweepGrid, PERIOD_TOL};
use formsym::expr::{BinOp, Func, Node};
use formsym::factorize::{
    factor_hd1, factor_linear_full, factor_separable_additive, factor_separable_multiplicative, reduce,
    simulate_factorization, verify_equivalence, verify_semiconjugacy, EquivalenceMode, ReduceOptions, Reduction,
    ScFactorization,
};
use formsym::model::rel_err;
use formsym::poly::solve_order2_closed_form;
use formsym::symmetry::{check_hd1, solve_reduction_constant, GridSpec};
use formsym::{format_expression, iterate_orbit, parse_expression, Complex64 as C, DifferenceEquation, Expression, GroupTag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn r(v: f64) -> C {
    C::new(v, 0.0)
}

fn reals(v: &[f64]) -> Vec<C> {
    v.iter().map(|&x| r(x)).collect()
}

fn p(s: &str) -> Expression {
    parse_expression(s).unwrap()
}

fn general(order: usize, group: GroupTag, rhs: &str, params: &[(&str, f64)]) -> DifferenceEquation {
    let mut eq = DifferenceEquation::general(order, group, p(rhs)).unwrap();
    for (name, v) in params {
        eq = eq.with_param(name, *v).unwrap();
    }
    eq
}

fn rk(k: usize, a: f64, b: f64) -> DifferenceEquation {
    general(k + 1, GroupTag::MultiplicativePositive, &format!("x0*(a*x{}/x{k} + b)", k - 1), &[("a", a), ("b", b)])
}

fn two_hd1(a: f64) -> DifferenceEquation {
    general(3, GroupTag::AdditiveReal, "x0 + a*(x0 - x1)^2/(x1 - x2)", &[("a", a)])
}

fn hs(a: f64) -> DifferenceEquation {
    general(3, GroupTag::AdditiveReal, "x0 + a*(x0 - x1)/(x1 - x2)", &[("a", a)])
}

fn exp_eq(a: f64) -> DifferenceEquation {
    DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("exp(-x)"), p("x*exp(-x)")], p("exp(a)"))
        .unwrap()
        .with_param("a", a)
        .unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn linear_cascade() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut worst_rebuild: f64 = 0.0;
    for i in 0..50 {
        let order = rng.gen_range(2..=7);
        let b: Vec<C> = (0..order).map(|_| r(rng.gen_range(-2.0..=2.0))).collect();
        let forcing = if i % 2 == 0 { "0".to_string() } else { format!("{}*{}^n", rng.gen_range(-1.0..1.0), rng.gen_range(-1.5..1.5)) };
        let eq = DifferenceEquation::linear(b, p(&forcing)).unwrap();
        let init: Vec<C> = (0..order).map(|_| r(rng.gen_range(-1.0..=1.0))).collect();
        let tri = factor_linear_full(&eq).map_err(|e| format!("equation {i}: {e}"))?;
        worst_rebuild = worst_rebuild.max(tri.reconstruction_error());
        let rep = verify_equivalence(&eq, &Reduction::Triangular(tri), &init, 50, 1e-6, EquivalenceMode::FreeRunning)
            .map_err(|e| format!("equation {i}: {e}"))?;
        worst = worst.max(rep.max_deviation);
        if !rep.passed {
            return Err(format!("equation {i}: deviation {:e} at n = {}", rep.max_deviation, rep.worst_index));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && worst_rebuild <= 1e-8 && secs < 5.0,
        format!("50 equations, max deviation {worst:.2e}, max coefficient error {worst_rebuild:.2e}, {secs:.2}s"),
    )
}

fn eigenvalue_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let q: f64 = rng.gen_range(-3.0..3.0);
        let eq = DifferenceEquation::linear(reals(&[-1.0 - q, q]), p("0")).unwrap();
        let set = solve_reduction_constant(&eq, &GridSpec::default(), 1e-9).map_err(|e| e.to_string())?;
        let found = set.expanded();
        if found.len() != 2 {
            return Err(format!("q = {q}: {} constants", found.len()));
        }
        let d1 = (found[0] - r(1.0)).norm().max((found[1] - r(q)).norm());
        let d2 = (found[0] - r(q)).norm().max((found[1] - r(1.0)).norm());
        worst = worst.max(d1.min(d2));
    }
    check(worst <= 1e-8, format!("10 values of q, max error {worst:.2e}"))
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for case in 0..30 {
        let (b, forcing): ([C; 2], Box<dyn Fn(usize) -> C>) = match case / 10 {
            0 => {
                let (c0, c1) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                ([r(-(c0 + c1)), r(c0 * c1)], Box::new(|_| r(0.0)))
            }
            1 => {
                let c = rng.gen_range(-1.5..1.5);
                ([r(-2.0 * c), r(c * c)], Box::new(|_| r(0.0)))
            }
            _ => {
                let (c0, c1) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                let amp = rng.gen_range(-1.0..1.0);
                // every other case forces at an eigenvalue (confluent branch)
                let g = if case % 2 == 0 { c1 } else { rng.gen_range(-1.5..1.5) };
                ([r(-(c0 + c1)), r(c0 * c1)], Box::new(move |n: usize| r(amp * g.powi(n as i32))))
            }
        };
        let init = [r(rng.gen_range(-1.0..1.0)), r(rng.gen_range(-1.0..1.0))];
        let forcing_ref = &forcing;
        let mut x_prev = init[0];
        let mut x = init[1];
        for n in 1..=25 {
            let next = forcing_ref(n - 1) - b[0] * x - b[1] * x_prev;
            x_prev = x;
            x = next;
            let closed = solve_order2_closed_form(b, forcing_ref, init[0], init[1], n).map_err(|e| e.to_string())?;
            worst = worst.max(rel_err(closed, x));
        }
        cases += 1;
    }
    check(worst <= 1e-8, format!("{cases} instances, max deviation {worst:.2e}"))
}

fn hd1_suite() -> Outcome {
    let eqs = [
        ("rk k=2", rk(2, 0.3, 0.4)),
        ("rk k=3", rk(3, 0.3, 0.4)),
        ("2hd1", two_hd1(1.5)),
        ("hs", hs(1.5)),
    ];
    let mut worst: f64 = 0.0;
    for (name, eq) in &eqs {
        let rep = check_hd1(eq, 500, 1e-9, 4);
        if !rep.verdict {
            return Err(format!("{name} fails: residual {:e} over {} samples", rep.max_residual, rep.samples_tested));
        }
        worst = worst.max(rep.max_residual);
    }
    let square = general(2, GroupTag::AdditiveReal, "x0^2", &[]);
    let rep = check_hd1(&square, 500, 1e-9, 4);
    let Some(w) = rep.witness.filter(|_| !rep.verdict) else {
        return Err("x0^2 passes the HD1 check".into());
    };
    check(true, format!("4 equations pass (max residual {worst:.2e}); x0^2 fails with residual {:.2e}", w.residual))
}

fn quadratic_hd1_closed_form() -> Outcome {
    let a: f64 = 1.0;
    let eq = two_hd1(a);
    let init = reals(&[0.0, 1.0, 3.0]);
    let direct = iterate_orbit(&eq, &init, 20).map_err(|e| e.to_string())?;
    let red = reduce(&eq, &ReduceOptions::default()).map_err(|e| e.to_string())?.reduction;
    let sim = simulate_factorization(&red, &init, 20).map_err(|e| e.to_string())?;
    let (t0, tm1): (f64, f64) = (3.0 - 1.0, 1.0 - 0.0);
    let s0 = t0 / tm1;
    let mut worst: f64 = 0.0;
    let mut sum = 0.0;
    for n in 1..=20usize {
        let j = n as f64;
        sum += s0.powi(n as i32) * a.powf(j * (j + 1.0) / 2.0);
        let formula = r(3.0 + t0 * sum);
        worst = worst.max(rel_err(direct.values[n - 1], formula)).max(rel_err(sim.orbit.values[n - 1], formula));
    }
    let first = (direct.values[0], direct.values[1]);
    check(
        worst <= 1e-8 && first == (r(7.0), r(15.0)) && red.is_full(),
        format!("x1 = {}, x2 = {}, max deviation {worst:.2e} for n <= 20", first.0.re, first.1.re),
    )
}

fn period_six_orbits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    while trials < 20 {
        let a = rng.gen_range(0.5..2.0);
        let init: Vec<C> = (0..3).map(|_| r(rng.gen_range(-5.0..5.0))).collect();
        if (init[2] - init[1]).norm() < 0.1 || (init[1] - init[0]).norm() < 0.1 {
            continue;
        }
        trials += 1;
        let eq = hs(a);
        let fact = factor_hd1(&eq).map_err(|e| e.to_string())?;
        let sim = simulate_factorization(&Reduction::Sc(fact), &init, 60).map_err(|e| e.to_string())?;
        let period = sim.factor.detect_period(1e-9, 12).map(|p| p.period);
        if period != Some(6) {
            return Err(format!("a = {a}, init {init:?}: factor period {period:?}"));
        }
        let (tm1, t0) = (init[1] - init[0], init[2] - init[1]);
        let six = [tm1, t0, a * t0 / tm1, a * a / tm1, a * a / t0, a * tm1 / t0];
        let sigma: C = six.iter().sum();
        let t = |i: usize| six[(i + 1) % 6];
        for n in 1..=60usize {
            let rho = n % 6;
            let tail: C = (n - rho + 1..=n).map(t).sum();
            let formula = init[2] + sigma / 6.0 * (n - rho) as f64 + tail;
            worst = worst.max(rel_err(sim.orbit.values[n - 1], formula));
        }
    }
    check(worst <= 1e-8, format!("20 inits with period 6, max deviation {worst:.2e} for n <= 60"))
}

fn exp_map_properties() -> Outcome {
    let a = 4.6;
    let eq = exp_eq(a);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // (a) r-sequence period 2 and (b) locus
    let mut worst_r: f64 = 0.0;
    let mut worst_locus: f64 = 0.0;
    for _ in 0..20 {
        let (xm1, x0) = (rng.gen_range(0.0..6.0f64).max(1e-3), rng.gen_range(0.0..6.0f64).max(1e-3));
        let orbit = iterate_orbit(&eq, &reals(&[xm1, x0]), 300).map_err(|e| e.to_string())?;
        let full: Vec<f64> = orbit.full().iter().map(|z| z.re).collect();
        let ratio: Vec<f64> = full.windows(2).map(|w| w[1] / (w[0] * (-w[0]).exp())).collect();
        for w in ratio.windows(3) {
            worst_r = worst_r.max((w[2] - w[0]).abs() / (1.0 + w[0].abs()));
        }
        let rep = locus_check(&orbit, &CurvePair::from_init(a, xm1, x0), 1e-6);
        if !rep.passed {
            return Err(format!("locus fails for ({xm1}, {x0}) at pair {:?}", rep.first_failure));
        }
        worst_locus = worst_locus.max(rep.worst_residual);
    }
    if worst_r > 1e-9 {
        return Err(format!("r-sequence deviates from period 2 by {worst_r:e}"));
    }
    // (c) sweep
    let start = Instant::now();
    let grid = SweepGrid { lo: 2.3, hi: 4.8, count: 500 };
    let data = bifurcation_sweep(&eq, &reals(&[2.3, 0.0]), 1, &grid, 100, 200, PERIOD_TOL).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let census = data.census();
    let period2 = census.periods.get(&2).copied().unwrap_or(0);
    let odd: Vec<usize> = census.periods.keys().copied().filter(|p| p % 2 == 1 && *p > 1).collect();
    let period1_elsewhere = data.points.iter().any(|pt| pt.period == Some(1) && pt.param != 2.3);
    if period2 == 0 || !odd.is_empty() || period1_elsewhere || secs >= 30.0 {
        return Err(format!("census {:?}, odd periods {odd:?}, {secs:.1}s", census.periods));
    }
    // (d) linearization
    let mut lin_err: f64 = 0.0;
    let at = linearize_at(&eq, 2.3).map_err(|e| e.to_string())?;
    for want in [-1.0, -1.3] {
        let best = at.eigenvalues.iter().map(|z| rel_err(*z, r(want))).fold(f64::INFINITY, f64::min);
        lin_err = lin_err.max(best);
    }
    let at0 = linearize_at(&eq, 0.0).map_err(|e| e.to_string())?;
    let e = (a / 2.0).exp();
    for want in [e, -e] {
        let best = at0.eigenvalues.iter().map(|z| rel_err(*z, r(want))).fold(f64::INFINITY, f64::min);
        lin_err = lin_err.max(best);
    }
    let periods: Vec<String> = census.periods.iter().map(|(p, c)| format!("{p}:{c}")).collect();
    check(
        lin_err <= 1e-3,
        format!(
            "r period-2 error {worst_r:.1e}, locus residual {worst_locus:.1e}, census [{}] in {secs:.2}s, linearization error {lin_err:.1e}",
            periods.join(" ")
        ),
    )
}

fn ratio_cascade() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut worst_imag: f64 = 0.0;
    let mut constant = None;
    for _ in 0..20 {
        let a = rng.gen_range(0.5..2.0);
        let x0: f64 = rng.gen_range(0.0..5.0);
        let xm1 = x0 - rng.gen_range(0.1..3.0);
        let xm2 = xm1 - rng.gen_range(0.1..3.0);
        let eq = hs(a);
        let red = reduce(&eq, &ReduceOptions::default()).map_err(|e| e.to_string())?.reduction;
        let levels = red.levels();
        let c = levels.last().and_then(|l| l.constant()).ok_or("no separable level in the cascade")?;
        constant = Some(c);
        let rep = verify_equivalence(&eq, &red, &reals(&[xm2, xm1, x0]), 60, 1e-6, EquivalenceMode::FreeRunning)
            .map_err(|e| e.to_string())?;
        if !rep.passed {
            return Err(format!("a = {a}: deviation {:e} at n = {}, {:?}", rep.max_deviation, rep.worst_index, rep.mismatch));
        }
        worst = worst.max(rep.max_deviation);
        worst_imag = worst_imag.max(rep.max_imag);
    }
    let c = constant.unwrap();
    let expected_ok = (c.re - 0.5).abs() < 1e-8 && (c.im.abs() - 3f64.sqrt() / 2.0).abs() < 1e-8;
    check(
        expected_ok && worst_imag <= 1e-8,
        format!("c = {:.6}{:+.6}i, 20 inits, max deviation {worst:.2e}, max imaginary part {worst_imag:.1e}", c.re, c.im),
    )
}

fn semiconjugacy() -> Outcome {
    let mut facts: Vec<(String, ScFactorization)> = Vec::new();
    let push_red = |facts: &mut Vec<(String, ScFactorization)>, name: &str, red: &Reduction| {
        for (i, level) in red.levels().into_iter().enumerate() {
            facts.push((format!("{name} level {}", i + 1), level.clone()));
        }
    };
    for (name, eq) in [("rk k=2", rk(2, 0.3, 0.4)), ("rk k=3", rk(3, 0.8, 0.7)), ("2hd1", two_hd1(1.0)), ("hs", hs(1.0))] {
        facts.push((name.to_string(), factor_hd1(&eq).map_err(|e| format!("{name}: {e}"))?));
        if let Ok(red) = reduce(&eq, &ReduceOptions::default()) {
            push_red(&mut facts, &format!("{name} cascade"), &red.reduction);
        }
    }
    let exp = exp_eq(4.6);
    facts.push(("exp".into(), factor_separable_multiplicative(&exp, r(-1.0)).map_err(|e| e.to_string())?));
    let hd0 = DifferenceEquation::separable(GroupTag::MultiplicativePositive, vec![p("x"), p("1/x")], p("a"))
        .unwrap()
        .with_param("a", 1.3)
        .unwrap();
    let s3 = 3f64.sqrt() / 2.0;
    for c in [C::new(0.5, s3), C::new(0.5, -s3)] {
        facts.push((format!("hd0 c = {c}"), factor_separable_multiplicative(&hd0, c).map_err(|e| e.to_string())?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..10 {
        let q: f64 = rng.gen_range(-2.0..2.0);
        let lin = DifferenceEquation::linear(reals(&[-1.0 - q, q]), p("0.5^n")).unwrap();
        for c in [r(1.0), r(q)] {
            facts.push((format!("lin2 #{i} c = {c}"), factor_separable_additive(&lin, c).map_err(|e| e.to_string())?));
        }
        let order = rng.gen_range(2..=5);
        let b: Vec<C> = (0..order).map(|_| r(rng.gen_range(-2.0..=2.0))).collect();
        let lin = DifferenceEquation::linear(b, p("1")).unwrap();
        let c = factor_linear_full(&lin).map_err(|e| e.to_string())?.eigenvalues()[0];
        facts.push((format!("linear #{i}"), factor_separable_additive(&lin, c).map_err(|e| e.to_string())?));
    }
    let mut worst: f64 = 0.0;
    for (name, f) in &facts {
        let rep = verify_semiconjugacy(f.source(), f.symmetry(), f.factor(), 200, 1e-9, 10);
        if !rep.passed {
            return Err(format!("{name}: residual {:e} over {} samples", rep.max_residual, rep.samples_tested));
        }
        worst = worst.max(rep.max_residual);
    }
    let good = factor_separable_multiplicative(&exp, r(-1.0)).unwrap();
    let corrupted = general(1, GroupTag::MultiplicativePositive, "exp(a)*x0", &[("a", 4.6)]);
    let rep = verify_semiconjugacy(&exp, good.symmetry(), &corrupted, 200, 1e-9, 10);
    check(
        !rep.passed,
        format!("{} factorizations pass (max residual {worst:.2e}); corrupted factor residual {:.2e}", facts.len(), rep.max_residual),
    )
}

fn rational_ratio_asymptotics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let init: Vec<C> = (0..3).map(|_| r(rng.gen_range(0.5..2.0))).collect();
    let small = iterate_orbit(&rk(2, 0.3, 0.4), &init, 500).map_err(|e| e.to_string())?;
    let large = iterate_orbit(&rk(2, 0.8, 0.7), &init, 500).map_err(|e| e.to_string())?;
    let below = small.values.iter().position(|v| v.norm() < 1e-6);
    let above = large.values.iter().position(|v| v.norm() > 1e6);
    check(
        below.is_some() && above.is_some(),
        format!("(0.3, 0.4) below 1e-6 at n = {:?}; (0.8, 0.7) above 1e6 at n = {:?}", below.map(|i| i + 1), above.map(|i| i + 1)),
    )
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize) -> Node {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 => Node::var("x0"),
            1 => Node::var("x1"),
            2 => Node::var("a"),
            _ => Node::real((rng.gen_range(-50.0..50.0f64) * 100.0).round() / 100.0),
        };
    }
    match rng.gen_range(0..8) {
        0 => Node::neg(random_tree(rng, depth - 1)),
        1 => {
            let f = [Func::Exp, Func::Sin, Func::Cos, Func::Sqrt, Func::Ln][rng.gen_range(0..5)];
            Node::call(f, random_tree(rng, depth - 1))
        }
        2 => Node::Binary(BinOp::Pow, Box::new(random_tree(rng, depth - 1)), Box::new(Node::real(rng.gen_range(-3..=3) as f64))),
        k => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Add][k - 3];
            Node::Binary(op, Box::new(random_tree(rng, depth - 1)), Box::new(random_tree(rng, depth - 1)))
        }
    }
}

fn parser_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let env = formsym::Bindings::new().with("x0", 0.7).with("x1", C::new(-1.3, 0.4)).with("a", 2.1);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < 200 && attempts < 10_000 {
        attempts += 1;
        let tree = Expression::new(random_tree(&mut rng, 5));
        let Ok(want) = tree.evaluate(&env) else { continue };
        if !want.is_finite() {
            continue;
        }
        let text = format_expression(&tree);
        let back = parse_expression(&text).map_err(|e| format!("`{text}`: {e}"))?;
        let got = back.evaluate(&env).map_err(|e| format!("`{text}`: {e}"))?;
        let d = rel_err(got, want);
        if d.is_nan() || d > 1e-12 {
            return Err(format!("`{text}`: {got} vs {want}"));
        }
        worst = worst.max(d);
        done += 1;
    }
    check(done == 200, format!("{done} trees, max deviation {worst:.2e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("linear cascade equivalence", linear_cascade),
        ("eigenvalue identity", eigenvalue_identity),
        ("order-2 closed forms", closed_forms),
        ("HD1 suite", hd1_suite),
        ("quadratic HD1 closed form", quadratic_hd1_closed_form),
        ("period-6 orbits and explicit solution", period_six_orbits),
        ("exp map properties", exp_map_properties),
        ("ratio equation full cascade", ratio_cascade),
        ("semiconjugacy verifier", semiconjugacy),
        ("ratio equation asymptotics", rational_ratio_asymptotics),
        ("parser round trip", parser_roundtrip),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
