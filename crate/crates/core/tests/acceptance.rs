//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use membrane_core::grid::{Grid, ScalarField, NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};
use membrane_core::membranes::{
    iterate, nonuniqueness_demo, two_membrane_residual, MembraneConfig, Mode,
};
use membrane_core::obstacle::{dualize, solve, ObstacleProblem, Side, SolverSettings};
use membrane_core::operators::{energy, energy_gradient, OperatorForm, OperatorSpec};
use membrane_core::verify::{
    audit_cross_solver, audit_trace, grid_refinement_study, AuditConfig, RefinementSetup,
};
use membrane_core::viscosity::{solve_visc_obstacle, SchemeConfig};
use membrane_core::Expr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 201;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn field(grid: Grid, src: &str) -> ScalarField {
    ScalarField::sample(grid, &Expr::parse(src).unwrap()).unwrap()
}

fn var(grid: Grid, p: f64, h: f64) -> OperatorSpec {
    OperatorSpec::variational(p, ScalarField::constant(grid, h)).unwrap()
}

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn golden_free_solves() -> Outcome {
    let g = Grid::new(1, N).unwrap();
    let settings = SolverSettings::default();
    let upper = ObstacleProblem::new(
        var(g, 2.0, 10.0),
        Side::Below,
        ScalarField::constant(g, NO_OBSTACLE_BELOW),
        ScalarField::constant(g, 1.0),
    )
    .unwrap();
    let lower = ObstacleProblem::new(
        var(g, 2.0, -2.0),
        Side::Above,
        ScalarField::constant(g, NO_OBSTACLE_ABOVE),
        ScalarField::zeros(g),
    )
    .unwrap();
    let u = solve(&upper, &settings).unwrap();
    let v = solve(&lower, &settings).unwrap();
    let eu = u.solution.sup_distance(&field(g, "-5*x*(1-x)+1"));
    let ev = v.solution.sup_distance(&field(g, "x*(1-x)"));
    check(
        u.converged && v.converged && eu <= 1e-8 && ev <= 1e-8,
        format!("sup errors û {eu:.2e}, ṽ {ev:.2e} (tol 1e-8)"),
    )
}

fn nonuniqueness() -> Outcome {
    let demo = nonuniqueness_demo().map_err(|e| e.to_string())?;
    let ok = demo.residual_hat.passes(1e-6)
        && demo.residual_tilde.passes(1e-6)
        && demo.separation >= 0.499;
    check(
        ok,
        format!(
            "residuals (û,v̂) {:.2e}/{:.2e}, (ũ,ṽ) {:.2e}/{:.2e}, sup|û−ũ| = {:.6}",
            demo.residual_hat.first,
            demo.residual_hat.second,
            demo.residual_tilde.first,
            demo.residual_tilde.second,
            demo.separation
        ),
    )
}

fn monotone_convergence() -> Outcome {
    let g = Grid::new(1, N).unwrap();
    let (s1, s2) = (var(g, 2.0, 10.0), var(g, 2.0, -2.0));
    let (f, gb) = (ScalarField::constant(g, 1.0), ScalarField::zeros(g));
    let cfg = MembraneConfig::new(
        s1.clone(),
        s2.clone(),
        f.clone(),
        gb.clone(),
        ScalarField::zeros(g),
        Mode::IncreasingFromSub,
    );
    let trace = iterate(&cfg).map_err(|e| e.to_string())?;
    let audits = audit_trace(&trace, &AuditConfig::default());
    let mono = audits[0].worst_value;
    let order = audits[1].worst_value;
    let (u, v) = trace.final_pair();
    let res = two_membrane_residual(u, v, &s1, &s2, &f, &gb).unwrap();

    let down = MembraneConfig::new(
        s1,
        s2,
        f,
        gb,
        field(g, "-5*x*(1-x)+1"),
        Mode::DecreasingFromSuper,
    );
    let dtrace = iterate(&down).map_err(|e| e.to_string())?;
    let change = dtrace.u[1]
        .sup_distance(&dtrace.u[0])
        .max(dtrace.v[1].sup_distance(&dtrace.v[0]));

    check(
        trace.converged
            && mono >= -1e-8
            && order >= -1e-8
            && res.first <= 1e-6
            && res.second <= 1e-6
            && dtrace.converged
            && dtrace.outer_steps() == 1
            && change <= 1e-8,
        format!(
            "increasing: {} steps, worst monotone {mono:.1e}, min gap {order:.1e}, defects {:.1e}/{:.1e}; decreasing: {} step(s), change {change:.1e}",
            trace.outer_steps(),
            res.first,
            res.second,
            dtrace.outer_steps()
        ),
    )
}

fn random_below_problem(rng: &mut ChaCha8Rng, grid: Grid, p: f64) -> ObstacleProblem {
    let h0: f64 = rng.gen_range(-10.0..10.0);
    let h1: f64 = rng.gen_range(-5.0..5.0);
    let k = rng.gen_range(1..4) as f64;
    let source = ScalarField::from_fn(grid, |x, y| {
        h0 + h1 * (k * std::f64::consts::PI * (x + y)).sin()
    })
    .unwrap();
    let (f0, f1): (f64, f64) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let boundary =
        ScalarField::from_fn(grid, |x, y| f0 + (f1 - f0) * x + 0.2 * y * (1.0 - x)).unwrap();
    let (a, b, x0): (f64, f64, f64) = (
        rng.gen_range(0.0..0.6),
        rng.gen_range(2.0..10.0),
        rng.gen_range(0.2..0.8),
    );
    let raw =
        ScalarField::from_fn(grid, |x, y| a - b * ((x - x0).powi(2) + (y - 0.5).powi(2))).unwrap();
    let shift = grid
        .boundary_nodes()
        .map(|i| raw.at(i) - boundary.at(i))
        .fold(0.0, f64::max);
    let obstacle = raw.map(|v| v - shift - 1e-9);
    ObstacleProblem::new(
        var(grid, p, 0.0).with_source(source),
        Side::Below,
        obstacle,
        boundary,
    )
    .unwrap()
}

trait WithSource {
    fn with_source(self, source: ScalarField) -> OperatorSpec;
}

impl WithSource for OperatorSpec {
    fn with_source(self, source: ScalarField) -> OperatorSpec {
        OperatorSpec::variational(self.exponent().unwrap(), source).unwrap()
    }
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut worst_defect, mut worst_native) = (0.0f64, 0.0f64, 0.0f64);
    let mut all_converged = true;
    for k in 0..10 {
        let p = if k % 2 == 0 { 2.0 } else { 3.0 };
        let grid = Grid::new(1, if p == 2.0 { N } else { 101 }).unwrap();
        let problem = random_below_problem(&mut rng, grid, p);
        let tol = if p == 2.0 { 1e-10 } else { 1e-7 };
        let settings = SolverSettings::default().with_tol(tol);
        let dual = dualize(&problem);
        let a = solve(&problem, &settings).unwrap();
        let b = solve(&dual, &settings).unwrap();
        all_converged &= a.converged && b.converged;
        worst = worst.max(a.solution.sup_distance(&b.solution.negated()));
        let defect = dual.complementarity_defect(&b.solution).unwrap();
        worst_defect = worst_defect.max(defect.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if p == 2.0 {
            // the viscosity backend clamps from above directly
            let source = dual.spec().source().clone();
            let native = ObstacleProblem::new(
                OperatorSpec::normalized(0.0, 1.0, source).unwrap(),
                Side::Above,
                dual.obstacle().clone(),
                dual.boundary().clone(),
            )
            .unwrap();
            let c = solve_visc_obstacle(&native, &SchemeConfig::default()).unwrap();
            all_converged &= c.converged;
            worst_native = worst_native.max(c.solution.sup_distance(&b.solution));
        }
    }
    check(
        all_converged && worst <= 1e-6 && worst_defect <= 1e-6 && worst_native <= 1e-6,
        format!(
            "10 problems (p ∈ {{2,3}}), max |solve(P) + solve(dual P)| = {worst:.2e}, dual defect {worst_defect:.2e}, vs native upper-obstacle solve {worst_native:.2e} (tol 1e-6)"
        ),
    )
}

fn obstacle_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::new(1, N).unwrap();
    let settings = SolverSettings::default();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let low = random_below_problem(&mut rng, grid, 2.0);
        let (c, w, amp): (f64, f64, f64) = (
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.0..0.5),
        );
        let bump =
            ScalarField::from_fn(grid, |x, _| amp * (1.0 - ((x - c) / w).abs()).max(0.0)).unwrap();
        let raised: Vec<f64> = low
            .obstacle()
            .values()
            .iter()
            .zip(bump.values())
            .enumerate()
            .map(|(i, (o, b))| if grid.is_boundary(i) { *o } else { o + b })
            .collect();
        let high = ObstacleProblem::new(
            low.spec().clone(),
            Side::Below,
            ScalarField::from_values(grid, raised).unwrap(),
            low.boundary().clone(),
        )
        .unwrap();
        let a = solve(&low, &settings).unwrap();
        let b = solve(&high, &settings).unwrap();
        if !(a.converged && b.converged) {
            return Err("a solve did not converge".into());
        }
        let viol = (0..grid.len())
            .map(|i| a.solution.at(i) - b.solution.at(i))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(viol);
    }
    check(
        worst <= 1e-8,
        format!("10 pairs φ₁ ≤ φ₂, max(u₁ − u₂) = {worst:.2e} (tol 1e-8)"),
    )
}

fn cross_backend() -> Outcome {
    let cfg = AuditConfig::default();
    let settings = SolverSettings::default();
    let g = Grid::new(1, N).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut problems = vec![
        ObstacleProblem::new(
            var(g, 2.0, 10.0),
            Side::Below,
            ScalarField::constant(g, NO_OBSTACLE_BELOW),
            ScalarField::constant(g, 1.0),
        )
        .unwrap(),
        ObstacleProblem::new(
            var(g, 2.0, 0.0),
            Side::Below,
            field(g, "0.1 - abs(x - 0.5)"),
            ScalarField::zeros(g),
        )
        .unwrap(),
        ObstacleProblem::new(
            var(g, 2.0, -2.0),
            Side::Above,
            field(g, "-5*x*(1-x)+1"),
            ScalarField::zeros(g),
        )
        .unwrap(),
        random_below_problem(&mut rng, g, 2.0),
    ];
    let g2 = Grid::new(2, 21).unwrap();
    problems.push(random_below_problem(&mut rng, g2, 2.0));
    let mut worst = 0.0f64;
    let mut active = 0;
    for p in &problems {
        let a = audit_cross_solver(p, &settings, &cfg).map_err(|e| e.to_string())?;
        if !a.passed {
            return Err(format!("{a:?}"));
        }
        worst = worst.max(a.worst_value);
        let sol = solve(p, &settings).unwrap();
        if !sol.contact_set.is_empty() {
            active += 1;
        }
    }
    check(
        worst <= 1e-6 && active >= 1,
        format!(
            "5 problems ({active} with active obstacle), max difference {worst:.2e} (tol 1e-6)"
        ),
    )
}

// Fourth-order central differences of the energy, node by node. The probe
// stays well inside the smallest adjacent jump so a near-flat cell with p < 2
// is not stepped across.
fn finite_difference_gradient(w: &ScalarField, spec: &OperatorSpec) -> Vec<f64> {
    let grid = w.grid();
    let mut probe = w.clone();
    (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) {
                return 0.0;
            }
            let base = probe.at(i);
            let (nbrs, count) = grid.axis_neighbors(i);
            let jump = nbrs[..count]
                .iter()
                .map(|&j| (w.at(j) - base).abs())
                .fold(f64::INFINITY, f64::min);
            let step = (1e-2 * jump).clamp(1e-9, 1e-6);
            let mut at = |d: f64| {
                probe.values_mut()[i] = base + d;
                energy(&probe, spec).unwrap()
            };
            let (p1, m1, p2, m2) = (at(step), at(-step), at(2.0 * step), at(-2.0 * step));
            probe.values_mut()[i] = base;
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step)
        })
        .collect()
}

fn random_smooth_field(rng: &mut ChaCha8Rng, grid: Grid) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..5.0),
                rng.gen_range(1.0..5.0),
                rng.gen_range(0.0..6.0),
            )
        })
        .collect();
    let noise: Vec<f64> = (0..grid.len())
        .map(|_| rng.gen_range(-0.01..0.01))
        .collect();
    let mut f = ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|(a, kx, ky, ph)| a * (kx * x + ky * y + ph).sin())
            .sum()
    })
    .unwrap();
    for (v, n) in f.values_mut().iter_mut().zip(noise) {
        *v += n;
    }
    f
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for p in [1.5, 2.0, 3.0, 4.0] {
        for k in 0..20 {
            let grid = if k % 4 == 3 {
                Grid::new(2, 15).unwrap()
            } else {
                Grid::new(1, N).unwrap()
            };
            let w = random_smooth_field(&mut rng, grid);
            let src = random_smooth_field(&mut rng, grid);
            let spec = OperatorSpec::variational(p, src).unwrap();
            let grad = energy_gradient(&w, &spec).unwrap();
            let fd = finite_difference_gradient(&w, &spec);
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = grad
                .values()
                .iter()
                .zip(&fd)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    check(
        worst < 1e-5,
        format!("80 fields, max relative error {worst:.2e} (tol 1e-5)"),
    )
}

fn refinement() -> Outcome {
    let setup = RefinementSetup {
        dim: 1,
        operator: OperatorForm::Variational {
            p: 2.0,
            source: Expr::parse("-pi^2*sin(pi*x)").unwrap(),
        },
        reference: Expr::parse("sin(pi*x)").unwrap(),
        obstacle: None,
        settings: SolverSettings::default(),
    };
    let table = grid_refinement_study(&setup, &[101, 201]).map_err(|e| e.to_string())?;
    let ratio = table.ratios()[0];
    check(
        table.rows.iter().all(|r| r.converged) && (3.5..=4.5).contains(&ratio),
        format!(
            "errors {:.3e} (n=101), {:.3e} (n=201), ratio {ratio:.4} (window [3.5, 4.5])",
            table.rows[0].error, table.rows[1].error
        ),
    )
}

fn tent_oracle() -> Outcome {
    let g = Grid::new(1, N).unwrap();
    let problem = ObstacleProblem::new(
        var(g, 2.0, 0.0),
        Side::Below,
        field(g, "0.1 - abs(x - 0.5)"),
        ScalarField::zeros(g),
    )
    .unwrap();
    let rep = solve(&problem, &SolverSettings::default()).unwrap();
    let err = rep.solution.sup_distance(&field(g, "0.2*min(x, 1-x)"));
    check(
        rep.converged && err <= 1e-8 && rep.contact_set == vec![(N - 1) / 2],
        format!(
            "sup error {err:.2e} (tol 1e-8), contact set {:?}",
            rep.contact_set
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1 golden example reproduction", golden_free_solves),
        ("AC2 non-uniqueness demo", nonuniqueness),
        ("AC3 monotone convergence", monotone_convergence),
        ("AC4 duality involution", duality),
        ("AC5 obstacle monotonicity", obstacle_monotonicity),
        ("AC6 cross-backend equivalence", cross_backend),
        ("AC7 gradient oracle", gradient_oracle),
        ("AC8 refinement study", refinement),
        ("AC9 tent-obstacle oracle", tent_oracle),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("PASS  {name}: {msg} [{:.2}s]", t.elapsed().as_secs_f64()),
            Err(msg) => {
                failures += 1;
                println!("FAIL  {name}: {msg} [{:.2}s]", t.elapsed().as_secs_f64());
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed in {:.1}s",
        9 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
