//! Browser bindings. Every export takes plain numbers and expression strings
//! and returns a JSON document for the page to plot.

use membrane_core::grid::{NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};
use membrane_core::membranes::{iterate_partial, nonuniqueness_demo_on};
use membrane_core::{
    solve, Expr, Grid, MembraneConfig, Mode, ObstacleProblem, OperatorSpec, ScalarField, Side,
    SolverSettings,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 401;

#[derive(Serialize)]
struct ObstacleView {
    x: Vec<f64>,
    solution: Vec<f64>,
    obstacle: Option<Vec<f64>>,
    converged: bool,
    iterations: usize,
    final_residual: f64,
    contact_set: Vec<usize>,
}

#[derive(Serialize)]
struct IterationView {
    x: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    converged: bool,
    steps: usize,
    worst_monotonicity: f64,
    min_gap: f64,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct DemoView {
    x: Vec<f64>,
    u_hat: Vec<f64>,
    v_hat: Vec<f64>,
    u_tilde: Vec<f64>,
    v_tilde: Vec<f64>,
    separation: f64,
    residual_hat: f64,
    residual_tilde: f64,
}

fn grid(n: usize) -> Result<Grid, String> {
    if !(3..=MAX_NODES).contains(&n) {
        return Err(format!("n must lie in 3..={MAX_NODES}"));
    }
    Grid::new(1, n).map_err(|e| e.to_string())
}

fn sample(grid: Grid, src: &str) -> Result<ScalarField, String> {
    let e = Expr::parse(src).map_err(|e| format!("{src:?}: {e}"))?;
    ScalarField::sample(grid, &e).map_err(|e| e.to_string())
}

fn xs(grid: Grid) -> Vec<f64> {
    (0..grid.len()).map(|i| grid.coords(i)[0]).collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn variational(grid: Grid, p: f64, source: &str) -> Result<OperatorSpec, String> {
    OperatorSpec::variational(p, sample(grid, source)?).map_err(|e| e.to_string())
}

/// One obstacle problem for `-Δ_p w + h` on `(0,1)`. An empty or `none`
/// obstacle solves the free problem.
pub fn obstacle_json(
    n: usize,
    p: f64,
    source: &str,
    boundary: &str,
    obstacle: &str,
    above: bool,
) -> Result<String, String> {
    let g = grid(n)?;
    let side = if above { Side::Above } else { Side::Below };
    let obstacle = obstacle.trim();
    let phi = if obstacle.is_empty() || obstacle.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(sample(g, obstacle)?)
    };
    let absent = if above {
        NO_OBSTACLE_ABOVE
    } else {
        NO_OBSTACLE_BELOW
    };
    let problem = ObstacleProblem::new(
        variational(g, p, source)?,
        side,
        phi.clone()
            .unwrap_or_else(|| ScalarField::constant(g, absent)),
        sample(g, boundary)?,
    )
    .map_err(|e| e.to_string())?;
    let tol = if p == 2.0 { 1e-10 } else { 1e-7 };
    let report =
        solve(&problem, &SolverSettings::default().with_tol(tol)).map_err(|e| e.to_string())?;
    to_json(&ObstacleView {
        x: xs(g),
        solution: report.solution.values().to_vec(),
        obstacle: phi.map(ScalarField::into_values),
        converged: report.converged,
        iterations: report.iterations,
        final_residual: report.final_residual,
        contact_set: report.contact_set,
    })
}

/// The monotone two-membrane iteration with `p = 2` operators, returning
/// every iterate.
pub fn iterate_json(
    n: usize,
    source1: &str,
    source2: &str,
    f: &str,
    g: &str,
    seed: &str,
    increasing: bool,
) -> Result<String, String> {
    let grid = grid(n)?;
    let mode = if increasing {
        Mode::IncreasingFromSub
    } else {
        Mode::DecreasingFromSuper
    };
    let mut cfg = MembraneConfig::new(
        variational(grid, 2.0, source1)?,
        variational(grid, 2.0, source2)?,
        sample(grid, f)?,
        sample(grid, g)?,
        sample(grid, seed)?,
        mode,
    );
    cfg.max_outer = 200;
    let (trace, err) = iterate_partial(&cfg);
    let Some(trace) = trace else {
        return Err(err.map(|e| e.to_string()).unwrap_or_default());
    };
    let fold = |f: fn(&membrane_core::membranes::StepRecord) -> f64| {
        trace.steps.iter().map(f).fold(f64::INFINITY, f64::min)
    };
    let mut warnings = trace.warnings.clone();
    if let Some(e) = err {
        warnings.push(e.to_string());
    }
    to_json(&IterationView {
        x: xs(grid),
        u: trace.u.iter().map(|w| w.values().to_vec()).collect(),
        v: trace.v.iter().map(|w| w.values().to_vec()).collect(),
        converged: trace.converged,
        steps: trace.outer_steps(),
        worst_monotonicity: fold(|s| s.worst_monotonicity),
        min_gap: fold(|s| s.min_gap),
        warnings,
    })
}

/// The two distinct solution pairs of the built-in example.
pub fn demo_json(n: usize) -> Result<String, String> {
    let g = grid(n)?;
    let demo = nonuniqueness_demo_on(n).map_err(|e| e.to_string())?;
    to_json(&DemoView {
        x: xs(g),
        u_hat: demo.u_hat.values().to_vec(),
        v_hat: demo.v_hat.values().to_vec(),
        u_tilde: demo.u_tilde.values().to_vec(),
        v_tilde: demo.v_tilde.values().to_vec(),
        separation: demo.separation,
        residual_hat: demo.residual_hat.first.max(demo.residual_hat.second),
        residual_tilde: demo.residual_tilde.first.max(demo.residual_tilde.second),
    })
}

#[wasm_bindgen(js_name = solveObstacle)]
pub fn solve_obstacle(
    n: usize,
    p: f64,
    source: &str,
    boundary: &str,
    obstacle: &str,
    above: bool,
) -> Result<String, JsValue> {
    obstacle_json(n, p, source, boundary, obstacle, above).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = iterateMembranes)]
pub fn iterate_membranes(
    n: usize,
    source1: &str,
    source2: &str,
    f: &str,
    g: &str,
    seed: &str,
    increasing: bool,
) -> Result<String, JsValue> {
    iterate_json(n, source1, source2, f, g, seed, increasing).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = nonuniquenessDemo)]
pub fn nonuniqueness_demo(n: usize) -> Result<String, JsValue> {
    demo_json(n).map_err(|e| JsValue::from_str(&e))
}
