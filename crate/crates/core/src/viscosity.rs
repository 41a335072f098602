//! Obstacle problems for the normalized p-Laplacian `-βΔw - αΔ∞w + h`.
//!
//! Each sweep visits interior nodes in lexicographic order, replaces the node
//! value by the one that zeroes the local residual given its neighbours, and
//! clamps it against the obstacle. The local update is nondecreasing in every
//! neighbour value, so the clamped iteration preserves ordering: started from
//! a subsolution (below the solution) it increases monotonically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::obstacle::{gap_tol, ObstacleProblem, Side, SolveReport};
use crate::operators::{classify, stencil_extremes, OperatorSpec};

const CHECK_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation of the fixed-point update, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2_000_000,
            damping: 1.0,
        }
    }
}

fn weights(spec: &OperatorSpec) -> Result<(f64, f64)> {
    match spec {
        OperatorSpec::NormalizedPLaplacian { alpha, beta, .. } => Ok((*alpha, *beta)),
        _ => Err(Error::Precondition(
            "viscosity solver needs a normalized p-Laplacian".into(),
        )),
    }
}

fn local_value(grid: Grid, vals: &[f64], node: usize, alpha: f64, beta: f64, source: f64) -> f64 {
    let h2 = grid.spacing() * grid.spacing();
    let (axis, na) = grid.axis_neighbors(node);
    let sum: f64 = axis[..na].iter().map(|&j| vals[j]).sum();
    let (hi, lo) = if alpha > 0.0 {
        stencil_extremes(grid, vals, node)
    } else {
        (0.0, 0.0)
    };
    (beta * sum + alpha * (hi + lo) - source * h2) / (beta * na as f64 + 2.0 * alpha)
}

/// Value at interior `node` that makes the discrete residual vanish, given
/// the current neighbour values in `w`.
pub fn local_solve(w: &ScalarField, node: usize, spec: &OperatorSpec) -> Result<f64> {
    let (alpha, beta) = weights(spec)?;
    w.ensure_same_grid(spec.source())?;
    let grid = w.grid();
    if node >= grid.len() || grid.is_boundary(node) {
        return Err(Error::Precondition(format!("node {node} is not interior")));
    }
    Ok(local_value(
        grid,
        w.values(),
        node,
        alpha,
        beta,
        spec.source().at(node),
    ))
}

fn check_config(cfg: &SchemeConfig) -> Result<()> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tolerance {} must be positive",
            cfg.tol
        )));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::Precondition(format!(
            "damping {} outside (0, 1]",
            cfg.damping
        )));
    }
    Ok(())
}

/// One clamped Gauss–Seidel sweep in place; returns the largest node update.
pub fn visc_sweep(w: &mut ScalarField, problem: &ObstacleProblem, damping: f64) -> Result<f64> {
    let (alpha, beta) = weights(problem.spec())?;
    w.ensure_same_grid(problem.obstacle())?;
    Ok(sweep(problem, w.values_mut(), alpha, beta, damping))
}

fn sweep(problem: &ObstacleProblem, w: &mut [f64], alpha: f64, beta: f64, damping: f64) -> f64 {
    let grid = problem.grid();
    let source = problem.spec().source().values();
    let obstacle = problem.obstacle().values();
    let side = problem.side();
    let mut largest = 0.0f64;
    for i in 0..grid.len() {
        if grid.is_boundary(i) {
            continue;
        }
        let target = local_value(grid, w, i, alpha, beta, source[i]);
        let relaxed = w[i] + damping * (target - w[i]);
        let clamped = match side {
            Side::Below => relaxed.max(obstacle[i]),
            Side::Above => relaxed.min(obstacle[i]),
        };
        largest = largest.max((clamped - w[i]).abs());
        w[i] = clamped;
    }
    largest
}

pub fn solve_visc_obstacle(problem: &ObstacleProblem, cfg: &SchemeConfig) -> Result<SolveReport> {
    solve_visc_obstacle_from(problem, None, cfg)
}

/// Iterates sweeps until the sup-norm update is below `tol` and the
/// complementarity defect is at most `tol`.
pub fn solve_visc_obstacle_from(
    problem: &ObstacleProblem,
    init: Option<&ScalarField>,
    cfg: &SchemeConfig,
) -> Result<SolveReport> {
    let (alpha, beta) = weights(problem.spec())?;
    check_config(cfg)?;
    let mut w = match init {
        Some(start) => problem.project(start),
        None => problem.initial_iterate(),
    };
    let grid = problem.grid();
    let h2 = grid.spacing().powi(2);
    let diag = beta * 2.0 * grid.dim() as f64 + 2.0 * alpha;
    let defect_of = |w: &ScalarField| -> Result<f64> {
        Ok(problem
            .complementarity_defect(w)?
            .values()
            .iter()
            .fold(0.0, |m, v| m.max(v.abs())))
    };

    let mut iterations = 0;
    let mut defect = defect_of(&w)?;
    let mut update = f64::INFINITY;
    while !(update < cfg.tol && defect <= cfg.tol) && iterations < cfg.max_iter {
        update = sweep(problem, w.values_mut(), alpha, beta, cfg.damping);
        iterations += 1;
        // an update of size δ corresponds to a residual near δ·diag/(θ h²)
        if (update * diag / (cfg.damping * h2) <= 10.0 * cfg.tol && update < cfg.tol)
            || iterations % CHECK_EVERY == 0
            || iterations == cfg.max_iter
        {
            defect = defect_of(&w)?;
        }
    }
    let converged = update < cfg.tol && defect <= cfg.tol;
    log::debug!("fixed point: {iterations} sweeps, defect {defect:e}, update {update:e}");
    let contact_set = problem.contact_set(&w, gap_tol(cfg.tol));
    Ok(SolveReport {
        solution: w,
        iterations,
        final_residual: defect,
        contact_set,
        converged,
        stalled: false,
        energy_trace: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `w1` is a subsolution, `w2` a supersolution, and `w1 <= w2` on the boundary.
    pub premises_hold: bool,
    /// `w1 <= w2 + tol` at every node.
    pub ordered: bool,
    /// Node maximizing `w1 - w2`.
    pub worst_node: usize,
    /// `max(w1 - w2)`.
    pub worst_margin: f64,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.ordered
    }

    /// Premises hold but the ordering fails: a discrete comparison failure.
    pub fn principle_violated(&self) -> bool {
        self.premises_hold && !self.ordered
    }
}

/// Discrete comparison audit between a candidate subsolution `w1` and a
/// candidate supersolution `w2`.
pub fn comparison_check(
    w1: &ScalarField,
    w2: &ScalarField,
    spec: &OperatorSpec,
    tol: f64,
) -> Result<ComparisonReport> {
    w1.ensure_same_grid(w2)?;
    let grid = w1.grid();
    let sub = classify(w1, spec, tol)?.is_subsolution();
    let sup = classify(w2, spec, tol)?.is_supersolution();
    let boundary_ok = grid.boundary_nodes().all(|i| w1.at(i) <= w2.at(i) + tol);
    let (worst_node, worst_margin) = (0..grid.len()).map(|i| (i, w1.at(i) - w2.at(i))).fold(
        (0, f64::NEG_INFINITY),
        |best, cur| if cur.1 > best.1 { cur } else { best },
    );
    Ok(ComparisonReport {
        premises_hold: sub && sup && boundary_ok,
        ordered: worst_margin <= tol,
        worst_node,
        worst_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};
    use crate::Expr;

    fn line(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    fn field(grid: Grid, src: &str) -> ScalarField {
        ScalarField::sample(grid, &Expr::parse(src).unwrap()).unwrap()
    }

    fn spec(grid: Grid, alpha: f64, beta: f64, h: f64) -> OperatorSpec {
        OperatorSpec::normalized(alpha, beta, ScalarField::constant(grid, h)).unwrap()
    }

    #[test]
    fn local_solve_examples() {
        let g = line(5);
        let h = g.spacing();
        let w = ScalarField::from_values(g, vec![0.0, 0.3, 99.0, 1.1, 0.0]).unwrap();
        let lap = local_solve(&w, 2, &spec(g, 0.0, 1.0, 0.0)).unwrap();
        assert!((lap - 0.7).abs() < 1e-15);
        let inf = local_solve(&w, 2, &spec(g, 1.0, 0.0, 0.0)).unwrap();
        assert!((inf - 0.7).abs() < 1e-15);
        let forced = local_solve(&w, 2, &spec(g, 0.0, 1.0, 10.0)).unwrap();
        assert!((forced - (0.7 - 5.0 * h * h)).abs() < 1e-15);
        assert!(local_solve(&w, 0, &spec(g, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn free_laplacian_solution() {
        let g = line(201);
        let p = ObstacleProblem::new(
            spec(g, 0.0, 1.0, 10.0),
            Side::Below,
            ScalarField::constant(g, NO_OBSTACLE_BELOW),
            ScalarField::constant(g, 1.0),
        )
        .unwrap();
        let rep = solve_visc_obstacle(&p, &SchemeConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.solution.sup_distance(&field(g, "-5*x*(1-x)+1")) < 1e-8);
    }

    #[test]
    fn infinity_harmonic_is_linear() {
        let g = line(101);
        let p = ObstacleProblem::new(
            spec(g, 1.0, 0.0, 0.0),
            Side::Below,
            ScalarField::constant(g, NO_OBSTACLE_BELOW),
            field(g, "x"),
        )
        .unwrap();
        let rep = solve_visc_obstacle(&p, &SchemeConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.solution.sup_distance(&field(g, "x")) < 1e-8);
    }

    #[test]
    fn above_side_contact_at_center() {
        let g = line(201);
        let p = ObstacleProblem::new(
            spec(g, 0.0, 1.0, -2.0),
            Side::Above,
            field(g, "-5*x*(1-x)+1"),
            ScalarField::zeros(g),
        )
        .unwrap();
        let rep = solve_visc_obstacle(&p, &SchemeConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.solution.value_near(0.5, 0.0) + 0.25).abs() < 1e-6);
        assert!(rep.contact_set.contains(&100));
        for i in 0..g.len() {
            assert!(rep.solution.at(i) <= p.obstacle().at(i));
        }
    }

    #[test]
    fn two_dimensional_mixed_operator_converges() {
        let g = Grid::new(2, 17).unwrap();
        let p = ObstacleProblem::new(
            spec(g, 0.5, 0.5, 4.0),
            Side::Below,
            field(g, "0.05 - (x-0.5)^2 - (y-0.5)^2"),
            ScalarField::zeros(g),
        )
        .unwrap();
        let rep = solve_visc_obstacle(&p, &SchemeConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(!rep.contact_set.is_empty());
        let c = classify(&rep.solution, p.spec(), 1e-9).unwrap();
        assert!(c.is_supersolution());
    }

    #[test]
    fn rejects_bad_config_and_spec() {
        let g = line(11);
        let p = ObstacleProblem::new(
            spec(g, 1.0, 0.0, 0.0),
            Side::Above,
            ScalarField::constant(g, NO_OBSTACLE_ABOVE),
            ScalarField::zeros(g),
        )
        .unwrap();
        let bad = SchemeConfig {
            damping: 0.0,
            ..SchemeConfig::default()
        };
        assert!(solve_visc_obstacle(&p, &bad).is_err());
        let var = ObstacleProblem::new(
            OperatorSpec::variational(2.0, ScalarField::zeros(g)).unwrap(),
            Side::Above,
            ScalarField::constant(g, NO_OBSTACLE_ABOVE),
            ScalarField::zeros(g),
        )
        .unwrap();
        assert!(solve_visc_obstacle(&var, &SchemeConfig::default()).is_err());
    }

    #[test]
    fn comparison_examples() {
        let g = line(101);
        let s = spec(g, 0.0, 1.0, -2.0);
        let free = field(g, "x*(1-x)");
        let zero = ScalarField::zeros(g);
        let rep = comparison_check(&zero, &free, &s, 1e-8).unwrap();
        assert!(rep.premises_hold && rep.passed());

        let same = comparison_check(&free, &free, &s, 1e-8).unwrap();
        assert!(same.passed());
        assert_eq!(same.worst_margin, 0.0);

        let mut bumped = free.clone();
        bumped.values_mut()[37] += 0.1;
        let rep = comparison_check(&bumped, &free, &s, 1e-8).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.worst_node, 37);
        assert!(!rep.principle_violated());
    }
}
