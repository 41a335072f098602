//! Obstacle problems from below and from above, and the solver dispatch shared
//! by the variational and viscosity backends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::operators::{residual, OperatorSpec};
use crate::{variational, viscosity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Smallest supersolution above the obstacle: `min{Lu, u − φ} = 0`.
    Below,
    /// Largest subsolution below the obstacle: `max{Lv, v − ψ} = 0`.
    Above,
}

impl Side {
    pub fn flipped(self) -> Self {
        match self {
            Side::Below => Side::Above,
            Side::Above => Side::Below,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleProblem {
    spec: OperatorSpec,
    side: Side,
    obstacle: ScalarField,
    boundary: ScalarField,
}

impl ObstacleProblem {
    /// Builds a problem, rejecting boundary data on the wrong side of the
    /// obstacle.
    pub fn new(
        spec: OperatorSpec,
        side: Side,
        obstacle: ScalarField,
        boundary: ScalarField,
    ) -> Result<Self> {
        obstacle.ensure_same_grid(spec.source())?;
        boundary.ensure_same_grid(spec.source())?;
        let grid = obstacle.grid();
        for node in grid.boundary_nodes() {
            let (b, o) = (boundary.at(node), obstacle.at(node));
            let ok = match side {
                Side::Below => b >= o,
                Side::Above => b <= o,
            };
            if !ok {
                return Err(Error::Infeasible {
                    node,
                    boundary: b,
                    obstacle: o,
                });
            }
        }
        Ok(Self {
            spec,
            side,
            obstacle,
            boundary,
        })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn obstacle(&self) -> &ScalarField {
        &self.obstacle
    }

    pub fn boundary(&self) -> &ScalarField {
        &self.boundary
    }

    pub fn grid(&self) -> crate::Grid {
        self.obstacle.grid()
    }

    /// Signed complementarity defect of `w`: `min(Lw, w − φ)` (Below) or
    /// `max(Lw, w − ψ)` (Above) at interior nodes, zero on the boundary.
    pub fn complementarity_defect(&self, w: &ScalarField) -> Result<ScalarField> {
        let res = residual(w, &self.spec)?;
        let grid = w.grid();
        let values = (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    return 0.0;
                }
                let gap = w.at(i) - self.obstacle.at(i);
                match self.side {
                    Side::Below => res.at(i).min(gap),
                    Side::Above => res.at(i).max(gap),
                }
            })
            .collect();
        ScalarField::from_values(grid, values)
    }

    /// Interior nodes where `w` is within `gap_tol` of the obstacle.
    pub fn contact_set(&self, w: &ScalarField, gap_tol: f64) -> Vec<usize> {
        w.grid()
            .interior_nodes()
            .filter(|&i| (w.at(i) - self.obstacle.at(i)).abs() <= gap_tol)
            .collect()
    }

    /// Feasible starting field: boundary data on the boundary, and the
    /// obstacle-clamped Coons interpolant of the boundary data inside.
    pub fn initial_iterate(&self) -> ScalarField {
        let interp = boundary_interpolant(&self.boundary);
        self.project(&interp)
    }

    /// Clamps `w` onto the feasible set and pins the boundary values.
    pub fn project(&self, w: &ScalarField) -> ScalarField {
        let grid = w.grid();
        let values = (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    self.boundary.at(i)
                } else {
                    match self.side {
                        Side::Below => w.at(i).max(self.obstacle.at(i)),
                        Side::Above => w.at(i).min(self.obstacle.at(i)),
                    }
                }
            })
            .collect();
        ScalarField::from_values(grid, values).expect("same grid")
    }
}

/// Linear (1D) or Coons-patch (2D) interpolant of the boundary values.
fn boundary_interpolant(boundary: &ScalarField) -> ScalarField {
    let grid = boundary.grid();
    let n = grid.n_per_axis();
    let last = n - 1;
    let b = |ix: usize, iy: usize| boundary.at(grid.flat_index(ix, iy));
    let values = (0..grid.len())
        .map(|node| {
            let [ix, iy] = grid.axis_indices(node);
            let [s, t] = grid.coords(node);
            match grid.dim() {
                1 => (1.0 - s) * b(0, 0) + s * b(last, 0),
                _ => {
                    (1.0 - s) * b(0, iy) + s * b(last, iy) + (1.0 - t) * b(ix, 0) + t * b(ix, last)
                        - ((1.0 - s) * (1.0 - t) * b(0, 0)
                            + s * (1.0 - t) * b(last, 0)
                            + (1.0 - s) * t * b(0, last)
                            + s * t * b(last, last))
                }
            }
        })
        .collect();
    ScalarField::from_values(grid, values).expect("same grid")
}

/// Mirror problem: flips the side and negates obstacle, boundary data and
/// source. The solution of the mirror is the negated solution of `problem`.
pub fn dualize(problem: &ObstacleProblem) -> ObstacleProblem {
    ObstacleProblem {
        spec: problem.spec.with_negated_source(),
        side: problem.side.flipped(),
        obstacle: problem.obstacle.negated(),
        boundary: problem.boundary.negated(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Projected successive over-relaxation (variational, `p = 2`).
    Psor,
    /// Projected gradient descent with Armijo backtracking (variational).
    ProjectedGradient,
    /// Clamped Gauss–Seidel fixed point (normalized p-Laplacian).
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// `None` picks PSOR for `p = 2`, projected gradient for other `p`, and
    /// the fixed point for normalized operators.
    pub method: Option<Method>,
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    pub damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            method: None,
            tol: 1e-10,
            max_iter: 1_000_000,
            omega: 1.5,
            damping: 1.0,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = Some(method);
        self
    }

    /// Contact classification threshold.
    pub fn gap_tol(&self) -> f64 {
        gap_tol(self.tol)
    }

    pub fn resolve_method(&self, spec: &OperatorSpec) -> Method {
        self.method.unwrap_or(match spec {
            OperatorSpec::Variational { p, .. } if *p == 2.0 => Method::Psor,
            OperatorSpec::Variational { .. } => Method::ProjectedGradient,
            OperatorSpec::NormalizedPLaplacian { .. } => Method::FixedPoint,
        })
    }
}

pub fn gap_tol(tol: f64) -> f64 {
    (10.0 * tol).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: ScalarField,
    pub iterations: usize,
    /// Sup-norm of the complementarity defect at termination.
    pub final_residual: f64,
    pub contact_set: Vec<usize>,
    pub converged: bool,
    /// The line search gave up before the tolerance was met.
    pub stalled: bool,
    /// Energy after every accepted step (projected gradient only).
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub contact_count: usize,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            converged: self.converged,
            iterations: self.iterations,
            final_residual: self.final_residual,
            contact_count: self.contact_set.len(),
        }
    }

    pub(crate) fn negated(mut self) -> Self {
        self.solution = self.solution.negated();
        self.energy_trace.clear();
        self
    }
}

/// Solves `problem` with the backend chosen by `settings`.
pub fn solve(problem: &ObstacleProblem, settings: &SolverSettings) -> Result<SolveReport> {
    solve_from(problem, None, settings)
}

/// As [`solve`], warm-started from `init` (projected onto the feasible set).
pub fn solve_from(
    problem: &ObstacleProblem,
    init: Option<&ScalarField>,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    if let Some(w) = init {
        w.ensure_same_grid(problem.obstacle())?;
    }
    match settings.resolve_method(problem.spec()) {
        Method::Psor | Method::ProjectedGradient => {
            variational::solve_obstacle_from(problem, init, settings)
        }
        Method::FixedPoint => {
            let cfg = viscosity::SchemeConfig {
                tol: settings.tol,
                max_iter: settings.max_iter,
                damping: settings.damping,
            };
            viscosity::solve_visc_obstacle_from(problem, init, &cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};

    fn grid() -> Grid {
        Grid::new(1, 11).unwrap()
    }

    fn c(v: f64) -> ScalarField {
        ScalarField::constant(grid(), v)
    }

    fn spec(h: f64) -> OperatorSpec {
        OperatorSpec::variational(2.0, c(h)).unwrap()
    }

    #[test]
    fn dualize_mirrors_every_field() {
        let phi = ScalarField::from_fn(grid(), |x, _| x * (1.0 - x)).unwrap();
        let p = ObstacleProblem::new(spec(10.0), Side::Below, phi.clone(), c(1.0)).unwrap();
        let d = dualize(&p);
        assert_eq!(d.side(), Side::Above);
        assert_eq!(d.spec().source(), &c(-10.0));
        assert_eq!(d.boundary(), &c(-1.0));
        assert_eq!(d.obstacle(), &phi.negated());
        assert_eq!(dualize(&d), p);
    }

    #[test]
    fn sentinels_map_to_each_other() {
        let p = ObstacleProblem::new(spec(0.0), Side::Below, c(NO_OBSTACLE_BELOW), c(0.0)).unwrap();
        assert!(dualize(&p)
            .obstacle()
            .values()
            .iter()
            .all(|&v| v == NO_OBSTACLE_ABOVE));
    }

    #[test]
    fn infeasible_boundary_is_rejected() {
        let err = ObstacleProblem::new(spec(0.0), Side::Below, c(1.0), c(0.0)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { node: 0, .. }));
        let err = ObstacleProblem::new(spec(0.0), Side::Above, c(-1.0), c(0.0)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        // interior violations are fine: the obstacle may poke above the data
        let bump = ScalarField::from_fn(grid(), |x, _| 1.0 - 8.0 * (x - 0.5).abs()).unwrap();
        assert!(ObstacleProblem::new(spec(0.0), Side::Below, bump, c(0.0)).is_ok());
    }

    #[test]
    fn initial_iterate_is_feasible_2d() {
        let g = Grid::new(2, 7).unwrap();
        let boundary = ScalarField::from_fn(g, |x, y| x + 2.0 * y * y).unwrap();
        let phi = ScalarField::from_fn(g, |x, y| 0.8 - (x - 0.5).abs() - (y - 0.5).abs()).unwrap();
        let s = OperatorSpec::variational(2.0, ScalarField::zeros(g)).unwrap();
        let p = ObstacleProblem::new(s, Side::Below, phi.clone(), boundary.clone()).unwrap();
        let w = p.initial_iterate();
        for i in 0..g.len() {
            if g.is_boundary(i) {
                assert_eq!(w.at(i), boundary.at(i));
            } else {
                assert!(w.at(i) >= phi.at(i));
            }
        }
    }

    #[test]
    fn method_resolution() {
        let s = SolverSettings::default();
        assert_eq!(s.resolve_method(&spec(0.0)), Method::Psor);
        let p3 = OperatorSpec::variational(3.0, c(0.0)).unwrap();
        assert_eq!(s.resolve_method(&p3), Method::ProjectedGradient);
        let v = OperatorSpec::normalized(1.0, 0.0, c(0.0)).unwrap();
        assert_eq!(s.resolve_method(&v), Method::FixedPoint);
        assert_eq!(gap_tol(1e-10), 1e-8);
        assert_eq!(gap_tol(1e-6), 10.0 * 1e-6);
    }
}
