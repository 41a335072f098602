//! Executable audits over solver outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, ScalarField, NO_OBSTACLE_BELOW};
use crate::membranes::{IterationTrace, Mode};
use crate::obstacle::{solve, Method, ObstacleProblem, Side, SolveReport, SolverSettings};
use crate::operators::{OperatorForm, OperatorSpec};

/// Pass/fail thresholds for every audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub complementarity_tol: f64,
    pub monotonicity_tol: f64,
    pub ordering_tol: f64,
    pub pinning_tol: f64,
    pub cross_solver_tol: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Refinement errors at or below this are treated as exact reproduction,
    /// where the ratio carries no information.
    pub exact_error_tol: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            complementarity_tol: 1e-6,
            monotonicity_tol: 1e-8,
            ordering_tol: 1e-8,
            pinning_tol: 0.0,
            cross_solver_tol: 1e-6,
            ratio_min: 3.5,
            ratio_max: 4.5,
            exact_error_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub passed: bool,
    pub worst_value: f64,
    pub worst_node: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AuditReport {
    fn new(name: &str, passed: bool, worst_value: f64, worst_node: usize, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed,
            worst_value,
            worst_node,
            tolerance,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Worst signed complementarity defect of a solver output.
pub fn audit_complementarity(
    report: &SolveReport,
    problem: &ObstacleProblem,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    audit_field_complementarity(&report.solution, problem, cfg).map(|a| {
        if report.converged {
            a
        } else {
            a.with_note("solver report is not converged")
        }
    })
}

/// As [`audit_complementarity`] for an arbitrary field.
pub fn audit_field_complementarity(
    w: &ScalarField,
    problem: &ObstacleProblem,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    let defect = problem.complementarity_defect(w)?;
    let (node, value) =
        w.grid()
            .interior_nodes()
            .map(|i| (i, defect.at(i)))
            .fold((0, 0.0), |best, cur| {
                if cur.1.abs() > f64::abs(best.1) {
                    cur
                } else {
                    best
                }
            });
    let tol = cfg.complementarity_tol;
    Ok(AuditReport::new(
        "complementarity",
        value.abs() <= tol,
        value,
        node,
        tol,
    ))
}

/// Monotonicity, ordering and boundary pinning over every recorded state.
pub fn audit_trace(trace: &IterationTrace, cfg: &AuditConfig) -> Vec<AuditReport> {
    let sign = match trace.mode {
        Mode::IncreasingFromSub => 1.0,
        Mode::DecreasingFromSuper => -1.0,
    };
    let mut mono = (0, 0.0f64);
    for k in 1..trace.u.len() {
        let (u0, u1, v0, v1) = (&trace.u[k - 1], &trace.u[k], &trace.v[k - 1], &trace.v[k]);
        for i in 0..u1.values().len() {
            let inc = (sign * (u1.at(i) - u0.at(i))).min(sign * (v1.at(i) - v0.at(i)));
            if inc < mono.1 {
                mono = (i, inc);
            }
        }
    }
    let mut order = (0, f64::INFINITY);
    for (u, v) in trace.u.iter().zip(&trace.v) {
        for i in 0..u.values().len() {
            let gap = u.at(i) - v.at(i);
            if gap < order.1 {
                order = (i, gap);
            }
        }
    }
    if !order.1.is_finite() {
        order.1 = 0.0;
    }
    let mut pin = (0, 0.0f64);
    for (u, v) in trace.u.iter().zip(&trace.v) {
        for i in u.grid().boundary_nodes() {
            let miss = (u.at(i) - trace.boundary_f.at(i))
                .abs()
                .max((v.at(i) - trace.boundary_g.at(i)).abs());
            if miss > pin.1 {
                pin = (i, miss);
            }
        }
    }
    vec![
        AuditReport::new(
            "monotonicity",
            mono.1 >= -cfg.monotonicity_tol,
            mono.1,
            mono.0,
            cfg.monotonicity_tol,
        ),
        AuditReport::new(
            "ordering",
            order.1 >= -cfg.ordering_tol,
            order.1,
            order.0,
            cfg.ordering_tol,
        ),
        AuditReport::new(
            "boundary_pinning",
            pin.1 <= cfg.pinning_tol,
            pin.1,
            pin.0,
            cfg.pinning_tol,
        ),
    ]
}

/// Solves a `p = 2` problem with PSOR and with the `α = 0, β = 1` fixed
/// point and reports the sup difference.
pub fn audit_cross_solver(
    problem: &ObstacleProblem,
    settings: &SolverSettings,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    let source = match problem.spec() {
        OperatorSpec::Variational { p, source } if *p == 2.0 => source.clone(),
        _ => {
            return Err(Error::Precondition(
                "cross-solver audit needs a variational p = 2 problem".into(),
            ))
        }
    };
    let viscous = ObstacleProblem::new(
        OperatorSpec::normalized(0.0, 1.0, source)?,
        problem.side(),
        problem.obstacle().clone(),
        problem.boundary().clone(),
    )?;
    let a = solve(problem, &settings.with_method(Method::Psor))?;
    let b = solve(&viscous, &settings.with_method(Method::FixedPoint))?;
    let (node, diff) = (0..a.solution.values().len())
        .map(|i| (i, (a.solution.at(i) - b.solution.at(i)).abs()))
        .fold(
            (0, 0.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let tol = cfg.cross_solver_tol;
    let report = AuditReport::new("cross_solver", diff <= tol, diff, node, tol);
    if !(a.converged && b.converged) {
        return Ok(AuditReport {
            passed: false,
            ..report
        }
        .with_note("inconclusive: a backend did not converge"));
    }
    Ok(report)
}

/// Everything needed to pose a problem with a known solution at any
/// resolution. Boundary data are taken from the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementSetup {
    pub dim: usize,
    pub operator: OperatorForm,
    pub reference: Expr,
    /// `None` means no obstacle.
    pub obstacle: Option<Expr>,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub n: usize,
    pub h: f64,
    pub error: f64,
    /// `error(previous n) / error(n)`.
    pub ratio: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub rows: Vec<RefinementRow>,
}

impl RefinementTable {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,h,error,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{}\n",
                r.n, r.h, r.error, ratio
            ));
        }
        out
    }
}

/// Sup-norm error against the reference for each resolution in `ns`.
pub fn grid_refinement_study(setup: &RefinementSetup, ns: &[usize]) -> Result<RefinementTable> {
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = Grid::new(setup.dim, n)?;
        let spec = setup.operator.instantiate(grid)?;
        let reference = ScalarField::sample(grid, &setup.reference)?;
        let obstacle = match &setup.obstacle {
            Some(e) => ScalarField::sample(grid, e)?,
            None => ScalarField::constant(grid, NO_OBSTACLE_BELOW),
        };
        let problem = ObstacleProblem::new(spec, Side::Below, obstacle, reference.clone())?;
        let report = solve(&problem, &setup.settings)?;
        let error = report.solution.sup_distance(&reference);
        let ratio = rows.last().map(|prev| prev.error / error);
        rows.push(RefinementRow {
            n,
            h: grid.spacing(),
            error,
            ratio,
            converged: report.converged,
        });
    }
    Ok(RefinementTable { rows })
}

/// Checks every consecutive error ratio against the configured window.
pub fn audit_refinement(table: &RefinementTable, cfg: &AuditConfig) -> AuditReport {
    let worst = table
        .rows
        .iter()
        .filter_map(|r| r.ratio.map(|q| (r.n, q)))
        .fold(None::<(usize, f64)>, |acc, (n, q)| {
            let dist = |q: f64| (q - 0.5 * (cfg.ratio_min + cfg.ratio_max)).abs();
            match acc {
                Some((_, best)) if dist(best) >= dist(q) => acc,
                _ => Some((n, q)),
            }
        });
    let converged = table.rows.iter().all(|r| r.converged);
    if table.rows.len() >= 2 && converged && table.max_error() <= cfg.exact_error_tol {
        let (n, err) = table
            .rows
            .iter()
            .map(|r| (r.n, r.error))
            .fold(
                (0, 0.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        return AuditReport::new("refinement_ratio", true, err, n, cfg.exact_error_tol)
            .with_note("reference reproduced to the exactness floor; ratio not applicable");
    }
    match worst {
        Some((n, q)) => {
            let report = AuditReport::new(
                "refinement_ratio",
                converged && q >= cfg.ratio_min && q <= cfg.ratio_max,
                q,
                n,
                cfg.ratio_max - cfg.ratio_min,
            );
            if converged {
                report
            } else {
                report.with_note("a refinement level did not converge")
            }
        }
        None => AuditReport::new("refinement_ratio", false, f64::NAN, 0, 0.0)
            .with_note("need at least two resolutions"),
    }
}
