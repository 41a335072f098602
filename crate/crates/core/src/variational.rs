//! Energy-minimizing obstacle solvers for `L w = -Δ_p w + h`.
//!
//! Problems from above are solved through [`dualize`]: the mirrored problem
//! from below is solved and its solution negated.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::obstacle::{
    dualize, gap_tol, Method, ObstacleProblem, Side, SolveReport, SolverSettings,
};
use crate::operators::{energy_parts, residual_variational, OperatorSpec};

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
// Sweeps between forced defect evaluations in PSOR.
const CHECK_EVERY: usize = 64;

fn exponent(problem: &ObstacleProblem) -> Result<f64> {
    match problem.spec() {
        OperatorSpec::Variational { p, .. } => Ok(*p),
        _ => Err(Error::Precondition(
            "variational solver needs a variational operator".into(),
        )),
    }
}

/// Solves with an explicit method from the default starting field.
pub fn solve_obstacle(
    problem: &ObstacleProblem,
    method: Method,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let settings = SolverSettings {
        method: Some(method),
        tol,
        max_iter,
        ..SolverSettings::default()
    };
    solve_obstacle_from(problem, None, &settings)
}

pub fn solve_obstacle_from(
    problem: &ObstacleProblem,
    init: Option<&ScalarField>,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    let p = exponent(problem)?;
    let method = settings.resolve_method(problem.spec());
    if method == Method::Psor && p != 2.0 {
        return Err(Error::Precondition(format!(
            "PSOR requires p = 2, got p = {p}"
        )));
    }
    if problem.side() == Side::Above {
        let mirror = dualize(problem);
        let init = init.map(ScalarField::negated);
        return solve_obstacle_from(&mirror, init.as_ref(), settings).map(SolveReport::negated);
    }
    let start = match init {
        Some(w) => problem.project(w),
        None => problem.initial_iterate(),
    };
    match method {
        Method::Psor => psor_solve(problem, start, settings),
        Method::ProjectedGradient => {
            projected_gradient_from(problem, start, settings.tol, settings.max_iter)
        }
        Method::FixedPoint => Err(Error::Precondition(
            "fixed-point method applies to normalized operators".into(),
        )),
    }
}

fn psor_checks(problem: &ObstacleProblem, omega: f64) -> Result<()> {
    let p = exponent(problem)?;
    if p != 2.0 {
        return Err(Error::Precondition(format!(
            "PSOR requires p = 2, got p = {p}"
        )));
    }
    if problem.side() != Side::Below {
        return Err(Error::Precondition(
            "PSOR sweeps act on problems from below".into(),
        ));
    }
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Precondition(format!(
            "relaxation {omega} outside (0, 2)"
        )));
    }
    Ok(())
}

// One lexicographic projected SOR sweep in place; returns the largest update.
fn psor_sweep_in_place(problem: &ObstacleProblem, w: &mut [f64], omega: f64) -> f64 {
    let grid = problem.grid();
    let h2 = grid.spacing() * grid.spacing();
    let source = problem.spec().source().values();
    let obstacle = problem.obstacle().values();
    let mut largest = 0.0f64;
    for i in 0..grid.len() {
        if grid.is_boundary(i) {
            continue;
        }
        let (nbrs, k) = grid.axis_neighbors(i);
        let sum: f64 = nbrs[..k].iter().map(|&j| w[j]).sum();
        let gauss_seidel = (sum - source[i] * h2) / k as f64;
        let updated = (w[i] + omega * (gauss_seidel - w[i])).max(obstacle[i]);
        largest = largest.max((updated - w[i]).abs());
        w[i] = updated;
    }
    largest
}

/// One projected SOR sweep (`p = 2`, problem from below).
pub fn psor_sweep(w: &ScalarField, problem: &ObstacleProblem, omega: f64) -> Result<ScalarField> {
    psor_checks(problem, omega)?;
    w.ensure_same_grid(problem.obstacle())?;
    let mut out = w.clone();
    psor_sweep_in_place(problem, out.values_mut(), omega);
    Ok(out)
}

fn sup_defect(problem: &ObstacleProblem, w: &ScalarField) -> Result<f64> {
    Ok(problem
        .complementarity_defect(w)?
        .values()
        .iter()
        .fold(0.0, |m, v| m.max(v.abs())))
}

fn finish(
    problem: &ObstacleProblem,
    solution: ScalarField,
    iterations: usize,
    final_residual: f64,
    tol: f64,
    stalled: bool,
    energy_trace: Vec<f64>,
) -> SolveReport {
    let contact_set = problem.contact_set(&solution, gap_tol(tol));
    SolveReport {
        solution,
        iterations,
        final_residual,
        contact_set,
        converged: final_residual <= tol,
        stalled,
        energy_trace,
    }
}

fn psor_solve(
    problem: &ObstacleProblem,
    mut w: ScalarField,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    psor_checks(problem, settings.omega)?;
    let grid = problem.grid();
    let dof_scale = 2.0 * grid.dim() as f64 / (settings.omega * grid.spacing().powi(2));
    let mut defect = sup_defect(problem, &w)?;
    let mut iterations = 0;
    while defect > settings.tol && iterations < settings.max_iter {
        let update = psor_sweep_in_place(problem, w.values_mut(), settings.omega);
        iterations += 1;
        // update ≈ ω h² r / 2d, so the defect is only evaluated once the
        // sweep suggests it may be small.
        if update * dof_scale <= 10.0 * settings.tol
            || iterations % CHECK_EVERY == 0
            || iterations == settings.max_iter
        {
            defect = sup_defect(problem, &w)?;
        }
    }
    log::debug!("psor: {iterations} sweeps, defect {defect:e}");
    Ok(finish(
        problem,
        w,
        iterations,
        defect,
        settings.tol,
        false,
        Vec::new(),
    ))
}

/// Projected gradient descent with Barzilai–Borwein trial steps and Armijo
/// backtracking, from the default feasible start.
pub fn projected_gradient_solve(
    problem: &ObstacleProblem,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    exponent(problem)?;
    if problem.side() != Side::Below {
        return Err(Error::Precondition(
            "projected gradient acts on problems from below; dualize first".into(),
        ));
    }
    projected_gradient_from(problem, problem.initial_iterate(), tol, max_iter)
}

fn projected_gradient_from(
    problem: &ObstacleProblem,
    mut w: ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let spec = problem.spec();
    let grid = problem.grid();
    let obstacle = problem.obstacle().values();
    let interior: Vec<usize> = grid.interior_nodes().collect();
    let volume = |i: usize| grid.node_volume(i);
    let rounding = 4.0 * f64::EPSILON * (grid.len() as f64).sqrt();

    let energy_of = |w: &ScalarField| -> Result<(f64, f64)> {
        let (a, b, c) = energy_parts(w, spec)?;
        Ok((a + b, a + c))
    };

    let (mut e, mut scale) = energy_of(&w)?;
    let mut r = residual_variational(&w, spec)?.field().clone();
    let mut energies = vec![e];
    let mut step = grid.spacing().powi(2) / (2.0 * grid.dim() as f64);
    let mut iterations = 0;
    let mut defect = sup_defect(problem, &w)?;
    let mut stalled = false;

    while defect > tol && iterations < max_iter {
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = w.clone();
            let tv = trial.values_mut();
            let mut decrease = 0.0;
            for &i in &interior {
                let moved = (w.at(i) - step * r.at(i)).max(obstacle[i]);
                decrease += r.at(i) * volume(i) * (moved - w.at(i));
                tv[i] = moved;
            }
            let (e_trial, s_trial) = energy_of(&trial)?;
            let allowance = rounding * (scale + s_trial);
            if e_trial <= e + ARMIJO_C * decrease + allowance {
                accepted = Some((trial, e_trial, s_trial));
                break;
            }
            step *= 0.5;
        }
        let Some((next, e_next, s_next)) = accepted else {
            stalled = true;
            break;
        };
        let r_next = residual_variational(&next, spec)?.field().clone();
        let (mut ss, mut sy) = (0.0, 0.0);
        for &i in &interior {
            let s = next.at(i) - w.at(i);
            ss += s * s;
            sy += s * (r_next.at(i) - r.at(i));
        }
        if ss == 0.0 {
            // No movement left: the iterate is stationary up to rounding.
            w = next;
            iterations += 1;
            defect = sup_defect(problem, &w)?;
            stalled = defect > tol;
            break;
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * step };
        w = next;
        r = r_next;
        e = e_next;
        scale = s_next;
        energies.push(e);
        iterations += 1;
        defect = sup_defect(problem, &w)?;
    }
    log::debug!("projected gradient: {iterations} steps, defect {defect:e}, stalled {stalled}");
    Ok(finish(
        problem, w, iterations, defect, tol, stalled, energies,
    ))
}
