//! The alternating obstacle iteration for the two-membranes problem.
//!
//! With an upper operator `L₁` (data `f`) and a lower operator `L₂` (data
//! `g`), a pair `(u, v)` solves the problem when
//!
//! ```text
//! min{L₁u, u − v} = 0,   max{L₂v, v − u} = 0   in Ω,   u = f, v = g on ∂Ω,
//! ```
//!
//! i.e. `u` solves the obstacle problem from below with obstacle `v`, and `v`
//! the one from above with obstacle `u`. Two monotone schemes are provided:
//!
//! * [`Mode::IncreasingFromSub`]: seed `v₀` a subsolution of `L₂`; then
//!   `u₀ = O̲(L₁, v₀, f)` and for `n ≥ 1`
//!   `v_n = Ō(L₂, u_{n−1}, g)`, `u_n = O̲(L₁, v_n, f)`. Both sequences are
//!   nondecreasing.
//! * [`Mode::DecreasingFromSuper`]: seed `u₀` a supersolution of `L₁`; then
//!   `v₀ = Ō(L₂, u₀, g)` and for `n ≥ 1`
//!   `u_n = O̲(L₁, v_{n−1}, f)`, `v_n = Ō(L₂, u_n, g)`. Both sequences are
//!   nonincreasing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};
use crate::obstacle::{solve_from, ObstacleProblem, Side, SolverSettings};
use crate::operators::{classify, energy, residual, OperatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    IncreasingFromSub,
    DecreasingFromSuper,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::IncreasingFromSub => "increasing_from_sub",
            Mode::DecreasingFromSuper => "decreasing_from_super",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneConfig {
    /// Operator of the upper membrane `u`.
    pub spec1: OperatorSpec,
    /// Operator of the lower membrane `v`.
    pub spec2: OperatorSpec,
    pub boundary_f: ScalarField,
    pub boundary_g: ScalarField,
    /// `v₀` when increasing, `u₀` when decreasing.
    pub seed: ScalarField,
    pub mode: Mode,
    /// Outer stopping threshold on both sup-norm deltas.
    pub tol: f64,
    pub max_outer: usize,
    pub inner: SolverSettings,
    /// Tolerance used to classify the seed.
    pub classify_tol: f64,
}

impl MembraneConfig {
    pub fn new(
        spec1: OperatorSpec,
        spec2: OperatorSpec,
        boundary_f: ScalarField,
        boundary_g: ScalarField,
        seed: ScalarField,
        mode: Mode,
    ) -> Self {
        Self {
            spec1,
            spec2,
            boundary_f,
            boundary_g,
            seed,
            mode,
            tol: 1e-9,
            max_outer: 10_000,
            inner: SolverSettings::default(),
            classify_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub sup_du: f64,
    pub sup_dv: f64,
    /// `min (u_n − v_n)` over all nodes.
    pub min_gap: f64,
    /// Smallest signed increment in the monotone direction of the mode
    /// (negative values are violations).
    pub worst_monotonicity: f64,
    pub res_u: f64,
    pub res_v: f64,
    pub energy_u: Option<f64>,
    pub energy_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub mode: Mode,
    pub boundary_f: ScalarField,
    pub boundary_g: ScalarField,
    /// `u_0, u_1, …`
    pub u: Vec<ScalarField>,
    /// `v_0, v_1, …`
    pub v: Vec<ScalarField>,
    /// One record per state, starting with the initial pair.
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mode: String,
    pub steps: usize,
    pub converged: bool,
    pub final_res_u: f64,
    pub final_res_v: f64,
    pub sup_separation_if_demo: Option<f64>,
}

impl IterationTrace {
    /// Number of outer steps performed after the initial pair.
    pub fn outer_steps(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn final_pair(&self) -> (&ScalarField, &ScalarField) {
        (
            self.u.last().expect("trace holds the initial pair"),
            self.v.last().expect("trace holds the initial pair"),
        )
    }

    pub fn summary(&self, sup_separation: Option<f64>) -> TraceSummary {
        let last = self.steps.last();
        TraceSummary {
            mode: self.mode.as_str().to_string(),
            steps: self.outer_steps(),
            converged: self.converged,
            final_res_u: last.map_or(f64::NAN, |s| s.res_u),
            final_res_v: last.map_or(f64::NAN, |s| s.res_v),
            sup_separation_if_demo: sup_separation,
        }
    }

    /// `n, sup_du, sup_dv, min_gap, worst_monotonicity, res_u, res_v,
    /// energy_u, energy_v`, energies blank when not variational.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,sup_du,sup_dv,min_gap,worst_monotonicity,res_u,res_v,energy_u,energy_v\n",
        );
        let opt = |v: Option<f64>| v.map(|e| format!("{e:.16e}")).unwrap_or_default();
        for s in &self.steps {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                s.n,
                s.sup_du,
                s.sup_dv,
                s.min_gap,
                s.worst_monotonicity,
                s.res_u,
                s.res_v,
                opt(s.energy_u),
                opt(s.energy_v)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    /// `sup |min(L₁u, u − v)|` over interior nodes.
    pub first: f64,
    pub first_node: usize,
    /// Signed value of the first defect at `first_node`.
    pub first_signed: f64,
    /// `sup |max(L₂v, v − u)|` over interior nodes.
    pub second: f64,
    pub second_node: usize,
    pub second_signed: f64,
    pub boundary_f_mismatch: f64,
    pub boundary_g_mismatch: f64,
}

impl PairResidual {
    pub fn passes(&self, tol: f64) -> bool {
        self.first <= tol
            && self.second <= tol
            && self.boundary_f_mismatch <= tol
            && self.boundary_g_mismatch <= tol
    }
}

/// Residual of `(u, v)` in the two-membranes system.
pub fn two_membrane_residual(
    u: &ScalarField,
    v: &ScalarField,
    spec1: &OperatorSpec,
    spec2: &OperatorSpec,
    boundary_f: &ScalarField,
    boundary_g: &ScalarField,
) -> Result<PairResidual> {
    u.ensure_same_grid(v)?;
    u.ensure_same_grid(boundary_f)?;
    u.ensure_same_grid(boundary_g)?;
    let r1 = residual(u, spec1)?;
    let r2 = residual(v, spec2)?;
    let grid = u.grid();
    let mut out = PairResidual {
        first: 0.0,
        first_node: 0,
        first_signed: 0.0,
        second: 0.0,
        second_node: 0,
        second_signed: 0.0,
        boundary_f_mismatch: 0.0,
        boundary_g_mismatch: 0.0,
    };
    for i in grid.interior_nodes() {
        let a = r1.at(i).min(u.at(i) - v.at(i));
        let b = r2.at(i).max(v.at(i) - u.at(i));
        if a.abs() > out.first {
            out.first = a.abs();
            out.first_node = i;
            out.first_signed = a;
        }
        if b.abs() > out.second {
            out.second = b.abs();
            out.second_node = i;
            out.second_signed = b;
        }
    }
    for i in grid.boundary_nodes() {
        out.boundary_f_mismatch = out
            .boundary_f_mismatch
            .max((u.at(i) - boundary_f.at(i)).abs());
        out.boundary_g_mismatch = out
            .boundary_g_mismatch
            .max((v.at(i) - boundary_g.at(i)).abs());
    }
    Ok(out)
}

const SEED_BOUNDARY_TOL: f64 = 1e-12;

fn validate(config: &MembraneConfig) -> Result<Vec<String>> {
    let grid = config.seed.grid();
    for field in [
        &config.boundary_f,
        &config.boundary_g,
        config.spec1.source(),
        config.spec2.source(),
    ] {
        field.ensure_same_grid(&config.seed)?;
    }
    for node in grid.boundary_nodes() {
        let (f, g) = (config.boundary_f.at(node), config.boundary_g.at(node));
        if f < g {
            return Err(Error::Infeasible {
                node,
                boundary: f,
                obstacle: g,
            });
        }
    }
    let (spec, data, want_sub) = match config.mode {
        Mode::IncreasingFromSub => (&config.spec2, &config.boundary_g, true),
        Mode::DecreasingFromSuper => (&config.spec1, &config.boundary_f, false),
    };
    for node in grid.boundary_nodes() {
        if (config.seed.at(node) - data.at(node)).abs() > SEED_BOUNDARY_TOL {
            return Err(Error::RejectedSeed {
                node,
                value: config.seed.at(node) - data.at(node),
                reason: "seed does not match the boundary data".into(),
            });
        }
    }
    let c = classify(&config.seed, spec, config.classify_tol)?;
    if want_sub && !c.is_subsolution() {
        return Err(Error::RejectedSeed {
            node: c.max_node,
            value: c.max_residual,
            reason: "seed is not a subsolution of the lower operator".into(),
        });
    }
    if !want_sub && !c.is_supersolution() {
        return Err(Error::RejectedSeed {
            node: c.min_node,
            value: c.min_residual,
            reason: "seed is not a supersolution of the upper operator".into(),
        });
    }

    let mut warnings = Vec::new();
    if let (Some(p), Some(q)) = (config.spec1.exponent(), config.spec2.exponent()) {
        let mismatched = match config.mode {
            Mode::IncreasingFromSub => p < q,
            Mode::DecreasingFromSuper => p > q,
        };
        if mismatched {
            warnings.push(format!(
                "exponents p = {p}, q = {q} do not match mode {}; monotone convergence is not guaranteed",
                config.mode.as_str()
            ));
        }
    }
    Ok(warnings)
}

struct Stepper<'a> {
    config: &'a MembraneConfig,
    step: usize,
}

impl Stepper<'_> {
    fn upper(&self, obstacle: &ScalarField, warm: Option<&ScalarField>) -> Result<ScalarField> {
        let problem = ObstacleProblem::new(
            self.config.spec1.clone(),
            Side::Below,
            obstacle.clone(),
            self.config.boundary_f.clone(),
        )?;
        self.run(&problem, warm)
    }

    fn lower(&self, obstacle: &ScalarField, warm: Option<&ScalarField>) -> Result<ScalarField> {
        let problem = ObstacleProblem::new(
            self.config.spec2.clone(),
            Side::Above,
            obstacle.clone(),
            self.config.boundary_g.clone(),
        )?;
        self.run(&problem, warm)
    }

    fn run(&self, problem: &ObstacleProblem, warm: Option<&ScalarField>) -> Result<ScalarField> {
        let report = solve_from(problem, warm, &self.config.inner)?;
        if !report.converged {
            return Err(Error::InnerSolve {
                step: self.step,
                residual: report.final_residual,
            });
        }
        Ok(report.solution)
    }
}

fn record(
    config: &MembraneConfig,
    n: usize,
    u: &ScalarField,
    v: &ScalarField,
    prev: Option<(&ScalarField, &ScalarField)>,
) -> Result<StepRecord> {
    let pair = two_membrane_residual(
        u,
        v,
        &config.spec1,
        &config.spec2,
        &config.boundary_f,
        &config.boundary_g,
    )?;
    let min_gap = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let (sup_du, sup_dv, worst) = match prev {
        None => (0.0, 0.0, 0.0),
        Some((pu, pv)) => {
            let sign = match config.mode {
                Mode::IncreasingFromSub => 1.0,
                Mode::DecreasingFromSuper => -1.0,
            };
            let worst = (0..u.values().len())
                .map(|i| (sign * (u.at(i) - pu.at(i))).min(sign * (v.at(i) - pv.at(i))))
                .fold(f64::INFINITY, f64::min);
            (u.sup_distance(pu), v.sup_distance(pv), worst)
        }
    };
    let energy_of = |w: &ScalarField, spec: &OperatorSpec| {
        if spec.is_variational() {
            energy(w, spec).ok()
        } else {
            None
        }
    };
    Ok(StepRecord {
        n,
        sup_du,
        sup_dv,
        min_gap,
        worst_monotonicity: worst,
        res_u: pair.first,
        res_v: pair.second,
        energy_u: energy_of(u, &config.spec1),
        energy_v: energy_of(v, &config.spec2),
    })
}

/// Runs the iteration, returning the trace so far alongside the error that
/// stopped it (if any).
pub fn iterate_partial(config: &MembraneConfig) -> (Option<IterationTrace>, Option<Error>) {
    let warnings = match validate(config) {
        Ok(w) => w,
        Err(e) => return (None, Some(e)),
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut trace = IterationTrace {
        mode: config.mode,
        boundary_f: config.boundary_f.clone(),
        boundary_g: config.boundary_g.clone(),
        u: Vec::new(),
        v: Vec::new(),
        steps: Vec::new(),
        converged: false,
        warnings,
    };
    let mut stepper = Stepper { config, step: 0 };

    // pin the seed's boundary to the data exactly
    let seed_data = match config.mode {
        Mode::IncreasingFromSub => &config.boundary_g,
        Mode::DecreasingFromSuper => &config.boundary_f,
    };
    let mut seed = config.seed.clone();
    let grid = seed.grid();
    for node in grid.boundary_nodes() {
        seed.values_mut()[node] = seed_data.at(node);
    }

    let initial = match config.mode {
        Mode::IncreasingFromSub => stepper.upper(&seed, None).map(|u0| (u0, seed)),
        Mode::DecreasingFromSuper => stepper.lower(&seed, None).map(|v0| (seed, v0)),
    };
    let (u0, v0) = match initial {
        Ok(pair) => pair,
        Err(e) => return (Some(trace), Some(e)),
    };
    match record(config, 0, &u0, &v0, None) {
        Ok(r) => trace.steps.push(r),
        Err(e) => return (Some(trace), Some(e)),
    }
    trace.u.push(u0);
    trace.v.push(v0);

    for n in 1..=config.max_outer {
        stepper.step = n;
        let (pu, pv) = trace.final_pair();
        let next = match config.mode {
            Mode::IncreasingFromSub => stepper
                .lower(pu, Some(pv))
                .and_then(|v| stepper.upper(&v, Some(pu)).map(|u| (u, v))),
            Mode::DecreasingFromSuper => stepper
                .upper(pv, Some(pu))
                .and_then(|u| stepper.lower(&u, Some(pv)).map(|v| (u, v))),
        };
        let (u, v) = match next {
            Ok(pair) => pair,
            Err(e) => return (Some(trace), Some(e)),
        };
        let rec = match record(config, n, &u, &v, Some((pu, pv))) {
            Ok(r) => r,
            Err(e) => return (Some(trace), Some(e)),
        };
        log::debug!(
            "outer step {n}: sup_du {:e}, sup_dv {:e}, min_gap {:e}",
            rec.sup_du,
            rec.sup_dv,
            rec.min_gap
        );
        trace.steps.push(rec);
        trace.u.push(u);
        trace.v.push(v);
        if rec.sup_du < config.tol && rec.sup_dv < config.tol {
            trace.converged = true;
            break;
        }
    }
    (Some(trace), None)
}

/// Runs the monotone iteration described in the module docs.
pub fn iterate(config: &MembraneConfig) -> Result<IterationTrace> {
    match iterate_partial(config) {
        (Some(trace), None) => Ok(trace),
        (_, Some(e)) => Err(e),
        (None, None) => unreachable!("iteration ends with a trace or an error"),
    }
}

/// Resolution of the built-in non-uniqueness example.
pub const DEMO_NODES: usize = 201;
const DEMO_AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub u_hat: ScalarField,
    pub v_hat: ScalarField,
    pub u_tilde: ScalarField,
    pub v_tilde: ScalarField,
    pub residual_hat: PairResidual,
    pub residual_tilde: PairResidual,
    /// `sup |û − ũ|`
    pub separation: f64,
    /// Decreasing run seeded with `û`.
    pub hat_trace: IterationTrace,
    /// Increasing run seeded with `ṽ`.
    pub tilde_trace: IterationTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub n: usize,
    pub u_hat_mid: f64,
    pub v_hat_mid: f64,
    pub u_tilde_mid: f64,
    pub v_tilde_mid: f64,
    pub res_hat_first: f64,
    pub res_hat_second: f64,
    pub res_tilde_first: f64,
    pub res_tilde_second: f64,
    pub sup_separation: f64,
    pub hat_steps: usize,
    pub tilde_steps: usize,
}

impl DemoReport {
    pub fn summary(&self) -> DemoSummary {
        DemoSummary {
            n: self.u_hat.grid().n_per_axis(),
            u_hat_mid: self.u_hat.value_near(0.5, 0.0),
            v_hat_mid: self.v_hat.value_near(0.5, 0.0),
            u_tilde_mid: self.u_tilde.value_near(0.5, 0.0),
            v_tilde_mid: self.v_tilde.value_near(0.5, 0.0),
            res_hat_first: self.residual_hat.first,
            res_hat_second: self.residual_hat.second,
            res_tilde_first: self.residual_tilde.first,
            res_tilde_second: self.residual_tilde.second,
            sup_separation: self.separation,
            hat_steps: self.hat_trace.outer_steps(),
            tilde_steps: self.tilde_trace.outer_steps(),
        }
    }
}

/// Operators and data of the non-uniqueness example on `(0,1)`:
/// `L₁ = -u'' + 10`, `L₂ = -v'' - 2`, `f ≡ 1`, `g ≡ 0`.
pub fn demo_setup(n: usize) -> Result<(OperatorSpec, OperatorSpec, ScalarField, ScalarField)> {
    let grid = Grid::new(1, n)?;
    Ok((
        OperatorSpec::variational(2.0, ScalarField::constant(grid, 10.0))?,
        OperatorSpec::variational(2.0, ScalarField::constant(grid, -2.0))?,
        ScalarField::constant(grid, 1.0),
        ScalarField::constant(grid, 0.0),
    ))
}

/// Builds the two distinct solution pairs of the example: `(û, v̂)` from the
/// free upper membrane and `(ũ, ṽ)` from the free lower membrane.
pub fn nonuniqueness_demo() -> Result<DemoReport> {
    nonuniqueness_demo_on(DEMO_NODES)
}

pub fn nonuniqueness_demo_on(n: usize) -> Result<DemoReport> {
    let (spec1, spec2, f, g) = demo_setup(n)?;
    let grid = f.grid();
    let settings = SolverSettings::default();

    let free_upper = ObstacleProblem::new(
        spec1.clone(),
        Side::Below,
        ScalarField::constant(grid, NO_OBSTACLE_BELOW),
        f.clone(),
    )?;
    let free_lower = ObstacleProblem::new(
        spec2.clone(),
        Side::Above,
        ScalarField::constant(grid, NO_OBSTACLE_ABOVE),
        g.clone(),
    )?;
    let u_hat = solve_from(&free_upper, None, &settings)?;
    let v_tilde = solve_from(&free_lower, None, &settings)?;
    if !(u_hat.converged && v_tilde.converged) {
        return Err(Error::DemoFailed(
            "free membrane solve did not converge".into(),
        ));
    }

    let mut hat_cfg = MembraneConfig::new(
        spec1.clone(),
        spec2.clone(),
        f.clone(),
        g.clone(),
        u_hat.solution,
        Mode::DecreasingFromSuper,
    );
    hat_cfg.inner = settings;
    let mut tilde_cfg = hat_cfg.clone();
    tilde_cfg.seed = v_tilde.solution;
    tilde_cfg.mode = Mode::IncreasingFromSub;

    let hat_trace = iterate(&hat_cfg)?;
    let tilde_trace = iterate(&tilde_cfg)?;
    let (u_hat, v_hat) = hat_trace.final_pair();
    let (u_tilde, v_tilde) = tilde_trace.final_pair();
    let residual_hat = two_membrane_residual(u_hat, v_hat, &spec1, &spec2, &f, &g)?;
    let residual_tilde = two_membrane_residual(u_tilde, v_tilde, &spec1, &spec2, &f, &g)?;
    let separation = u_hat.sup_distance(u_tilde);

    if !residual_hat.passes(DEMO_AUDIT_TOL) {
        return Err(Error::DemoFailed(format!(
            "(û, v̂) residual {residual_hat:?}"
        )));
    }
    if !residual_tilde.passes(DEMO_AUDIT_TOL) {
        return Err(Error::DemoFailed(format!(
            "(ũ, ṽ) residual {residual_tilde:?}"
        )));
    }
    if separation < 0.5 - 1e-3 {
        return Err(Error::DemoFailed(format!("pairs only {separation} apart")));
    }
    Ok(DemoReport {
        u_hat: u_hat.clone(),
        v_hat: v_hat.clone(),
        u_tilde: u_tilde.clone(),
        v_tilde: v_tilde.clone(),
        residual_hat,
        residual_tilde,
        separation,
        hat_trace,
        tilde_trace,
    })
}
