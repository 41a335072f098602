use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use membrane_core::grid::{NO_OBSTACLE_ABOVE, NO_OBSTACLE_BELOW};
use membrane_core::membranes::{iterate_partial, nonuniqueness_demo_on, two_membrane_residual};
use membrane_core::obstacle::Method;
use membrane_core::verify::{
    audit_complementarity, audit_cross_solver, audit_field_complementarity, audit_refinement,
    audit_trace, grid_refinement_study, AuditReport, RefinementSetup,
};
use membrane_core::{
    solve, Error, Grid, IterationTrace, MembraneConfig, ObstacleProblem, ScalarField, Side,
    SolverSettings,
};
use serde::Serialize;

mod config;

use config::{ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "membranes",
    version,
    about = "Obstacle problems and two-membrane iterations on uniform grids"
)]
struct Cli {
    /// INI experiment file; omitted sections take the built-in example.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Nodes per axis (overrides [grid] n).
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Inner solver tolerance (overrides [solver] tol).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve one obstacle problem built from op1/f (below) or op2/g (above).
    Solve,
    /// Run the monotone two-membrane iteration from the configured seed.
    Iterate,
    /// Build the two distinct solution pairs of the built-in example.
    Demo,
    /// Run every audit that applies to the configuration.
    Verify,
    /// Grid refinement study against [refine] reference.
    Refine,
}

enum Failure {
    Config(ConfigError),
    Core(Error),
    Io(String),
    NotConverged(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Core(Error::Infeasible { .. } | Error::RejectedSeed { .. }) => 3,
            Failure::Core(Error::InnerSolve { .. } | Error::DemoFailed(_))
            | Failure::NotConverged(_) => 4,
            Failure::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(e) => format!("config error: {e}"),
            Failure::Core(e) => e.to_string(),
            Failure::Io(e) => format!("i/o error: {e}"),
            Failure::NotConverged(e) => format!("not converged: {e}"),
        }
    }
}

type Outcome = Result<u8, Failure>;

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn text(&self, name: &str, content: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn field(&self, name: &str, w: &ScalarField) -> Result<(), Failure> {
        self.text(name, &w.to_csv_string())
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.n {
        if n < 3 {
            return Err(ConfigError::general(format!("--n {n}: need at least 3 nodes")).into());
        }
        cfg.n = n;
    }
    if let Some(tol) = cli.tol {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(ConfigError::general(format!("--tol {tol}: must be positive")).into());
        }
        cfg.solver.tol = tol;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn settings(cfg: &ExperimentConfig) -> SolverSettings {
    SolverSettings {
        method: cfg.solver.method,
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        omega: cfg.solver.omega,
        damping: cfg.solver.damping,
    }
}

fn problem(cfg: &ExperimentConfig, grid: Grid) -> Result<ObstacleProblem, Failure> {
    let (form, boundary, absent) = match cfg.side {
        Side::Below => (&cfg.op1, &cfg.f, NO_OBSTACLE_BELOW),
        Side::Above => (&cfg.op2, &cfg.g, NO_OBSTACLE_ABOVE),
    };
    let obstacle = match &cfg.obstacle {
        Some(e) => ScalarField::sample(grid, e)?,
        None => ScalarField::constant(grid, absent),
    };
    let boundary = ScalarField::sample(grid, boundary)?;
    Ok(ObstacleProblem::new(
        form.instantiate(grid)?,
        cfg.side,
        obstacle,
        boundary,
    )?)
}

fn membrane_config(cfg: &ExperimentConfig, grid: Grid) -> Result<MembraneConfig, Failure> {
    let mut m = MembraneConfig::new(
        cfg.op1.instantiate(grid)?,
        cfg.op2.instantiate(grid)?,
        ScalarField::sample(grid, &cfg.f)?,
        ScalarField::sample(grid, &cfg.g)?,
        ScalarField::sample(grid, &cfg.seed)?,
        cfg.mode,
    );
    m.tol = cfg.solver.outer_tol;
    m.max_outer = cfg.solver.max_outer;
    m.inner = settings(cfg);
    Ok(m)
}

#[derive(Serialize)]
struct SolveArtifact {
    side: Side,
    method: Method,
    n: usize,
    dim: usize,
    converged: bool,
    stalled: bool,
    iterations: usize,
    final_residual: f64,
    contact_set: Vec<usize>,
}

fn run_solve(cfg: &ExperimentConfig) -> Outcome {
    let grid = Grid::new(cfg.dim, cfg.n)?;
    let problem = problem(cfg, grid)?;
    let settings = settings(cfg);
    let report = solve(&problem, &settings)?;
    let out = Artifacts::new(&cfg.out_dir)?;
    out.json(
        "solve_report.json",
        &SolveArtifact {
            side: cfg.side,
            method: settings.resolve_method(problem.spec()),
            n: cfg.n,
            dim: cfg.dim,
            converged: report.converged,
            stalled: report.stalled,
            iterations: report.iterations,
            final_residual: report.final_residual,
            contact_set: report.contact_set.clone(),
        },
    )?;
    out.field("solution.csv", &report.solution)?;
    if !report.energy_trace.is_empty() {
        let mut csv = String::from("step,energy\n");
        for (k, e) in report.energy_trace.iter().enumerate() {
            csv.push_str(&format!("{k},{e:.16e}\n"));
        }
        out.text("energy_trace.csv", &csv)?;
    }
    println!(
        "solve: converged={} iterations={} final_residual={:.3e} contacts={}",
        report.converged,
        report.iterations,
        report.final_residual,
        report.contact_set.len()
    );
    if !report.converged {
        return Err(Failure::NotConverged(format!(
            "obstacle solve stopped at residual {:e} after {} iterations",
            report.final_residual, report.iterations
        )));
    }
    Ok(0)
}

#[derive(Serialize)]
struct IterateArtifact {
    #[serde(flatten)]
    summary: membrane_core::membranes::TraceSummary,
    warnings: Vec<String>,
    error: Option<String>,
}

fn write_trace(out: &Artifacts, prefix: &str, trace: &IterationTrace) -> Result<(), Failure> {
    out.text(&format!("{prefix}trace.csv"), &trace.to_csv())?;
    let (u, v) = trace.final_pair();
    out.field(&format!("{prefix}u_final.csv"), u)?;
    out.field(&format!("{prefix}v_final.csv"), v)
}

fn run_iterate(cfg: &ExperimentConfig) -> Outcome {
    let grid = Grid::new(cfg.dim, cfg.n)?;
    let mcfg = membrane_config(cfg, grid)?;
    let (trace, err) = iterate_partial(&mcfg);
    let Some(trace) = trace else {
        return Err(err
            .map(Failure::Core)
            .unwrap_or(Failure::NotConverged("no trace".into())));
    };
    let out = Artifacts::new(&cfg.out_dir)?;
    write_trace(&out, "", &trace)?;
    out.json(
        "summary.json",
        &IterateArtifact {
            summary: trace.summary(None),
            warnings: trace.warnings.clone(),
            error: err.as_ref().map(|e| e.to_string()),
        },
    )?;
    println!(
        "iterate: mode={} steps={} converged={}",
        cfg.mode.as_str(),
        trace.outer_steps(),
        trace.converged
    );
    if let Some(e) = err {
        return Err(Failure::Core(e));
    }
    if !trace.converged {
        return Err(Failure::NotConverged(format!(
            "outer iteration stopped after {} steps",
            trace.outer_steps()
        )));
    }
    Ok(0)
}

fn run_demo(cfg: &ExperimentConfig) -> Outcome {
    let demo = nonuniqueness_demo_on(cfg.n)?;
    let out = Artifacts::new(&cfg.out_dir)?;
    let summary = demo.summary();
    out.json("demo_summary.json", &summary)?;
    out.field("u_hat.csv", &demo.u_hat)?;
    out.field("v_hat.csv", &demo.v_hat)?;
    out.field("u_tilde.csv", &demo.u_tilde)?;
    out.field("v_tilde.csv", &demo.v_tilde)?;
    out.text("hat_trace.csv", &demo.hat_trace.to_csv())?;
    out.text("tilde_trace.csv", &demo.tilde_trace.to_csv())?;
    println!(
        "demo: u_hat(0.5)={:.9} u_tilde(0.5)={:.9} separation={:.9}",
        summary.u_hat_mid, summary.u_tilde_mid, summary.sup_separation
    );
    Ok(0)
}

fn run_verify(cfg: &ExperimentConfig) -> Outcome {
    let grid = Grid::new(cfg.dim, cfg.n)?;
    let settings = settings(cfg);
    let mut audits: Vec<AuditReport> = Vec::new();

    let problem = problem(cfg, grid)?;
    let report = solve(&problem, &settings)?;
    audits.push(audit_complementarity(&report, &problem, &cfg.audit)?);
    if matches!(problem.spec(), membrane_core::OperatorSpec::Variational { p, .. } if *p == 2.0) {
        audits.push(audit_cross_solver(&problem, &settings, &cfg.audit)?);
    }

    let mcfg = membrane_config(cfg, grid)?;
    let (trace, err) = iterate_partial(&mcfg);
    if let Some(e) = err {
        warn!("membrane iteration: {e}");
    }
    if let Some(trace) = trace {
        audits.extend(audit_trace(&trace, &cfg.audit));
        let (u, v) = trace.final_pair();
        let upper = ObstacleProblem::new(
            mcfg.spec1.clone(),
            Side::Below,
            v.clone(),
            mcfg.boundary_f.clone(),
        )?;
        let lower = ObstacleProblem::new(
            mcfg.spec2.clone(),
            Side::Above,
            u.clone(),
            mcfg.boundary_g.clone(),
        )?;
        for (name, p, w) in [("pair_upper", &upper, u), ("pair_lower", &lower, v)] {
            let mut a = audit_field_complementarity(w, p, &cfg.audit)?;
            a.name = format!("{name}_complementarity");
            audits.push(a);
        }
        let pair = two_membrane_residual(
            u,
            v,
            &mcfg.spec1,
            &mcfg.spec2,
            &mcfg.boundary_f,
            &mcfg.boundary_g,
        )?;
        info!("two-membrane residual {:e} / {:e}", pair.first, pair.second);
    }

    if let Some(reference) = &cfg.reference {
        let setup = RefinementSetup {
            dim: cfg.dim,
            operator: cfg.op1.clone(),
            reference: reference.clone(),
            obstacle: cfg.obstacle.clone(),
            settings,
        };
        let table = grid_refinement_study(&setup, &cfg.ns)?;
        audits.push(audit_refinement(&table, &cfg.audit));
    }

    let out = Artifacts::new(&cfg.out_dir)?;
    out.json("audits.json", &audits)?;
    let failed = audits.iter().filter(|a| !a.passed).count();
    for a in &audits {
        println!(
            "{} {} worst={:.3e} tol={:.1e}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.worst_value,
            a.tolerance
        );
    }
    println!("verify: {} audits, {failed} failed", audits.len());
    Ok(failed.min(u8::MAX as usize) as u8)
}

fn run_refine(cfg: &ExperimentConfig) -> Outcome {
    let reference = cfg
        .reference
        .clone()
        .ok_or_else(|| ConfigError::general("refine needs [refine] reference = <expression>"))?;
    let setup = RefinementSetup {
        dim: cfg.dim,
        operator: cfg.op1.clone(),
        reference,
        obstacle: cfg.obstacle.clone(),
        settings: settings(cfg),
    };
    let table = grid_refinement_study(&setup, &cfg.ns)?;
    let out = Artifacts::new(&cfg.out_dir)?;
    out.text("refinement.csv", &table.to_csv())?;
    for row in &table.rows {
        let ratio = row
            .ratio
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "-".into());
        println!("refine: n={} error={:.6e} ratio={ratio}", row.n, row.error);
    }
    if let Some(row) = table.rows.iter().find(|r| !r.converged) {
        return Err(Failure::NotConverged(format!(
            "solve at n = {} did not converge",
            row.n
        )));
    }
    Ok(0)
}

fn init_logging() {
    let level = match std::env::var("MEMBRANE_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    if let Ok(other) = std::env::var("MEMBRANE_LOG") {
        if !["quiet", "info", "debug"].contains(&other.as_str()) {
            warn!("MEMBRANE_LOG={other:?} not recognised; using info");
        }
    }
    let result = load(&cli).and_then(|cfg| {
        info!("{:?} on {}D grid, n = {}", cli.command, cfg.dim, cfg.n);
        match cli.command {
            Command::Solve => run_solve(&cfg),
            Command::Iterate => run_iterate(&cfg),
            Command::Demo => run_demo(&cfg),
            Command::Verify => run_verify(&cfg),
            Command::Refine => run_refine(&cfg),
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("membranes: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
