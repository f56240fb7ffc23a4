//! Command-line interface.
//!
//! Exit codes: 0 success, 1 configuration/parse errors, 2 failed check or
//! verification (or a refused certificate), 3 ordering violation during the
//! monotone iteration, 4 non-convergence.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use devbvp::conditions::ConditionReport;
use devbvp::config::{self, CompiledProblem};
use devbvp::contraction::SampledProblem;
use devbvp::error::Error;
use devbvp::grid::Mesh;
use devbvp::jumps;
use devbvp::monotone::{self, BracketOutcome, VerificationReport, EPS_VERIFY};

#[derive(Parser)]
#[command(
    name = "devbvp",
    about = "Dirichlet problems with deviated arguments: condition checks, lower/upper verification, extremal-solution bracketing",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Source {
    /// JSON problem file (see README for the schema).
    #[arg(long, conflicts_with = "builtin")]
    config: Option<PathBuf>,
    /// One of: example1, example2, trivial_constant, trivial_linear.
    #[arg(long)]
    builtin: Option<String>,
    /// Lipschitz parameter for the builtin `example2`.
    #[arg(long)]
    k: Option<f64>,
    /// Override the number of mesh cells on [0, T].
    #[arg(long)]
    n: Option<usize>,
    /// Override the outer stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate coefficient norms and the smallness conditions.
    Check(Source),
    /// Verify the configured lower and upper solutions.
    Verify(Source),
    /// Run the monotone bracketing iteration and write result files.
    Solve {
        #[command(flatten)]
        src: Source,
        /// Output directory for bracket.csv, convergence.csv, summary.json,
        /// conditions.json and verify.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run even if the condition check or verification fails.
        #[arg(long)]
        force: bool,
    },
    /// Compute the jump-shift certificate for the configured slice of f.
    Certify(Source),
    /// check + verify + solve, with a combined report.
    Report {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() {
    if let Err(msg) = check_thread_cap() {
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Check(src) => run_check(&src),
        Cmd::Verify(src) => run_verify(&src),
        Cmd::Solve { src, out, force } => run_solve(&src, &out, force),
        Cmd::Certify(src) => run_certify(&src),
        Cmd::Report { src, out, force } => run_report(&src, &out, force),
    };
    std::process::exit(code);
}

/// `DEVBVP_THREADS` caps worker threads. The pipeline is sequential (its
/// running sums fix the summation order), so any cap >= 1 is honored.
fn check_thread_cap() -> Result<(), String> {
    match std::env::var("DEVBVP_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!("DEVBVP_THREADS must be a positive integer, got {v:?}")),
        },
    }
}

fn load(src: &Source) -> Result<CompiledProblem, Error> {
    let mut cfg = match (&src.config, &src.builtin) {
        (Some(path), None) => config::load_file(path)?,
        (None, Some(name)) => config::builtin(name, src.k)?,
        (None, None) => {
            return Err(Error::Config("pass --config FILE or --builtin NAME".into()))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if src.k.is_some() && src.builtin.as_deref() != Some("example2") {
        eprintln!("warning: --k only applies to the builtin example2; ignored");
    }
    if let Some(n) = src.n {
        cfg.mesh_n = n;
    }
    if let Some(tol) = src.tol {
        cfg.outer_tol = tol;
    }
    config::compile(&cfg)
}

fn fail(err: &Error) -> i32 {
    eprintln!("error: {err}");
    match err {
        Error::OrderingViolation { .. } => 3,
        Error::NonConvergence { .. } | Error::OuterNonConvergence { .. } => 4,
        Error::CertificateRefused { .. } | Error::CertificateInconsistent { .. } => 2,
        _ => 1,
    }
}

fn run_check(src: &Source) -> i32 {
    let problem = match load(src) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    match check_report(&problem) {
        Ok(report) => {
            println!("{}", pretty(&report.to_flat_json()));
            if report.main_rule_ok {
                0
            } else {
                2
            }
        }
        Err(e) => fail(&e),
    }
}

fn check_report(problem: &CompiledProblem) -> Result<ConditionReport, Error> {
    let mesh = Mesh::new(problem.setup.bvp.horizon, problem.setup.bvp.radius, problem.mesh_n)?;
    devbvp::conditions::evaluate(&problem.setup.coefficients, &mesh)
}

struct Verification {
    lower: VerificationReport,
    upper: VerificationReport,
}

fn verify_reports(problem: &CompiledProblem) -> Result<Verification, Error> {
    let setup = &problem.setup;
    let mesh = Mesh::new(setup.bvp.horizon, setup.bvp.radius, problem.mesh_n)?;
    let sp = SampledProblem::build(&setup.bvp, &mesh, setup.shift_first_sample())?;
    let pair = setup.sample_pair(&mesh)?;
    let lower = monotone::verify_lower(&sp, &setup.bvp.nonlinearity, &pair.lower, EPS_VERIFY)?;
    let upper = monotone::verify_upper(&sp, &setup.bvp.nonlinearity, &pair.upper, EPS_VERIFY)?;
    Ok(Verification { lower, upper })
}

fn verification_json(v: &Verification) -> Value {
    json!({
        "lower": report_json(&v.lower),
        "upper": report_json(&v.upper),
    })
}

fn report_json(r: &VerificationReport) -> Value {
    json!({
        "is_valid": r.is_valid,
        "max_differential_defect": r.max_differential_defect,
        "differential_tol": r.differential_tol,
        "boundary_tol": r.boundary_tol,
        "boundary_defects": {
            "history_ordering": r.boundary_defects[0],
            "history_variation": r.boundary_defects[1],
            "left_endpoint": r.boundary_defects[2],
            "right_endpoint": r.boundary_defects[3],
        },
        "differential_defects": r.differential_defects,
    })
}

fn run_verify(src: &Source) -> i32 {
    let problem = match load(src) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    match verify_reports(&problem) {
        Ok(v) => {
            println!("{}", pretty(&verification_json(&v)));
            if v.lower.is_valid && v.upper.is_valid {
                0
            } else {
                2
            }
        }
        Err(e) => fail(&e),
    }
}

fn run_solve(src: &Source, out: &Path, force: bool) -> i32 {
    let problem = match load(src) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    if force {
        eprintln!("warning: --force set; skipping the condition and verification gates");
    }
    let started = Instant::now();
    let outcome = match monotone::bracket_extremal(
        &problem.setup,
        problem.mesh_n,
        problem.tol_sup,
        &problem.outer,
        force,
    ) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let wall = started.elapsed().as_secs_f64();
    match write_outputs(&problem, &outcome, out, wall) {
        Ok(summary) => {
            println!("{}", pretty(&summary));
            0
        }
        Err(e) => fail(&e),
    }
}

fn write_outputs(
    problem: &CompiledProblem,
    outcome: &BracketOutcome,
    out: &Path,
    wall_seconds: f64,
) -> Result<Value, Error> {
    std::fs::create_dir_all(out)?;
    let b = &outcome.bracket;

    let mut bracket_csv = Vec::new();
    writeln!(bracket_csv, "t,alpha,u_star_low,u_star_high,beta")?;
    for (i, t) in outcome.mesh.nodes().iter().enumerate() {
        writeln!(
            bracket_csv,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            outcome.pair.lower.values()[i],
            b.u_star_low.values()[i],
            b.u_star_high.values()[i],
            outcome.pair.upper.values()[i],
        )?;
    }
    std::fs::write(out.join("bracket.csv"), bracket_csv)?;

    let mut log_csv = Vec::new();
    writeln!(log_csv, "step,side,delta_sup,ordering_defect,residual_l1")?;
    for row in &b.log {
        writeln!(
            log_csv,
            "{},{},{:.16e},{:.16e},{:.16e}",
            row.step, row.side, row.delta_sup, row.ordering_defect, row.residual_l1
        )?;
    }
    std::fs::write(out.join("convergence.csv"), log_csv)?;

    std::fs::write(
        out.join("conditions.json"),
        pretty(&outcome.conditions.to_flat_json()),
    )?;
    let verification = Verification {
        lower: outcome.lower_report.clone(),
        upper: outcome.upper_report.clone(),
    };
    std::fs::write(out.join("verify.json"), pretty(&verification_json(&verification)))?;

    let z = outcome.mesh.zero_index();
    let summary = json!({
        "name": problem.name,
        "mesh_n": outcome.mesh.n_cells(),
        "refined": outcome.refined,
        "outer_steps": { "lower": b.outer_steps_low, "upper": b.outer_steps_high },
        "residual_l1": { "lower": b.residual_low, "upper": b.residual_high },
        "monotonicity_defect": b.monotonicity_defect,
        "gap_min": b.gap_min,
        "stalled": b.stalled,
        "max_slope": b.max_slope,
        "slope_bound": outcome.slope_bound.map_or(Value::Null, |s| json!(s)),
        "boundary_values": {
            "left": b.u_star_low.values()[z],
            "right": b.u_star_low.values().last(),
        },
        "q": outcome.conditions.q,
        "q_kernel": outcome.conditions.q_kernel,
        "main_rule_ok": outcome.conditions.main_rule_ok,
        "wall_time_s": wall_seconds,
        "files": ["bracket.csv", "convergence.csv", "conditions.json", "verify.json", "summary.json"],
    });
    std::fs::write(out.join("summary.json"), pretty(&summary))?;
    Ok(summary)
}

fn run_certify(src: &Source) -> i32 {
    let problem = match load(src) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let Some(slice) = &problem.certify else {
        return fail(&Error::Config(
            "no certify section in the configuration (builtin example1 has one)".into(),
        ));
    };
    match jumps::shift_constant(slice, problem.certify_samples) {
        Ok(shift) => {
            println!("{shift:.16e}");
            0
        }
        Err(e) => fail(&e),
    }
}

fn run_report(src: &Source, out: &Path, force: bool) -> i32 {
    let problem = match load(src) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let conditions = match check_report(&problem) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let verification = match verify_reports(&problem) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let gate_ok = conditions.main_rule_ok && verification.lower.is_valid && verification.upper.is_valid;
    if !gate_ok && !force {
        let report = json!({
            "name": problem.name,
            "conditions": conditions.to_flat_json(),
            "verification": verification_json(&verification),
            "solve": Value::Null,
        });
        println!("{}", pretty(&report));
        return 2;
    }
    let started = Instant::now();
    let outcome = match monotone::bracket_extremal(
        &problem.setup,
        problem.mesh_n,
        problem.tol_sup,
        &problem.outer,
        force,
    ) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let wall = started.elapsed().as_secs_f64();
    let summary = match write_outputs(&problem, &outcome, out, wall) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let report = json!({
        "name": problem.name,
        "conditions": outcome.conditions.to_flat_json(),
        "verification": verification_json(&verification),
        "solve": summary,
    });
    std::fs::write(out.join("report.json"), pretty(&report)).ok();
    println!("{}", pretty(&report));
    0
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}
