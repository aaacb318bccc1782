//! `qbound`: boundedness analysis of energy-preserving quadratic systems.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qbound::canonical2d::{self, Classification};
use qbound::certificate::{self, VerifyOptions};
use qbound::effective::{self, Effectiveness};
use qbound::simulate::{self, IntegratorOptions, ProbeOptions, ProbeVerdict, TrajectoryStatus};
use qbound::system::energy_residual;
use qbound::trap::{self, SolverOptions, Verdict};
use qbound::{builtin, format, linalg, Error, QuadraticSystem, Vector};

use report::{mat_str, num, pass, slice_str, vec_str, Format, Report};

const EXIT_NEGATIVE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "qbound", version, about = "Boundedness analysis for quadratic systems with energy-preserving nonlinearity")]
struct Cli {
    /// Output format for analysis reports.
    #[arg(long, value_enum, default_value = "human", global = true)]
    format: Format,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every randomised step.
    #[arg(long, env = "QBOUND_SEED", default_value_t = 0, global = true)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate symmetry and the energy-preserving constraint.
    Check { file: PathBuf },
    /// Minimise the largest eigenvalue of the shifted symmetric part.
    Trap {
        file: PathBuf,
        /// Bracket tolerance on a*; also the Marginal dead band.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Maximum bisection steps.
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// `combined`, `barrier` or `subgradient`.
        #[arg(long, default_value = "combined")]
        method: String,
    },
    /// Canonical form and classification of a planar system.
    Canon2d {
        file: PathBuf,
        /// Margin of the constructed shift.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
    },
    /// Search for a subspace on which the nonlinearity is ineffective.
    Effective { file: PathBuf },
    /// Integrate one trajectory and emit CSV rows `t,x1..xn,norm`.
    Simulate {
        file: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 50.0)]
        t_final: f64,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-10)]
        atol: f64,
        /// Emit only `t norm` pairs (gnuplot friendly).
        #[arg(long)]
        norm_only: bool,
    },
    /// Empirical boundedness probe over many initial conditions.
    Probe {
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Radius of the ball of initial conditions.
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 50.0)]
        t_final: f64,
    },
    /// Verify a quartic Lyapunov certificate for a 3-dimensional system.
    VerifyCert {
        file: PathBuf,
        cert: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Print a built-in system or certificate in the file format.
    Example { which: Builtin },
    /// Full pipeline on the built-in 3-dimensional counterexample.
    DemoCounterexample,
    /// Trapping region and probe on the classic Lorenz system.
    DemoLorenz,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Counterexample,
    Lorenz,
    Certificate,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MaxIterations(..) => Failure::Solver(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<Output, Failure>;

enum Output {
    Report(Report),
    Raw(String),
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<QuadraticSystem, Failure> {
    let text = read(path)?;
    format::parse_system(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli);
    let (text, code) = match outcome {
        Ok(Output::Report(r)) => {
            let code = if r.negative { EXIT_NEGATIVE } else { 0 };
            (r.render(cli.format), code)
        }
        Ok(Output::Raw(s)) => (s, 0),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_INPUT);
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_INPUT);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Check { file } => cmd_check(file),
        Command::Trap {
            file,
            tol,
            max_iter,
            method,
        } => {
            let opts = SolverOptions {
                tol: *tol,
                max_bisection: *max_iter,
                method: method.clone(),
                seed: cli.seed,
                ..Default::default()
            };
            let sys = load(file)?;
            let mut r = Report::new("trap");
            r.digest(&sys);
            trap_into(&mut r, &sys, &opts)?;
            Ok(Output::Report(r))
        }
        Command::Canon2d { file, eps } => cmd_canon2d(&load(file)?, *eps),
        Command::Effective { file } => {
            let sys = load(file)?;
            let mut r = Report::new("effective");
            r.digest(&sys);
            effective_into(&mut r, &sys);
            Ok(Output::Report(r))
        }
        Command::Simulate {
            file,
            x0,
            t_final,
            rtol,
            atol,
            norm_only,
        } => {
            let opts = IntegratorOptions {
                t_final: *t_final,
                rtol: *rtol,
                atol: *atol,
                ..Default::default()
            };
            cmd_simulate(&load(file)?, x0, &opts, *norm_only)
        }
        Command::Probe {
            file,
            trials,
            radius,
            t_final,
        } => {
            let sys = load(file)?;
            let mut r = Report::new("probe");
            r.digest(&sys);
            probe_into(&mut r, &sys, *trials, *radius, *t_final, cli.seed)?;
            Ok(Output::Report(r))
        }
        Command::VerifyCert {
            file,
            cert,
            samples,
            tol,
            trials,
        } => {
            let sys = load(file)?;
            let c = format::parse_certificate(&read(cert)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", cert.display())))?;
            let opts = VerifyOptions {
                samples: *samples,
                tol: *tol,
                trajectories: *trials,
                seed: cli.seed,
                ..Default::default()
            };
            let mut r = Report::new("verify-cert");
            r.digest(&sys);
            let ok = cert_into(&mut r, &sys, &c, &opts)?;
            r.negative = !ok;
            Ok(Output::Report(r))
        }
        Command::Example { which } => Ok(Output::Raw(match which {
            Builtin::Counterexample => format::write_system(&builtin::counterexample_system()),
            Builtin::Lorenz => format::write_system(&builtin::classic_lorenz()),
            Builtin::Certificate => format::write_certificate(&certificate::builtin_certificate()),
        })),
        Command::DemoCounterexample => demo_counterexample(cli.seed),
        Command::DemoLorenz => demo_lorenz(cli.seed),
    }
}

fn cmd_check(file: &Path) -> Outcome {
    let text = read(file)?;
    let (c, l, q) = format::parse_system_raw(&text).map_err(|e| Failure::Input(format!("{}: {e}", file.display())))?;
    let mut r = Report::new("check");
    r.input("n", c.len());
    let scale = q.iter().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
    let tol = qbound::system::STRUCTURAL_TOL * scale;
    let asym = q.iter().map(linalg::max_asymmetry).fold(0.0, f64::max);
    let res = energy_residual(&q);
    r.put("max_asymmetry", num(asym));
    r.put("symmetry", pass(asym <= tol));
    r.put("energy_residual", num(res.value));
    r.put("worst_triple", format!("({},{},{})", res.i + 1, res.j + 1, res.k + 1));
    r.put("energy_preserving", pass(res.value <= tol));
    let ok = asym <= tol && res.value <= tol && QuadraticSystem::new(c, l, q).is_ok();
    r.put("result", pass(ok));
    r.negative = !ok;
    Ok(Output::Report(r))
}

fn trap_into(r: &mut Report, sys: &QuadraticSystem, opts: &SolverOptions) -> Result<Verdict, Failure> {
    let res = trap::solve(sys, opts)?;
    let verdict = trap::verdict_from(res.a_star, opts.tol);
    r.put("a_star", num(res.a_star));
    r.put("m_star", vec_str(&res.m_star));
    r.put("status", res.status);
    r.put("verdict", verdict);
    r.put("marginal", res.info.marginal);
    r.put("method", &res.info.method);
    r.put("iterations", res.info.iterations);
    r.put("final_gap", num(res.info.final_gap));
    r.put("lower_bound", num(res.info.lower_bound));
    for (name, value) in &res.info.method_values {
        r.put(&format!("value.{name}"), num(*value));
    }
    for w in &res.info.warnings {
        r.warn(w.clone());
    }
    Ok(verdict)
}

fn cmd_canon2d(sys: &QuadraticSystem, eps: f64) -> Outcome {
    let mut r = Report::new("canon2d");
    r.digest(sys);
    let q = canonical2d::extract_q(sys)?;
    let v = canonical2d::classify_2d_with(sys, eps)?;
    let c = &v.canonical;
    r.put("q", slice_str(&q));
    r.put("q0", num(c.q0));
    r.put("rotation", mat_str(&c.r));
    r.put("c_hat", vec_str(&c.c_hat));
    r.put("l11", num(c.l11));
    r.put("l12", num(c.l12));
    r.put("l21", num(c.l21));
    r.put("l22", num(c.l22));
    r.put("classification", v.classification);
    r.put("lmi_feasible", v.lmi_feasible);
    r.put("marginal", v.marginal);
    if let (Some(m), Some(mc)) = (&v.witness_m, &v.witness_m_canonical) {
        r.put("witness_m", vec_str(m));
        r.put("witness_m_canonical", vec_str(mc));
        let (top, _) = linalg::lambda_max_sym(&sys.symmetric_linear_part(m)?)?;
        r.put("lambda_max_at_witness", num(top));
    }
    if let (Some(x), Some(xc)) = (&v.escape_x0, &v.escape_x0_canonical) {
        r.put("escape_x0", vec_str(x));
        r.put("escape_x0_canonical", vec_str(xc));
    }
    if v.classification == Classification::UnboundedCertified {
        r.note("trajectories from the escape point leave every ball: the system is unbounded");
    }
    Ok(Output::Report(r))
}

fn effective_into(r: &mut Report, sys: &QuadraticSystem) -> Effectiveness {
    let v = effective::check_effective(sys);
    r.put("verdict", v.result.label());
    r.put("exhaustive", v.exhaustive);
    r.put("note", &v.note);
    if let Effectiveness::Ineffective(w) = &v.result {
        r.put("witness", w);
    }
    r.put("candidates", v.candidates_checked.len());
    for (i, c) in v.candidates_checked.iter().enumerate() {
        let reason = c.failure().unwrap_or_else(|| "witness: both conditions hold".into());
        r.put(
            &format!("candidate.{i}"),
            format!("{} {} | {}", c.candidate.source, c.candidate.subspace, reason),
        );
    }
    v.result
}

fn cmd_simulate(sys: &QuadraticSystem, x0: &[f64], opts: &IntegratorOptions, norm_only: bool) -> Outcome {
    let x0 = Vector::from_column_slice(x0);
    let traj = simulate::integrate(sys, &x0, opts)?;
    let n = sys.dim();
    let mut out = String::new();
    if norm_only {
        out.push_str("# t norm\n");
    } else {
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        out.push_str(&format!("t,{},norm\n", cols.join(",")));
    }
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if norm_only {
            out.push_str(&format!("{} {}\n", num(*t), num(x.norm())));
        } else {
            let xs: Vec<String> = x.iter().map(|v| num(*v)).collect();
            out.push_str(&format!("{},{},{}\n", num(*t), xs.join(","), num(x.norm())));
        }
    }
    let status = match traj.status {
        TrajectoryStatus::Completed => "Completed".to_string(),
        TrajectoryStatus::Diverged { time } => format!("Diverged at t={time}"),
        TrajectoryStatus::StepFailure { time } => format!("StepFailure at t={time}"),
    };
    eprintln!(
        "status: {status}; accepted {} rejected {}",
        traj.accepted_steps, traj.rejected_steps
    );
    Ok(Output::Raw(out))
}

fn probe_into(
    r: &mut Report,
    sys: &QuadraticSystem,
    trials: usize,
    radius: f64,
    t_final: f64,
    seed: u64,
) -> Result<ProbeVerdict, Failure> {
    let opts = ProbeOptions {
        integrator: IntegratorOptions {
            t_final,
            ..Default::default()
        },
        seed,
        ..Default::default()
    };
    let probe = simulate::probe_boundedness(sys, trials, radius, &opts)?;
    r.put("trajectories", probe.trials);
    match &probe.verdict {
        ProbeVerdict::AllConverged { beta_est, t_est } => {
            r.put("probe", "AllConverged");
            r.put("beta_est", num(*beta_est));
            r.put("t_est", num(*t_est));
        }
        ProbeVerdict::DivergenceFound { x0 } => {
            r.put("probe", "DivergenceFound");
            r.put("divergent_x0", vec_str(x0));
        }
        ProbeVerdict::Inconclusive { reason } => {
            r.put("probe", "Inconclusive");
            r.put("reason", reason);
        }
    }
    r.note("probe results are empirical, not a proof of boundedness");
    Ok(probe.verdict)
}

fn cert_into(
    r: &mut Report,
    sys: &QuadraticSystem,
    c: &certificate::QuarticCertificate,
    opts: &VerifyOptions,
) -> Result<bool, Failure> {
    let rep = certificate::verify_certificate(sys, c, opts)?;
    r.put("mv_eigs", slice_str(&rep.mv_eigs));
    r.put("n_eigs", slice_str(&rep.n_eigs));
    r.put("n_trace", num(rep.n_trace));
    r.put("max_derivative_residual", num(rep.max_derivative_residual));
    r.put("decay_worst_ratio", num(rep.decay.worst_ratio));
    r.put("mv_positive", pass(rep.mv_positive));
    r.put("derivative_identity", pass(rep.identity_holds));
    r.put("n_nonpositive", pass(rep.n_nonpositive));
    r.put("decay", pass(rep.decay.passed));
    r.put("result", pass(rep.passed()));
    Ok(rep.passed())
}

fn demo_counterexample(seed: u64) -> Outcome {
    let (sys, cert) = certificate::builtin_counterexample();
    let mut r = Report::new("demo-counterexample");
    r.digest(&sys);
    let opts = VerifyOptions {
        seed,
        ..Default::default()
    };
    let bounded = cert_into(&mut r, &sys, &cert, &opts)?;
    let eff = effective_into(&mut Report::new("effective"), &sys);
    let effective = matches!(eff, Effectiveness::Effective);
    r.put("effectiveness", eff.label());
    let mut trap_report = Report::new("trap");
    let solver = SolverOptions {
        seed,
        ..Default::default()
    };
    let verdict = trap_into(&mut trap_report, &sys, &solver)?;
    r.results.extend(trap_report.results);
    r.warnings.extend(trap_report.warnings);
    let no_shift = verdict == Verdict::NoTrappingRegion;
    let probe = probe_into(&mut Report::new("probe"), &sys, 20, 10.0, 50.0, seed)?;
    r.put("probe", match probe {
        ProbeVerdict::AllConverged { .. } => "AllConverged",
        ProbeVerdict::DivergenceFound { .. } => "DivergenceFound",
        ProbeVerdict::Inconclusive { .. } => "Inconclusive",
    });
    r.put("claim.long_term_bounded", pass(bounded));
    r.put("claim.effective_nonlinearity", pass(effective));
    r.put("claim.positive_eigenvalue_for_every_shift", pass(no_shift));
    r.note(format!("[{}] long-term bounded: quartic Lyapunov certificate verified", pass(bounded)));
    r.note(format!("[{}] effective nonlinearity: no invariant subspace with vanishing phi", pass(effective)));
    r.note(format!(
        "[{}] A_s(m) has a positive eigenvalue for every shift m: no trapping region",
        pass(no_shift)
    ));
    r.negative = !(bounded && effective && no_shift);
    Ok(Output::Report(r))
}

fn demo_lorenz(seed: u64) -> Outcome {
    let sys = builtin::classic_lorenz();
    let mut r = Report::new("demo-lorenz");
    r.digest(&sys);
    let opts = SolverOptions {
        seed,
        ..Default::default()
    };
    let verdict = trap_into(&mut r, &sys, &opts)?;
    let probe = probe_into(&mut r, &sys, 20, 10.0, 50.0, seed)?;
    let converged = matches!(probe, ProbeVerdict::AllConverged { .. });
    r.note(format!("[{}] trapping region certified", pass(verdict == Verdict::BoundedCertified)));
    r.note(format!("[{}] all probed trajectories settle", pass(converged)));
    r.negative = !(verdict == Verdict::BoundedCertified && converged);
    Ok(Output::Report(r))
}
