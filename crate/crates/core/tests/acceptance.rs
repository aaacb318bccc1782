//! Acceptance suite: one PASS/FAIL line per criterion, with runtime budgets.
//! Runs as a plain binary so the report is always printed.

use std::time::{Duration, Instant};

use qbound::canonical2d::{self, q_family};
use qbound::certificate::{builtin_counterexample, derivative_identity_residual};
use qbound::effective::{self, Effectiveness, Subspace};
use qbound::simulate::{self, integrate, IntegratorOptions, ProbeOptions, ProbeVerdict};
use qbound::system::{energy_residual, random_system};
use qbound::trap::{self, SolverOptions, TrapStatus, Verdict};
use qbound::{builtin, linalg, Matrix, QuadraticSystem, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

/// Largest eigenvalue of a symmetric 3x3 matrix from the trigonometric
/// solution of the characteristic cubic.
fn lambda_max_3x3(a: &Matrix) -> f64 {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let q = a.trace() / 3.0;
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return q;
    }
    let b = (a - Matrix::identity(3, 3) * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    q + 2.0 * p * (r.acos() / 3.0).cos()
}

fn criterion_1() -> Outcome {
    let (sys, cert) = builtin_counterexample();
    let mv = linalg::sym_eigen(&cert.mv).unwrap();
    let mut mv_eigs: Vec<f64> = mv.values.iter().cloned().collect();
    mv_eigs.sort_by(f64::total_cmp);
    let printed = [0.7339, 55.85, 114.2, 136.3];
    let mv_ok = mv_eigs.iter().zip(printed).all(|(g, w)| ((g - w) / w).abs() <= 1e-3);

    let residual = derivative_identity_residual(&sys, &cert, 10_000, 10.0, 1).unwrap();
    let identity_ok = residual <= 1e-8;

    let n = cert.n_matrix();
    let n_eigs: Vec<f64> = linalg::sym_eigen(&n).unwrap().values.iter().cloned().collect();
    let sum: f64 = n_eigs.iter().sum();
    let n_ok = n_eigs.iter().all(|&e| e < 0.0) && (sum + 845.3).abs() <= 1e-6 && (n.trace() + 845.3).abs() <= 1e-6;
    outcome(
        mv_ok && identity_ok && n_ok,
        format!(
            "Mv eigs {:.4?}; identity residual {residual:.2e}; N eigs {:.4?} sum {sum:.6}",
            mv_eigs, n_eigs
        ),
    )
}

fn criterion_2() -> Outcome {
    let sys = builtin::counterexample_system();
    let res = trap::solve(&sys, &SolverOptions::default()).unwrap();
    let verdict = trap::verdict_from(res.a_star, 1e-8);
    let grid: Vec<f64> = (0..=80).map(|k| -10.0 + 0.25 * k as f64).collect();
    let grid_min = grid
        .par_iter()
        .map(|&m1| {
            let mut best = f64::INFINITY;
            for &m2 in &grid {
                for &m3 in &grid {
                    let a = sys.symmetric_linear_part(&Vector::from_vec(vec![m1, m2, m3])).unwrap();
                    best = best.min(lambda_max_3x3(&a));
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    outcome(
        (res.a_star - 0.5).abs() <= 1e-6
            && verdict == Verdict::NoTrappingRegion
            && res.status == TrapStatus::NoTrappingRegion
            && grid_min >= 0.5 - 1e-3,
        format!("a* = {:.10}, verdict {verdict}; grid min {grid_min:.6}", res.a_star),
    )
}

fn criterion_3() -> Outcome {
    let sys = builtin::counterexample_system();
    let cands = effective::generate_candidates(&sys);
    let subs: Vec<Subspace> = [&[0usize][..], &[1], &[2], &[0, 1]]
        .iter()
        .map(|idx| Subspace::coordinate(3, idx).unwrap())
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, v) in subs.iter().enumerate() {
        let present = cands.iter().any(|c| c.subspace.distance(v) < 1e-8);
        let cond1 = effective::phi_vanishes_on(&sys, v).unwrap();
        let cond2 = effective::affine_invariant_on(&sys, v).unwrap();
        ok &= present && cond1 && !cond2;
        detail.push(format!("V{}:{}", k + 1, if present && cond1 && !cond2 { "ok" } else { "bad" }));
    }
    let le1 = sys.l() * Vector::from_vec(vec![1.0, 0.0, 0.0]);
    let le2 = sys.l() * Vector::from_vec(vec![0.0, 1.0, 0.0]);
    ok &= le1 == Vector::from_vec(vec![-2.0, -1.0, 0.0]) && le2 == Vector::from_vec(vec![1.0, 0.5, -3.0]);
    let verdict = effective::check_effective(&sys);
    ok &= matches!(verdict.result, Effectiveness::Effective);
    outcome(
        ok,
        format!(
            "{}; Le1 = {:?}, Le2 = {:?}; verdict {}",
            detail.join(" "),
            le1.as_slice(),
            le2.as_slice(),
            verdict.result.label()
        ),
    )
}

fn criterion_4() -> Outcome {
    let (sys, cert) = builtin_counterexample();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let starts: Vec<Vector> = (0..20).map(|_| simulate::sample_ball(&mut rng, 3, 10.0)).collect();
    let opts = IntegratorOptions {
        t_final: 50.0,
        rtol: 1e-10,
        atol: 1e-30,
        ..Default::default()
    };
    let results: Vec<(bool, f64, f64)> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate(&sys, x0, &opts).unwrap();
            let hit = traj
                .times
                .iter()
                .zip(&traj.states)
                .find(|(_, x)| x.norm() < 1e-3)
                .map(|(t, _)| *t)
                .unwrap_or(f64::INFINITY);
            let mut running = f64::INFINITY;
            let mut worst: f64 = 0.0;
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let w = cert.value(x).unwrap() * (cert.alpha * t).exp();
                if running.is_finite() && running > 0.0 {
                    worst = worst.max(w / running - 1.0);
                }
                running = running.min(w);
            }
            (traj.is_completed(), hit, worst)
        })
        .collect();
    let all_done = results.iter().all(|r| r.0);
    let latest = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        all_done && latest <= 50.0 && worst <= 1e-6,
        format!("20 trajectories: |x| < 1e-3 by t = {latest:.2}; worst V e^(0.1 t) increase {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let sys = builtin::classic_lorenz();
    let res = trap::solve(&sys, &SolverOptions::default()).unwrap();
    let verdict = trap::verdict_from(res.a_star, 1e-8);
    let oracle = sys.symmetric_linear_part(&Vector::from_vec(vec![0.0, 0.0, 38.0])).unwrap();
    let expect = Matrix::from_diagonal(&Vector::from_vec(vec![-10.0, -1.0, -8.0 / 3.0]));
    let oracle_ok = (oracle - expect).amax() < 1e-12;
    let probe = simulate::probe_boundedness(&sys, 20, 10.0, &ProbeOptions::default()).unwrap();
    let converged = matches!(probe.verdict, ProbeVerdict::AllConverged { .. });
    outcome(
        res.a_star <= -1.0 + 1e-6 && verdict == Verdict::BoundedCertified && oracle_ok && converged,
        format!("a* = {:.10}, verdict {verdict}; probe {:?}", res.a_star, probe.verdict),
    )
}

fn random_canonical(rng: &mut ChaCha8Rng, positive: bool) -> QuadraticSystem {
    let mag = rng.gen_range(0.5..2.0);
    let l22 = if positive { mag } else { -mag };
    let c = Vector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
    let l = Matrix::from_row_slice(
        2,
        2,
        &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), l22],
    );
    let q0 = rng.gen_range(0.5..2.0);
    QuadraticSystem::new(c, l, q_family([q0, 0.0])).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let systems: Vec<QuadraticSystem> = (0..200).map(|k| random_canonical(&mut rng, k % 2 == 1)).collect();
    let checks: Vec<(bool, String)> = systems
        .par_iter()
        .map(|sys| {
            let canon = canonical2d::to_canonical(sys).unwrap();
            if canon.l22 <= 0.0 {
                let m = canonical2d::lmi_feasible_2d(&canon, 1.0).unwrap();
                let (top, _) = linalg::lambda_max_sym(&sys.symmetric_linear_part(&m).unwrap()).unwrap();
                (top <= 1e-10, format!("witness lambda_max {top:.3e}"))
            } else {
                let x0 = canonical2d::escape_certificate(&canon).unwrap();
                let opts = IntegratorOptions {
                    t_final: 1e3,
                    ..Default::default()
                };
                let traj = integrate(sys, &x0, &opts).unwrap();
                let x20 = x0[1];
                let bound_ok = traj
                    .times
                    .iter()
                    .zip(&traj.states)
                    .all(|(t, x)| x[1] <= x20 - t + 1e-9 * x20.abs().max(1.0));
                (traj.is_diverged() && bound_ok, format!("escape from {x20:.3}: {:?}", traj.status))
            }
        })
        .collect();
    let failed: Vec<&String> = checks.iter().filter(|c| !c.0).map(|c| &c.1).collect();
    outcome(
        failed.is_empty(),
        format!("200 canonical systems (100 per sign of l22); failures: {}", failed.len())
            + &failed.first().map(|f| format!(" first: {f}")).unwrap_or_default(),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    let mut worst_l22: f64 = 0.0;
    for seed in 0..100 {
        let sys = random_system(2, 7_000 + seed, 1.0).unwrap();
        let (s, c) = rng.gen_range(0.0..std::f64::consts::TAU).sin_cos();
        let r = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = trap::solve(&sys, &opts).unwrap().a_star;
        let b = trap::solve(&sys.rotated(&r).unwrap(), &opts).unwrap().a_star;
        worst = worst.max((a - b).abs());
        let l22 = canonical2d::to_canonical(&sys).unwrap().l22;
        worst_l22 = worst_l22.max((a - l22).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("100 systems: max |a* - a*_rotated| = {worst:.2e}; max |a* - l22_canonical| = {worst_l22:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut worst_energy: f64 = 0.0;
    let mut systems = Vec::new();
    for n in 2..=6 {
        for seed in 0..20 {
            let sys = random_system(n, 800 + seed, 1.0).unwrap();
            worst_energy = worst_energy.max(energy_residual(sys.q()).value);
            systems.push(sys);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_phi: f64 = 0.0;
    for k in 0..100_000 {
        let sys = &systems[k % systems.len()];
        let x = Vector::from_fn(sys.dim(), |_, _| rng.gen_range(-10.0..10.0));
        let v = x.dot(&sys.nonlinearity(&x).unwrap()).abs() / x.norm_squared().max(1.0);
        worst_phi = worst_phi.max(v);
    }
    let mut worst_rate: f64 = 0.0;
    for k in 0..20 {
        let sys = random_system(3 + k % 3, 880 + k as u64, 1.0).unwrap();
        let n = sys.dim();
        let m = Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x0 = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        // Differencing amplifies integrator error by 1/h, so fast transients need tight tolerances.
        let opts = IntegratorOptions {
            t_final: 5.0,
            max_step: Some(0.01),
            rtol: 1e-13,
            atol: 1e-15,
            ..Default::default()
        };
        let traj = integrate(&sys, &x0, &opts).unwrap();
        worst_rate = worst_rate.max(simulate::energy_rate_check(&sys, &m, &traj).unwrap());
    }
    outcome(
        worst_energy <= 1e-12 && worst_phi <= 1e-10 && worst_rate <= 1e-4,
        format!(
            "energy residual {worst_energy:.2e}; x.phi(x) {worst_phi:.2e} over 1e5 points; energy-rate residual {worst_rate:.2e}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("1 certificate", criterion_1, Duration::from_secs(1)),
        ("2 trapping region", criterion_2, Duration::from_secs(10)),
        ("3 effectiveness", criterion_3, Duration::from_secs(1)),
        ("4 dynamics", criterion_4, Duration::from_secs(10)),
        ("5 positive control", criterion_5, Duration::from_secs(30)),
        ("6 planar necessity", criterion_6, Duration::from_secs(60)),
        ("7 rotation invariance", criterion_7, Duration::from_secs(60)),
        ("8 structural identities", criterion_8, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let ok = out.ok && elapsed <= budget;
        if !ok {
            failures += 1;
        }
        println!(
            "[{}] criterion {name}: {} ({:.2}s, budget {}s)",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {}/8 criteria passed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
