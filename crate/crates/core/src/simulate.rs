//! Trajectory integration and empirical boundedness probes.
//!
//! The integrator is the Dormand-Prince 5(4) pair with a PI step-size
//! controller, local extrapolation and FSAL. It runs on plain slices so that
//! long runs near blow-up stay allocation free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg::Vector;
use crate::system::QuadraticSystem;

#[derive(Debug, Clone)]
pub struct IntegratorOptions {
    pub t_final: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub max_step: Option<f64>,
    /// Disables error control and steps with this size.
    pub fixed_step: Option<f64>,
    /// `|x|` above which the trajectory is flagged as diverged.
    pub divergence_threshold: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Record every k-th accepted step (the final state is always kept).
    pub keep_every: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            t_final: 50.0,
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            max_step: None,
            fixed_step: None,
            divergence_threshold: 1e6,
            min_step: 1e-14,
            max_steps: 20_000_000,
            keep_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    Diverged { time: f64 },
    StepFailure { time: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub status: TrajectoryStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn is_completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Diverged { .. })
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so the nodes are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants (Hairer-Wanner).
const BETA: f64 = 0.04;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrates `dx/dt = f(x)` for an autonomous right-hand side.
pub fn dopri5<F>(f: F, x0: &[f64], opts: &IntegratorOptions) -> Trajectory
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];

    let mut times = vec![0.0];
    let mut states = vec![Vector::from_column_slice(x0)];
    let mut t = 0.0;
    let t_end = opts.t_final;
    let h_max = opts.max_step.unwrap_or(f64::INFINITY).min(t_end.abs().max(f64::MIN_POSITIVE));
    let keep = opts.keep_every.max(1);

    f(&x, &mut k1);
    let mut h = match (opts.fixed_step, opts.h0) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => initial_step(&f, &x, &k1, opts),
    }
    .min(h_max);
    let mut err_old: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    let finish = |times: Vec<f64>, states: Vec<Vector>, status, accepted, rejected| Trajectory {
        times,
        states,
        status,
        accepted_steps: accepted,
        rejected_steps: rejected,
    };

    if t_end <= 0.0 {
        return finish(times, states, TrajectoryStatus::Completed, 0, 0);
    }

    loop {
        if accepted + rejected >= opts.max_steps {
            push_state(&mut times, &mut states, t, &x);
            return finish(times, states, TrajectoryStatus::StepFailure { time: t }, accepted, rejected);
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if opts.fixed_step.is_none() && h < opts.min_step {
            push_state(&mut times, &mut states, t, &x);
            return finish(times, states, TrajectoryStatus::StepFailure { time: t }, accepted, rejected);
        }

        for i in 0..n {
            stage[i] = x[i] + h * A21 * k1[i];
        }
        f(&stage, &mut k2);
        for i in 0..n {
            stage[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(&stage, &mut k3);
        for i in 0..n {
            stage[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(&stage, &mut k4);
        for i in 0..n {
            stage[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(&stage, &mut k5);
        for i in 0..n {
            stage[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(&stage, &mut k6);
        for i in 0..n {
            x_new[i] = x[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(&x_new, &mut k7);

        let finite = x_new.iter().chain(k7.iter()).all(|v| v.is_finite());
        let err = if !finite {
            f64::INFINITY
        } else if opts.fixed_step.is_some() {
            0.0
        } else {
            let mut acc = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = opts.atol + opts.rtol * x[i].abs().max(x_new[i].abs());
                acc += (e / sk) * (e / sk);
            }
            (acc / n as f64).sqrt()
        };

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > opts.divergence_threshold {
                push_state(&mut times, &mut states, t, &x);
                return finish(times, states, TrajectoryStatus::Diverged { time: t }, accepted, rejected);
            }
            if last {
                push_state(&mut times, &mut states, t, &x);
                return finish(times, states, TrajectoryStatus::Completed, accepted, rejected);
            }
            if accepted % keep == 0 {
                push_state(&mut times, &mut states, t, &x);
            }
            if opts.fixed_step.is_none() {
                let err_c = err.max(1e-10);
                let mut fac = err_c.powf(0.2 - 0.75 * BETA) / err_old.powf(BETA) / SAFETY;
                fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if last_rejected {
                    h_new = h_new.min(h);
                }
                err_old = err.max(1e-4);
                h = h_new.min(h_max);
            }
            last_rejected = false;
        } else {
            rejected += 1;
            last_rejected = true;
            if opts.fixed_step.is_some() {
                push_state(&mut times, &mut states, t, &x);
                return finish(times, states, TrajectoryStatus::StepFailure { time: t }, accepted, rejected);
            }
            let shrink = if err.is_finite() {
                (err.powf(0.2 - 0.75 * BETA) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                1.0 / FAC_MIN
            };
            h /= shrink;
        }
    }
}

fn push_state(times: &mut Vec<f64>, states: &mut Vec<Vector>, t: f64, x: &[f64]) {
    if times.last().is_some_and(|&last| last >= t) {
        return;
    }
    times.push(t);
    states.push(Vector::from_column_slice(x));
}

fn initial_step<F>(f: &F, x: &[f64], f0: &[f64], opts: &IntegratorOptions) -> f64
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let sk: Vec<f64> = x.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&sk).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(x);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1: Vec<f64> = x.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    f(&x1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates the system from `x0` over `[0, opts.t_final]`.
pub fn integrate(sys: &QuadraticSystem, x0: &Vector, opts: &IntegratorOptions) -> Result<Trajectory> {
    check_len("x0", x0.len(), sys.dim())?;
    Ok(dopri5(rhs_fn(sys), x0.as_slice(), opts))
}

/// Slice-based right-hand side `c + L x + phi(x)`.
pub fn rhs_fn(sys: &QuadraticSystem) -> impl Fn(&[f64], &mut [f64]) + '_ {
    let n = sys.dim();
    move |x: &[f64], out: &mut [f64]| {
        let l = sys.l().as_slice();
        for i in 0..n {
            let mut acc = sys.c()[i];
            for j in 0..n {
                acc += l[i + j * n] * x[j];
            }
            let q = sys.q()[i].as_slice();
            for k in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    row += q[j + k * n] * x[j];
                }
                acc += row * x[k];
            }
            out[i] = acc;
        }
    }
}

/// Uniform sample from the closed ball of radius `r` in `R^n`.
pub fn sample_ball<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vector {
    let dir = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm().max(f64::MIN_POSITIVE);
    let radius = r * rng.gen::<f64>().powf(1.0 / n as f64);
    dir * (radius / norm)
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub integrator: IntegratorOptions,
    /// Trajectories whose final-window norm stays below this count as settled.
    pub settle_bound: f64,
    /// Fraction of the horizon used as the settled window.
    pub window_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            settle_bound: 1e3,
            window_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeVerdict {
    /// Every trajectory settled; `beta_est` bounds the final-window norms and
    /// `t_est` is the latest time any trajectory was outside that bound.
    AllConverged { beta_est: f64, t_est: f64 },
    DivergenceFound { x0: Vector },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub x0: Vector,
    pub status: TrajectoryStatus,
    pub final_window_max: f64,
    pub earlier_max: f64,
}

#[derive(Debug, Clone)]
pub struct BoundednessProbe {
    pub verdict: ProbeVerdict,
    pub trials: usize,
    pub summaries: Vec<TrialSummary>,
}

/// Initial conditions for a probe: `trials` uniform samples in the ball plus
/// the `2n` signed axis points on its boundary.
pub fn probe_initial_conditions(n: usize, trials: usize, radius: f64, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vector> = (0..trials).map(|_| sample_ball(&mut rng, n, radius)).collect();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = sign * radius;
            out.push(e);
        }
    }
    out
}

/// Empirical ultimate-boundedness probe. This never proves boundedness; it
/// reports what finitely many simulations show.
pub fn probe_boundedness(
    sys: &QuadraticSystem,
    trials: usize,
    radius: f64,
    opts: &ProbeOptions,
) -> Result<BoundednessProbe> {
    if trials == 0 {
        return Err(Error::NotApplicable("probe needs at least one trial".into()));
    }
    let starts = probe_initial_conditions(sys.dim(), trials, radius, opts.seed);
    let window_start = opts.integrator.t_final * (1.0 - opts.window_fraction);

    let runs: Vec<(TrialSummary, Trajectory)> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate(sys, x0, &opts.integrator).expect("dimension checked");
            let mut final_window_max = 0.0_f64;
            let mut earlier_max = 0.0_f64;
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let nx = x.norm();
                if *t >= window_start {
                    final_window_max = final_window_max.max(nx);
                } else {
                    earlier_max = earlier_max.max(nx);
                }
            }
            (
                TrialSummary {
                    x0: x0.clone(),
                    status: traj.status,
                    final_window_max,
                    earlier_max,
                },
                traj,
            )
        })
        .collect();

    let summaries: Vec<TrialSummary> = runs.iter().map(|r| r.0.clone()).collect();
    let count = summaries.len();
    let done = |verdict| {
        Ok(BoundednessProbe {
            verdict,
            trials: count,
            summaries: summaries.clone(),
        })
    };

    if let Some(s) = summaries
        .iter()
        .find(|s| matches!(s.status, TrajectoryStatus::Diverged { .. }))
    {
        return done(ProbeVerdict::DivergenceFound { x0: s.x0.clone() });
    }
    if let Some((i, _)) = summaries
        .iter()
        .enumerate()
        .find(|(_, s)| matches!(s.status, TrajectoryStatus::StepFailure { .. }))
    {
        return done(ProbeVerdict::Inconclusive {
            reason: format!("trial {i} hit a step failure"),
        });
    }
    for (i, s) in summaries.iter().enumerate() {
        if s.final_window_max > opts.settle_bound {
            return done(ProbeVerdict::Inconclusive {
                reason: format!(
                    "trial {i} final-window norm {:.3e} exceeds settle bound {:.3e}",
                    s.final_window_max, opts.settle_bound
                ),
            });
        }
        if s.final_window_max > 2.0 * s.earlier_max.max(1.0) {
            return done(ProbeVerdict::Inconclusive {
                reason: format!("trial {i} is still growing in the final window"),
            });
        }
    }

    let beta_est = summaries.iter().map(|s| s.final_window_max).fold(0.0, f64::max);
    let t_est = runs
        .iter()
        .map(|(_, traj)| {
            traj.times
                .iter()
                .zip(&traj.states)
                .filter(|(_, x)| x.norm() > beta_est)
                .map(|(t, _)| *t)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    done(ProbeVerdict::AllConverged { beta_est, t_est })
}

/// Weights for the first derivative at `z` on arbitrary nodes (Fornberg).
fn first_derivative_weights(z: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let m = 1;
    let mut c = vec![[0.0_f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// Compares a finite-difference derivative of the half energy
/// `|x(t) - m|^2 / 2` along a stored trajectory with the closed-form rate
/// `d^T y + y^T A_s y`. Returns the largest residual relative to
/// `max(1, |rate|)` over interior samples.
pub fn energy_rate_check(sys: &QuadraticSystem, m: &Vector, traj: &Trajectory) -> Result<f64> {
    check_len("m", m.len(), sys.dim())?;
    if let Some(x) = traj.states.first() {
        check_len("trajectory state", x.len(), sys.dim())?;
    }
    let count = traj.times.len();
    if count < 3 {
        return Err(Error::NotApplicable(
            "energy-rate check needs at least three samples".into(),
        ));
    }
    let shifted = sys.shift(m)?;
    let energy: Vec<f64> = traj.states.iter().map(|x| 0.5 * (x - m).norm_squared()).collect();
    let half = if count >= 5 { 2 } else { 1 };
    let mut worst = 0.0_f64;
    for i in half..count - half {
        let nodes = &traj.times[i - half..=i + half];
        let weights = first_derivative_weights(traj.times[i], nodes);
        let fd: f64 = weights
            .iter()
            .zip(&energy[i - half..=i + half])
            .map(|(w, k)| w * k)
            .sum();
        let rate = shifted.energy_rate(&(&traj.states[i] - m))?;
        worst = worst.max((fd - rate).abs() / rate.abs().max(1.0));
    }
    Ok(worst)
}
