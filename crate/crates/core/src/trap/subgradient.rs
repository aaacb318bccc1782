use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{LambdaMaxProblem, MethodOutcome, SolverOptions, TrapMethod};
use crate::error::Result;
use crate::linalg::Vector;

/// Top two eigenvalues closer than this are treated as a kink.
const KINK_GAP: f64 = 1e-8;

/// Polyak-step subgradient descent on `lambda_max(A_s(m))` with random
/// restarts. Restart 0 starts at the origin.
pub struct SpectralSubgradient;

impl SpectralSubgradient {
    pub const NAME: &'static str = "subgradient";
}

struct Run {
    value: f64,
    m: Vector,
    iterations: usize,
}

fn descend(problem: &LambdaMaxProblem, m0: Vector, iters: usize, lower: f64) -> Run {
    let scale = problem.scale();
    let mut m = m0;
    let (mut f, mut g, mut gap) = problem.subgradient(&m);
    let mut best = Run {
        value: f,
        m: m.clone(),
        iterations: 0,
    };
    // target offset shrinks whenever it proves too optimistic
    let mut delta = 0.1 * (f - lower).max(1e-3 * scale);
    let mut stall = 0;
    let mut radius = scale;
    for k in 0..iters {
        best.iterations = k + 1;
        let g2 = g.norm_squared();
        if g2 == 0.0 || !f.is_finite() {
            break;
        }
        let target = (best.value - delta).max(lower);
        let mut step = (f - target).max(0.0) / g2;
        if gap < KINK_GAP {
            step = step.min(radius / g2.sqrt());
        }
        m -= &g * step;
        let next = problem.subgradient(&m);
        f = next.0;
        g = next.1;
        gap = next.2;
        if f < best.value - 1e-15 * scale {
            best.value = f;
            best.m = m.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= 20 {
                delta *= 0.5;
                radius *= 0.5;
                stall = 0;
                m = best.m.clone();
                let back = problem.subgradient(&m);
                f = back.0;
                g = back.1;
                gap = back.2;
            }
        }
        if delta < 1e-14 * scale {
            break;
        }
    }
    best
}

impl TrapMethod for SpectralSubgradient {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn summary(&self) -> &'static str {
        "spectral subgradient descent with Polyak steps and random restarts"
    }

    fn minimize(&self, problem: &LambdaMaxProblem, opts: &SolverOptions) -> Result<MethodOutcome> {
        let n = problem.dim();
        let spread = problem.scale() / problem.q().iter().map(crate::linalg::max_abs).fold(0.0, f64::max).max(1e-12);
        let spread = spread.min(1e3);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let starts: Vec<Vector> = (0..opts.restarts.max(1))
            .map(|r| {
                if r == 0 {
                    Vector::zeros(n)
                } else {
                    Vector::from_fn(n, |_, _| rng.gen_range(-spread..spread))
                }
            })
            .collect();
        let lower = problem.lower_bound();
        let runs: Vec<Run> = starts
            .into_par_iter()
            .map(|m0| descend(problem, m0, opts.subgradient_iters, lower))
            .collect();
        let iterations = runs.iter().map(|r| r.iterations).sum();
        // deterministic merge: value first, then lexicographic shift
        let best = runs
            .into_iter()
            .min_by(|a, b| {
                a.value.total_cmp(&b.value).then_with(|| {
                    a.m.iter()
                        .zip(b.m.iter())
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            })
            .expect("at least one restart");
        Ok(MethodOutcome {
            value: best.value,
            m: best.m,
            iterations,
            gap: None,
            converged: true,
        })
    }
}
