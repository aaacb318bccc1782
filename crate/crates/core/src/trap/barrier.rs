use super::{LambdaMaxProblem, MethodOutcome, SolverOptions, TrapMethod};
use crate::error::Result;
use crate::linalg::{lambda_max_sym, Matrix, Vector};

/// Result of pushing the barrier path toward a target level.
#[derive(Debug, Clone)]
pub enum Reach {
    /// A shift (full coordinates) with `lambda_max(A_s(m)) < a`.
    Feasible(Vector),
    /// The duality bound proves no shift in the ball reaches the level.
    Infeasible,
    /// Newton budget exhausted before either outcome.
    Budget,
}

/// Central path of `tau t - logdet(tI - A_s(p)) - log(R^2 - |p|^2)` in the
/// reduced shift coordinates `p`. Kept alive across bisection levels.
pub struct BarrierPath<'a> {
    problem: &'a LambdaMaxProblem,
    p: Vector,
    t: f64,
    tau: f64,
    radius_sq: f64,
    newton_tol: f64,
    /// Newton steps taken over the lifetime of the path.
    pub newton_steps: usize,
}

const TAU_GROWTH: f64 = 8.0;
const ARMIJO: f64 = 0.25;

impl<'a> BarrierPath<'a> {
    pub fn new(problem: &'a LambdaMaxProblem, m0: &Vector, opts: &SolverOptions) -> Self {
        let mut p = problem.reduced_from_m(m0);
        let radius_sq = opts.shift_radius * opts.shift_radius;
        if p.norm_squared() >= 0.25 * radius_sq {
            p = Vector::zeros(p.len());
        }
        let scale = problem.scale();
        let lam = lambda_max_sym(&problem.a_s_reduced(&p)).map(|r| r.0).unwrap_or(scale);
        Self {
            problem,
            p,
            t: lam + scale,
            tau: 1.0 / scale,
            radius_sq,
            newton_tol: opts.newton_tol,
            newton_steps: 0,
        }
    }

    fn nu(&self) -> f64 {
        (self.problem.dim() + 1) as f64
    }

    fn slack(&self, p: &Vector, t: f64) -> Matrix {
        let n = self.problem.dim();
        Matrix::identity(n, n) * t - self.problem.a_s_reduced(p)
    }

    fn objective(&self, p: &Vector, t: f64) -> Option<f64> {
        let ball = self.radius_sq - p.norm_squared();
        if !(ball > 0.0) {
            return None;
        }
        let chol = self.slack(p, t).cholesky()?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let val = self.tau * t - logdet - ball.ln();
        val.is_finite().then_some(val)
    }

    /// One damped Newton step. Returns half the squared Newton decrement,
    /// or `None` when no progress could be made.
    fn newton_step(&mut self) -> Option<f64> {
        let n = self.problem.dim();
        let gens = self.problem.generators();
        let r = gens.len();
        let w = self.slack(&self.p, self.t).cholesky()?.inverse();
        let ball = self.radius_sq - self.p.norm_squared();

        // variables: (t, p_1..p_r); dF/dt = I, dF/dp_k = P_k
        let mut y: Vec<Matrix> = Vec::with_capacity(r + 1);
        y.push(w.clone());
        for g in gens {
            y.push(&w * g);
        }
        let dim = r + 1;
        let mut grad = Vector::zeros(dim);
        grad[0] = self.tau - w.trace();
        for k in 0..r {
            grad[k + 1] = -y[k + 1].trace() + 2.0 * self.p[k] / ball;
        }
        let mut hess = Matrix::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                // tr(Y_a Y_b) without forming the product
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += y[a][(i, j)] * y[b][(j, i)];
                    }
                }
                hess[(a, b)] = s;
                hess[(b, a)] = s;
            }
        }
        for a in 0..r {
            hess[(a + 1, a + 1)] += 2.0 / ball;
            for b in 0..r {
                hess[(a + 1, b + 1)] += 4.0 * self.p[a] * self.p[b] / (ball * ball);
            }
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&(-&grad)),
            None => {
                let ridge = 1e-12 * hess.diagonal().amax().max(1e-300);
                (hess + Matrix::identity(dim, dim) * ridge).cholesky()?.solve(&(-&grad))
            }
        };
        let slope = grad.dot(&step);
        let decrement = -0.5 * slope;
        if !(decrement > 0.0) {
            return Some(0.0);
        }
        let f0 = self.objective(&self.p, self.t)?;
        let mut alpha = 1.0;
        loop {
            let t = self.t + alpha * step[0];
            let p = &self.p + step.rows(1, r) * alpha;
            if let Some(f) = self.objective(&p, t) {
                if f <= f0 + ARMIJO * alpha * slope {
                    self.t = t;
                    self.p = p;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                return None;
            }
        }
        self.newton_steps += 1;
        Some(decrement)
    }

    fn current_value(&self) -> f64 {
        lambda_max_sym(&self.problem.a_s_reduced(&self.p)).map(|r| r.0).unwrap_or(f64::NAN)
    }

    /// Follows the path until a shift below level `a` appears, the level is
    /// certified out of reach, or `budget` Newton steps have been spent.
    pub fn reach(&mut self, a: f64, budget: usize) -> Reach {
        let start = self.newton_steps;
        loop {
            if self.current_value() < a {
                return Reach::Feasible(self.problem.m_from_reduced(&self.p));
            }
            // centre at the current tau
            loop {
                if self.newton_steps - start >= budget {
                    return Reach::Budget;
                }
                match self.newton_step() {
                    Some(dec) if dec > self.newton_tol => {
                        if self.current_value() < a {
                            return Reach::Feasible(self.problem.m_from_reduced(&self.p));
                        }
                    }
                    Some(_) => break,
                    None => return Reach::Budget,
                }
            }
            if self.current_value() < a {
                return Reach::Feasible(self.problem.m_from_reduced(&self.p));
            }
            // near-central points satisfy t - t_opt <= nu / tau; doubled for slack
            if self.t - 2.0 * self.nu() / self.tau > a {
                return Reach::Infeasible;
            }
            self.tau *= TAU_GROWTH;
        }
    }

    pub fn shift(&self) -> Vector {
        self.problem.m_from_reduced(&self.p)
    }
}

/// Bisection on the level `a`, each level tested by following the barrier
/// path. Brackets start from the proven lower bound and the unshifted value.
pub struct BarrierBisection;

impl BarrierBisection {
    pub const NAME: &'static str = "barrier";
}

impl TrapMethod for BarrierBisection {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn summary(&self) -> &'static str {
        "bisection over strict feasibility, each level solved by a log-det barrier"
    }

    fn minimize(&self, problem: &LambdaMaxProblem, opts: &SolverOptions) -> Result<MethodOutcome> {
        let n = problem.dim();
        let mut best = Vector::zeros(n);
        let mut hi = problem.value(&best);
        let mut lo = problem.lower_bound().min(hi);
        let mut path = BarrierPath::new(problem, &best, opts);
        let mut iterations = 0;
        let mut converged = true;
        while hi - lo > opts.tol {
            if iterations >= opts.max_bisection {
                converged = false;
                break;
            }
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            match path.reach(mid, opts.max_newton) {
                Reach::Feasible(m) => {
                    hi = problem.value(&m).min(mid);
                    best = m;
                }
                Reach::Infeasible => lo = mid,
                Reach::Budget => {
                    converged = false;
                    break;
                }
            }
        }
        Ok(MethodOutcome {
            value: problem.value(&best),
            m: best,
            iterations: path.newton_steps,
            gap: Some(hi - lo),
            converged,
        })
    }
}
