//! Trapping-region analysis: minimise the largest eigenvalue of the
//! symmetric linear part `A_s(m)` over all shifts `m`.
//!
//! If the optimum `a*` is negative, some shifted energy `|x - m|^2` decays
//! outside a ball and the system is bounded. If `a* >= 0`, no such
//! monotonically attracting region exists (the system may still be bounded).
//!
//! Two dissimilar minimisers are available through [`MethodRegistry`]:
//! bisection over a strict-feasibility test solved with a log-det barrier,
//! and a spectral subgradient descent. The default `combined` strategy runs
//! both and keeps the better answer.

mod barrier;
mod subgradient;

pub use barrier::{BarrierBisection, BarrierPath, Reach};
pub use subgradient::SpectralSubgradient;

use crate::error::{Error, Result};
use crate::linalg::{lambda_max_sym, max_abs, null_space, sym_eigen, symmetrize, Matrix, Vector};
use crate::system::QuadraticSystem;

/// Reported when the barrier and subgradient answers differ by more than this.
pub const DISAGREEMENT_WARN: f64 = 1e-5;

/// The affine matrix family `A_s(m) = S0 - sum_i m_i Q_i`, with the shift
/// restricted to the directions the family actually depends on.
#[derive(Debug, Clone)]
pub struct LambdaMaxProblem {
    s0: Matrix,
    q: Vec<Matrix>,
    /// Orthonormal columns spanning the shifts that change `A_s`.
    basis: Matrix,
    /// `P_k = sum_i basis[i][k] Q_i`.
    generators: Vec<Matrix>,
}

impl LambdaMaxProblem {
    pub fn new(sys: &QuadraticSystem) -> Self {
        let n = sys.dim();
        let s0 = symmetrize(sys.l());
        let q: Vec<Matrix> = sys.q().to_vec();
        // shifts in the kernel of m -> sum m_i Q_i leave A_s untouched
        let mut stacked = Matrix::zeros(n * n, n);
        for (i, qi) in q.iter().enumerate() {
            for (k, v) in qi.iter().enumerate() {
                stacked[(k, i)] = *v;
            }
        }
        let kernel = null_space(&stacked, 1e-12);
        let mut cols = Matrix::identity(n, n);
        if kernel.ncols() > 0 {
            let proj = Matrix::identity(n, n) - &kernel * kernel.transpose();
            cols = proj;
        }
        let basis = crate::linalg::orthonormal_basis(&cols, 1e-8);
        let generators = (0..basis.ncols())
            .map(|k| {
                let mut p = Matrix::zeros(n, n);
                for (i, qi) in q.iter().enumerate() {
                    p += qi * basis[(i, k)];
                }
                p
            })
            .collect();
        Self {
            s0,
            q,
            basis,
            generators,
        }
    }

    pub fn dim(&self) -> usize {
        self.s0.nrows()
    }

    /// Number of independent shift directions.
    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn s0(&self) -> &Matrix {
        &self.s0
    }

    pub fn q(&self) -> &[Matrix] {
        &self.q
    }

    pub(crate) fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    pub(crate) fn m_from_reduced(&self, p: &Vector) -> Vector {
        &self.basis * p
    }

    pub(crate) fn reduced_from_m(&self, m: &Vector) -> Vector {
        self.basis.transpose() * m
    }

    pub fn a_s(&self, m: &Vector) -> Matrix {
        let mut a = self.s0.clone();
        for (mi, qi) in m.iter().zip(&self.q) {
            a -= qi * *mi;
        }
        a
    }

    pub(crate) fn a_s_reduced(&self, p: &Vector) -> Matrix {
        let mut a = self.s0.clone();
        for (pk, gk) in p.iter().zip(&self.generators) {
            a -= gk * *pk;
        }
        a
    }

    /// `lambda_max(A_s(m))`.
    pub fn value(&self, m: &Vector) -> f64 {
        lambda_max_sym(&self.a_s(m)).map(|r| r.0).unwrap_or(f64::NAN)
    }

    /// Value, a subgradient (`-u^T Q_i u` for a top unit eigenvector `u`), and
    /// the gap between the two largest eigenvalues.
    pub fn subgradient(&self, m: &Vector) -> (f64, Vector, f64) {
        let eig = sym_eigen(&self.a_s(m)).expect("A_s is symmetric");
        let u = eig.vectors.column(0).into_owned();
        let g = Vector::from_iterator(self.q.len(), self.q.iter().map(|qi| -u.dot(&(qi * &u))));
        let gap = if eig.values.len() > 1 {
            eig.values[0] - eig.values[1]
        } else {
            f64::INFINITY
        };
        (eig.values[0], g, gap)
    }

    /// Proven lower bound on `a*`: `m^T A_s(m) m = m^T S0 m` (the quadratic
    /// terms cancel) gives `lambda_max(A_s(m)) >= lambda_min(S0)`; any index
    /// whose diagonal is untouched by every `Q_j` pins `a*` above `S0_ii`.
    pub fn lower_bound(&self) -> f64 {
        let lam_min = sym_eigen(&self.s0).map(|e| e.min()).unwrap_or(f64::NEG_INFINITY);
        lam_min.max(diagonal_pinning_bound(&self.s0, &self.q).unwrap_or(f64::NEG_INFINITY))
    }

    /// Scale used for initial brackets and random restarts.
    pub(crate) fn scale(&self) -> f64 {
        max_abs(&self.s0).max(1.0)
    }
}

fn diagonal_pinning_bound(s0: &Matrix, q: &[Matrix]) -> Option<f64> {
    (0..s0.nrows())
        .filter(|&i| q.iter().all(|qj| qj[(i, i)] == 0.0))
        .map(|i| s0[(i, i)])
        .reduce(f64::max)
}

/// `max_i (L + L^T)/2 [i,i]` over indices with `Q_j[i,i] = 0` for every `j`.
pub fn diagonal_pinning(sys: &QuadraticSystem) -> Option<f64> {
    diagonal_pinning_bound(&symmetrize(sys.l()), sys.q())
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Bracket width at which bisection stops; also the verdict dead band.
    pub tol: f64,
    pub max_bisection: usize,
    /// Newton budget per feasibility test.
    pub max_newton: usize,
    /// Stop centering once half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    /// Barrier keeps shifts inside a ball of this radius.
    pub shift_radius: f64,
    pub restarts: usize,
    pub subgradient_iters: usize,
    pub seed: u64,
    /// `combined`, or any registered method name.
    pub method: String,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_bisection: 200,
            max_newton: 500,
            newton_tol: 1e-10,
            shift_radius: 1e6,
            restarts: 8,
            subgradient_iters: 2000,
            seed: 0,
            method: COMBINED.to_string(),
        }
    }
}

pub const COMBINED: &str = "combined";

/// What one minimiser reports.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub value: f64,
    pub m: Vector,
    pub iterations: usize,
    /// Width of the final bracket when the method keeps one.
    pub gap: Option<f64>,
    pub converged: bool,
}

/// A strategy for `min_m lambda_max(A_s(m))`.
pub trait TrapMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn minimize(&self, problem: &LambdaMaxProblem, opts: &SolverOptions) -> Result<MethodOutcome>;
}

/// Named minimisers, looked up at runtime (e.g. from `--method`).
pub struct MethodRegistry {
    methods: Vec<Box<dyn TrapMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut reg = Self { methods: Vec::new() };
        reg.register(Box::new(BarrierBisection));
        reg.register(Box::new(SpectralSubgradient));
        reg
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self { methods: Vec::new() }
    }

    /// Adds a method, replacing any existing one with the same name.
    pub fn register(&mut self, method: Box<dyn TrapMethod>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn TrapMethod> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "trapping-region method",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrapStatus {
    /// `a* < 0`: a trapping region exists.
    BoundedCertified,
    /// `a* >= 0`: no monotonically attracting trapping region.
    NoTrappingRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    BoundedCertified,
    NoTrappingRegion,
    Marginal,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::BoundedCertified => "BoundedCertified",
            Verdict::NoTrappingRegion => "NoTrappingRegion",
            Verdict::Marginal => "Marginal",
        };
        f.write_str(s)
    }
}

impl std::fmt::Display for TrapStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TrapStatus::BoundedCertified => "BoundedCertified",
            TrapStatus::NoTrappingRegion => "NoTrappingRegion",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolverInfo {
    pub method: String,
    pub iterations: usize,
    pub final_gap: f64,
    /// `|a*| <= tol`.
    pub marginal: bool,
    pub lower_bound: f64,
    /// Per-method values, in the order the methods ran.
    pub method_values: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrapResult {
    pub a_star: f64,
    pub m_star: Vector,
    pub status: TrapStatus,
    pub info: SolverInfo,
}

fn run_one(
    method: &dyn TrapMethod,
    problem: &LambdaMaxProblem,
    opts: &SolverOptions,
) -> Result<MethodOutcome> {
    let mut out = method.minimize(problem, opts)?;
    // never trust a reported value: recompute at the returned shift
    out.value = problem.value(&out.m);
    Ok(out)
}

/// Solves the trapping-region program with the default registry.
pub fn solve(sys: &QuadraticSystem, opts: &SolverOptions) -> Result<TrapResult> {
    solve_with(&MethodRegistry::default(), sys, opts)
}

pub fn solve_with(registry: &MethodRegistry, sys: &QuadraticSystem, opts: &SolverOptions) -> Result<TrapResult> {
    let problem = LambdaMaxProblem::new(sys);
    let lower_bound = problem.lower_bound();
    let mut warnings = Vec::new();

    let (chosen, label, values, iterations, gap) = if opts.method == COMBINED {
        let barrier = run_one(registry.get(BarrierBisection::NAME)?, &problem, opts);
        let sub = run_one(registry.get(SpectralSubgradient::NAME)?, &problem, opts)?;
        let mut values = vec![(SpectralSubgradient::NAME.to_string(), sub.value)];
        let barrier = match barrier {
            Ok(b) => b,
            Err(e) => {
                warnings.push(format!("barrier method failed: {e}"));
                let iters = sub.iterations;
                return finish(&problem, sub, SpectralSubgradient::NAME, values, iters, None, lower_bound, warnings, opts);
            }
        };
        values.insert(0, (BarrierBisection::NAME.to_string(), barrier.value));
        if !barrier.converged {
            warnings.push("barrier bisection stopped before the bracket closed".into());
        }
        if (barrier.value - sub.value).abs() > DISAGREEMENT_WARN {
            warnings.push(format!(
                "barrier ({:.10}) and subgradient ({:.10}) disagree by {:.3e}",
                barrier.value,
                sub.value,
                (barrier.value - sub.value).abs()
            ));
        }
        let iterations = barrier.iterations + sub.iterations;
        let gap = barrier.gap;
        // ties go to the barrier point, which is well centred
        if sub.value < barrier.value - opts.tol {
            (sub, SpectralSubgradient::NAME, values, iterations, gap)
        } else {
            (barrier, BarrierBisection::NAME, values, iterations, gap)
        }
    } else {
        let method = registry.get(&opts.method)?;
        let out = run_one(method, &problem, opts)?;
        if !out.converged {
            warnings.push(format!("{} stopped before converging", method.name()));
        }
        let values = vec![(method.name().to_string(), out.value)];
        let (iters, gap) = (out.iterations, out.gap);
        (out, method.name(), values, iters, gap)
    };
    finish(&problem, chosen, label, values, iterations, gap, lower_bound, warnings, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &LambdaMaxProblem,
    chosen: MethodOutcome,
    label: &str,
    method_values: Vec<(String, f64)>,
    iterations: usize,
    gap: Option<f64>,
    lower_bound: f64,
    warnings: Vec<String>,
    opts: &SolverOptions,
) -> Result<TrapResult> {
    let a_star = problem.value(&chosen.m);
    if !a_star.is_finite() {
        return Err(Error::MaxIterations("trapping-region solve", iterations));
    }
    let status = if a_star < 0.0 {
        TrapStatus::BoundedCertified
    } else {
        TrapStatus::NoTrappingRegion
    };
    Ok(TrapResult {
        a_star,
        m_star: chosen.m,
        status,
        info: SolverInfo {
            method: label.to_string(),
            iterations,
            final_gap: gap.unwrap_or(a_star - lower_bound),
            marginal: a_star.abs() <= opts.tol,
            lower_bound,
            method_values,
            warnings,
        },
    })
}

/// Looks for a shift with `lambda_max(A_s(m)) < a`. `None` means none was
/// found within the barrier's budget, which is not a proof of infeasibility.
pub fn feasibility_at(sys: &QuadraticSystem, a: f64, opts: &SolverOptions) -> Result<Option<Vector>> {
    let problem = LambdaMaxProblem::new(sys);
    if a <= problem.lower_bound() {
        return Ok(None);
    }
    let mut path = BarrierPath::new(&problem, &Vector::zeros(sys.dim()), opts);
    match path.reach(a, opts.max_newton) {
        Reach::Feasible(m) => Ok(Some(m)),
        Reach::Infeasible | Reach::Budget => Ok(None),
    }
}

/// Three-way reading of the optimum with a `tol` dead band around zero.
pub fn verdict_from(a_star: f64, tol: f64) -> Verdict {
    if a_star < -tol {
        Verdict::BoundedCertified
    } else if a_star > tol {
        Verdict::NoTrappingRegion
    } else {
        Verdict::Marginal
    }
}

pub fn verdict(sys: &QuadraticSystem, opts: &SolverOptions) -> Result<Verdict> {
    let res = solve(sys, opts)?;
    Ok(verdict_from(res.a_star, opts.tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::system::random_system;

    #[test]
    fn counterexample_optimum_is_half_at_origin() {
        let sys = builtin::counterexample_system();
        let res = solve(&sys, &SolverOptions::default()).unwrap();
        assert!((res.a_star - 0.5).abs() < 1e-8, "{}", res.a_star);
        assert_eq!(res.status, TrapStatus::NoTrappingRegion);
        assert!(res.m_star.norm() < 1e-6);
        assert_eq!(diagonal_pinning(&sys), Some(0.5));
    }

    #[test]
    fn lorenz_is_certified() {
        let sys = builtin::classic_lorenz();
        let res = solve(&sys, &SolverOptions::default()).unwrap();
        assert!(res.a_star <= -1.0 + 1e-6, "{}", res.a_star);
        assert!((res.a_star + 1.0).abs() < 1e-6);
        assert_eq!(res.status, TrapStatus::BoundedCertified);
        assert_eq!(verdict(&sys, &SolverOptions::default()).unwrap(), Verdict::BoundedCertified);
    }

    #[test]
    fn linear_systems() {
        for (sign, expect) in [(-1.0, Verdict::BoundedCertified), (1.0, Verdict::NoTrappingRegion)] {
            let n = 3;
            let sys = QuadraticSystem::new(
                Vector::zeros(n),
                Matrix::identity(n, n) * sign,
                vec![Matrix::zeros(n, n); n],
            )
            .unwrap();
            let res = solve(&sys, &SolverOptions::default()).unwrap();
            assert_eq!(res.a_star, sign);
            assert_eq!(verdict_from(res.a_star, 1e-8), expect);
        }
    }

    #[test]
    fn counterexample_infeasible_at_zero() {
        let sys = builtin::counterexample_system();
        assert!(feasibility_at(&sys, 0.0, &SolverOptions::default()).unwrap().is_none());
    }

    #[test]
    fn lorenz_feasible_at_zero() {
        let sys = builtin::classic_lorenz();
        let m = feasibility_at(&sys, 0.0, &SolverOptions::default()).unwrap().unwrap();
        let (val, _) = lambda_max_sym(&sys.symmetric_linear_part(&m).unwrap()).unwrap();
        assert!(val < 0.0);
    }

    #[test]
    fn subgradient_matches_central_differences() {
        let sys = random_system(4, 21, 1.0).unwrap();
        let prob = LambdaMaxProblem::new(&sys);
        let m = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let (_, g, gap) = prob.subgradient(&m);
        assert!(gap > 1e-3, "top eigenvalue should be simple here");
        let h = 1e-6;
        for i in 0..4 {
            let mut mp = m.clone();
            let mut mm = m.clone();
            mp[i] += h;
            mm[i] -= h;
            let fd = (prob.value(&mp) - prob.value(&mm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = MethodRegistry::default();
        assert_eq!(reg.names(), vec!["barrier", "subgradient"]);
        assert!(reg.get("barrier").is_ok());
        assert!(matches!(reg.get("simplex"), Err(Error::UnknownStrategy { .. })));
        let sys = builtin::classic_lorenz();
        for name in reg.names() {
            let opts = SolverOptions {
                method: name.to_string(),
                ..Default::default()
            };
            let res = solve(&sys, &opts).unwrap();
            assert!((res.a_star + 1.0).abs() < 1e-4, "{name}: {}", res.a_star);
        }
    }

    #[test]
    fn near_optimality_against_random_probes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for seed in 0..5 {
            let sys = random_system(3, seed, 1.0).unwrap();
            let prob = LambdaMaxProblem::new(&sys);
            let res = solve(&sys, &SolverOptions::default()).unwrap();
            assert!(prob.value(&res.m_star) <= res.a_star + 1e-8);
            for _ in 0..100 {
                let m = Vector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
                assert!(prob.value(&m) >= res.a_star - 1e-6);
            }
        }
    }

    #[test]
    fn monotone_feasibility_around_optimum() {
        let opts = SolverOptions::default();
        for seed in 0..20 {
            let sys = random_system(3, 100 + seed, 1.0).unwrap();
            let res = solve(&sys, &opts).unwrap();
            assert!(feasibility_at(&sys, res.a_star + 0.1, &opts).unwrap().is_some(), "seed {seed}");
            assert!(feasibility_at(&sys, res.a_star - 0.1, &opts).unwrap().is_none(), "seed {seed}");
        }
    }

    #[test]
    fn planar_optimum_is_canonical_l22() {
        use crate::canonical2d::to_canonical;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let opts = SolverOptions::default();
        for seed in 0..30 {
            let sys = random_system(2, 500 + seed, 1.0).unwrap();
            let l22 = to_canonical(&sys).unwrap().l22;
            let res = solve(&sys, &opts).unwrap();
            assert!((res.a_star - l22).abs() < 1e-6, "seed {seed}: {} vs {l22}", res.a_star);
            let (s, c) = rng.gen_range(-3.2f64..3.2).sin_cos();
            let r = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
            let rot = solve(&sys.rotated(&r).unwrap(), &opts).unwrap();
            assert!((rot.a_star - res.a_star).abs() < 1e-6);
        }
    }

    #[test]
    fn planar_feasibility_matches_witness() {
        use crate::canonical2d::{lmi_feasible_2d, to_canonical};
        let sys = QuadraticSystem::new(
            Vector::zeros(2),
            Matrix::from_row_slice(2, 2, &[0.3, 2.0, -0.5, -0.2]),
            crate::canonical2d::q_family([1.5, 0.0]),
        )
        .unwrap();
        let canon = to_canonical(&sys).unwrap();
        let witness = lmi_feasible_2d(&canon, 1.0).unwrap();
        let wit_val = LambdaMaxProblem::new(&sys).value(&witness);
        let m = feasibility_at(&sys, 1e-6, &SolverOptions::default()).unwrap().unwrap();
        let val = LambdaMaxProblem::new(&sys).value(&m);
        assert!(val < 1e-6 && val <= wit_val.max(0.0) + 1e-6);
    }
}
