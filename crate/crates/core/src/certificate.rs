//! Quartic Lyapunov certificates over the lift `z(x) = (x1, x2, x3, x3^2)`.
//!
//! A certificate `(M_v, M_d, alpha)` claims that `V = z^T M_v z` is positive
//! definite, that `dV/dt = -z^T M_d z` holds identically along the flow, and
//! that `N = -M_d + alpha M_v` is negative semidefinite. Together these give
//! `dV/dt <= -alpha V`, hence global exponential stability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg::{max_asymmetry, sym_eigen, symmetrize, Matrix, Vector};
use crate::simulate::{integrate, IntegratorOptions};
use crate::system::QuadraticSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct QuarticCertificate {
    pub mv: Matrix,
    pub md: Matrix,
    pub alpha: f64,
}

/// The certificate for the built-in three-state counterexample.
pub fn builtin_certificate() -> QuarticCertificate {
    let mv = Matrix::from_row_slice(
        4,
        4,
        &[
            136.0, 0.0, 0.0, 6.0, //
            0.0, 100.0, 25.0, 0.0, //
            0.0, 25.0, 70.0, 0.0, //
            6.0, 0.0, 0.0, 1.0,
        ],
    );
    let md = Matrix::from_row_slice(
        4,
        4,
        &[
            544.0, -36.0, 25.0, 73.0, //
            -36.0, 50.0, -27.5, -6.0, //
            25.0, -27.5, 270.0, 0.0, //
            73.0, -6.0, 0.0, 12.0,
        ],
    );
    QuarticCertificate::new(mv, md, 0.1).expect("builtin certificate is well formed")
}

/// The counterexample system together with its certificate.
pub fn builtin_counterexample() -> (QuadraticSystem, QuarticCertificate) {
    (crate::builtin::counterexample_system(), builtin_certificate())
}

pub fn lift(x: &Vector) -> Vector {
    Vector::from_vec(vec![x[0], x[1], x[2], x[2] * x[2]])
}

impl QuarticCertificate {
    pub fn new(mv: Matrix, md: Matrix, alpha: f64) -> Result<Self> {
        for (name, m) in [("Mv", &mv), ("Md", &md)] {
            if m.nrows() != 4 || m.ncols() != 4 {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected 4x4",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let asym = max_asymmetry(m);
            if asym > 1e-12 * crate::linalg::max_abs(m).max(1.0) {
                return Err(Error::NotSymmetric {
                    name: name.into(),
                    asymmetry: asym,
                });
            }
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::NotApplicable(format!(
                "decay rate must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            mv: symmetrize(&mv),
            md: symmetrize(&md),
            alpha,
        })
    }

    /// `N = -M_d + alpha M_v`.
    pub fn n_matrix(&self) -> Matrix {
        -&self.md + &self.mv * self.alpha
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_len("x", x.len(), 3)?;
        let z = lift(x);
        Ok(z.dot(&(&self.mv * &z)))
    }

    /// `dV/dt` along the flow of `sys`, by the chain rule through the lift:
    /// `2 z^T M_v dz/dt` with `dz/dt = (f1, f2, f3, 2 x3 f3)`.
    pub fn rate(&self, sys: &QuadraticSystem, x: &Vector) -> Result<f64> {
        if sys.dim() != 3 {
            return Err(Error::NotThreeDimensional(sys.dim()));
        }
        check_len("x", x.len(), 3)?;
        let f = sys.rhs_unchecked(x);
        let z = lift(x);
        let zdot = Vector::from_vec(vec![f[0], f[1], f[2], 2.0 * x[2] * f[2]]);
        Ok(2.0 * z.dot(&(&self.mv * zdot)))
    }

    /// `z^T M_d z`.
    pub fn dissipation(&self, x: &Vector) -> Result<f64> {
        check_len("x", x.len(), 3)?;
        let z = lift(x);
        Ok(z.dot(&(&self.md * &z)))
    }
}

pub fn lyapunov_value(cert: &QuarticCertificate, x: &Vector) -> Result<f64> {
    cert.value(x)
}

pub fn lyapunov_rate(sys: &QuadraticSystem, cert: &QuarticCertificate, x: &Vector) -> Result<f64> {
    cert.rate(sys, x)
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub samples: usize,
    /// Tolerance on the derivative identity residual and on the largest
    /// eigenvalue of `N`.
    pub tol: f64,
    pub trajectories: usize,
    /// Sampling box half-width for the identity check.
    pub box_half_width: f64,
    /// Radius of the ball initial conditions are drawn from.
    pub initial_radius: f64,
    pub t_final: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            tol: 1e-8,
            trajectories: 5,
            box_half_width: 10.0,
            initial_radius: 5.0,
            t_final: 20.0,
            seed: 0,
        }
    }
}

/// Decay multiplier slack that absorbs integrator error.
pub const DECAY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct DecayCheck {
    pub trajectories: usize,
    /// Largest `V(x(t)) e^{alpha t} / V(x(0))` seen along any trajectory.
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    /// Eigenvalues of `M_v`, ascending.
    pub mv_eigs: [f64; 4],
    /// Eigenvalues of `N`, ascending.
    pub n_eigs: [f64; 4],
    pub n_trace: f64,
    /// Max of `|dV/dt + z^T M_d z| / max(1, |z|^2)` over the samples.
    pub max_derivative_residual: f64,
    pub decay: DecayCheck,
    pub mv_positive: bool,
    pub identity_holds: bool,
    pub n_nonpositive: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.mv_positive && self.identity_holds && self.n_nonpositive && self.decay.passed
    }
}

fn ascending4(m: &Matrix) -> Result<[f64; 4]> {
    let e = sym_eigen(m)?;
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = e.values[3 - k];
    }
    Ok(out)
}

/// Largest derivative-identity residual, normalised by `max(1, |z|^2)`, over
/// `samples` uniform points in the box `[-h, h]^3`.
pub fn derivative_identity_residual(
    sys: &QuadraticSystem,
    cert: &QuarticCertificate,
    samples: usize,
    half_width: f64,
    seed: u64,
) -> Result<f64> {
    if sys.dim() != 3 {
        return Err(Error::NotThreeDimensional(sys.dim()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vector> = (0..samples)
        .map(|_| Vector::from_fn(3, |_, _| rng.gen_range(-half_width..=half_width)))
        .collect();
    let worst = points
        .par_iter()
        .map(|x| {
            let z = lift(x);
            let r = cert.rate(sys, x).unwrap() + cert.dissipation(x).unwrap();
            r.abs() / z.norm_squared().max(1.0)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Runs all four certificate checks and reports recomputed values.
pub fn verify_certificate(
    sys: &QuadraticSystem,
    cert: &QuarticCertificate,
    opts: &VerifyOptions,
) -> Result<CertificateReport> {
    if sys.dim() != 3 {
        return Err(Error::NotThreeDimensional(sys.dim()));
    }
    let mv_eigs = ascending4(&cert.mv)?;
    let n = cert.n_matrix();
    let n_eigs = ascending4(&n)?;
    let max_derivative_residual =
        derivative_identity_residual(sys, cert, opts.samples, opts.box_half_width, opts.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_dec4);
    let starts: Vec<Vector> = (0..opts.trajectories)
        .map(|_| crate::simulate::sample_ball(&mut rng, 3, opts.initial_radius))
        .collect();
    let int_opts = IntegratorOptions {
        t_final: opts.t_final,
        rtol: 1e-10,
        atol: 1e-14,
        ..IntegratorOptions::default()
    };
    let ratios: Vec<(f64, bool)> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate(sys, x0, &int_opts).expect("dimension checked");
            let v0 = cert.value(x0).unwrap();
            let mut worst = 0.0_f64;
            let mut ok = traj.is_completed();
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let v = cert.value(x).unwrap();
                let ratio = if v0 > 0.0 {
                    v * (cert.alpha * t).exp() / v0
                } else {
                    0.0
                };
                worst = worst.max(ratio);
                if ratio > 1.0 + DECAY_SLACK {
                    ok = false;
                }
            }
            (worst, ok)
        })
        .collect();
    let decay = DecayCheck {
        trajectories: ratios.len(),
        worst_ratio: ratios.iter().map(|r| r.0).fold(0.0, f64::max),
        passed: ratios.iter().all(|r| r.1),
    };

    Ok(CertificateReport {
        mv_eigs,
        n_eigs,
        n_trace: n.trace(),
        max_derivative_residual,
        decay,
        mv_positive: mv_eigs[0] > 0.0,
        identity_holds: max_derivative_residual <= opts.tol,
        n_nonpositive: n_eigs[3] <= opts.tol.max(1e-10),
    })
}
