//! Planar systems. Every energy-preserving quadratic term in two dimensions
//! has the form `phi(x) = (q . x) J x` with `J = [[0, 1], [-1, 0]]`; rotating
//! `q` onto the first axis gives a canonical form whose single entry `l22`
//! decides everything: `l22 <= 0` admits a non-positive shifted symmetric part,
//! `l22 > 0` admits an explicit escaping trajectory.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::system::QuadraticSystem;

/// Absolute tolerance of the cross-check between the two `Q` matrices.
const PARAM_TOL: f64 = 1e-12;

/// Default margin for the shifted witness.
pub const DEFAULT_EPS: f64 = 1.0;

fn require_2d(sys: &QuadraticSystem) -> Result<()> {
    if sys.dim() != 2 {
        return Err(Error::WrongDimension {
            expected: 2,
            got: sys.dim(),
        });
    }
    Ok(())
}

/// `(q1, q2)` with `phi(x) = (q1 x1 + q2 x2) (x2, -x1)`.
pub fn extract_q(sys: &QuadraticSystem) -> Result<[f64; 2]> {
    require_2d(sys)?;
    let (q1m, q2m) = (&sys.q()[0], &sys.q()[1]);
    let q1 = 2.0 * q1m[(0, 1)];
    let q2 = q1m[(1, 1)];
    let tol = PARAM_TOL * sys.q_scale().max(1.0);
    let mismatch = [
        q1m[(0, 0)].abs(),
        (q1 + q2m[(0, 0)]).abs(),
        (q2 + 2.0 * q2m[(0, 1)]).abs(),
        q2m[(1, 1)].abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if mismatch > tol {
        return Err(Error::InconsistentParameterization(mismatch));
    }
    Ok([q1, q2])
}

/// The quadratic family with parameter `q`.
pub fn q_family(q: [f64; 2]) -> Vec<Matrix> {
    let [q1, q2] = q;
    vec![
        Matrix::from_row_slice(2, 2, &[0.0, 0.5 * q1, 0.5 * q1, q2]),
        Matrix::from_row_slice(2, 2, &[-q1, -0.5 * q2, -0.5 * q2, 0.0]),
    ]
}

/// The rotation in SO(2) taking `q` to `|q| e1`.
pub fn canonical_rotation(q: [f64; 2]) -> Matrix {
    let q0 = q[0].hypot(q[1]);
    Matrix::from_row_slice(2, 2, &[q[0] / q0, q[1] / q0, -q[1] / q0, q[0] / q0])
}

#[derive(Debug, Clone)]
pub struct Canonical2D {
    pub c_hat: Vector,
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
    pub q0: f64,
    /// Canonical coordinates are `x_hat = r x`.
    pub r: Matrix,
}

impl Canonical2D {
    pub fn l_hat(&self) -> Matrix {
        Matrix::from_row_slice(2, 2, &[self.l11, self.l12, self.l21, self.l22])
    }

    /// The canonical system `(c_hat, L_hat, q0 e1)`.
    pub fn system(&self) -> Result<QuadraticSystem> {
        QuadraticSystem::new(self.c_hat.clone(), self.l_hat(), q_family([self.q0, 0.0]))
    }

    /// Maps a point or shift from canonical back to original coordinates.
    pub fn to_original(&self, v: &Vector) -> Vector {
        self.r.transpose() * v
    }
}

/// Rotates a planar system into canonical form.
pub fn to_canonical(sys: &QuadraticSystem) -> Result<Canonical2D> {
    let q = extract_q(sys)?;
    let q0 = q[0].hypot(q[1]);
    if q0 <= 1e-12 * sys.l().norm().max(1.0) {
        return Err(Error::TrivialNonlinearity(q0));
    }
    let r = canonical_rotation(q);
    let c_hat = &r * sys.c();
    let l = &r * sys.l() * r.transpose();
    Ok(Canonical2D {
        c_hat,
        l11: l[(0, 0)],
        l12: l[(0, 1)],
        l21: l[(1, 0)],
        l22: l[(1, 1)],
        q0,
        r,
    })
}

/// Shift (canonical coordinates) with `A_s(m) = diag(-eps, l22)`, or `None`
/// when `l22 > 0`, in which case no shift gives `A_s(m) <= 0`.
pub fn lmi_feasible_2d(canon: &Canonical2D, eps: f64) -> Option<Vector> {
    if canon.l22 > 0.0 {
        return None;
    }
    Some(Vector::from_vec(vec![
        (canon.l12 + canon.l21) / canon.q0,
        -(canon.l11 + eps) / canon.q0,
    ]))
}

/// Initial point (canonical coordinates) from which `x2(t) < x2(0) - t`.
pub fn escape_certificate(canon: &Canonical2D) -> Result<Vector> {
    if canon.l22 <= 0.0 {
        return Err(Error::NotApplicable(format!(
            "escape construction needs l22 > 0, got {}",
            canon.l22
        )));
    }
    let k = canon.c_hat[1] + canon.l21 * canon.l21 / (4.0 * canon.q0) + 1.0;
    Ok(Vector::from_vec(vec![0.0, -k / canon.l22 - 1.0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    LmiFeasible,
    UnboundedCertified,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::LmiFeasible => "LmiFeasible",
            Classification::UnboundedCertified => "UnboundedCertified",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TwoDVerdict {
    pub canonical: Canonical2D,
    pub classification: Classification,
    pub lmi_feasible: bool,
    /// `l22 == 0`: feasible only with a singular symmetric part.
    pub marginal: bool,
    /// Witness shift in original coordinates.
    pub witness_m: Option<Vector>,
    pub witness_m_canonical: Option<Vector>,
    /// Escape point in original coordinates.
    pub escape_x0: Option<Vector>,
    pub escape_x0_canonical: Option<Vector>,
}

pub fn classify_2d(sys: &QuadraticSystem) -> Result<TwoDVerdict> {
    classify_2d_with(sys, DEFAULT_EPS)
}

pub fn classify_2d_with(sys: &QuadraticSystem, eps: f64) -> Result<TwoDVerdict> {
    let canon = to_canonical(sys)?;
    let witness = lmi_feasible_2d(&canon, eps);
    let escape = if witness.is_none() {
        Some(escape_certificate(&canon)?)
    } else {
        None
    };
    Ok(TwoDVerdict {
        classification: if witness.is_some() {
            Classification::LmiFeasible
        } else {
            Classification::UnboundedCertified
        },
        lmi_feasible: witness.is_some(),
        marginal: canon.l22 == 0.0,
        witness_m: witness.as_ref().map(|m| canon.to_original(m)),
        escape_x0: escape.as_ref().map(|x| canon.to_original(x)),
        witness_m_canonical: witness,
        escape_x0_canonical: escape,
        canonical: canon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{lambda_max_sym, max_abs};
    use crate::simulate::{integrate, IntegratorOptions};
    use crate::system::random_system;
    use proptest::prelude::*;

    fn canonical(c2: f64, l: [f64; 4], q0: f64) -> QuadraticSystem {
        QuadraticSystem::new(
            Vector::from_vec(vec![0.0, c2]),
            Matrix::from_row_slice(2, 2, &l),
            q_family([q0, 0.0]),
        )
        .unwrap()
    }

    fn rotation(theta: f64) -> Matrix {
        let (s, c) = theta.sin_cos();
        Matrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn extract_q_examples() {
        let sys = QuadraticSystem::new(
            Vector::zeros(2),
            Matrix::zeros(2, 2),
            vec![
                Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 2.0]),
                Matrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, 0.0]),
            ],
        )
        .unwrap();
        assert_eq!(extract_q(&sys).unwrap(), [1.0, 2.0]);
        let zero = QuadraticSystem::new(Vector::zeros(2), Matrix::zeros(2, 2), vec![Matrix::zeros(2, 2); 2]).unwrap();
        assert_eq!(extract_q(&zero).unwrap(), [0.0, 0.0]);
        assert!(matches!(to_canonical(&zero), Err(Error::TrivialNonlinearity(_))));
        let three = random_system(3, 0, 1.0).unwrap();
        assert!(matches!(extract_q(&three), Err(Error::WrongDimension { expected: 2, got: 3 })));
    }

    #[test]
    fn phi_matches_parameterized_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20 {
            let sys = random_system(2, seed, 2.0).unwrap();
            let [q1, q2] = extract_q(&sys).unwrap();
            for _ in 0..100 {
                let x = Vector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
                let s = q1 * x[0] + q2 * x[1];
                let expect = Vector::from_vec(vec![s * x[1], -s * x[0]]);
                assert!((sys.nonlinearity(&x).unwrap() - expect).amax() <= 1e-12 * x.norm_squared().max(1.0));
            }
        }
    }

    #[test]
    fn rotation_examples() {
        let sys = canonical(0.3, [1.0, 2.0, 3.0, -1.0], 2.0);
        let canon = to_canonical(&sys).unwrap();
        assert_eq!(canon.r, Matrix::identity(2, 2));
        assert_eq!((canon.l11, canon.l12, canon.l21, canon.l22, canon.q0), (1.0, 2.0, 3.0, -1.0, 2.0));

        let r = canonical_rotation([0.0, 1.0]);
        assert_eq!(r, Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(((&r * Vector::from_vec(vec![0.0, 1.0])) - Vector::from_vec(vec![1.0, 0.0])).amax() < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn witness_example() {
        let canon = to_canonical(&canonical(0.0, [0.0, 2.0, 0.0, -1.0], 1.0)).unwrap();
        let m = lmi_feasible_2d(&canon, 1.0).unwrap();
        assert_eq!(m, Vector::from_vec(vec![2.0, -1.0]));
        let a_s = canon.system().unwrap().symmetric_linear_part(&m).unwrap();
        assert!((a_s - Matrix::from_diagonal_element(2, 2, -1.0)).amax() < 1e-15);

        let pos = to_canonical(&canonical(0.0, [0.0, 2.0, 0.0, 0.5], 1.0)).unwrap();
        assert!(lmi_feasible_2d(&pos, 1.0).is_none());

        let zero = to_canonical(&canonical(0.0, [0.7, 2.0, -1.0, 0.0], 1.5)).unwrap();
        let m = lmi_feasible_2d(&zero, 1.0).unwrap();
        let a_s = zero.system().unwrap().symmetric_linear_part(&m).unwrap();
        assert!((a_s - Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 0.0]))).amax() < 1e-14);
        assert!(classify_2d(&zero.system().unwrap()).unwrap().marginal);
    }

    #[test]
    fn escape_examples() {
        let c = to_canonical(&canonical(0.0, [0.0, 0.0, 0.0, 1.0], 1.0)).unwrap();
        assert_eq!(escape_certificate(&c).unwrap(), Vector::from_vec(vec![0.0, -2.0]));
        let c = to_canonical(&canonical(3.0, [0.0, 0.0, 2.0, 2.0], 1.0)).unwrap();
        assert_eq!(escape_certificate(&c).unwrap(), Vector::from_vec(vec![0.0, -3.5]));
        let neg = to_canonical(&canonical(0.0, [0.0, 0.0, 0.0, -1.0], 1.0)).unwrap();
        assert!(matches!(escape_certificate(&neg), Err(Error::NotApplicable(_))));
    }

    fn assert_escapes(sys: &QuadraticSystem, x0: &Vector, x2_dir: &Vector) {
        let x20 = x2_dir.dot(x0);
        let opts = IntegratorOptions {
            t_final: 60.0,
            ..Default::default()
        };
        let traj = integrate(sys, x0, &opts).unwrap();
        assert!(traj.is_diverged(), "{:?}", traj.status);
        let horizon = 10f64.max(2.0 * x20.abs());
        for (t, x) in traj.times.iter().zip(&traj.states) {
            if *t > horizon {
                break;
            }
            assert!(x2_dir.dot(x) <= x20 - t + 1e-6, "t={t}");
        }
    }

    #[test]
    fn escape_point_diverges() {
        let sys = canonical(0.0, [0.0, 0.0, 0.0, 1.0], 1.0);
        let v = classify_2d(&sys).unwrap();
        assert_eq!(v.classification, Classification::UnboundedCertified);
        assert_escapes(&sys, v.escape_x0.as_ref().unwrap(), &Vector::from_vec(vec![0.0, 1.0]));

        // rotated copy: same verdict, escape point maps back to original coordinates
        let rot = sys.rotated(&rotation(0.8)).unwrap();
        let v = classify_2d(&rot).unwrap();
        assert_eq!(v.classification, Classification::UnboundedCertified);
        let e2 = v.canonical.r.row(1).transpose();
        assert_escapes(&rot, v.escape_x0.as_ref().unwrap(), &e2);
    }

    #[test]
    fn classification_split() {
        let neg = canonical(0.4, [1.0, -2.0, 0.5, -1.0], 1.0);
        assert_eq!(classify_2d(&neg).unwrap().classification, Classification::LmiFeasible);
        let rotated = neg.rotated(&rotation(-2.1)).unwrap();
        let v = classify_2d(&rotated).unwrap();
        assert_eq!(v.classification, Classification::LmiFeasible);
        let m = v.witness_m.unwrap();
        let (top, _) = lambda_max_sym(&rotated.symmetric_linear_part(&m).unwrap()).unwrap();
        assert!((top - -1.0).abs() < 1e-12, "{top}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn round_trip_and_rotation_invariance(seed in 0u64..1_000_000, theta in -3.2f64..3.2) {
            let sys = random_system(2, seed, 1.0).unwrap();
            let canon = to_canonical(&sys).unwrap();
            let r = &canon.r;
            prop_assert!((r.transpose() * r - Matrix::identity(2, 2)).amax() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
            let back = canon.system().unwrap().rotated(&r.transpose()).unwrap();
            prop_assert!((back.c() - sys.c()).amax() < 1e-10);
            prop_assert!((back.l() - sys.l()).amax() < 1e-10);
            for (a, b) in back.q().iter().zip(sys.q()) {
                prop_assert!(max_abs(&(a - b)) < 1e-10);
            }
            let rot = sys.rotated(&rotation(theta)).unwrap();
            let a = classify_2d(&sys).unwrap();
            let b = classify_2d(&rot).unwrap();
            prop_assert_eq!(a.classification, b.classification);
            prop_assert!((a.canonical.l22 - b.canonical.l22).abs() < 1e-10);
        }
    }
}
