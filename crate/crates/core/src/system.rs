//! Quadratic systems `dx/dt = c + L x + phi(x)` with energy-preserving
//! quadratic part `phi_i(x) = x^T Q_i x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::{max_abs, max_asymmetry, symmetrize, Matrix, Vector};

/// Structural tolerance for symmetry and the index-rotation constraint,
/// relative to `max(1, max |Q_ijk|)`.
pub const STRUCTURAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    c: Vector,
    l: Matrix,
    q: Vec<Matrix>,
}

/// The worst violation of `Q_i[j,k] + Q_j[i,k] + Q_k[i,j] = 0` (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyResidual {
    pub value: f64,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Worst residual of the energy-preserving constraint over all index triples.
pub fn energy_residual(q: &[Matrix]) -> EnergyResidual {
    let n = q.len();
    let mut worst = EnergyResidual {
        value: 0.0,
        i: 0,
        j: 0,
        k: 0,
    };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = (q[i][(j, k)] + q[j][(i, k)] + q[k][(i, j)]).abs();
                if r > worst.value {
                    worst = EnergyResidual { value: r, i, j, k };
                }
            }
        }
    }
    worst
}

impl QuadraticSystem {
    /// Validates and builds a system. `Q` matrices with asymmetry below the
    /// structural tolerance are symmetrised; anything larger is rejected.
    pub fn new(c: Vector, l: Matrix, q: Vec<Matrix>) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty system".into()));
        }
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "L is {}x{}, expected {n}x{n}",
                l.nrows(),
                l.ncols()
            )));
        }
        check_len("Q list", q.len(), n)?;
        let mut sym = Vec::with_capacity(n);
        for (i, qi) in q.iter().enumerate() {
            if qi.nrows() != n || qi.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "Q{} is {}x{}, expected {n}x{n}",
                    i + 1,
                    qi.nrows(),
                    qi.ncols()
                )));
            }
            let asym = max_asymmetry(qi);
            if asym > STRUCTURAL_TOL * max_abs(qi).max(1.0) {
                return Err(Error::NotSymmetric {
                    name: format!("Q{}", i + 1),
                    asymmetry: asym,
                });
            }
            sym.push(symmetrize(qi));
        }
        let res = energy_residual(&sym);
        let q_scale = sym.iter().map(max_abs).fold(1.0, f64::max);
        if res.value > STRUCTURAL_TOL * q_scale {
            return Err(Error::NotEnergyPreserving {
                i: res.i,
                j: res.j,
                k: res.k,
                residual: res.value,
            });
        }
        Ok(Self { c, l, q: sym })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn q(&self) -> &[Matrix] {
        &self.q
    }

    pub fn energy_residual(&self) -> EnergyResidual {
        energy_residual(&self.q)
    }

    /// Largest absolute entry across all Q matrices.
    pub fn q_scale(&self) -> f64 {
        self.q.iter().map(max_abs).fold(0.0, f64::max)
    }

    pub fn nonlinearity(&self, x: &Vector) -> Result<Vector> {
        check_len("x", x.len(), self.dim())?;
        Ok(self.phi(x))
    }

    pub(crate) fn phi(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.dim(), self.q.iter().map(|qi| x.dot(&(qi * x))))
    }

    pub fn rhs(&self, x: &Vector) -> Result<Vector> {
        check_len("x", x.len(), self.dim())?;
        Ok(self.rhs_unchecked(x))
    }

    pub(crate) fn rhs_unchecked(&self, x: &Vector) -> Vector {
        &self.c + &self.l * x + self.phi(x)
    }

    /// `(L + L^T)/2 - sum_i m_i Q_i`.
    pub fn symmetric_linear_part(&self, m: &Vector) -> Result<Matrix> {
        check_len("m", m.len(), self.dim())?;
        Ok(self.sym_part_unchecked(m))
    }

    pub(crate) fn sym_part_unchecked(&self, m: &Vector) -> Matrix {
        let mut s = symmetrize(&self.l);
        for (mi, qi) in m.iter().zip(&self.q) {
            s -= qi * *mi;
        }
        s
    }

    /// Coordinate shift `y = x - m`.
    pub fn shift(&self, m: &Vector) -> Result<ShiftedSystem> {
        check_len("m", m.len(), self.dim())?;
        let n = self.dim();
        let d = self.rhs_unchecked(m);
        let mut a = self.l.clone();
        for i in 0..n {
            let row = m.transpose() * &self.q[i];
            for j in 0..n {
                a[(i, j)] += 2.0 * row[j];
            }
        }
        let a_s = symmetrize(&a);
        Ok(ShiftedSystem {
            base: self.clone(),
            m: m.clone(),
            d,
            a,
            a_s,
        })
    }

    /// The system in rotated coordinates `x' = R x` for orthogonal `R`:
    /// `c' = R c`, `L' = R L R^T`, `Q'_i = sum_j R_ij R Q_j R^T`.
    pub fn rotated(&self, r: &Matrix) -> Result<Self> {
        let n = self.dim();
        if r.nrows() != n || r.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "rotation is {}x{}, expected {n}x{n}",
                r.nrows(),
                r.ncols()
            )));
        }
        let c = r * &self.c;
        let l = r * &self.l * r.transpose();
        let conj: Vec<Matrix> = self.q.iter().map(|qj| r * qj * r.transpose()).collect();
        let q = (0..n)
            .map(|i| {
                let mut acc = Matrix::zeros(n, n);
                for (j, cj) in conj.iter().enumerate() {
                    acc += cj * r[(i, j)];
                }
                symmetrize(&acc)
            })
            .collect();
        Self::new(c, l, q)
    }
}

/// A system expressed in shifted coordinates `y = x - m`.
#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    pub base: QuadraticSystem,
    pub m: Vector,
    /// `c + L m + phi(m)`
    pub d: Vector,
    /// `L + 2 [m^T Q_1; ...; m^T Q_n]`
    pub a: Matrix,
    pub a_s: Matrix,
}

impl ShiftedSystem {
    /// Rate of change of the half energy `|y|^2 / 2` along the flow:
    /// `d^T y + y^T A_s y`. The quadratic term drops out because
    /// `y . phi(y) = 0`.
    pub fn energy_rate(&self, y: &Vector) -> Result<f64> {
        check_len("y", y.len(), self.m.len())?;
        Ok(self.d.dot(y) + y.dot(&(&self.a_s * y)))
    }

    /// Right-hand side in shifted coordinates, `d + A y + phi(y)`.
    pub fn rhs(&self, y: &Vector) -> Result<Vector> {
        check_len("y", y.len(), self.m.len())?;
        Ok(&self.d + &self.a * y + self.base.phi(y))
    }

    /// Same quadratic family as the base system.
    pub fn q(&self) -> &[Matrix] {
        self.base.q()
    }
}

/// Projects an arbitrary family of symmetric matrices onto the
/// energy-preserving subspace by removing the totally symmetric part of the
/// tensor `T[i][j][k] = Q_i[j,k]`.
pub fn project_energy_preserving(q: &[Matrix]) -> Vec<Matrix> {
    let n = q.len();
    let mut out = vec![Matrix::zeros(n, n); n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let s = (q[i][(j, k)] + q[j][(i, k)] + q[k][(i, j)]) / 3.0;
                out[i][(j, k)] = q[i][(j, k)] - s;
            }
        }
    }
    out
}

/// Samples a random valid system with entries of `c`, `L` and the raw `Q`
/// family uniform in `[-scale, scale]`.
pub fn random_system(n: usize, seed: u64, scale: f64) -> Result<QuadraticSystem> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(-scale..=scale);
    let c = Vector::from_fn(n, |_, _| draw(&mut rng));
    let l = Matrix::from_fn(n, n, |_, _| draw(&mut rng));
    let raw: Vec<Matrix> = (0..n)
        .map(|_| symmetrize(&Matrix::from_fn(n, n, |_, _| draw(&mut rng))))
        .collect();
    QuadraticSystem::new(c, l, project_energy_preserving(&raw))
}
