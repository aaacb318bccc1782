//! Small dense linear-algebra helpers.
//!
//! Everything here works on `nalgebra` dynamic matrices. Systems in scope are
//! reduced-order models with a handful of states, so the routines favour
//! robustness over asymptotic speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest dimension accepted by the Jacobi eigensolver.
pub const JACOBI_MAX_DIM: usize = 64;

const JACOBI_MAX_SWEEPS: usize = 100;

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest |m_ij - m_ji|.
pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a real symmetric matrix.
///
/// `values` are sorted in descending order and column `k` of `vectors` is the
/// unit eigenvector belonging to `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps over all off-diagonal pairs, annihilating each with a plane
/// rotation, until the off-diagonal mass is at roundoff level relative to the
/// matrix norm. Repeated eigenvalues need no special handling.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            s.nrows(),
            s.ncols()
        )));
    }
    if n == 0 || n > JACOBI_MAX_DIM {
        return Err(Error::DimensionMismatch(format!(
            "Jacobi solver supports 1..={JACOBI_MAX_DIM}, got {n}"
        )));
    }
    let scale = max_abs(s).max(1.0);
    let asym = max_asymmetry(s);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric {
            name: "S".into(),
            asymmetry: asym,
        });
    }

    let mut a = symmetrize(s);
    let mut v = Matrix::identity(n, n);
    let norm = a.norm();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= f64::EPSILON * norm || off == 0.0 {
            return Ok(sorted(a, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // rotation angle that zeroes a[p][q]
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::MaxIterations("Jacobi eigensolver", JACOBI_MAX_SWEEPS))
}

fn sorted(a: Matrix, v: Matrix) -> SymEigen {
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymEigen { values, vectors }
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn lambda_max_sym(s: &Matrix) -> Result<(f64, Vector)> {
    let eig = sym_eigen(s)?;
    Ok((eig.values[0], eig.vectors.column(0).into_owned()))
}

/// Orthonormal basis for the column span of `cols`, via modified Gram-Schmidt
/// with one reorthogonalisation pass. Columns whose remaining norm falls below
/// `rel_tol` times their original norm are dropped.
pub fn orthonormal_basis(cols: &Matrix, rel_tol: f64) -> Matrix {
    let n = cols.nrows();
    let mut basis: Vec<Vector> = Vec::new();
    for j in 0..cols.ncols() {
        let orig = cols.column(j).into_owned();
        let orig_norm = orig.norm();
        if orig_norm == 0.0 {
            continue;
        }
        let mut w = orig.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&w);
                w.axpy(-proj, b, 1.0);
            }
        }
        let wn = w.norm();
        if wn > rel_tol * orig_norm {
            basis.push(w / wn);
        }
    }
    let mut out = Matrix::zeros(n, basis.len());
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

/// Orthonormal basis of the null space of `a`; singular values below
/// `rel_tol * max(1, sigma_max)` count as zero.
pub fn null_space(a: &Matrix, rel_tol: f64) -> Matrix {
    let cols = a.ncols();
    // pad to at least square so the SVD yields a full right basis
    let padded = if a.nrows() < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let thresh = rel_tol * smax.max(1.0);
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= thresh)
        .collect();
    let mut out = Matrix::zeros(cols, null_rows.len());
    for (j, &k) in null_rows.iter().enumerate() {
        out.set_column(j, &v_t.row(k).transpose());
    }
    orthonormal_basis(&out, 1e-8)
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &Matrix) -> Matrix {
    basis * basis.transpose()
}

/// Spectral norm of the difference of the two projectors: zero for equal
/// subspaces, the sine of the largest principal angle for equal dimensions,
/// and one whenever the dimensions differ.
pub fn subspace_distance(a: &Matrix, b: &Matrix) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    let diff = projector(a) - projector(b);
    match sym_eigen(&symmetrize(&diff)) {
        Ok(e) => e.max().abs().max(e.min().abs()),
        Err(_) => diff.norm(),
    }
}

/// Residual of projecting `v` onto the span of orthonormal columns `basis`.
pub fn out_of_span(basis: &Matrix, v: &Vector) -> f64 {
    if basis.ncols() == 0 {
        return v.norm();
    }
    let coeffs = basis.transpose() * v;
    (v - basis * coeffs).norm()
}
