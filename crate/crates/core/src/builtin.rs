//! Reference systems used by tests, demos and the CLI.

use crate::linalg::{Matrix, Vector};
use crate::system::QuadraticSystem;

/// Three-state system `dx/dt = L x + (x2 x3, -x1 x3, 0)`: globally
/// exponentially stable with an effective nonlinearity, yet no shift makes
/// its symmetric linear part negative semidefinite.
pub fn counterexample_system() -> QuadraticSystem {
    let l = Matrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, -1.0, 0.5, 3.0, 0.0, -3.0, -3.0]);
    let mut q1 = Matrix::zeros(3, 3);
    q1[(1, 2)] = 0.5;
    q1[(2, 1)] = 0.5;
    let mut q2 = Matrix::zeros(3, 3);
    q2[(0, 2)] = -0.5;
    q2[(2, 0)] = -0.5;
    QuadraticSystem::new(Vector::zeros(3), l, vec![q1, q2, Matrix::zeros(3, 3)])
        .expect("counterexample is energy preserving")
}

/// Lorenz-63 written as `c + L x + phi(x)` with `phi = (0, -x1 x3, x1 x2)`.
pub fn lorenz_system(sigma: f64, rho: f64, beta: f64) -> QuadraticSystem {
    let l = Matrix::from_row_slice(3, 3, &[-sigma, sigma, 0.0, rho, -1.0, 0.0, 0.0, 0.0, -beta]);
    let mut q2 = Matrix::zeros(3, 3);
    q2[(0, 2)] = -0.5;
    q2[(2, 0)] = -0.5;
    let mut q3 = Matrix::zeros(3, 3);
    q3[(0, 1)] = 0.5;
    q3[(1, 0)] = 0.5;
    QuadraticSystem::new(Vector::zeros(3), l, vec![Matrix::zeros(3, 3), q2, q3])
        .expect("Lorenz nonlinearity is energy preserving")
}

/// Lorenz with the classic parameters (10, 28, 8/3).
pub fn classic_lorenz() -> QuadraticSystem {
    lorenz_system(10.0, 28.0, 8.0 / 3.0)
}
