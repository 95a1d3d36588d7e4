//! Small dense complex linear-algebra helpers shared by the solvers.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Frobenius norm of `A A* - I`.
pub fn unitary_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    if a.ncols() != n {
        return f64::INFINITY;
    }
    (a * a.adjoint() - CMatrix::identity(n, n)).norm()
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

/// Smallest eigenvalue together with a unit eigenvector.
pub fn hermitian_min_eigenpair(m: &CMatrix) -> (f64, Vec<C64>) {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let (idx, value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty matrix");
    (value, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky_lower(m: &CMatrix) -> Option<CMatrix> {
    nalgebra::Cholesky::new(hermitian_part(m)).map(|c| c.l())
}

/// `v* M v` (real part; the imaginary part vanishes for Hermitian `M`).
pub fn quadratic_form(m: &CMatrix, v: &[C64]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (a, va) in v.iter().enumerate() {
        for (b, vb) in v.iter().enumerate() {
            acc += va.conj() * m[(a, b)] * vb;
        }
    }
    acc.re
}

/// Special-unitary 2x2 matrix parameterized by three angles.
pub fn su2(theta: f64, alpha: f64, beta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    let ea = C64::from_polar(1.0, alpha);
    let eb = C64::from_polar(1.0, beta);
    CMatrix::from_row_slice(2, 2, &[ea * c, -eb * s, eb.conj() * s, ea.conj() * c])
}

/// Neumaier-compensated running sum, used wherever quadrature sums are formed.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
