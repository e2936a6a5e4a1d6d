//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖H − H†‖_F
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// ‖U†U − I‖_F
pub fn unitarity_deviation(m: &CMatrix) -> f64 {
    frobenius(&(m.adjoint() * m - identity(m.nrows())))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    // symmetrise first so round-off in the caller never leaks into the solver
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| f(v)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    hermitian_map(m, |v| c(v.max(0.0).sqrt()))
}

/// Unitary factor of the polar decomposition `m = W·P`, i.e. the unitary
/// closest to `m` in Frobenius norm.
pub fn polar_unitary(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

/// Symmetric (Löwdin) orthonormalisation of the columns of `m`.
pub fn lowdin_orthonormalize(m: &CMatrix) -> CMatrix {
    let overlap = m.adjoint() * m;
    let inv_sqrt = hermitian_map(&overlap, |v| c(1.0 / v.sqrt()));
    m * inv_sqrt
}

/// Build a complex matrix from real row-major entries.
pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| c(x)))
}
