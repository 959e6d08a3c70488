//! Small dense complex linear algebra helpers shared by every module.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type M2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn sigma_x() -> M2 {
    M2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> M2 {
    M2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> M2 {
    M2::new(ONE, ZERO, ZERO, -ONE)
}

/// Identity followed by the three Pauli matrices.
pub fn paulis() -> [M2; 4] {
    [M2::identity(), sigma_x(), sigma_y(), sigma_z()]
}

pub fn to_dyn(m: &M2) -> CMat {
    CMat::from_fn(2, 2, |i, j| m[(i, j)])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(ops: &[CMat]) -> CMat {
    ops.iter()
        .fold(CMat::from_element(1, 1, ONE), |acc, m| acc.kronecker(m))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Hilbert-Schmidt inner product Tr[a† b].
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Eigenvalues (ascending) and eigenvectors (as columns) of the Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x))
}

/// Projection of a Hermitian matrix onto the PSD cone.
pub fn psd_projection(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.adjoint()).scale(lam);
        }
    }
    out
}

/// Sum in a fixed binary-tree order, so the result does not depend on how the
/// terms were produced.
pub fn pairwise_sum<T>(xs: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + Default,
{
    match xs.len() {
        0 => T::default(),
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Entrywise pairwise sum of equally shaped matrices.
pub fn pairwise_sum_mats(xs: &[CMat]) -> CMat {
    match xs.len() {
        0 => panic!("pairwise_sum_mats needs at least one matrix"),
        1 => xs[0].clone(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum_mats(a) + pairwise_sum_mats(b)
        }
    }
}
