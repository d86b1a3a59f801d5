//! Dense complex matrices and the Hermitian operator type used for
//! observables, POVM elements and density matrices.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dim, validation, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Tolerance for the Hermiticity check at construction.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMat>) -> CMat {
    let mut out = CMat::from_element(1, 1, r(1.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// `op` acting on register `k` (0-based) of `n` registers of dimension `m`.
pub fn embed(op: &CMat, k: usize, n: usize, m: usize) -> CMat {
    assert!(k < n, "register {k} out of range for {n} registers");
    assert_eq!(op.nrows(), m);
    let left = eye(m.pow(k as u32));
    let right = eye(m.pow((n - k - 1) as u32));
    kron(&kron(&left, op), &right)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Trace of `a * b` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let d = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Permute tensor factors: output factor `j` is input factor `perm[j]`.
pub fn permute_subsystems(mat: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    assert_eq!(mat.nrows(), total);
    assert_eq!(perm.len(), dims.len());
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    // Map each new flat index to the old flat index.
    let mut map = vec![0usize; total];
    let mut digits = vec![0usize; dims.len()];
    for (new_idx, slot) in map.iter_mut().enumerate() {
        let mut rem = new_idx;
        for j in (0..new_dims.len()).rev() {
            let dj = new_dims[j];
            digits[perm[j]] = rem % dj;
            rem /= dj;
        }
        let mut old = 0;
        for (digit, &dim) in digits.iter().zip(dims) {
            old = old * dim + digit;
        }
        *slot = old;
    }
    CMat::from_fn(total, total, |i, j| mat[(map[i], map[j])])
}

/// Partial trace of a bipartite operator on `dim_a * dim_b`; keeps A when `keep_a`.
pub fn partial_trace(mat: &CMat, dim_a: usize, dim_b: usize, keep_a: bool) -> CMat {
    if keep_a {
        CMat::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b).map(|k| mat[(i * dim_b + k, j * dim_b + k)]).sum()
        })
    } else {
        CMat::from_fn(dim_b, dim_b, |i, j| {
            (0..dim_a).map(|k| mat[(k * dim_b + i, k * dim_b + j)]).sum()
        })
    }
}

/// Transpose of the B factor of an operator on `dim_a * dim_b`.
pub fn partial_transpose_b(mat: &CMat, dim_a: usize, dim_b: usize) -> CMat {
    let d = dim_a * dim_b;
    CMat::from_fn(d, d, |row, col| {
        let (ia, ib) = (row / dim_b, row % dim_b);
        let (ja, jb) = (col / dim_b, col % dim_b);
        mat[(ia * dim_b + jb, ja * dim_b + ib)]
    })
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = m.clone().symmetric_eigen();
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(d, d, |row, col| eig.eigenvectors[(row, order[col])]);
    (values, vectors)
}

pub fn is_unitary(u: &CMat, tol: f64) -> bool {
    let d = u.nrows();
    u.ncols() == d && frobenius(&(u.adjoint() * u - eye(d))) <= tol
}

/// Dense Hermitian matrix, validated at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMat,
}

impl HermitianOperator {
    /// Checks squareness and Hermiticity within [`HERMITIAN_TOL`], then
    /// symmetrizes away the residue.
    pub fn new(mat: CMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return validation(format!(
                "matrix is {}x{}, not square",
                mat.nrows(),
                mat.ncols()
            ));
        }
        if mat.nrows() == 0 {
            return validation("empty matrix");
        }
        let defect = hermiticity_defect(&mat);
        if !(defect <= HERMITIAN_TOL) {
            return validation(format!("matrix is not Hermitian (defect {defect:.3e})"));
        }
        Ok(Self::symmetrized(mat))
    }

    /// For matrices Hermitian by construction; rounding residue is symmetrized away.
    pub fn symmetrized(mat: CMat) -> Self {
        let herm = (&mat + mat.adjoint()) * r(0.5);
        Self { mat: herm }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: eye(d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            mat: CMat::zeros(d, d),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        Self {
            mat: CMat::from_fn(d, d, |i, j| if i == j { r(values[i]) } else { r(0.0) }),
        }
    }

    /// Projector onto the span of the unit vector `v`.
    pub fn projector(v: &CMat) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn normalized_trace(&self) -> f64 {
        self.trace() / self.dim() as f64
    }

    /// Entrywise complex conjugate, which equals the transpose here.
    pub fn transpose(&self) -> Self {
        Self {
            mat: self.mat.transpose(),
        }
    }

    pub fn square(&self) -> Self {
        Self::symmetrized(&self.mat * &self.mat)
    }

    /// `u * self * u^*`.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        Self::symmetrized(u * &self.mat * u.adjoint())
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            mat: kron(&self.mat, &other.mat),
        }
    }

    pub fn embed(&self, k: usize, n: usize, m: usize) -> Self {
        Self {
            mat: embed(&self.mat, k, n, m),
        }
    }

    pub fn eigh(&self) -> (Vec<f64>, CMat) {
        eigh(&self.mat)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn spectral_norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[ev.len() - 1].abs())
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.mat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: &self.mat * r(s),
        }
    }

    pub fn check_same_dim(&self, other: &Self) -> Result<()> {
        check_dim(self.dim(), other.dim())
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Neg for &HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, s: f64) -> HermitianOperator {
        self.scale(s)
    }
}
