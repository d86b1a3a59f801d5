//! Matrix Fourier analysis over tensor-product orthonormal bases.
//!
//! Coefficients use the normalized Hilbert-Schmidt inner product
//! `<A, B> = Tr(A^* B) / d`. A multi-index `x` is stored flat with register 1
//! as the most significant base-`m^2` digit, matching Kronecker order.

use std::sync::Arc;

use crate::error::{validation, Error, Result};
use crate::linalg::{c, eye, frobenius, r, CMat, HermitianOperator};

const BASIS_TOL: f64 = 1e-10;

/// An orthonormal basis of `m x m` Hermitian matrices with the identity first.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardBasis {
    m: usize,
    elements: Vec<CMat>,
}

pub fn pauli_matrices() -> [CMat; 4] {
    let o = r(0.0);
    let l = r(1.0);
    [
        eye(2),
        CMat::from_row_slice(2, 2, &[o, l, l, o]),
        CMat::from_row_slice(2, 2, &[o, c(0.0, -1.0), c(0.0, 1.0), o]),
        CMat::from_row_slice(2, 2, &[l, o, o, -l]),
    ]
}

impl StandardBasis {
    pub fn new(elements: Vec<CMat>) -> Result<Self> {
        let count = elements.len();
        let m = (count as f64).sqrt().round() as usize;
        if m * m != count || m == 0 {
            return validation(format!("{count} elements cannot form a basis of m x m matrices"));
        }
        for (i, e) in elements.iter().enumerate() {
            if e.nrows() != m || e.ncols() != m {
                return validation(format!("basis element {i} has wrong shape"));
            }
            HermitianOperator::new(e.clone())?;
        }
        if frobenius(&(&elements[0] - eye(m))) > BASIS_TOL {
            return validation("first basis element must be the identity");
        }
        for i in 0..count {
            for j in i..count {
                let ip = (elements[i].adjoint() * &elements[j]).trace() / r(m as f64);
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip - r(target)).norm() > BASIS_TOL {
                    return validation(format!(
                        "basis elements {i} and {j} are not orthonormal (inner product {ip})"
                    ));
                }
            }
        }
        Ok(Self { m, elements })
    }

    /// `{I, X, Y, Z}`.
    pub fn pauli() -> Self {
        Self {
            m: 2,
            elements: pauli_matrices().to_vec(),
        }
    }

    /// Two-qubit Pauli products; element `4a + b` is `sigma_a (x) sigma_b`.
    pub fn pauli_pair() -> Self {
        let p = pauli_matrices();
        let mut elements = Vec::with_capacity(16);
        for a in &p {
            for b in &p {
                elements.push(a.kronecker(b));
            }
        }
        Self { m: 4, elements }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &CMat {
        &self.elements[i]
    }

    /// Elementwise transpose, e.g. `{I, X, -Y, Z}` from the Pauli basis.
    pub fn transposed(&self) -> Self {
        Self {
            m: self.m,
            elements: self.elements.iter().map(|e| e.transpose()).collect(),
        }
    }

    /// `u * B_i * u^*` for every element.
    pub fn conjugated(&self, u: &CMat) -> Self {
        Self {
            m: self.m,
            elements: self.elements.iter().map(|e| u * e * u.adjoint()).collect(),
        }
    }

    /// Tensor-product element `B_x`.
    pub fn product_element(&self, x: usize, n: usize) -> CMat {
        let digits = index_digits(x, self.m * self.m, n);
        let mut out = CMat::from_element(1, 1, r(1.0));
        for dgt in digits {
            out = out.kronecker(&self.elements[dgt]);
        }
        out
    }
}

pub fn index_digits(x: usize, base: usize, n: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    let mut rem = x;
    for k in (0..n).rev() {
        digits[k] = rem % base;
        rem /= base;
    }
    digits
}

/// Number of non-identity factors in `x`.
pub fn degree(x: usize, m: usize, n: usize) -> usize {
    let base = m * m;
    let mut rem = x;
    let mut deg = 0;
    for _ in 0..n {
        if rem % base != 0 {
            deg += 1;
        }
        rem /= base;
    }
    deg
}

/// Base-`m^2` digit string for `x`, e.g. `"30"` for `Z (x) I`.
pub fn index_label(x: usize, m: usize, n: usize) -> String {
    index_digits(x, m * m, n)
        .into_iter()
        .map(|d| std::char::from_digit(d as u32, 16).unwrap())
        .collect()
}

/// Number of registers `n` with `m^n = dim`, if any.
pub fn register_count(dim: usize, m: usize) -> Option<usize> {
    let mut n = 0;
    let mut acc = 1;
    while acc < dim {
        acc *= m;
        n += 1;
    }
    (acc == dim && n > 0).then_some(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PauliExpansion {
    pub m: usize,
    pub n: usize,
    pub coeffs: Vec<f64>,
    pub basis: Arc<StandardBasis>,
    /// Largest imaginary residue discarded during expansion.
    pub imaginary_residue: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeProfile {
    pub weights: Vec<f64>,
}

impl DegreeProfile {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn normalized_trace(m: &HermitianOperator) -> f64 {
    m.normalized_trace()
}

/// `(1/sqrt(d)) * ||A - B||_F`.
pub fn hs_distance(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    a.check_same_dim(b)?;
    Ok(frobenius(&(a.matrix() - b.matrix())) / (a.dim() as f64).sqrt())
}

/// Normalized HS norm `sqrt(Tr(A^* A)/d)` of an arbitrary square matrix.
pub fn hs_norm(a: &CMat) -> f64 {
    frobenius(a) / (a.nrows() as f64).sqrt()
}

/// Applies `ws[k]` (an `m^2 x m^2` map) to mode `k` of a tensor laid out as
/// interleaved modes of size `m^2`.
fn apply_modes(data: &mut Vec<crate::linalg::C64>, ws: &[&CMat]) {
    let n = ws.len();
    let s = ws[0].nrows();
    let total = data.len();
    let mut out = vec![c(0.0, 0.0); total];
    for (k, w) in ws.iter().enumerate() {
        let right = s.pow((n - k - 1) as u32);
        let left = total / (s * right);
        for l in 0..left {
            for rr in 0..right {
                let base = l * s * right + rr;
                for xo in 0..s {
                    let mut acc = c(0.0, 0.0);
                    for si in 0..s {
                        acc += w[(xo, si)] * data[base + si * right];
                    }
                    out[base + xo * right] = acc;
                }
            }
        }
        std::mem::swap(data, &mut out);
    }
}

/// Flat index of the interleaved tensor for matrix entry `(i, j)`.
fn interleave(i: usize, j: usize, m: usize, n: usize) -> usize {
    let id = index_digits(i, m, n);
    let jd = index_digits(j, m, n);
    id.iter()
        .zip(&jd)
        .fold(0, |acc, (a, b)| acc * m * m + a * m + b)
}

/// Coefficients `<B_x, M>` via a mode-by-mode transform, `O(n m^2 m^{2n})`.
pub fn pauli_expand(m_op: &HermitianOperator, basis: &Arc<StandardBasis>) -> Result<PauliExpansion> {
    let m = basis.m();
    let dim = m_op.dim();
    let n = register_count(dim, m).ok_or(Error::DimensionMismatch {
        expected: m,
        found: dim,
    })?;
    let (coeffs, imaginary_residue) = expand_matrix(m_op.matrix(), &vec![basis.as_ref(); n]);
    Ok(PauliExpansion {
        m,
        n,
        coeffs,
        basis: Arc::clone(basis),
        imaginary_residue,
    })
}

/// Coefficients of `mat` over the product basis `bases[0] (x) bases[1] (x) ...`,
/// all with the same local dimension, plus the largest imaginary residue.
pub fn expand_matrix(mat: &CMat, bases: &[&StandardBasis]) -> (Vec<f64>, f64) {
    let n = bases.len();
    let m = bases[0].m();
    assert!(bases.iter().all(|b| b.m() == m));
    let dim = m.pow(n as u32);
    assert_eq!(mat.nrows(), dim);
    let s = m * m;
    let mut data = vec![c(0.0, 0.0); s.pow(n as u32)];
    for i in 0..dim {
        for j in 0..dim {
            data[interleave(i, j, m, n)] = mat[(i, j)];
        }
    }
    // W[x, (i, j)] = (B_x)_{j i} / m.
    let ws: Vec<CMat> = bases
        .iter()
        .map(|b| CMat::from_fn(s, s, |x, ij| b.element(x)[(ij % m, ij / m)] / r(m as f64)))
        .collect();
    let refs: Vec<&CMat> = ws.iter().collect();
    apply_modes(&mut data, &refs);
    let residue = data.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    (data.into_iter().map(|z| z.re).collect(), residue)
}

pub fn pauli_reconstruct(e: &PauliExpansion) -> HermitianOperator {
    e.reconstruct()
}

impl PauliExpansion {
    pub fn zeros(basis: &Arc<StandardBasis>, n: usize) -> Self {
        let m = basis.m();
        Self {
            m,
            n,
            coeffs: vec![0.0; (m * m).pow(n as u32)],
            basis: Arc::clone(basis),
            imaginary_residue: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree_of(&self, x: usize) -> usize {
        degree(x, self.m, self.n)
    }

    /// `sum_x coeffs(x) B_x`.
    pub fn reconstruct(&self) -> HermitianOperator {
        let m = self.m;
        let n = self.n;
        let s = m * m;
        let dim = self.dim();
        let mut data: Vec<_> = self.coeffs.iter().map(|&v| r(v)).collect();
        // V[(i, j), x] = (B_x)_{i j}.
        let v = CMat::from_fn(s, s, |ij, x| self.basis.element(x)[(ij / m, ij % m)]);
        apply_modes(&mut data, &vec![&v; n]);
        let mat = CMat::from_fn(dim, dim, |i, j| data[interleave(i, j, m, n)]);
        HermitianOperator::symmetrized(mat)
    }

    pub fn parseval_total(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }

    /// Multiplies `coeffs(x)` by `f(x)`.
    pub fn scaled_by(&self, f: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        for (x, v) in out.coeffs.iter_mut().enumerate() {
            *v *= f(x);
        }
        out
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn weighted_dot(&self, other: &Self, weights: &[f64]) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        assert_eq!(self.coeffs.len(), weights.len());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .zip(weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn linear_combination(terms: &[(f64, &Self)]) -> Self {
        let mut out = terms[0].1.clone();
        out.coeffs.iter_mut().for_each(|v| *v = 0.0);
        out.imaginary_residue = 0.0;
        for (s, e) in terms {
            assert_eq!(e.coeffs.len(), out.coeffs.len());
            for (o, v) in out.coeffs.iter_mut().zip(&e.coeffs) {
                *o += s * v;
            }
        }
        out
    }
}

/// `rho^{|x|}` for every multi-index.
pub fn degree_weights(m: usize, n: usize, rho: f64) -> Vec<f64> {
    (0..(m * m).pow(n as u32))
        .map(|x| rho.powi(degree(x, m, n) as i32))
        .collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "rho",
            value: rho,
            allowed: "[0, 1]",
        })
    }
}

/// Coefficients of the depolarized operator: `rho^{|x|} coeffs(x)`.
pub fn apply_depolarizing_coeffs(e: &PauliExpansion, rho: f64) -> Result<PauliExpansion> {
    check_rho(rho)?;
    let (m, n) = (e.m, e.n);
    Ok(e.scaled_by(|x| rho.powi(degree(x, m, n) as i32)))
}

/// Counts of local indices in `{1, 2}` and in `{3, ...}`.
pub fn class_weights(x: usize, n: usize) -> (usize, usize) {
    let mut w1 = 0;
    let mut w2 = 0;
    for d in index_digits(x, 4, n) {
        match d {
            0 => {}
            1 | 2 => w1 += 1,
            _ => w2 += 1,
        }
    }
    (w1, w2)
}

/// `r^{w1(x)} c^{w2(x)} coeffs(x)` on qubit registers.
pub fn apply_general_scaling(e: &PauliExpansion, r_val: f64, c_val: f64) -> Result<PauliExpansion> {
    if e.m != 2 {
        return validation("general scaling needs one qubit per register (m = 2)");
    }
    if !(c_val > 0.0 && c_val <= r_val && r_val < 1.0) {
        return validation(format!(
            "general scaling needs 0 < c <= r < 1, got r = {r_val}, c = {c_val}"
        ));
    }
    let n = e.n;
    Ok(e.scaled_by(|x| {
        let (w1, w2) = class_weights(x, n);
        r_val.powi(w1 as i32) * c_val.powi(w2 as i32)
    }))
}

/// Zeroes every coefficient whose degree is not kept; returns the removed mass.
pub fn degree_truncate(e: &PauliExpansion, keep_degrees: &[usize]) -> (PauliExpansion, f64) {
    let mut out = e.clone();
    let mut removed = 0.0;
    for (x, v) in out.coeffs.iter_mut().enumerate() {
        if !keep_degrees.contains(&degree(x, e.m, e.n)) {
            removed += *v * *v;
            *v = 0.0;
        }
    }
    (out, removed)
}

pub fn degree_profile(e: &PauliExpansion) -> DegreeProfile {
    let mut weights = vec![0.0; e.n + 1];
    for (x, v) in e.coeffs.iter().enumerate() {
        weights[degree(x, e.m, e.n)] += v * v;
    }
    DegreeProfile { weights }
}

/// Expansion of `op` in the Pauli basis (`m = 2`).
pub fn expand_pauli(op: &HermitianOperator) -> Result<PauliExpansion> {
    pauli_expand(op, &pauli_basis())
}

/// Expansion of `op` in the two-qubit product basis (`m = 4`).
pub fn expand_pauli_pair(op: &HermitianOperator) -> Result<PauliExpansion> {
    pauli_expand(op, &pauli_pair_basis())
}

pub fn pauli_basis() -> Arc<StandardBasis> {
    thread_local! {
        static B: Arc<StandardBasis> = Arc::new(StandardBasis::pauli());
    }
    B.with(Arc::clone)
}

pub fn pauli_pair_basis() -> Arc<StandardBasis> {
    thread_local! {
        static B: Arc<StandardBasis> = Arc::new(StandardBasis::pauli_pair());
    }
    B.with(Arc::clone)
}
