//! Shared bipartite states. Joint operators on `n` registers per side are
//! ordered `(A_1 .. A_n) (x) (B_1 .. B_n)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::extraction::tools::pauli_pair_unitary;
use crate::linalg::{
    eye, frobenius, kron, partial_trace, partial_transpose_b, permute_subsystems, r, CMat,
    HermitianOperator,
};
use crate::pauli::{expand_matrix, hs_norm, pauli_matrices, StandardBasis};

/// Largest joint dimension a density matrix may have.
pub const MAX_JOINT_DIM: usize = 4096;
const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteState {
    dim_a: usize,
    dim_b: usize,
    density: HermitianOperator,
}

/// Local register type for noisy EPR families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegisterKind {
    /// One EPR pair per register.
    Qubit,
    /// Two EPR pairs per register, depolarized jointly as a 4-dim pair.
    TwoQubit,
}

impl RegisterKind {
    pub fn local_dim(self) -> usize {
        match self {
            RegisterKind::Qubit => 2,
            RegisterKind::TwoQubit => 4,
        }
    }
}

impl BipartiteState {
    pub fn new(dim_a: usize, dim_b: usize, density: HermitianOperator) -> Result<Self> {
        if density.dim() != dim_a * dim_b {
            return Err(Error::DimensionMismatch {
                expected: dim_a * dim_b,
                found: density.dim(),
            });
        }
        let tr = density.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return validation(format!("state has trace {tr}, expected 1"));
        }
        let min = density.min_eigenvalue();
        if min < -PSD_TOL {
            return validation(format!("state is not positive semidefinite (min eigenvalue {min:.3e})"));
        }
        Ok(Self {
            dim_a,
            dim_b,
            density,
        })
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn density(&self) -> &HermitianOperator {
        &self.density
    }

    pub fn purity(&self) -> f64 {
        let m = self.density.matrix();
        (m * m).trace().re
    }

    pub fn marginal_a(&self) -> CMat {
        partial_trace(self.density.matrix(), self.dim_a, self.dim_b, true)
    }

    pub fn marginal_b(&self) -> CMat {
        partial_trace(self.density.matrix(), self.dim_a, self.dim_b, false)
    }

    /// Largest normalized-HS deviation of the two marginals from `I/d`.
    pub fn marginal_defect(&self) -> f64 {
        let da = hs_norm(&(self.marginal_a() - eye(self.dim_a) * r(1.0 / self.dim_a as f64)));
        let db = hs_norm(&(self.marginal_b() - eye(self.dim_b) * r(1.0 / self.dim_b as f64)));
        da.max(db)
    }

    /// `Tr(state (A (x) B))`.
    pub fn expectation(&self, a: &CMat, b: &CMat) -> f64 {
        let op = kron(a, b);
        crate::linalg::trace_of_product(self.density.matrix(), &op).re
    }
}

fn check_cap(joint: usize) -> Result<()> {
    if joint > MAX_JOINT_DIM {
        return validation(format!(
            "joint dimension {joint} exceeds the cap {MAX_JOINT_DIM}"
        ));
    }
    Ok(())
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

/// `n`-fold tensor power of a state on `local (x) local`, reordered to A-block (x) B-block.
pub fn blocked_tensor_power(single: &CMat, local: usize, n: usize) -> CMat {
    let mut joint = CMat::from_element(1, 1, r(1.0));
    for _ in 0..n {
        joint = kron(&joint, single);
    }
    // Factors are A1 B1 A2 B2 ...; gather the A factors first.
    let dims = vec![local; 2 * n];
    let perm: Vec<usize> = (0..n).map(|k| 2 * k).chain((0..n).map(|k| 2 * k + 1)).collect();
    permute_subsystems(&joint, &dims, &perm)
}

/// `|Phi_d><Phi_d|` with `|Phi_d> = d^{-1/2} sum_i |i>|i>`.
pub fn max_entangled(d: usize) -> CMat {
    let mut m = CMat::zeros(d * d, d * d);
    let v = 1.0 / d as f64;
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] = r(v);
        }
    }
    m
}

pub fn make_epr_power(n: usize) -> Result<BipartiteState> {
    if n == 0 {
        return validation("register count must be at least 1");
    }
    let d = 1usize << n;
    check_cap(d * d)?;
    BipartiteState::new(d, d, HermitianOperator::symmetrized(max_entangled(d)))
}

/// `(rho Phi + (1 - rho) I / m^2)^{(x) n}` with `m` the local register dimension.
pub fn make_depolarized_epr(rho: f64, n: usize, kind: RegisterKind) -> Result<BipartiteState> {
    check_rho(rho)?;
    if n == 0 {
        return validation("register count must be at least 1");
    }
    let m = kind.local_dim();
    let d = m.pow(n as u32);
    check_cap(d * d)?;
    let single = max_entangled(m) * r(rho) + eye(m * m) * r((1.0 - rho) / (m * m) as f64);
    let joint = blocked_tensor_power(&single, m, n);
    BipartiteState::new(d, d, HermitianOperator::symmetrized(joint))
}

/// Qubit depolarizing channel `X -> rho X + (1 - rho) Tr(X) I / 2` on one side.
pub fn apply_local_depolarizing(state: &BipartiteState, rho: f64, on_a: bool) -> Result<BipartiteState> {
    check_rho(rho)?;
    let (da, db) = (state.dim_a, state.dim_b);
    let m = state.density.matrix();
    let mixed = if on_a {
        kron(&eye(da), &partial_trace(m, da, db, false)) * r(1.0 / da as f64)
    } else {
        kron(&partial_trace(m, da, db, true), &eye(db)) * r(1.0 / db as f64)
    };
    let out = m * r(rho) + mixed * r(1.0 - rho);
    BipartiteState::new(da, db, HermitianOperator::symmetrized(out))
}

/// `(1/m^2) sum_i c_i A_i (x) B_i` for single-register bases.
pub fn state_from_correlations(
    basis_a: &StandardBasis,
    basis_b: &StandardBasis,
    corr: &[f64],
) -> CMat {
    let m = basis_a.m();
    let mut out = CMat::zeros(m * m, m * m);
    for (i, ci) in corr.iter().enumerate() {
        out += kron(basis_a.element(i), basis_b.element(i)) * r(*ci);
    }
    out * r(1.0 / (m * m) as f64)
}

/// Output of the bit/phase-flip channel on an EPR pair:
/// `(I + rho XX + (2 rho - 1) Y (x) Y^T + rho ZZ) / 4`.
pub fn bit_phase_flip_state(rho: f64) -> Result<BipartiteState> {
    check_rho(rho)?;
    let pauli = StandardBasis::pauli();
    let corr = [1.0, rho, 2.0 * rho - 1.0, rho];
    let m = state_from_correlations(&pauli, &pauli.transposed(), &corr);
    BipartiteState::new(2, 2, HermitianOperator::symmetrized(m))
}

/// `Corr[x][y] = Tr(state (A_x (x) B_y))` over product indices of both sides.
pub fn correlation_matrix(
    state: &BipartiteState,
    basis_a: &StandardBasis,
    basis_b: &StandardBasis,
) -> Result<DMatrix<f64>> {
    let m = basis_a.m();
    if basis_b.m() != m {
        return validation("bases must share the local dimension");
    }
    let n = crate::pauli::register_count(state.dim_a, m).ok_or(Error::DimensionMismatch {
        expected: m,
        found: state.dim_a,
    })?;
    if state.dim_b != state.dim_a {
        return Err(Error::DimensionMismatch {
            expected: state.dim_a,
            found: state.dim_b,
        });
    }
    let bases: Vec<&StandardBasis> = std::iter::repeat_n(basis_a, n)
        .chain(std::iter::repeat_n(basis_b, n))
        .collect();
    let (coeffs, _) = expand_matrix(state.density.matrix(), &bases);
    let side = (m * m).pow(n as u32);
    let joint = (state.dim_a * state.dim_b) as f64;
    Ok(DMatrix::from_fn(side, side, |x, y| coeffs[x * side + y] * joint))
}

#[derive(Clone, Debug)]
pub struct CorrelationSpectrum {
    pub basis_a: StandardBasis,
    pub basis_b: StandardBasis,
    /// `c_1 = 1 >= c_2 >= ...`, length `m^2`.
    pub singular_values: Vec<f64>,
}

impl CorrelationSpectrum {
    /// The state `(1/m^2) sum_i c_i A_i (x) B_i` the spectrum describes.
    pub fn state(&self) -> Result<BipartiteState> {
        let m = self.basis_a.m();
        let mat = state_from_correlations(&self.basis_a, &self.basis_b, &self.singular_values);
        BipartiteState::new(m, m, HermitianOperator::symmetrized(mat))
    }
}

fn standard_basis_for(m: usize) -> Result<StandardBasis> {
    match m {
        2 => Ok(StandardBasis::pauli()),
        4 => Ok(StandardBasis::pauli_pair()),
        _ => validation(format!("no built-in basis for local dimension {m}")),
    }
}

/// Bases diagonalizing the correlation matrix of a single-register state.
pub fn diagonalize_correlation(state: &BipartiteState) -> Result<CorrelationSpectrum> {
    let m = state.dim_a;
    if state.dim_b != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: state.dim_b,
        });
    }
    let base = standard_basis_for(m)?;
    let defect = state.marginal_defect();
    if defect > 1e-8 {
        return validation(format!(
            "marginals are not maximally mixed (deviation {defect:.3e})"
        ));
    }
    let corr = correlation_matrix(state, &base, &base)?;
    let k = m * m - 1;
    let t = corr.view((1, 1), (k, k)).into_owned();
    let svd = t.svd(true, true);
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let build = |vecs: &DMatrix<f64>| -> Result<StandardBasis> {
        let mut elements = vec![eye(m)];
        for &col in &order {
            let mut e = CMat::zeros(m, m);
            for row in 0..k {
                e += base.element(row + 1) * r(vecs[(row, col)]);
            }
            elements.push(e);
        }
        StandardBasis::new(elements)
    };
    let mut singular_values = vec![1.0];
    singular_values.extend(order.iter().map(|&i| svd.singular_values[i]));
    Ok(CorrelationSpectrum {
        basis_a: build(&u)?,
        basis_b: build(&v)?,
        singular_values,
    })
}

pub fn maximal_correlation(state: &BipartiteState) -> Result<f64> {
    Ok(diagonalize_correlation(state)?.singular_values[1])
}

#[derive(Clone, Debug, Serialize)]
pub struct PptReport {
    pub separable: bool,
    pub min_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
}

/// Partial-transpose test, exact for two qubits.
pub fn ppt_separability_2x2(state: &BipartiteState) -> Result<PptReport> {
    if state.dim_a != 2 || state.dim_b != 2 {
        return validation(format!(
            "PPT verdict needs a 2x2 system, got {}x{}",
            state.dim_a, state.dim_b
        ));
    }
    let pt = HermitianOperator::symmetrized(partial_transpose_b(state.density.matrix(), 2, 2));
    let eigenvalues = pt.eigenvalues();
    let min_eigenvalue = eigenvalues[0];
    Ok(PptReport {
        separable: min_eigenvalue >= -PSD_TOL,
        min_eigenvalue,
        eigenvalues,
    })
}

#[derive(Clone, Debug)]
pub struct Canonicalization {
    pub u: CMat,
    pub v: CMat,
    pub y_sign_a: i8,
    pub y_sign_b: i8,
    /// `(U (x) V) (1/4 sum_i A_i (x) B_i) (U (x) V)^*`.
    pub transformed: HermitianOperator,
    pub epr_fidelity: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
    pub is_epr: bool,
}

/// Local unitaries taking `A_1, A_3` to `X, Z` (and `B_1, B_3` likewise); the
/// images of `A_2`, `B_2` are `+-Y` with the signs reported.
pub fn canonicalize_to_epr(basis_a: &StandardBasis, basis_b: &StandardBasis) -> Result<Canonicalization> {
    for (b, name) in [(basis_a, "A"), (basis_b, "B")] {
        if b.m() != 2 {
            return validation(format!("basis {name} must be a qubit basis"));
        }
        StandardBasis::new(b.elements().to_vec())?;
    }
    let p = pauli_matrices();
    let side = |b: &StandardBasis| -> Result<(CMat, i8)> {
        let a1 = HermitianOperator::symmetrized(b.element(1).clone());
        let a3 = HermitianOperator::symmetrized(b.element(3).clone());
        let pu = pauli_pair_unitary(&a3, &a1)?;
        let image = &pu.u * b.element(2) * pu.u.adjoint();
        let along_y = (&image * &p[2]).trace().re / 2.0;
        Ok((pu.u, if along_y >= 0.0 { 1 } else { -1 }))
    };
    let (u, y_sign_a) = side(basis_a)?;
    let (v, y_sign_b) = side(basis_b)?;
    let raw = state_from_correlations(basis_a, basis_b, &[1.0; 4]);
    let uv = kron(&u, &v);
    let transformed = HermitianOperator::symmetrized(&uv * raw * uv.adjoint());
    let phi = max_entangled(2);
    let epr_fidelity = crate::linalg::trace_of_product(transformed.matrix(), &phi).re;
    let min_eigenvalue = transformed.min_eigenvalue();
    let purity = (transformed.matrix() * transformed.matrix()).trace().re;
    let is_epr = frobenius(&(transformed.matrix() - &phi)) < 1e-9;
    Ok(Canonicalization {
        u,
        v,
        y_sign_a,
        y_sign_b,
        transformed,
        epr_fidelity,
        min_eigenvalue,
        purity,
        is_epr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn epr_single_copy_corners() {
        let s = make_epr_power(1).unwrap();
        let m = s.density().matrix();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert!(close(m[(i, j)].re, 0.5, 1e-15));
        }
        assert!(s.marginal_defect() < 1e-15);
        assert!(close(make_epr_power(2).unwrap().purity(), 1.0, 1e-12));
    }

    #[test]
    fn blocked_power_matches_direct_construction() {
        let interleaved = blocked_tensor_power(&max_entangled(2), 2, 3);
        assert!(frobenius(&(interleaved - max_entangled(8))) < 1e-14);
    }

    #[test]
    fn depolarized_examples() {
        let one = make_depolarized_epr(1.0, 2, RegisterKind::Qubit).unwrap();
        assert!(frobenius(&(one.density().matrix() - make_epr_power(2).unwrap().density().matrix())) < 1e-14);
        let mixed = make_depolarized_epr(0.0, 1, RegisterKind::Qubit).unwrap();
        assert!(frobenius(&(mixed.density().matrix() - eye(4) * r(0.25))) < 1e-15);
        let ev = make_depolarized_epr(0.7, 1, RegisterKind::Qubit).unwrap().density().eigenvalues();
        for (got, want) in ev.iter().zip([0.075, 0.075, 0.075, 0.775]) {
            assert!(close(*got, want, 1e-12));
        }
        assert!(make_depolarized_epr(1.2, 1, RegisterKind::Qubit).is_err());
        assert!(make_depolarized_epr(0.5, 7, RegisterKind::Qubit).is_err());
        let four = make_depolarized_epr(0.6, 2, RegisterKind::TwoQubit).unwrap();
        assert_eq!(four.dim_a(), 16);
        assert!(four.marginal_defect() < 1e-14);
    }

    #[test]
    fn local_channels_compose_to_joint_depolarizing() {
        let phi = make_epr_power(1).unwrap();
        let one_side = apply_local_depolarizing(&phi, 0.9, true).unwrap();
        let both = apply_local_depolarizing(&one_side, 0.9, false).unwrap();
        let joint = make_depolarized_epr(0.81, 1, RegisterKind::Qubit).unwrap();
        assert!(frobenius(&(both.density().matrix() - joint.density().matrix())) < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let pauli = StandardBasis::pauli();
        let tp = pauli.transposed();
        let rho = 0.6;
        let s = make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap();
        let corr = correlation_matrix(&s, &pauli, &tp).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i != j { 0.0 } else if i == 0 { 1.0 } else { rho };
                assert!(close(corr[(i, j)], want, 1e-12));
            }
        }
        let prod = BipartiteState::new(2, 2, HermitianOperator::symmetrized(eye(4) * r(0.25))).unwrap();
        let corr = correlation_matrix(&prod, &pauli, &tp).unwrap();
        assert!(close(corr[(0, 0)], 1.0, 1e-15));
        assert!(corr.iter().skip(1).all(|v| v.abs() < 1e-15));
        let bp = bit_phase_flip_state(0.8).unwrap();
        let corr = correlation_matrix(&bp, &pauli, &tp).unwrap();
        for (i, want) in [1.0, 0.8, 0.6, 0.8].iter().enumerate() {
            assert!(close(corr[(i, i)], *want, 1e-12));
        }
    }

    #[test]
    fn correlation_tensorizes() {
        let pauli = StandardBasis::pauli();
        let tp = pauli.transposed();
        let single = bit_phase_flip_state(0.7).unwrap();
        let double_mat = blocked_tensor_power(single.density().matrix(), 2, 2);
        let double = BipartiteState::new(4, 4, HermitianOperator::symmetrized(double_mat)).unwrap();
        let c1 = correlation_matrix(&single, &pauli, &tp).unwrap();
        let c2 = correlation_matrix(&double, &pauli, &tp).unwrap();
        let expect = c1.kronecker(&c1);
        assert!((c2 - expect).abs().max() < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let rho = 0.55;
        let s = make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap();
        let spectrum = diagonalize_correlation(&s).unwrap();
        for (got, want) in spectrum.singular_values.iter().zip([1.0, rho, rho, rho]) {
            assert!(close(*got, want, 1e-12));
        }
        let mixed = make_depolarized_epr(0.0, 1, RegisterKind::Qubit).unwrap();
        let spectrum = diagonalize_correlation(&mixed).unwrap();
        assert!(spectrum.singular_values[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(close(maximal_correlation(&make_epr_power(1).unwrap()).unwrap(), 1.0, 1e-12));
        assert!(maximal_correlation(&mixed).unwrap().abs() < 1e-12);
        let skew = BipartiteState::new(2, 2, HermitianOperator::diagonal(&[0.5, 0.5, 0.0, 0.0])).unwrap();
        assert!(diagonalize_correlation(&skew).is_err());
    }

    #[test]
    fn spectrum_is_local_unitary_invariant() {
        let rho = 0.4;
        let s = make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap();
        let theta = 0.83f64;
        let p = pauli_matrices();
        let u = eye(2) * r(theta.cos()) - (&p[1] * r(0.6) + &p[2] * r(0.8)) * c(0.0, theta.sin());
        let v = eye(2) * r(0.3f64.cos()) - &p[3] * c(0.0, 0.3f64.sin());
        let uv = kron(&u, &v);
        let rotated = HermitianOperator::symmetrized(&uv * s.density().matrix() * uv.adjoint());
        let st = BipartiteState::new(2, 2, rotated).unwrap();
        let spectrum = diagonalize_correlation(&st).unwrap();
        for (got, want) in spectrum.singular_values.iter().zip([1.0, rho, rho, rho]) {
            assert!(close(*got, want, 1e-12));
        }
        // The reassembled state reproduces the input.
        assert!(frobenius(&(spectrum.state().unwrap().density().matrix() - st.density().matrix())) < 1e-12);
    }

    #[test]
    fn pair_register_spectrum() {
        let s = make_depolarized_epr(0.3, 1, RegisterKind::TwoQubit).unwrap();
        let spectrum = diagonalize_correlation(&s).unwrap();
        assert_eq!(spectrum.singular_values.len(), 16);
        assert!(spectrum.singular_values[1..].iter().all(|v| close(*v, 0.3, 1e-12)));
    }

    #[test]
    fn ppt_examples() {
        let phi = make_epr_power(1).unwrap();
        let rep = ppt_separability_2x2(&phi).unwrap();
        assert!(!rep.separable && close(rep.min_eigenvalue, -0.5, 1e-12));
        let edge = make_depolarized_epr(1.0 / 3.0, 1, RegisterKind::Qubit).unwrap();
        assert!(ppt_separability_2x2(&edge).unwrap().min_eigenvalue.abs() < 1e-12);
        let mixed = make_depolarized_epr(0.0, 1, RegisterKind::Qubit).unwrap();
        assert!(ppt_separability_2x2(&mixed).unwrap().separable);
        let big = make_epr_power(2).unwrap();
        assert!(ppt_separability_2x2(&big).is_err());
    }

    #[test]
    fn canonical_pauli_bases_are_epr() {
        let pauli = StandardBasis::pauli();
        let can = canonicalize_to_epr(&pauli, &pauli.transposed()).unwrap();
        assert!(can.is_epr);
        assert_eq!((can.y_sign_a, can.y_sign_b), (1, -1));
        assert!(frobenius(&(can.u.adjoint() * &can.u - eye(2))) < 1e-12);
        assert!(can.u[(0, 1)].norm() < 1e-12 && can.v[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn canonicalization_undoes_rotation() {
        let p = pauli_matrices();
        let t = 1.1f64;
        let rot = eye(2) * r(t.cos()) - (&p[1] * r(0.48) + &p[3] * r(0.6) + &p[2] * r(0.64)) * c(0.0, t.sin());
        let pauli = StandardBasis::pauli();
        let ba = pauli.conjugated(&rot);
        let bb = pauli.transposed().conjugated(&rot.conjugate());
        let can = canonicalize_to_epr(&ba, &bb).unwrap();
        assert!(can.is_epr);
        // U R is a phase times the identity.
        let ur = &can.u * &rot;
        assert!(ur[(0, 1)].norm() < 1e-12 && (ur[(0, 0)] - ur[(1, 1)]).norm() < 1e-12);
        assert!(close(ur[(0, 0)].norm(), 1.0, 1e-12));
    }

    #[test]
    fn inconsistent_signs_are_reported() {
        let pauli = StandardBasis::pauli();
        let can = canonicalize_to_epr(&pauli, &pauli).unwrap();
        assert!(!can.is_epr);
        assert_eq!(can.y_sign_a * can.y_sign_b, 1);
        assert!(close(can.epr_fidelity, 0.5, 1e-12));
        assert!(can.min_eigenvalue < -0.1);
    }
}
