use serde::Serialize;

use crate::error::{check_dim, validation, Error, Result};
use crate::linalg::{c, eye, kron, r, CMat, HermitianOperator};
use crate::pauli::{hs_distance, hs_norm, pauli_matrices};

/// Result of rotating an anti-commuting qubit pair onto `(Z, X)`.
#[derive(Clone, Debug)]
pub struct PairUnitary {
    pub u: CMat,
    pub dist_z: f64,
    pub dist_x: f64,
    /// Signed rotation angle about `Z` applied after diagonalizing `A`.
    pub theta: f64,
    pub degenerate: bool,
}

/// `(1/sqrt(d)) ||AB + BA||_F`.
pub fn anticommutator_norm(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    a.check_same_dim(b)?;
    let (am, bm) = (a.matrix(), b.matrix());
    Ok(hs_norm(&(am * bm + bm * am)))
}

/// `(1/sqrt(d)) ||AB - BA||_F`.
pub fn commutator_norm(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    a.check_same_dim(b)?;
    let (am, bm) = (a.matrix(), b.matrix());
    Ok(hs_norm(&(am * bm - bm * am)))
}

fn require_qubit(a: &HermitianOperator, name: &str) -> Result<()> {
    if a.dim() != 2 {
        return validation(format!("{name} must be 2x2, got dimension {}", a.dim()));
    }
    Ok(())
}

/// Bloch components `(Tr(A X)/2, Tr(A Y)/2, Tr(A Z)/2)`.
pub fn bloch_vector(a: &HermitianOperator) -> [f64; 3] {
    let p = pauli_matrices();
    let m = a.matrix();
    [1, 2, 3].map(|k| (m * &p[k]).trace().re / 2.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlochRelation {
    pub dot: f64,
    pub cross_norm: f64,
}

pub fn bloch_relation(a: &HermitianOperator, b: &HermitianOperator) -> Result<BlochRelation> {
    require_qubit(a, "A")?;
    require_qubit(b, "B")?;
    let u = bloch_vector(a);
    let v = bloch_vector(b);
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    Ok(BlochRelation {
        dot,
        cross_norm: cross.iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

/// Multiplies each column by a phase so its first non-negligible entry is real positive.
fn fix_column_phases(v: &mut CMat) {
    for j in 0..v.ncols() {
        if let Some(i) = (0..v.nrows()).find(|&i| v[(i, j)].norm() > 1e-8) {
            let ph = v[(i, j)].conj() / r(v[(i, j)].norm());
            for k in 0..v.nrows() {
                v[(k, j)] *= ph;
            }
        }
    }
}

/// Unitary `U` with `U A U^* ~ Z` and `U B U^* ~ X`.
pub fn pauli_pair_unitary(a: &HermitianOperator, b: &HermitianOperator) -> Result<PairUnitary> {
    require_qubit(a, "A")?;
    require_qubit(b, "B")?;
    let (_, mut vecs) = a.eigh();
    fix_column_phases(&mut vecs);
    // Rows of U1 are <a+| then <a-|.
    let u1 = CMat::from_fn(2, 2, |i, j| vecs[(j, 1 - i)].conj());
    let cm = &u1 * b.matrix() * u1.adjoint();
    let c1 = cm[(0, 1)].re;
    let c2 = -cm[(0, 1)].im;
    let planar = (c1 * c1 + c2 * c2).sqrt();
    let degenerate = planar < 1e-9;
    let theta = if degenerate { 0.0 } else { c2.atan2(c1) };
    let u2 = CMat::from_row_slice(
        2,
        2,
        &[
            c((theta / 2.0).cos(), (theta / 2.0).sin()),
            r(0.0),
            r(0.0),
            c((theta / 2.0).cos(), -(theta / 2.0).sin()),
        ],
    );
    let u = u2 * u1;
    let p = pauli_matrices();
    let z = HermitianOperator::symmetrized(p[3].clone());
    let x = HermitianOperator::symmetrized(p[1].clone());
    Ok(PairUnitary {
        dist_z: hs_distance(&a.conjugate_by(&u), &z)?,
        dist_x: hs_distance(&b.conjugate_by(&u), &x)?,
        u,
        theta,
        degenerate,
    })
}

#[derive(Clone, Debug)]
pub struct NearestBinary {
    pub observable: HermitianOperator,
    pub distance: f64,
}

/// `Pi_0 - Pi_1` with `Pi_0` the spectral projector onto eigenvalues `>= 0`.
pub fn nearest_binary_observable(a: &HermitianOperator) -> NearestBinary {
    let (vals, vecs) = a.eigh();
    let signs: Vec<f64> = vals.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
    let observable = spectral_function(&vecs, &signs);
    let distance = hs_distance(a, &observable).expect("same dimension");
    NearestBinary {
        observable,
        distance,
    }
}

/// `sum_i f_i |v_i><v_i|`.
pub fn spectral_function(vecs: &CMat, values: &[f64]) -> HermitianOperator {
    let d = vecs.nrows();
    let scaled = CMat::from_fn(d, d, |i, j| vecs[(i, j)] * r(values[j]));
    HermitianOperator::symmetrized(scaled * vecs.adjoint())
}

/// Result of rotating three 4x4 observables onto `Z(x)I`, `X(x)I`, `I(x)X`.
#[derive(Clone, Debug)]
pub struct MsLocalUnitary {
    pub u: CMat,
    pub dist_zi: f64,
    pub dist_xi: f64,
    pub dist_ix: f64,
    /// Singular values of the off-diagonal block of `B`.
    pub block_singular_values: Vec<f64>,
    pub near_singular: bool,
}

fn two_qubit(a: usize, b: usize) -> HermitianOperator {
    let p = pauli_matrices();
    HermitianOperator::symmetrized(kron(&p[a], &p[b]))
}

fn block(m: &CMat, bi: usize, bj: usize) -> CMat {
    m.view((2 * bi, 2 * bj), (2, 2)).into_owned()
}

fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(4, 4);
    out.view_mut((0, 0), (2, 2)).copy_from(a);
    out.view_mut((2, 2), (2, 2)).copy_from(b);
    out
}

/// Unitary `U` with `U A U^* ~ Z(x)I`, `U B U^* ~ X(x)I`, `U C U^* ~ I(x)X`.
pub fn ms_local_unitary(
    a: &HermitianOperator,
    b: &HermitianOperator,
    cc: &HermitianOperator,
) -> Result<MsLocalUnitary> {
    for (op, name) in [(a, "A"), (b, "B"), (cc, "C")] {
        if op.dim() != 4 {
            return validation(format!("{name} must be 4x4, got dimension {}", op.dim()));
        }
    }
    // Eigenvectors of A, largest eigenvalues first, become the new basis.
    let (_, mut vecs) = a.eigh();
    fix_column_phases(&mut vecs);
    let u0 = CMat::from_fn(4, 4, |i, j| vecs[(j, 3 - i)].conj());
    let b0 = &u0 * b.matrix() * u0.adjoint();
    let b12 = block(&b0, 0, 1);
    let svd = b12.clone().svd(true, true);
    let v = svd.u.expect("requested");
    let w_adj = svd.v_t.expect("requested");
    let block_singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let near_singular = block_singular_values.iter().any(|&s| s < 1e-6);
    // B12 = V S W^*; diag(V^*, W^*) maps the block to S.
    let u1 = block_diag(&v.adjoint(), &w_adj) * &u0;
    let c1m = &u1 * cc.matrix() * u1.adjoint();
    let common = (block(&c1m, 0, 0) + block(&c1m, 1, 1)) * r(0.5);
    let common = HermitianOperator::symmetrized(common);
    let (_, mut cvecs) = nearest_binary_observable(&common).observable.eigh();
    fix_column_phases(&mut cvecs);
    // |+><u| + |-><v| with u, v the +1 / -1 eigenvectors.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = CMat::from_column_slice(2, 1, &[r(s), r(s)]);
    let minus = CMat::from_column_slice(2, 1, &[r(s), r(-s)]);
    let uvec = cvecs.column(1).into_owned();
    let vvec = cvecs.column(0).into_owned();
    let v1 = plus * uvec.adjoint() + minus * vvec.adjoint();
    let u = block_diag(&v1, &v1) * u1;
    Ok(MsLocalUnitary {
        dist_zi: hs_distance(&a.conjugate_by(&u), &two_qubit(3, 0))?,
        dist_xi: hs_distance(&b.conjugate_by(&u), &two_qubit(1, 0))?,
        dist_ix: hs_distance(&cc.conjugate_by(&u), &two_qubit(0, 1))?,
        u,
        block_singular_values,
        near_singular,
    })
}

/// Rotates the second qubit about `X` so that `U D U^*` has its
/// `I(x)Y` / `I(x)Z` component aligned with `I(x)Z`.
pub fn align_second_factor(u: &CMat, d: &HermitianOperator) -> Result<CMat> {
    check_dim(4, d.dim())?;
    let dm = u * d.matrix() * u.adjoint();
    let y = (&dm * two_qubit(0, 2).matrix()).trace().re / 4.0;
    let z = (&dm * two_qubit(0, 3).matrix()).trace().re / 4.0;
    if (y * y + z * z).sqrt() < 1e-12 {
        return Ok(u.clone());
    }
    let phi = std::f64::consts::FRAC_PI_2 - z.atan2(y);
    let p = pauli_matrices();
    let rot = eye(2) * r((phi / 2.0).cos()) - &p[1] * c(0.0, (phi / 2.0).sin());
    Ok(kron(&eye(2), &rot) * u)
}

/// Minimum of `sum_i a_i x_i` over `x >= 0` with `sum_i x_i = t1` and
/// `sum_i a_i^2 x_i = t2`, which is `(t2 + a_1 a_n t1) / (a_1 + a_n)`.
pub fn lp_min_closed_form(a: &[f64], t1: f64, t2: f64) -> Result<f64> {
    if a.is_empty() {
        return validation("coefficient list is empty");
    }
    if a.windows(2).any(|w| w[0] < w[1]) {
        return validation("coefficients must be in descending order");
    }
    let a1 = a[0];
    let an = a[a.len() - 1];
    let lo = an * an * t1;
    let hi = a1 * a1 * t1;
    let slack = 1e-12 * hi.abs().max(1.0);
    if t2 < lo - slack || t2 > hi + slack {
        return Err(Error::Infeasible(format!(
            "t2 = {t2} outside [{lo}, {hi}]"
        )));
    }
    if a1 + an == 0.0 {
        return Ok(0.0);
    }
    Ok((t2 + a1 * an * t1) / (a1 + an))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectivityReport {
    /// `((i, j), (1/sqrt(d)) ||E_i E_j||_F)` for `i < j`.
    pub pairwise_product_norms: Vec<((usize, usize), f64)>,
    pub idempotency_gaps: Vec<f64>,
    pub wrong_parity_mass: Option<f64>,
}

/// `parity` is the required product of the three answers for an
/// eight-outcome Magic Square POVM; outcome bits follow [`crate::games::ms_answers`].
pub fn povm_projectivity_report(
    elements: &[HermitianOperator],
    parity: Option<i8>,
) -> ProjectivityReport {
    let mut pairwise_product_norms = Vec::new();
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            let prod = elements[i].matrix() * elements[j].matrix();
            pairwise_product_norms.push(((i, j), hs_norm(&prod)));
        }
    }
    let idempotency_gaps = elements
        .iter()
        .map(|e| hs_norm(&(e.matrix() * e.matrix() - e.matrix())))
        .collect();
    let wrong_parity_mass = parity.map(|want| {
        elements
            .iter()
            .enumerate()
            .filter(|(o, _)| {
                let a = crate::games::ms_answers(*o);
                (a[0] * a[1] * a[2]) as i8 != want
            })
            .map(|(_, e)| e.normalized_trace())
            .sum()
    });
    ProjectivityReport {
        pairwise_product_norms,
        idempotency_gaps,
        wrong_parity_mass,
    }
}
