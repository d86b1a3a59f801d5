use crate::error::{check_dim, validation, Error, Result};
use crate::games::{check_observable, correlator, GameValueReport, QuestionValue, TraceError};
use crate::linalg::{r, HermitianOperator};
use crate::pauli::{class_weights, degree_weights, expand_pauli, pauli_matrices, PauliExpansion};
use crate::states::BipartiteState;

/// Observables `P_0, P_1` (Alice) and `Q_0, Q_1` (Bob) on `n` qubit registers.
#[derive(Clone, Debug, PartialEq)]
pub struct ChshStrategy {
    pub n: usize,
    pub p: [HermitianOperator; 2],
    pub q: [HermitianOperator; 2],
}

impl ChshStrategy {
    pub fn new(n: usize, p: [HermitianOperator; 2], q: [HermitianOperator; 2]) -> Result<Self> {
        if n == 0 {
            return validation("register count must be at least 1");
        }
        let d = 1usize << n;
        for (op, name) in [(&p[0], "P0"), (&p[1], "P1"), (&q[0], "Q0"), (&q[1], "Q1")] {
            check_dim(d, op.dim())?;
            check_observable(op, name)?;
        }
        Ok(Self { n, p, q })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn observables(&self) -> [(&'static str, &HermitianOperator); 4] {
        [
            ("P0", &self.p[0]),
            ("P1", &self.p[1]),
            ("Q0", &self.q[0]),
            ("Q1", &self.q[1]),
        ]
    }
}

impl TraceError for ChshStrategy {
    fn trace_error(&self) -> f64 {
        self.observables()
            .iter()
            .map(|(_, o)| o.normalized_trace().abs())
            .fold(0.0, f64::max)
    }
}

/// `(Z, X, (Z+X)/sqrt 2, (Z-X)/sqrt 2)` on register `k` (1-based) of `n`.
pub fn canonical_chsh_strategy(n: usize, k: usize) -> Result<ChshStrategy> {
    if k == 0 || k > n {
        return validation(format!("register {k} out of range 1..={n}"));
    }
    let p = pauli_matrices();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let local = [
        p[3].clone(),
        p[1].clone(),
        (&p[3] + &p[1]) * r(s),
        (&p[3] - &p[1]) * r(s),
    ];
    let ops: Vec<HermitianOperator> = local
        .into_iter()
        .map(|m| HermitianOperator::symmetrized(m).embed(k - 1, n, 2))
        .collect();
    ChshStrategy::new(
        n,
        [ops[0].clone(), ops[1].clone()],
        [ops[2].clone(), ops[3].clone()],
    )
}

/// Canonical strategy with Bob's `Q_0` rotated by `theta` in the Z-X plane,
/// `Q_0 = cos(pi/4 + theta) Z + sin(pi/4 + theta) X`.
pub fn rotated_bob_strategy(n: usize, k: usize, theta: f64) -> Result<ChshStrategy> {
    let mut s = canonical_chsh_strategy(n, k)?;
    let p = pauli_matrices();
    let phi = std::f64::consts::FRAC_PI_4 + theta;
    s.q[0] = HermitianOperator::symmetrized(&p[3] * r(phi.cos()) + &p[1] * r(phi.sin())).embed(k - 1, n, 2);
    Ok(s)
}

/// Shared state model for CHSH evaluation.
#[derive(Clone, Debug)]
pub enum Noise {
    /// `Phi_rho` on every register.
    Depolarizing(f64),
    /// Per-register correlation factors `[1, f_X, f_Y, f_Z]` in
    /// `(Pauli, transposed Pauli)` bases, e.g. `[1, r, r, c]`.
    Diagonal([f64; 4]),
    /// Explicit density matrix on A-block (x) B-block.
    State(BipartiteState),
}

impl Noise {
    /// Correlations `(1, r, r, c)`.
    pub fn general(r_val: f64, c_val: f64) -> Self {
        Noise::Diagonal([1.0, r_val, r_val, c_val])
    }

    /// Per-index weights in coefficient space, if the model is diagonal.
    pub fn weights(&self, n: usize) -> Result<Option<Vec<f64>>> {
        match self {
            Noise::Depolarizing(rho) => {
                if !(0.0..=1.0).contains(rho) {
                    return Err(Error::OutOfRange {
                        name: "rho",
                        value: *rho,
                        allowed: "[0, 1]",
                    });
                }
                Ok(Some(degree_weights(2, n, *rho)))
            }
            Noise::Diagonal(f) => Ok(Some(diagonal_weights(f, n))),
            Noise::State(_) => Ok(None),
        }
    }
}

/// `prod_k f[x_k]` for every multi-index.
pub fn diagonal_weights(f: &[f64; 4], n: usize) -> Vec<f64> {
    (0..4usize.pow(n as u32))
        .map(|x| {
            crate::pauli::index_digits(x, 4, n)
                .into_iter()
                .map(|d| f[d])
                .product()
        })
        .collect()
}

/// `r^{w1(x)} c^{w2(x)}` for every multi-index.
pub fn general_weights(r_val: f64, c_val: f64, n: usize) -> Vec<f64> {
    (0..4usize.pow(n as u32))
        .map(|x| {
            let (w1, w2) = class_weights(x, n);
            r_val.powi(w1 as i32) * c_val.powi(w2 as i32)
        })
        .collect()
}

pub(crate) const CHSH_SIGNS: [[f64; 2]; 2] = [[1.0, 1.0], [1.0, -1.0]];

/// Expansions of `P_x` and of `Q_y^T`.
pub(crate) fn chsh_expansions(s: &ChshStrategy) -> Result<([PauliExpansion; 2], [PauliExpansion; 2])> {
    let p = [expand_pauli(&s.p[0])?, expand_pauli(&s.p[1])?];
    let q = [
        expand_pauli(&s.q[0].transpose())?,
        expand_pauli(&s.q[1].transpose())?,
    ];
    Ok((p, q))
}

/// The four correlators `<P_x (x) Q_y>` indexed `[x][y]`.
pub fn chsh_correlators(s: &ChshStrategy, noise: &Noise) -> Result<[[f64; 2]; 2]> {
    let mut out = [[0.0; 2]; 2];
    match noise.weights(s.n)? {
        Some(w) => {
            let (p, q) = chsh_expansions(s)?;
            for x in 0..2 {
                for y in 0..2 {
                    out[x][y] = correlator(&p[x], &q[y], &w);
                }
            }
        }
        None => {
            let Noise::State(state) = noise else { unreachable!() };
            check_dim(s.dim(), state.dim_a())?;
            check_dim(s.dim(), state.dim_b())?;
            for x in 0..2 {
                for y in 0..2 {
                    out[x][y] = state.expectation(s.p[x].matrix(), s.q[y].matrix());
                }
            }
        }
    }
    Ok(out)
}

/// `v = <P0Q0 + P0Q1 + P1Q0 - P1Q1>` and `w = 1/2 + v/8`.
pub fn chsh_violation(s: &ChshStrategy, noise: &Noise) -> Result<GameValueReport> {
    let corr = chsh_correlators(s, noise)?;
    let mut v = 0.0;
    let mut per_question = Vec::with_capacity(4);
    for x in 0..2 {
        for y in 0..2 {
            v += CHSH_SIGNS[x][y] * corr[x][y];
            per_question.push(QuestionValue {
                label: format!("({x},{y})"),
                value: 0.5 + 0.5 * CHSH_SIGNS[x][y] * corr[x][y],
            });
        }
    }
    Ok(GameValueReport::from_violation(v, per_question))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;
    use crate::pauli::degree_profile;
    use crate::states::{make_depolarized_epr, RegisterKind};

    #[test]
    fn canonical_single_register_matrices() {
        let s = canonical_chsh_strategy(1, 1).unwrap();
        let p = pauli_matrices();
        assert_eq!(s.p[0].matrix(), &p[3]);
        assert_eq!(s.p[1].matrix(), &p[1]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.q[0].matrix()[(0, 1)].re - h).abs() < 1e-15);
        assert!((s.q[1].matrix()[(0, 1)].re + h).abs() < 1e-15);
        assert_eq!(s.trace_error(), 0.0);
        assert!(canonical_chsh_strategy(2, 3).is_err());
    }

    #[test]
    fn canonical_on_middle_register_has_degree_one() {
        let s = canonical_chsh_strategy(3, 2).unwrap();
        for (_, o) in s.observables() {
            let e = expand_pauli(o).unwrap();
            let prof = degree_profile(&e);
            assert!((prof.weights[1] - 1.0).abs() < 1e-14);
            let mass_on_2: f64 = (1..4).map(|a| e.coeffs[a * 4].powi(2)).sum();
            assert!((mass_on_2 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn canonical_values() {
        let s = canonical_chsh_strategy(1, 1).unwrap();
        let rep = chsh_violation(&s, &Noise::Depolarizing(0.9)).unwrap();
        assert!((rep.violation - 2.545584412271571).abs() < 1e-12);
        let rep = chsh_violation(&s, &Noise::Depolarizing(1.0)).unwrap();
        assert!((rep.violation - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((rep.win_prob - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn aligned_z_strategy_matches_trace_oracle() {
        // P0=P1=Q0=Q1=Z gives v = 2 <Z(x)Z>; explicit 4x4 trace gives rho.
        let z = HermitianOperator::symmetrized(pauli_matrices()[3].clone());
        let s = ChshStrategy::new(1, [z.clone(), z.clone()], [z.clone(), z.clone()]).unwrap();
        let rho = 0.5;
        let state = make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap();
        let zz = kron(z.matrix(), z.matrix());
        let explicit = crate::linalg::trace_of_product(state.density().matrix(), &zz).re;
        assert!((explicit - 0.5).abs() < 1e-15);
        let rep = chsh_violation(&s, &Noise::Depolarizing(rho)).unwrap();
        assert!((rep.violation - 2.0 * explicit).abs() < 1e-12);
        assert!((rep.violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_error_of_projector_observable() {
        let p0 = HermitianOperator::diagonal(&[1.0, 0.0]);
        let z = HermitianOperator::symmetrized(pauli_matrices()[3].clone());
        let s = ChshStrategy::new(1, [p0, z.clone()], [z.clone(), z]).unwrap();
        assert!((s.trace_error() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn general_weights_reduce_to_depolarizing() {
        assert_eq!(general_weights(0.7, 0.7, 2), degree_weights(2, 2, 0.7));
        let d = diagonal_weights(&[1.0, 0.8, 0.8, 0.5], 2);
        assert_eq!(d, general_weights(0.8, 0.5, 2));
    }
}
