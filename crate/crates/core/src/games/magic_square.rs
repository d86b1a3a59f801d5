use serde::Serialize;

use crate::error::{check_dim, validation, Result};
use crate::games::{check_observable, correlator, ms_answers, Povm, TraceError};
use crate::linalg::{kron, CMat, HermitianOperator};
use crate::pauli::{degree_weights, expand_pauli_pair, pauli_matrices, PauliExpansion};

/// Pauli indices `(a, b)` of the table entry `sigma_a (x) sigma_b`, row-major.
pub const TABLE: [[(usize, usize); 3]; 3] = [
    [(1, 0), (0, 1), (1, 1)],
    [(0, 3), (3, 0), (3, 3)],
    [(1, 3), (3, 1), (2, 2)],
];

/// The nine two-qubit observables of the optimal strategy.
pub fn magic_square_table() -> [[CMat; 3]; 3] {
    let p = pauli_matrices();
    TABLE.map(|row| row.map(|(a, b)| kron(&p[a], &p[b])))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MsQuestion {
    Row(usize),
    Col(usize),
}

impl MsQuestion {
    /// Questions in storage order `r1, r2, r3, c1, c2, c3`.
    pub const ALL: [MsQuestion; 6] = [
        MsQuestion::Row(0),
        MsQuestion::Row(1),
        MsQuestion::Row(2),
        MsQuestion::Col(0),
        MsQuestion::Col(1),
        MsQuestion::Col(2),
    ];

    pub fn index(self) -> usize {
        match self {
            MsQuestion::Row(i) => i,
            MsQuestion::Col(j) => 3 + j,
        }
    }

    pub fn from_index(q: usize) -> Self {
        Self::ALL[q]
    }

    /// Variable `(i, j)` answered in `slot`.
    pub fn variable(self, slot: usize) -> (usize, usize) {
        match self {
            MsQuestion::Row(i) => (i, slot),
            MsQuestion::Col(j) => (slot, j),
        }
    }

    /// Required product of the three answers.
    pub fn parity(self) -> i32 {
        match self {
            MsQuestion::Col(2) => -1,
            _ => 1,
        }
    }

    pub fn label(self) -> String {
        match self {
            MsQuestion::Row(i) => format!("r{}", i + 1),
            MsQuestion::Col(j) => format!("c{}", j + 1),
        }
    }
}

pub fn parity_ok(q: MsQuestion, outcome: usize) -> bool {
    let a = ms_answers(outcome);
    a[0] * a[1] * a[2] == q.parity()
}

/// Alice's eight-outcome POVMs per question and Bob's nine observables,
/// on `n` registers of local dimension 4.
#[derive(Clone, Debug, PartialEq)]
pub struct MagicSquareStrategy {
    pub n: usize,
    pub alice: Vec<Povm>,
    pub bob: Vec<Vec<HermitianOperator>>,
}

impl MagicSquareStrategy {
    pub fn new(n: usize, alice: Vec<Povm>, bob: Vec<Vec<HermitianOperator>>) -> Result<Self> {
        if n == 0 {
            return validation("register count must be at least 1");
        }
        let d = 4usize.pow(n as u32);
        if alice.len() != 6 {
            return validation(format!("expected 6 Alice POVMs, got {}", alice.len()));
        }
        for (q, povm) in alice.iter().enumerate() {
            if povm.len() != 8 {
                return validation(format!("POVM for question {q} has {} outcomes, expected 8", povm.len()));
            }
            check_dim(d, povm.dim())?;
        }
        if bob.len() != 3 || bob.iter().any(|row| row.len() != 3) {
            return validation("Bob needs a 3x3 array of observables");
        }
        for (i, row) in bob.iter().enumerate() {
            for (j, op) in row.iter().enumerate() {
                check_dim(d, op.dim())?;
                check_observable(op, &format!("Q{}{}", i + 1, j + 1))?;
            }
        }
        Ok(Self { n, alice, bob })
    }

    pub fn dim(&self) -> usize {
        4usize.pow(self.n as u32)
    }

    pub fn povm(&self, q: MsQuestion) -> &Povm {
        &self.alice[q.index()]
    }

    /// `P^row_{i,j}` (from row `i`) and `P^col_{i,j}` (from column `j`).
    pub fn row_col_observables(&self, i: usize, j: usize) -> (HermitianOperator, HermitianOperator) {
        let row = signed_sum(self.povm(MsQuestion::Row(i)), j, |_| true);
        let col = signed_sum(self.povm(MsQuestion::Col(j)), i, |_| true);
        (row, col)
    }
}

impl TraceError for MagicSquareStrategy {
    fn trace_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let (row, col) = self.row_col_observables(i, j);
                worst = worst
                    .max(row.normalized_trace().abs())
                    .max(col.normalized_trace().abs())
                    .max(self.bob[i][j].normalized_trace().abs());
            }
        }
        worst
    }
}

fn signed_sum(povm: &Povm, slot: usize, keep: impl Fn(usize) -> bool) -> HermitianOperator {
    let mut out = HermitianOperator::zeros(povm.dim());
    for (o, e) in povm.elements().iter().enumerate() {
        if keep(o) {
            out = &out + &e.scale(ms_answers(o)[slot] as f64);
        }
    }
    out
}

/// `sum_a a_j E_a` for an eight-outcome POVM; `slot` is 1-based.
pub fn derived_observable(povm: &Povm, slot: usize) -> Result<HermitianOperator> {
    if povm.len() != 8 {
        return validation(format!("expected an 8-outcome POVM, got {} outcomes", povm.len()));
    }
    if !(1..=3).contains(&slot) {
        return validation(format!("slot {slot} outside 1..=3"));
    }
    Ok(signed_sum(povm, slot - 1, |_| true))
}

/// Joint spectral projectors of three commuting binary observables.
pub fn joint_projectors(ops: [&HermitianOperator; 3]) -> Vec<HermitianOperator> {
    let d = ops[0].dim();
    let id = HermitianOperator::identity(d);
    (0..8)
        .map(|o| {
            let a = ms_answers(o);
            let mut prod = id.matrix().clone();
            for k in 0..3 {
                let f = (&id + &ops[k].scale(a[k] as f64)).scale(0.5);
                prod = prod * f.matrix();
            }
            HermitianOperator::symmetrized(prod)
        })
        .collect()
}

/// Optimal strategy on register `l` (1-based) of `n`; Bob holds the transposed table.
pub fn canonical_magic_square_strategy(n: usize, l: usize) -> Result<MagicSquareStrategy> {
    if l == 0 || l > n {
        return validation(format!("register {l} out of range 1..={n}"));
    }
    let table = magic_square_table();
    let embedded: Vec<Vec<HermitianOperator>> = table
        .iter()
        .map(|row| {
            row.iter()
                .map(|m| HermitianOperator::symmetrized(m.clone()).embed(l - 1, n, 4))
                .collect()
        })
        .collect();
    let alice = MsQuestion::ALL
        .iter()
        .map(|&q| {
            let ops = [0, 1, 2].map(|slot| {
                let (i, j) = q.variable(slot);
                &embedded[i][j]
            });
            Povm::new(joint_projectors(ops))
        })
        .collect::<Result<Vec<_>>>()?;
    let bob = embedded
        .iter()
        .map(|row| row.iter().map(|o| o.transpose()).collect())
        .collect();
    MagicSquareStrategy::new(n, alice, bob)
}

/// Canonical strategy with Bob's `Q_11` rotated by `theta` toward the
/// anti-commuting `Z (x) X`.
pub fn rotated_bob_ms_strategy(n: usize, l: usize, theta: f64) -> Result<MagicSquareStrategy> {
    let mut s = canonical_magic_square_strategy(n, l)?;
    let p = pauli_matrices();
    let local = kron(&p[1], &p[0]) * crate::linalg::r(theta.cos()) + kron(&p[3], &p[1]) * crate::linalg::r(theta.sin());
    s.bob[0][0] = HermitianOperator::symmetrized(local).embed(l - 1, n, 4);
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct MagicSquareValue {
    pub overall: f64,
    #[serde(rename = "parityPass")]
    pub parity_pass: f64,
    #[serde(rename = "consistencyPass")]
    pub consistency_pass: f64,
    /// Consistency probability per `(question, variable)`.
    #[serde(rename = "perQuestion")]
    pub per_question: Vec<crate::games::QuestionValue>,
}

/// Expansions of Bob's transposed observables.
pub(crate) fn bob_transposed_expansions(s: &MagicSquareStrategy) -> Result<Vec<Vec<PauliExpansion>>> {
    s.bob
        .iter()
        .map(|row| row.iter().map(|q| expand_pauli_pair(&q.transpose())).collect())
        .collect()
}

/// Consistency, parity and joint pass probabilities under `Phi_rho^(2)` per register.
pub fn magic_square_value(s: &MagicSquareStrategy, rho: f64) -> Result<MagicSquareValue> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(crate::error::Error::OutOfRange {
            name: "rho",
            value: rho,
            allowed: "[0, 1]",
        });
    }
    let w = degree_weights(4, s.n, rho);
    let bob_t = bob_transposed_expansions(s)?;
    let mut overall = 0.0;
    let mut consistency = 0.0;
    let mut parity = 0.0;
    let mut per_question = Vec::with_capacity(18);
    for q in MsQuestion::ALL {
        let povm = s.povm(q);
        let parity_mass: f64 = povm
            .elements()
            .iter()
            .enumerate()
            .filter(|(o, _)| parity_ok(q, *o))
            .map(|(_, e)| e.normalized_trace())
            .sum();
        parity += parity_mass / 6.0;
        for slot in 0..3 {
            let (i, j) = q.variable(slot);
            let derived = expand_pauli_pair(&signed_sum(povm, slot, |_| true))?;
            let restricted = expand_pauli_pair(&signed_sum(povm, slot, |o| parity_ok(q, o)))?;
            let cons = 0.5 + 0.5 * correlator(&derived, &bob_t[i][j], &w);
            let joint = 0.5 * parity_mass + 0.5 * correlator(&restricted, &bob_t[i][j], &w);
            consistency += cons / 18.0;
            overall += joint / 18.0;
            per_question.push(crate::games::QuestionValue {
                label: format!("{}:s{}{}", q.label(), i + 1, j + 1),
                value: cons,
            });
        }
    }
    Ok(MagicSquareValue {
        overall,
        parity_pass: parity,
        consistency_pass: consistency,
        per_question,
    })
}
