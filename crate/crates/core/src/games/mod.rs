//! Game definitions, strategies, and exact values computed in coefficient space.
//!
//! For a state with correlation factors `f` on `(Pauli, transposed Pauli)`
//! bases, `Tr((P (x) Q) state) = sum_x f(x) P^(x) (Q^T)^(x)`, so values never
//! need the joint density matrix.

pub mod chsh;
pub mod magic_square;
pub mod two_out_of_n;

use serde::{Deserialize, Serialize};

pub use chsh::{canonical_chsh_strategy, chsh_violation, rotated_bob_strategy, ChshStrategy, Noise};
pub use magic_square::{
    canonical_magic_square_strategy, derived_observable, rotated_bob_ms_strategy, magic_square_table, magic_square_value,
    MagicSquareStrategy, MagicSquareValue, MsQuestion,
};
pub use two_out_of_n::{
    canonical_two_out_of_n_strategy, marginal_pair_observable, rotated_bob_two_out_of_n_strategy, two_out_of_n_value, PairKey,
    PairSide, TwoOutOfNStrategy, TwoOutOfNValue,
};

use crate::error::{validation, Result};
use crate::linalg::HermitianOperator;
use crate::pauli::PauliExpansion;

/// Spectral-norm slack for observables.
pub const NORM_TOL: f64 = 1e-9;
/// Completeness and positivity slack for POVMs.
pub const POVM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Game {
    Chsh,
    MagicSquare,
    TwoOutOfN,
}

impl Game {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "chsh" => Ok(Game::Chsh),
            "magic_square" => Ok(Game::MagicSquare),
            "two_out_of_n" => Ok(Game::TwoOutOfN),
            other => validation(format!("unknown game '{other}'")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Game::Chsh => "chsh",
            Game::MagicSquare => "magic_square",
            Game::TwoOutOfN => "two_out_of_n",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuestionValue {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GameValueReport {
    pub violation: f64,
    #[serde(rename = "winProb")]
    pub win_prob: f64,
    #[serde(rename = "perQuestion")]
    pub per_question: Vec<QuestionValue>,
}

impl GameValueReport {
    /// Builds the report from a CHSH-style violation, `w = 1/2 + v/8`.
    pub fn from_violation(violation: f64, per_question: Vec<QuestionValue>) -> Self {
        Self {
            violation,
            win_prob: 0.5 + violation / 8.0,
            per_question,
        }
    }
}

/// Validated positive operator-valued measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>) -> Result<Self> {
        if elements.is_empty() {
            return validation("POVM has no elements");
        }
        let d = elements[0].dim();
        let mut sum = HermitianOperator::zeros(d);
        for (k, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return validation(format!("POVM element {k} has dimension {}, expected {d}", e.dim()));
            }
            let min = e.min_eigenvalue();
            if min < -POVM_TOL {
                return validation(format!("POVM element {k} is not PSD (min eigenvalue {min:.3e})"));
            }
            sum = &sum + e;
        }
        let defect = (sum.matrix() - HermitianOperator::identity(d).matrix()).camax();
        if defect > POVM_TOL {
            return validation(format!("POVM elements do not sum to identity (defect {defect:.3e})"));
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// `(I + A)/2, (I - A)/2` for an observable with norm at most one.
    pub fn from_observable(a: &HermitianOperator) -> Result<Self> {
        check_observable(a, "observable")?;
        let id = HermitianOperator::identity(a.dim());
        Self::new(vec![(&id + a).scale(0.5), (&id - a).scale(0.5)])
    }
}

pub fn check_observable(a: &HermitianOperator, name: &str) -> Result<()> {
    let norm = a.spectral_norm();
    if norm > 1.0 + NORM_TOL {
        return validation(format!("{name} has spectral norm {norm}, above 1"));
    }
    Ok(())
}

/// Answers `(a_1, a_2, a_3)` for outcome index `o` of an eight-outcome POVM;
/// bit `2 - k` of `o` set means `a_{k+1} = -1`.
pub fn ms_answers(o: usize) -> [i32; 3] {
    [0, 1, 2].map(|k| 1 - 2 * ((o >> (2 - k)) & 1) as i32)
}

/// Answers `(a, b)` for outcome index `o` of a four-outcome pair POVM.
pub fn pair_answers(o: usize) -> [i32; 2] {
    [1 - 2 * ((o >> 1) & 1) as i32, 1 - 2 * (o & 1) as i32]
}

/// `sum_x w(x) a(x) b(x)` for expansions of the left operator and of the
/// transpose of the right operator.
pub(crate) fn correlator(left: &PauliExpansion, right_t: &PauliExpansion, weights: &[f64]) -> f64 {
    left.weighted_dot(right_t, weights)
}

/// Normalized traces of every observable a game's trace test covers.
pub trait TraceError {
    fn trace_error(&self) -> f64;
}

pub fn trace_error<S: TraceError>(s: &S) -> f64 {
    s.trace_error()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_encodings() {
        assert_eq!(ms_answers(0), [1, 1, 1]);
        assert_eq!(ms_answers(5), [-1, 1, -1]);
        assert_eq!(pair_answers(1), [1, -1]);
        assert_eq!(pair_answers(2), [-1, 1]);
    }

    #[test]
    fn povm_validation() {
        let half = HermitianOperator::identity(2).scale(0.5);
        assert!(Povm::new(vec![half.clone(), half.clone()]).is_ok());
        assert!(Povm::new(vec![half.clone()]).is_err());
        let neg = HermitianOperator::diagonal(&[1.5, -0.5]);
        let rest = HermitianOperator::diagonal(&[-0.5, 1.5]);
        assert!(Povm::new(vec![neg, rest]).is_err());
        assert!(Povm::from_observable(&HermitianOperator::diagonal(&[1.2, 0.0])).is_err());
    }
}
