//! Sum-of-squares decompositions of the bound-minus-value operators and the
//! closed-form upper bounds they certify.
//!
//! All expectations are taken under the noiseless `Phi^{(x) n}` with Bob's
//! observables replaced by their noisy versions `Q' = Delta_rho(Q)`, so every
//! quantity is a coefficient contraction:
//! `<A (x) B>_Phi = sum_x A^(x) (B^T)^(x)` and `<A^2 (x) I>_Phi = Tr-bar(A^2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::games::chsh::CHSH_SIGNS;
use crate::games::{
    ms_answers, trace_error, ChshStrategy, Game, MagicSquareStrategy, MsQuestion,
};
use crate::pauli::{apply_depolarizing_coeffs, expand_pauli, expand_pauli_pair, PauliExpansion};

/// Slack allowed for squared-term expectations and identity residuals.
pub const CERT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct CertificateTerm {
    pub label: String,
    pub expectation: f64,
    /// Whether the term is the expectation of a (scaled) square.
    #[serde(rename = "isSquare")]
    pub is_square: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SoSCertificate {
    pub game: Game,
    pub rho: f64,
    #[serde(rename = "epsTr")]
    pub eps_tr: f64,
    /// Closed-form bound at the strategy's trace error.
    pub bound: f64,
    /// Bell value, or the consistency correlator for a single Magic Square variable.
    pub value: f64,
    /// Bound at zero trace error minus `value`.
    #[serde(rename = "gapExpectation")]
    pub gap_expectation: f64,
    pub terms: Vec<CertificateTerm>,
    /// `|gapExpectation - sum of terms|`.
    pub residual: f64,
}

impl SoSCertificate {
    pub fn term_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.expectation).sum()
    }

    /// Smallest expectation among the square terms.
    pub fn min_square(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.is_square)
            .map(|t| t.expectation)
            .fold(f64::INFINITY, f64::min)
    }

    /// Identity holds and every square is nonnegative, within [`CERT_TOL`].
    pub fn is_valid(&self) -> bool {
        self.residual <= CERT_TOL && self.min_square() >= -CERT_TOL
    }
}

fn check_rho_positive(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "rho",
            value: rho,
            allowed: "(0, 1]",
        })
    }
}

fn check_eps(eps_tr: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps_tr) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "epsTr",
            value: eps_tr,
            allowed: "[0, 1]",
        })
    }
}

/// `2 sqrt 2 rho + sqrt 2 eps_tr^2 / rho`.
pub fn chsh_upper_bound(rho: f64, eps_tr: f64) -> Result<f64> {
    check_rho_positive(rho)?;
    check_eps(eps_tr)?;
    Ok(2.0 * 2f64.sqrt() * rho + 2f64.sqrt() * eps_tr * eps_tr / rho)
}

/// `(1 + rho)/2 + eps_tr^2 / (4 rho)`.
pub fn magic_square_upper_bound(rho: f64, eps_tr: f64) -> Result<f64> {
    check_rho_positive(rho)?;
    check_eps(eps_tr)?;
    Ok((1.0 + rho) / 2.0 + eps_tr * eps_tr / (4.0 * rho))
}

fn term(label: impl Into<String>, expectation: f64, is_square: bool) -> CertificateTerm {
    CertificateTerm {
        label: label.into(),
        expectation,
        is_square,
    }
}

/// Core of the CHSH decomposition on Alice's expansions `p` and Bob's noisy
/// transposed expansions `qt` (`(Q_y')^T`).
fn chsh_terms(p: &[PauliExpansion; 2], qt: &[PauliExpansion; 2], rho: f64, names: [&str; 2]) -> (f64, Vec<CertificateTerm>) {
    let s2 = 2f64.sqrt();
    let sums = [
        PauliExpansion::linear_combination(&[(1.0, &qt[0]), (1.0, &qt[1])]),
        PauliExpansion::linear_combination(&[(1.0, &qt[0]), (-1.0, &qt[1])]),
    ];
    let mut value = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            value += CHSH_SIGNS[x][y] * p[x].dot(&qt[y]);
        }
    }
    let mut terms = Vec::with_capacity(5);
    let (a, b) = (names[0], names[1]);
    for i in 0..2 {
        let p_sq = p[i].parseval_total();
        let cross = p[i].dot(&sums[i]);
        let s_sq = sums[i].parseval_total();
        let square = rho / s2 * (p_sq - 2.0 * cross / (s2 * rho) + s_sq / (2.0 * rho * rho));
        let sign = if i == 0 { '+' } else { '-' };
        term_push(&mut terms, format!("square_{i}: ({a}{i} x I - I x ({b}0' {sign} {b}1')/(sqrt2 rho))^2"), square, true);
    }
    let q_sq = qt[0].parseval_total() + qt[1].parseval_total();
    term_push(&mut terms, format!("{b}_deficit: sqrt2 rho - Tr({b}0'^2 + {b}1'^2)/(sqrt2 rho)"), s2 * rho - q_sq / (s2 * rho), false);
    for i in 0..2 {
        let p_sq = p[i].parseval_total();
        term_push(&mut terms, format!("{a}_norm_{i}: (rho/sqrt2) Tr(I - {a}{i}^2)"), rho / s2 * (1.0 - p_sq), false);
    }
    (value, terms)
}

fn term_push(terms: &mut Vec<CertificateTerm>, label: String, value: f64, is_square: bool) {
    terms.push(term(label, value, is_square));
}

fn chsh_certificate_from(s: &ChshStrategy, rho: f64, mirrored: bool) -> Result<SoSCertificate> {
    check_rho_positive(rho)?;
    let eps_tr = trace_error(s);
    // Mirroring uses <A (x) B>_Phi = <B^T (x) A^T>_Phi and the symmetric CHSH signs.
    let (left, right) = if mirrored {
        ([s.q[0].transpose(), s.q[1].transpose()], [s.p[0].transpose(), s.p[1].transpose()])
    } else {
        (s.p.clone(), s.q.clone())
    };
    let p = [expand_pauli(&left[0])?, expand_pauli(&left[1])?];
    let qt = [
        apply_depolarizing_coeffs(&expand_pauli(&right[0].transpose())?, rho)?,
        apply_depolarizing_coeffs(&expand_pauli(&right[1].transpose())?, rho)?,
    ];
    let names = if mirrored { ["Q", "P"] } else { ["P", "Q"] };
    let (value, terms) = chsh_terms(&p, &qt, rho, names);
    let gap = 2.0 * 2f64.sqrt() * rho - value;
    let sum: f64 = terms.iter().map(|t| t.expectation).sum();
    Ok(SoSCertificate {
        game: Game::Chsh,
        rho,
        eps_tr,
        bound: chsh_upper_bound(rho, eps_tr.min(1.0))?,
        value,
        gap_expectation: gap,
        residual: (gap - sum).abs(),
        terms,
    })
}

/// Decomposition `C_1` of `2 sqrt2 rho I - B` with noise carried by Bob:
/// two squares `(rho/sqrt2)(P_i (x) I - I (x) S_i/(sqrt2 rho))^2` with
/// `S_i = Q_0' + (-1)^i Q_1'`, Bob's deficit, and Alice's `I - P_i^2` terms.
pub fn chsh_sos_certificate(s: &ChshStrategy, rho: f64) -> Result<SoSCertificate> {
    chsh_certificate_from(s, rho, false)
}

/// Mirrored decomposition `C_2` with the noise carried by Alice. Diagnostic only.
pub fn chsh_sos_certificate_mirrored(s: &ChshStrategy, rho: f64) -> Result<SoSCertificate> {
    chsh_certificate_from(s, rho, true)
}

/// Which of Alice's questions supplies the observable for a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Row,
    Column,
}

fn ms_terms(p: &PauliExpansion, qt: &PauliExpansion, rho: f64) -> (f64, Vec<CertificateTerm>) {
    let corr = p.dot(qt);
    let p_sq = p.parseval_total();
    let q_sq = qt.parseval_total();
    let x1 = p_sq - 2.0 * corr / rho + q_sq / (rho * rho);
    let terms = vec![
        term("(rho/2) (P x I - I x Q'/rho)^2", rho / 2.0 * x1, true),
        term("(rho/2) Tr(I - P^2)", rho / 2.0 * (1.0 - p_sq), false),
        term("(rho/2) Tr(I - Q'^2/rho^2)", rho / 2.0 * (1.0 - q_sq / (rho * rho)), false),
    ];
    (corr, terms)
}

/// Decomposition of `rho - <P_{i,j} (x) Q'_{i,j}>` for one variable (0-based
/// `i`, `j`) with `P` derived from the chosen context. The consistency pass
/// probability for that question is `1/2 + value/2`.
pub fn ms_consistency_certificate(
    s: &MagicSquareStrategy,
    rho: f64,
    variable: (usize, usize),
    context: Context,
) -> Result<SoSCertificate> {
    check_rho_positive(rho)?;
    let (i, j) = variable;
    if i > 2 || j > 2 {
        return crate::error::validation(format!("variable ({i}, {j}) outside the 3x3 square"));
    }
    let (row, col) = s.row_col_observables(i, j);
    let p_op = match context {
        Context::Row => row,
        Context::Column => col,
    };
    let p = expand_pauli_pair(&p_op)?;
    let qt = apply_depolarizing_coeffs(&expand_pauli_pair(&s.bob[i][j].transpose())?, rho)?;
    let (value, terms) = ms_terms(&p, &qt, rho);
    let eps_tr = trace_error(s);
    let gap = rho - value;
    let sum: f64 = terms.iter().map(|t| t.expectation).sum();
    Ok(SoSCertificate {
        game: Game::MagicSquare,
        rho,
        eps_tr,
        bound: magic_square_upper_bound(rho, eps_tr.min(1.0))?,
        value,
        gap_expectation: gap,
        residual: (gap - sum).abs(),
        terms,
    })
}

/// Whole-game consistency certificate: `(1+rho)/2 - consistencyPass` as the
/// average of the 18 per-question decompositions (each halved).
pub fn ms_game_certificate(s: &MagicSquareStrategy, rho: f64) -> Result<SoSCertificate> {
    check_rho_positive(rho)?;
    let mut labels: Vec<String> = Vec::new();
    let mut sums = Vec::new();
    let mut squares = Vec::new();
    let mut consistency = 0.0;
    for q in MsQuestion::ALL {
        let context = match q {
            MsQuestion::Row(_) => Context::Row,
            MsQuestion::Col(_) => Context::Column,
        };
        for slot in 0..3 {
            let var = q.variable(slot);
            let cert = ms_consistency_certificate(s, rho, var, context)?;
            consistency += (0.5 + 0.5 * cert.value) / 18.0;
            for (k, t) in cert.terms.iter().enumerate() {
                if labels.len() <= k {
                    labels.push(t.label.clone());
                    sums.push(0.0);
                    squares.push(t.is_square);
                }
                sums[k] += t.expectation / 36.0;
            }
        }
    }
    let eps_tr = trace_error(s);
    let gap = (1.0 + rho) / 2.0 - consistency;
    let terms: Vec<CertificateTerm> = labels
        .into_iter()
        .zip(sums)
        .zip(squares)
        .map(|((label, e), sq)| term(format!("mean {label} / 2"), e, sq))
        .collect();
    let sum: f64 = terms.iter().map(|t| t.expectation).sum();
    Ok(SoSCertificate {
        game: Game::MagicSquare,
        rho,
        eps_tr,
        bound: magic_square_upper_bound(rho, eps_tr.min(1.0))?,
        value: consistency,
        gap_expectation: gap,
        residual: (gap - sum).abs(),
        terms,
    })
}

/// Best classical winning probability, by exhaustive enumeration of
/// deterministic strategies (16 for CHSH; for Magic Square, all `2^9` Bob
/// assignments with Alice's best parity-respecting response per question).
pub fn classical_baselines(game: Game) -> Result<f64> {
    match game {
        Game::Chsh => {
            let mut best = 0.0f64;
            for alice in 0..4u32 {
                for bob in 0..4u32 {
                    let mut wins = 0;
                    for x in 0..2 {
                        for y in 0..2 {
                            let a = (alice >> x) & 1;
                            let b = (bob >> y) & 1;
                            if (a ^ b) as usize == (x & y) {
                                wins += 1;
                            }
                        }
                    }
                    best = best.max(wins as f64 / 4.0);
                }
            }
            Ok(best)
        }
        Game::MagicSquare => {
            let mut best = 0.0f64;
            for bob in 0..512u32 {
                let val = |i: usize, j: usize| if (bob >> (3 * i + j)) & 1 == 1 { -1 } else { 1 };
                let mut total = 0usize;
                for q in MsQuestion::ALL {
                    let best_q = (0..8)
                        .map(ms_answers)
                        .filter(|a| a[0] * a[1] * a[2] == q.parity())
                        .map(|a| {
                            (0..3)
                                .filter(|&slot| {
                                    let (i, j) = q.variable(slot);
                                    a[slot] == val(i, j)
                                })
                                .count()
                        })
                        .max()
                        .unwrap_or(0);
                    total += best_q;
                }
                best = best.max(total as f64 / 18.0);
            }
            Ok(best)
        }
        Game::TwoOutOfN => Err(Error::Validation(
            "classical baseline is only defined for chsh and magic_square".into(),
        )),
    }
}
