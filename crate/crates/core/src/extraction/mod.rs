//! Self-testing diagnostics: register concentration, observable scaling,
//! (anti-)commutation witnesses and constructive extraction unitaries.
//!
//! Reports carry raw distances only; thresholds belong to callers.

pub mod tools;

use serde::Serialize;

pub use tools::*;

use crate::error::{Error, Result};
use crate::games::two_out_of_n::Player;
use crate::games::{
    chsh_violation, magic_square_value, trace_error, two_out_of_n_value,
    ChshStrategy, Game, MagicSquareStrategy, MsQuestion, Noise, TwoOutOfNStrategy,
};
use crate::io::MatrixJson;
use crate::linalg::{kron_all, CMat, HermitianOperator};
use crate::pauli::{
    apply_general_scaling, degree, expand_pauli, index_digits, pauli_basis, pauli_expand,
    pauli_matrices, pauli_pair_basis, PauliExpansion,
};
use crate::states::CorrelationSpectrum;

/// Weights below this count as "no concentration".
pub const CONCENTRATION_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct Labeled {
    pub label: String,
    pub value: f64,
}

fn lab(label: impl Into<String>, value: f64) -> Labeled {
    Labeled {
        label: label.into(),
        value,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LabeledMatrix {
    pub label: String,
    pub matrix: MatrixJson,
}

/// Degree-one mass per register of one observable.
#[derive(Clone, Debug, Serialize)]
pub struct RegisterConcentration {
    /// Register with the largest weight (1-based); `None` if every weight is negligible.
    pub k: Option<usize>,
    /// `a_j = sqrt(sum of squared degree-one coefficients supported on j)`.
    pub weights: Vec<f64>,
    /// Largest weight minus the runner-up.
    pub margin: f64,
    /// `hs_distance(Q, a_k O^(k) (x) I)`: mass outside degree one plus the
    /// degree-one mass on other registers, square-rooted.
    pub residual: f64,
    /// `O^(j)` with unit normalized HS norm (zero where `a_j` is negligible).
    #[serde(skip)]
    pub local_operators: Vec<HermitianOperator>,
}

impl RegisterConcentration {
    pub fn local(&self) -> Option<&HermitianOperator> {
        self.k.map(|k| &self.local_operators[k - 1])
    }
}

fn expand_local(q: &HermitianOperator, m: usize) -> Result<PauliExpansion> {
    match m {
        2 => pauli_expand(q, &pauli_basis()),
        4 => pauli_expand(q, &pauli_pair_basis()),
        _ => Err(Error::Validation(format!("unsupported local dimension {m}"))),
    }
}

/// Splits `Q` into per-register degree-one parts; see [`RegisterConcentration`].
pub fn register_concentration(q: &HermitianOperator, m: usize) -> Result<RegisterConcentration> {
    let e = expand_local(q, m)?;
    let (n, s) = (e.n, m * m);
    let basis = e.basis.clone();
    let mut weights = vec![0.0; n];
    let mut locals = vec![CMat::zeros(m, m); n];
    for (x, &v) in e.coeffs.iter().enumerate() {
        if v == 0.0 || degree(x, m, n) != 1 {
            continue;
        }
        let digits = index_digits(x, s, n);
        let j = digits.iter().position(|&d| d != 0).expect("degree one");
        weights[j] += v * v;
        locals[j] += basis.element(digits[j]) * crate::linalg::r(v);
    }
    let weights: Vec<f64> = weights.into_iter().map(f64::sqrt).collect();
    let local_operators = locals
        .into_iter()
        .zip(&weights)
        .map(|(l, &a)| {
            if a > CONCENTRATION_FLOOR {
                HermitianOperator::symmetrized(l * crate::linalg::r(1.0 / a))
            } else {
                HermitianOperator::zeros(m)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let top = weights[order[0]];
    let k = (top > CONCENTRATION_FLOOR).then_some(order[0] + 1);
    let margin = if n > 1 { top - weights[order[1]] } else { top };
    let residual = (e.parseval_total() - top * top).max(0.0).sqrt();
    Ok(RegisterConcentration {
        k,
        weights,
        margin,
        residual,
        local_operators,
    })
}

/// `hs_distance(Delta_rho(Q), rho Q)` with the depolarizing channel acting on
/// registers of local dimension `m`.
pub fn observable_scaling_residual(q: &HermitianOperator, rho: f64, m: usize) -> Result<f64> {
    let e = expand_local(q, m)?;
    let mass: f64 = e
        .coeffs
        .iter()
        .enumerate()
        .map(|(x, v)| {
            let f = rho.powi(degree(x, m, e.n) as i32) - rho;
            f * f * v * v
        })
        .sum();
    Ok(mass.sqrt())
}

/// Vote of one observable in the register consensus.
#[derive(Clone, Debug, Serialize)]
pub struct RegisterVote {
    pub label: String,
    #[serde(flatten)]
    pub concentration: RegisterConcentration,
}

/// Majority over the votes; ties go to the register with the larger total weight.
/// Returns the winner and whether any vote disagreed.
pub fn consensus_register(votes: &[RegisterVote]) -> (Option<usize>, bool) {
    let mut tally: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for v in votes {
        if let Some(k) = v.concentration.k {
            let entry = tally.entry(k).or_default();
            entry.0 += 1;
            entry.1 += v.concentration.weights[k - 1];
        }
    }
    let winner = tally
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(a.1 .1.total_cmp(&b.1 .1)))
        .map(|(&k, _)| k);
    let ambiguous = tally.len() > 1 || votes.iter().any(|v| v.concentration.k.is_none());
    (winner, ambiguous)
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfTestReport {
    pub game: Game,
    pub rho: f64,
    /// `1/(1 - rho)`, the noise amplification factor of the robustness bounds.
    pub gamma: Option<f64>,
    /// Optimal value minus achieved value.
    #[serde(rename = "epsV")]
    pub eps_v: f64,
    #[serde(rename = "epsTr")]
    pub eps_tr: f64,
    #[serde(rename = "scalingResiduals")]
    pub scaling_residuals: Vec<Labeled>,
    #[serde(rename = "antiCommutators")]
    pub anti_commutators: Vec<Labeled>,
    pub commutators: Vec<Labeled>,
    /// Distances between operators the optimal relations identify.
    #[serde(rename = "relationDistances")]
    pub relation_distances: Vec<Labeled>,
    /// Consensus registers (1-based): `[k]`, `[k1, k2]`, `[l]` or `[s_1..s_n]`.
    #[serde(rename = "registerIndices")]
    pub register_indices: Vec<Option<usize>>,
    #[serde(rename = "registerVotes")]
    pub register_votes: Vec<RegisterVote>,
    #[serde(rename = "registerAmbiguous")]
    pub register_ambiguous: bool,
    #[serde(rename = "extractionUnitaries")]
    pub extraction_unitaries: Vec<LabeledMatrix>,
    #[serde(rename = "pauliDistances")]
    pub pauli_distances: Vec<Labeled>,
    /// Auxiliary numbers (values, margins, masses).
    pub diagnostics: Vec<Labeled>,
    pub flags: Vec<String>,
}

impl SelfTestReport {
    fn new(game: Game, rho: f64) -> Self {
        Self {
            game,
            rho,
            gamma: (rho < 1.0).then(|| 1.0 / (1.0 - rho)),
            eps_v: 0.0,
            eps_tr: 0.0,
            scaling_residuals: Vec::new(),
            anti_commutators: Vec::new(),
            commutators: Vec::new(),
            relation_distances: Vec::new(),
            register_indices: Vec::new(),
            register_votes: Vec::new(),
            register_ambiguous: false,
            extraction_unitaries: Vec::new(),
            pauli_distances: Vec::new(),
            diagnostics: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Largest entry among every field that vanishes at an exact optimum:
    /// scaling residuals, (anti-)commutator witnesses, relation distances and
    /// post-unitary Pauli distances.
    pub fn max_distance(&self) -> f64 {
        self.scaling_residuals
            .iter()
            .chain(&self.anti_commutators)
            .chain(&self.commutators)
            .chain(&self.relation_distances)
            .chain(&self.pauli_distances)
            .map(|l| l.value)
            .fold(0.0, f64::max)
    }

    pub fn diagnostic(&self, label: &str) -> Option<f64> {
        self.diagnostics.iter().find(|l| l.label == label).map(|l| l.value)
    }
}

fn check_rho_open(rho: f64) -> Result<()> {
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

fn pauli_op(k: usize) -> HermitianOperator {
    HermitianOperator::symmetrized(pauli_matrices()[k].clone())
}

fn hs(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
    crate::pauli::hs_distance(a, b).expect("same dimension")
}

fn normalized(a: &HermitianOperator) -> HermitianOperator {
    let norm = crate::pauli::hs_norm(a.matrix());
    if norm > CONCENTRATION_FLOOR {
        a.scale(1.0 / norm)
    } else {
        a.clone()
    }
}

fn vote(label: impl Into<String>, q: &HermitianOperator, m: usize) -> Result<RegisterVote> {
    Ok(RegisterVote {
        label: label.into(),
        concentration: register_concentration(q, m)?,
    })
}

/// Local part of `op` on register `k` (1-based), renormalized.
fn local_on(op: &HermitianOperator, m: usize, k: Option<usize>) -> Result<HermitianOperator> {
    let rc = register_concentration(op, m)?;
    Ok(match k {
        Some(k) => rc.local_operators[k - 1].clone(),
        None => HermitianOperator::zeros(m),
    })
}

/// Extraction for a qubit CHSH pair `(A, B)` mapped onto `(Z, X)`.
fn qubit_pair_extraction(
    report: &mut SelfTestReport,
    who: &str,
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<PairUnitary> {
    let pu = pauli_pair_unitary(a, b)?;
    if pu.degenerate {
        report.flags.push(format!("{who}: degenerate pair rotation"));
    }
    report.extraction_unitaries.push(LabeledMatrix {
        label: who.to_string(),
        matrix: MatrixJson::from_matrix(&pu.u),
    });
    Ok(pu)
}

/// Shared CHSH extraction on observables already expressed in a frame where
/// the state has diagonal correlations. Fills anti-commutators, relations,
/// votes and Pauli distances; returns the consensus registers `(alice, bob)`.
fn chsh_extraction_core(
    report: &mut SelfTestReport,
    s: &ChshStrategy,
    separate_players: bool,
) -> Result<(Option<usize>, Option<usize>)> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    report.anti_commutators.push(lab("{P0,P1}", anticommutator_norm(&s.p[0], &s.p[1])?));
    report.anti_commutators.push(lab("{Q0,Q1}", anticommutator_norm(&s.q[0], &s.q[1])?));
    let q0t = s.q[0].transpose();
    let q1t = s.q[1].transpose();
    let plus = (&q0t + &q1t).scale(h);
    let minus = (&q0t - &q1t).scale(h);
    report.relation_distances.push(lab("P0 vs (Q0^T+Q1^T)/sqrt2", hs(&s.p[0], &plus)));
    report.relation_distances.push(lab("P1 vs (Q0^T-Q1^T)/sqrt2", hs(&s.p[1], &minus)));

    let alice_votes = vec![vote("P0", &s.p[0], 2)?, vote("P1", &s.p[1], 2)?];
    let bob_votes = vec![vote("Q0", &s.q[0], 2)?, vote("Q1", &s.q[1], 2)?];
    let (k_a, k_b, ambiguous) = if separate_players {
        let (ka, amb_a) = consensus_register(&alice_votes);
        let (kb, amb_b) = consensus_register(&bob_votes);
        (ka, kb, amb_a || amb_b)
    } else {
        let all: Vec<RegisterVote> = alice_votes.iter().chain(&bob_votes).cloned().collect();
        let (k, amb) = consensus_register(&all);
        (k, k, amb)
    };
    report.register_ambiguous |= ambiguous;
    for v in alice_votes.iter().chain(&bob_votes) {
        report.diagnostics.push(lab(format!("{} concentration residual", v.label), v.concentration.residual));
        report.diagnostics.push(lab(format!("{} concentration margin", v.label), v.concentration.margin));
    }
    report.register_votes.extend(alice_votes);
    report.register_votes.extend(bob_votes);

    // Alice: (P0, P1) -> (Z, X).
    let lp0 = local_on(&s.p[0], 2, k_a)?;
    let lp1 = local_on(&s.p[1], 2, k_a)?;
    let pa = qubit_pair_extraction(report, "alice", &lp0, &lp1)?;
    report.pauli_distances.push(lab("U P0 U* vs Z", pa.dist_z));
    report.pauli_distances.push(lab("U P1 U* vs X", pa.dist_x));
    // Bob: ((Q0+Q1), (Q0-Q1)) normalized -> (Z, X); then Q0, Q1 vs (Z +- X)/sqrt2.
    let lq0 = local_on(&s.q[0], 2, k_b)?;
    let lq1 = local_on(&s.q[1], 2, k_b)?;
    let sum = normalized(&(&lq0 + &lq1));
    let diff = normalized(&(&lq0 - &lq1));
    let pb = qubit_pair_extraction(report, "bob", &sum, &diff)?;
    let z = pauli_op(3);
    let x = pauli_op(1);
    let t0 = (&z + &x).scale(h);
    let t1 = (&z - &x).scale(h);
    report.pauli_distances.push(lab("V Q0 V* vs (Z+X)/sqrt2", hs(&lq0.conjugate_by(&pb.u), &t0)));
    report.pauli_distances.push(lab("V Q1 V* vs (Z-X)/sqrt2", hs(&lq1.conjugate_by(&pb.u), &t1)));
    Ok((k_a, k_b))
}

/// Self-test of a CHSH strategy on `Phi_rho^{(x) n}`.
pub fn chsh_selftest(s: &ChshStrategy, rho: f64) -> Result<SelfTestReport> {
    check_rho_open(rho)?;
    let mut report = SelfTestReport::new(Game::Chsh, rho);
    let value = chsh_violation(s, &Noise::Depolarizing(rho))?.violation;
    report.eps_v = 2.0 * 2f64.sqrt() * rho - value;
    report.eps_tr = trace_error(s);
    report.diagnostics.push(lab("violation", value));
    for (name, op) in s.observables() {
        report
            .scaling_residuals
            .push(lab(name, observable_scaling_residual(op, rho, 2)?));
    }
    let (k, _) = chsh_extraction_core(&mut report, s, false)?;
    report.register_indices = vec![k];
    Ok(report)
}

/// `W^{(x) n} A W^{(x) n *}`.
fn transport(a: &HermitianOperator, w: &CMat, n: usize) -> HermitianOperator {
    let big = kron_all(std::iter::repeat_n(w, n));
    a.conjugate_by(&big)
}

/// Self-test under a channel whose correlation spectrum is `(1, r, r, c)`.
/// Observables are moved into the frame where the state has correlations
/// `diag(1, r, r, c)` in the (Pauli, transposed Pauli) bases; registers are
/// located separately for each player.
pub fn general_noise_selftest(s: &ChshStrategy, spectrum: &CorrelationSpectrum) -> Result<SelfTestReport> {
    let sv = &spectrum.singular_values;
    if sv.len() != 4 {
        return Err(Error::UnsupportedNoise(format!("expected a qubit spectrum, got {} values", sv.len())));
    }
    let (r_val, c_val) = (sv[1], sv[3]);
    if (sv[1] - sv[2]).abs() > 1e-8 {
        return Err(Error::UnsupportedNoise(format!(
            "c2 = {} and c3 = {} differ; the top two correlations must coincide",
            sv[1], sv[2]
        )));
    }
    if !(c_val > 0.0 && r_val < 1.0) {
        return Err(Error::UnsupportedNoise(format!(
            "need 0 < c <= r < 1, got r = {r_val}, c = {c_val}"
        )));
    }
    let canon = crate::states::canonicalize_to_epr(&spectrum.basis_a, &spectrum.basis_b)?;
    let mut report = SelfTestReport::new(Game::Chsh, r_val);
    report.diagnostics.push(lab("r", r_val));
    report.diagnostics.push(lab("c", c_val));
    report.diagnostics.push(lab("epr fidelity after canonicalization", canon.epr_fidelity));
    report.diagnostics.push(lab("y sign A", canon.y_sign_a as f64));
    report.diagnostics.push(lab("y sign B", canon.y_sign_b as f64));
    if !canon.is_epr {
        report.flags.push("canonical frame does not reassemble the EPR pair; correlations are not diagonal in it".into());
    }
    let n = s.n;
    let moved = ChshStrategy::new(
        n,
        [transport(&s.p[0], &canon.u, n), transport(&s.p[1], &canon.u, n)],
        [transport(&s.q[0], &canon.v, n), transport(&s.q[1], &canon.v, n)],
    )?;
    let value = chsh_violation(&moved, &Noise::general(r_val, c_val))?.violation;
    report.eps_v = 2.0 * 2f64.sqrt() * r_val - value;
    report.eps_tr = trace_error(s);
    report.diagnostics.push(lab("violation", value));
    if value <= 2.0 {
        report.flags.push(format!("violation {value:.6} <= 2: no nonlocality witnessed"));
    }
    for (name, op) in moved.observables() {
        let e = expand_pauli(op)?;
        let scaled = apply_general_scaling(&e, r_val, c_val)?.reconstruct();
        report.scaling_residuals.push(lab(name, hs(&scaled, &op.scale(r_val))));
    }
    let (k1, k2) = chsh_extraction_core(&mut report, &moved, true)?;
    report.register_indices = vec![k1, k2];
    Ok(report)
}

fn two_qubit_target(ab: (usize, usize)) -> HermitianOperator {
    let p = pauli_matrices();
    HermitianOperator::symmetrized(crate::linalg::kron(&p[ab.0], &p[ab.1]))
}

/// Self-test of a Magic Square strategy on `(Phi_rho^{(2)})^{(x) n}`.
pub fn ms_selftest(s: &MagicSquareStrategy, rho: f64) -> Result<SelfTestReport> {
    check_rho_open(rho)?;
    let mut report = SelfTestReport::new(Game::MagicSquare, rho);
    let value = magic_square_value(s, rho)?;
    report.eps_v = (1.0 + rho) / 2.0 - value.overall;
    report.eps_tr = trace_error(s);
    report.diagnostics.push(lab("overall", value.overall));
    report.diagnostics.push(lab("parityPass", value.parity_pass));
    report.diagnostics.push(lab("consistencyPass", value.consistency_pass));

    let d = s.dim();
    let id = CMat::identity(d, d);
    let mut rows: Vec<Vec<HermitianOperator>> = vec![Vec::new(); 3];
    let mut cols: Vec<Vec<HermitianOperator>> = vec![Vec::new(); 3];
    for i in 0..3 {
        for j in 0..3 {
            let (row, col) = s.row_col_observables(i, j);
            let tag = format!("{}{}", i + 1, j + 1);
            report.relation_distances.push(lab(format!("P^row_{tag} vs P^col_{tag}"), hs(&row, &col)));
            report.relation_distances.push(lab(format!("P^row_{tag} vs Q_{tag}^T"), hs(&row, &s.bob[i][j].transpose())));
            report.scaling_residuals.push(lab(format!("Q_{tag}"), observable_scaling_residual(&s.bob[i][j], rho, 4)?));
            rows[i].push(row);
            cols[i].push(col);
        }
    }
    for i in 0..3 {
        for (j, jj) in [(0, 1), (0, 2), (1, 2)] {
            report.commutators.push(lab(
                format!("[P_{}{}, P_{}{}] (row)", i + 1, j + 1, i + 1, jj + 1),
                commutator_norm(&rows[i][j], &rows[i][jj])?,
            ));
            report.commutators.push(lab(
                format!("[P_{}{}, P_{}{}] (column)", j + 1, i + 1, jj + 1, i + 1),
                commutator_norm(&cols[j][i], &cols[jj][i])?,
            ));
        }
        let row_prod = rows[i][0].matrix() * rows[i][1].matrix() * rows[i][2].matrix();
        report.relation_distances.push(lab(
            format!("P_{0}1 P_{0}2 P_{0}3 vs I", i + 1),
            crate::pauli::hs_norm(&(row_prod - &id)),
        ));
        let sign = crate::linalg::r(f64::from(MsQuestion::Col(i).parity()));
        let col_prod = cols[0][i].matrix() * cols[1][i].matrix() * cols[2][i].matrix();
        report.relation_distances.push(lab(
            format!("P_1{0} P_2{0} P_3{0} vs {1}I", i + 1, if i == 2 { "-" } else { "" }),
            crate::pauli::hs_norm(&(col_prod - &id * sign)),
        ));
    }
    for a in 0..9 {
        for b in a + 1..9 {
            let (i, j) = (a / 3, a % 3);
            let (ii, jj) = (b / 3, b % 3);
            if i != ii && j != jj {
                report.anti_commutators.push(lab(
                    format!("{{P_{}{}, P_{}{}}}", i + 1, j + 1, ii + 1, jj + 1),
                    anticommutator_norm(&rows[i][j], &rows[ii][jj])?,
                ));
            }
        }
    }
    let mut wrong_parity = 0.0f64;
    for q in MsQuestion::ALL {
        let rep = povm_projectivity_report(s.povm(q).elements(), Some(q.parity() as i8));
        let mass = rep.wrong_parity_mass.unwrap_or(0.0);
        wrong_parity = wrong_parity.max(mass);
        report.diagnostics.push(lab(format!("{} wrong parity mass", q.label()), mass));
    }
    if wrong_parity > 1e-9 {
        report.flags.push(format!("parity failure: wrong-parity mass up to {wrong_parity:.6}"));
    }

    let mut votes = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            votes.push(vote(format!("P_{}{}", i + 1, j + 1), &rows[i][j], 4)?);
            votes.push(vote(format!("Q_{}{}", i + 1, j + 1), &s.bob[i][j].transpose(), 4)?);
        }
    }
    let (l, ambiguous) = consensus_register(&votes);
    report.register_ambiguous = ambiguous;
    report.register_votes = votes;
    report.register_indices = vec![l];

    // Table targets: P11 = X(x)I, P22 = Z(x)I, P12 = I(x)X, P21 = I(x)Z.
    let la = |i: usize, j: usize| local_on(&rows[i][j], 4, l);
    let lu = ms_local_unitary(&la(1, 1)?, &la(0, 0)?, &la(0, 1)?)?;
    if lu.near_singular {
        report.flags.push("near-singular off-diagonal block in local unitary".into());
    }
    report.diagnostics.push(lab("min block singular value", lu.block_singular_values.iter().copied().fold(f64::INFINITY, f64::min)));
    let u = align_second_factor(&lu.u, &la(1, 0)?)?;
    report.extraction_unitaries.push(LabeledMatrix {
        label: "U".into(),
        matrix: MatrixJson::from_matrix(&u),
    });
    let table = crate::games::magic_square::TABLE;
    for i in 0..3 {
        for j in 0..3 {
            let target = two_qubit_target(table[i][j]);
            let alice = la(i, j)?.conjugate_by(&u);
            report.pauli_distances.push(lab(format!("U P_{}{} U* vs table", i + 1, j + 1), hs(&alice, &target)));
            let bob = local_on(&s.bob[i][j].transpose(), 4, l)?.conjugate_by(&u);
            report.pauli_distances.push(lab(format!("conj(U) Q_{}{} U^T vs table^T", i + 1, j + 1), hs(&bob, &target)));
        }
    }
    Ok(report)
}

/// Self-test of a 2-out-of-n strategy on `Phi_rho^{(x) n'}`.
pub fn two_out_of_n_selftest(s: &TwoOutOfNStrategy, rho: f64) -> Result<SelfTestReport> {
    check_rho_open(rho)?;
    let n = s.n;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut report = SelfTestReport::new(Game::TwoOutOfN, rho);
    let value = two_out_of_n_value(s, rho)?;
    let optimum = 0.5 + 2f64.sqrt() * rho / 4.0;
    report.eps_v = optimum - value.report.win_prob;
    report.eps_tr = trace_error(s);
    report.diagnostics.push(lab("winProb", value.report.win_prob));
    let mut worst_pair_gap = 0.0f64;
    for pv in &value.per_pair {
        let gap = optimum - pv.win_prob;
        worst_pair_gap = worst_pair_gap.max(gap);
        report.diagnostics.push(lab(format!("pair ({},{}) gap", pv.i, pv.j), gap));
    }
    // The overall gap averages n(n-1)/2 pair gaps; their sum bounds any one by
    // (n(n-1)/2) epsV, which is the aggregation the per-index claims use.
    report.diagnostics.push(lab("max pair gap", worst_pair_gap));
    report.diagnostics.push(lab("pair count x epsV", (n * (n - 1) / 2) as f64 * report.eps_v));

    for (player, tag, other) in [(Player::Alice, "P", Player::Bob), (Player::Bob, "Q", Player::Alice)] {
        let singles = s.singles(player);
        for i in 0..n {
            report.anti_commutators.push(lab(
                format!("{{{tag}_{0},0, {tag}_{0},1}}", i + 1),
                anticommutator_norm(&singles[i][0], &singles[i][1])?,
            ));
            report
                .scaling_residuals
                .push(lab(format!("{tag}_{},0", i + 1), observable_scaling_residual(&singles[i][0], rho, 2)?));
            report
                .scaling_residuals
                .push(lab(format!("{tag}_{},1", i + 1), observable_scaling_residual(&singles[i][1], rho, 2)?));
            for j in i + 1..n {
                for u in 0..2 {
                    for v in 0..2 {
                        report.commutators.push(lab(
                            format!("[{tag}_{},{u}, {tag}_{},{v}]", i + 1, j + 1),
                            commutator_norm(&singles[i][u], &singles[j][v])?,
                        ));
                    }
                }
            }
        }
        // The other player's marginals against this player's singles.
        let other_tag = if tag == "P" { "R_B" } else { "R_A" };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for y in 0..2 {
                    let sign = if y == 0 { 1.0 } else { -1.0 };
                    let target = (&singles[i][0] + &singles[i][1].scale(sign)).scale(h).transpose();
                    for z in 0..2 {
                        let marginal = s.pair_marginal(other, i, y, j, z);
                        report.relation_distances.push(lab(
                            format!("{other_tag}^{{{0}{y}|({0}{y},{1}{z})}} vs ({tag}_{0},0 {2} {tag}_{0},1)^T/sqrt2", i + 1, j + 1, if y == 0 { "+" } else { "-" }),
                            hs(&marginal, &target),
                        ));
                    }
                }
            }
        }
    }

    // Register per index from Alice's and Bob's singles.
    let mut assignment = Vec::with_capacity(n);
    for i in 0..n {
        let votes = vec![
            vote(format!("P_{},0", i + 1), &s.alice_singles[i][0], 2)?,
            vote(format!("P_{},1", i + 1), &s.alice_singles[i][1], 2)?,
            vote(format!("Q_{},0", i + 1), &s.bob_singles[i][0], 2)?,
            vote(format!("Q_{},1", i + 1), &s.bob_singles[i][1], 2)?,
        ];
        let (k, amb) = consensus_register(&votes);
        report.register_ambiguous |= amb;
        report.register_votes.extend(votes);
        assignment.push(k);
    }
    let mut distinct = assignment.iter().all(Option::is_some);
    for i in 0..n {
        for j in i + 1..n {
            if assignment[i].is_some() && assignment[i] == assignment[j] {
                distinct = false;
                let k = assignment[i];
                // Fact: on one qubit, an anti-commuting pair leaves no direction
                // commuting with both, so the shared-register Bloch vectors of
                // index j cannot be parallel to those of index i.
                let mut worst_cross = 0.0f64;
                for u in 0..2 {
                    for v in 0..2 {
                        let a = local_on(&s.alice_singles[i][u], 2, k)?;
                        let b = local_on(&s.alice_singles[j][v], 2, k)?;
                        worst_cross = worst_cross.max(bloch_relation(&a, &b)?.cross_norm);
                    }
                }
                report.diagnostics.push(lab(format!("conflict ({},{}) local cross norm", i + 1, j + 1), worst_cross));
                report.flags.push(format!("indices {} and {} share register {}", i + 1, j + 1, k.expect("some")));
            }
        }
    }
    report.diagnostics.push(lab("registers distinct", if distinct { 1.0 } else { 0.0 }));
    if !distinct {
        report.flags.push("register assignment is not injective".into());
    }
    report.register_indices = assignment.clone();

    for i in 0..n {
        let k = assignment[i];
        let a0 = local_on(&s.alice_singles[i][0], 2, k)?;
        let a1 = local_on(&s.alice_singles[i][1], 2, k)?;
        let pu = qubit_pair_extraction(&mut report, &format!("index {}", i + 1), &a0, &a1)?;
        report.pauli_distances.push(lab(format!("U_{0} P_{0},0 U_{0}* vs Z", i + 1), pu.dist_z));
        report.pauli_distances.push(lab(format!("U_{0} P_{0},1 U_{0}* vs X", i + 1), pu.dist_x));
    }
    Ok(report)
}

/// Whether the report's register assignment is injective (2-out-of-n).
pub fn registers_distinct(report: &SelfTestReport) -> bool {
    report.diagnostic("registers distinct") == Some(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{
        canonical_chsh_strategy, canonical_magic_square_strategy, canonical_two_out_of_n_strategy,
    };
    use crate::states::{bit_phase_flip_state, diagonalize_correlation, make_depolarized_epr, RegisterKind};

    fn z() -> HermitianOperator {
        pauli_op(3)
    }

    #[test]
    fn concentration_examples() {
        let zii = z().embed(0, 3, 2);
        let rc = register_concentration(&zii, 2).unwrap();
        assert_eq!(rc.k, Some(1));
        assert_eq!(rc.weights, vec![1.0, 0.0, 0.0]);
        assert!(rc.residual < 1e-15);

        // sqrt(0.99) Z on register 2 plus 0.1 Z(x)Z on registers 1, 2.
        let zz = HermitianOperator::symmetrized(crate::linalg::kron(z().matrix(), z().matrix())).kron(&HermitianOperator::identity(2));
        let q = &z().embed(1, 3, 2).scale(0.99f64.sqrt()) + &zz.scale(0.1);
        let rc = register_concentration(&q, 2).unwrap();
        assert_eq!(rc.k, Some(2));
        assert!((rc.residual - 0.1).abs() < 1e-12);

        let sym = (&z().embed(0, 2, 2) + &z().embed(1, 2, 2)).scale(std::f64::consts::FRAC_1_SQRT_2);
        let rc = register_concentration(&sym, 2).unwrap();
        assert!((rc.weights[0] - rc.weights[1]).abs() < 1e-15);
        assert!(rc.margin.abs() < 1e-15);

        let none = register_concentration(&HermitianOperator::identity(4), 2).unwrap();
        assert_eq!(none.k, None);
    }

    #[test]
    fn scaling_residual_examples() {
        assert!(observable_scaling_residual(&z(), 0.6, 2).unwrap() < 1e-15);
        let zz = HermitianOperator::symmetrized(crate::linalg::kron(z().matrix(), z().matrix()));
        assert!((observable_scaling_residual(&zz, 0.5, 2).unwrap() - 0.25).abs() < 1e-15);
        let id = HermitianOperator::identity(2);
        assert!((observable_scaling_residual(&id, 0.3, 2).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn canonical_chsh_selftest_is_exact() {
        let s = canonical_chsh_strategy(3, 2).unwrap();
        let rep = chsh_selftest(&s, 0.7).unwrap();
        assert_eq!(rep.register_indices, vec![Some(2)]);
        assert!(rep.eps_v.abs() < 1e-12);
        assert!(rep.max_distance() < 1e-9, "{}", rep.max_distance());
        assert!(!rep.register_ambiguous);
    }

    #[test]
    fn rotated_bob_distances_shrink() {
        let mut prev = f64::INFINITY;
        for theta in [0.3, 0.1, 0.03] {
            let s = crate::games::chsh::rotated_bob_strategy(3, 2, theta).unwrap();
            let rep = chsh_selftest(&s, 0.7).unwrap();
            assert_eq!(rep.register_indices, vec![Some(2)]);
            assert!(rep.eps_v > 0.0);
            assert!(rep.max_distance() < prev);
            prev = rep.max_distance();
        }
    }

    #[test]
    fn canonical_ms_selftest_is_exact() {
        for (n, l) in [(1, 1), (2, 1), (2, 2)] {
            let s = canonical_magic_square_strategy(n, l).unwrap();
            let rep = ms_selftest(&s, 0.6).unwrap();
            assert_eq!(rep.register_indices, vec![Some(l)]);
            assert!(rep.eps_v.abs() < 1e-12);
            assert!(rep.max_distance() < 1e-9, "n={n} l={l}: {}", rep.max_distance());
            assert!(rep.flags.is_empty(), "{:?}", rep.flags);
        }
    }

    #[test]
    fn uniform_alice_povm_flags_parity() {
        let mut s = canonical_magic_square_strategy(1, 1).unwrap();
        let uniform = crate::games::Povm::new(vec![HermitianOperator::identity(4).scale(0.125); 8]).unwrap();
        s.alice[0] = uniform;
        let rep = ms_selftest(&s, 0.6).unwrap();
        assert!((rep.diagnostic("r1 wrong parity mass").unwrap() - 0.5).abs() < 1e-12);
        assert!(rep.flags.iter().any(|f| f.starts_with("parity failure")));
    }

    #[test]
    fn canonical_two_out_of_n_selftest() {
        let s = canonical_two_out_of_n_strategy(3, 3, &[1, 2, 3]).unwrap();
        let rep = two_out_of_n_selftest(&s, 0.7).unwrap();
        assert_eq!(rep.register_indices, vec![Some(1), Some(2), Some(3)]);
        assert!(registers_distinct(&rep));
        assert!(rep.max_distance() < 1e-9, "{}", rep.max_distance());
    }

    #[test]
    fn shared_register_conflict_is_reported() {
        let s = canonical_two_out_of_n_strategy(2, 2, &[1, 1]).unwrap();
        let rep = two_out_of_n_selftest(&s, 0.7).unwrap();
        assert!(!registers_distinct(&rep));
        let cross = rep.diagnostic("conflict (1,2) local cross norm").unwrap();
        assert!(cross > 0.5);
        assert!(rep.eps_v > 1e-3);
    }

    #[test]
    fn general_noise_bit_phase_flip() {
        let rho = 0.8;
        let state = bit_phase_flip_state(rho).unwrap();
        let spectrum = diagonalize_correlation(&state).unwrap();
        let s = canonical_chsh_strategy(1, 1).unwrap();
        let rep = general_noise_selftest(&s, &spectrum).unwrap();
        let v = rep.diagnostic("violation").unwrap();
        assert!((v - 2.0 * 2f64.sqrt() * rho).abs() < 1e-9);
        assert!(rep.max_distance() < 1e-9, "{}", rep.max_distance());
        // The canonical-frame value matches the explicit state.
        let explicit = chsh_violation(&s, &Noise::State(state)).unwrap().violation;
        assert!((explicit - v).abs() < 1e-9);
    }

    #[test]
    fn general_noise_reduces_to_depolarizing() {
        let rho = 0.7;
        let state = make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap();
        let spectrum = diagonalize_correlation(&state).unwrap();
        let s = crate::games::chsh::rotated_bob_strategy(1, 1, 0.2).unwrap();
        let general = general_noise_selftest(&s, &spectrum).unwrap();
        let plain = chsh_selftest(&s, rho).unwrap();
        assert!((general.eps_v - plain.eps_v).abs() < 1e-9);
        let canonical = canonical_chsh_strategy(1, 1).unwrap();
        assert!(general_noise_selftest(&canonical, &spectrum).unwrap().max_distance() < 1e-9);
    }

    #[test]
    fn unequal_spectrum_rejected() {
        let pauli = crate::pauli::StandardBasis::pauli();
        let m = crate::states::state_from_correlations(&pauli, &pauli.transposed(), &[1.0, 0.8, 0.5, 0.3]);
        let state = crate::states::BipartiteState::new(2, 2, HermitianOperator::symmetrized(m)).unwrap();
        let spectrum = diagonalize_correlation(&state).unwrap();
        let s = canonical_chsh_strategy(1, 1).unwrap();
        assert!(matches!(general_noise_selftest(&s, &spectrum), Err(Error::UnsupportedNoise(_))));
    }
}
