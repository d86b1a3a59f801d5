use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{check_dim, validation, Result};
use crate::games::{
    check_observable, correlator, pair_answers, GameValueReport, Povm, QuestionValue, TraceError,
};
use crate::linalg::{r, HermitianOperator};
use crate::pauli::{degree_weights, expand_pauli, pauli_matrices, PauliExpansion};

/// Pair question `{(i, y), (j, z)}` with `i < j` (0-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PairKey {
    pub i: usize,
    pub j: usize,
    pub y: usize,
    pub z: usize,
}

impl PairKey {
    /// Key for the unordered question `{(a, qa), (b, qb)}` and the side holding index `a`.
    pub fn ordered(a: usize, qa: usize, b: usize, qb: usize) -> (Self, PairSide) {
        if a < b {
            (PairKey { i: a, j: b, y: qa, z: qb }, PairSide::First)
        } else {
            (PairKey { i: b, j: a, y: qb, z: qa }, PairSide::Second)
        }
    }

    pub fn all(n: usize) -> Vec<PairKey> {
        let mut keys = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for y in 0..2 {
                    for z in 0..2 {
                        keys.push(PairKey { i, j, y, z });
                    }
                }
            }
        }
        keys
    }

    pub fn label(&self) -> String {
        format!("{{({},{}),({},{})}}", self.i + 1, self.y, self.j + 1, self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PairSide {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Player {
    Alice,
    Bob,
}

/// Single-index observables and pair POVMs for both players, on `n_prime`
/// qubit registers. Pair POVM outcomes follow [`pair_answers`].
#[derive(Clone, Debug, PartialEq)]
pub struct TwoOutOfNStrategy {
    pub n: usize,
    pub n_prime: usize,
    pub alice_singles: Vec<[HermitianOperator; 2]>,
    pub bob_singles: Vec<[HermitianOperator; 2]>,
    pub alice_pairs: BTreeMap<PairKey, Povm>,
    pub bob_pairs: BTreeMap<PairKey, Povm>,
}

impl TwoOutOfNStrategy {
    pub fn new(
        n: usize,
        n_prime: usize,
        alice_singles: Vec<[HermitianOperator; 2]>,
        bob_singles: Vec<[HermitianOperator; 2]>,
        alice_pairs: BTreeMap<PairKey, Povm>,
        bob_pairs: BTreeMap<PairKey, Povm>,
    ) -> Result<Self> {
        if n < 2 {
            return validation("need at least two indices");
        }
        if n_prime < n {
            return validation(format!("register count {n_prime} is below index count {n}"));
        }
        let d = 1usize << n_prime;
        for (singles, who) in [(&alice_singles, "Alice"), (&bob_singles, "Bob")] {
            if singles.len() != n {
                return validation(format!("{who} has {} single observables pairs, expected {n}", singles.len()));
            }
            for (i, pair) in singles.iter().enumerate() {
                for (x, op) in pair.iter().enumerate() {
                    check_dim(d, op.dim())?;
                    check_observable(op, &format!("{who} single ({}, {x})", i + 1))?;
                }
            }
        }
        for (pairs, who) in [(&alice_pairs, "Alice"), (&bob_pairs, "Bob")] {
            for key in PairKey::all(n) {
                let Some(povm) = pairs.get(&key) else {
                    return validation(format!("{who} has no POVM for pair question {}", key.label()));
                };
                if povm.len() != 4 {
                    return validation(format!("{who} POVM {} needs 4 outcomes", key.label()));
                }
                check_dim(d, povm.dim())?;
            }
            if pairs.len() != PairKey::all(n).len() {
                return validation(format!("{who} has POVMs for unknown pair questions"));
            }
        }
        Ok(Self {
            n,
            n_prime,
            alice_singles,
            bob_singles,
            alice_pairs,
            bob_pairs,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_prime
    }

    pub fn singles(&self, player: Player) -> &[[HermitianOperator; 2]] {
        match player {
            Player::Alice => &self.alice_singles,
            Player::Bob => &self.bob_singles,
        }
    }

    pub fn pairs(&self, player: Player) -> &BTreeMap<PairKey, Povm> {
        match player {
            Player::Alice => &self.alice_pairs,
            Player::Bob => &self.bob_pairs,
        }
    }

    /// `R^{a qa | (a qa, b qb)}`: the marginal observable for index `a`.
    pub fn pair_marginal(&self, player: Player, a: usize, qa: usize, b: usize, qb: usize) -> HermitianOperator {
        let (key, side) = PairKey::ordered(a, qa, b, qb);
        marginal_pair_observable(&self.pairs(player)[&key], side).expect("validated POVM")
    }
}

impl TraceError for TwoOutOfNStrategy {
    fn trace_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for player in [Player::Alice, Player::Bob] {
            for pair in self.singles(player) {
                for op in pair {
                    worst = worst.max(op.normalized_trace().abs());
                }
            }
            for povm in self.pairs(player).values() {
                for side in [PairSide::First, PairSide::Second] {
                    let m = marginal_pair_observable(povm, side).expect("validated POVM");
                    worst = worst.max(m.normalized_trace().abs());
                }
            }
        }
        worst
    }
}

/// `E_{1,1} + E_{1,-1} - E_{-1,1} - E_{-1,-1}` (first) or the analogue for the second answer.
pub fn marginal_pair_observable(povm: &Povm, side: PairSide) -> Result<HermitianOperator> {
    if povm.len() != 4 {
        return validation(format!("expected a 4-outcome POVM, got {} outcomes", povm.len()));
    }
    let slot = match side {
        PairSide::First => 0,
        PairSide::Second => 1,
    };
    let mut out = HermitianOperator::zeros(povm.dim());
    for (o, e) in povm.elements().iter().enumerate() {
        out = &out + &e.scale(pair_answers(o)[slot] as f64);
    }
    Ok(out)
}

/// `{E_{a,b}} = {(I + aA)/2 (I + bB)/2}` for commuting observables `A`, `B`.
pub fn product_pair_povm(a: &HermitianOperator, b: &HermitianOperator) -> Result<Povm> {
    let id = HermitianOperator::identity(a.dim());
    let elements = (0..4)
        .map(|o| {
            let [sa, sb] = pair_answers(o);
            let fa = (&id + &a.scale(sa as f64)).scale(0.5);
            let fb = (&id + &b.scale(sb as f64)).scale(0.5);
            HermitianOperator::symmetrized(fa.matrix() * fb.matrix())
        })
        .collect();
    Povm::new(elements)
}

fn local_chsh_ops() -> [HermitianOperator; 4] {
    let p = pauli_matrices();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        HermitianOperator::symmetrized(p[3].clone()),
        HermitianOperator::symmetrized(p[1].clone()),
        HermitianOperator::symmetrized((&p[3] + &p[1]) * r(s)),
        HermitianOperator::symmetrized((&p[3] - &p[1]) * r(s)),
    ]
}

/// Index `i` played on register `registers[i]` (1-based) of `n_prime`:
/// singles `Z`, `X`; pair POVMs from the spectral projectors of `(Z +- X)/sqrt 2`.
/// When two indices share a register their pair POVM answers the second
/// index uniformly at random (the two local operators would not commute).
pub fn canonical_two_out_of_n_strategy(
    n: usize,
    n_prime: usize,
    registers: &[usize],
) -> Result<TwoOutOfNStrategy> {
    if registers.len() != n {
        return validation(format!("need {n} register assignments, got {}", registers.len()));
    }
    if let Some(bad) = registers.iter().find(|&&k| k == 0 || k > n_prime) {
        return validation(format!("register {bad} out of range 1..={n_prime}"));
    }
    let local = local_chsh_ops();
    let on = |op: &HermitianOperator, i: usize| op.embed(registers[i] - 1, n_prime, 2);
    let singles: Vec<[HermitianOperator; 2]> = (0..n).map(|i| [on(&local[0], i), on(&local[1], i)]).collect();
    let mut pairs = BTreeMap::new();
    for key in PairKey::all(n) {
        let a = on(&local[2 + key.y], key.i);
        let b = if registers[key.i] == registers[key.j] {
            HermitianOperator::zeros(a.dim())
        } else {
            on(&local[2 + key.z], key.j)
        };
        pairs.insert(key, product_pair_povm(&a, &b)?);
    }
    TwoOutOfNStrategy::new(n, n_prime, singles.clone(), singles, pairs.clone(), pairs)
}

/// Canonical strategy with each of Bob's `Q_{i,0}` rotated from `Z` toward `X` by `theta`.
pub fn rotated_bob_two_out_of_n_strategy(
    n: usize,
    n_prime: usize,
    registers: &[usize],
    theta: f64,
) -> Result<TwoOutOfNStrategy> {
    let s = canonical_two_out_of_n_strategy(n, n_prime, registers)?;
    let p = pauli_matrices();
    let local = HermitianOperator::symmetrized(&p[3] * r(theta.cos()) + &p[1] * r(theta.sin()));
    let mut bob_singles = s.bob_singles.clone();
    for (i, pair) in bob_singles.iter_mut().enumerate() {
        pair[0] = local.embed(registers[i] - 1, n_prime, 2);
    }
    TwoOutOfNStrategy::new(n, n_prime, s.alice_singles, bob_singles, s.alice_pairs, s.bob_pairs)
}

#[derive(Clone, Debug, Serialize)]
pub struct PairValue {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "winProb")]
    pub win_prob: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoOutOfNValue {
    #[serde(flatten)]
    pub report: GameValueReport,
    #[serde(rename = "perPair")]
    pub per_pair: Vec<PairValue>,
}

/// Per-(role, i, j, x, y, z) pass probabilities `1/2 + (-1)^{xy} <S (x) R> / 2`;
/// `role = 0` gives Alice the single question.
pub(crate) fn round_table(s: &TwoOutOfNStrategy, rho: f64) -> Result<Vec<((usize, usize, usize, usize, usize, usize), f64)>> {
    let n = s.n;
    let w = degree_weights(2, s.n_prime, rho);
    let alice_single: Vec<[PauliExpansion; 2]> = s
        .alice_singles
        .iter()
        .map(|p| Ok([expand_pauli(&p[0])?, expand_pauli(&p[1])?]))
        .collect::<Result<_>>()?;
    let bob_single_t: Vec<[PauliExpansion; 2]> = s
        .bob_singles
        .iter()
        .map(|q| Ok([expand_pauli(&q[0].transpose())?, expand_pauli(&q[1].transpose())?]))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(2 * n * (n - 1) * 8);
    for role in 0..2 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for y in 0..2 {
                    for z in 0..2 {
                        let pair_op = match role {
                            0 => expand_pauli(&s.pair_marginal(Player::Bob, i, y, j, z).transpose())?,
                            _ => expand_pauli(&s.pair_marginal(Player::Alice, i, y, j, z))?,
                        };
                        for x in 0..2 {
                            let corr = match role {
                                0 => correlator(&alice_single[i][x], &pair_op, &w),
                                _ => correlator(&pair_op, &bob_single_t[i][x], &w),
                            };
                            let sign = if x * y == 1 { -1.0 } else { 1.0 };
                            out.push(((role, i, j, x, y, z), 0.5 + 0.5 * sign * corr));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Average pass probability over roles, ordered pairs `i != j` and CHSH questions.
pub fn two_out_of_n_value(s: &TwoOutOfNStrategy, rho: f64) -> Result<TwoOutOfNValue> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(crate::error::Error::OutOfRange {
            name: "rho",
            value: rho,
            allowed: "[0, 1]",
        });
    }
    let n = s.n;
    let table = round_table(s, rho)?;
    let per_round = 1.0 / (2.0 * (n * (n - 1)) as f64 * 8.0);
    let mut win = 0.0;
    let mut pair_sums = BTreeMap::new();
    let mut role_sums = [0.0; 2];
    for ((role, i, j, _, _, _), p) in &table {
        win += p * per_round;
        *pair_sums.entry((*i.min(j), *i.max(j))).or_insert(0.0) += p / 32.0;
        role_sums[*role] += p * per_round * 2.0;
    }
    let per_pair = pair_sums
        .into_iter()
        .map(|((i, j), v)| PairValue {
            i: i + 1,
            j: j + 1,
            win_prob: v,
        })
        .collect();
    let per_question = vec![
        QuestionValue {
            label: "alice_single".into(),
            value: role_sums[0],
        },
        QuestionValue {
            label: "bob_single".into(),
            value: role_sums[1],
        },
    ];
    let mut report = GameValueReport::from_violation(8.0 * (win - 0.5), per_question);
    report.win_prob = win;
    Ok(TwoOutOfNValue { report, per_pair })
}
