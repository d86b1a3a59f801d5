//! Monte-Carlo simulation of the game-plus-trace-test protocols under the
//! i.i.d. fresh-state assumption, and Hoeffding-based noise-rate estimation.
//!
//! Every round draws uniform referee questions and then joint answers from
//! `p(a, b) = Tr((E_a (x) F_b) state)`. For depolarizing or diagonal noise the
//! probabilities are evaluated in coefficient space; for the binary-binary
//! CHSH round this is `(1 + a Tr P + b Tr Q + ab <P (x) Q>)/4`.
//!
//! Round `r` draws from ChaCha8 stream `r / ROUND_CHUNK` of the master seed,
//! so chunks can be generated in parallel without changing any transcript.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, validation, Error, Result};
use crate::games::two_out_of_n::Player;
use crate::games::{ms_answers, pair_answers, Game, MsQuestion, Noise, PairKey, PairSide, Povm};
use crate::io::AnyStrategy;
use crate::linalg::HermitianOperator;
use crate::pauli::{expand_pauli, expand_pauli_pair, PauliExpansion};

/// Rounds drawn from one RNG stream.
pub const ROUND_CHUNK: u64 = 1024;
/// Chunks generated per parallel batch.
const CHUNKS_PER_BATCH: u64 = 16;
/// Hard stop for runs whose counters cannot fill.
pub const MAX_ROUNDS: usize = 200_000_000;

/// `delta = sqrt(2 ln(2/p) / t)`.
pub fn derive_delta(t: usize, p: f64) -> Result<f64> {
    if t == 0 {
        return validation("t must be at least 1");
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            allowed: "(0, 1)",
        });
    }
    Ok((2.0 * (2.0 / p).ln() / t as f64).sqrt())
}

/// Trace error guaranteed for players passing with probability at least `p`: `3 delta`.
pub fn trace_soundness_bound(t: usize, p: f64) -> Result<f64> {
    Ok(3.0 * derive_delta(t, p)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolParams {
    pub game: Game,
    /// Minimum repetitions per tracked (player, question).
    pub t: usize,
    /// Minimum passing probability.
    pub p: f64,
    pub delta: f64,
    pub seed: u64,
    /// Keep per-round records in the transcript.
    #[serde(rename = "recordTrials")]
    pub record_trials: bool,
}

impl ProtocolParams {
    pub fn new(game: Game, t: usize, p: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            game,
            t,
            p,
            delta: derive_delta(t, p)?,
            seed,
            record_trials: true,
        })
    }
}

/// One joint answer and its probability.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub answers: Vec<i8>,
    pub prob: f64,
    pub win: bool,
    /// Magic Square only: Alice's slot answer agrees with Bob.
    pub consistent: bool,
}

/// Counter touched by a question; `slot` is the answer the trace test reads.
#[derive(Clone, Debug)]
pub struct UnitRef {
    pub unit: usize,
    pub slot: Option<usize>,
}

/// All joint answers for one referee question tuple.
#[derive(Clone, Debug)]
pub struct QuestionModel {
    pub questions: Vec<u16>,
    pub units: Vec<UnitRef>,
    pub outcomes: Vec<Outcome>,
}

/// Exact per-question answer distributions; question tuples are uniform.
#[derive(Clone, Debug)]
pub struct RoundModel {
    pub game: Game,
    pub questions: Vec<QuestionModel>,
    /// Labels of the tracked (player, question) counters.
    pub units: Vec<String>,
    /// Whether each unit is subject to the trace test.
    pub traced: Vec<bool>,
}

/// `Tr((E (x) F) state)` for local effects `E` (Alice) and `F` (Bob).
pub type JointEvaluator<'a> = dyn Fn(&HermitianOperator, &HermitianOperator) -> Result<f64> + Sync + 'a;

fn coefficient_evaluator(noise: &Noise, m: usize, n: usize) -> Result<Box<JointEvaluator<'static>>> {
    let w = match (noise, m) {
        (Noise::Depolarizing(rho), _) => {
            if !(0.0..=1.0).contains(rho) {
                return Err(Error::OutOfRange {
                    name: "rho",
                    value: *rho,
                    allowed: "[0, 1]",
                });
            }
            crate::pauli::degree_weights(m, n, *rho)
        }
        (Noise::Diagonal(_), 2) => noise.weights(n)?.expect("diagonal noise has weights"),
        (Noise::Diagonal(_), _) => {
            return Err(Error::UnsupportedNoise("diagonal correlations are defined for qubit registers".into()))
        }
        (Noise::State(_), _) => unreachable!("explicit states use the density-matrix evaluator"),
    };
    let expand = move |a: &HermitianOperator| -> Result<PauliExpansion> {
        if m == 2 {
            expand_pauli(a)
        } else {
            expand_pauli_pair(a)
        }
    };
    Ok(Box::new(move |e, f| Ok(expand(e)?.weighted_dot(&expand(&f.transpose())?, &w))))
}

/// Evaluator for `noise` on `n` registers of local dimension `m`.
pub fn joint_evaluator(noise: &Noise, m: usize, n: usize) -> Result<Box<JointEvaluator<'_>>> {
    match noise {
        Noise::State(state) => {
            let d = m.pow(n as u32);
            check_dim(d, state.dim_a())?;
            check_dim(d, state.dim_b())?;
            Ok(Box::new(move |e, f| Ok(state.expectation(e.matrix(), f.matrix()))))
        }
        _ => coefficient_evaluator(noise, m, n),
    }
}

fn plus_minus(a: &HermitianOperator) -> Result<Povm> {
    Povm::from_observable(a)
}

fn sign(i: usize) -> i8 {
    1 - 2 * i as i8
}

/// Builds the round model with the supplied joint-probability evaluator.
pub fn round_model_with(strategy: &AnyStrategy, eval: &JointEvaluator<'_>) -> Result<RoundModel> {
    match strategy {
        AnyStrategy::Chsh(s) => {
            let units = vec!["A:x=0".into(), "A:x=1".into(), "B:y=0".into(), "B:y=1".into()];
            let alice = [plus_minus(&s.p[0])?, plus_minus(&s.p[1])?];
            let bob = [plus_minus(&s.q[0])?, plus_minus(&s.q[1])?];
            let mut questions = Vec::new();
            for x in 0..2 {
                for y in 0..2 {
                    let mut outcomes = Vec::with_capacity(4);
                    for (ia, e) in alice[x].elements().iter().enumerate() {
                        for (ib, f) in bob[y].elements().iter().enumerate() {
                            outcomes.push(Outcome {
                                answers: vec![sign(ia), sign(ib)],
                                prob: eval(e, f)?,
                                win: (ia ^ ib) == (x & y),
                                consistent: false,
                            });
                        }
                    }
                    questions.push(QuestionModel {
                        questions: vec![x as u16, y as u16],
                        units: vec![UnitRef { unit: x, slot: Some(0) }, UnitRef { unit: 2 + y, slot: Some(1) }],
                        outcomes,
                    });
                }
            }
            Ok(RoundModel {
                game: Game::Chsh,
                questions,
                traced: vec![true; 4],
                units,
            })
        }
        AnyStrategy::MagicSquare(s) => {
            let mut units = Vec::with_capacity(18);
            for player in ["A", "B"] {
                for i in 0..3 {
                    for j in 0..3 {
                        units.push(format!("{player}:v{}{}", i + 1, j + 1));
                    }
                }
            }
            let bob: Vec<Vec<Povm>> = s
                .bob
                .iter()
                .map(|row| row.iter().map(plus_minus).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?;
            let mut questions = Vec::new();
            for q in MsQuestion::ALL {
                let povm = s.povm(q);
                let alice_units: Vec<UnitRef> = (0..3)
                    .map(|k| {
                        let (i, j) = q.variable(k);
                        UnitRef {
                            unit: 3 * i + j,
                            slot: Some(k),
                        }
                    })
                    .collect();
                for slot in 0..3 {
                    let (i, j) = q.variable(slot);
                    let mut outcomes = Vec::with_capacity(16);
                    for (o, e) in povm.elements().iter().enumerate() {
                        let a = ms_answers(o);
                        let parity = a[0] * a[1] * a[2] == q.parity();
                        for (ib, f) in bob[i][j].elements().iter().enumerate() {
                            let b = sign(ib);
                            let consistent = a[slot] as i8 == b;
                            outcomes.push(Outcome {
                                answers: vec![a[0] as i8, a[1] as i8, a[2] as i8, b],
                                prob: eval(e, f)?,
                                win: parity && consistent,
                                consistent,
                            });
                        }
                    }
                    let mut qunits = alice_units.clone();
                    qunits.push(UnitRef {
                        unit: 9 + 3 * i + j,
                        slot: Some(3),
                    });
                    questions.push(QuestionModel {
                        questions: vec![q.index() as u16, i as u16, j as u16],
                        units: qunits,
                        outcomes,
                    });
                }
            }
            Ok(RoundModel {
                game: Game::MagicSquare,
                questions,
                traced: vec![true; 18],
                units,
            })
        }
        AnyStrategy::TwoOutOfN(s) => {
            let n = s.n;
            let mut units = Vec::new();
            let mut traced = Vec::new();
            let single_unit = |player: usize, i: usize, x: usize| player * 2 * n + 2 * i + x;
            for player in ["A", "B"] {
                for i in 0..n {
                    for x in 0..2 {
                        units.push(format!("{player}:({},{x})", i + 1));
                        traced.push(true);
                    }
                }
            }
            let keys = PairKey::all(n);
            let pair_base = units.len();
            for player in ["A", "B"] {
                for key in &keys {
                    units.push(format!("{player}:{}", key.label()));
                    traced.push(false);
                }
            }
            let key_index = |key: &PairKey| keys.iter().position(|k| k == key).expect("all keys listed");
            let mut singles: Vec<Vec<[Povm; 2]>> = Vec::new();
            for player in [Player::Alice, Player::Bob] {
                singles.push(
                    s.singles(player)
                        .iter()
                        .map(|p| Ok([plus_minus(&p[0])?, plus_minus(&p[1])?]))
                        .collect::<Result<_>>()?,
                );
            }
            let mut questions = Vec::new();
            for role in 0..2 {
                let pair_player = if role == 0 { Player::Bob } else { Player::Alice };
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        for x in 0..2 {
                            for y in 0..2 {
                                for z in 0..2 {
                                    let (key, side) = PairKey::ordered(i, y, j, z);
                                    let pair = &s.pairs(pair_player)[&key];
                                    let mut outcomes = Vec::with_capacity(8);
                                    for (ia, e) in singles[role][i][x].elements().iter().enumerate() {
                                        for (o, f) in pair.elements().iter().enumerate() {
                                            let ans = pair_answers(o);
                                            let (bi, bj) = match side {
                                                PairSide::First => (ans[0], ans[1]),
                                                PairSide::Second => (ans[1], ans[0]),
                                            };
                                            let prob = if role == 0 { eval(e, f)? } else { eval(f, e)? };
                                            outcomes.push(Outcome {
                                                answers: vec![sign(ia), bi as i8, bj as i8],
                                                prob,
                                                win: (ia ^ usize::from(bi == -1)) == (x & y),
                                                consistent: false,
                                            });
                                        }
                                    }
                                    let pair_unit = pair_base + (1 - role) * keys.len() + key_index(&key);
                                    questions.push(QuestionModel {
                                        questions: [role, i, j, x, y, z].map(|v| v as u16).to_vec(),
                                        units: vec![
                                            UnitRef {
                                                unit: single_unit(role, i, x),
                                                slot: Some(0),
                                            },
                                            UnitRef {
                                                unit: pair_unit,
                                                slot: None,
                                            },
                                        ],
                                        outcomes,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            Ok(RoundModel {
                game: Game::TwoOutOfN,
                questions,
                units,
                traced,
            })
        }
    }
}

/// Round model evaluated in coefficient space (or on the explicit state for `Noise::State`).
pub fn round_model(strategy: &AnyStrategy, noise: &Noise) -> Result<RoundModel> {
    let (m, n) = match strategy {
        AnyStrategy::Chsh(s) => (2, s.n),
        AnyStrategy::MagicSquare(s) => (4, s.n),
        AnyStrategy::TwoOutOfN(s) => (2, s.n_prime),
    };
    let eval = joint_evaluator(noise, m, n)?;
    let model = round_model_with(strategy, eval.as_ref())?;
    for q in &model.questions {
        let total: f64 = q.outcomes.iter().map(|o| o.prob).sum();
        let min = q.outcomes.iter().map(|o| o.prob).fold(f64::INFINITY, f64::min);
        if (total - 1.0).abs() > 1e-8 || min < -1e-8 {
            return validation(format!(
                "answer distribution for questions {:?} is invalid (sum {total}, min {min})",
                q.questions
            ));
        }
    }
    Ok(model)
}

/// One sampled round: index into `RoundModel::questions` and into its outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampledRound {
    pub question: usize,
    pub outcome: usize,
}

/// Draws one answer index from a distribution given a uniform variate.
pub fn sample_outcome(outcomes: &[Outcome], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, o) in outcomes.iter().enumerate() {
        acc += o.prob.max(0.0);
        if u < acc {
            return k;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last positive outcome.
    outcomes.iter().rposition(|o| o.prob > 0.0).unwrap_or(outcomes.len() - 1)
}

/// Samples answers for a fixed question tuple.
pub fn sample_round<R: Rng + ?Sized>(model: &RoundModel, question: usize, rng: &mut R) -> SampledRound {
    let u: f64 = rng.random();
    SampledRound {
        question,
        outcome: sample_outcome(&model.questions[question].outcomes, u),
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn sample_chunk(model: &RoundModel, seed: u64, chunk: u64) -> Vec<SampledRound> {
    let mut rng = chunk_rng(seed, chunk);
    let nq = model.questions.len();
    (0..ROUND_CHUNK)
        .map(|_| {
            let q = rng.random_range(0..nq);
            sample_round(model, q, &mut rng)
        })
        .collect()
}

/// Rounds `[0, count)` of the stream for `seed`.
pub fn sample_rounds(model: &RoundModel, seed: u64, count: usize) -> Vec<SampledRound> {
    let chunks = (count as u64).div_ceil(ROUND_CHUNK);
    let mut out: Vec<SampledRound> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| sample_chunk(model, seed, c))
        .collect();
    out.truncate(count);
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Trial {
    pub round: usize,
    pub questions: Vec<u16>,
    pub answers: Vec<i8>,
    pub win: bool,
}

impl Trial {
    /// `round, questions, answers, win` with `;`-joined lists.
    pub fn csv_record(&self) -> [String; 4] {
        let join = |v: Vec<String>| v.join(";");
        [
            self.round.to_string(),
            join(self.questions.iter().map(|q| q.to_string()).collect()),
            join(self.answers.iter().map(|a| a.to_string()).collect()),
            u8::from(self.win).to_string(),
        ]
    }
}

pub const TRIAL_CSV_HEADER: [&str; 4] = ["round", "questions", "answers", "win"];

#[derive(Clone, Debug, Serialize)]
pub struct UnitCount {
    pub label: String,
    pub asked: usize,
    /// Answers `+1` / `-1` over every round (traced units only).
    pub plus: usize,
    pub minus: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceCheck {
    pub label: String,
    /// Fraction of `+1` answers among the first `t` times the question was asked.
    #[serde(rename = "plusFraction")]
    pub plus_fraction: f64,
    pub bias: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolTranscript {
    pub params: ProtocolParams,
    /// Empty unless `params.record_trials`.
    pub trials: Vec<Trial>,
    pub counts: Vec<UnitCount>,
    #[serde(rename = "traceChecks")]
    pub trace_checks: Vec<TraceCheck>,
    #[serde(rename = "tPrime")]
    pub t_prime: usize,
    pub wins: usize,
    #[serde(rename = "empiricalWinRate")]
    pub empirical_win_rate: f64,
    /// Magic Square: rounds where Alice's slot answer matched Bob's.
    #[serde(rename = "consistentRounds", skip_serializing_if = "Option::is_none")]
    pub consistent_rounds: Option<usize>,
    pub verdict: Verdict,
}

struct UnitState {
    asked: usize,
    plus: usize,
    minus: usize,
    first_t_plus: usize,
}

/// Runs rounds until every tracked counter reaches `t`, then applies the
/// trace test to the first `t` answers of each traced counter.
pub fn run_protocol_with_model(params: &ProtocolParams, model: &RoundModel) -> Result<ProtocolTranscript> {
    if params.game != model.game {
        return validation(format!(
            "parameters are for {} but the strategy plays {}",
            params.game.name(),
            model.game.name()
        ));
    }
    let t = params.t;
    let mut units: Vec<UnitState> = model
        .units
        .iter()
        .map(|_| UnitState {
            asked: 0,
            plus: 0,
            minus: 0,
            first_t_plus: 0,
        })
        .collect();
    let mut unfilled = units.len();
    let mut trials = Vec::new();
    let (mut rounds, mut wins, mut consistent) = (0usize, 0usize, 0usize);
    let mut next_chunk = 0u64;
    'outer: while unfilled > 0 {
        if rounds >= MAX_ROUNDS {
            break;
        }
        let batch: Vec<Vec<SampledRound>> = (next_chunk..next_chunk + CHUNKS_PER_BATCH)
            .into_par_iter()
            .map(|c| sample_chunk(model, params.seed, c))
            .collect();
        next_chunk += CHUNKS_PER_BATCH;
        for r in batch.into_iter().flatten() {
            let q = &model.questions[r.question];
            let o = &q.outcomes[r.outcome];
            for u in &q.units {
                let st = &mut units[u.unit];
                st.asked += 1;
                if st.asked == t {
                    unfilled -= 1;
                }
                if let Some(slot) = u.slot {
                    let plus = o.answers[slot] == 1;
                    if plus {
                        st.plus += 1;
                        if st.asked <= t {
                            st.first_t_plus += 1;
                        }
                    } else {
                        st.minus += 1;
                    }
                }
            }
            wins += usize::from(o.win);
            consistent += usize::from(o.consistent);
            if params.record_trials {
                trials.push(Trial {
                    round: rounds,
                    questions: q.questions.clone(),
                    answers: o.answers.clone(),
                    win: o.win,
                });
            }
            rounds += 1;
            if unfilled == 0 {
                break 'outer;
            }
        }
    }
    let mut trace_checks = Vec::new();
    let mut failed = Vec::new();
    for ((label, st), &traced) in model.units.iter().zip(&units).zip(&model.traced) {
        if !traced {
            continue;
        }
        let denom = st.asked.min(t).max(1) as f64;
        let frac = st.first_t_plus as f64 / denom;
        let bias = (frac - 0.5).abs();
        let passed = bias < params.delta;
        if !passed {
            failed.push(format!("{label} (bias {bias:.4})"));
        }
        trace_checks.push(TraceCheck {
            label: label.clone(),
            plus_fraction: frac,
            bias,
            passed,
        });
    }
    let verdict = if unfilled > 0 {
        Verdict {
            accepted: false,
            reason: format!("round cap {MAX_ROUNDS} reached before every counter filled"),
        }
    } else if failed.is_empty() {
        Verdict {
            accepted: true,
            reason: format!("all {} trace checks within delta = {:.6}", trace_checks.len(), params.delta),
        }
    } else {
        Verdict {
            accepted: false,
            reason: format!("trace test failed for {}", failed.join(", ")),
        }
    };
    let counts = model
        .units
        .iter()
        .zip(&units)
        .map(|(label, st)| UnitCount {
            label: label.clone(),
            asked: st.asked,
            plus: st.plus,
            minus: st.minus,
        })
        .collect();
    Ok(ProtocolTranscript {
        params: params.clone(),
        trials,
        counts,
        trace_checks,
        t_prime: rounds,
        wins,
        empirical_win_rate: wins as f64 / rounds.max(1) as f64,
        consistent_rounds: (model.game == Game::MagicSquare).then_some(consistent),
        verdict,
    })
}

pub fn run_protocol(params: &ProtocolParams, strategy: &AnyStrategy, noise: &Noise) -> Result<ProtocolTranscript> {
    run_protocol_with_model(params, &round_model(strategy, noise)?)
}

/// Win and (Magic Square) consistency counts over `rounds` uniform rounds.
pub fn simulate_rounds(model: &RoundModel, seed: u64, rounds: usize) -> (usize, usize) {
    let chunks = (rounds as u64).div_ceil(ROUND_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let take = (rounds as u64 - c * ROUND_CHUNK).min(ROUND_CHUNK) as usize;
            sample_chunk(model, seed, c)
                .into_iter()
                .take(take)
                .fold((0, 0), |(w, k), r| {
                    let o = &model.questions[r.question].outcomes[r.outcome];
                    (w + usize::from(o.win), k + usize::from(o.consistent))
                })
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseEstimate {
    pub game: Game,
    #[serde(rename = "omegaHat")]
    pub omega_hat: f64,
    pub rounds: usize,
    pub confidence: f64,
    /// Hoeffding half-width on the success frequency.
    #[serde(rename = "omegaHalfWidth")]
    pub omega_half_width: f64,
    #[serde(rename = "rhoHat")]
    pub rho_hat: f64,
    pub interval: [f64; 2],
    pub warnings: Vec<String>,
}

/// `rho` implied by an optimal traceless strategy's success probability:
/// `(omega - 1/2) 4/sqrt2` for the CHSH family, `2 omega - 1` for Magic
/// Square consistency.
pub fn rho_from_omega(game: Game, omega: f64) -> f64 {
    match game {
        Game::Chsh | Game::TwoOutOfN => (omega - 0.5) * 4.0 / 2f64.sqrt(),
        Game::MagicSquare => 2.0 * omega - 1.0,
    }
}

/// Inverts the optimal-value formula at `successes / rounds`; the interval
/// maps the two-sided Hoeffding bound `2 exp(-2 N eps^2) = 1 - confidence`.
pub fn estimate_noise_rate(game: Game, successes: usize, rounds: usize, confidence: f64) -> Result<NoiseEstimate> {
    if rounds == 0 {
        return Err(Error::EmptyTranscript);
    }
    if successes > rounds {
        return validation(format!("{successes} successes out of {rounds} rounds"));
    }
    estimate_from_frequency(game, successes as f64 / rounds as f64, rounds, confidence)
}

/// As [`estimate_noise_rate`] for a success frequency `omega` observed over `rounds`.
pub fn estimate_from_frequency(game: Game, omega: f64, rounds: usize, confidence: f64) -> Result<NoiseEstimate> {
    if rounds == 0 {
        return Err(Error::EmptyTranscript);
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::OutOfRange {
            name: "omega",
            value: omega,
            allowed: "[0, 1]",
        });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange {
            name: "confidence",
            value: confidence,
            allowed: "(0, 1)",
        });
    }
    let eps = ((2.0 / (1.0 - confidence)).ln() / (2.0 * rounds as f64)).sqrt();
    let raw = rho_from_omega(game, omega);
    let mut warnings = Vec::new();
    if raw < 0.0 {
        warnings.push(format!("success rate {omega:.6} is below the noiseless-classical range; rho clamped to 0"));
    }
    if raw > 1.0 {
        warnings.push(format!("success rate {omega:.6} exceeds the optimal noiseless value; rho clamped to 1"));
    }
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    Ok(NoiseEstimate {
        game,
        omega_hat: omega,
        rounds,
        confidence,
        omega_half_width: eps,
        rho_hat: clamp(raw),
        interval: [clamp(rho_from_omega(game, omega - eps)), clamp(rho_from_omega(game, omega + eps))],
        warnings,
    })
}

/// Uses wins (CHSH, 2-out-of-n) or consistent rounds (Magic Square).
pub fn estimate_from_transcript(t: &ProtocolTranscript, confidence: f64) -> Result<NoiseEstimate> {
    let successes = match t.params.game {
        Game::MagicSquare => t.consistent_rounds.unwrap_or(0),
        _ => t.wins,
    };
    estimate_noise_rate(t.params.game, successes, t.t_prime, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{canonical_chsh_strategy, canonical_magic_square_strategy, canonical_two_out_of_n_strategy};
    use crate::oracles::explicit_round_model;
    use crate::states::{make_depolarized_epr, RegisterKind};

    fn chsh(n: usize) -> AnyStrategy {
        AnyStrategy::Chsh(canonical_chsh_strategy(n, 1).unwrap())
    }

    #[test]
    fn delta_examples() {
        // sqrt(2 ln 200 / 20000), evaluated independently to 12 digits.
        let d = derive_delta(20_000, 0.01).unwrap();
        assert!((d - 0.023_018_074_130_014).abs() < 1e-9, "{d}");
        assert!((trace_soundness_bound(20_000, 0.01).unwrap() - 3.0 * d).abs() < 1e-15);
        assert!((derive_delta(80_000, 0.01).unwrap() - d / 2.0).abs() < 1e-15);
        assert!(derive_delta(10, 2.0).is_err());
        assert!(derive_delta(0, 0.5).is_err());
    }

    #[test]
    fn closed_form_matches_explicit_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cases = vec![
            (chsh(2), make_depolarized_epr(0.7, 2, RegisterKind::Qubit).unwrap(), 0.7),
            (
                AnyStrategy::Chsh(crate::random::random_chsh_strategy(2, 0.3, &mut rng).unwrap()),
                make_depolarized_epr(0.4, 2, RegisterKind::Qubit).unwrap(),
                0.4,
            ),
            (
                AnyStrategy::MagicSquare(crate::random::random_ms_strategy(1, 0.2, &mut rng).unwrap()),
                make_depolarized_epr(0.6, 1, RegisterKind::TwoQubit).unwrap(),
                0.6,
            ),
            (
                AnyStrategy::TwoOutOfN(crate::random::random_two_out_of_n_strategy(2, 2, &mut rng).unwrap()),
                make_depolarized_epr(0.8, 2, RegisterKind::Qubit).unwrap(),
                0.8,
            ),
        ];
        for (s, state, rho) in cases {
            let fast = round_model(&s, &Noise::Depolarizing(rho)).unwrap();
            let slow = explicit_round_model(&s, &state).unwrap();
            assert_eq!(fast.questions.len(), slow.len());
            for (q, probs) in fast.questions.iter().zip(&slow) {
                let tv: f64 = q.outcomes.iter().zip(probs).map(|(o, p)| (o.prob - p).abs()).sum::<f64>() / 2.0;
                assert!(tv < 1e-9, "{tv}");
            }
        }
    }

    #[test]
    fn canonical_chsh_equal_answer_rate() {
        let model = round_model(&chsh(1), &Noise::Depolarizing(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[sample_round(&model, 0, &mut rng).outcome] += 1;
        }
        let p_equal = (2.0 + 2f64.sqrt()) / 4.0;
        let expected = [p_equal / 2.0, (1.0 - p_equal) / 2.0, (1.0 - p_equal) / 2.0, p_equal / 2.0];
        let equal = (counts[0] + counts[3]) as f64 / draws as f64;
        let sigma = (p_equal * (1.0 - p_equal) / draws as f64).sqrt();
        assert!((equal - p_equal).abs() < 3.0 * sigma);
        // Chi-square with 3 degrees of freedom; 16.266 is the 0.999 quantile.
        let chi2: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&c, e)| (c as f64 - e * draws as f64).powi(2) / (e * draws as f64))
            .sum();
        assert!(chi2 < 16.266, "{chi2}");
    }

    #[test]
    fn fully_depolarized_is_uniform() {
        let model = round_model(&chsh(2), &Noise::Depolarizing(0.0)).unwrap();
        for q in &model.questions {
            for o in &q.outcomes {
                assert!((o.prob - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn transcripts_are_deterministic_and_use_first_t() {
        let params = ProtocolParams::new(Game::Chsh, 200, 0.01, 42).unwrap();
        let s = chsh(1);
        let a = run_protocol(&params, &s, &Noise::Depolarizing(0.8)).unwrap();
        let b = run_protocol(&params, &s, &Noise::Depolarizing(0.8)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.counts.iter().all(|c| c.asked >= 200));
        // Recompute the trace statistic from the trial list.
        for x in 0..2u16 {
            let firsts: Vec<i8> = a.trials.iter().filter(|t| t.questions[0] == x).take(200).map(|t| t.answers[0]).collect();
            let frac = firsts.iter().filter(|&&v| v == 1).count() as f64 / 200.0;
            assert!((a.trace_checks[x as usize].plus_fraction - frac).abs() < 1e-15);
        }
        let c = run_protocol(&ProtocolParams::new(Game::Chsh, 1, 0.5, 1).unwrap(), &s, &Noise::Depolarizing(0.8)).unwrap();
        assert!(c.t_prime >= 2);
    }

    #[test]
    fn magic_square_and_two_out_of_n_runs() {
        let ms = AnyStrategy::MagicSquare(canonical_magic_square_strategy(1, 1).unwrap());
        let params = ProtocolParams::new(Game::MagicSquare, 100, 0.01, 7).unwrap();
        let tr = run_protocol(&params, &ms, &Noise::Depolarizing(0.9)).unwrap();
        assert!(tr.counts.iter().all(|c| c.asked >= 100));
        assert_eq!(tr.counts.len(), 18);
        let est = estimate_from_transcript(&tr, 0.95).unwrap();
        assert!(est.interval[0] <= est.rho_hat && est.rho_hat <= est.interval[1]);

        let s = AnyStrategy::TwoOutOfN(canonical_two_out_of_n_strategy(3, 3, &[1, 2, 3]).unwrap());
        let params = ProtocolParams::new(Game::TwoOutOfN, 50, 0.01, 7).unwrap();
        let tr = run_protocol(&params, &s, &Noise::Depolarizing(0.9)).unwrap();
        assert!(tr.counts.iter().all(|c| c.asked >= 50));
        assert!(run_protocol(&params, &ms, &Noise::Depolarizing(0.9)).is_err());
    }

    #[test]
    fn two_out_of_n_rounds_grow_quadratically() {
        // Each pair question is asked with probability 1/(4 n (n-1)) per round.
        let t = 40;
        let mut points = Vec::new();
        for n in 2..=6 {
            let s = AnyStrategy::TwoOutOfN(canonical_two_out_of_n_strategy(n, n, &(1..=n).collect::<Vec<_>>()).unwrap());
            let model = round_model(&s, &Noise::Depolarizing(0.9)).unwrap();
            let mut total = 0.0;
            for seed in 0..4 {
                let mut params = ProtocolParams::new(Game::TwoOutOfN, t, 0.01, seed).unwrap();
                params.record_trials = false;
                total += run_protocol_with_model(&params, &model).unwrap().t_prime as f64;
            }
            let mean = total / 4.0;
            let nf = n as f64;
            assert!(mean >= (t as f64) * 4.0 * nf * (nf - 1.0));
            assert!(mean <= 8.0 * t as f64 * nf * nf * nf.ln().max(1.0) * 4.0);
            points.push((nf.ln(), mean.ln()));
        }
        let mx = points.iter().map(|p| p.0).sum::<f64>() / 5.0;
        let my = points.iter().map(|p| p.1).sum::<f64>() / 5.0;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(slope > 1.5 && slope < 3.0, "{slope}");
    }

    #[test]
    fn estimate_inverts_formula() {
        let omega = 0.5 + 2f64.sqrt() * 0.7 / 4.0;
        let rounds = 1_000_000_000usize;
        let est = estimate_noise_rate(Game::Chsh, (omega * rounds as f64).round() as usize, rounds, 0.95).unwrap();
        assert!((est.rho_hat - 0.7).abs() < 1e-8);
        let exact = estimate_from_frequency(Game::Chsh, omega, 1000, 0.95).unwrap();
        assert!((exact.rho_hat - 0.7).abs() < 1e-14);
        assert!(exact.interval[0] < 0.7 && exact.interval[1] > 0.7);
        let low = estimate_noise_rate(Game::Chsh, 40, 100, 0.95).unwrap();
        assert_eq!(low.rho_hat, 0.0);
        assert!(!low.warnings.is_empty());
        let ms = estimate_noise_rate(Game::MagicSquare, 85, 100, 0.95).unwrap();
        assert!((ms.rho_hat - 0.7).abs() < 1e-12);
        assert!(matches!(estimate_noise_rate(Game::Chsh, 0, 0, 0.9), Err(Error::EmptyTranscript)));
    }
}
