//! JSON encodings for matrices, expansions, states and strategies.
//!
//! Matrices are nested arrays of `[re, im]` pairs. Strategy and state files are
//! versioned with `schemaVersion` and reject unknown fields.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::games::{
    canonical_chsh_strategy, canonical_magic_square_strategy, canonical_two_out_of_n_strategy,
    rotated_bob_ms_strategy, rotated_bob_strategy, rotated_bob_two_out_of_n_strategy, trace_error,
    ChshStrategy, Game, MagicSquareStrategy, MsQuestion, PairKey, Povm, TwoOutOfNStrategy,
};
use crate::linalg::{c, CMat, HermitianOperator};
use crate::pauli::PauliExpansion;
use crate::states::{make_depolarized_epr, BipartiteState, RegisterKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Row-major `[[ [re, im], ... ], ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        Self(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        if rows == 0 {
            return validation("empty matrix");
        }
        let cols = self.0[0].len();
        if self.0.iter().any(|r| r.len() != cols) {
            return validation("ragged matrix rows");
        }
        Ok(CMat::from_fn(rows, cols, |i, j| c(self.0[i][j][0], self.0[i][j][1])))
    }

    pub fn to_hermitian(&self) -> Result<HermitianOperator> {
        let m = self.to_matrix()?;
        if m.nrows() != m.ncols() {
            return validation(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
        }
        HermitianOperator::new(m)
    }
}

impl From<&HermitianOperator> for MatrixJson {
    fn from(h: &HermitianOperator) -> Self {
        Self::from_matrix(h.matrix())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionJson {
    pub m: usize,
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl From<&PauliExpansion> for ExpansionJson {
    fn from(e: &PauliExpansion) -> Self {
        Self {
            m: e.m,
            n: e.n,
            coeffs: e.coeffs.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegisterKindJson {
    #[default]
    Qubit,
    TwoQubit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateFile {
    Symbolic(SymbolicState),
    Explicit(ExplicitState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SymbolicState {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub kind: StateKind,
    pub rho: f64,
    pub n: usize,
    #[serde(default)]
    pub registers: RegisterKindJson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    DepolarizedEpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ExplicitState {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub dim_a: usize,
    pub dim_b: usize,
    pub density: MatrixJson,
}

impl StateFile {
    pub fn from_state(s: &BipartiteState) -> Self {
        StateFile::Explicit(ExplicitState {
            schema_version: Some(SCHEMA_VERSION),
            dim_a: s.dim_a(),
            dim_b: s.dim_b(),
            density: s.density().into(),
        })
    }

    pub fn load(&self) -> Result<BipartiteState> {
        match self {
            StateFile::Symbolic(sym) => {
                check_schema(sym.schema_version)?;
                let kind = match sym.registers {
                    RegisterKindJson::Qubit => RegisterKind::Qubit,
                    RegisterKindJson::TwoQubit => RegisterKind::TwoQubit,
                };
                make_depolarized_epr(sym.rho, sym.n, kind)
            }
            StateFile::Explicit(ex) => {
                check_schema(ex.schema_version)?;
                BipartiteState::new(ex.dim_a, ex.dim_b, ex.density.to_hermitian()?)
            }
        }
    }
}

fn check_schema(v: Option<u32>) -> Result<()> {
    match v {
        None | Some(SCHEMA_VERSION) => Ok(()),
        Some(other) => validation(format!("unsupported schemaVersion {other} (expected {SCHEMA_VERSION})")),
    }
}

pub fn parse_state(text: &str) -> Result<BipartiteState> {
    serde_json::from_str::<StateFile>(text)
        .map_err(|e| Error::Validation(format!("state JSON: {e}")))?
        .load()
}

/// Strategy constructors that avoid shipping matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolicStrategy {
    Canonical {
        #[serde(default)]
        register: Option<usize>,
        #[serde(default)]
        registers: Option<Vec<usize>>,
    },
    CanonicalPerturbed {
        theta: f64,
        #[serde(default)]
        register: Option<usize>,
        #[serde(default)]
        registers: Option<Vec<usize>>,
    },
    Random {
        seed: u64,
        #[serde(default, rename = "maxTrace")]
        max_trace: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPovmJson {
    /// First index (1-based, `i < j`).
    pub i: usize,
    pub j: usize,
    pub y: usize,
    pub z: usize,
    /// Outcomes ordered `(+,+), (+,-), (-,+), (-,-)`.
    pub elements: Vec<MatrixJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct StrategyFile {
    pub schema_version: u32,
    pub game: Game,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_prime: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbolic: Option<SymbolicStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<MatrixJson>>,
    /// Six eight-outcome POVMs in question order `r1, r2, r3, c1, c2, c3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_povms: Option<Vec<Vec<MatrixJson>>>,
    /// Bob's 3x3 observables, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_observables: Option<Vec<Vec<MatrixJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_singles: Option<Vec<Vec<MatrixJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_singles: Option<Vec<Vec<MatrixJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alice_pairs: Option<Vec<PairPovmJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob_pairs: Option<Vec<PairPovmJson>>,
}

#[derive(Clone, Debug)]
pub enum AnyStrategy {
    Chsh(ChshStrategy),
    MagicSquare(MagicSquareStrategy),
    TwoOutOfN(TwoOutOfNStrategy),
}

impl AnyStrategy {
    pub fn game(&self) -> Game {
        match self {
            AnyStrategy::Chsh(_) => Game::Chsh,
            AnyStrategy::MagicSquare(_) => Game::MagicSquare,
            AnyStrategy::TwoOutOfN(_) => Game::TwoOutOfN,
        }
    }

    pub fn trace_error(&self) -> f64 {
        match self {
            AnyStrategy::Chsh(s) => trace_error(s),
            AnyStrategy::MagicSquare(s) => trace_error(s),
            AnyStrategy::TwoOutOfN(s) => trace_error(s),
        }
    }
}

fn hermitians(list: &[MatrixJson], expected: usize, what: &str) -> Result<Vec<HermitianOperator>> {
    if list.len() != expected {
        return validation(format!("{what}: expected {expected} matrices, got {}", list.len()));
    }
    list.iter().map(MatrixJson::to_hermitian).collect()
}

fn pair2(list: &[MatrixJson], what: &str) -> Result<[HermitianOperator; 2]> {
    let v = hermitians(list, 2, what)?;
    Ok([v[0].clone(), v[1].clone()])
}

fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| Error::Validation(format!("missing field '{name}'")))
}

fn pairs_from_json(n: usize, list: &[PairPovmJson], who: &str) -> Result<BTreeMap<PairKey, Povm>> {
    let mut out = BTreeMap::new();
    for p in list {
        if p.i == 0 || p.j == 0 || p.i >= p.j || p.j > n || p.y > 1 || p.z > 1 {
            return validation(format!("{who} pair ({}, {}, {}, {}) out of range", p.i, p.j, p.y, p.z));
        }
        let key = PairKey {
            i: p.i - 1,
            j: p.j - 1,
            y: p.y,
            z: p.z,
        };
        let povm = Povm::new(hermitians(&p.elements, 4, &format!("{who} pair {}", key.label()))?)?;
        if out.insert(key, povm).is_some() {
            return validation(format!("{who} pair {} listed twice", key.label()));
        }
    }
    Ok(out)
}

fn pairs_to_json(pairs: &BTreeMap<PairKey, Povm>) -> Vec<PairPovmJson> {
    pairs
        .iter()
        .map(|(k, povm)| PairPovmJson {
            i: k.i + 1,
            j: k.j + 1,
            y: k.y,
            z: k.z,
            elements: povm.elements().iter().map(MatrixJson::from).collect(),
        })
        .collect()
}

impl StrategyFile {
    fn empty(game: Game, n: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            game,
            n,
            n_prime: None,
            symbolic: None,
            p: None,
            q: None,
            alice_povms: None,
            bob_observables: None,
            alice_singles: None,
            bob_singles: None,
            alice_pairs: None,
            bob_pairs: None,
        }
    }

    pub fn symbolic(game: Game, n: usize, n_prime: Option<usize>, sym: SymbolicStrategy) -> Self {
        Self {
            n_prime,
            symbolic: Some(sym),
            ..Self::empty(game, n)
        }
    }

    /// Explicit matrices for every operator of `s`.
    pub fn from_strategy(s: &AnyStrategy) -> Self {
        let m = |ops: &[HermitianOperator]| ops.iter().map(MatrixJson::from).collect::<Vec<_>>();
        match s {
            AnyStrategy::Chsh(s) => Self {
                p: Some(m(&s.p)),
                q: Some(m(&s.q)),
                ..Self::empty(Game::Chsh, s.n)
            },
            AnyStrategy::MagicSquare(s) => Self {
                alice_povms: Some(s.alice.iter().map(|p| m(p.elements())).collect()),
                bob_observables: Some(s.bob.iter().map(|row| m(row)).collect()),
                ..Self::empty(Game::MagicSquare, s.n)
            },
            AnyStrategy::TwoOutOfN(s) => Self {
                n_prime: Some(s.n_prime),
                alice_singles: Some(s.alice_singles.iter().map(|p| m(p)).collect()),
                bob_singles: Some(s.bob_singles.iter().map(|p| m(p)).collect()),
                alice_pairs: Some(pairs_to_json(&s.alice_pairs)),
                bob_pairs: Some(pairs_to_json(&s.bob_pairs)),
                ..Self::empty(Game::TwoOutOfN, s.n)
            },
        }
    }

    pub fn build(&self) -> Result<AnyStrategy> {
        check_schema(Some(self.schema_version))?;
        if let Some(sym) = &self.symbolic {
            let explicit = self.p.is_some()
                || self.q.is_some()
                || self.alice_povms.is_some()
                || self.bob_observables.is_some()
                || self.alice_singles.is_some()
                || self.bob_singles.is_some()
                || self.alice_pairs.is_some()
                || self.bob_pairs.is_some();
            if explicit {
                return validation("'symbolic' cannot be combined with explicit operators");
            }
            return build_symbolic(self.game, self.n, self.n_prime, sym);
        }
        match self.game {
            Game::Chsh => Ok(AnyStrategy::Chsh(ChshStrategy::new(
                self.n,
                pair2(require(&self.p, "p")?, "p")?,
                pair2(require(&self.q, "q")?, "q")?,
            )?)),
            Game::MagicSquare => {
                let povms = require(&self.alice_povms, "alicePovms")?;
                if povms.len() != 6 {
                    return validation(format!("alicePovms: expected 6 POVMs, got {}", povms.len()));
                }
                let alice = povms
                    .iter()
                    .enumerate()
                    .map(|(q, els)| Povm::new(hermitians(els, 8, &MsQuestion::from_index(q).label())?))
                    .collect::<Result<Vec<_>>>()?;
                let bob_rows = require(&self.bob_observables, "bobObservables")?;
                if bob_rows.len() != 3 {
                    return validation("bobObservables: expected 3 rows");
                }
                let bob = bob_rows
                    .iter()
                    .map(|row| hermitians(row, 3, "bobObservables row"))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyStrategy::MagicSquare(MagicSquareStrategy::new(self.n, alice, bob)?))
            }
            Game::TwoOutOfN => {
                let n_prime = *require(&self.n_prime, "nPrime")?;
                let singles = |field: &Option<Vec<Vec<MatrixJson>>>, name: &str| -> Result<Vec<[HermitianOperator; 2]>> {
                    let list = require(field, name)?;
                    if list.len() != self.n {
                        return validation(format!("{name}: expected {} entries, got {}", self.n, list.len()));
                    }
                    list.iter().map(|p| pair2(p, name)).collect()
                };
                Ok(AnyStrategy::TwoOutOfN(TwoOutOfNStrategy::new(
                    self.n,
                    n_prime,
                    singles(&self.alice_singles, "aliceSingles")?,
                    singles(&self.bob_singles, "bobSingles")?,
                    pairs_from_json(self.n, require(&self.alice_pairs, "alicePairs")?, "alice")?,
                    pairs_from_json(self.n, require(&self.bob_pairs, "bobPairs")?, "bob")?,
                )?))
            }
        }
    }
}

fn registers_for(n: usize, register: Option<usize>, registers: &Option<Vec<usize>>) -> Vec<usize> {
    match (registers, register) {
        (Some(list), _) => list.clone(),
        (None, Some(k)) => vec![k; 1],
        (None, None) => (1..=n).collect(),
    }
}

/// Expands a symbolic constructor for `game` on `n` registers.
pub fn build_symbolic(game: Game, n: usize, n_prime: Option<usize>, sym: &SymbolicStrategy) -> Result<AnyStrategy> {
    match (game, sym) {
        (Game::Chsh, SymbolicStrategy::Canonical { register, .. }) => {
            Ok(AnyStrategy::Chsh(canonical_chsh_strategy(n, register.unwrap_or(1))?))
        }
        (Game::Chsh, SymbolicStrategy::CanonicalPerturbed { theta, register, .. }) => {
            Ok(AnyStrategy::Chsh(rotated_bob_strategy(n, register.unwrap_or(1), *theta)?))
        }
        (Game::Chsh, SymbolicStrategy::Random { seed, max_trace }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(AnyStrategy::Chsh(crate::random::random_chsh_strategy(n, max_trace.unwrap_or(0.0), &mut rng)?))
        }
        (Game::MagicSquare, SymbolicStrategy::Canonical { register, .. }) => Ok(AnyStrategy::MagicSquare(
            canonical_magic_square_strategy(n, register.unwrap_or(1))?,
        )),
        (Game::MagicSquare, SymbolicStrategy::CanonicalPerturbed { theta, register, .. }) => Ok(
            AnyStrategy::MagicSquare(rotated_bob_ms_strategy(n, register.unwrap_or(1), *theta)?),
        ),
        (Game::MagicSquare, SymbolicStrategy::Random { seed, max_trace }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(AnyStrategy::MagicSquare(crate::random::random_ms_strategy(
                n,
                max_trace.unwrap_or(0.0),
                &mut rng,
            )?))
        }
        (Game::TwoOutOfN, sym) => {
            let n_prime = n_prime.unwrap_or(n);
            let s = match sym {
                SymbolicStrategy::Canonical { register, registers } => {
                    canonical_two_out_of_n_strategy(n, n_prime, &registers_for(n, *register, registers))?
                }
                SymbolicStrategy::CanonicalPerturbed {
                    theta,
                    register,
                    registers,
                } => rotated_bob_two_out_of_n_strategy(n, n_prime, &registers_for(n, *register, registers), *theta)?,
                SymbolicStrategy::Random { seed, .. } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    crate::random::random_two_out_of_n_strategy(n, n_prime, &mut rng)?
                }
            };
            Ok(AnyStrategy::TwoOutOfN(s))
        }
    }
}

pub fn parse_strategy(text: &str) -> Result<AnyStrategy> {
    serde_json::from_str::<StrategyFile>(text)
        .map_err(|e| Error::Validation(format!("strategy JSON: {e}")))?
        .build()
}
