//! Numerical searches for large violations, used as oracles that the closed
//! form optima are reached and never exceeded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::{chsh_upper_bound, magic_square_upper_bound};
use crate::error::{Error, Result};
use crate::games::{
    canonical_chsh_strategy, canonical_magic_square_strategy, chsh_violation, magic_square_value, trace_error,
    ChshStrategy, Noise,
};
use crate::linalg::{eigh, CMat, HermitianOperator};
use crate::pauli::{degree_weights, expand_pauli};

#[derive(Clone, Debug, Serialize)]
pub struct Iterate {
    pub value: f64,
    pub step: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationTrace {
    pub iterates: Vec<Iterate>,
    #[serde(rename = "bestValue")]
    pub best_value: f64,
    /// Value if the last half-step had been free to pick any contraction.
    #[serde(rename = "unconstrainedValue")]
    pub unconstrained_value: f64,
    #[serde(skip)]
    pub best: ChshStrategy,
}

fn check_rho(rho: f64) -> Result<()> {
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

/// `Delta_rho(A)`: degree-`k` Pauli coefficients scaled by `rho^k`.
fn depolarize(a: &HermitianOperator, w: &[f64]) -> Result<HermitianOperator> {
    let e = expand_pauli(a)?;
    Ok(e.scaled_by(|x| w[x]).reconstruct())
}

/// Maximizer of `Tr(P M)` over traceless binary `P`: `+1` on the top half of
/// the spectrum of `M`, `-1` on the rest. Also returns `sum |lambda| / d`, the
/// maximum over all contractions.
fn top_half_sign(m: &HermitianOperator) -> (HermitianOperator, f64) {
    let (vals, vecs) = eigh(m.matrix());
    let d = vals.len();
    // `eigh` sorts ascending; the upper half gets +1.
    let signs: Vec<f64> = (0..d).map(|k| if k >= d / 2 { 1.0 } else { -1.0 }).collect();
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(d, signs.iter().map(|&s| crate::linalg::r(s))));
    let p = HermitianOperator::symmetrized(&vecs * diag * vecs.adjoint());
    let free = vals.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
    (p, free)
}

const SIGNS: [[f64; 2]; 2] = [[1.0, 1.0], [1.0, -1.0]];

/// Alternating optimization of the CHSH functional on `Phi_rho^{(x) n}` over
/// traceless binary observables. Each half-step solves its subproblem exactly
/// (top-half spectral projection of the effective operator), so the value
/// never decreases.
pub fn seesaw_chsh(rho: f64, init: &ChshStrategy, max_iters: usize, tol: f64) -> Result<OptimizationTrace> {
    check_rho(rho)?;
    let n = init.n;
    let w = degree_weights(2, n, rho);
    let noise = Noise::Depolarizing(rho);
    let mut s = init.clone();
    let mut value = chsh_violation(&s, &noise)?.violation;
    let mut iterates = vec![Iterate {
        value,
        step: "init".into(),
    }];
    let (mut best, mut best_value) = (s.clone(), value);
    let mut unconstrained = value;
    for it in 0..max_iters {
        let start = value;
        // Alice: v = sum_x Tr(P_x M_x)/d with M_x = sum_y s_xy Delta(Q_y^T).
        let dq = [depolarize(&s.q[0].transpose(), &w)?, depolarize(&s.q[1].transpose(), &w)?];
        let mut free = 0.0;
        let mut p = s.p.clone();
        for x in 0..2 {
            let m = &dq[0].scale(SIGNS[x][0]) + &dq[1].scale(SIGNS[x][1]);
            let (px, fx) = top_half_sign(&m);
            p[x] = px;
            free += fx;
        }
        s = ChshStrategy::new(n, p, s.q.clone())?;
        value = chsh_violation(&s, &noise)?.violation;
        iterates.push(Iterate {
            value,
            step: format!("iter {it}: alice"),
        });
        unconstrained = unconstrained.max(free);
        // Bob: v = sum_y Tr(Q_y N_y^T)/d with N_y = sum_x s_xy Delta(P_x).
        let dp = [depolarize(&s.p[0], &w)?, depolarize(&s.p[1], &w)?];
        let mut free = 0.0;
        let mut q = s.q.clone();
        for y in 0..2 {
            let m = (&dp[0].scale(SIGNS[0][y]) + &dp[1].scale(SIGNS[1][y])).transpose();
            let (qy, fy) = top_half_sign(&m);
            q[y] = qy;
            free += fy;
        }
        s = ChshStrategy::new(n, s.p.clone(), q)?;
        value = chsh_violation(&s, &noise)?.violation;
        iterates.push(Iterate {
            value,
            step: format!("iter {it}: bob"),
        });
        unconstrained = unconstrained.max(free);
        if value > best_value {
            best_value = value;
            best = s.clone();
        }
        if value - start <= tol {
            break;
        }
    }
    Ok(OptimizationTrace {
        iterates,
        best_value,
        unconstrained_value: unconstrained,
        best,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartSummary {
    pub rho: f64,
    pub n: usize,
    pub restarts: usize,
    #[serde(rename = "bestValue")]
    pub best_value: f64,
    /// Final value of each restart, in restart order.
    #[serde(rename = "restartValues")]
    pub restart_values: Vec<f64>,
    #[serde(rename = "maxUnconstrained")]
    pub max_unconstrained: f64,
}

/// See-saw from `restarts` random traceless initial points; restart `r` uses
/// stream `r` of `seed`.
pub fn seesaw_chsh_restarts(rho: f64, n: usize, restarts: usize, seed: u64, max_iters: usize, tol: f64) -> Result<RestartSummary> {
    let traces = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let init = crate::random::random_chsh_strategy(n, 0.0, &mut rng)?;
            seesaw_chsh(rho, &init, max_iters, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let restart_values: Vec<f64> = traces.iter().map(|t| t.best_value).collect();
    Ok(RestartSummary {
        rho,
        n,
        restarts,
        best_value: restart_values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_unconstrained: traces.iter().map(|t| t.unconstrained_value).fold(f64::NEG_INFINITY, f64::max),
        restart_values,
    })
}

fn spherical(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Exhaustive grid over Bob's two Bloch vectors (`resolution` polar by
/// `resolution` azimuthal angles each) with Alice's best response in closed
/// form: for qubit observables `a . sigma`, `b . sigma`,
/// `<P (x) Q> = rho a . b'` with `b' = (b_x, -b_y, b_z)`, so the best Alice
/// unit vectors give `rho (|b0' + b1'| + |b0' - b1'|)`.
pub fn grid_bruteforce_chsh_qubit(rho: f64, resolution: usize) -> Result<f64> {
    check_rho(rho)?;
    if resolution < 8 {
        return Err(Error::OutOfRange {
            name: "resolution",
            value: resolution as f64,
            allowed: ">= 8",
        });
    }
    let pi = std::f64::consts::PI;
    let points: Vec<[f64; 3]> = (0..resolution)
        .flat_map(|i| {
            let theta = pi * i as f64 / (resolution - 1) as f64;
            (0..resolution).map(move |j| spherical(theta, 2.0 * pi * j as f64 / resolution as f64))
        })
        .map(|b| [b[0], -b[1], b[2]])
        .collect();
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let best = points
        .par_iter()
        .map(|b0| {
            points
                .iter()
                .map(|b1| {
                    let plus = [b0[0] + b1[0], b0[1] + b1[1], b0[2] + b1[2]];
                    let minus = [b0[0] - b1[0], b0[1] - b1[1], b0[2] - b1[2]];
                    norm(plus) + norm(minus)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(rho * best)
}

#[derive(Clone, Debug, Serialize)]
pub struct MsSearchReport {
    pub rho: f64,
    pub n: usize,
    pub samples: usize,
    /// Best overall value, canonical candidate included.
    #[serde(rename = "bestValue")]
    pub best_value: f64,
    /// Best value among sampled strategies only.
    #[serde(rename = "bestRandom")]
    pub best_random: f64,
    /// `(1 + rho)/2`.
    pub bound: f64,
    /// Samples whose value exceeded their trace-corrected bound by more than `1e-9`.
    pub exceedances: usize,
    /// Largest `value - bound(eps_tr)` over all samples.
    #[serde(rename = "maxSlack")]
    pub max_slack: f64,
}

/// Scores random Magic Square strategies (Bob traceless up to `max_trace`)
/// against `(1 + rho)/2 + eps_tr^2/(4 rho)`.
pub fn random_search_ms(rho: f64, n: usize, samples: usize, seed: u64, max_trace: f64) -> Result<MsSearchReport> {
    check_rho(rho)?;
    let scored = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let s = crate::random::random_ms_strategy(n, max_trace, &mut rng)?;
            let value = magic_square_value(&s, rho)?.overall;
            let bound = magic_square_upper_bound(rho, trace_error(&s).min(1.0))?;
            Ok((value, value - bound))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let canonical = magic_square_value(&canonical_magic_square_strategy(n, 1)?, rho)?.overall;
    let best_random = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(MsSearchReport {
        rho,
        n,
        samples,
        best_value: best_random.max(canonical),
        best_random,
        bound: (1.0 + rho) / 2.0,
        exceedances: scored.iter().filter(|s| s.1 > 1e-9).count(),
        max_slack: scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// One row of the see-saw sweep CSV.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub bound: f64,
    #[serde(rename = "bestFound")]
    pub best_found: f64,
    pub gap: f64,
    pub restarts: usize,
}

pub fn chsh_sweep(rhos: &[f64], n: usize, restarts: usize, seed: u64) -> Result<Vec<SweepRow>> {
    rhos.iter()
        .map(|&rho| {
            let summary = seesaw_chsh_restarts(rho, n, restarts, seed, 200, 1e-12)?;
            let bound = chsh_upper_bound(rho, 0.0)?;
            Ok(SweepRow {
                rho,
                bound,
                best_found: summary.best_value,
                gap: bound - summary.best_value,
                restarts,
            })
        })
        .collect()
}

/// Canonical strategy on register 1, a fixed point of the see-saw.
pub fn canonical_init(n: usize) -> Result<ChshStrategy> {
    canonical_chsh_strategy(n, 1)
}
