//! Slow, independent reference computations used to cross-check the fast paths.
//!
//! Everything here works directly from definitions: per-coefficient traces,
//! explicit joint density matrices with Born-rule outcome enumeration, and
//! vertex enumeration for small linear programs.

use crate::error::{validation, Result};
use crate::games::{
    ms_answers, pair_answers, ChshStrategy, MagicSquareStrategy, MsQuestion, TwoOutOfNStrategy,
};
use crate::linalg::{kron, trace_of_product, CMat, HermitianOperator};
use crate::pauli::StandardBasis;
use crate::states::{make_depolarized_epr, BipartiteState, RegisterKind};

/// `coeffs(x) = (1/d) Tr(B_x* M)` computed one index at a time.
pub fn naive_pauli_expand(h: &HermitianOperator, basis: &StandardBasis, n: usize) -> Vec<f64> {
    let m2 = basis.m() * basis.m();
    let d = h.dim() as f64;
    (0..m2.pow(n as u32))
        .map(|x| {
            let b = basis.product_element(x, n);
            trace_of_product(&b.adjoint(), h.matrix()).re / d
        })
        .collect()
}

fn born(state: &BipartiteState, a: &CMat, b: &CMat) -> f64 {
    trace_of_product(state.density().matrix(), &kron(a, b)).re
}

fn two_outcome(a: &HermitianOperator) -> [CMat; 2] {
    let id = CMat::identity(a.dim(), a.dim());
    [(&id + a.matrix()) * crate::linalg::r(0.5), (&id - a.matrix()) * crate::linalg::r(0.5)]
}

/// CHSH winning probability by enumerating all answers on an explicit state.
pub fn explicit_chsh_win(s: &ChshStrategy, state: &BipartiteState) -> f64 {
    let mut win = 0.0;
    for x in 0..2 {
        let pa = two_outcome(&s.p[x]);
        for y in 0..2 {
            let qb = two_outcome(&s.q[y]);
            for (ia, ea) in pa.iter().enumerate() {
                for (ib, eb) in qb.iter().enumerate() {
                    if (ia ^ ib) == (x & y) {
                        win += 0.25 * born(state, ea, eb);
                    }
                }
            }
        }
    }
    win
}

/// CHSH violation `8 (w - 1/2)` on `Phi_rho^{(x) n}` built explicitly.
pub fn explicit_chsh_violation(s: &ChshStrategy, rho: f64) -> Result<f64> {
    let state = make_depolarized_epr(rho, s.n, RegisterKind::Qubit)?;
    Ok(8.0 * (explicit_chsh_win(s, &state) - 0.5))
}

/// `(overall, parity, consistency)` for Magic Square on an explicit state.
pub fn explicit_magic_square_value(s: &MagicSquareStrategy, rho: f64) -> Result<(f64, f64, f64)> {
    let state = make_depolarized_epr(rho, s.n, RegisterKind::TwoQubit)?;
    let d = s.dim();
    let id = CMat::identity(d, d);
    let (mut overall, mut parity, mut consistency) = (0.0, 0.0, 0.0);
    for q in MsQuestion::ALL {
        let povm = s.povm(q);
        for (o, e) in povm.elements().iter().enumerate() {
            let a = ms_answers(o);
            let ok = a[0] * a[1] * a[2] == q.parity();
            let mass = born(&state, e.matrix(), &id);
            if ok {
                parity += mass / 6.0;
            }
            for slot in 0..3 {
                let (i, j) = q.variable(slot);
                let fb = two_outcome(&s.bob[i][j]);
                for (ib, f) in fb.iter().enumerate() {
                    let b = 1 - 2 * ib as i32;
                    if b != a[slot] {
                        continue;
                    }
                    let p = born(&state, e.matrix(), f) / 18.0;
                    consistency += p;
                    if ok {
                        overall += p;
                    }
                }
            }
        }
    }
    Ok((overall, parity, consistency))
}

/// 2-out-of-n winning probability on an explicit state, enumerating roles,
/// ordered index pairs, questions and all answers.
pub fn explicit_two_out_of_n_win(s: &TwoOutOfNStrategy, rho: f64) -> Result<f64> {
    let state = make_depolarized_epr(rho, s.n_prime, RegisterKind::Qubit)?;
    let n = s.n;
    let norm = 1.0 / (2.0 * (n * (n - 1)) as f64 * 8.0);
    let mut win = 0.0;
    for role in 0..2 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for x in 0..2 {
                    for y in 0..2 {
                        for z in 0..2 {
                            let (key, _) = crate::games::PairKey::ordered(i, y, j, z);
                            let (single, pairs) = match role {
                                0 => (&s.alice_singles[i][x], &s.bob_pairs[&key]),
                                _ => (&s.bob_singles[i][x], &s.alice_pairs[&key]),
                            };
                            let single_povm = two_outcome(single);
                            for (ia, ea) in single_povm.iter().enumerate() {
                                for (o, f) in pairs.elements().iter().enumerate() {
                                    let ans = pair_answers(o);
                                    let b = if key.i == i { ans[0] } else { ans[1] };
                                    let ib = usize::from(b == -1);
                                    if (ia ^ ib) != (x & y) {
                                        continue;
                                    }
                                    let p = match role {
                                        0 => born(&state, &ea.clone(), f.matrix()),
                                        _ => born(&state, f.matrix(), &ea.clone()),
                                    };
                                    win += norm * p;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(win)
}

/// Per-question answer distributions from Born-rule traces on an explicit state,
/// in the question and outcome order of [`crate::protocols::round_model`].
pub fn explicit_round_model(s: &crate::io::AnyStrategy, state: &BipartiteState) -> Result<Vec<Vec<f64>>> {
    let eval = |e: &HermitianOperator, f: &HermitianOperator| Ok(born(state, e.matrix(), f.matrix()));
    let model = crate::protocols::round_model_with(s, &eval)?;
    Ok(model
        .questions
        .iter()
        .map(|q| q.outcomes.iter().map(|o| o.prob).collect())
        .collect())
}

/// Minimum of `sum a_i x_i` over `x >= 0`, `sum x = t1`, `sum a_i^2 x_i = t2`,
/// by enumerating basic feasible solutions (at most two nonzero coordinates)
/// and, for `n > 2`, a grid of `resolution` steps over the middle coordinates.
pub fn lp_min_bruteforce(a: &[f64], t1: f64, t2: f64, resolution: usize) -> Result<f64> {
    let n = a.len();
    if n == 0 {
        return validation("empty coefficient list");
    }
    let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
    let mut best = f64::INFINITY;
    let feasible_tol = 1e-12 * (1.0 + t1.abs() + t2.abs());
    for i in 0..n {
        if (sq[i] * t1 - t2).abs() <= feasible_tol {
            best = best.min(a[i] * t1);
        }
        for j in i + 1..n {
            let det = sq[j] - sq[i];
            if det.abs() < 1e-15 {
                continue;
            }
            let xj = (t2 - sq[i] * t1) / det;
            let xi = t1 - xj;
            if xi >= -feasible_tol && xj >= -feasible_tol {
                best = best.min(a[i] * xi + a[j] * xj);
            }
        }
    }
    if n > 2 && resolution > 0 {
        // Grid over x_1..x_{n-2} (middle coordinates), solving for the ends.
        let free = n - 2;
        let step = t1 / resolution as f64;
        let mut idx = vec![0usize; free];
        'grid: loop {
            let used: f64 = idx.iter().map(|&k| k as f64 * step).sum();
            if used <= t1 + feasible_tol {
                let m1: f64 = idx.iter().enumerate().map(|(k, &s)| s as f64 * step * sq[k + 1]).sum();
                let rest1 = t1 - used;
                let rest2 = t2 - m1;
                let det = sq[n - 1] - sq[0];
                if det.abs() > 1e-15 {
                    let xl = (rest2 - sq[0] * rest1) / det;
                    let x0 = rest1 - xl;
                    if x0 >= -feasible_tol && xl >= -feasible_tol {
                        let val = a[0] * x0
                            + a[n - 1] * xl
                            + idx.iter().enumerate().map(|(k, &s)| s as f64 * step * a[k + 1]).sum::<f64>();
                        best = best.min(val);
                    }
                }
            }
            for k in 0..free {
                idx[k] += 1;
                if idx[k] <= resolution {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(crate::error::Error::Infeasible("no feasible point found".into()))
    }
}
