//! Random operators and strategies for property tests, search and the CLI.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::games::two_out_of_n::product_pair_povm;
use crate::games::{
    magic_square::joint_projectors, ChshStrategy, MagicSquareStrategy, MsQuestion, PairKey, Povm,
    TwoOutOfNStrategy,
};
use crate::linalg::{c, CMat, HermitianOperator};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Ginibre matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    CMat::from_fn(d, d, |_, _| c(gaussian(rng), gaussian(rng)))
}

/// GUE-like Hermitian matrix.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    let g = ginibre(d, rng);
    HermitianOperator::symmetrized(&g + g.adjoint())
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMat {
    let qr = ginibre(d, rng).qr();
    let (mut q, rmat) = (qr.q(), qr.r());
    for j in 0..d {
        let diag = rmat[(j, j)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `U diag(values) U*` for a Haar-random `U`.
pub fn random_with_spectrum<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> HermitianOperator {
    HermitianOperator::diagonal(values).conjugate_by(&random_unitary(values.len(), rng))
}

/// Binary observable with `plus` eigenvalues `+1` in a random basis.
pub fn random_binary_observable<R: Rng + ?Sized>(d: usize, plus: usize, rng: &mut R) -> HermitianOperator {
    let values: Vec<f64> = (0..d).map(|k| if k < plus { 1.0 } else { -1.0 }).collect();
    random_with_spectrum(&values, rng)
}

/// Traceless binary observable (`d` even).
pub fn random_traceless_binary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    random_binary_observable(d, d / 2, rng)
}

/// Contraction with eigenvalues in `[-1, 1]` and normalized trace `target`.
pub fn random_contraction_with_trace<R: Rng + ?Sized>(d: usize, target: f64, rng: &mut R) -> HermitianOperator {
    let mut values: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    // Shift toward the target, then clip; repeat until the mean settles.
    for _ in 0..64 {
        let mean = values.iter().sum::<f64>() / d as f64;
        let shift = target - mean;
        if shift.abs() < 1e-15 {
            break;
        }
        for v in values.iter_mut() {
            *v = (*v + shift).clamp(-1.0, 1.0);
        }
    }
    let mean = values.iter().sum::<f64>() / d as f64;
    let residual = target - mean;
    if residual.abs() > 1e-15 {
        // Clipping left some mass; distribute over entries with room.
        let room: Vec<usize> = (0..d)
            .filter(|&k| if residual > 0.0 { values[k] < 1.0 } else { values[k] > -1.0 })
            .collect();
        let per = residual * d as f64 / room.len().max(1) as f64;
        for k in room {
            values[k] = (values[k] + per).clamp(-1.0, 1.0);
        }
    }
    random_with_spectrum(&values, rng)
}

/// Random observable used for search: traceless binary or traceless contraction.
pub fn random_traceless_observable<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianOperator {
    if rng.random_bool(0.5) {
        random_traceless_binary(d, rng)
    } else {
        random_contraction_with_trace(d, 0.0, rng)
    }
}

/// Unit vector uniform on the sphere.
pub fn random_bloch<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [gaussian(rng), gaussian(rng), gaussian(rng)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-9 {
            return v.map(|x| x / norm);
        }
    }
}

/// `v . (X, Y, Z)`.
pub fn bloch_observable(v: [f64; 3]) -> HermitianOperator {
    let p = crate::pauli::pauli_matrices();
    HermitianOperator::symmetrized(&p[1] * c(v[0], 0.0) + &p[2] * c(v[1], 0.0) + &p[3] * c(v[2], 0.0))
}

/// Random CHSH strategy on `n` qubits; every observable has normalized trace
/// at most `max_trace` in absolute value (`0` gives traceless observables).
pub fn random_chsh_strategy<R: Rng + ?Sized>(n: usize, max_trace: f64, rng: &mut R) -> Result<ChshStrategy> {
    let d = 1usize << n;
    let draw = |rng: &mut R| {
        if max_trace == 0.0 {
            random_traceless_observable(d, rng)
        } else {
            let t = rng.random_range(-max_trace..=max_trace);
            random_contraction_with_trace(d, t, rng)
        }
    };
    let p = [draw(rng), draw(rng)];
    let q = [draw(rng), draw(rng)];
    ChshStrategy::new(n, p, q)
}

/// `d` labels from `0..k`, each used `d / k` times, in random order.
fn balanced_labels<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..d).map(|i| i % k).collect();
    labels.shuffle(rng);
    labels
}

/// Eight-outcome POVM in a random basis: basis vectors are spread evenly over
/// the four outcomes of the required parity, then mixed with `eta I / 8` and
/// with `bias I` on one of those outcomes. Every derived observable has
/// normalized trace at most `bias` in absolute value.
pub fn random_ms_povm<R: Rng + ?Sized>(d: usize, q: MsQuestion, eta: f64, bias: f64, rng: &mut R) -> Result<Povm> {
    let u = random_unitary(d, rng);
    let good: Vec<usize> = (0..8).filter(|&o| crate::games::magic_square::parity_ok(q, o)).collect();
    let mut elements = vec![CMat::zeros(d, d); 8];
    for (k, label) in balanced_labels(d, good.len(), rng).into_iter().enumerate() {
        let col = u.column(k).into_owned();
        elements[good[label]] += &col * col.adjoint();
    }
    let id = CMat::identity(d, d);
    let favored = good[rng.random_range(0..good.len())];
    let keep = 1.0 - eta - bias;
    Povm::new(
        elements
            .into_iter()
            .enumerate()
            .map(|(o, e)| {
                let extra = if o == favored { bias } else { 0.0 };
                HermitianOperator::symmetrized(e * c(keep, 0.0) + &id * c(eta / 8.0 + extra, 0.0))
            })
            .collect(),
    )
}

/// Joint projectors of three commuting traceless binary observables.
fn random_commuting_povm<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Povm> {
    let u = random_unitary(d, rng);
    let ops: Vec<HermitianOperator> = (0..3)
        .map(|_| {
            let values: Vec<f64> = balanced_labels(d, 2, rng).into_iter().map(|b| 1.0 - 2.0 * b as f64).collect();
            HermitianOperator::diagonal(&values).conjugate_by(&u)
        })
        .collect();
    Povm::new(joint_projectors([&ops[0], &ops[1], &ops[2]]))
}

/// Random Magic Square strategy on `n` four-dimensional registers whose
/// observables (Bob's and Alice's derived ones) all have normalized trace at
/// most `max_trace`. Alice's POVMs respect parity, except with probability
/// 1/4 per question, where they come from commuting traceless observables.
pub fn random_ms_strategy<R: Rng + ?Sized>(n: usize, max_trace: f64, rng: &mut R) -> Result<MagicSquareStrategy> {
    let d = 4usize.pow(n as u32);
    let alice = MsQuestion::ALL
        .iter()
        .map(|&q| {
            if rng.random_bool(0.25) {
                random_commuting_povm(d, rng)
            } else {
                let eta = rng.random_range(0.0..0.5);
                let bias = rng.random_range(0.0..=max_trace.min(0.5));
                random_ms_povm(d, q, eta, bias, rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let bob = (0..3)
        .map(|_| {
            (0..3)
                .map(|_| {
                    if max_trace == 0.0 {
                        random_traceless_observable(d, rng)
                    } else {
                        let t = rng.random_range(-max_trace..=max_trace);
                        random_contraction_with_trace(d, t, rng)
                    }
                })
                .collect()
        })
        .collect();
    MagicSquareStrategy::new(n, alice, bob)
}

/// Random 2-out-of-n strategy with traceless binary singles and product pair POVMs.
pub fn random_two_out_of_n_strategy<R: Rng + ?Sized>(
    n: usize,
    n_prime: usize,
    rng: &mut R,
) -> Result<TwoOutOfNStrategy> {
    let d = 1usize << n_prime;
    let singles = |rng: &mut R| -> Vec<[HermitianOperator; 2]> {
        (0..n)
            .map(|_| [random_traceless_binary(d, rng), random_traceless_binary(d, rng)])
            .collect()
    };
    let alice_singles = singles(rng);
    let bob_singles = singles(rng);
    let pairs = |rng: &mut R| -> Result<BTreeMap<PairKey, Povm>> {
        let mut out = BTreeMap::new();
        for key in PairKey::all(n) {
            // Commuting pair: both diagonal in one random basis.
            let u = random_unitary(d, rng);
            let diag = |rng: &mut R| {
                let values: Vec<f64> = (0..d).map(|k| if (k + rng.random_range(0..2)) % 2 == 0 { 1.0 } else { -1.0 }).collect();
                HermitianOperator::diagonal(&values).conjugate_by(&u)
            };
            let a = diag(rng);
            let b = diag(rng);
            out.insert(key, product_pair_povm(&a, &b)?);
        }
        Ok(out)
    };
    let alice_pairs = pairs(rng)?;
    let bob_pairs = pairs(rng)?;
    TwoOutOfNStrategy::new(n, n_prime, alice_singles, bob_singles, alice_pairs, bob_pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_unitary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_and_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(8, &mut rng);
        assert!(is_unitary(&u, 1e-12));
        let b = random_traceless_binary(8, &mut rng);
        assert!(b.normalized_trace().abs() < 1e-12);
        assert!((b.square().matrix() - CMat::identity(8, 8)).camax() < 1e-12);
        for target in [-0.2, 0.0, 0.13] {
            let a = random_contraction_with_trace(8, target, &mut rng);
            assert!((a.normalized_trace() - target).abs() < 1e-12);
            assert!(a.spectral_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn random_strategies_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(random_chsh_strategy(2, 0.0, &mut rng).is_ok());
        assert!(random_chsh_strategy(2, 0.2, &mut rng).is_ok());
        assert!(random_ms_strategy(1, 0.1, &mut rng).is_ok());
        assert!(random_two_out_of_n_strategy(3, 3, &mut rng).is_ok());
    }

    #[test]
    fn ms_trace_error_respects_cap() {
        use crate::games::TraceError;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2] {
            for _ in 0..20 {
                assert!(random_ms_strategy(n, 0.15, &mut rng).unwrap().trace_error() <= 0.15 + 1e-12);
                assert!(random_ms_strategy(n, 0.0, &mut rng).unwrap().trace_error() < 1e-12);
            }
        }
    }
}
