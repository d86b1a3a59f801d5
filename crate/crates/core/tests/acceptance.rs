//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use noisy_nonlocal::certificates::{
    chsh_sos_certificate, chsh_upper_bound, classical_baselines, magic_square_upper_bound, ms_game_certificate,
};
use noisy_nonlocal::extraction::{
    chsh_selftest, general_noise_selftest, lp_min_closed_form, ms_selftest, nearest_binary_observable,
    registers_distinct, two_out_of_n_selftest, SelfTestReport,
};
use noisy_nonlocal::games::{
    canonical_chsh_strategy, canonical_magic_square_strategy, canonical_two_out_of_n_strategy, chsh_violation,
    magic_square_value, rotated_bob_ms_strategy, rotated_bob_strategy, rotated_bob_two_out_of_n_strategy,
    trace_error, two_out_of_n_value, ChshStrategy, Game, Noise,
};
use noisy_nonlocal::io::AnyStrategy;
use noisy_nonlocal::linalg::HermitianOperator;
use noisy_nonlocal::oracles::{
    explicit_chsh_violation, explicit_magic_square_value, explicit_two_out_of_n_win, lp_min_bruteforce,
    naive_pauli_expand,
};
use noisy_nonlocal::optimizer::{grid_bruteforce_chsh_qubit, seesaw_chsh_restarts};
use noisy_nonlocal::pauli::{expand_pauli, hs_distance, StandardBasis};
use noisy_nonlocal::protocols::{estimate_noise_rate, round_model, run_protocol, simulate_rounds, ProtocolParams};
use noisy_nonlocal::random::{
    random_binary_observable, random_chsh_strategy, random_hermitian, random_ms_strategy,
    random_two_out_of_n_strategy,
};
use noisy_nonlocal::states::{
    bit_phase_flip_state, diagonalize_correlation, make_depolarized_epr, maximal_correlation, ppt_separability_2x2,
    RegisterKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn closed_form_optima() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut parity_ok = true;
    for rho in [0.3, 0.7, 0.9] {
        for n in [1, 3] {
            let s = canonical_chsh_strategy(n, n).unwrap();
            let v = chsh_violation(&s, &Noise::Depolarizing(rho)).unwrap().violation;
            worst = worst.max((v - 2.0 * SQRT_2 * rho).abs());
        }
        for (n, l) in [(1, 1), (2, 2)] {
            let ms = magic_square_value(&canonical_magic_square_strategy(n, l).unwrap(), rho).unwrap();
            worst = worst.max((ms.overall - (1.0 + rho) / 2.0).abs());
            parity_ok &= (ms.parity_pass - 1.0).abs() < 1e-12;
        }
        for (n, n_prime, regs) in [(2, 2, vec![1, 2]), (3, 4, vec![4, 1, 2]), (4, 5, vec![2, 5, 1, 3])] {
            let s = canonical_two_out_of_n_strategy(n, n_prime, &regs).unwrap();
            let w = two_out_of_n_value(&s, rho).unwrap().report.win_prob;
            worst = worst.max((w - (0.5 + SQRT_2 * rho / 4.0)).abs());
        }
    }
    let elapsed = start.elapsed();
    (
        worst < 1e-9 && parity_ok && within(elapsed, 10),
        format!("max deviation {worst:.2e}, parity {parity_ok}, {elapsed:.2?}"),
    )
}

fn bound_soundness() -> Outcome {
    let start = Instant::now();
    let samples = 10_000u64;
    let chsh_excess = |max_trace: f64, offset: u64| -> f64 {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut r = rng(offset + i);
                let n = 1 + (i % 3) as usize;
                let rho = r.random_range(0.05..=1.0);
                let s = random_chsh_strategy(n, max_trace, &mut r).unwrap();
                let v = chsh_violation(&s, &Noise::Depolarizing(rho)).unwrap().violation;
                v - chsh_upper_bound(rho, trace_error(&s)).unwrap()
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    let traceless = chsh_excess(0.0, 0);
    let traced = chsh_excess(0.2, 1 << 32);
    let ms = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng((2 << 32) + i);
            let n = if i % 10 == 0 { 2 } else { 1 };
            let rho = r.random_range(0.05..=1.0);
            let s = random_ms_strategy(n, 0.2, &mut r).unwrap();
            let v = magic_square_value(&s, rho).unwrap().overall;
            v - magic_square_upper_bound(rho, trace_error(&s)).unwrap()
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed();
    (
        traceless <= 1e-9 && traced <= 1e-9 && ms <= 1e-9 && within(elapsed, 120),
        format!("max excess: traceless {traceless:.3e}, eps_tr<=0.2 {traced:.3e}, magic square {ms:.3e}, {elapsed:.2?}"),
    )
}

fn sos_identity() -> Outcome {
    let (residual, min_square) = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(7_000 + i);
            let rho = r.random_range(0.05..=1.0);
            let chsh = chsh_sos_certificate(&random_chsh_strategy(1 + (i % 2) as usize, 0.3, &mut r).unwrap(), rho).unwrap();
            let ms = ms_game_certificate(&random_ms_strategy(1, 0.3, &mut r).unwrap(), rho).unwrap();
            let residual = (chsh.term_sum() - chsh.gap_expectation)
                .abs()
                .max((ms.term_sum() - ms.gap_expectation).abs());
            (residual, chsh.min_square().min(ms.min_square()))
        })
        .reduce(|| (0.0, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)));
    (
        residual <= 1e-9 && min_square >= -1e-9,
        format!("max identity residual {residual:.2e}, min square {min_square:.2e}"),
    )
}

fn transform_oracle() -> Outcome {
    let pauli = StandardBasis::pauli();
    let mut transform = 0.0f64;
    for n in 1..=4usize {
        for i in 0..100u64 {
            let h = random_hermitian(1 << n, &mut rng(100 * n as u64 + i));
            let fast = expand_pauli(&h).unwrap();
            let naive = naive_pauli_expand(&h, &pauli, n);
            for (a, b) in fast.coeffs.iter().zip(&naive) {
                transform = transform.max((a - b).abs());
            }
        }
    }
    let mut game = 0.0f64;
    for i in 0..20u64 {
        let mut r = rng(9_000 + i);
        let rho = r.random_range(0.0..=1.0);
        for n in 1..=2 {
            let s = random_chsh_strategy(n, 0.3, &mut r).unwrap();
            let fast = chsh_violation(&s, &Noise::Depolarizing(rho)).unwrap().violation;
            game = game.max((fast - explicit_chsh_violation(&s, rho).unwrap()).abs());
        }
        let ms = random_ms_strategy(1, 0.3, &mut r).unwrap();
        let fast = magic_square_value(&ms, rho).unwrap();
        let (overall, _, _) = explicit_magic_square_value(&ms, rho).unwrap();
        game = game.max((fast.overall - overall).abs());
        let two = random_two_out_of_n_strategy(2, 2, &mut r).unwrap();
        let fast = two_out_of_n_value(&two, rho).unwrap().report.win_prob;
        game = game.max((fast - explicit_two_out_of_n_win(&two, rho).unwrap()).abs());
    }
    let ms2 = canonical_magic_square_strategy(2, 1).unwrap();
    let (overall, _, _) = explicit_magic_square_value(&ms2, 0.55).unwrap();
    game = game.max((magic_square_value(&ms2, 0.55).unwrap().overall - overall).abs());
    (
        transform < 1e-10 && game < 1e-9,
        format!("transform deviation {transform:.2e}, game value deviation {game:.2e}"),
    )
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

struct Family {
    ok: bool,
    detail: String,
}

/// Runs a perturbation family over decreasing angles and checks recovery,
/// monotone shrinkage to zero and the square-root scaling of distances.
fn scaling_family(name: &str, report: impl Fn(f64) -> SelfTestReport, recovered: impl Fn(&SelfTestReport) -> bool) -> Family {
    let thetas = [0.3, 0.2, 0.1, 0.05, 0.02];
    let reports: Vec<SelfTestReport> = thetas.iter().map(|&t| report(t)).collect();
    let eps: Vec<f64> = reports.iter().map(|r| r.eps_v).collect();
    let dist: Vec<f64> = reports.iter().map(|r| r.max_distance()).collect();
    let all_recovered = reports.iter().all(&recovered);
    let monotone = dist.windows(2).all(|w| w[1] < w[0]);
    let tiny = report(1e-8);
    let vanishes = tiny.max_distance() < 1e-6 && recovered(&tiny);
    let positive = eps.iter().all(|&e| e > 0.0);
    let slope = if positive { log_slope(&eps, &dist) } else { f64::NAN };
    let ok = all_recovered && monotone && vanishes && (0.4..=0.6).contains(&slope);
    Family {
        ok,
        detail: format!(
            "{name}: recovered {all_recovered}, monotone {monotone}, limit {:.1e}, slope {slope:.3}",
            tiny.max_distance()
        ),
    }
}

fn selftest_scaling() -> Outcome {
    let start = Instant::now();
    let rho = 0.7;
    let chsh = scaling_family(
        "chsh",
        |t| chsh_selftest(&rotated_bob_strategy(3, 2, t).unwrap(), rho).unwrap(),
        |r| r.register_indices == vec![Some(2)] && !r.register_ambiguous,
    );
    let ms = scaling_family(
        "magic square",
        |t| ms_selftest(&rotated_bob_ms_strategy(2, 2, t).unwrap(), rho).unwrap(),
        |r| r.register_indices == vec![Some(2)],
    );
    let regs = [3, 1, 4];
    let two = scaling_family(
        "2-of-n",
        |t| two_out_of_n_selftest(&rotated_bob_two_out_of_n_strategy(3, 4, &regs, t).unwrap(), rho).unwrap(),
        |r| registers_distinct(r) && r.register_indices == regs.iter().map(|&k| Some(k)).collect::<Vec<_>>(),
    );
    let elapsed = start.elapsed();
    (
        chsh.ok && ms.ok && two.ok && within(elapsed, 60),
        format!("{}; {}; {}; {elapsed:.2?}", chsh.detail, ms.detail, two.detail),
    )
}

fn biased_player() -> ChshStrategy {
    let mut s = canonical_chsh_strategy(1, 1).unwrap();
    let z = s.p[0].clone();
    s.p[0] = &HermitianOperator::identity(2).scale(0.2) + &z.scale(0.8);
    s
}

fn acceptance_rate(strategy: &ChshStrategy, runs: u64) -> f64 {
    let any = AnyStrategy::Chsh(strategy.clone());
    let accepted = (0..runs)
        .into_par_iter()
        .filter(|&seed| {
            let mut params = ProtocolParams::new(Game::Chsh, 10_000, 0.01, seed).unwrap();
            params.record_trials = false;
            run_protocol(&params, &any, &Noise::Depolarizing(0.8)).unwrap().verdict.accepted
        })
        .count();
    accepted as f64 / runs as f64
}

fn protocol_statistics() -> Outcome {
    let honest = acceptance_rate(&canonical_chsh_strategy(1, 1).unwrap(), 200);
    let biased = biased_player();
    let trace = trace_error(&biased);
    let rejected = 1.0 - acceptance_rate(&biased, 200);
    (
        honest >= 0.95 && rejected >= 0.99,
        format!("honest acceptance {honest:.3}, rejection of trace-{trace:.1} player {rejected:.3}"),
    )
}

fn noise_estimation() -> Outcome {
    let rho = 0.7;
    let model = round_model(&AnyStrategy::Chsh(canonical_chsh_strategy(1, 1).unwrap()), &Noise::Depolarizing(rho)).unwrap();
    let rounds = 100_000;
    let outcomes: Vec<(f64, bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (wins, _) = simulate_rounds(&model, 50_000 + seed, rounds);
            let est = estimate_noise_rate(Game::Chsh, wins, rounds, 0.99).unwrap();
            let est95 = estimate_noise_rate(Game::Chsh, wins, rounds, 0.95).unwrap();
            let covers = |iv: [f64; 2]| iv[0] <= rho && rho <= iv[1];
            (est.rho_hat, covers(est.interval), covers(est95.interval))
        })
        .collect();
    let close = outcomes.iter().filter(|o| (o.0 - rho).abs() <= 0.02).count() as f64 / 100.0;
    let coverage = outcomes.iter().filter(|o| o.1).count() as f64 / 100.0;
    let coverage95 = outcomes.iter().filter(|o| o.2).count() as f64 / 100.0;
    (
        close >= 0.95 && (coverage - 0.99).abs() <= 0.03,
        format!("|rho-0.7|<=0.02 in {close:.2}, coverage at 99%: {coverage:.2}, at 95%: {coverage95:.2}"),
    )
}

fn general_noise() -> Outcome {
    let rho = 0.8;
    let state = bit_phase_flip_state(rho).unwrap();
    let spectrum = diagonalize_correlation(&state).unwrap();
    let expected = [1.0, rho, rho, 2.0 * rho - 1.0];
    let spec_err = spectrum
        .singular_values
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let r = maximal_correlation(&state).unwrap();
    let report = general_noise_selftest(&canonical_chsh_strategy(1, 1).unwrap(), &spectrum).unwrap();
    let v = report.diagnostic("violation").unwrap();
    let ok = spec_err < 1e-9 && (r - rho).abs() < 1e-9 && (v - 2.0 * SQRT_2 * rho).abs() < 1e-9 && report.max_distance() < 1e-9;
    (
        ok,
        format!(
            "spectrum error {spec_err:.1e}, maximal correlation {r:.6}, violation {v:.9}, max distance {:.1e}",
            report.max_distance()
        ),
    )
}

fn lemma_oracles() -> Outcome {
    let lp = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(20_000 + i);
            let len = r.random_range(2..=4usize);
            let mut a: Vec<f64> = (0..len).map(|_| r.random_range(0.0..2.0)).collect();
            a.sort_by(|x, y| y.total_cmp(x));
            let t1 = r.random_range(0.1..2.0);
            let (lo, hi) = (a[len - 1] * a[len - 1] * t1, a[0] * a[0] * t1);
            let t2 = lo + (hi - lo) * r.random_range(0.0..=1.0);
            (lp_min_closed_form(&a, t1, t2).unwrap() - lp_min_bruteforce(&a, t1, t2, 60).unwrap()).abs()
        })
        .reduce(|| 0.0, f64::max);
    let nearest_ok = (0..50u64).all(|i| {
        let mut r = rng(30_000 + i);
        let d = 1 << r.random_range(1..=3usize);
        let a = random_hermitian(d, &mut r).scale(0.5);
        let best = nearest_binary_observable(&a).distance;
        (0..100).all(|_| {
            let plus = r.random_range(0..=d);
            hs_distance(&a, &random_binary_observable(d, plus, &mut r)).unwrap() >= best - 1e-12
        })
    });
    let separable_at = |rho: f64| {
        ppt_separability_2x2(&make_depolarized_epr(rho, 1, RegisterKind::Qubit).unwrap())
            .unwrap()
            .separable
    };
    let grid: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
    let flip = grid.windows(2).find(|w| separable_at(w[0]) && !separable_at(w[1])).map(|w| w[1]);
    let flip_ok = flip.is_some_and(|f| (f - 1.0 / 3.0).abs() <= 1e-3)
        && grid.iter().filter(|&&g| separable_at(g)).all(|&g| g <= 1.0 / 3.0 + 1e-3);
    let chsh_classical = classical_baselines(Game::Chsh).unwrap();
    let ms_classical = classical_baselines(Game::MagicSquare).unwrap();
    let classical_ok = (chsh_classical - 0.75).abs() < 1e-12 && (ms_classical - 17.0 / 18.0).abs() < 1e-12;
    (
        lp < 1e-6 && nearest_ok && flip_ok && classical_ok,
        format!(
            "lp deviation {lp:.1e}, nearest binary minimal {nearest_ok}, ppt flip at {flip:?}, classical {chsh_classical} / {ms_classical:.6}"
        ),
    )
}

fn optimizer_tightness() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [0.5, 0.9] {
        let target = 2.0 * SQRT_2 * rho;
        let best = seesaw_chsh_restarts(rho, 1, 50, 77, 200, 1e-12).unwrap().best_value;
        let grid = grid_bruteforce_chsh_qubit(rho, 48).unwrap();
        ok &= best >= target - 1e-6 && (grid - best).abs() <= 0.01;
        parts.push(format!("rho {rho}: see-saw {best:.9}, grid {grid:.6}, optimum {target:.9}"));
    }
    (ok, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed-form optima", closed_form_optima),
        ("bound soundness", bound_soundness),
        ("SoS identity", sos_identity),
        ("transform oracle", transform_oracle),
        ("self-test scaling", selftest_scaling),
        ("protocol statistics", protocol_statistics),
        ("noise estimation", noise_estimation),
        ("general noise", general_noise),
        ("lemma oracles", lemma_oracles),
        ("optimizer tightness", optimizer_tightness),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check();
        if !pass {
            failures += 1;
        }
        println!("acceptance {:>2} {name}: {} ({detail})", k + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
