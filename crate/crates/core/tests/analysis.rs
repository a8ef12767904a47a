mod common;

use aggregame::analysis::{
    corollary_bounds, fit_rate, prop3_bound, relative_error, spearman, thm1_bounds, BoundKind, Modulus,
};
use aggregame::projection::hausdorff_exact;
use aggregame::reduction::{compute_constants, delta_u_pair, reduce, ReductionConfig};
use aggregame::{solve_svwe, solve_vne, Aggregation, GameSpec, PlayerParams, PriceFunction, SolverConfig};
use common::*;
use proptest::prelude::*;

const TOL: f64 = 1e-8;

fn tight() -> SolverConfig {
    SolverConfig {
        stop_tol: TOL,
        max_iters: 2_000_000,
        ..SolverConfig::default()
    }
}

/// Average-aggregate distance between two results of the same game.
fn avg_gap(game: &GameSpec, a: &[f64], b: &[f64]) -> f64 {
    let d = dist(a, b);
    match game.aggregation {
        Aggregation::Sum => d / game.n_players as f64,
        Aggregation::Average => d,
    }
}

fn profile_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dist(x, y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn vne_svwe_certificates_hold() {
    for seed in 0..16 {
        let aggregation = if seed % 2 == 0 { Aggregation::Sum } else { Aggregation::Average };
        let n = 3 + (seed as usize % 6);
        let game = random_game(seed, n, 3, aggregation);
        let mono = game.classify_monotonicity();
        let consts = compute_constants(&game, 0.0).unwrap();
        let v = solve_vne(&game, &tight()).unwrap();
        let s = solve_svwe(&game, &game.weights(), &tight()).unwrap();
        assert!(v.converged && s.converged);
        let individual = profile_gap(&v.profile, &s.profile);
        let aggregate = avg_gap(&game, &v.aggregate, &s.aggregate);
        for c in thm1_bounds(consts.l2_estimate, Modulus::Alpha(mono.alpha.unwrap()), n, consts.r).unwrap() {
            let measured = match c.kind {
                BoundKind::Thm1Individual => individual,
                _ => aggregate,
            };
            assert!(c.validity && measured <= c.value + 10.0 * TOL, "seed {seed} {:?}: {measured} > {}", c.kind, c.value);
        }
        if aggregation == Aggregation::Average {
            let beta = Modulus::Beta(mono.beta.unwrap());
            let c = &thm1_bounds(consts.l2_estimate, beta, n, consts.r).unwrap()[0];
            assert!(aggregate <= c.value + 10.0 * TOL);
        }
    }
}

#[test]
fn corollary_certificate_holds_for_reduced_games() {
    let mut applicable = 0;
    for seed in 0..12 {
        let game = random_budgeted_game(seed, 12, 3, Aggregation::Average);
        let alpha = game.classify_monotonicity().alpha.unwrap();
        let v = solve_vne(&game, &tight()).unwrap();
        for i in [2, 4, 12] {
            let rep = reduce(&game, &ReductionConfig::new(i, seed)).unwrap();
            let (Some(k), true) = (rep.k, rep.rho_condition_ok) else { continue };
            applicable += 1;
            let red = solve_svwe(&rep.auxiliary_game, &rep.weights, &tight()).unwrap();
            let c = corollary_bounds(rep.l2_estimate, Modulus::Alpha(alpha), 12, k, rep.r, None, None).unwrap();
            let measured = dist(&v.aggregate, &red.aggregate);
            assert!(measured <= c.value + 10.0 * TOL, "seed {seed} I={i}: {measured} > {}", c.value);
        }
    }
    assert!(applicable >= 12);
}

#[test]
fn similar_players_play_similar_actions() {
    for seed in 0..20 {
        let game = random_game(seed, 5, 3, Aggregation::Sum);
        let s = solve_svwe(&game, &game.weights(), &tight()).unwrap();
        let sets = game.action_sets();
        for (n, m) in [(0, 1), (2, 3), (1, 4)] {
            let delta = hausdorff_exact(&sets[n], &sets[m]).unwrap();
            let consts = compute_constants(&game, delta).unwrap();
            let (pn, pm) = (&game.players[n], &game.players[m]);
            let du = delta_u_pair(pn.omega, &pn.preferred, pm.omega, &pm.preferred, consts.r + delta);
            let bound = prop3_bound(2.0 * pn.omega, consts.l1, consts.l1, delta, du, consts.r).unwrap();
            let measured = dist(&s.profile[n], &s.profile[m]);
            assert!(measured <= bound + 10.0 * TOL, "seed {seed}: {measured} > {bound}");
        }
    }
}

fn replicated(n: usize) -> GameSpec {
    let player = PlayerParams {
        omega: 1.0,
        preferred: vec![1.0],
        energy: 1.0,
        lower: vec![0.0],
        upper: vec![2.0],
        budget_free: true,
    };
    GameSpec::new(vec![player; n], PriceFunction::affine(0.0, 1.0).unwrap(), None, Aggregation::Average).unwrap()
}

#[test]
fn vne_svwe_gap_shrinks_like_one_over_n() {
    let gap = |n: usize| {
        let game = replicated(n);
        let v = solve_vne(&game, &tight()).unwrap();
        let s = solve_svwe(&game, &game.weights(), &tight()).unwrap();
        let measured = dist(&v.aggregate, &s.aggregate);
        let exact = 2.0 / (3.0 * (3.0 * n as f64 + 1.0));
        assert!((measured - exact).abs() <= 10.0 * TOL, "N={n}: {measured} vs {exact}");
        measured
    };
    let mut last = gap(5);
    for n in [10, 20, 40, 80] {
        let g = gap(n);
        assert!(g <= 0.75 * last + 10.0 * TOL, "N={n}: {g} vs {last}");
        last = g;
    }

    // replicas of a heterogeneous base game
    let base = random_game(3, 3, 2, Aggregation::Average);
    let rep_gap = |copies: usize| {
        let players: Vec<PlayerParams> = (0..copies).flat_map(|_| base.players.clone()).collect();
        let game = GameSpec::new(players, base.prices[0].clone(), None, Aggregation::Average).unwrap();
        let v = solve_vne(&game, &tight()).unwrap();
        let s = solve_svwe(&game, &game.weights(), &tight()).unwrap();
        dist(&v.aggregate, &s.aggregate)
    };
    let mut last = rep_gap(2);
    for copies in [4, 8, 16] {
        let g = rep_gap(copies);
        assert!(g <= 0.75 * last + 10.0 * TOL, "copies {copies}: {g} vs {last}");
        last = g;
    }
}

proptest! {
    #[test]
    fn rate_fit_recovers_power_laws(a in 0.05..2.0f64, c in 0.01..10.0f64) {
        let xs = [5.0, 10.0, 20.0, 50.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(-a)).collect();
        let fit = fit_rate(&xs, &ys).unwrap();
        prop_assert!((fit.a - a).abs() < 1e-9 && (fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spearman_is_one_for_increasing_data(mut xs in prop::collection::vec(0.0..100.0f64, 3..20)) {
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 3);
        let ys: Vec<f64> = xs.iter().map(|x| x.exp().ln_1p()).collect();
        prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_error_is_scale_free(v in prop::collection::vec(0.1..10.0f64, 1..10), k in 0.01..100.0f64, e in -0.5..0.5f64) {
        let w: Vec<f64> = v.iter().map(|x| x * (1.0 + e)).collect();
        let a = relative_error(&v, &w).unwrap();
        let vs: Vec<f64> = v.iter().map(|x| x * k).collect();
        let ws: Vec<f64> = w.iter().map(|x| x * k).collect();
        prop_assert!((a - e.abs()).abs() < 1e-12);
        prop_assert!((relative_error(&vs, &ws).unwrap() - a).abs() < 1e-12);
    }
}
