mod common;

use aggregame::oracle::{grid_equilibrium_oracle, single_player_vne_oracle};
use aggregame::solver::{gvi_residual, preferred_start};
use aggregame::{
    solve_from, solve_svwe, solve_vne, Aggregation, CouplingConstraint, EquilibriumKind, EquilibriumResult, GameSpec,
    PlayerParams, PriceFunction, SolverConfig, StepRule,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn interval_player(lo: f64, hi: f64, omega: f64, y: f64) -> PlayerParams {
    PlayerParams {
        omega,
        preferred: vec![y],
        energy: y,
        lower: vec![lo],
        upper: vec![hi],
        budget_free: true,
    }
}

fn two_player() -> GameSpec {
    GameSpec::new(
        vec![interval_player(0.0, 1.0, 1.0, 1.0); 2],
        PriceFunction::affine(0.0, 1.0).unwrap(),
        None,
        Aggregation::Sum,
    )
    .unwrap()
}

fn tight() -> SolverConfig {
    SolverConfig {
        stop_tol: 1e-9,
        ..SolverConfig::default()
    }
}

fn fixed_result(game: &GameSpec, kind: EquilibriumKind, profile: Vec<Vec<f64>>) -> EquilibriumResult {
    let weights = game.weights();
    EquilibriumResult {
        kind,
        step_rule: StepRule::Constant(1.0),
        aggregate: game.aggregate(&profile, &weights),
        profile,
        duals: Vec::new(),
        weights,
        iterations: 0,
        step_halvings: 0,
        wall_time_s: 0.0,
        residual: 0.0,
        coupling_violation: None,
        converged: true,
        trace: Vec::new(),
    }
}

#[test]
fn closed_form_two_player_equilibria() {
    let game = two_player();
    let s = solve_svwe(&game, &[1.0, 1.0], &tight()).unwrap();
    let v = solve_vne(&game, &tight()).unwrap();
    assert!(s.converged && v.converged);
    assert!((s.aggregate[0] - 1.0).abs() < 1e-6 && (v.aggregate[0] - 0.8).abs() < 1e-6);
    for x in s.profile.iter().chain(&v.profile) {
        assert!((x[0] - s.aggregate[0] / 2.0).abs() < 1e-6 || (x[0] - v.aggregate[0] / 2.0).abs() < 1e-6);
    }
}

#[test]
fn residual_certifies_closed_form_and_flags_perturbation() {
    let game = two_player();
    let exact = fixed_result(&game, EquilibriumKind::Svwe, vec![vec![0.5], vec![0.5]]);
    assert!(gvi_residual(&game, &exact, 500, 1).unwrap() <= 1e-6);
    let exact = fixed_result(&game, EquilibriumKind::Vne, vec![vec![0.4], vec![0.4]]);
    assert!(gvi_residual(&game, &exact, 500, 1).unwrap() <= 1e-6);
    let bumped = fixed_result(&game, EquilibriumKind::Svwe, vec![vec![0.6], vec![0.5]]);
    assert!(gvi_residual(&game, &bumped, 500, 1).unwrap() > 1e-3);
    assert!(gvi_residual(&game, &exact, 0, 1).is_err());
}

#[test]
fn single_player_zero_price_returns_preferred() {
    let mut r = rng(5);
    let players = random_players(&mut r, 1, 4);
    let game = GameSpec::new(players, PriceFunction::constant(0.0).unwrap(), None, Aggregation::Sum).unwrap();
    let s = solve_svwe(&game, &[1.0], &tight()).unwrap();
    assert!(dist(&s.profile[0], &game.players[0].preferred) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn two_player_solutions_match_grid_oracle(
        lo in prop::collection::vec(0.0..1.0f64, 2),
        width in prop::collection::vec(0.2..2.0f64, 2),
        omega in prop::collection::vec(0.5..3.0f64, 2),
        y in prop::collection::vec(0.0..3.0f64, 2),
        cap in prop::option::of(0.5..3.0f64),
        vne in any::<bool>(),
    ) {
        let players: Vec<PlayerParams> = (0..2)
            .map(|n| interval_player(lo[n], lo[n] + width[n], omega[n], y[n].clamp(lo[n], lo[n] + width[n])))
            .collect();
        let coupling = cap
            .filter(|c| *c > lo[0] + lo[1] + 0.05)
            .map(|c| CouplingConstraint::new(vec![vec![1.0]], vec![c]).unwrap());
        let price = PriceFunction::new(vec![1.5], vec![0.2, -0.55], vec![0.5, 1.0]).unwrap();
        let game = GameSpec::new(players, price, coupling, Aggregation::Sum).unwrap();
        let kind = if vne { EquilibriumKind::Vne } else { EquilibriumKind::Svwe };
        let res = solve_from(&game, &[1.0, 1.0], kind, &tight(), preferred_start(&game).unwrap()).unwrap();
        prop_assert!(res.converged);
        let (xs, agg) = grid_equilibrium_oracle(&game, kind).unwrap();
        prop_assert!((res.aggregate[0] - agg).abs() <= 1e-3, "{} vs {agg}", res.aggregate[0]);
        for n in 0..2 {
            prop_assert!((res.profile[n][0] - xs[n]).abs() <= 1e-3);
        }
        if let Some(v) = res.coupling_violation {
            prop_assert!(v <= 1e-6);
        }
        prop_assert!(res.duals.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn single_player_vne_matches_ternary_oracle(
        lo in 0.0..1.0f64, width in 0.1..3.0f64, omega in 0.0..3.0f64, y in 0.0..4.0f64,
    ) {
        let player = interval_player(lo, lo + width, omega, y.clamp(lo, lo + width));
        let price = PriceFunction::new(vec![1.0, 2.0], vec![0.5, 0.0, -1.0], vec![0.5, 1.0, 1.5]).unwrap();
        let game = GameSpec::new(vec![player], price, None, Aggregation::Sum).unwrap();
        let res = solve_vne(&game, &tight()).unwrap();
        let x = single_player_vne_oracle(&game).unwrap();
        prop_assert!((res.profile[0][0] - x).abs() <= 1e-4, "{} vs {x}", res.profile[0][0]);
    }
}

#[test]
fn strongly_monotone_games_have_one_equilibrium() {
    for seed in 0..6 {
        let aggregation = if seed % 2 == 0 { Aggregation::Sum } else { Aggregation::Average };
        let mut game = random_game(seed, 4, 3, aggregation);
        let w = game.weights();
        let start = preferred_start(&game).unwrap();
        let agg0 = game.aggregate(&start, &w);
        // capacity that binds in the first period
        let mut row = vec![0.0; 3];
        row[0] = 1.0;
        game.coupling = Some(CouplingConstraint::new(vec![row], vec![0.9 * agg0[0]]).unwrap());
        assert!(game.classify_monotonicity().alpha.is_some());
        let cfg = SolverConfig { stop_tol: 1e-7, ..SolverConfig::default() };
        for kind in [EquilibriumKind::Svwe, EquilibriumKind::Vne] {
            let mut r = rng(seed + 100);
            let mut aggs = Vec::new();
            for _ in 0..10 {
                let init: Vec<Vec<f64>> = game.action_sets().iter().map(|s| random_point(&mut r, s)).collect();
                let res = solve_from(&game, &w, kind, &cfg, init).unwrap();
                assert!(res.converged, "seed {seed} {kind:?}");
                aggs.push(res.aggregate);
            }
            for a in &aggs[1..] {
                assert!(dist(a, &aggs[0]) <= 10.0 * cfg.stop_tol, "seed {seed} {kind:?}: {}", dist(a, &aggs[0]));
            }
        }
    }
}

#[test]
fn single_player_vne_cost_does_not_increase() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let t = r.random_range(1..=5);
        let game = random_game(seed, 1, t, Aggregation::Sum);
        let start = preferred_start(&game).unwrap();
        let res = solve_vne(&game, &SolverConfig::default()).unwrap();
        let f0 = game.modified_cost(0, &start[0], &start).unwrap();
        let f1 = game.modified_cost(0, &res.profile[0], &res.profile).unwrap();
        assert!(f1 <= f0 + 1e-12, "seed {seed}: {f1} > {f0}");
    }
}

#[test]
fn duals_stay_zero_without_binding_coupling() {
    let mut game = random_game(9, 5, 4, Aggregation::Sum);
    let res = solve_svwe(&game, &game.weights(), &SolverConfig::default()).unwrap();
    assert!(res.duals.is_empty() && res.coupling_violation.is_none());
    // a coupling row far from binding never moves the multipliers
    game.coupling = Some(CouplingConstraint::ramp_and_capacity(4, 1e6, 1e6));
    let cfg = SolverConfig { record_trace: true, ..SolverConfig::default() };
    let res = solve_svwe(&game, &game.weights(), &cfg).unwrap();
    assert!(res.duals.iter().all(|&l| l == 0.0));
    assert!(res.trace.iter().all(|row| row.coupling_violation < 0.0));
}

#[test]
fn profiles_are_feasible() {
    for seed in 0..10 {
        let game = random_game(seed, 6, 5, Aggregation::Average);
        let res = solve_vne(&game, &SolverConfig::default()).unwrap();
        for (x, s) in res.profile.iter().zip(game.action_sets()) {
            assert!(s.contains(x, 1e-8));
        }
    }
}
