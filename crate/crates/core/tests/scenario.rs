use aggregame::scenario::{generate, generate_unchecked, shrink, ScenarioConfig};
use aggregame::Error;
use proptest::prelude::*;

fn uniform_mean_ok(values: &[f64], lo: f64, hi: f64) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = (hi - lo) / 12f64.sqrt() / n.sqrt();
    values.iter().all(|v| (lo..=hi).contains(v)) && (mean - 0.5 * (lo + hi)).abs() <= 3.0 * sigma
}

#[test]
fn parameter_marginals_match_declared_ranges() {
    for seed in 1..=5 {
        let cfg = ScenarioConfig { seed, n_players: 400, ..ScenarioConfig::default() };
        let game = generate_unchecked(&cfg).unwrap();
        let energy: Vec<f64> = game.players.iter().map(|p| p.energy).collect();
        let omega: Vec<f64> = game.players.iter().map(|p| p.omega).collect();
        let tau: Vec<f64> = game
            .players
            .iter()
            .map(|p| p.upper.iter().filter(|&&u| u > 0.0).count() as f64)
            .collect();
        assert!(uniform_mean_ok(&energy, 1.0, 30.0), "seed {seed}");
        assert!(uniform_mean_ok(&omega, 1.0, 10.0), "seed {seed}");
        // discrete uniform on {4..24}: variance ((b-a+1)^2-1)/12
        let n = tau.len() as f64;
        let mean = tau.iter().sum::<f64>() / n;
        let sigma = ((21.0f64 * 21.0 - 1.0) / 12.0).sqrt() / n.sqrt();
        assert!(tau.iter().all(|t| (4.0..=24.0).contains(t)) && (mean - 14.0).abs() <= 3.0 * sigma);
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = ScenarioConfig { n_players: 300, seed: 17, ..ScenarioConfig::default() };
    assert_eq!(generate(&cfg).unwrap().to_json(), generate(&cfg).unwrap().to_json());
    let other = ScenarioConfig { seed: 18, ..cfg.clone() };
    assert_ne!(generate(&cfg).unwrap().to_json(), generate(&other).unwrap().to_json());
}

#[test]
fn infeasible_coupling_is_reported() {
    let cfg = ScenarioConfig { n_players: 50, capacity: 1.0, ..ScenarioConfig::default() };
    assert!(matches!(generate(&cfg), Err(Error::Infeasible(_))));
    assert!(generate_unchecked(&cfg).is_ok());
    let uncoupled = ScenarioConfig { coupled: false, ..cfg };
    assert!(generate(&uncoupled).is_ok());
}

#[test]
fn paper_config_shrinks_to_desk_scale() {
    let cfg = shrink(&ScenarioConfig::default(), 0.1, false).unwrap();
    let game = generate(&cfg).unwrap();
    assert_eq!(game.n_players, 200);
    let c = game.coupling.unwrap();
    assert_eq!(c.rows(), 26);
    assert!(c.rhs.iter().any(|&b| (b - 140.0).abs() < 1e-9) && c.rhs.iter().any(|&b| (b - 5.0).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn preferred_profiles_are_feasible(
        seed in any::<u64>(),
        horizon in 4usize..30,
        min_duration in 1usize..5,
        e_lo in 0.5..10.0f64,
        e_span in 0.0..30.0f64,
    ) {
        let cfg = ScenarioConfig {
            n_players: 40,
            horizon,
            seed,
            min_duration: min_duration.min(horizon),
            energy_range: [e_lo, e_lo + e_span],
            coupled: false,
            ..ScenarioConfig::default()
        };
        let game = generate(&cfg).unwrap();
        for p in &game.players {
            let set = p.action_set();
            prop_assert!(set.contains(&p.preferred, 1e-9));
            prop_assert!((p.preferred.iter().sum::<f64>() - p.energy).abs() <= 1e-9 * p.energy.max(1.0));
            let window: Vec<usize> = (0..horizon).filter(|&t| p.upper[t] > 0.0).collect();
            prop_assert!(window.len() >= cfg.min_duration);
            prop_assert_eq!(window.last().unwrap() - window[0] + 1, window.len());
            // plug and charge: once a period is below its upper bound, later
            // periods sit at their lower bound
            let mut topped = true;
            for &t in &window {
                if !topped {
                    prop_assert!((p.preferred[t] - p.lower[t]).abs() <= 1e-12);
                }
                if p.preferred[t] < p.upper[t] - 1e-9 {
                    topped = false;
                }
            }
        }
    }
}
