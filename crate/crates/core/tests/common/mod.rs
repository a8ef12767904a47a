#![allow(dead_code)]

use aggregame::{Aggregation, BoxSimplexSet, GameSpec, PlayerParams, PriceFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Box with optional budget; widths are sometimes zero.
pub fn set_strategy(max_t: usize) -> impl Strategy<Value = BoxSimplexSet> {
    (1..=max_t)
        .prop_flat_map(|t| {
            (
                prop::collection::vec(0.0..2.0f64, t),
                prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0..3.0f64], t),
                prop::option::weighted(0.8, 0.0..=1.0f64),
            )
        })
        .prop_map(|(lower, width, theta)| {
            let upper: Vec<f64> = lower.iter().zip(&width).map(|(l, w)| l + w).collect();
            let energy = theta.map(|th| {
                let lo: f64 = lower.iter().sum();
                let hi: f64 = upper.iter().sum();
                lo + th * (hi - lo)
            });
            BoxSimplexSet::new(energy, lower, upper).unwrap()
        })
}

pub fn random_set(rng: &mut ChaCha8Rng, t: usize) -> BoxSimplexSet {
    let lower: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..2.0)).collect();
    let upper: Vec<f64> = lower
        .iter()
        .map(|l| if rng.random_bool(0.15) { *l } else { l + rng.random_range(0.0..3.0) })
        .collect();
    let energy = if rng.random_bool(0.8) {
        let lo: f64 = lower.iter().sum();
        let hi: f64 = upper.iter().sum();
        Some(lo + rng.random_range(0.0..=1.0) * (hi - lo))
    } else {
        None
    };
    BoxSimplexSet::new(energy, lower, upper).unwrap()
}

/// A feasible point drawn by projecting a random vector.
pub fn random_point(rng: &mut ChaCha8Rng, set: &BoxSimplexSet) -> Vec<f64> {
    let v: Vec<f64> = (0..set.dim()).map(|_| rng.random_range(-4.0..6.0)).collect();
    set.project(&v).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random budgeted players sharing one horizon.
pub fn random_players(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Vec<PlayerParams> {
    (0..n)
        .map(|_| {
            let set = random_set(rng, t);
            let preferred = random_point(rng, &set);
            PlayerParams {
                omega: rng.random_range(0.5..5.0),
                energy: set.energy.unwrap_or(1.0),
                budget_free: set.energy.is_none(),
                preferred,
                lower: set.lower,
                upper: set.upper,
            }
        })
        .collect()
}

pub fn random_game(seed: u64, n: usize, t: usize, aggregation: Aggregation) -> GameSpec {
    let mut r = rng(seed);
    let players = random_players(&mut r, n, t);
    let price = match aggregation {
        Aggregation::Sum => PriceFunction::new(vec![2.0, 6.0], vec![1.0, -1.0, -7.0], vec![0.5, 1.5, 2.5]).unwrap(),
        Aggregation::Average => PriceFunction::new(vec![0.5, 1.5], vec![1.0, 0.0, -1.5], vec![1.0, 3.0, 4.0]).unwrap(),
    };
    GameSpec::new(players, price, None, aggregation).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Like [`random_game`] with every player under an energy budget.
pub fn random_budgeted_game(seed: u64, n: usize, t: usize, aggregation: Aggregation) -> GameSpec {
    let mut game = random_game(seed, n, t, aggregation);
    for p in &mut game.players {
        p.budget_free = false;
        p.energy = p.preferred.iter().sum();
    }
    game.validate().unwrap();
    game
}
