//! Electric-vehicle charging scenarios with seeded sampling.
//!
//! The generator is `ChaCha8Rng::seed_from_u64(seed)` and draws, per player
//! in order: energy, window length, window start, then `(lower, upper)` per
//! window period, then `omega`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Aggregation, CouplingConstraint, GameSpec, PlayerParams, PriceFunction};
use crate::margin::max_coupling_margin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_players: usize,
    pub horizon: usize,
    pub seed: u64,
    pub energy_range: [f64; 2],
    pub omega_range: [f64; 2],
    /// Charging windows last between this many periods and the horizon.
    pub min_duration: usize,
    pub ramp_limit: f64,
    pub capacity: f64,
    /// Price pieces `[threshold, intercept, slope]`, used in every period.
    pub price: PriceFunction,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Include the ramp and capacity rows.
    #[serde(default = "yes")]
    pub coupled: bool,
    /// Draw only this many player types and repeat them cyclically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homogeneous_types: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_players: 2000,
            horizon: 24,
            seed: 1,
            energy_range: [1.0, 30.0],
            omega_range: [1.0, 10.0],
            min_duration: 4,
            ramp_limit: 50.0,
            capacity: 1400.0,
            price: PriceFunction::inclining_block_rates(),
            aggregation: Aggregation::Sum,
            coupled: true,
            homogeneous_types: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_players == 0 || self.horizon == 0 {
            return Err(Error::invalid("scenario needs at least one player and one period"));
        }
        for (what, [lo, hi]) in [("energy_range", self.energy_range), ("omega_range", self.omega_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("{what} must be a nonempty interval")));
            }
        }
        if self.energy_range[0] <= 0.0 || self.omega_range[0] < 0.0 {
            return Err(Error::invalid("energies must be positive and omegas nonnegative"));
        }
        if self.min_duration == 0 || self.min_duration > self.horizon {
            return Err(Error::invalid(format!(
                "min_duration must lie in 1..={}, got {}",
                self.horizon, self.min_duration
            )));
        }
        if !(self.ramp_limit >= 0.0) || !(self.capacity >= 0.0) {
            return Err(Error::invalid("ramp_limit and capacity must be nonnegative"));
        }
        if self.homogeneous_types == Some(0) {
            return Err(Error::invalid("homogeneous_types must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("scenario JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Scales the population, capacity and ramp limit by `factor`; with
/// `scale_prices` the price thresholds too.
pub fn shrink(cfg: &ScenarioConfig, factor: f64, scale_prices: bool) -> Result<ScenarioConfig> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Domain { what: "shrink factor", value: factor });
    }
    if factor == 1.0 {
        return Ok(cfg.clone());
    }
    let n_players = (cfg.n_players as f64 * factor).round() as usize;
    if n_players < 1 {
        return Err(Error::invalid("shrink factor leaves no players"));
    }
    Ok(ScenarioConfig {
        n_players,
        capacity: cfg.capacity * factor,
        ramp_limit: cfg.ramp_limit * factor,
        price: if scale_prices {
            cfg.price.rescale_load(factor)?
        } else {
            cfg.price.clone()
        },
        ..cfg.clone()
    })
}

/// Lower bounds first, then the remaining energy on the earliest periods.
fn plug_and_charge(energy: f64, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let mut y = lower.to_vec();
    let mut rem = energy - lower.iter().sum::<f64>();
    for (yt, ut) in y.iter_mut().zip(upper) {
        if rem <= 0.0 {
            break;
        }
        let add = rem.min(ut - *yt);
        *yt += add;
        rem -= add;
    }
    y
}

fn draw_player(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> PlayerParams {
    let t_max = cfg.horizon;
    let energy = rng.random_range(cfg.energy_range[0]..=cfg.energy_range[1]);
    let tau = rng.random_range(cfg.min_duration..=t_max);
    let start = rng.random_range(0..=t_max - tau);
    let mut lower = vec![0.0; t_max];
    let mut upper = vec![0.0; t_max];
    let rate = energy / tau as f64;
    for t in start..start + tau {
        lower[t] = rng.random_range(0.0..=rate);
        upper[t] = rng.random_range(rate..=energy);
    }
    let omega = rng.random_range(cfg.omega_range[0]..=cfg.omega_range[1]);
    PlayerParams {
        omega,
        preferred: plug_and_charge(energy, &lower, &upper),
        energy,
        lower,
        upper,
        budget_free: false,
    }
}

/// Draws the players of a scenario without the coupling feasibility check.
pub fn generate_unchecked(cfg: &ScenarioConfig) -> Result<GameSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let players = match cfg.homogeneous_types {
        None => (0..cfg.n_players).map(|_| draw_player(cfg, &mut rng)).collect(),
        Some(k) => {
            let types: Vec<PlayerParams> = (0..k).map(|_| draw_player(cfg, &mut rng)).collect();
            (0..cfg.n_players).map(|n| types[n % k].clone()).collect()
        }
    };
    let coupling = cfg
        .coupled
        .then(|| CouplingConstraint::ramp_and_capacity(cfg.horizon, cfg.ramp_limit, cfg.capacity));
    GameSpec::new(players, cfg.price.clone(), coupling, cfg.aggregation)
}

/// Rounds of the coupling-margin solver used for the feasibility check.
pub const FEASIBILITY_ROUNDS: usize = 2000;

/// Generates a scenario and rejects it when no profile can satisfy the
/// coupling constraint.
pub fn generate(cfg: &ScenarioConfig) -> Result<GameSpec> {
    let game = generate_unchecked(cfg)?;
    if let Some(c) = &game.coupling {
        let m = max_coupling_margin(
            &game.action_sets(),
            &game.weights(),
            game.aggregation,
            c,
            FEASIBILITY_ROUNDS,
        )?;
        if m.lower < 0.0 {
            return Err(Error::Infeasible(format!(
                "no profile found meeting the coupling constraint (best margin {:.4}, upper bound {:.4})",
                m.lower, m.upper
            )));
        }
    }
    Ok(game)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_examples() {
        let cfg = ScenarioConfig::default();
        assert_eq!(shrink(&cfg, 1.0, true).unwrap(), cfg);
        let s = shrink(&cfg, 0.1, false).unwrap();
        assert_eq!(s.n_players, 200);
        assert!((s.capacity - 140.0).abs() < 1e-9 && (s.ramp_limit - 5.0).abs() < 1e-12);
        let s = shrink(&cfg, 0.1, true).unwrap();
        assert_eq!(s.price.breakpoints(), [50.0, 100.0]);
        assert!(shrink(&cfg, 1e-4, false).is_err());
        assert!(shrink(&cfg, 0.0, false).is_err());
    }

    #[test]
    fn plug_and_charge_fill() {
        let y = plug_and_charge(5.0, &[1.0, 1.0, 1.0], &[3.0, 3.0, 3.0]);
        assert_eq!(y, vec![3.0, 1.0, 1.0]);
        let y = plug_and_charge(7.5, &[0.0, 0.5, 0.0], &[3.0, 3.0, 3.0]);
        assert_eq!(y, vec![3.0, 3.0, 1.5]);
    }

    #[test]
    fn generated_players_are_valid() {
        let cfg = ScenarioConfig {
            n_players: 50,
            ..ScenarioConfig::default()
        };
        let game = generate_unchecked(&cfg).unwrap();
        for p in &game.players {
            let s: f64 = p.preferred.iter().sum();
            assert!((s - p.energy).abs() < 1e-9);
            let window: Vec<usize> = (0..24).filter(|&t| p.upper[t] > 0.0).collect();
            assert!(window.len() >= 4);
            assert_eq!(window.last().unwrap() - window[0] + 1, window.len());
        }
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ScenarioConfig::default().to_json()).unwrap();
        v["capacty"] = 3.into();
        assert!(ScenarioConfig::from_json(&v.to_string()).is_err());
    }
}
