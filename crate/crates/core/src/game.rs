//! Game data model: players, block-rate prices, coupling constraints, and the
//! cost and subgradient evaluations of the congestion-form family.
//!
//! A player's cost is `sum_t x_t * c_t(agg_t) + omega * |x - y|^2`, where
//! `agg` is either the total load (`Aggregation::Sum`) or the average load
//! (`Aggregation::Average`) over the (weighted) player set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::BoxSimplexSet;

/// One row per player (or population), one column per period.
pub type Profile = Vec<Vec<f64>>;

const CONTINUITY_TOL: f64 = 1e-12;
const PARAM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Second cost argument is `(1/N) sum_n x_n`.
    Average,
    /// Second cost argument is `sum_n x_n`.
    #[default]
    Sum,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" | "avg" | "mean" => Ok(Aggregation::Average),
            "sum" | "total" => Ok(Aggregation::Sum),
            other => Err(Error::invalid(format!("unknown aggregation convention {other:?}"))),
        }
    }
}

/// Continuous, convex, nondecreasing piecewise-affine price of the load.
///
/// Piece `k` covers `[breakpoints[k-1], breakpoints[k]]`; the first piece
/// extends to `-inf` and the last to `+inf`. Serialised as a list of
/// `[threshold, intercept, slope]` triples where `threshold` is the left end
/// of the piece (the first threshold is informational, conventionally 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PriceFunction {
    breakpoints: Vec<f64>,
    intercepts: Vec<f64>,
    slopes: Vec<f64>,
}

impl TryFrom<Vec<[f64; 3]>> for PriceFunction {
    type Error = Error;

    fn try_from(pieces: Vec<[f64; 3]>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("price function needs at least one piece"));
        }
        let breakpoints = pieces.iter().skip(1).map(|p| p[0]).collect();
        let intercepts = pieces.iter().map(|p| p[1]).collect();
        let slopes = pieces.iter().map(|p| p[2]).collect();
        PriceFunction::new(breakpoints, intercepts, slopes)
    }
}

impl From<PriceFunction> for Vec<[f64; 3]> {
    fn from(pf: PriceFunction) -> Self {
        (0..pf.slopes.len())
            .map(|k| {
                let start = if k == 0 { 0.0 } else { pf.breakpoints[k - 1] };
                [start, pf.intercepts[k], pf.slopes[k]]
            })
            .collect()
    }
}

impl PriceFunction {
    pub fn new(breakpoints: Vec<f64>, intercepts: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if intercepts.len() != slopes.len() || breakpoints.len() + 1 != slopes.len() {
            return Err(Error::invalid(format!(
                "price function with {} breakpoints needs {} pieces, got {} intercepts and {} slopes",
                breakpoints.len(),
                breakpoints.len() + 1,
                intercepts.len(),
                slopes.len()
            )));
        }
        if breakpoints
            .iter()
            .chain(&intercepts)
            .chain(&slopes)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("price function"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("price breakpoints must be increasing"));
        }
        if slopes.iter().any(|&s| s < 0.0) || slopes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid(
                "price slopes must be nonnegative and nondecreasing",
            ));
        }
        for (k, &b) in breakpoints.iter().enumerate() {
            let left = intercepts[k] + slopes[k] * b;
            let right = intercepts[k + 1] + slopes[k + 1] * b;
            if (left - right).abs() > CONTINUITY_TOL * left.abs().max(right.abs()).max(1.0) {
                return Err(Error::invalid(format!(
                    "price function discontinuous at {b}: {left} vs {right}"
                )));
            }
        }
        Ok(PriceFunction {
            breakpoints,
            intercepts,
            slopes,
        })
    }

    pub fn affine(intercept: f64, slope: f64) -> Result<Self> {
        Self::new(vec![], vec![intercept], vec![slope])
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::affine(value, 0.0)
    }

    /// The three-block inclining tariff `1 + 0.1X`, `-49 + 0.2X`, `-349 + 0.5X`
    /// with thresholds 500 and 1000 on the total load.
    pub fn inclining_block_rates() -> Self {
        Self::new(
            vec![500.0, 1000.0],
            vec![1.0, -49.0, -349.0],
            vec![0.1, 0.2, 0.5],
        )
        .expect("tariff constants are valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `c(load / factor)`: thresholds scale by `factor`, slopes by `1/factor`.
    pub fn rescale_load(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Domain {
                what: "load rescaling factor",
                value: factor,
            });
        }
        Self::new(
            self.breakpoints.iter().map(|b| b * factor).collect(),
            self.intercepts.clone(),
            self.slopes.iter().map(|s| s / factor).collect(),
        )
    }

    /// Index of the piece used at `load`; a breakpoint belongs to the piece
    /// on its right.
    fn piece(&self, load: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= load)
    }

    /// Price at `load`, with the first piece extended below zero.
    pub fn value(&self, load: f64) -> f64 {
        let k = self.piece(load);
        self.intercepts[k] + self.slopes[k] * load
    }

    /// Right derivative at `load`.
    pub fn slope_at(&self, load: f64) -> f64 {
        self.slopes[self.piece(load)]
    }

    pub fn min_slope(&self) -> f64 {
        self.slopes[0]
    }

    pub fn max_slope(&self) -> f64 {
        *self.slopes.last().expect("nonempty")
    }
}

fn check_load(load: f64) -> Result<()> {
    if load.is_nan() || load < 0.0 {
        return Err(Error::Domain {
            what: "price function",
            value: load,
        });
    }
    Ok(())
}

pub fn eval_price(pf: &PriceFunction, load: f64) -> Result<f64> {
    check_load(load)?;
    Ok(pf.value(load))
}

/// An element of the subdifferential of the price at `load`: the right
/// derivative at breakpoints.
pub fn price_subgradient(pf: &PriceFunction, load: f64) -> Result<f64> {
    check_load(load)?;
    Ok(pf.slope_at(load))
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerParams {
    pub omega: f64,
    pub preferred: Vec<f64>,
    pub energy: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Drop the energy budget: the action set becomes the box alone.
    #[serde(default, skip_serializing_if = "is_false")]
    pub budget_free: bool,
}

impl PlayerParams {
    pub fn horizon(&self) -> usize {
        self.preferred.len()
    }

    pub fn action_set(&self) -> BoxSimplexSet {
        BoxSimplexSet {
            energy: (!self.budget_free).then_some(self.energy),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        for (what, v) in [
            ("preferred profile", &self.preferred),
            ("lower bounds", &self.lower),
            ("upper bounds", &self.upper),
        ] {
            if v.len() != horizon {
                return Err(Error::dim(what, horizon, v.len()));
            }
        }
        if !self.omega.is_finite() || self.omega < 0.0 {
            return Err(Error::invalid(format!("omega must be nonnegative, got {}", self.omega)));
        }
        if self.lower.iter().any(|&l| l < 0.0) {
            return Err(Error::invalid("lower bounds must be nonnegative"));
        }
        self.action_set().validate()?;
        let set = self.action_set();
        let tol = PARAM_TOL * (1.0 + self.energy.abs());
        if !set.contains(&self.preferred, tol) {
            return Err(Error::invalid(
                "preferred profile is not inside the player's action set",
            ));
        }
        Ok(())
    }
}

/// Affine coupling `A agg <= b` on the aggregate profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstraint {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl CouplingConstraint {
    pub fn new(matrix: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let c = CouplingConstraint { matrix, rhs };
        if let Some(row) = c.matrix.first() {
            c.validate(row.len())?;
        } else if !c.rhs.is_empty() {
            return Err(Error::dim("coupling rhs", 0, c.rhs.len()));
        }
        Ok(c)
    }

    /// Ramp rows `X_T - X_1 <= ramp`, `X_1 - X_T <= ramp`, then one capacity
    /// row `X_t <= capacity` per period: a `(T+2) x T` system.
    pub fn ramp_and_capacity(horizon: usize, ramp: f64, capacity: f64) -> Self {
        let mut matrix = Vec::with_capacity(horizon + 2);
        let mut up = vec![0.0; horizon];
        up[horizon - 1] += 1.0;
        up[0] -= 1.0;
        matrix.push(up.clone());
        matrix.push(up.iter().map(|v| -v).collect());
        for t in 0..horizon {
            let mut row = vec![0.0; horizon];
            row[t] = 1.0;
            matrix.push(row);
        }
        let mut rhs = vec![ramp, ramp];
        rhs.extend(std::iter::repeat_n(capacity, horizon));
        CouplingConstraint { matrix, rhs }
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.matrix.len() != self.rhs.len() {
            return Err(Error::dim("coupling rows", self.matrix.len(), self.rhs.len()));
        }
        for row in &self.matrix {
            if row.len() != horizon {
                return Err(Error::dim("coupling row", horizon, row.len()));
            }
            if row.iter().all(|&a| a == 0.0) {
                return Err(Error::invalid("coupling row with all-zero coefficients"));
            }
        }
        if self.matrix.iter().flatten().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coupling constraint"));
        }
        Ok(())
    }

    /// `A agg`.
    pub fn apply(&self, agg: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(agg).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// `A^T lambda`.
    pub fn apply_transpose(&self, duals: &[f64]) -> Vec<f64> {
        let horizon = self.matrix.first().map_or(0, Vec::len);
        let mut out = vec![0.0; horizon];
        for (row, &l) in self.matrix.iter().zip(duals) {
            if l != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * l;
                }
            }
        }
        out
    }

    /// `max_j (A agg - b)_j`, negative when every row has slack.
    pub fn max_violation(&self, agg: &[f64]) -> f64 {
        self.apply(agg)
            .iter()
            .zip(&self.rhs)
            .map(|(ax, b)| ax - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub n_players: usize,
    pub horizon: usize,
    pub players: Vec<PlayerParams>,
    /// One price function per period.
    pub prices: Vec<PriceFunction>,
    #[serde(default)]
    pub coupling: Option<CouplingConstraint>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Number of original players represented by each entry of `players`
    /// (auxiliary population games); all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_sizes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub is_monotone: bool,
    /// Strong monotonicity modulus `min_n 2 omega_n`.
    pub alpha: Option<f64>,
    /// Aggregative strong monotonicity modulus `min` price slope, in the
    /// game's own load units.
    pub beta: Option<f64>,
}

impl GameSpec {
    /// Builds and validates a game with the same price in every period.
    pub fn new(
        players: Vec<PlayerParams>,
        price: PriceFunction,
        coupling: Option<CouplingConstraint>,
        aggregation: Aggregation,
    ) -> Result<Self> {
        let horizon = players.first().map_or(0, PlayerParams::horizon);
        let game = GameSpec {
            n_players: players.len(),
            horizon,
            prices: vec![price; horizon],
            players,
            coupling,
            aggregation,
            population_sizes: None,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_players == 0 || self.horizon == 0 {
            return Err(Error::invalid("a game needs at least one player and one period"));
        }
        if self.players.len() != self.n_players {
            return Err(Error::dim("players", self.n_players, self.players.len()));
        }
        if self.prices.len() != self.horizon {
            return Err(Error::dim("prices", self.horizon, self.prices.len()));
        }
        for (n, p) in self.players.iter().enumerate() {
            p.validate(self.horizon)
                .map_err(|e| Error::invalid(format!("player {n}: {e}")))?;
        }
        // Re-run the piece checks on deserialised prices.
        for pf in &self.prices {
            PriceFunction::new(
                pf.breakpoints.clone(),
                pf.intercepts.clone(),
                pf.slopes.clone(),
            )?;
        }
        if let Some(c) = &self.coupling {
            c.validate(self.horizon)?;
        }
        if let Some(w) = &self.population_sizes {
            if w.len() != self.n_players {
                return Err(Error::dim("population sizes", self.n_players, w.len()));
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::invalid("population sizes must be positive"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let game: GameSpec =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("game JSON: {e}")))?;
        game.validate()?;
        Ok(game)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game serialises")
    }

    pub fn weights(&self) -> Vec<f64> {
        self.population_sizes
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_players])
    }

    pub fn action_sets(&self) -> Vec<BoxSimplexSet> {
        self.players.iter().map(PlayerParams::action_set).collect()
    }

    /// Derivative of the aggregate with respect to one unit of weight.
    pub fn aggregate_scale(&self, weights: &[f64]) -> f64 {
        match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Average => 1.0 / weights.iter().sum::<f64>(),
        }
    }

    pub fn aggregate(&self, profile: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let scale = self.aggregate_scale(weights);
        let mut agg = vec![0.0; self.horizon];
        for (row, &w) in profile.iter().zip(weights) {
            for (a, x) in agg.iter_mut().zip(row) {
                *a += w * x;
            }
        }
        agg.iter_mut().for_each(|a| *a *= scale);
        agg
    }

    fn check_player(&self, n: usize, x: &[f64], agg: &[f64]) -> Result<()> {
        if n >= self.n_players {
            return Err(Error::invalid(format!("player index {n} out of range")));
        }
        if x.len() != self.horizon {
            return Err(Error::dim("player action", self.horizon, x.len()));
        }
        if agg.len() != self.horizon {
            return Err(Error::dim("aggregate", self.horizon, agg.len()));
        }
        Ok(())
    }

    /// `f_n(x, agg) = sum_t x_t c_t(agg_t) + omega_n |x - y_n|^2`.
    pub fn eval_cost(&self, n: usize, x: &[f64], agg: &[f64]) -> Result<f64> {
        self.check_player(n, x, agg)?;
        Ok(self.cost_unchecked(n, x, agg))
    }

    fn cost_unchecked(&self, n: usize, x: &[f64], agg: &[f64]) -> f64 {
        let p = &self.players[n];
        let mut cost = 0.0;
        for t in 0..self.horizon {
            let d = x[t] - p.preferred[t];
            cost += x[t] * self.prices[t].value(agg[t]) + p.omega * d * d;
        }
        cost
    }

    /// Cost of player `n` deviating to `x` while the others keep `profile`.
    pub fn modified_cost(&self, n: usize, x: &[f64], profile: &[Vec<f64>]) -> Result<f64> {
        let weights = self.weights();
        let mut dev = profile.to_vec();
        if n >= dev.len() {
            return Err(Error::invalid(format!("player index {n} out of range")));
        }
        dev[n] = x.to_vec();
        let agg = self.aggregate(&dev, &weights);
        self.eval_cost(n, x, &agg)
    }

    fn check_profile(&self, profile: &[Vec<f64>]) -> Result<()> {
        if profile.len() != self.n_players {
            return Err(Error::dim("profile rows", self.n_players, profile.len()));
        }
        for row in profile {
            if row.len() != self.horizon {
                return Err(Error::dim("profile row", self.horizon, row.len()));
            }
        }
        Ok(())
    }

    /// Selection of `prod_n d_1 f_n(x_n, agg)` with the aggregate held fixed.
    pub fn svwe_subgradient(&self, profile: &[Vec<f64>]) -> Result<Profile> {
        self.check_profile(profile)?;
        let agg = self.aggregate(profile, &self.weights());
        let mut out = vec![vec![0.0; self.horizon]; self.n_players];
        for (n, row) in out.iter_mut().enumerate() {
            self.grad_action(n, &profile[n], &agg, row);
        }
        Ok(out)
    }

    /// Selection of `prod_n d_1 fhat_n`: the fixed-aggregate subgradient plus
    /// the player's own impact on the price through the aggregate.
    pub fn vne_subgradient(&self, profile: &[Vec<f64>]) -> Result<Profile> {
        self.check_profile(profile)?;
        let weights = self.weights();
        let agg = self.aggregate(profile, &weights);
        let scale = self.aggregate_scale(&weights);
        let mut out = vec![vec![0.0; self.horizon]; self.n_players];
        let mut own = vec![0.0; self.horizon];
        for (n, row) in out.iter_mut().enumerate() {
            self.grad_action(n, &profile[n], &agg, row);
            self.grad_aggregate(n, &profile[n], &agg, &mut own);
            for (r, o) in row.iter_mut().zip(&own) {
                *r += scale * o;
            }
        }
        Ok(out)
    }

    pub fn classify_monotonicity(&self) -> MonotonicityReport {
        let prices_ok = self.prices.iter().all(|pf| {
            pf.slopes.iter().all(|&s| s >= 0.0) && pf.slopes.windows(2).all(|w| w[0] <= w[1])
        });
        let utilities_ok = self.players.iter().all(|p| p.omega >= 0.0);
        let min_omega = self
            .players
            .iter()
            .map(|p| p.omega)
            .fold(f64::INFINITY, f64::min);
        let min_slope = self
            .prices
            .iter()
            .map(PriceFunction::min_slope)
            .fold(f64::INFINITY, f64::min);
        let is_monotone = prices_ok && utilities_ok;
        MonotonicityReport {
            is_monotone,
            alpha: (is_monotone && min_omega > 0.0).then_some(2.0 * min_omega),
            beta: (is_monotone && min_slope > 0.0).then_some(min_slope),
        }
    }
}

/// Cost interface consumed by the equilibrium solver. The congestion family
/// ([`GameSpec`]) implements it; other convex aggregative costs can too.
pub trait AggregativeCosts: Sync {
    fn n_players(&self) -> usize;

    fn horizon(&self) -> usize;

    fn cost(&self, n: usize, x: &[f64], agg: &[f64]) -> f64;

    /// Writes an element of `d_1 f_n(x, agg)` into `out`.
    fn grad_action(&self, n: usize, x: &[f64], agg: &[f64], out: &mut [f64]);

    /// Writes an element of `d_2 f_n(x, agg)` into `out`.
    fn grad_aggregate(&self, n: usize, x: &[f64], agg: &[f64], out: &mut [f64]);

    /// `(a, s)` with `d_1 f_n` being `a`-Lipschitz in the action and
    /// `s`-Lipschitz in the aggregate; used to pick a step size.
    fn curvature_bounds(&self) -> (f64, f64);
}

impl AggregativeCosts for GameSpec {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn cost(&self, n: usize, x: &[f64], agg: &[f64]) -> f64 {
        self.cost_unchecked(n, x, agg)
    }

    fn grad_action(&self, n: usize, x: &[f64], agg: &[f64], out: &mut [f64]) {
        let p = &self.players[n];
        for t in 0..self.horizon {
            out[t] = self.prices[t].value(agg[t]) + 2.0 * p.omega * (x[t] - p.preferred[t]);
        }
    }

    fn grad_aggregate(&self, _n: usize, x: &[f64], agg: &[f64], out: &mut [f64]) {
        for t in 0..self.horizon {
            out[t] = x[t] * self.prices[t].slope_at(agg[t]);
        }
    }

    fn curvature_bounds(&self) -> (f64, f64) {
        let omega = self.players.iter().map(|p| p.omega).fold(0.0, f64::max);
        let slope = self.prices.iter().map(PriceFunction::max_slope).fold(0.0, f64::max);
        (2.0 * omega, slope)
    }
}
