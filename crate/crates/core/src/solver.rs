//! Projected subgradient iteration with Lagrangian multipliers for the
//! coupling constraint.
//!
//! Each round every player (or population) takes a projected step along the
//! selected subgradient plus the multiplier term `A^T lambda`; the
//! multipliers then take a projected step along the extrapolated residual
//! `b - 2 A agg^(k+1) + A agg^(k)`. The same step `tau_k` drives both.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::game::{Aggregation, AggregativeCosts, CouplingConstraint, GameSpec, Profile};
use crate::projection::{dot, project_nonneg, BoxSimplexSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum StepRule {
    /// `tau_k = c / k`
    Harmonic(f64),
    Constant(f64),
    /// Constant step `c / (L + |B|)` from the operator's Lipschitz bound `L`
    /// and the norm `|B|` of the coupling map in the population metric,
    /// halved whenever the iterate distance stalls for [`STALL_PATIENCE`]
    /// rounds (the VNE operator jumps at price breakpoints).
    Auto(f64),
}

impl StepRule {
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepRule::Harmonic(c) => c / k as f64,
            StepRule::Constant(tau) | StepRule::Auto(tau) => tau,
        }
    }

    fn constant(&self) -> f64 {
        match *self {
            StepRule::Harmonic(c) | StepRule::Constant(c) | StepRule::Auto(c) => c,
        }
    }
}

/// Rounds without a new smallest iterate distance before `Auto` halves its step.
pub const STALL_PATIENCE: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step_rule: StepRule,
    /// Threshold on `|(x, lambda)^(k+1) - (x, lambda)^(k)|`, with each
    /// population's action weighted by its size.
    pub stop_tol: f64,
    pub max_iters: usize,
    /// Initial multipliers; zeros when empty.
    #[serde(default)]
    pub dual_init: Vec<f64>,
    #[serde(default)]
    pub record_trace: bool,
    /// Largest coupling violation `max(A agg - b)` accepted at convergence.
    pub feas_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_rule: StepRule::Auto(1.0),
            stop_tol: 1e-3,
            max_iters: 200_000,
            dual_init: Vec::new(),
            record_trace: false,
            feas_tol: 1e-2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::invalid("stop_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.feas_tol >= 0.0) {
            return Err(Error::invalid("feas_tol must be nonnegative"));
        }
        let tau = self.step_rule.constant();
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid("step constant must be positive"));
        }
        if self.dual_init.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::invalid("initial multipliers must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumKind {
    /// Variational Nash equilibrium: players account for their own price impact.
    Vne,
    /// Symmetric variational Wardrop equilibrium: the aggregate is taken as given.
    Svwe,
}

impl std::str::FromStr for EquilibriumKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vne" => Ok(EquilibriumKind::Vne),
            "svwe" => Ok(EquilibriumKind::Svwe),
            other => Err(Error::invalid(format!("unknown mode {other:?}, expected vne or svwe"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub iterate_distance: f64,
    pub coupling_violation: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub kind: EquilibriumKind,
    /// Step rule actually used (`Auto` carries the resolved step).
    pub step_rule: StepRule,
    pub profile: Profile,
    pub aggregate: Vec<f64>,
    pub duals: Vec<f64>,
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Times the `Auto` step was halved after a stall.
    #[serde(default)]
    pub step_halvings: usize,
    pub wall_time_s: f64,
    /// Lagrangian gap over the product of action sets (zero at a KKT point).
    pub residual: f64,
    /// `max(A agg - b)`; `-inf` serialises as `null` when uncoupled.
    pub coupling_violation: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

/// A solver instance: costs, action sets, population weights and coupling.
pub struct Problem<'a> {
    pub costs: &'a dyn AggregativeCosts,
    pub sets: &'a [BoxSimplexSet],
    pub weights: &'a [f64],
    pub coupling: Option<&'a CouplingConstraint>,
    pub aggregation: Aggregation,
}

impl Problem<'_> {
    fn scale(&self) -> f64 {
        match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Average => 1.0 / self.weights.iter().sum::<f64>(),
        }
    }

    fn aggregate_into(&self, profile: &[Vec<f64>], agg: &mut [f64]) {
        agg.iter_mut().for_each(|a| *a = 0.0);
        for (row, &w) in profile.iter().zip(self.weights) {
            for (a, x) in agg.iter_mut().zip(row) {
                *a += w * x;
            }
        }
        let s = self.scale();
        agg.iter_mut().for_each(|a| *a *= s);
    }

    /// Subgradient selection of player `n` for the given equilibrium notion.
    fn operator(&self, kind: EquilibriumKind, n: usize, x: &[f64], agg: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        self.costs.grad_action(n, x, agg, out);
        if kind == EquilibriumKind::Vne {
            self.costs.grad_aggregate(n, x, agg, tmp);
            let s = self.scale();
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += s * t;
            }
        }
    }

    /// `L + |B|`: Lipschitz bound of the operator plus the norm of the
    /// coupling map, both in the metric weighted by population sizes.
    pub fn step_scale(&self, kind: EquilibriumKind) -> f64 {
        let (own, slope) = self.costs.curvature_bounds();
        let scale = self.scale();
        let total: f64 = self.weights.iter().sum();
        let mut lip = own + slope * scale * total;
        if kind == EquilibriumKind::Vne {
            lip += slope * scale;
        }
        let coupling = self
            .coupling
            .map_or(0.0, |c| spectral_norm(&c.matrix) * (scale * total).sqrt());
        (lip + coupling).max(f64::MIN_POSITIVE)
    }

    fn check(&self) -> Result<()> {
        let n = self.costs.n_players();
        let horizon = self.costs.horizon();
        if self.sets.len() != n {
            return Err(Error::dim("action sets", n, self.sets.len()));
        }
        if self.weights.len() != n {
            return Err(Error::dim("weights", n, self.weights.len()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        for s in self.sets {
            if s.dim() != horizon {
                return Err(Error::dim("action set", horizon, s.dim()));
            }
            s.validate()?;
        }
        if let Some(c) = self.coupling {
            c.validate(horizon)?;
        }
        Ok(())
    }

    /// Runs the projected subgradient iteration from `init`.
    pub fn solve(&self, kind: EquilibriumKind, cfg: &SolverConfig, init: Profile) -> Result<EquilibriumResult> {
        cfg.validate()?;
        self.check()?;
        let n = self.costs.n_players();
        let horizon = self.costs.horizon();
        if init.len() != n || init.iter().any(|r| r.len() != horizon) {
            return Err(Error::dim("initial profile", n, init.len()));
        }
        let rows = self.coupling.map_or(0, CouplingConstraint::rows);
        let mut duals = if cfg.dual_init.is_empty() {
            vec![0.0; rows]
        } else if cfg.dual_init.len() == rows {
            cfg.dual_init.clone()
        } else {
            return Err(Error::dim("dual_init", rows, cfg.dual_init.len()));
        };

        let step_rule = match cfg.step_rule {
            StepRule::Auto(c) => StepRule::Auto(c / self.step_scale(kind)),
            rule => rule,
        };
        let clock = Stopwatch::start();
        let mut x: Profile = init
            .iter()
            .zip(self.sets)
            .map(|(row, set)| set.project(row))
            .collect::<Result<_>>()?;
        let mut agg = vec![0.0; horizon];
        self.aggregate_into(&x, &mut agg);
        let mut next = x.clone();
        let mut next_agg = vec![0.0; horizon];
        let mut g = vec![0.0; horizon];
        let mut tmp = vec![0.0; horizon];
        let mut step_point = vec![0.0; horizon];
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        let adaptive = matches!(step_rule, StepRule::Auto(_));
        let mut halvings = 0;
        let mut best_dist = f64::INFINITY;
        let mut since_best = 0;

        for k in 1..=cfg.max_iters {
            iterations = k;
            let tau = step_rule.step(k) * 0.5f64.powi(halvings);
            let price_of_coupling = match self.coupling {
                Some(c) => c.apply_transpose(&duals),
                None => vec![0.0; horizon],
            };
            let mut dist_sq = 0.0;
            for i in 0..n {
                self.operator(kind, i, &x[i], &agg, &mut g, &mut tmp);
                for t in 0..horizon {
                    step_point[t] = x[i][t] - tau * (g[t] + price_of_coupling[t]);
                }
                if step_point.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("solver iterate"));
                }
                next[i] = self.sets[i].project(&step_point)?;
                dist_sq += self.weights[i]
                    * next[i]
                        .iter()
                        .zip(&x[i])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
            }
            self.aggregate_into(&next, &mut next_agg);
            if let Some(c) = self.coupling {
                let ax_new = c.apply(&next_agg);
                let ax_old = c.apply(&agg);
                let stepped: Vec<f64> = (0..rows)
                    .map(|j| duals[j] - tau * (c.rhs[j] - 2.0 * ax_new[j] + ax_old[j]))
                    .collect();
                let new_duals = project_nonneg(&stepped);
                dist_sq += new_duals
                    .iter()
                    .zip(&duals)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                duals = new_duals;
            }
            std::mem::swap(&mut x, &mut next);
            std::mem::swap(&mut agg, &mut next_agg);

            let dist = dist_sq.sqrt();
            let violation = self.coupling.map_or(f64::NEG_INFINITY, |c| c.max_violation(&agg));
            if cfg.record_trace {
                trace.push(TraceRow {
                    k,
                    iterate_distance: dist,
                    coupling_violation: violation,
                    wall_time_s: clock.elapsed_s(),
                });
            }
            if dist <= cfg.stop_tol && violation <= cfg.feas_tol {
                converged = true;
                break;
            }
            if dist < best_dist {
                best_dist = dist;
                since_best = 0;
            } else {
                since_best += 1;
                if adaptive && since_best >= STALL_PATIENCE {
                    halvings += 1;
                    since_best = 0;
                    log::debug!("iterate distance stalled at {best_dist:.3e}; step halved at round {k}");
                }
            }
        }
        let wall_time_s = clock.elapsed_s();
        let residual = self.lagrangian_gap(kind, &x, &duals)?;
        Ok(EquilibriumResult {
            kind,
            step_rule,
            coupling_violation: self.coupling.map(|c| c.max_violation(&agg)),
            profile: x,
            aggregate: agg,
            duals,
            weights: self.weights.to_vec(),
            iterations,
            step_halvings: halvings as usize,
            wall_time_s,
            residual,
            converged,
            trace,
        })
    }

    fn lagrangian_operator(&self, kind: EquilibriumKind, profile: &[Vec<f64>], duals: &[f64]) -> (Profile, Vec<f64>) {
        let horizon = self.costs.horizon();
        let mut agg = vec![0.0; horizon];
        self.aggregate_into(profile, &mut agg);
        let coupling_term = match self.coupling {
            Some(c) => c.apply_transpose(duals),
            None => vec![0.0; horizon],
        };
        let mut tmp = vec![0.0; horizon];
        let ops = profile
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut g = vec![0.0; horizon];
                self.operator(kind, i, x, &agg, &mut g, &mut tmp);
                g.iter_mut().zip(&coupling_term).for_each(|(a, b)| *a += b);
                g
            })
            .collect();
        (ops, agg)
    }

    /// `lambda^T (b - A agg)` rescaled to the per-unit-weight multiplier.
    fn complementarity(&self, agg: &[f64], duals: &[f64]) -> f64 {
        match self.coupling {
            Some(c) => {
                let slack: Vec<f64> = c
                    .apply(agg)
                    .iter()
                    .zip(&c.rhs)
                    .map(|(ax, b)| b - ax)
                    .collect();
                dot(duals, &slack) / self.scale()
            }
            None => 0.0,
        }
    }

    /// `max_z sum_i w_i <G_i, x_i - z_i> + lambda^T (b - A agg)` over the
    /// product of action sets, with `G = g + A^T lambda`. The maximum is
    /// separable and each term is a support function, so this is exact.
    pub fn lagrangian_gap(&self, kind: EquilibriumKind, profile: &[Vec<f64>], duals: &[f64]) -> Result<f64> {
        let (ops, agg) = self.lagrangian_operator(kind, profile, duals);
        let mut gap = self.complementarity(&agg, duals);
        for ((g, x), (set, &w)) in ops.iter().zip(profile).zip(self.sets.iter().zip(self.weights)) {
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            gap += w * (dot(g, x) + set.support(&neg)?);
        }
        Ok(gap)
    }

    /// Sampled version of [`Problem::lagrangian_gap`] over `n_probe` random
    /// feasible profiles.
    pub fn sampled_gap(&self, kind: EquilibriumKind, profile: &[Vec<f64>], duals: &[f64], n_probe: usize, seed: u64) -> Result<f64> {
        if n_probe == 0 {
            return Err(Error::invalid("gvi_residual needs at least one probe"));
        }
        let (ops, agg) = self.lagrangian_operator(kind, profile, duals);
        let base = self.complementarity(&agg, duals);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..n_probe {
            let mut value = base;
            for ((g, x), (set, &w)) in ops.iter().zip(profile).zip(self.sets.iter().zip(self.weights)) {
                let raw: Vec<f64> = set
                    .lower
                    .iter()
                    .zip(&set.upper)
                    .map(|(&l, &u)| {
                        let pad = 0.5 * (u - l);
                        rng.random_range((l - pad)..=(u + pad))
                    })
                    .collect();
                let z = set.project(&raw)?;
                let diff: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
                value += w * dot(g, &diff);
            }
            best = best.max(value);
        }
        Ok(best)
    }
}

/// Largest singular value, by power iteration on `M^T M`.
fn spectral_norm(m: &[Vec<f64>]) -> f64 {
    let cols = m.first().map_or(0, Vec::len);
    if cols == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 0.0;
    for _ in 0..200 {
        let mv: Vec<f64> = m.iter().map(|row| dot(row, &v)).collect();
        let mut w = vec![0.0; cols];
        for (row, a) in m.iter().zip(&mv) {
            for (wj, r) in w.iter_mut().zip(row) {
                *wj += r * a;
            }
        }
        let nrm = dot(&w, &w).sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        let next = nrm.sqrt();
        v = w.into_iter().map(|x| x / nrm).collect();
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Each player's preferred profile projected onto its own action set.
pub fn preferred_start(game: &GameSpec) -> Result<Profile> {
    game.players
        .iter()
        .map(|p| p.action_set().project(&p.preferred))
        .collect()
}

fn problem<'a>(game: &'a GameSpec, sets: &'a [BoxSimplexSet], weights: &'a [f64]) -> Problem<'a> {
    Problem {
        costs: game,
        sets,
        weights,
        coupling: game.coupling.as_ref(),
        aggregation: game.aggregation,
    }
}

/// Symmetric Wardrop equilibrium of the population game in which entry `i`
/// of `game.players` stands for `weights[i]` identical nonatomic players.
pub fn solve_svwe(game: &GameSpec, weights: &[f64], cfg: &SolverConfig) -> Result<EquilibriumResult> {
    solve_from(game, weights, EquilibriumKind::Svwe, cfg, preferred_start(game)?)
}

/// Variational Nash equilibrium of the (ungrouped) atomic game.
pub fn solve_vne(game: &GameSpec, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    let weights = game.weights();
    if weights.iter().any(|&w| w != 1.0) {
        return Err(Error::invalid("a VNE is defined for the ungrouped game only"));
    }
    solve_from(game, &weights, EquilibriumKind::Vne, cfg, preferred_start(game)?)
}

pub fn solve_from(
    game: &GameSpec,
    weights: &[f64],
    kind: EquilibriumKind,
    cfg: &SolverConfig,
    init: Profile,
) -> Result<EquilibriumResult> {
    game.validate()?;
    let sets = game.action_sets();
    problem(game, &sets, weights).solve(kind, cfg, init)
}

/// Sampled GVI residual of a solver result: the largest value of
/// `<G(x*), x* - z>` (Lagrangian form, plus complementarity) over `n_probe`
/// random feasible probes. Nonpositive up to tolerance on a solution.
pub fn gvi_residual(game: &GameSpec, result: &EquilibriumResult, n_probe: usize, seed: u64) -> Result<f64> {
    let sets = game.action_sets();
    problem(game, &sets, &result.weights).sampled_gap(result.kind, &result.profile, &result.duals, n_probe, seed)
}

/// Exact Lagrangian gap of a profile and multipliers.
pub fn lagrangian_gap(game: &GameSpec, result: &EquilibriumResult) -> Result<f64> {
    let sets = game.action_sets();
    problem(game, &sets, &result.weights).lagrangian_gap(result.kind, &result.profile, &result.duals)
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "k,iterate_distance,coupling_violation,wall_time_s")?;
    for r in rows {
        writeln!(
            out,
            "{},{:e},{:e},{:.6}",
            r.k, r.iterate_distance, r.coupling_violation, r.wall_time_s
        )?;
    }
    Ok(())
}
