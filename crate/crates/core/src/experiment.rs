//! Precision and cost of the reduction as the number of clusters grows.

use serde::{Deserialize, Serialize};

use crate::analysis::{corollary_bounds, fit_rate, relative_error, thm2_bounds, to_game_units, Modulus, RateFit};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::reduction::{lift_profile, reduce, ReductionConfig};
use crate::solver::{solve_svwe, solve_vne, EquilibriumResult, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub clusters: Vec<usize>,
    /// k-means seeds; every cluster count is run once per seed.
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    /// Each reduced solve is timed this many times and the fastest kept.
    pub timing_repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            clusters: vec![5, 10, 20, 50, 100],
            seeds: vec![1],
            solver: SolverConfig::default(),
            timing_repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub clusters: usize,
    pub rel_error: f64,
    pub cpu_time_s: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(rename = "delta_X")]
    pub delta_x: f64,
    pub delta_u: f64,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub rho_condition_ok: bool,
    /// Aggregate bound between reduced and original SVWE, in game units.
    pub thm2_bound: Option<f64>,
    /// Aggregate bound between reduced SVWE and VNE, in game units.
    pub corollary_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    pub residual: f64,
    pub coupling_violation: Option<f64>,
    pub aggregate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reference: ReferenceSummary,
    pub rows: Vec<SweepRow>,
    /// Fit of `rel_error ~ I^-a` over all rows, when it can be formed.
    pub fit: Option<RateFit>,
}

/// One reduced solve: cluster, solve the population game, lift, compare.
pub fn sweep_cell(
    game: &GameSpec,
    reference: &EquilibriumResult,
    clusters: usize,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<(SweepRow, EquilibriumResult)> {
    let rep = reduce(game, &ReductionConfig::new(clusters, seed))?;
    let mut best: Option<EquilibriumResult> = None;
    for _ in 0..cfg.timing_repeats.max(1) {
        let r = solve_svwe(&rep.auxiliary_game, &rep.weights, &cfg.solver)?;
        if best.as_ref().is_none_or(|b| r.wall_time_s < b.wall_time_s) {
            best = Some(r);
        }
    }
    let reduced = best.expect("at least one solve");
    let lifted = lift_profile(&reduced.profile, &rep.assignment)?;
    let aggregate = game.aggregate(&lifted, &game.weights());
    let rel_error = relative_error(&reference.aggregate, &aggregate)?;
    let n = game.n_players;
    let (thm2_bound, corollary_bound) = match (rep.k, rep.alpha) {
        (Some(k), Some(alpha)) => {
            let t2 = thm2_bounds(k, Modulus::Alpha(alpha), n)?;
            let cor = corollary_bounds(rep.l2_estimate, Modulus::Alpha(alpha), n, k, rep.r, None, None)?;
            (
                Some(to_game_units(t2[1].value, game)),
                Some(to_game_units(cor.value, game)),
            )
        }
        _ => (None, None),
    };
    let row = SweepRow {
        seed,
        clusters,
        rel_error,
        cpu_time_s: reduced.wall_time_s,
        iterations: reduced.iterations,
        converged: reduced.converged,
        delta_x: rep.delta_x,
        delta_u: rep.delta_u,
        k: rep.k,
        rho_condition_ok: rep.rho_condition_ok,
        thm2_bound,
        corollary_bound,
    };
    Ok((row, reduced))
}

/// Solves the reference VNE once, then every `(seed, I)` cell.
pub fn run_sweep(game: &GameSpec, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.clusters.iter().any(|&i| i == 0 || i > game.n_players) {
        return Err(Error::invalid(format!(
            "cluster counts must lie in 1..={}",
            game.n_players
        )));
    }
    let reference = solve_vne(game, &cfg.solver)?;
    if !reference.converged {
        return Err(Error::NotConverged(format!(
            "reference VNE after {} iterations",
            reference.iterations
        )));
    }
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        for &i in &cfg.clusters {
            rows.push(sweep_cell(game, &reference, i, seed, cfg)?.0);
        }
    }
    let usable: Vec<&SweepRow> = rows.iter().filter(|r| r.rel_error > 0.0).collect();
    let fit = fit_rate(
        &usable.iter().map(|r| r.clusters as f64).collect::<Vec<_>>(),
        &usable.iter().map(|r| r.rel_error).collect::<Vec<_>>(),
    )
    .ok();
    Ok(SweepReport {
        reference: ReferenceSummary {
            iterations: reference.iterations,
            wall_time_s: reference.wall_time_s,
            converged: reference.converged,
            residual: reference.residual,
            coupling_violation: reference.coupling_violation,
            aggregate: reference.aggregate,
        },
        rows,
        fit,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:e}"))
}

/// Table with one row per cell; the header is
/// `seed,I,rel_error,cpu_time_s,iterations,converged,delta_X,delta_u,K,rho_condition_ok,thm2_bound,corollary_bound`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "seed,I,rel_error,cpu_time_s,iterations,converged,delta_X,delta_u,K,rho_condition_ok,thm2_bound,corollary_bound\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{:e},{:.6},{},{},{:e},{:e},{},{},{},{}\n",
            r.seed,
            r.clusters,
            r.rel_error,
            r.cpu_time_s,
            r.iterations,
            r.converged,
            r.delta_x,
            r.delta_u,
            opt(r.k),
            r.rho_condition_ok,
            opt(r.thm2_bound),
            opt(r.corollary_bound)
        ));
    }
    out
}
