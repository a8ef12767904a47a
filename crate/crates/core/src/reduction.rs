//! Reduction of a large game to a population game over player clusters.

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, ClusterAssignment, KMeansConfig};
use crate::error::{Error, Result};
use crate::game::{Aggregation, GameSpec, PlayerParams, Profile};
use crate::margin::max_coupling_margin;
use crate::projection::{dist, hausdorff_estimate, hausdorff_exact, inradius, BoxSimplexSet};

/// Sets with at most this many free coordinates get exact Hausdorff
/// distances in [`compute_indicators`].
pub const AUTO_EXACT_MAX_FREE: usize = 10;

/// `[omega, y, E, lower, upper]`, length `3T + 2`.
pub fn player_vector(p: &PlayerParams) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * p.horizon() + 2);
    v.push(p.omega);
    v.extend_from_slice(&p.preferred);
    v.push(p.energy);
    v.extend_from_slice(&p.lower);
    v.extend_from_slice(&p.upper);
    v
}

/// Inverse of [`player_vector`].
pub fn player_from_vector(v: &[f64], horizon: usize) -> Result<PlayerParams> {
    if v.len() != 3 * horizon + 2 {
        return Err(Error::dim("player vector", 3 * horizon + 2, v.len()));
    }
    let t = horizon;
    Ok(PlayerParams {
        omega: v[0],
        preferred: v[1..1 + t].to_vec(),
        energy: v[1 + t],
        lower: v[2 + t..2 + 2 * t].to_vec(),
        upper: v[2 + 2 * t..].to_vec(),
        budget_free: false,
    })
}

fn check_assignment(game: &GameSpec, a: &ClusterAssignment) -> Result<()> {
    if a.labels.len() != game.n_players {
        return Err(Error::dim("cluster labels", game.n_players, a.labels.len()));
    }
    if a.sizes.len() != a.n_clusters || a.labels.iter().any(|&l| l >= a.n_clusters) {
        return Err(Error::invalid("inconsistent cluster assignment"));
    }
    let mut sizes = vec![0; a.n_clusters];
    a.labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes != a.sizes || sizes.contains(&0) {
        return Err(Error::invalid("cluster sizes do not match labels"));
    }
    Ok(())
}

/// Mean that returns the common value exactly when all inputs agree.
fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let first = it.next().unwrap_or(0.0);
    if it.all(|v| v == first) {
        return first;
    }
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Population game with one player per cluster whose parameters are the
/// member means; `population_sizes` holds the cluster sizes.
pub fn build_auxiliary(game: &GameSpec, assignment: &ClusterAssignment) -> Result<GameSpec> {
    game.validate()?;
    if game.population_sizes.is_some() {
        return Err(Error::invalid("the game to reduce must be ungrouped"));
    }
    check_assignment(game, assignment)?;
    let horizon = game.horizon;
    let mut players = Vec::with_capacity(assignment.n_clusters);
    for c in 0..assignment.n_clusters {
        let members: Vec<&PlayerParams> = assignment
            .members(c)
            .into_iter()
            .map(|n| &game.players[n])
            .collect();
        let budget_free = members[0].budget_free;
        if members.iter().any(|p| p.budget_free != budget_free) {
            return Err(Error::invalid(format!(
                "cluster {c} mixes budgeted and budget-free players"
            )));
        }
        let coord = |f: fn(&PlayerParams) -> &Vec<f64>, t: usize| mean(members.iter().map(move |p| f(p)[t]));
        let lower: Vec<f64> = (0..horizon).map(|t| coord(|p| &p.lower, t)).collect();
        let upper: Vec<f64> = (0..horizon).map(|t| coord(|p| &p.upper, t)).collect();
        let mut energy = mean(members.iter().map(|p| p.energy));
        let (lo, hi) = (lower.iter().sum::<f64>(), upper.iter().sum::<f64>());
        if !budget_free && !(lo..=hi).contains(&energy) {
            log::warn!("population {c}: energy {energy} repaired into [{lo}, {hi}]");
            energy = energy.clamp(lo, hi);
        }
        let mut p = PlayerParams {
            omega: mean(members.iter().map(|p| p.omega)),
            preferred: (0..horizon).map(|t| coord(|p| &p.preferred, t)).collect(),
            energy,
            lower,
            upper,
            budget_free,
        };
        let set = p.action_set();
        if !set.contains(&p.preferred, 1e-12) {
            p.preferred = set.project(&p.preferred)?;
        }
        players.push(p);
    }
    let aux = GameSpec {
        n_players: players.len(),
        horizon,
        players,
        prices: game.prices.clone(),
        coupling: game.coupling.clone(),
        aggregation: game.aggregation,
        population_sizes: Some(assignment.sizes.iter().map(|&s| s as f64).collect()),
    };
    aux.validate()?;
    Ok(aux)
}

/// `psi`: every member plays its population's action.
pub fn lift_profile(aux_profile: &[Vec<f64>], assignment: &ClusterAssignment) -> Result<Profile> {
    if aux_profile.len() != assignment.n_clusters {
        return Err(Error::dim("population profile", assignment.n_clusters, aux_profile.len()));
    }
    Ok(assignment
        .labels
        .iter()
        .map(|&l| aux_profile[l].clone())
        .collect())
}

/// `psi bar`: per-cluster mean of member actions.
pub fn average_profile(full_profile: &[Vec<f64>], assignment: &ClusterAssignment) -> Result<Profile> {
    if full_profile.len() != assignment.labels.len() {
        return Err(Error::dim("player profile", assignment.labels.len(), full_profile.len()));
    }
    let horizon = full_profile.first().map_or(0, Vec::len);
    if full_profile.iter().any(|r| r.len() != horizon) {
        return Err(Error::invalid("ragged player profile"));
    }
    let mut out = vec![vec![0.0; horizon]; assignment.n_clusters];
    let mut counts = vec![0usize; assignment.n_clusters];
    for (row, &l) in full_profile.iter().zip(&assignment.labels) {
        counts[l] += 1;
        for (o, x) in out[l].iter_mut().zip(row) {
            *o += x;
        }
    }
    for (row, &c) in out.iter_mut().zip(&counts) {
        if c == 0 {
            return Err(Error::invalid("empty cluster in assignment"));
        }
        row.iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HausdorffMethod {
    /// Vertex enumeration; exact.
    Exact,
    /// Support functions on sampled directions; a lower estimate.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    #[serde(rename = "delta_X")]
    pub delta_x: f64,
    pub delta_u: f64,
    pub delta_x_method: HausdorffMethod,
    /// Radius bound of the enlarged set used for `delta_u`.
    pub r_enlarged: f64,
}

/// Bound `2(|w_i - w_n| r + |w_i y_i - w_n y_n|)` on the distance between
/// the action subgradients of two quadratic-utility players.
pub fn delta_u_pair(omega_i: f64, y_i: &[f64], omega_n: f64, y_n: &[f64], r_enlarged: f64) -> f64 {
    let diff: f64 = y_i
        .iter()
        .zip(y_n)
        .map(|(a, b)| {
            let d = omega_i * a - omega_n * b;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    2.0 * ((omega_i - omega_n).abs() * r_enlarged + diff)
}

fn radius(game: &GameSpec) -> f64 {
    game.action_sets()
        .iter()
        .map(BoxSimplexSet::norm_bound)
        .fold(0.0, f64::max)
}

pub fn compute_indicators(
    game: &GameSpec,
    aux: &GameSpec,
    assignment: &ClusterAssignment,
    n_dirs: usize,
    seed: u64,
) -> Result<Indicators> {
    check_assignment(game, assignment)?;
    if aux.n_players != assignment.n_clusters || aux.horizon != game.horizon {
        return Err(Error::invalid("auxiliary game does not match the assignment"));
    }
    let aux_sets = aux.action_sets();
    let mut delta_x: f64 = 0.0;
    let mut method = HausdorffMethod::Exact;
    for (n, p) in game.players.iter().enumerate() {
        let set = p.action_set();
        let pop = &aux_sets[assignment.labels[n]];
        if set == *pop {
            continue;
        }
        let exact = set.free_coords().len() <= AUTO_EXACT_MAX_FREE
            && pop.free_coords().len() <= AUTO_EXACT_MAX_FREE;
        let d = if exact {
            hausdorff_exact(&set, pop)?
        } else {
            method = HausdorffMethod::Sampled;
            hausdorff_estimate(&set, pop, n_dirs, seed)?
        };
        delta_x = delta_x.max(d);
    }
    let r_enlarged = radius(game).max(radius(aux)) + delta_x;
    let mut delta_u: f64 = 0.0;
    for (n, p) in game.players.iter().enumerate() {
        let q = &aux.players[assignment.labels[n]];
        delta_u = delta_u.max(delta_u_pair(q.omega, &q.preferred, p.omega, &p.preferred, r_enlarged));
    }
    Ok(Indicators {
        delta_x,
        delta_u,
        delta_x_method: method,
        r_enlarged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Lipschitz bound of each cost in the player's own action.
    #[serde(rename = "L1")]
    pub l1: f64,
    /// Lipschitz bound of each cost in the average aggregate (estimate).
    #[serde(rename = "L2_estimate")]
    pub l2_estimate: f64,
    /// Bound on the norm of any action.
    #[serde(rename = "R")]
    pub r: f64,
    /// Interior margin of a coupled-feasible profile; 0 when none is certified.
    pub rho: f64,
    /// Smallest inradius of the players' action sets.
    pub eta: f64,
    /// Certified coupling margin in average-aggregate units, if coupled.
    pub coupling_margin: Option<f64>,
}

/// Iterations of the coupling-margin solver used by [`compute_constants`].
pub const MARGIN_ROUNDS: usize = 4000;

/// Problem constants with the action sets enlarged by `delta`.
pub fn compute_constants(game: &GameSpec, delta: f64) -> Result<Constants> {
    game.validate()?;
    if !(delta >= 0.0) {
        return Err(Error::Domain { what: "enlargement radius", value: delta });
    }
    let sets = game.action_sets();
    let weights = game.weights();
    let scale = game.aggregate_scale(&weights);
    let r = radius(game);
    let horizon = game.horizon;

    let mut price_sq = 0.0;
    let mut slope_max: f64 = 0.0;
    for t in 0..horizon {
        let mut e = vec![0.0; horizon];
        e[t] = 1.0;
        let hi: f64 = sets.iter().zip(&weights).map(|(s, w)| w * s.support(&e).unwrap_or(0.0)).sum::<f64>() * scale;
        e[t] = -1.0;
        let lo: f64 = -sets.iter().zip(&weights).map(|(s, w)| w * s.support(&e).unwrap_or(0.0)).sum::<f64>() * scale;
        let pf = &game.prices[t];
        let c = pf.value(lo).abs().max(pf.value(hi).abs());
        price_sq += c * c;
        slope_max = slope_max.max(pf.slope_at(hi));
    }
    let diam = 2.0 * (r + delta);
    let omega_max = game.players.iter().map(|p| p.omega).fold(0.0, f64::max);
    let l1 = price_sq.sqrt() + 2.0 * omega_max * diam;
    let total_weight: f64 = weights.iter().sum();
    let l2_estimate = match game.aggregation {
        Aggregation::Sum => r * slope_max * total_weight,
        Aggregation::Average => r * slope_max,
    };

    let eta = sets
        .iter()
        .map(|s| inradius(s).unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let (rho, coupling_margin) = match &game.coupling {
        None => (eta, None),
        Some(c) => {
            let m = max_coupling_margin(&sets, &weights, game.aggregation, c, MARGIN_ROUNDS)?;
            let d_avg = match game.aggregation {
                Aggregation::Sum => m.lower / total_weight,
                Aggregation::Average => m.lower,
            };
            let rho = if d_avg > 0.0 && r > 0.0 {
                eta * (d_avg / (3.0 * r)).min(1.0)
            } else {
                0.0
            };
            (rho, Some(d_avg))
        }
    };
    Ok(Constants {
        l1,
        l2_estimate,
        r,
        rho,
        eta,
        coupling_margin,
    })
}

/// `K = 2R(3 L1 delta_X / rho + delta_u)`.
pub fn k_bound(l1: f64, rho: f64, r: f64, delta_x: f64, delta_u: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain { what: "rho", value: rho });
    }
    Ok(2.0 * r * (3.0 * l1 * delta_x / rho + delta_u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub clusters: usize,
    pub kmeans: KMeansConfig,
    /// Directions for sampled Hausdorff estimates.
    pub n_dirs: usize,
    pub hausdorff_seed: u64,
}

impl ReductionConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        ReductionConfig {
            clusters,
            kmeans: KMeansConfig {
                seed,
                ..KMeansConfig::default()
            },
            n_dirs: 512,
            hausdorff_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub assignment: ClusterAssignment,
    pub auxiliary_game: GameSpec,
    pub weights: Vec<f64>,
    #[serde(rename = "delta_X")]
    pub delta_x: f64,
    pub delta_x_method: HausdorffMethod,
    pub delta_u: f64,
    pub rho: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2_estimate")]
    pub l2_estimate: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// `None` when `rho` is zero and `delta_X` is not.
    #[serde(rename = "K")]
    pub k: Option<f64>,
    /// `delta_X < rho / 2`, or `delta_X = 0`.
    pub rho_condition_ok: bool,
    pub coupling_margin: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl ReductionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Clusters the players, builds the population game and evaluates every
/// constant of the reduction error bound.
pub fn reduce(game: &GameSpec, cfg: &ReductionConfig) -> Result<ReductionReport> {
    game.validate()?;
    let vectors: Vec<Vec<f64>> = game.players.iter().map(player_vector).collect();
    let assignment = if cfg.clusters == game.n_players {
        ClusterAssignment::singletons(&vectors)
    } else {
        kmeans(&vectors, cfg.clusters, &cfg.kmeans)?
    };
    reduce_with(game, assignment, cfg)
}

/// [`reduce`] with a given assignment.
pub fn reduce_with(game: &GameSpec, assignment: ClusterAssignment, cfg: &ReductionConfig) -> Result<ReductionReport> {
    let aux = build_auxiliary(game, &assignment)?;
    let ind = compute_indicators(game, &aux, &assignment, cfg.n_dirs, cfg.hausdorff_seed)?;
    let consts = compute_constants(game, ind.delta_x)?;
    let k = if consts.rho > 0.0 {
        Some(k_bound(consts.l1, consts.rho, consts.r, ind.delta_x, ind.delta_u)?)
    } else if ind.delta_x == 0.0 {
        Some(2.0 * consts.r * ind.delta_u)
    } else {
        None
    };
    let rho_condition_ok = ind.delta_x == 0.0 || ind.delta_x < consts.rho / 2.0;
    let mono = game.classify_monotonicity();
    Ok(ReductionReport {
        weights: aux.weights(),
        auxiliary_game: aux,
        assignment,
        delta_x: ind.delta_x,
        delta_x_method: ind.delta_x_method,
        delta_u: ind.delta_u,
        rho: consts.rho,
        l1: consts.l1,
        l2_estimate: consts.l2_estimate,
        r: consts.r,
        k,
        rho_condition_ok,
        coupling_margin: consts.coupling_margin,
        alpha: mono.alpha,
        beta: mono.beta,
    })
}

/// Distance between two profiles.
pub fn profile_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| dist(x, y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PriceFunction;

    fn player(omega: f64, y: f64, e: f64, l: f64, u: f64) -> PlayerParams {
        PlayerParams {
            omega,
            preferred: vec![y],
            energy: e,
            lower: vec![l],
            upper: vec![u],
            budget_free: false,
        }
    }

    fn boxed(omega: f64, y: f64) -> PlayerParams {
        PlayerParams {
            budget_free: true,
            ..player(omega, y, 1.0, 0.0, 1.0)
        }
    }

    #[test]
    fn vector_order_and_round_trip() {
        let p = player(2.0, 3.0, 3.0, 0.0, 5.0);
        assert_eq!(player_vector(&p), vec![2.0, 3.0, 3.0, 0.0, 5.0]);
        assert_eq!(player_from_vector(&player_vector(&p), 1).unwrap(), p);
        let z = player(0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(player_vector(&z).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grouped_energy_is_the_mean() {
        let game = GameSpec::new(
            vec![player(1.0, 2.0, 2.0, 0.0, 5.0), player(1.0, 4.0, 4.0, 0.0, 5.0)],
            PriceFunction::affine(0.0, 1.0).unwrap(),
            None,
            Aggregation::Sum,
        )
        .unwrap();
        let vectors: Vec<Vec<f64>> = game.players.iter().map(player_vector).collect();
        let a = ClusterAssignment::from_labels(&vectors, vec![0, 0], 1).unwrap();
        let aux = build_auxiliary(&game, &a).unwrap();
        assert_eq!(aux.players[0].energy, 3.0);
        assert_eq!(aux.population_sizes, Some(vec![2.0]));
    }

    #[test]
    fn singletons_reproduce_the_game() {
        let game = GameSpec::new(
            vec![player(1.0, 2.0, 2.0, 0.0, 5.0), player(3.0, 4.0, 4.0, 1.0, 5.0)],
            PriceFunction::affine(0.0, 1.0).unwrap(),
            None,
            Aggregation::Sum,
        )
        .unwrap();
        let rep = reduce(&game, &ReductionConfig::new(2, 0)).unwrap();
        assert_eq!(rep.auxiliary_game.players, game.players);
        assert_eq!((rep.delta_x, rep.delta_u, rep.k), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn delta_u_substitution() {
        // population omega = 1, members omega 1 and 3, y = 0, R + delta = 1
        let game = GameSpec::new(
            vec![boxed(1.0, 0.0), boxed(3.0, 0.0)],
            PriceFunction::affine(0.0, 1.0).unwrap(),
            None,
            Aggregation::Sum,
        )
        .unwrap();
        let vectors: Vec<Vec<f64>> = game.players.iter().map(player_vector).collect();
        let a = ClusterAssignment::from_labels(&vectors, vec![0, 0], 1).unwrap();
        let mut aux = build_auxiliary(&game, &a).unwrap();
        aux.players[0].omega = 1.0;
        let ind = compute_indicators(&game, &aux, &a, 16, 0).unwrap();
        assert_eq!(ind.delta_x, 0.0);
        assert_eq!(ind.r_enlarged, 1.0);
        assert_eq!(ind.delta_u, 4.0);
    }

    #[test]
    fn constants_examples() {
        let game = GameSpec::new(
            vec![PlayerParams {
                budget_free: true,
                ..player(1.0, 2.0, 5.0, 0.0, 5.0)
            }],
            PriceFunction::constant(0.0).unwrap(),
            None,
            Aggregation::Sum,
        )
        .unwrap();
        assert_eq!(compute_constants(&game, 0.0).unwrap().r, 5.0);

        let game = GameSpec::new(
            vec![boxed(1.0, 0.5)],
            PriceFunction::constant(0.0).unwrap(),
            None,
            Aggregation::Sum,
        )
        .unwrap();
        assert_eq!(compute_constants(&game, 0.0).unwrap().l1, 4.0);
    }

    #[test]
    fn k_examples() {
        assert!((k_bound(2.0, 0.5, 1.0, 0.1, 0.05).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(k_bound(2.0, 0.5, 1.0, 0.0, 0.0).unwrap(), 0.0);
        let k1 = k_bound(2.0, 0.5, 1.0, 0.1, 0.05).unwrap();
        let k2 = k_bound(2.0, 0.5, 2.0, 0.1, 0.05).unwrap();
        assert!((k2 - 2.0 * k1).abs() < 1e-12);
        assert!(k_bound(2.0, 0.0, 1.0, 0.1, 0.05).is_err());
    }

    #[test]
    fn lift_and_average() {
        let vectors = vec![vec![0.0], vec![1.0], vec![5.0]];
        let a = ClusterAssignment::from_labels(&vectors, vec![0, 0, 1], 2).unwrap();
        let avg = average_profile(&[vec![1.0], vec![3.0], vec![7.0]], &a).unwrap();
        assert_eq!(avg, vec![vec![2.0], vec![7.0]]);
        let z = vec![vec![0.25], vec![4.0]];
        assert_eq!(average_profile(&lift_profile(&z, &a).unwrap(), &a).unwrap(), z);
        assert!(lift_profile(&z[..1], &a).is_err());
    }
}
