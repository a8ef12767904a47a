//! Largest uniform slack of the coupling constraint over the set of feasible
//! aggregate profiles:
//!
//! `max_{x in prod X_n} min_j (b_j - a_j . agg(x)) / |a_j|`
//!
//! Solved as a zero-sum game between the rows (multiplicative weights) and
//! the players (exact best responses through greedy support points). The
//! averaged best responses give a feasible profile whose margin is a
//! certified lower bound; the row mixtures give a certified upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Aggregation, CouplingConstraint, Profile};
use crate::projection::BoxSimplexSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMargin {
    /// Margin attained by `profile` (lower bound on the optimum).
    pub lower: f64,
    /// Value of the best row mixture found (upper bound on the optimum).
    pub upper: f64,
    pub aggregate: Vec<f64>,
    pub profile: Profile,
    pub rounds: usize,
}

impl CouplingMargin {
    pub fn certified_feasible(&self) -> bool {
        self.lower >= 0.0
    }

    pub fn certified_infeasible(&self) -> bool {
        self.upper < 0.0
    }
}

fn row_norms(c: &CouplingConstraint) -> Vec<f64> {
    c.matrix
        .iter()
        .map(|r| r.iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect()
}

/// Normalised slacks `(b - A agg) / |a_j|`.
fn slacks(c: &CouplingConstraint, norms: &[f64], agg: &[f64]) -> Vec<f64> {
    c.apply(agg)
        .iter()
        .zip(&c.rhs)
        .zip(norms)
        .map(|((ax, b), nrm)| (b - ax) / nrm)
        .collect()
}

/// Greedy minimiser of `<cost, x>` over a box-budget set, given the
/// coordinate order by increasing cost.
fn cheapest_point(set: &BoxSimplexSet, order: &[usize], cost: &[f64], out: &mut [f64]) {
    match set.energy {
        None => {
            for t in 0..set.dim() {
                out[t] = if cost[t] < 0.0 { set.upper[t] } else { set.lower[t] };
            }
        }
        Some(e) => {
            out.copy_from_slice(&set.lower);
            let mut rem = e - set.lower.iter().sum::<f64>();
            for &t in order {
                if rem <= 0.0 {
                    break;
                }
                let add = rem.min(set.upper[t] - set.lower[t]);
                out[t] += add;
                rem -= add;
            }
        }
    }
}

pub fn max_coupling_margin(
    sets: &[BoxSimplexSet],
    weights: &[f64],
    aggregation: Aggregation,
    coupling: &CouplingConstraint,
    max_rounds: usize,
) -> Result<CouplingMargin> {
    if sets.is_empty() {
        return Err(Error::invalid("margin of an empty player set"));
    }
    if sets.len() != weights.len() {
        return Err(Error::dim("weights", sets.len(), weights.len()));
    }
    let horizon = sets[0].dim();
    coupling.validate(horizon)?;
    for s in sets {
        s.validate()?;
    }
    let scale = match aggregation {
        Aggregation::Sum => 1.0,
        Aggregation::Average => 1.0 / weights.iter().sum::<f64>(),
    };
    let m = coupling.rows();
    let norms = row_norms(coupling);

    // Range of each normalised slack over the aggregate set, for the step.
    let mut range: f64 = 0.0;
    for (row, nrm) in coupling.matrix.iter().zip(&norms) {
        let neg: Vec<f64> = row.iter().map(|a| -a).collect();
        let hi: f64 = sets
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s.support(row).expect("validated"))
            .sum::<f64>()
            * scale;
        let lo: f64 = -sets
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s.support(&neg).expect("validated"))
            .sum::<f64>()
            * scale;
        range = range.max((hi - lo) / nrm);
    }
    let range = range.max(1e-12);
    let rounds = max_rounds.max(1);
    let eta = (8.0 * (m.max(2) as f64).ln() / rounds as f64).sqrt() / range;

    let mut cum_slack = vec![0.0; m];
    let mut avg_profile: Profile = vec![vec![0.0; horizon]; sets.len()];
    let mut best_upper = f64::INFINITY;
    let mut point = vec![0.0; horizon];
    let mut agg = vec![0.0; horizon];
    let mut done = 0;
    let mut lower = f64::NEG_INFINITY;

    for round in 1..=rounds {
        done = round;
        // mixture over rows, shifted for numerical stability
        let shift = cum_slack.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut mix: Vec<f64> = cum_slack.iter().map(|s| (-eta * (s - shift)).exp()).collect();
        let total: f64 = mix.iter().sum();
        mix.iter_mut().for_each(|v| *v /= total);

        // players minimise <sum_j mix_j a_j / |a_j|, agg>
        let mut cost = vec![0.0; horizon];
        for ((row, nrm), &mu) in coupling.matrix.iter().zip(&norms).zip(&mix) {
            for (c, a) in cost.iter_mut().zip(row) {
                *c += mu * a / nrm;
            }
        }
        let mut order: Vec<usize> = (0..horizon).collect();
        order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)));

        agg.iter_mut().for_each(|a| *a = 0.0);
        let inv = 1.0 / round as f64;
        for ((set, &w), avg) in sets.iter().zip(weights).zip(avg_profile.iter_mut()) {
            cheapest_point(set, &order, &cost, &mut point);
            for t in 0..horizon {
                agg[t] += w * point[t];
                avg[t] += (point[t] - avg[t]) * inv;
            }
        }
        agg.iter_mut().for_each(|a| *a *= scale);

        let s = slacks(coupling, &norms, &agg);
        let dual_value: f64 = mix.iter().zip(&s).map(|(mu, sv)| mu * sv).sum();
        best_upper = best_upper.min(dual_value);
        for (c, sv) in cum_slack.iter_mut().zip(&s) {
            *c += sv;
        }

        if round % 200 == 0 || round == rounds {
            let avg_agg = aggregate(&avg_profile, weights, scale, horizon);
            lower = slacks(coupling, &norms, &avg_agg)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if best_upper - lower <= 1e-6 * (1.0 + best_upper.abs()) {
                break;
            }
        }
    }
    let aggregate = aggregate(&avg_profile, weights, scale, horizon);
    Ok(CouplingMargin {
        lower,
        upper: best_upper,
        aggregate,
        profile: avg_profile,
        rounds: done,
    })
}

fn aggregate(profile: &[Vec<f64>], weights: &[f64], scale: f64, horizon: usize) -> Vec<f64> {
    let mut agg = vec![0.0; horizon];
    for (row, &w) in profile.iter().zip(weights) {
        for (a, x) in agg.iter_mut().zip(row) {
            *a += w * x;
        }
    }
    agg.iter_mut().for_each(|a| *a *= scale);
    agg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_capacity_row() {
        // two players with budget 1 on two periods; X_1 <= 1.5.
        // Optimal: load period 2, X_1 = 0, margin 1.5.
        let sets = vec![BoxSimplexSet::with_budget(1.0, vec![0.0; 2], vec![1.0; 2]).unwrap(); 2];
        let c = CouplingConstraint::new(vec![vec![1.0, 0.0]], vec![1.5]).unwrap();
        let m = max_coupling_margin(&sets, &[1.0, 1.0], Aggregation::Sum, &c, 2000).unwrap();
        assert!((m.lower - 1.5).abs() < 1e-9, "{m:?}");
        assert!(m.upper >= m.lower - 1e-12);
    }

    #[test]
    fn balanced_rows() {
        // X_1 <= 1, X_2 <= 1 with total 1: best is X = (0.5, 0.5), margin 0.5.
        let sets = vec![BoxSimplexSet::with_budget(1.0, vec![0.0; 2], vec![1.0; 2]).unwrap()];
        let c = CouplingConstraint::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let m = max_coupling_margin(&sets, &[1.0], Aggregation::Sum, &c, 20_000).unwrap();
        assert!(m.lower <= 0.5 + 1e-12 && m.upper >= 0.5 - 1e-12, "{m:?}");
        assert!(m.lower > 0.49 && m.upper < 0.51, "{m:?}");
        assert!(m.certified_feasible());
    }

    #[test]
    fn infeasible_capacity() {
        let sets = vec![BoxSimplexSet::with_budget(4.0, vec![0.0; 2], vec![3.0; 2]).unwrap()];
        let c = CouplingConstraint::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let m = max_coupling_margin(&sets, &[1.0], Aggregation::Sum, &c, 5000).unwrap();
        assert!(m.certified_infeasible(), "{m:?}");
    }
}
