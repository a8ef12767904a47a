//! Brute-force references for small instances. Nothing here calls the
//! projection, price, cost or clustering code it is used to check.

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::projection::BoxSimplexSet;
use crate::solver::EquilibriumKind;

pub const QP_ORACLE_MAX_DIM: usize = 6;

/// Euclidean projection by enumerating which coordinates sit at their lower
/// bound, their upper bound or strictly inside (`3^T` patterns).
pub fn qp_project_oracle(set: &BoxSimplexSet, v: &[f64]) -> Result<Vec<f64>> {
    let t_dim = set.lower.len();
    if t_dim > QP_ORACLE_MAX_DIM {
        return Err(Error::invalid(format!("qp oracle supports T <= {QP_ORACLE_MAX_DIM}")));
    }
    if v.len() != t_dim || set.upper.len() != t_dim {
        return Err(Error::dim("oracle vector", t_dim, v.len()));
    }
    let tol = 1e-9 * (1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let patterns = 3usize.pow(t_dim as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut x = vec![0.0; t_dim];
        let mut free = Vec::new();
        for t in 0..t_dim {
            match c % 3 {
                0 => x[t] = set.lower[t],
                1 => x[t] = set.upper[t],
                _ => free.push(t),
            }
            c /= 3;
        }
        let mu = match set.energy {
            None => 0.0,
            Some(e) => {
                let fixed: f64 = (0..t_dim).filter(|t| !free.contains(t)).map(|t| x[t]).sum();
                if free.is_empty() {
                    if (fixed - e).abs() > tol * (1.0 + e.abs()) {
                        continue;
                    }
                    0.0
                } else {
                    let sv: f64 = free.iter().map(|&t| v[t]).sum();
                    (sv + fixed - e) / free.len() as f64
                }
            }
        };
        for &t in &free {
            x[t] = v[t] - mu;
        }
        let feasible = (0..t_dim).all(|t| x[t] >= set.lower[t] - tol && x[t] <= set.upper[t] + tol);
        if !feasible {
            continue;
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| Error::Infeasible("empty action set".into()))
}

/// Piecewise price evaluated from the raw pieces, extended linearly below 0.
fn price(game: &GameSpec, t: usize, load: f64) -> f64 {
    let pf = &game.prices[t];
    let pieces: Vec<[f64; 3]> = pf.clone().into();
    let mut val = pieces[0][1] + pieces[0][2] * load;
    for p in &pieces {
        if load >= p[0] {
            val = p[1] + p[2] * load;
        }
    }
    val
}

fn cost(game: &GameSpec, n: usize, x: &[f64], agg: &[f64]) -> f64 {
    let p = &game.players[n];
    (0..game.horizon)
        .map(|t| x[t] * price(game, t, agg[t]) + p.omega * (x[t] - p.preferred[t]).powi(2))
        .sum()
}

fn aggregate_1d(game: &GameSpec, xs: &[f64]) -> f64 {
    let w = game.weights();
    let s: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
    match game.aggregation {
        crate::game::Aggregation::Sum => s,
        crate::game::Aggregation::Average => s / w.iter().sum::<f64>(),
    }
}

/// Derivative used in the variational condition of player `n` at the
/// one-period profile `xs`, by central differences of the cost.
fn marginal(game: &GameSpec, kind: EquilibriumKind, n: usize, xs: &[f64]) -> f64 {
    let h = 1e-7;
    let agg = aggregate_1d(game, xs);
    match kind {
        EquilibriumKind::Svwe => {
            (cost(game, n, &[xs[n] + h], &[agg]) - cost(game, n, &[xs[n] - h], &[agg])) / (2.0 * h)
        }
        EquilibriumKind::Vne => {
            let mut up = xs.to_vec();
            let mut dn = xs.to_vec();
            up[n] += h;
            dn[n] -= h;
            (cost(game, n, &up[n..=n], &[aggregate_1d(game, &up)])
                - cost(game, n, &dn[n..=n], &[aggregate_1d(game, &dn)]))
                / (2.0 * h)
        }
    }
}

fn interval(game: &GameSpec, n: usize) -> (f64, f64) {
    let p = &game.players[n];
    if p.budget_free {
        (p.lower[0], p.upper[0])
    } else {
        // one period with a budget pins the action
        (p.energy, p.energy)
    }
}

/// Largest gain `sum_n w_n g_n (x_n - z_n)` over feasible deviations `z`.
fn violation(game: &GameSpec, kind: EquilibriumKind, xs: &[f64]) -> f64 {
    let w = game.weights();
    let g: Vec<f64> = (0..xs.len()).map(|n| marginal(game, kind, n, xs)).collect();
    let value = |z: &[f64]| -> f64 { (0..xs.len()).map(|n| w[n] * g[n] * (xs[n] - z[n])).sum() };
    let boxes: Vec<(f64, f64)> = (0..xs.len()).map(|n| interval(game, n)).collect();
    candidate_points(game, &boxes)
        .iter()
        .map(|z| value(z))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Vertices of the feasible deviation polytope: box corners plus, with a
/// one-row coupling, the row's intersections with the box edges.
fn candidate_points(game: &GameSpec, boxes: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let n = boxes.len();
    let mut corners: Vec<Vec<f64>> = vec![vec![]];
    for &(lo, hi) in boxes {
        corners = corners
            .into_iter()
            .flat_map(|c| {
                let mut a = c.clone();
                a.push(lo);
                let mut b = c;
                b.push(hi);
                [a, b]
            })
            .collect();
    }
    let Some(c) = &game.coupling else {
        return corners;
    };
    let (a, b) = (c.matrix[0][0], c.rhs[0]);
    let w = game.weights();
    let scale = match game.aggregation {
        crate::game::Aggregation::Sum => 1.0,
        crate::game::Aggregation::Average => 1.0 / w.iter().sum::<f64>(),
    };
    let lhs = |z: &[f64]| a * scale * z.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>();
    let mut pts: Vec<Vec<f64>> = corners.iter().filter(|z| lhs(z) <= b + 1e-12).cloned().collect();
    // edges: vary coordinate k, others at a corner
    for corner in &corners {
        for k in 0..n {
            let coef = a * scale * w[k];
            if coef == 0.0 {
                continue;
            }
            let rest: f64 = (0..n).filter(|&m| m != k).map(|m| a * scale * w[m] * corner[m]).sum();
            let zk = (b - rest) / coef;
            if zk >= boxes[k].0 && zk <= boxes[k].1 {
                let mut z = corner.clone();
                z[k] = zk;
                pts.push(z);
            }
        }
    }
    pts
}

fn check_small(game: &GameSpec) -> Result<()> {
    if game.n_players > 2 || game.horizon != 1 {
        return Err(Error::invalid("grid oracle supports N <= 2 and T = 1"));
    }
    if game.coupling.as_ref().is_some_and(|c| c.matrix.len() > 1) {
        return Err(Error::invalid("grid oracle supports at most one coupling row"));
    }
    Ok(())
}

fn feasible(game: &GameSpec, xs: &[f64]) -> bool {
    match &game.coupling {
        None => true,
        Some(c) => c.matrix[0][0] * aggregate_1d(game, xs) <= c.rhs[0] + 1e-12,
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi - lo <= 0.0 {
        return vec![lo];
    }
    let m = ((hi - lo) / step).round() as usize;
    (0..=m).map(|i| (lo + i as f64 * step).min(hi)).collect()
}

/// Profile minimising the variational violation over a grid of step `1e-4`
/// (searched coarse to fine). Returns `(profile, aggregate)`.
pub fn grid_equilibrium_oracle(game: &GameSpec, kind: EquilibriumKind) -> Result<(Vec<f64>, f64)> {
    check_small(game)?;
    let boxes: Vec<(f64, f64)> = (0..game.n_players).map(|n| interval(game, n)).collect();
    let mut centre: Vec<f64> = boxes.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut radius: Vec<f64> = boxes.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect();
    for step in [1e-2, 1e-3, 1e-4] {
        let axes: Vec<Vec<f64>> = (0..game.n_players)
            .map(|n| {
                let lo = (centre[n] - radius[n]).max(boxes[n].0);
                let hi = (centre[n] + radius[n]).min(boxes[n].1);
                grid(lo, hi, step)
            })
            .collect();
        let mut best = (f64::INFINITY, centre.clone());
        let mut visit = |xs: Vec<f64>| {
            if feasible(game, &xs) {
                let v = violation(game, kind, &xs);
                if v < best.0 {
                    best = (v, xs);
                }
            }
        };
        if game.n_players == 1 {
            for &a in &axes[0] {
                visit(vec![a]);
            }
        } else {
            for &a in &axes[0] {
                for &b in &axes[1] {
                    visit(vec![a, b]);
                }
            }
        }
        if !best.0.is_finite() {
            return Err(Error::Infeasible("no feasible grid point".into()));
        }
        centre = best.1;
        radius = vec![20.0 * step; game.n_players];
    }
    let agg = aggregate_1d(game, &centre);
    Ok((centre, agg))
}

/// Minimiser of a convex function on `[lo, hi]` by ternary search.
pub fn ternary_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// Best response of the only player of a one-period game, by ternary search
/// on its cost with the aggregate recomputed.
pub fn single_player_vne_oracle(game: &GameSpec) -> Result<f64> {
    if game.n_players != 1 || game.horizon != 1 || game.coupling.is_some() {
        return Err(Error::invalid("single-player oracle needs N = 1, T = 1, no coupling"));
    }
    let (lo, hi) = interval(game, 0);
    Ok(ternary_minimize(
        |x| cost(game, 0, &[x], &[aggregate_1d(game, &[x])]),
        lo,
        hi,
    ))
}

pub const EXHAUSTIVE_KMEANS_MAX_N: usize = 10;

/// Minimum within-cluster sum of squares over all partitions of `points`
/// into exactly `k` nonempty groups, with one optimal labelling.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> Result<(f64, Vec<usize>)> {
    let n = points.len();
    if n > EXHAUSTIVE_KMEANS_MAX_N || k == 0 || k > 3 || k > n {
        return Err(Error::invalid("exhaustive k-means supports N <= 10 and 1 <= k <= min(3, N)"));
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut labels = vec![0usize; n];
    // restricted growth strings enumerate each partition once
    fn rec(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, pts: &[Vec<f64>], best: &mut (f64, Vec<usize>)) {
        let n = labels.len();
        if i == n {
            if used == k {
                let obj = sse(pts, labels, k);
                if obj < best.0 {
                    *best = (obj, labels.clone());
                }
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), k, labels, pts, best);
        }
    }
    rec(0, 0, k, &mut labels, points, &mut best);
    Ok(best)
}

fn sse(pts: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = pts[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = pts.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        let m = members.len() as f64;
        for j in 0..d {
            let mean = members.iter().map(|p| p[j]).sum::<f64>() / m;
            total += members.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}
