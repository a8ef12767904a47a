//! JSON-in, JSON-out views used by the static page in `www/`.
//!
//! Each view is a plain function returning `Result<String, String>` so it can
//! be tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use aggregame::analysis::{relative_error, thm1_bounds, Modulus};
use aggregame::projection::vertices;
use aggregame::reduction::{compute_constants, lift_profile, reduce, ReductionConfig};
use aggregame::scenario::{generate, shrink, ScenarioConfig};
use aggregame::{solve_svwe, solve_vne, Aggregation, BoxSimplexSet, GameSpec, PlayerParams, PriceFunction, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Orthonormal coordinates in the plane `x1 + x2 + x3 = const`.
fn to_plane(x: &[f64]) -> [f64; 2] {
    [(x[0] - x[1]) / SQRT2, (x[0] + x[1] - 2.0 * x[2]) / 6f64.sqrt()]
}

fn from_plane(energy: f64, p: [f64; 2]) -> Vec<f64> {
    let base = energy / 3.0;
    let (a, b) = (p[0] / SQRT2, p[1] / 6f64.sqrt());
    vec![base + a + b, base - a + b, base - 2.0 * b]
}

#[derive(Serialize)]
struct ProjectionView {
    polygon: Vec<[f64; 2]>,
    point: Vec<f64>,
    projection: Vec<f64>,
    projection_2d: [f64; 2],
    distance: f64,
}

/// Three-period action set with an energy budget, drawn in its budget
/// plane, and the projection of the plane point `(a, b)` onto it.
pub fn projection_view(lower: &[f64], upper: &[f64], energy: f64, a: f64, b: f64) -> Result<String, String> {
    if lower.len() != 3 || upper.len() != 3 {
        return Err("the projection view needs three periods".into());
    }
    let set = BoxSimplexSet::new(Some(energy), lower.to_vec(), upper.to_vec()).map_err(|e| e.to_string())?;
    let mut polygon: Vec<[f64; 2]> = vertices(&set).map_err(|e| e.to_string())?.iter().map(|v| to_plane(v)).collect();
    let n = polygon.len() as f64;
    let c = polygon.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n]);
    polygon.sort_by(|p, q| {
        let ap = (p[1] - c[1]).atan2(p[0] - c[0]);
        let aq = (q[1] - c[1]).atan2(q[0] - c[0]);
        ap.total_cmp(&aq)
    });
    polygon.dedup_by(|p, q| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    let point = from_plane(energy, [a, b]);
    let projection = set.project(&point).map_err(|e| e.to_string())?;
    let distance = point.iter().zip(&projection).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let view = ProjectionView {
        polygon,
        projection_2d: to_plane(&projection),
        point,
        projection,
        distance,
    };
    Ok(serde_json::to_string(&view).expect("serialisable"))
}

#[derive(Serialize)]
struct GapRow {
    n: usize,
    svwe: f64,
    vne: f64,
    gap: f64,
    bound: f64,
}

/// `n` copies of one player with action `x` in `[0, upper]`, preferred
/// value `y` and weight `omega`, facing the price `slope * average`: the
/// VNE and SVWE averages and their distance against its `1/N` bound.
pub fn replication_gap(omega: f64, y: f64, upper: f64, slope: f64, sizes: &[usize]) -> Result<String, String> {
    let player = PlayerParams {
        omega,
        preferred: vec![y.clamp(0.0, upper)],
        energy: y,
        lower: vec![0.0],
        upper: vec![upper],
        budget_free: true,
    };
    let price = PriceFunction::affine(0.0, slope).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        stop_tol: 1e-9,
        ..SolverConfig::default()
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let game = GameSpec::new(vec![player.clone(); n], price.clone(), None, Aggregation::Average)
            .map_err(|e| e.to_string())?;
        let s = solve_svwe(&game, &game.weights(), &cfg).map_err(|e| e.to_string())?;
        let v = solve_vne(&game, &cfg).map_err(|e| e.to_string())?;
        let alpha = game
            .classify_monotonicity()
            .alpha
            .ok_or("omega must be positive for the bound")?;
        let consts = compute_constants(&game, 0.0).map_err(|e| e.to_string())?;
        let bound = thm1_bounds(consts.l2_estimate, Modulus::Alpha(alpha), n, consts.r)
            .map_err(|e| e.to_string())?[2]
            .value;
        rows.push(GapRow {
            n,
            svwe: s.aggregate[0],
            vne: v.aggregate[0],
            gap: (s.aggregate[0] - v.aggregate[0]).abs(),
            bound,
        });
    }
    Ok(serde_json::to_string(&rows).expect("serialisable"))
}

#[derive(Serialize)]
struct ReductionView {
    n_players: usize,
    clusters: usize,
    capacity: f64,
    vne: Vec<f64>,
    reduced: Vec<f64>,
    rel_error: f64,
    cluster_sizes: Vec<usize>,
    delta_x: f64,
    delta_u: f64,
    vne_iterations: usize,
    reduced_iterations: usize,
}

/// A charging scenario scaled to `n_players`, its VNE load curve and the
/// load curve of the SVWE of its `clusters`-population reduction.
pub fn reduction_view(n_players: usize, seed: u64, clusters: usize) -> Result<String, String> {
    if !(1..=400).contains(&n_players) {
        return Err("choose between 1 and 400 players".into());
    }
    if clusters == 0 || clusters > n_players {
        return Err(format!("choose between 1 and {n_players} clusters"));
    }
    let base = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    let cfg = shrink(&base, n_players as f64 / base.n_players as f64, false).map_err(|e| e.to_string())?;
    let game = generate(&cfg).map_err(|e| e.to_string())?;
    let solver = SolverConfig::default();
    let vne = solve_vne(&game, &solver).map_err(|e| e.to_string())?;
    let rep = reduce(&game, &ReductionConfig::new(clusters, seed)).map_err(|e| e.to_string())?;
    let red = solve_svwe(&rep.auxiliary_game, &rep.weights, &solver).map_err(|e| e.to_string())?;
    let lifted = lift_profile(&red.profile, &rep.assignment).map_err(|e| e.to_string())?;
    let reduced = game.aggregate(&lifted, &game.weights());
    let view = ReductionView {
        n_players: game.n_players,
        clusters,
        capacity: cfg.capacity,
        rel_error: relative_error(&vne.aggregate, &reduced).map_err(|e| e.to_string())?,
        vne: vne.aggregate,
        reduced,
        cluster_sizes: rep.assignment.sizes.clone(),
        delta_x: rep.delta_x,
        delta_u: rep.delta_u,
        vne_iterations: vne.iterations,
        reduced_iterations: red.iterations,
    };
    Ok(serde_json::to_string(&view).expect("serialisable"))
}

#[wasm_bindgen(js_name = projectionView)]
pub fn projection_view_js(lower: Vec<f64>, upper: Vec<f64>, energy: f64, a: f64, b: f64) -> Result<String, JsValue> {
    projection_view(&lower, &upper, energy, a, b).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = replicationGap)]
pub fn replication_gap_js(omega: f64, y: f64, upper: f64, slope: f64, sizes: Vec<u32>) -> Result<String, JsValue> {
    let sizes: Vec<usize> = sizes.into_iter().map(|n| n as usize).collect();
    replication_gap(omega, y, upper, slope, &sizes).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = reductionView)]
pub fn reduction_view_js(n_players: u32, seed: u32, clusters: u32) -> Result<String, JsValue> {
    reduction_view(n_players as usize, seed as u64, clusters as usize).map_err(|e| JsValue::from_str(&e))
}
