//! Euclidean projections and geometry of box-budget action sets.
//!
//! Every action set in the demand-response family has the form
//! `{x : lower <= x <= upper, sum(x) = energy}`. A set without a budget
//! (`energy = None`) is a plain box. The projection onto such a set is a
//! one-dimensional search for the water level `mu` such that
//! `sum(clamp(v - mu, lower, upper)) = energy`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking `sum(lower) <= energy <= sum(upper)`.
const FEAS_TOL: f64 = 1e-9;

/// Largest number of free coordinates for exact vertex enumeration.
pub const EXACT_HAUSDORFF_MAX_DIM: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSimplexSet {
    pub energy: Option<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSimplexSet {
    pub fn new(energy: Option<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = BoxSimplexSet {
            energy,
            lower,
            upper,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_budget(energy: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(Some(energy), lower, upper)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(None, lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::dim("box bounds", self.lower.len(), self.upper.len()));
        }
        for (t, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::NonFinite("box bounds"));
            }
            if l > u + FEAS_TOL {
                return Err(Error::Infeasible(format!(
                    "lower bound {l} exceeds upper bound {u} at coordinate {t}"
                )));
            }
        }
        if let Some(e) = self.energy {
            if !e.is_finite() {
                return Err(Error::NonFinite("budget"));
            }
            let (sl, su) = self.bound_sums();
            let tol = FEAS_TOL * (1.0 + e.abs());
            if e < sl - tol || e > su + tol {
                return Err(Error::Infeasible(format!(
                    "budget {e} outside [{sl}, {su}]"
                )));
            }
        }
        Ok(())
    }

    fn bound_sums(&self) -> (f64, f64) {
        (self.lower.iter().sum(), self.upper.iter().sum())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let in_box = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol);
        let on_budget = match self.energy {
            Some(e) => (x.iter().sum::<f64>() - e).abs() <= tol * (1.0 + e.abs()),
            None => true,
        };
        in_box && on_budget
    }

    /// Coordinates with `lower < upper`.
    pub fn free_coords(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&t| self.upper[t] - self.lower[t] > FEAS_TOL)
            .collect()
    }

    /// Largest Euclidean norm over the set, bounded coordinatewise.
    ///
    /// Exact when the box corner of largest magnitude is feasible; otherwise an
    /// upper bound (which is all the error certificates need). For a
    /// nonnegative budgeted set the l1 bound `energy` is also used.
    pub fn norm_bound(&self) -> f64 {
        let mut sq = 0.0;
        for t in 0..self.dim() {
            let mut e = vec![0.0; self.dim()];
            e[t] = 1.0;
            let hi = self.support_unchecked(&e);
            e[t] = -1.0;
            let lo = -self.support_unchecked(&e);
            let m = hi.abs().max(lo.abs());
            sq += m * m;
        }
        let coord_bound = sq.sqrt();
        match self.energy {
            Some(e) if self.lower.iter().all(|&l| l >= 0.0) => coord_bound.min(e),
            _ => coord_bound,
        }
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        project_box_simplex(self, v)
    }

    pub fn support(&self, direction: &[f64]) -> Result<f64> {
        support_function(self, direction)
    }

    /// A maximiser of `<direction, x>` over the set (greedy fill).
    pub fn support_point(&self, direction: &[f64]) -> Vec<f64> {
        match self.energy {
            None => direction
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(&d, (&l, &u))| if d > 0.0 { u } else { l })
                .collect(),
            Some(e) => {
                let mut x = self.lower.clone();
                let mut rem = e - self.lower.iter().sum::<f64>();
                let mut order: Vec<usize> = (0..self.dim()).collect();
                order.sort_by(|&a, &b| direction[b].total_cmp(&direction[a]).then(a.cmp(&b)));
                for t in order {
                    if rem <= 0.0 {
                        break;
                    }
                    let add = rem.min(self.upper[t] - self.lower[t]);
                    x[t] += add;
                    rem -= add;
                }
                x
            }
        }
    }

    fn support_unchecked(&self, direction: &[f64]) -> f64 {
        let x = self.support_point(direction);
        dot(direction, &x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Projection onto `{l <= x <= u, sum x = E}` by a sorted breakpoint search.
///
/// The map `mu -> sum(clamp(v - mu, l, u))` is piecewise affine and
/// nonincreasing with breakpoints at `v - u` and `v - l`. Runs in
/// `O(T log T)`. When the map is flat at the target value the smallest
/// water level is chosen.
pub fn project_box_simplex(set: &BoxSimplexSet, v: &[f64]) -> Result<Vec<f64>> {
    let n = set.dim();
    if v.len() != n {
        return Err(Error::dim("projection input", n, v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    set.validate()?;
    let clamp = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(set.lower.iter().zip(&set.upper))
            .map(|(&vi, (&l, &u))| (vi - mu).clamp(l, u.max(l)))
            .collect()
    };
    let Some(energy) = set.energy else {
        return Ok(clamp(0.0));
    };
    let (sl, su) = set.bound_sums();
    if energy >= su {
        return Ok(set.upper.clone());
    }
    if energy <= sl {
        return Ok(set.lower.clone());
    }

    // (position, +1 when a coordinate leaves its upper bound, -1 when it
    // reaches its lower bound)
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * n);
    for t in 0..n {
        if set.upper[t] - set.lower[t] <= 0.0 {
            continue;
        }
        events.push((v[t] - set.upper[t], 1));
        events.push((v[t] - set.lower[t], -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut value = su;
    let mut free = 0i32;
    let mut mu = events[0].0;
    let mut idx = 0;
    let mut level = None;
    while idx < events.len() {
        let next = events[idx].0;
        let candidate = value - f64::from(free) * (next - mu);
        if candidate <= energy && free > 0 {
            level = Some(mu + (value - energy) / f64::from(free));
            break;
        }
        value = candidate;
        mu = next;
        // absorb every event at this position
        while idx < events.len() && events[idx].0 == next {
            free += events[idx].1;
            idx += 1;
        }
        if value <= energy {
            level = Some(mu);
            break;
        }
    }
    let mu = level.unwrap_or(mu);
    let mut x = clamp(mu);

    // Spread the rounding residual over the free coordinates.
    let resid = energy - x.iter().sum::<f64>();
    if resid != 0.0 {
        let slack: Vec<usize> = (0..n)
            .filter(|&t| {
                if resid > 0.0 {
                    x[t] < set.upper[t]
                } else {
                    x[t] > set.lower[t]
                }
            })
            .collect();
        if !slack.is_empty() {
            let share = resid / slack.len() as f64;
            for t in slack {
                x[t] = (x[t] + share).clamp(set.lower[t], set.upper[t]);
            }
        }
    }
    Ok(x)
}

/// Componentwise `max(v, 0)`.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// `max_{x in set} <direction, x>`, computed by greedy allocation of the
/// budget to the coordinates with the largest direction weight.
pub fn support_function(set: &BoxSimplexSet, direction: &[f64]) -> Result<f64> {
    if direction.len() != set.dim() {
        return Err(Error::dim("support direction", set.dim(), direction.len()));
    }
    set.validate()?;
    Ok(set.support_unchecked(direction))
}

/// Deterministic direction sample: the `2T` signed coordinate axes first,
/// then Gaussian directions normalised to the unit sphere.
pub fn sample_directions(dim: usize, n_dirs: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(n_dirs);
    'axes: for t in 0..dim {
        for sign in [1.0, -1.0] {
            if dirs.len() == n_dirs {
                break 'axes;
            }
            let mut d = vec![0.0; dim];
            d[t] = sign;
            dirs.push(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while dirs.len() < n_dirs {
        let d: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            dirs.push(d.into_iter().map(|x| x / norm).collect());
        }
    }
    dirs
}

/// Lower estimate of the Hausdorff distance through support functions:
/// `max_d |h_a(d) - h_b(d)|` over sampled unit directions. Exact in the
/// limit of dense directions for convex compact sets.
pub fn hausdorff_estimate(
    a: &BoxSimplexSet,
    b: &BoxSimplexSet,
    n_dirs: usize,
    seed: u64,
) -> Result<f64> {
    if n_dirs == 0 {
        return Err(Error::invalid("hausdorff_estimate needs at least one direction"));
    }
    if a.dim() != b.dim() {
        return Err(Error::dim("hausdorff sets", a.dim(), b.dim()));
    }
    a.validate()?;
    b.validate()?;
    Ok(sample_directions(a.dim(), n_dirs, seed)
        .iter()
        .map(|d| (a.support_unchecked(d) - b.support_unchecked(d)).abs())
        .fold(0.0, f64::max))
}

/// Vertices of the set, enumerated over its free coordinates.
pub fn vertices(set: &BoxSimplexSet) -> Result<Vec<Vec<f64>>> {
    set.validate()?;
    let free = set.free_coords();
    if free.len() > EXACT_HAUSDORFF_MAX_DIM {
        return Err(Error::invalid(format!(
            "vertex enumeration limited to {EXACT_HAUSDORFF_MAX_DIM} free coordinates, got {}",
            free.len()
        )));
    }
    let base = set.lower.clone();
    let mut out = Vec::new();
    match set.energy {
        None => {
            for mask in 0u32..(1 << free.len()) {
                let mut x = base.clone();
                for (k, &t) in free.iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        x[t] = set.upper[t];
                    }
                }
                out.push(x);
            }
        }
        Some(e) => {
            if free.is_empty() {
                out.push(base);
                return Ok(out);
            }
            let fixed_sum: f64 = (0..set.dim())
                .filter(|t| !free.contains(t))
                .map(|t| set.lower[t])
                .sum();
            for (j_pos, &j) in free.iter().enumerate() {
                let others: Vec<usize> = free
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j_pos)
                    .map(|(_, &t)| t)
                    .collect();
                for mask in 0u32..(1 << others.len()) {
                    let mut x = base.clone();
                    let mut s = fixed_sum;
                    for (k, &t) in others.iter().enumerate() {
                        if mask & (1 << k) != 0 {
                            x[t] = set.upper[t];
                        }
                        s += x[t];
                    }
                    let xj = e - s;
                    let tol = FEAS_TOL * (1.0 + e.abs());
                    if xj >= set.lower[j] - tol && xj <= set.upper[j] + tol {
                        x[j] = xj.clamp(set.lower[j], set.upper[j]);
                        out.push(x);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact Hausdorff distance for sets with few free coordinates: the
/// distance function to a convex set is convex, so its maximum over a
/// polytope is reached at a vertex.
pub fn hausdorff_exact(a: &BoxSimplexSet, b: &BoxSimplexSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dim("hausdorff sets", a.dim(), b.dim()));
    }
    let one_sided = |from: &BoxSimplexSet, to: &BoxSimplexSet| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for v in vertices(from)? {
            let p = to.project(&v)?;
            worst = worst.max(dist(&v, &p));
        }
        Ok(worst)
    };
    Ok(one_sided(a, b)?.max(one_sided(b, a)?))
}

/// Radius of the largest ball inside the set, measured within the affine
/// hull of its free coordinates (and the budget hyperplane when present).
///
/// The optimal common slack `s` of the margin LP
/// `max s  s.t.  l + s <= x <= u - s, sum x = E` has the closed form
/// `min(min_t (u_t - l_t)/2, (E - sum l)/m, (sum u - E)/m)` over the `m` free
/// coordinates; the facet normals projected on the budget hyperplane have
/// length `sqrt(1 - 1/m)`, which converts slack to distance.
/// Degenerate sets (a single point) give 0.
pub fn inradius(set: &BoxSimplexSet) -> Result<f64> {
    Ok(chebyshev_center(set)?.map_or(0.0, |(r, _)| r))
}

/// `(radius, center)` of [`inradius`], or `None` for a degenerate set.
pub fn chebyshev_center(set: &BoxSimplexSet) -> Result<Option<(f64, Vec<f64>)>> {
    set.validate()?;
    let free = set.free_coords();
    let m = free.len();
    let half_width = free
        .iter()
        .map(|&t| 0.5 * (set.upper[t] - set.lower[t]))
        .fold(f64::INFINITY, f64::min);
    let slack = match set.energy {
        None => {
            if m == 0 {
                log::warn!("inradius of a single point is taken as 0");
                return Ok(None);
            }
            half_width
        }
        Some(e) => {
            if m <= 1 {
                log::warn!("inradius of a single point is taken as 0");
                return Ok(None);
            }
            let fixed: f64 = (0..set.dim())
                .filter(|t| !free.contains(t))
                .map(|t| set.lower[t])
                .sum();
            let e_free = e - fixed;
            let lo: f64 = free.iter().map(|&t| set.lower[t]).sum();
            let hi: f64 = free.iter().map(|&t| set.upper[t]).sum();
            half_width
                .min((e_free - lo) / m as f64)
                .min((hi - e_free) / m as f64)
        }
    };
    if slack <= 0.0 {
        return Ok(None);
    }
    let shrunk_lower: Vec<f64> = (0..set.dim())
        .map(|t| {
            if free.contains(&t) {
                set.lower[t] + slack
            } else {
                set.lower[t]
            }
        })
        .collect();
    let shrunk_upper: Vec<f64> = (0..set.dim())
        .map(|t| {
            if free.contains(&t) {
                set.upper[t] - slack
            } else {
                set.upper[t]
            }
        })
        .collect();
    let mid: Vec<f64> = shrunk_lower
        .iter()
        .zip(&shrunk_upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let shrunk = BoxSimplexSet {
        energy: set.energy,
        lower: shrunk_lower,
        upper: shrunk_upper,
    };
    let center = project_box_simplex(&shrunk, &mid)?;
    let radius = match set.energy {
        None => slack,
        Some(_) => slack / (1.0 - 1.0 / m as f64).sqrt(),
    };
    Ok(Some((radius, center)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn feasible_point_is_fixed() {
        let s = BoxSimplexSet::with_budget(1.0, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(close(&s.project(&[0.5, 0.5]).unwrap(), &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn clipped_projection() {
        let s = BoxSimplexSet::with_budget(1.0, vec![0.2, 0.2], vec![0.8, 0.8]).unwrap();
        assert!(close(&s.project(&[1.0, 0.0]).unwrap(), &[0.8, 0.2], 1e-12));
    }

    #[test]
    fn symmetric_projection() {
        let s = BoxSimplexSet::with_budget(3.0, vec![0.0; 3], vec![2.0; 3]).unwrap();
        assert!(close(&s.project(&[0.0; 3]).unwrap(), &[1.0; 3], 1e-12));
    }

    #[test]
    fn infeasible_set_is_rejected() {
        let s = BoxSimplexSet {
            energy: Some(5.0),
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        assert!(matches!(s.project(&[0.0, 0.0]), Err(Error::Infeasible(_))));
        assert!(BoxSimplexSet::boxed(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn nonneg_projection() {
        assert_eq!(project_nonneg(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(project_nonneg(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(project_nonneg(&[3.0, -0.5, -0.1]), vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn support_values() {
        let s = BoxSimplexSet::with_budget(1.0, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(s.support(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(s.support(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(s.support(&[1.0, 1.0]).unwrap(), 1.0);
        // the segment's vertices are (1,0) and (0,1)
        let v = vertices(&s).unwrap();
        let best = v.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn hausdorff_basic_cases() {
        let a = BoxSimplexSet::with_budget(2.0, vec![0.0; 3], vec![1.5; 3]).unwrap();
        assert_eq!(hausdorff_estimate(&a, &a, 64, 1).unwrap(), 0.0);
        let b1 = BoxSimplexSet::boxed(vec![0.0], vec![1.0]).unwrap();
        let b2 = BoxSimplexSet::boxed(vec![0.5], vec![2.0]).unwrap();
        assert!((hausdorff_estimate(&b1, &b2, 8, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!((hausdorff_exact(&b1, &b2).unwrap() - 1.0).abs() < 1e-12);
        assert!(hausdorff_estimate(&a, &a, 0, 1).is_err());
    }

    #[test]
    fn inradius_cases() {
        let s = BoxSimplexSet::with_budget(1.0, vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert!((inradius(&s).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        let point = BoxSimplexSet::with_budget(1.0, vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert_eq!(inradius(&point).unwrap(), 0.0);
        let (r, c) = chebyshev_center(
            &BoxSimplexSet::with_budget(1.5, vec![0.0; 3], vec![1.0; 3]).unwrap(),
        )
        .unwrap()
        .unwrap();
        assert!(close(&c, &[0.5; 3], 1e-12));
        assert!((r - 0.5 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn norm_bound_of_interval() {
        let s = BoxSimplexSet::boxed(vec![0.0], vec![5.0]).unwrap();
        assert_eq!(s.norm_bound(), 5.0);
    }
}
