//! Error metrics, approximation certificates and rate fitting.
//!
//! Certificates bound distances between average aggregates `x̄ = agg / N`
//! (the average-convention units); use [`to_game_units`] to compare with
//! aggregates of a sum-convention game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Aggregation, GameSpec};
use crate::solver::EquilibriumResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Thm1Individual,
    Thm1Mean,
    Thm1Aggregate,
    Thm2Individual,
    Thm2AggregateStrong,
    Thm2AggregateAggr,
    Prop3Similarity,
    CorollaryAggregate,
}

/// Strong monotonicity modulus of the game operator (`alpha`) or
/// aggregative strong monotonicity modulus (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulus {
    Alpha(f64),
    Beta(f64),
}

impl Modulus {
    fn value(self) -> f64 {
        match self {
            Modulus::Alpha(v) | Modulus::Beta(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(rename = "L1", skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(rename = "L2", skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    pub value: f64,
    pub inputs: BoundInputs,
    /// All hypotheses of the bound were verified.
    pub validity: bool,
    /// Which displayed form was evaluated, where several exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
}

fn positive(what: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain { what, value: v })
    }
}

fn nonneg(what: &'static str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain { what, value: v })
    }
}

fn with_modulus(mut inputs: BoundInputs, m: Modulus) -> BoundInputs {
    match m {
        Modulus::Alpha(a) => inputs.alpha = Some(a),
        Modulus::Beta(b) => inputs.beta = Some(b),
    }
    inputs
}

fn cert(kind: BoundKind, value: f64, inputs: BoundInputs) -> BoundCertificate {
    BoundCertificate {
        kind,
        value,
        inputs,
        validity: true,
        form: None,
    }
}

/// Distance between a VNE and the SVWE of the same game.
pub fn thm1_bounds(l2: f64, modulus: Modulus, n: usize, r: f64) -> Result<Vec<BoundCertificate>> {
    let l2 = nonneg("L2", l2)?;
    let m = positive("modulus", modulus.value())?;
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let nf = n as f64;
    let inputs = with_modulus(
        BoundInputs {
            l2: Some(l2),
            n: Some(nf),
            ..BoundInputs::default()
        },
        modulus,
    );
    Ok(match modulus {
        Modulus::Alpha(_) => vec![
            cert(BoundKind::Thm1Individual, l2 / (m * nf.sqrt()), inputs),
            cert(BoundKind::Thm1Mean, l2 / (m * nf), inputs),
            cert(BoundKind::Thm1Aggregate, l2 / (m * nf), inputs),
        ],
        Modulus::Beta(_) => {
            let r = nonneg("R", r)?;
            vec![cert(
                BoundKind::Thm1Aggregate,
                (2.0 * r * l2 / (m * nf)).sqrt(),
                BoundInputs { r: Some(r), ..inputs },
            )]
        }
    })
}

/// Distance between the SVWE of the reduced game (lifted) and the SVWE of
/// the original game.
pub fn thm2_bounds(k: f64, modulus: Modulus, n: usize) -> Result<Vec<BoundCertificate>> {
    let k = nonneg("K", k)?;
    let m = positive("modulus", modulus.value())?;
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let nf = n as f64;
    let inputs = with_modulus(
        BoundInputs {
            k: Some(k),
            n: Some(nf),
            ..BoundInputs::default()
        },
        modulus,
    );
    Ok(match modulus {
        Modulus::Alpha(_) => vec![
            cert(BoundKind::Thm2Individual, (nf * k / m).sqrt(), inputs),
            cert(BoundKind::Thm2AggregateStrong, (k / m).sqrt(), inputs),
        ],
        Modulus::Beta(_) => vec![cert(BoundKind::Thm2AggregateAggr, (k / m).sqrt(), inputs)],
    })
}

/// Distance between the reduced SVWE and a VNE of the original game.
///
/// In the `beta` case the `R sqrt(2TC/(N beta))` display is used when both
/// `t` and `c` are given; otherwise the aggregative VNE-SVWE and reduction bounds are
/// added, and `form` says which one was evaluated.
pub fn corollary_bounds(
    l2: f64,
    modulus: Modulus,
    n: usize,
    k: f64,
    r: f64,
    t: Option<f64>,
    c: Option<f64>,
) -> Result<BoundCertificate> {
    let k = nonneg("K", k)?;
    let m = positive("modulus", modulus.value())?;
    let l2 = nonneg("L2", l2)?;
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let nf = n as f64;
    let mut inputs = with_modulus(
        BoundInputs {
            l2: Some(l2),
            n: Some(nf),
            k: Some(k),
            ..BoundInputs::default()
        },
        modulus,
    );
    let (value, form) = match modulus {
        Modulus::Alpha(_) => (l2 / (m * nf) + (k / m).sqrt(), "strong"),
        Modulus::Beta(_) => {
            let r = nonneg("R", r)?;
            inputs.r = Some(r);
            match (t, c) {
                (Some(t), Some(c)) => {
                    let t = positive("T", t)?;
                    let c = nonneg("C", c)?;
                    inputs.t = Some(t);
                    inputs.c = Some(c);
                    (r * (2.0 * t * c / (nf * m)).sqrt() + (k / m).sqrt(), "corollary_display")
                }
                _ => (
                    (2.0 * r * l2 / (m * nf)).sqrt() + (k / m).sqrt(),
                    "theorem_sum",
                ),
            }
        }
    };
    Ok(BoundCertificate {
        kind: BoundKind::CorollaryAggregate,
        value,
        inputs,
        validity: true,
        form: Some(form.to_string()),
    })
}

/// Distance between the equilibrium actions of two similar players of an
/// uncoupled game: `sqrt(((L1n + L1m) delta + 2 delta_u R) / alpha_n)`.
pub fn prop3_bound(alpha_n: f64, l1n: f64, l1m: f64, delta_set: f64, delta_u_star: f64, r: f64) -> Result<f64> {
    let a = positive("alpha_n", alpha_n)?;
    let s = (nonneg("L1n", l1n)? + nonneg("L1m", l1m)?) * nonneg("delta", delta_set)?
        + 2.0 * nonneg("delta_u", delta_u_star)? * nonneg("R", r)?;
    Ok((s / a).sqrt())
}

/// `|X_approx - X_ref| / |X_ref|`.
pub fn relative_aggregate_error(reference: &EquilibriumResult, approx: &EquilibriumResult) -> Result<f64> {
    relative_error(&reference.aggregate, &approx.aggregate)
}

pub fn relative_error(reference: &[f64], approx: &[f64]) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(Error::dim("aggregate", reference.len(), approx.len()));
    }
    let den = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::invalid("reference aggregate is zero"));
    }
    let num = reference
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// Converts a distance between average aggregates to the game's own
/// aggregate units.
pub fn to_game_units(value: f64, game: &GameSpec) -> f64 {
    match game.aggregation {
        Aggregation::Sum => value * game.weights().iter().sum::<f64>(),
        Aggregation::Average => value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted exponent in `y ~ x^-a`.
    pub a: f64,
    pub r2: f64,
    pub intercept: f64,
}

/// Least-squares line through `(log x, log y)`; `a` is minus its slope.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::dim("fit data", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::invalid("rate fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("rate fit needs positive finite data"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-12 * (1.0 + mx * mx) {
        return Err(Error::invalid("rate fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = if ss_tot <= 1e-300 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        a: -slope,
        r2,
        intercept,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("spearman needs two series of equal length >= 2"));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::invalid("spearman of a constant series"));
    }
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(certs: &[BoundCertificate], kind: BoundKind) -> f64 {
        certs.iter().find(|c| c.kind == kind).unwrap().value
    }

    #[test]
    fn thm1_examples() {
        let c = thm1_bounds(1.0, Modulus::Alpha(2.0), 100, 1.0).unwrap();
        assert!((value(&c, BoundKind::Thm1Individual) - 0.05).abs() < 1e-15);
        assert!((value(&c, BoundKind::Thm1Aggregate) - 0.005).abs() < 1e-15);
        let c4 = thm1_bounds(1.0, Modulus::Alpha(2.0), 400, 1.0).unwrap();
        assert!((value(&c4, BoundKind::Thm1Aggregate) * 4.0 - 0.005).abs() < 1e-15);
        let b = thm1_bounds(1.0, Modulus::Beta(2.0), 50, 1.0).unwrap();
        assert!((value(&b, BoundKind::Thm1Aggregate) - 0.02f64.sqrt()).abs() < 1e-15);
        assert!(thm1_bounds(1.0, Modulus::Alpha(0.0), 5, 1.0).is_err());
    }

    #[test]
    fn thm2_examples() {
        let c = thm2_bounds(0.0, Modulus::Alpha(2.0), 100).unwrap();
        assert!(c.iter().all(|c| c.value == 0.0));
        let c = thm2_bounds(2.5, Modulus::Alpha(2.0), 100).unwrap();
        assert!((value(&c, BoundKind::Thm2Individual) - 125f64.sqrt()).abs() < 1e-12);
        assert!((value(&c, BoundKind::Thm2AggregateStrong) - 1.25f64.sqrt()).abs() < 1e-12);
        let b = thm2_bounds(2.5, Modulus::Beta(2.0), 100).unwrap();
        assert_eq!(b[0].kind, BoundKind::Thm2AggregateAggr);
        assert!(thm2_bounds(-1.0, Modulus::Alpha(2.0), 1).is_err());
    }

    #[test]
    fn corollary_forms() {
        let c = corollary_bounds(1.0, Modulus::Alpha(2.0), 100, 2.5, 1.0, None, None).unwrap();
        assert!((c.value - (0.005 + 1.25f64.sqrt())).abs() < 1e-12);
        let d = corollary_bounds(1.0, Modulus::Beta(2.0), 50, 0.0, 1.0, Some(4.0), Some(1.0)).unwrap();
        assert!((d.value - (8.0f64 / 100.0).sqrt()).abs() < 1e-12);
        assert_eq!(d.form.as_deref(), Some("corollary_display"));
        let e = corollary_bounds(1.0, Modulus::Beta(2.0), 50, 0.0, 1.0, None, None).unwrap();
        assert_eq!(e.form.as_deref(), Some("theorem_sum"));
    }

    #[test]
    fn prop3_examples() {
        assert_eq!(prop3_bound(1.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert!((prop3_bound(1.0, 1.0, 1.0, 0.5, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(prop3_bound(1.0, 1.0, 1.0, 0.5, 0.1, 2.0).unwrap() > prop3_bound(1.0, 1.0, 1.0, 0.5, 0.1, 1.0).unwrap());
        assert!(prop3_bound(0.0, 1.0, 1.0, 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((relative_error(&[1.0, 2.0], &[1.02, 2.04]).unwrap() - 0.02).abs() < 1e-12);
        assert!(relative_error(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn rate_examples() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let f = fit_rate(&xs, &xs.map(|x| 1.0 / x)).unwrap();
        assert!((f.a - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = fit_rate(&xs, &[3.0; 4]).unwrap();
        assert!(f.a.abs() < 1e-12);
        assert!(fit_rate(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let s = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap();
        assert!((s - 0.9).abs() < 1e-12);
    }
}
