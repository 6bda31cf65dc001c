//! Forecast verification: PIT histograms, log score, quantile scores, CRPS.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::distribution::Predictive;
use crate::error::{Error, Result};

pub const DEFAULT_TAUS: [f64; 5] = [0.99, 0.95, 0.90, 0.75, 0.50];

const CRPS_TAIL: f64 = 1e-10;
const CELL_SUBDIVISIONS: usize = 8;
const MAX_EXTENSIONS: usize = 400;

/// Quantile (pinball) loss.
pub fn quantile_loss(u: f64, tau: f64) -> f64 {
    if u >= 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} realized values vs {} predictions",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Quantile verification score: summed quantile loss of the realized values.
pub fn qvs(realized: &[f64], quantile_preds: &[f64], tau: f64) -> Result<f64> {
    check_lengths(realized, quantile_preds)?;
    Ok(realized
        .iter()
        .zip(quantile_preds)
        .map(|(y, q)| quantile_loss(y - q, tau))
        .sum())
}

/// Negative log predictive density; infinite outside the support.
pub fn log_score(density_at_realized: f64) -> f64 {
    if density_at_realized > 0.0 {
        -density_at_realized.ln()
    } else {
        f64::INFINITY
    }
}

/// Fraction of realized values at or below the predicted quantile.
pub fn coverage(realized: &[f64], quantile_preds: &[f64]) -> Result<f64> {
    check_lengths(realized, quantile_preds)?;
    if realized.is_empty() {
        return Err(Error::invalid("coverage of an empty sample"));
    }
    let hits = realized.iter().zip(quantile_preds).filter(|(y, q)| y <= q).count();
    Ok(hits as f64 / realized.len() as f64)
}

/// Bernoulli standard error of an empirical coverage at level `tau`.
pub fn sampling_error(tau: f64, n: usize) -> f64 {
    (tau * (1.0 - tau) / n as f64).sqrt()
}

fn left_limit_offset(x: f64) -> f64 {
    1e-12 * x.abs().max(1.0)
}

/// Composite Simpson over `[a, b]`, using the right value at `a` and the left
/// limit at `b` so that jumps at cell ends are not smeared.
fn integrate_cell(
    dist: &impl Predictive,
    a: f64,
    b: f64,
    g: impl Fn(f64) -> f64,
    last_cdf: &mut f64,
) -> Result<f64> {
    let m = CELL_SUBDIVISIONS;
    let h = (b - a) / m as f64;
    let mut sum = 0.0;
    for i in 0..=m {
        let x = if i == m { b - left_limit_offset(b).min(0.5 * h) } else { a + i as f64 * h };
        let f = dist.cdf(x);
        if !f.is_finite() || f < *last_cdf - 1e-12 {
            return Err(Error::invalid(format!("predictive cdf is not monotone near {x}")));
        }
        *last_cdf = last_cdf.max(f);
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * g(f);
    }
    Ok(sum * h / 3.0)
}

/// Continuous ranked probability score, ∫ (F(s) − 1{s ≥ y})² ds.
///
/// The integration points are the forecast's nodes and `y`, padded by half the
/// node range on both sides and then pushed outward until the integrand falls
/// below 1e-10.
pub fn crps(dist: &impl Predictive, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::invalid("realized value must be finite"));
    }
    let mut pts: Vec<f64> = dist.nodes().into_iter().filter(|x| x.is_finite()).collect();
    pts.push(y);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let pad = (0.5 * (hi - lo)).max(1e-6 * y.abs().max(1.0));
    let mut left = vec![lo - pad];
    let mut step = pad;
    while dist.cdf(*left.last().unwrap()).powi(2) >= CRPS_TAIL && left.len() < MAX_EXTENSIONS {
        step *= 2.0;
        left.push(left.last().unwrap() - step);
    }
    let mut right = vec![hi + pad];
    step = pad;
    while (1.0 - dist.cdf(*right.last().unwrap())).powi(2) >= CRPS_TAIL && right.len() < MAX_EXTENSIONS {
        step *= 2.0;
        right.push(right.last().unwrap() + step);
    }
    left.reverse();
    let all: Vec<f64> = left.into_iter().chain(pts).chain(right).collect();

    let mut last_cdf = 0.0;
    let mut total = 0.0;
    for w in all.windows(2) {
        let (a, b) = (w[0], w[1]);
        total += if b <= y {
            integrate_cell(dist, a, b, |f| f * f, &mut last_cdf)?
        } else {
            integrate_cell(dist, a, b, |f| (1.0 - f) * (1.0 - f), &mut last_cdf)?
        };
    }
    Ok(total)
}

/// Weight on probability levels for the quantile-weighted CRPS.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QuantileWeight {
    #[default]
    Unit,
    /// 1{p > c}
    Above(f64),
    /// 1{p < c}
    Below(f64),
}

impl QuantileWeight {
    pub fn weight(&self, p: f64) -> f64 {
        match *self {
            QuantileWeight::Unit => 1.0,
            QuantileWeight::Above(c) => f64::from(p > c),
            QuantileWeight::Below(c) => f64::from(p < c),
        }
    }
}

impl fmt::Display for QuantileWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileWeight::Unit => write!(f, "1"),
            QuantileWeight::Above(c) => write!(f, "p>{c}"),
            QuantileWeight::Below(c) => write!(f, "p<{c}"),
        }
    }
}

impl FromStr for QuantileWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if matches!(t.as_str(), "1" | "unit" | "none") {
            return Ok(QuantileWeight::Unit);
        }
        let parse = |rest: &str| -> Result<f64> {
            let c: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad weight threshold in {s:?}")))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!("weight threshold {c} outside [0, 1]")));
            }
            Ok(c)
        };
        if let Some(rest) = t.strip_prefix("p>") {
            Ok(QuantileWeight::Above(parse(rest)?))
        } else if let Some(rest) = t.strip_prefix("p<") {
            Ok(QuantileWeight::Below(parse(rest)?))
        } else {
            Err(Error::Config(format!("unrecognized weight {s:?}; expected 1, p>c or p<c")))
        }
    }
}

impl TryFrom<String> for QuantileWeight {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QuantileWeight> for String {
    fn from(w: QuantileWeight) -> String {
        w.to_string()
    }
}

/// Midpoints of `m` equal cells of (0, 1).
pub fn midpoint_grid(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

/// Quantile score 2(1{y ≤ q_p} − p)(q_p − y) at each level.
pub fn crps_quantile_decomposition(dist: &impl Predictive, y: f64, p_grid: &[f64]) -> Vec<f64> {
    p_grid
        .iter()
        .map(|&p| {
            let q = dist.quantile(p);
            2.0 * (f64::from(y <= q) - p) * (q - y)
        })
        .collect()
}

/// Midpoint-rule integral of a decomposition curve against a weight.
pub fn integrate_curve(p_grid: &[f64], curve: &[f64], weight: QuantileWeight) -> f64 {
    let n = p_grid.len() as f64;
    p_grid.iter().zip(curve).map(|(&p, c)| weight.weight(p) * c).sum::<f64>() / n
}

/// Weighted CRPS through the quantile decomposition on `m` midpoints.
pub fn weighted_crps(dist: &impl Predictive, y: f64, m: usize, weight: QuantileWeight) -> f64 {
    let p = midpoint_grid(m);
    integrate_curve(&p, &crps_quantile_decomposition(dist, y, &p), weight)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram {
    pub bin_counts: Vec<usize>,
    pub n: usize,
    pub lower: Vec<u64>,
    pub upper: Vec<u64>,
}

/// Bin index for a PIT value: bins are (k/b, (k+1)/b] with 0 in the first.
fn pit_bin(p: f64, edges: &[f64]) -> usize {
    edges.partition_point(|e| *e < p)
}

pub fn pit_histogram(pits: &[f64], bins: usize) -> Result<PitHistogram> {
    if bins == 0 {
        return Err(Error::invalid("a histogram needs at least one bin"));
    }
    if pits.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("PIT values must lie in [0, 1]"));
    }
    let edges: Vec<f64> = (1..bins).map(|k| k as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &p in pits {
        counts[pit_bin(p, &edges)] += 1;
    }
    let n = pits.len();
    let (lo, hi) = if n == 0 {
        (0, 0)
    } else {
        let b = Binomial::new(1.0 / bins as f64, n as u64).map_err(|e| Error::invalid(e.to_string()))?;
        (b.inverse_cdf(0.05), b.inverse_cdf(0.95))
    };
    Ok(PitHistogram { bin_counts: counts, n, lower: vec![lo; bins], upper: vec![hi; bins] })
}

impl PitHistogram {
    /// Pearson statistic against uniform bins and its chi-square p-value.
    pub fn chi_square(&self) -> (f64, f64) {
        let k = self.bin_counts.len();
        let e = self.n as f64 / k as f64;
        if k < 2 || e <= 0.0 {
            return (0.0, 1.0);
        }
        let stat: f64 = self.bin_counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        let p = ChiSquared::new((k - 1) as f64).map(|c| 1.0 - c.cdf(stat)).unwrap_or(f64::NAN);
        (stat, p)
    }

    /// Bins whose count falls outside the binomial band.
    pub fn bins_outside_band(&self) -> usize {
        self.bin_counts
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(c, (l, u))| (**c as u64) < **l || (**c as u64) > **u)
            .count()
    }
}

/// Serializes non-finite floats as strings so an infinite log score survives JSON.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                "nan" | "NaN" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// Wrapper that serializes through [`extended_float`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedFloat(#[serde(with = "extended_float")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub taus: Vec<f64>,
    pub p_points: usize,
    pub weight: QuantileWeight,
    pub bins: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { taus: DEFAULT_TAUS.to_vec(), p_points: 2000, weight: QuantileWeight::Above(0.85), bins: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScore {
    pub index: usize,
    pub realized: f64,
    pub pit: f64,
    #[serde(with = "extended_float")]
    pub log_score: f64,
    pub crps: f64,
    pub weighted_crps: f64,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSkill {
    pub tau: f64,
    pub qvs: f64,
    pub coverage: f64,
    pub sampling_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: String,
    pub n: usize,
    #[serde(with = "extended_float")]
    pub mean_log_score: f64,
    pub n_outside_support: usize,
    pub mean_crps: f64,
    pub mean_weighted_crps: f64,
    pub weight: QuantileWeight,
    pub quantile_skill: Vec<QuantileSkill>,
    pub p_grid: Vec<f64>,
    pub crps_curve: Vec<f64>,
    pub pit_histogram: PitHistogram,
    pub observations: Vec<ObservationScore>,
}

/// Scores one method's forecasts against the realized values.
pub fn score_forecasts<D: Predictive + Sync>(
    method: &str,
    forecasts: &[D],
    realized: &[f64],
    cfg: &ScoreConfig,
) -> Result<ScoreReport> {
    if forecasts.len() != realized.len() {
        return Err(Error::invalid(format!(
            "{} forecasts for {} realized values",
            forecasts.len(),
            realized.len()
        )));
    }
    if realized.is_empty() {
        return Err(Error::invalid("nothing to score"));
    }
    if cfg.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::invalid("quantile levels must lie in (0, 1)"));
    }
    let p_grid = midpoint_grid(cfg.p_points.max(1));
    let per_obs: Vec<(ObservationScore, Vec<f64>)> = forecasts
        .par_iter()
        .zip(realized.par_iter())
        .enumerate()
        .map(|(i, (d, &y))| {
            let curve = crps_quantile_decomposition(d, y, &p_grid);
            let obs = ObservationScore {
                index: i,
                realized: y,
                pit: d.cdf(y).clamp(0.0, 1.0),
                log_score: log_score(d.density(y)),
                crps: crps(d, y)?,
                weighted_crps: integrate_curve(&p_grid, &curve, cfg.weight),
                quantiles: cfg.taus.iter().map(|&t| d.quantile(t)).collect(),
            };
            Ok((obs, curve))
        })
        .collect::<Result<_>>()?;

    let n = realized.len();
    let nf = n as f64;
    let mut crps_curve = vec![0.0; p_grid.len()];
    for (_, c) in &per_obs {
        for (acc, v) in crps_curve.iter_mut().zip(c) {
            *acc += v / nf;
        }
    }
    let observations: Vec<ObservationScore> = per_obs.into_iter().map(|(o, _)| o).collect();
    let quantile_skill = cfg
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let q: Vec<f64> = observations.iter().map(|o| o.quantiles[k]).collect();
            Ok(QuantileSkill {
                tau,
                qvs: qvs(realized, &q, tau)?,
                coverage: coverage(realized, &q)?,
                sampling_error: sampling_error(tau, n),
            })
        })
        .collect::<Result<_>>()?;
    let pits: Vec<f64> = observations.iter().map(|o| o.pit).collect();
    Ok(ScoreReport {
        method: method.to_string(),
        n,
        mean_log_score: observations.iter().map(|o| o.log_score).sum::<f64>() / nf,
        n_outside_support: observations.iter().filter(|o| o.log_score.is_infinite()).count(),
        mean_crps: observations.iter().map(|o| o.crps).sum::<f64>() / nf,
        mean_weighted_crps: observations.iter().map(|o| o.weighted_crps).sum::<f64>() / nf,
        weight: cfg.weight,
        quantile_skill,
        p_grid,
        crps_curve,
        pit_histogram: pit_histogram(&pits, cfg.bins)?,
        observations,
    })
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    method: &'a str,
    index: usize,
    realized: f64,
    pit: f64,
    log_score: String,
    crps: f64,
    weighted_crps: f64,
}

/// One row per observation per method.
pub fn write_scores_csv(path: impl AsRef<Path>, reports: &[ScoreReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(Error::from)?;
    for r in reports {
        for o in &r.observations {
            w.serialize(ScoreRow {
                method: &r.method,
                index: o.index,
                realized: o.realized,
                pit: o.pit,
                log_score: if o.log_score.is_finite() { o.log_score.to_string() } else { "inf".into() },
                crps: o.crps,
                weighted_crps: o.weighted_crps,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{GaussianConditional, GridDistribution};
    use crate::stats::{ks_critical_05, ks_distance, substream};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn uniform01() -> GridDistribution {
        GridDistribution::from_density(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap().0
    }

    #[test]
    fn quantile_loss_branches() {
        assert!((quantile_loss(2.0, 0.95) - 1.9).abs() < 1e-12);
        assert!((quantile_loss(-2.0, 0.95) - 0.1).abs() < 1e-12);
        for tau in [0.1, 0.5, 0.99] {
            assert_eq!(quantile_loss(0.0, tau), 0.0);
        }
    }

    #[test]
    fn qvs_and_coverage_basics() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(qvs(&y, &y, 0.9).unwrap(), 0.0);
        assert!(qvs(&y, &[1.0], 0.9).is_err());
        assert_eq!(coverage(&y, &[5.0, 5.0, 5.0]).unwrap(), 1.0);
        assert!(coverage(&y, &[1.0, 2.0]).is_err());
        assert!((sampling_error(0.95, 105) - (0.95 * 0.05 / 105.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn log_score_identities() {
        assert_eq!(log_score(1.0), 0.0);
        assert_eq!(log_score(0.0), f64::INFINITY);
        let scores = [log_score(0.5), log_score(0.0)];
        assert_eq!(scores.iter().sum::<f64>() / 2.0, f64::INFINITY);
    }

    #[test]
    fn crps_uniform_midpoint() {
        // ∫_0^½ s² ds + ∫_½^1 (1 − s)² ds
        let exact = 2.0 * (0.5f64.powi(3) / 3.0);
        let c = crps(&uniform01(), 0.5).unwrap();
        assert!((c - exact).abs() < 1e-9, "{c} vs {exact}");
    }

    #[test]
    fn crps_point_mass_is_zero() {
        let d = GaussianConditional { mean: 3.0, sd: 0.0 };
        assert!(crps(&d, 3.0).unwrap().abs() < 1e-12);
        // |y − m| for a point mass elsewhere
        assert!((crps(&d, 5.0).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn crps_gaussian_closed_form() {
        // σ [z(2Φ(z) − 1) + 2φ(z) − 1/√π]
        let (m, s, y) = (1.0, 2.0, 2.3);
        let z: f64 = (y - m) / s;
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = 0.5 * (1.0 + statrs::function::erf::erf(z / 2f64.sqrt()));
        let exact = s * (z * (2.0 * cdf - 1.0) + 2.0 * phi - 1.0 / std::f64::consts::PI.sqrt());
        let c = crps(&GaussianConditional { mean: m, sd: s }, y).unwrap();
        assert!((c - exact).abs() < 1e-6 * exact, "{c} vs {exact}");
    }

    struct Broken;
    impl Predictive for Broken {
        fn cdf(&self, y: f64) -> f64 {
            (y.sin() + 1.0) / 2.0
        }
        fn density(&self, _: f64) -> f64 {
            0.0
        }
        fn quantile(&self, _: f64) -> f64 {
            0.0
        }
        fn nodes(&self) -> Vec<f64> {
            vec![0.0, 10.0]
        }
    }

    #[test]
    fn crps_rejects_non_monotone_cdf() {
        assert!(crps(&Broken, 1.0).is_err());
    }

    #[test]
    fn decomposition_matches_threshold_form() {
        let p = midpoint_grid(2000);
        let cases: Vec<(GridDistribution, f64)> = vec![
            (uniform01(), 0.5),
            (uniform01(), 0.1),
            (uniform01(), 1.7),
            (
                GridDistribution::from_density(
                    (0..200).map(|i| i as f64 * 0.1).collect(),
                    (0..200).map(|i| (-(i as f64) * 0.05).exp()).collect(),
                )
                .unwrap()
                .0,
                4.2,
            ),
        ];
        for (d, y) in cases {
            let a = crps(&d, y).unwrap();
            let b = integrate_curve(&p, &crps_quantile_decomposition(&d, y, &p), QuantileWeight::Unit);
            assert!((a - b).abs() < 1e-3 * a, "{a} vs {b} at y = {y}");
        }
        let g = GaussianConditional { mean: 0.0, sd: 1.5 };
        let a = crps(&g, -0.7).unwrap();
        let b = weighted_crps(&g, -0.7, 2000, QuantileWeight::Unit);
        assert!((a - b).abs() < 1e-3 * a);
    }

    #[test]
    fn unit_weight_equals_unweighted() {
        let g = GaussianConditional { mean: 2.0, sd: 1.0 };
        let p = midpoint_grid(500);
        let c = crps_quantile_decomposition(&g, 2.5, &p);
        let unweighted = c.iter().sum::<f64>() / 500.0;
        assert_eq!(integrate_curve(&p, &c, QuantileWeight::Unit), unweighted);
        let upper = integrate_curve(&p, &c, QuantileWeight::Above(0.85));
        let lower = integrate_curve(&p, &c, QuantileWeight::Below(0.85));
        assert!((upper + lower - unweighted).abs() < 1e-12);
    }

    #[test]
    fn weight_parsing_round_trips() {
        let w: QuantileWeight = "p>0.85".parse().unwrap();
        assert_eq!(w, QuantileWeight::Above(0.85));
        assert_eq!(w.weight(0.86), 1.0);
        assert_eq!(w.weight(0.85), 0.0);
        assert_eq!("p < 0.2".parse::<QuantileWeight>().unwrap(), QuantileWeight::Below(0.2));
        assert_eq!("1".parse::<QuantileWeight>().unwrap(), QuantileWeight::Unit);
        assert!("q>0.3".parse::<QuantileWeight>().is_err());
        assert!("p>1.5".parse::<QuantileWeight>().is_err());
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "\"p>0.85\"");
        assert_eq!(serde_json::from_str::<QuantileWeight>(&json).unwrap(), w);
    }

    #[test]
    fn pit_grid_gives_equal_counts() {
        for n in [10usize, 100, 1000] {
            let pits: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
            let h = pit_histogram(&pits, 10).unwrap();
            assert!(h.bin_counts.iter().all(|&c| c == n / 10), "{n}: {:?}", h.bin_counts);
            assert_eq!(h.bin_counts.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn pit_degenerate_single_bin() {
        let h = pit_histogram(&vec![0.55; 50], 10).unwrap();
        assert_eq!(h.bin_counts.iter().filter(|&&c| c == 0).count(), 9);
        assert_eq!(h.bin_counts[5], 50);
        assert!(h.chi_square().1 < 1e-6);
        assert!(pit_histogram(&[1.2], 10).is_err());
    }

    /// Binomial quantile by direct pmf accumulation.
    fn binomial_quantile_oracle(n: u64, p: f64, level: f64) -> u64 {
        let ratio = p / (1.0 - p);
        let mut pmf = (1.0 - p).powi(n as i32);
        let mut cum = pmf;
        let mut k = 0;
        while cum < level {
            pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
            k += 1;
            cum += pmf;
        }
        k
    }

    #[test]
    fn pit_bands_match_binomial_quantiles() {
        let pits: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let h = pit_histogram(&pits, 10).unwrap();
        let lo = binomial_quantile_oracle(1000, 0.1, 0.05);
        let hi = binomial_quantile_oracle(1000, 0.1, 0.95);
        assert_eq!(h.lower[0], lo);
        assert_eq!(h.upper[0], hi);
        assert!((84..=86).contains(&lo) && (115..=117).contains(&hi), "{lo} {hi}");
        assert_eq!(h.bins_outside_band(), 0);
    }

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let m = crate::stats::mean(xs);
        (m, (crate::stats::variance(xs) / xs.len() as f64).sqrt())
    }

    #[test]
    fn qvs_is_proper() {
        let ys = normal_draws(100_000, 11);
        let truth = GaussianConditional { mean: 0.0, sd: 1.0 };
        for tau in DEFAULT_TAUS {
            let q = truth.quantile(tau);
            for dq in [-0.3, -0.1, 0.1, 0.3] {
                let diff: Vec<f64> = ys
                    .iter()
                    .map(|y| quantile_loss(y - (q + dq), tau) - quantile_loss(y - q, tau))
                    .collect();
                let (m, se) = mean_se(&diff);
                assert!(m > -3.0 * se, "tau {tau} dq {dq}: {m} ± {se}");
            }
        }
    }

    #[test]
    fn log_score_is_proper() {
        let ys = normal_draws(100_000, 12);
        let truth = GaussianConditional { mean: 0.0, sd: 1.0 };
        for alt in [
            GaussianConditional { mean: 0.2, sd: 1.0 },
            GaussianConditional { mean: 0.0, sd: 1.3 },
            GaussianConditional { mean: -0.1, sd: 0.8 },
        ] {
            let diff: Vec<f64> = ys
                .iter()
                .map(|&y| log_score(alt.density(y)) - log_score(truth.density(y)))
                .collect();
            let (m, se) = mean_se(&diff);
            assert!(m > -3.0 * se, "{alt:?}: {m} ± {se}");
        }
    }

    #[test]
    fn calibrated_forecaster_pit_uniform_and_covers() {
        let ys = normal_draws(5_000, 13);
        let truth = GaussianConditional { mean: 0.0, sd: 1.0 };
        let pits: Vec<f64> = ys.iter().map(|&y| truth.cdf(y)).collect();
        assert!(ks_distance(&pits, |u| u.clamp(0.0, 1.0)) < ks_critical_05(pits.len()));
        for tau in DEFAULT_TAUS {
            let q = vec![truth.quantile(tau); ys.len()];
            let c = coverage(&ys, &q).unwrap();
            assert!((c - tau).abs() < 3.0 * sampling_error(tau, ys.len()), "{tau}: {c}");
        }
    }

    #[test]
    fn report_aggregates_are_consistent() {
        let ys = normal_draws(40, 14);
        let forecasts: Vec<GaussianConditional> =
            ys.iter().enumerate().map(|(i, _)| GaussianConditional { mean: 0.01 * i as f64, sd: 1.0 }).collect();
        let r = score_forecasts("gauss", &forecasts, &ys, &ScoreConfig::default()).unwrap();
        assert_eq!(r.n, 40);
        assert_eq!(r.pit_histogram.bin_counts.iter().sum::<usize>(), 40);
        let curve_mean = r.crps_curve.iter().sum::<f64>() / r.crps_curve.len() as f64;
        assert!((curve_mean - r.mean_crps).abs() < 1e-3 * r.mean_crps);
        assert!(r.quantile_skill.iter().all(|q| (0.0..=1.0).contains(&q.coverage)));
        assert!(r.mean_weighted_crps < r.mean_crps);
        assert_eq!(r.n_outside_support, 0);
    }

    #[test]
    fn infinite_log_score_survives_json() {
        let d = uniform01();
        let r = score_forecasts("u", &[d.clone(), d], &[0.5, 3.0], &ScoreConfig::default()).unwrap();
        assert_eq!(r.mean_log_score, f64::INFINITY);
        assert_eq!(r.n_outside_support, 1);
        let json = serde_json::to_string(&r).unwrap();
        let back: ScoreReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.mean_log_score, f64::INFINITY);
        assert_eq!(back.observations[1].log_score, f64::INFINITY);
    }

    #[test]
    fn scores_csv_has_row_per_observation() {
        let d = uniform01();
        let r = score_forecasts("u", &[d.clone(), d], &[0.2, 0.9], &ScoreConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_scores_csv(&path, &[r.clone(), r]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("method,index,realized,pit,log_score,crps,weighted_crps"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn crps_nonnegative_and_matches_decomposition(
            mean in -5.0f64..5.0, sd in 0.1f64..4.0, y in -10.0f64..10.0
        ) {
            let g = GaussianConditional { mean, sd };
            let a = crps(&g, y).unwrap();
            prop_assert!(a >= 0.0);
            let b = weighted_crps(&g, y, 2000, QuantileWeight::Unit);
            prop_assert!((a - b).abs() < 1e-3 * a.max(1e-3));
        }

        #[test]
        fn pit_counts_sum_to_n(pits in proptest::collection::vec(0.0f64..=1.0, 0..300)) {
            let h = pit_histogram(&pits, 10).unwrap();
            prop_assert_eq!(h.bin_counts.iter().sum::<usize>(), pits.len());
        }
    }
}
