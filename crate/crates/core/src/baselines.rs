//! Comparison predictors: simple kriging with a Gaussian conditional, and
//! indicator kriging with a monotone-smoothed exceedance curve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{GaussianConditional, GridDistribution};
use crate::error::{Error, Result};

/// Relative singular-value cutoff for treating a matrix as singular.
const RANK_TOL: f64 = 1e-10;

/// Sample mean and covariance of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Row-major `d x d`, denominator `n - 1`.
    pub cov: Vec<Vec<f64>>,
    /// Covariance is rank deficient.
    pub singular: bool,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    !(max > 0.0) || sv.min() <= RANK_TOL * max
}

pub fn estimate_moments(rows: &[Vec<f64>]) -> Result<Moments> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows must be nonempty and share a width"));
    }
    if n <= d {
        return Err(Error::InsufficientData(format!("{n} rows for {d} columns; need n > d")));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let m = Moments {
        mean,
        cov,
        singular: false,
    };
    let singular = is_singular(&m.cov_matrix());
    Ok(Moments { singular, ..m })
}

fn observed_indices(d: usize, hidden: usize) -> Vec<usize> {
    (0..d).filter(|&j| j != hidden).collect()
}

/// Gaussian conditional of component `hidden` given the others.
pub fn simple_krige(obs: &[f64], hidden: usize, moments: &Moments) -> Result<GaussianConditional> {
    let d = moments.dim();
    if hidden >= d || obs.len() + 1 != d {
        return Err(Error::invalid(format!(
            "{} observations and hidden index {hidden} do not fit dimension {d}",
            obs.len()
        )));
    }
    let idx = observed_indices(d, hidden);
    let s = moments.cov_matrix();
    let s_oo = s.select_rows(&idx).select_columns(&idx);
    let s_ho = DVector::from_iterator(idx.len(), idx.iter().map(|&j| s[(hidden, j)]));
    let chol = s_oo
        .clone()
        .cholesky()
        .filter(|_| !is_singular(&s_oo))
        .ok_or_else(|| Error::Singular("observed covariance block is not invertible".into()))?;
    let resid = DVector::from_iterator(idx.len(), idx.iter().zip(obs).map(|(&j, y)| y - moments.mean[j]));
    let weights = chol.solve(&s_ho);
    let mean = moments.mean[hidden] + weights.dot(&resid);
    let variance = (s[(hidden, hidden)] - weights.dot(&s_ho)).max(0.0);
    Ok(GaussianConditional {
        mean,
        sd: variance.sqrt(),
    })
}

/// Raw and smoothed exceedance probabilities `P(Y_hidden > u | indicators)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCurve {
    pub u: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Derivative of the smoothed interpolant at each `u` (nonpositive).
    pub slopes: Vec<f64>,
    /// Positions whose raw value was interpolated from neighbours.
    pub imputed: Vec<usize>,
}

impl IndicatorCurve {
    /// Smoothed survival function; 1 below the grid and 0 above it.
    pub fn survival(&self, y: f64) -> f64 {
        let n = self.u.len();
        if y < self.u[0] {
            return 1.0;
        }
        if y >= self.u[n - 1] {
            return 0.0;
        }
        let (i, s, h) = self.locate(y);
        let [h00, h10, h01, h11] = hermite_basis(s);
        (h00 * self.smoothed[i] + h10 * h * self.slopes[i] + h01 * self.smoothed[i + 1] + h11 * h * self.slopes[i + 1])
            .clamp(0.0, 1.0)
    }

    /// `-dS/du` of the smoothed interpolant.
    pub fn density(&self, y: f64) -> f64 {
        let n = self.u.len();
        if y < self.u[0] || y > self.u[n - 1] {
            return 0.0;
        }
        let (i, s, h) = self.locate(y);
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s * s - 2.0 * s;
        let ds = (d00 * self.smoothed[i] + d10 * h * self.slopes[i] + d01 * self.smoothed[i + 1] + d11 * h * self.slopes[i + 1]) / h;
        (-ds).max(0.0)
    }

    fn locate(&self, y: f64) -> (usize, f64, f64) {
        let i = self.u.partition_point(|g| *g <= y).saturating_sub(1).min(self.u.len() - 2);
        let h = self.u[i + 1] - self.u[i];
        (i, (y - self.u[i]) / h, h)
    }

    /// Predictive distribution with `subdivisions` points per grid cell.
    ///
    /// Mass `1 - S(u_min)` sits as an atom at `u_min` and `S(u_max)` as an
    /// atom at `u_max`.
    pub fn to_distribution(&self, subdivisions: usize) -> Result<GridDistribution> {
        let k = subdivisions.max(1);
        let mut grid = Vec::with_capacity((self.u.len() - 1) * k + 1);
        for w in self.u.windows(2) {
            for j in 0..k {
                grid.push(w[0] + (w[1] - w[0]) * j as f64 / k as f64);
            }
        }
        grid.push(*self.u.last().unwrap());
        let n = grid.len();
        let mut cdf: Vec<f64> = grid.iter().map(|&y| 1.0 - self.survival(y)).collect();
        // the interior formula at u_max, not the right-atom convention
        cdf[n - 1] = 1.0 - self.smoothed[self.u.len() - 1];
        for i in 1..n {
            cdf[i] = cdf[i].max(cdf[i - 1]);
        }
        let dens = grid.iter().map(|&y| self.density(y)).collect();
        GridDistribution::from_parts(grid, dens, cdf)
    }
}

/// Kriging rule at one threshold.
#[derive(Debug, Clone, PartialEq)]
enum IkRule {
    /// The hidden training indicator never varies.
    Constant(f64),
    /// Ordinary-kriging weights on the observed indicators.
    Weights(Vec<f64>),
    /// The observed indicator block is singular.
    Singular,
}

fn ik_rule(u: f64, hidden: usize, train: &[Vec<f64>]) -> IkRule {
    let d = train[0].len();
    let n = train.len() as f64;
    let ind: Vec<Vec<f64>> = train
        .iter()
        .map(|r| r.iter().map(|&y| f64::from(y > u)).collect())
        .collect();
    let mean: Vec<f64> = (0..d).map(|j| ind.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    if mean[hidden] == 0.0 || mean[hidden] == 1.0 {
        return IkRule::Constant(mean[hidden]);
    }
    let idx = observed_indices(d, hidden);
    let cov = |a: usize, b: usize| {
        ind.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0)
    };
    let m = idx.len();
    let c_oo = DMatrix::from_fn(m, m, |i, j| cov(idx[i], idx[j]));
    if is_singular(&c_oo) {
        return IkRule::Singular;
    }
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DVector::zeros(m + 1);
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = c_oo[(i, j)];
        }
        a[(i, m)] = 1.0;
        a[(m, i)] = 1.0;
        b[i] = cov(idx[i], hidden);
    }
    b[m] = 1.0;
    match a.lu().solve(&b) {
        Some(sol) => IkRule::Weights(sol.iter().take(m).copied().collect()),
        None => IkRule::Singular,
    }
}

/// Indicator-kriging weights at every threshold, fixed by the training rows
/// and reusable across observations.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorKriger {
    hidden: usize,
    d: usize,
    u_grid: Vec<f64>,
    rules: Vec<IkRule>,
}

impl IndicatorKriger {
    pub fn new(train: &[Vec<f64>], hidden: usize, u_grid: &[f64]) -> Result<Self> {
        if train.len() < 3 {
            return Err(Error::InsufficientData("indicator kriging needs training rows".into()));
        }
        let d = train[0].len();
        if hidden >= d || train.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("hidden index and training width disagree"));
        }
        if u_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("u grid must be strictly increasing"));
        }
        let rules: Vec<IkRule> = u_grid.par_iter().map(|&u| ik_rule(u, hidden, train)).collect();
        if rules.iter().all(|r| *r == IkRule::Singular) {
            return Err(Error::Singular("indicator covariance is singular at every threshold".into()));
        }
        Ok(Self { hidden, d, u_grid: u_grid.to_vec(), rules })
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Exceedance curve for one vector of observed components.
    ///
    /// Thresholds where the observed indicator covariance is singular take the
    /// linear interpolation of the nearest valid neighbours (the nearest valid
    /// value at the ends).
    pub fn curve(&self, obs: &[f64]) -> Result<IndicatorCurve> {
        if obs.len() + 1 != self.d {
            return Err(Error::invalid(format!(
                "{} observations for a {}-column training set",
                obs.len(),
                self.d
            )));
        }
        let u_grid = &self.u_grid;
        let raw_opt: Vec<Option<f64>> = self
            .rules
            .iter()
            .zip(u_grid)
            .map(|(rule, &u)| match rule {
                IkRule::Constant(c) => Some(*c),
                IkRule::Weights(w) => {
                    let p: f64 = w.iter().zip(obs).map(|(wi, &y)| wi * f64::from(y > u)).sum();
                    Some(p.clamp(0.0, 1.0))
                }
                IkRule::Singular => None,
            })
            .collect();
        let valid: Vec<usize> = (0..raw_opt.len()).filter(|&i| raw_opt[i].is_some()).collect();
        let mut imputed = Vec::new();
        let raw: Vec<f64> = raw_opt
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if let Some(v) = v {
                    return *v;
                }
                imputed.push(i);
                let after = valid.partition_point(|&j| j < i);
                match (after.checked_sub(1).map(|k| valid[k]), valid.get(after).copied()) {
                    (Some(l), Some(r)) => {
                        let (pl, pr) = (raw_opt[l].unwrap(), raw_opt[r].unwrap());
                        pl + (pr - pl) * (u_grid[i] - u_grid[l]) / (u_grid[r] - u_grid[l])
                    }
                    (Some(l), None) => raw_opt[l].unwrap(),
                    (None, Some(r)) => raw_opt[r].unwrap(),
                    (None, None) => unreachable!(),
                }
            })
            .collect();
        let smooth = monotone_smooth(u_grid, &raw)?;
        Ok(IndicatorCurve {
            u: u_grid.to_vec(),
            raw,
            smoothed: smooth.values,
            slopes: smooth.slopes,
            imputed,
        })
    }
}

/// Indicator kriging over `u_grid`, followed by monotone smoothing.
pub fn indicator_krige(obs: &[f64], hidden: usize, train: &[Vec<f64>], u_grid: &[f64]) -> Result<IndicatorCurve> {
    IndicatorKriger::new(train, hidden, u_grid)?.curve(obs)
}

/// Nonincreasing fit with interpolating slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCurve {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

/// Least-squares nonincreasing fit (pool adjacent violators), clipped to
/// `[0, 1]`, with Fritsch-Carlson slopes for a monotone cubic interpolant.
pub fn monotone_smooth(u: &[f64], raw: &[f64]) -> Result<MonotoneCurve> {
    if u.len() < 4 || raw.len() != u.len() {
        return Err(Error::invalid("monotone smoothing needs at least 4 matched points"));
    }
    if u.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("smoothing abscissae must be strictly increasing"));
    }
    let values: Vec<f64> = antitonic(raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let slopes = pchip_slopes(u, &values);
    Ok(MonotoneCurve { values, slopes })
}

/// Pool-adjacent-violators projection onto nonincreasing sequences.
pub fn antitonic(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s0 / c0 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    blocks
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Predictive;
    use crate::stats;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn mvn_rows(n: usize, mean: &[f64], cov: &DMatrix<f64>, seed: u64) -> Vec<Vec<f64>> {
        let l = cov.clone().cholesky().unwrap().l();
        let d = mean.len();
        let mut rng = stats::substream(seed, 0);
        (0..n)
            .map(|_| {
                let e = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
                let x = &l * e;
                (0..d).map(|j| mean[j] + x[j]).collect()
            })
            .collect()
    }

    fn moments(mean: Vec<f64>, cov: &[&[f64]]) -> Moments {
        Moments {
            mean,
            cov: cov.iter().map(|r| r.to_vec()).collect(),
            singular: false,
        }
    }

    #[test]
    fn moments_recover_known_covariance() {
        let sigma = DMatrix::from_row_slice(3, 3, &[4.0, 1.2, -0.8, 1.2, 2.0, 0.5, -0.8, 0.5, 1.0]);
        let n = 100_000;
        let rows = mvn_rows(n, &[1.0, -2.0, 0.5], &sigma, 3);
        let m = estimate_moments(&rows).unwrap();
        assert!(!m.singular);
        for i in 0..3 {
            for j in 0..3 {
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((m.cov[i][j] - sigma[(i, j)]).abs() < 3.0 * se, "({i},{j})");
            }
        }
    }

    #[test]
    fn degenerate_covariances_are_flagged() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 2.0]).collect();
        let m = estimate_moments(&rows).unwrap();
        assert!(m.singular);
        assert_eq!(m.cov, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64, (i * i) as f64]).collect();
        let m = estimate_moments(&rows).unwrap();
        assert!(m.singular);
        assert!((m.cov[0][1] / (m.cov[0][0] * m.cov[1][1]).sqrt() - 1.0).abs() < 1e-12);
        assert!(estimate_moments(&rows[..3]).is_err());
    }

    #[test]
    fn kriging_identities() {
        let m = moments(vec![1.0, 2.0, 3.0], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 4.0]]);
        let g = simple_krige(&[10.0, -5.0], 2, &m).unwrap();
        assert_eq!((g.mean, g.sd), (3.0, 2.0));
        let rho = 0.6;
        let m = moments(vec![0.0, 0.0], &[&[1.0, rho], &[rho, 1.0]]);
        let g = simple_krige(&[1.7], 1, &m).unwrap();
        assert!((g.mean - rho * 1.7).abs() < 1e-12);
        assert!((g.sd * g.sd - (1.0 - rho * rho)).abs() < 1e-12);
        let m = moments(vec![5.0, 7.0, 9.0], &[&[2.0, 0.3, 0.4], &[0.3, 1.0, 0.2], &[0.4, 0.2, 3.0]]);
        let g = simple_krige(&[5.0, 7.0], 2, &m).unwrap();
        assert_eq!(g.mean, 9.0);
        let sing = moments(vec![0.0, 0.0, 0.0], &[&[1.0, 1.0, 0.5], &[1.0, 1.0, 0.5], &[0.5, 0.5, 1.0]]);
        assert!(matches!(simple_krige(&[0.0, 0.0], 2, &sing), Err(Error::Singular(_))));
    }

    #[test]
    fn kriging_matches_a_discretized_gaussian() {
        let (m1, m2, s1, s2, rho) = (1.0, -0.5, 1.5, 0.8, -0.4);
        let m = moments(
            vec![m1, m2],
            &[&[s1 * s1, rho * s1 * s2], &[rho * s1 * s2, s2 * s2]],
        );
        let y1 = 2.2;
        let g = simple_krige(&[y1], 1, &m).unwrap();
        // joint density along y2 at fixed y1, normalized numerically
        let joint = |y2: f64| {
            let a = (y1 - m1) / s1;
            let b = (y2 - m2) / s2;
            (-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * (1.0 - rho * rho))).exp()
        };
        let (lo, hi, n) = (-12.0, 12.0, 200_000);
        let h = (hi - lo) / n as f64;
        let (mut z, mut s, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..=n {
            let y = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * joint(y);
            z += w;
            s += w * y;
            s2 += w * y * y;
        }
        let mean = s / z;
        let var = s2 / z - mean * mean;
        assert!((g.mean - mean).abs() < 1e-6);
        assert!((g.sd * g.sd - var).abs() < 1e-6);
    }

    #[test]
    fn kriging_variance_ignores_the_observations() {
        let m = moments(vec![5.0, 7.0, 9.0], &[&[2.0, 0.3, 0.4], &[0.3, 1.0, 0.2], &[0.4, 0.2, 3.0]]);
        let base = simple_krige(&[0.0, 0.0], 2, &m).unwrap().sd;
        let mut rng = stats::substream(1, 0);
        for _ in 0..100 {
            let o: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
            let o: Vec<f64> = o.iter().map(|v| 10.0 * v).collect();
            assert_eq!(simple_krige(&o, 2, &m).unwrap().sd, base);
        }
    }

    #[test]
    fn pava_pools_the_violating_pair() {
        assert_eq!(antitonic(&[1.0, 0.4, 0.6, 0.1]), vec![1.0, 0.5, 0.5, 0.1]);
        let mono = [0.9, 0.7, 0.7, 0.2, 0.0];
        assert_eq!(antitonic(&mono), mono.to_vec());
    }

    #[test]
    fn smoothing_errors_and_identity() {
        assert!(monotone_smooth(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.0]).is_err());
        let u = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = [1.0, 0.8, 0.5, 0.5, 0.1];
        assert_eq!(monotone_smooth(&u, &v).unwrap().values, v.to_vec());
    }

    #[test]
    fn density_integrates_to_the_drop() {
        let u: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let raw: Vec<f64> = u.iter().map(|x| (1.0 - x / 5.0).powi(2) + 0.05 * (3.0 * x).sin()).collect();
        let s = monotone_smooth(&u, &raw).unwrap();
        let curve = IndicatorCurve {
            u: u.clone(),
            raw,
            smoothed: s.values.clone(),
            slopes: s.slopes,
            imputed: vec![],
        };
        let n = 200_000;
        let (a, b) = (u[0], *u.last().unwrap());
        let h = (b - a) / n as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let x0 = a + i as f64 * h;
            integral += h / 6.0 * (curve.density(x0) + 4.0 * curve.density(x0 + 0.5 * h) + curve.density(x0 + h));
        }
        let drop = s.values[0] - s.values[s.values.len() - 1];
        assert!((integral - drop).abs() < 1e-6, "{integral} vs {drop}");
    }

    fn training() -> Vec<Vec<f64>> {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.7, 0.6, 0.7, 1.0, 0.65, 0.6, 0.65, 1.0]);
        mvn_rows(2000, &[50.0, 50.0, 50.0], &(sigma * 225.0), 9)
    }

    #[test]
    fn indicator_kriging_boundaries() {
        let train = training();
        let u: Vec<f64> = (0..=380).map(|i| 10.0 + 0.25 * i as f64).collect();
        let curve = indicator_krige(&[60.0, 70.0], 2, &train, &[-100.0, -50.0, 0.0, 200.0, 300.0]).unwrap();
        assert_eq!(curve.raw[0], 1.0);
        assert_eq!(curve.raw[4], 0.0);
        let curve = indicator_krige(&[60.0, 70.0], 2, &train, &u).unwrap();
        assert!(curve.smoothed.windows(2).all(|w| w[1] <= w[0]));
        assert!(curve.smoothed.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(u.iter().all(|&x| curve.density(x) >= 0.0));
        // conditioning on high neighbours lifts the median above the prior median
        let dist = curve.to_distribution(4).unwrap();
        assert!(dist.quantile(0.5) > 50.0);
    }

    #[test]
    fn singular_thresholds_are_imputed() {
        // the observed column takes two levels, so its indicator is constant
        // outside them while the hidden column still varies
        let mut rng = stats::substream(4, 0);
        let train: Vec<Vec<f64>> = (0..500)
            .map(|i| {
                let a = if i % 2 == 0 { 20.0 } else { 80.0 };
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![a, a + 10.0 * e]
            })
            .collect();
        let u = [10.0, 30.0, 50.0, 70.0, 90.0];
        let curve = indicator_krige(&[80.0], 1, &train, &u).unwrap();
        // at u = 10 and u = 90 the observed indicator is constant while the
        // hidden one is not, so those values come from the nearest valid neighbour
        assert_eq!(curve.imputed, vec![0, 4]);
        assert_eq!(curve.raw[0], curve.raw[1]);
        assert_eq!(curve.raw[4], curve.raw[3]);
    }

    #[test]
    fn indicator_distribution_is_valid() {
        let train = training();
        let u: Vec<f64> = (0..=380).map(|i| 10.0 + 0.25 * i as f64).collect();
        let curve = indicator_krige(&[30.0, 35.0], 2, &train, &u).unwrap();
        let dist = curve.to_distribution(4).unwrap();
        assert!(dist.cdf(9.0) == 0.0 && dist.cdf(105.0) == 1.0);
        let c = dist.cdf_values();
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
        assert!((dist.cdf(40.0) - (1.0 - curve.survival(40.0))).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn antitonic_is_a_monotone_projection(y in proptest::collection::vec(-1.0f64..2.0, 4..40)) {
            let p = antitonic(&y);
            prop_assert!(p.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            // projection onto a cone preserves the total
            let (sy, sp): (f64, f64) = (y.iter().sum(), p.iter().sum());
            prop_assert!((sy - sp).abs() < 1e-9);
            prop_assert_eq!(antitonic(&p), p);
        }
    }
}
