//! Symmetric logistic max-stable vectors with unit-Fréchet margins, the
//! closed-form CDF and joint density, and an exact angle sampler for the
//! pairwise beta model.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{n_pairs, AngularModel};
use crate::error::{Error, Result};
use crate::stats::{self, log_sum_exp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticSample {
    /// `n` rows of `d` positive values.
    pub values: Vec<Vec<f64>>,
    pub beta: f64,
    pub seed: u64,
}

impl LogisticSample {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("logistic beta {beta} outside (0, 1]")))
    }
}

/// Positive stable variate with Laplace transform `exp(-t^beta)` (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    if beta == 1.0 {
        return 1.0;
    }
    let u: f64 = loop {
        let u = rng.random::<f64>() * PI;
        if u > 0.0 {
            break u;
        }
    };
    let e: f64 = Exp1.sample(rng);
    (beta * u).sin() / u.sin().powf(1.0 / beta)
        * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

/// `n` i.i.d. draws with joint CDF `exp(-(sum z_j^(-1/beta))^beta)`.
/// Row `i` uses substream `i` of `seed`, so output does not depend on threading.
pub fn sample_logistic(n: usize, d: usize, beta: f64, seed: u64) -> Result<LogisticSample> {
    check_beta(beta)?;
    if n == 0 || d < 2 {
        return Err(Error::invalid("sample_logistic needs n >= 1 and d >= 2"));
    }
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stats::substream(seed, i as u64);
            let s = positive_stable(beta, &mut rng);
            (0..d)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    (s / e).powf(beta)
                })
                .collect()
        })
        .collect();
    Ok(LogisticSample { values, beta, seed })
}

/// Joint CDF `exp(-(sum z_j^(-1/beta))^beta)`; infinite coordinates marginalize out.
pub fn logistic_cdf(z: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if z.is_empty() || z.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("logistic_cdf needs positive coordinates"));
    }
    let s: f64 = z.iter().map(|v| v.powf(-1.0 / beta)).sum();
    Ok((-s.powf(beta)).exp())
}

/// Restricted growth strings of all set partitions of `n` elements; each
/// partition is returned as its block sizes.
fn partition_block_sizes(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    fn rec(i: usize, max: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == a.len() {
            let mut sizes = vec![0usize; max + 1];
            for &b in a.iter() {
                sizes[b] += 1;
            }
            out.push(sizes);
            return;
        }
        for b in 0..=(max + 1) {
            a[i] = b;
            rec(i + 1, max.max(b), a, out);
        }
    }
    if n == 0 {
        return out;
    }
    rec(1, 0, &mut a, &mut out);
    out
}

/// Log joint density of the symmetric logistic distribution in any dimension.
///
/// Differentiating `exp(-V)` once in every coordinate gives a sum over set
/// partitions of block derivatives of `V`; every term carries the same sign,
/// so the sum is accumulated in log space without cancellation.
pub fn logistic_log_density(z: &[f64], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = z.len();
    if d == 0 || z.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("logistic density needs finite positive coordinates"));
    }
    let inv = 1.0 / beta;
    let log_x: Vec<f64> = z.iter().map(|v| -inv * v.ln()).collect();
    let log_s = log_sum_exp(&log_x);
    let v = (beta * log_s).exp();
    // log |c_k| for k = 1..d, c_k = beta (beta - 1) ... (beta - k + 1)
    let mut log_c = vec![f64::NEG_INFINITY; d + 1];
    let mut acc = beta.ln();
    log_c[1] = acc;
    for k in 2..=d {
        acc += (k as f64 - 1.0 - beta).ln();
        log_c[k] = acc;
    }
    let log_a: f64 = z.iter().map(|v| inv.ln() + (-inv - 1.0) * v.ln()).sum();
    let terms: Vec<f64> = partition_block_sizes(d)
        .iter()
        .map(|sizes| {
            sizes
                .iter()
                .map(|&k| log_c[k] + (beta - k as f64) * log_s)
                .sum()
        })
        .collect();
    Ok(-v + log_a + log_sum_exp(&terms))
}

/// Exact density of the last coordinate given the others, `f_d(z_obs, t) / f_{d-1}(z_obs)`.
pub fn exact_conditional_density(z_obs: &[f64], t: f64, beta: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Ok(0.0);
    }
    let mut z = z_obs.to_vec();
    z.push(t);
    Ok((logistic_log_density(&z, beta)? - logistic_log_density(z_obs, beta)?).exp())
}

/// Exact conditional density on `grid`, renormalized to unit trapezoid mass.
pub fn exact_conditional_oracle(z_obs: &[f64], beta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("oracle grid must be strictly increasing"));
    }
    let dens: Vec<f64> = grid
        .iter()
        .map(|&t| exact_conditional_density(z_obs, t, beta))
        .collect::<Result<_>>()?;
    let mass: f64 = grid
        .windows(2)
        .zip(dens.windows(2))
        .map(|(g, f)| 0.5 * (g[1] - g[0]) * (f[0] + f[1]))
        .sum();
    Ok(dens.iter().map(|f| f / mass).collect())
}

/// Exact draws from a pairwise beta angular density: a pair is chosen
/// uniformly, its share of the mass is `Beta(2 gamma + 1, gamma (d - 2))`,
/// split between the two by `Beta(b, b)`, and the remainder is spread uniformly.
pub fn sample_pairwise_beta_angles(model: &AngularModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let AngularModel::PairwiseBeta { gamma, betas, dim } = model else {
        return Err(Error::invalid("sample_pairwise_beta_angles needs a pairwise beta model"));
    };
    let d = *dim;
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
        .collect();
    debug_assert_eq!(pairs.len(), n_pairs(d));
    let mass = Beta::new(2.0 * gamma + 1.0, gamma * (d as f64 - 2.0))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let splits: Vec<Beta<f64>> = betas
        .iter()
        .map(|&b| Beta::new(b, b).map_err(|e| Error::invalid(e.to_string())))
        .collect::<Result<_>>()?;
    let unit = Gamma::new(1.0, 1.0).unwrap();
    Ok((0..n)
        .map(|i| {
            let mut rng = stats::substream(seed, i as u64);
            let p = rng.random_range(0..pairs.len());
            let (j, k) = pairs[p];
            let s: f64 = mass.sample(&mut rng);
            let t: f64 = splits[p].sample(&mut rng);
            let mut w = vec![0.0; d];
            let g: Vec<f64> = (0..d - 2).map(|_| unit.sample(&mut rng)).collect();
            let gs: f64 = g.iter().sum();
            let mut gi = g.iter();
            for (idx, wi) in w.iter_mut().enumerate() {
                if idx == j {
                    *wi = s * t;
                } else if idx == k {
                    *wi = s * (1.0 - t);
                } else {
                    *wi = (1.0 - s) * gi.next().unwrap() / gs;
                }
            }
            w
        })
        .collect())
}
