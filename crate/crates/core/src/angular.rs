//! Angular densities on the L1 unit simplex.
//!
//! Two parametric families are supported: the symmetric logistic (d = 2, 3)
//! and the pairwise beta (d >= 3). All evaluation happens in log space.
//!
//! The two families are published against different reference measures on
//! the simplex. The logistic density integrates to one against Lebesgue
//! measure on the first `d - 1` coordinates; the pairwise beta density
//! integrates to one against surface measure, which is `sqrt(d)` times the
//! former. [`AngularModel::log_reference_factor`] carries the difference so
//! that [`AngularModel::lebesgue_log_density`] is comparable across families.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::stats::{self, log_sum_exp};

/// Coordinates below this are treated as on the simplex boundary.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// A point of the unit simplex `{w >= 0, sum w = 1}`, all `d` coordinates stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    w: Vec<f64>,
}

impl SimplexPoint {
    /// Renormalizes `w` to sum to one.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::invalid("simplex points need at least 2 coordinates"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("simplex coordinates must be finite and >= 0: {w:?}")));
        }
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::invalid("simplex point has zero norm"));
        }
        Ok(Self {
            w: w.into_iter().map(|v| v / s).collect(),
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_interior(&self) -> bool {
        self.w.iter().all(|&v| v >= BOUNDARY_TOL)
    }
}

/// Log-coordinates of a point, precomputed for repeated density evaluation.
#[derive(Debug, Clone)]
pub struct LogCoords {
    log_w: Vec<f64>,
    /// `log(w_j + w_k)` per pair, lexicographic.
    pair_log_sum: Vec<f64>,
    /// `log(1 - w_j - w_k)` per pair, summed directly from the other coordinates.
    pair_log_rest: Vec<f64>,
}

impl LogCoords {
    /// From any strictly positive vector; normalization is implicit.
    pub fn from_positive(z: &[f64]) -> Self {
        let d = z.len();
        let r: f64 = z.iter().sum();
        let log_r = r.ln();
        let log_w = z.iter().map(|v| v.ln() - log_r).collect();
        let mut pair_log_sum = Vec::with_capacity(d * (d - 1) / 2);
        let mut pair_log_rest = Vec::with_capacity(d * (d - 1) / 2);
        for j in 0..d {
            for k in (j + 1)..d {
                pair_log_sum.push((z[j] + z[k]).ln() - log_r);
                let rest: f64 = (0..d).filter(|&i| i != j && i != k).map(|i| z[i]).sum();
                pair_log_rest.push(rest.ln() - log_r);
            }
        }
        Self {
            log_w,
            pair_log_sum,
            pair_log_rest,
        }
    }

    pub fn dim(&self) -> usize {
        self.log_w.len()
    }
}

/// Number of coordinate pairs `j < k` in dimension `d`.
pub fn n_pairs(d: usize) -> usize {
    d * (d - 1) / 2
}

/// Lexicographic index of the pair `(j, k)`, `j < k`.
pub fn pair_index(j: usize, k: usize, d: usize) -> usize {
    debug_assert!(j < k && k < d);
    j * (2 * d - j - 1) / 2 + (k - j - 1)
}

/// Parametric angular density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub enum AngularModel {
    /// Symmetric logistic with dependence `beta` in (0, 1].
    Logistic { beta: f64, dim: usize },
    /// Pairwise beta with global `gamma` and one `beta` per pair, lexicographic.
    PairwiseBeta { gamma: f64, betas: Vec<f64>, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    PairwiseBeta,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Family::Logistic),
            "pairwise_beta" | "pairwise-beta" => Ok(Family::PairwiseBeta),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    family: Family,
    d: usize,
    params: ParamRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamRecord {
    PairwiseBeta { gamma: f64, beta: Vec<f64> },
    Logistic { beta: f64 },
}

impl From<AngularModel> for ModelRecord {
    fn from(m: AngularModel) -> Self {
        match m {
            AngularModel::Logistic { beta, dim } => ModelRecord {
                family: Family::Logistic,
                d: dim,
                params: ParamRecord::Logistic { beta },
            },
            AngularModel::PairwiseBeta { gamma, betas, dim } => ModelRecord {
                family: Family::PairwiseBeta,
                d: dim,
                params: ParamRecord::PairwiseBeta { gamma, beta: betas },
            },
        }
    }
}

impl TryFrom<ModelRecord> for AngularModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        match (r.family, r.params) {
            (Family::Logistic, ParamRecord::Logistic { beta }) => AngularModel::logistic(beta, r.d),
            (Family::PairwiseBeta, ParamRecord::PairwiseBeta { gamma, beta }) => {
                AngularModel::pairwise_beta(gamma, beta, r.d)
            }
            _ => Err(Error::invalid("model parameters do not match the family")),
        }
    }
}

impl AngularModel {
    pub fn logistic(beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(format!("logistic beta {beta} outside (0, 1]")));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!(
                "logistic angular density is available for d = 2, 3, not {dim}"
            )));
        }
        Ok(AngularModel::Logistic { beta, dim })
    }

    pub fn pairwise_beta(gamma: f64, betas: Vec<f64>, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(Error::invalid("pairwise beta needs d >= 3"));
        }
        if betas.len() != n_pairs(dim) {
            return Err(Error::invalid(format!(
                "pairwise beta in d = {dim} needs {} pair parameters, got {}",
                n_pairs(dim),
                betas.len()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) || betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("pairwise beta parameters must be positive and finite"));
        }
        Ok(AngularModel::PairwiseBeta { gamma, betas, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            AngularModel::Logistic { dim, .. } | AngularModel::PairwiseBeta { dim, .. } => *dim,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            AngularModel::Logistic { .. } => Family::Logistic,
            AngularModel::PairwiseBeta { .. } => Family::PairwiseBeta,
        }
    }

    /// Natural parameters as a flat vector (`[beta]` or `[gamma, beta_12, ...]`).
    pub fn params(&self) -> Vec<f64> {
        match self {
            AngularModel::Logistic { beta, .. } => vec![*beta],
            AngularModel::PairwiseBeta { gamma, betas, .. } => {
                let mut v = vec![*gamma];
                v.extend_from_slice(betas);
                v
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            AngularModel::Logistic { .. } => vec!["beta".into()],
            AngularModel::PairwiseBeta { dim, .. } => {
                let mut v = vec!["gamma".to_string()];
                for j in 0..*dim {
                    for k in (j + 1)..*dim {
                        v.push(format!("beta_{}_{}", j + 1, k + 1));
                    }
                }
                v
            }
        }
    }

    /// `log c` where `c * h` integrates to one against Lebesgue measure on
    /// the first `d - 1` simplex coordinates.
    pub fn log_reference_factor(&self) -> f64 {
        match self {
            AngularModel::Logistic { .. } => 0.0,
            AngularModel::PairwiseBeta { dim, .. } => 0.5 * (*dim as f64).ln(),
        }
    }

    /// Log of the published density at an interior point.
    pub fn log_density(&self, w: &SimplexPoint) -> Result<f64> {
        self.check_point(w)?;
        Ok(self.log_density_coords(&LogCoords::from_positive(w.coords())))
    }

    pub fn density(&self, w: &SimplexPoint) -> Result<f64> {
        self.log_density(w).map(f64::exp)
    }

    /// Log density with respect to Lebesgue measure on `d - 1` coordinates.
    pub fn lebesgue_log_density(&self, w: &SimplexPoint) -> Result<f64> {
        Ok(self.log_density(w)? + self.log_reference_factor())
    }

    fn check_point(&self, w: &SimplexPoint) -> Result<()> {
        if w.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, model has {}",
                w.dim(),
                self.dim()
            )));
        }
        if !w.is_interior() {
            return Err(Error::Boundary(w.coords().to_vec()));
        }
        Ok(())
    }

    /// Log density from precomputed coordinates; no boundary check.
    pub fn log_density_coords(&self, c: &LogCoords) -> f64 {
        self.prepare().log_density(c)
    }

    /// Evaluator with parameter-only terms computed once.
    pub fn prepare(&self) -> PreparedModel {
        let kind = match self {
            AngularModel::Logistic { beta, dim } => {
                let mut log_const = -(*dim as f64).ln();
                for i in 1..*dim {
                    log_const += (i as f64 / beta - 1.0).ln();
                }
                Prepared::Logistic {
                    beta: *beta,
                    log_const,
                }
            }
            AngularModel::PairwiseBeta { gamma, betas, dim } => {
                Prepared::PairwiseBeta(PairwiseBetaConsts::new(*gamma, betas, *dim))
            }
        };
        PreparedModel {
            kind,
            log_ref: self.log_reference_factor(),
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Logistic { beta: f64, log_const: f64 },
    PairwiseBeta(PairwiseBetaConsts),
}

/// An [`AngularModel`] ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    kind: Prepared,
    log_ref: f64,
}

impl PreparedModel {
    /// Log of the published density; no boundary check.
    pub fn log_density(&self, c: &LogCoords) -> f64 {
        match &self.kind {
            Prepared::Logistic { beta, log_const } => {
                // ln(0) for the independence case
                if *log_const == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let inv = 1.0 / beta;
                let d = c.log_w.len() as f64;
                let sum_log_w: f64 = c.log_w.iter().sum();
                let max = c.log_w.iter().map(|lw| -lw * inv).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + c.log_w.iter().map(|lw| (-lw * inv - max).exp()).sum::<f64>().ln();
                log_const + (-inv - 1.0) * sum_log_w + (beta - d) * lse
            }
            Prepared::PairwiseBeta(k) => k.log_density(c),
        }
    }

    /// Log density against Lebesgue measure on `d - 1` coordinates.
    pub fn lebesgue_log_density(&self, c: &LogCoords) -> f64 {
        self.log_density(c) + self.log_ref
    }
}

/// Parameter-only pieces of the pairwise beta log density.
#[derive(Debug, Clone)]
struct PairwiseBetaConsts {
    gamma: f64,
    betas: Vec<f64>,
    dim: usize,
    log_k: f64,
    /// `log Gamma(2 b) - 2 log Gamma(b)` per pair.
    log_beta_norm: Vec<f64>,
}

impl PairwiseBetaConsts {
    fn new(gamma: f64, betas: &[f64], dim: usize) -> Self {
        let d = dim as f64;
        let log_k = 2f64.ln() + ln_gamma(d - 2.0) - d.ln() - (d - 1.0).ln() - 0.5 * d.ln()
            + ln_gamma(gamma * d + 1.0)
            - ln_gamma(2.0 * gamma + 1.0)
            - ln_gamma(gamma * (d - 2.0));
        Self {
            gamma,
            betas: betas.to_vec(),
            dim,
            log_k,
            log_beta_norm: betas.iter().map(|&b| ln_gamma(2.0 * b) - 2.0 * ln_gamma(b)).collect(),
        }
    }

    fn log_density(&self, c: &LogCoords) -> f64 {
        let d = self.dim;
        let a_sum = 2.0 * self.gamma - 1.0;
        let a_rest = self.gamma * (d as f64 - 2.0) - d as f64 + 2.0;
        // streaming log-sum-exp over pairs
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        let mut p = 0;
        for j in 0..d {
            for k in (j + 1)..d {
                let ls = c.pair_log_sum[p];
                let t = a_sum * ls
                    + a_rest * c.pair_log_rest[p]
                    + self.log_beta_norm[p]
                    + (self.betas[p] - 1.0) * (c.log_w[j] + c.log_w[k] - 2.0 * ls);
                if t > max {
                    acc = acc * (max - t).exp() + 1.0;
                    max = t;
                } else {
                    acc += (t - max).exp();
                }
                p += 1;
            }
        }
        self.log_k + max + acc.ln()
    }
}

/// Symmetric logistic angular density for d = 2 or 3.
pub fn logistic_density(w: &SimplexPoint, beta: f64, d: usize) -> Result<f64> {
    AngularModel::logistic(beta, d)?.density(w)
}

/// Pairwise beta angular density (surface-measure normalization).
pub fn pairwise_beta_density(w: &SimplexPoint, gamma: f64, betas: &[f64]) -> Result<f64> {
    AngularModel::pairwise_beta(gamma, betas.to_vec(), w.dim())?.density(w)
}

/// `log K_d(gamma)`, the pairwise beta normalizing constant.
pub fn pairwise_beta_log_norm(gamma: f64, d: usize) -> f64 {
    PairwiseBetaConsts::new(gamma, &vec![1.0; n_pairs(d)], d).log_k
}

/// Monte Carlo estimates of total mass and first moments of an angular model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub mass: f64,
    pub mass_se: f64,
    pub moments: Vec<f64>,
    pub moment_se: Vec<f64>,
    pub n_mc: usize,
}

impl MomentCheck {
    /// Mass is 1 and each moment is `1/d`, all within `k` standard errors.
    pub fn holds_within(&self, k: f64) -> bool {
        let d = self.moments.len() as f64;
        (self.mass - 1.0).abs() <= k * self.mass_se
            && self
                .moments
                .iter()
                .zip(&self.moment_se)
                .all(|(m, se)| (m - 1.0 / d).abs() <= k * se)
    }
}

/// Shape of the boundary-heavy component of the importance proposal.
const PROPOSAL_SHAPE: f64 = 0.2;
const MC_CHUNK: usize = 8192;

/// Importance-sampled estimates of `int dH` and `int w_j dH`.
///
/// The proposal mixes the uniform distribution on the simplex with a
/// symmetric Dirichlet concentrated near the boundary, which keeps the
/// weight variance finite for densities with integrable corner singularities.
pub fn moment_check(model: &AngularModel, n_mc: usize, seed: u64) -> MomentCheck {
    let d = model.dim();
    let df = d as f64;
    let log_uniform = ln_gamma(df); // log (d-1)!
    let a = PROPOSAL_SHAPE;
    let log_dir_norm = ln_gamma(df * a) - df * ln_gamma(a);
    let prepared = model.prepare();
    let n_chunks = n_mc.div_ceil(MC_CHUNK);

    // per chunk: sum of weights, sum of squared weights, and per-coordinate sums
    let partials: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stats::substream(seed, c as u64);
            let g_unif = Gamma::new(1.0, 1.0).unwrap();
            let g_dir = Gamma::new(a, 1.0).unwrap();
            let count = MC_CHUNK.min(n_mc - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            let mut m = vec![0.0; d];
            let mut m2 = vec![0.0; d];
            let mut g = vec![0.0; d];
            for _ in 0..count {
                loop {
                    let dist = if rng.random::<bool>() { &g_unif } else { &g_dir };
                    for gi in g.iter_mut() {
                        *gi = dist.sample(&mut rng);
                    }
                    if g.iter().all(|&v| v > 0.0 && v.is_finite()) {
                        break;
                    }
                }
                let coords = LogCoords::from_positive(&g);
                let sum_log_w: f64 = coords.log_w.iter().sum();
                let log_q = log_sum_exp(&[
                    log_uniform,
                    log_dir_norm + (a - 1.0) * sum_log_w,
                ]) - 2f64.ln();
                let weight = (prepared.lebesgue_log_density(&coords) - log_q).exp();
                s += weight;
                s2 += weight * weight;
                for j in 0..d {
                    let v = coords.log_w[j].exp() * weight;
                    m[j] += v;
                    m2[j] += v * v;
                }
            }
            (s, s2, m, m2)
        })
        .collect();

    let n = n_mc as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    let mut m = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for (a, b, c, e) in partials {
        s += a;
        s2 += b;
        for j in 0..d {
            m[j] += c[j];
            m2[j] += e[j];
        }
    }
    let se = |sum: f64, sum2: f64| ((sum2 / n - (sum / n).powi(2)).max(0.0) / (n - 1.0)).sqrt();
    MomentCheck {
        mass: s / n,
        mass_se: se(s, s2),
        moments: m.iter().map(|v| v / n).collect(),
        moment_se: m.iter().zip(&m2).map(|(a, b)| se(*a, *b)).collect(),
        n_mc,
    }
}

/// Log of the limit-measure intensity `||z||^-(d+1) h(z / ||z||)` at a
/// Cartesian point, with `h` on the Lebesgue reference measure.
pub fn log_cartesian_intensity(z: &[f64], model: &AngularModel) -> Result<f64> {
    if z.len() != model.dim() {
        return Err(Error::invalid("point and model dimensions differ"));
    }
    if z.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("intensity needs finite nonnegative coordinates"));
    }
    let r: f64 = z.iter().sum();
    if !(r > 0.0) {
        return Err(Error::invalid("intensity is undefined at the origin"));
    }
    let w = SimplexPoint::new(z.to_vec())?;
    if !w.is_interior() {
        return Err(Error::Boundary(w.coords().to_vec()));
    }
    let d = model.dim() as f64;
    Ok(-(d + 1.0) * r.ln() + model.prepare().lebesgue_log_density(&LogCoords::from_positive(z)))
}

pub fn cartesian_intensity(z: &[f64], model: &AngularModel) -> Result<f64> {
    log_cartesian_intensity(z, model).map(f64::exp)
}
