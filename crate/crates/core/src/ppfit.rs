//! Point-process fitting of angular models to radially thresholded
//! Fréchet-scale data.
//!
//! Above the radial threshold the limit intensity factorizes into
//! `r^-2 dr` times the angular density, so only `sum log h(w_i)` depends on
//! the parameters.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{n_pairs, AngularModel, Family, LogCoords, SimplexPoint};
use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadConfig};
use crate::stats;

pub const MIN_EXCEEDANCES: usize = 20;

/// Rows whose L1 radius exceeds `r0`, split into radius and angle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedSample {
    pub angles: Vec<SimplexPoint>,
    pub radii: Vec<f64>,
    pub r0: f64,
    /// Rows before thresholding.
    pub n_total: usize,
    pub quantile: f64,
}

impl ThresholdedSample {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.angles.first().map_or(0, SimplexPoint::dim)
    }
}

/// Number of rows kept at radial quantile `q`: `round(n (1 - q))`.
pub fn exceedance_count(n: usize, quantile: f64) -> usize {
    ((n as f64 * (1.0 - quantile)).round() as usize).min(n)
}

/// Threshold such that exactly the `round(n (1 - q))` largest radii lie above it.
pub fn radial_cutoff(radii: &[f64], quantile: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::invalid(format!("radial quantile {quantile} outside [0, 1)")));
    }
    let k = exceedance_count(radii.len(), quantile);
    if k == radii.len() {
        return Ok(0.0);
    }
    let mut sorted = stats::sorted_copy(radii);
    sorted.reverse();
    Ok(sorted[k])
}

pub fn radial_threshold(z: &[Vec<f64>], quantile: f64) -> Result<ThresholdedSample> {
    if z.is_empty() {
        return Err(Error::InsufficientData("no rows to threshold".into()));
    }
    let d = z[0].len();
    if d < 2 || z.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows must share a dimension of at least 2"));
    }
    if z.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("Fréchet-scale values must be finite and nonnegative"));
    }
    let radii: Vec<f64> = z.iter().map(|r| r.iter().sum()).collect();
    if radii.iter().all(|r| *r == radii[0]) {
        return Err(Error::InsufficientData(
            "all radii are equal; the radial threshold is undefined".into(),
        ));
    }
    let r0 = radial_cutoff(&radii, quantile)?;
    let mut angles = Vec::new();
    let mut kept = Vec::new();
    for (row, &r) in z.iter().zip(&radii) {
        if r > r0 {
            angles.push(SimplexPoint::new(row.clone())?);
            kept.push(r);
        }
    }
    if kept.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData(format!(
            "{} radial exceedances at quantile {quantile}; need at least {MIN_EXCEEDANCES}",
            kept.len()
        )));
    }
    Ok(ThresholdedSample {
        angles,
        radii: kept,
        r0,
        n_total: z.len(),
        quantile,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadConfig,
    /// Finite-difference step for the Hessian, in transformed coordinates.
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            optimizer: NelderMeadConfig {
                x_tol: 1e-8,
                max_evals: 10_000,
                initial_step: 0.5,
            },
            hessian_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedAngularModel {
    pub model: AngularModel,
    /// Natural-scale standard errors in [`AngularModel::params`] order; `None`
    /// when the Hessian is not positive definite.
    pub std_errors: Option<Vec<f64>>,
    pub neg_log_lik: f64,
    pub n_used: usize,
    pub converged: bool,
}

impl FittedAngularModel {
    pub fn hessian_ok(&self) -> bool {
        self.std_errors.is_some()
    }
}

fn to_model(family: Family, d: usize, theta: &[f64]) -> Result<AngularModel> {
    match family {
        Family::Logistic => AngularModel::logistic(1.0 / (1.0 + (-theta[0]).exp()), d),
        Family::PairwiseBeta => {
            AngularModel::pairwise_beta(theta[0].exp(), theta[1..].iter().map(|t| t.exp()).collect(), d)
        }
    }
}

fn n_params(family: Family, d: usize) -> usize {
    match family {
        Family::Logistic => 1,
        Family::PairwiseBeta => 1 + n_pairs(d),
    }
}

/// Derivatives of the natural parameters with respect to the transformed ones.
fn natural_jacobian(model: &AngularModel) -> Vec<f64> {
    match model {
        AngularModel::Logistic { beta, .. } => vec![beta * (1.0 - beta)],
        other => other.params(),
    }
}

/// Negative angular log-likelihood of `model` at precomputed points.
pub fn neg_log_likelihood(model: &AngularModel, points: &[LogCoords]) -> f64 {
    let prepared = model.prepare();
    -points.iter().map(|c| prepared.log_density(c)).sum::<f64>()
}

pub fn fit(sample: &ThresholdedSample, family: Family, cfg: &FitConfig) -> Result<FittedAngularModel> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} angles is too few to fit",
            sample.len()
        )));
    }
    let d = sample.dim();
    match family {
        Family::Logistic if !(2..=3).contains(&d) => {
            return Err(Error::invalid(format!("logistic family needs d = 2 or 3, got {d}")))
        }
        Family::PairwiseBeta if d < 3 => return Err(Error::invalid("pairwise beta needs d >= 3")),
        _ => {}
    }
    if let Some(p) = sample.angles.iter().find(|p| !p.is_interior()) {
        return Err(Error::Boundary(p.coords().to_vec()));
    }
    let points: Vec<LogCoords> = sample
        .angles
        .iter()
        .map(|p| LogCoords::from_positive(p.coords()))
        .collect();
    let k = n_params(family, d);
    let nll = |theta: &[f64]| -> f64 {
        match to_model(family, d, theta) {
            Ok(m) => {
                let v = neg_log_likelihood(&m, &points);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    };

    // start 0 sits at a neutral point; the others are seeded perturbations of it
    let base = vec![0.0; k];
    let starts: Vec<Vec<f64>> = (0..cfg.starts.max(1))
        .map(|s| {
            if s == 0 {
                return base.clone();
            }
            let mut rng = stats::substream(cfg.seed, s as u64);
            base.iter().map(|b| b + rng.random_range(-1.5..1.5)).collect()
        })
        .collect();

    let runs: Vec<optim::Minimum> = starts
        .par_iter()
        .map(|x0| optim::nelder_mead(&nll, x0, &cfg.optimizer))
        .collect();
    let converged_any = runs.iter().any(|r| r.converged);
    if !converged_any {
        return Err(Error::NonConvergence(format!(
            "none of {} restarts converged within {} evaluations",
            runs.len(),
            cfg.optimizer.max_evals
        )));
    }
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::NonConvergence("no restart reached a finite likelihood".into()))?;

    let model = to_model(family, d, &best.x)?;
    let hess = optim::hessian(&nll, &best.x, cfg.hessian_step);
    let std_errors = optim::spd_inverse(&hess).map(|cov| optim::delta_method_se(&cov, &natural_jacobian(&model)));
    if std_errors.is_none() {
        warn!("Hessian of the angular likelihood is not positive definite; standard errors omitted");
    }
    Ok(FittedAngularModel {
        model,
        std_errors,
        neg_log_lik: best.value,
        n_used: sample.len(),
        converged: best.converged,
    })
}

/// Convenience for tests and diagnostics: observed information in transformed coordinates.
pub fn observed_information(fit: &FittedAngularModel, sample: &ThresholdedSample, step: f64) -> DMatrix<f64> {
    let points: Vec<LogCoords> = sample
        .angles
        .iter()
        .map(|p| LogCoords::from_positive(p.coords()))
        .collect();
    let d = fit.model.dim();
    let family = fit.model.family();
    let theta: Vec<f64> = match &fit.model {
        AngularModel::Logistic { beta, .. } => vec![(beta / (1.0 - beta)).ln()],
        m => m.params().iter().map(|v| v.ln()).collect(),
    };
    optim::hessian(
        |t| to_model(family, d, t).map_or(f64::INFINITY, |m| neg_log_likelihood(&m, &points)),
        &theta,
        step,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub quantile: f64,
    pub n_used: usize,
    pub params: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
}

/// Refit at each radial quantile.
pub fn profile_sensitivity(
    z: &[Vec<f64>],
    family: Family,
    quantiles: &[f64],
    cfg: &FitConfig,
) -> Result<Vec<ProfileRow>> {
    quantiles
        .iter()
        .map(|&q| {
            let sample = radial_threshold(z, q)?;
            let f = fit(&sample, family, cfg)?;
            Ok(ProfileRow {
                quantile: q,
                n_used: f.n_used,
                params: f.model.params(),
                std_errors: f.std_errors,
            })
        })
        .collect()
}

/// Serialized fit: parameters and standard errors share the model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: Family,
    pub d: usize,
    pub params: serde_json::Value,
    pub std_errors: Option<serde_json::Value>,
    pub nll: f64,
    pub n_used: usize,
    pub r0: f64,
    pub quantile: f64,
}

fn param_layout(model: &AngularModel, values: &[f64]) -> serde_json::Value {
    match model {
        AngularModel::Logistic { .. } => serde_json::json!({ "beta": values[0] }),
        AngularModel::PairwiseBeta { .. } => serde_json::json!({ "gamma": values[0], "beta": &values[1..] }),
    }
}

impl FitReport {
    pub fn new(fit: &FittedAngularModel, sample: &ThresholdedSample) -> Self {
        Self {
            family: fit.model.family(),
            d: fit.model.dim(),
            params: param_layout(&fit.model, &fit.model.params()),
            std_errors: fit.std_errors.as_ref().map(|se| param_layout(&fit.model, se)),
            nll: fit.neg_log_lik,
            n_used: fit.n_used,
            r0: sample.r0,
            quantile: sample.quantile,
        }
    }

    pub fn model(&self) -> Result<AngularModel> {
        let v = serde_json::json!({ "family": self.family, "d": self.d, "params": self.params });
        Ok(serde_json::from_value(v)?)
    }
}
