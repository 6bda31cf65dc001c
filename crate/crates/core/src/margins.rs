//! Semi-parametric marginal distributions and the unit-Fréchet transform.
//!
//! Each column gets an empirical body below a high threshold `u` and a
//! generalized Pareto tail above it, weighted by the observed exceedance
//! proportion `zeta`:
//!
//! ```text
//! F(y) = (1 - zeta) * G_body(y)                          y <= u
//! F(y) = 1 - zeta * (1 + xi (y - u) / psi)_+^(-1/xi)     y >  u
//! ```
//!
//! Values are mapped to the common scale by `z = (-log F(y))^-1`.

use serde::{Deserialize, Serialize};

use crate::dataio::MultivariateSeries;
use crate::error::{Error, Result};
use crate::optim::{self, NelderMeadConfig};
use crate::stats;

/// CDF values are clamped to `(CDF_EPS, 1 - CDF_EPS)`.
pub const CDF_EPS: f64 = 1e-12;
/// Below this |xi| the exponential-limit formulas are used.
pub const XI_ZERO: f64 = 1e-6;
pub const MIN_EXCEEDANCES: usize = 30;

/// Maximum-likelihood generalized Pareto fit to threshold excesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub threshold: f64,
    pub psi: f64,
    pub xi: f64,
    pub se_psi: f64,
    pub se_xi: f64,
    pub n_exceed: usize,
}

impl GpdFit {
    /// `P(Y > u + x | Y > u)` for an excess `x >= 0`.
    pub fn survival(&self, x: f64) -> f64 {
        gpd_survival(x, self.psi, self.xi)
    }

    /// Density of the excess distribution at `x >= 0`.
    pub fn excess_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if self.xi.abs() < XI_ZERO {
            return (-x / self.psi).exp() / self.psi;
        }
        let s = 1.0 + self.xi * x / self.psi;
        if s <= 0.0 {
            return 0.0;
        }
        s.powf(-1.0 / self.xi - 1.0) / self.psi
    }

    /// Excess with survival probability `surv` in (0, 1].
    pub fn excess_quantile(&self, surv: f64) -> f64 {
        if self.xi.abs() < XI_ZERO {
            -self.psi * surv.ln()
        } else {
            self.psi / self.xi * (surv.powf(-self.xi) - 1.0)
        }
    }
}

fn gpd_survival(x: f64, psi: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if xi.abs() < XI_ZERO {
        return (-x / psi).exp();
    }
    let s = 1.0 + xi * x / psi;
    if s <= 0.0 {
        0.0
    } else {
        (-(s.ln()) / xi).exp()
    }
}

fn gpd_nll(excesses: &[f64], psi: f64, xi: f64) -> f64 {
    if !(psi > 0.0) || !xi.is_finite() {
        return f64::INFINITY;
    }
    let n = excesses.len() as f64;
    if xi.abs() < XI_ZERO {
        return n * psi.ln() + excesses.iter().sum::<f64>() / psi;
    }
    let mut acc = 0.0;
    for &y in excesses {
        let a = xi * y / psi;
        if a <= -1.0 {
            return f64::INFINITY;
        }
        acc += a.ln_1p();
    }
    n * psi.ln() + (1.0 + 1.0 / xi) * acc
}

/// Point on a mean residual life plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrlPoint {
    pub threshold: f64,
    pub mean_excess: f64,
    pub std_error: f64,
    pub n_exceed: usize,
}

/// Mean excess over each candidate threshold, with its standard error.
pub fn mean_residual_life(column: &[f64], candidate_thresholds: &[f64]) -> Result<Vec<MrlPoint>> {
    let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    candidate_thresholds
        .iter()
        .map(|&u| {
            if u >= max {
                return Err(Error::invalid(format!(
                    "threshold {u} is not below the sample maximum {max}"
                )));
            }
            let ex: Vec<f64> = column.iter().filter(|&&y| y > u).map(|y| y - u).collect();
            if ex.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "threshold {u} has {} exceedances, need 2",
                    ex.len()
                )));
            }
            Ok(MrlPoint {
                threshold: u,
                mean_excess: stats::mean(&ex),
                std_error: (stats::variance(&ex) / ex.len() as f64).sqrt(),
                n_exceed: ex.len(),
            })
        })
        .collect()
}

/// Fit a GPD above the empirical `threshold_quantile` of `column`.
pub fn fit_gpd(column: &[f64], threshold_quantile: f64) -> Result<GpdFit> {
    if !(0.0..1.0).contains(&threshold_quantile) {
        return Err(Error::invalid("threshold quantile must lie in [0, 1)"));
    }
    let sorted = stats::sorted_copy(column);
    let u = stats::quantile_sorted(&sorted, threshold_quantile);
    let excesses: Vec<f64> = sorted.iter().filter(|&&y| y > u).map(|y| y - u).collect();
    fit_gpd_excesses(&excesses, u)
}

/// Maximum-likelihood GPD fit to excesses over a known threshold.
pub fn fit_gpd_excesses(excesses: &[f64], threshold: f64) -> Result<GpdFit> {
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(Error::InsufficientData(format!(
            "{} exceedances, need at least {MIN_EXCEEDANCES}",
            excesses.len()
        )));
    }
    let m = stats::mean(excesses);
    let v = stats::variance(excesses);
    if !(v > 0.0) {
        return Err(Error::InsufficientData("all excesses are equal".into()));
    }

    let nll_t = |t: &[f64]| gpd_nll(excesses, t[0].exp(), t[1]);
    // method-of-moments start, plus an exponential start
    let xi_mom = (0.5 * (1.0 - m * m / v)).clamp(-0.4, 0.9);
    let psi_mom = (0.5 * m * (m * m / v + 1.0)).max(1e-8 * m);
    let cfg = NelderMeadConfig {
        initial_step: 0.1,
        ..Default::default()
    };
    let best = [[psi_mom.ln(), xi_mom], [m.ln(), 0.0]]
        .iter()
        .map(|s| optim::nelder_mead(nll_t, s, &cfg))
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::NonConvergence("GPD likelihood is infinite at every start".into()))?;
    if !best.converged {
        return Err(Error::NonConvergence(format!(
            "GPD search stopped after {} evaluations",
            best.evals
        )));
    }
    let (psi, xi) = (best.x[0].exp(), best.x[1]);

    let h = optim::hessian(|p| gpd_nll(excesses, p[0], p[1]), &[psi, xi], 1e-4 * psi.max(1e-3));
    let cov = optim::spd_inverse(&h)
        .ok_or_else(|| Error::NonConvergence("GPD Hessian is not positive definite".into()))?;
    Ok(GpdFit {
        threshold,
        psi,
        xi,
        se_psi: cov[(0, 0)].sqrt(),
        se_xi: cov[(1, 1)].sqrt(),
        n_exceed: excesses.len(),
    })
}

#[derive(Serialize, Deserialize)]
struct MarginRecord {
    name: String,
    u: f64,
    psi: f64,
    xi: f64,
    se_psi: f64,
    se_xi: f64,
    zeta_bar: f64,
    #[serde(default)]
    n_exceed: usize,
    body: Vec<f64>,
}

/// Fitted marginal CDF: interpolated empirical body plus GPD tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MarginRecord", try_from = "MarginRecord")]
pub struct MarginModel {
    pub name: String,
    pub gpd: GpdFit,
    /// Sorted training values at or below the threshold.
    pub body: Vec<f64>,
    /// Observed proportion of training values above the threshold.
    pub zeta_bar: f64,
    knots_x: Vec<f64>,
    knots_p: Vec<f64>,
}

impl From<MarginModel> for MarginRecord {
    fn from(m: MarginModel) -> Self {
        MarginRecord {
            name: m.name,
            u: m.gpd.threshold,
            psi: m.gpd.psi,
            xi: m.gpd.xi,
            se_psi: m.gpd.se_psi,
            se_xi: m.gpd.se_xi,
            zeta_bar: m.zeta_bar,
            n_exceed: m.gpd.n_exceed,
            body: m.body,
        }
    }
}

impl TryFrom<MarginRecord> for MarginModel {
    type Error = Error;

    fn try_from(r: MarginRecord) -> Result<Self> {
        let gpd = GpdFit {
            threshold: r.u,
            psi: r.psi,
            xi: r.xi,
            se_psi: r.se_psi,
            se_xi: r.se_xi,
            n_exceed: r.n_exceed,
        };
        MarginModel::from_parts(r.name, gpd, r.body, r.zeta_bar)
    }
}

impl MarginModel {
    /// Fit the body and tail of one column.
    pub fn fit(name: impl Into<String>, column: &[f64], threshold_quantile: f64) -> Result<Self> {
        let gpd = fit_gpd(column, threshold_quantile)?;
        let body: Vec<f64> = stats::sorted_copy(column)
            .into_iter()
            .filter(|&y| y <= gpd.threshold)
            .collect();
        let zeta_bar = gpd.n_exceed as f64 / column.len() as f64;
        Self::from_parts(name.into(), gpd, body, zeta_bar)
    }

    pub fn from_parts(name: String, gpd: GpdFit, mut body: Vec<f64>, zeta_bar: f64) -> Result<Self> {
        if !(gpd.psi > 0.0) {
            return Err(Error::invalid("GPD scale must be positive"));
        }
        if !(zeta_bar > 0.0 && zeta_bar < 1.0) {
            return Err(Error::invalid("exceedance proportion must lie in (0, 1)"));
        }
        body.sort_by(f64::total_cmp);
        if body.is_empty() || body.iter().any(|&b| b > gpd.threshold || !b.is_finite()) {
            return Err(Error::invalid("body values must be finite and at most the threshold"));
        }
        let (knots_x, knots_p) = body_knots(&body, gpd.threshold);
        Ok(Self {
            name,
            gpd,
            body,
            zeta_bar,
            knots_x,
            knots_p,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.gpd.threshold
    }

    /// Points where the fitted density jumps: the body knots and the threshold.
    pub fn density_breaks(&self) -> &[f64] {
        &self.knots_x
    }

    fn body_cdf(&self, y: f64) -> f64 {
        let (xs, ps) = (&self.knots_x, &self.knots_p);
        if y <= xs[0] {
            return 0.0;
        }
        if y >= xs[xs.len() - 1] {
            return 1.0;
        }
        let i = xs.partition_point(|&x| x <= y);
        let (x0, x1, p0, p1) = (xs[i - 1], xs[i], ps[i - 1], ps[i]);
        p0 + (p1 - p0) * (y - x0) / (x1 - x0)
    }

    fn body_slope(&self, y: f64) -> f64 {
        let xs = &self.knots_x;
        if y < xs[0] || y >= xs[xs.len() - 1] {
            return 0.0;
        }
        let i = xs.partition_point(|&x| x <= y);
        (self.knots_p[i] - self.knots_p[i - 1]) / (xs[i] - xs[i - 1])
    }

    fn body_quantile(&self, p: f64) -> f64 {
        let (xs, ps) = (&self.knots_x, &self.knots_p);
        if p <= 0.0 {
            return xs[0];
        }
        if p >= 1.0 {
            return xs[xs.len() - 1];
        }
        let i = ps.partition_point(|&q| q <= p).clamp(1, ps.len() - 1);
        let (x0, x1, p0, p1) = (xs[i - 1], xs[i], ps[i - 1], ps[i]);
        x0 + (x1 - x0) * (p - p0) / (p1 - p0)
    }

    /// `-log F(y)`, evaluated without forming `F` in the tail.
    fn neg_log_cdf(&self, y: f64) -> f64 {
        let u = self.gpd.threshold;
        let lo = -(1.0 - CDF_EPS).ln();
        let hi = -CDF_EPS.ln();
        let v = if y > u {
            let tail = (self.zeta_bar * self.gpd.survival(y - u)).max(CDF_EPS);
            -(-tail).ln_1p()
        } else {
            let f = ((1.0 - self.zeta_bar) * self.body_cdf(y)).max(CDF_EPS);
            -f.ln()
        };
        v.clamp(lo, hi)
    }

    /// Fitted CDF, clamped to `(CDF_EPS, 1 - CDF_EPS)`.
    pub fn cdf(&self, y: f64) -> f64 {
        let u = self.gpd.threshold;
        let f = if y > u {
            1.0 - self.zeta_bar * self.gpd.survival(y - u)
        } else {
            (1.0 - self.zeta_bar) * self.body_cdf(y)
        };
        f.clamp(CDF_EPS, 1.0 - CDF_EPS)
    }

    /// Derivative of the fitted CDF.
    pub fn density(&self, y: f64) -> f64 {
        let u = self.gpd.threshold;
        if y >= u {
            self.zeta_bar * self.gpd.excess_density(y - u)
        } else {
            (1.0 - self.zeta_bar) * self.body_slope(y)
        }
    }

    pub fn to_frechet(&self, y: f64) -> f64 {
        1.0 / self.neg_log_cdf(y)
    }

    /// Inverse of [`MarginModel::to_frechet`] for `z > 0`.
    pub fn from_frechet(&self, z: f64) -> f64 {
        let q = 1.0 / z;
        let one_minus_f = -(-q).exp_m1();
        if one_minus_f < self.zeta_bar {
            let surv = one_minus_f / self.zeta_bar;
            self.gpd.threshold + self.gpd.excess_quantile(surv)
        } else {
            let f = (-q).exp();
            self.body_quantile(f / (1.0 - self.zeta_bar))
        }
    }

    /// `dz/dy` of the Fréchet transform at `y`.
    pub fn frechet_jacobian(&self, y: f64) -> f64 {
        let q = self.neg_log_cdf(y);
        let f = (-q).exp();
        self.density(y) / (f * q * q)
    }

    /// Lowest value with positive fitted density.
    pub fn lower_support(&self) -> f64 {
        self.knots_x[0]
    }
}

/// Knots of the interpolated body CDF: `(x_lo, 0)`, `(b_i, i / (m + 1))`, `(u, 1)`,
/// with tied abscissae collapsed to their largest probability.
fn body_knots(body: &[f64], u: f64) -> (Vec<f64>, Vec<f64>) {
    let m = body.len();
    let spacing = if m >= 2 {
        (body[m - 1] - body[0]) / (m - 1) as f64
    } else {
        0.0
    };
    let spacing = if spacing > 0.0 {
        spacing
    } else {
        (u - body[0]).abs().max(1.0)
    };
    let mut xs = vec![body[0] - spacing];
    let mut ps = vec![0.0];
    let denom = (m + 1) as f64;
    for (i, &b) in body.iter().enumerate() {
        if b >= u {
            break;
        }
        let p = (i + 1) as f64 / denom;
        if *xs.last().unwrap() == b {
            *ps.last_mut().unwrap() = p;
        } else {
            xs.push(b);
            ps.push(p);
        }
    }
    xs.push(u);
    ps.push(1.0);
    (xs, ps)
}

/// Fit a margin to every column of `series`.
pub fn fit_margins(series: &MultivariateSeries, threshold_quantile: f64) -> Result<Vec<MarginModel>> {
    series
        .column_names
        .iter()
        .enumerate()
        .map(|(j, name)| MarginModel::fit(name.clone(), &series.column(j), threshold_quantile))
        .collect()
}

/// Map every entry of `series` to the unit-Fréchet scale with its column's margin.
pub fn transform_series(series: &MultivariateSeries, margins: &[MarginModel]) -> Result<MultivariateSeries> {
    if margins.len() != series.n_cols() {
        return Err(Error::invalid(format!(
            "{} margins for {} columns",
            margins.len(),
            series.n_cols()
        )));
    }
    let rows = series
        .rows
        .iter()
        .map(|r| r.iter().zip(margins).map(|(&y, m)| m.to_frechet(y)).collect())
        .collect();
    Ok(MultivariateSeries {
        timestamps: series.timestamps.clone(),
        column_names: series.column_names.clone(),
        rows,
    })
}
