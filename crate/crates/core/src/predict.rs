//! Conditional density of one hidden component given large observed ones.
//!
//! With `z(t)` the full vector with `t` in the hidden slot, the conditional
//! density is approximated by the limit intensity along the line,
//! `||z(t)||^-(d+1) h(z(t) / ||z(t)||)`, divided by its integral over
//! `t > 0`. The integral is taken after substituting `t = r (v / (1 - v))^p`,
//! `r = ||z_obs||_1`, which maps the half line onto the unit interval. The
//! power `p >= 1` is chosen from the model so that the integrand in `v` is
//! smooth at `v = 0` even when the angular density is singular at the
//! simplex edge where the hidden component vanishes.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::angular::{AngularModel, LogCoords, PreparedModel};
use crate::distribution::{cumulative_trapezoid, GridDistribution, Predictive};
use crate::error::{Error, Result};
use crate::margins::MarginModel;
use crate::quadrature::simpson_refine;

/// Levels reported in prediction summaries.
pub const SUMMARY_LEVELS: [f64; 5] = [0.5, 0.75, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    /// Initial Simpson node count (odd).
    pub n_nodes: usize,
    pub rel_tol: f64,
    pub max_doublings: usize,
    /// Integration runs over `v` in `[eps, 1 - eps]`.
    pub eps: f64,
    /// Points of the output grid before tail extension.
    pub grid_points: usize,
    /// Half-width of the normal-score span used to place grid points.
    pub normal_span: f64,
    /// Tail extension stops once the density is below this fraction of its peak.
    pub tail_ratio: f64,
    pub tail_step: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            n_nodes: 2049,
            rel_tol: 1e-6,
            max_doublings: 8,
            eps: 1e-8,
            grid_points: 1025,
            normal_span: 4.5,
            tail_ratio: 1e-8,
            tail_step: 1.25,
        }
    }
}

/// Fréchet-scale conditional density of the hidden component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensity {
    pub dist: GridDistribution,
    /// Integral of the kernel over `t > 0`.
    pub normalizer: f64,
    pub conditioning: Vec<f64>,
    pub hidden: usize,
    /// Trapezoid mass of `kernel / normalizer` on the output grid, before rescaling.
    pub raw_mass: f64,
}

impl ConditionalDensity {
    pub fn grid(&self) -> &[f64] {
        self.dist.grid()
    }

    pub fn density(&self) -> &[f64] {
        self.dist.densities()
    }

    pub fn cdf_grid(&self) -> &[f64] {
        self.dist.cdf_values()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.dist.cdf(y)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        checked_quantile(&self.dist, p)
    }
}

fn checked_quantile(dist: &GridDistribution, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    Ok(dist.quantile(p))
}

/// Kernel of the conditional density in log space.
struct Kernel<'a> {
    prepared: PreparedModel,
    z_obs: &'a [f64],
    hidden: usize,
    d: f64,
}

impl Kernel<'_> {
    fn log_at(&self, t: f64) -> f64 {
        if !(t > 0.0 && t.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut z = Vec::with_capacity(self.z_obs.len() + 1);
        z.extend_from_slice(&self.z_obs[..self.hidden]);
        z.push(t);
        z.extend_from_slice(&self.z_obs[self.hidden..]);
        let r: f64 = z.iter().sum();
        -(self.d + 1.0) * r.ln() + self.prepared.lebesgue_log_density(&LogCoords::from_positive(&z))
    }
}

/// Largest substitution power used.
const MAX_POWER: f64 = 8.0;

/// Power `p` in `t = r (v / (1 - v))^p`. Near `t = 0` the kernel behaves
/// like `c + t^a`; the substitution turns this into `v^(p (1 + a) - 1)`,
/// which is made at least quadratic.
pub fn substitution_power(model: &AngularModel, hidden: usize) -> f64 {
    let a = match model {
        AngularModel::Logistic { beta, dim } => (*dim as f64 - 1.0) / beta - 2.0,
        AngularModel::PairwiseBeta { betas, dim, .. } => {
            let mut a = f64::INFINITY;
            let mut p = 0;
            for j in 0..*dim {
                for k in (j + 1)..*dim {
                    if j == hidden || k == hidden {
                        a = a.min(betas[p] - 1.0);
                    }
                    p += 1;
                }
            }
            a
        }
    };
    (3.0 / (1.0 + a)).clamp(1.0, MAX_POWER)
}

/// Conditional density of the last component.
pub fn conditional_density(z_obs: &[f64], model: &AngularModel, quad: &QuadConfig) -> Result<ConditionalDensity> {
    conditional_density_at(z_obs, z_obs.len(), model, quad)
}

/// Conditional density of component `hidden` (0-based position in the full vector).
pub fn conditional_density_at(
    z_obs: &[f64],
    hidden: usize,
    model: &AngularModel,
    quad: &QuadConfig,
) -> Result<ConditionalDensity> {
    let d = model.dim();
    if z_obs.len() + 1 != d {
        return Err(Error::invalid(format!(
            "{} observed components for a {d}-dimensional model",
            z_obs.len()
        )));
    }
    if hidden >= d {
        return Err(Error::invalid(format!("hidden index {hidden} out of range")));
    }
    if z_obs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("observed components must be finite and nonnegative"));
    }
    if z_obs.iter().any(|v| *v == 0.0) {
        return Err(Error::Boundary(z_obs.to_vec()));
    }
    let r: f64 = z_obs.iter().sum();
    let kernel = Kernel {
        prepared: model.prepare(),
        z_obs,
        hidden,
        d: d as f64,
    };
    let power = substitution_power(model, hidden);
    let t_of = |v: f64| r * (v / (1.0 - v)).powf(power);
    // integrand in v, scaled by exp(-offset) to stay in range;
    // dt/dv = p t / (v (1 - v))
    let log_g = |v: f64| {
        let t = t_of(v);
        kernel.log_at(t) + power.ln() + t.ln() - v.ln() - (1.0 - v).ln()
    };
    let offset = log_g(0.5);
    if !offset.is_finite() {
        return Err(Error::NonConvergence("conditional kernel vanishes at the centre".into()));
    }
    let refined = simpson_refine(
        |v| (log_g(v) - offset).exp(),
        quad.eps,
        1.0 - quad.eps,
        quad.n_nodes,
        quad.rel_tol,
        quad.max_doublings,
    )?;
    if !(refined.value > 0.0 && refined.value.is_finite()) {
        return Err(Error::NonConvergence("conditional normalizer is not positive".into()));
    }
    let log_norm = offset + refined.value.ln();

    // grid at normal-score quantile positions of the kernel mass in v
    let cum = cumulative_trapezoid(&refined.nodes, &refined.values);
    let total = *cum.last().unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m = quad.grid_points.max(3);
    let mut grid: Vec<f64> = Vec::with_capacity(m + 64);
    let mut j = 0usize;
    for k in 0..m {
        let x = -quad.normal_span + 2.0 * quad.normal_span * k as f64 / (m - 1) as f64;
        let target = normal.cdf(x) * total;
        while j + 1 < cum.len() - 1 && cum[j + 1] < target {
            j += 1;
        }
        let (c0, c1) = (cum[j], cum[j + 1]);
        let s = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        let v = refined.nodes[j] + s * (refined.nodes[j + 1] - refined.nodes[j]);
        let t = t_of(v);
        if grid.last().is_none_or(|&prev| t > prev) {
            grid.push(t);
        }
    }
    let log_density = |t: f64| kernel.log_at(t) - log_norm;
    let mut dens: Vec<f64> = grid.iter().map(|&t| log_density(t).exp()).collect();
    let peak = dens.iter().cloned().fold(0.0, f64::max);
    let floor = quad.tail_ratio * peak;
    let mut left = Vec::new();
    let mut t = grid[0];
    let mut f = dens[0];
    while f > floor && left.len() < 400 {
        t /= quad.tail_step;
        f = log_density(t).exp();
        left.push((t, f));
    }
    let mut right = Vec::new();
    let (mut t, mut f) = (*grid.last().unwrap(), *dens.last().unwrap());
    while f > floor && right.len() < 400 {
        t *= quad.tail_step;
        f = log_density(t).exp();
        right.push((t, f));
    }
    let mut full_grid: Vec<f64> = left.iter().rev().map(|p| p.0).collect();
    let mut full_dens: Vec<f64> = left.iter().rev().map(|p| p.1).collect();
    full_grid.append(&mut grid);
    full_dens.append(&mut dens);
    full_grid.extend(right.iter().map(|p| p.0));
    full_dens.extend(right.iter().map(|p| p.1));

    let (dist, raw_mass) = GridDistribution::from_density(full_grid, full_dens)?;
    Ok(ConditionalDensity {
        dist,
        normalizer: log_norm.exp(),
        conditioning: z_obs.to_vec(),
        hidden,
        raw_mass,
    })
}

/// Like [`conditional_density_at`], but declines (with a warning) when the
/// observed radius is below the fitting threshold `r0`.
pub fn gated_conditional_density(
    z_obs: &[f64],
    hidden: usize,
    model: &AngularModel,
    r0: f64,
    quad: &QuadConfig,
) -> Result<Option<ConditionalDensity>> {
    let r: f64 = z_obs.iter().sum();
    if r < r0 {
        warn!("observed radius {r:.4} is below the fitting threshold {r0:.4}; no prediction made");
        return Ok(None);
    }
    conditional_density_at(z_obs, hidden, model, quad).map(Some)
}

/// Conditional density on the original measurement scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalScaleDensity {
    pub dist: GridDistribution,
    /// Trapezoid integral of the back-transformed density values.
    pub raw_mass: f64,
}

impl OriginalScaleDensity {
    pub fn grid(&self) -> &[f64] {
        self.dist.grid()
    }

    pub fn density(&self) -> &[f64] {
        self.dist.densities()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        checked_quantile(&self.dist, p)
    }
}

/// Push a Fréchet-scale conditional density through the inverse margin
/// transform. The CDF is carried over pointwise, so quantiles map exactly.
/// The grid is the image of the Fréchet grid plus both sides of every point
/// where the margin density jumps.
pub fn back_transform(cd: &ConditionalDensity, margin: &MarginModel) -> Result<OriginalScaleDensity> {
    let t_grid = cd.grid();
    let mut ys: Vec<f64> = t_grid.iter().map(|&t| margin.from_frechet(t)).collect();
    if let Some(bad) = ys.iter().position(|y| !y.is_finite()) {
        return Err(Error::invalid(format!(
            "margin `{}` cannot invert Fréchet value {}",
            margin.name, t_grid[bad]
        )));
    }
    let (lo, hi) = (ys[0], ys[ys.len() - 1]);
    for &b in margin.density_breaks() {
        let delta = 1e-9 * b.abs().max(1.0);
        for y in [b - delta, b + delta] {
            if y > lo && y < hi {
                ys.push(y);
            }
        }
    }
    ys.sort_by(f64::total_cmp);
    ys.dedup_by(|a, b| *a <= *b);

    let mut dens = Vec::with_capacity(ys.len());
    let mut cdf = Vec::with_capacity(ys.len());
    for &y in &ys {
        let t = margin.to_frechet(y);
        let g = cd.dist.density(t) * margin.frechet_jacobian(y);
        dens.push(if g.is_finite() && g >= 0.0 { g } else { 0.0 });
        cdf.push(cd.dist.cdf(t));
    }
    if ys.len() < 2 {
        return Err(Error::invalid("back-transformed grid collapsed to a point"));
    }
    let raw_mass = *cumulative_trapezoid(&ys, &dens).last().unwrap();
    let last = *cdf.last().unwrap();
    if !(last > 0.0) {
        return Err(Error::invalid("back-transformed CDF has no mass"));
    }
    let mut cdf: Vec<f64> = cdf.iter().map(|c| c / last).collect();
    // enforce monotonicity lost to rounding in the two transforms
    for i in 1..cdf.len() {
        cdf[i] = cdf[i].max(cdf[i - 1]);
    }
    Ok(OriginalScaleDensity {
        dist: GridDistribution::from_parts(ys, dens, cdf)?,
        raw_mass,
    })
}

/// Probability integral transform of an observation; 0 below and 1 above the grid.
pub fn pit_value(dist: &impl Predictive, y: f64) -> f64 {
    dist.cdf(y).clamp(0.0, 1.0)
}

/// Quantiles at [`SUMMARY_LEVELS`].
pub fn summary_quantiles(dist: &impl Predictive) -> Vec<(f64, f64)> {
    SUMMARY_LEVELS.iter().map(|&p| (p, dist.quantile(p))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::GpdFit;
    use crate::simulate::{exact_conditional_density, sample_logistic};

    fn quad() -> QuadConfig {
        QuadConfig::default()
    }

    fn station_model() -> AngularModel {
        AngularModel::pairwise_beta(
            0.37,
            vec![0.51, 0.64, 0.56, 6.11, 0.76, 1.64, 0.96, 0.56, 0.98, 1.01],
            5,
        )
        .unwrap()
    }

    fn sup_error(z1: f64, beta: f64) -> (f64, f64) {
        let m = AngularModel::logistic(beta, 2).unwrap();
        let cd = conditional_density(&[z1], &m, &quad()).unwrap();
        let mut err: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for (&t, &f) in cd.grid().iter().zip(cd.density()) {
            let exact = exact_conditional_density(&[z1], t, beta).unwrap();
            err = err.max((f - exact).abs());
            peak = peak.max(exact);
        }
        (err, peak)
    }

    #[test]
    fn invariants_hold_for_shipped_models() {
        let cases: Vec<(AngularModel, Vec<f64>)> = vec![
            (AngularModel::logistic(0.3, 3).unwrap(), vec![5.37, 6.66]),
            (AngularModel::logistic(0.3, 3).unwrap(), vec![0.23, 0.24]),
            (AngularModel::logistic(0.7, 2).unwrap(), vec![12.0]),
            (station_model(), vec![20.0, 35.0, 12.0, 50.0]),
            (station_model(), vec![3.0, 1.0, 2.0, 4.0]),
        ];
        for (m, z) in cases {
            let cd = conditional_density(&z, &m, &quad()).unwrap();
            assert!((cd.raw_mass - 1.0).abs() < 1e-3, "{m:?} {z:?}: mass {}", cd.raw_mass);
            let c = cd.cdf_grid();
            assert!(c.windows(2).all(|w| w[1] >= w[0]));
            assert!(c[0] < 1e-3 && *c.last().unwrap() > 1.0 - 1e-3);
            assert!(cd.grid().windows(2).all(|w| w[1] > w[0]));
            for p in [0.1, 0.5, 0.9] {
                let q = cd.quantile(p).unwrap();
                assert!((cd.cdf(q) - p).abs() < 1e-6);
            }
            assert!(cd.normalizer > 0.0);
        }
    }

    #[test]
    fn quantiles_round_trip_and_increase() {
        let cd = conditional_density(&[5.37, 6.66], &AngularModel::logistic(0.3, 3).unwrap(), &quad()).unwrap();
        let q: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|p| cd.quantile(*p).unwrap()).collect();
        assert!(q[0] < q[1] && q[1] < q[2]);
        assert!((cd.cdf(q[1]) - 0.5).abs() < 1e-6);
        assert!(cd.quantile(0.0).is_err());
        assert!(cd.quantile(1.0).is_err());
    }

    #[test]
    fn approximation_improves_with_the_conditioning_value() {
        let errs: Vec<f64> = [1.0, 5.0, 25.0, 125.0].iter().map(|&z| {
            let (e, p) = sup_error(z, 0.3);
            e / p
        }).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 0.05);
    }

    #[test]
    fn bivariate_logistic_at_fifty() {
        let (err, peak) = sup_error(50.0, 0.3);
        assert!(err < 0.05 * peak, "{err} vs peak {peak}");
    }

    #[test]
    fn upper_quantile_matches_exact_conditional() {
        let beta = 0.3;
        let z1 = 100.0;
        let cd = conditional_density(&[z1], &AngularModel::logistic(beta, 2).unwrap(), &quad()).unwrap();
        // exact 0.95 quantile by bisection on the integrated exact density
        let exact_cdf = |y: f64| {
            crate::quadrature::simpson(
                |v: f64| {
                    let t = y * v;
                    if t <= 0.0 {
                        0.0
                    } else {
                        exact_conditional_density(&[z1], t, beta).unwrap() * y
                    }
                },
                0.0,
                1.0,
                20_001,
            )
        };
        let (mut lo, mut hi) = (1.0, 10_000.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if exact_cdf(mid) < 0.95 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let exact = 0.5 * (lo + hi);
        let approx = cd.quantile(0.95).unwrap();
        assert!((approx - exact).abs() < 0.02 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn permuting_observed_components_of_a_symmetric_model() {
        let m = AngularModel::logistic(0.4, 3).unwrap();
        let a = conditional_density(&[3.0, 7.0], &m, &quad()).unwrap();
        let b = conditional_density(&[7.0, 3.0], &m, &quad()).unwrap();
        assert_eq!(a.grid().len(), b.grid().len());
        for ((x, y), (fx, fy)) in a.grid().iter().zip(b.grid()).zip(a.density().iter().zip(b.density())) {
            assert!((x - y).abs() < 1e-9 * x);
            assert!((fx - fy).abs() < 1e-9 * fx.max(1e-300));
        }
    }

    #[test]
    fn hidden_position_matters_only_through_the_model() {
        let m = station_model();
        let z = [20.0, 35.0, 12.0, 50.0];
        let last = conditional_density_at(&z, 4, &m, &quad()).unwrap();
        let default = conditional_density(&z, &m, &quad()).unwrap();
        assert_eq!(last, default);
        let first = conditional_density_at(&z, 0, &m, &quad()).unwrap();
        assert_ne!(first.quantile(0.5).unwrap(), last.quantile(0.5).unwrap());
        assert!(conditional_density_at(&z, 5, &m, &quad()).is_err());
    }

    #[test]
    fn mode_scales_with_the_conditioning_vector() {
        let m = station_model();
        let z = [6.0, 9.0, 4.0, 15.0];
        let mode = |cd: &ConditionalDensity| {
            let i = cd
                .density()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            cd.grid()[i]
        };
        let base = mode(&conditional_density(&z, &m, &quad()).unwrap());
        for s in [0.5, 3.0, 40.0] {
            let zs: Vec<f64> = z.iter().map(|v| v * s).collect();
            let scaled = mode(&conditional_density(&zs, &m, &quad()).unwrap());
            assert!((scaled / base - s).abs() < 1e-6 * s, "s {s}: {}", scaled / base);
        }
    }

    #[test]
    fn bivariate_normalizer_is_the_marginal_intensity() {
        // integrating the intensity over the hidden coordinate leaves
        // E_h[w_1] / z1^2 = 1 / (2 z1^2)
        for (beta, z1) in [(0.3, 1.0), (0.7, 4.0), (0.5, 250.0)] {
            let m = AngularModel::logistic(beta, 2).unwrap();
            let cd = conditional_density(&[z1], &m, &quad()).unwrap();
            let exact = 0.5 / (z1 * z1);
            assert!((cd.normalizer - exact).abs() < 1e-6 * exact, "{beta} {z1}: {}", cd.normalizer);
        }
    }

    #[test]
    fn substitution_power_tracks_edge_behaviour() {
        assert_eq!(substitution_power(&AngularModel::logistic(0.3, 3).unwrap(), 2), 1.0);
        let p = substitution_power(&AngularModel::logistic(0.7, 2).unwrap(), 1);
        assert!((p * (1.0 / 0.7 - 1.0) - 3.0).abs() < 1e-12);
        let m = station_model();
        assert!((substitution_power(&m, 0) - 3.0 / 0.51).abs() < 1e-12);
        assert!((substitution_power(&m, 4) - 3.0 / 0.96).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        let m = AngularModel::logistic(0.3, 3).unwrap();
        assert!(conditional_density(&[1.0], &m, &quad()).is_err());
        assert!(conditional_density(&[1.0, -2.0], &m, &quad()).is_err());
        assert!(matches!(conditional_density(&[0.0, 2.0], &m, &quad()), Err(Error::Boundary(_))));
    }

    #[test]
    fn gating_declines_small_radii() {
        let m = AngularModel::logistic(0.3, 3).unwrap();
        assert!(gated_conditional_density(&[1.0, 2.0], 2, &m, 10.0, &quad()).unwrap().is_none());
        assert!(gated_conditional_density(&[5.0, 6.0], 2, &m, 10.0, &quad()).unwrap().is_some());
    }

    fn smooth_margin() -> MarginModel {
        // body from exponential quantiles, tail from the matching GPD
        let u = 30.0;
        let body: Vec<f64> = (1..=400).map(|i| -10.0 * (1.0 - 0.93 * i as f64 / 401.0).ln()).collect();
        let gpd = GpdFit {
            threshold: u,
            psi: 10.0,
            xi: 0.1,
            se_psi: 0.0,
            se_xi: 0.0,
            n_exceed: 200,
        };
        MarginModel::from_parts("x".into(), gpd, body, 0.07).unwrap()
    }

    #[test]
    fn back_transform_keeps_mass_and_quantiles() {
        let margin = smooth_margin();
        let m = AngularModel::logistic(0.3, 3).unwrap();
        let cd = conditional_density(&[15.0, 20.0], &m, &quad()).unwrap();
        let orig = back_transform(&cd, &margin).unwrap();
        assert!((orig.raw_mass - 1.0).abs() < 1e-3, "{}", orig.raw_mass);
        for p in [0.1, 0.5, 0.9, 0.99] {
            let direct = orig.quantile(p).unwrap();
            let mapped = margin.from_frechet(cd.quantile(p).unwrap());
            let cell = orig.grid().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            assert!((direct - mapped).abs() < cell, "{p}: {direct} vs {mapped}");
            assert!((direct - mapped).abs() < 1e-3 * mapped.abs().max(1.0), "{p}: {direct} vs {mapped}");
        }
    }

    #[test]
    fn back_transformed_median_matches_simulation() {
        // bivariate logistic pushed through a known margin: condition on a narrow
        // window of Z1 and compare the empirical median of Y2 with the median of
        // the back-transformed exact conditional
        let beta = 0.5;
        let margin = smooth_margin();
        let n = 1_000_000;
        let s = sample_logistic(n, 2, beta, 77).unwrap();
        let (lo, hi) = (9.8, 10.2);
        let mut ys: Vec<f64> = s
            .values
            .iter()
            .filter(|r| r[0] > lo && r[0] < hi)
            .map(|r| margin.from_frechet(r[1]))
            .collect();
        ys.sort_by(f64::total_cmp);
        let k = ys.len();
        assert!(k > 2000, "{k}");
        // distribution-free band for the median from binomial order statistics
        let half = (3.0 * (k as f64 * 0.25).sqrt()).ceil() as usize;
        let (band_lo, band_hi) = (ys[k / 2 - half], ys[k / 2 + half]);

        let m = AngularModel::logistic(beta, 2).unwrap();
        let approx = conditional_density(&[10.0], &m, &quad()).unwrap();
        let exact: Vec<f64> = approx
            .grid()
            .iter()
            .map(|&t| exact_conditional_density(&[10.0], t, beta).unwrap())
            .collect();
        let (dist, raw_mass) = GridDistribution::from_density(approx.grid().to_vec(), exact).unwrap();
        let cd = ConditionalDensity { dist, raw_mass, ..approx };
        let med = back_transform(&cd, &margin).unwrap().quantile(0.5).unwrap();
        assert!(med > band_lo && med < band_hi, "model {med}, empirical band [{band_lo}, {band_hi}]");
    }

    #[test]
    fn pit_clamps_outside_the_grid() {
        let cd = conditional_density(&[5.0, 6.0], &AngularModel::logistic(0.3, 3).unwrap(), &quad()).unwrap();
        assert_eq!(pit_value(&cd.dist, -1.0), 0.0);
        assert_eq!(pit_value(&cd.dist, 1e300), 1.0);
        let q = summary_quantiles(&cd.dist);
        assert_eq!(q.len(), 5);
        assert!(q.windows(2).all(|w| w[1].1 > w[0].1));
    }
}
