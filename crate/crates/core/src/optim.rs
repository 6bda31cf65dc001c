//! Derivative-free minimization and finite-difference curvature.
//!
//! The likelihoods in this crate are smooth but their gradients are tedious,
//! so fitting uses a Nelder-Mead simplex search with dimension-adaptive
//! coefficients (Gao & Han, 2012) and standard errors come from a
//! central-difference Hessian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    /// Converged once every vertex lies within this sup-norm distance of the best.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            x_tol: 1e-8,
            max_evals: 10_000,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "nelder_mead needs at least one coordinate");
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += cfg.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < cfg.x_tol {
            converged = true;
            break;
        }
        if evals >= cfg.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_second = simplex[n - 1].1;
        let f_best = simplex[0].1;

        let xr = along(alpha, &worst);
        let fr = eval(&xr, &mut evals);
        if fr < f_best {
            let xe = along(alpha * gamma, &worst);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = along(alpha * rho, &worst);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho, &worst);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals,
        converged,
    }
}

/// Central-difference Hessian of `f` at `x` with a fixed step.
pub fn hessian<F>(mut f: F, x: &[f64], step: f64) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    let mut h = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for i in 0..n {
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * step;
                probe[j] = x[j] + sj * step;
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Inverse of a symmetric positive definite matrix, `None` when not positive definite.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = m.clone().cholesky()?;
    Some(chol.inverse())
}

/// Standard errors on the natural scale by the delta method: `dnat[i]` is the
/// derivative of natural parameter i with respect to transformed coordinate i.
pub fn delta_method_se(cov: &DMatrix<f64>, dnat: &[f64]) -> Vec<f64> {
    let d = DVector::from_column_slice(dnat);
    (0..cov.nrows())
        .map(|i| (cov[(i, i)].max(0.0)).sqrt() * d[i].abs())
        .collect()
}
