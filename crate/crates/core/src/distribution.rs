//! Univariate predictive distributions used by the forecasters and scores.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Anything that can be scored as a univariate forecast.
pub trait Predictive {
    fn cdf(&self, y: f64) -> f64;
    fn density(&self, y: f64) -> f64;
    /// Generalized inverse of the CDF for `p` in `[0, 1]`.
    fn quantile(&self, p: f64) -> f64;
    /// Points where the CDF changes shape; integration over the forecast
    /// should refine between consecutive nodes.
    fn nodes(&self) -> Vec<f64>;
}

impl<T: Predictive + ?Sized> Predictive for &T {
    fn cdf(&self, y: f64) -> f64 {
        (**self).cdf(y)
    }
    fn density(&self, y: f64) -> f64 {
        (**self).density(y)
    }
    fn quantile(&self, p: f64) -> f64 {
        (**self).quantile(p)
    }
    fn nodes(&self) -> Vec<f64> {
        (**self).nodes()
    }
}

impl<T: Predictive + ?Sized> Predictive for Box<T> {
    fn cdf(&self, y: f64) -> f64 {
        (**self).cdf(y)
    }
    fn density(&self, y: f64) -> f64 {
        (**self).density(y)
    }
    fn quantile(&self, p: f64) -> f64 {
        (**self).quantile(p)
    }
    fn nodes(&self) -> Vec<f64> {
        (**self).nodes()
    }
}

/// Piecewise-linear density on a grid with its exact cumulative integral.
///
/// Within a cell the CDF is the quadratic implied by the linear density,
/// scaled to the stored CDF increment. A positive `cdf[0]` is an atom at the
/// left end of the grid and a final value below one is an atom at the right end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDistribution {
    grid: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("a grid distribution needs at least 2 points"));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// Cumulative trapezoid integral starting at 0.
pub fn cumulative_trapezoid(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

impl GridDistribution {
    /// From density values, rescaled to unit trapezoid mass. Returns the
    /// distribution and the mass before rescaling.
    pub fn from_density(grid: Vec<f64>, density: Vec<f64>) -> Result<(Self, f64)> {
        check_grid(&grid)?;
        if density.len() != grid.len() {
            return Err(Error::invalid("grid and density lengths differ"));
        }
        if density.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("density values must be finite and nonnegative"));
        }
        let cum = cumulative_trapezoid(&grid, &density);
        let mass = *cum.last().unwrap();
        if !(mass > 0.0) {
            return Err(Error::invalid("density has zero mass on the grid"));
        }
        Ok((
            Self {
                grid,
                density: density.iter().map(|f| f / mass).collect(),
                cdf: cum.iter().map(|c| c / mass).collect(),
            },
            mass,
        ))
    }

    /// From explicit CDF values (nondecreasing within `[0, 1]`) and matching density.
    pub fn from_parts(grid: Vec<f64>, density: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if density.len() != grid.len() || cdf.len() != grid.len() {
            return Err(Error::invalid("grid, density and cdf lengths differ"));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) || cdf[0] < 0.0 || cdf[cdf.len() - 1] > 1.0 + 1e-9 {
            return Err(Error::invalid("cdf must be nondecreasing within [0, 1]"));
        }
        if density.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("density values must be finite and nonnegative"));
        }
        Ok(Self { grid, density, cdf })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    fn cell(&self, y: f64) -> usize {
        let i = self.grid.partition_point(|g| *g <= y);
        i.saturating_sub(1).min(self.grid.len() - 2)
    }

    /// Fraction of the cell's mass below relative position `s`.
    fn cell_fraction(&self, i: usize, s: f64) -> f64 {
        let (f0, f1) = (self.density[i], self.density[i + 1]);
        let avg = 0.5 * (f0 + f1);
        if avg <= 0.0 {
            return s;
        }
        ((f0 * s + 0.5 * (f1 - f0) * s * s) / avg).clamp(0.0, 1.0)
    }

    fn invert_cell(&self, i: usize, frac: f64) -> f64 {
        let (f0, f1) = (self.density[i], self.density[i + 1]);
        let avg = 0.5 * (f0 + f1);
        if avg <= 0.0 {
            return frac;
        }
        let a = 0.5 * (f1 - f0);
        let target = frac * avg;
        if a.abs() < 1e-12 * avg {
            return (target / f0).clamp(0.0, 1.0);
        }
        // a s^2 + f0 s - target = 0, stable root
        let disc = (f0 * f0 + 4.0 * a * target).max(0.0).sqrt();
        (2.0 * target / (f0 + disc)).clamp(0.0, 1.0)
    }
}

impl Predictive for GridDistribution {
    fn cdf(&self, y: f64) -> f64 {
        let n = self.grid.len();
        if y < self.grid[0] {
            return 0.0;
        }
        if y >= self.grid[n - 1] {
            return 1.0;
        }
        let i = self.cell(y);
        let h = self.grid[i + 1] - self.grid[i];
        let frac = self.cell_fraction(i, (y - self.grid[i]) / h);
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    fn density(&self, y: f64) -> f64 {
        let n = self.grid.len();
        if y < self.grid[0] || y > self.grid[n - 1] {
            return 0.0;
        }
        let i = self.cell(y);
        let s = (y - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        // scale so that the density integrates to the stored increment
        let (f0, f1) = (self.density[i], self.density[i + 1]);
        let h = self.grid[i + 1] - self.grid[i];
        let linear = f0 + s * (f1 - f0);
        let trap = 0.5 * h * (f0 + f1);
        let inc = self.cdf[i + 1] - self.cdf[i];
        if trap > 0.0 {
            linear * inc / trap
        } else {
            inc / h
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let n = self.grid.len();
        if p <= self.cdf[0] {
            return self.grid[0];
        }
        if p > self.cdf[n - 1] {
            return self.grid[n - 1];
        }
        if p == self.cdf[n - 1] {
            // first grid point where the CDF reaches its final value
            let last = self.cdf[n - 1];
            let j = self.cdf.partition_point(|c| *c < last);
            return self.grid[j.min(n - 1)];
        }
        let i = self.cdf.partition_point(|c| *c < p).clamp(1, n - 1) - 1;
        let inc = self.cdf[i + 1] - self.cdf[i];
        let s = if inc > 0.0 {
            self.invert_cell(i, (p - self.cdf[i]) / inc)
        } else {
            0.0
        };
        self.grid[i] + s * (self.grid[i + 1] - self.grid[i])
    }

    fn nodes(&self) -> Vec<f64> {
        self.grid.clone()
    }
}

/// Normal forecast; a zero standard deviation is a point mass at the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditional {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianConditional {
    fn normal(&self) -> Option<Normal> {
        (self.sd > 0.0).then(|| Normal::new(self.mean, self.sd).unwrap())
    }
}

impl Predictive for GaussianConditional {
    fn cdf(&self, y: f64) -> f64 {
        match self.normal() {
            Some(n) => n.cdf(y),
            None => f64::from(y >= self.mean),
        }
    }

    fn density(&self, y: f64) -> f64 {
        match self.normal() {
            Some(n) => n.pdf(y),
            None if y == self.mean => f64::INFINITY,
            None => 0.0,
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self.normal() {
            Some(n) if p > 0.0 && p < 1.0 => n.inverse_cdf(p),
            Some(_) if p <= 0.0 => f64::NEG_INFINITY,
            Some(_) => f64::INFINITY,
            None => self.mean,
        }
    }

    fn nodes(&self) -> Vec<f64> {
        if self.sd > 0.0 {
            (-8..=8).map(|k| self.mean + k as f64 * self.sd).collect()
        } else {
            vec![self.mean]
        }
    }
}
