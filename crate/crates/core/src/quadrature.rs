//! Composite Simpson quadrature with successive doubling.

use crate::error::{Error, Result};

/// Outcome of a refined Simpson integration, with the final nodes and
/// integrand values kept for reuse.
#[derive(Debug, Clone)]
pub struct Refined {
    pub value: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub doublings: usize,
}

/// Composite Simpson rule over equally spaced samples (odd count).
pub fn simpson_weights_sum(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut s = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * h / 3.0
}

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_nodes: usize) -> f64 {
    let n = if n_nodes % 2 == 0 { n_nodes + 1 } else { n_nodes.max(3) };
    let h = (b - a) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|i| f(a + i as f64 * h)).collect();
    simpson_weights_sum(&values, h)
}

/// Simpson on `[a, b]` starting at `n_nodes`, doubling the interval count
/// until the relative change falls below `rel_tol`.
pub fn simpson_refine<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    n_nodes: usize,
    rel_tol: f64,
    max_doublings: usize,
) -> Result<Refined> {
    let n = if n_nodes % 2 == 0 { n_nodes + 1 } else { n_nodes.max(3) };
    let mut h = (b - a) / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
    let mut values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    let mut value = simpson_weights_sum(&values, h);
    for doubling in 1..=max_doublings {
        h *= 0.5;
        let m = 2 * (nodes.len() - 1) + 1;
        let mut new_nodes = Vec::with_capacity(m);
        let mut new_values = Vec::with_capacity(m);
        for i in 0..nodes.len() {
            new_nodes.push(nodes[i]);
            new_values.push(values[i]);
            if i + 1 < nodes.len() {
                let x = a + (2 * i + 1) as f64 * h;
                new_nodes.push(x);
                new_values.push(f(x));
            }
        }
        nodes = new_nodes;
        values = new_values;
        let next = simpson_weights_sum(&values, h);
        let change = (next - value).abs() / next.abs().max(f64::MIN_POSITIVE);
        value = next;
        if change < rel_tol {
            return Ok(Refined {
                value,
                nodes,
                values,
                doublings: doubling,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "Simpson quadrature did not settle to relative change {rel_tol} after {max_doublings} doublings"
    )))
}
