//! Quadrature rules shared by the geometry and solution samplers.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// Gauss–Legendre nodes and weights mapped to `[a, b]`, sorted by node.
pub fn gauss_legendre(count: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let count = NonZeroUsize::new(count.max(1)).unwrap();
    let rule = GaussLegendre::new(count);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

/// Equispaced periodic trapezoid nodes on `[0, 2π)` with equal weights.
pub fn periodic_trapezoid(count: usize) -> Vec<(f64, f64)> {
    let w = std::f64::consts::TAU / count as f64;
    (0..count).map(|j| (j as f64 * w, w)).collect()
}
