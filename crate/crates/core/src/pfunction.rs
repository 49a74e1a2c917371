//! The P-function `P = |∇u|²/2 − u`, the linearized operator
//! `L[v] = S_k^{ij}(D²u) v_ij`, and the identities for `h = |x−z|²/2 − u`.

use crate::error::{Error, Result};
use crate::solver::{SampledSolution, SolutionField};
use crate::symfun::{binomial, elementary_symmetric, elementary_symmetric_without, sk_ij, SymMatrix};
use serde::{Deserialize, Serialize};

/// Nonnegativity tolerance for `L[P]` on finite-difference solutions.
pub const TOL_POS_FD: f64 = 1e-6;
/// Nonnegativity tolerance for `L[P]` on closed-form solutions.
pub const TOL_POS_EXACT: f64 = 1e-12;
/// Nodes at least this fraction of the inradius away from the boundary are
/// used for cross-checks between discrete and algebraic forms.
pub const DEEP_FRACTION: f64 = 0.2;
/// Cross-check bound `C h²` between the two evaluations of `L[P]`.
pub const CROSS_CHECK_CONST: f64 = 50.0;

/// `L[P] = Δu S_k − (k+1) S_{k+1} − k S_k` on `D²u = a`.
/// For `k = n` the middle term vanishes.
pub fn lp_closed_form(a: &SymMatrix, k: usize) -> f64 {
    let e = a.eigenvalues();
    let sk = elementary_symmetric(&e, k);
    a.trace() * sk - (k + 1) as f64 * elementary_symmetric(&e, k + 1) - k as f64 * sk
}

/// `L[P] = Σ_i S_{k−1}(λ|i) λ_i² − k S_k` from the eigenvalues.
pub fn lp_diagonal_form(eigs: &[f64], k: usize) -> f64 {
    let s: f64 = (0..eigs.len())
        .map(|i| elementary_symmetric_without(eigs, i, k - 1) * eigs[i] * eigs[i])
        .sum();
    s - k as f64 * elementary_symmetric(eigs, k)
}

/// `L[P] = S_k^{ij} u_li u_lj − k S_k`, the tensor form.
pub fn lp_tensor_form(a: &SymMatrix, k: usize) -> Result<f64> {
    let t = sk_ij(a, k)?;
    let a2 = a.matmul(a);
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += t.get(i, j) * a2[(i, j)];
        }
    }
    Ok(s - k as f64 * elementary_symmetric(&a.eigenvalues(), k))
}

/// `L[h] = (n−k+1) S_{k−1} − k S_k` on `D²u = a`, with `h = |x−z|²/2 − u`.
pub fn lh_closed_form(a: &SymMatrix, k: usize) -> f64 {
    let e = a.eigenvalues();
    let n = a.dim();
    (n - k + 1) as f64 * elementary_symmetric(&e, k - 1) - k as f64 * elementary_symmetric(&e, k)
}

/// `L[|∇h|²/2] = S_k^{ij} h_li h_lj`, valid when `S_k(D²u)` is constant.
pub fn l_half_grad_h_sq(a: &SymMatrix, k: usize) -> Result<f64> {
    let n = a.dim();
    let dh = SymMatrix::identity(n).sub(a);
    let t = sk_ij(a, k)?;
    let m = dh.matmul(&dh);
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += t.get(i, j) * m[(i, j)];
        }
    }
    Ok(s)
}

#[inline]
fn tensor2(k: usize, d: [f64; 3]) -> [f64; 3] {
    if k == 1 { [1.0, 0.0, 1.0] } else { [d[2], -d[1], d[0]] }
}

#[inline]
fn contract2(t: [f64; 3], v: [f64; 3]) -> f64 {
    t[0] * v[0] + 2.0 * t[1] * v[1] + t[2] * v[2]
}

fn hess_of(d: [f64; 3]) -> SymMatrix {
    SymMatrix::new(2, vec![d[0], d[1], d[1], d[2]]).expect("finite Hessian")
}

/// `L[v]` at every inside node (zero elsewhere) for a nodal field `v`.
pub fn apply_l(sol: &SolutionField, v: &[f64]) -> Result<Vec<f64>> {
    if !sol.converged {
        return Err(Error::Unconverged);
    }
    let mut out = vec![0.0; v.len()];
    for p in sol.inside_nodes() {
        let d2v = sol.field_hessian(p, v)?;
        out[p] = contract2(tensor2(sol.k, sol.hess[p]), d2v);
    }
    Ok(out)
}

fn deep_nodes(sol: &SolutionField) -> Vec<usize> {
    let dist: Vec<(usize, f64)> = sol
        .inside_nodes()
        .map(|p| (p, sol.domain.boundary_distance(&sol.grid.point(p))))
        .collect();
    let inr = dist.iter().map(|d| d.1).fold(0.0, f64::max);
    let depth = (DEEP_FRACTION * inr).max(4.0 * sol.h());
    dist.into_iter().filter(|d| d.1 >= depth).map(|d| d.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PFields {
    /// Grid indices of the inside nodes, aligned with the per-node vectors.
    pub nodes: Vec<usize>,
    pub p: Vec<f64>,
    /// `L[P]` from the closed form in `D²u_h`.
    pub lp_algebraic: Vec<f64>,
    /// `L[P]` from discrete second differences of the nodal `P`.
    pub lp_direct: Vec<f64>,
    pub min_lp: f64,
    pub max_lp: f64,
    /// Largest `|direct − algebraic|` over deep nodes.
    pub cross_discrepancy: f64,
    pub cross_bound: f64,
    pub deep_nodes: usize,
    pub lambda: f64,
    pub lambda_max: f64,
}

/// `L[P]` two ways, cross-checked on deep nodes.
pub fn lp_field(sol: &SolutionField) -> Result<PFields> {
    if !sol.converged {
        return Err(Error::Unconverged);
    }
    let mut pv = vec![0.0; sol.u.len()];
    let nodes: Vec<usize> = sol.inside_nodes().collect();
    for &q in &nodes {
        let g = sol.grad[q];
        pv[q] = 0.5 * (g[0] * g[0] + g[1] * g[1]) - sol.u[q];
    }
    let direct = apply_l(sol, &pv)?;
    let alg: Vec<f64> = nodes.iter().map(|&q| lp_closed_form(&hess_of(sol.hess[q]), sol.k)).collect();
    let deep = deep_nodes(sol);
    let pos: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let scale = alg.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let disc = deep.iter().map(|q| (direct[*q] - alg[pos[q]]).abs()).fold(0.0, f64::max);
    let bound = CROSS_CHECK_CONST * sol.h() * sol.h() * scale + 1e-9;
    if disc > bound {
        return Err(Error::Consistency(format!(
            "discrete and closed-form L[P] differ by {disc:.3e} on deep nodes (bound {bound:.3e})"
        )));
    }
    let (lambda, lambda_max) = ellipticity_bounds(sol)?;
    Ok(PFields {
        p: nodes.iter().map(|&q| pv[q]).collect(),
        lp_direct: nodes.iter().map(|&q| direct[q]).collect(),
        min_lp: alg.iter().copied().fold(f64::INFINITY, f64::min),
        max_lp: alg.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lp_algebraic: alg,
        nodes,
        cross_discrepancy: disc,
        cross_bound: bound,
        deep_nodes: deep.len(),
        lambda,
        lambda_max,
    })
}

/// Extreme eigenvalues of `S_k^{ij}(D²u_h)` over inside nodes.
pub fn ellipticity_bounds(sol: &SolutionField) -> Result<(f64, f64)> {
    if !sol.converged {
        return Err(Error::Unconverged);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in sol.inside_nodes() {
        let t = tensor2(sol.k, sol.hess[p]);
        let e = hess_of(t).eigenvalues();
        lo = lo.min(e[0]);
        hi = hi.max(e[1]);
    }
    if !(lo > 0.0) {
        return Err(Error::Cone(format!("smallest ellipticity eigenvalue {lo:.3e} is not positive")));
    }
    Ok((lo, hi))
}

/// Extreme eigenvalues of `S_k^{ij}` over the volume samples of a sampled solution.
pub fn ellipticity_bounds_sampled(s: &SampledSolution) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &s.volume {
        let e = sk_ij(&v.hess, s.k)?.eigenvalues();
        lo = lo.min(e[0]);
        hi = hi.max(e[e.len() - 1]);
    }
    if !(lo > 0.0) {
        return Err(Error::Cone(format!("smallest ellipticity eigenvalue {lo:.3e} is not positive")));
    }
    Ok((lo, hi))
}

/// Range of the closed-form `L[P]` over the volume samples.
pub fn lp_range_sampled(s: &SampledSolution) -> (f64, f64) {
    s.volume.iter().map(|v| lp_closed_form(&v.hess, s.k)).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(a, b), x| (a.min(x), b.max(x)),
    )
}

/// Residuals of the two identities for `h = |x−z|²/2 − u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HReport {
    pub z: Vec<f64>,
    /// `max |L[h] − ((n−k+1)S_{k−1} − kS_k)|` with `L[h]` from discrete differences.
    pub i_residual: f64,
    /// `max |S^{ij}h_li h_lj − L[h] − L[P]|` in the second-order form.
    pub ii_algebraic_residual: f64,
    /// Same identity with `L[|∇h|²/2]` from discrete differences of the nodal field.
    pub ii_direct_residual: f64,
    /// Range of `L[h]` over deep nodes.
    pub lh_min: f64,
    pub lh_max: f64,
    pub deep_nodes: usize,
    pub bound: f64,
    pub pass: bool,
}

/// Both identities evaluated on deep nodes, where the discrete operators are
/// centered.
pub fn h_identities(sol: &SolutionField, z: &[f64]) -> Result<HReport> {
    if !sol.converged {
        return Err(Error::Unconverged);
    }
    let k = sol.k;
    let len = sol.u.len();
    let mut hv = vec![0.0; len];
    let mut g2 = vec![0.0; len];
    for p in sol.inside_nodes() {
        let x = sol.grid.point(p);
        let (dx, dy) = (x[0] - z[0], x[1] - z[1]);
        hv[p] = 0.5 * (dx * dx + dy * dy) - sol.u[p];
        let (hx, hy) = (dx - sol.grad[p][0], dy - sol.grad[p][1]);
        g2[p] = 0.5 * (hx * hx + hy * hy);
    }
    let lh = apply_l(sol, &hv)?;
    let lg = apply_l(sol, &g2)?;
    let deep = deep_nodes(sol);
    let mut r1: f64 = 0.0;
    let mut r2a: f64 = 0.0;
    let mut r2d: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut scale: f64 = 1.0;
    for &p in &deep {
        let a = hess_of(sol.hess[p]);
        let want = lh_closed_form(&a, k);
        let lp = lp_closed_form(&a, k);
        scale = scale.max(want.abs()).max(lp.abs());
        r1 = r1.max((lh[p] - want).abs());
        r2a = r2a.max((l_half_grad_h_sq(&a, k)? - want - lp).abs());
        r2d = r2d.max((lg[p] - lh[p] - lp).abs());
        lo = lo.min(lh[p]);
        hi = hi.max(lh[p]);
    }
    let bound = CROSS_CHECK_CONST * sol.h() * sol.h() * scale + 1e-9;
    Ok(HReport {
        z: z.to_vec(),
        i_residual: r1,
        ii_algebraic_residual: r2a,
        ii_direct_residual: r2d,
        lh_min: lo,
        lh_max: hi,
        deep_nodes: deep.len(),
        bound,
        pass: r1 <= bound && r2a <= 1e-10 * scale && r2d <= bound,
    })
}

/// Algebraic `h`-identity residuals over the volume samples of a sampled
/// solution, for fixtures in any dimension.
pub fn h_identities_sampled(s: &SampledSolution) -> Result<(f64, f64)> {
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    for v in &s.volume {
        let n = v.hess.dim();
        let e = v.hess.eigenvalues();
        let want = (n - s.k + 1) as f64 * elementary_symmetric(&e, s.k - 1)
            - s.k as f64 * elementary_symmetric(&e, s.k);
        let t = sk_ij(&v.hess, s.k)?;
        let dh = SymMatrix::identity(n).sub(&v.hess);
        let lh = t.contract(&dh);
        r1 = r1.max((lh - want).abs());
        r2 = r2.max((l_half_grad_h_sq(&v.hess, s.k)? - lh - lp_closed_form(&v.hess, s.k)).abs());
    }
    Ok((r1, r2))
}

/// `S_k^{ij}(I) = C(n−1, k−1) I`.
pub fn ellipticity_at_identity(n: usize, k: usize) -> f64 {
    binomial(n - 1, k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_values() {
        let a1 = SymMatrix::from_diagonal(&[0.4, 1.6]);
        assert!((lp_closed_form(&a1, 1) - 0.72).abs() < 1e-14);
        let a2 = SymMatrix::from_diagonal(&[0.5, 2.0]);
        assert!((lp_closed_form(&a2, 2) - 0.5).abs() < 1e-14);
        assert!((lh_closed_form(&a2, 2) - 0.5).abs() < 1e-14);
        assert!((l_half_grad_h_sq(&a2, 2).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_is_critical() {
        for n in 1..=5 {
            for k in 1..=n {
                let i = SymMatrix::identity(n);
                assert!(lp_closed_form(&i, k).abs() < 1e-12);
                assert!(lh_closed_form(&i, k).abs() < 1e-12);
            }
        }
    }
}
