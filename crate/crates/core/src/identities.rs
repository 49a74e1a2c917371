//! Quadrature residuals of the integral identities and inequalities satisfied
//! by solutions of `S_k(D²u) = f`, `u = 0` on the boundary.

use crate::error::{invalid, Error, Result};
use crate::geometry::{hk_sample, quermassintegral, DomainConstants};
use crate::pfunction::{l_half_grad_h_sq, lp_closed_form};
use crate::solver::SampledSolution;
use crate::symfun::{binomial, elementary_symmetric, newton_deficit, sk_ij};
use serde::{Deserialize, Serialize};

/// Default relative tolerance for identity reports.
pub const IDENTITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

fn term(name: &str, value: f64) -> Term {
    Term { name: name.into(), value }
}

/// Both sides of an identity, term by term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub lhs_terms: Vec<Term>,
    pub rhs_terms: Vec<Term>,
    pub lhs: f64,
    pub rhs: f64,
    /// `|Σ lhs − Σ rhs|`.
    pub residual: f64,
    /// `residual / scale`.
    pub rel_residual: f64,
    /// Largest term magnitude, floored by `∫(−u)`.
    pub scale: f64,
    pub tol: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(name: &str, lhs_terms: Vec<Term>, rhs_terms: Vec<Term>, floor: f64, tol: f64) -> Self {
        let lhs: f64 = lhs_terms.iter().map(|t| t.value).sum();
        let rhs: f64 = rhs_terms.iter().map(|t| t.value).sum();
        let residual = (lhs - rhs).abs();
        let scale = lhs_terms
            .iter()
            .chain(&rhs_terms)
            .map(|t| t.value.abs())
            .fold(floor.abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        let rel_residual = residual / scale;
        Self {
            name: name.into(),
            lhs_terms,
            rhs_terms,
            lhs,
            rhs,
            residual,
            rel_residual,
            scale,
            tol,
            pass: rel_residual <= tol,
        }
    }
}

/// The volume and boundary deficits of the SBT identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitPair {
    /// `∫ [1 − S_{k+1}(D²u)/C(n,k+1)]`.
    pub d1: f64,
    /// `R^{−k} ∫ |∇u|^{k+1} − ∫ |∇u|`.
    pub d2: f64,
    /// Smallest pointwise Newton deficit `(S_k/C)^{(k+1)/k} − S_{k+1}/C` over
    /// samples where `D²u` lies in `Γ_{k+1}`.
    pub d1_integrand_min: f64,
}

fn neg_u_integral(s: &SampledSolution) -> f64 {
    s.integrate_volume(|v| -v.u)
}

fn check_k(s: &SampledSolution) -> Result<()> {
    if s.k == 0 || s.k > s.n {
        return invalid(format!("k = {} exceeds ambient dimension {}", s.k, s.n));
    }
    Ok(())
}

/// Pohozaev identity in general form, plus the simplified constant-`f` form
/// when `f ≡ C(n,k)`.
pub fn pohozaev_residual(s: &SampledSolution, tol: f64) -> Result<Vec<IdentityReport>> {
    check_k(s)?;
    let (n, k) = (s.n, s.k);
    let nf = n as f64;
    let kf = k as f64;
    let floor = neg_u_integral(s);
    let mut out = Vec::new();
    if s.rhs.antiderivative(0.0).is_some() {
        let energy = s.integrate_volume(|v| {
            let t = sk_ij(&v.hess, k).expect("k validated");
            t.bilinear(&v.grad, &v.grad)
        });
        let vol = (nf - 2.0 * kf) / (kf * (kf + 1.0)) * energy;
        let bnd = binomial(n - 1, k - 1) / (kf + 1.0)
            * s.integrate_boundary(|b, g| hk_sample(b, k - 1) * b.support * g.powi(k as i32 + 1));
        let rhs = nf * s.integrate_volume(|v| s.rhs.antiderivative(v.u).unwrap());
        out.push(IdentityReport::new(
            "pohozaev_general",
            vec![term("(n-2k)/(k(k+1)) int S^ij u_i u_j", vol), term("C(n-1,k-1)/(k+1) int H_{k-1}<x,nu>|Du|^{k+1}", bnd)],
            vec![term("n int F(u)", rhs)],
            floor,
            tol,
        ));
    } else {
        return invalid("Pohozaev identity needs a right-hand side depending on u only");
    }
    if s.rhs.constant_value().is_some_and(|c| c == binomial(n, k)) {
        let bnd = s.integrate_boundary(|b, g| hk_sample(b, k - 1) * b.support * g.powi(k as i32 + 1))
            / (nf * (nf + 2.0));
        out.push(IdentityReport::new(
            "pohozaev",
            vec![term("int(-u)", floor)],
            vec![term("1/(n(n+2)) int H_{k-1}<x,nu>|Du|^{k+1}", bnd)],
            floor,
            tol,
        ));
    }
    Ok(out)
}

fn require_torsion(s: &SampledSolution) -> Result<f64> {
    check_k(s)?;
    let c = binomial(s.n, s.k);
    match s.rhs.constant_value() {
        Some(v) if v == c => Ok(c),
        _ => Err(Error::Validation(format!("identity needs the right-hand side C(n,k) = {c}"))),
    }
}

/// Fundamental identity for the Serrin problem; for `k = n` the reduced form
/// with prefactor `1/(n+2)`.
pub fn serrin_fundamental_residual(s: &SampledSolution, tol: f64) -> Result<IdentityReport> {
    let c = require_torsion(s)?;
    let (n, k) = (s.n, s.k);
    let (nf, kf) = (n as f64, k as f64);
    let floor = neg_u_integral(s);
    let wlp = s.integrate_volume(|v| -v.u * lp_closed_form(&v.hess, k));
    let bnd = |b: &crate::geometry::BoundarySample, g: f64| {
        hk_sample(b, k - 1) * g.powi(k as i32 + 1) * (g - b.support)
    };
    if k < n {
        let defect = s.integrate_volume(|v| {
            let sk = elementary_symmetric(&v.hess.eigenvalues(), k);
            -v.u * (v.hess.trace() / nf - sk / c)
        });
        Ok(IdentityReport::new(
            "serrin_fundamental",
            vec![
                term("(2/k)/C(n,k) int(-u) L[P]", 2.0 / (kf * c) * wlp),
                term("n int(-u)[Du/n - S_k/C(n,k)]", nf * defect),
            ],
            vec![term("1/n int H_{k-1}|Du|^{k+1}(|Du|-<x,nu>)", s.integrate_boundary(bnd) / nf)],
            floor,
            tol,
        ))
    } else {
        Ok(IdentityReport::new(
            "serrin_fundamental_n",
            vec![term("int(-u) L[P]", wlp)],
            vec![term("1/(n+2) int H_{n-1}|Du|^{n+1}(|Du|-<x,nu>)", s.integrate_boundary(bnd) / (nf + 2.0))],
            floor,
            tol,
        ))
    }
}

/// The SBT fundamental identity, its rewritten variant, and the deficits.
///
/// `H_k` is taken as 0 when `k = n`, which keeps every term defined.
pub fn sbt_identity_residual(
    s: &SampledSolution,
    tol: f64,
) -> Result<(IdentityReport, IdentityReport, DeficitPair)> {
    let c = require_torsion(s)?;
    let (n, k) = (s.n, s.k);
    let kf = k as f64;
    let floor = neg_u_integral(s);
    let r = s.boundary_gradient().r;
    let lp = s.integrate_volume(|v| lp_closed_form(&v.hess, k)) / c;
    let ck1 = binomial(n, k + 1);
    let d1 = s.integrate_volume(|v| {
        let s1 = if k < n { elementary_symmetric(&v.hess.eigenvalues(), k + 1) / ck1 } else { 0.0 };
        1.0 - s1
    });
    let grad_k1 = s.integrate_boundary(|_, g| g.powi(k as i32 + 1));
    let grad_1 = s.integrate_boundary(|_, g| g);
    let d2 = grad_k1 / r.powi(k as i32) - grad_1;
    let rhs = s.integrate_boundary(|b, g| (r.powi(-(k as i32)) - hk_sample(b, k)) * g.powi(k as i32 + 1));
    let main = IdentityReport::new(
        "sbt_fundamental",
        vec![term("int L[P]/C(n,k)", lp), term("k D1", kf * d1), term("D2", d2)],
        vec![term("int (R^-k - H_k)|Du|^{k+1}", rhs)],
        floor,
        tol,
    );
    let rhs2 = s.integrate_boundary(|b, g| (1.0 - hk_sample(b, k) * g.powi(k as i32)) * g);
    let variant = IdentityReport::new(
        "sbt_rewritten",
        vec![term("int L[P]/C(n,k)", lp), term("k D1", kf * d1)],
        vec![term("int (1 - H_k|Du|^k)|Du|", rhs2)],
        floor,
        tol,
    );
    let mut dmin = f64::INFINITY;
    for v in &s.volume {
        let e = v.hess.eigenvalues();
        let in_cone = (1..=(k + 1).min(n)).all(|j| elementary_symmetric(&e, j) >= -crate::symfun::CONE_TOL);
        if in_cone {
            dmin = dmin.min(newton_deficit(&e, k));
        }
    }
    Ok((main, variant, DeficitPair { d1, d2, d1_integrand_min: dmin }))
}

/// A chain of inequalities `a_0 <= a_1 <= ...` with its gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityChain {
    pub name: String,
    pub values: Vec<Term>,
    /// `a_{i+1} − a_i`.
    pub gaps: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl InequalityChain {
    pub fn new(name: &str, values: Vec<Term>, tol: f64) -> Self {
        let gaps: Vec<f64> = values.windows(2).map(|w| w[1].value - w[0].value).collect();
        let scale = values.iter().map(|t| t.value.abs()).fold(1.0, f64::max);
        let pass = gaps.iter().all(|&g| g >= -tol * scale);
        Self { name: name.into(), values, gaps, tol, pass }
    }
}

/// The chain `∫(−u)L[|∇h|²/2]·(2/k)/C ≤ boundary terms ≤ W_k R^k (2R + d(k+2)) δ`.
///
/// For `k = 1` the second boundary term is identically zero.
pub fn dish_inequality(s: &SampledSolution, constants: &DomainConstants, tol: f64) -> Result<InequalityChain> {
    let c = require_torsion(s)?;
    let (n, k) = (s.n, s.k);
    let (nf, kf) = (n as f64, k as f64);
    let bg = s.boundary_gradient();
    let lhs = 2.0 / (kf * c)
        * s.integrate_volume(|v| -v.u * l_half_grad_h_sq(&v.hess, k).expect("k validated"));
    let b1 = s.integrate_boundary(|b, g| hk_sample(b, k - 1) * g.powi(k as i32 + 1) * (g - b.support)) / nf;
    let b2 = if k >= 2 {
        let m = bg.max;
        m * m / nf * s.integrate_boundary(|b, g| hk_sample(b, k - 2) * g.powi(k as i32 - 1) - b.support)
    } else {
        0.0
    };
    let wk = quermassintegral(&s.trace, k)?;
    let r = bg.r;
    let bound = wk * r.powi(k as i32) * (2.0 * r + constants.diameter * (kf + 2.0)) * bg.deviation;
    Ok(InequalityChain::new(
        "dish",
        vec![term("(2/k)/C(n,k) int(-u) L[|Dh|^2/2]", lhs), term("boundary terms", b1 + b2), term("W_k R^k (2R + d(k+2)) delta", bound)],
        tol,
    ))
}

/// `R^{k+2} W_k − R² |Ω|`, which vanishes on balls.
pub fn rigidity_gap(s: &SampledSolution) -> Result<f64> {
    let r = s.boundary_gradient().r;
    let wk = quermassintegral(&s.trace, s.k)?;
    Ok(r.powi(s.k as i32 + 2) * wk - r * r * s.trace.volume)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_arithmetic() {
        let r = IdentityReport::new("x", vec![term("a", 1.0), term("b", 2.0)], vec![term("c", 3.0 + 1e-9)], 0.0, 1e-6);
        assert!(r.pass);
        assert!((r.residual - 1e-9).abs() < 1e-15);
        assert!((r.rel_residual - r.residual / 3.000000001).abs() < 1e-18);
    }

    #[test]
    fn chain_gaps() {
        let c = InequalityChain::new("c", vec![term("a", 0.0), term("b", 1.0), term("c", 0.5)], 1e-9);
        assert!(!c.pass);
        assert_eq!(c.gaps, vec![1.0, -0.5]);
    }
}
