//! Stability sweeps over shape families, the bubbling analysis and the
//! Sobolev–Poincaré / interpolation probes.

use std::f64::consts::E;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    dist, domain_constants, hk_sample, inscribed_center, omega, BoundaryTrace, DomainConstants, Shape,
    StarDomain,
};
use crate::identities::{dish_inequality, InequalityChain, IDENTITY_TOL};
use crate::quadrature::gauss_legendre;
use crate::solver::{solve_hessian_2d, SampledSolution};
use crate::symfun::SymMatrix;

/// Column order of the sweep CSV.
pub const CSV_COLUMNS: [&str; 14] = [
    "shape_id",
    "eps",
    "k",
    "delta_serrin",
    "delta_sbt",
    "rho_gap",
    "l2_aniso",
    "R",
    "Rhat",
    "M",
    "r_i",
    "d",
    "fit_C",
    "fit_slope",
];

/// One family member. Quantities that a given sweep does not compute are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub shape_id: String,
    pub eps: f64,
    pub k: usize,
    /// `‖|∇u| − R‖_∞` on the boundary.
    pub delta_serrin: f64,
    /// `∫ (1/R̂^k − H_k)^+ dσ`.
    pub delta_sbt: f64,
    pub rho_gap: f64,
    /// `‖|x − z| − R̂‖_{L²(∂Ω)}`.
    pub l2_aniso: f64,
    pub r: f64,
    pub rhat: f64,
    /// `max |∇u|`.
    pub m: f64,
    pub r_i: f64,
    pub d: f64,
    pub fit_c: f64,
    pub fit_slope: f64,
    pub constants: DomainConstants,
}

impl SweepRecord {
    /// Numeric columns in CSV order, after `shape_id`.
    pub fn numeric_columns(&self) -> [f64; 13] {
        [
            self.eps,
            self.k as f64,
            self.delta_serrin,
            self.delta_sbt,
            self.rho_gap,
            self.l2_aniso,
            self.r,
            self.rhat,
            self.m,
            self.r_i,
            self.d,
            self.fit_c,
            self.fit_slope,
        ]
    }
}

fn shape_id(dom: &StarDomain, i: usize) -> String {
    dom.label.clone().unwrap_or_else(|| format!("shape{i:03}"))
}

/// `∫ (1/R̂^k − H_k)^+ dσ`. Only defined for `k ≤ n − 1`.
pub fn sbt_deficit(trace: &BoundaryTrace, k: usize) -> Result<f64> {
    check_curvature_order(trace.n, k)?;
    let target = rhat(trace).powi(-(k as i32));
    Ok(trace.integrate(|s| (target - hk_sample(s, k)).max(0.0)))
}

fn check_curvature_order(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return invalid(format!("curvature order k = {k} must lie in 1..={}", n - 1));
    }
    Ok(())
}

fn rhat(trace: &BoundaryTrace) -> f64 {
    trace.n as f64 * trace.volume / trace.perimeter
}

/// `‖|x − z| − R̂‖_{L²(∂Ω)}`; for surfaces of revolution `z` must lie on the axis.
pub fn l2_anisotropy(trace: &BoundaryTrace, z: &[f64], rhat: f64) -> f64 {
    trace.integrate(|s| (dist(&s.point, z) - rhat).powi(2)).sqrt()
}

/// Least-squares power law `y ≈ e^b x^a` with leave-one-out robustness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    /// Slope refitted with each point removed, in input order.
    pub loo_slopes: Vec<f64>,
    pub loo_max_change: f64,
}

fn ls_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Fits `log y` against `log x` over the pairs with both entries above `floor`.
pub fn power_fit(pairs: &[(f64, f64)], floor: f64) -> Option<PowerFit> {
    let pts: Vec<(f64, f64)> =
        pairs.iter().filter(|p| p.0 > floor && p.1 > floor).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (slope, intercept) = ls_slope(&pts);
    let loo_slopes: Vec<f64> = if pts.len() >= 3 {
        (0..pts.len())
            .map(|i| {
                let rest: Vec<_> = pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
                ls_slope(&rest).0
            })
            .collect()
    } else {
        Vec::new()
    };
    let loo_max_change = loo_slopes.iter().map(|s| (s - slope).abs()).fold(0.0, f64::max);
    Some(PowerFit { slope, intercept, points: pts.len(), loo_slopes, loo_max_change })
}

/// Family constant for `y ≤ C x^{1/2}`: the largest ratio and the spread
/// (max/min) of the ratios over the members with `x > floor`.
fn half_power_constant(pairs: &[(f64, f64)], floor: f64) -> (f64, f64) {
    let ratios: Vec<f64> = pairs.iter().filter(|p| p.0 > floor).map(|p| p.1 / p.0.sqrt()).collect();
    if ratios.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    (hi, hi / lo)
}

/// Deficits below this are treated as zero in fits.
pub const FIT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerrinOptions {
    pub h: f64,
    /// Boundary trace samples.
    pub m: usize,
    pub tol: f64,
}

impl Default for SerrinOptions {
    fn default() -> Self {
        Self { h: 1.0 / 64.0, m: 1024, tol: IDENTITY_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMember {
    pub shape_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerrinMember {
    pub record: SweepRecord,
    pub dish: InequalityChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerrinSweep {
    pub k: usize,
    pub members: Vec<SerrinMember>,
    pub skipped: Vec<SkippedMember>,
    /// Fit of `log(ρ_e − ρ_i)` against `log δ`.
    pub fit: Option<PowerFit>,
    /// Smallest `C` with `ρ_e − ρ_i ≤ C δ^{1/2}` on the family.
    pub fit_c: f64,
    pub fit_c_spread: f64,
}

impl SerrinSweep {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.members.iter().map(|m| m.record.clone()).collect()
    }

    pub fn dish_all_pass(&self) -> bool {
        self.members.iter().all(|m| m.dish.pass)
    }
}

fn serrin_member(dom: &StarDomain, id: String, k: usize, opts: &SerrinOptions) -> Result<SerrinMember> {
    let sol = solve_hessian_2d(dom, k, opts.h)?;
    let s = sol.sample(opts.m)?;
    let bg = s.boundary_gradient();
    let z = s.min.z.clone();
    let constants = domain_constants(dom, &s.trace, &z)?;
    let dish = dish_inequality(&s, &constants, opts.tol)?;
    let delta_sbt = if k < s.n { sbt_deficit(&s.trace, k)? } else { f64::NAN };
    let record = SweepRecord {
        shape_id: id,
        eps: dom.eps.unwrap_or(f64::NAN),
        k,
        delta_serrin: bg.deviation,
        delta_sbt,
        rho_gap: constants.rho_e - constants.rho_i,
        l2_aniso: l2_anisotropy(&s.trace, &z, bg.rhat),
        r: bg.r,
        rhat: bg.rhat,
        m: bg.max,
        r_i: constants.r_i,
        d: constants.diameter,
        fit_c: f64::NAN,
        fit_slope: f64::NAN,
        constants,
    };
    Ok(SerrinMember { record, dish })
}

/// Solves on every member in parallel and fits the deficit exponent. Members
/// where the solver fails are skipped and listed.
pub fn serrin_sweep(family: &[StarDomain], k: usize, opts: &SerrinOptions) -> SerrinSweep {
    let results: Vec<(String, Result<SerrinMember>)> = family
        .par_iter()
        .enumerate()
        .map(|(i, dom)| {
            let id = shape_id(dom, i);
            (id.clone(), serrin_member(dom, id, k, opts))
        })
        .collect();
    let mut members = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results {
        match r {
            Ok(m) => members.push(m),
            Err(e) => skipped.push(SkippedMember { shape_id: id, reason: e.to_string() }),
        }
    }
    let pairs: Vec<(f64, f64)> = members.iter().map(|m| (m.record.delta_serrin, m.record.rho_gap)).collect();
    let fit = power_fit(&pairs, FIT_FLOOR);
    let (fit_c, fit_c_spread) = half_power_constant(&pairs, FIT_FLOOR);
    for m in &mut members {
        m.record.fit_c = fit_c;
        m.record.fit_slope = fit.as_ref().map_or(f64::NAN, |f| f.slope);
    }
    SerrinSweep { k, members, skipped, fit, fit_c, fit_c_spread }
}

/// Choice of the reference point for the geometric sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZRule {
    #[default]
    InscribedCenter,
    Centroid,
}

/// Center of the largest inscribed ball; on the axis for surfaces of revolution.
pub fn reference_point(dom: &StarDomain, rule: ZRule) -> Result<Vec<f64>> {
    let c = dom.center().to_vec();
    match (rule, dom.shape()) {
        (_, Shape::Ball { .. }) | (_, Shape::Dumbbell(_)) => Ok(c),
        (ZRule::InscribedCenter, Shape::Revolution(_)) => {
            let (lo, hi) = dom.bbox();
            let at = |t: f64| vec![c[0], c[1], t];
            let f = |t: f64| if dom.contains(&at(t)) { dom.boundary_distance(&at(t)) } else { -1.0 };
            let (mut a, mut b) = (lo[2], hi[2]);
            let grid = 64;
            let mut best = c[2];
            for i in 0..=grid {
                let t = a + (b - a) * i as f64 / grid as f64;
                if f(t) > f(best) {
                    best = t;
                }
            }
            let step = (b - a) / grid as f64;
            a = best - step;
            b = best + step;
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let x1 = b - g * (b - a);
                let x2 = a + g * (b - a);
                if f(x1) >= f(x2) {
                    b = x2;
                } else {
                    a = x1;
                }
            }
            Ok(at(0.5 * (a + b)))
        }
        (ZRule::InscribedCenter, Shape::Curve(_)) => Ok(inscribed_center(dom)),
        (ZRule::Centroid, Shape::Curve(p)) => {
            let nodes = 4096;
            let (mut mx, mut my, mut area) = (0.0, 0.0, 0.0);
            for i in 0..nodes {
                let t = std::f64::consts::TAU * i as f64 / nodes as f64;
                let r = p.rho(t);
                area += r * r / 2.0;
                mx += r.powi(3) / 3.0 * t.cos();
                my += r.powi(3) / 3.0 * t.sin();
            }
            Ok(vec![c[0] + mx / area, c[1] + my / area])
        }
        (ZRule::Centroid, Shape::Revolution(p)) => {
            let (mut mz, mut vol) = (0.0, 0.0);
            for (phi, w) in gauss_legendre(256, 0.0, std::f64::consts::PI) {
                let r = p.rho(phi);
                vol += w * r.powi(3) / 3.0 * phi.sin();
                mz += w * r.powi(4) / 4.0 * phi.cos() * phi.sin();
            }
            Ok(vec![c[0], c[1], c[2] + mz / vol])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbtOptions {
    pub m: usize,
    pub z_rule: ZRule,
    /// Grid spacing for the optional torsion solve behind the gradient bound.
    pub solve_h: Option<f64>,
    pub tol: f64,
}

impl Default for SbtOptions {
    fn default() -> Self {
        Self { m: 1024, z_rule: ZRule::InscribedCenter, solve_h: None, tol: 1e-12 }
    }
}

/// `M² ≤ 2n max(−u) ≤ n d²` for the torsion solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBound {
    pub m_sq: f64,
    pub two_n_max_u: f64,
    pub n_d_sq: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbtMember {
    pub record: SweepRecord,
    /// Samples where `(1/R̂ − H)^+ ≤ (1/R̂ − H_k^{1/k})^+ ≤ R̂^{k−1}(1/R̂^k − H_k)^+` fails.
    pub chain_violations: usize,
    pub chain_samples: usize,
    /// Most negative link gap over all samples.
    pub chain_min_gap: f64,
    pub gradient_bound: Option<GradientBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbtSweep {
    pub k: usize,
    pub z_rule: ZRule,
    pub members: Vec<SbtMember>,
    pub rejected: Vec<SkippedMember>,
    /// Smallest `C` with anisotropy `≤ C δ_sbt^{1/2}` on the family.
    pub fit_c: f64,
    /// Max/min of the member ratios.
    pub fit_c_spread: f64,
    pub fit: Option<PowerFit>,
}

impl SbtSweep {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.members.iter().map(|m| m.record.clone()).collect()
    }

    pub fn chain_all_pass(&self) -> bool {
        self.members.iter().all(|m| m.chain_violations == 0)
    }
}

/// Pointwise links of the Newton chain at one sample, as `(b − a, c − b)`.
pub fn sbt_chain_links(h1: f64, hk: f64, k: usize, rhat: f64) -> (f64, f64) {
    let a = (1.0 / rhat - h1).max(0.0);
    let b = (1.0 / rhat - hk.max(0.0).powf(1.0 / k as f64)).max(0.0);
    let c = rhat.powi(k as i32 - 1) * (rhat.powi(-(k as i32)) - hk).max(0.0);
    (b - a, c - b)
}

fn sbt_member(dom: &StarDomain, id: String, k: usize, opts: &SbtOptions) -> Result<SbtMember> {
    let trace = dom.boundary_trace(opts.m)?;
    check_curvature_order(trace.n, k)?;
    for s in &trace.samples {
        let hk = hk_sample(s, k);
        if hk < -opts.tol {
            return Err(Error::Domain(format!(
                "H_{k} = {hk:e} < 0 at boundary parameter {} (point {:?})",
                s.param, s.point
            )));
        }
    }
    let rh = rhat(&trace);
    let z = reference_point(dom, opts.z_rule)?;
    let constants = domain_constants(dom, &trace, &z)?;
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for s in &trace.samples {
        let (g1, g2) = sbt_chain_links(hk_sample(s, 1), hk_sample(s, k), k, rh);
        let scale = 1.0 + rh.powi(-(k as i32));
        if g1 < -opts.tol * scale || g2 < -opts.tol * scale {
            violations += 1;
        }
        min_gap = min_gap.min(g1).min(g2);
    }
    let mut record = SweepRecord {
        shape_id: id,
        eps: dom.eps.unwrap_or(f64::NAN),
        k,
        delta_serrin: f64::NAN,
        delta_sbt: sbt_deficit(&trace, k)?,
        rho_gap: constants.rho_e - constants.rho_i,
        l2_aniso: l2_anisotropy(&trace, &z, rh),
        r: f64::NAN,
        rhat: rh,
        m: f64::NAN,
        r_i: constants.r_i,
        d: constants.diameter,
        fit_c: f64::NAN,
        fit_slope: f64::NAN,
        constants,
    };
    let gradient_bound = match opts.solve_h {
        Some(h) if dom.dim() == 2 => {
            let sol = solve_hessian_2d(dom, 1, h)?;
            let s = sol.sample(opts.m)?;
            let bg = s.boundary_gradient();
            record.delta_serrin = bg.deviation;
            record.r = bg.r;
            record.m = bg.max;
            Some(gradient_bound(&s, record.d))
        }
        _ => None,
    };
    Ok(SbtMember {
        record,
        chain_violations: violations,
        chain_samples: trace.samples.len(),
        chain_min_gap: min_gap,
        gradient_bound,
    })
}

fn gradient_bound(s: &SampledSolution, d: f64) -> GradientBound {
    let n = s.n as f64;
    let m = s.grad_norm.iter().copied().fold(0.0, f64::max);
    let max_u = -s.min.u;
    let (m_sq, two_n_max_u, n_d_sq) = (m * m, 2.0 * n * max_u, n * d * d);
    let tol = 1e-6 * n_d_sq;
    GradientBound { m_sq, two_n_max_u, n_d_sq, pass: m_sq <= two_n_max_u + tol && two_n_max_u <= n_d_sq + tol }
}

/// Geometric sweep: deficits and anisotropy from the boundary trace alone.
/// Members with `H_k < 0` somewhere are rejected with the offending sample.
pub fn sbt_sweep(family: &[StarDomain], k: usize, opts: &SbtOptions) -> SbtSweep {
    let results: Vec<(String, Result<SbtMember>)> = family
        .par_iter()
        .enumerate()
        .map(|(i, dom)| {
            let id = shape_id(dom, i);
            (id.clone(), sbt_member(dom, id, k, opts))
        })
        .collect();
    let mut members = Vec::new();
    let mut rejected = Vec::new();
    for (id, r) in results {
        match r {
            Ok(m) => members.push(m),
            Err(e) => rejected.push(SkippedMember { shape_id: id, reason: e.to_string() }),
        }
    }
    let pairs: Vec<(f64, f64)> = members.iter().map(|m| (m.record.delta_sbt, m.record.l2_aniso)).collect();
    let (fit_c, fit_c_spread) = half_power_constant(&pairs, FIT_FLOOR);
    let fit = power_fit(&pairs, FIT_FLOOR);
    for m in &mut members {
        m.record.fit_c = fit_c;
        m.record.fit_slope = fit.as_ref().map_or(f64::NAN, |f| f.slope);
    }
    SbtSweep { k, z_rule: opts.z_rule, members, rejected, fit_c, fit_c_spread, fit }
}

pub const BUBBLING_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubblingOptions {
    pub trace_m: usize,
    /// Cells per side of the stratified grid for `|Ω Δ U|`.
    pub cells: usize,
    /// Jitters each stratified sample inside its cell when set.
    pub jitter_seed: Option<u64>,
    pub circle_samples: usize,
}

impl Default for BubblingOptions {
    fn default() -> Self {
        Self { trace_m: 4096, cells: 2048, jitter_seed: None, circle_samples: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubblingReport {
    pub schema: u32,
    pub shape_id: String,
    pub k: usize,
    /// Dilation applied so that `R̂ ≥ 1`; all lengths below refer to the dilated domain.
    pub dilation: f64,
    pub m: usize,
    pub centers: Vec<Vec<f64>>,
    pub rhat: f64,
    pub alpha: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub delta_sbt: f64,
    /// Whether `H_k ≥ 0` on the whole boundary.
    pub k_convex: bool,
    pub min_hk: f64,
    pub symmetric_difference: f64,
    pub sampling_error: f64,
    pub boundary_gap: f64,
    pub perimeter_gap: f64,
    /// `None` when the gap reaches `R̂`.
    pub m_bound: Option<f64>,
    pub m_bound_holds: bool,
    /// `None` for a single ball.
    pub min_center_distance: Option<f64>,
}

/// Detects bubbles as well-separated maxima of the distance to the boundary
/// and measures how far the domain is from their union.
pub fn bubbling(dom: &StarDomain, k: usize, opts: &BubblingOptions) -> Result<BubblingReport> {
    let n = dom.dim();
    if n != 2 {
        return invalid(format!("bubbling analysis needs a planar domain (got n = {n})"));
    }
    check_curvature_order(n, k)?;
    if opts.cells < 16 || opts.trace_m < 64 || opts.circle_samples < 16 {
        return invalid("bubbling resolution too small");
    }
    let raw = dom.boundary_trace(opts.trace_m)?;
    let dilation = if rhat(&raw) < 1.0 - 1e-12 { 1.0 / rhat(&raw) } else { 1.0 };
    let dom = if dilation > 1.0 { dom.scaled(dilation)? } else { dom.clone() };
    let trace = if dilation > 1.0 { dom.boundary_trace(opts.trace_m)? } else { raw };
    let rh = rhat(&trace);
    let min_hk = trace.samples.iter().map(|s| hk_sample(s, k)).fold(f64::INFINITY, f64::min);
    let delta_sbt = sbt_deficit(&trace, k)?;

    let centers = bubble_centers(&dom, rh)?;
    let m = centers.len();
    let min_center_distance = centers
        .iter()
        .enumerate()
        .flat_map(|(i, a)| centers[i + 1..].iter().map(move |b| dist(a, b)))
        .reduce(f64::min);

    let (symmetric_difference, sampling_error) = symmetric_difference(&dom, &centers, rh, opts);

    let mut boundary_gap: f64 = 0.0;
    for (i, c) in centers.iter().enumerate() {
        for j in 0..opts.circle_samples {
            let t = std::f64::consts::TAU * j as f64 / opts.circle_samples as f64;
            let x = [c[0] + rh * t.cos(), c[1] + rh * t.sin()];
            let covered = centers.iter().enumerate().any(|(l, o)| l != i && dist(&x, o) < rh);
            if !covered {
                boundary_gap = boundary_gap.max(dom.boundary_distance(&x));
            }
        }
    }
    let perimeter_u = m as f64 * n as f64 * omega(n) * rh.powi(n as i32 - 1);
    let perimeter_gap = (trace.perimeter - perimeter_u).abs();
    let m_bound = (rh > boundary_gap).then(|| trace.volume / (omega(n) * (rh - boundary_gap).powi(n as i32)));
    Ok(BubblingReport {
        schema: BUBBLING_SCHEMA,
        shape_id: dom.label.clone().unwrap_or_else(|| "shape".into()),
        k,
        dilation,
        m,
        centers,
        rhat: rh,
        alpha: 2.0 / (2.0 * n as f64 + 7.0),
        volume: trace.volume,
        perimeter: trace.perimeter,
        delta_sbt,
        k_convex: min_hk >= -1e-12,
        min_hk,
        symmetric_difference,
        sampling_error,
        boundary_gap,
        perimeter_gap,
        m_bound,
        m_bound_holds: m_bound.is_some_and(|b| m as f64 <= b),
        min_center_distance,
    })
}

fn bubble_centers(dom: &StarDomain, rh: f64) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = dom.bbox();
    let step = rh / 16.0;
    let nx = ((hi[0] - lo[0]) / step).ceil() as usize + 1;
    let ny = ((hi[1] - lo[1]) / step).ceil() as usize + 1;
    let field: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let p = [lo[0] + (idx % nx) as f64 * step, lo[1] + (idx / nx) as f64 * step];
            if dom.contains(&p) { dom.boundary_distance(&p) } else { f64::NEG_INFINITY }
        })
        .collect();
    let mut candidates = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v = field[j * nx + i];
            if !(v > 0.0) {
                continue;
            }
            let mut is_max = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                        continue;
                    }
                    if field[b as usize * nx + a as usize] > v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                candidates.push([lo[0] + i as f64 * step, lo[1] + j as f64 * step]);
            }
        }
    }
    let mut refined: Vec<(f64, Vec<f64>)> = candidates.iter().map(|c| hill_climb(dom, *c, step)).collect();
    refined.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then(a.1[0].total_cmp(&b.1[0])).then(a.1[1].total_cmp(&b.1[1]))
    });
    let best = refined.first().map_or(f64::NEG_INFINITY, |r| r.0);
    if best < 0.9 * rh {
        return Err(Error::Degenerate(format!(
            "largest distance to the boundary {best:.6} is below 0.9 R̂ = {:.6}",
            0.9 * rh
        )));
    }
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for (d, c) in refined {
        if d < 0.9 * rh {
            break;
        }
        if centers.iter().all(|o| dist(o, &c) >= 2.0 * rh - 1e-9) {
            centers.push(c);
        }
    }
    Ok(centers)
}

fn hill_climb(dom: &StarDomain, start: [f64; 2], step0: f64) -> (f64, Vec<f64>) {
    let f = |p: &[f64]| if dom.contains(p) { dom.boundary_distance(p) } else { f64::NEG_INFINITY };
    let mut p = start.to_vec();
    let mut v = f(&p);
    let mut step = step0;
    while step > 1e-11 {
        let mut moved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let q = vec![p[0] + dx * step, p[1] + dy * step];
            let w = f(&q);
            if w > v {
                p = q;
                v = w;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (v, p)
}

fn symmetric_difference(dom: &StarDomain, centers: &[Vec<f64>], rh: f64, opts: &BubblingOptions) -> (f64, f64) {
    let (mut lo, mut hi) = dom.bbox();
    for c in centers {
        for i in 0..2 {
            lo[i] = lo[i].min(c[i] - rh);
            hi[i] = hi[i].max(c[i] + rh);
        }
    }
    let pad = 1e-3 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    for i in 0..2 {
        lo[i] -= pad;
        hi[i] += pad;
    }
    let nc = opts.cells;
    let (dx, dy) = ((hi[0] - lo[0]) / nc as f64, (hi[1] - lo[1]) / nc as f64);
    let in_u = |p: &[f64]| centers.iter().any(|c| dist(p, c) < rh);
    let corner = |i: usize, j: usize| {
        let p = [lo[0] + i as f64 * dx, lo[1] + j as f64 * dy];
        (dom.contains(&p), in_u(&p))
    };
    let rows: Vec<(usize, usize)> = (0..nc)
        .into_par_iter()
        .map(|j| {
            let mut rng = opts.jitter_seed.map(|s| StdRng::seed_from_u64(s.wrapping_add(j as u64)));
            let below: Vec<(bool, bool)> = (0..=nc).map(|i| corner(i, j)).collect();
            let above: Vec<(bool, bool)> = (0..=nc).map(|i| corner(i, j + 1)).collect();
            let (mut diff, mut edge) = (0, 0);
            for i in 0..nc {
                let (sx, sy) = match rng.as_mut() {
                    Some(r) => (r.random::<f64>(), r.random::<f64>()),
                    None => (0.5, 0.5),
                };
                let p = [lo[0] + (i as f64 + sx) * dx, lo[1] + (j as f64 + sy) * dy];
                if dom.contains(&p) != in_u(&p) {
                    diff += 1;
                }
                let cs = [below[i], below[i + 1], above[i], above[i + 1]];
                if cs.iter().any(|c| c.0 != cs[0].0) || cs.iter().any(|c| c.1 != cs[0].1) {
                    edge += 1;
                }
            }
            (diff, edge)
        })
        .collect();
    let area = dx * dy;
    let diff: usize = rows.iter().map(|r| r.0).sum();
    let edge: usize = rows.iter().map(|r| r.1).sum();
    (diff as f64 * area, edge as f64 * area)
}

pub const DEFAULT_R_LIST: [f64; 3] = [2.0, 3.0, 4.0];

/// `‖∇h‖_{L^r} / ‖δ^α D²h‖_{L²}` at one exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevProbe {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
    /// `(b_0 / δ(z)^{1/r})^n |Ω|^{(1−α)/n − 1/2 + 2/r}` with all unspecified
    /// constants set to one.
    pub constant_form: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    PAboveN,
    PEqualsN,
    PBelowN,
}

/// `osc f / (branch norm of ∇f)` over the components `f = ∂_i h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationProbe {
    pub branch: Branch,
    pub p: f64,
    pub q: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub z: Vec<f64>,
    pub delta_z: f64,
    pub alpha: f64,
    pub b0: f64,
    pub r_i: f64,
    pub d: f64,
    pub volume: f64,
    pub sobolev: Vec<SobolevProbe>,
    pub interpolation: Vec<InterpolationProbe>,
    /// Explicit constant of the `p > n` branch for convex domains, `None` otherwise.
    pub morrey_bound: Option<f64>,
    pub interpolation_holds: Option<bool>,
}

/// Constant `C` in `osc f ≤ C ‖∇f‖_p` (`p > n`) for a convex domain, from the
/// Riesz-potential representation `|f(x) − f_Ω| ≤ d^n/(n|Ω|) ∫ |x−y|^{1−n} |∇f(y)| dy`.
pub fn morrey_constant(n: usize, p: f64, d: f64, volume: f64) -> f64 {
    let nf = n as f64;
    let pp = p / (p - 1.0);
    let e = nf - (nf - 1.0) * pp;
    let potential = (nf * omega(n) * d.powf(e) / e).powf(1.0 / pp);
    2.0 * d.powi(n as i32) / (nf * volume) * potential
}

/// Empirical constants for the Sobolev–Poincaré and interpolation inequalities
/// applied to the components of `∇h`, `h = |x − z|²/2 − u`.
pub fn appendix_probes(
    s: &SampledSolution,
    dom: &StarDomain,
    constants: &DomainConstants,
    r_list: &[f64],
    alpha: f64,
) -> Result<ProbeReport> {
    let n = s.n;
    let nf = n as f64;
    let p = 2.0;
    if !(0.0..=1.0).contains(&alpha) || p * (1.0 - alpha) >= nf {
        return invalid(format!("weight exponent {alpha} outside the admissible range"));
    }
    let r_max = nf * p / (nf - p * (1.0 - alpha));
    if let Some(r) = r_list.iter().find(|&&r| !(r >= p && r <= r_max + 1e-12)) {
        return invalid(format!("exponent r = {r} outside [{p}, {r_max}]"));
    }
    let z = s.min.z.clone();
    let delta_z = dom.boundary_distance(&z);
    if let Some(h) = s.h {
        if delta_z <= 2.0 * h * std::f64::consts::SQRT_2 {
            return invalid("minimum point lies on a boundary-adjacent node");
        }
    }
    struct Pt {
        w: f64,
        grad: Vec<f64>,
        hess: SymMatrix,
        delta: f64,
    }
    let pts: Vec<Pt> = s
        .volume
        .par_iter()
        .map(|v| {
            let grad: Vec<f64> = (0..n).map(|i| v.x[i] - z[i] - v.grad[i]).collect();
            let hess = SymMatrix::identity(n).sub(&v.hess);
            Pt { w: v.weight, grad, hess, delta: dom.boundary_distance(&v.x) }
        })
        .collect();
    let rhs = pts.iter().map(|q| q.w * q.delta.powf(2.0 * alpha) * q.hess.frobenius().powi(2)).sum::<f64>().sqrt();
    let gscale = pts.iter().map(|q| q.grad.iter().map(|g| g.abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let negligible = |x: f64| x <= 1e-9 * (1.0 + constants.diameter);
    let b0 = constants.diameter / constants.r_i;
    let sobolev = r_list
        .iter()
        .map(|&r| {
            let lhs = pts
                .iter()
                .map(|q| q.w * q.grad.iter().map(|g| g * g).sum::<f64>().sqrt().powf(r))
                .sum::<f64>()
                .powf(1.0 / r);
            let ratio = if negligible(rhs) && negligible(gscale) { None } else { Some(lhs / rhs) };
            let constant_form = (b0 / delta_z.powf(1.0 / r)).powi(n as i32)
                * constants.volume.powf((1.0 - alpha) / nf - 1.0 / p + 2.0 / r);
            SobolevProbe { r, lhs, rhs, ratio, constant_form }
        })
        .collect();

    // ∇h on the boundary: u = 0 there, so ∇u = |∇u| ν.
    let boundary_grad: Vec<Vec<f64>> = s
        .trace
        .samples
        .iter()
        .zip(&s.grad_norm)
        .map(|(b, g)| (0..n).map(|i| b.point[i] - z[i] - g * b.normal[i]).collect())
        .collect();
    let norm = |i: usize, e: f64| -> f64 {
        pts.iter()
            .map(|q| {
                let row = (0..n).map(|j| q.hess.get(i, j).powi(2)).sum::<f64>().sqrt();
                q.w * row.powf(e)
            })
            .sum::<f64>()
            .powf(1.0 / e)
    };
    let q_exp = 2.0 * nf;
    let branches = [(Branch::PAboveN, 2.0 * nf, 2.0 * nf), (Branch::PEqualsN, nf, q_exp), (Branch::PBelowN, nf / 2.0, q_exp)];
    let revolution = s.trace.revolution;
    let mut interpolation = Vec::new();
    for (branch, pe, qe) in branches {
        let mut best: Option<f64> = None;
        for i in 0..n {
            let vals = pts.iter().map(|q| q.grad[i]);
            let vals: Vec<f64> = if revolution { vals.collect() } else { vals.chain(boundary_grad.iter().map(|g| g[i])).collect() };
            let osc = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().copied().fold(f64::INFINITY, f64::min);
            let np = norm(i, pe);
            if negligible(np) {
                continue;
            }
            let denom = match branch {
                Branch::PAboveN => np,
                Branch::PEqualsN => {
                    let nq = norm(i, qe);
                    np * (E * constants.volume.powf(1.0 / nf - 1.0 / qe) * nq / np).ln()
                }
                Branch::PBelowN => {
                    let a = pe * (qe - nf) / (nf * (qe - pe));
                    norm(i, qe).powf(1.0 - a) * np.powf(a)
                }
            };
            let ratio = osc / denom;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
        interpolation.push(InterpolationProbe { branch, p: pe, q: qe, ratio: best });
    }
    let convex = s.trace.samples.iter().all(|b| b.curvatures.iter().all(|&c| c >= -1e-12));
    let morrey_bound = convex.then(|| morrey_constant(n, 2.0 * nf, constants.diameter, constants.volume));
    let interpolation_holds = match (morrey_bound, interpolation[0].ratio) {
        (Some(b), Some(r)) => Some(r <= b),
        _ => None,
    };
    Ok(ProbeReport {
        z,
        delta_z,
        alpha,
        b0,
        r_i: constants.r_i,
        d: constants.diameter,
        volume: constants.volume,
        sobolev,
        interpolation,
        morrey_bound,
        interpolation_holds,
    })
}

/// Area-preserving ellipses `a = 1 + ε`, `b = 1/(1 + ε)`.
pub fn ellipse_family(eps: &[f64]) -> Result<Vec<StarDomain>> {
    eps.iter()
        .map(|&e| Ok(StarDomain::ellipse(1.0 + e, 1.0 / (1.0 + e))?.with_label(format!("ellipse_eps{e}")).with_eps(e)))
        .collect()
}

/// Volume-preserving spheroids with equatorial semi-axis `1 + ε`.
pub fn spheroid_family(eps: &[f64]) -> Result<Vec<StarDomain>> {
    eps.iter()
        .map(|&e| {
            Ok(StarDomain::spheroid(1.0 + e, (1.0 + e).powi(-2))?.with_label(format!("spheroid_eps{e}")).with_eps(e))
        })
        .collect()
}

/// `ε = 0.02, 0.04, …, 0.2`.
pub fn standard_eps() -> Vec<f64> {
    (1..=10).map(|i| 0.02 * i as f64).collect()
}
