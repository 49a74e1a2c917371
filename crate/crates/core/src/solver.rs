//! The k-Hessian Dirichlet problem `S_k(D²u) = f`, `u = 0` on the boundary.
//!
//! Balls are solved in closed form. Planar star domains are discretized on a
//! Cartesian grid with Shortley–Weller arms at cut cells and solved by damped
//! Newton iteration.

use crate::error::{invalid, Error, Result};
use crate::geometry::{dist, BoundaryTrace, Shape, StarDomain};
use crate::quadrature::{gauss_legendre, periodic_trapezoid};
use crate::symfun::{binomial, SymMatrix, CONE_TOL};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Maximum nodal residual accepted by the Newton iteration.
pub const SOLVER_TOL: f64 = 1e-9;

/// Right-hand side `f` of `S_k(D²u) = f`.
#[derive(Clone)]
pub enum Rhs {
    Constant(f64),
    /// `f(u) = Σ_j c_j u^j`.
    Polynomial(Vec<f64>),
    /// `f(x)`, used for manufactured solutions.
    Field(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::Constant(c) => write!(f, "Constant({c})"),
            Rhs::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            Rhs::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl Rhs {
    /// The constant `C(n,k)` of the torsion-type problem.
    pub fn standard(n: usize, k: usize) -> Self {
        Rhs::Constant(binomial(n, k))
    }

    pub fn eval(&self, x: &[f64], u: f64) -> f64 {
        match self {
            Rhs::Constant(c) => *c,
            Rhs::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * u + a),
            Rhs::Field(f) => f(x),
        }
    }

    /// `∂f/∂u`.
    pub fn du(&self, u: f64) -> f64 {
        match self {
            Rhs::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (j, &a)| acc * u + j as f64 * a),
            _ => 0.0,
        }
    }

    /// `F(u) = ∫_u^0 f(s) ds`, defined when `f` depends on `u` only.
    pub fn antiderivative(&self, u: f64) -> Option<f64> {
        match self {
            Rhs::Constant(c) => Some(-c * u),
            Rhs::Polynomial(c) => Some(
                -c.iter()
                    .enumerate()
                    .map(|(j, &a)| a * u.powi(j as i32 + 1) / (j + 1) as f64)
                    .sum::<f64>(),
            ),
            Rhs::Field(_) => None,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Rhs::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// Exact solution `u = (|x - c|² − R²)/2` on the ball `B_R(c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub n: usize,
    pub k: usize,
    pub radius: f64,
    pub center: Vec<f64>,
}

pub fn solve_radial(n: usize, k: usize, radius: f64) -> Result<RadialSolution> {
    if n == 0 || n > crate::symfun::MAX_DIM {
        return invalid(format!("dimension {n} outside 1..=8"));
    }
    if k == 0 || k > n {
        return invalid(format!("k = {k} exceeds ambient dimension {n} or is zero"));
    }
    if !(radius > 0.0) {
        return invalid(format!("radius {radius} is not positive"));
    }
    Ok(RadialSolution { n, k, radius, center: vec![0.0; n] })
}

impl RadialSolution {
    pub fn u(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        0.5 * (r2 - self.radius * self.radius)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| a - c).collect()
    }

    pub fn hess(&self, _x: &[f64]) -> SymMatrix {
        SymMatrix::identity(self.n)
    }

    pub fn domain(&self) -> StarDomain {
        StarDomain::ball(self.n, self.radius).expect("validated radius")
    }

    pub fn min_point(&self) -> MinPoint {
        MinPoint { z: self.center.clone(), u: -0.5 * self.radius * self.radius, delta: self.radius }
    }

    /// Quadrature view of the solution. For `n = 2` the volume rule is a full
    /// polar product rule; for `n >= 3` it is a radial rule that is exact only
    /// for radially symmetric integrands about the center.
    pub fn sample(&self, m: usize) -> Result<SampledSolution> {
        let dom = self.domain();
        let trace = dom.boundary_trace(m)?;
        let n = self.n;
        let mut volume = Vec::new();
        if n == 2 {
            for (t, wt) in periodic_trapezoid(64) {
                for (xi, wr) in gauss_legendre(32, 0.0, 1.0) {
                    let r = xi * self.radius;
                    let x = vec![r * t.cos(), r * t.sin()];
                    volume.push(self.volume_sample(x, wt * wr * self.radius * self.radius * xi));
                }
            }
        } else {
            let area = n as f64 * crate::geometry::omega(n);
            for (r, wr) in gauss_legendre(48, 0.0, self.radius) {
                let mut x = vec![0.0; n];
                x[0] = r;
                volume.push(self.volume_sample(x, area * r.powi(n as i32 - 1) * wr));
            }
        }
        Ok(SampledSolution {
            n,
            k: self.k,
            rhs: Rhs::standard(n, self.k),
            grad_norm: vec![self.radius; trace.samples.len()],
            trace,
            volume,
            min: self.min_point(),
            radial_only: n > 2,
            h: None,
        })
    }

    fn volume_sample(&self, x: Vec<f64>, weight: f64) -> VolumeSample {
        VolumeSample { u: self.u(&x), grad: self.grad(&x), hess: self.hess(&x), x, weight }
    }
}

/// Global minimum point of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinPoint {
    pub z: Vec<f64>,
    pub u: f64,
    /// Distance from `z` to the boundary.
    pub delta: f64,
}

/// A volume quadrature point carrying the solution and its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSample {
    pub x: Vec<f64>,
    pub u: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
    pub weight: f64,
}

/// Everything the integral identities need: volume samples, the boundary
/// trace with `|∇u|` at each sample, and the minimum point.
#[derive(Debug, Clone)]
pub struct SampledSolution {
    pub n: usize,
    pub k: usize,
    pub rhs: Rhs,
    pub trace: BoundaryTrace,
    /// `|∇u|` at each trace sample.
    pub grad_norm: Vec<f64>,
    pub volume: Vec<VolumeSample>,
    pub min: MinPoint,
    /// The volume rule only integrates radially symmetric functions.
    pub radial_only: bool,
    /// Grid spacing for finite-difference solutions.
    pub h: Option<f64>,
}

impl SampledSolution {
    pub fn integrate_volume(&self, f: impl Fn(&VolumeSample) -> f64) -> f64 {
        self.volume.iter().map(|s| s.weight * f(s)).sum()
    }

    pub fn integrate_boundary(&self, f: impl Fn(&crate::geometry::BoundarySample, f64) -> f64) -> f64 {
        self.trace
            .samples
            .iter()
            .zip(&self.grad_norm)
            .map(|(s, &g)| s.weight * f(s, g))
            .sum()
    }

    pub fn boundary_gradient(&self) -> BoundaryGradient {
        BoundaryGradient::from_values(&self.trace, self.grad_norm.clone())
    }
}

/// `|∇u|` on the boundary with its mean `R` and `R̂ = n|Ω|/|∂Ω|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGradient {
    pub values: Vec<f64>,
    /// `(1/|∂Ω|) ∫ |∇u| dσ`.
    pub r: f64,
    pub rhat: f64,
    /// Maximum of `|∇u|` over the samples.
    pub max: f64,
    /// `max |(|∇u| − R)|` over the samples.
    pub deviation: f64,
}

impl BoundaryGradient {
    pub fn from_values(trace: &BoundaryTrace, values: Vec<f64>) -> Self {
        let r = trace.samples.iter().zip(&values).map(|(s, g)| s.weight * g).sum::<f64>() / trace.perimeter;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let deviation = values.iter().map(|g| (g - r).abs()).fold(0.0, f64::max);
        Self { values, r, rhat: trace.n as f64 * trace.volume / trace.perimeter, max, deviation }
    }
}

/// Classification of grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    Exterior,
    Interior,
    /// Interior node with a non-interior node among its eight neighbors.
    BoundaryAdjacent,
}

impl NodeState {
    pub fn is_inside(self) -> bool {
        self != NodeState::Exterior
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    fn offset(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let (a, b) = (i as isize + di, j as isize + dj);
        if a < 0 || b < 0 || a >= self.nx as isize || b >= self.ny as isize {
            None
        } else {
            Some(self.index(a as usize, b as usize))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Arm {
    len: f64,
    /// Interior neighbor, or `None` when the arm ends on the boundary.
    nb: Option<usize>,
}

#[derive(Debug, Clone)]
struct Stencil {
    node: usize,
    /// East, west, north, south.
    arms: [Arm; 4],
    /// Node whose four diagonal neighbors carry the cross difference.
    xy_base: usize,
}

/// Solver options.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Reject domains outside the near-circular applicability envelope.
    pub enforce_envelope: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: SOLVER_TOL, max_iter: 60, enforce_envelope: true }
    }
}

/// Largest ratio of maximal to minimal radius accepted by the solver.
pub const ENVELOPE_RATIO: f64 = 2.5;
/// Smallest number of grid cells across the minimal radius.
pub const ENVELOPE_CELLS: f64 = 8.0;

/// Finite-difference solution on a planar star domain.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub domain: StarDomain,
    pub k: usize,
    pub rhs: Rhs,
    pub grid: Grid,
    pub state: Vec<NodeState>,
    /// Nodal values, zero outside.
    pub u: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    /// `(u_xx, u_xy, u_yy)` per node.
    pub hess: Vec<[f64; 3]>,
    /// `S_k(D²u_h) − f` per node.
    pub residual: Vec<f64>,
    pub max_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    stencils: Vec<Stencil>,
    unknown: Vec<usize>,
    full_block: Vec<bool>,
}

const NONE: usize = usize::MAX;

/// Solves `S_k(D²u) = C(2,k)` with zero boundary values.
pub fn solve_hessian_2d(dom: &StarDomain, k: usize, h: f64) -> Result<SolutionField> {
    solve_hessian_2d_with(dom, k, h, Rhs::standard(2, k), &SolveOptions::default())
}

pub fn solve_hessian_2d_with(
    dom: &StarDomain,
    k: usize,
    h: f64,
    rhs: Rhs,
    opts: &SolveOptions,
) -> Result<SolutionField> {
    if dom.dim() != 2 {
        return invalid(format!("grid solver is planar, domain has n = {}", dom.dim()));
    }
    if k == 0 || k > 2 {
        return invalid(format!("k = {k} exceeds ambient dimension 2 or is zero"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("grid spacing {h} is not positive"));
    }
    if !dom.is_star_shaped() {
        return invalid("grid solver needs a star-shaped domain");
    }
    if opts.enforce_envelope {
        check_envelope(dom, k, h)?;
    }
    let mut sol = discretize(dom, k, h, rhs)?;
    let mut u0 = vec![0.0; sol.unknown_count()];
    if k == 2 {
        // Start from the scaled solution of Δv = 2 sqrt(f).
        let base = sol.rhs.clone();
        let torsion = Rhs::Field(Arc::new(move |x: &[f64]| 2.0 * base.eval(x, 0.0).max(0.0).sqrt()));
        let mut lap = discretize(dom, 1, h, torsion)?;
        lap.newton(vec![0.0; lap.unknown_count()], opts)?;
        let v = lap.unknowns();
        let mut num = 0.0;
        let mut den = 0.0;
        for st in &sol.stencils {
            let x = sol.grid.point(st.node);
            let d = lap.d2(st, &lap.u);
            num += sol.rhs.eval(&x, lap.u[st.node]);
            den += d[0] * d[2] - d[1] * d[1];
        }
        if !(den > 0.0) {
            return Err(Error::Cone("torsion initial guess is not convex".into()));
        }
        let s = (num / den).sqrt();
        u0 = v.iter().map(|x| s * x).collect();
    }
    sol.newton(u0, opts)?;
    sol.finish();
    Ok(sol)
}

fn check_envelope(dom: &StarDomain, k: usize, h: f64) -> Result<()> {
    let (lo, hi) = dom.radius_range();
    if hi / lo > ENVELOPE_RATIO {
        return invalid(format!(
            "radius ratio {:.3} exceeds the solver envelope {ENVELOPE_RATIO}",
            hi / lo
        ));
    }
    if lo / h < ENVELOPE_CELLS {
        return invalid(format!(
            "h = {h} resolves the minimal radius {lo:.3} with fewer than {ENVELOPE_CELLS} cells"
        ));
    }
    if k == 2 {
        let t = dom.boundary_trace(1024)?;
        if let Some(s) = t.samples.iter().find(|s| s.curvatures[0] <= 0.0) {
            return invalid(format!(
                "k = 2 needs a strictly convex boundary; curvature {:.3e} at {:?}",
                s.curvatures[0], s.point
            ));
        }
    }
    Ok(())
}

fn discretize(dom: &StarDomain, k: usize, h: f64, rhs: Rhs) -> Result<SolutionField> {
    let c = dom.center();
    let (lo, hi) = dom.bbox();
    let i0 = ((lo[0] - c[0]) / h).floor() as isize - 2;
    let j0 = ((lo[1] - c[1]) / h).floor() as isize - 2;
    let i1 = ((hi[0] - c[0]) / h).ceil() as isize + 2;
    let j1 = ((hi[1] - c[1]) / h).ceil() as isize + 2;
    let grid = Grid {
        origin: [c[0] + i0 as f64 * h, c[1] + j0 as f64 * h],
        h,
        nx: (i1 - i0 + 1) as usize,
        ny: (j1 - j0 + 1) as usize,
    };
    let total = grid.nx * grid.ny;
    let inside: Vec<bool> = (0..total).map(|p| dom.level(&grid.point(p)) < -1e-9 * h).collect();
    let mut state = vec![NodeState::Exterior; total];
    let dirs8 = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    for p in 0..total {
        if inside[p] {
            let all = dirs8
                .iter()
                .all(|&(a, b)| grid.offset(p, a, b).is_some_and(|q| inside[q]));
            state[p] = if all { NodeState::Interior } else { NodeState::BoundaryAdjacent };
        }
    }
    let full_block: Vec<bool> = (0..total).map(|p| state[p] == NodeState::Interior).collect();
    let mut unknown = vec![NONE; total];
    let mut stencils = Vec::new();
    let mut shifts: Vec<(isize, isize)> = Vec::new();
    for a in -2isize..=2 {
        for b in -2isize..=2 {
            if (a, b) != (0, 0) {
                shifts.push((a, b));
            }
        }
    }
    shifts.sort_by_key(|&(a, b)| (a * a + b * b, a, b));
    for p in 0..total {
        if !inside[p] {
            continue;
        }
        unknown[p] = stencils.len();
        let x = grid.point(p);
        let mut arms = [Arm { len: h, nb: None }; 4];
        for (d, &(a, b)) in [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().enumerate() {
            let q = grid.offset(p, a, b).expect("padded grid");
            arms[d] = if inside[q] {
                Arm { len: h, nb: Some(q) }
            } else {
                let dir = [a as f64, b as f64];
                let s = dom.cut_distance(&x, &dir, h).unwrap_or(h);
                Arm { len: s.max(1e-12 * h), nb: None }
            };
        }
        let diag_ok = |q: usize| {
            inside[q]
                && [(1, 1), (1, -1), (-1, 1), (-1, -1)]
                    .iter()
                    .all(|&(a, b)| grid.offset(q, a, b).is_some_and(|r| inside[r]))
        };
        let xy_base = if diag_ok(p) {
            p
        } else {
            let mut cands: Vec<(usize, f64)> = shifts
                .iter()
                .filter_map(|&(a, b)| grid.offset(p, a, b))
                .filter(|&q| diag_ok(q))
                .map(|q| (q, dist(&grid.point(q), &x)))
                .collect();
            cands.sort_by(|a, b| a.1.total_cmp(&b.1));
            match cands.first() {
                Some(&(q, _)) => q,
                None => {
                    return Err(Error::Validation(format!(
                        "grid too coarse near {x:?}: no cross stencil within two cells"
                    )))
                }
            }
        };
        stencils.push(Stencil { node: p, arms, xy_base });
    }
    if stencils.is_empty() {
        return invalid("grid has no interior nodes");
    }
    Ok(SolutionField {
        domain: dom.clone(),
        k,
        rhs,
        grid,
        state,
        u: vec![0.0; total],
        grad: vec![[0.0; 2]; total],
        hess: vec![[0.0; 3]; total],
        residual: vec![0.0; total],
        max_residual: f64::INFINITY,
        iterations: 0,
        converged: false,
        stencils,
        unknown,
        full_block,
    })
}

/// Second-difference weights along one axis: `(center, plus, minus)`.
fn sw_weights(plus: f64, minus: f64) -> (f64, f64, f64) {
    let cp = 2.0 / (plus * (plus + minus));
    let cm = 2.0 / (minus * (plus + minus));
    (-(cp + cm), cp, cm)
}

impl SolutionField {
    fn unknown_count(&self) -> usize {
        self.stencils.len()
    }

    fn unknowns(&self) -> Vec<f64> {
        self.stencils.iter().map(|s| self.u[s.node]).collect()
    }

    fn set_unknowns(&mut self, v: &[f64]) {
        for (s, &x) in self.stencils.iter().zip(v) {
            self.u[s.node] = x;
        }
    }

    fn arm_value(u: &[f64], a: &Arm) -> f64 {
        a.nb.map_or(0.0, |q| u[q])
    }

    fn d2(&self, st: &Stencil, u: &[f64]) -> [f64; 3] {
        let up = u[st.node];
        let [e, w, n, s] = st.arms;
        let (c0, cp, cm) = sw_weights(e.len, w.len);
        let uxx = c0 * up + cp * Self::arm_value(u, &e) + cm * Self::arm_value(u, &w);
        let (c0, cp, cm) = sw_weights(n.len, s.len);
        let uyy = c0 * up + cp * Self::arm_value(u, &n) + cm * Self::arm_value(u, &s);
        let g = &self.grid;
        let q = st.xy_base;
        let at = |a, b| g.offset(q, a, b).map_or(0.0, |r| u[r]);
        let uxy = (at(1, 1) - at(-1, 1) - at(1, -1) + at(-1, -1)) / (4.0 * g.h * g.h);
        [uxx, uxy, uyy]
    }

    fn d1(st: &Stencil, u: &[f64]) -> [f64; 2] {
        let up = u[st.node];
        let one = |p: &Arm, m: &Arm| {
            let (sp, sm) = (p.len, m.len);
            let (vp, vm) = (Self::arm_value(u, p), Self::arm_value(u, m));
            (sm * sm * (vp - up) - sp * sp * (vm - up)) / (sp * sm * (sp + sm))
        };
        [one(&st.arms[0], &st.arms[1]), one(&st.arms[2], &st.arms[3])]
    }

    fn sk2(&self, d: &[f64; 3]) -> f64 {
        if self.k == 1 { d[0] + d[2] } else { d[0] * d[2] - d[1] * d[1] }
    }

    /// Residuals at all unknowns and whether every node is in `Γ_k`.
    fn evaluate(&self, u: &[f64]) -> (Vec<f64>, bool) {
        let mut in_cone = true;
        let r = self
            .stencils
            .iter()
            .map(|st| {
                let d = self.d2(st, u);
                if self.k == 2 && (d[0] + d[2] < -CONE_TOL || d[0] * d[2] - d[1] * d[1] < -CONE_TOL) {
                    in_cone = false;
                }
                self.sk2(&d) - self.rhs.eval(&self.grid.point(st.node), u[st.node])
            })
            .collect();
        (r, in_cone)
    }

    fn jacobian(&self, u: &[f64]) -> Result<SparseColMat<usize, f64>> {
        let m = self.unknown_count();
        let mut trip = Vec::with_capacity(m * 13);
        let h2 = self.grid.h * self.grid.h;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(16);
        for (r, st) in self.stencils.iter().enumerate() {
            row.clear();
            let d = self.d2(st, u);
            let (cxx, cyy, cxy) = if self.k == 1 { (1.0, 1.0, 0.0) } else { (d[2], d[0], -2.0 * d[1]) };
            let mut push = |node: Option<usize>, c: f64| {
                if let Some(q) = node {
                    let col = self.unknown[q];
                    if col != NONE {
                        row.push((col, c));
                    }
                }
            };
            let [e, w, n, s] = st.arms;
            let (c0, cp, cm) = sw_weights(e.len, w.len);
            push(Some(st.node), cxx * c0);
            push(e.nb, cxx * cp);
            push(w.nb, cxx * cm);
            let (c0, cp, cm) = sw_weights(n.len, s.len);
            push(Some(st.node), cyy * c0);
            push(n.nb, cyy * cp);
            push(s.nb, cyy * cm);
            if cxy != 0.0 {
                let g = &self.grid;
                let q = st.xy_base;
                let w4 = cxy / (4.0 * h2);
                push(g.offset(q, 1, 1), w4);
                push(g.offset(q, -1, 1), -w4);
                push(g.offset(q, 1, -1), -w4);
                push(g.offset(q, -1, -1), w4);
            }
            let fu = self.rhs.du(u[st.node]);
            if fu != 0.0 {
                push(Some(st.node), -fu);
            }
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == col {
                    v += row[i].1;
                    i += 1;
                }
                trip.push(Triplet::new(r, col, v));
            }
        }
        SparseColMat::try_new_from_triplets(m, m, &trip)
            .map_err(|e| Error::Consistency(format!("Jacobian assembly failed: {e:?}")))
    }

    fn newton(&mut self, u0: Vec<f64>, opts: &SolveOptions) -> Result<()> {
        let mut full = self.u.clone();
        let scatter = |full: &mut Vec<f64>, v: &[f64], st: &[Stencil]| {
            for (s, &x) in st.iter().zip(v) {
                full[s.node] = x;
            }
        };
        let mut v = u0;
        scatter(&mut full, &v, &self.stencils);
        let (mut r, cone) = self.evaluate(&full);
        if !cone {
            return Err(Error::Cone("initial iterate leaves Γ_k".into()));
        }
        let maxn = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let l2 = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut best = maxn(&r);
        let mut stall = 0;
        for it in 0..opts.max_iter {
            self.iterations = it;
            if maxn(&r) <= opts.tol {
                self.set_unknowns(&v);
                self.max_residual = maxn(&r);
                self.converged = true;
                return Ok(());
            }
            let jac = self.jacobian(&full)?;
            let lu = jac
                .sp_lu()
                .map_err(|e| Error::Convergence { reason: format!("singular Jacobian: {e:?}"), residual: best })?;
            let rhs = Mat::<f64>::from_fn(r.len(), 1, |i, _| -r[i]);
            let step = lu.solve(&rhs);
            let base = l2(&r);
            let mut t = 1.0;
            let mut accepted = None;
            let mut any_in_cone = false;
            for _ in 0..=30 {
                let trial: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + t * step[(i, 0)]).collect();
                scatter(&mut full, &trial, &self.stencils);
                let (rt, cone) = self.evaluate(&full);
                if cone {
                    any_in_cone = true;
                    if l2(&rt) <= (1.0 - 1e-4 * t) * base {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((nv, nr)) => {
                    v = nv;
                    r = nr;
                    scatter(&mut full, &v, &self.stencils);
                }
                None => {
                    scatter(&mut full, &v, &self.stencils);
                    self.set_unknowns(&v);
                    self.max_residual = maxn(&r);
                    return Err(if any_in_cone {
                        Error::Convergence { reason: "line search found no decrease".into(), residual: maxn(&r) }
                    } else {
                        Error::Cone("every damped Newton step leaves Γ_k".into())
                    });
                }
            }
            let now = maxn(&r);
            if now < best {
                best = now;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 10 {
                    return Err(Error::Convergence {
                        reason: "no residual decrease over 10 damped steps".into(),
                        residual: now,
                    });
                }
            }
        }
        if maxn(&r) <= opts.tol {
            self.set_unknowns(&v);
            self.max_residual = maxn(&r);
            self.converged = true;
            return Ok(());
        }
        Err(Error::Convergence { reason: format!("{} iterations exhausted", opts.max_iter), residual: maxn(&r) })
    }

    fn finish(&mut self) {
        let mut maxr: f64 = 0.0;
        for st in &self.stencils {
            let d = self.d2(st, &self.u);
            let g = Self::d1(st, &self.u);
            let x = self.grid.point(st.node);
            let res = self.sk2(&d) - self.rhs.eval(&x, self.u[st.node]);
            self.hess[st.node] = d;
            self.grad[st.node] = g;
            self.residual[st.node] = res;
            maxr = maxr.max(res.abs());
        }
        self.max_residual = maxr;
    }

    fn require_converged(&self) -> Result<()> {
        if self.converged { Ok(()) } else { Err(Error::Unconverged) }
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Grid indices of nodes inside the domain.
    pub fn inside_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.stencils.iter().map(|s| s.node)
    }

    pub fn hess_matrix(&self, node: usize) -> SymMatrix {
        let [a, b, c] = self.hess[node];
        SymMatrix::from_raw(2, vec![a, b, b, c])
    }

    /// Block center and cell offsets for biquadratic interpolation at `x`.
    fn block_at(&self, x: &[f64]) -> Option<(usize, f64, f64)> {
        let g = &self.grid;
        let fi = (x[0] - g.origin[0]) / g.h;
        let fj = (x[1] - g.origin[1]) / g.h;
        let (ri, rj) = (fi.round() as isize, fj.round() as isize);
        let mut best: Option<(usize, f64)> = None;
        for a in -3..=3isize {
            for b in -3..=3isize {
                let (i, j) = (ri + a, rj + b);
                if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
                    continue;
                }
                let q = g.index(i as usize, j as usize);
                if !self.full_block[q] {
                    continue;
                }
                let d = (fi - i as f64).powi(2) + (fj - j as f64).powi(2);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((q, d));
                }
            }
        }
        best.map(|(q, _)| {
            let (i, j) = g.coords(q);
            (q, fi - i as f64, fj - j as f64)
        })
    }

    fn block_values(&self, q: usize, field: impl Fn(usize) -> f64) -> [[f64; 3]; 3] {
        let mut b = [[0.0; 3]; 3];
        for (ai, a) in (-1..=1isize).enumerate() {
            for (bi, bb) in (-1..=1isize).enumerate() {
                b[ai][bi] = field(self.grid.offset(q, a, bb).expect("full block"));
            }
        }
        b
    }

    /// Biquadratic interpolation of a nodal field at `x`.
    pub fn interpolate(&self, x: &[f64], field: impl Fn(usize) -> f64) -> Result<f64> {
        let (q, s, t) = self
            .block_at(x)
            .ok_or_else(|| Error::Degenerate(format!("no interpolation block near {x:?}")))?;
        let b = self.block_values(q, field);
        Ok(biquad(&b, s, t, self.grid.h).0)
    }

    /// Biquadratic jet `(v, v_x, v_y, v_xx, v_xy, v_yy)` of a nodal field at `x`.
    pub fn jet(&self, x: &[f64], field: impl Fn(usize) -> f64) -> Result<[f64; 6]> {
        let (q, s, t) = self
            .block_at(x)
            .ok_or_else(|| Error::Degenerate(format!("no interpolation block near {x:?}")))?;
        let b = self.block_values(q, field);
        let r = biquad(&b, s, t, self.grid.h);
        Ok([r.0, r.1, r.2, r.3, r.4, r.5])
    }

    /// Discrete Hessian `(v_xx, v_xy, v_yy)` of a nodal field at an inside node:
    /// centered differences where the 3×3 block is inside, otherwise the
    /// Hessian of the nearest inside biquadratic block.
    pub fn field_hessian(&self, node: usize, v: &[f64]) -> Result<[f64; 3]> {
        let g = &self.grid;
        if self.full_block[node] {
            let at = |a, b| v[g.offset(node, a, b).expect("full block")];
            let h2 = g.h * g.h;
            return Ok([
                (at(1, 0) - 2.0 * v[node] + at(-1, 0)) / h2,
                (at(1, 1) - at(-1, 1) - at(1, -1) + at(-1, -1)) / (4.0 * h2),
                (at(0, 1) - 2.0 * v[node] + at(0, -1)) / h2,
            ]);
        }
        let j = self.jet(&g.point(node), |q| v[q])?;
        Ok([j[3], j[4], j[5]])
    }

    /// `|∇u|` along the boundary from a one-sided quadratic fit in the
    /// inward normal direction through `u = 0` on the boundary.
    pub fn boundary_gradient(&self, trace: &BoundaryTrace) -> Result<BoundaryGradient> {
        self.require_converged()?;
        let s1 = 2.5 * self.grid.h;
        let mut values = Vec::with_capacity(trace.samples.len());
        for s in &trace.samples {
            let p1 = [s.point[0] - s1 * s.normal[0], s.point[1] - s1 * s.normal[1]];
            let p2 = [s.point[0] - 2.0 * s1 * s.normal[0], s.point[1] - 2.0 * s1 * s.normal[1]];
            let u1 = self.interpolate(&p1, |q| self.u[q])?;
            let u2 = self.interpolate(&p2, |q| self.u[q])?;
            values.push(-(4.0 * u1 - u2) / (2.0 * s1));
        }
        Ok(BoundaryGradient::from_values(trace, values))
    }

    pub fn min_point(&self) -> Result<MinPoint> {
        self.require_converged()?;
        let p = self
            .inside_nodes()
            .min_by(|&a, &b| self.u[a].total_cmp(&self.u[b]))
            .expect("nonempty grid");
        if self.state[p] != NodeState::Interior {
            return Err(Error::Degenerate(format!(
                "minimum of u sits on a boundary-adjacent node at {:?}",
                self.grid.point(p)
            )));
        }
        let x = self.grid.point(p);
        let b = self.block_values(p, |q| self.u[q]);
        let (_, gx, gy, hxx, hxy, hyy) = biquad(&b, 0.0, 0.0, self.grid.h);
        let det = hxx * hyy - hxy * hxy;
        let mut z = x;
        if det > 0.0 {
            let dx = -(hyy * gx - hxy * gy) / det;
            let dy = -(-hxy * gx + hxx * gy) / det;
            let len = dx.hypot(dy);
            let scale = if len > self.grid.h { self.grid.h / len } else { 1.0 };
            z = [x[0] + scale * dx, x[1] + scale * dy];
        }
        let uz = self.interpolate(&z, |q| self.u[q])?.min(self.u[p]);
        Ok(MinPoint { z: z.to_vec(), u: uz, delta: self.domain.boundary_distance(&z) })
    }

    /// Volume samples on a polar product rule about the domain center:
    /// `n_theta` trapezoid angles times `n_r` Gauss–Legendre radii.
    pub fn volume_samples(&self, n_theta: usize, n_r: usize) -> Result<Vec<VolumeSample>> {
        self.require_converged()?;
        let c = self.domain.center();
        let rho = |t: f64| match self.domain.shape() {
            Shape::Ball { radius, .. } => *radius,
            Shape::Curve(p) => p.rho(t),
            _ => unreachable!("planar star domain"),
        };
        let radial = gauss_legendre(n_r, 0.0, 1.0);
        let mut out = Vec::with_capacity(n_theta * n_r);
        for (t, wt) in periodic_trapezoid(n_theta) {
            let r = rho(t);
            for &(xi, wr) in &radial {
                let x = [c[0] + r * xi * t.cos(), c[1] + r * xi * t.sin()];
                let (q, s, tt) = self
                    .block_at(&x)
                    .ok_or_else(|| Error::Degenerate(format!("no interpolation block near {x:?}")))?;
                let val = |f: &dyn Fn(usize) -> f64| biquad(&self.block_values(q, f), s, tt, self.grid.h).0;
                let u = val(&|p| self.u[p]);
                let grad = vec![val(&|p| self.grad[p][0]), val(&|p| self.grad[p][1])];
                let hxx = val(&|p| self.hess[p][0]);
                let hxy = val(&|p| self.hess[p][1]);
                let hyy = val(&|p| self.hess[p][2]);
                out.push(VolumeSample {
                    x: x.to_vec(),
                    u,
                    grad,
                    hess: SymMatrix::from_raw(2, vec![hxx, hxy, hxy, hyy]),
                    weight: wt * wr * r * r * xi,
                });
            }
        }
        Ok(out)
    }

    /// Quadrature view with `m` boundary samples and a polar volume rule.
    pub fn sample(&self, m: usize) -> Result<SampledSolution> {
        self.require_converged()?;
        let trace = self.domain.boundary_trace(m)?;
        let bg = self.boundary_gradient(&trace)?;
        let n_theta = 256.max(m / 2);
        Ok(SampledSolution {
            n: 2,
            k: self.k,
            rhs: self.rhs.clone(),
            grad_norm: bg.values,
            trace,
            volume: self.volume_samples(n_theta, 48)?,
            min: self.min_point()?,
            radial_only: false,
            h: Some(self.grid.h),
        })
    }

    pub fn dump(&self) -> SolutionDump {
        let g = &self.grid;
        SolutionDump {
            schema: 1,
            h: g.h,
            nx: g.nx,
            ny: g.ny,
            bbox: [
                g.origin[0],
                g.origin[1],
                g.origin[0] + (g.nx - 1) as f64 * g.h,
                g.origin[1] + (g.ny - 1) as f64 * g.h,
            ],
            node_mask: self
                .state
                .iter()
                .map(|s| match s {
                    NodeState::Exterior => 0,
                    NodeState::Interior => 1,
                    NodeState::BoundaryAdjacent => 2,
                })
                .collect(),
            u: self.u.clone(),
        }
    }
}

/// Value, gradient and Hessian of the biquadratic interpolant of a 3×3 block
/// at cell offsets `(s, t)` from its center. `b[a][c]` is the value at offset
/// `(a - 1, c - 1)`.
fn biquad(b: &[[f64; 3]; 3], s: f64, t: f64, h: f64) -> (f64, f64, f64, f64, f64, f64) {
    let l = |x: f64| [0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)];
    let d = |x: f64| [x - 0.5, -2.0 * x, x + 0.5];
    let dd = [1.0, -2.0, 1.0];
    let (ls, lt, ds, dt) = (l(s), l(t), d(s), d(t));
    let mut r = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for a in 0..3 {
        for c in 0..3 {
            let v = b[a][c];
            r.0 += v * ls[a] * lt[c];
            r.1 += v * ds[a] * lt[c];
            r.2 += v * ls[a] * dt[c];
            r.3 += v * dd[a] * lt[c];
            r.4 += v * ds[a] * dt[c];
            r.5 += v * ls[a] * dd[c];
        }
    }
    (r.0, r.1 / h, r.2 / h, r.3 / (h * h), r.4 / (h * h), r.5 / (h * h))
}

/// Grid dump written next to reports on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDump {
    pub schema: u32,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    /// `[x_min, y_min, x_max, y_max]` of the node lattice.
    pub bbox: [f64; 4],
    /// Row-major (`index = j * nx + i`): 0 exterior, 1 interior, 2 boundary-adjacent.
    pub node_mask: Vec<u8>,
    /// Row-major nodal values, 0 at exterior nodes.
    pub u: Vec<f64>,
}

/// Result of one max-principle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Smallest `rhs − lhs` margin observed (negative means violated).
    pub worst_margin: f64,
    pub tolerance: f64,
    /// Up to ten offending node positions.
    pub offending: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub checks: Vec<CheckOutcome>,
}

impl MaxPrincipleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Comparison-principle bounds at every inside node. The tolerance is
/// `5 h²` (absolute), the size of the discretization error.
pub fn max_principle_checks(
    sol: &SolutionField,
    bg: &BoundaryGradient,
    constants: &crate::geometry::DomainConstants,
) -> Result<MaxPrincipleReport> {
    sol.require_converged()?;
    let tol = 5.0 * sol.h() * sol.h();
    let mut checks = Vec::new();
    let nodes: Vec<usize> = sol.inside_nodes().collect();
    let mut run = |name: &str, margin: &dyn Fn(usize) -> f64| {
        let mut worst = f64::INFINITY;
        let mut off = Vec::new();
        for &p in &nodes {
            let m = margin(p);
            worst = worst.min(m);
            if m < -tol && off.len() < 10 {
                off.push(sol.grid.point(p));
            }
        }
        checks.push(CheckOutcome {
            name: name.into(),
            pass: worst >= -tol,
            worst_margin: worst,
            tolerance: tol,
            offending: off,
        });
    };
    let dist_to = |p: usize| sol.domain.boundary_distance(&sol.grid.point(p));
    run("-u >= delta^2/2", &|p| -sol.u[p] - 0.5 * dist_to(p).powi(2));
    run("-u >= (r_i/2) delta", &|p| -sol.u[p] - 0.5 * constants.r_i * dist_to(p));
    run("|grad u| <= max on boundary", &|p| bg.max - sol.grad[p][0].hypot(sol.grad[p][1]));
    let umax = nodes.iter().map(|&p| -sol.u[p]).fold(0.0, f64::max);
    let d = constants.diameter;
    run("max(-u) <= d^2/2", &|_| 0.5 * d * d - umax);
    run("max(-u) <= M^2/2", &|_| 0.5 * bg.max * bg.max - umax);
    Ok(MaxPrincipleReport { checks })
}

/// Error between a field solution and a known solution over inside nodes.
pub fn max_node_error(sol: &SolutionField, exact: impl Fn(&[f64]) -> f64) -> f64 {
    sol.inside_nodes()
        .map(|p| (sol.u[p] - exact(&sol.grid.point(p))).abs())
        .fold(0.0, f64::max)
}

/// Profile helper for callers that need the polar radius of a planar domain.
pub fn planar_radius(dom: &StarDomain, t: f64) -> Option<f64> {
    match dom.shape() {
        Shape::Ball { n: 2, radius } => Some(*radius),
        Shape::Curve(p) => Some(p.rho(t)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_basics() {
        let s = solve_radial(3, 2, 1.0).unwrap();
        assert_eq!(s.u(&[0.0, 0.0, 0.0]), -0.5);
        assert!(solve_radial(2, 3, 1.0).is_err());
    }

    #[test]
    fn rhs_polynomial() {
        let f = Rhs::Polynomial(vec![2.0, -0.5]);
        assert_eq!(f.eval(&[0.0, 0.0], 2.0), 1.0);
        assert_eq!(f.du(2.0), -0.5);
        assert!((f.antiderivative(-1.0).unwrap() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn biquad_reproduces_quadratics() {
        let q = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * x + 3.0 * x * y - 2.0 * y * y;
        let h = 0.1;
        let mut b = [[0.0; 3]; 3];
        for a in 0..3 {
            for c in 0..3 {
                b[a][c] = q((a as f64 - 1.0) * h, (c as f64 - 1.0) * h);
            }
        }
        let (s, t) = (0.7, -1.3);
        let r = biquad(&b, s, t, h);
        let (x, y) = (s * h, t * h);
        assert!((r.0 - q(x, y)).abs() < 1e-13);
        assert!((r.1 - (2.0 + x + 3.0 * y)).abs() < 1e-12);
        assert!((r.2 - (-1.0 + 3.0 * x - 4.0 * y)).abs() < 1e-12);
        assert!((r.3 - 1.0).abs() < 1e-10 && (r.4 - 3.0).abs() < 1e-10 && (r.5 + 4.0).abs() < 1e-10);
    }

    #[test]
    fn unconverged_is_refused() {
        let dom = StarDomain::ball(2, 1.0).unwrap();
        let sol = discretize(&dom, 1, 0.1, Rhs::standard(2, 1)).unwrap();
        let t = dom.boundary_trace(64).unwrap();
        assert!(matches!(sol.boundary_gradient(&t), Err(Error::Unconverged)));
    }
}
