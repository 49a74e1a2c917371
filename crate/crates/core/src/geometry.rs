//! Star-shaped domains, boundary traces and curvature integrals.
//!
//! Supported shapes are exact balls in any dimension, 2D curves given in
//! polar form around a center, 3D surfaces of revolution about the `z` axis
//! given by a polar meridian profile, and a 2D dumbbell (two round lobes
//! joined by concave circular fillets) which is not star-shaped but is
//! accepted for the bubbling diagnostics.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_legendre, periodic_trapezoid};
use crate::symfun::{binomial, elementary_symmetric, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;

/// Volume of the unit ball in `R^n`.
pub fn omega(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => TAU / n as f64 * omega(n - 2),
    }
}

/// Polar radial profile `ρ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `ρ(t) = Σ_j cos[j] cos(jt) + sin[j] sin(jt)`.
    Fourier { cos: Vec<f64>, sin: Vec<f64> },
    /// Ellipse with semi-axis `a` along `t = 0` and `b` along `t = π/2`.
    Ellipse { a: f64, b: f64 },
}

impl Profile {
    /// `(ρ, ρ', ρ'')` at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            Profile::Fourier { cos, sin } => {
                let mut r = (0.0, 0.0, 0.0);
                for (j, &c) in cos.iter().enumerate() {
                    let jf = j as f64;
                    let (s, co) = (jf * t).sin_cos();
                    r.0 += c * co;
                    r.1 -= c * jf * s;
                    r.2 -= c * jf * jf * co;
                }
                for (j, &c) in sin.iter().enumerate() {
                    let jf = j as f64;
                    let (s, co) = (jf * t).sin_cos();
                    r.0 += c * s;
                    r.1 += c * jf * co;
                    r.2 -= c * jf * jf * s;
                }
                r
            }
            Profile::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                let d = a * a - b * b;
                let g = b * b + d * s * s;
                let g1 = d * 2.0 * s * c;
                let g2 = 2.0 * d * (c * c - s * s);
                let ab = a * b;
                let rho = ab / g.sqrt();
                let rho1 = -0.5 * ab * g.powf(-1.5) * g1;
                let rho2 = ab * (0.75 * g.powf(-2.5) * g1 * g1 - 0.5 * g.powf(-1.5) * g2);
                (rho, rho1, rho2)
            }
        }
    }

    pub fn rho(&self, t: f64) -> f64 {
        match self {
            Profile::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                a * b / (b * b * c * c + a * a * s * s).sqrt()
            }
            _ => self.eval(t).0,
        }
    }
}

/// Signed curvature of a polar curve, positive where it bends toward the origin.
fn polar_curvature(rho: f64, r1: f64, r2: f64) -> f64 {
    (rho * rho + 2.0 * r1 * r1 - rho * r2) / (rho * rho + r1 * r1).powf(1.5)
}

/// Circular arc traversed with `Ω` on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arc {
    cx: f64,
    cy: f64,
    radius: f64,
    start: f64,
    sweep: f64,
    /// `true` for arcs bounding a disk contained in the domain.
    convex: bool,
}

impl Arc {
    fn point(&self, ang: f64) -> (f64, f64) {
        (self.cx + self.radius * ang.cos(), self.cy + self.radius * ang.sin())
    }

    fn length(&self) -> f64 {
        self.radius * self.sweep.abs()
    }

    fn covers(&self, ang: f64) -> bool {
        let d = if self.sweep > 0.0 { ang - self.start } else { self.start - ang };
        d.rem_euclid(TAU) <= self.sweep.abs()
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let r = dx.hypot(dy);
        if r > 0.0 && self.covers(dy.atan2(dx)) {
            return (r - self.radius).abs();
        }
        if r == 0.0 {
            return self.radius;
        }
        let (ax, ay) = self.point(self.start);
        let (bx, by) = self.point(self.start + self.sweep);
        (x - ax).hypot(y - ay).min((x - bx).hypot(y - by))
    }

    /// Exact `½∮(x dy − y dx)` along the arc.
    fn green_area(&self) -> f64 {
        let (a0, a1) = (self.start, self.start + self.sweep);
        0.5 * (self.radius
            * (self.cx * (a1.sin() - a0.sin()) - self.cy * (a1.cos() - a0.cos()))
            + self.radius * self.radius * self.sweep)
    }
}

/// Two disks of radius `lobe_radius` centered at `(±c, 0)` joined by a neck of
/// half-width `neck_half_width`, bounded by two concave fillet circles of
/// radius `fillet_radius` centered at `(0, ±(w + r))` that touch both lobes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dumbbell {
    pub lobe_radius: f64,
    pub neck_half_width: f64,
    pub fillet_radius: f64,
    /// Half the distance between the lobe centers.
    pub half_separation: f64,
    arcs: [Arc; 4],
}

impl Dumbbell {
    /// Builds from the fillet radius; the lobe separation follows from tangency.
    pub fn with_fillet(lobe_radius: f64, neck_half_width: f64, fillet_radius: f64) -> Result<Self> {
        let (l, w, r) = (lobe_radius, neck_half_width, fillet_radius);
        if !(l > 0.0 && w > 0.0 && w < l && r > 0.0) {
            return Err(Error::Domain(format!(
                "dumbbell needs 0 < neck half-width < lobe radius and a positive fillet (got L={l}, w={w}, r={r})"
            )));
        }
        let c = ((l + r).powi(2) - (w + r).powi(2)).sqrt();
        let g = (w + r).atan2(c);
        let arcs = [
            Arc { cx: c, cy: 0.0, radius: l, start: -(PI - g), sweep: 2.0 * (PI - g), convex: true },
            Arc { cx: 0.0, cy: w + r, radius: r, start: -g, sweep: -(PI - 2.0 * g), convex: false },
            Arc { cx: -c, cy: 0.0, radius: l, start: g, sweep: 2.0 * (PI - g), convex: true },
            Arc { cx: 0.0, cy: -(w + r), radius: r, start: PI - g, sweep: -(PI - 2.0 * g), convex: false },
        ];
        Ok(Self { lobe_radius: l, neck_half_width: w, fillet_radius: r, half_separation: c, arcs })
    }

    /// Builds from the distance between lobe centers.
    pub fn with_separation(lobe_radius: f64, neck_half_width: f64, separation: f64) -> Result<Self> {
        let (l, w, c) = (lobe_radius, neck_half_width, 0.5 * separation);
        if !(w < l) {
            return Err(Error::Domain("neck half-width must be below the lobe radius".into()));
        }
        let r = (c * c - l * l + w * w) / (2.0 * (l - w));
        if !(r > 0.0) {
            return Err(Error::Domain(format!(
                "lobes {separation} apart leave no room for a neck of half-width {w}"
            )));
        }
        Self::with_fillet(l, w, r)
    }

    /// The pinching family used for neck sequences: fillet radius equal to the
    /// neck half-width, lobes of radius 1.
    pub fn pinched(neck_half_width: f64) -> Result<Self> {
        Self::with_fillet(1.0, neck_half_width, neck_half_width)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (l, c, w, r) = (self.lobe_radius, self.half_separation, self.neck_half_width, self.fillet_radius);
        if (x - c).hypot(y) < l || (x + c).hypot(y) < l {
            return true;
        }
        let tx = c * r / (l + r);
        x.abs() <= tx && y.abs() < w + r - (r * r - x * x).sqrt()
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        self.arcs.iter().map(|a| a.distance(x, y)).fold(f64::INFINITY, f64::min)
    }

    fn area(&self) -> f64 {
        self.arcs.iter().map(Arc::green_area).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball { n: usize, radius: f64 },
    /// Planar curve `center + ρ(θ)(cos θ, sin θ)`.
    Curve(Profile),
    /// Surface of revolution with meridian `(ρ(φ) sin φ, ρ(φ) cos φ)` in the
    /// `(r, z)` half-plane, `φ ∈ [0, π]` measured from the `+z` axis.
    Revolution(Profile),
    Dumbbell(Dumbbell),
}

/// Dense parameter samples used to seed nearest-point searches.
#[derive(Debug, Clone, Default)]
struct Seeds {
    t: Vec<f64>,
    p: Vec<(f64, f64)>,
    periodic: bool,
}

/// A bounded domain with a closed-form boundary description.
///
/// Despite the name, the dumbbell variant is not star-shaped; every other
/// variant is star-shaped with respect to its center.
#[derive(Debug, Clone)]
pub struct StarDomain {
    shape: Shape,
    center: Vec<f64>,
    pub label: Option<String>,
    pub eps: Option<f64>,
    seeds: Seeds,
}

const SEEDS: usize = 2048;

impl StarDomain {
    pub fn new(shape: Shape, center: Vec<f64>) -> Result<Self> {
        let n = match &shape {
            Shape::Ball { n, radius } => {
                if *n == 0 || *n > MAX_DIM {
                    return invalid(format!("ball dimension {n} outside 1..={MAX_DIM}"));
                }
                if !(*radius > 0.0) {
                    return Err(Error::Domain(format!("ball radius {radius} is not positive")));
                }
                *n
            }
            Shape::Curve(p) | Shape::Revolution(p) => {
                check_profile(p, matches!(shape, Shape::Revolution(_)))?;
                if matches!(shape, Shape::Curve(_)) { 2 } else { 3 }
            }
            Shape::Dumbbell(_) => 2,
        };
        if center.len() != n {
            return invalid(format!("center has {} coordinates, expected {n}", center.len()));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return invalid("center is not finite");
        }
        let mut dom = Self { shape, center, label: None, eps: None, seeds: Seeds::default() };
        dom.seeds = dom.build_seeds();
        Ok(dom)
    }

    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball { n, radius }, vec![0.0; n])
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Domain("ellipse semi-axes must be positive".into()));
        }
        Self::new(Shape::Curve(Profile::Ellipse { a, b }), vec![0.0, 0.0])
    }

    /// Spheroid with equatorial semi-axis `a` and polar semi-axis `c`.
    pub fn spheroid(a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && c > 0.0) {
            return Err(Error::Domain("spheroid semi-axes must be positive".into()));
        }
        Self::new(Shape::Revolution(Profile::Ellipse { a: c, b: a }), vec![0.0; 3])
    }

    pub fn fourier_curve(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Curve(Profile::Fourier { cos, sin }), vec![0.0, 0.0])
    }

    pub fn fourier_revolution(cos: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Revolution(Profile::Fourier { cos, sin: vec![] }), vec![0.0; 3])
    }

    pub fn dumbbell(d: Dumbbell) -> Result<Self> {
        Self::new(Shape::Dumbbell(d), vec![0.0, 0.0])
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    /// The dilation `x ↦ s x` of the domain (the center is scaled too).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("dilation factor {s} is not positive"));
        }
        let profile = |p: &Profile| match p {
            Profile::Fourier { cos, sin } => Profile::Fourier {
                cos: cos.iter().map(|c| c * s).collect(),
                sin: sin.iter().map(|c| c * s).collect(),
            },
            Profile::Ellipse { a, b } => Profile::Ellipse { a: a * s, b: b * s },
        };
        let shape = match &self.shape {
            Shape::Ball { n, radius } => Shape::Ball { n: *n, radius: radius * s },
            Shape::Curve(p) => Shape::Curve(profile(p)),
            Shape::Revolution(p) => Shape::Revolution(profile(p)),
            Shape::Dumbbell(d) => Shape::Dumbbell(Dumbbell::with_fillet(
                d.lobe_radius * s,
                d.neck_half_width * s,
                d.fillet_radius * s,
            )?),
        };
        let mut out = Self::new(shape, self.center.iter().map(|c| c * s).collect())?;
        out.label = self.label.clone();
        out.eps = self.eps;
        Ok(out)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ball { n, .. } => *n,
            Shape::Curve(_) | Shape::Dumbbell(_) => 2,
            Shape::Revolution(_) => 3,
        }
    }

    pub fn is_star_shaped(&self) -> bool {
        !matches!(self.shape, Shape::Dumbbell(_))
    }

    fn build_seeds(&self) -> Seeds {
        match &self.shape {
            Shape::Curve(p) => {
                let t: Vec<f64> = (0..SEEDS).map(|j| TAU * j as f64 / SEEDS as f64).collect();
                let pts = t.iter().map(|&t| polar_point(p.rho(t), t)).collect();
                Seeds { t, p: pts, periodic: true }
            }
            Shape::Revolution(p) => {
                let t: Vec<f64> = (0..=SEEDS).map(|j| PI * j as f64 / SEEDS as f64).collect();
                let pts = t.iter().map(|&t| meridian_point(p.rho(t), t)).collect();
                Seeds { t, p: pts, periodic: false }
            }
            _ => Seeds::default(),
        }
    }

    /// Coordinates relative to the center, reduced to the plane of the
    /// profile: `(x, y)` for curves, `(r, z)` for revolution surfaces.
    fn reduce(&self, p: &[f64]) -> (f64, f64) {
        let c = &self.center;
        match &self.shape {
            Shape::Revolution(_) => {
                let r = (p[0] - c[0]).hypot(p[1] - c[1]);
                (r, p[2] - c[2])
            }
            _ => (p[0] - c[0], p[1] - c[1]),
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        self.level(p) < 0.0
    }

    /// A function negative inside and positive outside, zero on the boundary.
    pub fn level(&self, p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => {
                let r2: f64 = p.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
                r2.sqrt() - radius
            }
            Shape::Curve(prof) => {
                let (x, y) = self.reduce(p);
                x.hypot(y) - prof.rho(y.atan2(x))
            }
            Shape::Revolution(prof) => {
                let (r, z) = self.reduce(p);
                r.hypot(z) - prof.rho(r.atan2(z))
            }
            Shape::Dumbbell(d) => {
                let (x, y) = self.reduce(p);
                let dist = d.distance(x, y);
                if d.contains(x, y) { -dist } else { dist }
            }
        }
    }

    /// Euclidean distance from `p` to the boundary.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { .. } => self.level(p).abs(),
            Shape::Dumbbell(d) => {
                let (x, y) = self.reduce(p);
                d.distance(x, y)
            }
            Shape::Curve(prof) | Shape::Revolution(prof) => {
                let q = self.reduce(p);
                let rev = matches!(self.shape, Shape::Revolution(_));
                let point = |t: f64| {
                    let r = prof.rho(t);
                    if rev { meridian_point(r, t) } else { polar_point(r, t) }
                };
                nearest_on_curve(&self.seeds, q, point)
            }
        }
    }

    /// Distance from an interior point to the boundary along the unit direction `dir`,
    /// searched in `(0, max_len]`. Returns `None` when no crossing occurs.
    pub fn cut_distance(&self, p: &[f64], dir: &[f64], max_len: f64) -> Option<f64> {
        let at = |s: f64| -> Vec<f64> { p.iter().zip(dir).map(|(a, d)| a + s * d).collect() };
        if self.contains(&at(max_len)) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, max_len);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.contains(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Closed-form or high-order volume, independent of the boundary trace.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Ball { n, radius } => omega(*n) * radius.powi(*n as i32),
            Shape::Curve(Profile::Ellipse { a, b }) => PI * a * b,
            Shape::Curve(p) => {
                periodic_trapezoid(4096).iter().map(|&(t, w)| 0.5 * w * p.rho(t).powi(2)).sum()
            }
            Shape::Revolution(Profile::Ellipse { a, b }) => 4.0 / 3.0 * PI * b * b * a,
            Shape::Revolution(p) => gauss_legendre(256, 0.0, PI)
                .iter()
                .map(|&(t, w)| TAU / 3.0 * w * p.rho(t).powi(3) * t.sin())
                .sum(),
            Shape::Dumbbell(d) => d.area(),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        match &self.shape {
            Shape::Ball { radius, .. } => {
                for i in 0..n {
                    lo[i] = self.center[i] - radius;
                    hi[i] = self.center[i] + radius;
                }
                return (lo, hi);
            }
            Shape::Dumbbell(d) => {
                let ext = d.half_separation + d.lobe_radius;
                return (
                    vec![self.center[0] - ext, self.center[1] - d.lobe_radius],
                    vec![self.center[0] + ext, self.center[1] + d.lobe_radius],
                );
            }
            _ => {}
        }
        let sample = self.boundary_trace(4096).expect("trace of a validated domain");
        for s in &sample.samples {
            for i in 0..n {
                lo[i] = lo[i].min(s.point[i]);
                hi[i] = hi[i].max(s.point[i]);
            }
        }
        if matches!(self.shape, Shape::Revolution(_)) {
            let rmax = hi[0] - self.center[0];
            lo[0] = self.center[0] - rmax;
            lo[1] = self.center[1] - rmax;
            hi[1] = self.center[1] + rmax;
        }
        (lo, hi)
    }

    /// Minimum and maximum of the radial profile.
    pub fn radius_range(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Ball { radius, .. } => (*radius, *radius),
            Shape::Curve(p) | Shape::Revolution(p) => {
                let span = if matches!(self.shape, Shape::Curve(_)) { TAU } else { PI };
                (0..=SEEDS).map(|j| p.rho(span * j as f64 / SEEDS as f64)).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(a, b), r| (a.min(r), b.max(r)),
                )
            }
            Shape::Dumbbell(d) => (d.neck_half_width, d.half_separation + d.lobe_radius),
        }
    }

    /// Samples of the boundary carrying everything needed for surface integrals.
    ///
    /// `m` is the number of samples for planar curves and balls; revolution
    /// surfaces use `max(64, m / 8)` Gauss–Legendre nodes in the polar angle,
    /// each standing for a full parallel.
    pub fn boundary_trace(&self, m: usize) -> Result<BoundaryTrace> {
        if m < 8 {
            return invalid(format!("boundary trace needs at least 8 samples (got {m})"));
        }
        let n = self.dim();
        let c = &self.center;
        let mut samples = Vec::new();
        match &self.shape {
            Shape::Ball { radius, .. } => {
                let area = n as f64 * omega(n) * radius.powi(n as i32 - 1);
                for (t, _) in periodic_trapezoid(m) {
                    let mut nu = vec![0.0; n];
                    nu[0] = t.cos();
                    if n > 1 {
                        nu[1] = t.sin();
                    }
                    let point = c.iter().zip(&nu).map(|(ci, v)| ci + radius * v).collect();
                    samples.push(BoundarySample {
                        param: t,
                        point,
                        normal: nu,
                        curvatures: vec![1.0 / radius; n - 1],
                        support: *radius,
                        weight: area / m as f64,
                    });
                }
            }
            Shape::Curve(p) => {
                for (t, w) in periodic_trapezoid(m) {
                    let (rho, r1, r2) = p.eval(t);
                    if !(rho > 0.0) {
                        return Err(Error::Domain(format!("radial profile {rho} at θ = {t}")));
                    }
                    let (s, co) = t.sin_cos();
                    let tx = r1 * co - rho * s;
                    let ty = r1 * s + rho * co;
                    let speed = tx.hypot(ty);
                    samples.push(BoundarySample {
                        param: t,
                        point: vec![c[0] + rho * co, c[1] + rho * s],
                        normal: vec![ty / speed, -tx / speed],
                        curvatures: vec![polar_curvature(rho, r1, r2)],
                        support: rho * rho / speed,
                        weight: speed * w,
                    });
                }
            }
            Shape::Revolution(p) => {
                for (t, w) in gauss_legendre(64.max(m / 8), 0.0, PI) {
                    let (rho, r1, r2) = p.eval(t);
                    if !(rho > 0.0) {
                        return Err(Error::Domain(format!("radial profile {rho} at φ = {t}")));
                    }
                    let (s, co) = t.sin_cos();
                    let tr = r1 * s + rho * co;
                    let tz = r1 * co - rho * s;
                    let speed = tr.hypot(tz);
                    let (nr, nz) = (-tz / speed, tr / speed);
                    let r = rho * s;
                    samples.push(BoundarySample {
                        param: t,
                        point: vec![c[0] + r, c[1], c[2] + rho * co],
                        normal: vec![nr, 0.0, nz],
                        curvatures: vec![polar_curvature(rho, r1, r2), nr / r],
                        support: rho * rho / speed,
                        weight: TAU * r * speed * w,
                    });
                }
            }
            Shape::Dumbbell(d) => {
                let total: f64 = d.arcs.iter().map(Arc::length).sum();
                for arc in &d.arcs {
                    let count = ((m as f64 * arc.length() / total).round() as usize).max(8);
                    for (u, w) in gauss_legendre(count, 0.0, 1.0) {
                        let ang = arc.start + u * arc.sweep;
                        let (px, py) = arc.point(ang);
                        let (ux, uy) = (ang.cos(), ang.sin());
                        let (nx, ny, kappa) = if arc.convex {
                            (ux, uy, 1.0 / arc.radius)
                        } else {
                            (-ux, -uy, -1.0 / arc.radius)
                        };
                        samples.push(BoundarySample {
                            param: ang,
                            point: vec![c[0] + px, c[1] + py],
                            normal: vec![nx, ny],
                            curvatures: vec![kappa],
                            support: px * nx + py * ny,
                            weight: arc.length() * w,
                        });
                    }
                }
            }
        }
        let perimeter = samples.iter().map(|s| s.weight).sum();
        Ok(BoundaryTrace {
            n,
            samples,
            perimeter,
            volume: self.volume(),
            center: self.center.clone(),
            revolution: matches!(self.shape, Shape::Revolution(_)),
        })
    }

    /// Parses the JSON domain description.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DomainFile = serde_json::from_str(text)?;
        spec.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The JSON description that [`StarDomain::from_json`] reads back.
    pub fn to_json(&self) -> String {
        let mut f = DomainFile {
            schema: 1,
            kind: String::new(),
            n: Some(self.dim()),
            center: Some(self.center.clone()),
            fourier_cos: None,
            fourier_sin: None,
            semi_axes: None,
            radius: None,
            lobe_radius: None,
            neck_half_width: None,
            fillet_radius: None,
            separation: None,
            label: self.label.clone(),
            eps: self.eps,
        };
        match &self.shape {
            Shape::Ball { radius, .. } => {
                f.kind = "ball".into();
                f.radius = Some(*radius);
            }
            Shape::Curve(Profile::Ellipse { a, b }) => {
                f.kind = "ellipse".into();
                f.semi_axes = Some(vec![*a, *b]);
            }
            Shape::Revolution(Profile::Ellipse { a, b }) => {
                f.kind = "spheroid".into();
                f.semi_axes = Some(vec![*b, *a]);
            }
            Shape::Curve(Profile::Fourier { cos, sin }) => {
                f.kind = "curve2d".into();
                f.fourier_cos = Some(cos.clone());
                f.fourier_sin = Some(sin.clone());
            }
            Shape::Revolution(Profile::Fourier { cos, .. }) => {
                f.kind = "revolution3d".into();
                f.fourier_cos = Some(cos.clone());
            }
            Shape::Dumbbell(d) => {
                f.kind = "dumbbell".into();
                f.lobe_radius = Some(d.lobe_radius);
                f.neck_half_width = Some(d.neck_half_width);
                f.fillet_radius = Some(d.fillet_radius);
            }
        }
        serde_json::to_string_pretty(&f).expect("domain serializes")
    }
}

fn check_profile(p: &Profile, revolution: bool) -> Result<()> {
    match p {
        Profile::Ellipse { a, b } => {
            if !(*a > 0.0 && *b > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Domain("semi-axes must be positive".into()));
            }
        }
        Profile::Fourier { cos, sin } => {
            if cos.is_empty() {
                return invalid("fourier_cos needs at least the constant term");
            }
            if cos.iter().chain(sin).any(|v| !v.is_finite()) {
                return invalid("non-finite Fourier coefficient");
            }
            if sin.first().is_some_and(|&s| s != 0.0) {
                return invalid("fourier_sin[0] multiplies sin(0) and must be 0");
            }
            let span = if revolution { PI } else { TAU };
            for j in 0..=SEEDS {
                let r = p.rho(span * j as f64 / SEEDS as f64);
                if !(r > 0.0) {
                    return Err(Error::Domain(format!("radial profile reaches {r:.3e}")));
                }
            }
            if revolution {
                let scale: f64 = cos.iter().chain(sin).map(|c| c.abs()).sum();
                for t in [0.0, PI] {
                    let d = p.eval(t).1;
                    if d.abs() > 1e-12 * scale.max(1.0) {
                        return invalid(format!("profile derivative {d:.3e} at pole φ = {t}"));
                    }
                }
                if sin.iter().any(|&s| s != 0.0) {
                    return invalid("revolution profiles take cosine terms only");
                }
            }
        }
    }
    Ok(())
}

fn polar_point(rho: f64, t: f64) -> (f64, f64) {
    (rho * t.cos(), rho * t.sin())
}

fn meridian_point(rho: f64, t: f64) -> (f64, f64) {
    (rho * t.sin(), rho * t.cos())
}

fn nearest_on_curve(seeds: &Seeds, q: (f64, f64), point: impl Fn(f64) -> (f64, f64)) -> f64 {
    let d2 = |p: (f64, f64)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
    let m = seeds.t.len();
    let vals: Vec<f64> = seeds.p.iter().map(|&p| d2(p)).collect();
    // Refine the three best discrete local minima.
    let mut cands: Vec<usize> = (0..m)
        .filter(|&i| {
            let prev = if i == 0 { if seeds.periodic { m - 1 } else { 0 } } else { i - 1 };
            let next = if i + 1 == m { if seeds.periodic { 0 } else { i } } else { i + 1 };
            vals[i] <= vals[prev] && vals[i] <= vals[next]
        })
        .collect();
    cands.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    cands.truncate(3);
    let step = seeds.t[1] - seeds.t[0];
    let (tmin, tmax) = (seeds.t[0], seeds.t[m - 1]);
    let mut best = vals[cands[0]];
    for &i in &cands {
        let mut a = seeds.t[i] - step;
        let mut b = seeds.t[i] + step;
        if !seeds.periodic {
            a = a.max(tmin);
            b = b.min(tmax);
        }
        let f = |t: f64| d2(point(t));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..60 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = f(x2);
            }
        }
        best = best.min(f1).min(f2);
    }
    best.sqrt()
}

/// JSON domain description, version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub schema: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_cos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_sin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lobe_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neck_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fillet_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl DomainFile {
    pub fn build(&self) -> Result<StarDomain> {
        if self.schema != 1 {
            return invalid(format!("unsupported domain schema {}", self.schema));
        }
        let need = |name: &str, v: &Option<f64>| -> Result<f64> {
            v.ok_or_else(|| Error::Validation(format!("kind '{}' needs '{name}'", self.kind)))
        };
        let expect_n = |n: usize| -> Result<()> {
            match self.n {
                Some(m) if m != n => invalid(format!("kind '{}' is {n}-dimensional, got n = {m}", self.kind)),
                _ => Ok(()),
            }
        };
        let axes = |len: usize| -> Result<Vec<f64>> {
            match &self.semi_axes {
                Some(v) if v.len() == len => Ok(v.clone()),
                _ => invalid(format!("kind '{}' needs {len} semi_axes", self.kind)),
            }
        };
        let shape = match self.kind.as_str() {
            "ball" => {
                let n = self.n.ok_or_else(|| Error::Validation("ball needs 'n'".into()))?;
                Shape::Ball { n, radius: need("radius", &self.radius)? }
            }
            "ellipse" => {
                expect_n(2)?;
                let v = axes(2)?;
                Shape::Curve(Profile::Ellipse { a: v[0], b: v[1] })
            }
            "spheroid" => {
                expect_n(3)?;
                let v = axes(2)?;
                Shape::Revolution(Profile::Ellipse { a: v[1], b: v[0] })
            }
            "curve2d" | "revolution3d" => {
                let rev = self.kind == "revolution3d";
                expect_n(if rev { 3 } else { 2 })?;
                let cos = self
                    .fourier_cos
                    .clone()
                    .ok_or_else(|| Error::Validation("missing fourier_cos".into()))?;
                let sin = self.fourier_sin.clone().unwrap_or_default();
                let p = Profile::Fourier { cos, sin };
                if rev { Shape::Revolution(p) } else { Shape::Curve(p) }
            }
            "dumbbell" => {
                expect_n(2)?;
                let l = need("lobe_radius", &self.lobe_radius)?;
                let w = need("neck_half_width", &self.neck_half_width)?;
                let d = match (self.fillet_radius, self.separation) {
                    (Some(r), None) => Dumbbell::with_fillet(l, w, r)?,
                    (None, Some(s)) => Dumbbell::with_separation(l, w, s)?,
                    _ => return invalid("dumbbell needs exactly one of fillet_radius, separation"),
                };
                Shape::Dumbbell(d)
            }
            other => return invalid(format!("unknown domain kind '{other}'")),
        };
        let n = match &shape {
            Shape::Ball { n, .. } => *n,
            Shape::Revolution(_) => 3,
            _ => 2,
        };
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        let mut dom = StarDomain::new(shape, center)?;
        dom.label = self.label.clone();
        dom.eps = self.eps;
        Ok(dom)
    }
}

/// One boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    /// Curve parameter (polar angle or arc angle).
    pub param: f64,
    pub point: Vec<f64>,
    /// Unit outer normal.
    pub normal: Vec<f64>,
    /// Principal curvatures, positive for convex directions.
    pub curvatures: Vec<f64>,
    /// `<x - center, ν>`.
    pub support: f64,
    /// Surface measure represented by this sample.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub n: usize,
    pub samples: Vec<BoundarySample>,
    pub perimeter: f64,
    pub volume: f64,
    pub center: Vec<f64>,
    /// Samples lie in one meridian half-plane and stand for whole parallels.
    pub revolution: bool,
}

impl BoundaryTrace {
    /// `Σ w_i f(sample_i)`.
    pub fn integrate(&self, f: impl Fn(&BoundarySample) -> f64) -> f64 {
        self.samples.iter().map(|s| s.weight * f(s)).sum()
    }

    /// Largest distance between two boundary points.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.samples.iter().enumerate() {
            for b in &self.samples[i..] {
                let s = if self.revolution {
                    let ra = (a.point[0] - self.center[0]).abs();
                    let rb = (b.point[0] - self.center[0]).abs();
                    (ra + rb).hypot(a.point[2] - b.point[2])
                } else {
                    dist(&a.point, &b.point)
                };
                d = d.max(s);
            }
        }
        d
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Normalized mean curvature `H_k = S_k(κ) / C(n-1, k)` of one sample;
/// `H_0 = 1`, and `H_k = 0` for `k >= n` (no curvature combination of that order).
pub fn hk_sample(s: &BoundarySample, k: usize) -> f64 {
    let m = s.curvatures.len();
    if k > m {
        return 0.0;
    }
    elementary_symmetric(&s.curvatures, k) / binomial(m, k)
}

/// `H_k` at every sample, for `0 <= k <= n - 1`.
pub fn mean_curvature_k(trace: &BoundaryTrace, k: usize) -> Result<Vec<f64>> {
    if k >= trace.n {
        return invalid(format!("H_k needs k <= n - 1 = {} (got {k})", trace.n - 1));
    }
    Ok(trace.samples.iter().map(|s| hk_sample(s, k)).collect())
}

/// `W_0 = |Ω|`, `W_k = (1/n) ∫ H_{k-1} dσ` for `1 <= k <= n`.
pub fn quermassintegral(trace: &BoundaryTrace, k: usize) -> Result<f64> {
    if k > trace.n {
        return invalid(format!("W_k needs k <= n = {} (got {k})", trace.n));
    }
    if k == 0 {
        return Ok(trace.volume);
    }
    let n = trace.n as f64;
    Ok(trace.integrate(|s| hk_sample(s, k - 1)) / n)
}

/// `|∫ H_k <x, ν> dσ − n W_k|` for `0 <= k <= n - 1`; `k = 0` is the
/// divergence theorem.
pub fn minkowski_residual(trace: &BoundaryTrace, k: usize) -> Result<f64> {
    if k >= trace.n {
        return invalid(format!("Minkowski identity needs k <= n - 1 (got {k})"));
    }
    let lhs = trace.integrate(|s| hk_sample(s, k) * s.support);
    Ok((lhs - trace.n as f64 * quermassintegral(trace, k)?).abs())
}

/// `(W_j/ω_n)^{1/(n-j)} − (W_i/ω_n)^{1/(n-i)}` for `0 <= i < j < n`.
pub fn af_gap(trace: &BoundaryTrace, i: usize, j: usize) -> Result<f64> {
    let n = trace.n;
    if !(i < j && j < n) {
        return invalid(format!("need 0 <= i < j < n (got i={i}, j={j}, n={n})"));
    }
    let w = omega(n);
    let r = |k: usize| -> Result<f64> {
        let q = quermassintegral(trace, k)?;
        if q < 0.0 {
            return Err(Error::Degenerate(format!("W_{k} = {q:.3e} is negative")));
        }
        Ok((q / w).powf(1.0 / (n - k) as f64))
    };
    Ok(r(j)? - r(i)?)
}

/// Radius-type constants of a domain used by the stability estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConstants {
    pub diameter: f64,
    /// Uniform interior touching-ball radius.
    pub r_i: f64,
    /// Uniform exterior touching-ball radius (infinite for convex domains).
    pub r_e: f64,
    pub volume: f64,
    pub perimeter: f64,
    /// `n |Ω| / |∂Ω|`.
    pub rhat: f64,
    /// Largest ball centered at `z` inside `Ω`.
    pub rho_i: f64,
    /// Smallest ball centered at `z` containing `Ω`.
    pub rho_e: f64,
    pub z: Vec<f64>,
}

pub fn domain_constants(dom: &StarDomain, trace: &BoundaryTrace, z: &[f64]) -> Result<DomainConstants> {
    if z.len() != dom.dim() {
        return invalid("reference point has the wrong dimension");
    }
    if !dom.contains(z) {
        return Err(Error::Degenerate("reference point is not inside the domain".into()));
    }
    let n = dom.dim();
    let rhat = n as f64 * trace.volume / trace.perimeter;
    let (diameter, r_i, r_e, rho_e) = match dom.shape() {
        Shape::Ball { radius, .. } => {
            let off = dist(z, dom.center());
            (2.0 * radius, *radius, f64::INFINITY, radius + off)
        }
        _ => {
            let d = trace.diameter();
            let ri = trace
                .samples
                .iter()
                .map(|s| touching_radius(dom, s, d, -1.0))
                .fold(f64::INFINITY, f64::min);
            let convex = trace.samples.iter().all(|s| s.curvatures.iter().all(|&k| k >= 0.0));
            let re = if convex {
                f64::INFINITY
            } else if n == 2 {
                trace
                    .samples
                    .iter()
                    .map(|s| touching_radius(dom, s, 4.0 * d, 1.0))
                    .fold(f64::INFINITY, f64::min)
            } else {
                trace
                    .samples
                    .iter()
                    .flat_map(|s| s.curvatures.iter().copied())
                    .filter(|&k| k < 0.0)
                    .map(|k| -1.0 / k)
                    .fold(f64::INFINITY, f64::min)
            };
            let far = trace
                .samples
                .iter()
                .map(|s| {
                    if trace.revolution {
                        let rz = dom.reduce(z);
                        let rs = s.point[0] - dom.center()[0];
                        (rz.0 + rs).hypot(s.point[2] - z[2])
                    } else {
                        dist(&s.point, z)
                    }
                })
                .fold(0.0, f64::max);
            (d, ri, re, far)
        }
    };
    Ok(DomainConstants {
        diameter,
        r_i,
        r_e,
        volume: trace.volume,
        perimeter: trace.perimeter,
        rhat,
        rho_i: dom.boundary_distance(z),
        rho_e,
        z: z.to_vec(),
    })
}

/// Largest radius `r` such that the ball of radius `r` tangent to the boundary
/// at the sample lies inside (`side = -1`) or outside (`side = +1`) the domain.
fn touching_radius(dom: &StarDomain, s: &BoundarySample, cap: f64, side: f64) -> f64 {
    let fits = |r: f64| {
        let c: Vec<f64> = s.point.iter().zip(&s.normal).map(|(p, v)| p + side * r * v).collect();
        let inside = dom.contains(&c);
        (inside == (side < 0.0)) && dom.boundary_distance(&c) >= r * (1.0 - 1e-11)
    };
    let (mut lo, mut hi) = (0.0, cap);
    if fits(hi) {
        return hi;
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Point of maximal distance to the boundary, found by a coarse scan of the
/// bounding box followed by pattern-search refinement.
pub fn inscribed_center(dom: &StarDomain) -> Vec<f64> {
    if let Shape::Ball { .. } = dom.shape() {
        return dom.center().to_vec();
    }
    let (lo, hi) = dom.bbox();
    let n = dom.dim();
    let grid = if n == 2 { 64 } else { 24 };
    let mut best = dom.center().to_vec();
    let mut bestd = if dom.contains(&best) { dom.boundary_distance(&best) } else { -1.0 };
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = (0..n)
            .map(|i| lo[i] + (hi[i] - lo[i]) * (idx[i] as f64 + 0.5) / grid as f64)
            .collect();
        if dom.contains(&p) {
            let d = dom.boundary_distance(&p);
            if d > bestd {
                bestd = d;
                best = p;
            }
        }
        let mut i = 0;
        loop {
            idx[i] += 1;
            if idx[i] < grid {
                break;
            }
            idx[i] = 0;
            i += 1;
            if i == n {
                break;
            }
        }
        if i == n {
            break;
        }
    }
    let mut step = (0..n).map(|i| hi[i] - lo[i]).fold(0.0, f64::max) / grid as f64;
    while step > 1e-10 {
        let mut moved = false;
        for i in 0..n {
            for sgn in [-1.0, 1.0] {
                let mut p = best.clone();
                p[i] += sgn * step;
                if dom.contains(&p) {
                    let d = dom.boundary_distance(&p);
                    if d > bestd {
                        bestd = d;
                        best = p;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}
