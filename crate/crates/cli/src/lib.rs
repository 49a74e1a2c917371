//! Command dispatch for the `khessian` binary.

pub mod config;
pub mod output;

use std::fs;
use std::path::Path;

use khessian::geometry::{domain_constants, DomainConstants, Shape, StarDomain};
use khessian::identities::{
    dish_inequality, pohozaev_residual, sbt_identity_residual, serrin_fundamental_residual, DeficitPair,
    IdentityReport, InequalityChain,
};
use khessian::pfunction::{h_identities, h_identities_sampled, lp_field, lp_range_sampled, ellipticity_bounds_sampled, HReport};
use khessian::solver::{
    max_principle_checks, solve_hessian_2d, solve_radial, MaxPrincipleReport, MinPoint, SampledSolution, SolutionField,
};
use khessian::stability::{
    appendix_probes, bubbling, ellipse_family, sbt_sweep, serrin_sweep, spheroid_family, BubblingOptions,
    BubblingReport, ProbeReport, SbtOptions, SerrinOptions,
};
use khessian::symfun::{binomial, elementary_symmetric};
use serde::Serialize;

use crate::config::{CommandKind, FamilyKind, RunConfig};
use crate::output::{write_csv, write_json, write_json_compact};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), pass, detail: detail.into() }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
}

impl From<khessian::Error> for RunError {
    fn from(e: khessian::Error) -> Self {
        use khessian::Error as E;
        match e {
            E::Validation(_) | E::Domain(_) | E::Json(_) | E::Io(_) => Self::Config(e.to_string()),
            _ => Self::Solver(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Config(format!("cannot write {}: {e}", path.display()))
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Solver(_) => EXIT_SOLVER,
        }
    }
}

/// Runs a validated config, prints one line per check and returns the exit code.
pub fn execute(cfg: &RunConfig) -> i32 {
    match run(cfg) {
        Ok(checks) => {
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_CHECK }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Vec<Check>, RunError> {
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let mut domains = cfg
        .domains
        .iter()
        .map(|p| StarDomain::load(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(f) = &cfg.family {
        domains.extend(match f.kind {
            FamilyKind::Ellipse => ellipse_family(&f.eps)?,
            FamilyKind::Spheroid => spheroid_family(&f.eps)?,
        });
    }
    for d in &domains {
        if cfg.k > d.dim() {
            return Err(RunError::Config(format!(
                "k exceeds ambient dimension (k = {}, n = {} for {})",
                cfg.k,
                d.dim(),
                label(d)
            )));
        }
    }
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    match cfg.command {
        CommandKind::Solve => solve_cmd(cfg, &domains[0]),
        CommandKind::Identities => identities_cmd(cfg, &domains[0]),
        CommandKind::Sweep => sweep_cmd(cfg, &domains),
        CommandKind::Sbt => sbt_cmd(cfg, &domains),
        CommandKind::Bubbling => bubbling_cmd(cfg, &domains[0]),
        CommandKind::Probes => probes_cmd(cfg, &domains[0]),
    }
}

fn label(d: &StarDomain) -> String {
    d.label.clone().unwrap_or_else(|| "domain".into())
}

fn is_ball(d: &StarDomain) -> bool {
    matches!(d.shape(), Shape::Ball { .. })
}

/// A solution in sampled form, with the grid solution when there is one.
struct Solved {
    field: Option<SolutionField>,
    sampled: SampledSolution,
    constants: DomainConstants,
}

fn solve_any(cfg: &RunConfig, dom: &StarDomain) -> Result<Solved, RunError> {
    let (field, sampled) = match (dom.dim(), dom.shape()) {
        (2, _) => {
            let sol = solve_hessian_2d(dom, cfg.k, cfg.h)?;
            let s = sol.sample(cfg.m)?;
            (Some(sol), s)
        }
        (n, Shape::Ball { radius, .. }) => (None, solve_radial(n, cfg.k, *radius)?.sample(cfg.m)?),
        (n, _) => {
            return Err(RunError::Config(format!(
                "the finite-difference solver is planar; {n}-dimensional domains must be balls"
            )))
        }
    };
    let constants = domain_constants(&working_domain(dom), &sampled.trace, &sampled.min.z)?;
    Ok(Solved { field, sampled, constants })
}

/// Radial solutions live on the origin-centered ball.
fn working_domain(dom: &StarDomain) -> StarDomain {
    match dom.shape() {
        Shape::Ball { n, radius } if *n > 2 => StarDomain::ball(*n, *radius).expect("valid ball"),
        _ => dom.clone(),
    }
}

#[derive(Serialize)]
struct SolveReport {
    label: String,
    n: usize,
    k: usize,
    h: Option<f64>,
    iterations: Option<usize>,
    converged: bool,
    /// `max |S_k(D²u) − f|` over the nodes or samples.
    max_residual: f64,
    r: f64,
    rhat: f64,
    delta: f64,
    grad_max: f64,
    min: MinPoint,
    constants: DomainConstants,
    max_principle: Option<MaxPrincipleReport>,
}

fn solve_cmd(cfg: &RunConfig, dom: &StarDomain) -> Result<Vec<Check>, RunError> {
    let s = solve_any(cfg, dom)?;
    let bg = s.sampled.boundary_gradient();
    let mut checks = Vec::new();
    let (iterations, converged, max_residual, mp) = match &s.field {
        Some(f) => {
            let mp = max_principle_checks(f, &bg, &s.constants)?;
            (Some(f.iterations), f.converged, f.max_residual, Some(mp))
        }
        None => {
            let c = binomial(s.sampled.n, cfg.k);
            let r = s
                .sampled
                .volume
                .iter()
                .map(|v| (elementary_symmetric(&v.hess.eigenvalues(), cfg.k) - c).abs())
                .fold(0.0, f64::max);
            (None, true, r, None)
        }
    };
    checks.push(check("converged", converged, format!("max residual {max_residual:.3e}")));
    if let Some(mp) = &mp {
        for c in &mp.checks {
            checks.push(check(
                format!("max principle {}", c.name),
                c.pass,
                format!("worst margin {:.3e}, tolerance {:.3e}", c.worst_margin, c.tolerance),
            ));
        }
    }
    let report = SolveReport {
        label: label(dom),
        n: s.sampled.n,
        k: cfg.k,
        h: s.field.as_ref().map(|f| f.h()),
        iterations,
        converged,
        max_residual,
        r: bg.r,
        rhat: bg.rhat,
        delta: bg.deviation,
        grad_max: bg.max,
        min: s.sampled.min.clone(),
        constants: s.constants.clone(),
        max_principle: mp,
    };
    let path = cfg.output_dir.join("solve.json");
    write_json(&report, "solve", &path).map_err(io_err(&path))?;
    emit_solution(cfg, &s)?;
    Ok(checks)
}

fn emit_solution(cfg: &RunConfig, s: &Solved) -> Result<(), RunError> {
    if let (true, Some(f)) = (cfg.emit_solution, &s.field) {
        let path = cfg.output_dir.join("solution.json");
        write_json_compact(&f.dump(), cfg.command.name(), &path).map_err(io_err(&path))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IdentitiesReport {
    label: String,
    n: usize,
    k: usize,
    h: Option<f64>,
    tolerance: f64,
    identities: Vec<IdentityReport>,
    deficits: DeficitPair,
    lp_min: f64,
    lp_max: f64,
    lambda: f64,
    lambda_max: f64,
    h_identities: Option<HReport>,
    /// `(i, ii)` residuals on the volume samples of radial solutions.
    h_identities_sampled: Option<(f64, f64)>,
    dish: InequalityChain,
    r: f64,
    rhat: f64,
}

fn identities_cmd(cfg: &RunConfig, dom: &StarDomain) -> Result<Vec<Check>, RunError> {
    let s = solve_any(cfg, dom)?;
    let ball = is_ball(dom);
    let t = &cfg.tolerances;
    let tol = if ball { t.exact } else { t.identity };
    let sm = &s.sampled;
    let mut identities = pohozaev_residual(sm, tol)?;
    identities.push(serrin_fundamental_residual(sm, tol)?);
    let (main, variant, deficits) = sbt_identity_residual(sm, tol)?;
    identities.push(main);
    identities.push(variant);
    let mut checks: Vec<Check> = identities
        .iter()
        .map(|r| check(&r.name, r.pass, format!("relative residual {:.3e}, tolerance {:.1e}", r.rel_residual, r.tol)))
        .collect();
    checks.push(check(
        "deficit D1 integrand",
        deficits.d1_integrand_min >= -1e-10,
        format!("D1 = {:.6e}, integrand min {:.3e}", deficits.d1, deficits.d1_integrand_min),
    ));
    checks.push(check("deficit D2", deficits.d2 >= -1e-10, format!("D2 = {:.6e}", deficits.d2)));

    let (lp_min, lp_max, lambda, lambda_max, hrep, hs) = match &s.field {
        Some(f) => {
            let p = lp_field(f)?;
            let hr = h_identities(f, &sm.min.z)?;
            checks.push(check(
                "h identities",
                hr.pass,
                format!("(i) {:.3e}, (ii) {:.3e}, bound {:.3e}", hr.i_residual, hr.ii_direct_residual, hr.bound),
            ));
            (p.min_lp, p.max_lp, p.lambda, p.lambda_max, Some(hr), None)
        }
        None => {
            let (r1, r2) = h_identities_sampled(sm)?;
            checks.push(check("h identities", r1 <= t.exact && r2 <= t.exact, format!("(i) {r1:.3e}, (ii) {r2:.3e}")));
            let (lo, hi) = lp_range_sampled(sm);
            let (a, b) = ellipticity_bounds_sampled(sm)?;
            (lo, hi, a, b, None, Some((r1, r2)))
        }
    };
    checks.push(check("L[P] >= 0", lp_min >= -t.positivity, format!("min {lp_min:.3e}, max {lp_max:.3e}")));
    checks.push(check(
        "ellipticity",
        lambda > 0.0 && lambda <= lambda_max,
        format!("lambda {lambda:.6e}, Lambda {lambda_max:.6e}"),
    ));
    let dish = dish_inequality(sm, &s.constants, t.identity)?;
    checks.push(check(
        "dish chain",
        dish.pass,
        format!("{}", dish.values.iter().map(|v| format!("{:.6e}", v.value)).collect::<Vec<_>>().join(" <= ")),
    ));
    let bg = sm.boundary_gradient();
    checks.push(check("R >= Rhat", bg.r >= bg.rhat * (1.0 - t.identity), format!("R {:.12}, Rhat {:.12}", bg.r, bg.rhat)));
    let report = IdentitiesReport {
        label: label(dom),
        n: sm.n,
        k: cfg.k,
        h: sm.h,
        tolerance: tol,
        identities,
        deficits,
        lp_min,
        lp_max,
        lambda,
        lambda_max,
        h_identities: hrep,
        h_identities_sampled: hs,
        dish,
        r: bg.r,
        rhat: bg.rhat,
    };
    let path = cfg.output_dir.join("identities.json");
    write_json(&report, "identities", &path).map_err(io_err(&path))?;
    emit_solution(cfg, &s)?;
    Ok(checks)
}

fn sweep_cmd(cfg: &RunConfig, family: &[StarDomain]) -> Result<Vec<Check>, RunError> {
    if let Some(d) = family.iter().find(|d| d.dim() != 2) {
        return Err(RunError::Config(format!("the Serrin sweep is planar; {} is {}-dimensional", label(d), d.dim())));
    }
    let t = &cfg.tolerances;
    let sw = serrin_sweep(family, cfg.k, &SerrinOptions { h: cfg.h, m: cfg.m, tol: t.identity });
    for s in &sw.skipped {
        println!("SKIP {}: {}", s.shape_id, s.reason);
    }
    if sw.members.is_empty() {
        return Err(RunError::Solver("every family member failed to solve".into()));
    }
    let records = sw.records();
    let csv = cfg.output_dir.join("sweep.csv");
    write_csv(&records, &csv).map_err(io_err(&csv))?;
    let json = cfg.output_dir.join("sweep.json");
    write_json(&sw, "sweep", &json).map_err(io_err(&json))?;
    let mut checks: Vec<Check> = sw
        .members
        .iter()
        .map(|m| {
            let v: Vec<String> = m.dish.values.iter().map(|v| format!("{:.6e}", v.value)).collect();
            check(format!("dish chain {}", m.record.shape_id), m.dish.pass, v.join(" <= "))
        })
        .collect();
    match &sw.fit {
        Some(f) => {
            checks.push(check(
                "log-log slope",
                f.slope >= t.min_slope,
                format!("slope {:.4} over {} members (minimum {})", f.slope, f.points, t.min_slope),
            ));
            checks.push(check(
                "leave-one-out slope",
                f.loo_max_change <= t.loo,
                format!("max change {:.4} (limit {})", f.loo_max_change, t.loo),
            ));
        }
        None => checks.push(check("log-log slope", false, "fewer than two non-degenerate members")),
    }
    Ok(checks)
}

fn sbt_cmd(cfg: &RunConfig, family: &[StarDomain]) -> Result<Vec<Check>, RunError> {
    if let Some(d) = family.iter().find(|d| cfg.k >= d.dim()) {
        return Err(RunError::Config(format!(
            "curvature order k = {} needs k < n (n = {} for {})",
            cfg.k,
            d.dim(),
            label(d)
        )));
    }
    let t = &cfg.tolerances;
    let opts = SbtOptions {
        m: cfg.m,
        z_rule: cfg.z_rule,
        solve_h: cfg.gradient_bound.then_some(cfg.h),
        tol: t.chain,
    };
    let sw = sbt_sweep(family, cfg.k, &opts);
    for r in &sw.rejected {
        println!("SKIP {}: {}", r.shape_id, r.reason);
    }
    let csv = cfg.output_dir.join("sbt.csv");
    write_csv(&sw.records(), &csv).map_err(io_err(&csv))?;
    let json = cfg.output_dir.join("sbt.json");
    write_json(&sw, "sbt", &json).map_err(io_err(&json))?;
    let mut checks = Vec::new();
    for m in &sw.members {
        checks.push(check(
            format!("curvature chain {}", m.record.shape_id),
            m.chain_violations == 0,
            format!("{} of {} samples violate, min link gap {:.3e}", m.chain_violations, m.chain_samples, m.chain_min_gap),
        ));
        if let Some(g) = &m.gradient_bound {
            checks.push(check(
                format!("gradient bound {}", m.record.shape_id),
                g.pass,
                format!("{:.6e} <= {:.6e} <= {:.6e}", g.m_sq, g.two_n_max_u, g.n_d_sq),
            ));
        }
    }
    if sw.fit_c_spread.is_finite() {
        checks.push(check(
            "anisotropy constant spread",
            sw.fit_c_spread <= t.spread,
            format!("C = {:.6e}, max/min {:.4} (limit {})", sw.fit_c, sw.fit_c_spread, t.spread),
        ));
    }
    Ok(checks)
}

fn bubbling_cmd(cfg: &RunConfig, dom: &StarDomain) -> Result<Vec<Check>, RunError> {
    let opts = BubblingOptions {
        trace_m: cfg.m.max(64),
        jitter_seed: cfg.jitter.then_some(cfg.seed),
        ..BubblingOptions::default()
    };
    let r: BubblingReport = bubbling(dom, cfg.k, &opts)?;
    let path = cfg.output_dir.join("bubbling.json");
    write_json(&r, "bubbling", &path).map_err(io_err(&path))?;
    let mut checks = vec![check(
        "bubbles found",
        r.m >= 1,
        format!("m = {}, Rhat = {:.6}, k-convex: {}", r.m, r.rhat, r.k_convex),
    )];
    if let Some(d) = r.min_center_distance {
        checks.push(check("balls disjoint", d >= 2.0 * r.rhat - 1e-9, format!("closest centers {d:.6} apart")));
    }
    checks.push(check(
        "count bound",
        r.m_bound_holds,
        format!("m = {} <= {}", r.m, r.m_bound.map_or("inf".into(), |b| format!("{b:.6}"))),
    ));
    Ok(checks)
}

fn probes_cmd(cfg: &RunConfig, dom: &StarDomain) -> Result<Vec<Check>, RunError> {
    let s = solve_any(cfg, dom)?;
    let r: ProbeReport = appendix_probes(&s.sampled, &working_domain(dom), &s.constants, &cfg.r_list, 0.5)?;
    let path = cfg.output_dir.join("probes.json");
    write_json(&r, "probes", &path).map_err(io_err(&path))?;
    let mut checks = Vec::new();
    for p in &r.sobolev {
        checks.push(check(
            format!("Sobolev-Poincare r = {}", p.r),
            p.ratio.is_none_or(f64::is_finite),
            match p.ratio {
                Some(x) => format!("ratio {x:.6e}, constant form {:.6e}", p.constant_form),
                None => "not applicable (both sides vanish)".into(),
            },
        ));
    }
    let detail = match (r.interpolation[0].ratio, r.morrey_bound) {
        (Some(x), Some(b)) => format!("fitted {x:.6e} <= bound {b:.6e}"),
        (None, _) => "not applicable (gradient vanishes)".into(),
        (Some(x), None) => format!("fitted {x:.6e}, no explicit bound for non-convex domains"),
    };
    checks.push(check("interpolation p > n", r.interpolation_holds.unwrap_or(true), detail));
    emit_solution(cfg, &s)?;
    Ok(checks)
}
