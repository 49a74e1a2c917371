//! End-to-end acceptance criteria. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; the process fails if any criterion fails.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use khessian::geometry::{domain_constants, Dumbbell, StarDomain};
use khessian::identities::*;
use khessian::pfunction::*;
use khessian::solver::*;
use khessian::stability::*;
use khessian::symfun::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const EXACT_TOL: f64 = 1e-10;
const REL_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.notes.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn fixture(name: &str) -> StarDomain {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    StarDomain::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn radial_exactness() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let radius = rng.random_range(0.1..5.0);
        for n in 1..=5 {
            for k in 1..=n {
                let s = solve_radial(n, k, radius).unwrap();
                let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                let t = rng.random_range(0.0..1.0);
                let x: Vec<f64> = dir.iter().map(|d| d / norm * radius * t).collect();
                let want = 0.5 * (t * t * radius * radius - radius * radius);
                let sk = sk_matrix(&s.hess(&x), k).unwrap();
                let on_boundary: Vec<f64> = dir.iter().map(|d| d / norm * radius).collect();
                let e = ((s.u(&x) - want).abs() / (radius * radius))
                    .max((sk - binomial(n, k)).abs() / binomial(n, k))
                    .max(s.u(&on_boundary).abs() / (radius * radius));
                worst = worst.max(e);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    o.check(worst <= 1e-12, format!("worst relative error {worst:.2e}"));
    o.check(elapsed < 1.0, format!("runtime {elapsed:.3}s"));
    o.note(format!("max error {worst:.1e}, {elapsed:.3}s"));
    o
}

fn quadratic_oracles() -> Outcome {
    let mut o = Outcome::new();
    let d = fixture("ellipse21.json");
    let exact1 = |x: &[f64]| 0.8 * (x[0] * x[0] / 4.0 + x[1] * x[1] - 1.0);
    let exact2 = |x: &[f64]| x[0] * x[0] / 4.0 + x[1] * x[1] - 1.0;
    for (k, exact) in [(1, &exact1 as &dyn Fn(&[f64]) -> f64), (2, &exact2)] {
        let start = Instant::now();
        match solve_hessian_2d(&d, k, 1.0 / 64.0) {
            Ok(sol) => {
                let t = start.elapsed().as_secs_f64();
                let err = max_node_error(&sol, exact);
                o.check(err <= 1e-6, format!("k={k} node error {err:.2e}"));
                o.check(t < 60.0, format!("k={k} solve took {t:.1}s"));
                o.note(format!("k={k} err {err:.1e} in {t:.2}s"));
            }
            Err(e) => o.check(false, format!("k={k}: {e}")),
        }
    }
    // manufactured non-polynomial solutions on the unit disk
    let disk = fixture("disk.json");
    let cases: Vec<(usize, Rhs, Box<dyn Fn(&[f64]) -> f64>)> = vec![
        (
            1,
            Rhs::Field(Arc::new(|x: &[f64]| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                (0.3 * x[0]).exp() * (4.0 + 1.2 * x[0] + 0.09 * (r2 - 1.0))
            })),
            Box::new(|x: &[f64]| (x[0] * x[0] + x[1] * x[1] - 1.0) * (0.3 * x[0]).exp()),
        ),
        (
            2,
            Rhs::Field(Arc::new(|x: &[f64]| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                (1.0 + 0.2 * r2) * (1.0 + 0.6 * r2)
            })),
            Box::new(|x: &[f64]| {
                let r2 = x[0] * x[0] + x[1] * x[1];
                0.5 * (r2 - 1.0) + 0.05 * (r2 * r2 - 1.0)
            }),
        ),
    ];
    for (k, rhs, exact) in cases {
        let mut errs = Vec::new();
        for m in [16.0, 32.0, 64.0] {
            match solve_hessian_2d_with(&disk, k, 1.0 / m, rhs.clone(), &SolveOptions::default()) {
                Ok(sol) => errs.push(max_node_error(&sol, &exact)),
                Err(e) => o.check(false, format!("disk k={k} h=1/{m}: {e}")),
            }
        }
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        for p in &orders {
            o.check((1.7..=2.3).contains(p), format!("disk k={k} order {p:.3}"));
        }
        o.note(format!("disk k={k} orders {:?}", orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>()));
    }
    o
}

fn identity_suite() -> Outcome {
    let mut o = Outcome::new();
    let d = fixture("ellipse21.json");
    let lp_exact = [18.0 / 25.0, 0.5];
    for k in [1, 2] {
        let sol = match solve_hessian_2d(&d, k, 1.0 / 64.0) {
            Ok(s) => s,
            Err(e) => {
                o.check(false, format!("ellipse k={k}: {e}"));
                continue;
            }
        };
        let s = sol.sample(1024).unwrap();
        let mut reports = pohozaev_residual(&s, REL_TOL).unwrap();
        reports.push(serrin_fundamental_residual(&s, REL_TOL).unwrap());
        let (main, variant, _) = sbt_identity_residual(&s, REL_TOL).unwrap();
        reports.push(main);
        reports.push(variant);
        let worst = reports.iter().map(|r| r.rel_residual).fold(0.0, f64::max);
        for r in &reports {
            o.check(r.pass, format!("ellipse k={k} {} rel {:.2e}", r.name, r.rel_residual));
        }
        let h = h_identities(&sol, &s.min.z).unwrap();
        o.check(h.pass, format!("ellipse k={k} h-identities {:.2e}/{:.2e}", h.i_residual, h.ii_direct_residual));
        let (lo, hi) = lp_range_sampled(&s);
        let target = lp_exact[k - 1];
        let lp_err = (lo - target).abs().max((hi - target).abs());
        o.check(lp_err <= 1e-6, format!("ellipse k={k} L[P] in [{lo}, {hi}], expected {target}"));
        o.note(format!("ellipse k={k} worst rel {worst:.1e}, L[P] err {lp_err:.1e}"));
    }
    let mut worst_ball = 0.0f64;
    for n in 2..=5 {
        for k in 1..=n {
            let s = solve_radial(n, k, 1.0).unwrap().sample(256).unwrap();
            let mut reports = pohozaev_residual(&s, EXACT_TOL).unwrap();
            reports.push(serrin_fundamental_residual(&s, EXACT_TOL).unwrap());
            let (main, variant, _) = sbt_identity_residual(&s, EXACT_TOL).unwrap();
            reports.push(main);
            reports.push(variant);
            for r in &reports {
                worst_ball = worst_ball.max(r.rel_residual);
                o.check(r.pass, format!("ball n={n} k={k} {} rel {:.2e}", r.name, r.rel_residual));
            }
            let (i, ii) = h_identities_sampled(&s).unwrap();
            worst_ball = worst_ball.max(i).max(ii);
            o.check(i <= EXACT_TOL && ii <= EXACT_TOL, format!("ball n={n} k={k} h-identities {i:.1e}/{ii:.1e}"));
        }
    }
    // the disk through the grid solver as well
    let disk = fixture("disk.json");
    for k in [1, 2] {
        let sol = solve_hessian_2d(&disk, k, 1.0 / 64.0).unwrap();
        let s = sol.sample(1024).unwrap();
        for r in pohozaev_residual(&s, EXACT_TOL).unwrap() {
            worst_ball = worst_ball.max(r.rel_residual);
            o.check(r.pass, format!("grid disk k={k} {} rel {:.2e}", r.name, r.rel_residual));
        }
    }
    o.note(format!("balls worst rel {worst_ball:.1e}"));
    o
}

fn positivity_suite() -> Outcome {
    let mut o = Outcome::new();
    let mut samples: Vec<(String, SampledSolution)> = Vec::new();
    for name in ["ellipse21.json", "ellipse_eps01.json", "disk.json"] {
        let d = fixture(name);
        for k in [1, 2] {
            match solve_hessian_2d(&d, k, 1.0 / 64.0).and_then(|s| s.sample(1024)) {
                Ok(s) => samples.push((format!("{name} k={k}"), s)),
                Err(e) => o.check(false, format!("{name} k={k}: {e}")),
            }
        }
    }
    for k in 1..=3 {
        samples.push((format!("ball3.json k={k}"), solve_radial(3, k, 1.0).unwrap().sample(256).unwrap()));
    }
    let mut min_lp = f64::INFINITY;
    for (label, s) in &samples {
        let (lo, _) = lp_range_sampled(s);
        min_lp = min_lp.min(lo);
        o.check(lo >= -1e-6, format!("{label}: L[P] min {lo:.2e}"));
        let (_, _, def) = sbt_identity_residual(s, REL_TOL).unwrap();
        if s.k < s.n {
            o.check(def.d1_integrand_min >= -1e-10, format!("{label}: D1 integrand {:.2e}", def.d1_integrand_min));
        }
        o.check(def.d2 >= -1e-10, format!("{label}: D2 {:.2e}", def.d2));
        let (lam, big) = ellipticity_bounds_sampled(s).unwrap();
        o.check(0.0 < lam && lam <= big, format!("{label}: ellipticity [{lam}, {big}]"));
        let bg = s.boundary_gradient();
        o.check(bg.r >= bg.rhat * (1.0 - 1e-12), format!("{label}: R = {} < R̂ = {}", bg.r, bg.rhat));
    }
    let mut rng = StdRng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..4.0)).collect();
        let spec = Spectrum::new(v.clone()).unwrap();
        let chain = newton_chain(&spec);
        o.check(chain.is_complete() && chain.is_non_increasing(1e-12), format!("Newton chain fails on {v:?}"));
        for k in 1..=n {
            let t = (binomial(n, k) / elementary_symmetric(&v, k)).powf(1.0 / k as f64);
            let scaled: Vec<f64> = v.iter().map(|x| x * t).collect();
            let lp = lp_diagonal_form(&scaled, k);
            o.check(lp >= -1e-6, format!("L[P] = {lp:.2e} on {scaled:?}, k={k}"));
            if k < n {
                let dk = newton_deficit(&scaled, k);
                o.check(dk >= -1e-10, format!("Newton deficit {dk:.2e} on {scaled:?}, k={k}"));
            }
            let a = SymMatrix::from_diagonal(&scaled);
            let ev = sk_ij(&a, k).unwrap().eigenvalues();
            o.check(ev[0] > 0.0, format!("S_k^ij not positive on {scaled:?}"));
        }
    }
    o.note(format!("{} solution fixtures, 1000 spectra, min L[P] {min_lp:.2e}", samples.len()));
    o
}

fn serrin_stability() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let family = ellipse_family(&standard_eps()).unwrap();
    for k in [1, 2] {
        let sweep = serrin_sweep(&family, k, &SerrinOptions::default());
        o.check(sweep.skipped.is_empty(), format!("k={k}: {} members skipped", sweep.skipped.len()));
        o.check(sweep.dish_all_pass(), format!("k={k}: dish chain violated"));
        match &sweep.fit {
            Some(f) => {
                o.check(f.slope >= 0.9, format!("k={k}: slope {:.3}", f.slope));
                o.check(f.loo_max_change <= 0.1, format!("k={k}: leave-one-out change {:.3}", f.loo_max_change));
                o.note(format!("k={k} slope {:.3}, LOO {:.3}, C {:.3}", f.slope, f.loo_max_change, sweep.fit_c));
            }
            None => o.check(false, format!("k={k}: no fit")),
        }
    }
    let t = start.elapsed().as_secs_f64();
    o.check(t < 900.0, format!("sweep took {t:.0}s"));
    o.note(format!("{t:.1}s"));
    o
}

fn sbt_stability() -> Outcome {
    let mut o = Outcome::new();
    let eps = standard_eps();
    let runs = [
        ("ellipse", 1, ellipse_family(&eps).unwrap()),
        ("spheroid", 1, spheroid_family(&eps).unwrap()),
        ("spheroid", 2, spheroid_family(&eps).unwrap()),
    ];
    for (name, k, family) in runs {
        let sweep = sbt_sweep(&family, k, &SbtOptions::default());
        o.check(!sweep.members.is_empty(), format!("{name} k={k}: no k-convex members"));
        o.check(sweep.chain_all_pass(), format!("{name} k={k}: curvature chain violated"));
        o.check(sweep.fit_c_spread <= 10.0, format!("{name} k={k}: C spread {:.2}", sweep.fit_c_spread));
        let samples: usize = sweep.members.iter().map(|m| m.chain_samples).sum();
        o.note(format!("{name} k={k} C {:.3} spread {:.2} ({samples} samples)", sweep.fit_c, sweep.fit_c_spread));
    }
    o
}

fn bubbling_suite() -> Outcome {
    let mut o = Outcome::new();
    let opts = BubblingOptions::default();
    let mut reports = Vec::new();
    for w in [0.2, 0.1, 0.05] {
        let d = StarDomain::dumbbell(Dumbbell::pinched(w).unwrap()).unwrap().with_label(format!("w{w}"));
        match bubbling(&d, 1, &opts) {
            Ok(r) => {
                o.check(r.m == 2, format!("w={w}: m = {}", r.m));
                o.check(r.m_bound_holds, format!("w={w}: count bound {:?}", r.m_bound));
                reports.push(r);
            }
            Err(e) => o.check(false, format!("w={w}: {e}")),
        }
    }
    for pair in reports.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        o.check(b.symmetric_difference < a.symmetric_difference, format!("|ΩΔU| {} -> {}", a.symmetric_difference, b.symmetric_difference));
        o.check(b.boundary_gap < a.boundary_gap, format!("boundary gap {} -> {}", a.boundary_gap, b.boundary_gap));
        o.check(b.perimeter_gap < a.perimeter_gap, format!("perimeter gap {} -> {}", a.perimeter_gap, b.perimeter_gap));
    }
    o.note(format!(
        "|ΩΔU| {:?}",
        reports.iter().map(|r| format!("{:.3}", r.symmetric_difference)).collect::<Vec<_>>()
    ));
    // fixed lobe separation: the bridge keeps positive area as w -> 0, so only
    // detection and the count bound are required here
    let mut fixed = Vec::new();
    for w in [0.2, 0.1, 0.05] {
        let d = StarDomain::dumbbell(Dumbbell::with_separation(1.0, w, 2.4).unwrap()).unwrap();
        match bubbling(&d, 1, &opts) {
            Ok(r) => {
                o.check(r.m == 2 && r.m_bound_holds, format!("separation 2.4, w={w}: m = {}", r.m));
                fixed.push(format!("{:.3}", r.symmetric_difference));
            }
            Err(e) => o.check(false, format!("separation 2.4, w={w}: {e}")),
        }
    }
    let r = bubbling(&fixture("dumbbell_w01.json"), 1, &opts).unwrap();
    o.check(r.boundary_gap > 0.0 && r.perimeter_gap > 0.0 && r.boundary_gap < 0.5, format!("reference dumbbell gaps {}, {}", r.boundary_gap, r.perimeter_gap));
    o.note(format!("separation 2.4 |ΩΔU| {fixed:?}"));
    match bubbling(&fixture("disk.json"), 1, &opts) {
        Ok(r) => {
            o.check(r.m == 1, format!("disk: m = {}", r.m));
            let e = r.sampling_error;
            o.check(
                r.symmetric_difference <= e && r.boundary_gap <= e && r.perimeter_gap <= e,
                format!("disk gaps {:.2e}, {:.2e}, {:.2e} vs sampling error {e:.2e}", r.symmetric_difference, r.boundary_gap, r.perimeter_gap),
            );
        }
        Err(e) => o.check(false, format!("disk: {e}")),
    }
    o
}

fn appendix_suite() -> Outcome {
    let mut o = Outcome::new();
    let family = ellipse_family(&standard_eps()).unwrap();
    let mut per_r: Vec<Vec<f64>> = vec![Vec::new(); DEFAULT_R_LIST.len()];
    let mut worst = 0.0f64;
    for dom in &family {
        let label = dom.label.clone().unwrap_or_default();
        let run = || -> khessian::Result<ProbeReport> {
            let sol = solve_hessian_2d(dom, 1, 1.0 / 64.0)?;
            let s = sol.sample(1024)?;
            let c = domain_constants(dom, &s.trace, &s.min.z)?;
            appendix_probes(&s, dom, &c, &DEFAULT_R_LIST, 0.5)
        };
        match run() {
            Ok(rep) => {
                for (i, p) in rep.sobolev.iter().enumerate() {
                    match p.ratio {
                        Some(r) => per_r[i].push(r),
                        None => o.check(false, format!("{label}: undefined ratio at r={}", p.r)),
                    }
                }
                let above = rep.interpolation.iter().find(|p| p.branch == Branch::PAboveN).and_then(|p| p.ratio);
                match (above, rep.morrey_bound) {
                    (Some(r), Some(b)) => {
                        worst = worst.max(r / b);
                        o.check(r <= b, format!("{label}: interpolation constant {r:.3} above bound {b:.3}"));
                    }
                    _ => o.check(false, format!("{label}: p > n branch not evaluated")),
                }
            }
            Err(e) => o.check(false, format!("{label}: {e}")),
        }
    }
    for (r, ratios) in DEFAULT_R_LIST.iter().zip(&per_r) {
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        o.check(lo > 0.0 && hi / lo <= 10.0, format!("r={r}: Sobolev spread {:.2}", hi / lo));
        o.note(format!("r={r} spread {:.2}", hi / lo));
    }
    o.note(format!("max constant/bound {worst:.3}"));
    o
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 radial exactness", radial_exactness),
        ("2 quadratic oracles and convergence", quadratic_oracles),
        ("3 identity suite", identity_suite),
        ("4 positivity suite", positivity_suite),
        ("5 Serrin stability sweep", serrin_stability),
        ("6 SBT sweep", sbt_stability),
        ("7 bubbling", bubbling_suite),
        ("8 appendix probes", appendix_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), out.notes.join("; "));
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
