use std::sync::Arc;

use khessian::geometry::{domain_constants, StarDomain};
use khessian::solver::*;
use khessian::symfun::{binomial, sk_matrix};

fn ellipse_exact(a: f64, b: f64, k: usize) -> impl Fn(&[f64]) -> f64 {
    // u = c (x²/a² + y²/b² − 1); Δu = 2c(1/a² + 1/b²), det D²u = 4c²/(a²b²)
    let c = if k == 1 { 1.0 / (1.0 / (a * a) + 1.0 / (b * b)) } else { 0.5 * a * b };
    move |x: &[f64]| c * (x[0] * x[0] / (a * a) + x[1] * x[1] / (b * b) - 1.0)
}

#[test]
fn radial_solution_solves_the_equation() {
    for n in 1..=6 {
        for k in 1..=n {
            let s = solve_radial(n, k, 1.3).unwrap();
            assert_eq!(sk_matrix(&s.hess(&vec![0.1; n]), k).unwrap(), binomial(n, k));
            let mut x = vec![0.0; n];
            x[0] = 1.3;
            assert!(s.u(&x).abs() < 1e-15);
            assert!(s.min_point().u < 0.0);
        }
    }
    assert!(solve_radial(2, 3, 1.0).is_err());
    assert!(solve_radial(2, 1, 0.0).is_err());
}

#[test]
fn quadratic_solutions_are_reproduced_on_ellipses() {
    for k in [1, 2] {
        for (a, b) in [(1.0, 1.0), (1.2, 0.8), (1.0, 0.6)] {
            let d = StarDomain::ellipse(a, b).unwrap();
            let sol = solve_hessian_2d(&d, k, 1.0 / 32.0).unwrap();
            assert!(sol.converged);
            let err = max_node_error(&sol, ellipse_exact(a, b, k));
            assert!(err < 1e-9, "k={k} a={a} b={b} err={err}");
        }
    }
}

#[test]
fn comparison_bounds_hold_on_ellipse() {
    let d = StarDomain::ellipse(1.1, 1.0 / 1.1).unwrap();
    let sol = solve_hessian_2d(&d, 2, 1.0 / 48.0).unwrap();
    let t = d.boundary_trace(512).unwrap();
    let c = domain_constants(&d, &t, &[0.0, 0.0]).unwrap();
    let bg = sol.boundary_gradient(&t).unwrap();
    let rep = max_principle_checks(&sol, &bg, &c).unwrap();
    assert!(rep.all_pass(), "{rep:?}");
}

fn observed_order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn second_order_convergence_k1() {
    // u = (r² − 1) e^{0.3x}
    let exact = |x: &[f64]| (x[0] * x[0] + x[1] * x[1] - 1.0) * (0.3 * x[0]).exp();
    let f = Rhs::Field(Arc::new(|x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (0.3 * x[0]).exp() * (4.0 + 1.2 * x[0] + 0.09 * (r2 - 1.0))
    }));
    let d = StarDomain::ball(2, 1.0).unwrap();
    let errs: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|m| {
            let sol = solve_hessian_2d_with(&d, 1, 1.0 / m, f.clone(), &SolveOptions::default()).unwrap();
            max_node_error(&sol, exact)
        })
        .collect();
    for p in observed_order(&errs) {
        assert!((1.7..=2.3).contains(&p), "errors {errs:?}");
    }
}

#[test]
fn second_order_convergence_k2() {
    // radial u with u' = r + c r³, so the eigenvalues are 1 + c r² and 1 + 3c r²
    let c = 0.2;
    let exact = move |x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        0.5 * (r2 - 1.0) + 0.25 * c * (r2 * r2 - 1.0)
    };
    let f = Rhs::Field(Arc::new(move |x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (1.0 + c * r2) * (1.0 + 3.0 * c * r2)
    }));
    let d = StarDomain::ball(2, 1.0).unwrap();
    let errs: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|m| {
            let sol = solve_hessian_2d_with(&d, 2, 1.0 / m, f.clone(), &SolveOptions::default()).unwrap();
            max_node_error(&sol, exact)
        })
        .collect();
    for p in observed_order(&errs) {
        assert!((1.7..=2.3).contains(&p), "errors {errs:?}");
    }
}

#[test]
fn envelope_and_input_rejections() {
    let long = StarDomain::ellipse(3.0, 1.0).unwrap();
    let e = solve_hessian_2d(&long, 1, 1.0 / 32.0).unwrap_err().to_string();
    assert!(e.contains("envelope"), "{e}");
    let disk = StarDomain::ball(2, 1.0).unwrap();
    assert!(solve_hessian_2d(&disk, 1, 0.5).is_err());
    assert!(solve_hessian_2d(&disk, 3, 0.05).unwrap_err().to_string().contains("exceeds ambient dimension"));
    assert!(solve_hessian_2d(&StarDomain::ball(3, 1.0).unwrap(), 1, 0.05).is_err());
    let nonconvex = StarDomain::fourier_curve(vec![1.0, 0.0, 0.0, 0.0, 0.12], vec![]).unwrap();
    assert!(solve_hessian_2d(&nonconvex, 2, 1.0 / 32.0).unwrap_err().to_string().contains("convex"));
}

#[test]
fn sampled_solution_matches_field() {
    let d = StarDomain::ellipse(1.1, 0.9).unwrap();
    let sol = solve_hessian_2d(&d, 1, 1.0 / 48.0).unwrap();
    let s = sol.sample(256).unwrap();
    let exact = ellipse_exact(1.1, 0.9, 1);
    let vol = s.integrate_volume(|_| 1.0);
    assert!((vol - d.volume()).abs() < 1e-8 * d.volume(), "{vol}");
    let umin = exact(&[0.0, 0.0]);
    assert!((s.min.u - umin).abs() < 1e-8);
    assert!(s.min.z[0].abs() < 1e-6 && s.min.z[1].abs() < 1e-6);
    // |∇u| on the boundary of the ellipse: 2c |(x/a², y/b²)|
    let c = 1.0 / (1.0 / 1.21 + 1.0 / 0.81);
    for (smp, g) in s.trace.samples.iter().zip(&s.grad_norm) {
        let want = 2.0 * c * (smp.point[0] / 1.21).hypot(smp.point[1] / 0.81);
        assert!((g - want).abs() < 1e-6, "{g} {want}");
    }
}
