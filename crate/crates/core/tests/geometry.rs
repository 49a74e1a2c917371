use std::f64::consts::PI;

use khessian::geometry::*;
use proptest::prelude::*;

/// Perimeter of an ellipse by a dense midpoint rule on the arc-length integrand.
fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let n = 200_000;
    let h = 2.0 * PI / n as f64;
    (0..n).map(|i| {
        let t = (i as f64 + 0.5) * h;
        (a * t.sin()).hypot(b * t.cos()) * h
    }).sum()
}

fn spheroid_area(a: f64, c: f64) -> f64 {
    if (a - c).abs() < 1e-14 {
        return 4.0 * PI * a * a;
    }
    if c < a {
        let e = (1.0 - c * c / (a * a)).sqrt();
        2.0 * PI * a * a * (1.0 + (1.0 - e * e) / e * e.atanh())
    } else {
        let e = (1.0 - a * a / (c * c)).sqrt();
        2.0 * PI * a * a * (1.0 + c / (a * e) * e.asin())
    }
}

#[test]
fn ball_quermassintegrals() {
    for n in 2..=5 {
        for r in [0.5, 1.0, 1.7] {
            let d = StarDomain::ball(n, r).unwrap();
            let t = d.boundary_trace(64).unwrap();
            for k in 0..=n {
                let want = omega(n) * r.powi((n - k) as i32);
                let got = quermassintegral(&t, k).unwrap();
                assert!((got - want).abs() < 1e-12 * want, "n={n} k={k} {got} {want}");
            }
            for k in 0..n {
                assert!(minkowski_residual(&t, k).unwrap() < 1e-11);
            }
        }
    }
}

#[test]
fn unit_ball_volumes() {
    assert!((omega(2) - PI).abs() < 1e-15);
    assert!((omega(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    assert!((omega(4) - PI * PI / 2.0).abs() < 1e-14);
    assert!((omega(5) - 8.0 * PI * PI / 15.0).abs() < 1e-14);
}

#[test]
fn ellipse_perimeter_and_curvature_integrals() {
    let d = StarDomain::ellipse(2.0, 1.0).unwrap();
    let t = d.boundary_trace(1024).unwrap();
    let p = ellipse_perimeter(2.0, 1.0);
    assert!((t.perimeter - p).abs() < 1e-9, "{} {p}", t.perimeter);
    assert!((quermassintegral(&t, 1).unwrap() - p / 2.0).abs() < 1e-9);
    // total curvature of a closed convex curve
    assert!((quermassintegral(&t, 2).unwrap() - PI).abs() < 1e-10);
    assert!((t.volume - 2.0 * PI).abs() < 1e-12);
    assert!(minkowski_residual(&t, 0).unwrap() < 1e-10);
    assert!(minkowski_residual(&t, 1).unwrap() < 1e-10);
}

#[test]
fn spheroid_area_and_volume() {
    for (a, c) in [(1.0, 1.0), (1.2, 0.7), (0.8, 1.5)] {
        let d = StarDomain::spheroid(a, c).unwrap();
        let t = d.boundary_trace(1024).unwrap();
        let area = spheroid_area(a, c);
        assert!((t.perimeter - area).abs() < 1e-8 * area, "{a} {c}: {} vs {area}", t.perimeter);
        assert!((t.volume - 4.0 / 3.0 * PI * a * a * c).abs() < 1e-10);
        for k in 0..3 {
            assert!(minkowski_residual(&t, k).unwrap() < 1e-8, "k={k}");
        }
        // Gauss–Bonnet for a sphere-like surface: ∫K = 4π
        assert!((quermassintegral(&t, 3).unwrap() - 4.0 * PI / 3.0).abs() < 1e-8);
    }
}

#[test]
fn ellipse_constants() {
    let (a, b) = (2.0, 1.0);
    let d = StarDomain::ellipse(a, b).unwrap();
    let t = d.boundary_trace(1024).unwrap();
    let c = domain_constants(&d, &t, &[0.0, 0.0]).unwrap();
    assert!((c.diameter - 2.0 * a).abs() < 1e-9);
    assert!((c.r_i - b * b / a).abs() < 1e-5, "{}", c.r_i);
    assert!(c.r_e.is_infinite());
    assert!((c.rho_i - b).abs() < 1e-9);
    assert!((c.rho_e - a).abs() < 1e-9);
    let z = inscribed_center(&d);
    assert!(z[0].abs() < 1e-6 && z[1].abs() < 1e-6);
}

#[test]
fn distance_matches_dense_sampling() {
    let d = StarDomain::fourier_curve(vec![1.0, 0.0, 0.1, 0.05], vec![0.0, 0.0, 0.03]).unwrap();
    let pts: Vec<(f64, f64)> = (0..200_000)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 200_000.0;
            let r = 1.0 + 0.1 * (2.0 * t).cos() + 0.05 * (3.0 * t).cos() + 0.03 * (2.0 * t).sin();
            (r * t.cos(), r * t.sin())
        })
        .collect();
    for p in [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4], [0.8, 0.1]] {
        let brute = pts.iter().map(|q| (q.0 - p[0]).hypot(q.1 - p[1])).fold(f64::INFINITY, f64::min);
        let got = d.boundary_distance(&p);
        assert!((got - brute).abs() < 1e-6, "{p:?}: {got} {brute}");
    }
}

#[test]
fn dumbbell_area_against_grid_count() {
    let d = StarDomain::dumbbell(Dumbbell::with_separation(1.0, 0.1, 2.4).unwrap()).unwrap();
    let (lo, hi) = d.bbox();
    let n = 2000;
    let (dx, dy) = ((hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64);
    let mut count = 0usize;
    for j in 0..n {
        for i in 0..n {
            if d.contains(&[lo[0] + (i as f64 + 0.5) * dx, lo[1] + (j as f64 + 0.5) * dy]) {
                count += 1;
            }
        }
    }
    let grid = count as f64 * dx * dy;
    assert!((d.volume() - grid).abs() < 2e-3, "{} {grid}", d.volume());
    let t = d.boundary_trace(4096).unwrap();
    assert!((t.volume - d.volume()).abs() < 1e-12);
    assert!(minkowski_residual(&t, 0).unwrap() < 1e-9);
    assert!(!d.is_star_shaped());
    let z = [1.2, 0.0];
    let c = domain_constants(&d, &t, &z).unwrap();
    // the touching ball at the middle of the neck has radius w
    assert!((c.r_i - 0.1).abs() < 1e-3, "{}", c.r_i);
    assert!(c.r_e.is_finite());
}

#[test]
fn json_round_trip_and_strictness() {
    let d = StarDomain::ellipse(1.5, 0.75).unwrap().with_label("e").with_eps(0.1);
    let back = StarDomain::from_json(&d.to_json()).unwrap();
    assert_eq!(back.to_json(), d.to_json());
    assert_eq!(back.label.as_deref(), Some("e"));
    let err = StarDomain::from_json(r#"{"schema":1,"kind":"ellipse","semi_axes":[1,2],"extra":0}"#);
    assert!(err.is_err());
    assert!(StarDomain::from_json(r#"{"schema":2,"kind":"ball","n":2,"radius":1}"#).is_err());
    assert!(StarDomain::from_json(r#"{"schema":1,"kind":"ellipse","n":3,"semi_axes":[1,2]}"#).is_err());
}

#[test]
fn invalid_profiles_are_rejected() {
    assert!(StarDomain::fourier_curve(vec![0.1, 0.5], vec![]).is_err());
    assert!(StarDomain::fourier_curve(vec![], vec![]).is_err());
    assert!(StarDomain::fourier_curve(vec![1.0], vec![0.2]).is_err());
    // the φ-derivative must vanish at the poles of a surface of revolution
    assert!(StarDomain::fourier_revolution(vec![1.0, 0.1]).is_ok());
    assert!(StarDomain::ball(2, -1.0).is_err());
}

#[test]
fn dilation_scales_measures() {
    let d = StarDomain::dumbbell(Dumbbell::pinched(0.1).unwrap()).unwrap();
    let s = d.scaled(1.5).unwrap();
    assert!((s.volume() - 2.25 * d.volume()).abs() < 1e-12);
    let e = StarDomain::spheroid(1.1, 0.8).unwrap().scaled(2.0).unwrap();
    assert!((e.volume() - 8.0 * 4.0 / 3.0 * PI * 1.21 * 0.8).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_curves_satisfy_minkowski_and_af(c2 in -0.15f64..0.15, c3 in -0.08f64..0.08, s2 in -0.1f64..0.1) {
        let d = StarDomain::fourier_curve(vec![1.0, 0.0, c2, c3], vec![0.0, 0.0, s2]).unwrap();
        let t = d.boundary_trace(512).unwrap();
        prop_assert!(minkowski_residual(&t, 0).unwrap() < 1e-9);
        prop_assert!(minkowski_residual(&t, 1).unwrap() < 1e-9);
        prop_assert!((quermassintegral(&t, 2).unwrap() - PI).abs() < 1e-9);
        // isoperimetric inequality
        prop_assert!(af_gap(&t, 0, 1).unwrap() >= -1e-12);
        let rhat = 2.0 * t.volume / t.perimeter;
        prop_assert!(rhat <= (t.volume / PI).sqrt() + 1e-12);
    }

    #[test]
    fn revolution_surfaces_satisfy_minkowski(c2 in -0.1f64..0.1, c4 in -0.04f64..0.04) {
        let d = StarDomain::fourier_revolution(vec![1.0, 0.0, c2, 0.0, c4]).unwrap();
        let t = d.boundary_trace(1024).unwrap();
        for k in 0..3 {
            prop_assert!(minkowski_residual(&t, k).unwrap() < 1e-7 * (1.0 + t.perimeter));
        }
        prop_assert!(af_gap(&t, 0, 1).unwrap() >= -1e-10);
    }

    #[test]
    fn ellipse_af_chain(a in 0.6f64..1.8, b in 0.6f64..1.8) {
        let t = StarDomain::ellipse(a, b).unwrap().boundary_trace(512).unwrap();
        prop_assert!(af_gap(&t, 0, 1).unwrap() >= -1e-12);
        let ts = StarDomain::spheroid(a, b).unwrap().boundary_trace(512).unwrap();
        prop_assert!(af_gap(&ts, 0, 1).unwrap() >= -1e-10);
        prop_assert!(af_gap(&ts, 1, 2).unwrap() >= -1e-10);
        prop_assert!(af_gap(&ts, 0, 2).unwrap() >= -1e-10);
    }
}
