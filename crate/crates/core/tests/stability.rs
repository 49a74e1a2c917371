use khessian::geometry::{domain_constants, Dumbbell, StarDomain};
use khessian::solver::solve_radial;
use khessian::stability::*;
use proptest::prelude::*;

#[test]
fn small_serrin_sweep_skips_bad_members() {
    let mut family = ellipse_family(&[0.05, 0.1, 0.15]).unwrap();
    family.push(StarDomain::ellipse(3.0, 1.0).unwrap().with_label("long"));
    let opts = SerrinOptions { h: 1.0 / 32.0, m: 256, ..Default::default() };
    let sweep = serrin_sweep(&family, 1, &opts);
    assert_eq!(sweep.members.len(), 3);
    assert_eq!(sweep.skipped.len(), 1);
    assert_eq!(sweep.skipped[0].shape_id, "long");
    assert!(sweep.dish_all_pass());
    let fit = sweep.fit.as_ref().unwrap();
    assert!(fit.slope > 0.5, "{fit:?}");
    let records = sweep.records();
    assert!(records.windows(2).all(|w| w[0].eps < w[1].eps));
    for r in &records {
        assert!(r.r >= r.rhat * (1.0 - 1e-12));
        assert!(r.rho_gap > 0.0 && r.delta_serrin > 0.0);
        assert_eq!(r.numeric_columns().len(), CSV_COLUMNS.len() - 1);
    }
}

#[test]
fn sbt_sweep_rejects_non_convex_members() {
    let mut family = spheroid_family(&[0.05, 0.1]).unwrap();
    // a peanut: negative curvature at the waist
    family.push(StarDomain::fourier_revolution(vec![1.0, 0.0, 0.3]).unwrap().with_label("peanut"));
    let sweep = sbt_sweep(&family, 2, &SbtOptions { m: 256, ..Default::default() });
    assert_eq!(sweep.members.len(), 2);
    assert_eq!(sweep.rejected.len(), 1);
    assert!(sweep.rejected[0].reason.contains("H_2"), "{}", sweep.rejected[0].reason);
    assert!(sweep.chain_all_pass());
    assert!(sweep.fit_c_spread >= 1.0);
}

#[test]
fn sbt_sweep_with_gradient_bound() {
    let family = ellipse_family(&[0.1]).unwrap();
    let opts = SbtOptions { m: 256, solve_h: Some(1.0 / 32.0), z_rule: ZRule::Centroid, ..Default::default() };
    let sweep = sbt_sweep(&family, 1, &opts);
    let g = sweep.members[0].gradient_bound.as_ref().unwrap();
    assert!(g.pass && g.m_sq <= g.two_n_max_u * (1.0 + 1e-9) && g.two_n_max_u <= g.n_d_sq);
}

#[test]
fn deficits_vanish_on_balls() {
    for n in 2..=4 {
        let d = StarDomain::ball(n, 1.3).unwrap();
        let t = d.boundary_trace(128).unwrap();
        for k in 1..n {
            assert!(sbt_deficit(&t, k).unwrap().abs() < 1e-12);
        }
        assert!(sbt_deficit(&t, n).is_err());
        let rhat = n as f64 * t.volume / t.perimeter;
        assert!(l2_anisotropy(&t, &vec![0.0; n], rhat) < 1e-12);
    }
}

#[test]
fn ball_bubbling_and_dimension_guard() {
    let d = StarDomain::ball(2, 1.0).unwrap();
    let r = bubbling(&d, 1, &BubblingOptions { cells: 512, ..Default::default() }).unwrap();
    assert_eq!(r.m, 1);
    assert_eq!(r.dilation, 1.0);
    assert!(r.min_center_distance.is_none());
    assert!(r.symmetric_difference <= r.sampling_error);
    assert!(bubbling(&StarDomain::ball(3, 1.0).unwrap(), 1, &BubblingOptions::default()).is_err());
}

#[test]
fn dumbbell_bubbling_is_reproducible() {
    let d = StarDomain::dumbbell(Dumbbell::pinched(0.1).unwrap()).unwrap();
    let opts = BubblingOptions { cells: 512, jitter_seed: Some(7), ..Default::default() };
    let a = bubbling(&d, 1, &opts).unwrap();
    let b = bubbling(&d, 1, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.m, 2);
    assert!(!a.k_convex && a.min_hk < 0.0);
    assert!(a.min_center_distance.unwrap() >= 2.0 * a.rhat);
    let plain = bubbling(&d, 1, &BubblingOptions { cells: 512, ..Default::default() }).unwrap();
    assert!((plain.symmetric_difference - a.symmetric_difference).abs() < 4.0 * plain.sampling_error);
}

#[test]
fn probes_degenerate_on_ball() {
    let s = solve_radial(2, 1, 1.0).unwrap().sample(256).unwrap();
    let d = StarDomain::ball(2, 1.0).unwrap();
    let c = domain_constants(&d, &s.trace, &s.min.z).unwrap();
    let rep = appendix_probes(&s, &d, &c, &DEFAULT_R_LIST, 0.5).unwrap();
    // h is constant on the ball, so every ratio is undefined
    assert!(rep.sobolev.iter().all(|p| p.ratio.is_none() && p.lhs < 1e-12));
    assert!(appendix_probes(&s, &d, &c, &[5.0], 0.5).is_err());
    assert!(appendix_probes(&s, &d, &c, &[2.0], 1.5).is_err());
}

#[test]
fn morrey_constant_scales() {
    // invariant under dilation: d → t d, |Ω| → t^n |Ω| multiplies by t^{1 − n/p}
    let c1 = morrey_constant(2, 4.0, 2.0, 3.0);
    let c2 = morrey_constant(2, 4.0, 4.0, 12.0);
    assert!((c2 / c1 - 2f64.powf(0.5)).abs() < 1e-12);
}

#[test]
fn families_preserve_volume() {
    for d in ellipse_family(&standard_eps()).unwrap() {
        assert!((d.volume() - std::f64::consts::PI).abs() < 1e-12);
    }
    for d in spheroid_family(&standard_eps()).unwrap() {
        assert!((d.volume() - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
    }
    assert_eq!(standard_eps().len(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_fit_recovers_exponent(slope in 0.2f64..3.0, c in 0.1f64..10.0, noise in prop::collection::vec(-1e-3f64..1e-3, 8)) {
        let pairs: Vec<(f64, f64)> = (0..8)
            .map(|i| {
                let x = 0.01 * 1.5f64.powi(i);
                (x, c * x.powf(slope) * (1.0 + noise[i as usize]))
            })
            .collect();
        let fit = power_fit(&pairs, FIT_FLOOR).unwrap();
        prop_assert!((fit.slope - slope).abs() < 0.01);
        prop_assert!(fit.loo_max_change < 0.01);
        prop_assert_eq!(fit.points, 8);
    }

    #[test]
    fn chain_links_nonnegative_under_maclaurin(h1 in 0.0f64..3.0, t in 0.0f64..1.0, rhat in 0.3f64..3.0, k in 1usize..4) {
        // any H_k with H_k^{1/k} <= H_1
        let hk = (t * h1).powi(k as i32);
        let (a, b) = sbt_chain_links(h1, hk, k, rhat);
        prop_assert!(a >= -1e-12 && b >= -1e-12);
    }
}
