//! Geometry oracles: hand-substituted metric values, finite-difference
//! cross-checks of the connection, and the curvature identities the built-in
//! spacetimes must satisfy.

#![allow(clippy::needless_range_loop)]

use nullsymp_core::catalog::get_spacetime;
use nullsymp_core::geometry::{
    causal_classify, christoffel_at, covariant_derivative_at, curvature_at, field_value,
    killing_residual, max_abs, metric_at, metric_components_raw, CausalClass,
};
use nullsymp_core::linalg::{self, invert, zero_tensor3, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

#[test]
fn kerr_metric_matches_hand_substitution() {
    // at (t, r, theta, phi) = (0, 1, pi/2, 0) with m = 1, a = 2:
    // rho2 = 1, Delta = 3, so
    // g_tt = 1, g_rr = 1/3, g_thth = 1, g_phph = 13, g_tph = -4
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_2, 0.0];
    let mv = metric_at(&spec, chart, &p).unwrap();
    assert!((mv.components[0][0] - 1.0).abs() < 1e-12);
    assert!((mv.components[1][1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((mv.components[2][2] - 1.0).abs() < 1e-12);
    assert!((mv.components[3][3] - 13.0).abs() < 1e-12);
    assert!((mv.components[0][3] + 4.0).abs() < 1e-12);
    assert_eq!(mv.components[0][3], mv.components[3][0]);
    assert_eq!(mv.signature, (1, 3));

    // six nonzero cells in the dense symmetric matrix (tt, rr, θθ, φφ, tφ, φt)
    let mut nonzero = 0;
    for i in 0..4 {
        for j in 0..4 {
            if mv.components[i][j] != 0.0 {
                nonzero += 1;
            }
        }
    }
    assert_eq!(nonzero, 6);
}

#[test]
fn product_sphere_metric_is_flat_at_chart_origin() {
    let (spec, _) = get_spacetime("r_x_s3", &[]).unwrap();
    let chart = &spec.charts[0];
    let mv = metric_at(&spec, chart, &[0.0, 0.0, 0.0, 0.0]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let expect = if i != j {
                0.0
            } else if i == 0 {
                -1.0
            } else {
                1.0
            };
            assert!((mv.components[i][j] - expect).abs() < 1e-14);
        }
    }
    assert_eq!(mv.signature, (1, 3));
}

/// Independent connection oracle: Christoffel symbols from central finite
/// differences of the raw metric components.
fn christoffel_fd_oracle(
    spec: &nullsymp_core::SpacetimeSpec,
    chart: &nullsymp_core::Chart,
    p: &[f64],
) -> [[[f64; 4]; 4]; 4] {
    let dim = chart.dim();
    let h = 1e-5;
    let g = metric_components_raw(spec, chart, p).unwrap();
    let ginv = invert(&g, dim, 0.0).unwrap();
    let mut dg = zero_tensor3();
    for a in 0..dim {
        let mut pp = p.to_vec();
        let mut pm = p.to_vec();
        pp[a] += h;
        pm[a] -= h;
        let gp = metric_components_raw(spec, chart, &pp).unwrap();
        let gm = metric_components_raw(spec, chart, &pm).unwrap();
        for i in 0..dim {
            for j in 0..dim {
                dg[i][j][a] = (gp[i][j] - gm[i][j]) / (2.0 * h);
            }
        }
    }
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                let mut acc = 0.0;
                for d in 0..dim {
                    acc += ginv[a][d] * (dg[d][c][b] + dg[b][d][c] - dg[b][c][d]);
                }
                gamma[a][b][c] = 0.5 * acc;
            }
        }
    }
    gamma
}

#[test]
fn kerr_christoffel_agrees_with_finite_difference_oracle() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.3];
    let conn = christoffel_at(&spec, chart, &p).unwrap();
    let oracle = christoffel_fd_oracle(&spec, chart, &p);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                assert!(
                    (conn.gamma[a][b][c] - oracle[a][b][c]).abs() < 1e-7,
                    "Gamma^{a}_{b}{c}: exact {} vs fd {}",
                    conn.gamma[a][b][c],
                    oracle[a][b][c]
                );
            }
        }
    }
}

#[test]
fn sphere_chart_metric_compatibility() {
    // nabla g = 0 componentwise below 1e-10 on an S^3 chart point
    let (spec, _) = get_spacetime("s3_lorentz_3d", &[]).unwrap();
    let chart = &spec.charts[0];
    let p = [0.1, 0.1, 0.1];
    let mv = metric_at(&spec, chart, &p).unwrap();
    let conn = christoffel_at(&spec, chart, &p).unwrap();
    let ctx = nullsymp_core::EvalCtx {
        point: &p,
        params: spec.params(),
    };
    for c in 0..3 {
        for a in 0..3 {
            for b in 0..3 {
                let mut r = chart.metric_deriv(a, b, c).eval(&ctx).unwrap();
                for d in 0..3 {
                    r -= conn.gamma[d][c][a] * mv.components[d][b]
                        + conn.gamma[d][c][b] * mv.components[a][d];
                }
                assert!(r.abs() < 1e-10, "nabla_{c} g_{a}{b} = {r}");
            }
        }
    }
}

#[test]
fn kerr_is_ricci_flat_on_sampled_points() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pts = chart.sample_points(&mut rng, spec.params(), 100).unwrap();
    let mut worst = 0.0_f64;
    for p in &pts {
        let curv = curvature_at(&spec, chart, p).unwrap();
        worst = worst.max(max_abs(&curv.ricci, 4));
    }
    assert!(worst < 1e-8, "max |Ric| = {worst:e}");
}

#[test]
fn product_sphere_ric_kk_is_two() {
    let (spec, _) = get_spacetime("r_x_s3", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for chart in &spec.charts {
        let pts = chart.sample_points(&mut rng, spec.params(), 8).unwrap();
        for p in &pts {
            let curv = curvature_at(&spec, chart, p).unwrap();
            let k = field_value(&spec, chart, "ktilde", p).unwrap();
            let ric_kk = curv.ricci_contract(&k[..4], &k[..4]);
            assert!(
                (ric_kk - 2.0).abs() < 1e-8,
                "Ric(ktilde, ktilde) = {ric_kk} on {}",
                chart.name
            );
        }
    }
}

#[test]
fn conformal_kerr_ric_kk_matches_conformal_formula() {
    let (spec, _) = get_spacetime("kerr_conformal", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = chart.sample_points(&mut rng, spec.params(), 40).unwrap();
    for p in &pts {
        let curv = curvature_at(&spec, chart, p).unwrap();
        let k = field_value(&spec, chart, "K", p).unwrap();
        let ric_kk = curv.ricci_contract(&k[..4], &k[..4]);
        let expect = 2.0 * (-4.0 * p[1]).exp();
        assert!(
            (ric_kk - expect).abs() / expect < 1e-6,
            "Ric(K,K) = {ric_kk}, expected {expect} at r = {}",
            p[1]
        );
    }
}

#[test]
fn distinguished_fields_have_geodesic_flow() {
    let (kerr, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = kerr.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in kerr.charts[0]
        .sample_points(&mut rng, kerr.params(), 30)
        .unwrap()
    {
        let cd = covariant_derivative_at(&kerr, chart, "k", &p).unwrap();
        let acc = cd.along_field();
        let worst = acc[..4].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "|nabla_k k| = {worst:e}");
    }

    let (prod, _) = get_spacetime("r_x_s3", &[]).unwrap();
    for chart in &prod.charts {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for p in chart.sample_points(&mut rng, prod.params(), 6).unwrap() {
            let cd = covariant_derivative_at(&prod, chart, "ktilde", &p).unwrap();
            let acc = cd.along_field();
            let worst = acc[..4].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(worst < 1e-9, "|nabla k~| = {worst:e} on {}", chart.name);
        }
    }
}

#[test]
fn causal_classification_of_catalog_fields() {
    // Kerr principal null field: 1/3 + 25/9 + 52/9 - 80/9 = 0
    let (kerr, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = kerr.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_2, 0.0];
    let k = field_value(&kerr, chart, "k", &p).unwrap();
    let (class, gkk) = causal_classify(&kerr, chart, &p, &k[..4]).unwrap();
    assert_eq!(class, CausalClass::Null);
    assert!(gkk.abs() < 1e-12);

    // the Lorentzian 3-sphere field is unit timelike
    let (s3, _) = get_spacetime("s3_lorentz_3d", &[]).unwrap();
    let chart = &s3.charts[0];
    let q = [0.2, -0.1, 0.15];
    let k = field_value(&s3, chart, "k", &q).unwrap();
    let (class, gkk) = causal_classify(&s3, chart, &q, &k[..3]).unwrap();
    assert_eq!(class, CausalClass::Timelike);
    assert!((gkk + 1.0).abs() < 1e-12);
}

#[test]
fn killing_fields_of_the_builtins() {
    // the Hopf field is Killing for the round metric (through the product)
    let (prod, _) = get_spacetime("r_x_s3", &[]).unwrap();
    for chart in prod.charts.iter().take(3) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in chart.sample_points(&mut rng, prod.params(), 6).unwrap() {
            let lie = killing_residual(&prod, chart, "k", &p).unwrap();
            assert!(
                max_abs(&lie, 4) < 1e-9,
                "Killing residual {} on {}",
                max_abs(&lie, 4),
                chart.name
            );
        }
    }
    // Kerr time translation is Killing (components are t-independent)
    let (kerr, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = kerr.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for p in chart.sample_points(&mut rng, kerr.params(), 20).unwrap() {
        let lie = killing_residual(&kerr, chart, "dt", &p).unwrap();
        assert!(max_abs(&lie, 4) < 1e-10);
    }
}

#[test]
fn ricci_scalar_of_the_product_is_six() {
    // product of a line with the unit round 3-sphere: R = 6
    let (prod, _) = get_spacetime("r_x_s3", &[]).unwrap();
    let chart = &prod.charts[4];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for p in chart.sample_points(&mut rng, prod.params(), 10).unwrap() {
        let curv = curvature_at(&prod, chart, &p).unwrap();
        assert!(
            (curv.ricci_scalar - 6.0).abs() < 1e-8,
            "R = {}",
            curv.ricci_scalar
        );
    }
}

#[test]
fn lowered_riemann_antisymmetric_in_first_pair() {
    // an extra symmetry not in the battery: R_{abcd} = -R_{bacd}
    let (kerr, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = kerr.chart("bl").unwrap();
    let p = [0.3, 2.0, 0.9, 1.0];
    let mv = metric_at(&kerr, chart, &p).unwrap();
    let curv = curvature_at(&kerr, chart, &p).unwrap();
    let mut lowered = [[[[0.0_f64; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut v = 0.0;
                    for e in 0..4 {
                        v += mv.components[a][e] * curv.riemann[e][b][c][d];
                    }
                    lowered[a][b][c][d] = v;
                }
            }
        }
    }
    let mut worst = 0.0_f64;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    worst = worst.max((lowered[a][b][c][d] + lowered[b][a][c][d]).abs());
                }
            }
        }
    }
    assert!(worst < 1e-8 * mv.scale, "first-pair antisymmetry {worst:e}");
}

#[test]
fn out_of_domain_point_is_rejected() {
    let (kerr, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = kerr.chart("bl").unwrap();
    // on the axis: sin(theta) = 0 violates the domain
    let p = [0.0, 1.0, 0.0, 0.0];
    assert!(metric_at(&kerr, chart, &p).is_err());
}

#[test]
fn degenerate_direction_norms() {
    let m: Matrix = [
        [0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    // double-null pairing block has signature (1, 3): one negative eigenvalue
    assert_eq!(linalg::signature(&m, 4, 1e-12), (1, 3));
}
