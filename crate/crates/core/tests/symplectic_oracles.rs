//! Symplectic-form oracles on the built-in spacetimes: pairing identities,
//! the determinant identity, Liouville and closedness residuals, Lagrangian
//! degeneracy, the 3-d contact checks, and the degeneracy boundary.

use nullsymp_core::catalog::get_spacetime;
use nullsymp_core::checks::{scan_grid, GridAxis, ScanGrid};
use nullsymp_core::geometry::field_value;
use nullsymp_core::optics::build_null_frame;
use nullsymp_core::symplectic::{
    contact_check_3d, lagrangian_residual, SymplecticSetup, SympError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

#[test]
fn kerr_determinant_identity_at_hand_point() {
    // at (0, 1, pi/4, 0): k(f) = 1, iota^2 = 8/9, f = r = 1,
    // so det omega = e^4 * 8/9 in the frame basis
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.0];
    let report = setup.report_at(&p).unwrap();
    let expect = 1.0_f64.exp().powi(4) * 8.0 / 9.0;
    assert!(
        (report.det_frame - expect).abs() / expect < 1e-7,
        "det_frame = {}, expected {}",
        report.det_frame,
        expect
    );
    assert!(report.det_identity_residual.abs() / expect < 1e-7);
    assert!(report.nondegenerate);
    assert!((report.kf - 1.0).abs() < 1e-12);
}

#[test]
fn kerr_pairing_identities_on_sampled_points() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in chart.sample_points(&mut rng, spec.params(), 100).unwrap() {
        let report = setup.report_at(&p).unwrap();
        // omega(k, L) = -e^r with k(r) = 1
        assert!(
            (report.omega_kl + p[1].exp()).abs() < 1e-8,
            "omega_kl = {} at r = {}",
            report.omega_kl,
            p[1]
        );
        assert!(report.deg1_residual < 1e-8);
        assert!(report.deg2_residual < 1e-7, "deg2 {}", report.deg2_residual);
        assert!(report.omega_kx.abs() < 1e-9);
        assert!(report.omega_ky.abs() < 1e-9);
        // det_frame = Pf^2
        assert!(
            (report.det_frame - report.pfaffian.powi(2)).abs()
                / (1.0 + report.det_frame.abs())
                < 1e-9
        );
    }
}

#[test]
fn kerr_grid_is_nondegenerate_in_the_northern_hemisphere() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
    for i in 0..20 {
        for j in 0..20 {
            let r = 0.5 + 4.5 * (i as f64) / 19.0;
            let theta = 0.05 + 1.4 * (j as f64) / 19.0;
            let report = setup.report_at(&[0.0, r, theta, 0.0]).unwrap();
            assert!(report.nondegenerate, "degenerate at r={r}, theta={theta}");
        }
    }
}

#[test]
fn kerr_degenerates_exactly_on_the_equator() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
    let report = setup.report_at(&[0.0, 1.0, FRAC_PI_2, 0.0]).unwrap();
    assert!(
        report.pfaffian.abs() < 1e-10 * (2.0_f64).exp(),
        "equatorial Pfaffian {}",
        report.pfaffian
    );
    assert!(!report.nondegenerate);
}

#[test]
fn liouville_identity_with_the_right_and_wrong_potential() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup_r = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
    let setup_t = SymplecticSetup::new(&spec, chart, "k", "f_t").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for p in chart.sample_points(&mut rng, spec.params(), 50).unwrap() {
        // X = k/k(f) satisfies the identity for either potential
        assert!(setup_r.liouville_residual_at(&p).unwrap() < 1e-8);
        assert!(setup_t.liouville_residual_at(&p).unwrap() < 1e-8);
        // but X = k itself fails it for f = t (k(t) != 1)
        let omega = setup_t.omega_at(&p).unwrap();
        let alpha = setup_t.alpha_at(&p).unwrap();
        let k = field_value(&spec, chart, "k", &p).unwrap();
        let ik = omega.interior_product(&k[..4]);
        let mut worst = 0.0_f64;
        for b in 0..4 {
            worst = worst.max((ik[b] - alpha[b]).abs());
        }
        assert!(
            worst > 1e-3,
            "X = k should not satisfy the identity for f = t (residual {worst})"
        );
    }
}

#[test]
fn product_sphere_liouville_residual() {
    let (spec, _) = get_spacetime("r_x_s3", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for chart in &spec.charts {
        let setup = SymplecticSetup::new(&spec, chart, "ktilde", "f").unwrap();
        for p in chart.sample_points(&mut rng, spec.params(), 6).unwrap() {
            assert!(
                setup.liouville_residual_at(&p).unwrap() < 1e-8,
                "chart {}",
                chart.name
            );
        }
    }
}

#[test]
fn closedness_residual_small_on_all_builtins() {
    for name in ["minkowski_cartesian", "minkowski_spherical", "kerr_fast", "r_x_s3"] {
        let (spec, entry) = get_spacetime(name, &[]).unwrap();
        let k = entry.k_field.unwrap();
        let f = entry.f_field.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for chart in &spec.charts {
            let setup = SymplecticSetup::new(&spec, chart, k, f).unwrap();
            for p in chart.sample_points(&mut rng, spec.params(), 5).unwrap() {
                let scale = nullsymp_core::geometry::metric_at(&spec, chart, &p)
                    .unwrap()
                    .scale;
                let res = setup.closedness_residual_at(&p).unwrap();
                assert!(
                    res < 1e-8 * scale,
                    "d omega residual {res:e} on {name}/{}",
                    chart.name
                );
            }
        }
    }
}

#[test]
fn lagrangian_directions_in_the_screen() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.0];
    let k = field_value(&spec, chart, "k", &p).unwrap();
    let frame = build_null_frame(&spec, chart, &p, &k[..4], None).unwrap();

    // the x-leg and random screen combinations are omega-isotropic with k
    let v: Vec<f64> = frame.x[..4].to_vec();
    assert!(lagrangian_residual(&spec, chart, "k", "f", &p, &v).unwrap() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        if a.abs() + b.abs() < 0.1 {
            continue;
        }
        let v: Vec<f64> = (0..4).map(|i| a * frame.x[i] + b * frame.y[i]).collect();
        assert!(lagrangian_residual(&spec, chart, "k", "f", &p, &v).unwrap() < 1e-9);
    }

    // L is not orthogonal to k: precondition violation
    let l: Vec<f64> = frame.l[..4].to_vec();
    assert!(matches!(
        lagrangian_residual(&spec, chart, "k", "f", &p, &l),
        Err(SympError::NotOrthogonal { .. })
    ));
}

#[test]
fn contact_form_on_the_lorentzian_sphere() {
    let (spec, _) = get_spacetime("s3_lorentz_3d", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut factors = Vec::new();
    for chart in &spec.charts {
        for p in chart.sample_points(&mut rng, spec.params(), 13).unwrap() {
            let r = contact_check_3d(&spec, chart, "k", &p).unwrap();
            assert!(
                r.reeb_residual_interior < 1e-8,
                "k .| d theta = {} on {}",
                r.reeb_residual_interior,
                chart.name
            );
            assert!(r.reeb_residual_pairing < 1e-8);
            factors.push(r.volume_factor.abs());
        }
    }
    assert!(factors.len() >= 100);
    factors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = factors[0];
    let median = factors[factors.len() / 2];
    assert!(
        min > 0.1 * median,
        "volume factor collapses: min {min}, median {median}"
    );
}

#[test]
fn pfaffian_scan_vanishes_exactly_on_the_equator() {
    // 11 theta cells symmetric about pi/2 in [0.05, pi - 0.05]: only the
    // middle column degenerates
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let grid = ScanGrid {
        axis_a: GridAxis {
            coord: 1,
            lo: 0.5,
            hi: 3.0,
            n: 5,
        },
        axis_b: GridAxis {
            coord: 2,
            lo: 0.05,
            hi: PI - 0.05,
            n: 11,
        },
        base_point: vec![0.0, 0.0, 0.0, 0.0],
    };
    let rows = scan_grid(&spec, chart, "k", "f", &grid, false).unwrap();
    assert_eq!(rows.len(), 55);
    for row in &rows {
        let theta = row.point[2];
        let pf = row.pfaffian.expect("in-domain");
        let threshold = 1e-6 * (2.0 * row.point[1]).exp();
        let on_equator = (theta - FRAC_PI_2).abs() < 1e-9;
        if on_equator {
            assert!(
                pf.abs() < threshold,
                "equator cell should degenerate: Pf = {pf:e}"
            );
            assert_eq!(row.nondegenerate, Some(false));
        } else {
            assert!(
                pf.abs() > threshold,
                "off-equator cell degenerate at theta = {theta}: Pf = {pf:e}"
            );
        }
    }
}

#[test]
fn degeneracy_tracks_the_twist_times_kf() {
    // scan over the f = t potential: kf = (r^2 + a^2)/Delta never vanishes,
    // so the verdict still flips exactly where the twist dies
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let setup = SymplecticSetup::new(&spec, chart, "k", "f_t").unwrap();
    for (theta, expect_nondeg) in [
        (FRAC_PI_4, true),
        (FRAC_PI_2, false),
        (2.0, true),
    ] {
        let report = setup.report_at(&[0.0, 1.2, theta, 0.5]).unwrap();
        assert_eq!(
            report.nondegenerate, expect_nondeg,
            "theta = {theta}, Pf = {}",
            report.pfaffian
        );
    }
}
