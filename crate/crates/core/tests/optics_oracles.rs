//! Optical-scalar oracles: the closed-form twist on the rotating entry, the
//! transport residuals, frame independence, and the pregeodesic reduction.

use nullsymp_core::catalog::{entry, get_spacetime};
use nullsymp_core::geometry::{field_value, metric_at};
use nullsymp_core::linalg::zero_vector;
use nullsymp_core::optics::{
    build_null_frame, frobenius_value, optical_scalars, optical_scalars_in_frame,
    pregeodesic_residual, raychaudhuri_residuals, NullFrame, RaychaudhuriPipeline,
};
use nullsymp_core::spec::parse_spacetime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

fn kerr_iota2(a: f64, r: f64, theta: f64) -> f64 {
    let rho2 = r * r + a * a * theta.cos().powi(2);
    4.0 * a * a * theta.cos().powi(2) / (rho2 * rho2)
}

#[test]
fn kerr_frame_satisfies_all_pairings() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.0];
    let k = field_value(&spec, chart, "k", &p).unwrap();
    let frame = build_null_frame(&spec, chart, &p, &k[..4], None).unwrap();
    let g = metric_at(&spec, chart, &p).unwrap();
    assert!(
        frame.max_pairing_residual(&g) < 1e-10,
        "pairing residual {}",
        frame.max_pairing_residual(&g)
    );
}

#[test]
fn kerr_twist_matches_closed_form_at_hand_point() {
    // rho2 = 3 at (r, theta) = (1, pi/4), so iota^2 = 16 * 0.5 / 9 = 8/9
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.0];
    let s = optical_scalars(&spec, chart, "k", &p).unwrap();
    assert!(
        (s.twist_sq - 8.0 / 9.0).abs() < 1e-8,
        "iota^2 = {}",
        s.twist_sq
    );
    assert!(s.geodesic_residual < 1e-9);
}

#[test]
fn kerr_twist_closed_form_on_grid() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let a = spec.param("a").unwrap();
    let mut worst = 0.0_f64;
    for i in 0..20 {
        for j in 0..20 {
            let r = 0.5 + 4.5 * (i as f64) / 19.0;
            let theta = 0.05 + 1.4 * (j as f64) / 19.0;
            let p = [0.0, r, theta, 0.0];
            let s = optical_scalars(&spec, chart, "k", &p).unwrap();
            let expect = kerr_iota2(a, r, theta);
            worst = worst.max((s.twist_sq - expect).abs() / expect);
        }
    }
    assert!(worst < 1e-7, "max relative twist error {worst:e}");
}

#[test]
fn kerr_twist_symbolic_route_agrees_with_frames() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let pipeline = RaychaudhuriPipeline::new(&spec, chart, "k").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for p in chart.sample_points(&mut rng, spec.params(), 25).unwrap() {
        let sym = pipeline.iota2_at(&p).unwrap();
        let frame = optical_scalars(&spec, chart, "k", &p).unwrap().twist_sq;
        assert!(
            (sym - frame).abs() < 1e-8 * (1.0 + sym.abs()),
            "symbolic {sym} vs frame {frame}"
        );
    }
}

#[test]
fn kerr_raychaudhuri_residuals_vanish() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let pipeline = RaychaudhuriPipeline::new(&spec, chart, "k").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for p in chart.sample_points(&mut rng, spec.params(), 100).unwrap() {
        let res = pipeline.residuals_at(&p).unwrap();
        worst = worst.max(res.r1.abs()).max(res.r2.abs());
    }
    assert!(worst < 1e-7, "max |r1|,|r2| = {worst:e}");
}

#[test]
fn product_sphere_twist_squared_is_four() {
    // with theta = sigma = 0 the first transport equation forces
    // iota^2 = 2 Ric(k~, k~) = 4
    let (spec, _) = get_spacetime("r_x_s3", &[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for chart in &spec.charts {
        for p in chart.sample_points(&mut rng, spec.params(), 5).unwrap() {
            let s = optical_scalars(&spec, chart, "ktilde", &p).unwrap();
            assert!(
                (s.twist_sq - 4.0).abs() < 1e-8,
                "iota^2 = {} on {}",
                s.twist_sq,
                chart.name
            );
            assert!(s.theta.abs() < 1e-9);
            assert!(s.shear_sq < 1e-9);
            let res = raychaudhuri_residuals(&spec, chart, "ktilde", &p).unwrap();
            assert!(res.r1.abs() < 1e-7 && res.r2.abs() < 1e-7);
        }
    }
}

#[test]
fn theta_equals_coordinate_divergence_for_geodesic_null_fields() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for p in chart.sample_points(&mut rng, spec.params(), 40).unwrap() {
        let s = optical_scalars(&spec, chart, "k", &p).unwrap();
        assert!(
            (s.theta - s.theta_coordinate).abs() < 1e-8,
            "screen trace {} vs divergence {}",
            s.theta,
            s.theta_coordinate
        );
    }
}

#[test]
fn pregeodesic_residuals_for_exponentially_rescaled_field() {
    // K = e^r k has lambda = e^r since k(r) = 1
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0_f64;
    for p in chart.sample_points(&mut rng, spec.params(), 50).unwrap() {
        let res = pregeodesic_residual(&spec, chart, "K", &p).unwrap();
        assert!(
            (res.lambda - p[1].exp()).abs() < 1e-8 * p[1].exp(),
            "lambda = {} at r = {}",
            res.lambda,
            p[1]
        );
        worst = worst.max(res.r3.abs()).max(res.r4.abs());
    }
    assert!(worst < 1e-7, "max |r3|,|r4| = {worst:e}");
}

#[test]
fn constant_rescale_scales_the_scalars() {
    // appending k2 = 2k to the catalog source: theta and iota double,
    // shear^2 quadruples, and the pregeodesic residuals stay near zero with
    // lambda = 0
    let e = entry("kerr_fast").unwrap();
    let src = format!(
        "{}  vector k2 = ( 2*(r^2 + a^2)/Delta , 2 , 0 , 2*a/Delta )\n",
        e.source
    );
    let spec = parse_spacetime(&src).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.3, 0.8, 2.0];
    let s1 = optical_scalars(&spec, chart, "k", &p).unwrap();
    let s2 = optical_scalars(&spec, chart, "k2", &p).unwrap();
    assert!((s2.theta - 2.0 * s1.theta).abs() < 1e-9);
    assert!((s2.twist_sq - 4.0 * s1.twist_sq).abs() < 1e-8);
    assert!((s2.shear_sq - 4.0 * s1.shear_sq).abs() < 1e-9);
    let pre = pregeodesic_residual(&spec, chart, "k2", &p).unwrap();
    assert!(pre.lambda.abs() < 1e-9);
    assert!(pre.r3.abs() < 1e-9 && pre.r4.abs() < 1e-9);
}

fn rotate_frame(frame: &NullFrame, angle: f64) -> NullFrame {
    let mut out = frame.clone();
    for i in 0..4 {
        out.x[i] = angle.cos() * frame.x[i] + angle.sin() * frame.y[i];
        out.y[i] = -angle.sin() * frame.x[i] + angle.cos() * frame.y[i];
    }
    out
}

fn null_rotate_frame(frame: &NullFrame, a: f64, b: f64) -> NullFrame {
    let mut out = frame.clone();
    for i in 0..4 {
        out.x[i] = frame.x[i] + a * frame.k[i];
        out.y[i] = frame.y[i] + b * frame.k[i];
        out.l[i] =
            frame.l[i] + a * frame.x[i] + b * frame.y[i] + 0.5 * (a * a + b * b) * frame.k[i];
    }
    out
}

#[test]
fn scalars_are_frame_independent() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.0, FRAC_PI_4, 0.0];
    let k = field_value(&spec, chart, "k", &p).unwrap();
    let base = build_null_frame(&spec, chart, &p, &k[..4], None).unwrap();
    let reference = optical_scalars_in_frame(&spec, chart, "k", &p, &base).unwrap();
    let g = metric_at(&spec, chart, &p).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let angle = rng.random_range(0.0..2.0 * PI);
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(-2.0..2.0);
        let frame = null_rotate_frame(&rotate_frame(&base, angle), a, b);
        assert!(frame.max_pairing_residual(&g) < 1e-9, "admissible frame");
        let s = optical_scalars_in_frame(&spec, chart, "k", &p, &frame).unwrap();
        assert!((s.theta - reference.theta).abs() < 1e-8);
        assert!((s.shear_sq - reference.shear_sq).abs() < 1e-8);
        assert!((s.twist_sq - reference.twist_sq).abs() < 1e-8);
    }

    // orientation swap flips the sign of the twist but not its square
    let mut swapped = base.clone();
    std::mem::swap(&mut swapped.x, &mut swapped.y);
    let s = optical_scalars_in_frame(&spec, chart, "k", &p, &swapped).unwrap();
    assert!((s.twist + reference.twist).abs() < 1e-10);
    assert!((s.twist_sq - reference.twist_sq).abs() < 1e-10);
}

#[test]
fn seeded_frame_construction_is_deterministic() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    let p = [0.0, 1.7, 0.9, 0.4];
    let k = field_value(&spec, chart, "k", &p).unwrap();
    let mut seed = zero_vector();
    seed[0] = 0.3;
    seed[1] = 1.0;
    let f1 = build_null_frame(&spec, chart, &p, &k[..4], Some(&seed[..4])).unwrap();
    let f2 = build_null_frame(&spec, chart, &p, &k[..4], Some(&seed[..4])).unwrap();
    assert_eq!(f1.l, f2.l);
    assert_eq!(f1.x, f2.x);
    assert_eq!(f1.y, f2.y);
}

#[test]
fn frobenius_magnitude_tracks_the_twist() {
    let (spec, _) = get_spacetime("kerr_fast", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();

    // off the equator the magnitude is |iota| itself
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..200 {
        let p = [
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..5.0),
            rng.random_range(0.05..PI - 0.05),
            rng.random_range(0.0..2.0 * PI),
        ];
        let fv = frobenius_value(&spec, chart, "k", &p).unwrap();
        let s = optical_scalars(&spec, chart, "k", &p).unwrap();
        let twist_mag = s.twist_sq.sqrt();
        assert!(
            (fv - twist_mag).abs() < 1e-8 * (1.0 + twist_mag),
            "frobenius {fv} vs |twist| {twist_mag}"
        );
        // joint zero set at tolerance
        assert_eq!(fv < 1e-9, s.twist_sq < 1e-18, "zero sets must coincide");
    }

    // on the equator both vanish
    let p_eq = [0.0, 1.0, FRAC_PI_2, 0.3];
    let fv = frobenius_value(&spec, chart, "k", &p_eq).unwrap();
    assert!(fv < 1e-9, "equatorial frobenius magnitude {fv}");
    // and at pi/4 neither does
    let p_off = [0.0, 1.0, FRAC_PI_4, 0.3];
    assert!(frobenius_value(&spec, chart, "k", &p_off).unwrap() > 0.1);
}

#[test]
fn conformal_kerr_equatorial_twist_vanishes() {
    let (spec, _) = get_spacetime("kerr_conformal", &[]).unwrap();
    let chart = spec.chart("bl").unwrap();
    for r in [0.5, 1.0, 1.8] {
        let p = [0.0, r, FRAC_PI_2, 1.0];
        let s = optical_scalars(&spec, chart, "K", &p).unwrap();
        assert!(s.twist_sq < 1e-9, "equatorial iota^2 = {}", s.twist_sq);
    }
}
