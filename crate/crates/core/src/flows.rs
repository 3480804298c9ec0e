//! Integral curves of declared vector fields across chart atlases.
//!
//! The stepper is an adaptive Dormand-Prince 5(4) embedded pair. After each
//! accepted step the driver checks, in order: declared event functions
//! (sign-change localized by bisection over re-integrated probes), domain
//! boundary proximity (handoff through a declared transition when an
//! overlapping chart accepts the point, `left_atlas` otherwise), and - when
//! enabled - first return to the start point for closed-orbit detection.
//!
//! The affine parameter is the flow parameter of the given field: for the
//! geodesic null fields shipped in the catalog, flow lines are affinely
//! parametrized geodesics, so no separate geodesic equation is needed. A
//! second-order geodesic integrator is still provided
//! ([`integrate_geodesic`]) as a cross-check oracle.

use crate::expr::{EvalCtx, EvalError, Expr};
use crate::geometry::{christoffel_at, curvature_at, field_value, GeomError};
use crate::optics::{optical_scalars, RaychaudhuriPipeline};
use crate::spec::SpacetimeSpec;
use std::collections::BTreeMap;
use thiserror::Error;

/// Distance from a domain boundary at which a handoff is attempted.
pub const HANDOFF_MARGIN: f64 = 1e-8;
/// Parameter accuracy of event localization.
pub const EVENT_PARAM_TOL: f64 = 1e-10;
/// First-return distance threshold for closed-orbit detection.
pub const RETURN_TOL: f64 = 1e-6;
/// A curve must wander at least this far (start-chart coordinates) before
/// the return detector arms.
const ARM_RADIUS: f64 = 0.25;
const CAPTURE_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("field `{field}` is not declared on chart `{chart}`")]
    FieldMissing { field: String, chart: String },
    #[error("start point {point:?} is outside the domain of chart `{chart}`")]
    StartOutOfDomain { chart: String, point: Vec<f64> },
    #[error("flow target parameter must be nonzero")]
    ZeroRange,
    #[error("step budget exhausted after {0} steps")]
    MaxSteps(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    ReachedSmax,
    LeftAtlas { s: f64 },
    SingularEvent { s: f64, event: String },
    StepUnderflow { s: f64 },
    ClosedOrbit { period: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct Monitors {
    pub iota2: Option<f64>,
    pub theta: Option<f64>,
    pub ric_kk: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub rho2: Option<f64>,
    /// `dι²/ds + 2θι²` from a five-point stencil over uniformly spaced
    /// samples; present only on interior samples of uniform output grids.
    pub transport_residual: Option<f64>,
    /// Why a monitor is absent, e.g. "iota2: field is not null here".
    pub missing: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CurveSample {
    pub s: f64,
    pub chart: usize,
    pub point: Vec<f64>,
    pub monitors: Option<Monitors>,
}

#[derive(Debug)]
pub struct FlowResult {
    pub samples: Vec<CurveSample>,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Local error tolerance per step.
    pub tol: f64,
    pub max_steps: usize,
    /// Emit samples on a uniform parameter grid instead of every step.
    pub output_every: Option<f64>,
    pub detect_closed_orbit: bool,
    pub return_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-10,
            max_steps: 2_000_000,
            output_every: None,
            detect_closed_orbit: false,
            return_tol: RETURN_TOL,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded step; returns the fifth-order solution and the scaled error
/// norm (accept when <= 1).
fn rk45_step<F>(f: &F, s: f64, y: &[f64], h: f64, tol: f64) -> Result<(Vec<f64>, f64), FlowError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, FlowError>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f(s, y)?);
    for stage in 0..6 {
        let mut yi = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..n {
                    yi[i] += h * a * kj[i];
                }
            }
        }
        let c: f64 = A[stage].iter().sum();
        k.push(f(s + c * h, &yi)?);
    }
    let mut y5 = y.to_vec();
    let mut y4 = y.to_vec();
    for (j, kj) in k.iter().enumerate() {
        for i in 0..n {
            y5[i] += h * B5[j] * kj[i];
            y4[i] += h * B4[j] * kj[i];
        }
    }
    let mut err_sq = 0.0;
    for i in 0..n {
        let sc = tol + tol * y[i].abs().max(y5[i].abs());
        let e = (y5[i] - y4[i]) / sc;
        err_sq += e * e;
    }
    Ok((y5, (err_sq / n as f64).sqrt()))
}

/// Adaptive integration to an exact target parameter, no events or handoff.
fn integrate_to<F>(
    f: &F,
    s0: f64,
    y0: &[f64],
    target: f64,
    tol: f64,
) -> Result<Vec<f64>, FlowError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, FlowError>,
{
    let mut s = s0;
    let mut y = y0.to_vec();
    if (target - s0).abs() < 1e-300 {
        return Ok(y);
    }
    let dir = (target - s0).signum();
    let mut h = dir * (target - s0).abs().min(1e-3);
    for _ in 0..1_000_000 {
        if (target - s) * dir <= 1e-15 * (1.0 + s.abs()) {
            return Ok(y);
        }
        if (s + h - target) * dir > 0.0 {
            h = target - s;
        }
        let (y_new, err) = rk45_step(f, s, &y, h, tol)?;
        if err <= 1.0 {
            s += h;
            y = y_new;
            let grow = if err > 0.0 {
                (0.9 * err.powf(-0.2)).min(5.0)
            } else {
                5.0
            };
            h *= grow.max(0.2);
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
        if h.abs() < 1e-16 * (1.0 + s.abs()) {
            return Err(FlowError::MaxSteps(0));
        }
    }
    Err(FlowError::MaxSteps(1_000_000))
}

/// Bisect a scalar crossing within one accepted step by re-integrating
/// probes from the step start. `g` must change sign between `s_a` and `s_b`.
fn refine_crossing<F, G>(
    f: &F,
    s_a: f64,
    y_a: &[f64],
    s_b: f64,
    tol: f64,
    g: &G,
) -> Result<(f64, Vec<f64>), FlowError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, FlowError>,
    G: Fn(&[f64]) -> Result<f64, FlowError>,
{
    let mut lo = s_a;
    let mut hi = s_b;
    let g_lo = g(y_a)?;
    let mut y_hi = integrate_to(f, s_a, y_a, hi, tol)?;
    for _ in 0..200 {
        if (hi - lo).abs() <= EVENT_PARAM_TOL * 1e-2 * (1.0 + lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let y_mid = integrate_to(f, s_a, y_a, mid, tol)?;
        let g_mid = g(&y_mid)?;
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
            y_hi = y_mid;
        }
    }
    Ok((hi, y_hi))
}

/// Locate an interior minimum of a scalar over one accepted step by golden
/// section on re-integrated probes. Catches events whose zero set is
/// narrower than the step (the value dips below zero and recovers between
/// the endpoints, where plain sign checks see nothing).
fn interior_minimum<F, G>(
    f: &F,
    s_a: f64,
    y_a: &[f64],
    s_b: f64,
    tol: f64,
    g: &G,
) -> Result<(f64, f64), FlowError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, FlowError>,
    G: Fn(&[f64]) -> Result<f64, FlowError>,
{
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut lo = s_a;
    let mut hi = s_b;
    let mut m1 = hi - PHI * (hi - lo);
    let mut m2 = lo + PHI * (hi - lo);
    let eval = |s: f64| -> Result<f64, FlowError> {
        let y = integrate_to(f, s_a, y_a, s, tol)?;
        g(&y)
    };
    let mut g1 = eval(m1)?;
    let mut g2 = eval(m2)?;
    for _ in 0..120 {
        if (hi - lo).abs() <= EVENT_PARAM_TOL * (1.0 + lo.abs()) {
            break;
        }
        if g1 <= g2 {
            hi = m2;
            m2 = m1;
            g2 = g1;
            m1 = hi - PHI * (hi - lo);
            g1 = eval(m1)?;
        } else {
            lo = m1;
            m1 = m2;
            g1 = g2;
            m2 = lo + PHI * (hi - lo);
            g2 = eval(m2)?;
        }
    }
    let s_min = 0.5 * (lo + hi);
    Ok((s_min, eval(s_min)?))
}

struct ChartRhs<'a> {
    spec: &'a SpacetimeSpec,
    comps: &'a [Expr],
}

impl<'a> ChartRhs<'a> {
    fn rhs(&self, _s: f64, y: &[f64]) -> Result<Vec<f64>, FlowError> {
        let ctx = EvalCtx {
            point: y,
            params: self.spec.params(),
        };
        let mut out = Vec::with_capacity(self.comps.len());
        for e in self.comps {
            let v = e.eval(&ctx)?;
            if !v.is_finite() {
                return Err(FlowError::Eval(EvalError::DivisionByZero));
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Map a point into the start chart when a declared transition allows it.
fn to_chart(
    spec: &SpacetimeSpec,
    from: usize,
    target: usize,
    y: &[f64],
) -> Option<Vec<f64>> {
    if from == target {
        return Some(y.to_vec());
    }
    let tr = spec.transition(from, target)?;
    if !tr.overlap_holds(y, spec.params()) {
        return None;
    }
    let z = tr.apply(y, spec.params()).ok()?;
    if spec.charts[target].in_domain(&z, spec.params()) {
        Some(z)
    } else {
        None
    }
}

/// Integrate the flow of a declared field from `p0` to parameter `s_end`
/// (signed; the curve starts at s = 0).
pub fn integrate_flow(
    spec: &SpacetimeSpec,
    start_chart: &str,
    p0: &[f64],
    field: &str,
    s_end: f64,
    opts: &FlowOptions,
) -> Result<FlowResult, FlowError> {
    if s_end == 0.0 {
        return Err(FlowError::ZeroRange);
    }
    let start_idx = spec
        .chart_index(start_chart)
        .ok_or_else(|| FlowError::UnknownChart(start_chart.to_string()))?;
    for c in &spec.charts {
        if c.vector(field).is_none() {
            return Err(FlowError::FieldMissing {
                field: field.to_string(),
                chart: c.name.clone(),
            });
        }
    }
    if !spec.charts[start_idx].in_domain(p0, spec.params()) {
        return Err(FlowError::StartOutOfDomain {
            chart: start_chart.to_string(),
            point: p0.to_vec(),
        });
    }

    let dir = s_end.signum();
    let dim = spec.dim;
    let mut cur = start_idx;
    let mut s = 0.0_f64;
    let mut y = p0[..dim].to_vec();
    let mut h = dir * 1e-3_f64.min(s_end.abs());
    let h_cap = s_end.abs().min(10.0);

    let mut samples: Vec<CurveSample> = vec![CurveSample {
        s,
        chart: cur,
        point: y.clone(),
        monitors: None,
    }];
    let mut next_out = opts.output_every.map(|d| d * dir);

    // closed-orbit detection state
    let k0 = field_value(spec, &spec.charts[start_idx], field, p0)?;
    let k0_norm = (0..dim).map(|i| k0[i] * k0[i]).sum::<f64>().sqrt();
    let k0_hat: Vec<f64> = (0..dim).map(|i| k0[i] / k0_norm.max(1e-300)).collect();
    let sec = |z: &[f64]| -> f64 {
        (0..dim).map(|i| (z[i] - p0[i]) * k0_hat[i]).sum::<f64>()
    };
    let dist = |z: &[f64]| -> f64 {
        (0..dim)
            .map(|i| (z[i] - p0[i]) * (z[i] - p0[i]))
            .sum::<f64>()
            .sqrt()
    };
    let mut armed = false;
    let mut suppressed = false;
    let mut prev_section: Option<(f64, f64)> = None; // (s, sec value) at prior sample
    // per-chart symbolic derivative of each event function along the field
    let mut event_dots: BTreeMap<usize, Vec<Expr>> = BTreeMap::new();

    let termination;
    let mut steps = 0usize;

    'outer: loop {
        steps += 1;
        if steps > opts.max_steps {
            return Err(FlowError::MaxSteps(opts.max_steps));
        }
        let chart = &spec.charts[cur];
        let comps = chart.vector(field).expect("validated above");
        let rhs_ctx = ChartRhs { spec, comps };
        let rhs = |s: f64, y: &[f64]| rhs_ctx.rhs(s, y);

        if (s_end - s) * dir <= 1e-14 * (1.0 + s.abs()) {
            termination = Termination::ReachedSmax;
            break;
        }

        // cap the step at smax and at the next output point
        let mut h_try = h.clamp(-h_cap, h_cap);
        if (s + h_try - s_end) * dir > 0.0 {
            h_try = s_end - s;
        }
        if let Some(no) = next_out {
            if (s + h_try - no) * dir > 0.0 {
                h_try = no - s;
            }
        }

        // attempt a step
        let s0 = s;
        let y0 = y.clone();
        let (y1, s1) = loop {
            match rk45_step(&rhs, s0, &y0, h_try, opts.tol) {
                Ok((y_new, err)) if err <= 1.0 && y_new.iter().all(|v| v.is_finite()) => {
                    let grow = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = h_try * grow;
                    break (y_new, s0 + h_try);
                }
                Ok((_, err)) => {
                    h_try *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                Err(FlowError::Eval(_)) => {
                    // evaluation failure inside the step: shrink toward the
                    // last good point; give up when the step underflows
                    h_try *= 0.5;
                }
                Err(e) => return Err(e),
            }
            if h_try.abs() < 1e-14 * (1.0 + s0.abs()) {
                samples.push(CurveSample {
                    s: s0,
                    chart: cur,
                    point: y0.clone(),
                    monitors: None,
                });
                termination = Termination::StepUnderflow { s: s0 };
                break 'outer;
            }
        };

        // earliest event crossing inside the step; a dip of the event value
        // below zero strictly inside the step counts too
        let mut event_hit: Option<(f64, Vec<f64>, String)> = None;
        for (ei, (name, expr)) in chart.events.iter().enumerate() {
            let ctx0 = EvalCtx {
                point: &y0,
                params: spec.params(),
            };
            let ctx1 = EvalCtx {
                point: &y1,
                params: spec.params(),
            };
            let (v0, v1) = match (expr.eval(&ctx0), expr.eval(&ctx1)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            let probe = |z: &[f64]| -> Result<f64, FlowError> {
                Ok(expr.eval(&EvalCtx {
                    point: z,
                    params: spec.params(),
                })?)
            };
            let mut bracket_hi: Option<f64> = None;
            if v0 > 0.0 && v1 <= 0.0 {
                bracket_hi = Some(s1);
            } else if v0 > 0.0 && v1 > 0.0 {
                // derivative along the traversal flips from falling to
                // rising: the value may dip below zero inside the step
                let dot = &event_dots
                    .entry(cur)
                    .or_insert_with(|| {
                        let comps = spec.charts[cur].vector(field).expect("validated");
                        spec.charts[cur]
                            .events
                            .iter()
                            .map(|(_, e)| {
                                let mut acc = crate::expr::Expr::zero();
                                for a in 0..dim {
                                    acc = crate::expr::Expr::add(
                                        acc,
                                        crate::expr::Expr::mul(comps[a].clone(), e.diff(a)),
                                    );
                                }
                                acc
                            })
                            .collect::<Vec<_>>()
                    })[ei];
                let (d0, d1) = match (dot.eval(&ctx0), dot.eval(&ctx1)) {
                    (Ok(a), Ok(b)) => (a * dir, b * dir),
                    _ => continue,
                };
                if d0 < 0.0 && d1 > 0.0 {
                    if let Ok((s_min, g_min)) =
                        interior_minimum(&rhs, s0, &y0, s1, opts.tol, &probe)
                    {
                        if g_min <= 0.0 {
                            bracket_hi = Some(s_min);
                        }
                    }
                }
            }
            if let Some(hi) = bracket_hi {
                let (s_star, y_star) = refine_crossing(&rhs, s0, &y0, hi, opts.tol, &probe)?;
                if event_hit
                    .as_ref()
                    .map(|(se, _, _)| (s_star - se) * dir < 0.0)
                    .unwrap_or(true)
                {
                    event_hit = Some((s_star, y_star, name.clone()));
                }
            }
        }

        // domain boundary proximity
        let margin0 = chart.domain_margin(&y0, spec.params());
        let margin1 = chart.domain_margin(&y1, spec.params());
        let band_hit: Option<(f64, Vec<f64>)> = if margin1 <= HANDOFF_MARGIN {
            if margin0 <= HANDOFF_MARGIN {
                Some((s0, y0.clone()))
            } else {
                let probe = |z: &[f64]| -> Result<f64, FlowError> {
                    Ok(spec.charts[cur].domain_margin(z, spec.params()) - HANDOFF_MARGIN)
                };
                let (s_star, y_star) = refine_crossing(&rhs, s0, &y0, s1, opts.tol, &probe)?;
                Some((s_star, y_star))
            }
        } else {
            None
        };

        // events win ties with the handoff band
        if let Some((s_e, y_e, name)) = &event_hit {
            let event_first = band_hit
                .as_ref()
                .map(|(s_b, _)| (s_e - s_b) * dir <= 0.0)
                .unwrap_or(true);
            if event_first {
                samples.push(CurveSample {
                    s: *s_e,
                    chart: cur,
                    point: y_e.clone(),
                    monitors: None,
                });
                termination = Termination::SingularEvent {
                    s: *s_e,
                    event: name.clone(),
                };
                break 'outer;
            }
        }

        if let Some((s_b, y_b)) = band_hit {
            // try to hand off to the best overlapping chart
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for tr in spec.transitions_from(cur) {
                if !tr.overlap_holds(&y_b, spec.params()) {
                    continue;
                }
                if let Ok(z) = tr.apply(&y_b, spec.params()) {
                    let m = spec.charts[tr.to].domain_margin(&z, spec.params());
                    if m > HANDOFF_MARGIN * 100.0
                        && best.as_ref().map(|(_, _, bm)| m > *bm).unwrap_or(true)
                    {
                        best = Some((tr.to, z, m));
                    }
                }
            }
            match best {
                Some((to, z, _)) => {
                    samples.push(CurveSample {
                        s: s_b,
                        chart: cur,
                        point: y_b.clone(),
                        monitors: None,
                    });
                    cur = to;
                    s = s_b;
                    y = z;
                    prev_section = None;
                    continue;
                }
                None => {
                    // no transition: singular event later in this step wins,
                    // an actual domain exit terminates, a graze continues
                    if let Some((s_e, y_e, name)) = event_hit {
                        samples.push(CurveSample {
                            s: s_e,
                            chart: cur,
                            point: y_e,
                            monitors: None,
                        });
                        termination = Termination::SingularEvent { s: s_e, event: name };
                        break 'outer;
                    }
                    if margin1 <= 0.0 {
                        let (s_star, y_star) = if margin0 <= 0.0 {
                            (s0, y0.clone())
                        } else {
                            let probe = |z: &[f64]| -> Result<f64, FlowError> {
                                Ok(spec.charts[cur].domain_margin(z, spec.params()))
                            };
                            refine_crossing(&rhs, s0, &y0, s1, opts.tol, &probe)?
                        };
                        samples.push(CurveSample {
                            s: s_star,
                            chart: cur,
                            point: y_star,
                            monitors: None,
                        });
                        termination = Termination::LeftAtlas { s: s_star };
                        break 'outer;
                    }
                }
            }
        }

        // first-return detection
        if opts.detect_closed_orbit && dir > 0.0 {
            if let Some(z) = to_chart(spec, cur, start_idx, &y1) {
                let d = dist(&z);
                if !armed && d > ARM_RADIUS {
                    armed = true;
                }
                if suppressed && d > 2.0 * CAPTURE_RADIUS {
                    suppressed = false;
                }
                let sv = sec(&z);
                if armed && !suppressed && d < CAPTURE_RADIUS {
                    if let Some((_s_prev, sec_prev)) = prev_section {
                        if sec_prev < 0.0 && sv >= 0.0 {
                            // bracketed the section crossing
                            let probe = |w: &[f64]| -> Result<f64, FlowError> {
                                match to_chart(spec, cur, start_idx, w) {
                                    Some(z) => Ok(-sec(&z)),
                                    None => Ok(f64::NAN),
                                }
                            };
                            let (s_star, y_star) =
                                refine_crossing(&rhs, s0, &y0, s1, opts.tol * 0.01, &probe)?;
                            if let Some(z_star) = to_chart(spec, cur, start_idx, &y_star) {
                                if dist(&z_star) < opts.return_tol {
                                    samples.push(CurveSample {
                                        s: s_star,
                                        chart: cur,
                                        point: y_star,
                                        monitors: None,
                                    });
                                    termination = Termination::ClosedOrbit { period: s_star };
                                    break 'outer;
                                }
                            }
                            suppressed = true;
                        }
                    }
                }
                prev_section = Some((s1, sv));
            } else {
                prev_section = None;
            }
        }

        s = s1;
        y = y1;

        // output
        match next_out {
            Some(no) => {
                if (s - no) * dir >= -1e-12 * (1.0 + s.abs()) {
                    samples.push(CurveSample {
                        s,
                        chart: cur,
                        point: y.clone(),
                        monitors: None,
                    });
                    next_out = Some(no + opts.output_every.unwrap() * dir);
                }
            }
            None => {
                samples.push(CurveSample {
                    s,
                    chart: cur,
                    point: y.clone(),
                    monitors: None,
                });
            }
        }
    }

    // make sure the terminal point is recorded
    if let Termination::ReachedSmax = termination {
        let last_s = samples.last().map(|c| c.s).unwrap_or(0.0);
        if (s - last_s).abs() > 1e-12 * (1.0 + s.abs()) {
            samples.push(CurveSample {
                s,
                chart: cur,
                point: y.clone(),
                monitors: None,
            });
        }
    }

    Ok(FlowResult {
        samples,
        termination,
    })
}

/// Attach per-sample monitor values to a flow of a (presumed geodesic null)
/// field. Monitors that fail at a sample record as missing rather than
/// erroring.
pub fn monitor_along(
    spec: &SpacetimeSpec,
    mut flow: FlowResult,
    k_field: &str,
) -> Result<FlowResult, FlowError> {
    let mut pipelines: BTreeMap<usize, Option<RaychaudhuriPipeline>> = BTreeMap::new();
    for sample in &mut flow.samples {
        let chart = &spec.charts[sample.chart];
        let dim = chart.dim();
        let mut m = Monitors::default();
        match optical_scalars(spec, chart, k_field, &sample.point) {
            Ok(s) => {
                m.iota2 = Some(s.twist_sq);
                m.theta = Some(s.theta_coordinate);
            }
            Err(e) => m.missing.push(format!("iota2/theta: {e}")),
        }
        match (
            curvature_at(spec, chart, &sample.point),
            field_value(spec, chart, k_field, &sample.point),
        ) {
            (Ok(curv), Ok(k)) => {
                m.ric_kk = Some(curv.ricci_contract(&k[..dim], &k[..dim]));
            }
            (Err(e), _) => m.missing.push(format!("ric_kk: {e}")),
            (_, Err(e)) => m.missing.push(format!("ric_kk: {e}")),
        }
        let pipeline = pipelines
            .entry(sample.chart)
            .or_insert_with(|| RaychaudhuriPipeline::new(spec, chart, k_field).ok());
        match pipeline {
            Some(p) => match p.residuals_at(&sample.point) {
                Ok(r) => {
                    m.r1 = Some(r.r1);
                    m.r2 = Some(r.r2);
                }
                Err(e) => m.missing.push(format!("r1/r2: {e}")),
            },
            None => m.missing.push("r1/r2: no transport pipeline".to_string()),
        }
        if let Some(rho2) = chart.def("rho2") {
            let ctx = EvalCtx {
                point: &sample.point,
                params: spec.params(),
            };
            m.rho2 = rho2.eval(&ctx).ok();
        }
        sample.monitors = Some(m);
    }

    // transport residual over uniform interior stencils
    let n = flow.samples.len();
    if n >= 5 {
        for i in 2..n - 2 {
            let h1 = flow.samples[i].s - flow.samples[i - 1].s;
            let spacings = [
                flow.samples[i - 1].s - flow.samples[i - 2].s,
                h1,
                flow.samples[i + 1].s - flow.samples[i].s,
                flow.samples[i + 2].s - flow.samples[i + 1].s,
            ];
            let uniform = spacings
                .iter()
                .all(|d| (d - h1).abs() < 1e-9 * (1.0 + h1.abs()));
            if !uniform || h1.abs() < 1e-12 {
                continue;
            }
            let iota = |j: usize| -> Option<f64> {
                flow.samples[j].monitors.as_ref().and_then(|m| m.iota2)
            };
            let (im2, im1, i0, ip1, ip2) = match (
                iota(i - 2),
                iota(i - 1),
                iota(i),
                iota(i + 1),
                iota(i + 2),
            ) {
                (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
                _ => continue,
            };
            let theta = match flow.samples[i].monitors.as_ref().and_then(|m| m.theta) {
                Some(t) => t,
                None => continue,
            };
            let d_iota = (im2 - 8.0 * im1 + 8.0 * ip1 - ip2) / (12.0 * h1);
            let residual = d_iota + 2.0 * theta * i0;
            if let Some(m) = flow.samples[i].monitors.as_mut() {
                m.transport_residual = Some(residual);
            }
        }
    }
    Ok(flow)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeVerdict {
    NoObstructionUpTo(f64),
    LeftAtlasAt(f64),
    SingularAt { s: f64, event: String },
    StepUnderflowAt(f64),
}

/// Outcome of running the flow in both parameter directions.
///
/// This is a numerical PROBE: integration up to a finite parameter cannot
/// certify completeness, only expose obstructions.
#[derive(Debug)]
pub struct CompletenessProbe {
    pub forward: ProbeVerdict,
    pub backward: ProbeVerdict,
    pub note: &'static str,
}

pub fn completeness_probe(
    spec: &SpacetimeSpec,
    start_chart: &str,
    p0: &[f64],
    field: &str,
    s_max: f64,
    tol: f64,
) -> Result<CompletenessProbe, FlowError> {
    let opts = FlowOptions {
        tol,
        ..Default::default()
    };
    let run = |s_end: f64| -> Result<ProbeVerdict, FlowError> {
        let flow = integrate_flow(spec, start_chart, p0, field, s_end, &opts)?;
        Ok(match flow.termination {
            Termination::ReachedSmax => ProbeVerdict::NoObstructionUpTo(s_end),
            Termination::LeftAtlas { s } => ProbeVerdict::LeftAtlasAt(s),
            Termination::SingularEvent { s, event } => ProbeVerdict::SingularAt { s, event },
            Termination::StepUnderflow { s } => ProbeVerdict::StepUnderflowAt(s),
            Termination::ClosedOrbit { period } => ProbeVerdict::NoObstructionUpTo(period),
        })
    };
    Ok(CompletenessProbe {
        forward: run(s_max.abs())?,
        backward: run(-s_max.abs())?,
        note: "numerical probe; integration cannot certify completeness",
    })
}

/// First-return closed-orbit detection; `None` when no return below the
/// distance threshold occurs up to `s_max`.
pub fn closed_orbit_detect(
    spec: &SpacetimeSpec,
    start_chart: &str,
    p0: &[f64],
    field: &str,
    s_max: f64,
    tol: f64,
) -> Result<(Option<f64>, FlowResult), FlowError> {
    let opts = FlowOptions {
        tol,
        detect_closed_orbit: true,
        ..Default::default()
    };
    let flow = integrate_flow(spec, start_chart, p0, field, s_max.abs(), &opts)?;
    let period = match flow.termination {
        Termination::ClosedOrbit { period } => Some(period),
        _ => None,
    };
    Ok((period, flow))
}

/// One geodesic sample: (parameter, point, velocity).
pub type GeodesicSample = (f64, Vec<f64>, Vec<f64>);

/// Second-order geodesic integrator (cross-check oracle): integrates
/// `x'' = −Γ(x', x')` within a single chart and returns (s, point, velocity)
/// samples per accepted step.
pub fn integrate_geodesic(
    spec: &SpacetimeSpec,
    start_chart: &str,
    p0: &[f64],
    v0: &[f64],
    s_end: f64,
    tol: f64,
) -> Result<Vec<GeodesicSample>, FlowError> {
    let chart_idx = spec
        .chart_index(start_chart)
        .ok_or_else(|| FlowError::UnknownChart(start_chart.to_string()))?;
    let chart = &spec.charts[chart_idx];
    let dim = chart.dim();
    let rhs = |_s: f64, state: &[f64]| -> Result<Vec<f64>, FlowError> {
        let (x, v) = state.split_at(dim);
        let conn = christoffel_at(spec, chart, x)?;
        let mut out = vec![0.0; 2 * dim];
        out[..dim].copy_from_slice(v);
        for a in 0..dim {
            let mut acc = 0.0;
            for b in 0..dim {
                for c in 0..dim {
                    acc -= conn.gamma[a][b][c] * v[b] * v[c];
                }
            }
            out[dim + a] = acc;
        }
        Ok(out)
    };

    let mut state: Vec<f64> = p0[..dim].to_vec();
    state.extend_from_slice(&v0[..dim]);
    let dir = s_end.signum();
    let mut s = 0.0;
    let mut h = dir * 1e-3;
    let mut out = vec![(0.0, p0[..dim].to_vec(), v0[..dim].to_vec())];
    for _ in 0..1_000_000 {
        if (s_end - s) * dir <= 1e-14 * (1.0 + s.abs()) {
            return Ok(out);
        }
        if (s + h - s_end) * dir > 0.0 {
            h = s_end - s;
        }
        let (new_state, err) = rk45_step(&rhs, s, &state, h, tol)?;
        if err <= 1.0 {
            s += h;
            state = new_state;
            out.push((
                s,
                state[..dim].to_vec(),
                state[dim..2 * dim].to_vec(),
            ));
            let grow = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h *= grow;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h.abs() < 1e-15 * (1.0 + s.abs()) {
            return Err(FlowError::MaxSteps(0));
        }
    }
    Err(FlowError::MaxSteps(1_000_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spacetime;

    const MINK: &str = "\
spacetime minkowski
dim 4
chart cart
  coords t x y z
  g t t = -1
  g x x = 1
  g y y = 1
  g z z = 1
  vector k = ( 1 , 1 , 0 , 0 )
  sample t -2 2
  sample x -2 2
  sample y -2 2
  sample z -2 2
";

    #[test]
    fn straight_line_flow_is_exact() {
        let spec = parse_spacetime(MINK).unwrap();
        let flow = integrate_flow(
            &spec,
            "cart",
            &[0.0, 0.0, 0.5, -0.5],
            "k",
            3.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert_eq!(flow.termination, Termination::ReachedSmax);
        let last = flow.samples.last().unwrap();
        assert!((last.s - 3.0).abs() < 1e-12);
        assert!((last.point[0] - 3.0).abs() < 1e-12);
        assert!((last.point[1] - 3.0).abs() < 1e-12);
        assert!((last.point[2] - 0.5).abs() < 1e-12);
        // parameters strictly increase along the result
        for w in flow.samples.windows(2) {
            assert!(w[1].s > w[0].s);
        }
    }

    #[test]
    fn no_false_closed_orbit_on_straight_lines() {
        let spec = parse_spacetime(MINK).unwrap();
        let (period, _) =
            closed_orbit_detect(&spec, "cart", &[0.0; 4], "k", 50.0, 1e-10).unwrap();
        assert!(period.is_none());
    }

    #[test]
    fn event_crossing_terminates_with_bisected_parameter() {
        let src = "\
spacetime halfline
dim 3
chart c
  coords t x y
  g t t = -1
  g x x = 1
  g y y = 1
  vector v = ( 0 , -1 , 0 )
  event wall = x - 0.25
";
        let spec = parse_spacetime(src).unwrap();
        let flow = integrate_flow(
            &spec,
            "c",
            &[0.0, 1.0, 0.0],
            "v",
            5.0,
            &FlowOptions::default(),
        )
        .unwrap();
        match flow.termination {
            Termination::SingularEvent { s, ref event } => {
                assert_eq!(event, "wall");
                assert!((s - 0.75).abs() < 1e-9, "s = {}", s);
            }
            ref other => panic!("expected singular event, got {:?}", other),
        }
        let last = flow.samples.last().unwrap();
        assert!((last.point[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn leaving_the_atlas_is_reported_not_raised() {
        let src = "\
spacetime strip
dim 3
chart c
  coords t x y
  g t t = -1
  g x x = 1
  g y y = 1
  vector v = ( 0 , 1 , 0 )
  domain x < 2
";
        let spec = parse_spacetime(src).unwrap();
        let flow = integrate_flow(
            &spec,
            "c",
            &[0.0, 0.0, 0.0],
            "v",
            5.0,
            &FlowOptions::default(),
        )
        .unwrap();
        match flow.termination {
            Termination::LeftAtlas { s } => assert!((s - 2.0).abs() < 1e-6, "s = {}", s),
            ref other => panic!("expected left_atlas, got {:?}", other),
        }
    }

    #[test]
    fn handoff_crosses_a_two_chart_cover() {
        // two overlapping strips covering x in (-inf, 2) u (1, +inf)
        let src = "\
spacetime twocharts
dim 3
chart low
  coords t x y
  g t t = -1
  g x x = 1
  g y y = 1
  vector v = ( 0 , 1 , 0 )
  domain x < 2
chart high
  coords t x y
  g t t = -1
  g x x = 1
  g y y = 1
  vector v = ( 0 , 1 , 0 )
  domain x > 1
transition low -> high
  map t = t
  map x = x
  map y = y
  overlap x > 1
transition high -> low
  map t = t
  map x = x
  map y = y
  overlap x < 2
";
        let spec = parse_spacetime(src).unwrap();
        let flow = integrate_flow(
            &spec,
            "low",
            &[0.0, 0.0, 0.3],
            "v",
            5.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert_eq!(flow.termination, Termination::ReachedSmax);
        let last = flow.samples.last().unwrap();
        assert_eq!(spec.charts[last.chart].name, "high");
        assert!((last.point[1] - 5.0).abs() < 1e-9);
        // both charts appear along the way
        assert!(flow.samples.iter().any(|c| spec.charts[c.chart].name == "low"));
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let spec = parse_spacetime(MINK).unwrap();
        let fwd = integrate_flow(
            &spec,
            "cart",
            &[0.1, -0.4, 0.2, 0.9],
            "k",
            7.0,
            &FlowOptions::default(),
        )
        .unwrap();
        let end = fwd.samples.last().unwrap().point.clone();
        let back = integrate_flow(&spec, "cart", &end, "k", -7.0, &FlowOptions::default())
            .unwrap();
        let home = back.samples.last().unwrap();
        for (a, b) in home.point.iter().zip([0.1, -0.4, 0.2, 0.9]) {
            assert!((a - b).abs() < 1e-7, "returned {:?}", home.point);
        }
        // backward run: parameters strictly decrease
        for w in back.samples.windows(2) {
            assert!(w[1].s < w[0].s);
        }
    }
}
