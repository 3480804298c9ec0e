//! Check batteries, grid scans, and machine-readable reports.
//!
//! `run_checks` executes the universal suite (tensor invariants, transport
//! residuals, symplectic identities) plus the entry's validation manifest at
//! seeded random in-domain points, and returns a [`CheckReport`] that the
//! CLI serializes to JSON. Point batteries and grid scans evaluate cells in
//! parallel (ordered collection keeps output deterministic); reductions run
//! sequentially.
//!
//! Tolerance conventions: residuals are divided by the per-point scale
//! `1 + max |g_ij|` before comparison, and every tolerance is multiplied by
//! the report's `tol_scale` (CLI flag or `NULLSYMP_TOL_SCALE`).

use crate::catalog::{CatalogEntry, ManifestCheck};
use crate::geometry::{
    causal_classify, covariant_derivative_at, curvature_at, field_value, killing_residual,
    metric_at, CausalClass,
};
use crate::linalg;
use crate::map_ordered;
use crate::optics::{optical_scalars, RaychaudhuriPipeline};
use crate::spec::{Chart, SpacetimeSpec};
use crate::symplectic::{contact_check_3d, SymplecticSetup, SympError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

// Universal-suite tolerances (before tol_scale), per-point scaled.
pub const TOL_METRIC_COMPAT: f64 = 1e-9;
pub const TOL_RIEMANN_ANTISYM: f64 = 1e-8;
pub const TOL_BIANCHI: f64 = 1e-8;
pub const TOL_PAIR_SWAP: f64 = 1e-8;
pub const TOL_RICCI_SYM: f64 = 1e-8;
pub const TOL_RAY: f64 = 1e-7;
pub const TOL_DEG1: f64 = 1e-8;
pub const TOL_DEG2: f64 = 1e-7;
pub const TOL_OMEGA_KXY: f64 = 1e-9;
pub const TOL_DET_IDENTITY_REL: f64 = 1e-7;
pub const TOL_PF_SQ_REL: f64 = 1e-9;
pub const TOL_LIOUVILLE: f64 = 1e-8;
pub const TOL_CLOSEDNESS: f64 = 1e-8;
pub const TOL_OVERLAP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub chart: Option<String>,
    pub point: Option<Vec<f64>>,
    pub note: Option<String>,
}

#[derive(Debug)]
pub struct CheckReport {
    pub spec_name: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
    pub points: usize,
    pub tol_scale: f64,
    pub checks: Vec<CheckRecord>,
    pub numerical_breakdown: bool,
}

impl CheckReport {
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut p = 0;
        let mut f = 0;
        let mut s = 0;
        for c in &self.checks {
            match c.status {
                CheckStatus::Pass => p += 1,
                CheckStatus::Fail => f += 1,
                CheckStatus::Skip => s += 1,
            }
        }
        (p, f, s)
    }

    pub fn passed(&self) -> bool {
        self.counts().1 == 0 && !self.numerical_breakdown
    }
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Random in-domain points per spec (distributed over charts).
    pub points: usize,
    pub seed: u64,
    pub tol_scale: f64,
    /// Test hook: corrupt the assembled 2-form so closedness must fail.
    pub corrupt_alpha: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            points: 100,
            seed: 7,
            tol_scale: 1.0,
            corrupt_alpha: false,
        }
    }
}

/// Worst-residual tracker carrying the witness point.
struct Worst {
    value: f64,
    chart: Option<String>,
    point: Option<Vec<f64>>,
    saw_nan: bool,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            chart: None,
            point: None,
            saw_nan: false,
        }
    }

    fn update(&mut self, v: f64, chart: &str, point: &[f64]) {
        if v.is_nan() {
            self.saw_nan = true;
            self.chart = Some(chart.to_string());
            self.point = Some(point.to_vec());
            return;
        }
        if v > self.value || self.point.is_none() {
            self.value = v;
            self.chart = Some(chart.to_string());
            self.point = Some(point.to_vec());
        }
    }

    fn into_record(self, name: &str, tol: f64) -> CheckRecord {
        if self.point.is_none() {
            // nothing applicable was measured (e.g. a gated residual whose
            // gate never opened); report that honestly instead of a pass
            return skip(name, "no applicable points");
        }
        let status = if self.saw_nan || self.value > tol {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        };
        CheckRecord {
            name: name.to_string(),
            status,
            measured: Some(if self.saw_nan { f64::NAN } else { self.value }),
            tolerance: Some(tol),
            chart: self.chart,
            point: self.point,
            note: None,
        }
    }
}

fn skip(name: &str, note: &str) -> CheckRecord {
    CheckRecord {
        name: name.to_string(),
        status: CheckStatus::Skip,
        measured: None,
        tolerance: None,
        chart: None,
        point: None,
        note: Some(note.to_string()),
    }
}

fn chart_rng(seed: u64, chart_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((chart_index as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15)))
}

fn points_per_chart(total: usize, charts: usize) -> usize {
    (total / charts.max(1)).max(1)
}

/// Residual bundle computed in one pass per point.
#[derive(Default, Clone, Copy)]
struct TensorResiduals {
    metric_ok: bool,
    gamma_sym: f64,
    compat: f64,
    riem_anti: f64,
    bianchi: f64,
    pair_swap: f64,
    ricci_sym: f64,
}

fn tensor_residuals(spec: &SpacetimeSpec, chart: &Chart, p: &[f64]) -> TensorResiduals {
    let dim = chart.dim();
    let mut out = TensorResiduals::default();
    let mv = match metric_at(spec, chart, p) {
        Ok(v) => v,
        Err(_) => return out,
    };
    let conn = match crate::geometry::christoffel_at(spec, chart, p) {
        Ok(v) => v,
        Err(_) => return out,
    };
    let curv = match curvature_at(spec, chart, p) {
        Ok(v) => v,
        Err(_) => return out,
    };
    out.metric_ok = true;
    let scale = mv.scale;

    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                out.gamma_sym = out
                    .gamma_sym
                    .max((conn.gamma[a][b][c] - conn.gamma[a][c][b]).abs());
            }
        }
    }

    // ∇_c g_ab = ∂_c g_ab − Γ^d_ca g_db − Γ^d_cb g_ad
    let ctx = crate::expr::EvalCtx {
        point: p,
        params: spec.params(),
    };
    for c in 0..dim {
        for a in 0..dim {
            for b in a..dim {
                let dg = match chart.metric_deriv(a, b, c).eval(&ctx) {
                    Ok(v) => v,
                    Err(_) => return TensorResiduals::default(),
                };
                let mut r = dg;
                for d in 0..dim {
                    r -= conn.gamma[d][c][a] * mv.components[d][b]
                        + conn.gamma[d][c][b] * mv.components[a][d];
                }
                out.compat = out.compat.max(r.abs() / scale);
            }
        }
    }

    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    out.riem_anti = out
                        .riem_anti
                        .max((curv.riemann[a][b][c][d] + curv.riemann[a][b][d][c]).abs() / scale);
                    let cyc = curv.riemann[a][b][c][d]
                        + curv.riemann[a][c][d][b]
                        + curv.riemann[a][d][b][c];
                    out.bianchi = out.bianchi.max(cyc.abs() / scale);
                }
            }
        }
    }

    // lowered Riemann pair-swap symmetry
    let mut lowered = linalg::zero_tensor4();
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    let mut v = 0.0;
                    for e in 0..dim {
                        v += mv.components[a][e] * curv.riemann[e][b][c][d];
                    }
                    lowered[a][b][c][d] = v;
                }
            }
        }
    }
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    out.pair_swap = out
                        .pair_swap
                        .max((lowered[a][b][c][d] - lowered[c][d][a][b]).abs() / scale);
                }
            }
        }
    }

    for a in 0..dim {
        for b in 0..dim {
            out.ricci_sym = out
                .ricci_sym
                .max((curv.ricci[a][b] - curv.ricci[b][a]).abs() / scale);
        }
    }
    out
}

fn universal_tensor_records(
    spec: &SpacetimeSpec,
    sampled: &[(usize, Vec<Vec<f64>>)],
    tol_scale: f64,
    records: &mut Vec<CheckRecord>,
) {
    let mut sig = Worst::new();
    let mut gamma = Worst::new();
    let mut compat = Worst::new();
    let mut anti = Worst::new();
    let mut bianchi = Worst::new();
    let mut swap = Worst::new();
    let mut ricci_sym = Worst::new();

    for (ci, pts) in sampled {
        let chart = &spec.charts[*ci];
        let bundle = map_ordered(pts, |p| tensor_residuals(spec, chart, p));
        for (p, b) in pts.iter().zip(bundle) {
            sig.update(if b.metric_ok { 0.0 } else { 1.0 }, &chart.name, p);
            gamma.update(b.gamma_sym, &chart.name, p);
            compat.update(b.compat, &chart.name, p);
            anti.update(b.riem_anti, &chart.name, p);
            bianchi.update(b.bianchi, &chart.name, p);
            swap.update(b.pair_swap, &chart.name, p);
            ricci_sym.update(b.ricci_sym, &chart.name, p);
        }
    }
    records.push(sig.into_record("lorentzian_signature", 0.5));
    records.push(gamma.into_record("gamma_symmetry", 1e-12 * tol_scale));
    records.push(compat.into_record("metric_compatibility", TOL_METRIC_COMPAT * tol_scale));
    records.push(anti.into_record("riemann_antisymmetry", TOL_RIEMANN_ANTISYM * tol_scale));
    records.push(bianchi.into_record("bianchi_first", TOL_BIANCHI * tol_scale));
    records.push(swap.into_record("riemann_pair_swap", TOL_PAIR_SWAP * tol_scale));
    records.push(ricci_sym.into_record("ricci_symmetry", TOL_RICCI_SYM * tol_scale));
}

fn raychaudhuri_records(
    spec: &SpacetimeSpec,
    k_field: &str,
    sampled: &[(usize, Vec<Vec<f64>>)],
    tol_scale: f64,
    records: &mut Vec<CheckRecord>,
) {
    if spec.dim != 4 {
        records.push(skip("raychaudhuri_r1", "requires dimension 4"));
        records.push(skip("raychaudhuri_r2", "requires dimension 4"));
        return;
    }
    // decide applicability from the first sampled point
    let probe = sampled
        .iter()
        .find_map(|(ci, pts)| pts.first().map(|p| (*ci, p.clone())));
    let Some((ci, p)) = probe else {
        records.push(skip("raychaudhuri_r1", "no sample points"));
        records.push(skip("raychaudhuri_r2", "no sample points"));
        return;
    };
    let chart = &spec.charts[ci];
    let k = match field_value(spec, chart, k_field, &p) {
        Ok(v) => v,
        Err(_) => {
            let note = format!("field `{k_field}` not declared");
            records.push(skip("raychaudhuri_r1", &note));
            records.push(skip("raychaudhuri_r2", &note));
            return;
        }
    };
    match causal_classify(spec, chart, &p, &k[..4]) {
        Ok((CausalClass::Null, _)) => {}
        _ => {
            let note = format!("field `{k_field}` is not null");
            records.push(skip("raychaudhuri_r1", &note));
            records.push(skip("raychaudhuri_r2", &note));
            return;
        }
    }

    let mut w1 = Worst::new();
    let mut w2 = Worst::new();
    for (ci, pts) in sampled {
        let chart = &spec.charts[*ci];
        let pipeline = match RaychaudhuriPipeline::new(spec, chart, k_field) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let res = map_ordered(pts, |p| pipeline.residuals_at(p).ok());
        for (p, r) in pts.iter().zip(res) {
            match r {
                Some(r) => {
                    w1.update(r.r1.abs(), &chart.name, p);
                    w2.update(r.r2.abs(), &chart.name, p);
                }
                None => {
                    w1.update(f64::NAN, &chart.name, p);
                    w2.update(f64::NAN, &chart.name, p);
                }
            }
        }
    }
    records.push(w1.into_record("raychaudhuri_r1", TOL_RAY * tol_scale));
    records.push(w2.into_record("raychaudhuri_r2", TOL_RAY * tol_scale));
}

struct SympPointResiduals {
    deg1: f64,
    deg2: f64,
    kxy: f64,
    det_identity_rel: Option<f64>,
    pf_sq_rel: f64,
    liouville: Option<f64>,
    closedness: f64,
}

fn symplectic_records(
    spec: &SpacetimeSpec,
    k_field: &str,
    f_field: &str,
    sampled: &[(usize, Vec<Vec<f64>>)],
    opts: &CheckOptions,
    records: &mut Vec<CheckRecord>,
) {
    let names = [
        "pairing_deg1",
        "pairing_deg2",
        "omega_k_screen",
        "det_identity",
        "pfaffian_squared",
        "liouville",
        "closedness",
    ];
    if spec.dim != 4 {
        for n in names {
            records.push(skip(n, "requires dimension 4"));
        }
        return;
    }
    let have_fields = spec.charts.iter().all(|c| {
        c.vector(k_field).is_some() && c.scalar(f_field).is_some()
    });
    if !have_fields {
        let note = format!("needs vector `{k_field}` and scalar `{f_field}` on every chart");
        for n in names {
            records.push(skip(n, &note));
        }
        return;
    }
    // the suite carries its meaning for null k only
    if let Some((ci, p)) = sampled
        .iter()
        .find_map(|(ci, pts)| pts.first().map(|p| (*ci, p.clone())))
    {
        let chart = &spec.charts[ci];
        let k = field_value(spec, chart, k_field, &p).expect("checked above");
        if !matches!(
            causal_classify(spec, chart, &p, &k[..4]),
            Ok((CausalClass::Null, _))
        ) {
            let note = format!("field `{k_field}` is not null");
            for n in names {
                records.push(skip(n, &note));
            }
            return;
        }
    }

    let ts = opts.tol_scale;
    let mut deg1 = Worst::new();
    let mut deg2 = Worst::new();
    let mut kxy = Worst::new();
    let mut det_id = Worst::new();
    let mut pf_sq = Worst::new();
    let mut liouville = Worst::new();
    let mut closed = Worst::new();

    for (ci, pts) in sampled {
        let chart = &spec.charts[*ci];
        let setup = if opts.corrupt_alpha {
            SymplecticSetup::new_corrupted(spec, chart, k_field, f_field)
        } else {
            SymplecticSetup::new(spec, chart, k_field, f_field)
        };
        let setup = match setup {
            Ok(s) => s,
            Err(_) => continue,
        };
        let rows = map_ordered(pts, |p| -> Option<SympPointResiduals> {
            let report = setup.report_at(p).ok()?;
            let scale = metric_at(spec, chart, p).ok()?.scale;
            let ef2 = (2.0 * report.f_value).exp();
            let det_identity_rel = if report.pfaffian.abs() > 1e-6 * ef2.max(1.0) {
                Some(report.det_identity_residual.abs() / report.det_frame.abs().max(1e-300))
            } else {
                None
            };
            let pf_sq_rel = (report.det_frame - report.pfaffian * report.pfaffian).abs()
                / (1.0 + report.det_frame.abs());
            let liouville = if report.kf.abs() > 1e-6 {
                report.liouville_residual
            } else {
                None
            };
            let closedness = setup.closedness_residual_at(p).ok()? / scale;
            Some(SympPointResiduals {
                deg1: report.deg1_residual,
                deg2: report.deg2_residual,
                kxy: report.omega_kx.abs().max(report.omega_ky.abs()),
                det_identity_rel,
                pf_sq_rel,
                liouville,
                closedness,
            })
        });
        for (p, row) in pts.iter().zip(rows) {
            match row {
                Some(r) => {
                    deg1.update(r.deg1, &chart.name, p);
                    deg2.update(r.deg2, &chart.name, p);
                    kxy.update(r.kxy, &chart.name, p);
                    if let Some(v) = r.det_identity_rel {
                        det_id.update(v, &chart.name, p);
                    }
                    pf_sq.update(r.pf_sq_rel, &chart.name, p);
                    if let Some(v) = r.liouville {
                        liouville.update(v, &chart.name, p);
                    }
                    closed.update(r.closedness, &chart.name, p);
                }
                _ => {
                    deg1.update(f64::NAN, &chart.name, p);
                }
            }
        }
    }
    records.push(deg1.into_record("pairing_deg1", TOL_DEG1 * ts));
    records.push(deg2.into_record("pairing_deg2", TOL_DEG2 * ts));
    records.push(kxy.into_record("omega_k_screen", TOL_OMEGA_KXY * ts));
    records.push(det_id.into_record("det_identity", TOL_DET_IDENTITY_REL * ts));
    records.push(pf_sq.into_record("pfaffian_squared", TOL_PF_SQ_REL * ts));
    records.push(liouville.into_record("liouville", TOL_LIOUVILLE * ts));
    records.push(closed.into_record("closedness", TOL_CLOSEDNESS * ts));
}

fn overlap_records(
    spec: &SpacetimeSpec,
    sampled_seed: u64,
    tol_scale: f64,
    records: &mut Vec<CheckRecord>,
) {
    if spec.transitions.is_empty() {
        return;
    }
    let mut field_worst = Worst::new();
    let mut invariant_worst = Worst::new();
    let per_transition = (50 / spec.transitions.len()).max(2);

    for (ti, tr) in spec.transitions.iter().enumerate() {
        let from = &spec.charts[tr.from];
        let to = &spec.charts[tr.to];
        let mut rng = chart_rng(sampled_seed, 1000 + ti);
        let mut found = 0;
        let mut tries = 0;
        while found < per_transition && tries < 4000 {
            tries += 1;
            let Some(p) = from.sample_point(&mut rng, spec.params()) else {
                break;
            };
            if !tr.overlap_holds(&p, spec.params()) {
                continue;
            }
            let Ok(q) = tr.apply(&p, spec.params()) else {
                continue;
            };
            if !to.in_domain(&q, spec.params()) {
                continue;
            }
            found += 1;

            // pushed-forward declared vector fields must agree
            for name in from.vectors.keys() {
                if to.vector(name).is_none() {
                    continue;
                }
                let (Ok(v_from), Ok(v_to)) = (
                    field_value(spec, from, name, &p),
                    field_value(spec, to, name, &q),
                ) else {
                    continue;
                };
                if let Ok(pushed) = tr.pushforward(&p, &v_from[..from.dim()], spec.params()) {
                    for i in 0..to.dim() {
                        field_worst.update((pushed[i] - v_to[i]).abs(), &from.name, &p);
                    }
                }
            }

            // scalar invariants agree across the overlap
            if let (Ok(ca), Ok(cb)) = (curvature_at(spec, from, &p), curvature_at(spec, to, &q)) {
                invariant_worst.update(
                    (ca.ricci_scalar - cb.ricci_scalar).abs()
                        / (1.0 + ca.ricci_scalar.abs()),
                    &from.name,
                    &p,
                );
                for name in from.vectors.keys() {
                    if to.vector(name).is_none() {
                        continue;
                    }
                    let (Ok(va), Ok(vb), Ok(ga), Ok(gb)) = (
                        field_value(spec, from, name, &p),
                        field_value(spec, to, name, &q),
                        metric_at(spec, from, &p),
                        metric_at(spec, to, &q),
                    ) else {
                        continue;
                    };
                    let na = linalg::dot(&ga.components, &va[..from.dim()], &va[..from.dim()], from.dim());
                    let nb = linalg::dot(&gb.components, &vb[..to.dim()], &vb[..to.dim()], to.dim());
                    invariant_worst.update((na - nb).abs() / (1.0 + na.abs()), &from.name, &p);
                    let ra = ca.ricci_contract(&va[..from.dim()], &va[..from.dim()]);
                    let rb = cb.ricci_contract(&vb[..to.dim()], &vb[..to.dim()]);
                    invariant_worst.update((ra - rb).abs() / (1.0 + ra.abs()), &from.name, &p);
                }
            }
        }
    }
    records.push(field_worst.into_record("overlap_field_consistency", TOL_OVERLAP * tol_scale));
    records.push(invariant_worst.into_record("overlap_scalar_invariants", TOL_OVERLAP * tol_scale));
}

fn manifest_records(
    spec: &SpacetimeSpec,
    entry: &CatalogEntry,
    sampled: &[(usize, Vec<Vec<f64>>)],
    tol_scale: f64,
    records: &mut Vec<CheckRecord>,
) {
    for check in &entry.manifest {
        let record = run_manifest_check(spec, check, sampled, tol_scale);
        records.push(record);
    }
}

/// Worst residual of a pointwise scalar over all sampled charts and points.
fn worst_over<F>(spec: &SpacetimeSpec, sampled: &[(usize, Vec<Vec<f64>>)], f: F) -> Worst
where
    F: Fn(&Chart, &[f64]) -> Option<f64> + Sync,
{
    let mut worst = Worst::new();
    for (ci, pts) in sampled {
        let chart = &spec.charts[*ci];
        let vals = map_ordered(pts, |p| f(chart, p));
        for (p, v) in pts.iter().zip(vals) {
            worst.update(v.unwrap_or(f64::NAN), &chart.name, p);
        }
    }
    worst
}

fn run_manifest_check(
    spec: &SpacetimeSpec,
    check: &ManifestCheck,
    sampled: &[(usize, Vec<Vec<f64>>)],
    tol_scale: f64,
) -> CheckRecord {
    let dim = spec.dim;
    match check {
        ManifestCheck::FieldNull { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let k = field_value(spec, chart, field, p).ok()?;
                let g = metric_at(spec, chart, p).ok()?;
                Some(linalg::dot(&g.components, &k[..dim], &k[..dim], dim).abs())
            });
            worst.into_record(&format!("manifest_null_{field}"), tol * tol_scale)
        }
        ManifestCheck::FieldGeodesic { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let cd = covariant_derivative_at(spec, chart, field, p).ok()?;
                let a = cd.along_field();
                Some(a[..dim].iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            });
            worst.into_record(&format!("manifest_geodesic_{field}"), tol * tol_scale)
        }
        ManifestCheck::RicciZero { tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let c = curvature_at(spec, chart, p).ok()?;
                Some(crate::geometry::max_abs(&c.ricci, dim))
            });
            worst.into_record("manifest_ricci_zero", tol * tol_scale)
        }
        ManifestCheck::TwistZero { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                Some(optical_scalars(spec, chart, field, p).ok()?.twist_sq)
            });
            worst.into_record(&format!("manifest_twist_zero_{field}"), tol * tol_scale)
        }
        ManifestCheck::TwistClosedFormKerr { field, tol } => {
            let a = spec.param("a").unwrap_or(f64::NAN);
            let worst = worst_over(spec, sampled, |chart, p| {
                let s = optical_scalars(spec, chart, field, p).ok()?;
                let (r, th) = (p[1], p[2]);
                let rho2 = r * r + a * a * th.cos().powi(2);
                let expect = 4.0 * a * a * th.cos().powi(2) / (rho2 * rho2);
                Some((s.twist_sq - expect).abs() / expect.abs().max(1e-300))
            });
            worst.into_record(&format!("manifest_twist_closed_form_{field}"), tol * tol_scale)
        }
        ManifestCheck::ScalarUnitDirectional { field, scalar, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let k = field_value(spec, chart, field, p).ok()?;
                let df = chart.scalar_deriv(scalar)?;
                let ctx = crate::expr::EvalCtx {
                    point: p,
                    params: spec.params(),
                };
                let mut kf = 0.0;
                for a in 0..dim {
                    kf += k[a] * df[a].eval(&ctx).ok()?;
                }
                Some((kf - 1.0).abs())
            });
            worst.into_record(
                &format!("manifest_unit_directional_{field}_{scalar}"),
                tol * tol_scale,
            )
        }
        ManifestCheck::RicKkConstant { field, value, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let c = curvature_at(spec, chart, p).ok()?;
                let k = field_value(spec, chart, field, p).ok()?;
                Some((c.ricci_contract(&k[..dim], &k[..dim]) - value).abs())
            });
            worst.into_record(&format!("manifest_ric_kk_{field}"), tol * tol_scale)
        }
        ManifestCheck::RicKkConformalKerr { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let c = curvature_at(spec, chart, p).ok()?;
                let k = field_value(spec, chart, field, p).ok()?;
                let expect = 2.0 * (-4.0 * p[1]).exp();
                Some((c.ricci_contract(&k[..dim], &k[..dim]) - expect).abs() / expect)
            });
            worst.into_record(&format!("manifest_ric_kk_conformal_{field}"), tol * tol_scale)
        }
        ManifestCheck::KillingZero { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let lie = killing_residual(spec, chart, field, p).ok()?;
                Some(crate::geometry::max_abs(&lie, dim))
            });
            worst.into_record(&format!("manifest_killing_{field}"), tol * tol_scale)
        }
        ManifestCheck::DivergenceZero { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let cd = covariant_derivative_at(spec, chart, field, p).ok()?;
                Some(cd.divergence().abs())
            });
            worst.into_record(&format!("manifest_div_zero_{field}"), tol * tol_scale)
        }
        ManifestCheck::FieldNorm { field, value, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let k = field_value(spec, chart, field, p).ok()?;
                let g = metric_at(spec, chart, p).ok()?;
                Some((linalg::dot(&g.components, &k[..dim], &k[..dim], dim) - value).abs())
            });
            worst.into_record(&format!("manifest_norm_{field}"), tol * tol_scale)
        }
        ManifestCheck::EquatorialTwistZero { field, tol } => {
            // probe points pinned to theta = pi/2
            let mut worst = Worst::new();
            for (ci, pts) in sampled {
                let chart = &spec.charts[*ci];
                let Some(th_idx) = chart.coord_index("theta") else {
                    continue;
                };
                for p in pts {
                    let mut q = p.clone();
                    q[th_idx] = std::f64::consts::FRAC_PI_2;
                    // pinning theta can land arbitrarily close to the ring
                    // set; stay clear of the near-degenerate band
                    if chart.domain_margin(&q, spec.params()) < 1e-3 {
                        continue;
                    }
                    let v = optical_scalars(spec, chart, field, &q)
                        .map(|s| s.twist_sq)
                        .unwrap_or(f64::NAN);
                    worst.update(v, &chart.name, &q);
                }
            }
            worst.into_record(&format!("manifest_equatorial_twist_{field}"), tol * tol_scale)
        }
        ManifestCheck::ContactNondegenerate { field } => {
            let mut factors: Vec<f64> = Vec::new();
            let mut witness: Option<(String, Vec<f64>)> = None;
            for (ci, pts) in sampled {
                let chart = &spec.charts[*ci];
                let vals = map_ordered(pts, |p| {
                    contact_check_3d(spec, chart, field, p)
                        .map(|r| r.volume_factor.abs())
                        .ok()
                });
                for (p, v) in pts.iter().zip(vals) {
                    if let Some(v) = v {
                        if factors.is_empty() || v < factors.iter().cloned().fold(f64::MAX, f64::min)
                        {
                            witness = Some((chart.name.clone(), p.clone()));
                        }
                        factors.push(v);
                    }
                }
            }
            if factors.is_empty() {
                return skip(&format!("manifest_contact_{field}"), "no evaluable points");
            }
            factors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let min = factors[0];
            let median = factors[factors.len() / 2];
            let ok = min > 0.1 * median && median > 0.0;
            CheckRecord {
                name: format!("manifest_contact_{field}"),
                status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
                measured: Some(min),
                tolerance: Some(0.1 * median),
                chart: witness.as_ref().map(|w| w.0.clone()),
                point: witness.map(|w| w.1),
                note: Some("pass requires min > 0.1 * median of |volume factor|".to_string()),
            }
        }
        ManifestCheck::ReebResiduals { field, tol } => {
            let worst = worst_over(spec, sampled, |chart, p| {
                let r = contact_check_3d(spec, chart, field, p).ok()?;
                Some(r.reeb_residual_interior.max(r.reeb_residual_pairing))
            });
            worst.into_record(&format!("manifest_reeb_{field}"), tol * tol_scale)
        }
    }
}

/// Run the universal suite and, when a catalog entry is supplied, its
/// manifest. Deterministic for a fixed seed.
pub fn run_checks(
    spec: &SpacetimeSpec,
    entry: Option<&CatalogEntry>,
    opts: &CheckOptions,
) -> CheckReport {
    let per_chart = points_per_chart(opts.points, spec.charts.len());
    let mut sampled: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for (ci, chart) in spec.charts.iter().enumerate() {
        let mut rng = chart_rng(opts.seed, ci);
        let pts = chart
            .sample_points(&mut rng, spec.params(), per_chart)
            .unwrap_or_default();
        sampled.push((ci, pts));
    }

    let mut records = Vec::new();
    universal_tensor_records(spec, &sampled, opts.tol_scale, &mut records);

    let k_field = entry
        .and_then(|e| e.k_field)
        .map(str::to_string)
        .or_else(|| {
            spec.charts
                .first()
                .and_then(|c| c.vector("k").map(|_| "k".to_string()))
        });
    let f_field = entry
        .and_then(|e| e.f_field)
        .map(str::to_string)
        .or_else(|| {
            spec.charts
                .first()
                .and_then(|c| c.scalar("f").map(|_| "f".to_string()))
        });

    match &k_field {
        Some(k) => raychaudhuri_records(spec, k, &sampled, opts.tol_scale, &mut records),
        None => {
            records.push(skip("raychaudhuri_r1", "no distinguished null field"));
            records.push(skip("raychaudhuri_r2", "no distinguished null field"));
        }
    }
    match (&k_field, &f_field) {
        (Some(k), Some(f)) => symplectic_records(spec, k, f, &sampled, opts, &mut records),
        _ => {
            for n in [
                "pairing_deg1",
                "pairing_deg2",
                "omega_k_screen",
                "det_identity",
                "pfaffian_squared",
                "liouville",
                "closedness",
            ] {
                records.push(skip(n, "needs a distinguished field pair (k, f)"));
            }
        }
    }

    overlap_records(spec, opts.seed, opts.tol_scale, &mut records);

    if let Some(e) = entry {
        manifest_records(spec, e, &sampled, opts.tol_scale, &mut records);
    }

    let numerical_breakdown = records
        .iter()
        .any(|r| matches!(r.measured, Some(v) if !v.is_finite()));

    CheckReport {
        spec_name: spec.name.clone(),
        params: spec
            .param_names
            .iter()
            .cloned()
            .zip(spec.param_values.iter().copied())
            .collect(),
        seed: opts.seed,
        points: opts.points,
        tol_scale: opts.tol_scale,
        checks: records,
        numerical_breakdown,
    }
}

// ---------------------------------------------------------------------------
// scans

#[derive(Debug, Clone)]
pub struct GridAxis {
    pub coord: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn value(&self, i: usize) -> f64 {
        if self.n <= 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * (i as f64) / ((self.n - 1) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ScanGrid {
    pub axis_a: GridAxis,
    pub axis_b: GridAxis,
    /// Values for the fixed coordinates (axis entries ignored).
    pub base_point: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub point: Vec<f64>,
    pub in_domain: bool,
    pub iota2: Option<f64>,
    pub kf: Option<f64>,
    pub pfaffian: Option<f64>,
    pub det_frame: Option<f64>,
    pub det_identity_residual: Option<f64>,
    pub liouville_residual: Option<f64>,
    pub nondegenerate: Option<bool>,
    pub ric_kk: Option<f64>,
}

fn scan_cell(
    spec: &SpacetimeSpec,
    chart: &Chart,
    setup: &SymplecticSetup,
    k_field: &str,
    point: Vec<f64>,
    with_ric: bool,
) -> ScanRow {
    let mut row = ScanRow {
        point: point.clone(),
        in_domain: chart.in_domain(&point, spec.params()),
        iota2: None,
        kf: None,
        pfaffian: None,
        det_frame: None,
        det_identity_residual: None,
        liouville_residual: None,
        nondegenerate: None,
        ric_kk: None,
    };
    if !row.in_domain {
        return row;
    }
    if let Ok(report) = setup.report_at(&point) {
        row.iota2 = Some(report.iota2);
        row.kf = Some(report.kf);
        row.pfaffian = Some(report.pfaffian);
        row.det_frame = Some(report.det_frame);
        row.det_identity_residual = Some(report.det_identity_residual);
        row.liouville_residual = report.liouville_residual;
        row.nondegenerate = Some(report.nondegenerate);
    }
    if with_ric {
        if let (Ok(c), Ok(k)) = (
            curvature_at(spec, chart, &point),
            field_value(spec, chart, k_field, &point),
        ) {
            let dim = chart.dim();
            row.ric_kk = Some(c.ricci_contract(&k[..dim], &k[..dim]));
        }
    }
    row
}

fn grid_points(chart: &Chart, grid: &ScanGrid) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(grid.axis_a.n * grid.axis_b.n);
    for i in 0..grid.axis_a.n {
        for j in 0..grid.axis_b.n {
            let mut p = grid.base_point.clone();
            p.resize(chart.dim(), 0.0);
            p[grid.axis_a.coord] = grid.axis_a.value(i);
            p[grid.axis_b.coord] = grid.axis_b.value(j);
            pts.push(p);
        }
    }
    pts
}

/// Evaluate the symplectic scan quantities over a 2-d grid; cells outside
/// the chart domain stay blank. Parallel when the `parallel` feature is on.
pub fn scan_grid(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    grid: &ScanGrid,
    with_ric: bool,
) -> Result<Vec<ScanRow>, SympError> {
    let setup = SymplecticSetup::new(spec, chart, k_field, f_field)?;
    let pts = grid_points(chart, grid);
    Ok(map_ordered(&pts, |p| {
        scan_cell(spec, chart, &setup, k_field, p.clone(), with_ric)
    }))
}

/// Sequential twin of [`scan_grid`] for benchmarking the parallel speedup.
pub fn scan_grid_sequential(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    grid: &ScanGrid,
    with_ric: bool,
) -> Result<Vec<ScanRow>, SympError> {
    let setup = SymplecticSetup::new(spec, chart, k_field, f_field)?;
    let pts = grid_points(chart, grid);
    Ok(crate::map_ordered_seq(&pts, |p| {
        scan_cell(spec, chart, &setup, k_field, p.clone(), with_ric)
    }))
}

/// Format a float with 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    format!("{:.16e}", v)
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Render scan rows as CSV with the pinned header.
pub fn scan_csv(chart: &Chart, rows: &[ScanRow], with_ric: bool) -> String {
    let mut out = String::new();
    let coords = chart.coords.join(",");
    let _ = write!(
        out,
        "{coords},iota2,kf,pfaffian,det_frame,det_identity_residual,liouville_residual,nondegenerate"
    );
    if with_ric {
        out.push_str(",ric_kk");
    }
    out.push('\n');
    for row in rows {
        let mut cols: Vec<String> = row.point.iter().map(|v| fmt_f64(*v)).collect();
        cols.push(csv_opt(row.iota2));
        cols.push(csv_opt(row.kf));
        cols.push(csv_opt(row.pfaffian));
        cols.push(csv_opt(row.det_frame));
        cols.push(csv_opt(row.det_identity_residual));
        cols.push(csv_opt(row.liouville_residual));
        cols.push(
            row.nondegenerate
                .map(|b| if b { "true" } else { "false" }.to_string())
                .unwrap_or_default(),
        );
        if with_ric {
            cols.push(csv_opt(row.ric_kk));
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

// ---------------------------------------------------------------------------
// JSON

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn json_f64(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else {
        "null".to_string()
    }
}

/// Serialize a report. Field order is fixed and floats carry 17 significant
/// digits, so identical runs produce byte-identical output; the timestamp is
/// suppressed in reproducible mode.
pub fn report_to_json(report: &CheckReport, version: &str, reproducible: bool) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"schema\": 1,");
    let _ = writeln!(out, "  \"tool\": \"nullsymp\",");
    let _ = writeln!(out, "  \"version\": \"{}\",", json_escape(version));
    if !reproducible {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(out, "  \"timestamp\": {},", ts);
    }
    let _ = writeln!(out, "  \"spec\": \"{}\",", json_escape(&report.spec_name));
    out.push_str("  \"params\": {");
    for (i, (name, value)) in report.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "\"{}\": {}", json_escape(name), json_f64(*value));
    }
    out.push_str("},\n");
    let _ = writeln!(out, "  \"seed\": {},", report.seed);
    let _ = writeln!(out, "  \"points\": {},", report.points);
    let _ = writeln!(out, "  \"tol_scale\": {},", json_f64(report.tol_scale));
    out.push_str("  \"checks\": [\n");
    for (i, c) in report.checks.iter().enumerate() {
        out.push_str("    {");
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skip => "skip",
        };
        let _ = write!(
            out,
            "\"name\": \"{}\", \"status\": \"{}\"",
            json_escape(&c.name),
            status
        );
        if let Some(m) = c.measured {
            let _ = write!(out, ", \"measured\": {}", json_f64(m));
        }
        if let Some(t) = c.tolerance {
            let _ = write!(out, ", \"tolerance\": {}", json_f64(t));
        }
        if let Some(ch) = &c.chart {
            let _ = write!(out, ", \"chart\": \"{}\"", json_escape(ch));
        }
        if let Some(p) = &c.point {
            let rendered: Vec<String> = p.iter().map(|v| json_f64(*v)).collect();
            let _ = write!(out, ", \"point\": [{}]", rendered.join(", "));
        }
        if let Some(n) = &c.note {
            let _ = write!(out, ", \"note\": \"{}\"", json_escape(n));
        }
        out.push('}');
        if i + 1 < report.checks.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ],\n");
    let (p, f, s) = report.counts();
    let _ = writeln!(
        out,
        "  \"summary\": {{\"pass\": {}, \"fail\": {}, \"skip\": {}}},",
        p, f, s
    );
    let _ = writeln!(
        out,
        "  \"numerical_breakdown\": {}",
        report.numerical_breakdown
    );
    out.push_str("}\n");
    out
}
