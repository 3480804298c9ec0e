//! Null frames, optical scalars, and Raychaudhuri residuals.
//!
//! For a null geodesic field k the screen deformation matrix
//! `B_ij = g(∇_{e_i} k, e_j)` over an orthonormal screen {x, y} carries the
//! optical scalars: expansion `θ = B_xx + B_yy`, twist `ι = B_yx − B_xy`,
//! and squared shear `|σ|² = ¼[(B_xx − B_yy)² + (B_xy + B_yx)²]`. The twist
//! here is twice the usual textbook scalar; the shear normalization is the
//! one under which the transport residuals below vanish on the built-in
//! spacetimes.
//!
//! The residuals checked against the transport equations are
//!
//! ```text
//! r1 = k(div k) − [ι²/2 − 2|σ|² − (div k)²/2 − Ric(k,k)]
//! r2 = k(ι²) + 2 (div k) ι²
//! ```
//!
//! and, for a pregeodesic field with `∇_K K = λK` and `ψ = div K − λ`,
//!
//! ```text
//! r3 = K(ψ) − [ι̃²/2 − 2|σ̃|² − ψ²/2 + λψ − Ric(K,K)]
//! r4 = K(ι̃²) + 2 (ψ − λ) ι̃²
//! ```
//!
//! Directional derivatives go through a symbolic pipeline where one exists
//! (geodesic fields: both `div k` and, through the identity
//! `ι² = ½ (dk♭)_{ab} (dk♭)^{ab}`, the twist squared) and otherwise through
//! a five-point finite difference along the flow direction with Richardson
//! extrapolation; results report which method ran.

use crate::expr::{EvalCtx, Expr};
use crate::geometry::{
    causal_classify, covariant_derivative_at, curvature_at, field_value, metric_at, CausalClass,
    GeomError, MetricValue,
};
use crate::linalg::{self, zero_vector, Vector};
use crate::spec::{Chart, SpacetimeSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("field is not null at the point (g(k,k) = {gvv})")]
    NotNull { gvv: f64 },
    #[error("degenerate frame construction: {detail}")]
    DegenerateFrame { detail: String },
    #[error("null frames require dimension 4, got {dim}")]
    FrameDim { dim: usize },
    #[error("field is not pregeodesic: |∇_K K − λK| = {residual}")]
    NotPregeodesic { residual: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Pointwise frame {k, L, x, y}: k, L null with g(k,L) = −1, x and y unit
/// spacelike orthogonal to both.
#[derive(Debug, Clone)]
pub struct NullFrame {
    pub point: Vec<f64>,
    pub k: Vector,
    pub l: Vector,
    pub x: Vector,
    pub y: Vector,
}

impl NullFrame {
    /// The nine pairing residuals, for invariant checks: each entry is the
    /// deviation of a frame pairing from its target value.
    pub fn pairing_residuals(&self, g: &MetricValue) -> [f64; 9] {
        let d = g.dim;
        let ip = |u: &Vector, v: &Vector| linalg::dot(&g.components, &u[..d], &v[..d], d);
        [
            ip(&self.k, &self.k),
            ip(&self.l, &self.l),
            ip(&self.k, &self.l) + 1.0,
            ip(&self.x, &self.x) - 1.0,
            ip(&self.y, &self.y) - 1.0,
            ip(&self.x, &self.y),
            ip(&self.k, &self.x),
            ip(&self.k, &self.y),
            ip(&self.l, &self.x).abs().max(ip(&self.l, &self.y).abs()),
        ]
    }

    pub fn max_pairing_residual(&self, g: &MetricValue) -> f64 {
        self.pairing_residuals(g)
            .iter()
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OpticalScalars {
    /// Expansion, the screen trace of B.
    pub theta: f64,
    /// Coordinate divergence `∇_a k^a`, reported as a cross-check of theta.
    pub theta_coordinate: f64,
    pub shear_sq: f64,
    /// Signed twist; the sign depends on screen orientation.
    pub twist: f64,
    pub twist_sq: f64,
    /// Max-abs of `∇_k k`; the scalars carry their usual meaning only when
    /// this is small. Reported as a warning channel, not an error.
    pub geodesic_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivMethod {
    Symbolic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct RaychaudhuriResiduals {
    pub r1: f64,
    pub r2: f64,
    pub method: DerivMethod,
    pub geodesic_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PregeodesicResiduals {
    pub r3: f64,
    pub r4: f64,
    pub lambda: f64,
    pub method: DerivMethod,
}

/// Build a null frame at a point.
///
/// Deterministic: the long leg L is seeded from `seed` when given, otherwise
/// from the first coordinate basis vector whose metric pairing with k does
/// not vanish; the screen comes from projecting the remaining basis vectors.
pub fn build_null_frame(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
    k_value: &[f64],
    seed: Option<&[f64]>,
) -> Result<NullFrame, OpticsError> {
    let dim = chart.dim();
    if dim != 4 {
        return Err(OpticsError::FrameDim { dim });
    }
    if linalg::coord_norm_sq(k_value, dim).sqrt() <= 1e-12 {
        return Err(OpticsError::DegenerateFrame {
            detail: "k has negligible coordinate norm".into(),
        });
    }
    let (class, gvv) = causal_classify(spec, chart, point, k_value)?;
    if class != CausalClass::Null {
        return Err(OpticsError::NotNull { gvv });
    }
    let g = metric_at(spec, chart, point)?;
    let ip = |u: &[f64], v: &[f64]| linalg::dot(&g.components, u, v, dim);

    let mut k = zero_vector();
    k[..dim].copy_from_slice(&k_value[..dim]);

    // L from the seed: normalize the pairing to -1, then remove the null part
    let pairing_floor = 1e-10 * g.scale;
    let u: Vector = match seed {
        Some(s) => {
            let mut u = zero_vector();
            u[..dim].copy_from_slice(&s[..dim]);
            if ip(&u[..dim], k_value).abs() <= pairing_floor {
                return Err(OpticsError::DegenerateFrame {
                    detail: "seed vector pairs to zero with k".into(),
                });
            }
            u
        }
        None => {
            let mut chosen = None;
            for i in 0..dim {
                let mut e = zero_vector();
                e[i] = 1.0;
                if ip(&e[..dim], k_value).abs() > pairing_floor {
                    chosen = Some(e);
                    break;
                }
            }
            chosen.ok_or_else(|| OpticsError::DegenerateFrame {
                detail: "no coordinate basis vector pairs with k".into(),
            })?
        }
    };
    let c = -1.0 / ip(&u[..dim], &k[..dim]);
    let mut l0 = zero_vector();
    for i in 0..dim {
        l0[i] = c * u[i];
    }
    // now g(k, l0) = -1; add a multiple of k to null it out
    let l0_sq = ip(&l0[..dim], &l0[..dim]);
    let mut l = zero_vector();
    for i in 0..dim {
        l[i] = l0[i] + 0.5 * l0_sq * k[i];
    }

    // screen: project basis vectors orthogonal to k and l, Gram-Schmidt
    let mut legs: Vec<Vector> = Vec::new();
    for i in 0..dim {
        if legs.len() == 2 {
            break;
        }
        let mut v = zero_vector();
        v[i] = 1.0;
        let vk = ip(&v[..dim], &k[..dim]);
        let vl = ip(&v[..dim], &l[..dim]);
        for j in 0..dim {
            v[j] += vl * k[j] + vk * l[j];
        }
        for leg in &legs {
            let proj = ip(&v[..dim], &leg[..dim]);
            for j in 0..dim {
                v[j] -= proj * leg[j];
            }
        }
        let norm_sq = ip(&v[..dim], &v[..dim]);
        if norm_sq <= 1e-10 {
            continue;
        }
        let inv = 1.0 / norm_sq.sqrt();
        for x in v.iter_mut() {
            *x *= inv;
        }
        legs.push(v);
    }
    if legs.len() != 2 {
        return Err(OpticsError::DegenerateFrame {
            detail: "could not complete the screen".into(),
        });
    }
    let y = legs.pop().unwrap();
    let x = legs.pop().unwrap();
    Ok(NullFrame {
        point: point.to_vec(),
        k,
        l,
        x,
        y,
    })
}

/// Screen deformation entries (B_xx, B_xy, B_yx, B_yy) of a field in a frame.
fn screen_matrix(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
    frame: &NullFrame,
) -> Result<([f64; 4], f64, f64), OpticsError> {
    let dim = chart.dim();
    let g = metric_at(spec, chart, point)?;
    let cd = covariant_derivative_at(spec, chart, field, point)?;
    let b = |u: &Vector, v: &Vector| {
        let du = cd.directional(&u[..dim]);
        linalg::dot(&g.components, &du[..dim], &v[..dim], dim)
    };
    let entries = [
        b(&frame.x, &frame.x),
        b(&frame.x, &frame.y),
        b(&frame.y, &frame.x),
        b(&frame.y, &frame.y),
    ];
    let geo = cd.along_field();
    let geodesic_residual = geo[..dim].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok((entries, cd.divergence(), geodesic_residual))
}

fn scalars_from_screen(entries: [f64; 4], div: f64, geodesic_residual: f64) -> OpticalScalars {
    let [bxx, bxy, byx, byy] = entries;
    let theta = bxx + byy;
    let twist = byx - bxy;
    let shear_sq = 0.25 * ((bxx - byy).powi(2) + (bxy + byx).powi(2));
    OpticalScalars {
        theta,
        theta_coordinate: div,
        shear_sq,
        twist,
        twist_sq: twist * twist,
        geodesic_residual,
    }
}

pub fn optical_scalars(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    point: &[f64],
) -> Result<OpticalScalars, OpticsError> {
    let k = field_value(spec, chart, k_field, point)?;
    let frame = build_null_frame(spec, chart, point, &k[..chart.dim()], None)?;
    optical_scalars_in_frame(spec, chart, k_field, point, &frame)
}

/// Optical scalars measured in a caller-provided admissible frame; the
/// frame-independence property tests go through this entry point.
pub fn optical_scalars_in_frame(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    point: &[f64],
    frame: &NullFrame,
) -> Result<OpticalScalars, OpticsError> {
    let (entries, div, geodesic_residual) = screen_matrix(spec, chart, k_field, point, frame)?;
    Ok(scalars_from_screen(entries, div, geodesic_residual))
}

/// Symbolic coordinate divergence `∂_a k^a + ½ k^a ∂_a(det g)/det g`.
fn divergence_expr(chart: &Chart, field: &str) -> Option<Expr> {
    let comps = chart.vector(field)?;
    let dcomps = chart.vector_deriv(field)?;
    let dim = chart.dim();
    let mut acc = Expr::zero();
    for a in 0..dim {
        acc = Expr::add(acc, dcomps[a][a].clone());
    }
    for a in 0..dim {
        let log_det_term = Expr::div(chart.det_deriv(a).clone(), chart.det_expr().clone());
        acc = Expr::add(
            acc,
            Expr::mul(
                Expr::constant(0.5),
                Expr::mul(comps[a].clone(), log_det_term),
            ),
        );
    }
    Some(acc)
}

/// Symbolic directional derivative `k^a ∂_a s`.
fn directional_expr(chart: &Chart, field: &str, scalar: &Expr) -> Option<Expr> {
    let comps = chart.vector(field)?;
    let dim = chart.dim();
    let mut acc = Expr::zero();
    for a in 0..dim {
        acc = Expr::add(acc, Expr::mul(comps[a].clone(), scalar.diff(a)));
    }
    Some(acc)
}

/// Symbolic twist squared of a geodesic null field, via
/// `ι² = ½ (dk♭)_{ab} (dk♭)^{ab}`.
fn twist_sq_expr(chart: &Chart, field: &str) -> Option<Expr> {
    let comps = chart.vector(field)?;
    let dim = chart.dim();
    // lowered field
    let mut flat = Vec::with_capacity(dim);
    for b in 0..dim {
        let mut acc = Expr::zero();
        for c in 0..dim {
            acc = Expr::add(
                acc,
                Expr::mul(chart.metric_component(b, c).clone(), comps[c].clone()),
            );
        }
        flat.push(acc);
    }
    // A_ab = ∂_a k_b − ∂_b k_a
    let mut a_form = vec![vec![Expr::zero(); dim]; dim];
    for a in 0..dim {
        for b in a + 1..dim {
            a_form[a][b] = Expr::sub(flat[b].diff(a), flat[a].diff(b));
        }
    }
    let ginv = chart.symbolic_inverse_metric();
    let mut acc = Expr::zero();
    for a in 0..dim {
        for b in a + 1..dim {
            if a_form[a][b].is_zero() {
                continue;
            }
            for c in 0..dim {
                for d in c + 1..dim {
                    if a_form[c][d].is_zero() {
                        continue;
                    }
                    let weight = Expr::sub(
                        Expr::mul(ginv[a][c].clone(), ginv[b][d].clone()),
                        Expr::mul(ginv[a][d].clone(), ginv[b][c].clone()),
                    );
                    acc = Expr::add(
                        acc,
                        Expr::mul(
                            Expr::mul(a_form[a][b].clone(), a_form[c][d].clone()),
                            weight,
                        ),
                    );
                }
            }
        }
    }
    Some(acc)
}

/// Precomputed symbolic pipeline for the geodesic transport residuals of one
/// field on one chart; build once, evaluate at many points.
pub struct RaychaudhuriPipeline<'a> {
    spec: &'a SpacetimeSpec,
    chart: &'a Chart,
    field: String,
    div_k: Expr,
    k_div_k: Expr,
    iota2: Expr,
    k_iota2: Expr,
}

impl<'a> RaychaudhuriPipeline<'a> {
    pub fn new(
        spec: &'a SpacetimeSpec,
        chart: &'a Chart,
        field: &str,
    ) -> Result<Self, OpticsError> {
        let missing = || {
            OpticsError::Geom(GeomError::UnknownField {
                field: field.to_string(),
                chart: chart.name.clone(),
            })
        };
        let div_k = divergence_expr(chart, field).ok_or_else(missing)?;
        let k_div_k = directional_expr(chart, field, &div_k).ok_or_else(missing)?;
        let iota2 = twist_sq_expr(chart, field).ok_or_else(missing)?;
        let k_iota2 = directional_expr(chart, field, &iota2).ok_or_else(missing)?;
        Ok(RaychaudhuriPipeline {
            spec,
            chart,
            field: field.to_string(),
            div_k,
            k_div_k,
            iota2,
            k_iota2,
        })
    }

    /// Twist squared from the symbolic invariant route (valid for geodesic
    /// fields).
    pub fn iota2_at(&self, point: &[f64]) -> Result<f64, OpticsError> {
        let ctx = EvalCtx {
            point,
            params: self.spec.params(),
        };
        Ok(self.iota2.eval(&ctx).map_err(GeomError::Eval)?)
    }

    pub fn residuals_at(&self, point: &[f64]) -> Result<RaychaudhuriResiduals, OpticsError> {
        let ctx = EvalCtx {
            point,
            params: self.spec.params(),
        };
        let div = self.div_k.eval(&ctx).map_err(GeomError::Eval)?;
        let k_div = self.k_div_k.eval(&ctx).map_err(GeomError::Eval)?;
        let iota2 = self.iota2.eval(&ctx).map_err(GeomError::Eval)?;
        let k_iota2 = self.k_iota2.eval(&ctx).map_err(GeomError::Eval)?;

        let scalars = optical_scalars(self.spec, self.chart, &self.field, point)?;
        let curv = curvature_at(self.spec, self.chart, point)?;
        let k = field_value(self.spec, self.chart, &self.field, point)?;
        let dim = self.chart.dim();
        let ric_kk = curv.ricci_contract(&k[..dim], &k[..dim]);

        let r1 = k_div - (0.5 * iota2 - 2.0 * scalars.shear_sq - 0.5 * div * div - ric_kk);
        let r2 = k_iota2 + 2.0 * div * iota2;
        Ok(RaychaudhuriResiduals {
            r1,
            r2,
            method: DerivMethod::Symbolic,
            geodesic_residual: scalars.geodesic_residual,
        })
    }
}

pub fn raychaudhuri_residuals(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    point: &[f64],
) -> Result<RaychaudhuriResiduals, OpticsError> {
    RaychaudhuriPipeline::new(spec, chart, k_field)?.residuals_at(point)
}

/// Five-point finite difference of a scalar along the straight line through
/// `point` in direction `dir`, with one Richardson step. The base step is
/// scaled down by the direction's size so the coordinate displacement stays
/// near 1e-4.
fn directional_fd<F>(point: &[f64], dir: &[f64], dim: usize, mut f: F) -> Result<f64, OpticsError>
where
    F: FnMut(&[f64]) -> Result<f64, OpticsError>,
{
    let scale = 1.0 + linalg::coord_norm_sq(dir, dim).sqrt();
    let h = 1e-4 / scale;
    let mut stencil = |h: f64| -> Result<f64, OpticsError> {
        let shift = |s: f64| -> Vec<f64> {
            point
                .iter()
                .take(dim)
                .enumerate()
                .map(|(i, &x)| x + s * dir[i])
                .collect()
        };
        let fm2 = f(&shift(-2.0 * h))?;
        let fm1 = f(&shift(-h))?;
        let fp1 = f(&shift(h))?;
        let fp2 = f(&shift(2.0 * h))?;
        Ok((fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h))
    };
    let d_h = stencil(h)?;
    let d_half = stencil(0.5 * h)?;
    Ok((16.0 * d_half - d_h) / 15.0)
}

/// Extract λ with `∇_K K = λ K` via the frame pairing `λ = −g(∇_K K, L)`,
/// plus the residual of the pregeodesic condition and the tolerance scale.
fn lambda_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<(f64, f64, f64), OpticsError> {
    let dim = chart.dim();
    let g = metric_at(spec, chart, point)?;
    let cd = covariant_derivative_at(spec, chart, field, point)?;
    let k = cd.field;
    let frame = build_null_frame(spec, chart, point, &k[..dim], None)?;
    let acc = cd.along_field();
    let lambda = -linalg::dot(&g.components, &acc[..dim], &frame.l[..dim], dim);
    let mut residual = 0.0_f64;
    for i in 0..dim {
        residual = residual.max((acc[i] - lambda * k[i]).abs());
    }
    Ok((lambda, residual, g.scale))
}

/// Symbolic Christoffel symbols, `gamma[a][b][c] = Γ^a_{bc}`. The trees run
/// through the symbolic inverse metric, so they are large; build once.
fn christoffel_exprs(chart: &Chart) -> Vec<Vec<Vec<Expr>>> {
    let dim = chart.dim();
    let ginv = chart.symbolic_inverse_metric();
    let mut gamma = vec![vec![vec![Expr::zero(); dim]; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            for c in b..dim {
                let mut acc = Expr::zero();
                for d in 0..dim {
                    let term = Expr::sub(
                        Expr::add(
                            chart.metric_deriv(d, c, b).clone(),
                            chart.metric_deriv(b, d, c).clone(),
                        ),
                        chart.metric_deriv(b, c, d).clone(),
                    );
                    acc = Expr::add(acc, Expr::mul(ginv[a][d].clone(), term));
                }
                let v = Expr::mul(Expr::constant(0.5), acc);
                gamma[a][b][c] = v.clone();
                gamma[a][c][b] = v;
            }
        }
    }
    gamma
}

/// Symbolic acceleration `(∇_K K)^a = K^b ∂_b K^a + Γ^a_{bc} K^b K^c`.
fn acceleration_exprs(chart: &Chart, field: &str) -> Option<Vec<Expr>> {
    let comps = chart.vector(field)?;
    let dcomps = chart.vector_deriv(field)?;
    let dim = chart.dim();
    let gamma = christoffel_exprs(chart);
    let mut out = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut acc = Expr::zero();
        for b in 0..dim {
            acc = Expr::add(acc, Expr::mul(comps[b].clone(), dcomps[a][b].clone()));
            for c in 0..dim {
                acc = Expr::add(
                    acc,
                    Expr::mul(
                        gamma[a][b][c].clone(),
                        Expr::mul(comps[b].clone(), comps[c].clone()),
                    ),
                );
            }
        }
        out.push(acc);
    }
    Some(out)
}

/// Transport residuals for a pregeodesic null field K with `∇_K K = λK`.
///
/// The directional derivatives are symbolic: λ is read off one component of
/// the symbolic acceleration (the component where |K^i| is largest at the
/// point), and the twist squared uses `ι̃² = ½ (dK♭)_{ab}(dK♭)^{ab} + λ²`,
/// the pregeodesic extension of the geodesic contraction identity. The
/// five-point finite-difference fallback only runs when the chosen component
/// fails to evaluate.
pub fn pregeodesic_residual(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<PregeodesicResiduals, OpticsError> {
    let dim = chart.dim();
    let (lambda, residual, scale) = lambda_at(spec, chart, field, point)?;
    if residual > 1e-8 * scale {
        return Err(OpticsError::NotPregeodesic { residual });
    }

    let k = field_value(spec, chart, field, point)?;
    let scalars = optical_scalars(spec, chart, field, point)?;
    let curv = curvature_at(spec, chart, point)?;
    let ric_kk = curv.ricci_contract(&k[..dim], &k[..dim]);
    let iota2 = scalars.twist_sq;
    let missing = || {
        OpticsError::Geom(GeomError::UnknownField {
            field: field.to_string(),
            chart: chart.name.clone(),
        })
    };

    // symbolic pipeline
    let hint = (0..dim)
        .max_by(|&i, &j| k[i].abs().partial_cmp(&k[j].abs()).unwrap())
        .unwrap();
    let comps = chart.vector(field).ok_or_else(missing)?;
    let accel = acceleration_exprs(chart, field).ok_or_else(missing)?;
    let lambda_sym = Expr::div(accel[hint].clone(), comps[hint].clone());
    let div_sym = divergence_expr(chart, field).ok_or_else(missing)?;
    let psi_sym = Expr::sub(div_sym, lambda_sym.clone());
    let half_contraction = twist_sq_expr(chart, field).ok_or_else(missing)?;
    let iota2_sym = Expr::add(
        half_contraction,
        Expr::mul(lambda_sym.clone(), lambda_sym.clone()),
    );
    let k_psi_sym = directional_expr(chart, field, &psi_sym).ok_or_else(missing)?;
    let k_iota2_sym = directional_expr(chart, field, &iota2_sym).ok_or_else(missing)?;

    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let symbolic = (|| -> Result<(f64, f64, f64), crate::expr::EvalError> {
        Ok((
            psi_sym.eval(&ctx)?,
            k_psi_sym.eval(&ctx)?,
            k_iota2_sym.eval(&ctx)?,
        ))
    })();

    let (psi, k_psi, k_iota2, method) = match symbolic {
        Ok((psi, k_psi, k_iota2)) => (psi, k_psi, k_iota2, DerivMethod::Symbolic),
        Err(_) => {
            // fall back to finite differences along the flow direction
            let psi_at = |p: &[f64]| -> Result<f64, OpticsError> {
                let cd = covariant_derivative_at(spec, chart, field, p)?;
                let (lam, _, _) = lambda_at(spec, chart, field, p)?;
                Ok(cd.divergence() - lam)
            };
            let iota2_at = |p: &[f64]| -> Result<f64, OpticsError> {
                Ok(optical_scalars(spec, chart, field, p)?.twist_sq)
            };
            let psi = psi_at(point)?;
            let k_psi = directional_fd(point, &k[..dim], dim, psi_at)?;
            let k_iota2 = directional_fd(point, &k[..dim], dim, iota2_at)?;
            (psi, k_psi, k_iota2, DerivMethod::FiniteDifference)
        }
    };

    let r3 =
        k_psi - (0.5 * iota2 - 2.0 * scalars.shear_sq - 0.5 * psi * psi + lambda * psi - ric_kk);
    let r4 = k_iota2 + 2.0 * (psi - lambda) * iota2;
    Ok(PregeodesicResiduals {
        r3,
        r4,
        lambda,
        method,
    })
}

/// Frame-measured magnitude of the Frobenius 3-form `k♭ ∧ dk♭`.
///
/// The Lorentzian self-contraction of this 3-form vanishes identically for
/// geodesic null k (the form is proportional to `θ^L ∧ θ^x ∧ θ^y`, which is
/// null), so the reported magnitude is `|(k♭ ∧ dk♭)(L, x, y)|` in a null
/// frame — invariant under the admissible frame changes fixing k, and zero
/// exactly when the form vanishes, i.e. when k^⊥ is integrable.
pub fn frobenius_value(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    point: &[f64],
) -> Result<f64, OpticsError> {
    let dim = chart.dim();
    let g = metric_at(spec, chart, point)?;
    let k = field_value(spec, chart, k_field, point)?;
    let frame = build_null_frame(spec, chart, point, &k[..dim], None)?;
    let dk = chart
        .vector_deriv(k_field)
        .ok_or_else(|| GeomError::UnknownField {
            field: k_field.to_string(),
            chart: chart.name.clone(),
        })?;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };

    // lowered field and its coordinate partials
    let mut flat = zero_vector();
    for b in 0..dim {
        for c in 0..dim {
            flat[b] += g.components[b][c] * k[c];
        }
    }
    let mut dflat = [[0.0; 4]; 4]; // dflat[a][b] = ∂_a k_b
    for a in 0..dim {
        for b in 0..dim {
            let mut v = 0.0;
            for c in 0..dim {
                v += chart.metric_deriv(b, c, a).eval(&ctx).map_err(GeomError::Eval)? * k[c]
                    + g.components[b][c] * dk[c][a].eval(&ctx).map_err(GeomError::Eval)?;
            }
            dflat[a][b] = v;
        }
    }
    let a_form = |a: usize, b: usize| dflat[a][b] - dflat[b][a];

    // T_abc = k_a A_bc + k_b A_ca + k_c A_ab, contracted with (L, x, y)
    let mut value = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                let t = flat[a] * a_form(b, c) + flat[b] * a_form(c, a) + flat[c] * a_form(a, b);
                value += t * frame.l[a] * frame.x[b] * frame.y[c];
            }
        }
    }
    Ok(value.abs())
}
