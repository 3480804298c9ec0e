//! Pointwise metric evaluation, Levi-Civita connection, curvature, covariant
//! derivatives, causal classification, and Killing residuals.
//!
//! Everything here is a pure function of (spec, chart, point): metric
//! derivatives come from the chart's cached symbolic trees, and the only
//! numerics on top are small dense contractions.
//!
//! Curvature sign convention:
//! `R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} − Γ^a_{de} Γ^e_{cb}`
//! with `Ric_{bd} = R^a_{bad}`, which makes the unit round 3-sphere satisfy
//! `Ric(k, k) = 2` for unit `k`.

use crate::expr::{EvalCtx, EvalError};
use crate::linalg::{
    self, zero_matrix, zero_tensor3, zero_tensor4, zero_vector, Matrix, Tensor3, Tensor4, Vector,
};
use crate::spec::{Chart, SpacetimeSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point {point:?} is outside the domain of chart `{chart}`")]
    OutOfDomain { chart: String, point: Vec<f64> },
    #[error("metric is degenerate at the point (det = {det})")]
    Degenerate { det: f64 },
    #[error("metric is not Lorentzian at the point (signature ({neg}, {pos}))")]
    NonLorentzian { neg: usize, pos: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("unknown field `{field}` on chart `{chart}`")]
    UnknownField { field: String, chart: String },
    #[error("unknown scalar `{field}` on chart `{chart}`")]
    UnknownScalar { field: String, chart: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Metric at a point together with its inverse and signature.
pub struct MetricValue {
    pub point: Vec<f64>,
    pub dim: usize,
    pub components: Matrix,
    pub inverse: Matrix,
    pub det: f64,
    /// (negative, positive) eigenvalue counts.
    pub signature: (usize, usize),
    /// Per-point tolerance scale, `1 + max |g_ij|`.
    pub scale: f64,
}

pub struct ConnectionValue {
    pub point: Vec<f64>,
    pub dim: usize,
    /// `gamma[a][b][c] = Γ^a_{bc}`, symmetric in (b, c).
    pub gamma: Tensor3,
}

pub struct CurvatureValue {
    pub point: Vec<f64>,
    pub dim: usize,
    /// `riemann[a][b][c][d] = R^a_{bcd}`.
    pub riemann: Tensor4,
    /// `ricci[b][d] = R^a_{bad}`.
    pub ricci: Matrix,
    pub ricci_scalar: f64,
}

pub struct CovariantDerivativeValue {
    pub point: Vec<f64>,
    pub dim: usize,
    /// `nabla[a][b] = (∇ k)^a_b = ∂_b k^a + Γ^a_{cb} k^c`.
    pub nabla: Matrix,
    /// Field components at the point.
    pub field: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalClass {
    Null,
    Timelike,
    Spacelike,
}

/// Evaluate a declared vector field at a point.
pub fn field_value(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<Vector, GeomError> {
    let comps = chart.vector(field).ok_or_else(|| GeomError::UnknownField {
        field: field.to_string(),
        chart: chart.name.clone(),
    })?;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let mut out = zero_vector();
    for (i, e) in comps.iter().enumerate() {
        out[i] = e.eval(&ctx)?;
    }
    Ok(out)
}

/// Evaluate a declared scalar field at a point.
pub fn scalar_value(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<f64, GeomError> {
    let e = chart.scalar(field).ok_or_else(|| GeomError::UnknownScalar {
        field: field.to_string(),
        chart: chart.name.clone(),
    })?;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    Ok(e.eval(&ctx)?)
}

/// Metric components without domain or signature checks; used by scans to
/// probe cells that may sit outside the declared domain.
pub fn metric_components_raw(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
) -> Result<Matrix, EvalError> {
    let dim = chart.dim();
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let mut g = zero_matrix();
    for i in 0..dim {
        for j in i..dim {
            let v = chart.metric_component(i, j).eval(&ctx)?;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    Ok(g)
}

pub fn metric_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
) -> Result<MetricValue, GeomError> {
    if !chart.in_domain(point, spec.params()) {
        return Err(GeomError::OutOfDomain {
            chart: chart.name.clone(),
            point: point.to_vec(),
        });
    }
    let dim = chart.dim();
    let g = metric_components_raw(spec, chart, point)?;
    let mut scale = 1.0_f64;
    for row in g.iter().take(dim) {
        for &v in row.iter().take(dim) {
            scale = scale.max(1.0 + v.abs());
        }
    }
    let det = linalg::determinant(&g, dim);
    if det.abs() < 1e-12 * scale {
        return Err(GeomError::Degenerate { det });
    }
    let inverse = linalg::invert(&g, dim, 0.0).ok_or(GeomError::Degenerate { det })?;
    let signature = linalg::signature(&g, dim, 1e-10 * scale);
    if signature != (1, dim - 1) {
        return Err(GeomError::NonLorentzian {
            neg: signature.0,
            pos: signature.1,
        });
    }
    Ok(MetricValue {
        point: point.to_vec(),
        dim,
        components: g,
        inverse,
        det,
        signature,
        scale,
    })
}

/// First metric derivatives, `dg[i][j][a] = ∂_a g_ij`.
fn metric_derivs(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
) -> Result<Tensor3, EvalError> {
    let dim = chart.dim();
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let mut dg = zero_tensor3();
    for i in 0..dim {
        for j in i..dim {
            for a in 0..dim {
                let v = chart.metric_deriv(i, j, a).eval(&ctx)?;
                dg[i][j][a] = v;
                dg[j][i][a] = v;
            }
        }
    }
    Ok(dg)
}

pub fn christoffel_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
) -> Result<ConnectionValue, GeomError> {
    let mv = metric_at(spec, chart, point)?;
    let dim = mv.dim;
    let dg = metric_derivs(spec, chart, point)?;
    let mut gamma = zero_tensor3();
    for a in 0..dim {
        for b in 0..dim {
            for c in b..dim {
                let mut acc = 0.0;
                for d in 0..dim {
                    acc += mv.inverse[a][d] * (dg[d][c][b] + dg[b][d][c] - dg[b][c][d]);
                }
                let v = 0.5 * acc;
                gamma[a][b][c] = v;
                gamma[a][c][b] = v;
            }
        }
    }
    Ok(ConnectionValue {
        point: point.to_vec(),
        dim,
        gamma,
    })
}

pub fn curvature_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
) -> Result<CurvatureValue, GeomError> {
    let mv = metric_at(spec, chart, point)?;
    let dim = mv.dim;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let dg = metric_derivs(spec, chart, point)?;

    // second metric derivatives ddg[i][j][a][b] = ∂_b ∂_a g_ij
    let mut ddg = zero_tensor4();
    for i in 0..dim {
        for j in i..dim {
            for a in 0..dim {
                for b in 0..dim {
                    let v = chart.metric_second_deriv(i, j, a, b).eval(&ctx)?;
                    ddg[i][j][a][b] = v;
                    ddg[j][i][a][b] = v;
                }
            }
        }
    }

    // ∂_e g^{ad} = − g^{am} (∂_e g_{mn}) g^{nd}
    let mut dginv = zero_tensor3();
    for a in 0..dim {
        for d in 0..dim {
            for e in 0..dim {
                let mut acc = 0.0;
                for m in 0..dim {
                    for n in 0..dim {
                        acc -= mv.inverse[a][m] * dg[m][n][e] * mv.inverse[n][d];
                    }
                }
                dginv[a][d][e] = acc;
            }
        }
    }

    // Γ and ∂Γ
    let conn = christoffel_at(spec, chart, point)?;
    let gamma = &conn.gamma;
    // dgamma[a][b][c][e] = ∂_e Γ^a_{bc}
    let mut dgamma = zero_tensor4();
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for e in 0..dim {
                    let mut acc = 0.0;
                    for d in 0..dim {
                        let s = dg[d][c][b] + dg[b][d][c] - dg[b][c][d];
                        let ds = ddg[d][c][b][e] + ddg[b][d][c][e] - ddg[b][c][d][e];
                        acc += dginv[a][d][e] * s + mv.inverse[a][d] * ds;
                    }
                    dgamma[a][b][c][e] = 0.5 * acc;
                }
            }
        }
    }

    let mut riemann = zero_tensor4();
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    let mut v = dgamma[a][d][b][c] - dgamma[a][c][b][d];
                    for e in 0..dim {
                        v += gamma[a][c][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][c][b];
                    }
                    riemann[a][b][c][d] = v;
                }
            }
        }
    }

    let mut ricci = zero_matrix();
    for b in 0..dim {
        for d in 0..dim {
            let mut v = 0.0;
            for a in 0..dim {
                v += riemann[a][b][a][d];
            }
            ricci[b][d] = v;
        }
    }
    let mut ricci_scalar = 0.0;
    for b in 0..dim {
        for d in 0..dim {
            ricci_scalar += mv.inverse[b][d] * ricci[b][d];
        }
    }

    Ok(CurvatureValue {
        point: point.to_vec(),
        dim,
        riemann,
        ricci,
        ricci_scalar,
    })
}

impl CurvatureValue {
    pub fn ricci_contract(&self, u: &[f64], v: &[f64]) -> f64 {
        linalg::dot(&self.ricci, u, v, self.dim)
    }
}

pub fn covariant_derivative_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<CovariantDerivativeValue, GeomError> {
    let conn = christoffel_at(spec, chart, point)?;
    let dim = conn.dim;
    let k = field_value(spec, chart, field, point)?;
    let dk_exprs = chart
        .vector_deriv(field)
        .ok_or_else(|| GeomError::UnknownField {
            field: field.to_string(),
            chart: chart.name.clone(),
        })?;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let mut nabla = zero_matrix();
    for a in 0..dim {
        for b in 0..dim {
            let mut v = dk_exprs[a][b].eval(&ctx)?;
            for c in 0..dim {
                v += conn.gamma[a][c][b] * k[c];
            }
            nabla[a][b] = v;
        }
    }
    Ok(CovariantDerivativeValue {
        point: point.to_vec(),
        dim,
        nabla,
        field: k,
    })
}

impl CovariantDerivativeValue {
    /// `(∇_v k)^a = (∇k)^a_b v^b`.
    pub fn directional(&self, v: &[f64]) -> Vector {
        linalg::mat_vec(&self.nabla, v, self.dim)
    }

    /// `∇_k k` for the field's own flow direction.
    pub fn along_field(&self) -> Vector {
        let f = self.field;
        self.directional(&f[..self.dim])
    }

    /// Coordinate divergence `∇_a k^a`.
    pub fn divergence(&self) -> f64 {
        (0..self.dim).map(|a| self.nabla[a][a]).sum()
    }
}

pub fn causal_classify(
    spec: &SpacetimeSpec,
    chart: &Chart,
    point: &[f64],
    v: &[f64],
) -> Result<(CausalClass, f64), GeomError> {
    let dim = chart.dim();
    let nsq = linalg::coord_norm_sq(v, dim);
    if nsq.sqrt() <= 1e-12 {
        return Err(GeomError::ZeroVector);
    }
    let mv = metric_at(spec, chart, point)?;
    let gvv = linalg::dot(&mv.components, v, v, dim);
    let class = if gvv.abs() <= 1e-9 * nsq {
        CausalClass::Null
    } else if gvv < 0.0 {
        CausalClass::Timelike
    } else {
        CausalClass::Spacelike
    };
    Ok((class, gvv))
}

/// `(L_X g)_{ab} = ∇_a X_b + ∇_b X_a` for a declared field X.
pub fn killing_residual(
    spec: &SpacetimeSpec,
    chart: &Chart,
    field: &str,
    point: &[f64],
) -> Result<Matrix, GeomError> {
    let mv = metric_at(spec, chart, point)?;
    let dim = mv.dim;
    let conn = christoffel_at(spec, chart, point)?;
    let x = field_value(spec, chart, field, point)?;
    let dx_exprs = chart
        .vector_deriv(field)
        .ok_or_else(|| GeomError::UnknownField {
            field: field.to_string(),
            chart: chart.name.clone(),
        })?;
    let dg = metric_derivs(spec, chart, point)?;
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };

    // lowered components and their partials
    let mut x_low = zero_vector();
    for b in 0..dim {
        for c in 0..dim {
            x_low[b] += mv.components[b][c] * x[c];
        }
    }
    // ∂_a X_b = (∂_a g_bc) X^c + g_bc ∂_a X^c
    let mut dx_low = zero_matrix();
    for a in 0..dim {
        for b in 0..dim {
            let mut v = 0.0;
            for c in 0..dim {
                v += dg[b][c][a] * x[c] + mv.components[b][c] * dx_exprs[c][a].eval(&ctx)?;
            }
            dx_low[a][b] = v;
        }
    }
    let mut lie = zero_matrix();
    for a in 0..dim {
        for b in 0..dim {
            let nab_a_xb = dx_low[a][b]
                - (0..dim)
                    .map(|c| conn.gamma[c][a][b] * x_low[c])
                    .sum::<f64>();
            let nab_b_xa = dx_low[b][a]
                - (0..dim)
                    .map(|c| conn.gamma[c][b][a] * x_low[c])
                    .sum::<f64>();
            lie[a][b] = nab_a_xb + nab_b_xa;
        }
    }
    Ok(lie)
}

pub fn max_abs(m: &Matrix, dim: usize) -> f64 {
    let mut v: f64 = 0.0;
    for row in m.iter().take(dim) {
        for &x in row.iter().take(dim) {
            v = v.max(x.abs());
        }
    }
    v
}
