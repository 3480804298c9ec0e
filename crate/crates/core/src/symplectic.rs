//! The exact 2-form `ω = d(e^f k♭)` and its verification suite.
//!
//! With `α_b = e^f g_bc k^c` the components are `ω_ab = ∂_a α_b − ∂_b α_a`,
//! assembled symbolically so that the closedness residual probes only
//! differentiation and rounding. In a null frame (k, x, y, L) the pairings
//! satisfy `ω(k,L) = −e^f k(f)` and `ω(x,y) = −e^f ι`, the Pfaffian in that
//! frame order reduces to `ω(k,x)ω(y,L) − ω(k,y)ω(x,L) + ω(k,L)ω(x,y)`, and
//! the frame determinant obeys `det ω = e^{4f} (k(f))² ι²`.
//!
//! The Liouville property of `X = k/k(f)` is certified through the pointwise
//! algebraic identity `X ⌟ ω = α`; a flow-based spot check lives in the
//! acceptance suite as redundancy.
//!
//! The determinant identity is interpreted in the null-frame basis; the
//! coordinate-basis determinant is reported separately and never compared
//! against it.

use crate::expr::{EvalCtx, Expr};
use crate::geometry::{field_value, metric_at, GeomError};
use crate::linalg::{self, zero_matrix, zero_vector, Matrix, Vector};
use crate::optics::{
    build_null_frame, optical_scalars_in_frame, NullFrame, OpticalScalars, OpticsError,
};
use crate::spec::{Chart, SpacetimeSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SympError {
    #[error("k(f) vanishes at the point (k(f) = {kf})")]
    KfVanishes { kf: f64 },
    #[error("vector is not orthogonal to k (g(k,v) = {gkv})")]
    NotOrthogonal { gkv: f64 },
    #[error("vector is not spacelike (g(v,v) = {gvv})")]
    NotSpacelike { gvv: f64 },
    #[error("operation requires dimension {expected}, spec has {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("field is not unit timelike (g(k,k) = {gkk})")]
    NotUnitTimelike { gkk: f64 },
    #[error("unknown scalar field `{field}` on chart `{chart}`")]
    UnknownScalar { field: String, chart: String },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Antisymmetric coordinate components of a 2-form at a point. Only the
/// upper triangle is computed; the mirror is written with an exact sign
/// flip, so antisymmetry holds bitwise.
#[derive(Debug, Clone)]
pub struct TwoFormValue {
    pub point: Vec<f64>,
    pub dim: usize,
    pub components: Matrix,
}

impl TwoFormValue {
    /// `ω(u, v)` by full contraction.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                acc += self.components[a][b] * u[a] * v[b];
            }
        }
        acc
    }

    /// `(v ⌟ ω)_b = v^a ω_ab`.
    pub fn interior_product(&self, v: &[f64]) -> Vector {
        let mut out = zero_vector();
        for b in 0..self.dim {
            let mut acc = 0.0;
            for a in 0..self.dim {
                acc += v[a] * self.components[a][b];
            }
            out[b] = acc;
        }
        out
    }

    pub fn coordinate_determinant(&self) -> f64 {
        linalg::determinant(&self.components, self.dim)
    }
}

/// Pointwise record of the symplectic verification quantities.
#[derive(Debug, Clone)]
pub struct SymplecticReport {
    pub point: Vec<f64>,
    pub omega_kl: f64,
    pub omega_xy: f64,
    pub omega_kx: f64,
    pub omega_ky: f64,
    /// Pfaffian of ω in the frame order (k, x, y, L).
    pub pfaffian: f64,
    /// Determinant of the 4x4 frame-component matrix ω(e_i, e_j).
    pub det_frame: f64,
    /// `det_frame − e^{4f} (k(f))² ι²`.
    pub det_identity_residual: f64,
    /// Max-abs of `X ⌟ ω − α` with `X = k/k(f)`; absent where k(f) ~ 0.
    pub liouville_residual: Option<f64>,
    pub nondegenerate: bool,
    /// Residuals of the two pairing identities.
    pub deg1_residual: f64,
    pub deg2_residual: f64,
    pub kf: f64,
    pub f_value: f64,
    pub iota2: f64,
}

/// Symbolic ω for one (k, f) pair on one chart; build once, evaluate at many
/// points.
pub struct SymplecticSetup<'a> {
    spec: &'a SpacetimeSpec,
    chart: &'a Chart,
    k_field: String,
    pub alpha: Vec<Expr>,
    /// Upper-triangle trees; (b, a) mirrors with an exact sign flip.
    omega: Vec<Vec<Expr>>,
    /// d ω components for independent triples a < b < c.
    domega: Vec<(usize, usize, usize, Expr)>,
    kf: Expr,
    f: Expr,
}

impl<'a> SymplecticSetup<'a> {
    pub fn new(
        spec: &'a SpacetimeSpec,
        chart: &'a Chart,
        k_field: &str,
        f_field: &str,
    ) -> Result<Self, SympError> {
        Self::build(spec, chart, k_field, f_field, false)
    }

    /// Test-fixture variant: drops the `e^f` factor from the assembled
    /// ω_{01} component. Corrupting α itself before taking d cannot work as
    /// a fixture (d² kills any such perturbation), so the factor comes off
    /// the 2-form component, which destroys exactness and must blow up the
    /// closedness residual.
    pub fn new_corrupted(
        spec: &'a SpacetimeSpec,
        chart: &'a Chart,
        k_field: &str,
        f_field: &str,
    ) -> Result<Self, SympError> {
        Self::build(spec, chart, k_field, f_field, true)
    }

    fn build(
        spec: &'a SpacetimeSpec,
        chart: &'a Chart,
        k_field: &str,
        f_field: &str,
        corrupt: bool,
    ) -> Result<Self, SympError> {
        let dim = chart.dim();
        let comps = chart
            .vector(k_field)
            .ok_or_else(|| GeomError::UnknownField {
                field: k_field.to_string(),
                chart: chart.name.clone(),
            })?;
        let f = chart
            .scalar(f_field)
            .ok_or_else(|| SympError::UnknownScalar {
                field: f_field.to_string(),
                chart: chart.name.clone(),
            })?
            .clone();
        let ef = Expr::exp(f.clone());

        // k♭ then α = e^f k♭
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
        let alpha: Vec<Expr> = flat.iter().map(|e| Expr::mul(ef.clone(), e.clone())).collect();

        let mut omega = vec![vec![Expr::zero(); dim]; dim];
        for a in 0..dim {
            for b in a + 1..dim {
                omega[a][b] = Expr::sub(alpha[b].diff(a), alpha[a].diff(b));
            }
        }
        if corrupt {
            // the last angular pair; low-index pairs can be too special to
            // expose the corruption (on the rotating entry ω_01 = e^r, whose
            // stripped version is still closed)
            let (a, b) = (dim - 2, dim - 1);
            omega[a][b] = Expr::mul(omega[a][b].clone(), Expr::exp(Expr::neg(f.clone())));
        }

        let mut domega = Vec::new();
        for a in 0..dim {
            for b in a + 1..dim {
                for c in b + 1..dim {
                    // ∂_a ω_bc + ∂_b ω_ca + ∂_c ω_ab with ω_ca = −ω_ac
                    let term = Expr::add(
                        Expr::sub(omega[b][c].diff(a), omega[a][c].diff(b)),
                        omega[a][b].diff(c),
                    );
                    domega.push((a, b, c, term));
                }
            }
        }

        let mut kf = Expr::zero();
        for a in 0..dim {
            kf = Expr::add(kf, Expr::mul(comps[a].clone(), f.diff(a)));
        }

        Ok(SymplecticSetup {
            spec,
            chart,
            k_field: k_field.to_string(),
            alpha,
            omega,
            domega,
            kf,
            f,
        })
    }

    fn ctx<'p>(&self, point: &'p [f64]) -> EvalCtx<'p>
    where
        'a: 'p,
    {
        EvalCtx {
            point,
            params: self.spec.params(),
        }
    }

    pub fn omega_at(&self, point: &[f64]) -> Result<TwoFormValue, SympError> {
        let dim = self.chart.dim();
        let ctx = self.ctx(point);
        let mut m = zero_matrix();
        for a in 0..dim {
            for b in a + 1..dim {
                let v = self.omega[a][b].eval(&ctx).map_err(GeomError::Eval)?;
                m[a][b] = v;
                m[b][a] = -v;
            }
        }
        Ok(TwoFormValue {
            point: point.to_vec(),
            dim,
            components: m,
        })
    }

    pub fn alpha_at(&self, point: &[f64]) -> Result<Vector, SympError> {
        let ctx = self.ctx(point);
        let mut out = zero_vector();
        for (b, e) in self.alpha.iter().enumerate() {
            out[b] = e.eval(&ctx).map_err(GeomError::Eval)?;
        }
        Ok(out)
    }

    pub fn kf_at(&self, point: &[f64]) -> Result<f64, SympError> {
        Ok(self.kf.eval(&self.ctx(point)).map_err(GeomError::Eval)?)
    }

    pub fn f_at(&self, point: &[f64]) -> Result<f64, SympError> {
        Ok(self.f.eval(&self.ctx(point)).map_err(GeomError::Eval)?)
    }

    /// Max-abs of the exterior-derivative components of ω; analytically zero,
    /// so the evaluated value measures differentiation and rounding defects.
    pub fn closedness_residual_at(&self, point: &[f64]) -> Result<f64, SympError> {
        let ctx = self.ctx(point);
        let mut worst = 0.0_f64;
        for (_, _, _, e) in &self.domega {
            let v = e.eval(&ctx).map_err(GeomError::Eval)?;
            worst = worst.max(v.abs());
        }
        Ok(worst)
    }

    /// Max-abs of `X ⌟ ω − α` with `X = k/k(f)`.
    pub fn liouville_residual_at(&self, point: &[f64]) -> Result<f64, SympError> {
        let dim = self.chart.dim();
        let kf = self.kf_at(point)?;
        if kf.abs() <= 1e-10 {
            return Err(SympError::KfVanishes { kf });
        }
        let omega = self.omega_at(point)?;
        let alpha = self.alpha_at(point)?;
        let k = field_value(self.spec, self.chart, &self.k_field, point)?;
        let x: Vec<f64> = k[..dim].iter().map(|v| v / kf).collect();
        let ix = omega.interior_product(&x);
        let mut worst = 0.0_f64;
        for b in 0..dim {
            worst = worst.max((ix[b] - alpha[b]).abs());
        }
        Ok(worst)
    }

    /// Full pointwise report: pairings, Pfaffian, frame determinant, the
    /// determinant identity residual, the Liouville residual, and the
    /// nondegeneracy verdict `|Pf| > 1e-10 e^{2f}`.
    pub fn report_at(&self, point: &[f64]) -> Result<SymplecticReport, SympError> {
        let dim = self.chart.dim();
        let k = field_value(self.spec, self.chart, &self.k_field, point)?;
        let frame = build_null_frame(self.spec, self.chart, point, &k[..dim], None)?;
        self.report_in_frame(point, &frame)
    }

    /// Same as [`report_at`](Self::report_at) with a caller-supplied frame;
    /// the frame-independence tests go through this.
    pub fn report_in_frame(
        &self,
        point: &[f64],
        frame: &NullFrame,
    ) -> Result<SymplecticReport, SympError> {
        let omega = self.omega_at(point)?;
        let scalars: OpticalScalars =
            optical_scalars_in_frame(self.spec, self.chart, &self.k_field, point, frame)?;
        let kf = self.kf_at(point)?;
        let f = self.f_at(point)?;
        let ef = f.exp();

        let w = |u: &Vector, v: &Vector| omega.contract(&u[..omega.dim], &v[..omega.dim]);
        let omega_kl = w(&frame.k, &frame.l);
        let omega_xy = w(&frame.x, &frame.y);
        let omega_kx = w(&frame.k, &frame.x);
        let omega_ky = w(&frame.k, &frame.y);
        let omega_xl = w(&frame.x, &frame.l);
        let omega_yl = w(&frame.y, &frame.l);

        // frame order (k, x, y, L)
        let pfaffian = omega_kx * omega_yl - omega_ky * omega_xl + omega_kl * omega_xy;
        let mut frame_matrix = zero_matrix();
        let basis = [&frame.k, &frame.x, &frame.y, &frame.l];
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate() {
                frame_matrix[i][j] = w(u, v);
            }
        }
        let det_frame = linalg::determinant(&frame_matrix, 4);
        let iota2 = scalars.twist_sq;
        let det_identity_residual = det_frame - ef.powi(4) * kf * kf * iota2;

        let liouville_residual = if kf.abs() > 1e-10 {
            Some(self.liouville_residual_at(point)?)
        } else {
            None
        };

        Ok(SymplecticReport {
            point: point.to_vec(),
            omega_kl,
            omega_xy,
            omega_kx,
            omega_ky,
            pfaffian,
            det_frame,
            det_identity_residual,
            liouville_residual,
            nondegenerate: pfaffian.abs() > 1e-10 * (2.0 * f).exp(),
            deg1_residual: (omega_kl + ef * kf).abs(),
            deg2_residual: (omega_xy + ef * scalars.twist).abs(),
            kf,
            f_value: f,
            iota2,
        })
    }
}

pub fn omega_at(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
) -> Result<TwoFormValue, SympError> {
    SymplecticSetup::new(spec, chart, k_field, f_field)?.omega_at(point)
}

pub fn frame_pairings(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
) -> Result<SymplecticReport, SympError> {
    SymplecticSetup::new(spec, chart, k_field, f_field)?.report_at(point)
}

pub fn nondegeneracy_report(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
) -> Result<SymplecticReport, SympError> {
    SymplecticSetup::new(spec, chart, k_field, f_field)?.report_at(point)
}

pub fn liouville_residual(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
) -> Result<f64, SympError> {
    SymplecticSetup::new(spec, chart, k_field, f_field)?.liouville_residual_at(point)
}

pub fn closedness_residual(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
) -> Result<f64, SympError> {
    SymplecticSetup::new(spec, chart, k_field, f_field)?.closedness_residual_at(point)
}

/// `|ω(k, v)|` for v in k^⊥ spacelike: zero certifies that surfaces tangent
/// to span{k, v} are ω-isotropic at the point.
pub fn lagrangian_residual(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    f_field: &str,
    point: &[f64],
    v: &[f64],
) -> Result<f64, SympError> {
    let dim = chart.dim();
    let g = metric_at(spec, chart, point)?;
    let k = field_value(spec, chart, k_field, point)?;
    let gkv = linalg::dot(&g.components, &k[..dim], &v[..dim], dim);
    if gkv.abs() >= 1e-10 {
        return Err(SympError::NotOrthogonal { gkv });
    }
    let gvv = linalg::dot(&g.components, &v[..dim], &v[..dim], dim);
    if gvv <= 0.0 {
        return Err(SympError::NotSpacelike { gvv });
    }
    let omega = omega_at(spec, chart, k_field, f_field, point)?;
    Ok(omega.contract(&k[..dim], &v[..dim]).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct ContactReport {
    /// The single independent component of θ ∧ dθ relative to the coordinate
    /// volume element.
    pub volume_factor: f64,
    /// Max-abs of `k ⌟ dθ`.
    pub reeb_residual_interior: f64,
    /// `|θ(k) − 1|`.
    pub reeb_residual_pairing: f64,
}

/// Contact-form and Reeb-field residuals for a unit timelike field on a
/// 3-dimensional spec, with `θ = −g(k,·)`.
pub fn contact_check_3d(
    spec: &SpacetimeSpec,
    chart: &Chart,
    k_field: &str,
    point: &[f64],
) -> Result<ContactReport, SympError> {
    let dim = chart.dim();
    if dim != 3 {
        return Err(SympError::WrongDimension {
            expected: 3,
            got: dim,
        });
    }
    let g = metric_at(spec, chart, point)?;
    let comps = chart
        .vector(k_field)
        .ok_or_else(|| GeomError::UnknownField {
            field: k_field.to_string(),
            chart: chart.name.clone(),
        })?;
    let k = field_value(spec, chart, k_field, point)?;
    let gkk = linalg::dot(&g.components, &k[..dim], &k[..dim], dim);
    if (gkk + 1.0).abs() > 1e-8 {
        return Err(SympError::NotUnitTimelike { gkk });
    }

    // θ_b = −g_bc k^c, symbolically
    let mut theta = Vec::with_capacity(dim);
    for b in 0..dim {
        let mut acc = Expr::zero();
        for c in 0..dim {
            acc = Expr::add(
                acc,
                Expr::mul(chart.metric_component(b, c).clone(), comps[c].clone()),
            );
        }
        theta.push(Expr::neg(acc));
    }
    let ctx = EvalCtx {
        point,
        params: spec.params(),
    };
    let tval: Vec<f64> = theta
        .iter()
        .map(|e| e.eval(&ctx).map_err(GeomError::Eval))
        .collect::<Result<_, _>>()?;
    let mut dtheta = [[0.0_f64; 3]; 3];
    for a in 0..dim {
        for b in a + 1..dim {
            let v = Expr::sub(theta[b].diff(a), theta[a].diff(b))
                .eval(&ctx)
                .map_err(GeomError::Eval)?;
            dtheta[a][b] = v;
            dtheta[b][a] = -v;
        }
    }
    let volume_factor = tval[0] * dtheta[1][2] - tval[1] * dtheta[0][2] + tval[2] * dtheta[0][1];
    let mut reeb_interior = 0.0_f64;
    for b in 0..dim {
        let mut acc = 0.0;
        for a in 0..dim {
            acc += k[a] * dtheta[a][b];
        }
        reeb_interior = reeb_interior.max(acc.abs());
    }
    let pairing: f64 = (0..dim).map(|b| tval[b] * k[b]).sum();
    Ok(ContactReport {
        volume_factor,
        reeb_residual_interior: reeb_interior,
        reeb_residual_pairing: (pairing - 1.0).abs(),
    })
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
  scalar f = t
  scalar fc = 1
";

    #[test]
    fn flat_omega_has_single_pair() {
        // α = e^t(−dt + dx), ω_tx = ∂_t α_x = e^t
        let spec = parse_spacetime(MINK).unwrap();
        let chart = &spec.charts[0];
        let p = [0.3, -0.2, 0.5, 0.9];
        let omega = omega_at(&spec, chart, "k", "f", &p).unwrap();
        let et = p[0].exp();
        assert!((omega.components[0][1] - et).abs() < 1e-12);
        assert!((omega.components[1][0] + et).abs() < 1e-12);
        for a in 0..4 {
            for b in 0..4 {
                if (a, b) != (0, 1) && (a, b) != (1, 0) {
                    assert_eq!(omega.components[a][b], 0.0, "({a},{b})");
                }
            }
        }
    }

    #[test]
    fn flat_pairings_and_degeneracy() {
        let spec = parse_spacetime(MINK).unwrap();
        let chart = &spec.charts[0];
        let p = [0.1, 0.0, 0.0, 0.0];
        let report = frame_pairings(&spec, chart, "k", "f", &p).unwrap();
        // ω(k, L) = −e^t with k(f) = k(t) = 1
        assert!((report.omega_kl + p[0].exp()).abs() < 1e-12);
        assert!(report.deg1_residual < 1e-12);
        assert!(report.deg2_residual < 1e-12);
        // parallel field: no twist, ω degenerate
        assert!(report.omega_xy.abs() < 1e-12);
        assert!(report.pfaffian.abs() < 1e-12);
        assert!(!report.nondegenerate);
        assert!((report.det_frame - report.pfaffian.powi(2)).abs() < 1e-12);
        // Liouville identity still holds pointwise
        assert!(report.liouville_residual.unwrap() < 1e-12);
    }

    #[test]
    fn constant_f_kills_the_kl_pairing() {
        let spec = parse_spacetime(MINK).unwrap();
        let chart = &spec.charts[0];
        let p = [0.4, 0.2, -0.1, 0.0];
        let setup = SymplecticSetup::new(&spec, chart, "k", "fc").unwrap();
        let report = setup.report_at(&p).unwrap();
        assert_eq!(report.kf, 0.0);
        assert!(report.omega_kl.abs() < 1e-12);
        assert!(report.liouville_residual.is_none());
        assert!(matches!(
            setup.liouville_residual_at(&p),
            Err(SympError::KfVanishes { .. })
        ));
    }

    #[test]
    fn closedness_holds_and_corruption_breaks_it() {
        // flat configurations keep many corruptions closed by accident, so
        // the mutation check runs on the rotating catalog entry
        let (spec, _) = crate::catalog::get_spacetime("kerr_fast", &[]).unwrap();
        let chart = &spec.charts[0];
        let p = [0.0, 1.0, std::f64::consts::FRAC_PI_4, 0.3];
        let good = SymplecticSetup::new(&spec, chart, "k", "f").unwrap();
        assert!(good.closedness_residual_at(&p).unwrap() < 1e-10);
        let bad = SymplecticSetup::new_corrupted(&spec, chart, "k", "f").unwrap();
        assert!(
            bad.closedness_residual_at(&p).unwrap() > 1e-3,
            "corrupted assembly must fail closedness"
        );
    }

    #[test]
    fn lagrangian_preconditions() {
        let spec = parse_spacetime(MINK).unwrap();
        let chart = &spec.charts[0];
        let p = [0.0; 4];
        // ∂_y is spacelike and orthogonal to k
        let r = lagrangian_residual(&spec, chart, "k", "f", &p, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(r < 1e-12);
        // L = (∂_t − ∂_x)/2 is not orthogonal to k
        let err = lagrangian_residual(&spec, chart, "k", "f", &p, &[0.5, -0.5, 0.0, 0.0])
            .unwrap_err();
        assert!(matches!(err, SympError::NotOrthogonal { .. }));
    }

    #[test]
    fn flat_contact_form_is_degenerate() {
        // θ = dt on flat Lorentzian R^3 is closed: volume factor 0
        let src = "\
spacetime flat3
dim 3
chart c
  coords t x y
  g t t = -1
  g x x = 1
  g y y = 1
  vector k = ( 1 , 0 , 0 )
  vector k2 = ( 2 , 0 , 0 )
";
        let spec = parse_spacetime(src).unwrap();
        let chart = &spec.charts[0];
        let p = [0.1, 0.2, 0.3];
        let report = contact_check_3d(&spec, chart, "k", &p).unwrap();
        assert_eq!(report.volume_factor, 0.0);
        assert!(report.reeb_residual_interior < 1e-15);
        assert!(report.reeb_residual_pairing < 1e-15);
        // scaled field fails the unit-timelike precondition
        assert!(matches!(
            contact_check_3d(&spec, chart, "k2", &p),
            Err(SympError::NotUnitTimelike { .. })
        ));
    }
}
