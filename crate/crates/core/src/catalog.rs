//! Built-in spacetimes, each shipped as DSL source together with its
//! distinguished fields and the expected-property manifest asserted by
//! `check`.
//!
//! The two 3-sphere entries cover S³ with eight hemispherical charts (one
//! per sign of each ambient coordinate of R⁴, restricted away from the rim
//! so metric components stay bounded), with transitions through the ambient
//! embedding; no single hemisphere contains a full Hopf orbit, so flows
//! across these entries exercise chart handoff. The sources for them are
//! generated, not hand-written, but parse through the same pipeline as any
//! user file.

use crate::spec::{parse_spacetime, SpacetimeSpec, SpecError};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// One named check from an entry's validation manifest. `measured` in the
/// resulting report is always a max-abs residual over sampled points unless
/// noted otherwise.
#[derive(Debug, Clone)]
pub enum ManifestCheck {
    /// |g(k,k)| below tol at every sampled point.
    FieldNull { field: &'static str, tol: f64 },
    /// Max-abs of ∇_k k below tol.
    FieldGeodesic { field: &'static str, tol: f64 },
    /// Max |Ric_ab| below tol.
    RicciZero { tol: f64 },
    /// Twist squared below tol everywhere sampled.
    TwistZero { field: &'static str, tol: f64 },
    /// ι² matches 4 a² cos²θ / ρ⁴ to tol, relative.
    TwistClosedFormKerr { field: &'static str, tol: f64 },
    /// |k(scalar) − 1| below tol.
    ScalarUnitDirectional {
        field: &'static str,
        scalar: &'static str,
        tol: f64,
    },
    /// |Ric(k,k) − value| below tol.
    RicKkConstant {
        field: &'static str,
        value: f64,
        tol: f64,
    },
    /// |Ric(K,K) − 2 e^{−4r}| / (2 e^{−4r}) below tol.
    RicKkConformalKerr { field: &'static str, tol: f64 },
    /// Max-abs of the Killing residual (L_X g) below tol.
    KillingZero { field: &'static str, tol: f64 },
    /// |∇_a k^a| below tol.
    DivergenceZero { field: &'static str, tol: f64 },
    /// |g(k,k) − value| below tol.
    FieldNorm {
        field: &'static str,
        value: f64,
        tol: f64,
    },
    /// ι² below tol on equatorial points (θ = π/2).
    EquatorialTwistZero { field: &'static str, tol: f64 },
    /// θ ∧ dθ volume factor bounded away from zero: min > 0.1 median.
    ContactNondegenerate { field: &'static str },
    /// Both Reeb residuals below tol.
    ReebResiduals { field: &'static str, tol: f64 },
}

#[derive(Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub source: String,
    /// Distinguished null (or timelike, for 3-d entries) field.
    pub k_field: Option<&'static str>,
    /// Distinguished potential with k(f) nowhere zero.
    pub f_field: Option<&'static str>,
    /// Field expected to be a contact/Reeb field (3-d entries).
    pub contact_field: Option<&'static str>,
    /// Field with pregeodesic flow, when one ships with the entry.
    pub pregeodesic_field: Option<&'static str>,
    pub manifest: Vec<ManifestCheck>,
    pub notes: &'static str,
}

pub const NAMES: [&str; 6] = [
    "minkowski_cartesian",
    "minkowski_spherical",
    "kerr_fast",
    "kerr_conformal",
    "r_x_s3",
    "s3_lorentz_3d",
];

pub fn names() -> &'static [&'static str] {
    &NAMES
}

const MINKOWSKI_CARTESIAN: &str = "\
# Flat spacetime, Cartesian chart. The constant null field k has zero twist,
# so d(e^f k♭) is exact but everywhere degenerate.
spacetime minkowski_cartesian
dim 4
chart cart
  coords t x y z
  g t t = -1
  g x x = 1
  g y y = 1
  g z z = 1
  vector k = ( 1 , 1 , 0 , 0 )
  scalar f = t
  sample t -2 2
  sample x -2 2
  sample y -2 2
  sample z -2 2
";

const MINKOWSKI_SPHERICAL: &str = "\
# Flat spacetime in a spherical chart; the outgoing null congruence
# k = dt + dr expands with theta = 2/r and has no shear or twist.
spacetime minkowski_spherical
dim 4
chart sph
  coords t r theta phi
  g t t = -1
  g r r = 1
  g theta theta = r^2
  g phi phi = r^2*sin(theta)^2
  vector k = ( 1 , 1 , 0 , 0 )
  scalar f = t
  domain r > 0.000001
  domain sin(theta) > 0.000001
  sample t -2 2
  sample r 0.5 4
  sample theta 0.2 2.9
  sample phi 0 6.28
";

const KERR_FAST: &str = "\
# Rapidly rotating Kerr (a > m) in Boyer-Lindquist form: Delta has no real
# roots, so the chart covers all r. The ring set rho2 = 0 and the axis
# sin(theta) = 0 are excluded by domain margin. k is the outgoing principal
# null field; K = e^r k has pregeodesic flow with lambda = e^r.
spacetime kerr_fast
dim 4
param m = 1 require m > 0
param a = 2 require a > m
chart bl
  coords t r theta phi
  def rho2 = r^2 + a^2*cos(theta)^2
  def Delta = r^2 - 2*m*r + a^2
  g t t = -1 + 2*m*r/rho2
  g r r = rho2/Delta
  g theta theta = rho2
  g phi phi = (r^2 + a^2 + 2*m*r*a^2*sin(theta)^2/rho2)*sin(theta)^2
  g t phi = -2*m*r*a*sin(theta)^2/rho2
  vector k = ( (r^2 + a^2)/Delta , 1 , 0 , a/Delta )
  vector K = ( exp(r)*(r^2 + a^2)/Delta , exp(r) , 0 , exp(r)*a/Delta )
  vector dt = ( 1 , 0 , 0 , 0 )
  scalar f = r
  scalar f_t = t
  domain sin(theta) > 0.000001
  domain rho2 > 0.000001
  sample t -1 1
  sample r 0.5 5
  sample theta 0.05 1.45
  sample phi 0 6.28
  event ring = rho2 - 0.000001
";

const KERR_CONFORMAL: &str = "\
# Conformally rescaled Kerr, g~ = e^{2r} g, with K = e^{-2r} k. K is null
# and geodesic for g~ with Ric(K,K) = 2 e^{-4r} > 0, yet equatorial K-curves
# reach the ring set at finite parameter: the twist vanishes on the equator
# and d(e^f K♭) degenerates there for every f.
spacetime kerr_conformal
dim 4
param m = 1 require m > 0
param a = 2 require a > m
chart bl
  coords t r theta phi
  def rho2 = r^2 + a^2*cos(theta)^2
  def Delta = r^2 - 2*m*r + a^2
  def conf = exp(2*r)
  g t t = conf*(-1 + 2*m*r/rho2)
  g r r = conf*rho2/Delta
  g theta theta = conf*rho2
  g phi phi = conf*(r^2 + a^2 + 2*m*r*a^2*sin(theta)^2/rho2)*sin(theta)^2
  g t phi = -conf*2*m*r*a*sin(theta)^2/rho2
  vector K = ( (r^2 + a^2)/(Delta*conf) , 1/conf , 0 , a/(Delta*conf) )
  scalar f = r
  domain sin(theta) > 0.000001
  domain rho2 > 0.000001
  sample t -1 1
  sample r 0.1 2
  sample theta 0.05 3.09
  sample phi 0 6.28
  event ring = rho2 - 0.000001
";

/// Ambient coordinates of R⁴ carrying S³.
const AMBIENT: [&str; 4] = ["x1", "y1", "x2", "y2"];
/// The Hopf field in ambient components: k^{x1} = −y1, k^{y1} = x1,
/// k^{x2} = −y2, k^{y2} = x2.
const HOPF_PARTNER: [usize; 4] = [1, 0, 3, 2];
const HOPF_SIGN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
/// Hemisphere charts keep 1 − Σc² above this cut so metric components stay
/// bounded; the eight charts still cover S³ (some coordinate always has
/// square ≥ 1/4 > cut).
const S3_DOMAIN_CUT: f64 = 0.02;

fn chart_name(drop: usize, positive: bool) -> String {
    format!("{}{}", AMBIENT[drop], if positive { "p" } else { "m" })
}

/// Expression for the ambient Hopf component of kept coordinate `c` inside
/// the chart that drops coordinate `drop` with the given sign.
fn hopf_component(c: usize, drop: usize, positive: bool) -> String {
    let partner = HOPF_PARTNER[c];
    let mut sign = HOPF_SIGN[c];
    let body = if partner == drop {
        if !positive {
            sign = -sign;
        }
        "w".to_string()
    } else {
        AMBIENT[partner].to_string()
    };
    if sign < 0.0 {
        format!("0 - {}", body)
    } else {
        body
    }
}

/// Generate the eight-chart S³ atlas source; `with_time` prepends the R
/// factor with metric −dt². For the 3-d entry the metric is the Lorentzian
/// g~ = g° − 2 g°(k,·) ⊗ g°(k,·) in which the Hopf field k is unit timelike.
fn s3_atlas_source(with_time: bool) -> String {
    let mut out = String::new();
    if with_time {
        let _ = writeln!(
            out,
            "# Product of a time line with the unit round 3-sphere; the null field\n\
             # ktilde = d/dt + k rides the Hopf fibration, whose fibers close after 2 pi."
        );
        let _ = writeln!(out, "spacetime r_x_s3");
        let _ = writeln!(out, "dim 4");
    } else {
        let _ = writeln!(
            out,
            "# The unit 3-sphere with the Lorentzian metric that flips the sign of\n\
             # the Hopf direction; k is unit timelike, Killing, and geodesic."
        );
        let _ = writeln!(out, "spacetime s3_lorentz_3d");
        let _ = writeln!(out, "dim 3");
    }

    for drop in 0..4 {
        for &positive in &[true, false] {
            let spatial: Vec<&str> = (0..4)
                .filter(|&c| c != drop)
                .map(|c| AMBIENT[c])
                .collect();
            let _ = writeln!(out, "chart {}", chart_name(drop, positive));
            if with_time {
                let _ = writeln!(out, "  coords t {}", spatial.join(" "));
            } else {
                let _ = writeln!(out, "  coords {}", spatial.join(" "));
            }
            let [a, b, c] = [spatial[0], spatial[1], spatial[2]];
            let _ = writeln!(out, "  def w2 = 1 - {a}^2 - {b}^2 - {c}^2");
            let _ = writeln!(out, "  def w = sqrt(w2)");
            let kept: Vec<usize> = (0..4).filter(|&x| x != drop).collect();
            for (i, &kc) in kept.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "  def k{} = {}",
                    i + 1,
                    hopf_component(kc, drop, positive)
                );
            }
            if with_time {
                let _ = writeln!(out, "  g t t = -1");
                for (i, ci) in spatial.iter().enumerate() {
                    for (j, cj) in spatial.iter().enumerate().skip(i) {
                        if i == j {
                            let _ = writeln!(out, "  g {ci} {cj} = 1 + {ci}*{cj}/w2");
                        } else {
                            let _ = writeln!(out, "  g {ci} {cj} = {ci}*{cj}/w2");
                        }
                    }
                }
                let _ = writeln!(out, "  vector k = ( 0 , k1 , k2 , k3 )");
                let _ = writeln!(out, "  vector ktilde = ( 1 , k1 , k2 , k3 )");
                let _ = writeln!(out, "  scalar f = t");
            } else {
                // lowered Hopf field for the round metric: k♭_i = k_i + c_i (c·k)/w2
                let _ = writeln!(out, "  def pk = {a}*k1 + {b}*k2 + {c}*k3");
                for (i, ci) in spatial.iter().enumerate() {
                    let _ = writeln!(out, "  def kl{} = k{} + {}*pk/w2", i + 1, i + 1, ci);
                }
                for (i, ci) in spatial.iter().enumerate() {
                    for (j, cj) in spatial.iter().enumerate().skip(i) {
                        let delta = if i == j { "1 + " } else { "" };
                        let _ = writeln!(
                            out,
                            "  g {ci} {cj} = {delta}{ci}*{cj}/w2 - 2*kl{}*kl{}",
                            i + 1,
                            j + 1
                        );
                    }
                }
                let _ = writeln!(out, "  vector k = ( k1 , k2 , k3 )");
            }
            let _ = writeln!(out, "  domain w2 > {}", S3_DOMAIN_CUT);
            if with_time {
                let _ = writeln!(out, "  sample t -1 1");
            }
            for ci in &spatial {
                let _ = writeln!(out, "  sample {ci} -0.55 0.55");
            }
        }
    }

    // transitions between every pair of charts that drop different
    // coordinates; the reconstructed coordinate is s * w in source coords
    for drop_a in 0..4 {
        for &pos_a in &[true, false] {
            let spatial_a: Vec<&str> = (0..4)
                .filter(|&x| x != drop_a)
                .map(|x| AMBIENT[x])
                .collect();
            let w_expr = format!(
                "sqrt(1 - {}^2 - {}^2 - {}^2)",
                spatial_a[0], spatial_a[1], spatial_a[2]
            );
            let recon = if pos_a {
                w_expr.clone()
            } else {
                format!("0 - {}", w_expr)
            };
            for drop_b in 0..4 {
                if drop_b == drop_a {
                    continue;
                }
                for &pos_b in &[true, false] {
                    let _ = writeln!(
                        out,
                        "transition {} -> {}",
                        chart_name(drop_a, pos_a),
                        chart_name(drop_b, pos_b)
                    );
                    if with_time {
                        let _ = writeln!(out, "  map t = t");
                    }
                    for kc in (0..4).filter(|&x| x != drop_b) {
                        if kc == drop_a {
                            let _ = writeln!(out, "  map {} = {}", AMBIENT[kc], recon);
                        } else {
                            let _ = writeln!(out, "  map {} = {}", AMBIENT[kc], AMBIENT[kc]);
                        }
                    }
                    // overlap: the target's reconstructed coordinate must be
                    // comfortably signed in the source chart
                    if pos_b {
                        let _ = writeln!(out, "  overlap {} > 0.15", AMBIENT[drop_b]);
                    } else {
                        let _ = writeln!(out, "  overlap 0 - {} > 0.15", AMBIENT[drop_b]);
                    }
                }
            }
        }
    }
    out
}

pub fn entry(name: &str) -> Result<CatalogEntry, CatalogError> {
    match name {
        "minkowski_cartesian" => Ok(CatalogEntry {
            name: "minkowski_cartesian",
            source: MINKOWSKI_CARTESIAN.to_string(),
            k_field: Some("k"),
            f_field: Some("f"),
            contact_field: None,
            pregeodesic_field: None,
            manifest: vec![
                ManifestCheck::FieldNull { field: "k", tol: 1e-9 },
                ManifestCheck::FieldGeodesic { field: "k", tol: 1e-9 },
                ManifestCheck::RicciZero { tol: 1e-8 },
                ManifestCheck::TwistZero { field: "k", tol: 1e-9 },
            ],
            notes: "Flat control case: every identity holds with a degenerate 2-form.",
        }),
        "minkowski_spherical" => Ok(CatalogEntry {
            name: "minkowski_spherical",
            source: MINKOWSKI_SPHERICAL.to_string(),
            k_field: Some("k"),
            f_field: Some("f"),
            contact_field: None,
            pregeodesic_field: None,
            manifest: vec![
                ManifestCheck::FieldNull { field: "k", tol: 1e-9 },
                ManifestCheck::FieldGeodesic { field: "k", tol: 1e-9 },
                ManifestCheck::RicciZero { tol: 1e-8 },
                ManifestCheck::TwistZero { field: "k", tol: 1e-9 },
            ],
            notes: "Flat space in curvilinear coordinates; expansion theta = 2/r.",
        }),
        "kerr_fast" => Ok(CatalogEntry {
            name: "kerr_fast",
            source: KERR_FAST.to_string(),
            k_field: Some("k"),
            f_field: Some("f"),
            contact_field: None,
            pregeodesic_field: Some("K"),
            manifest: vec![
                ManifestCheck::FieldNull { field: "k", tol: 1e-9 },
                ManifestCheck::FieldGeodesic { field: "k", tol: 1e-9 },
                ManifestCheck::RicciZero { tol: 1e-8 },
                ManifestCheck::TwistClosedFormKerr { field: "k", tol: 1e-7 },
                ManifestCheck::ScalarUnitDirectional {
                    field: "k",
                    scalar: "f",
                    tol: 1e-10,
                },
            ],
            notes: "The Boyer-Lindquist cross term is g_tphi = -2 m r a sin^2(theta)/rho2 \
                    and the outgoing principal null field carries its angular component \
                    along d/dphi. Variant forms (a theta-t cross term with a single rho \
                    denominator, or an (a/Delta) d/dtheta leg on k) fail this manifest's \
                    Ricci-flatness and nullity checks and are not shipped.",
        }),
        "kerr_conformal" => Ok(CatalogEntry {
            name: "kerr_conformal",
            source: KERR_CONFORMAL.to_string(),
            k_field: Some("K"),
            f_field: Some("f"),
            contact_field: None,
            pregeodesic_field: None,
            manifest: vec![
                ManifestCheck::FieldNull { field: "K", tol: 1e-9 },
                ManifestCheck::FieldGeodesic { field: "K", tol: 1e-9 },
                ManifestCheck::RicKkConformalKerr { field: "K", tol: 1e-6 },
                ManifestCheck::EquatorialTwistZero { field: "K", tol: 1e-9 },
            ],
            notes: "Counterexample entry: positive Ricci along K and geodesic flow hold, \
                    completeness fails on the equator, and the 2-form degenerates there.",
        }),
        "r_x_s3" => Ok(CatalogEntry {
            name: "r_x_s3",
            source: s3_atlas_source(true),
            k_field: Some("ktilde"),
            f_field: Some("f"),
            contact_field: None,
            pregeodesic_field: None,
            manifest: vec![
                ManifestCheck::FieldNorm {
                    field: "k",
                    value: 1.0,
                    tol: 1e-9,
                },
                ManifestCheck::KillingZero { field: "k", tol: 1e-9 },
                ManifestCheck::DivergenceZero { field: "k", tol: 1e-9 },
                ManifestCheck::FieldNull {
                    field: "ktilde",
                    tol: 1e-9,
                },
                ManifestCheck::FieldGeodesic {
                    field: "ktilde",
                    tol: 1e-9,
                },
                ManifestCheck::RicKkConstant {
                    field: "ktilde",
                    value: 2.0,
                    tol: 1e-8,
                },
            ],
            notes: "Positive-curvature example: Ric(ktilde, ktilde) = 2 everywhere, so \
                    d(e^t ktilde♭) is symplectic on the whole product.",
        }),
        "s3_lorentz_3d" => Ok(CatalogEntry {
            name: "s3_lorentz_3d",
            source: s3_atlas_source(false),
            k_field: Some("k"),
            f_field: None,
            contact_field: Some("k"),
            pregeodesic_field: None,
            manifest: vec![
                ManifestCheck::FieldNorm {
                    field: "k",
                    value: -1.0,
                    tol: 1e-9,
                },
                ManifestCheck::KillingZero { field: "k", tol: 1e-9 },
                ManifestCheck::ContactNondegenerate { field: "k" },
                ManifestCheck::ReebResiduals { field: "k", tol: 1e-8 },
            ],
            notes: "Closed 3-manifold contact case: -g(k,·) is a contact form with Reeb \
                    field k, and every Hopf fiber is a closed orbit of period 2 pi.",
        }),
        other => Err(CatalogError::UnknownName(other.to_string())),
    }
}

/// Parse a catalog entry, apply parameter overrides, recheck constraints.
pub fn get_spacetime(
    name: &str,
    overrides: &[(String, f64)],
) -> Result<(SpacetimeSpec, CatalogEntry), CatalogError> {
    let e = entry(name)?;
    let spec = parse_spacetime(&e.source)?.with_params(overrides)?;
    Ok((spec, e))
}
