//! Construction and verification of exact symplectic forms built from null
//! vector fields on Lorentzian 3- and 4-manifolds.
//!
//! The crate provides:
//!
//! - a small metric-definition language ([`expr`], [`spec`]) with exact
//!   symbolic differentiation,
//! - pointwise geometry: metric, Levi-Civita connection, curvature, causal
//!   classification, Killing residuals ([`geometry`]),
//! - null frames and optical scalars (expansion, shear, twist) together with
//!   Raychaudhuri-equation residuals ([`optics`]),
//! - the 2-form `d(e^f k♭)` with nondegeneracy, Liouville, closedness, and
//!   3-d contact/Reeb checks ([`symplectic`]),
//! - integral-curve flows across chart atlases with event detection,
//!   completeness probes, and closed-orbit detection ([`flows`]),
//! - built-in spacetimes with validation manifests ([`catalog`]), and
//! - the check battery and scan machinery behind the CLI ([`checks`]).
//!
//! Grid scans and check batteries run data-parallel through rayon when the
//! default `parallel` feature is enabled; disabling it falls back to
//! sequential loops with identical results.

// tensor contractions read clearest as explicit index loops
#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod checks;
pub mod expr;
pub mod flows;
pub mod geometry;
pub mod linalg;
pub mod optics;
pub mod spec;
pub mod symplectic;

pub use expr::{EvalCtx, EvalError, Expr};
pub use spec::{parse_spacetime, Chart, SpacetimeSpec, SpecError};

/// Map a slice of inputs to outputs, in parallel when the `parallel` feature
/// is on. Output order always matches input order, so downstream reductions
/// are deterministic either way.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`map_ordered`]; the criterion benches compare the two.
pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
