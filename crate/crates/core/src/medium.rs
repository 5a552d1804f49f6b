//! Two-layer medium description and the complex attenuated wavenumber.
//!
//! The positive layer `x > 0` carries the slowness coefficient `c_p`, the
//! negative layer `x < 0` carries `c_n`, and the real layer wavenumbers at
//! angular frequency `ω` are `k_p = c_p ω`, `k_n = c_n ω`. Attenuation enters
//! through
//!
//! ```text
//!     κ(k, α) = (k² + i α k)^{1/2},   Re κ ≥ 0,  Im κ ≥ 0,
//! ```
//!
//! the branch that keeps `e^{iκ|x|}` outgoing and decaying. For `k ≥ 0` the
//! radicand `k² + iαk` lies in the closed upper half plane, so the principal
//! square root lands in the first quadrant and realizes exactly this branch.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-layer medium: slowness coefficients for each layer plus attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    /// Slowness coefficient of the positive layer (`x > 0`), `> 0`.
    pub c_p: f64,
    /// Slowness coefficient of the negative layer (`x < 0`), `> 0`.
    pub c_n: f64,
    /// Attenuation `α ≥ 0`.
    pub alpha: f64,
}

impl MediumConfig {
    /// Validated constructor: both slowness coefficients must be positive
    /// and finite, attenuation nonnegative and finite.
    pub fn new(c_p: f64, c_n: f64, alpha: f64) -> Result<Self> {
        if !(c_p.is_finite() && c_p > 0.0) {
            return Err(Error::InvalidMedium(format!("c_p must be > 0, got {c_p}")));
        }
        if !(c_n.is_finite() && c_n > 0.0) {
            return Err(Error::InvalidMedium(format!("c_n must be > 0, got {c_n}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidMedium(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        Ok(Self { c_p, c_n, alpha })
    }

    /// Larger of the two slowness coefficients.
    pub fn c_max(&self) -> f64 {
        self.c_p.max(self.c_n)
    }

    /// Smaller of the two slowness coefficients.
    pub fn c_min(&self) -> f64 {
        self.c_p.min(self.c_n)
    }

    /// Layer-local slowness coefficient; the interface point `y = 0` is
    /// assigned to the positive layer, matching the source splitting
    /// convention.
    pub fn c_at(&self, y: f64) -> f64 {
        if y >= 0.0 {
            self.c_p
        } else {
            self.c_n
        }
    }

    /// True when both layers carry the same coefficient.
    pub fn is_homogeneous(&self) -> bool {
        self.c_p == self.c_n
    }
}

/// A real wavenumber together with its attenuated complex counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexWavenumber {
    /// Real wavenumber `k ≥ 0`.
    pub k: f64,
    /// `κ = (k² + iαk)^{1/2}` on the first-quadrant branch.
    pub kappa: Complex64,
}

/// Complex attenuated wavenumber `κ(k, α)` with `Re κ ≥ 0`, `Im κ ≥ 0`.
///
/// `κ(0, α) = 0` by continuity. Panics on negative `k` or `alpha`; those are
/// programming errors, not data errors (frequency grids are validated before
/// they reach this level).
pub fn kappa_of(k: f64, alpha: f64) -> ComplexWavenumber {
    assert!(k >= 0.0, "kappa_of requires k >= 0, got {k}");
    assert!(alpha >= 0.0, "kappa_of requires alpha >= 0, got {alpha}");
    let kappa = Complex64::new(k * k, alpha * k).sqrt();
    ComplexWavenumber { k, kappa }
}

/// Layer wavenumbers `(κ_p, κ_n)` of the medium at angular frequency `ω > 0`,
/// built from the real layer wavenumbers `k_p = c_p ω` and `k_n = c_n ω`.
pub fn layer_wavenumbers(cfg: &MediumConfig, omega: f64) -> (ComplexWavenumber, ComplexWavenumber) {
    assert!(omega > 0.0, "layer_wavenumbers requires omega > 0, got {omega}");
    (
        kappa_of(cfg.c_p * omega, cfg.alpha),
        kappa_of(cfg.c_n * omega, cfg.alpha),
    )
}
