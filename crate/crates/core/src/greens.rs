//! Outgoing Green's function of the two-layer attenuated Helmholtz operator,
//! the frequency-domain forward map, and multi-frequency boundary data.
//!
//! With `κ_p = κ(c_p ω, α)` and `κ_n = κ(c_n ω, α)` the kernel solves
//! `G'' + κ(x)² G = -δ(x - y)` with outgoing behavior at `±∞`. For a source
//! point in the positive layer (`y ≥ 0`) it is the free-space kernel plus one
//! interface reflection, and a transmitted wave in the other layer:
//!
//! ```text
//!   x ≥ 0:  i/(2κ_p) e^{iκ_p|x-y|} + i(κ_p-κ_n)/(2κ_p(κ_p+κ_n)) e^{iκ_p(x+y)}
//!   x < 0:  i/(κ_p+κ_n) e^{i(κ_p y - κ_n x)}
//! ```
//!
//! and for `y < 0` the mirror image (swap layers, flip signs of `x`, `y`).
//! The reflection and transmission coefficients `(κ_p-κ_n)/(κ_p+κ_n)` and
//! `2κ_p/(κ_p+κ_n)` make the kernel C⁰ at the interface and C⁰ across
//! `x = y` with the correct derivative jump.
//!
//! The forward field is the superposition
//!
//! ```text
//!   u(x, ω) = ∫_{-1}^{1} G(x, y) · (f1 + α f0 - i k(y) f0)(y) dy,
//! ```
//!
//! whose source multiplier carries the sign that makes `u` solve
//! `u'' + (k² + iαk) u = -f1 - α f0 + i k f0` exactly; this is pinned by an
//! independent finite-difference radiating solve (see `tests/field_oracles`)
//! and by the time-domain Fourier identity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{layer_wavenumbers, MediumConfig};
use crate::quad::trapezoid_weights;
use crate::sources::{SourceGrid, SourcePair};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Piecewise outgoing Green's function `G(x, y)` at angular frequency
/// `ω > 0`. Both points must lie in `[-1, 1]`; the interface point is
/// assigned to the positive layer (matching the source splitting).
pub fn green(cfg: &MediumConfig, omega: f64, x: f64, y: f64) -> Result<Complex64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidFrequencies(format!(
            "green requires omega > 0, got {omega}"
        )));
    }
    if !(x.is_finite() && y.is_finite()) || x.abs() > 1.0 || y.abs() > 1.0 {
        return Err(Error::OutsideDomain(format!("(x, y) = ({x}, {y})")));
    }
    let (kp, kn) = layer_wavenumbers(cfg, omega);
    let (kp, kn) = (kp.kappa, kn.kappa);
    Ok(green_kernel(kp, kn, x, y))
}

/// Kernel in terms of the layer wavenumbers (used by `green` and the tests
/// that probe branch limits directly).
pub(crate) fn green_kernel(kp: Complex64, kn: Complex64, x: f64, y: f64) -> Complex64 {
    let sum = kp + kn;
    if y >= 0.0 {
        if x >= 0.0 {
            let free = I / (2.0 * kp) * (I * kp * (x - y).abs()).exp();
            let refl = I * (kp - kn) / (2.0 * kp * sum) * (I * kp * (x + y)).exp();
            free + refl
        } else {
            I / sum * (I * (kp * y - kn * x)).exp()
        }
    } else if x <= 0.0 {
        let free = I / (2.0 * kn) * (I * kn * (x - y).abs()).exp();
        let refl = I * (kn - kp) / (2.0 * kn * sum) * (-I * kn * (x + y)).exp();
        free + refl
    } else {
        I / sum * (I * (kp * x - kn * y)).exp()
    }
}

/// Source multiplier `g(y) = f1(y) + (α - i k(y)) f0(y)`, the right-hand side
/// fed through the kernel (see the module docs for the sign convention).
fn source_multiplier(cfg: &MediumConfig, omega: f64, y: f64, f0: f64, f1: f64) -> Complex64 {
    let k_layer = cfg.c_at(y) * omega;
    Complex64::new(f1 + cfg.alpha * f0, -k_layer * f0)
}

/// Forward field `u(x, ω)` by trapezoidal quadrature of the kernel against
/// the source multiplier over the full interval `(-1, 1)`.
pub fn forward_field(
    cfg: &MediumConfig,
    grid: &SourceGrid,
    sp: &SourcePair,
    omega: f64,
    x: f64,
) -> Result<Complex64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidFrequencies(format!(
            "forward_field requires omega > 0, got {omega}"
        )));
    }
    if !x.is_finite() || x.abs() > 1.0 {
        return Err(Error::OutsideDomain(format!("x = {x}")));
    }
    let (kp, kn) = layer_wavenumbers(cfg, omega);
    let (kp, kn) = (kp.kappa, kn.kappa);
    let h = grid.h();
    let n = grid.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let yj = grid.node(j);
        let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
        let g = source_multiplier(cfg, omega, yj, sp.f0[j], sp.f1[j]);
        acc += w * green_kernel(kp, kn, x, yj) * g;
    }
    Ok(acc)
}

/// Boundary kernel `ω G(-1, y)` written out as the explicit exponential
/// representation (transmitted wave for sources in the positive layer,
/// reflected + free-space waves for sources in the negative layer). Kept as
/// an independent transcription from [`green`] so the two routes to the
/// boundary data cross-check each other.
pub fn kernel_minus(cfg: &MediumConfig, omega: f64, y: f64) -> Complex64 {
    let (kp, kn) = layer_wavenumbers(cfg, omega);
    let (kp, kn) = (kp.kappa, kn.kappa);
    let sum = kp + kn;
    if y >= 0.0 {
        I * omega / sum * (I * (kp * y + kn)).exp()
    } else {
        I * omega * (kn - kp) / (2.0 * kn * sum) * (I * kn * (1.0 - y)).exp()
            + I * omega / (2.0 * kn) * (I * kn * (1.0 + y)).exp()
    }
}

/// Boundary kernel `ω G(1, y)`, the mirror of [`kernel_minus`].
pub fn kernel_plus(cfg: &MediumConfig, omega: f64, y: f64) -> Complex64 {
    let (kp, kn) = layer_wavenumbers(cfg, omega);
    let (kp, kn) = (kp.kappa, kn.kappa);
    let sum = kp + kn;
    if y >= 0.0 {
        I * omega * (kp - kn) / (2.0 * kp * sum) * (I * kp * (1.0 + y)).exp()
            + I * omega / (2.0 * kp) * (I * kp * (1.0 - y)).exp()
    } else {
        I * omega / sum * (I * (kp - kn * y)).exp()
    }
}

/// Multi-frequency boundary dataset: samples of `ω u(∓1, ω)` on an
/// increasing grid over `(0, K]`, together with the data energy
/// `ε² = ∫ (|ω u(-1,ω)|² + |ω u(1,ω)|²) dω` (trapezoid on the stored grid)
/// and `E = -ln ε` when defined.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDataset {
    pub medium: MediumConfig,
    pub omegas: Vec<f64>,
    pub d_minus: Vec<Complex64>,
    pub d_plus: Vec<Complex64>,
    pub k_max: f64,
    pub epsilon2: f64,
    /// `E = -ln ε = -½ ln ε²`, defined only for `0 < ε² < 1`.
    pub e_value: Option<f64>,
}

/// Sidecar metadata serialized next to the dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSidecar {
    #[serde(rename = "K")]
    pub k_max: f64,
    pub epsilon2: f64,
    #[serde(rename = "E")]
    pub e_value: Option<f64>,
    pub medium: MediumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

/// Uniform frequency grid on `(0, K]`: `ω_i = K (i+1) / count`.
pub fn omega_grid(k_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(k_max.is_finite() && k_max > 0.0) {
        return Err(Error::InvalidFrequencies(format!("K must be > 0, got {k_max}")));
    }
    if count < 2 {
        return Err(Error::InvalidFrequencies(format!(
            "need at least 2 frequency nodes, got {count}"
        )));
    }
    Ok((0..count)
        .map(|i| k_max * (i as f64 + 1.0) / count as f64)
        .collect())
}

/// Smallest odd node count giving at least 20 quadrature nodes per
/// wavelength at the largest frequency (`λ = 2π / (c_max K)`), floored at the
/// grid minimum.
pub fn min_grid_points(c_max: f64, k_max: f64) -> usize {
    let needed = (20.0 * c_max * k_max / std::f64::consts::PI).ceil() as usize + 1;
    let needed = needed.max(crate::sources::MIN_GRID_POINTS);
    if needed % 2 == 0 {
        needed + 1
    } else {
        needed
    }
}

/// Smallest frequency count keeping the grid spacing `K/count` at or below
/// `π/(4 c_max)` (a quarter period of the fastest data oscillation), floored
/// at 16 nodes.
pub fn min_omega_count(c_max: f64, k_max: f64) -> usize {
    ((4.0 * c_max * k_max / std::f64::consts::PI).ceil() as usize).max(16)
}

/// Per-sample quadrature weights for energies `∫₀^K |d|² dω`: trapezoid on
/// the grid extended by a closing node at `ω = 0`, where the integrand
/// `|ω u|²` vanishes. All data-space norms (`ε²`, noise calibration, the
/// weighted inversion residual) share these weights.
pub fn energy_weights(omegas: &[f64]) -> Vec<f64> {
    let mut xs = Vec::with_capacity(omegas.len() + 1);
    xs.push(0.0);
    xs.extend_from_slice(omegas);
    trapezoid_weights(&xs)[1..].to_vec()
}

/// Data energy `∫₀^K (|d₋|² + |d₊|²) dω` using [`energy_weights`].
pub fn data_energy(omegas: &[f64], d_minus: &[Complex64], d_plus: &[Complex64]) -> f64 {
    let w = energy_weights(omegas);
    let mut acc = 0.0;
    for i in 0..omegas.len() {
        acc += w[i] * (d_minus[i].norm_sqr() + d_plus[i].norm_sqr());
    }
    acc
}

fn e_of_eps2(epsilon2: f64) -> Option<f64> {
    if epsilon2 > 0.0 && epsilon2 < 1.0 {
        Some(-0.5 * epsilon2.ln())
    } else {
        None
    }
}

impl BoundaryDataset {
    /// Assemble a dataset from raw samples, recomputing `ε²` and `E`.
    pub fn from_samples(
        medium: MediumConfig,
        omegas: Vec<f64>,
        d_minus: Vec<Complex64>,
        d_plus: Vec<Complex64>,
    ) -> Result<Self> {
        validate_omegas(&omegas)?;
        if d_minus.len() != omegas.len() || d_plus.len() != omegas.len() {
            return Err(Error::InvalidFrequencies(
                "data length does not match frequency grid".into(),
            ));
        }
        let k_max = *omegas.last().unwrap();
        let epsilon2 = data_energy(&omegas, &d_minus, &d_plus);
        let e_value = e_of_eps2(epsilon2);
        Ok(Self {
            medium,
            omegas,
            d_minus,
            d_plus,
            k_max,
            epsilon2,
            e_value,
        })
    }

    /// Refresh `ε²`/`E` after mutating the samples (noise injection).
    pub fn recompute_energy(&mut self) {
        self.epsilon2 = data_energy(&self.omegas, &self.d_minus, &self.d_plus);
        self.e_value = e_of_eps2(self.epsilon2);
    }

    /// Write samples as CSV (`omega,re_dminus,im_dminus,re_dplus,im_dplus`).
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega,re_dminus,im_dminus,re_dplus,im_dplus")?;
        for i in 0..self.omegas.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.omegas[i],
                self.d_minus[i].re,
                self.d_minus[i].im,
                self.d_plus[i].re,
                self.d_plus[i].im
            )?;
        }
        Ok(())
    }

    /// Sidecar metadata for this dataset.
    pub fn sidecar(&self) -> DatasetSidecar {
        DatasetSidecar {
            k_max: self.k_max,
            epsilon2: self.epsilon2,
            e_value: self.e_value,
            medium: self.medium,
            config_sha256: None,
        }
    }

    /// Rebuild a dataset from its CSV and sidecar. The stored `ε²` must match
    /// the trapezoid of the samples (loose 1e-6 relative guard against
    /// mismatched files).
    pub fn read_csv<R: std::io::BufRead>(input: R, sidecar: &DatasetSidecar) -> Result<Self> {
        let mut omegas = Vec::new();
        let mut d_minus = Vec::new();
        let mut d_plus = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != "omega,re_dminus,im_dminus,re_dplus,im_dplus" {
                    return Err(Error::Parse(format!("unexpected header '{trimmed}'")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut vals = [0.0; 5];
            for (slot, field) in vals.iter_mut().zip(fields.iter()) {
                *slot = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            }
            omegas.push(vals[0]);
            d_minus.push(Complex64::new(vals[1], vals[2]));
            d_plus.push(Complex64::new(vals[3], vals[4]));
        }
        let ds = Self::from_samples(sidecar.medium, omegas, d_minus, d_plus)?;
        let scale = ds.epsilon2.abs().max(sidecar.epsilon2.abs()).max(1e-300);
        if (ds.epsilon2 - sidecar.epsilon2).abs() / scale > 1e-6 {
            return Err(Error::Parse(format!(
                "sidecar epsilon2 {} disagrees with samples ({})",
                sidecar.epsilon2, ds.epsilon2
            )));
        }
        if (ds.k_max - sidecar.k_max).abs() > 1e-9 * sidecar.k_max.abs().max(1.0) {
            return Err(Error::Parse(format!(
                "sidecar K {} disagrees with grid end {}",
                sidecar.k_max, ds.k_max
            )));
        }
        Ok(ds)
    }
}

fn validate_omegas(omegas: &[f64]) -> Result<()> {
    if omegas.len() < 2 {
        return Err(Error::InvalidFrequencies(
            "need at least 2 frequency nodes".into(),
        ));
    }
    let mut prev = 0.0;
    for &w in omegas {
        if !(w.is_finite() && w > prev) {
            return Err(Error::InvalidFrequencies(format!(
                "grid must be strictly increasing and positive (saw {w} after {prev})"
            )));
        }
        prev = w;
    }
    Ok(())
}

/// Boundary data `ω u(±1, ω)` on a frequency grid, from the explicit
/// exponential kernels (`kernel_minus`/`kernel_plus`) applied to the split
/// source by trapezoidal quadrature.
///
/// Frequencies are evaluated independently of one another (no shared mutable
/// state), so callers may shard the grid across threads; results here are
/// assembled in grid order.
pub fn boundary_data(
    cfg: &MediumConfig,
    grid: &SourceGrid,
    sp: &SourcePair,
    omegas: &[f64],
) -> Result<BoundaryDataset> {
    validate_omegas(omegas)?;
    if sp.f0.len() != grid.len() || sp.f1.len() != grid.len() {
        return Err(Error::InvalidSource(
            "source samples do not match grid".into(),
        ));
    }
    let h = grid.h();
    let n = grid.len();
    let mut d_minus = Vec::with_capacity(omegas.len());
    let mut d_plus = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut dm = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let yj = grid.node(j);
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            let g = source_multiplier(cfg, omega, yj, sp.f0[j], sp.f1[j]);
            dm += w * kernel_minus(cfg, omega, yj) * g;
            dp += w * kernel_plus(cfg, omega, yj) * g;
        }
        d_minus.push(dm);
        d_plus.push(dp);
    }
    BoundaryDataset::from_samples(*cfg, omegas.to_vec(), d_minus, d_plus)
}
