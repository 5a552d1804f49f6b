//! Source grids, smooth bump sources, layer splitting and discrete norms.
//!
//! Sources live on a uniform grid over `[-1, 1]` with an odd number of nodes
//! so that one node sits exactly at the interface `x = 0`. A source pair
//! `(f0, f1)` must vanish within a positive margin of both endpoints; that
//! margin is what keeps boundary quadrature clean (the integrands are then
//! compactly supported inside the interval) and defines the support mask used
//! by the inversion.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::trapezoid_uniform;

/// Default support margin used by demo configs and the inversion mask.
pub const DEFAULT_SUPPORT_MARGIN: f64 = 0.1;

/// Smallest admissible node count.
pub const MIN_GRID_POINTS: usize = 33;

/// Uniform grid on `[-1, 1]` with an odd number of nodes `n ≥ 33`.
///
/// Nodes are computed as `x_j = (2j - (n-1)) / (n-1)`, which makes the
/// midpoint land on exactly `0.0` and the endpoints on exactly `±1.0` in
/// floating point for every odd `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceGrid {
    n: usize,
}

impl SourceGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_GRID_POINTS || n % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid needs an odd node count >= {MIN_GRID_POINTS}, got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing `h = 2 / (n - 1)`.
    pub fn h(&self) -> f64 {
        2.0 / (self.n as f64 - 1.0)
    }

    /// `j`-th node; `node((n-1)/2) == 0.0` exactly.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j < self.n);
        (2.0 * j as f64 - (self.n as f64 - 1.0)) / (self.n as f64 - 1.0)
    }

    /// All nodes in increasing order.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Index of the interface node `x = 0`.
    pub fn zero_index(&self) -> usize {
        (self.n - 1) / 2
    }
}

/// One polynomial bump `a (1 - ((x-c)/w)^2)^3`, supported on `|x - c| < w`.
///
/// The profile is C²: value, first and second derivative all vanish at the
/// support edge, so the bump lies in the discrete H² class used by the
/// stability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.width;
        if t.abs() < 1.0 {
            let q = 1.0 - t * t;
            self.amplitude * q * q * q
        } else {
            0.0
        }
    }
}

/// Bump lists for each source component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpSpec {
    pub f0: Vec<Bump>,
    pub f1: Vec<Bump>,
}

impl BumpSpec {
    pub fn eval_f0(&self, x: f64) -> f64 {
        self.f0.iter().map(|b| b.eval(x)).sum()
    }

    pub fn eval_f1(&self, x: f64) -> f64 {
        self.f1.iter().map(|b| b.eval(x)).sum()
    }
}

/// Sampled source pair on a [`SourceGrid`], with the support margin within
/// which both components vanish near `x = ±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePair {
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    /// Positive margin `δ` such that `f0 = f1 = 0` on `[-1, -1+δ]` and
    /// `[1-δ, 1]` (as sampled).
    pub support_margin: f64,
}

impl SourcePair {
    /// Build a pair from raw samples, deriving the support margin from the
    /// outermost nonzero samples. Fails when a component reaches the
    /// boundary (margin would be zero).
    pub fn from_samples(grid: &SourceGrid, f0: Vec<f64>, f1: Vec<f64>) -> Result<Self> {
        if f0.len() != grid.len() || f1.len() != grid.len() {
            return Err(Error::InvalidSource(format!(
                "sample length mismatch: grid {} vs f0 {} / f1 {}",
                grid.len(),
                f0.len(),
                f1.len()
            )));
        }
        if f0.iter().chain(f1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSource("non-finite sample".into()));
        }
        let margin = support_margin_of(grid, &f0, &f1)?;
        Ok(Self {
            f0,
            f1,
            support_margin: margin,
        })
    }

    /// Zero pair (used by pure-noise experiments).
    pub fn zero(grid: &SourceGrid) -> Self {
        Self {
            f0: vec![0.0; grid.len()],
            f1: vec![0.0; grid.len()],
            support_margin: 1.0,
        }
    }

    /// Linear interpolation of `f0` at an arbitrary point (zero outside the
    /// grid). Used when resampling initial data onto a finer wave grid;
    /// the O(h²) interpolation error is far below the solver's own error.
    pub fn interp_f0(&self, grid: &SourceGrid, x: f64) -> f64 {
        interp_linear(grid, &self.f0, x)
    }

    /// Linear interpolation of `f1` at an arbitrary point.
    pub fn interp_f1(&self, grid: &SourceGrid, x: f64) -> f64 {
        interp_linear(grid, &self.f1, x)
    }

    /// Write as CSV with header `x,f0,f1`. Extra leading comment lines may be
    /// prepended by the caller; see `from_csv`.
    pub fn to_csv<W: Write>(&self, grid: &SourceGrid, mut out: W) -> Result<()> {
        writeln!(out, "x,f0,f1")?;
        for j in 0..grid.len() {
            writeln!(out, "{},{},{}", grid.node(j), self.f0[j], self.f1[j])?;
        }
        Ok(())
    }

    /// Read a pair from CSV (`x,f0,f1` header, rows in increasing x on a
    /// uniform odd grid over [-1, 1]). Leading `#` comment lines are skipped.
    pub fn from_csv<R: BufRead>(input: R) -> Result<(SourceGrid, SourcePair)> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != "x,f0,f1" {
                    return Err(Error::Parse(format!(
                        "expected header 'x,f0,f1', got '{trimmed}'"
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        if !saw_header {
            return Err(Error::Parse("missing 'x,f0,f1' header".into()));
        }
        let grid = SourceGrid::new(rows.len())?;
        for (j, row) in rows.iter().enumerate() {
            if (row.0 - grid.node(j)).abs() > 1e-9 {
                return Err(Error::Parse(format!(
                    "row {j}: x = {} does not match uniform node {}",
                    row.0,
                    grid.node(j)
                )));
            }
        }
        let f0 = rows.iter().map(|r| r.1).collect();
        let f1 = rows.iter().map(|r| r.2).collect();
        let pair = SourcePair::from_samples(&grid, f0, f1)?;
        Ok((grid, pair))
    }
}

fn interp_linear(grid: &SourceGrid, values: &[f64], x: f64) -> f64 {
    if x <= -1.0 || x >= 1.0 {
        return 0.0;
    }
    let h = grid.h();
    let pos = (x + 1.0) / h;
    let j = (pos.floor() as usize).min(grid.len() - 2);
    let frac = pos - j as f64;
    values[j] * (1.0 - frac) + values[j + 1] * frac
}

fn support_margin_of(grid: &SourceGrid, f0: &[f64], f1: &[f64]) -> Result<f64> {
    let n = grid.len();
    let nonzero = |j: usize| f0[j] != 0.0 || f1[j] != 0.0;
    let first = (0..n).find(|&j| nonzero(j));
    let last = (0..n).rev().find(|&j| nonzero(j));
    match (first, last) {
        (None, None) => Ok(1.0),
        (Some(first), Some(last)) => {
            if first == 0 || last == n - 1 {
                return Err(Error::InvalidSource(
                    "source does not vanish at the boundary".into(),
                ));
            }
            // Largest δ with all nodes in [-1, -1+δ] (resp. [1-δ, 1]) zero:
            // the band may reach up to the last all-zero node.
            let left = grid.node(first - 1) + 1.0;
            let right = 1.0 - grid.node(last + 1);
            let margin = left.min(right);
            if margin <= 0.0 {
                return Err(Error::InvalidSource(
                    "support margin must be positive".into(),
                ));
            }
            Ok(margin)
        }
        _ => unreachable!(),
    }
}

/// Sample a bump specification onto a grid. Every bump must satisfy
/// `|center| + width < 1` so the pair stays strictly inside the interval.
pub fn make_bump_pair(grid: &SourceGrid, spec: &BumpSpec) -> Result<SourcePair> {
    for b in spec.f0.iter().chain(spec.f1.iter()) {
        if !(b.width > 0.0 && b.width.is_finite()) {
            return Err(Error::InvalidSource(format!(
                "bump width must be > 0, got {}",
                b.width
            )));
        }
        if !b.amplitude.is_finite() || !b.center.is_finite() {
            return Err(Error::InvalidSource("non-finite bump parameter".into()));
        }
        if b.center.abs() + b.width >= 1.0 {
            return Err(Error::InvalidSource(format!(
                "bump [c={}, w={}] reaches the boundary (|c|+w must be < 1)",
                b.center, b.width
            )));
        }
    }
    let f0: Vec<f64> = (0..grid.len()).map(|j| spec.eval_f0(grid.node(j))).collect();
    let f1: Vec<f64> = (0..grid.len()).map(|j| spec.eval_f1(grid.node(j))).collect();
    // Margin from geometry (sampling can only widen the zero bands).
    let geo = spec
        .f0
        .iter()
        .chain(spec.f1.iter())
        .map(|b| 1.0 - (b.center.abs() + b.width))
        .fold(1.0_f64, f64::min);
    Ok(SourcePair {
        f0,
        f1,
        support_margin: geo,
    })
}

/// Layer-wise splitting of a source pair. The interface node `x = 0` is
/// assigned to the positive part; the split is an exact partition
/// (`f0p + f0n == f0` bitwise, since each node value is copied, not summed).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSplitting {
    pub f0p: Vec<f64>,
    pub f0n: Vec<f64>,
    pub f1p: Vec<f64>,
    pub f1n: Vec<f64>,
}

pub fn split(grid: &SourceGrid, sp: &SourcePair) -> SourceSplitting {
    let n = grid.len();
    let mut s = SourceSplitting {
        f0p: vec![0.0; n],
        f0n: vec![0.0; n],
        f1p: vec![0.0; n],
        f1n: vec![0.0; n],
    };
    for j in 0..n {
        if grid.node(j) >= 0.0 {
            s.f0p[j] = sp.f0[j];
            s.f1p[j] = sp.f1[j];
        } else {
            s.f0n[j] = sp.f0[j];
            s.f1n[j] = sp.f1[j];
        }
    }
    s
}

/// First derivative by central differences (one-sided at the endpoints).
pub fn diff1(grid: &SourceGrid, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h = grid.h();
    let mut d = vec![0.0; n];
    d[0] = (f[1] - f[0]) / h;
    d[n - 1] = (f[n - 1] - f[n - 2]) / h;
    for j in 1..n - 1 {
        d[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
    }
    d
}

/// Second derivative by the three-point stencil (endpoint values copied from
/// their neighbors; sources vanish there by the margin invariant).
pub fn diff2(grid: &SourceGrid, f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h2 = grid.h() * grid.h();
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        d[j] = (f[j + 1] - 2.0 * f[j] + f[j - 1]) / h2;
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    d
}

/// Discrete Sobolev norm `(Σ_{j=0..l} ||D^j f||²_{L²})^{1/2}` for `l ≤ 2`,
/// with derivatives by central differences and the trapezoidal rule for the
/// L² pieces. Second-order accurate in the grid spacing.
pub fn sobolev_norm(grid: &SourceGrid, f: &[f64], l: usize) -> f64 {
    assert!(l <= 2, "sobolev_norm supports l in 0..=2, got {l}");
    assert_eq!(f.len(), grid.len(), "sample length mismatch");
    let l2sq = |v: &[f64]| {
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        trapezoid_uniform(grid.h(), &sq)
    };
    let mut acc = l2sq(f);
    if l >= 1 {
        acc += l2sq(&diff1(grid, f));
    }
    if l >= 2 {
        acc += l2sq(&diff2(grid, f));
    }
    acc.sqrt()
}

/// A-priori size constant `M = max(||f0||_(2) + ||f1||_(1), 1)`; always `≥ 1`.
pub fn constant_m(grid: &SourceGrid, sp: &SourcePair) -> f64 {
    (sobolev_norm(grid, &sp.f0, 2) + sobolev_norm(grid, &sp.f1, 1)).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn demo_spec() -> BumpSpec {
        BumpSpec {
            f0: vec![
                Bump { center: -0.45, width: 0.3, amplitude: 1.0 },
                Bump { center: 0.4, width: 0.25, amplitude: -0.8 },
            ],
            f1: vec![Bump { center: 0.05, width: 0.3, amplitude: 0.7 }],
        }
    }

    #[test]
    fn grid_nodes_hit_zero_and_endpoints_exactly() {
        for &n in &[33usize, 101, 513, 1025, 2049] {
            let g = SourceGrid::new(n).unwrap();
            assert_eq!(g.node(0), -1.0);
            assert_eq!(g.node(n - 1), 1.0);
            assert_eq!(g.node(g.zero_index()), 0.0);
            // spacing is uniform to rounding
            for j in 1..n {
                assert!((g.node(j) - g.node(j - 1) - g.h()).abs() < 1e-14);
            }
        }
        assert!(SourceGrid::new(32).is_err());
        assert!(SourceGrid::new(31).is_err());
        assert!(SourceGrid::new(34).is_err());
    }

    #[test]
    fn bump_evaluates_piecewise() {
        let b = Bump { center: 0.2, width: 0.5, amplitude: 2.0 };
        assert_eq!(b.eval(0.2), 2.0);
        // The support edge lands between floats; the cubic vanishing order
        // crushes the value to ~1e-47 rather than exact zero.
        assert!(b.eval(0.7).abs() < 1e-40);
        assert!(b.eval(-0.3).abs() < 1e-40);
        assert_eq!(b.eval(0.71), 0.0);
        // halfway: (1 - 0.25)^3 = 0.421875
        assert!((b.eval(0.45) - 2.0 * 0.421875).abs() < 1e-15);
    }

    #[test]
    fn bump_pair_rejects_boundary_contact() {
        let g = SourceGrid::new(65).unwrap();
        let bad = BumpSpec {
            f0: vec![Bump { center: 0.8, width: 0.25, amplitude: 1.0 }],
            f1: vec![],
        };
        assert!(make_bump_pair(&g, &bad).is_err());
        let ok = make_bump_pair(&g, &demo_spec()).unwrap();
        assert!(ok.support_margin > 0.0);
        // margin is the distance from the widest bump to the boundary
        assert!((ok.support_margin - (1.0 - 0.75)).abs() < 1e-14);
    }

    #[test]
    fn split_is_exact_partition_with_zero_to_positive() {
        let g = SourceGrid::new(129).unwrap();
        let sp = make_bump_pair(&g, &demo_spec()).unwrap();
        let s = split(&g, &sp);
        let z = g.zero_index();
        for j in 0..g.len() {
            // bitwise partition
            assert_eq!(s.f0p[j] + s.f0n[j], sp.f0[j]);
            assert_eq!(s.f1p[j] + s.f1n[j], sp.f1[j]);
            assert!(s.f0p[j] == 0.0 || s.f0n[j] == 0.0);
        }
        // interface sample goes to the positive part
        assert_eq!(s.f1p[z], sp.f1[z]);
        assert_eq!(s.f1n[z], 0.0);
    }

    #[test]
    fn sobolev_l2_matches_fine_quadrature_oracle() {
        // Oracle: Simpson's rule with 2^20 panels on the closed form
        // f(x) = sin(pi x) (1-(x/0.9)^2)^3 over the support |x| < 0.9,
        // computed independently of the grid trapezoid implementation.
        let f = |x: f64| {
            let t: f64 = x / 0.9;
            if t.abs() < 1.0 {
                (std::f64::consts::PI * x).sin() * (1.0 - t * t).powi(3)
            } else {
                0.0
            }
        };
        let n_panels = 1 << 20;
        let (a, b) = (-0.9, 0.9);
        let h = (b - a) / n_panels as f64;
        let mut s = f(a) * f(a) + f(b) * f(b);
        for i in 1..n_panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            let v = f(a + i as f64 * h);
            s += w * v * v;
        }
        let oracle_sq = s * h / 3.0;
        // frozen value of the oracle (guards against oracle drift)
        assert!((oracle_sq - 0.20925774829356147).abs() < 1e-12);

        let g = SourceGrid::new(1025).unwrap();
        let samples: Vec<f64> = (0..g.len()).map(|j| f(g.node(j))).collect();
        let norm = sobolev_norm(&g, &samples, 0);
        let rel = (norm - oracle_sq.sqrt()).abs() / oracle_sq.sqrt();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn sobolev_norms_are_nested() {
        let g = SourceGrid::new(257).unwrap();
        let sp = make_bump_pair(&g, &demo_spec()).unwrap();
        let n0 = sobolev_norm(&g, &sp.f0, 0);
        let n1 = sobolev_norm(&g, &sp.f0, 1);
        let n2 = sobolev_norm(&g, &sp.f0, 2);
        assert!(n0 <= n1 && n1 <= n2);
        assert!(n0 > 0.0);
    }

    #[test]
    fn sobolev_h1_matches_analytic_derivative_energy() {
        // f = bump(0, 0.5, 1): f' known in closed form; compare against a
        // fine Simpson evaluation of ∫ f'^2.
        let b = Bump { center: 0.0, width: 0.5, amplitude: 1.0 };
        let fp = |x: f64| {
            let t: f64 = x / 0.5;
            if t.abs() < 1.0 {
                let q = 1.0 - t * t;
                3.0 * q * q * (-2.0 * t) / 0.5
            } else {
                0.0
            }
        };
        let n_panels = 1 << 18;
        let h = 1.0 / n_panels as f64;
        let mut s = 0.0;
        for i in 0..=n_panels {
            let w = if i == 0 || i == n_panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let v = fp(-0.5 + i as f64 * h);
            s += w * v * v;
        }
        let grad_sq = s * h / 3.0;
        let g = SourceGrid::new(2049).unwrap();
        let samples: Vec<f64> = (0..g.len()).map(|j| b.eval(g.node(j))).collect();
        let f_sq = {
            let v: Vec<f64> = samples.iter().map(|x| x * x).collect();
            trapezoid_uniform(g.h(), &v)
        };
        let h1 = sobolev_norm(&g, &samples, 1);
        let want = (f_sq + grad_sq).sqrt();
        assert!((h1 - want).abs() / want < 1e-3, "h1 {h1} vs {want}");
    }

    #[test]
    fn constant_m_has_unit_floor() {
        let g = SourceGrid::new(65).unwrap();
        let zero = SourcePair::zero(&g);
        assert_eq!(constant_m(&g, &zero), 1.0);
        let sp = make_bump_pair(&g, &demo_spec()).unwrap();
        assert!(constant_m(&g, &sp) >= 1.0);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let g = SourceGrid::new(65).unwrap();
        let sp = make_bump_pair(&g, &demo_spec()).unwrap();
        let mut buf = Vec::new();
        sp.to_csv(&g, &mut buf).unwrap();
        let (g2, sp2) = SourcePair::from_csv(buf.as_slice()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(sp.f0, sp2.f0);
        assert_eq!(sp.f1, sp2.f1);
        assert!((sp.support_margin - sp2.support_margin).abs() < g.h() + 1e-12);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(SourcePair::from_csv("nonsense\n1,2,3\n".as_bytes()).is_err());
        assert!(SourcePair::from_csv("x,f0,f1\n0.0,1.0\n".as_bytes()).is_err());
        // boundary-touching source
        let g = SourceGrid::new(33).unwrap();
        let mut text = String::from("x,f0,f1\n");
        for j in 0..g.len() {
            text.push_str(&format!("{},1.0,0.0\n", g.node(j)));
        }
        assert!(SourcePair::from_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn interpolation_matches_closed_form_bump() {
        let g = SourceGrid::new(2049).unwrap();
        let b = Bump { center: 0.1, width: 0.4, amplitude: 1.5 };
        let spec = BumpSpec { f0: vec![b], f1: vec![] };
        let sp = make_bump_pair(&g, &spec).unwrap();
        // Linear interpolation error bound: h²/8 · max|f''| with
        // max|f''| = 6·amplitude/width² = 56.25, so ≈ 6.7e-6 here.
        for i in 0..1000 {
            let x = -1.0 + 2.0 * (i as f64 + 0.37) / 1000.0;
            let err = (sp.interp_f0(&g, x) - b.eval(x)).abs();
            assert!(err < 7e-6, "x = {x}, err = {err}");
        }
        assert_eq!(sp.interp_f0(&g, 1.7), 0.0);
        assert_eq!(sp.interp_f0(&g, -1.0), 0.0);
    }

    proptest! {
        #[test]
        fn prop_split_partitions_bitwise(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = SourceGrid::new(65).unwrap();
            let n = g.len();
            let mut f0 = vec![0.0; n];
            let mut f1 = vec![0.0; n];
            for j in 2..n - 2 {
                f0[j] = rng.gen_range(-1.0..1.0);
                f1[j] = rng.gen_range(-1.0..1.0);
            }
            let sp = SourcePair::from_samples(&g, f0, f1).unwrap();
            let s = split(&g, &sp);
            for j in 0..n {
                prop_assert_eq!(s.f0p[j] + s.f0n[j], sp.f0[j]);
                prop_assert_eq!(s.f1p[j] + s.f1n[j], sp.f1[j]);
            }
        }
    }
}
