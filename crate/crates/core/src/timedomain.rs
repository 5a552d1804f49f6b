//! Damped wave equation `U_tt + α U_t = U_xx` on an enlarged interval, used
//! as the time-domain route to the same boundary data the frequency solver
//! produces.
//!
//! The solver is a leapfrog scheme with centered damping,
//!
//! ```text
//!   (1 + α dt/2) U^{m+1} = 2U^m - U^{m-1} + dt² D₂U^m + (α dt/2) U^{m-1},
//! ```
//!
//! on a uniform grid over `[-L, L]` with homogeneous Dirichlet walls. The
//! half-width `L = ⌈T⌉ + 2` keeps wall reflections from reaching the
//! measurement points `x = ±1` before the final time (unit speed), so the
//! traces coincide with the free-space solution. The scheme carries an exact
//! discrete energy
//!
//! ```text
//!   E^{m+1/2} = h/(2dt²) Σ (U^{m+1}-U^m)² + h/2 Σ D⁺U^{m+1} · D⁺U^m,
//! ```
//!
//! conserved to roundoff at `α = 0` and monotonically non-increasing for
//! `α > 0`; the tests pin both.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::BoundaryDataset;
use crate::medium::MediumConfig;
use crate::quad::trapezoid_uniform;
use crate::sources::{SourceGrid, SourcePair};

/// Largest stable Courant number accepted by the solver (the scheme is
/// stable up to 1; a margin keeps the discrete energy positive-definite).
pub const MAX_COURANT: f64 = 0.95;

/// Result of a time-domain solve: traces at `x = ±1`, their time
/// derivatives, the discrete energy ladder, norm histories, and optional
/// decimated snapshots of the full line.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub medium: MediumConfig,
    /// Spatial step (reciprocal of an integer).
    pub h: f64,
    /// Time step after rounding the horizon to a whole number of steps.
    pub dt: f64,
    pub t_final: f64,
    /// Half-width of the computational interval `[-L, L]`.
    pub domain_half_width: f64,
    /// Time levels `0, dt, …, T` (length `M + 1`).
    pub times: Vec<f64>,
    pub trace_minus: Vec<f64>,
    pub trace_plus: Vec<f64>,
    pub trace_minus_t: Vec<f64>,
    pub trace_plus_t: Vec<f64>,
    /// Discrete energies at half levels `m + 1/2` (length `M`).
    pub energies: Vec<f64>,
    /// `max_i |U^m_i|` per time level.
    pub sup_norms: Vec<f64>,
    /// `(h Σ_i (U^m_i)²)^{1/2}` per time level.
    pub l2_norms: Vec<f64>,
    /// Evenly decimated `(t, U(·, t))` pairs when requested.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Node coordinates for the snapshot lines.
    pub snapshot_xs: Vec<f64>,
}

/// Advance the damped wave equation from `U(·,0) = f0`, `U_t(·,0) = f1` to
/// time `t_final`. Requires a homogeneous unit-speed medium (the layered
/// speeds only enter the frequency-domain solver), `h = 1/m` for integer `m`
/// so that `±1` are grid nodes, and a Courant number in `(0, MAX_COURANT]`.
/// `snapshot_count > 0` stores that many evenly spaced full-line snapshots.
pub fn solve_wave(
    cfg: &MediumConfig,
    grid: &SourceGrid,
    sp: &SourcePair,
    t_final: f64,
    h: f64,
    courant: f64,
    snapshot_count: usize,
) -> Result<WaveSolution> {
    if !cfg.is_homogeneous() || (cfg.c_p - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMedium(
            "time-domain solver requires c_p = c_n = 1".into(),
        ));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidHorizon(format!("t_final = {t_final}")));
    }
    if !(h.is_finite() && h > 0.0 && h <= 0.5) {
        return Err(Error::InvalidGrid(format!("wave grid step h = {h}")));
    }
    let m_per_unit = (1.0 / h).round();
    if ((1.0 / h) - m_per_unit).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!(
            "wave grid step h = {h} must be the reciprocal of an integer"
        )));
    }
    let m_per_unit = m_per_unit as usize;
    if !(courant.is_finite() && courant > 0.0 && courant <= MAX_COURANT) {
        return Err(Error::CflViolation {
            dt: courant * h,
            limit: MAX_COURANT * h,
        });
    }

    let half_width = t_final.ceil() as usize + 2;
    let n_nodes = 2 * half_width * m_per_unit + 1;
    let idx_minus = (half_width - 1) * m_per_unit;
    let idx_plus = (half_width + 1) * m_per_unit;
    let steps = (t_final / (courant * h)).ceil() as usize;
    let dt = t_final / steps as f64;
    let alpha = cfg.alpha;
    let damp = alpha * dt / 2.0;

    let xs: Vec<f64> = (0..n_nodes)
        .map(|i| (i as f64 - (half_width * m_per_unit) as f64) * h)
        .collect();

    // Initial data by linear interpolation of the source samples (zero
    // outside (-1, 1), so the Dirichlet walls are consistent).
    let mut u_prev: Vec<f64> = xs.iter().map(|&x| sp.interp_f0(grid, x)).collect();
    let v0: Vec<f64> = xs.iter().map(|&x| sp.interp_f1(grid, x)).collect();
    u_prev[0] = 0.0;
    u_prev[n_nodes - 1] = 0.0;

    // Second-order Taylor start:
    // U¹ = f0 + dt f1 + dt²/2 (f0'' - α f1), with f0'' from the grid.
    let mut u_curr = vec![0.0; n_nodes];
    for i in 1..n_nodes - 1 {
        let lap = (u_prev[i + 1] - 2.0 * u_prev[i] + u_prev[i - 1]) / (h * h);
        u_curr[i] = u_prev[i] + dt * v0[i] + 0.5 * dt * dt * (lap - alpha * v0[i]);
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut trace_minus = Vec::with_capacity(steps + 1);
    let mut trace_plus = Vec::with_capacity(steps + 1);
    let mut sup_norms = Vec::with_capacity(steps + 1);
    let mut l2_norms = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps);
    let mut levels_minus = Vec::with_capacity(steps + 1);
    let mut levels_plus = Vec::with_capacity(steps + 1);

    let snapshot_stride = if snapshot_count > 0 {
        (steps / snapshot_count).max(1)
    } else {
        usize::MAX
    };
    let mut snapshots = Vec::new();

    let record = |level: usize,
                  u: &[f64],
                  times: &mut Vec<f64>,
                  tm: &mut Vec<f64>,
                  tp: &mut Vec<f64>,
                  sup: &mut Vec<f64>,
                  l2: &mut Vec<f64>,
                  snaps: &mut Vec<(f64, Vec<f64>)>| {
        let t = level as f64 * dt;
        times.push(t);
        tm.push(u[idx_minus]);
        tp.push(u[idx_plus]);
        sup.push(u.iter().fold(0.0_f64, |a, &v| a.max(v.abs())));
        l2.push((h * u.iter().map(|&v| v * v).sum::<f64>()).sqrt());
        if snapshot_count > 0 && (level % snapshot_stride == 0 || level == steps) {
            snaps.push((t, u.to_vec()));
        }
    };

    record(
        0, &u_prev, &mut times, &mut trace_minus, &mut trace_plus, &mut sup_norms,
        &mut l2_norms, &mut snapshots,
    );
    levels_minus.push(u_prev[idx_minus]);
    levels_plus.push(u_prev[idx_plus]);
    energies.push(discrete_energy(&u_prev, &u_curr, h, dt));
    record(
        1, &u_curr, &mut times, &mut trace_minus, &mut trace_plus, &mut sup_norms,
        &mut l2_norms, &mut snapshots,
    );
    levels_minus.push(u_curr[idx_minus]);
    levels_plus.push(u_curr[idx_plus]);

    let mut u_next = vec![0.0; n_nodes];
    for level in 2..=steps {
        for i in 1..n_nodes - 1 {
            let lap = (u_curr[i + 1] - 2.0 * u_curr[i] + u_curr[i - 1]) / (h * h);
            u_next[i] = (2.0 * u_curr[i] - u_prev[i] + dt * dt * lap + damp * u_prev[i])
                / (1.0 + damp);
        }
        u_next[0] = 0.0;
        u_next[n_nodes - 1] = 0.0;
        std::mem::swap(&mut u_prev, &mut u_curr);
        std::mem::swap(&mut u_curr, &mut u_next);
        energies.push(discrete_energy(&u_prev, &u_curr, h, dt));
        record(
            level, &u_curr, &mut times, &mut trace_minus, &mut trace_plus, &mut sup_norms,
            &mut l2_norms, &mut snapshots,
        );
        levels_minus.push(u_curr[idx_minus]);
        levels_plus.push(u_curr[idx_plus]);
    }

    let trace_minus_t = time_derivative(&levels_minus, dt, &v0, idx_minus);
    let trace_plus_t = time_derivative(&levels_plus, dt, &v0, idx_plus);

    Ok(WaveSolution {
        medium: *cfg,
        h,
        dt,
        t_final,
        domain_half_width: half_width as f64,
        times,
        trace_minus,
        trace_plus,
        trace_minus_t,
        trace_plus_t,
        energies,
        sup_norms,
        l2_norms,
        snapshots,
        snapshot_xs: xs,
    })
}

/// Discrete half-step energy of two consecutive levels (see module docs).
pub fn discrete_energy(u_old: &[f64], u_new: &[f64], h: f64, dt: f64) -> f64 {
    let n = u_old.len();
    let mut kinetic = 0.0;
    for i in 0..n {
        let d = u_new[i] - u_old[i];
        kinetic += d * d;
    }
    kinetic *= h / (2.0 * dt * dt);
    let mut potential = 0.0;
    for i in 0..n - 1 {
        let g_new = (u_new[i + 1] - u_new[i]) / h;
        let g_old = (u_old[i + 1] - u_old[i]) / h;
        potential += g_new * g_old;
    }
    potential *= h / 2.0;
    kinetic + potential
}

/// Centered time derivative of a trace; the first value is the exact initial
/// velocity sample and the last uses a one-sided second-order stencil.
fn time_derivative(levels: &[f64], dt: f64, v0: &[f64], idx: usize) -> Vec<f64> {
    let m = levels.len();
    let mut out = Vec::with_capacity(m);
    out.push(v0[idx]);
    for i in 1..m - 1 {
        out.push((levels[i + 1] - levels[i - 1]) / (2.0 * dt));
    }
    if m >= 3 {
        out.push((3.0 * levels[m - 1] - 4.0 * levels[m - 2] + levels[m - 3]) / (2.0 * dt));
    } else if m == 2 {
        out.push((levels[1] - levels[0]) / dt);
    }
    out
}

/// Windowed Fourier transform of the traces: `d(ω) = ω ∫₀^T U(±1, t) e^{iωt} dt`
/// by the trapezoidal rule, packaged as a boundary dataset on the given grid.
pub fn trace_transform(ws: &WaveSolution, omegas: &[f64]) -> Result<BoundaryDataset> {
    let dt = ws.dt;
    let mut d_minus = Vec::with_capacity(omegas.len());
    let mut d_plus = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut am = Complex64::new(0.0, 0.0);
        let mut ap = Complex64::new(0.0, 0.0);
        for (i, &t) in ws.times.iter().enumerate() {
            let w = if i == 0 || i == ws.times.len() - 1 {
                0.5 * dt
            } else {
                dt
            };
            let phase = Complex64::new(0.0, omega * t).exp();
            am += w * ws.trace_minus[i] * phase;
            ap += w * ws.trace_plus[i] * phase;
        }
        d_minus.push(omega * am);
        d_plus.push(omega * ap);
    }
    BoundaryDataset::from_samples(ws.medium, omegas.to_vec(), d_minus, d_plus)
}

/// Observability diagnostic: source energy against recorded trace energy.
#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    /// `‖f0‖²_{H¹} + ‖f1‖²_{L²}`.
    pub source_energy: f64,
    /// `∫₀^T (U² + U_t²)(-1, t) + (U² + U_t²)(1, t) dt`.
    pub trace_energy: f64,
    /// `source_energy / trace_energy`.
    pub ratio: f64,
}

/// Compare the source energy with the boundary trace energy of a solve.
pub fn observability_check(
    ws: &WaveSolution,
    grid: &SourceGrid,
    sp: &SourcePair,
) -> ObservabilityReport {
    let nf0 = crate::sources::sobolev_norm(grid, &sp.f0, 1);
    let nf1 = crate::sources::sobolev_norm(grid, &sp.f1, 0);
    let source_energy = nf0 * nf0 + nf1 * nf1;
    let integrand: Vec<f64> = (0..ws.times.len())
        .map(|i| {
            ws.trace_minus[i].powi(2)
                + ws.trace_minus_t[i].powi(2)
                + ws.trace_plus[i].powi(2)
                + ws.trace_plus_t[i].powi(2)
        })
        .collect();
    let trace_energy = trapezoid_uniform(ws.dt, &integrand);
    ObservabilityReport {
        source_energy,
        trace_energy,
        ratio: source_energy / trace_energy,
    }
}

/// Log-log decay fit of the norm histories over the trailing window
/// `[T/4, T]`.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub window_start: f64,
    /// Least-squares slope of `ln sup-norm` against `ln t`.
    pub slope_sup: f64,
    /// Least-squares slope of `ln L²-norm` against `ln t`.
    pub slope_l2: f64,
}

/// Fit power-law decay exponents to the trailing norm histories.
pub fn decay_check(ws: &WaveSolution) -> DecayReport {
    let window_start = ws.t_final / 4.0;
    let fit = |norms: &[f64]| {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &t) in ws.times.iter().enumerate() {
            if t >= window_start && norms[i] > 1e-300 {
                xs.push(t.ln());
                ys.push(norms[i].ln());
            }
        }
        least_squares_slope(&xs, &ys)
    };
    DecayReport {
        window_start,
        slope_sup: fit(&ws.sup_norms),
        slope_l2: fit(&ws.l2_norms),
    }
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Write the traces as CSV (`t,u_minus,u_plus,ut_minus,ut_plus`).
pub fn write_traces_csv<W: std::io::Write>(ws: &WaveSolution, mut out: W) -> Result<()> {
    writeln!(out, "t,u_minus,u_plus,ut_minus,ut_plus")?;
    for i in 0..ws.times.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            ws.times[i],
            ws.trace_minus[i],
            ws.trace_plus[i],
            ws.trace_minus_t[i],
            ws.trace_plus_t[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{make_bump_pair, Bump, BumpSpec};

    fn unit_medium(alpha: f64) -> MediumConfig {
        MediumConfig::new(1.0, 1.0, alpha).unwrap()
    }

    fn displacement_pulse(grid: &SourceGrid) -> (SourcePair, Bump) {
        let bump = Bump { center: 0.1, width: 0.4, amplitude: 1.0 };
        let spec = BumpSpec { f0: vec![bump], f1: vec![] };
        (make_bump_pair(grid, &spec).unwrap(), bump)
    }

    #[test]
    fn rejects_invalid_configurations() {
        let grid = SourceGrid::new(129).unwrap();
        let (sp, _) = displacement_pulse(&grid);
        let layered = MediumConfig::new(1.0, 1.5, 0.0).unwrap();
        assert!(solve_wave(&layered, &grid, &sp, 1.0, 0.01, 0.9, 0).is_err());
        let cfg = unit_medium(0.0);
        assert!(solve_wave(&cfg, &grid, &sp, 1.0, 0.013, 0.9, 0).is_err());
        assert!(matches!(
            solve_wave(&cfg, &grid, &sp, 1.0, 0.01, 1.2, 0),
            Err(crate::Error::CflViolation { .. })
        ));
        assert!(solve_wave(&cfg, &grid, &sp, -1.0, 0.01, 0.9, 0).is_err());
    }

    /// With `f1 = 0` the solution is the split pulse
    /// `U(x,t) = (f0(x-t) + f0(x+t))/2`; at `x = -1` only the left-going
    /// half arrives, giving the closed-form trace `f0(-1+t)/2`.
    #[test]
    fn traces_match_split_pulse_solution() {
        let grid = SourceGrid::new(2049).unwrap();
        let (sp, bump) = displacement_pulse(&grid);
        let cfg = unit_medium(0.0);
        let errs: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&h| {
                let ws = solve_wave(&cfg, &grid, &sp, 2.0, h, 0.9, 0).unwrap();
                let mut err = 0.0_f64;
                for (i, &t) in ws.times.iter().enumerate() {
                    let exact_m = 0.5 * bump.eval(-1.0 + t);
                    let exact_p = 0.5 * bump.eval(1.0 - t);
                    err = err
                        .max((ws.trace_minus[i] - exact_m).abs())
                        .max((ws.trace_plus[i] - exact_p).abs());
                }
                err
            })
            .collect();
        assert!(errs[1] < 5e-3, "fine-grid sup error {}", errs[1]);
        let ratio = errs[0] / errs[1];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "expected second-order convergence, got ratio {ratio} from {errs:?}"
        );
    }

    #[test]
    fn energy_is_conserved_without_damping() {
        let grid = SourceGrid::new(513).unwrap();
        let spec = BumpSpec {
            f0: vec![Bump { center: -0.2, width: 0.3, amplitude: 0.8 }],
            f1: vec![Bump { center: 0.25, width: 0.35, amplitude: -0.5 }],
        };
        let sp = make_bump_pair(&grid, &spec).unwrap();
        let ws = solve_wave(&unit_medium(0.0), &grid, &sp, 3.0, 0.005, 0.9, 0).unwrap();
        let e0 = ws.energies[0];
        for &e in &ws.energies {
            assert!((e - e0).abs() <= 1e-12 * e0, "energy drifted: {e} vs {e0}");
        }
    }

    #[test]
    fn energy_decays_monotonically_with_damping() {
        let grid = SourceGrid::new(513).unwrap();
        let spec = BumpSpec {
            f0: vec![Bump { center: -0.2, width: 0.3, amplitude: 0.8 }],
            f1: vec![Bump { center: 0.25, width: 0.35, amplitude: -0.5 }],
        };
        let sp = make_bump_pair(&grid, &spec).unwrap();
        let ws = solve_wave(&unit_medium(1.5), &grid, &sp, 3.0, 0.005, 0.9, 0).unwrap();
        let e0 = ws.energies[0];
        for pair in ws.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * e0, "energy rose: {pair:?}");
        }
        assert!(
            *ws.energies.last().unwrap() < 0.5 * e0,
            "damping too weak to be visible"
        );
    }

    #[test]
    fn signal_respects_finite_propagation_speed() {
        let grid = SourceGrid::new(1025).unwrap();
        let spec = BumpSpec {
            f0: vec![Bump { center: 0.0, width: 0.5, amplitude: 1.0 }],
            f1: vec![Bump { center: 0.0, width: 0.5, amplitude: 0.5 }],
        };
        let sp = make_bump_pair(&grid, &spec).unwrap();
        let ws = solve_wave(&unit_medium(0.8), &grid, &sp, 2.0, 0.005, 0.9, 0).unwrap();
        // The stencil moves one cell per step, i.e. at speed h/dt = 1/CFL,
        // so the traces are exact zeros until the stencil cone arrives
        // (distance 0.5 from the support edge ⇒ t = 0.5·dt/h).
        let stencil_arrival = 0.5 * ws.dt / ws.h;
        // Physically the signal arrives at t = 0.5; between the cones only a
        // tiny dispersive precursor exists.
        for (i, &t) in ws.times.iter().enumerate() {
            let a = ws.trace_minus[i].abs().max(ws.trace_plus[i].abs());
            if t < stencil_arrival - 2.0 * ws.dt {
                assert!(a <= 1e-15, "stencil-cone leak at t={t}: {a}");
            } else if t < 0.5 - 3.0 * ws.h {
                assert!(a <= 1e-6, "precursor too large at t={t}: {a}");
            }
        }
    }

    #[test]
    fn traces_csv_has_expected_shape() {
        let grid = SourceGrid::new(257).unwrap();
        let (sp, _) = displacement_pulse(&grid);
        let ws = solve_wave(&unit_medium(0.3), &grid, &sp, 1.0, 0.01, 0.9, 0).unwrap();
        let mut out = Vec::new();
        write_traces_csv(&ws, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,u_minus,u_plus,ut_minus,ut_plus");
        assert_eq!(lines.count(), ws.times.len());
    }

    #[test]
    fn snapshots_are_decimated_and_cover_the_horizon() {
        let grid = SourceGrid::new(257).unwrap();
        let (sp, _) = displacement_pulse(&grid);
        let ws = solve_wave(&unit_medium(0.0), &grid, &sp, 1.0, 0.02, 0.9, 16).unwrap();
        assert!(!ws.snapshots.is_empty());
        assert_eq!(ws.snapshots[0].0, 0.0);
        let last = ws.snapshots.last().unwrap();
        assert!((last.0 - ws.t_final).abs() < 1e-12);
        assert_eq!(last.1.len(), ws.snapshot_xs.len());
    }
}
