//! The five subcommands: `forward`, `crosscheck`, `invert`, `sweep`,
//! `bounds`.
//!
//! Every command validates its inputs first (exit code 2 on violation), then
//! computes, then writes artifacts into the output directory. Each CSV output
//! starts with a `# config_sha256=<hex>` comment line and each JSON output
//! carries a `config_sha256` field, so artifacts are traceable to the exact
//! config bytes that produced them. Runs are deterministic: identical config
//! and seeds produce byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use layered_helmholtz::greens::{boundary_data, min_grid_points, min_omega_count, omega_grid};
use layered_helmholtz::inversion::{
    add_noise, assemble, invert_with_bracket, relative_l2_error, weighted_distance,
    InversionSummary, TikhonovFactor, write_reconstruction_csv,
};
use layered_helmholtz::medium::MediumConfig;
use layered_helmholtz::quad::trapezoid_weights;
use layered_helmholtz::sources::constant_m;
use layered_helmholtz::stability::{
    harmonic_measure_lb, k_split, max_dominance_ratio, median, run_sweep, stability_rhs,
    write_sweep_csv, StabilityReport, SweepConfig, SweepManifest,
};
use layered_helmholtz::timedomain::{solve_wave, trace_transform, write_traces_csv};

use crate::config::LoadedConfig;
use crate::CliError;

/// Relative-jitter allowance when judging error monotonicity across sweep
/// cells: medians may wiggle by 5% against the trend before a verdict flips.
pub const TREND_JITTER: f64 = 0.05;

/// Shared per-run context: parsed config, its hash, and the output directory.
pub struct Ctx {
    pub loaded: LoadedConfig,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(loaded: LoadedConfig, out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| {
            CliError::Invalid(format!(
                "cannot create output directory {}: {e}",
                out.display()
            ))
        })?;
        Ok(Self {
            loaded,
            out: out.to_path_buf(),
        })
    }

    fn hash(&self) -> &str {
        &self.loaded.sha256
    }

    /// Write a CSV artifact: hash comment line, then the rendered body.
    fn write_csv<F>(&self, name: &str, render: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> layered_helmholtz::Result<()>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "# config_sha256={}", self.hash())
            .expect("in-memory write cannot fail");
        render(&mut buf).map_err(CliError::from_lib)?;
        let path = self.out.join(name);
        fs::write(&path, &buf)
            .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Write a JSON artifact (the value itself must carry the hash field).
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Invalid(format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        let path = self.out.join(name);
        fs::write(&path, text)
            .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Check that the source grid resolves the fastest oscillation of the band.
fn check_resolution(medium: &MediumConfig, n: usize, k_max: f64) -> Result<(), CliError> {
    let need = min_grid_points(medium.c_max(), k_max);
    if n < need {
        return Err(CliError::Invalid(format!(
            "grid n = {n} is too coarse for K = {k_max} with c_max = {}: \
             need at least {need} nodes (20 per shortest wavelength)",
            medium.c_max()
        )));
    }
    Ok(())
}

/// `forward`: synthesize multi-frequency boundary data, optionally noised.
pub fn cmd_forward(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.loaded.config;
    let medium = cfg.medium()?;
    let grid = cfg.source_grid()?;
    let sp = cfg.source_pair(&grid, &ctx.loaded.base_dir)?;
    let om = cfg.require_omegas()?;
    check_resolution(&medium, grid.len(), om.k_max)?;
    let omegas = omega_grid(om.k_max, om.count).map_err(CliError::from_lib)?;

    let clean = boundary_data(&medium, &grid, &sp, &omegas).map_err(CliError::from_lib)?;
    let (ds, seed) = match &cfg.noise {
        Some(_) => {
            let noise = cfg.require_noise()?;
            let seed = noise.seeds[0];
            let noisy =
                add_noise(&clean, noise.eps2_target, seed).map_err(CliError::from_lib)?;
            (noisy, Some(seed))
        }
        None => (clean, None),
    };

    ctx.write_csv("sources.csv", |w| sp.to_csv(&grid, w))?;
    let csv_path = ctx.write_csv("boundary_data.csv", |w| ds.write_csv(w))?;
    let mut sidecar = ds.sidecar();
    sidecar.config_sha256 = Some(ctx.hash().to_string());
    ctx.write_json("boundary_data.json", &sidecar)?;

    println!(
        "forward: {} frequencies on (0, {}], eps2 = {:.6e}, E = {}, seed = {} -> {}",
        ds.omegas.len(),
        ds.k_max,
        ds.epsilon2,
        match ds.e_value {
            Some(e) => format!("{e:.6}"),
            None => "undefined (eps2 >= 1)".into(),
        },
        match seed {
            Some(s) => s.to_string(),
            None => "none (clean data)".into(),
        },
        csv_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CrosscheckReport {
    tolerance: f64,
    omega_min: f64,
    omega_max: f64,
    compared_frequencies: usize,
    /// Relative L² mismatch of the left/right boundary data between the
    /// frequency-domain and time-domain routes.
    rel_l2_minus: f64,
    rel_l2_plus: f64,
    rel_l2_total: f64,
    /// Largest pointwise mismatch relative to the band peak, per endpoint.
    max_rel_minus: f64,
    max_rel_plus: f64,
    pass: bool,
    config_sha256: String,
}

/// `crosscheck`: compare boundary data computed by the frequency-domain
/// kernel route against the Fourier transform of the time-domain evolution.
/// Restricted to the homogeneous unit medium, where the time-domain solver
/// is defined.
pub fn cmd_crosscheck(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.loaded.config;
    let medium = cfg.medium()?;
    if !medium.is_homogeneous() || (medium.c_p - 1.0).abs() > 1e-12 {
        return Err(CliError::Invalid(format!(
            "crosscheck requires the homogeneous unit medium c_p = c_n = 1 \
             (got c_p = {}, c_n = {}): the time-domain reference solver is \
             only defined there; attenuation alpha may be arbitrary",
            medium.c_p, medium.c_n
        )));
    }
    let grid = cfg.source_grid()?;
    let sp = cfg.source_pair(&grid, &ctx.loaded.base_dir)?;
    let om = cfg.require_omegas()?;
    let td = cfg.require_timedomain()?;
    let cc = cfg.crosscheck.unwrap_or(crate::config::CrosscheckSection {
        tolerance: 0.02,
        omega_min: 1.0,
    });
    if !(cc.tolerance.is_finite() && cc.tolerance > 0.0) {
        return Err(CliError::Invalid(format!(
            "crosscheck tolerance must be > 0, got {}",
            cc.tolerance
        )));
    }
    check_resolution(&medium, grid.len(), om.k_max)?;
    let all_omegas = omega_grid(om.k_max, om.count).map_err(CliError::from_lib)?;
    let omegas: Vec<f64> = all_omegas
        .into_iter()
        .filter(|&w| w >= cc.omega_min * (1.0 - 1e-12))
        .collect();
    if omegas.is_empty() {
        return Err(CliError::Invalid(format!(
            "no frequencies remain in [{}, {}]; raise K or lower omega_min",
            cc.omega_min, om.k_max
        )));
    }

    let ws = solve_wave(&medium, &grid, &sp, td.t_final, td.h, td.courant, td.snapshots)
        .map_err(CliError::from_lib)?;
    let ds_time = trace_transform(&ws, &omegas).map_err(CliError::from_lib)?;
    let ds_freq = boundary_data(&medium, &grid, &sp, &omegas).map_err(CliError::from_lib)?;

    let weights = trapezoid_weights(&omegas);
    let mut num_m = 0.0;
    let mut num_p = 0.0;
    let mut den_m = 0.0;
    let mut den_p = 0.0;
    let peak_m = ds_freq
        .d_minus
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    let peak_p = ds_freq
        .d_plus
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    let mut max_rel_m = 0.0_f64;
    let mut max_rel_p = 0.0_f64;
    let mut rows = Vec::with_capacity(omegas.len());
    for i in 0..omegas.len() {
        let dm = (ds_time.d_minus[i] - ds_freq.d_minus[i]).norm();
        let dp = (ds_time.d_plus[i] - ds_freq.d_plus[i]).norm();
        num_m += weights[i] * dm * dm;
        num_p += weights[i] * dp * dp;
        den_m += weights[i] * ds_freq.d_minus[i].norm_sqr();
        den_p += weights[i] * ds_freq.d_plus[i].norm_sqr();
        let rel_m = relative_to_peak(dm, peak_m);
        let rel_p = relative_to_peak(dp, peak_p);
        max_rel_m = max_rel_m.max(rel_m);
        max_rel_p = max_rel_p.max(rel_p);
        rows.push((
            omegas[i],
            ds_freq.d_minus[i].norm(),
            ds_time.d_minus[i].norm(),
            rel_m,
            ds_freq.d_plus[i].norm(),
            ds_time.d_plus[i].norm(),
            rel_p,
        ));
    }
    let rel_l2_minus = ratio_sqrt(num_m, den_m);
    let rel_l2_plus = ratio_sqrt(num_p, den_p);
    let rel_l2_total = ratio_sqrt(num_m + num_p, den_m + den_p);
    let pass = rel_l2_total <= cc.tolerance;

    ctx.write_csv("traces.csv", |w| write_traces_csv(&ws, w))?;
    ctx.write_csv("crosscheck.csv", |w| {
        writeln!(
            w,
            "omega,freq_minus_abs,time_minus_abs,rel_err_minus,freq_plus_abs,time_plus_abs,rel_err_plus"
        )?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{},{},{}", r.0, r.1, r.2, r.3, r.4, r.5, r.6)?;
        }
        Ok(())
    })?;
    let report = CrosscheckReport {
        tolerance: cc.tolerance,
        omega_min: cc.omega_min,
        omega_max: om.k_max,
        compared_frequencies: omegas.len(),
        rel_l2_minus,
        rel_l2_plus,
        rel_l2_total,
        max_rel_minus: max_rel_m,
        max_rel_plus: max_rel_p,
        pass,
        config_sha256: ctx.hash().to_string(),
    };
    ctx.write_json("crosscheck.json", &report)?;

    println!(
        "crosscheck: rel L2 mismatch {:.4e} (minus {:.4e}, plus {:.4e}) over {} \
         frequencies in [{}, {}]; tolerance {} -> {}",
        rel_l2_total,
        rel_l2_minus,
        rel_l2_plus,
        omegas.len(),
        cc.omega_min,
        om.k_max,
        cc.tolerance,
        if pass { "pass" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "frequency/time cross-check mismatch {rel_l2_total:.4e} exceeds tolerance {}",
            cc.tolerance
        )))
    }
}

/// Pointwise mismatch normalized by the band peak. Zero data on both routes
/// compares as zero mismatch.
fn relative_to_peak(diff: f64, peak: f64) -> f64 {
    if peak > 0.0 {
        diff / peak
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `sqrt(num/den)` with the zero-data convention: 0/0 is a perfect match.
fn ratio_sqrt(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `invert`: synthesize boundary data from the configured truth, optionally
/// noise it (first seed), reconstruct, and report errors against the truth.
pub fn cmd_invert(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.loaded.config;
    let medium = cfg.medium()?;
    let grid = cfg.source_grid()?;
    let sp = cfg.source_pair(&grid, &ctx.loaded.base_dir)?;
    let om = cfg.require_omegas()?;
    if !(om.k_max > 1.0) {
        return Err(CliError::Invalid(format!(
            "inversion requires bandwidth K > 1, got {}",
            om.k_max
        )));
    }
    check_resolution(&medium, grid.len(), om.k_max)?;
    let need = min_omega_count(medium.c_max(), om.k_max);
    if om.count < need {
        return Err(CliError::Invalid(format!(
            "omegas count = {} undersamples the band (0, {}] for inversion: \
             need at least {need} samples (spacing <= pi / (4 c_max))",
            om.count, om.k_max
        )));
    }
    let margin = cfg.margin()?;
    let bracket = cfg.lambda_bracket()?;
    let omegas = omega_grid(om.k_max, om.count).map_err(CliError::from_lib)?;

    let clean = boundary_data(&medium, &grid, &sp, &omegas).map_err(CliError::from_lib)?;
    let fm = assemble(&medium, &grid, &omegas, margin).map_err(CliError::from_lib)?;
    let factor = TikhonovFactor::new(&fm).map_err(CliError::from_lib)?;

    let (ds, delta, seed) = match &cfg.noise {
        Some(_) => {
            let noise = cfg.require_noise()?;
            let seed = noise.seeds[0];
            let noisy =
                add_noise(&clean, noise.eps2_target, seed).map_err(CliError::from_lib)?;
            let delta = weighted_distance(&fm, &noisy, &clean).map_err(CliError::from_lib)?;
            (noisy, Some(delta), Some(seed))
        }
        None => (clean, None, None),
    };

    let rec = invert_with_bracket(&fm, &factor, &grid, &ds, delta, bracket)
        .map_err(CliError::from_lib)?;
    let rel0 = relative_l2_error(&grid, &rec.f0, &sp.f0);
    let rel1 = relative_l2_error(&grid, &rec.f1, &sp.f1);
    let err_l2 = layered_helmholtz::stability::squared_l2_error(&grid, &rec.f0, &sp.f0)
        + layered_helmholtz::stability::squared_l2_error(&grid, &rec.f1, &sp.f1);

    ctx.write_csv("reconstruction.csv", |w| {
        write_reconstruction_csv(&grid, Some(&sp), &rec, w)
    })?;
    let summary = InversionSummary {
        lambda: rec.lambda,
        residual: rec.residual,
        rel_err_f0: Some(rel0),
        rel_err_f1: Some(rel1),
        err_l2: Some(err_l2),
        eps2: ds.epsilon2,
        k_max: ds.k_max,
        alpha: medium.alpha,
        seed,
        flags: rec.flags.clone(),
        config_sha256: Some(ctx.hash().to_string()),
    };
    ctx.write_json("inversion.json", &summary)?;

    println!(
        "invert: K = {}, eps2 = {:.6e}, lambda = {:.6e}, residual = {:.6e}, \
         rel_err_f0 = {:.6e}, rel_err_f1 = {:.6e}{}",
        ds.k_max,
        ds.epsilon2,
        rec.lambda,
        rec.residual,
        rel0,
        rel1,
        if rec.flags.is_empty() {
            String::new()
        } else {
            format!(", flags = [{}]", rec.flags.join(", "))
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct TrendLine {
    /// The held-fixed parameter value (α for bandwidth trends, K for
    /// attenuation trends).
    fixed: f64,
    /// The varied parameter values, sorted ascending.
    varied: Vec<f64>,
    /// Median `err_l2` over seeds at each varied value.
    medians: Vec<f64>,
    ok: bool,
}

#[derive(Serialize)]
struct SweepVerdicts {
    /// Allowed relative wiggle against the trend direction.
    jitter: f64,
    /// Median error non-increasing in K at every fixed α.
    k_trend_ok: bool,
    /// Median error non-decreasing in α at every fixed K.
    alpha_trend_ok: bool,
    max_ratio: f64,
    max_ratio_finite: bool,
    pass: bool,
    per_alpha: Vec<TrendLine>,
    per_k: Vec<TrendLine>,
    config_sha256: String,
}

/// `sweep`: run the (K, α, seed) reconstruction grid at pinned data energy
/// and judge the stability trends.
pub fn cmd_sweep(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.loaded.config;
    let medium = cfg.medium()?;
    let grid = cfg.source_grid()?;
    let sp = cfg.source_pair(&grid, &ctx.loaded.base_dir)?;
    let sweep = cfg.require_sweep()?;
    let noise = cfg.require_noise()?;
    let margin = cfg.margin()?;

    let sweep_cfg = SweepConfig {
        c_p: medium.c_p,
        c_n: medium.c_n,
        k_list: sweep.k_list.clone(),
        alpha_list: sweep.alpha_list.clone(),
        eps_target: noise.eps2_target,
        seeds: noise.seeds.clone(),
        margin,
    };
    let reports = run_sweep(&sweep_cfg, &grid, &sp).map_err(CliError::from_lib)?;

    let max_ratio = max_dominance_ratio(&reports);
    let manifest = SweepManifest {
        c_p: medium.c_p,
        c_n: medium.c_n,
        k_list: sweep.k_list.clone(),
        alpha_list: sweep.alpha_list.clone(),
        eps_target: noise.eps2_target,
        seeds: noise.seeds.clone(),
        margin,
        m_bound: constant_m(&grid, &sp),
        max_ratio,
        config_sha256: Some(ctx.hash().to_string()),
    };

    let verdicts = judge_trends(&reports, &sweep.k_list, &sweep.alpha_list, max_ratio, ctx);

    ctx.write_csv("sweep.csv", |w| write_sweep_csv(&reports, w))?;
    ctx.write_json("sweep_manifest.json", &manifest)?;
    ctx.write_json("sweep_verdicts.json", &verdicts)?;

    println!(
        "sweep: {} cells x {} seeds, max err/bound ratio = {:.6e}; trends: \
         K {} / alpha {} -> {}",
        sweep.k_list.len() * sweep.alpha_list.len(),
        noise.seeds.len(),
        max_ratio,
        if verdicts.k_trend_ok { "ok" } else { "VIOLATED" },
        if verdicts.alpha_trend_ok { "ok" } else { "VIOLATED" },
        if verdicts.pass { "pass" } else { "FAIL" }
    );
    if verdicts.pass {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "sweep trend verdicts failed (K trend ok: {}, alpha trend ok: {}, \
             max ratio finite: {}); see sweep_verdicts.json",
            verdicts.k_trend_ok, verdicts.alpha_trend_ok, verdicts.max_ratio_finite
        )))
    }
}

/// Median reconstruction error per cell, then monotonicity with jitter along
/// each axis (ascending in the parameter, regardless of config list order).
fn judge_trends(
    reports: &[StabilityReport],
    k_list: &[f64],
    alpha_list: &[f64],
    max_ratio: f64,
    ctx: &Ctx,
) -> SweepVerdicts {
    let cell_median = |k: f64, alpha: f64| -> f64 {
        let errs: Vec<f64> = reports
            .iter()
            .filter(|r| r.k_max == k && r.alpha == alpha)
            .map(|r| r.err_l2)
            .collect();
        median(&errs)
    };
    let sorted = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
        v.dedup();
        v
    };
    let ks = sorted(k_list);
    let alphas = sorted(alpha_list);

    let mut per_alpha = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let medians: Vec<f64> = ks.iter().map(|&k| cell_median(k, alpha)).collect();
        let ok = medians
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + TREND_JITTER));
        per_alpha.push(TrendLine {
            fixed: alpha,
            varied: ks.clone(),
            medians,
            ok,
        });
    }
    let mut per_k = Vec::with_capacity(ks.len());
    for &k in &ks {
        let medians: Vec<f64> = alphas.iter().map(|&alpha| cell_median(k, alpha)).collect();
        let ok = medians
            .windows(2)
            .all(|w| w[1] >= w[0] * (1.0 - TREND_JITTER));
        per_k.push(TrendLine {
            fixed: k,
            varied: alphas.clone(),
            medians,
            ok,
        });
    }
    let k_trend_ok = per_alpha.iter().all(|t| t.ok);
    let alpha_trend_ok = per_k.iter().all(|t| t.ok);
    let max_ratio_finite = max_ratio.is_finite();
    SweepVerdicts {
        jitter: TREND_JITTER,
        k_trend_ok,
        alpha_trend_ok,
        max_ratio,
        max_ratio_finite,
        pass: k_trend_ok && alpha_trend_ok && max_ratio_finite,
        per_alpha,
        per_k,
        config_sha256: ctx.hash().to_string(),
    }
}

#[derive(Serialize)]
struct BoundsReport {
    k: f64,
    #[serde(rename = "K")]
    k_max: f64,
    eps2: f64,
    #[serde(rename = "E")]
    e_value: f64,
    alpha: f64,
    m_bound: f64,
    harmonic_measure_lb: f64,
    k_split: f64,
    stability_rhs: f64,
    config_sha256: String,
}

/// `bounds`: evaluate the closed-form bound functions at the configured
/// parameters, print them, and write them as JSON.
pub fn cmd_bounds(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.loaded.config;
    let om = cfg.require_omegas()?;
    let b = cfg.require_bounds()?;
    if !(om.k_max.is_finite() && om.k_max > 1.0) {
        return Err(CliError::Invalid(format!(
            "bounds require bandwidth K > 1, got {}",
            om.k_max
        )));
    }
    if !(b.k.is_finite() && b.k > 0.0) {
        return Err(CliError::Invalid(format!(
            "bounds k must be > 0, got {}",
            b.k
        )));
    }
    if !(b.eps2.is_finite() && b.eps2 > 0.0 && b.eps2 < 1.0) {
        return Err(CliError::Invalid(format!(
            "bounds eps2 must lie in (0, 1), got {}",
            b.eps2
        )));
    }
    if !(b.alpha.is_finite() && b.alpha >= 0.0) {
        return Err(CliError::Invalid(format!(
            "bounds alpha must be >= 0, got {}",
            b.alpha
        )));
    }
    if !(b.m_bound.is_finite() && b.m_bound >= 1.0) {
        return Err(CliError::Invalid(format!(
            "bounds m_bound must be >= 1 (source norms are normalized to at \
             least one), got {}",
            b.m_bound
        )));
    }
    // E = -ln ε = -½ ln ε².
    let e_value = -0.5 * b.eps2.ln();
    let report = BoundsReport {
        k: b.k,
        k_max: om.k_max,
        eps2: b.eps2,
        e_value,
        alpha: b.alpha,
        m_bound: b.m_bound,
        harmonic_measure_lb: harmonic_measure_lb(b.k, om.k_max),
        k_split: k_split(om.k_max, e_value),
        stability_rhs: stability_rhs(b.eps2, om.k_max, e_value, b.alpha, b.m_bound),
        config_sha256: ctx.hash().to_string(),
    };
    ctx.write_json("bounds.json", &report)?;
    println!(
        "bounds: K = {}, eps2 = {:.6e} (E = {:.6}), alpha = {}, M = {}",
        report.k_max, report.eps2, report.e_value, report.alpha, report.m_bound
    );
    println!(
        "  harmonic_measure_lb({}, {}) = {:.12e}",
        report.k, report.k_max, report.harmonic_measure_lb
    );
    println!(
        "  k_split({}, {:.6}) = {:.12e}",
        report.k_max, report.e_value, report.k_split
    );
    println!(
        "  stability_rhs = {:.12e}",
        report.stability_rhs
    );
    Ok(())
}
