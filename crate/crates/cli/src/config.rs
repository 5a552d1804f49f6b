//! JSON experiment configuration: schema, loading, path resolution and
//! hashing.
//!
//! A config file is a flat JSON object with the sections below. `medium`,
//! `grid` and `sources` are always required; each subcommand additionally
//! requires the sections it consumes and rejects configs that lack them.
//! Unknown keys are rejected everywhere so typos fail loudly.
//!
//! ```text
//! {
//!   "medium":  {"c_p": 1.0, "c_n": 1.5, "alpha": 0.5},
//!   "grid":    {"n": 257},
//!   "sources": {"bumps": {"f0": [{"center": -0.4, "width": 0.2, "amplitude": 1.0}],
//!                          "f1": []}},
//!   "omegas":  {"K": 20.0, "count": 120},
//!   "margin":  0.1,
//!   "noise":   {"eps2_target": 1e-6, "seeds": [1, 2, 3]},
//!   "regularization": {"lambda_min_factor": 1e-12, "lambda_max_factor": 1e4},
//!   "timedomain": {"t_final": 16.0, "h": 0.005, "courant": 0.9, "snapshots": 0},
//!   "crosscheck": {"tolerance": 0.02, "omega_min": 1.0},
//!   "sweep":   {"K_list": [5.0, 10.0], "alpha_list": [0.0, 1.0]},
//!   "bounds":  {"k": 25.0, "eps2": 1e-8, "alpha": 0.5, "m_bound": 1.0}
//! }
//! ```
//!
//! The `sources.csv` alternative (`"sources": {"csv": "path.csv"}`) points to
//! a `x,f0,f1` sample file; relative paths resolve against the directory of
//! the config file. All randomness flows from the explicit `noise.seeds`
//! list; nothing reads the clock or OS entropy.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use layered_helmholtz::inversion::DISCREPANCY_BRACKET;
use layered_helmholtz::medium::MediumConfig;
use layered_helmholtz::sources::{
    make_bump_pair, BumpSpec, SourceGrid, SourcePair, DEFAULT_SUPPORT_MARGIN,
};

use crate::CliError;

/// Top-level experiment configuration (see module docs for the schema).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub medium: MediumConfig,
    pub grid: GridSection,
    pub sources: SourcesSection,
    #[serde(default)]
    pub omegas: Option<OmegaSection>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub regularization: Option<RegularizationSection>,
    #[serde(default)]
    pub timedomain: Option<TimeSection>,
    #[serde(default)]
    pub crosscheck: Option<CrosscheckSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Node count of the source grid on [-1, 1]; odd, ≥ 33.
    pub n: usize,
}

/// Exactly one of `bumps` / `csv` must be present.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    #[serde(default)]
    pub bumps: Option<BumpSpec>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSection {
    /// Bandwidth: frequencies live on (0, K].
    #[serde(rename = "K")]
    pub k_max: f64,
    /// Number of frequency samples.
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Pinned post-noise data energy ε², in (0, 1).
    pub eps2_target: f64,
    /// Noise seeds. `invert` uses the first; `sweep` runs one cell repeat
    /// per seed.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    /// Lower end of the discrepancy search bracket for λ, as a multiple of
    /// the largest singular value.
    #[serde(default = "default_lambda_min")]
    pub lambda_min_factor: f64,
    /// Upper end of the bracket, same scale.
    #[serde(default = "default_lambda_max")]
    pub lambda_max_factor: f64,
}

fn default_lambda_min() -> f64 {
    DISCREPANCY_BRACKET.0
}

fn default_lambda_max() -> f64 {
    DISCREPANCY_BRACKET.1
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// Final time of the damped wave evolution.
    pub t_final: f64,
    /// Spatial step; must be the reciprocal of an integer.
    pub h: f64,
    /// Courant number dt/h, in (0, 0.95].
    #[serde(default = "default_courant")]
    pub courant: f64,
    /// Number of full-line snapshots to retain (0 = none).
    #[serde(default)]
    pub snapshots: usize,
}

fn default_courant() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosscheckSection {
    /// Pass threshold on the relative L² mismatch between the two solvers.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Lowest frequency compared (the band (0, omega_min) is excluded:
    /// both the finite-horizon Fourier transform and the boundary data
    /// ω·u(±1, ω) lose relative accuracy as ω → 0).
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
}

fn default_tolerance() -> f64 {
    0.02
}

fn default_omega_min() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Bandwidths, each > 1.
    #[serde(rename = "K_list")]
    pub k_list: Vec<f64>,
    /// Attenuations, each ≥ 0.
    pub alpha_list: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// Frequency at which the measure lower bound is evaluated.
    pub k: f64,
    /// Data energy ε², in (0, 1).
    pub eps2: f64,
    /// Attenuation α ≥ 0.
    pub alpha: f64,
    /// Source norm bound M ≥ 1.
    #[serde(default = "default_m_bound")]
    pub m_bound: f64,
}

fn default_m_bound() -> f64 {
    1.0
}

/// A parsed config plus its provenance: the SHA-256 of the raw file bytes
/// (stamped into every output) and the directory the file lives in (base for
/// relative paths inside the config).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
    pub base_dir: PathBuf,
}

/// Read, hash and parse a config file. Missing or malformed files are
/// invalid input; the error names the offending path.
pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::Invalid(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let sha256 = hex_string(&hasher.finalize());
    let config: ExperimentConfig = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Invalid(format!("malformed config {}: {e}", path.display()))
    })?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedConfig {
        config,
        sha256,
        base_dir,
    })
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl ExperimentConfig {
    /// Validated medium (serde bypasses the library constructor, so re-run
    /// its checks).
    pub fn medium(&self) -> Result<MediumConfig, CliError> {
        MediumConfig::new(self.medium.c_p, self.medium.c_n, self.medium.alpha)
            .map_err(CliError::from_lib)
    }

    /// Validated source grid.
    pub fn source_grid(&self) -> Result<SourceGrid, CliError> {
        SourceGrid::new(self.grid.n).map_err(CliError::from_lib)
    }

    /// Materialize the source pair on `grid`, either from bump lists or from
    /// a CSV whose grid must match `grid.n` exactly.
    pub fn source_pair(
        &self,
        grid: &SourceGrid,
        base_dir: &Path,
    ) -> Result<SourcePair, CliError> {
        match (&self.sources.bumps, &self.sources.csv) {
            (Some(spec), None) => make_bump_pair(grid, spec).map_err(CliError::from_lib),
            (None, Some(rel)) => {
                let path = if rel.is_absolute() {
                    rel.clone()
                } else {
                    base_dir.join(rel)
                };
                let bytes = fs::read(&path).map_err(|e| {
                    CliError::Invalid(format!(
                        "cannot read sources csv {}: {e}",
                        path.display()
                    ))
                })?;
                let (csv_grid, sp) =
                    SourcePair::from_csv(bytes.as_slice()).map_err(CliError::from_lib)?;
                if csv_grid.len() != grid.len() {
                    return Err(CliError::Invalid(format!(
                        "sources csv {} has {} nodes but the config grid has {}",
                        path.display(),
                        csv_grid.len(),
                        grid.len()
                    )));
                }
                Ok(sp)
            }
            (Some(_), Some(_)) => Err(CliError::Invalid(
                "sources section must set exactly one of 'bumps' and 'csv', got both".into(),
            )),
            (None, None) => Err(CliError::Invalid(
                "sources section must set exactly one of 'bumps' and 'csv', got neither".into(),
            )),
        }
    }

    /// The reconstruction window margin (validated).
    pub fn margin(&self) -> Result<f64, CliError> {
        let m = self.margin.unwrap_or(DEFAULT_SUPPORT_MARGIN);
        if !(m.is_finite() && m > 0.0 && m < 1.0) {
            return Err(CliError::Invalid(format!(
                "margin must lie in (0, 1), got {m}"
            )));
        }
        Ok(m)
    }

    /// The discrepancy search bracket, validated: `0 < lo < hi < ∞`.
    pub fn lambda_bracket(&self) -> Result<(f64, f64), CliError> {
        let (lo, hi) = match &self.regularization {
            Some(r) => (r.lambda_min_factor, r.lambda_max_factor),
            None => DISCREPANCY_BRACKET,
        };
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(CliError::Invalid(format!(
                "regularization lambda bracket must satisfy 0 < lambda_min_factor < \
                 lambda_max_factor < inf, got [{lo}, {hi}]"
            )));
        }
        Ok((lo, hi))
    }

    /// Required-section accessors: uniform "section missing" diagnostics.
    pub fn require_omegas(&self) -> Result<OmegaSection, CliError> {
        self.omegas.ok_or_else(|| {
            CliError::Invalid("this command requires an 'omegas' section ({K, count})".into())
        })
    }

    pub fn require_noise(&self) -> Result<&NoiseSection, CliError> {
        let n = self.noise.as_ref().ok_or_else(|| {
            CliError::Invalid(
                "this command requires a 'noise' section ({eps2_target, seeds})".into(),
            )
        })?;
        if !(n.eps2_target.is_finite() && n.eps2_target > 0.0 && n.eps2_target < 1.0) {
            return Err(CliError::Invalid(format!(
                "noise eps2_target must lie in (0, 1), got {}",
                n.eps2_target
            )));
        }
        if n.seeds.is_empty() {
            return Err(CliError::Invalid("noise seeds list must be nonempty".into()));
        }
        Ok(n)
    }

    pub fn require_timedomain(&self) -> Result<TimeSection, CliError> {
        self.timedomain.ok_or_else(|| {
            CliError::Invalid(
                "this command requires a 'timedomain' section ({t_final, h, courant, snapshots})"
                    .into(),
            )
        })
    }

    pub fn require_sweep(&self) -> Result<&SweepSection, CliError> {
        self.sweep.as_ref().ok_or_else(|| {
            CliError::Invalid("this command requires a 'sweep' section ({K_list, alpha_list})".into())
        })
    }

    pub fn require_bounds(&self) -> Result<BoundsSection, CliError> {
        self.bounds.ok_or_else(|| {
            CliError::Invalid(
                "this command requires a 'bounds' section ({k, eps2, alpha, m_bound})".into(),
            )
        })
    }
}
