//! Run configuration: a single JSON document, validated field by field
//! before anything is allocated. Every key has a default except the grid,
//! the geometry, the initial-data seed and amplitude, and the duration.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use holoflow::flow::{INTEGRATOR_NAMES, SYSTEM_NAMES};
use holoflow::geometry::{parse_family, GeometryContext};

use crate::Failure;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Calibration family for the curvature splitting (`four`, `kahler<k>`,
    /// `quatkahler<k>`, `g2`, `spin7`). Its dimension must match the grid.
    pub geometry: String,
    pub grid: GridSpec,
    pub init: InitSpec,
    /// Flow system; reduced systems carry Higgs fields.
    #[serde(default = "default_system")]
    pub system: String,
    #[serde(default = "default_integrator")]
    pub integrator: String,
    /// Override of the step-size safety factor (default 0.1 / n).
    #[serde(default)]
    pub c_cfl: Option<f64>,
    pub duration: DurationSpec,
    /// Record a monitor row every this many accepted steps.
    #[serde(default = "default_one")]
    pub sample_every: u64,
    /// Cluster index excluded from the F-plus sup norm (default 0, the
    /// instanton eigenvalue).
    #[serde(default)]
    pub beta: usize,
    #[serde(default)]
    pub probes: Vec<ProbeCfg>,
    #[serde(default)]
    pub cutoff: Option<CutoffCfg>,
    /// Concentration threshold for the final singular-candidate scan.
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    /// Write a state snapshot every this many steps; 0 disables periodic
    /// snapshots.
    #[serde(default)]
    pub snapshot_every: u64,
    #[serde(default = "default_true")]
    pub snapshot_final: bool,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub shape: Vec<usize>,
    /// Torus periods; default 1.0 per axis.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// `band_limited` or `kahler_compatible`.
    #[serde(default = "default_ansatz")]
    pub ansatz: String,
    pub seed: u64,
    /// Keep Fourier modes with |k| <= k_max.
    #[serde(default = "default_k_max")]
    pub k_max: i32,
    /// Optional subsample of the mode band.
    #[serde(default)]
    pub modes: Option<usize>,
    /// Target root-mean-square of |A| over the torus.
    pub amplitude: f64,
    /// Root-mean-square of each Higgs scalar (reduced systems only).
    #[serde(default)]
    pub higgs_amplitude: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DurationSpec {
    Steps { steps: u64 },
    TEnd { t_end: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCfg {
    pub x: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffCfg {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_snapshot_prefix")]
    pub snapshot_prefix: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            csv: default_csv(),
            summary: default_summary(),
            snapshot_prefix: default_snapshot_prefix(),
        }
    }
}

fn default_system() -> String {
    "ym".into()
}
fn default_integrator() -> String {
    "rk4".into()
}
fn default_ansatz() -> String {
    "band_limited".into()
}
fn default_one() -> u64 {
    1
}
fn default_k_max() -> i32 {
    2
}
fn default_eps0() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_csv() -> String {
    "series.csv".into()
}
fn default_summary() -> String {
    "summary.json".into()
}
fn default_snapshot_prefix() -> String {
    "state".into()
}

pub fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    // serde_json reports line and column on both syntax and schema errors.
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

/// Every constraint checked up front so a bad config never starts a run.
/// Returns the geometry context (the splitting is needed downstream anyway).
pub fn validate(cfg: &RunConfig) -> Result<GeometryContext, Failure> {
    let mut errs = String::new();
    let mut fail = |m: &str| {
        let _ = writeln!(errs, "  {m}");
    };

    let family = match parse_family(&cfg.geometry) {
        Ok(f) => Some(f),
        Err(e) => {
            fail(&format!("geometry: {e}"));
            None
        }
    };
    let n = cfg.grid.shape.len();
    if n == 0 {
        fail("grid.shape: must not be empty");
    }
    for (i, &s) in cfg.grid.shape.iter().enumerate() {
        if s < 4 {
            fail(&format!(
                "grid.shape[{i}]: {s} sites; central stencils need at least 4"
            ));
        }
    }
    if let Some(p) = &cfg.grid.periods {
        if p.len() != n {
            fail(&format!(
                "grid.periods: {} entries for {} axes",
                p.len(),
                n
            ));
        }
        for (i, &v) in p.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                fail(&format!("grid.periods[{i}]: must be positive, got {v}"));
            }
        }
    }
    if let Some(f) = &family {
        if f.dim() != n {
            fail(&format!(
                "geometry {} lives in dimension {}, grid has {} axes",
                cfg.geometry,
                f.dim(),
                n
            ));
        }
    }

    match cfg.init.ansatz.as_str() {
        "band_limited" => {}
        "kahler_compatible" => {
            if n % 2 != 0 {
                fail("init.ansatz: kahler_compatible needs an even-dimensional grid");
            }
        }
        other => fail(&format!(
            "init.ansatz: unknown ansatz {other:?} (band_limited, kahler_compatible)"
        )),
    }
    if cfg.init.k_max < 1 {
        fail("init.k_max: must be at least 1");
    }
    if cfg.init.modes == Some(0) {
        fail("init.modes: must be positive when given");
    }
    if !(cfg.init.amplitude >= 0.0 && cfg.init.amplitude.is_finite()) {
        fail("init.amplitude: must be a finite non-negative number");
    }
    if !(cfg.init.higgs_amplitude >= 0.0 && cfg.init.higgs_amplitude.is_finite()) {
        fail("init.higgs_amplitude: must be a finite non-negative number");
    }

    if !SYSTEM_NAMES.contains(&cfg.system.as_str()) {
        fail(&format!(
            "system: unknown system {:?} (have {:?})",
            cfg.system, SYSTEM_NAMES
        ));
    }
    if !INTEGRATOR_NAMES.contains(&cfg.integrator.as_str()) {
        fail(&format!(
            "integrator: unknown integrator {:?} (have {:?})",
            cfg.integrator, INTEGRATOR_NAMES
        ));
    }
    if let Some(c) = cfg.c_cfl {
        if !(c > 0.0 && c.is_finite()) {
            fail(&format!("c_cfl: must be positive, got {c}"));
        }
    }
    match &cfg.duration {
        DurationSpec::Steps { steps } => {
            if *steps == 0 {
                fail("duration.steps: must be at least 1");
            }
        }
        DurationSpec::TEnd { t_end } => {
            if !(*t_end > 0.0 && t_end.is_finite()) {
                fail(&format!("duration.t_end: must be positive, got {t_end}"));
            }
        }
    }
    if cfg.sample_every == 0 {
        fail("sample_every: must be at least 1");
    }
    for (i, p) in cfg.probes.iter().enumerate() {
        if p.x.len() != n {
            fail(&format!(
                "probes[{i}].x: {} coordinates for {} axes",
                p.x.len(),
                n
            ));
        }
        if !(p.r > 0.0 && p.r.is_finite()) {
            fail(&format!("probes[{i}].r: must be positive, got {}", p.r));
        }
    }
    if let Some(c) = &cfg.cutoff {
        if c.center.len() != n {
            fail(&format!(
                "cutoff.center: {} coordinates for {} axes",
                c.center.len(),
                n
            ));
        }
        let min_period = cfg
            .grid
            .periods
            .as_ref()
            .map(|p| p.iter().cloned().fold(f64::INFINITY, f64::min))
            .unwrap_or(1.0);
        if !(c.radius > 0.0 && c.radius <= 0.5 * min_period) {
            fail(&format!(
                "cutoff.radius: must lie in (0, {}], got {}",
                0.5 * min_period,
                c.radius
            ));
        }
    }
    if !(cfg.eps0 > 0.0 && cfg.eps0.is_finite()) {
        fail(&format!("eps0: must be positive, got {}", cfg.eps0));
    }
    for (key, name) in [
        (&cfg.outputs.csv, "outputs.csv"),
        (&cfg.outputs.summary, "outputs.summary"),
        (&cfg.outputs.snapshot_prefix, "outputs.snapshot_prefix"),
    ] {
        if key.is_empty() {
            fail(&format!("{name}: must not be empty"));
        }
    }

    if !errs.is_empty() {
        return Err(Failure::Usage(format!("invalid config:\n{errs}")));
    }
    let family = family.expect("family parse failure already reported");
    let ctx = GeometryContext::new(family.as_ref())
        .map_err(|e| Failure::Usage(format!("geometry: {e}")))?;
    if cfg.beta >= ctx.split.lambdas.len() {
        return Err(Failure::Usage(format!(
            "beta: cluster index {} out of range; {} has {} clusters",
            cfg.beta,
            cfg.geometry,
            ctx.split.lambdas.len()
        )));
    }
    Ok(ctx)
}
