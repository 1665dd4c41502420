//! Command-line front end: identity suites, flow runs driven by a JSON
//! config, reduction checks, and summary reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod algebra;
mod config;
mod reduce;
mod runcmd;

/// Failures carry the exit code contract: usage and config problems exit 2,
/// identity-suite failures exit 3, flow aborts exit 4, everything else 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Identity(String),
    Blowup(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Identity(_) => 3,
            Failure::Blowup(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Identity(m) | Failure::Blowup(m) | Failure::Other(m) => m,
        }
    }
}

/// Numbers are printed with the shortest round-trip formatting so reruns of
/// the same config are byte-identical.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

const CONFIG_HELP: &str = "\
CONFIG FILE (JSON object, passed with --config; required by `run`):
  geometry              calibration family: \"four\", \"kahler<k>\", \"quatkahler<k>\",
                        \"g2\", \"spin7\"
  grid.shape            sites per axis (each >= 4); its length is the torus dimension
                        and must match the family dimension
  grid.periods          axis lengths (optional; default 1.0 per axis)
  init.ansatz           \"band_limited\" (default) or \"kahler_compatible\" (even dim)
  init.seed             u64 seed for the initial data; --seed overrides it
  init.k_max            Fourier band limit of the ansatz (default 2)
  init.modes            number of random modes (optional; default fills the band)
  init.amplitude        RMS amplitude of the connection (0 gives the flat fixed point)
  init.higgs_amplitude  RMS amplitude of the Higgs scalars (default 0)
  system                \"ym\" (default), \"k3\", \"cy3\", \"g2mono\"
  integrator            \"rk4\" (default) or \"euler\"
  c_cfl                 CFL constant for automatic step control (optional override)
  duration              {\"steps\": N} or {\"t_end\": T}
  sample_every          record a CSV row every N accepted steps (default 1)
  beta                  index of the eigenvalue cluster excluded from the F-plus
                        sup norm (default 0, the instanton cluster; under a
                        kahler_compatible run the K column is then sup |F^omega|)
  probes                [{\"x\": [..], \"r\": r}, ..] local energy probes Phi(x, r)
  cutoff                {\"center\": [..], \"radius\": r} cutoff-weighted energy
                        (optional; radius at most half the shortest period)
  eps0                  threshold for the singular-candidate scan (default 0.5)
  snapshot_every        write a state snapshot every N steps (0 = never, default)
  snapshot_final        write the final state snapshot (default true)
  outputs.csv           series file name (default \"series.csv\")
  outputs.summary       summary file name (default \"summary.json\")
  outputs.snapshot_prefix  snapshot file prefix (default \"state\")

The energy_identity_residual column audits the discrete identity
dE/dt = -2 * dissipation in the curvature sector. It is exact for system
\"ym\"; the reduced systems omit the Higgs-sector dissipation from this
audit, so treat it there as a curvature-sector diagnostic only.

Outputs are deterministic: the same config, seed, and thread count produce
byte-identical CSV and summary files, and results do not depend on the
thread count.

EXIT CODES:
  0  success
  2  invalid arguments or config
  3  identity-suite failure
  4  flow aborted on a blowup
";

#[derive(Parser)]
#[command(
    name = "holoflow",
    version,
    about = "Yang-Mills gradient flow on flat special-holonomy tori",
    after_help = CONFIG_HELP
)]
struct Cli {
    /// Size of the rayon thread pool (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for reports, series, and snapshots.
    #[arg(long, global = true, default_value = "holoflow-out")]
    out: PathBuf,

    /// Seed override; takes precedence over the config's init.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON run configuration (see the config key listing below).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the exact-algebra identity suites and write algebra_report.json.
    AlgebraVerify {
        /// Restrict to specific families (repeatable); default runs all.
        #[arg(long = "family")]
        families: Vec<String>,
        /// Random frames per comass estimate.
        #[arg(long, default_value_t = 10000)]
        frames: usize,
        /// Random samples per product-identity check.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Perturb the calibration first; the suite must then fail (exit 3).
        #[arg(long)]
        corrupt_calibration: bool,
    },
    /// Evolve the flow described by --config and write series + summary.
    Run,
    /// Verify a dimensional reduction's projection algebra, then run a short
    /// reduced flow and log its residuals.
    ReduceCheck {
        /// Reduction case: k3, cy3, g2mono, or su4.
        #[arg(long, default_value = "k3")]
        case: String,
        /// Steps of the short reduced-flow run.
        #[arg(long, default_value_t = 20)]
        steps: u64,
    },
    /// Print a digest of a run summary (a summary.json or its directory).
    Report {
        /// Summary file or run directory; default is the --out directory.
        path: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::AlgebraVerify {
            families,
            frames,
            samples,
            corrupt_calibration,
        } => {
            let params = algebra::SuiteParams {
                seed: cli.seed.unwrap_or(0),
                frames,
                samples,
                corrupt: corrupt_calibration,
            };
            let report = algebra::run_suite(&families, &params)?;
            algebra::print_and_store(&report, &cli.out)?;
            if !report.all_pass {
                let first = report
                    .checks
                    .iter()
                    .find(|c| !c.pass)
                    .map(|c| format!("{}/{}", c.family, c.check))
                    .unwrap_or_default();
                return Err(Failure::Identity(format!("identity check failed: {first}")));
            }
            Ok(())
        }
        Cmd::Run => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Failure::Usage("run requires --config PATH".into()))?;
            runcmd::run(path, cli.seed, &cli.out)
        }
        Cmd::ReduceCheck { case, steps } => {
            reduce::reduce_check(&case, steps, cli.seed.unwrap_or(0), &cli.out)
        }
        Cmd::Report { path } => runcmd::report(path.as_deref().unwrap_or(&cli.out)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
