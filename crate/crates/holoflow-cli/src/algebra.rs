//! The exact-algebra identity suites behind `algebra-verify`: spectra,
//! product identities, comass estimates, and the pointwise trace-wedge
//! identity, each reported with its residual and tolerance.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use holoflow::exterior::eigen::{eigen_split, lpsi_matrix};
use holoflow::exterior::KForm;
use holoflow::g2ops::{one_form_into_phi, product_identity_residuals, G2Context};
use holoflow::geometry::{comass_max, parse_family, CalibrationFamily, GeometryContext};
use holoflow::liealg::{double_bracket_real, wedge_trace, AdValuedForm};

use crate::{fmt_num, Failure};

pub const DEFAULT_FAMILIES: [&str; 9] = [
    "four",
    "kahler2",
    "kahler3",
    "kahler4",
    "kahler5",
    "quatkahler2",
    "quatkahler3",
    "g2",
    "spin7",
];

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub family: String,
    pub check: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    fn new(family: &str, check: &'static str, residual: f64, tolerance: f64) -> CheckResult {
        CheckResult {
            family: family.to_string(),
            check,
            residual,
            tolerance,
            pass: residual <= tolerance,
            detail: None,
        }
    }

    fn failed(family: &str, check: &'static str, tolerance: f64, detail: String) -> CheckResult {
        CheckResult {
            family: family.to_string(),
            check,
            residual: f64::INFINITY,
            tolerance,
            pass: false,
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AlgebraReport {
    pub seed: u64,
    pub frames: usize,
    pub samples: usize,
    pub corrupted: bool,
    pub all_pass: bool,
    pub checks: Vec<CheckResult>,
}

pub struct SuiteParams {
    pub seed: u64,
    pub frames: usize,
    pub samples: usize,
    pub corrupt: bool,
}

fn spectrum_check(family: &dyn CalibrationFamily, psi: &KForm) -> CheckResult {
    let n = family.dim();
    let name = family.name();
    let d = n * (n - 1) / 2;
    let split = match eigen_split(&lpsi_matrix(psi), d) {
        Ok(s) => s,
        Err(e) => return CheckResult::failed(&name, "spectrum", 1e-10, e.to_string()),
    };
    let expected = family.expected_spectrum();
    let got: Vec<(f64, usize)> = split
        .lambdas
        .iter()
        .cloned()
        .zip(split.multiplicities.iter().cloned())
        .collect();
    if got.len() != expected.len() || got.iter().zip(&expected).any(|(g, e)| g.1 != e.1) {
        return CheckResult::failed(
            &name,
            "spectrum",
            1e-10,
            format!("clusters {got:?}, expected {expected:?}"),
        );
    }
    let residual = got
        .iter()
        .zip(&expected)
        .map(|(g, e)| (g.0 - e.0).abs())
        .fold(0.0, f64::max);
    CheckResult::new(&name, "spectrum", residual, 1e-10)
}

fn comass_check(family: &dyn CalibrationFamily, psi: &KForm, frames: usize, seed: u64) -> CheckResult {
    let peak = comass_max(psi, frames, seed);
    CheckResult::new(&family.name(), "comass", (peak - 1.0).max(0.0), 1e-9)
}

/// Pointwise `<F ^ F> ^ Psi = sum_alpha lambda_alpha |F^alpha|^2 dV` on
/// random ad-valued 2-forms; the splitting always comes from the clean
/// calibration so a corrupted `psi` shows up as an O(1) residual.
fn trace_wedge_check(
    family: &dyn CalibrationFamily,
    psi: &KForm,
    seed: u64,
) -> Result<CheckResult, Failure> {
    let name = family.name();
    let ctx = GeometryContext::new(family)
        .map_err(|e| Failure::Other(format!("{name}: cannot build splitting: {e}")))?;
    let n = family.dim();
    let d = n * (n - 1) / 2;
    let lie = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut col = vec![0.0; d];
    let mut proj = vec![0.0; d];
    for _ in 0..100 {
        let mut f = AdValuedForm::zero(n, 2, lie);
        for c in f.c.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let lhs = wedge_trace(&f, &f).wedge(psi).c[0];
        let mut rhs = 0.0;
        for (alpha, &lambda) in ctx.split.lambdas.iter().enumerate() {
            let mut part = 0.0;
            for a in 0..lie {
                for i in 0..d {
                    col[i] = f.c[i * lie + a];
                }
                ctx.split.project(alpha, &col, &mut proj);
                part += proj.iter().map(|v| v * v).sum::<f64>();
            }
            rhs += lambda * part;
        }
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    Ok(CheckResult::new(&name, "trace_wedge", worst, 1e-10))
}

fn product_identity_checks(seed: u64, samples: usize) -> Vec<CheckResult> {
    let ctx = G2Context::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..samples {
        let mut a = KForm::zero(7, 1);
        let mut b = KForm::zero(7, 1);
        let mut g = KForm::zero(7, 2);
        for c in a.c.iter_mut().chain(b.c.iter_mut()).chain(g.c.iter_mut()) {
            *c = rng.gen_range(-1.0..1.0);
        }
        let g14 = ctx.project14(&g);
        for (w, r) in worst
            .iter_mut()
            .zip(product_identity_residuals(&ctx, &a, &b, &g14))
        {
            *w = w.max(r);
        }
    }
    let names = [
        "product_action",
        "product_seven_part",
        "product_fourteen_part",
        "product_full_bracket",
    ];
    let mut out: Vec<CheckResult> = names
        .iter()
        .zip(worst)
        .map(|(check, r)| CheckResult::new("g2", check, r, 1e-12))
        .collect();

    // Frozen instance: [[e0 -| phi, e1 -| phi]] = -3 e^{01} + 2 e2 -| phi.
    let e = |i: usize| {
        let mut v = KForm::zero(7, 1);
        v.c[i] = 1.0;
        v
    };
    let lhs = double_bracket_real(
        &one_form_into_phi(&ctx, &e(0)),
        &one_form_into_phi(&ctx, &e(1)),
    );
    let want = KForm::basis_element(7, &[0, 1])
        .scale(-3.0)
        .add(&one_form_into_phi(&ctx, &e(2)).scale(2.0));
    out.push(CheckResult::new(
        "g2",
        "product_frozen_instance",
        lhs.sub(&want).norm(),
        1e-12,
    ));
    out
}

pub fn run_suite(families: &[String], params: &SuiteParams) -> Result<AlgebraReport, Failure> {
    let selected: Vec<String> = if families.is_empty() {
        DEFAULT_FAMILIES.iter().map(|s| s.to_string()).collect()
    } else {
        families.to_vec()
    };
    let mut checks = Vec::new();
    for name in &selected {
        let family =
            parse_family(name).map_err(|e| Failure::Usage(format!("family {name:?}: {e}")))?;
        let mut psi = family.calibration();
        if params.corrupt {
            psi.c[0] += 0.05;
        }
        checks.push(spectrum_check(family.as_ref(), &psi));
        checks.push(comass_check(
            family.as_ref(),
            &psi,
            params.frames,
            params.seed,
        ));
        checks.push(trace_wedge_check(family.as_ref(), &psi, params.seed)?);
        if name == "g2" {
            checks.extend(product_identity_checks(params.seed, params.samples));
        }
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AlgebraReport {
        seed: params.seed,
        frames: params.frames,
        samples: params.samples,
        corrupted: params.corrupt,
        all_pass,
        checks,
    })
}

pub fn print_and_store(report: &AlgebraReport, out_dir: &Path) -> Result<(), Failure> {
    for c in &report.checks {
        let status = if c.pass { "ok  " } else { "FAIL" };
        let detail = c
            .detail
            .as_deref()
            .map(|d| format!("  [{d}]"))
            .unwrap_or_default();
        println!(
            "{status} {:<14} {:<24} residual {} (tol {}){detail}",
            c.family,
            c.check,
            fmt_num(c.residual),
            fmt_num(c.tolerance)
        );
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Other(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("algebra_report.json");
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Failure::Other(format!("serializing report: {e}")))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| Failure::Other(format!("writing {}: {e}", path.display())))?;
    println!("report: {}", path.display());
    Ok(())
}
