//! The `reduce-check` subcommand: verify a dimensional reduction's two
//! projection routes against each other on rough random data, then run a
//! short reduced flow and log its structure residuals.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use holoflow::flow::{integrator_by_name, system_by_name, Flow, FlowError};
use holoflow::lattice::init::{band_limited, band_limited_eval, BandLimited};
use holoflow::lattice::{Field, GaugeField, Grid};
use holoflow::liealg::LieAlgebra;
use holoflow::monitors::reduction::Reduction;
use holoflow::util::gaussian;

use crate::{fmt_num, Failure};

#[derive(Serialize)]
struct ReduceSummary {
    case: String,
    seed: u64,
    pi7: Pi7Summary,
    flow_steps: u64,
    t_final: f64,
    monitors_initial: Vec<MonitorEntry>,
    monitors_final: Vec<MonitorEntry>,
    sup_phi_initial: Vec<f64>,
    sup_phi_final: Vec<f64>,
    /// Whether every sup |Phi_i| was non-increasing along the run.
    max_principle_ok: bool,
}

#[derive(Serialize)]
struct Pi7Summary {
    discrepancy: f64,
    scale: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MonitorEntry {
    name: String,
    value: f64,
}

fn check_grid(red: &Reduction) -> Arc<Grid> {
    // Resolution is irrelevant to the projection identity (it is pointwise),
    // so keep the grids small; K3 gets a finer base since it is cheap.
    let per_axis = if red.base_n == 4 { 8 } else { 4 };
    let shape = vec![per_axis; red.base_n];
    let periods = vec![1.0; red.base_n];
    Grid::new(&shape, &periods)
}

/// Rough site-independent noise: the harshest data the projection identity
/// must survive, since nothing is smooth or band-limited about it.
fn rough_gauge(red: &Reduction, grid: &Arc<Grid>, lie: usize, seed: u64) -> GaugeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Field::zeros(grid, 1, lie);
    for v in a.data.iter_mut() {
        *v = 0.8 * gaussian(&mut rng);
    }
    let mut higgs = Vec::with_capacity(red.n_higgs);
    for _ in 0..red.n_higgs {
        let mut p = Field::zeros(grid, 0, lie);
        for v in p.data.iter_mut() {
            *v = 0.7 * gaussian(&mut rng);
        }
        higgs.push(p);
    }
    GaugeField { a, higgs }
}

fn smooth_gauge(
    grid: &Arc<Grid>,
    lie: usize,
    n_higgs: usize,
    seed: u64,
) -> GaugeField {
    let a_cfg = BandLimited { k_max: 1, modes: None, amplitude: 0.05, seed };
    let a = band_limited(grid, lie, &a_cfg);
    let mut higgs = Vec::with_capacity(n_higgs);
    for i in 0..n_higgs {
        let h_cfg = BandLimited {
            k_max: 1,
            modes: None,
            amplitude: 0.05,
            seed: seed.wrapping_add(1000 + i as u64),
        };
        let mut phi = Field::zeros(grid, 0, lie);
        band_limited_eval(grid, lie, &h_cfg, |site, vals| {
            phi.site_mut(site).copy_from_slice(vals);
        });
        higgs.push(phi);
    }
    GaugeField { a, higgs }
}

fn monitor_failure(e: holoflow::monitors::MonitorError) -> Failure {
    Failure::Other(format!("monitor: {e}"))
}

pub fn reduce_check(case: &str, steps: u64, seed: u64, out_dir: &Path) -> Result<(), Failure> {
    let red = Reduction::by_name(case).map_err(|e| Failure::Usage(e.to_string()))?;
    let alg = LieAlgebra::su2();
    let lie = alg.dim;
    let grid = check_grid(&red);

    let noisy = rough_gauge(&red, &grid, lie, seed.wrapping_add(1));
    let check = red.pi7_check(&alg, &noisy).map_err(monitor_failure)?;
    let tolerance = 1e-10 * check.scale.max(1.0);
    let pass = check.discrepancy <= tolerance;
    let status = if pass { "ok  " } else { "FAIL" };
    println!(
        "{status} {} projection identity: closed vs spectral discrepancy {} \
         (scale {}, tol {})",
        red.name,
        fmt_num(check.discrepancy),
        fmt_num(check.scale),
        fmt_num(tolerance)
    );
    if !pass {
        return Err(Failure::Identity(format!(
            "{}: closed-form projection deviates from the spectral projector by {}",
            red.name,
            fmt_num(check.discrepancy)
        )));
    }

    // Short reduced-flow run. The su4 case has no Higgs sector; the flow
    // there is plain Yang-Mills on the eight-torus.
    let (system_name, flow_steps) = match red.name {
        "su4" => ("ym", steps.min(5)),
        other => (other, steps),
    };
    let system = system_by_name(system_name).map_err(|e| Failure::Other(e.to_string()))?;
    let gauge = smooth_gauge(&grid, lie, system.n_higgs(), seed.wrapping_add(2));
    let integrator = integrator_by_name("rk4").map_err(|e| Failure::Other(e.to_string()))?;
    let mut flow =
        Flow::new(system, integrator, alg, gauge).map_err(|e| Failure::Other(e.to_string()))?;

    let monitor_names: Vec<String> = red
        .monitored(&flow.alg, &flow.state.gauge)
        .map_err(monitor_failure)?
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut header = String::from("t,dt");
    for n in &monitor_names {
        header.push(',');
        header.push_str(n);
    }
    for i in 0..red.n_higgs {
        header.push_str(&format!(",sup_phi_{i}"));
    }

    let mut rows: Vec<String> = Vec::new();
    let mut sup_history: Vec<Vec<f64>> = Vec::new();
    let monitors_at = |flow: &Flow, dt: f64, rows: &mut Vec<String>| -> Result<Vec<f64>, Failure> {
        let vals = red
            .monitored(&flow.alg, &flow.state.gauge)
            .map_err(monitor_failure)?;
        let sups: Vec<f64> = flow.state.gauge.higgs.iter().map(Field::sup_norm).collect();
        let mut row = format!("{},{}", fmt_num(flow.state.t), fmt_num(dt));
        for (_, v) in &vals {
            row.push(',');
            row.push_str(&fmt_num(*v));
        }
        for s in &sups {
            row.push(',');
            row.push_str(&fmt_num(*s));
        }
        rows.push(row);
        Ok(sups)
    };

    let initial = red
        .monitored(&flow.alg, &flow.state.gauge)
        .map_err(monitor_failure)?;
    sup_history.push(monitors_at(&flow, 0.0, &mut rows)?);

    let mut aborted: Option<String> = None;
    let mut taken = 0u64;
    for _ in 0..flow_steps {
        match flow.step() {
            Ok(report) => {
                taken += 1;
                sup_history.push(monitors_at(&flow, report.dt, &mut rows)?);
            }
            Err(e @ (FlowError::Blowup { .. } | FlowError::StepStuck { .. })) => {
                aborted = Some(e.to_string());
                break;
            }
            Err(e) => return Err(Failure::Other(e.to_string())),
        }
    }
    let final_monitors = red
        .monitored(&flow.alg, &flow.state.gauge)
        .map_err(monitor_failure)?;

    // Scalars obey a maximum principle under the reduced flow; a tiny
    // relative slack absorbs time-discretization error.
    let mut max_principle_ok = true;
    for pair in sup_history.windows(2) {
        for (prev, next) in pair[0].iter().zip(&pair[1]) {
            if *next > prev * (1.0 + 1e-9) + 1e-12 {
                max_principle_ok = false;
            }
        }
    }

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Other(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join(format!("reduce_{}.csv", red.name));
    let mut csv = String::with_capacity(rows.len() * 64);
    csv.push_str(&header);
    csv.push_str("\r\n");
    for row in &rows {
        csv.push_str(row);
        csv.push_str("\r\n");
    }
    fs::write(&csv_path, csv)
        .map_err(|e| Failure::Other(format!("writing {}: {e}", csv_path.display())))?;

    let summary = ReduceSummary {
        case: red.name.to_string(),
        seed,
        pi7: Pi7Summary {
            discrepancy: check.discrepancy,
            scale: check.scale,
            tolerance,
            pass,
        },
        flow_steps: taken,
        t_final: flow.state.t,
        monitors_initial: initial
            .into_iter()
            .map(|(name, value)| MonitorEntry { name, value })
            .collect(),
        monitors_final: final_monitors
            .into_iter()
            .map(|(name, value)| MonitorEntry { name, value })
            .collect(),
        sup_phi_initial: sup_history.first().cloned().unwrap_or_default(),
        sup_phi_final: sup_history.last().cloned().unwrap_or_default(),
        max_principle_ok,
    };
    let summary_path = out_dir.join(format!("reduce_{}.json", red.name));
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::Other(format!("serializing summary: {e}")))?;
    fs::write(&summary_path, text + "\n")
        .map_err(|e| Failure::Other(format!("writing {}: {e}", summary_path.display())))?;

    println!(
        "flow: {} steps to t = {}, max principle {}",
        taken,
        fmt_num(flow.state.t),
        if max_principle_ok { "holds" } else { "VIOLATED" }
    );
    for e in &summary.monitors_final {
        println!("  {} = {}", e.name, fmt_num(e.value));
    }
    println!("series:  {}", csv_path.display());
    println!("summary: {}", summary_path.display());
    let _ = std::io::stdout().flush();

    if let Some(reason) = aborted {
        return Err(Failure::Blowup(reason));
    }
    Ok(())
}
