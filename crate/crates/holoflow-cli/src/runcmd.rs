//! The `run` subcommand: build the flow from a validated config, evolve it,
//! and write the series CSV, snapshots, and a summary JSON. Also the
//! `report` digest over a previously written summary.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use holoflow::flow::{integrator_by_name, system_by_name, Flow, FlowError};
use holoflow::lattice::init::{band_limited, band_limited_eval, kahler_compatible, BandLimited};
use holoflow::lattice::snapshot::write_snapshot;
use holoflow::lattice::{Field, GaugeField, Grid};
use holoflow::liealg::LieAlgebra;
use holoflow::monitors::{
    blowup_report, hamilton_check, singular_candidates, CutoffSpec, ProbeSpec, RunRecorder,
};

use crate::config::{self, DurationSpec, RunConfig};
use crate::{fmt_num, Failure};

#[derive(Serialize)]
struct Summary {
    config: RunConfig,
    /// Seed actually used (--seed override wins over init.seed).
    seed: u64,
    aborted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    abort_reason: Option<String>,
    steps_taken: u64,
    samples: usize,
    t_final: f64,
    e_initial: f64,
    e_final: f64,
    energy_identity_residual: f64,
    final_record: FinalRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    hamilton: Option<HamiltonSummary>,
    blowup: BlowupSummary,
    singular_candidates: Vec<CandidateSummary>,
}

#[derive(Serialize)]
struct FinalRecord {
    t: f64,
    e: f64,
    k: f64,
    l: f64,
    int_k_dt: f64,
    phi: Vec<f64>,
}

#[derive(Serialize)]
struct HamiltonSummary {
    horizon: f64,
    pairs: usize,
    worst_violation: f64,
    worst_relative: f64,
}

#[derive(Serialize)]
struct BlowupSummary {
    int_k_dt: f64,
    max_l: f64,
    log_l_change: f64,
    bound_ratio: f64,
}

#[derive(Serialize)]
struct CandidateSummary {
    site: usize,
    x: Vec<f64>,
    phi: f64,
}

fn build_gauge(cfg: &RunConfig, seed: u64, n_higgs: usize) -> GaugeField {
    let n = cfg.grid.shape.len();
    let periods = cfg
        .grid
        .periods
        .clone()
        .unwrap_or_else(|| vec![1.0; n]);
    let grid = Grid::new(&cfg.grid.shape, &periods);
    let lie = LieAlgebra::su2().dim;
    let a_cfg = BandLimited {
        k_max: cfg.init.k_max,
        modes: cfg.init.modes,
        amplitude: cfg.init.amplitude,
        seed,
    };
    let a = match cfg.init.ansatz.as_str() {
        "kahler_compatible" => kahler_compatible(&grid, lie, &a_cfg),
        _ => band_limited(&grid, lie, &a_cfg),
    };
    let mut higgs = Vec::with_capacity(n_higgs);
    for i in 0..n_higgs {
        let h_cfg = BandLimited {
            k_max: cfg.init.k_max,
            modes: cfg.init.modes,
            amplitude: cfg.init.higgs_amplitude,
            seed: seed.wrapping_add(1000 + i as u64),
        };
        let mut phi = Field::zeros(&grid, 0, lie);
        band_limited_eval(&grid, lie, &h_cfg, |site, vals| {
            phi.site_mut(site).copy_from_slice(vals);
        });
        higgs.push(phi);
    }
    GaugeField { a, higgs }
}

fn snapshot_fields(g: &GaugeField) -> Vec<(String, &Field)> {
    let mut fields = vec![("a".to_string(), &g.a)];
    for (i, phi) in g.higgs.iter().enumerate() {
        fields.push((format!("higgs{i}"), phi));
    }
    fields
}

fn write_state(path: &Path, g: &GaugeField) -> Result<(), Failure> {
    let named = snapshot_fields(g);
    let borrowed: Vec<(&str, &Field)> = named.iter().map(|(n, f)| (n.as_str(), *f)).collect();
    write_snapshot(path, &borrowed)
        .map_err(|e| Failure::Other(format!("writing snapshot {}: {e}", path.display())))
}

fn monitor_failure(e: holoflow::monitors::MonitorError) -> Failure {
    Failure::Other(format!("monitor: {e}"))
}

pub fn run(config_path: &Path, seed_override: Option<u64>, out_dir: &Path) -> Result<(), Failure> {
    let cfg = config::load(config_path)?;
    let ctx = config::validate(&cfg)?;
    let seed = seed_override.unwrap_or(cfg.init.seed);

    let alg = LieAlgebra::su2();
    let system = system_by_name(&cfg.system).map_err(|e| Failure::Other(e.to_string()))?;
    let gauge = build_gauge(&cfg, seed, system.n_higgs());
    let integrator =
        integrator_by_name(&cfg.integrator).map_err(|e| Failure::Other(e.to_string()))?;
    let mut flow =
        Flow::new(system, integrator, alg, gauge).map_err(|e| Failure::Other(e.to_string()))?;
    if let Some(c) = cfg.c_cfl {
        flow.c_cfl = c;
    }
    let min_period = flow
        .state
        .gauge
        .grid()
        .periods
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let probes: Vec<ProbeSpec> = cfg
        .probes
        .iter()
        .map(|p| ProbeSpec { x: p.x.clone(), r: p.r })
        .collect();
    let cutoff = cfg
        .cutoff
        .as_ref()
        .map(|c| CutoffSpec { center: c.center.clone(), radius: c.radius });
    let mut recorder = RunRecorder::new(ctx.split.clone(), cfg.beta, probes, cutoff);
    recorder.sample(&flow, 0.0).map_err(monitor_failure)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Other(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut aborted = false;
    let mut abort_reason: Option<String> = None;
    let mut steps_taken: u64 = 0;
    let mut last_dt = 0.0;
    let prefix = &cfg.outputs.snapshot_prefix;

    // Abort errors end the run but still flush every output; the exit code
    // reports them afterwards.
    let mut advance = |flow: &mut Flow, dt: Option<f64>| -> Result<Option<f64>, Failure> {
        let stepped = match dt {
            Some(dt) => flow.step_with(dt),
            None => flow.step(),
        };
        match stepped {
            Ok(report) => Ok(Some(report.dt)),
            Err(e @ (FlowError::Blowup { .. } | FlowError::StepStuck { .. })) => {
                aborted = true;
                abort_reason = Some(e.to_string());
                Ok(None)
            }
            Err(e) => Err(Failure::Other(e.to_string())),
        }
    };

    match cfg.duration {
        DurationSpec::Steps { steps } => {
            for idx in 1..=steps {
                match advance(&mut flow, None)? {
                    Some(dt) => last_dt = dt,
                    None => break,
                }
                steps_taken = idx;
                if idx % cfg.sample_every == 0 || idx == steps {
                    recorder.sample(&flow, last_dt).map_err(monitor_failure)?;
                }
                if cfg.snapshot_every > 0 && idx % cfg.snapshot_every == 0 {
                    let path = out_dir.join(format!("{prefix}_{idx:06}.snap"));
                    write_state(&path, &flow.state.gauge)?;
                }
            }
        }
        DurationSpec::TEnd { t_end } => {
            const STEP_LIMIT: u64 = 1_000_000;
            while flow.state.t < t_end * (1.0 - 1e-12) {
                if steps_taken >= STEP_LIMIT {
                    return Err(Failure::Other(format!(
                        "exceeded {STEP_LIMIT} steps before t_end = {t_end}; \
                         the automatic step size has collapsed"
                    )));
                }
                let dt = flow.auto_dt().min(t_end - flow.state.t);
                match advance(&mut flow, Some(dt))? {
                    Some(dt) => last_dt = dt,
                    None => break,
                }
                steps_taken += 1;
                let done = flow.state.t >= t_end * (1.0 - 1e-12);
                if steps_taken % cfg.sample_every == 0 || done {
                    recorder.sample(&flow, last_dt).map_err(monitor_failure)?;
                }
                if cfg.snapshot_every > 0 && steps_taken % cfg.snapshot_every == 0 {
                    let path = out_dir.join(format!("{prefix}_{steps_taken:06}.snap"));
                    write_state(&path, &flow.state.gauge)?;
                }
            }
        }
    }

    // An abort can leave the last accepted state unsampled.
    let sampled_t = recorder.history.last().map(|p| p.t);
    if sampled_t != Some(flow.state.t) {
        recorder.sample(&flow, last_dt).map_err(monitor_failure)?;
    }
    if cfg.snapshot_final {
        write_state(&out_dir.join(format!("{prefix}_final.snap")), &flow.state.gauge)?;
    }

    let csv_path = out_dir.join(&cfg.outputs.csv);
    let mut csv = fs::File::create(&csv_path)
        .map_err(|e| Failure::Other(format!("cannot create {}: {e}", csv_path.display())))?;
    recorder
        .write_csv(&mut csv)
        .map_err(|e| Failure::Other(format!("writing {}: {e}", csv_path.display())))?;

    let history = &recorder.history;
    let first = history.first().expect("initial sample always present");
    let last = history.last().expect("initial sample always present");
    let hamilton = if history.len() >= 2 && last.t > first.t {
        let horizon = last.t + (last.t - first.t);
        let rep = hamilton_check(history, horizon).map_err(monitor_failure)?;
        Some(HamiltonSummary {
            horizon: rep.horizon,
            pairs: rep.pairs,
            worst_violation: rep.worst_violation,
            worst_relative: rep.worst_relative,
        })
    } else {
        None
    };
    let blowup = blowup_report(history, aborted);
    let candidates = singular_candidates(&flow.curvature(), min_period / 8.0, cfg.eps0, 2)
        .map_err(monitor_failure)?;

    let final_record = recorder.records.last().expect("sampled at least once");
    let summary = Summary {
        seed,
        aborted,
        abort_reason: abort_reason.clone(),
        steps_taken,
        samples: recorder.records.len(),
        t_final: flow.state.t,
        e_initial: first.e,
        e_final: last.e,
        energy_identity_residual: final_record.energy_identity_residual,
        final_record: FinalRecord {
            t: final_record.t,
            e: final_record.e,
            k: final_record.k,
            l: final_record.l,
            int_k_dt: final_record.int_k_dt,
            phi: final_record.phi.clone(),
        },
        hamilton,
        blowup: BlowupSummary {
            int_k_dt: blowup.int_k_dt,
            max_l: blowup.max_l,
            log_l_change: blowup.log_l_change,
            bound_ratio: blowup.bound_ratio,
        },
        singular_candidates: candidates
            .into_iter()
            .map(|c| CandidateSummary { site: c.site, x: c.x, phi: c.phi })
            .collect(),
        config: cfg.clone(),
    };
    let summary_path = out_dir.join(&cfg.outputs.summary);
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::Other(format!("serializing summary: {e}")))?;
    fs::write(&summary_path, text + "\n")
        .map_err(|e| Failure::Other(format!("writing {}: {e}", summary_path.display())))?;

    println!(
        "run: {} steps to t = {}, E {} -> {}",
        steps_taken,
        fmt_num(flow.state.t),
        fmt_num(first.e),
        fmt_num(last.e)
    );
    println!("series:  {}", csv_path.display());
    println!("summary: {}", summary_path.display());
    let _ = std::io::stdout().flush();

    if aborted {
        return Err(Failure::Blowup(
            abort_reason.unwrap_or_else(|| "flow aborted".into()),
        ));
    }
    Ok(())
}

fn get<'a>(v: &'a serde_json::Value, path: &[&str]) -> Option<&'a serde_json::Value> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    Some(cur)
}

fn num(v: &serde_json::Value, path: &[&str]) -> String {
    get(v, path)
        .and_then(|x| x.as_f64())
        .map(|x| fmt_num(x))
        .unwrap_or_else(|| "n/a".into())
}

pub fn report(path: &Path) -> Result<(), Failure> {
    let file: PathBuf = if path.is_dir() {
        path.join("summary.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| Failure::Usage(format!("cannot read summary {}: {e}", file.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("summary {}: {e}", file.display())))?;

    println!("run summary: {}", file.display());
    println!(
        "  system {} on {}, grid {:?}",
        get(&v, &["config", "system"]).and_then(|x| x.as_str()).unwrap_or("?"),
        get(&v, &["config", "geometry"]).and_then(|x| x.as_str()).unwrap_or("?"),
        get(&v, &["config", "grid", "shape"])
            .and_then(|x| x.as_array())
            .map(|a| a.iter().filter_map(|s| s.as_u64()).collect::<Vec<_>>())
            .unwrap_or_default()
    );
    let aborted = get(&v, &["aborted"]).and_then(|x| x.as_bool()).unwrap_or(false);
    let mut line = format!(
        "  {} steps to t = {}",
        get(&v, &["steps_taken"]).and_then(|x| x.as_u64()).unwrap_or(0),
        num(&v, &["t_final"])
    );
    if aborted {
        let why = get(&v, &["abort_reason"]).and_then(|x| x.as_str()).unwrap_or("blowup");
        line.push_str(&format!("  [ABORTED: {why}]"));
    }
    println!("{line}");
    println!("  E: {} -> {}", num(&v, &["e_initial"]), num(&v, &["e_final"]));
    println!(
        "  sup|F| = {}, sup|F^+| = {}, int K dt = {}",
        num(&v, &["final_record", "l"]),
        num(&v, &["final_record", "k"]),
        num(&v, &["final_record", "int_k_dt"])
    );
    println!(
        "  energy identity residual: {}",
        num(&v, &["energy_identity_residual"])
    );
    match get(&v, &["hamilton"]) {
        Some(h) if !h.is_null() => println!(
            "  hamilton: worst violation {} (relative {}) over {} pairs at horizon {}",
            num(h, &["worst_violation"]),
            num(h, &["worst_relative"]),
            get(h, &["pairs"]).and_then(|x| x.as_u64()).unwrap_or(0),
            num(h, &["horizon"])
        ),
        _ => println!("  hamilton: n/a (fewer than two samples)"),
    }
    if let Some(phi) = get(&v, &["final_record", "phi"]).and_then(|x| x.as_array()) {
        if !phi.is_empty() {
            let vals: Vec<String> = phi
                .iter()
                .map(|p| p.as_f64().map(fmt_num).unwrap_or_else(|| "?".into()))
                .collect();
            println!("  final probes: {}", vals.join(", "));
        }
    }
    let cands = get(&v, &["singular_candidates"])
        .and_then(|x| x.as_array())
        .cloned()
        .unwrap_or_default();
    if cands.is_empty() {
        println!("  singular candidates: none");
    } else {
        println!("  singular candidates: {}", cands.len());
        for c in cands.iter().take(3) {
            let x = get(c, &["x"])
                .and_then(|x| x.as_array())
                .map(|a| {
                    a.iter()
                        .filter_map(|s| s.as_f64())
                        .map(fmt_num)
                        .collect::<Vec<_>>()
                        .join(", ")
                })
                .unwrap_or_default();
            println!("    at ({x}): local energy {}", num(c, &["phi"]));
        }
    }
    Ok(())
}
