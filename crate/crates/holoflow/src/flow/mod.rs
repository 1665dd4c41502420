//! Time integration of the Yang-Mills gradient flow dA/dt = -D*F and of its
//! dimensional reductions with Higgs fields. Systems and integrators are
//! trait objects behind name registries so runs are configured by string.
//!
//! Energy bookkeeping convention: the flow energy is E = 1/2 |F|^2 (sorted
//! 2-form components) plus 1/2 |D phi|^2 per Higgs field, and 1-form norms in
//! the dissipation report carry an extra factor 1/2 so that the global
//! identity reads dE/dt = -2 * dissipation, matching the classical statement
//! E(t2) = E(t1) - 2 int |D*F|^2 dt.

pub mod checks;
mod systems;

pub use systems::{system_by_name, FlowSystem, SYSTEM_NAMES};

use crate::lattice::ops::curvature;
use crate::lattice::{Field, GaugeField, Grid};
use crate::liealg::LieAlgebra;
use std::sync::Arc;

#[derive(Debug)]
pub enum FlowError {
    UnknownSystem(String),
    UnknownIntegrator(String),
    /// Grid dimension or Higgs count does not match the system.
    Shape(String),
    /// Non-finite values or sup|F| past the discretization-validity bound.
    Blowup { t: f64, sup_f: f64, limit: f64 },
    /// Energy-increase rejection halved dt past any useful size.
    StepStuck { t: f64, dt: f64 },
}

impl std::fmt::Display for FlowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowError::UnknownSystem(s) => {
                write!(f, "unknown flow system {s:?} (have {SYSTEM_NAMES:?})")
            }
            FlowError::UnknownIntegrator(s) => {
                write!(f, "unknown integrator {s:?} (have {INTEGRATOR_NAMES:?})")
            }
            FlowError::Shape(s) => write!(f, "state does not fit the system: {s}"),
            FlowError::Blowup { t, sup_f, limit } => write!(
                f,
                "blowup signal at t = {t:.6e}: sup|F| = {sup_f:.3e} exceeds {limit:.3e} \
                 (or non-finite values); the discretization is no longer meaningful"
            ),
            FlowError::StepStuck { t, dt } => write!(
                f,
                "no acceptable step at t = {t:.6e}: dt halved down to {dt:.3e} \
                 without achieving energy decrease"
            ),
        }
    }
}

impl std::error::Error for FlowError {}

/// One accepted step. `dissipation` is 1/2 |dA/dt|^2 + 1/2 sum |dphi/dt|^2
/// at the pre-step state (for plain Yang-Mills: the halved-convention
/// |D*F|^2), so trapezoid sums of it approximate (E(t1) - E(t2)) / 2.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub dt: f64,
    pub e_before: f64,
    pub e_after: f64,
    pub dissipation: f64,
    pub sup_f: f64,
    /// Energy-increase rejections before the accepted dt.
    pub rejections: u32,
}

/// Evolving state: time, connection, Higgs fields. The geometry of a run
/// (calibration family, eigenspace split) lives outside and never changes.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub gauge: GaugeField,
    pub steps: u64,
}

impl FlowState {
    pub fn new(gauge: GaugeField) -> FlowState {
        FlowState { t: 0.0, gauge, steps: 0 }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.gauge.grid()
    }
}

/// Explicit time-stepping scheme for y' = rhs(y) on gauge data.
pub trait Integrator: Sync {
    fn name(&self) -> &'static str;
    fn advance(
        &self,
        sys: &dyn FlowSystem,
        alg: &LieAlgebra,
        g: &GaugeField,
        dt: f64,
    ) -> GaugeField;
}

pub struct Euler;

impl Integrator for Euler {
    fn name(&self) -> &'static str {
        "euler"
    }

    fn advance(
        &self,
        sys: &dyn FlowSystem,
        alg: &LieAlgebra,
        g: &GaugeField,
        dt: f64,
    ) -> GaugeField {
        let k1 = sys.rhs(alg, g);
        let mut out = g.clone();
        out.axpy(dt, &k1);
        out
    }
}

pub struct Rk4;

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn advance(
        &self,
        sys: &dyn FlowSystem,
        alg: &LieAlgebra,
        g: &GaugeField,
        dt: f64,
    ) -> GaugeField {
        let k1 = sys.rhs(alg, g);
        let mut y = g.clone();
        y.axpy(0.5 * dt, &k1);
        let k2 = sys.rhs(alg, &y);
        y = g.clone();
        y.axpy(0.5 * dt, &k2);
        let k3 = sys.rhs(alg, &y);
        y = g.clone();
        y.axpy(dt, &k3);
        let k4 = sys.rhs(alg, &y);
        let mut out = g.clone();
        out.axpy(dt / 6.0, &k1);
        out.axpy(dt / 3.0, &k2);
        out.axpy(dt / 3.0, &k3);
        out.axpy(dt / 6.0, &k4);
        out
    }
}

pub const INTEGRATOR_NAMES: &[&str] = &["rk4", "euler"];

pub fn integrator_by_name(name: &str) -> Result<Box<dyn Integrator>, FlowError> {
    match name {
        "rk4" => Ok(Box::new(Rk4)),
        "euler" => Ok(Box::new(Euler)),
        other => Err(FlowError::UnknownIntegrator(other.to_string())),
    }
}

/// A configured run: system + integrator + step policy around a FlowState.
pub struct Flow {
    pub alg: LieAlgebra,
    pub system: Box<dyn FlowSystem>,
    pub integrator: Box<dyn Integrator>,
    pub state: FlowState,
    /// dt = c_cfl * min(h)^2 / (1 + min(h)^2 sup|F|); default 0.1/n.
    pub c_cfl: f64,
    /// Relative energy-increase tolerance before a step is rejected.
    pub reject_tol: f64,
    /// Abort when sup|F| > blowup_factor / min(h)^2.
    pub blowup_factor: f64,
    last_dt: Option<f64>,
}

impl Flow {
    pub fn new(
        system: Box<dyn FlowSystem>,
        integrator: Box<dyn Integrator>,
        alg: LieAlgebra,
        gauge: GaugeField,
    ) -> Result<Flow, FlowError> {
        system.validate(&gauge)?;
        let n = gauge.grid().n;
        Ok(Flow {
            alg,
            system,
            integrator,
            state: FlowState::new(gauge),
            c_cfl: 0.1 / n as f64,
            reject_tol: 1e-12,
            blowup_factor: 10.0,
            last_dt: None,
        })
    }

    pub fn curvature(&self) -> Field {
        curvature(&self.alg, &self.state.gauge.a)
    }

    pub fn energy(&self) -> f64 {
        self.system.energy(&self.alg, &self.state.gauge)
    }

    /// Halved-convention squared gradient at the current state; the global
    /// energy identity pairs it with the factor 2.
    pub fn dissipation(&self) -> f64 {
        let rhs = self.system.rhs(&self.alg, &self.state.gauge);
        let mut d = 0.5 * rhs.a.l2_norm_sq();
        for p in &rhs.higgs {
            d += 0.5 * p.l2_norm_sq();
        }
        d
    }

    fn h_min(&self) -> f64 {
        self.state
            .grid()
            .h
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn dt_formula(&self, sup_f: f64) -> f64 {
        let h2 = self.h_min() * self.h_min();
        self.c_cfl * h2 / (1.0 + h2 * sup_f)
    }

    /// Stability-limited dt from the current curvature. After a rejection
    /// the cap recovers by at most doubling per accepted step.
    pub fn auto_dt(&self) -> f64 {
        let dt = self.dt_formula(self.curvature().sup_norm());
        match self.last_dt {
            Some(prev) => dt.min(2.0 * prev),
            None => dt,
        }
    }

    /// One accepted step at the automatic dt.
    pub fn step(&mut self) -> Result<StepReport, FlowError> {
        let f = self.curvature();
        let sup_f = f.sup_norm();
        let mut dt = self.dt_formula(sup_f);
        if let Some(prev) = self.last_dt {
            dt = dt.min(2.0 * prev);
        }
        self.step_at(dt, sup_f)
    }

    /// One accepted step starting from the given dt (still subject to the
    /// rejection-halving policy).
    pub fn step_with(&mut self, dt: f64) -> Result<StepReport, FlowError> {
        assert!(dt > 0.0);
        let sup_f = self.curvature().sup_norm();
        self.step_at(dt, sup_f)
    }

    fn step_at(&mut self, dt0: f64, sup_f: f64) -> Result<StepReport, FlowError> {
        let limit = self.blowup_factor / (self.h_min() * self.h_min());
        if !sup_f.is_finite() || !self.state.gauge.all_finite() || sup_f > limit {
            return Err(FlowError::Blowup { t: self.state.t, sup_f, limit });
        }
        let e_before = self.energy();
        let dissipation = self.dissipation();
        let mut dt = dt0;
        let mut rejections = 0u32;
        loop {
            let cand = self
                .integrator
                .advance(self.system.as_ref(), &self.alg, &self.state.gauge, dt);
            if cand.all_finite() {
                let e_after = self.system.energy(&self.alg, &cand);
                if e_after <= e_before * (1.0 + self.reject_tol) + f64::MIN_POSITIVE {
                    self.state.gauge = cand;
                    self.state.t += dt;
                    self.state.steps += 1;
                    self.last_dt = Some(dt);
                    return Ok(StepReport {
                        dt,
                        e_before,
                        e_after,
                        dissipation,
                        sup_f,
                        rejections,
                    });
                }
            }
            rejections += 1;
            dt *= 0.5;
            if rejections > 60 {
                return Err(FlowError::StepStuck { t: self.state.t, dt });
            }
        }
    }
}
