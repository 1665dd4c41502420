//! Right-hand sides: plain Yang-Mills and the Higgs-coupled reductions.
//! Every system is the exact L^2 gradient flow of its `energy`, discretely:
//! d_star is the exact adjoint of the curvature linearization, and the
//! composed covariant Laplacian equals D*D on 0-forms, so the identity
//! dE/dt = -|rhs|^2 holds to rounding (tested in the parent module).

use super::FlowError;
use crate::lattice::ops::{connection_laplacian, cov_d, curvature, d_star};
use crate::lattice::{Field, GaugeField};
use crate::liealg::LieAlgebra;

pub trait FlowSystem: Sync {
    fn name(&self) -> &'static str;
    /// Required base dimension; None accepts any.
    fn dim(&self) -> Option<usize>;
    fn n_higgs(&self) -> usize;
    /// Time derivative of (A, Phi_0..).
    fn rhs(&self, alg: &LieAlgebra, g: &GaugeField) -> GaugeField;
    /// The functional the flow descends.
    fn energy(&self, alg: &LieAlgebra, g: &GaugeField) -> f64;

    fn validate(&self, g: &GaugeField) -> Result<(), FlowError> {
        if let Some(d) = self.dim() {
            if g.grid().n != d {
                return Err(FlowError::Shape(format!(
                    "{} needs an n = {d} base, grid has n = {}",
                    self.name(),
                    g.grid().n
                )));
            }
        }
        if g.higgs.len() != self.n_higgs() {
            return Err(FlowError::Shape(format!(
                "{} needs {} Higgs fields, state has {}",
                self.name(),
                self.n_higgs(),
                g.higgs.len()
            )));
        }
        for (i, p) in g.higgs.iter().enumerate() {
            if p.k != 0 || p.lie != g.a.lie {
                return Err(FlowError::Shape(format!(
                    "Higgs field {i} must be an ad-valued 0-form with lie = {}",
                    g.a.lie
                )));
            }
        }
        Ok(())
    }
}

pub struct YangMills;

impl FlowSystem for YangMills {
    fn name(&self) -> &'static str {
        "ym"
    }

    fn dim(&self) -> Option<usize> {
        None
    }

    fn n_higgs(&self) -> usize {
        0
    }

    fn rhs(&self, alg: &LieAlgebra, g: &GaugeField) -> GaugeField {
        let f = curvature(alg, &g.a);
        let mut da = d_star(alg, &g.a, &f);
        da.scale(-1.0);
        GaugeField { a: da, higgs: Vec::new() }
    }

    fn energy(&self, alg: &LieAlgebra, g: &GaugeField) -> f64 {
        0.5 * curvature(alg, &g.a).l2_norm_sq()
    }
}

/// Dimensional reduction with `higgs` commuting circle directions:
///   dA/dt     = -D*F - sum_i [Phi_i, D Phi_i]
///   dPhi_i/dt = -D*D Phi_i - sum_j [Phi_j, [Phi_i, Phi_j]]
/// which is the gradient flow of
///   E = 1/2 |F|^2 + 1/2 sum_i |D Phi_i|^2 + 1/2 sum_{i<j} |[Phi_i, Phi_j]|^2.
struct Reduced {
    name: &'static str,
    dim: usize,
    higgs: usize,
}

impl FlowSystem for Reduced {
    fn name(&self) -> &'static str {
        self.name
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn n_higgs(&self) -> usize {
        self.higgs
    }

    fn rhs(&self, alg: &LieAlgebra, g: &GaugeField) -> GaugeField {
        let grid = g.grid().clone();
        let n = grid.n;
        let lie = g.lie();
        let f = curvature(alg, &g.a);
        let mut da = d_star(alg, &g.a, &f);
        da.scale(-1.0);
        let dphis: Vec<Field> = g.higgs.iter().map(|p| cov_d(alg, &g.a, p)).collect();
        for (p, dp) in g.higgs.iter().zip(&dphis) {
            for site in 0..grid.sites {
                let pv = p.site(site);
                let slot = da.site_mut(site);
                for j in 0..n {
                    alg.bracket_acc(-1.0, pv, dp.value(site, j), &mut slot[j * lie..(j + 1) * lie]);
                }
            }
        }
        let mut out_higgs = Vec::with_capacity(g.higgs.len());
        let mut tmp = vec![0.0; lie];
        for (i, p) in g.higgs.iter().enumerate() {
            let mut dp = connection_laplacian(alg, &g.a, p);
            dp.scale(-1.0);
            for (j, q) in g.higgs.iter().enumerate() {
                if j == i {
                    continue;
                }
                for site in 0..grid.sites {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    alg.bracket_acc(1.0, p.site(site), q.site(site), &mut tmp);
                    alg.bracket_acc(-1.0, q.site(site), &tmp, dp.site_mut(site));
                }
            }
            out_higgs.push(dp);
        }
        GaugeField { a: da, higgs: out_higgs }
    }

    fn energy(&self, alg: &LieAlgebra, g: &GaugeField) -> f64 {
        let mut e = 0.5 * curvature(alg, &g.a).l2_norm_sq();
        for p in &g.higgs {
            e += 0.5 * cov_d(alg, &g.a, p).l2_norm_sq();
        }
        let grid = g.grid();
        let lie = g.lie();
        let mut tmp = vec![0.0; lie];
        let mut quartic = 0.0;
        for i in 0..g.higgs.len() {
            for j in (i + 1)..g.higgs.len() {
                for site in 0..grid.sites {
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    alg.bracket_acc(1.0, g.higgs[i].site(site), g.higgs[j].site(site), &mut tmp);
                    quartic += tmp.iter().map(|v| v * v).sum::<f64>();
                }
            }
        }
        e + 0.5 * quartic * grid.cell_volume()
    }
}

pub const SYSTEM_NAMES: &[&str] = &["ym", "k3", "cy3", "g2mono"];

pub fn system_by_name(name: &str) -> Result<Box<dyn FlowSystem>, FlowError> {
    match name {
        "ym" => Ok(Box::new(YangMills)),
        "k3" => Ok(Box::new(Reduced { name: "k3", dim: 4, higgs: 4 })),
        "cy3" => Ok(Box::new(Reduced { name: "cy3", dim: 6, higgs: 2 })),
        "g2mono" => Ok(Box::new(Reduced { name: "g2mono", dim: 7, higgs: 1 })),
        other => Err(FlowError::UnknownSystem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{init, Grid};

    #[test]
    fn validate_rejects_wrong_shapes() {
        let sys = system_by_name("k3").unwrap();
        let g4 = Grid::unit(&[4, 4, 4, 4]);
        let g6 = Grid::unit(&[4, 4, 4, 4, 4, 4]);
        assert!(sys.validate(&GaugeField::zeros(&g6, 3)).is_err());
        assert!(sys.validate(&GaugeField::zeros(&g4, 3)).is_err());
        let mut ok = GaugeField::zeros(&g4, 3);
        ok.higgs = vec![Field::zeros(&g4, 0, 3); 4];
        assert!(sys.validate(&ok).is_ok());
        let mut bad = GaugeField::zeros(&g4, 3);
        bad.higgs = vec![Field::zeros(&g4, 1, 3); 4];
        assert!(sys.validate(&bad).is_err());
    }

    #[test]
    fn reduced_rhs_is_the_exact_gradient_of_the_energy() {
        // Directional-derivative check with a random variation: the discrete
        // adjointness of every operator makes <rhs, v> = -dE(g + s v)/ds at
        // s = 0 up to O(s^2) quadrature error of the central difference.
        let sys = system_by_name("cy3").unwrap();
        let alg = LieAlgebra::su2();
        let g = Grid::unit(&[4, 4, 4, 4, 4, 4]);
        let a = init::band_limited(&g, 3, &init::BandLimited::new(1, 0.8, 7));
        let mut higgs = Vec::new();
        for i in 0..2 {
            let f1 = init::band_limited(&g, 3, &init::BandLimited::new(1, 0.6, 50 + i));
            let mut p = Field::zeros(&g, 0, 3);
            for s in 0..g.sites {
                p.site_mut(s).copy_from_slice(f1.value(s, 0));
            }
            higgs.push(p);
        }
        let state = GaugeField { a, higgs };

        let mut var = GaugeField {
            a: init::band_limited(&g, 3, &init::BandLimited::new(1, 1.0, 91)),
            higgs: Vec::new(),
        };
        for i in 0..2 {
            let f1 = init::band_limited(&g, 3, &init::BandLimited::new(1, 1.0, 70 + i));
            let mut p = Field::zeros(&g, 0, 3);
            for s in 0..g.sites {
                p.site_mut(s).copy_from_slice(f1.value(s, 0));
            }
            var.higgs.push(p);
        }

        let rhs = sys.rhs(&alg, &state);
        let mut pairing = rhs.a.l2_dot(&var.a);
        for (r, v) in rhs.higgs.iter().zip(&var.higgs) {
            pairing += r.l2_dot(v);
        }

        let s = 1e-5;
        let mut plus = state.clone();
        plus.axpy(s, &var);
        let mut minus = state.clone();
        minus.axpy(-s, &var);
        let slope = (sys.energy(&alg, &plus) - sys.energy(&alg, &minus)) / (2.0 * s);

        let scale = pairing.abs().max(1.0);
        assert!(
            (pairing + slope).abs() < 1e-8 * scale,
            "<rhs, v> = {pairing} vs -dE/ds = {}",
            -slope
        );
    }
}
