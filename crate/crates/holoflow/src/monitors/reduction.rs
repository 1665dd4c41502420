//! Dimensional reductions of the eight-dimensional calibrated flow. A gauge
//! field on a lower-dimensional torus, together with its Higgs scalars, lifts
//! to a fiber-invariant connection on the eight-torus; the Cayley-type
//! projection of the lifted curvature is then evaluated two ways.
//!
//! Route one assembles the ambient curvature (base curvature in the base
//! slots, covariant Higgs derivatives in the mixed slots, Higgs brackets in
//! the fiber slots) and applies the spectral projector of the calibration
//! operator. Route two evaluates a closed formula written entirely in
//! base-level operators. The two must agree pointwise to rounding; the closed
//! formulas are what the reduced flows and their monitors actually use.
//!
//! Cases, by base dimension: `k3` (four base axes, four Higgs fields), `cy3`
//! (six and two), `g2mono` (seven and one), `su4` (eight and none, a plain
//! relabeling).

use std::sync::Arc;

use crate::exterior::eigen::{eigen_split, lpsi_matrix, EigenSplit};
use crate::exterior::{basis, binomial, rank, KForm};
use crate::geometry::{embed, kahler_j_on_covectors, kahler_omega, quaternionic_triple, spin7_theta};
use crate::lattice::ops::{cov_d, curvature};
use crate::lattice::{Field, GaugeField, Grid, PairTable};
use crate::liealg::{entry2, LieAlgebra};
use crate::monitors::MonitorError;

const AMBIENT_N: usize = 8;

/// Matrix of `alpha -> *(alpha ^ beta)` on sorted-basis coefficients,
/// row-major, `C(n, n - k_in - beta.k)` rows by `C(n, k_in)` columns.
pub fn star_wedge_matrix(n: usize, k_in: usize, beta: &KForm) -> Vec<f64> {
    assert_eq!(beta.n, n);
    assert!(k_in + beta.k <= n);
    let cols = binomial(n, k_in);
    let rows = binomial(n, n - k_in - beta.k);
    let mut m = vec![0.0; rows * cols];
    for (j, idx) in basis(n, k_in).iter().enumerate() {
        let w = KForm::basis_element(n, idx).wedge(beta).star();
        for r in 0..rows {
            m[r * cols + j] = w.c[r];
        }
    }
    m
}

/// Signed entries of a 2-form as a dense antisymmetric n x n matrix.
pub fn two_form_matrix(w: &KForm, n: usize) -> Vec<f64> {
    assert_eq!(w.n, n);
    let mut m = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                m[a * n + b] = entry2(w, a, b);
            }
        }
    }
    m
}

/// Matrix of `F -> F(J., J.)` on sorted pairs, for a covector map `j`.
fn jj_matrix(n: usize, j: &[f64]) -> Vec<f64> {
    let pairs = basis(n, 2);
    let d = pairs.len();
    let mut m = vec![0.0; d * d];
    for (row, ab) in pairs.iter().enumerate() {
        let (a, b) = (ab[0] as usize, ab[1] as usize);
        for (col, cd) in pairs.iter().enumerate() {
            let (c, e) = (cd[0] as usize, cd[1] as usize);
            m[row * d + col] = j[a * n + c] * j[b * n + e] - j[a * n + e] * j[b * n + c];
        }
    }
    m
}

/// Matrix of the derivation `F -> F(J., .) + F(., J.)` on sorted pairs.
fn lj_matrix(n: usize, j: &[f64]) -> Vec<f64> {
    let pairs = basis(n, 2);
    let d = pairs.len();
    let mut m = vec![0.0; d * d];
    for (row, ab) in pairs.iter().enumerate() {
        let (a, b) = (ab[0] as usize, ab[1] as usize);
        for (col, cd) in pairs.iter().enumerate() {
            let (c, e) = (cd[0] as usize, cd[1] as usize);
            let mut v = 0.0;
            if b == e {
                v += j[a * n + c];
            }
            if b == c {
                v -= j[a * n + e];
            }
            if a == c {
                v += j[b * n + e];
            }
            if a == e {
                v -= j[b * n + c];
            }
            m[row * d + col] = v;
        }
    }
    m
}

/// Real and imaginary parts of the complex volume form
/// `(e0 + i e1) ^ (e2 + i e3) ^ ...` with `p` factors on the 2p-torus.
fn complex_volume_parts(p: usize) -> (KForm, KForm) {
    let n = 2 * p;
    let mut re = KForm::zero(n, p);
    let mut im = KForm::zero(n, p);
    for mask in 0..(1u32 << p) {
        let ones = mask.count_ones() as usize;
        let idx: Vec<u8> = (0..p)
            .map(|q| 2 * q as u8 + ((mask >> q) & 1) as u8)
            .collect();
        let r = rank(n, &idx);
        match ones % 4 {
            0 => re.c[r] += 1.0,
            1 => im.c[r] += 1.0,
            2 => re.c[r] -= 1.0,
            _ => im.c[r] -= 1.0,
        }
    }
    (re, im)
}

/// Dense matrix times per-component Lie-valued vector; overwrites `out`.
fn mat_apply(m: &[f64], rows: usize, cols: usize, v: &[f64], lie: usize, out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols * lie);
    debug_assert_eq!(out.len(), rows * lie);
    for r in 0..rows {
        let dst = &mut out[r * lie..(r + 1) * lie];
        dst.fill(0.0);
        let row = &m[r * cols..(r + 1) * cols];
        for (c, &coef) in row.iter().enumerate() {
            if coef != 0.0 {
                let src = &v[c * lie..(c + 1) * lie];
                for l in 0..lie {
                    dst[l] += coef * src[l];
                }
            }
        }
    }
}

fn slice_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hyperkaehler product calibration: base volume plus fiber volume minus the
/// cross terms pairing each base Kaehler form with its fiber copy.
fn theta_k3() -> KForm {
    let mut th = KForm::basis_element(AMBIENT_N, &[0, 1, 2, 3])
        .add(&KForm::basis_element(AMBIENT_N, &[4, 5, 6, 7]));
    for w in &quaternionic_triple(1) {
        let base = embed(w, AMBIENT_N, 0);
        let fiber = embed(w, AMBIENT_N, 4);
        th = th.sub(&base.wedge(&fiber));
    }
    th
}

/// Calibration adapted to a six-torus base with Kaehler form `omega` and
/// holomorphic volume `Omega`, axes 6 and 7 spanning the fiber:
/// `e67 ^ omega + e6 ^ Re Omega - e7 ^ Im Omega + omega^2 / 2`.
fn theta_cy3() -> KForm {
    let om = embed(&kahler_omega(3), AMBIENT_N, 0);
    let (re, im) = complex_volume_parts(3);
    let re = embed(&re, AMBIENT_N, 0);
    let im = embed(&im, AMBIENT_N, 0);
    let e6 = KForm::basis_element(AMBIENT_N, &[6]);
    let e7 = KForm::basis_element(AMBIENT_N, &[7]);
    KForm::basis_element(AMBIENT_N, &[6, 7])
        .wedge(&om)
        .add(&e6.wedge(&re))
        .sub(&e7.wedge(&im))
        .add(&om.wedge(&om).scale(0.5))
}

/// Complex four-space calibration `omega^2 / 2 + Re Omega`.
fn theta_su4() -> KForm {
    let om = kahler_omega(4);
    let (re, _) = complex_volume_parts(4);
    om.wedge(&om).scale(0.5).add(&re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionCase {
    K3,
    Cy3,
    G2Mono,
    Su4,
}

pub const REDUCTION_NAMES: [&str; 4] = ["k3", "cy3", "g2mono", "su4"];

/// Case-specific precomputed operators for the closed projection formula.
enum ClosedForm {
    K3 {
        /// The quaternionic Kaehler triple, read both as base 2-forms and as
        /// fiber pair tables.
        triple: [KForm; 3],
        /// Mixed-block matrices T(m, j), flattened at index `m * 4 + j`; the
        /// coefficient of the (a, fiber m) slot is
        /// `sum_j T(m, j)[a, b] (D Phi_j)_b / 4`.
        tmat: Vec<Vec<f64>>,
    },
    Cy3 {
        om: KForm,
        /// Covector complex structure.
        jmat: Vec<f64>,
        /// `F -> F(J., J.)` on pairs.
        jj: Vec<f64>,
        /// `*(F ^ Re Omega)` and `*(F ^ Im Omega)`, 6 x 15.
        sw_f_re: Vec<f64>,
        sw_f_im: Vec<f64>,
        /// `*(a ^ Re Omega)` and `*(a ^ Im Omega)` on 1-forms, 15 x 6.
        sw_a_re: Vec<f64>,
        sw_a_im: Vec<f64>,
    },
    G2Mono {
        /// `*(F ^ phi)`, 21 x 21.
        sw_phi: Vec<f64>,
        /// `*(a ^ psi)` on 1-forms, 21 x 7.
        sw_psi_1: Vec<f64>,
        /// `*(F ^ psi)`, 7 x 21.
        sw_psi_2: Vec<f64>,
    },
    Su4 {
        om: KForm,
        jj: Vec<f64>,
        /// Derivation by the complex structure on pairs.
        lj: Vec<f64>,
        /// `*(F ^ Re Omega)` and `*(F ^ Im Omega)`, 28 x 28.
        sw_re: Vec<f64>,
        sw_im: Vec<f64>,
    },
}

/// One dimensional reduction: its calibration, the spectral split of the
/// calibration operator, and the closed projection machinery.
pub struct Reduction {
    pub case: ReductionCase,
    pub name: &'static str,
    pub base_n: usize,
    pub n_higgs: usize,
    pub theta: KForm,
    pub split: EigenSplit,
    pairs: PairTable,
    closed: ClosedForm,
}

/// Outcome of comparing the two projection routes.
#[derive(Debug, Clone)]
pub struct Pi7Check {
    /// Largest pointwise Frobenius distance between the routes.
    pub discrepancy: f64,
    /// Largest pointwise norm of the projected curvature.
    pub scale: f64,
}

/// Ad-valued 2-form over a base lattice with ambient eight-dimensional
/// component indexing. `Field` cannot carry it because its component count is
/// tied to the grid dimension; layout matches `Field` otherwise.
#[derive(Debug, Clone)]
pub struct Fibered2Form {
    pub grid: Arc<Grid>,
    pub comps: usize,
    pub lie: usize,
    pub data: Vec<f64>,
}

impl Fibered2Form {
    pub fn zeros(grid: &Arc<Grid>, lie: usize) -> Fibered2Form {
        let comps = binomial(AMBIENT_N, 2);
        Fibered2Form {
            grid: grid.clone(),
            comps,
            lie,
            data: vec![0.0; grid.sites * comps * lie],
        }
    }

    pub fn per_site(&self) -> usize {
        self.comps * self.lie
    }

    pub fn site(&self, s: usize) -> &[f64] {
        let p = self.per_site();
        &self.data[s * p..(s + 1) * p]
    }

    pub fn site_mut(&mut self, s: usize) -> &mut [f64] {
        let p = self.per_site();
        &mut self.data[s * p..(s + 1) * p]
    }

    pub fn sup_norm(&self) -> f64 {
        let p = self.per_site();
        self.data
            .chunks_exact(p)
            .map(slice_norm)
            .fold(0.0, f64::max)
    }
}

impl Reduction {
    pub fn by_name(name: &str) -> Result<Reduction, MonitorError> {
        let case = match name {
            "k3" => ReductionCase::K3,
            "cy3" => ReductionCase::Cy3,
            "g2mono" => ReductionCase::G2Mono,
            "su4" => ReductionCase::Su4,
            _ => {
                return Err(MonitorError::Parameter(format!(
                    "unknown reduction {name:?}; available: {}",
                    REDUCTION_NAMES.join(", ")
                )))
            }
        };
        Ok(Reduction::new(case))
    }

    pub fn new(case: ReductionCase) -> Reduction {
        let (name, base_n, n_higgs, theta) = match case {
            ReductionCase::K3 => ("k3", 4, 4, theta_k3()),
            ReductionCase::Cy3 => ("cy3", 6, 2, theta_cy3()),
            ReductionCase::G2Mono => ("g2mono", 7, 1, spin7_theta()),
            ReductionCase::Su4 => ("su4", 8, 0, theta_su4()),
        };
        assert!(
            (theta.norm_sq() - 14.0).abs() < 1e-12,
            "{name}: calibration norm drifted from sqrt(14)"
        );
        let dim = binomial(AMBIENT_N, 2);
        let split = eigen_split(&lpsi_matrix(&theta), dim)
            .expect("calibration operator must split cleanly");
        assert_eq!(split.lambdas.len(), 2, "{name}: expected a two-cluster spectrum");
        assert!(
            (split.lambdas[0] + 1.0).abs() < 1e-9 && split.multiplicities[0] == 21,
            "{name}: instanton eigenspace must be the 21-dimensional -1 cluster"
        );
        assert!(
            (split.lambdas[1] - 3.0).abs() < 1e-9 && split.multiplicities[1] == 7,
            "{name}: complement must be the 7-dimensional +3 cluster"
        );
        let closed = match case {
            ReductionCase::K3 => {
                let triple = quaternionic_triple(1);
                let jm: Vec<Vec<f64>> = triple.iter().map(|w| two_form_matrix(w, 4)).collect();
                let mut tmat = Vec::with_capacity(16);
                for m in 0..4 {
                    for j in 0..4 {
                        let mut t = vec![0.0; 16];
                        if m == j {
                            for a in 0..4 {
                                t[a * 4 + a] = 1.0;
                            }
                        }
                        for i in 0..3 {
                            let tau_mj = entry2(&triple[i], m, j);
                            if tau_mj != 0.0 {
                                for e in 0..16 {
                                    t[e] += tau_mj * jm[i][e];
                                }
                            }
                        }
                        tmat.push(t);
                    }
                }
                ClosedForm::K3 { triple, tmat }
            }
            ReductionCase::Cy3 => {
                let om = kahler_omega(3);
                let jmat = kahler_j_on_covectors(3);
                let jj = jj_matrix(6, &jmat);
                let (re, im) = complex_volume_parts(3);
                ClosedForm::Cy3 {
                    sw_f_re: star_wedge_matrix(6, 2, &re),
                    sw_f_im: star_wedge_matrix(6, 2, &im),
                    sw_a_re: star_wedge_matrix(6, 1, &re),
                    sw_a_im: star_wedge_matrix(6, 1, &im),
                    om,
                    jmat,
                    jj,
                }
            }
            ReductionCase::G2Mono => {
                let phi = crate::geometry::g2_phi();
                let psi = crate::geometry::g2_psi();
                ClosedForm::G2Mono {
                    sw_phi: star_wedge_matrix(7, 2, &phi),
                    sw_psi_1: star_wedge_matrix(7, 1, &psi),
                    sw_psi_2: star_wedge_matrix(7, 2, &psi),
                }
            }
            ReductionCase::Su4 => {
                let om = kahler_omega(4);
                let jmat = kahler_j_on_covectors(4);
                let (re, im) = complex_volume_parts(4);
                ClosedForm::Su4 {
                    jj: jj_matrix(8, &jmat),
                    lj: lj_matrix(8, &jmat),
                    sw_re: star_wedge_matrix(8, 2, &re),
                    sw_im: star_wedge_matrix(8, 2, &im),
                    om,
                }
            }
        };
        Reduction {
            case,
            name,
            base_n,
            n_higgs,
            theta,
            split,
            pairs: PairTable::new(AMBIENT_N),
            closed,
        }
    }

    fn validate(&self, g: &GaugeField) -> Result<(), MonitorError> {
        if g.a.grid.n != self.base_n {
            return Err(MonitorError::Shape(format!(
                "{}: base grid is {}-dimensional, want {}",
                self.name, g.a.grid.n, self.base_n
            )));
        }
        if g.higgs.len() != self.n_higgs {
            return Err(MonitorError::Shape(format!(
                "{}: {} Higgs fields supplied, want {}",
                self.name,
                g.higgs.len(),
                self.n_higgs
            )));
        }
        for (i, phi) in g.higgs.iter().enumerate() {
            if phi.k != 0 || phi.lie != g.a.lie || !Arc::ptr_eq(&phi.grid, &g.a.grid) {
                return Err(MonitorError::Shape(format!(
                    "{}: Higgs field {i} must be a scalar on the connection's grid",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Curvature of the fiber-invariant lift: base curvature, covariant
    /// Higgs derivatives in the mixed slots, Higgs brackets in the fiber
    /// slots.
    pub fn assemble(&self, alg: &LieAlgebra, g: &GaugeField) -> Result<Fibered2Form, MonitorError> {
        self.validate(g)?;
        let lie = g.a.lie;
        let bn = self.base_n;
        let fa = curvature(alg, &g.a);
        let dphi: Vec<Field> = g.higgs.iter().map(|p| cov_d(alg, &g.a, p)).collect();
        let base_map: Vec<(usize, usize)> = basis(bn, 2)
            .iter()
            .enumerate()
            .map(|(bc, p)| (self.pairs.comp(p[0] as usize, p[1] as usize).0, bc))
            .collect();
        let mut out = Fibered2Form::zeros(&g.a.grid, lie);
        for s in 0..g.a.grid.sites {
            let dst = out.site_mut(s);
            let fsrc = fa.site(s);
            for &(amb, bc) in &base_map {
                dst[amb * lie..(amb + 1) * lie].copy_from_slice(&fsrc[bc * lie..(bc + 1) * lie]);
            }
            for (i, d) in dphi.iter().enumerate() {
                let dsrc = d.site(s);
                for a in 0..bn {
                    let amb = self.pairs.comp(a, bn + i).0;
                    dst[amb * lie..(amb + 1) * lie]
                        .copy_from_slice(&dsrc[a * lie..(a + 1) * lie]);
                }
            }
            for i in 0..self.n_higgs {
                for j in (i + 1)..self.n_higgs {
                    let amb = self.pairs.comp(bn + i, bn + j).0;
                    alg.bracket_into(
                        g.higgs[i].site(s),
                        g.higgs[j].site(s),
                        &mut dst[amb * lie..(amb + 1) * lie],
                    );
                }
            }
        }
        Ok(out)
    }

    /// Route one: the spectral projector onto the seven-dimensional cluster,
    /// applied pointwise.
    pub fn pi7_projected(&self, f: &Fibered2Form) -> Fibered2Form {
        assert_eq!(f.comps, self.split.dim);
        let d = f.comps;
        let p = &self.split.projectors[1];
        let mut out = Fibered2Form::zeros(&f.grid, f.lie);
        for s in 0..f.grid.sites {
            mat_apply(p, d, d, f.site(s), f.lie, out.site_mut(s));
        }
        out
    }

    /// Route two: the closed projection formula in base-level operators.
    pub fn pi7_closed(&self, alg: &LieAlgebra, g: &GaugeField) -> Result<Fibered2Form, MonitorError> {
        self.validate(g)?;
        let fa = curvature(alg, &g.a);
        let dphi: Vec<Field> = g.higgs.iter().map(|p| cov_d(alg, &g.a, p)).collect();
        let mut out = Fibered2Form::zeros(&g.a.grid, g.a.lie);
        match &self.closed {
            ClosedForm::K3 { triple, tmat } => {
                k3_closed(alg, g, &fa, &dphi, triple, tmat, &self.pairs, &mut out)
            }
            ClosedForm::Cy3 {
                om,
                jmat,
                jj,
                sw_f_re,
                sw_f_im,
                sw_a_re,
                sw_a_im,
            } => cy3_closed(
                alg, g, &fa, &dphi, om, jmat, jj, sw_f_re, sw_f_im, sw_a_re, sw_a_im, &self.pairs,
                &mut out,
            ),
            ClosedForm::G2Mono {
                sw_phi,
                sw_psi_1,
                sw_psi_2,
            } => g2mono_closed(&fa, &dphi, sw_phi, sw_psi_1, sw_psi_2, &self.pairs, &mut out),
            ClosedForm::Su4 { om, jj, sw_re, .. } => su4_closed(&fa, om, jj, sw_re, &mut out),
        }
        Ok(out)
    }

    /// Largest pointwise disagreement between the two routes, along with the
    /// scale of the projected curvature itself.
    pub fn pi7_check(&self, alg: &LieAlgebra, g: &GaugeField) -> Result<Pi7Check, MonitorError> {
        let spectral = self.pi7_projected(&self.assemble(alg, g)?);
        let closed = self.pi7_closed(alg, g)?;
        let per = spectral.per_site();
        let mut discrepancy = 0.0f64;
        let mut scale = 0.0f64;
        for s in 0..spectral.grid.sites {
            let a = spectral.site(s);
            let b = closed.site(s);
            let mut d2 = 0.0;
            let mut n2 = 0.0;
            for v in 0..per {
                let e = a[v] - b[v];
                d2 += e * e;
                n2 += a[v] * a[v];
            }
            discrepancy = discrepancy.max(d2.sqrt());
            scale = scale.max(n2.sqrt());
        }
        Ok(Pi7Check { discrepancy, scale })
    }

    /// Case-specific sup-norm residuals; each vanishes exactly when the lift
    /// solves the calibrated instanton equation.
    pub fn monitored(&self, alg: &LieAlgebra, g: &GaugeField) -> Result<Vec<(String, f64)>, MonitorError> {
        self.validate(g)?;
        let fa = curvature(alg, &g.a);
        let dphi: Vec<Field> = g.higgs.iter().map(|p| cov_d(alg, &g.a, p)).collect();
        let lie = g.a.lie;
        let sites = g.a.grid.sites;
        Ok(match &self.closed {
            ClosedForm::K3 { triple, .. } => {
                let jm: Vec<Vec<f64>> = triple.iter().map(|w| two_form_matrix(w, 4)).collect();
                let fiber_pairs = basis(4, 2);
                let mut sup = [0.0f64; 4];
                let mut gi = vec![0.0; lie];
                let mut dirac = vec![0.0; 4 * lie];
                for s in 0..sites {
                    let fsrc = fa.site(s);
                    for (ti, tau) in triple.iter().enumerate() {
                        gi.fill(0.0);
                        for (c, &w) in tau.c.iter().enumerate() {
                            if w != 0.0 {
                                for l in 0..lie {
                                    gi[l] += 0.5 * w * fsrc[c * lie + l];
                                }
                            }
                        }
                        for (pc, pq) in fiber_pairs.iter().enumerate() {
                            let w = tau.c[pc];
                            if w != 0.0 {
                                alg.bracket_acc(
                                    -0.5 * w,
                                    g.higgs[pq[0] as usize].site(s),
                                    g.higgs[pq[1] as usize].site(s),
                                    &mut gi,
                                );
                            }
                        }
                        sup[ti] = sup[ti].max(slice_norm(&gi));
                    }
                    dirac.copy_from_slice(dphi[0].site(s));
                    for (ti, j) in jm.iter().enumerate() {
                        let d = dphi[ti + 1].site(s);
                        for a in 0..4 {
                            for b in 0..4 {
                                let coef = j[a * 4 + b];
                                if coef != 0.0 {
                                    for l in 0..lie {
                                        dirac[a * lie + l] += coef * d[b * lie + l];
                                    }
                                }
                            }
                        }
                    }
                    sup[3] = sup[3].max(slice_norm(&dirac));
                }
                vec![
                    ("moment_map_1".to_string(), sup[0]),
                    ("moment_map_2".to_string(), sup[1]),
                    ("moment_map_3".to_string(), sup[2]),
                    ("dirac_residual".to_string(), sup[3]),
                ]
            }
            ClosedForm::Cy3 {
                om,
                jmat,
                sw_f_re,
                sw_f_im,
                ..
            } => {
                let mut trace_sup = 0.0f64;
                let mut holo_sup = 0.0f64;
                let mut lam = vec![0.0; lie];
                let mut sfre = vec![0.0; 6 * lie];
                let mut sfim = vec![0.0; 6 * lie];
                let mut m6 = vec![0.0; 6 * lie];
                let mut m7 = vec![0.0; 6 * lie];
                for s in 0..sites {
                    let fsrc = fa.site(s);
                    lam.fill(0.0);
                    for (c, &w) in om.c.iter().enumerate() {
                        if w != 0.0 {
                            for l in 0..lie {
                                lam[l] += w * fsrc[c * lie + l];
                            }
                        }
                    }
                    alg.bracket_acc(1.0, g.higgs[0].site(s), g.higgs[1].site(s), &mut lam);
                    trace_sup = trace_sup.max(slice_norm(&lam));
                    mat_apply(sw_f_re, 6, 15, fsrc, lie, &mut sfre);
                    mat_apply(sw_f_im, 6, 15, fsrc, lie, &mut sfim);
                    let d1 = dphi[0].site(s);
                    let d2 = dphi[1].site(s);
                    for a in 0..6 {
                        for l in 0..lie {
                            let mut i_d1 = 0.0;
                            let mut i_d2 = 0.0;
                            for b in 0..6 {
                                let jab = jmat[a * 6 + b];
                                if jab != 0.0 {
                                    i_d1 += jab * d1[b * lie + l];
                                    i_d2 += jab * d2[b * lie + l];
                                }
                            }
                            m6[a * lie + l] = d1[a * lie + l] - i_d2 + sfim[a * lie + l];
                            m7[a * lie + l] = d2[a * lie + l] + i_d1 + sfre[a * lie + l];
                        }
                    }
                    let q2 = m6.iter().chain(m7.iter()).map(|x| x * x).sum::<f64>();
                    holo_sup = holo_sup.max(q2.sqrt());
                }
                vec![
                    ("trace_residual".to_string(), trace_sup),
                    ("holomorphic_residual".to_string(), holo_sup),
                ]
            }
            ClosedForm::G2Mono { sw_psi_2, .. } => {
                let mut sup = 0.0f64;
                let mut v = vec![0.0; 7 * lie];
                for s in 0..sites {
                    mat_apply(sw_psi_2, 7, 21, fa.site(s), lie, &mut v);
                    let d = dphi[0].site(s);
                    for (x, y) in v.iter_mut().zip(d) {
                        *x += y;
                    }
                    sup = sup.max(slice_norm(&v));
                }
                vec![("monopole_residual".to_string(), sup)]
            }
            ClosedForm::Su4 {
                om,
                jj,
                lj,
                sw_re,
                sw_im,
            } => {
                let d = 28;
                let mut trace_sup = 0.0f64;
                let mut f02_sup = 0.0f64;
                let mut lam = vec![0.0; lie];
                let mut jjf = vec![0.0; d * lie];
                let mut b = vec![0.0; d * lie];
                let mut tb = vec![0.0; d * lie];
                let mut ljb = vec![0.0; d * lie];
                let mut swf = vec![0.0; d * lie];
                for s in 0..sites {
                    let fsrc = fa.site(s);
                    lam.fill(0.0);
                    for (c, &w) in om.c.iter().enumerate() {
                        if w != 0.0 {
                            for l in 0..lie {
                                lam[l] += w * fsrc[c * lie + l];
                            }
                        }
                    }
                    trace_sup = trace_sup.max(slice_norm(&lam));
                    mat_apply(jj, d, d, fsrc, lie, &mut jjf);
                    for v in 0..d * lie {
                        b[v] = 0.5 * (fsrc[v] - jjf[v]);
                    }
                    mat_apply(sw_re, d, d, &b, lie, &mut tb);
                    mat_apply(lj, d, d, &b, lie, &mut ljb);
                    mat_apply(sw_im, d, d, fsrc, lie, &mut swf);
                    let mut q2 = 0.0;
                    for v in 0..d * lie {
                        let re = 0.25 * tb[v] + 0.5 * b[v];
                        let im = 0.25 * (ljb[v] - swf[v]);
                        q2 += re * re + im * im;
                    }
                    f02_sup = f02_sup.max(q2.sqrt());
                }
                vec![
                    ("trace_residual".to_string(), trace_sup),
                    ("f02_residual".to_string(), f02_sup),
                ]
            }
        })
    }
}

/// Quaternionic case. With `g_i = <F, omega_i>/2 - sum (tau_i)_pq [Phi_p, Phi_q]/2`,
/// the projection is `sum_i g_i (omega_i - tau_i)/2` plus the mixed block
/// `sum_j T(m, j) (D Phi_j)/4` on the (a, fiber m) slots.
#[allow(clippy::too_many_arguments)]
fn k3_closed(
    alg: &LieAlgebra,
    g: &GaugeField,
    fa: &Field,
    dphi: &[Field],
    triple: &[KForm; 3],
    tmat: &[Vec<f64>],
    pairs: &PairTable,
    out: &mut Fibered2Form,
) {
    let lie = g.a.lie;
    let base_pairs = basis(4, 2);
    let mut gi = vec![0.0; lie];
    for s in 0..g.a.grid.sites {
        let fsrc = fa.site(s);
        let dst = out.site_mut(s);
        for tau in triple.iter() {
            gi.fill(0.0);
            for (c, &w) in tau.c.iter().enumerate() {
                if w != 0.0 {
                    for l in 0..lie {
                        gi[l] += 0.5 * w * fsrc[c * lie + l];
                    }
                }
            }
            for (pc, pq) in base_pairs.iter().enumerate() {
                let w = tau.c[pc];
                if w != 0.0 {
                    alg.bracket_acc(
                        -0.5 * w,
                        g.higgs[pq[0] as usize].site(s),
                        g.higgs[pq[1] as usize].site(s),
                        &mut gi,
                    );
                }
            }
            for (pc, pq) in base_pairs.iter().enumerate() {
                let w = tau.c[pc];
                if w == 0.0 {
                    continue;
                }
                let amb_base = pairs.comp(pq[0] as usize, pq[1] as usize).0;
                let amb_fiber = pairs.comp(4 + pq[0] as usize, 4 + pq[1] as usize).0;
                for l in 0..lie {
                    dst[amb_base * lie + l] += 0.5 * w * gi[l];
                    dst[amb_fiber * lie + l] -= 0.5 * w * gi[l];
                }
            }
        }
        for m in 0..4 {
            for a in 0..4 {
                let amb = pairs.comp(a, 4 + m).0;
                for (j, d) in dphi.iter().enumerate() {
                    let t = &tmat[m * 4 + j];
                    let dsrc = d.site(s);
                    for b in 0..4 {
                        let coef = 0.25 * t[a * 4 + b];
                        if coef != 0.0 {
                            for l in 0..lie {
                                dst[amb * lie + l] += coef * dsrc[b * lie + l];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Kaehler threefold case. Writing `lam = <F, omega> + [Phi_1, Phi_2]` and
/// `B` for the (2,0)+(0,2) part of the curvature, the projection is
/// `lam omega / 4 + B / 2 - *(D Phi_1 ^ Im Omega)/4 - *(D Phi_2 ^ Re Omega)/4`
/// on the base, `(D Phi_1 - I D Phi_2 + *(F ^ Im Omega))/4` and
/// `(D Phi_2 + I D Phi_1 + *(F ^ Re Omega))/4` on the mixed slots, and
/// `lam / 4` on the fiber slot.
#[allow(clippy::too_many_arguments)]
fn cy3_closed(
    alg: &LieAlgebra,
    g: &GaugeField,
    fa: &Field,
    dphi: &[Field],
    om: &KForm,
    jmat: &[f64],
    jj: &[f64],
    sw_f_re: &[f64],
    sw_f_im: &[f64],
    sw_a_re: &[f64],
    sw_a_im: &[f64],
    pairs: &PairTable,
    out: &mut Fibered2Form,
) {
    let lie = g.a.lie;
    let d6 = 15;
    let base_pairs = basis(6, 2);
    let mut lam = vec![0.0; lie];
    let mut jjf = vec![0.0; d6 * lie];
    let mut sfre = vec![0.0; 6 * lie];
    let mut sfim = vec![0.0; 6 * lie];
    let mut sd1im = vec![0.0; d6 * lie];
    let mut sd2re = vec![0.0; d6 * lie];
    for s in 0..g.a.grid.sites {
        let fsrc = fa.site(s);
        let d1 = dphi[0].site(s);
        let d2 = dphi[1].site(s);
        lam.fill(0.0);
        for (c, &w) in om.c.iter().enumerate() {
            if w != 0.0 {
                for l in 0..lie {
                    lam[l] += w * fsrc[c * lie + l];
                }
            }
        }
        alg.bracket_acc(1.0, g.higgs[0].site(s), g.higgs[1].site(s), &mut lam);
        mat_apply(jj, d6, d6, fsrc, lie, &mut jjf);
        mat_apply(sw_f_re, 6, d6, fsrc, lie, &mut sfre);
        mat_apply(sw_f_im, 6, d6, fsrc, lie, &mut sfim);
        mat_apply(sw_a_im, d6, 6, d1, lie, &mut sd1im);
        mat_apply(sw_a_re, d6, 6, d2, lie, &mut sd2re);
        let dst = out.site_mut(s);
        for (bc, pq) in base_pairs.iter().enumerate() {
            let amb = pairs.comp(pq[0] as usize, pq[1] as usize).0;
            for l in 0..lie {
                let b = 0.5 * (fsrc[bc * lie + l] - jjf[bc * lie + l]);
                dst[amb * lie + l] = 0.25 * lam[l] * om.c[bc] + 0.5 * b
                    - 0.25 * sd1im[bc * lie + l]
                    - 0.25 * sd2re[bc * lie + l];
            }
        }
        for a in 0..6 {
            let amb6 = pairs.comp(a, 6).0;
            let amb7 = pairs.comp(a, 7).0;
            for l in 0..lie {
                let mut i_d1 = 0.0;
                let mut i_d2 = 0.0;
                for b in 0..6 {
                    let jab = jmat[a * 6 + b];
                    if jab != 0.0 {
                        i_d1 += jab * d1[b * lie + l];
                        i_d2 += jab * d2[b * lie + l];
                    }
                }
                dst[amb6 * lie + l] =
                    0.25 * (d1[a * lie + l] - i_d2 + sfim[a * lie + l]);
                dst[amb7 * lie + l] =
                    0.25 * (d2[a * lie + l] + i_d1 + sfre[a * lie + l]);
            }
        }
        let amb67 = pairs.comp(6, 7).0;
        for l in 0..lie {
            dst[amb67 * lie + l] = 0.25 * lam[l];
        }
    }
}

/// Monopole case: `(F + *(F ^ phi) + *(D Phi ^ psi))/4` on the base and
/// `(D Phi + *(F ^ psi))/4` on the mixed slots.
fn g2mono_closed(
    fa: &Field,
    dphi: &[Field],
    sw_phi: &[f64],
    sw_psi_1: &[f64],
    sw_psi_2: &[f64],
    pairs: &PairTable,
    out: &mut Fibered2Form,
) {
    let lie = fa.lie;
    let d7 = 21;
    let base_pairs = basis(7, 2);
    let mut t1 = vec![0.0; d7 * lie];
    let mut t2 = vec![0.0; d7 * lie];
    let mut t3 = vec![0.0; 7 * lie];
    for s in 0..fa.grid.sites {
        let fsrc = fa.site(s);
        let d = dphi[0].site(s);
        mat_apply(sw_phi, d7, d7, fsrc, lie, &mut t1);
        mat_apply(sw_psi_1, d7, 7, d, lie, &mut t2);
        mat_apply(sw_psi_2, 7, d7, fsrc, lie, &mut t3);
        let dst = out.site_mut(s);
        for (bc, pq) in base_pairs.iter().enumerate() {
            let amb = pairs.comp(pq[0] as usize, pq[1] as usize).0;
            for l in 0..lie {
                dst[amb * lie + l] =
                    0.25 * (fsrc[bc * lie + l] + t1[bc * lie + l] + t2[bc * lie + l]);
            }
        }
        for a in 0..7 {
            let amb = pairs.comp(a, 7).0;
            for l in 0..lie {
                dst[amb * lie + l] = 0.25 * (d[a * lie + l] + t3[a * lie + l]);
            }
        }
    }
}

/// Plain eight-dimensional case: `<F, omega> omega / 4 + (T B + 2 B)/4` with
/// `T = *( . ^ Re Omega)` and `B` the (2,0)+(0,2) curvature part.
fn su4_closed(fa: &Field, om: &KForm, jj: &[f64], sw_re: &[f64], out: &mut Fibered2Form) {
    let lie = fa.lie;
    let d = 28;
    let mut lam = vec![0.0; lie];
    let mut jjf = vec![0.0; d * lie];
    let mut b = vec![0.0; d * lie];
    let mut tb = vec![0.0; d * lie];
    for s in 0..fa.grid.sites {
        let fsrc = fa.site(s);
        lam.fill(0.0);
        for (c, &w) in om.c.iter().enumerate() {
            if w != 0.0 {
                for l in 0..lie {
                    lam[l] += w * fsrc[c * lie + l];
                }
            }
        }
        mat_apply(jj, d, d, fsrc, lie, &mut jjf);
        for v in 0..d * lie {
            b[v] = 0.5 * (fsrc[v] - jjf[v]);
        }
        mat_apply(sw_re, d, d, &b, lie, &mut tb);
        let dst = out.site_mut(s);
        for c in 0..d {
            for l in 0..lie {
                dst[c * lie + l] =
                    0.25 * lam[l] * om.c[c] + 0.25 * tb[c * lie + l] + 0.5 * b[c * lie + l];
            }
        }
    }
}
