//! Single-pass kernels for the 7-torus diagnostics that are too large to
//! materialize field by field: the divergence proportionality
//! ||D*(F - 3 pi_7 F)|| / ||D*F|| and the split Weitzenbock residuals for
//! the two curvature parts along the flow direction.
//!
//! Connections are read through `AStorage` so production runs can hold the
//! gauge field packed in f32 (a 12^7 su(2) connection is ~3 GB packed, ~6 GB
//! in f64) while the correctness cross-checks against the materialized
//! operators in `ops` run on plain f64 fields. All arithmetic is f64
//! regardless of storage.
//!
//! Curvature is never stored globally. Kernel sites re-evaluate F from the
//! connection at every stencil point; only D*F is cached, in a rolling
//! window of three axis-0 slices, because the second-derivative stencil of
//! the flow direction needs it at nearest neighbors.

use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::PHI_TERMS;
use crate::liealg::LieAlgebra;

use super::{Field, Grid, PairTable, PAR_CHUNK};

/// Read-only access to a connection, abstracting the storage precision.
/// Layout contract: `read_site` fills `out` with all `n * lie` values at a
/// site, axis-major ([axis][lie]), converted to f64.
pub trait AStorage: Sync {
    fn grid(&self) -> &Arc<Grid>;
    fn lie(&self) -> usize;
    fn read_site(&self, site: usize, out: &mut [f64]);
}

impl AStorage for Field {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn lie(&self) -> usize {
        self.lie
    }

    #[inline]
    fn read_site(&self, site: usize, out: &mut [f64]) {
        debug_assert_eq!(self.k, 1);
        out.copy_from_slice(self.site(site));
    }
}

/// Connection stored as f32, [site][axis][lie]. Same site layout as a k=1
/// `Field`, so the two storages describe identical fields up to rounding.
pub struct PackedGauge {
    pub grid: Arc<Grid>,
    pub lie: usize,
    pub data: Vec<f32>,
}

impl PackedGauge {
    pub fn from_field(a: &Field) -> PackedGauge {
        assert_eq!(a.k, 1);
        PackedGauge {
            grid: a.grid.clone(),
            lie: a.lie,
            data: a.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Stream a band-limited connection straight into packed storage,
    /// never materializing the f64 field.
    pub fn band_limited(grid: &Arc<Grid>, lie: usize, cfg: &super::init::BandLimited) -> PackedGauge {
        let per = grid.n * lie;
        let mut data = vec![0.0f32; grid.sites * per];
        super::init::band_limited_eval(grid, per, cfg, |site, vals| {
            for (dst, &v) in data[site * per..(site + 1) * per].iter_mut().zip(vals) {
                *dst = v as f32;
            }
        });
        PackedGauge {
            grid: grid.clone(),
            lie,
            data,
        }
    }
}

impl AStorage for PackedGauge {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn lie(&self) -> usize {
        self.lie
    }

    #[inline]
    fn read_site(&self, site: usize, out: &mut [f64]) {
        let per = self.grid.n * self.lie;
        let src = &self.data[site * per..(site + 1) * per];
        for (o, &v) in out.iter_mut().zip(src) {
            *o = v as f64;
        }
    }
}

/// phi term table resolved against the sorted 2-form components: for each
/// term (a, b, c, s) of phi, the component indices of e^{ab}, e^{ac}, e^{bc}.
struct PhiPairs {
    terms: [(usize, usize, usize, usize, usize, usize, f64); 7],
}

impl PhiPairs {
    fn new(pairs: &PairTable) -> PhiPairs {
        let mut terms = [(0, 0, 0, 0, 0, 0, 0.0); 7];
        for (t, &(a, b, c, s)) in PHI_TERMS.iter().enumerate() {
            let (a, b, c) = (a as usize, b as usize, c as usize);
            terms[t] = (
                a,
                b,
                c,
                pairs.comp(a, b).0,
                pairs.comp(a, c).0,
                pairs.comp(b, c).0,
                s,
            );
        }
        PhiPairs { terms }
    }
}

/// f7 of a raw 2-form: ((w -| phi) / 6)_k = (1/3) sum_{i<j} w_ij phi_ijk.
#[inline]
fn f7_from_raw(phi: &PhiPairs, lie: usize, w: &[f64], f7: &mut [f64]) {
    f7.fill(0.0);
    for &(a, b, c, iab, iac, ibc, s) in &phi.terms {
        let s3 = s / 3.0;
        for l in 0..lie {
            f7[c * lie + l] += s3 * w[iab * lie + l];
            f7[b * lie + l] -= s3 * w[iac * lie + l];
            f7[a * lie + l] += s3 * w[ibc * lie + l];
        }
    }
}

/// out += scale * (v -| phi) for a 1-form v (raw interior product, no 1/6).
#[inline]
fn expand_into_phi_acc(phi: &PhiPairs, lie: usize, scale: f64, v: &[f64], out: &mut [f64]) {
    for &(a, b, c, iab, iac, ibc, s) in &phi.terms {
        let ss = s * scale;
        for l in 0..lie {
            out[ibc * lie + l] += ss * v[a * lie + l];
            out[iac * lie + l] -= ss * v[b * lie + l];
            out[iab * lie + l] += ss * v[c * lie + l];
        }
    }
}

/// out += scale * [f x f], ([f x f])_k = phi_kij [f_i, f_j].
#[inline]
fn cross_same_acc(
    alg: &LieAlgebra,
    phi: &PhiPairs,
    lie: usize,
    scale: f64,
    f: &[f64],
    out: &mut [f64],
) {
    for &(a, b, c, _, _, _, s) in &phi.terms {
        let w = 2.0 * s * scale;
        alg.bracket_acc(w, &f[b * lie..(b + 1) * lie], &f[c * lie..(c + 1) * lie], &mut out[a * lie..(a + 1) * lie]);
        alg.bracket_acc(-w, &f[a * lie..(a + 1) * lie], &f[c * lie..(c + 1) * lie], &mut out[b * lie..(b + 1) * lie]);
        alg.bracket_acc(w, &f[a * lie..(a + 1) * lie], &f[b * lie..(b + 1) * lie], &mut out[c * lie..(c + 1) * lie]);
    }
}

/// out_j += scale * [g_jk, v_k] (a 2-form acting on a 1-form).
#[inline]
fn dot_action_acc(
    alg: &LieAlgebra,
    pairs: &PairTable,
    lie: usize,
    scale: f64,
    g2form: &[f64],
    v: &[f64],
    out: &mut [f64],
) {
    let n = pairs.n;
    for j in 0..n {
        for k in 0..n {
            if k == j {
                continue;
            }
            let (comp, sgn) = pairs.comp(j, k);
            alg.bracket_acc(
                scale * sgn,
                &g2form[comp * lie..(comp + 1) * lie],
                &v[k * lie..(k + 1) * lie],
                &mut out[j * lie..(j + 1) * lie],
            );
        }
    }
}

/// out_ij += scale * ([w_ik, e_kj] - [w_jk, e_ki]) over sorted components.
#[inline]
fn double_bracket_acc(
    alg: &LieAlgebra,
    pairs: &PairTable,
    lie: usize,
    scale: f64,
    w: &[f64],
    e: &[f64],
    out: &mut [f64],
) {
    let n = pairs.n;
    for (idx, &(i, j)) in pairs.list.iter().enumerate() {
        let dst = idx * lie;
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let (cik, sik) = pairs.comp(i, k);
            let (ckj, skj) = pairs.comp(k, j);
            alg.bracket_acc(
                scale * sik * skj,
                &w[cik * lie..(cik + 1) * lie],
                &e[ckj * lie..(ckj + 1) * lie],
                &mut out[dst..dst + lie],
            );
            let (cjk, sjk) = pairs.comp(j, k);
            let (cki, ski) = pairs.comp(k, i);
            alg.bracket_acc(
                -scale * sjk * ski,
                &w[cjk * lie..(cjk + 1) * lie],
                &e[cki * lie..(cki + 1) * lie],
                &mut out[dst..dst + lie],
            );
        }
    }
}

/// out_ij += scale * 2 [f_i, f_j] (the ad-valued wedge of a 1-form with
/// itself).
#[inline]
fn wedge_same_acc(
    alg: &LieAlgebra,
    pairs: &PairTable,
    lie: usize,
    scale: f64,
    f: &[f64],
    out: &mut [f64],
) {
    for (idx, &(i, j)) in pairs.list.iter().enumerate() {
        alg.bracket_acc(
            2.0 * scale,
            &f[i * lie..(i + 1) * lie],
            &f[j * lie..(j + 1) * lie],
            &mut out[idx * lie..(idx + 1) * lie],
        );
    }
}

/// Scratch and tables for one worker; one per rayon chunk.
struct Star<'c, S: AStorage> {
    a: &'c S,
    alg: &'c LieAlgebra,
    grid: &'c Grid,
    pairs: &'c PairTable,
    inv2h: Vec<f64>,
    n: usize,
    lie: usize,
    /// gather buffers for one F evaluation
    ga_c: Vec<f64>,
    ga_p: Vec<f64>,
    ga_m: Vec<f64>,
    pcoords: Vec<usize>,
}

impl<'c, S: AStorage> Star<'c, S> {
    fn new(a: &'c S, alg: &'c LieAlgebra, pairs: &'c PairTable) -> Star<'c, S> {
        let grid = a.grid().as_ref();
        let n = grid.n;
        let lie = a.lie();
        Star {
            a,
            alg,
            grid,
            pairs,
            inv2h: grid.h.iter().map(|&h| 0.5 / h).collect(),
            n,
            lie,
            ga_c: vec![0.0; n * lie],
            ga_p: vec![0.0; n * n * lie],
            ga_m: vec![0.0; n * n * lie],
            pcoords: vec![0usize; n],
        }
    }

    /// Evaluate the full curvature at `site` (with coords `coords`) into
    /// `f_out` ([sorted pair][lie]).
    fn eval_f(&mut self, site: usize, coords: &[usize], f_out: &mut [f64]) {
        let (n, lie) = (self.n, self.lie);
        self.a.read_site(site, &mut self.ga_c);
        for b in 0..n {
            let sp = self.grid.neighbor(site, coords, b, 1);
            let sm = self.grid.neighbor(site, coords, b, -1);
            self.a.read_site(sp, &mut self.ga_p[b * n * lie..(b + 1) * n * lie]);
            self.a.read_site(sm, &mut self.ga_m[b * n * lie..(b + 1) * n * lie]);
        }
        for (idx, &(i, j)) in self.pairs.list.iter().enumerate() {
            let o = idx * lie;
            let (bi, bj) = (i * n * lie, j * n * lie);
            for l in 0..lie {
                f_out[o + l] = (self.ga_p[bi + j * lie + l] - self.ga_m[bi + j * lie + l])
                    * self.inv2h[i]
                    - (self.ga_p[bj + i * lie + l] - self.ga_m[bj + i * lie + l]) * self.inv2h[j];
            }
            self.alg.bracket_acc(
                1.0,
                &self.ga_c[i * lie..(i + 1) * lie],
                &self.ga_c[j * lie..(j + 1) * lie],
                &mut f_out[o..o + lie],
            );
        }
    }

    /// Evaluate F at a point displaced `step` along `axis` from the center.
    fn eval_f_at(&mut self, site: usize, coords: &[usize], axis: usize, step: isize, f_out: &mut [f64]) {
        let psite = self.grid.neighbor(site, coords, axis, step);
        self.pcoords.copy_from_slice(coords);
        let len = self.grid.shape[axis] as isize;
        self.pcoords[axis] = (coords[axis] as isize + step).rem_euclid(len) as usize;
        let pc = std::mem::take(&mut self.pcoords);
        self.eval_f(psite, &pc, f_out);
        self.pcoords = pc;
    }

    /// (D*f)_j at the site whose curvature star is supplied: center value
    /// `fc`, and per axis i the values at +e_i / -e_i packed with stride
    /// `stride` in `fp` / `fm`. `ac` holds the connection at the center.
    fn dstar_from_star(
        &self,
        ac: &[f64],
        fc: &[f64],
        fp: &[f64],
        fm: &[f64],
        stride: usize,
        out: &mut [f64],
    ) {
        let (n, lie) = (self.n, self.lie);
        out.fill(0.0);
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                let (comp, sgn) = self.pairs.comp(i, j);
                let o = j * lie;
                let c = comp * lie;
                let w = sgn * self.inv2h[i];
                for l in 0..lie {
                    out[o + l] -= w * (fp[i * stride + c + l] - fm[i * stride + c + l]);
                }
                self.alg.bracket_acc(
                    -sgn,
                    &ac[i * lie..(i + 1) * lie],
                    &fc[c..c + lie],
                    &mut out[o..o + lie],
                );
            }
        }
    }

    /// One composed-stencil axis contribution of nabla* nabla:
    /// lap -= central difference of (nabla_axis w) plus the bracket with
    /// the center connection. `av_*` are the axis components of A at
    /// x+e_a, x-e_a, x; `w*` the field at x, x+-e_a, x+-2e_a.
    #[allow(clippy::too_many_arguments)]
    fn axis_lap_acc(
        &self,
        inv2h_a: f64,
        av_p: &[f64],
        av_m: &[f64],
        av_c: &[f64],
        wc: &[f64],
        wp: &[f64],
        wm: &[f64],
        wpp: &[f64],
        wmm: &[f64],
        up: &mut [f64],
        um: &mut [f64],
        u0: &mut [f64],
        lap: &mut [f64],
    ) {
        let lie = self.lie;
        let m = wc.len();
        for t in 0..m {
            up[t] = (wpp[t] - wc[t]) * inv2h_a;
            um[t] = (wc[t] - wmm[t]) * inv2h_a;
            u0[t] = (wp[t] - wm[t]) * inv2h_a;
        }
        let comps = m / lie;
        for c in 0..comps {
            let o = c * lie;
            self.alg.bracket_acc(1.0, av_p, &wp[o..o + lie], &mut up[o..o + lie]);
            self.alg.bracket_acc(1.0, av_m, &wm[o..o + lie], &mut um[o..o + lie]);
            self.alg.bracket_acc(1.0, av_c, &wc[o..o + lie], &mut u0[o..o + lie]);
        }
        for t in 0..m {
            lap[t] -= (up[t] - um[t]) * inv2h_a;
        }
        for c in 0..comps {
            let o = c * lie;
            self.alg.bracket_acc(-1.0, av_c, &u0[o..o + lie], &mut lap[o..o + lie]);
        }
    }
}

/// L2 norms of D*(F - 3 pi_7 F) and D*F in one pass over the grid. On a
/// holonomy-G2 background the continuum residual vanishes for every
/// connection, so the discrete value is pure truncation error.
#[derive(Debug, Clone, Copy)]
pub struct ProportionalityReport {
    pub resid: f64,
    pub dstar: f64,
}

pub fn proportionality_report<S: AStorage>(alg: &LieAlgebra, a: &S) -> ProportionalityReport {
    let grid = a.grid().clone();
    assert_eq!(grid.n, 7, "the 3 D*F7 normalization is specific to phi");
    let lie = a.lie();
    assert_eq!(lie, alg.dim);
    let pairs = PairTable::new(7);
    let phi = PhiPairs::new(&pairs);
    let f_per = pairs.list.len() * lie;
    let v_per = 7 * lie;

    let sums: Vec<[f64; 2]> = (0..grid.sites)
        .into_par_iter()
        .chunks(PAR_CHUNK)
        .map(|sites| {
            let mut st = Star::new(a, alg, &pairs);
            let mut coords = vec![0usize; 7];
            let mut fc = vec![0.0; f_per];
            let mut fp = vec![0.0; 7 * f_per];
            let mut fm = vec![0.0; 7 * f_per];
            let mut gc = vec![0.0; f_per];
            let mut gp = vec![0.0; 7 * f_per];
            let mut gm = vec![0.0; 7 * f_per];
            let mut f7 = vec![0.0; v_per];
            let mut ac = vec![0.0; v_per];
            let mut s = vec![0.0; v_per];
            let mut g = vec![0.0; v_per];
            let mut acc = [0.0f64; 2];
            for site in sites {
                st.grid.coords_of(site, &mut coords);
                st.eval_f(site, &coords, &mut fc);
                for ax in 0..7 {
                    let (p, m) = (ax * f_per, (ax + 1) * f_per);
                    st.eval_f_at(site, &coords, ax, 1, &mut fp[p..m]);
                    st.eval_f_at(site, &coords, ax, -1, &mut fm[p..m]);
                }
                // G = F - 3 pi_7 F at every stencil point
                gc.copy_from_slice(&fc);
                f7_from_raw(&phi, lie, &fc, &mut f7);
                expand_into_phi_acc(&phi, lie, -3.0, &f7, &mut gc);
                for ax in 0..7 {
                    let (p, m) = (ax * f_per, (ax + 1) * f_per);
                    gp[p..m].copy_from_slice(&fp[p..m]);
                    f7_from_raw(&phi, lie, &fp[p..m], &mut f7);
                    expand_into_phi_acc(&phi, lie, -3.0, &f7, &mut gp[p..m]);
                    gm[p..m].copy_from_slice(&fm[p..m]);
                    f7_from_raw(&phi, lie, &fm[p..m], &mut f7);
                    expand_into_phi_acc(&phi, lie, -3.0, &f7, &mut gm[p..m]);
                }
                a.read_site(site, &mut ac);
                st.dstar_from_star(&ac, &fc, &fp, &fm, f_per, &mut s);
                st.dstar_from_star(&ac, &gc, &gp, &gm, f_per, &mut g);
                acc[0] += g.iter().map(|v| v * v).sum::<f64>();
                acc[1] += s.iter().map(|v| v * v).sum::<f64>();
            }
            acc
        })
        .collect();

    let cell = grid.cell_volume();
    let mut tot = [0.0f64; 2];
    for s in sums {
        tot[0] += s[0];
        tot[1] += s[1];
    }
    ProportionalityReport {
        resid: (tot[0] * cell).sqrt(),
        dstar: (tot[1] * cell).sqrt(),
    }
}

/// Residual norms of the split curvature evolution along the flow
/// direction, measured at a single time from spatial data only:
///
///   r7  = -(Ds -| phi)/6 + nabla*nabla f7  - [f7 x f7] - 2 [F14 . f7]
///   r14 = -pi_14(Ds)     + nabla*nabla F14 - [[F14, F14]] + 3 [f7 /\14 f7]
///
/// with s = D*F, since along the flow dF/dt = -Ds. Both vanish in the
/// continuum on a flat G2 background; the discrete norms are O(h^2).
/// `scale7` / `scale14` are the rough-Laplacian norms the residuals should
/// be compared against, and `dstar` / `prop_resid` come along for free.
#[derive(Debug, Clone, Copy)]
pub struct WeitzenbockReport {
    pub resid7: f64,
    pub resid14: f64,
    pub scale7: f64,
    pub scale14: f64,
    pub dstar: f64,
    pub prop_resid: f64,
}

/// Star point layout for the 29-point second-derivative stencil.
#[inline]
fn sp(ax: usize, which: usize) -> usize {
    1 + 4 * ax + which
}

pub fn weitzenbock_report<S: AStorage>(alg: &LieAlgebra, a: &S) -> WeitzenbockReport {
    let grid = a.grid().clone();
    assert_eq!(grid.n, 7, "the split evolution residuals are specific to phi");
    let lie = a.lie();
    assert_eq!(lie, alg.dim);
    let pairs = PairTable::new(7);
    let phi = PhiPairs::new(&pairs);
    let f_per = pairs.list.len() * lie;
    let v_per = 7 * lie;

    let n0 = grid.shape[0];
    let slice_sites = grid.sites / n0;
    // rolling window of D*F on three axis-0 slices
    let mut ring = vec![0.0f64; 3 * slice_sites * v_per];
    let mut slot_of: [isize; 3] = [-1, -1, -1];

    let compute_slice = |k: usize, buf: &mut [f64]| {
        buf.par_chunks_mut(PAR_CHUNK * v_per)
            .enumerate()
            .for_each(|(chunk, out)| {
                let mut st = Star::new(a, alg, &pairs);
                let mut coords = vec![0usize; 7];
                let mut fc = vec![0.0; f_per];
                let mut fp = vec![0.0; 7 * f_per];
                let mut fm = vec![0.0; 7 * f_per];
                let mut ac = vec![0.0; v_per];
                let base_r = chunk * PAR_CHUNK;
                for (t, s_out) in out.chunks_mut(v_per).enumerate() {
                    let site = k * slice_sites + base_r + t;
                    st.grid.coords_of(site, &mut coords);
                    st.eval_f(site, &coords, &mut fc);
                    for ax in 0..7 {
                        let (p, m) = (ax * f_per, (ax + 1) * f_per);
                        st.eval_f_at(site, &coords, ax, 1, &mut fp[p..m]);
                        st.eval_f_at(site, &coords, ax, -1, &mut fm[p..m]);
                    }
                    a.read_site(site, &mut ac);
                    st.dstar_from_star(&ac, &fc, &fp, &fm, f_per, s_out);
                }
            });
    };

    let mut tot = [0.0f64; 6];
    for x0 in 0..n0 {
        let needed = [
            (x0 + n0 - 1) % n0,
            x0,
            (x0 + 1) % n0,
        ];
        for &k in &needed {
            if slot_of.contains(&(k as isize)) {
                continue;
            }
            let victim = (0..3)
                .find(|&q| !needed.contains(&(slot_of[q].rem_euclid(n0 as isize) as usize)) || slot_of[q] < 0)
                .expect("three slots cover a three-slice window");
            let (lo, hi) = (victim * slice_sites * v_per, (victim + 1) * slice_sites * v_per);
            compute_slice(k, &mut ring[lo..hi]);
            slot_of[victim] = k as isize;
        }
        let slot = |k: usize| -> usize {
            (0..3).find(|&q| slot_of[q] == k as isize).expect("resident slice")
        };
        let (s_m, s_c, s_p) = (slot(needed[0]), slot(x0), slot(needed[2]));
        let ring_ref = &ring;

        let sums: Vec<[f64; 6]> = (0..slice_sites)
            .into_par_iter()
            .chunks(PAR_CHUNK)
            .map(|rs| {
                let mut st = Star::new(a, alg, &pairs);
                let mut coords = vec![0usize; 7];
                let mut fraw = vec![0.0; f_per];
                // f7 and F14 at the 29 stencil points
                let mut w7 = vec![0.0; 29 * v_per];
                let mut w14 = vec![0.0; 29 * f_per];
                let mut a_star = vec![0.0; 15 * v_per];
                let mut ds = vec![0.0; f_per];
                let mut ds7 = vec![0.0; v_per];
                let mut lap7 = vec![0.0; v_per];
                let mut lap14 = vec![0.0; f_per];
                let mut up = vec![0.0; f_per];
                let mut um = vec![0.0; f_per];
                let mut u0 = vec![0.0; f_per];
                let mut r7 = vec![0.0; v_per];
                let mut r14 = vec![0.0; f_per];
                let mut cross = vec![0.0; v_per];
                let mut gstar = vec![0.0; 15 * f_per];
                let mut dsg = vec![0.0; v_per];
                let mut acc = [0.0f64; 6];
                for r in rs {
                    let site = x0 * slice_sites + r;
                    st.grid.coords_of(site, &mut coords);

                    // curvature split at the 29 stencil points
                    st.eval_f(site, &coords, &mut fraw);
                    split_into(&phi, lie, &fraw, &mut w7[..v_per], &mut w14[..f_per]);
                    for ax in 0..7 {
                        for (which, step) in [(0usize, 1isize), (1, -1), (2, 2), (3, -2)] {
                            let q = sp(ax, which);
                            st.eval_f_at(site, &coords, ax, step, &mut fraw);
                            split_into(
                                &phi,
                                lie,
                                &fraw,
                                &mut w7[q * v_per..(q + 1) * v_per],
                                &mut w14[q * f_per..(q + 1) * f_per],
                            );
                        }
                    }

                    // connection at the center and the 14 nearest neighbors
                    a.read_site(site, &mut a_star[..v_per]);
                    for ax in 0..7 {
                        let spos = st.grid.neighbor(site, &coords, ax, 1);
                        let sneg = st.grid.neighbor(site, &coords, ax, -1);
                        a.read_site(spos, &mut a_star[(1 + 2 * ax) * v_per..(2 + 2 * ax) * v_per]);
                        a.read_site(sneg, &mut a_star[(2 + 2 * ax) * v_per..(3 + 2 * ax) * v_per]);
                    }

                    // rough Laplacians of both parts
                    lap7.fill(0.0);
                    lap14.fill(0.0);
                    for ax in 0..7 {
                        let av_c = &a_star[ax * lie..(ax + 1) * lie];
                        let av_p = &a_star[(1 + 2 * ax) * v_per + ax * lie..(1 + 2 * ax) * v_per + (ax + 1) * lie];
                        let av_m = &a_star[(2 + 2 * ax) * v_per + ax * lie..(2 + 2 * ax) * v_per + (ax + 1) * lie];
                        st.axis_lap_acc(
                            st.inv2h[ax],
                            av_p,
                            av_m,
                            av_c,
                            &w7[..v_per],
                            &w7[sp(ax, 0) * v_per..(sp(ax, 0) + 1) * v_per],
                            &w7[sp(ax, 1) * v_per..(sp(ax, 1) + 1) * v_per],
                            &w7[sp(ax, 2) * v_per..(sp(ax, 2) + 1) * v_per],
                            &w7[sp(ax, 3) * v_per..(sp(ax, 3) + 1) * v_per],
                            &mut up[..v_per],
                            &mut um[..v_per],
                            &mut u0[..v_per],
                            &mut lap7,
                        );
                        st.axis_lap_acc(
                            st.inv2h[ax],
                            av_p,
                            av_m,
                            av_c,
                            &w14[..f_per],
                            &w14[sp(ax, 0) * f_per..(sp(ax, 0) + 1) * f_per],
                            &w14[sp(ax, 1) * f_per..(sp(ax, 1) + 1) * f_per],
                            &w14[sp(ax, 2) * f_per..(sp(ax, 2) + 1) * f_per],
                            &w14[sp(ax, 3) * f_per..(sp(ax, 3) + 1) * f_per],
                            &mut up,
                            &mut um,
                            &mut u0,
                            &mut lap14,
                        );
                    }

                    // D(D*F) from the cached window
                    let sc = &ring_ref[(s_c * slice_sites + r) * v_per..(s_c * slice_sites + r + 1) * v_per];
                    for (idx, &(i, j)) in pairs.list.iter().enumerate() {
                        let o = idx * lie;
                        let (ri, rj) = (ring_neighbor(st.grid, &coords, site, r, i, s_m, s_c, s_p, slice_sites),
                                        ring_neighbor(st.grid, &coords, site, r, j, s_m, s_c, s_p, slice_sites));
                        for l in 0..lie {
                            ds[o + l] = (ring_ref[ri.0 * v_per + j * lie + l]
                                - ring_ref[ri.1 * v_per + j * lie + l])
                                * st.inv2h[i]
                                - (ring_ref[rj.0 * v_per + i * lie + l]
                                    - ring_ref[rj.1 * v_per + i * lie + l])
                                    * st.inv2h[j];
                        }
                        st.alg.bracket_acc(
                            1.0,
                            &a_star[i * lie..(i + 1) * lie],
                            &sc[j * lie..(j + 1) * lie],
                            &mut ds[o..o + lie],
                        );
                        st.alg.bracket_acc(
                            -1.0,
                            &a_star[j * lie..(j + 1) * lie],
                            &sc[i * lie..(i + 1) * lie],
                            &mut ds[o..o + lie],
                        );
                    }

                    // r7 = -(Ds -| phi)/6 + lap f7 - [f7 x f7] - 2 [F14 . f7]
                    f7_from_raw(&phi, lie, &ds, &mut ds7);
                    for t in 0..v_per {
                        r7[t] = lap7[t] - ds7[t];
                    }
                    cross_same_acc(alg, &phi, lie, -1.0, &w7[..v_per], &mut r7);
                    dot_action_acc(alg, &pairs, lie, -2.0, &w14[..f_per], &w7[..v_per], &mut r7);

                    // r14 = -pi_14(Ds) + lap F14 - [[F14,F14]] + 3 [f7 /\14 f7]
                    for t in 0..f_per {
                        r14[t] = lap14[t] - ds[t];
                    }
                    expand_into_phi_acc(&phi, lie, 1.0, &ds7, &mut r14);
                    double_bracket_acc(alg, &pairs, lie, -1.0, &w14[..f_per], &w14[..f_per], &mut r14);
                    wedge_same_acc(alg, &pairs, lie, 3.0, &w7[..v_per], &mut r14);
                    cross.fill(0.0);
                    cross_same_acc(alg, &phi, lie, 1.0, &w7[..v_per], &mut cross);
                    expand_into_phi_acc(&phi, lie, -1.0, &cross, &mut r14);

                    // divergence proportionality from the same stencil:
                    // G = F14 - 2 (f7 -| phi) at the 15 first-ring points
                    for (q, src) in [(0usize, 0usize)]
                        .into_iter()
                        .chain((0..7).flat_map(|ax| {
                            [(1 + 2 * ax, sp(ax, 0)), (2 + 2 * ax, sp(ax, 1))]
                        }))
                    {
                        let dst = &mut gstar[q * f_per..(q + 1) * f_per];
                        dst.copy_from_slice(&w14[src * f_per..(src + 1) * f_per]);
                        expand_into_phi_acc(&phi, lie, -2.0, &w7[src * v_per..(src + 1) * v_per], dst);
                    }
                    let (gc, g_pm) = gstar.split_at_mut(f_per);
                    dstar_interleaved(&st, &a_star[..v_per], gc, g_pm, f_per, &mut dsg);

                    acc[0] += r7.iter().map(|v| v * v).sum::<f64>();
                    acc[1] += r14.iter().map(|v| v * v).sum::<f64>();
                    acc[2] += lap7.iter().map(|v| v * v).sum::<f64>();
                    acc[3] += lap14.iter().map(|v| v * v).sum::<f64>();
                    acc[4] += sc.iter().map(|v| v * v).sum::<f64>();
                    acc[5] += dsg.iter().map(|v| v * v).sum::<f64>();
                }
                acc
            })
            .collect();
        for s in sums {
            for (t, v) in tot.iter_mut().zip(s) {
                *t += v;
            }
        }
    }

    let cell = grid.cell_volume();
    WeitzenbockReport {
        resid7: (tot[0] * cell).sqrt(),
        resid14: (tot[1] * cell).sqrt(),
        scale7: (tot[2] * cell).sqrt(),
        scale14: (tot[3] * cell).sqrt(),
        dstar: (tot[4] * cell).sqrt(),
        prop_resid: (tot[5] * cell).sqrt(),
    }
}

/// Ring indices (plus, minus) of the neighbors of `site` along `axis`,
/// as offsets into the slice window (slot * slice_sites + r).
#[allow(clippy::too_many_arguments)]
#[inline]
fn ring_neighbor(
    grid: &Grid,
    coords: &[usize],
    site: usize,
    r: usize,
    axis: usize,
    s_m: usize,
    s_c: usize,
    s_p: usize,
    slice_sites: usize,
) -> (usize, usize) {
    if axis == 0 {
        (s_p * slice_sites + r, s_m * slice_sites + r)
    } else {
        let p = grid.neighbor(site, coords, axis, 1) % slice_sites;
        let m = grid.neighbor(site, coords, axis, -1) % slice_sites;
        (s_c * slice_sites + p, s_c * slice_sites + m)
    }
}

/// D* from a star stored as center + interleaved [+axis, -axis] blocks.
fn dstar_interleaved<S: AStorage>(
    st: &Star<'_, S>,
    ac: &[f64],
    fc: &[f64],
    f_pm: &[f64],
    f_per: usize,
    out: &mut [f64],
) {
    let (n, lie) = (st.n, st.lie);
    out.fill(0.0);
    for j in 0..n {
        for i in 0..n {
            if i == j {
                continue;
            }
            let (comp, sgn) = st.pairs.comp(i, j);
            let o = j * lie;
            let c = comp * lie;
            let (bp, bm) = (2 * i * f_per, (2 * i + 1) * f_per);
            let w = sgn * st.inv2h[i];
            for l in 0..lie {
                out[o + l] -= w * (f_pm[bp + c + l] - f_pm[bm + c + l]);
            }
            st.alg.bracket_acc(-sgn, &ac[i * lie..(i + 1) * lie], &fc[c..c + lie], &mut out[o..o + lie]);
        }
    }
}

#[inline]
fn split_into(phi: &PhiPairs, lie: usize, f: &[f64], w7: &mut [f64], w14: &mut [f64]) {
    f7_from_raw(phi, lie, f, w7);
    w14.copy_from_slice(f);
    expand_into_phi_acc(phi, lie, -1.0, w7, w14);
}

/// Materialized helpers for the same split, used by the cross-checks and
/// the flow monitors on grids small enough to hold everything.
pub fn f7_part(f: &Field) -> Field {
    assert_eq!(f.grid.n, 7);
    assert_eq!(f.k, 2);
    let pairs = PairTable::new(7);
    let phi = PhiPairs::new(&pairs);
    let mut out = Field::zeros(&f.grid, 1, f.lie);
    let per = out.per_site();
    for s in 0..f.grid.sites {
        f7_from_raw(&phi, f.lie, f.site(s), &mut out.data[s * per..(s + 1) * per]);
    }
    out
}

pub fn seven_into_two(f7: &Field) -> Field {
    assert_eq!(f7.grid.n, 7);
    assert_eq!(f7.k, 1);
    let pairs = PairTable::new(7);
    let phi = PhiPairs::new(&pairs);
    let mut out = Field::zeros(&f7.grid, 2, f7.lie);
    let per = out.per_site();
    for s in 0..f7.grid.sites {
        expand_into_phi_acc(
            &phi,
            f7.lie,
            1.0,
            f7.site(s),
            &mut out.data[s * per..(s + 1) * per],
        );
    }
    out
}
