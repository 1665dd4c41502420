//! Periodic finite-difference lattices on flat tori.
//!
//! A [`Grid`] is a rectangular torus with per-axis site counts and periods;
//! a [`Field`] stores an ad-valued k-form per site, components in the sorted
//! exterior basis, layout `[site][comp][lie]`. All stencils are second-order
//! central differences, so every operator here carries an O(h^2) contract
//! against its continuum counterpart.

pub mod fused;
pub mod init;
pub mod ops;
pub mod snapshot;

use std::sync::Arc;

use crate::exterior::{basis, binomial, rank};

/// Chunk length (in sites) for parallel kernels. Reductions sum chunk
/// partials in index order, so results do not depend on the worker count.
pub const PAR_CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub shape: Vec<usize>,
    pub periods: Vec<f64>,
    /// Spacing h_i = L_i / N_i.
    pub h: Vec<f64>,
    /// Row-major strides, last axis fastest.
    pub strides: Vec<usize>,
    pub sites: usize,
}

impl Grid {
    pub fn new(shape: &[usize], periods: &[f64]) -> Arc<Grid> {
        assert_eq!(shape.len(), periods.len());
        let n = shape.len();
        assert!(n >= 1);
        for (&s, &l) in shape.iter().zip(periods) {
            assert!(s >= 4, "central stencils need at least 4 sites per axis");
            assert!(l > 0.0);
        }
        let mut strides = vec![0usize; n];
        let mut acc = 1usize;
        for a in (0..n).rev() {
            strides[a] = acc;
            acc *= shape[a];
        }
        let h = shape
            .iter()
            .zip(periods)
            .map(|(&s, &l)| l / s as f64)
            .collect();
        Arc::new(Grid {
            n,
            shape: shape.to_vec(),
            periods: periods.to_vec(),
            h,
            strides,
            sites: acc,
        })
    }

    pub fn unit(shape: &[usize]) -> Arc<Grid> {
        Grid::new(shape, &vec![1.0; shape.len()])
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    #[inline]
    pub fn coords_of(&self, site: usize, coords: &mut [usize]) {
        let mut rem = site;
        for a in 0..self.n {
            coords[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
    }

    #[inline]
    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Site shifted by `step` along `axis`, wrapping periodically. `coords`
    /// must be the decomposition of `site`.
    #[inline]
    pub fn neighbor(&self, site: usize, coords: &[usize], axis: usize, step: isize) -> usize {
        let len = self.shape[axis] as isize;
        let c = coords[axis] as isize + step;
        let c = c.rem_euclid(len) as usize;
        site - coords[axis] * self.strides[axis] + c * self.strides[axis]
    }

    /// Physical position of a site.
    pub fn position(&self, coords: &[usize], out: &mut [f64]) {
        for a in 0..self.n {
            out[a] = coords[a] as f64 * self.h[a];
        }
    }
}

/// Ad-valued k-form field. Real fields use `lie = 1`.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub k: usize,
    pub comps: usize,
    pub lie: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>, k: usize, lie: usize) -> Field {
        let comps = binomial(grid.n, k);
        Field {
            grid: grid.clone(),
            k,
            comps,
            lie,
            data: vec![0.0; grid.sites * comps * lie],
        }
    }

    #[inline]
    pub fn per_site(&self) -> usize {
        self.comps * self.lie
    }

    #[inline]
    pub fn site(&self, s: usize) -> &[f64] {
        let p = self.per_site();
        &self.data[s * p..(s + 1) * p]
    }

    #[inline]
    pub fn site_mut(&mut self, s: usize) -> &mut [f64] {
        let p = self.per_site();
        &mut self.data[s * p..(s + 1) * p]
    }

    #[inline]
    pub fn value(&self, s: usize, comp: usize) -> &[f64] {
        let b = (s * self.comps + comp) * self.lie;
        &self.data[b..b + self.lie]
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &Field) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Pointwise |w(x)|^2 in the sorted-basis convention.
    #[inline]
    pub fn norm_sq_at(&self, s: usize) -> f64 {
        self.site(s).iter().map(|v| v * v).sum()
    }

    /// Riemann-sum L^2 norm squared: sum over sites of |w|^2 times the cell
    /// volume.
    pub fn l2_norm_sq(&self) -> f64 {
        let cell = self.grid.cell_volume();
        let p = self.per_site();
        let partials: Vec<f64> = self
            .data
            .chunks(p * PAR_CHUNK)
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        cell * partials.iter().sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        let p = self.per_site();
        let mut best = 0.0f64;
        for s in 0..self.grid.sites {
            let v = self.data[s * p..(s + 1) * p]
                .iter()
                .map(|v| v * v)
                .sum::<f64>();
            if v > best {
                best = v;
            }
        }
        best.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// L^2 inner product with the cell-volume weight.
    pub fn l2_dot(&self, other: &Field) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let cell = self.grid.cell_volume();
        let p = self.per_site();
        let partials: Vec<f64> = self
            .data
            .chunks(p * PAR_CHUNK)
            .zip(other.data.chunks(p * PAR_CHUNK))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect();
        cell * partials.iter().sum::<f64>()
    }
}

/// Connection plus optional Higgs fields (dimensional-reduction modes).
#[derive(Debug, Clone)]
pub struct GaugeField {
    /// Ad-valued 1-form.
    pub a: Field,
    /// Ad-valued 0-forms.
    pub higgs: Vec<Field>,
}

impl GaugeField {
    pub fn new(a: Field) -> GaugeField {
        assert_eq!(a.k, 1);
        GaugeField { a, higgs: Vec::new() }
    }

    pub fn zeros(grid: &Arc<Grid>, lie: usize) -> GaugeField {
        GaugeField::new(Field::zeros(grid, 1, lie))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.a.grid
    }

    pub fn lie(&self) -> usize {
        self.a.lie
    }

    /// self += c * other across the connection and every Higgs field.
    pub fn axpy(&mut self, c: f64, other: &GaugeField) {
        assert_eq!(self.higgs.len(), other.higgs.len());
        self.a.axpy(c, &other.a);
        for (p, q) in self.higgs.iter_mut().zip(&other.higgs) {
            p.axpy(c, q);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.a.all_finite() && self.higgs.iter().all(|p| p.all_finite())
    }
}

/// Signed lookup from an ordered index pair to the sorted 2-form component.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub n: usize,
    /// Sorted pairs in lexicographic order.
    pub list: Vec<(usize, usize)>,
    /// `pos[i*n + j] = (comp, sign)` for i != j.
    pub pos: Vec<(usize, f64)>,
}

impl PairTable {
    pub fn new(n: usize) -> PairTable {
        let list: Vec<(usize, usize)> = basis(n, 2)
            .iter()
            .map(|p| (p[0] as usize, p[1] as usize))
            .collect();
        let mut pos = vec![(usize::MAX, 0.0); n * n];
        for (c, &(i, j)) in list.iter().enumerate() {
            pos[i * n + j] = (c, 1.0);
            pos[j * n + i] = (c, -1.0);
        }
        PairTable { n, list, pos }
    }

    #[inline]
    pub fn comp(&self, i: usize, j: usize) -> (usize, f64) {
        self.pos[i * self.n + j]
    }
}

/// Stencil table for the exterior derivative from k-forms to (k+1)-forms:
/// for each output component K, the list of (axis j_m, sign (-1)^m, input
/// component K \ j_m).
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    pub n: usize,
    pub k: usize,
    pub rows: Vec<Vec<(usize, f64, usize)>>,
}

impl DerivativeTable {
    pub fn new(n: usize, k: usize) -> DerivativeTable {
        let out_basis = basis(n, k + 1);
        let mut rows = Vec::with_capacity(out_basis.len());
        for q in &out_basis {
            let mut row = Vec::with_capacity(k + 1);
            for m in 0..=k {
                let axis = q[m] as usize;
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut sub = q.clone();
                sub.remove(m);
                row.push((axis, sign, rank(n, &sub)));
            }
            rows.push(row);
        }
        DerivativeTable { n, k, rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_roundtrip_and_wrapping() {
        let g = Grid::new(&[4, 6, 5], &[1.0, 2.0, 1.0]);
        assert_eq!(g.sites, 120);
        assert_eq!(g.strides, vec![30, 5, 1]);
        let mut c = vec![0usize; 3];
        for s in 0..g.sites {
            g.coords_of(s, &mut c);
            assert_eq!(g.index(&c), s);
        }
        g.coords_of(7, &mut c); // (0, 1, 2)
        assert_eq!(c, vec![0, 1, 2]);
        assert_eq!(g.neighbor(7, &c, 2, 1), 8);
        assert_eq!(g.neighbor(7, &c, 2, 3), 5); // wraps 2+3 -> 0
        assert_eq!(g.neighbor(7, &c, 0, -1), 7 + 3 * 30);
        assert_eq!(g.neighbor(7, &c, 1, -2), 7 + 4 * 5);
    }

    #[test]
    fn field_norms_use_cell_volume() {
        let g = Grid::new(&[4, 4], &[2.0, 2.0]);
        let mut f = Field::zeros(&g, 1, 3);
        for v in &mut f.data {
            *v = 2.0;
        }
        // |w|^2 = 4 per (comp, lie), 2 comps x 3 lie = 24 per site; total
        // integral 24 * volume
        assert!((f.l2_norm_sq() - 24.0 * 4.0).abs() < 1e-12);
        assert!((f.sup_norm() - 24.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pair_table_signs() {
        let t = PairTable::new(4);
        assert_eq!(t.list.len(), 6);
        assert_eq!(t.comp(0, 1), (0, 1.0));
        assert_eq!(t.comp(1, 0), (0, -1.0));
        assert_eq!(t.comp(2, 3), (5, 1.0));
        assert_eq!(t.comp(3, 2), (5, -1.0));
    }

    #[test]
    fn derivative_table_matches_hand_expansion() {
        // n = 3, k = 1: (dw)_{ij} = d_i w_j - d_j w_i
        let t = DerivativeTable::new(3, 1);
        assert_eq!(t.rows.len(), 3);
        // component {0,1}: +d_0 w_1 - d_1 w_0
        assert_eq!(t.rows[0], vec![(0, 1.0, 1), (1, -1.0, 0)]);
        // k = 2 over n = 3: (dw)_{012} = d_0 w_{12} - d_1 w_{02} + d_2 w_{01}
        let t2 = DerivativeTable::new(3, 2);
        assert_eq!(t2.rows[0], vec![(0, 1.0, 2), (1, -1.0, 1), (2, 1.0, 0)]);
    }
}
