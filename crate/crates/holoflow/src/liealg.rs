//! so(E)-valued exterior algebra.
//!
//! Lie algebra elements are coefficient vectors on an orthonormal basis T_a
//! with [T_a, T_b] = c_{ab}^c T_c and <a, b> = sum_c a_c b_c. The default is
//! su(2) ~ so(3): c_{ab}^c = epsilon_{abc}.
//!
//! An ad-valued k-form stores one Lie vector per sorted basis k-index. Norms
//! follow the sorted-basis convention |w|^2 = sum_I <w_I, w_I>, which equals
//! (1/k!) <w_{i1..ik}, w_{i1..ik}> with full index sums; for curvature this
//! is |F|^2 = (1/2) <F_ij, F_ij>.
//!
//! Two quadratic operations on 2-forms drive the curvature evolution:
//!   [[w, e]]_ij = w_ik e_kj - w_jk e_ki          (real coefficients)
//!   [[g, w]]_ij = [g_ik, w_kj] - [g_jk, w_ki]    (ad-valued, symmetric in g, w)
//! and a 2-form acts on a 1-form by [g . a]_j = [g_jk, a_k].

use crate::exterior::{basis, binomial, merge_signed, rank, KForm};

/// Structure constants in sparse form.
#[derive(Clone, Debug)]
pub struct LieAlgebra {
    pub dim: usize,
    /// (a, b, c, coef): [T_a, T_b] += coef T_c
    pub terms: Vec<(u8, u8, u8, f64)>,
}

impl LieAlgebra {
    pub fn su2() -> Self {
        LieAlgebra {
            dim: 3,
            terms: vec![
                (0, 1, 2, 1.0),
                (1, 0, 2, -1.0),
                (1, 2, 0, 1.0),
                (2, 1, 0, -1.0),
                (2, 0, 1, 1.0),
                (0, 2, 1, -1.0),
            ],
        }
    }

    pub fn bracket_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.bracket_acc(1.0, x, y, out);
    }

    /// out += s [x, y]
    #[inline]
    pub fn bracket_acc(&self, s: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        for &(a, b, c, coef) in &self.terms {
            out[c as usize] += s * coef * x[a as usize] * y[b as usize];
        }
    }

    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.bracket_acc(1.0, x, y, &mut out);
        out
    }

    /// Max residual of antisymmetry, the Jacobi identity, and ad-invariance
    /// of the inner product over all basis triples.
    pub fn structure_residual(&self) -> f64 {
        let d = self.dim;
        let mut c = vec![0.0; d * d * d];
        for &(a, b, cc, coef) in &self.terms {
            c[(a as usize * d + b as usize) * d + cc as usize] += coef;
        }
        let at = |a: usize, b: usize, e: usize| c[(a * d + b) * d + e];
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for e in 0..d {
                    worst = worst.max((at(a, b, e) + at(b, a, e)).abs());
                    // ad-invariance: c_{ab}^e antisymmetric under b <-> e
                    worst = worst.max((at(a, b, e) + at(a, e, b)).abs());
                }
            }
        }
        // Jacobi: sum_t c_{ab}^t c_{te}^f + c_{be}^t c_{ta}^f + c_{ea}^t c_{tb}^f = 0
        for a in 0..d {
            for b in 0..d {
                for e in 0..d {
                    for f in 0..d {
                        let mut acc = 0.0;
                        for t in 0..d {
                            acc += at(a, b, t) * at(t, e, f)
                                + at(b, e, t) * at(t, a, f)
                                + at(e, a, t) * at(t, b, f);
                        }
                        worst = worst.max(acc.abs());
                    }
                }
            }
        }
        worst
    }
}

/// k-form with Lie-vector coefficients, layout [basis index][lie index].
#[derive(Clone, Debug, PartialEq)]
pub struct AdValuedForm {
    pub n: usize,
    pub k: usize,
    pub lie: usize,
    pub c: Vec<f64>,
}

impl AdValuedForm {
    pub fn zero(n: usize, k: usize, lie: usize) -> Self {
        AdValuedForm {
            n,
            k,
            lie,
            c: vec![0.0; binomial(n, k) * lie],
        }
    }

    pub fn from_real(w: &KForm, lie_vec: &[f64]) -> Self {
        let lie = lie_vec.len();
        let mut out = AdValuedForm::zero(w.n, w.k, lie);
        for (i, &v) in w.c.iter().enumerate() {
            for (a, &t) in lie_vec.iter().enumerate() {
                out.c[i * lie + a] = v * t;
            }
        }
        out
    }

    #[inline]
    pub fn value(&self, basis_idx: usize) -> &[f64] {
        &self.c[basis_idx * self.lie..(basis_idx + 1) * self.lie]
    }

    #[inline]
    pub fn value_mut(&mut self, basis_idx: usize) -> &mut [f64] {
        &mut self.c[basis_idx * self.lie..(basis_idx + 1) * self.lie]
    }

    /// out += scale * (this form's coefficient on the possibly unsorted tuple)
    pub fn component_acc(&self, idx: &[u8], scale: f64, out: &mut [f64]) {
        let mut sorted = idx.to_vec();
        let mut sign = 1.0;
        for i in 1..sorted.len() {
            let mut j = i;
            while j > 0 && sorted[j - 1] >= sorted[j] {
                if sorted[j - 1] == sorted[j] {
                    return;
                }
                sorted.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        let v = self.value(rank(self.n, &sorted));
        for (o, x) in out.iter_mut().zip(v) {
            *o += scale * sign * x;
        }
    }

    /// Add `scale * lie_vec` on the sorted basis tuple `idx`.
    pub fn add_term(&mut self, idx: &[u8], lie_vec: &[f64], scale: f64) {
        let r = rank(self.n, idx);
        let lie = self.lie;
        for (a, &t) in lie_vec.iter().enumerate() {
            self.c[r * lie + a] += scale * t;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.n, self.k, self.lie), (other.n, other.k, other.lie));
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect();
        AdValuedForm { c, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.n, self.k, self.lie), (other.n, other.k, other.lie));
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect();
        AdValuedForm { c, ..*self }
    }

    pub fn scale(&self, s: f64) -> Self {
        AdValuedForm {
            c: self.c.iter().map(|a| a * s).collect(),
            ..*self
        }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.k, self.lie), (other.n, other.k, other.lie));
        self.c.iter().zip(&other.c).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.c.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Extract the real k-form multiplying T_a.
    pub fn lie_component(&self, a: usize) -> KForm {
        let mut w = KForm::zero(self.n, self.k);
        for i in 0..w.c.len() {
            w.c[i] = self.c[i * self.lie + a];
        }
        w
    }

    /// Hodge star applied per Lie component.
    pub fn star(&self) -> Self {
        let (n, k, lie) = (self.n, self.k, self.lie);
        let bk = basis(n, k);
        let mut out = AdValuedForm::zero(n, n - k, lie);
        for (i, idx) in bk.iter().enumerate() {
            let mut comp: Vec<u8> = Vec::with_capacity(n - k);
            let mut pos = 0usize;
            for j in 0..n as u8 {
                if pos < k && idx[pos] == j {
                    pos += 1;
                } else {
                    comp.push(j);
                }
            }
            let (_, sign) = merge_signed(idx, &comp).expect("complement disjoint");
            let r = rank(n, &comp);
            for a in 0..lie {
                out.c[r * lie + a] += sign * self.c[i * lie + a];
            }
        }
        out
    }

    /// Wedge with a real form (acting on each Lie component).
    pub fn wedge_real(&self, w: &KForm) -> Self {
        assert_eq!(self.n, w.n);
        assert!(self.k + w.k <= self.n, "degree overflow in wedge");
        let ba = basis(self.n, self.k);
        let bb = basis(self.n, w.k);
        let lie = self.lie;
        let mut out = AdValuedForm::zero(self.n, self.k + w.k, lie);
        for (ia, idx_a) in ba.iter().enumerate() {
            let va = self.value(ia);
            if va.iter().all(|&x| x == 0.0) {
                continue;
            }
            for (ib, idx_b) in bb.iter().enumerate() {
                let cb = w.c[ib];
                if cb == 0.0 {
                    continue;
                }
                if let Some((merged, sign)) = merge_signed(idx_a, idx_b) {
                    let r = rank(self.n, &merged);
                    for a in 0..lie {
                        out.c[r * lie + a] += sign * cb * va[a];
                    }
                }
            }
        }
        out
    }

    /// Interior product with a coordinate-frame vector.
    pub fn interior(&self, v: &[f64]) -> Self {
        assert!(self.k >= 1);
        let (n, k, lie) = (self.n, self.k, self.lie);
        let bk = basis(n, k);
        let mut out = AdValuedForm::zero(n, k - 1, lie);
        for (i, idx) in bk.iter().enumerate() {
            let val = &self.c[i * lie..(i + 1) * lie];
            for (pos, &ax) in idx.iter().enumerate() {
                let va = v[ax as usize];
                if va == 0.0 {
                    continue;
                }
                let sign = if pos % 2 == 0 { va } else { -va };
                let mut rest: Vec<u8> = Vec::with_capacity(k - 1);
                rest.extend_from_slice(&idx[..pos]);
                rest.extend_from_slice(&idx[pos + 1..]);
                let r = rank(n, &rest);
                for a in 0..lie {
                    out.c[r * lie + a] += sign * val[a];
                }
            }
        }
        out
    }
}

/// [w ^ e] with the Lie bracket pairing coefficients.
pub fn wedge_bracket(alg: &LieAlgebra, w: &AdValuedForm, e: &AdValuedForm) -> AdValuedForm {
    assert_eq!(w.n, e.n);
    assert_eq!(w.lie, e.lie);
    assert!(w.k + e.k <= w.n, "degree overflow in wedge");
    let ba = basis(w.n, w.k);
    let bb = basis(w.n, e.k);
    let lie = w.lie;
    let mut out = AdValuedForm::zero(w.n, w.k + e.k, lie);
    for (ia, idx_a) in ba.iter().enumerate() {
        let va = w.value(ia);
        if va.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (ib, idx_b) in bb.iter().enumerate() {
            let vb = e.value(ib);
            if let Some((merged, sign)) = merge_signed(idx_a, idx_b) {
                let r = rank(w.n, &merged);
                alg.bracket_acc(sign, va, vb, &mut out.c[r * lie..(r + 1) * lie]);
            }
        }
    }
    out
}

/// <w ^ e> with the invariant inner product pairing coefficients; real result.
pub fn wedge_trace(w: &AdValuedForm, e: &AdValuedForm) -> KForm {
    assert_eq!(w.n, e.n);
    assert_eq!(w.lie, e.lie);
    assert!(w.k + e.k <= w.n, "degree overflow in wedge");
    let ba = basis(w.n, w.k);
    let bb = basis(w.n, e.k);
    let mut out = KForm::zero(w.n, w.k + e.k);
    for (ia, idx_a) in ba.iter().enumerate() {
        let va = w.value(ia);
        if va.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (ib, idx_b) in bb.iter().enumerate() {
            let vb = e.value(ib);
            if let Some((merged, sign)) = merge_signed(idx_a, idx_b) {
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                out.c[rank(w.n, &merged)] += sign * dot;
            }
        }
    }
    out
}

/// Signed matrix-entry view of a real 2-form: w_ij with w_ji = -w_ij.
#[inline]
pub fn entry2(w: &KForm, i: usize, j: usize) -> f64 {
    debug_assert_eq!(w.k, 2);
    if i == j {
        return 0.0;
    }
    if i < j {
        w.c[rank(w.n, &[i as u8, j as u8])]
    } else {
        -w.c[rank(w.n, &[j as u8, i as u8])]
    }
}

#[inline]
fn entry2_ad<'a>(w: &'a AdValuedForm, i: usize, j: usize) -> Option<(f64, &'a [f64])> {
    if i == j {
        return None;
    }
    let (s, r) = if i < j {
        (1.0, rank(w.n, &[i as u8, j as u8]))
    } else {
        (-1.0, rank(w.n, &[j as u8, i as u8]))
    };
    Some((s, w.value(r)))
}

/// [[w, e]]_ij = w_ik e_kj - w_jk e_ki on real 2-forms; equals the commutator
/// of the associated antisymmetric matrices.
pub fn double_bracket_real(w: &KForm, e: &KForm) -> KForm {
    assert_eq!(w.k, 2);
    assert_eq!(e.k, 2);
    assert_eq!(w.n, e.n);
    let n = w.n;
    let b2 = basis(n, 2);
    let mut out = KForm::zero(n, 2);
    for (r, idx) in b2.iter().enumerate() {
        let (i, j) = (idx[0] as usize, idx[1] as usize);
        let mut acc = 0.0;
        for t in 0..n {
            acc += entry2(w, i, t) * entry2(e, t, j) - entry2(w, j, t) * entry2(e, t, i);
        }
        out.c[r] = acc;
    }
    out
}

/// [[g, w]]_ij = [g_ik, w_kj] - [g_jk, w_ki] on ad-valued 2-forms; symmetric
/// under swapping the arguments.
pub fn double_bracket(alg: &LieAlgebra, g: &AdValuedForm, w: &AdValuedForm) -> AdValuedForm {
    assert_eq!(g.k, 2);
    assert_eq!(w.k, 2);
    assert_eq!(g.n, w.n);
    assert_eq!(g.lie, w.lie);
    let n = g.n;
    let lie = g.lie;
    let b2 = basis(n, 2);
    let mut out = AdValuedForm::zero(n, 2, lie);
    for (r, idx) in b2.iter().enumerate() {
        let (i, j) = (idx[0] as usize, idx[1] as usize);
        let acc = &mut out.c[r * lie..(r + 1) * lie];
        for t in 0..n {
            if let (Some((sg, vg)), Some((sw, vw))) = (entry2_ad(g, i, t), entry2_ad(w, t, j)) {
                alg.bracket_acc(sg * sw, vg, vw, acc);
            }
            if let (Some((sg, vg)), Some((sw, vw))) = (entry2_ad(g, j, t), entry2_ad(w, t, i)) {
                alg.bracket_acc(-sg * sw, vg, vw, acc);
            }
        }
    }
    out
}

/// [g . a]_j = [g_jk, a_k]: an ad-valued 2-form acting on an ad-valued 1-form.
pub fn dot_action(alg: &LieAlgebra, g: &AdValuedForm, a: &AdValuedForm) -> AdValuedForm {
    assert_eq!(g.k, 2);
    assert_eq!(a.k, 1);
    assert_eq!(g.n, a.n);
    assert_eq!(g.lie, a.lie);
    let n = g.n;
    let lie = g.lie;
    let mut out = AdValuedForm::zero(n, 1, lie);
    for j in 0..n {
        let acc = &mut out.c[j * lie..(j + 1) * lie];
        for k in 0..n {
            if let Some((s, vg)) = entry2_ad(g, j, k) {
                alg.bracket_acc(s, vg, a.value(k), acc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryContext;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: a 2-form as a full n x n antisymmetric matrix with Lie
    /// vector entries; bracket products computed entrywise and recompressed.
    struct DenseTwoForm {
        n: usize,
        lie: usize,
        m: Vec<f64>, // [i][j][lie]
    }

    impl DenseTwoForm {
        fn from(w: &AdValuedForm) -> Self {
            assert_eq!(w.k, 2);
            let (n, lie) = (w.n, w.lie);
            let mut m = vec![0.0; n * n * lie];
            for (r, idx) in basis(n, 2).iter().enumerate() {
                let (i, j) = (idx[0] as usize, idx[1] as usize);
                for a in 0..lie {
                    m[(i * n + j) * lie + a] = w.c[r * lie + a];
                    m[(j * n + i) * lie + a] = -w.c[r * lie + a];
                }
            }
            DenseTwoForm { n, lie, m }
        }

        fn at(&self, i: usize, j: usize) -> &[f64] {
            &self.m[(i * self.n + j) * self.lie..(i * self.n + j + 1) * self.lie]
        }

        fn compress(&self) -> AdValuedForm {
            let mut out = AdValuedForm::zero(self.n, 2, self.lie);
            for (r, idx) in basis(self.n, 2).iter().enumerate() {
                let (i, j) = (idx[0] as usize, idx[1] as usize);
                out.value_mut(r).copy_from_slice(self.at(i, j));
            }
            out
        }
    }

    fn dense_double_bracket(alg: &LieAlgebra, g: &AdValuedForm, w: &AdValuedForm) -> AdValuedForm {
        let dg = DenseTwoForm::from(g);
        let dw = DenseTwoForm::from(w);
        let (n, lie) = (dg.n, dg.lie);
        let mut out = DenseTwoForm {
            n,
            lie,
            m: vec![0.0; n * n * lie],
        };
        for i in 0..n {
            for j in 0..n {
                let mut acc = vec![0.0; lie];
                for k in 0..n {
                    alg.bracket_acc(1.0, dg.at(i, k), dw.at(k, j), &mut acc);
                    alg.bracket_acc(-1.0, dg.at(j, k), dw.at(k, i), &mut acc);
                }
                out.m[(i * n + j) * lie..(i * n + j + 1) * lie].copy_from_slice(&acc);
            }
        }
        out.compress()
    }

    fn dense_dot_action(alg: &LieAlgebra, g: &AdValuedForm, a: &AdValuedForm) -> AdValuedForm {
        let dg = DenseTwoForm::from(g);
        let (n, lie) = (dg.n, dg.lie);
        let mut out = AdValuedForm::zero(n, 1, lie);
        for j in 0..n {
            let mut acc = vec![0.0; lie];
            for k in 0..n {
                alg.bracket_acc(1.0, dg.at(j, k), a.value(k), &mut acc);
            }
            out.value_mut(j).copy_from_slice(&acc);
        }
        out
    }

    fn random_ad(rng: &mut ChaCha8Rng, n: usize, k: usize, lie: usize) -> AdValuedForm {
        let mut w = AdValuedForm::zero(n, k, lie);
        for c in w.c.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        w
    }

    #[test]
    fn su2_structure_is_a_lie_algebra() {
        assert!(LieAlgebra::su2().structure_residual() < 1e-12);
    }

    #[test]
    fn frozen_bracket_examples() {
        let alg = LieAlgebra::su2();
        // [[e^{01}, e^{12}]] = e^{02} for real forms
        let a = KForm::basis_element(4, &[0, 1]);
        let b = KForm::basis_element(4, &[1, 2]);
        let r = double_bracket_real(&a, &b);
        assert!(r.sub(&KForm::basis_element(4, &[0, 2])).norm() < 1e-15);

        // (e^{01} (x) T_0) . (e^1 (x) T_1) = e^0 (x) T_2
        let g = AdValuedForm::from_real(&KForm::basis_element(4, &[0, 1]), &[1.0, 0.0, 0.0]);
        let al = AdValuedForm::from_real(&KForm::basis_element(4, &[1]), &[0.0, 1.0, 0.0]);
        let d = dot_action(&alg, &g, &al);
        let want = AdValuedForm::from_real(&KForm::basis_element(4, &[0]), &[0.0, 0.0, 1.0]);
        assert!(d.sub(&want).norm() < 1e-15);
        // dense oracle agrees
        assert!(dense_dot_action(&alg, &g, &al).sub(&want).norm() < 1e-15);
    }

    #[test]
    fn double_bracket_matches_dense_oracle_and_is_symmetric() {
        let alg = LieAlgebra::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let n = rng.gen_range(4..=8usize);
            let g = random_ad(&mut rng, n, 2, 3);
            let w = random_ad(&mut rng, n, 2, 3);
            let fast = double_bracket(&alg, &g, &w);
            let slow = dense_double_bracket(&alg, &g, &w);
            assert!(fast.sub(&slow).norm() < 1e-12);
            let swapped = double_bracket(&alg, &w, &g);
            assert!(fast.sub(&swapped).norm() < 1e-12, "swap symmetry violated");
        }
    }

    #[test]
    fn dot_action_matches_dense_oracle() {
        let alg = LieAlgebra::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let n = rng.gen_range(4..=8usize);
            let g = random_ad(&mut rng, n, 2, 3);
            let a = random_ad(&mut rng, n, 1, 3);
            assert!(dot_action(&alg, &g, &a)
                .sub(&dense_dot_action(&alg, &g, &a))
                .norm()
                < 1e-12);
        }
    }

    #[test]
    fn real_double_bracket_is_matrix_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.gen_range(3..=8usize);
            let mut a = KForm::zero(n, 2);
            let mut b = KForm::zero(n, 2);
            for c in a.c.iter_mut().chain(b.c.iter_mut()) {
                *c = rng.gen_range(-1.0..1.0);
            }
            let db = double_bracket_real(&a, &b);
            for (r, idx) in basis(n, 2).iter().enumerate() {
                let (i, j) = (idx[0] as usize, idx[1] as usize);
                let mut acc = 0.0;
                for t in 0..n {
                    acc += entry2(&a, i, t) * entry2(&b, t, j)
                        - entry2(&b, i, t) * entry2(&a, t, j);
                }
                assert!((db.c[r] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_projection_is_pythagorean() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for name in ["four", "kahler3", "quatkahler2", "g2", "spin7"] {
            let ctx = GeometryContext::from_name(name).unwrap();
            let n = ctx.n;
            for _ in 0..20 {
                let f = random_ad(&mut rng, n, 2, 3);
                let mut total = 0.0;
                let mut parts = AdValuedForm::zero(n, 2, 3);
                for alpha in 0..ctx.split.lambdas.len() {
                    let fa = project_ad(&ctx, alpha, &f);
                    total += fa.norm_sq();
                    parts = parts.add(&fa);
                }
                assert!((total - f.norm_sq()).abs() < 1e-12 * (1.0 + f.norm_sq()));
                assert!(parts.sub(&f).norm() < 1e-12);
            }
        }
    }

    fn project_ad(ctx: &GeometryContext, alpha: usize, f: &AdValuedForm) -> AdValuedForm {
        let d = ctx.split.dim;
        let mut out = f.clone();
        let mut col = vec![0.0; d];
        let mut res = vec![0.0; d];
        for a in 0..f.lie {
            for i in 0..d {
                col[i] = f.c[i * f.lie + a];
            }
            ctx.split.project(alpha, &col, &mut res);
            for i in 0..d {
                out.c[i * f.lie + a] = res[i];
            }
        }
        out
    }

    #[test]
    fn trace_wedge_with_calibration_sees_the_spectrum() {
        // <F ^ F> ^ Psi = sum_alpha lambda_alpha |F^alpha|^2 dV pointwise
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for name in ["four", "kahler2", "kahler3", "quatkahler2", "g2", "spin7"] {
            let ctx = GeometryContext::from_name(name).unwrap();
            let n = ctx.n;
            for _ in 0..30 {
                let f = random_ad(&mut rng, n, 2, 3);
                let ff_psi = wedge_trace(&f, &f).wedge(&ctx.psi);
                let mut want = 0.0;
                for (alpha, &lambda) in ctx.split.lambdas.iter().enumerate() {
                    want += lambda * project_ad(&ctx, alpha, &f).norm_sq();
                }
                assert!(
                    (ff_psi.c[0] - want).abs() < 1e-10 * (1.0 + want.abs()),
                    "{name}: <F^F>^Psi = {} vs spectral sum {}",
                    ff_psi.c[0],
                    want
                );
            }
        }
    }

    #[test]
    fn wedge_bracket_symmetry_on_one_forms() {
        // [a ^ b] = [b ^ a] for ad-valued 1-forms (sign flips cancel)
        let alg = LieAlgebra::su2();
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..50 {
            let n = rng.gen_range(3..=8usize);
            let a = random_ad(&mut rng, n, 1, 3);
            let b = random_ad(&mut rng, n, 1, 3);
            let ab = wedge_bracket(&alg, &a, &b);
            let ba = wedge_bracket(&alg, &b, &a);
            assert!(ab.sub(&ba).norm() < 1e-12);
        }
    }
}
