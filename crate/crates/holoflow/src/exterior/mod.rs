//! Exterior algebra over R^n with the Euclidean metric and orthonormal
//! coordinate frame e_0 .. e_{n-1}.
//!
//! A k-form is stored as its coefficients on the lexicographically ordered
//! basis { e^I : I = (i_1 < ... < i_k) }, so a 2-form on R^7 has C(7,2) = 21
//! entries. The Hodge star uses the orientation e^{0...n-1} > 0, giving
//! `star(star(w)) = (-1)^{k(n-k)} w`. Inner products are sums over the sorted
//! basis, i.e. `<w, w> = (1/k!) w_{i1..ik} w_{i1..ik}` with full index sums.

pub mod eigen;

pub use eigen::{eigen_split, lpsi_matrix, EigenSplit};

/// Binomial coefficient, small arguments only.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

/// Lexicographically ordered strictly increasing k-index sets on {0..n-1}.
pub fn basis(n: usize, k: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut idx: Vec<u8> = (0..k as u8).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < (n - k + i) as u8 {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Rank of a sorted index set in the lexicographic basis order.
pub fn rank(n: usize, idx: &[u8]) -> usize {
    let k = idx.len();
    let mut r = 0usize;
    let mut prev: i32 = -1;
    for (pos, &i) in idx.iter().enumerate() {
        for j in (prev + 1) as u8..i {
            r += binomial(n - 1 - j as usize, k - 1 - pos);
        }
        prev = i as i32;
    }
    r
}

/// Merge two disjoint sorted index sets; returns (sorted union, sign) where
/// sign is the parity of the shuffle, or None if they intersect.
pub fn merge_signed(a: &[u8], b: &[u8]) -> Option<(Vec<u8>, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut inversions = 0usize;
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            return None;
        }
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            // b[j] jumps over the remaining elements of a
            inversions += a.len() - i;
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
    Some((out, sign))
}

/// Real k-form with dense coefficients on the sorted basis.
#[derive(Clone, Debug, PartialEq)]
pub struct KForm {
    pub n: usize,
    pub k: usize,
    pub c: Vec<f64>,
}

impl KForm {
    pub fn zero(n: usize, k: usize) -> Self {
        KForm {
            n,
            k,
            c: vec![0.0; binomial(n, k)],
        }
    }

    pub fn scalar(n: usize, v: f64) -> Self {
        KForm { n, k: 0, c: vec![v] }
    }

    /// e^{i_1...i_k} for a strictly increasing index set.
    pub fn basis_element(n: usize, idx: &[u8]) -> Self {
        let mut w = KForm::zero(n, idx.len());
        debug_assert!(idx.windows(2).all(|p| p[0] < p[1]), "indices must increase");
        w.c[rank(n, idx)] = 1.0;
        w
    }

    /// Coefficient on an arbitrary (possibly unsorted) index tuple, with sign.
    pub fn component(&self, idx: &[u8]) -> f64 {
        debug_assert_eq!(idx.len(), self.k);
        let mut sorted: Vec<u8> = idx.to_vec();
        let mut sign = 1.0;
        // insertion sort, tracking parity; equal indices kill the term
        for i in 1..sorted.len() {
            let mut j = i;
            while j > 0 && sorted[j - 1] >= sorted[j] {
                if sorted[j - 1] == sorted[j] {
                    return 0.0;
                }
                sorted.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        sign * self.c[rank(self.n, &sorted)]
    }

    pub fn add(&self, other: &KForm) -> KForm {
        assert_eq!((self.n, self.k), (other.n, other.k));
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect();
        KForm { n: self.n, k: self.k, c }
    }

    pub fn sub(&self, other: &KForm) -> KForm {
        assert_eq!((self.n, self.k), (other.n, other.k));
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect();
        KForm { n: self.n, k: self.k, c }
    }

    pub fn scale(&self, s: f64) -> KForm {
        KForm {
            n: self.n,
            k: self.k,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    /// Sorted-basis inner product.
    pub fn inner(&self, other: &KForm) -> f64 {
        assert_eq!((self.n, self.k), (other.n, other.k));
        self.c.iter().zip(&other.c).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn wedge(&self, other: &KForm) -> KForm {
        assert_eq!(self.n, other.n, "wedge needs a common ambient dimension");
        let (n, k, l) = (self.n, self.k, other.k);
        assert!(k + l <= n, "degree overflow in wedge");
        let ba = basis(n, k);
        let bb = basis(n, l);
        let mut out = KForm::zero(n, k + l);
        for (ia, idx_a) in ba.iter().enumerate() {
            let ca = self.c[ia];
            if ca == 0.0 {
                continue;
            }
            for (ib, idx_b) in bb.iter().enumerate() {
                let cb = other.c[ib];
                if cb == 0.0 {
                    continue;
                }
                if let Some((merged, sign)) = merge_signed(idx_a, idx_b) {
                    out.c[rank(n, &merged)] += sign * ca * cb;
                }
            }
        }
        out
    }

    /// Hodge star for the orientation e^{0..n-1}.
    pub fn star(&self) -> KForm {
        let (n, k) = (self.n, self.k);
        let bk = basis(n, k);
        let mut out = KForm::zero(n, n - k);
        for (i, idx) in bk.iter().enumerate() {
            let v = self.c[i];
            if v == 0.0 {
                continue;
            }
            let mut comp: Vec<u8> = Vec::with_capacity(n - k);
            let mut pos = 0usize;
            for j in 0..n as u8 {
                if pos < k && idx[pos] == j {
                    pos += 1;
                } else {
                    comp.push(j);
                }
            }
            let (_, sign) = merge_signed(idx, &comp).expect("complement is disjoint");
            out.c[rank(n, &comp)] += sign * v;
        }
        out
    }

    /// Interior product v -| w for a vector given in the coordinate frame.
    pub fn interior(&self, v: &[f64]) -> KForm {
        assert_eq!(v.len(), self.n);
        assert!(self.k >= 1, "interior product needs degree >= 1");
        let (n, k) = (self.n, self.k);
        let bk = basis(n, k);
        let mut out = KForm::zero(n, k - 1);
        for (i, idx) in bk.iter().enumerate() {
            let c = self.c[i];
            if c == 0.0 {
                continue;
            }
            for (pos, &ax) in idx.iter().enumerate() {
                let va = v[ax as usize];
                if va == 0.0 {
                    continue;
                }
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                let mut rest: Vec<u8> = Vec::with_capacity(k - 1);
                rest.extend_from_slice(&idx[..pos]);
                rest.extend_from_slice(&idx[pos + 1..]);
                out.c[rank(n, &rest)] += sign * va * c;
            }
        }
        out
    }

    /// Evaluate on a tuple of `k` vectors: sum_I w_I det(v_a . e_{i_b}).
    pub fn eval(&self, frame: &[Vec<f64>]) -> f64 {
        if self.k == 0 {
            return self.c[0];
        }
        assert_eq!(frame.len(), self.k, "frame size must match degree");
        let bk = basis(self.n, self.k);
        let k = self.k;
        let mut m = vec![0.0; k * k];
        let mut total = 0.0;
        for (i, idx) in bk.iter().enumerate() {
            let c = self.c[i];
            if c == 0.0 {
                continue;
            }
            for (a, va) in frame.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    m[a * k + b] = va[ib as usize];
                }
            }
            total += c * det_small(&mut m, k);
        }
        total
    }
}

/// In-place LU determinant for tiny matrices (k <= 4 in practice).
fn det_small(m: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if m[r * k + col].abs() > m[piv * k + col].abs() {
                piv = r;
            }
        }
        if m[piv * k + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                m.swap(piv * k + c, col * k + c);
            }
            det = -det;
        }
        let d = m[col * k + col];
        det *= d;
        for r in col + 1..k {
            let f = m[r * k + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                m[r * k + c] -= f * m[col * k + c];
            }
        }
    }
    det
}
